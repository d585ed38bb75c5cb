use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io, lstm, transformer, ModelError, ModelSpec, Result, Variant};
use crate::tensor::{Init, RngStream, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
enum InitRule {
    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    Fan(usize),
    /// Fan-in uniform, with the forget-gate block `[h, 2h)` set to 1.
    LstmBias { hidden: usize },
    Ones,
    Zeros,
}

struct ParamDef {
    name: String,
    dims: Vec<usize>,
    init: InitRule,
}

fn definitions(spec: &ModelSpec) -> Vec<ParamDef> {
    let def = |name: &str, dims: Vec<usize>, init| ParamDef { name: name.to_string(), dims, init };
    let mut out = Vec::new();
    match spec.variant {
        Variant::Lstm => {
            let (n_in, h) = (spec.input_dim, spec.hidden_dim);
            out.push(def("lstm.w_x", vec![n_in, 4 * h], InitRule::Fan(h)));
            out.push(def("lstm.w_h", vec![h, 4 * h], InitRule::Fan(h)));
            out.push(def("lstm.bias", vec![4 * h], InitRule::LstmBias { hidden: h }));
            out.push(def("head.weight", vec![h, 1], InitRule::Fan(h)));
            out.push(def("head.bias", vec![1], InitRule::Fan(h)));
        }
        Variant::TransformerVanilla | Variant::TransformerModified => {
            let (d, ff) = (spec.d_model, spec.d_ff);
            out.push(def("embed.weight", vec![spec.input_dim, d], InitRule::Fan(spec.input_dim)));
            out.push(def("embed.bias", vec![d], InitRule::Fan(spec.input_dim)));
            for l in 0..spec.n_layers {
                let p = |s: &str| format!("layers.{l}.{s}");
                out.push(def(&p("ln1.gain"), vec![d], InitRule::Ones));
                out.push(def(&p("ln1.bias"), vec![d], InitRule::Zeros));
                for proj in ["q", "k", "v", "o"] {
                    out.push(def(&p(&format!("attn.w{proj}")), vec![d, d], InitRule::Fan(d)));
                    out.push(def(&p(&format!("attn.b{proj}")), vec![d], InitRule::Fan(d)));
                }
                out.push(def(&p("ln2.gain"), vec![d], InitRule::Ones));
                out.push(def(&p("ln2.bias"), vec![d], InitRule::Zeros));
                out.push(def(&p("ffn.w1"), vec![d, ff], InitRule::Fan(d)));
                out.push(def(&p("ffn.b1"), vec![ff], InitRule::Fan(d)));
                out.push(def(&p("ffn.w2"), vec![ff, d], InitRule::Fan(ff)));
                out.push(def(&p("ffn.b2"), vec![d], InitRule::Fan(ff)));
            }
            out.push(def("final_ln.gain", vec![d], InitRule::Ones));
            out.push(def("final_ln.bias", vec![d], InitRule::Zeros));
            out.push(def("head.weight", vec![d, 1], InitRule::Fan(d)));
            out.push(def("head.bias", vec![1], InitRule::Fan(d)));
        }
    }
    out
}

/// Names and shapes of every parameter tensor, in storage order.
pub fn param_listing(spec: &ModelSpec) -> Vec<(String, Vec<usize>)> {
    definitions(spec).into_iter().map(|d| (d.name, d.dims)).collect()
}

/// Closed-form parameter count.
pub fn param_count(spec: &ModelSpec) -> usize {
    match spec.variant {
        Variant::Lstm => {
            let (n_in, h) = (spec.input_dim, spec.hidden_dim);
            4 * h * (n_in + h + 1) + h + 1
        }
        Variant::TransformerVanilla | Variant::TransformerModified => {
            let (d, ff) = (spec.d_model, spec.d_ff);
            let per_layer = 4 * (d * d + d) + 2 * 2 * d + (2 * d * ff + ff + d);
            spec.input_dim * d + d + spec.n_layers * per_layer + 2 * d + d + 1
        }
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    params: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ModelWeights {
    pub fn from_named(params: Vec<(String, Tensor)>) -> ModelWeights {
        let index = params.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        ModelWeights { params, index }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].1)
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    pub fn into_named(self) -> Vec<(String, Tensor)> {
        self.params
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }
}

/// Parameter leaves of one model bound onto a tape, aligned with the
/// model's weight order.
pub struct BoundParams<'a> {
    vars: Vec<Var>,
    weights: &'a ModelWeights,
}

impl BoundParams<'_> {
    pub fn get(&self, name: &str) -> Result<Var> {
        Ok(self.vars[self.weights.position(name)?])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Serialize, Deserialize)]
struct WeightsMeta {
    kind: String,
    spec: ModelSpec,
}

/// A model spec together with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    weights: ModelWeights,
}

impl Model {
    /// Checks that `weights` has exactly the tensors `spec` calls for and
    /// gives each one a gradient buffer.
    pub fn new(spec: ModelSpec, mut weights: ModelWeights) -> Result<Model> {
        spec.validate()?;
        let listing = param_listing(&spec);
        if listing.len() != weights.len() {
            return Err(ModelError::Format(format!(
                "expected {} parameter tensors, found {}",
                listing.len(),
                weights.len()
            )));
        }
        for ((name, dims), (got_name, t)) in listing.iter().zip(weights.iter()) {
            if name != got_name || dims.as_slice() != t.dims() {
                return Err(ModelError::Format(format!(
                    "parameter mismatch: expected {name} {dims:?}, found {got_name} {:?}",
                    t.dims()
                )));
            }
        }
        for (_, t) in weights.iter_mut() {
            t.set_requires_grad(true);
        }
        Ok(Model { spec, weights })
    }

    /// Fresh weights: fan-in uniform everywhere, layer-norm gains 1 and
    /// biases 0, LSTM forget-gate bias 1.
    pub fn init(spec: ModelSpec, rng: &mut RngStream) -> Result<Model> {
        spec.validate()?;
        let mut params = Vec::new();
        for def in definitions(&spec) {
            let mut t = match def.init {
                InitRule::Fan(fan_in) | InitRule::LstmBias { hidden: fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Tensor::create(&def.dims, Init::Uniform { low: -bound, high: bound, rng })?
                }
                InitRule::Ones => Tensor::create(&def.dims, Init::Constant(1.0))?,
                InitRule::Zeros => Tensor::create(&def.dims, Init::Zeros)?,
            };
            if let InitRule::LstmBias { hidden } = def.init {
                t.data_mut()[hidden..2 * hidden].fill(1.0);
            }
            t.set_requires_grad(true);
            params.push((def.name, t));
        }
        Ok(Model { spec, weights: ModelWeights::from_named(params) })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ModelWeights {
        &mut self.weights
    }

    pub fn into_parts(self) -> (ModelSpec, ModelWeights) {
        (self.spec, self.weights)
    }

    /// Binds every parameter as a gradient-tracking leaf.
    pub fn bind<'a>(&'a self, tape: &Tape) -> BoundParams<'a> {
        BoundParams { vars: self.weights.iter().map(|(_, t)| tape.param(t)).collect(), weights: &self.weights }
    }

    /// Binds every parameter as a constant (inference).
    pub fn bind_frozen<'a>(&'a self, tape: &Tape) -> BoundParams<'a> {
        BoundParams { vars: self.weights.iter().map(|(_, t)| tape.constant(t)).collect(), weights: &self.weights }
    }

    /// Wraps vars already on a tape, one per weight tensor in weight order.
    pub fn bind_vars(&self, vars: Vec<Var>) -> Result<BoundParams<'_>> {
        if vars.len() != self.weights.len() {
            return Err(ModelError::Spec(format!("{} vars for {} parameters", vars.len(), self.weights.len())));
        }
        Ok(BoundParams { vars, weights: &self.weights })
    }

    /// Forward pass with already-bound parameters. `dropout` enables
    /// training-mode dropout.
    pub fn forward_bound(
        &self,
        tape: &Tape,
        params: &BoundParams<'_>,
        x: Var,
        dropout: Option<&mut RngStream>,
    ) -> Result<Var> {
        let dims = tape.shape(x).dims().to_vec();
        if dims.len() != 3 || dims[2] != self.spec.input_dim {
            return Err(ModelError::Spec(format!(
                "input must be [batch, seq_len, {}], got {dims:?}",
                self.spec.input_dim
            )));
        }
        match self.spec.variant {
            Variant::Lstm => {
                let p = lstm::LstmParams::bind(params)?;
                lstm::lstm_forward(tape, x, &p, self.spec.dropout, dropout)
            }
            Variant::TransformerVanilla => {
                let p = transformer::TransformerParams::bind(params, &self.spec)?;
                transformer::transformer_vanilla_forward(tape, x, &p, &self.spec, dropout)
            }
            Variant::TransformerModified => {
                let p = transformer::TransformerParams::bind(params, &self.spec)?;
                transformer::transformer_modified_forward(tape, x, &p, &self.spec, dropout)
            }
        }
    }

    /// Training-style forward: binds gradient-tracking parameters.
    pub fn forward<'a>(
        &'a self,
        tape: &Tape,
        x: Var,
        dropout: Option<&mut RngStream>,
    ) -> Result<(Var, BoundParams<'a>)> {
        let params = self.bind(tape);
        let y = self.forward_bound(tape, &params, x, dropout)?;
        Ok((y, params))
    }

    /// Evaluation-mode forward on a detached input.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let params = self.bind_frozen(&tape);
        let xv = tape.constant(x);
        let y = self.forward_bound(&tape, &params, xv, None)?;
        Ok(tape.value(y))
    }

    /// Evaluation-mode prediction at the final position of each window: `[batch]`.
    pub fn predict_last(&self, x: &Tensor) -> Result<Vec<f64>> {
        let y = self.predict(x)?;
        let batch = x.dims()[0];
        let per_row = y.numel() / batch;
        Ok(y.data().chunks(per_row).map(|row| row[per_row - 1]).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let meta = WeightsMeta { kind: "weights".into(), spec: self.spec.clone() };
        let meta = serde_json::to_vec(&meta).map_err(|e| ModelError::Format(e.to_string()))?;
        io::write_archive(w, &meta, self.weights.iter())
    }

    pub fn read_from(r: &mut impl std::io::Read) -> Result<Model> {
        let (meta, tensors) = io::read_archive(r)?;
        let meta: WeightsMeta = serde_json::from_slice(&meta).map_err(|e| ModelError::Format(e.to_string()))?;
        if meta.kind != "weights" {
            return Err(ModelError::Format(format!("expected a weights file, found `{}`", meta.kind)));
        }
        Model::new(meta.spec, ModelWeights::from_named(tensors))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::read_from(&mut BufReader::new(File::open(path)?))
    }
}
