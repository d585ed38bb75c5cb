//! Finite-difference gradient suite over every differentiable op and the
//! three architectures at tiny sizes.

use crate::models::{Model, ModelSpec, Variant};
use crate::tensor::{grad_check, GradCheckReport, Init, Reduction, RngStream, Tape, Tensor, TensorError, Var, DEFAULT_STEP};
use crate::train::basin_weighted_mse;

/// Relative-error tolerance of the suite.
pub const SUITE_TOL: f64 = 1e-4;

pub struct SuiteRow {
    pub name: String,
    pub outcome: Result<GradCheckReport, String>,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.passed)
    }
}

type Check = Box<dyn Fn(&Tape, &[Var]) -> crate::tensor::Result<Var>>;

fn uniform(dims: &[usize], rng: &mut RngStream) -> Tensor {
    Tensor::create(dims, Init::Uniform { low: -1.0, high: 1.0, rng }).expect("valid dims")
}

/// Values in `±[0.2, 1]`, away from the relu kink.
fn off_zero(dims: &[usize], rng: &mut RngStream) -> Tensor {
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| (if rng.bernoulli(0.5) { 1.0 } else { -1.0 }) * rng.uniform(0.2, 1.0)).collect();
    Tensor::from_vec(dims, data).expect("valid dims")
}

/// `sum(y * w)` for a fixed random `w`, so every output element carries
/// a distinct weight.
fn project(tape: &Tape, y: Var, seed: u64) -> crate::tensor::Result<Var> {
    let mut rng = RngStream::new(seed);
    let w = uniform(tape.shape(y).dims(), &mut rng);
    Ok(tape.sum(tape.mul(y, tape.constant(&w))?))
}

fn op_cases() -> Vec<(&'static str, Vec<Tensor>, Check)> {
    let mut r = RngStream::new(20240601);
    let mut cases: Vec<(&'static str, Vec<Tensor>, Check)> = Vec::new();
    cases.push((
        "matmul [5,4]x[4,3]",
        vec![uniform(&[5, 4], &mut r), uniform(&[4, 3], &mut r)],
        Box::new(|t, v| project(t, t.matmul(v[0], v[1])?, 1)),
    ));
    cases.push((
        "matmul [2,3,4]x[4,2]",
        vec![uniform(&[2, 3, 4], &mut r), uniform(&[4, 2], &mut r)],
        Box::new(|t, v| project(t, t.matmul(v[0], v[1])?, 2)),
    ));
    cases.push((
        "matmul [2,3,4]x[2,4,2]",
        vec![uniform(&[2, 3, 4], &mut r), uniform(&[2, 4, 2], &mut r)],
        Box::new(|t, v| project(t, t.matmul(v[0], v[1])?, 3)),
    ));
    cases.push((
        "transpose [2,3,4]",
        vec![uniform(&[2, 3, 4], &mut r)],
        Box::new(|t, v| project(t, t.transpose(v[0])?, 4)),
    ));
    cases.push((
        "add [2,3]+[1,3]",
        vec![uniform(&[2, 3], &mut r), uniform(&[1, 3], &mut r)],
        Box::new(|t, v| project(t, t.add(v[0], v[1])?, 5)),
    ));
    cases.push((
        "add [2,3,4]+[4]",
        vec![uniform(&[2, 3, 4], &mut r), uniform(&[4], &mut r)],
        Box::new(|t, v| project(t, t.add(v[0], v[1])?, 6)),
    ));
    cases.push((
        "sub [3,4]-[3,1]",
        vec![uniform(&[3, 4], &mut r), uniform(&[3, 1], &mut r)],
        Box::new(|t, v| project(t, t.sub(v[0], v[1])?, 7)),
    ));
    cases.push((
        "mul [2,3,2]*[3,2]",
        vec![uniform(&[2, 3, 2], &mut r), uniform(&[3, 2], &mut r)],
        Box::new(|t, v| project(t, t.mul(v[0], v[1])?, 8)),
    ));
    cases.push(("scale", vec![uniform(&[4, 2], &mut r)], Box::new(|t, v| project(t, t.scale(v[0], -1.7), 9))));
    cases.push(("sigmoid", vec![uniform(&[3, 4], &mut r)], Box::new(|t, v| project(t, t.sigmoid(v[0]), 10))));
    cases.push(("tanh", vec![uniform(&[3, 4], &mut r)], Box::new(|t, v| project(t, t.tanh(v[0]), 11))));
    cases.push(("relu", vec![off_zero(&[3, 4], &mut r)], Box::new(|t, v| project(t, t.relu(v[0]), 12))));
    cases.push((
        "softmax axis 2",
        vec![uniform(&[2, 3, 4], &mut r)],
        Box::new(|t, v| project(t, t.softmax(v[0], 2)?, 13)),
    ));
    cases.push((
        "softmax axis 0",
        vec![uniform(&[3, 2], &mut r)],
        Box::new(|t, v| project(t, t.softmax(v[0], 0)?, 14)),
    ));
    cases.push((
        "layer_norm",
        vec![uniform(&[2, 3, 5], &mut r), uniform(&[5], &mut r), uniform(&[5], &mut r)],
        Box::new(|t, v| project(t, t.layer_norm(v[0], v[1], v[2], 1e-5)?, 15)),
    ));
    cases.push((
        "sum axis 1",
        vec![uniform(&[2, 3, 4], &mut r)],
        Box::new(|t, v| project(t, t.reduce(Reduction::Sum, v[0], Some(1))?, 16)),
    ));
    cases.push((
        "mean axis 2",
        vec![uniform(&[2, 3, 4], &mut r)],
        Box::new(|t, v| {
            let m = t.reduce(Reduction::Mean, v[0], Some(2))?;
            project(t, t.mul(m, m)?, 26)
        }),
    ));
    cases.push((
        "reshape",
        vec![uniform(&[2, 6], &mut r)],
        Box::new(|t, v| project(t, t.reshape(v[0], &[3, 4])?, 17)),
    ));
    cases.push((
        "concat axis 1",
        vec![uniform(&[2, 1, 3], &mut r), uniform(&[2, 2, 3], &mut r)],
        Box::new(|t, v| project(t, t.concat(&[v[0], v[1]], 1)?, 18)),
    ));
    cases.push((
        "slice axis 2",
        vec![uniform(&[2, 3, 5], &mut r)],
        Box::new(|t, v| project(t, t.slice(v[0], 2, 1..4)?, 19)),
    ));
    cases.push((
        "basin_weighted_mse",
        vec![uniform(&[2, 3, 1], &mut r)],
        Box::new(|t, v| {
            let y = Tensor::from_vec(&[2, 3, 1], vec![0.1, -0.4, 0.9, 0.3, 0.0, -1.2]).expect("valid");
            let mask = Tensor::from_vec(&[2, 3, 1], vec![1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).expect("valid");
            basin_weighted_mse(t, v[0], &y, &mask, &[0.5, 1.3], 0.1)
                .map_err(|e| TensorError::Contract(e.to_string()))
        }),
    ));
    cases
}

/// Tiny architecture used by the suite: 3 inputs, width 4, two heads,
/// two layers, three steps.
pub fn tiny_spec(variant: Variant) -> ModelSpec {
    ModelSpec {
        variant,
        input_dim: 3,
        hidden_dim: 4,
        d_model: 4,
        n_heads: 2,
        n_layers: 2,
        d_ff: 8,
        dropout: 0.0,
        seq_len: 3,
    }
}

fn architecture_row(variant: Variant, tol: f64) -> SuiteRow {
    let name = format!("model {}", variant.name());
    let outcome = (|| -> Result<GradCheckReport, String> {
        let mut rng = RngStream::new(7);
        let model = Model::init(tiny_spec(variant), &mut rng).map_err(|e| e.to_string())?;
        let mut inputs: Vec<Tensor> = model.weights().iter().map(|(_, t)| t.clone()).collect();
        inputs.push(uniform(&[2, 3, 3], &mut rng));
        let f = |tape: &Tape, vars: &[Var]| -> crate::tensor::Result<Var> {
            let (x, params) = vars.split_last().expect("inputs present");
            let bound = model.bind_vars(params.to_vec()).map_err(|e| TensorError::Contract(e.to_string()))?;
            let y = model.forward_bound(tape, &bound, *x, None).map_err(|e| TensorError::Contract(e.to_string()))?;
            project(tape, y, 99)
        };
        grad_check(f, &inputs, DEFAULT_STEP, tol).map_err(|e| e.to_string())
    })();
    SuiteRow { name, outcome }
}

/// Runs every op case and the three architectures.
pub fn gradient_suite(tol: f64) -> Vec<SuiteRow> {
    let mut rows: Vec<SuiteRow> = op_cases()
        .into_iter()
        .map(|(name, inputs, f)| SuiteRow {
            name: name.to_string(),
            outcome: grad_check(f, &inputs, DEFAULT_STEP, tol).map_err(|e| e.to_string()),
        })
        .collect();
    for v in [Variant::Lstm, Variant::TransformerVanilla, Variant::TransformerModified] {
        rows.push(architecture_row(v, tol));
    }
    rows
}
