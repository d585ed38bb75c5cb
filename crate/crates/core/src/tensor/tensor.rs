use super::{Result, RngStream, Shape, TensorError};

/// How [`Tensor::create`] fills a new buffer.
pub enum Init<'a> {
    Zeros,
    Constant(f64),
    Uniform { low: f64, high: f64, rng: &'a mut RngStream },
    Gaussian { mean: f64, std: f64, rng: &'a mut RngStream },
}

/// Row-major `f64` buffer with an optional gradient buffer of the same length.
///
/// `requires_grad` is represented by the presence of `grad`. Gradients are
/// accumulated by [`Tensor::accumulate_grad`] and reset only by
/// [`Tensor::zero_grad`].
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn create(dims: &[usize], init: Init<'_>) -> Result<Tensor> {
        let shape = Shape::new(dims.to_vec())?;
        let n = shape.numel();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Constant(c) => vec![c; n],
            Init::Uniform { low, high, rng } => {
                if !(low < high) || !low.is_finite() || !high.is_finite() {
                    return Err(TensorError::Param(format!(
                        "uniform requires finite low < high, got ({low}, {high})"
                    )));
                }
                (0..n).map(|_| rng.uniform(low, high)).collect()
            }
            Init::Gaussian { mean, std, rng } => {
                if !(std > 0.0) || !mean.is_finite() || !std.is_finite() {
                    return Err(TensorError::Param(format!(
                        "gaussian requires finite mean and std > 0, got ({mean}, {std})"
                    )));
                }
                (0..n).map(|_| rng.gaussian(mean, std)).collect()
            }
        };
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(dims: &[usize]) -> Result<Tensor> {
        Tensor::create(dims, Init::Zeros)
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let shape = Shape::new(dims.to_vec())?;
        Tensor::from_shape(shape, data)
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Tensor> {
        if shape.numel() != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor { shape: Shape::scalar(), data: vec![value], grad: None }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(TensorError::Contract(format!(
                "item() on tensor of shape {}",
                self.shape
            ))),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        match (on, self.grad.is_some()) {
            (true, false) => self.grad = Some(vec![0.0; self.data.len()]),
            (false, true) => self.grad = None,
            _ => {}
        }
    }

    pub fn with_grad(mut self) -> Tensor {
        self.set_requires_grad(true);
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    /// Adds `g` into the gradient buffer. No-op when the tensor does not
    /// require gradients.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        let Some(buf) = self.grad.as_mut() else {
            return Ok(());
        };
        if buf.len() != g.len() {
            return Err(TensorError::Shape(format!(
                "gradient length {} does not match tensor length {}",
                g.len(),
                buf.len()
            )));
        }
        buf.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn reshaped(&self, dims: &[usize]) -> Result<Tensor> {
        let shape = Shape::new(dims.to_vec())?;
        if shape.numel() != self.numel() {
            return Err(TensorError::Shape(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        Ok(Tensor { shape, data: self.data.clone(), grad: None })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
