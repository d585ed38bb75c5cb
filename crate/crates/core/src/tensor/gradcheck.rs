use std::fmt;

use super::{Result, Tape, Tensor, TensorError, Var};

/// Central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients far below this are compared on an absolute scale; central
/// differences at `h = 1e-5` carry roundoff near `1e-11`.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Outcome of comparing tape gradients against central differences.
///
/// The error of element `i` is `|g_ad - g_fd| / (|g_ad| + |g_fd| + GRAD_FLOOR)`;
/// the report carries the worst one.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max_rel_err={:.3e} at input {} element {} (ad={:.6e}, fd={:.6e}) over {} elements: {}",
            self.max_rel_error,
            self.worst_input,
            self.worst_element,
            self.analytic,
            self.numeric,
            self.n_checked,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t)).collect();
    let out = f(&tape, &vars)?;
    tape.value(out).item()
}

/// Checks the gradient of the scalar function `f` with respect to every
/// element of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(TensorError::Param(format!("finite-difference step must be > 0, got {h}")));
    }
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    drop(grads);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_element: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: 0,
        tol,
        passed: true,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, ad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].numel() {
            let x0 = inputs[i].data()[j];
            probe[i].data_mut()[j] = x0 + h;
            let plus = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = x0 - h;
            let minus = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = x0;

            let fd = (plus - minus) / (2.0 * h);
            let rel = (ad[j] - fd).abs() / (ad[j].abs() + fd.abs() + GRAD_FLOOR);
            report.n_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst_input = i;
                report.worst_element = j;
                report.analytic = ad[j];
                report.numeric = fd;
            }
        }
    }
    report.passed = report.max_rel_error < tol;
    Ok(report)
}
