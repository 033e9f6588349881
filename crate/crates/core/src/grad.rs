//! Reverse-mode gradients through the HT layer and a central-difference
//! checker for them.

use crate::error::{Error, Result};
use crate::ht::{htl_forward, htl_forward_recorded, HTWeight};
use crate::tensor::Tensor;

/// Gradient buffers mirroring an [`HTWeight`]: one tensor per tree node in
/// preorder, plus the gradient with respect to the layer input.
#[derive(Debug, Clone, PartialEq)]
pub struct HTGradients {
    pub factors: Vec<Tensor>,
    pub input: Vec<f64>,
}

impl HTGradients {
    pub fn zeros_like(w: &HTWeight) -> Self {
        Self {
            factors: w.factors().iter().map(|f| Tensor::zeros(f.shape())).collect(),
            input: vec![0.0; w.input_len()],
        }
    }

    pub fn leaf(&self, w: &HTWeight, k: usize) -> &Tensor {
        &self.factors[w.tree().leaf_of(k)]
    }

    pub fn transfer(&self, node: usize) -> &Tensor {
        &self.factors[node]
    }

    /// Adds factor gradients of `other`; input gradients are left alone.
    pub fn add_factors(&mut self, other: &[Tensor]) -> Result<()> {
        for (a, b) in self.factors.iter_mut().zip(other) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for f in &mut self.factors {
            f.data_mut().iter_mut().for_each(|v| *v *= alpha);
        }
        self.input.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Every scalar, factors first (preorder), then the input gradient.
    pub fn flat(&self) -> Vec<f64> {
        self.factors
            .iter()
            .flat_map(|f| f.data().iter().copied())
            .chain(self.input.iter().copied())
            .collect()
    }
}

/// Gradients of a scalar loss whose derivative with respect to the layer
/// output is `dl_dy`.
pub fn htl_backward(w: &HTWeight, x: &[f64], dl_dy: &[f64]) -> Result<HTGradients> {
    if dl_dy.len() != w.output_len() {
        return Err(Error::Size {
            what: "output gradient",
            expected: w.output_len(),
            actual: dl_dy.len(),
        });
    }
    let (_, tape) = htl_forward_recorded(w, x, 1)?;
    let (factors, input) = tape.backward(dl_dy)?;
    Ok(HTGradients { factors, input })
}

/// Loss on the layer output, returning its value and gradient.
pub type OutputLoss<'a> = &'a dyn Fn(&[f64]) -> (f64, Vec<f64>);

pub fn half_squared_norm(y: &[f64]) -> (f64, Vec<f64>) {
    (0.5 * y.iter().map(|v| v * v).sum::<f64>(), y.to_vec())
}

/// Magnitude below which two gradient entries are compared absolutely.
pub const TINY_GRADIENT: f64 = 1e-8;

/// `|a − b| / max(|a|, |b|)`, or `|a − b|` when both are below [`TINY_GRADIENT`].
pub fn gradient_discrepancy(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < TINY_GRADIENT {
        diff
    } else {
        diff / scale
    }
}

/// Worst disagreement between two flat gradient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_error: f64,
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error <= tolerance
    }
}

pub fn compare_flat(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient vectors differ in length");
    let mut report = GradCheckReport {
        max_error: 0.0,
        worst_index: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: analytic.len(),
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = gradient_discrepancy(a, n);
        if e > report.max_error || e.is_nan() {
            report = GradCheckReport {
                max_error: e,
                worst_index: Some(i),
                analytic: a,
                numeric: n,
                ..report
            };
        }
    }
    report
}

/// Central-difference gradients of `loss(htl_forward(w, x))` for every
/// factor coordinate and every input coordinate.
pub fn numeric_gradients(w: &HTWeight, x: &[f64], loss: OutputLoss<'_>, step: f64) -> Result<HTGradients> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Argument(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let eval = |w: &HTWeight, x: &[f64]| -> Result<f64> { Ok(loss(&htl_forward(w, x)?).0) };
    let mut out = HTGradients::zeros_like(w);
    let mut probe = w.clone();
    for id in 0..w.factors().len() {
        for c in 0..w.factor(id).len() {
            let orig = w.factor(id).data()[c];
            probe.factor_mut(id).data_mut()[c] = orig + step;
            let up = eval(&probe, x)?;
            probe.factor_mut(id).data_mut()[c] = orig - step;
            let down = eval(&probe, x)?;
            probe.factor_mut(id).data_mut()[c] = orig;
            out.factors[id].data_mut()[c] = (up - down) / (2.0 * step);
        }
    }
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + step;
        let up = eval(w, &xp)?;
        xp[c] = x[c] - step;
        let down = eval(w, &xp)?;
        xp[c] = x[c];
        out.input[c] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// Compares [`htl_backward`] with central differences over every factor and
/// input coordinate.
pub fn finite_diff_check(w: &HTWeight, x: &[f64], loss: OutputLoss<'_>, step: f64) -> Result<GradCheckReport> {
    let y = htl_forward(w, x)?;
    let (_, dy) = loss(&y);
    let analytic = htl_backward(w, x, &dy)?;
    let numeric = numeric_gradients(w, x, loss, step)?;
    Ok(compare_flat(&analytic.flat(), &numeric.flat()))
}
