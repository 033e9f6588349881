use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of the `l2 · θ` term added to every gradient.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.001,
        }
    }
}

/// First and second moment estimates of one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

fn check_finite(block: &str, grads: &[f64]) -> Result<()> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::Training {
            block: block.to_string(),
            message: format!("non-finite gradient {} at entry {i}", grads[i]),
        }),
        None => Ok(()),
    }
}

/// One bias-corrected ADAM update of `params` at step `t` (1-based).
pub fn adam_step(
    block: &str,
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    t: u64,
    config: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || moments.m.len() != params.len() || moments.v.len() != params.len() {
        return Err(Error::Size {
            what: "adam block",
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if t == 0 {
        return Err(Error::Argument("adam step counter starts at 1".into()));
    }
    check_finite(block, grads)?;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        l2,
    } = *config;
    let c1 = 1.0 - beta1.powf(t as f64);
    let c2 = 1.0 - beta2.powf(t as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut moments.m).zip(&mut moments.v) {
        let g = g + l2 * *p;
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

/// ADAM state over a fixed list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    moments: Vec<Moments>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, block_lens: &[usize]) -> Self {
        Self {
            config,
            moments: block_lens.iter().map(|&n| Moments::zeros(n)).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates every block. All gradients are checked before any parameter
    /// changes, so a failing step leaves the model untouched.
    pub fn step(&mut self, params: Vec<(String, &mut [f64])>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != params.len() {
            return Err(Error::Size {
                what: "parameter block list",
                expected: self.moments.len(),
                actual: params.len(),
            });
        }
        for ((name, _), g) in params.iter().zip(grads) {
            check_finite(name, g)?;
        }
        self.t += 1;
        for (((name, p), g), mom) in params.into_iter().zip(grads).zip(&mut self.moments) {
            adam_step(&name, p, g, mom, self.t, &self.config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamConfig {
        AdamConfig {
            l2: 0.0,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![0.3, -2.0, 5.0];
        let before = p.clone();
        let mut mom = Moments::zeros(3);
        for t in 1..=50 {
            adam_step("w", &mut p, &[0.0; 3], &mut mom, t, &no_decay()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let cfg = no_decay();
        for g in [1e-3, 0.5, -7.0] {
            let mut p = vec![0.0];
            let mut mom = Moments::zeros(1);
            for t in 1..=1000 {
                let before = p[0];
                adam_step("w", &mut p, &[g], &mut mom, t, &cfg).unwrap();
                if t == 1000 {
                    let step = (p[0] - before).abs();
                    assert!((step - cfg.lr).abs() <= 0.01 * cfg.lr, "g={g} step={step}");
                }
            }
        }
    }

    #[test]
    fn first_step_has_unit_normalized_size() {
        let cfg = no_decay();
        let mut p = vec![1.0, 1.0];
        let mut mom = Moments::zeros(2);
        adam_step("w", &mut p, &[3.0, -0.01], &mut mom, 1, &cfg).unwrap();
        assert!((p[0] - (1.0 - cfg.lr * 3.0 / (3.0 + cfg.eps))).abs() < 1e-15);
        assert!((p[1] - (1.0 + cfg.lr * 0.01 / (0.01 + cfg.eps))).abs() < 1e-15);
    }

    #[test]
    fn pure_decay_shrinks_norm() {
        let cfg = AdamConfig {
            l2: 0.01,
            ..AdamConfig::default()
        };
        let mut p = vec![1.5, -0.7, 0.2];
        let mut mom = Moments::zeros(3);
        let mut norm = p.iter().map(|v| v * v).sum::<f64>();
        for t in 1..=200 {
            adam_step("w", &mut p, &[0.0; 3], &mut mom, t, &cfg).unwrap();
            let next = p.iter().map(|v| v * v).sum::<f64>();
            assert!(next < norm);
            norm = next;
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut a = vec![1.0; 2];
        let mut b = vec![1.0; 3];
        let mut opt = Adam::new(AdamConfig::default(), &[2, 3]);
        let ga = [0.1, 0.2];
        let gb = [0.0, f64::NAN, 1.0];
        let err = opt
            .step(vec![("alpha".into(), &mut a), ("beta".into(), &mut b)], &[&ga, &gb])
            .unwrap_err();
        match err {
            Error::Training { block, .. } => assert_eq!(block, "beta"),
            other => panic!("{other:?}"),
        }
        assert_eq!(a, vec![1.0; 2]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn mismatched_lengths_and_zero_step() {
        let mut p = vec![0.0; 2];
        let mut mom = Moments::zeros(2);
        assert!(adam_step("w", &mut p, &[0.0], &mut mom, 1, &no_decay()).is_err());
        assert!(adam_step("w", &mut p, &[0.0; 2], &mut mom, 0, &no_decay()).is_err());
    }
}
