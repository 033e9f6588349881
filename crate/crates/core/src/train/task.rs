use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::Sequence;

/// Sequence classification task with a drifting per-class template.
///
/// Class `c` moves from base pattern `P_c` towards `P_{c+1 mod k}` over the
/// sequence, so the final frame of one class equals the first frame of the
/// next and only the ordering identifies the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTask {
    pub classes: usize,
    pub frames: usize,
    pub frame_len: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Permute training labels at random (a chance-level control).
    pub shuffled_labels: bool,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            classes: 8,
            frames: 6,
            frame_len: 256,
            noise: 1.0,
            seed: 7,
            train_per_class: 24,
            test_per_class: 16,
            shuffled_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub train: Vec<Sequence>,
    pub test: Vec<Sequence>,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("task.classes must be >= 2".into()));
        }
        if self.frames == 0 || self.frame_len == 0 {
            return Err(Error::Config("task.frames and task.frame_len must be >= 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("task.noise must be finite and >= 0".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config("task splits need at least one example per class".into()));
        }
        Ok(())
    }

    fn base_patterns(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        (0..self.classes)
            .map(|_| (0..self.frame_len).map(|_| unit.sample(rng)).collect())
            .collect()
    }

    fn clean_sequence(&self, patterns: &[Vec<f64>], class: usize) -> Vec<Vec<f64>> {
        let next = &patterns[(class + 1) % self.classes];
        let span = (self.frames.max(2) - 1) as f64;
        (0..self.frames)
            .map(|t| {
                let theta = std::f64::consts::FRAC_PI_2 * t as f64 / span;
                let (s, c) = theta.sin_cos();
                patterns[class].iter().zip(next).map(|(a, b)| c * a + s * b).collect()
            })
            .collect()
    }

    /// The noiseless sequence of every class, in class order.
    pub fn templates(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let patterns = self.base_patterns(&mut rng);
        Ok((0..self.classes).map(|c| self.clean_sequence(&patterns, c)).collect())
    }

    /// Class-balanced train and test splits, classes interleaved.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let patterns = self.base_patterns(&mut rng);
        let templates: Vec<_> = (0..self.classes).map(|c| self.clean_sequence(&patterns, c)).collect();
        let noise = Normal::new(0.0, self.noise).expect("finite noise");
        let mut split = |per_class: usize| -> Vec<Sequence> {
            let mut out = Vec::with_capacity(per_class * self.classes);
            for _ in 0..per_class {
                for (label, template) in templates.iter().enumerate() {
                    let frames = template
                        .iter()
                        .map(|f| f.iter().map(|v| v + noise.sample(&mut rng)).collect())
                        .collect();
                    out.push(Sequence { frames, label });
                }
            }
            out
        };
        let mut train = split(self.train_per_class);
        let test = split(self.test_per_class);
        if self.shuffled_labels {
            let mut labels: Vec<usize> = train.iter().map(|s| s.label).collect();
            labels.shuffle(&mut rng);
            train.iter_mut().zip(labels).for_each(|(s, l)| s.label = l);
        }
        Ok(Dataset {
            classes: self.classes,
            train,
            test,
        })
    }
}

/// Index of the template with the smallest squared distance to `frames`.
pub fn nearest_template(templates: &[Vec<Vec<f64>>], frames: &[Vec<f64>]) -> usize {
    let dist = |t: &Vec<Vec<f64>>| -> f64 {
        t.iter()
            .zip(frames)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum()
    };
    let mut best = (0, f64::INFINITY);
    for (c, t) in templates.iter().enumerate() {
        let d = dist(t);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}
