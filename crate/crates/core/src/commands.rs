//! The `fdht` subcommands as library functions. Each returns the text to
//! print and whether the run passed its own check.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complexity::emit_rank_sweep;
use crate::config::{ModelConfig, RunConfig};
use crate::error::{Error, Result};
use crate::grad::{finite_diff_check, half_squared_norm};
use crate::ht::{htl_forward, HTWeight, HtLayout};
use crate::lstm::checkpoint::{load_checkpoint, save_checkpoint};
use crate::lstm::{bptt_finite_diff_check, CellMode, Sequence, GATES};
use crate::train::{accuracy, metrics_csv, train};

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    /// False when a numerical check exceeded its tolerance.
    pub passed: bool,
}

impl Report {
    fn ok(text: String) -> Self {
        Self { text, passed: true }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Single-line, `key=value` form of an error for scripted callers.
pub fn error_line(err: &Error) -> String {
    let message = err.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} exit={} message={message:?}", err.kind(), err.exit_code())
}

/// Parameter accounting of an HT layer over the stacked gate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamReport {
    pub hidden: usize,
    pub pad: usize,
    pub ht_params: usize,
    /// HT factors plus any dense recurrent matrix.
    pub weight_params: usize,
    /// `4·H·(N_x + H)`.
    pub dense_weights: usize,
    /// `4·(H·(N_x + H) + H)`.
    pub dense_total: usize,
    /// `dense_weights / weight_params` rounded to the nearest integer.
    pub ratio: usize,
    /// The same quotient rounded down.
    pub ratio_floor: usize,
}

pub fn param_report(model: &ModelConfig) -> Result<ParamReport> {
    if model.mode == CellMode::Dense {
        return Err(Error::Config(
            "params needs an HT model (mode full or input-only)".into(),
        ));
    }
    let layout = HtLayout {
        m_shape: model.m_shape.clone(),
        n_shape: model.n_shape.clone(),
        leaf_rank: model.leaf_rank,
        internal_rank: model.internal_rank,
        root_rank: GATES,
    };
    let ht_params = layout.param_count()?;
    let hidden = model.hidden_size();
    let columns: usize = model.n_shape.iter().product();
    let (weight_params, pad) = match model.mode {
        CellMode::InputOnly => (ht_params + GATES * hidden * hidden, columns - model.input_size),
        _ => (ht_params, columns - model.input_size - hidden),
    };
    let dense_weights = GATES * hidden * (model.input_size + hidden);
    Ok(ParamReport {
        hidden,
        pad,
        ht_params,
        weight_params,
        dense_weights,
        dense_total: dense_weights + GATES * hidden,
        ratio: (2 * dense_weights + weight_params) / (2 * weight_params),
        ratio_floor: dense_weights / weight_params,
    })
}

pub fn cmd_params(config: &RunConfig) -> Result<Report> {
    let p = param_report(&config.model)?;
    let mut text = String::new();
    writeln!(text, "mode={}", config.model.mode.name()).unwrap();
    writeln!(text, "hidden={}", p.hidden).unwrap();
    writeln!(text, "pad={}", p.pad).unwrap();
    writeln!(text, "ht_params={}", p.ht_params).unwrap();
    writeln!(text, "weight_params={}", p.weight_params).unwrap();
    writeln!(text, "dense_weights={}", p.dense_weights).unwrap();
    writeln!(text, "dense_total={}", p.dense_total).unwrap();
    writeln!(text, "compression_ratio={}", p.ratio).unwrap();
    writeln!(text, "compression_ratio_floor={}", p.ratio_floor).unwrap();
    Ok(Report::ok(text))
}

pub fn cmd_compare(config: &RunConfig) -> Result<Report> {
    let c = &config.compare;
    Ok(Report::ok(emit_rank_sweep(&c.spec()?, c.rank_min..=c.rank_max)?))
}

fn model_weight(config: &RunConfig) -> Result<Option<HTWeight>> {
    Ok(config.model.build_cell()?.ht_weight().cloned())
}

pub fn cmd_gradcheck(config: &RunConfig) -> Result<Report> {
    let check = &config.check;
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let mut text = String::new();
    let mut worst: f64 = 0.0;

    if let Some(w) = model_weight(config)? {
        let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = finite_diff_check(&w, &x, &half_squared_norm, check.step)?;
        writeln!(text, "ht_layer_checked={}", r.checked).unwrap();
        writeln!(text, "ht_layer_max_error={:e}", r.max_error).unwrap();
        worst = worst.max(r.max_error);
    }

    let model = config.model.build_classifier(config.task.classes)?;
    let data = config.task.generate()?;
    let batch: Vec<Sequence> = data
        .train
        .iter()
        .take(check.samples)
        .map(|s| Sequence {
            frames: s.frames.iter().take(2).cloned().collect(),
            label: s.label,
        })
        .collect();
    let rate = config.train.dropout;
    let mask: Option<Vec<f64>> = (rate > 0.0).then(|| {
        (0..batch.len() * model.cell.hidden_size())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    1.0 / (1.0 - rate)
                }
            })
            .collect()
    });
    let r = bptt_finite_diff_check(&model, &batch, mask.as_deref(), check.step)?;
    writeln!(text, "bptt_checked={}", r.checked).unwrap();
    writeln!(text, "bptt_max_error={:e}", r.max_error).unwrap();
    worst = worst.max(r.max_error);

    let passed = worst <= check.grad_tolerance;
    writeln!(text, "max_error={worst:e}").unwrap();
    writeln!(text, "tolerance={:e}", check.grad_tolerance).unwrap();
    writeln!(text, "status={}", if passed { "pass" } else { "fail" }).unwrap();
    Ok(Report { text, passed })
}

pub fn cmd_verify(config: &RunConfig) -> Result<Report> {
    let check = &config.check;
    let w = model_weight(config)?.ok_or_else(|| Error::Config("verify needs an HT model".into()))?;
    let dense = w.reconstruct_dense_with_cap(check.oracle_cap as u128)?;
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let mut max_err: f64 = 0.0;
    for _ in 0..check.samples {
        let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = htl_forward(&w, &x)?;
        let slow = dense.matvec(&x)?;
        for (a, b) in fast.iter().zip(&slow) {
            max_err = max_err.max((a - b).abs());
        }
    }
    let passed = max_err <= check.verify_tolerance;
    let mut text = String::new();
    writeln!(text, "dense_shape={}x{}", dense.rows(), dense.cols()).unwrap();
    writeln!(text, "samples={}", check.samples).unwrap();
    writeln!(text, "max_abs_error={max_err:e}").unwrap();
    writeln!(text, "tolerance={:e}", check.verify_tolerance).unwrap();
    writeln!(text, "status={}", if passed { "pass" } else { "fail" }).unwrap();
    Ok(Report { text, passed })
}

/// Trains on the synthetic task and prints the metrics CSV. Writes the CSV
/// and a checkpoint when the corresponding paths are set.
pub fn cmd_train(config: &RunConfig) -> Result<Report> {
    if config.paths.checkpoint.is_some() && config.model.mode == CellMode::Dense {
        return Err(Error::Config("checkpoints are only written for HT models".into()));
    }
    let data = config.task.generate()?;
    let mut model = config.model.build_classifier(data.classes)?;
    let history = train(&mut model, &data, &config.train)?;
    let csv = metrics_csv(&history);
    if let Some(path) = &config.paths.metrics {
        std::fs::write(path, &csv)?;
    }
    if let Some(path) = &config.paths.checkpoint {
        save_checkpoint(&model, path)?;
    }
    Ok(Report::ok(csv))
}

/// Test-split accuracy of a saved checkpoint.
pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>) -> Result<Report> {
    let path = checkpoint
        .or(config.paths.checkpoint.as_deref())
        .ok_or_else(|| Error::Config("eval needs a checkpoint path".into()))?;
    let model = load_checkpoint(path)?;
    let data = config.task.generate()?;
    if model.cell.input_size() != config.task.frame_len || model.head.classes() != data.classes {
        return Err(Error::Config(format!(
            "checkpoint expects {} inputs and {} classes; task has {} and {}",
            model.cell.input_size(),
            model.head.classes(),
            config.task.frame_len,
            data.classes
        )));
    }
    let acc = accuracy(&model, &data.test, config.train.batch_size)?;
    let correct = (acc * data.test.len() as f64).round() as usize;
    let mut text = String::new();
    writeln!(text, "accuracy={acc:.4}").unwrap();
    writeln!(text, "correct={correct}").unwrap();
    writeln!(text, "total={}", data.test.len()).unwrap();
    writeln!(text, "chance={:.4}", 1.0 / data.classes as f64).unwrap();
    Ok(Report::ok(text))
}
