use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cell::{CellGrads, LstmCell, StepCache};
use crate::error::{Error, Result};
use crate::grad::{compare_flat, GradCheckReport};
use crate::matrix::{dot, Matrix};

/// Dense softmax classifier on the final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// `classes × H`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn init(classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config("a classifier needs at least 2 classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("finite std");
        let data = (0..classes * hidden).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self {
            weight: Matrix::new(classes, hidden, data)?,
            bias: vec![0.0; classes],
        })
    }

    pub fn zeros(classes: usize, hidden: usize) -> Self {
        Self {
            weight: Matrix::zeros(classes, hidden),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.classes())
            .map(|c| dot(self.weight.row(c), h) + self.bias[c])
            .collect()
    }
}

/// A labelled sequence of input frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Vec<f64>>,
    pub label: usize,
}

/// Runs the cell over `xs` from a zero state and applies the head to `h[T]`.
pub fn forward_sequence(cell: &LstmCell, head: &Head, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let refs: Vec<&[Vec<f64>]> = vec![xs];
    Ok(batch_logits(cell, head, &refs)?.pop().expect("one sequence"))
}

fn stack_frames(seqs: &[&[Vec<f64>]], t: usize, nx: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(seqs.len() * nx);
    for s in seqs {
        let frame = &s[t];
        if frame.len() != nx {
            return Err(Error::Size {
                what: "input frame",
                expected: nx,
                actual: frame.len(),
            });
        }
        out.extend_from_slice(frame);
    }
    Ok(out)
}

fn common_length(seqs: &[&[Vec<f64>]]) -> Result<usize> {
    let t = seqs.first().map_or(0, |s| s.len());
    if t == 0 {
        return Err(Error::Argument("sequences must contain at least one frame".into()));
    }
    if seqs.iter().any(|s| s.len() != t) {
        return Err(Error::Argument("sequences in a batch must have equal length".into()));
    }
    Ok(t)
}

/// Final hidden states for a batch of equal-length sequences (`batch × H`).
pub fn final_hidden(cell: &LstmCell, seqs: &[&[Vec<f64>]]) -> Result<Vec<f64>> {
    let t_len = common_length(seqs)?;
    let (batch, h) = (seqs.len(), cell.hidden_size());
    let mut hs = vec![0.0; batch * h];
    let mut cs = vec![0.0; batch * h];
    for t in 0..t_len {
        let xs = stack_frames(seqs, t, cell.input_size())?;
        let (hn, cn, _) = cell.step_batch(&xs, &hs, &cs, batch, false)?;
        hs = hn;
        cs = cn;
    }
    Ok(hs)
}

/// Logits for a batch of equal-length sequences.
pub fn batch_logits(cell: &LstmCell, head: &Head, seqs: &[&[Vec<f64>]]) -> Result<Vec<Vec<f64>>> {
    check_head(cell, head)?;
    let hs = final_hidden(cell, seqs)?;
    let h = cell.hidden_size();
    Ok(hs.chunks(h).map(|hb| head.logits(hb)).collect())
}

fn check_head(cell: &LstmCell, head: &Head) -> Result<()> {
    if head.weight.cols() != cell.hidden_size() || head.bias.len() != head.classes() {
        return Err(Error::Size {
            what: "classifier head width",
            expected: cell.hidden_size(),
            actual: head.weight.cols(),
        });
    }
    Ok(())
}

/// `(loss, dloss/dlogits)` of softmax cross-entropy for one example.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Gradients of every cell and head parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrads {
    pub cell: CellGrads,
    pub head_weight: Matrix,
    pub head_bias: Vec<f64>,
}

impl ClassifierGrads {
    pub fn zeros_like(cell: &LstmCell, head: &Head) -> Self {
        Self {
            cell: CellGrads::zeros_like(cell),
            head_weight: Matrix::zeros(head.weight.rows(), head.weight.cols()),
            head_bias: vec![0.0; head.bias.len()],
        }
    }

    /// Same order as [`Classifier::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = self.cell.blocks();
        out.push(self.head_weight.data());
        out.push(&self.head_bias);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.cell.blocks_mut();
        out.push(self.head_weight.data_mut());
        out.push(&mut self.head_bias);
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct BpttOutput {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub grads: ClassifierGrads,
    /// `[example][t]` gradients with respect to each input frame.
    pub input_grads: Vec<Vec<Vec<f64>>>,
    pub logits: Vec<Vec<f64>>,
}

/// Backpropagation through time for the mean softmax cross-entropy of a
/// batch. `dropout_mask`, when given, multiplies `h[T]` elementwise before
/// the head (`batch × H`, already scaled).
pub fn bptt(cell: &LstmCell, head: &Head, batch: &[Sequence], dropout_mask: Option<&[f64]>) -> Result<BpttOutput> {
    check_head(cell, head)?;
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let classes = head.classes();
    if let Some(bad) = batch.iter().find(|s| s.label >= classes) {
        return Err(Error::Argument(format!(
            "label {} out of range for {classes} classes",
            bad.label
        )));
    }
    let seqs: Vec<&[Vec<f64>]> = batch.iter().map(|s| s.frames.as_slice()).collect();
    let t_len = common_length(&seqs)?;
    let (n, h, nx) = (batch.len(), cell.hidden_size(), cell.input_size());
    if let Some(mask) = dropout_mask {
        if mask.len() != n * h {
            return Err(Error::Size {
                what: "dropout mask",
                expected: n * h,
                actual: mask.len(),
            });
        }
    }

    let mut caches: Vec<StepCache> = Vec::with_capacity(t_len);
    let mut hs = vec![0.0; n * h];
    let mut cs = vec![0.0; n * h];
    for t in 0..t_len {
        let xs = stack_frames(&seqs, t, nx)?;
        let (hn, cn, cache) = cell.step_batch(&xs, &hs, &cs, n, true)?;
        caches.push(cache.expect("recorded"));
        hs = hn;
        cs = cn;
    }

    let dropped: Vec<f64> = match dropout_mask {
        Some(mask) => hs.iter().zip(mask).map(|(a, m)| a * m).collect(),
        None => hs.clone(),
    };
    let mut grads = ClassifierGrads::zeros_like(cell, head);
    let mut dh = vec![0.0; n * h];
    let mut loss = 0.0;
    let mut all_logits = Vec::with_capacity(n);
    let scale = 1.0 / n as f64;
    for (b, seq) in batch.iter().enumerate() {
        let hb = &dropped[b * h..(b + 1) * h];
        let logits = head.logits(hb);
        let (l, mut dl) = softmax_cross_entropy(&logits, seq.label);
        loss += l * scale;
        dl.iter_mut().for_each(|v| *v *= scale);
        for (c, &d) in dl.iter().enumerate() {
            grads.head_bias[c] += d;
            let row = &mut grads.head_weight.data_mut()[c * h..(c + 1) * h];
            for (gw, &hv) in row.iter_mut().zip(hb) {
                *gw += d * hv;
            }
        }
        let dhb = head.weight.matvec_transposed(&dl)?;
        dh[b * h..(b + 1) * h].copy_from_slice(&dhb);
        all_logits.push(logits);
    }
    if let Some(mask) = dropout_mask {
        dh.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }

    let mut dc = vec![0.0; n * h];
    let mut input_grads = vec![vec![Vec::new(); t_len]; n];
    for t in (0..t_len).rev() {
        let back = cell.step_backward(&caches[t], &dh, &dc, n, &mut grads.cell)?;
        for (b, ig) in input_grads.iter_mut().enumerate() {
            ig[t] = back.dx[b * nx..(b + 1) * nx].to_vec();
        }
        dh = back.dh_prev;
        dc = back.dc_prev;
    }
    Ok(BpttOutput {
        loss,
        grads,
        input_grads,
        logits: all_logits,
    })
}

/// An LSTM cell with its classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub cell: LstmCell,
    pub head: Head,
}

impl Classifier {
    pub fn new(cell: LstmCell, head: Head) -> Result<Self> {
        check_head(&cell, &head)?;
        Ok(Self { cell, head })
    }

    pub fn logits(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        forward_sequence(&self.cell, &self.head, xs)
    }

    pub fn predict_batch(&self, seqs: &[&[Vec<f64>]]) -> Result<Vec<usize>> {
        Ok(batch_logits(&self.cell, &self.head, seqs)?
            .iter()
            .map(|l| argmax(l))
            .collect())
    }

    pub fn bptt(&self, batch: &[Sequence], dropout_mask: Option<&[f64]>) -> Result<BpttOutput> {
        bptt(&self.cell, &self.head, batch, dropout_mask)
    }

    /// Cell blocks followed by `head.weight` and `head.bias`.
    pub fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.cell.param_blocks_mut();
        out.push(("head.weight".into(), self.head.weight.data_mut()));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    pub fn param_count(&self) -> usize {
        self.cell.param_count() + self.head.weight.data().len() + self.head.bias.len()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| if x > best.1 { (i, x) } else { best },
        )
        .0
}

/// Mean cross-entropy of a batch with an optional fixed dropout mask on `h[T]`.
pub fn mean_loss(cell: &LstmCell, head: &Head, batch: &[Sequence], dropout_mask: Option<&[f64]>) -> Result<f64> {
    check_head(cell, head)?;
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let seqs: Vec<&[Vec<f64>]> = batch.iter().map(|s| s.frames.as_slice()).collect();
    let mut hs = final_hidden(cell, &seqs)?;
    if let Some(mask) = dropout_mask {
        hs.iter_mut().zip(mask).for_each(|(h, m)| *h *= m);
    }
    let h = cell.hidden_size();
    let total: f64 = batch
        .iter()
        .zip(hs.chunks(h))
        .map(|(s, hb)| softmax_cross_entropy(&head.logits(hb), s.label).0)
        .sum();
    Ok(total / batch.len() as f64)
}

/// Compares [`bptt`] with central differences over every parameter and
/// every input frame entry.
pub fn bptt_finite_diff_check(
    model: &Classifier,
    batch: &[Sequence],
    dropout_mask: Option<&[f64]>,
    step: f64,
) -> Result<GradCheckReport> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Argument(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let out = model.bptt(batch, dropout_mask)?;
    let loss = |m: &Classifier, b: &[Sequence]| mean_loss(&m.cell, &m.head, b, dropout_mask);
    let mut analytic = out.grads.flat();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = model.clone();
    let n_blocks = probe.param_blocks_mut().len();
    for bi in 0..n_blocks {
        let len = probe.param_blocks_mut()[bi].1.len();
        for c in 0..len {
            let orig = probe.param_blocks_mut()[bi].1[c];
            probe.param_blocks_mut()[bi].1[c] = orig + step;
            let up = loss(&probe, batch)?;
            probe.param_blocks_mut()[bi].1[c] = orig - step;
            let down = loss(&probe, batch)?;
            probe.param_blocks_mut()[bi].1[c] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
    }
    let mut data = batch.to_vec();
    for b in 0..batch.len() {
        for t in 0..batch[b].frames.len() {
            for k in 0..batch[b].frames[t].len() {
                let orig = data[b].frames[t][k];
                data[b].frames[t][k] = orig + step;
                let up = loss(model, &data)?;
                data[b].frames[t][k] = orig - step;
                let down = loss(model, &data)?;
                data[b].frames[t][k] = orig;
                numeric.push((up - down) / (2.0 * step));
                analytic.push(out.input_grads[b][t][k]);
            }
        }
    }
    Ok(compare_flat(&analytic, &numeric))
}
