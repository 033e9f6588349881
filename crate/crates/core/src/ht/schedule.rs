//! Leaves-to-root evaluation of the HT matrix-vector product.
//!
//! Every intermediate is a tensor whose modes carry labels. The input enters
//! with labels `(Batch, In_0, …, In_{d-1})` and is contracted into leaf frames
//! in mode order; each internal node then folds its children's rank modes
//! through its transfer tensor. When the right child of a node is a leaf, the
//! transfer tensor is first merged with that leaf's frame, which keeps the
//! widest intermediate at `(rank × m_k) × remaining inputs`. The dense weight
//! is never formed.
//!
//! Recording the schedule yields an [`HtTape`] that replays it in reverse.

use super::weight::HTWeight;
use crate::error::{Error, Result};
use crate::tensor::{contract, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Batch,
    In(usize),
    Out(usize),
    Rank(usize),
}

#[derive(Debug, Clone)]
struct Labeled {
    t: Tensor,
    axes: Vec<Axis>,
}

impl Labeled {
    /// Contracts every label the two operands share.
    fn contract(&self, other: &Labeled) -> Result<Labeled> {
        let mut am = Vec::new();
        let mut bm = Vec::new();
        for (i, ax) in self.axes.iter().enumerate() {
            if let Some(j) = other.axes.iter().position(|b| b == ax) {
                am.push(i);
                bm.push(j);
            }
        }
        let t = contract(&self.t, &other.t, &am, &bm)?;
        let axes = self
            .axes
            .iter()
            .enumerate()
            .filter(|(i, _)| !am.contains(i))
            .map(|(_, a)| *a)
            .chain(
                other
                    .axes
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !bm.contains(j))
                    .map(|(_, a)| *a),
            )
            .collect();
        Ok(Labeled { t, axes })
    }

    fn align(&self, order: &[Axis]) -> Result<Tensor> {
        let perm: Vec<usize> = order
            .iter()
            .map(|ax| {
                self.axes
                    .iter()
                    .position(|a| a == ax)
                    .ok_or_else(|| Error::Index(format!("label {ax:?} missing")))
            })
            .collect::<Result<_>>()?;
        self.t.permute(&perm)
    }
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Input,
    Factor(usize),
    Contract(usize, usize),
}

/// Recorded forward schedule for one batch, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct HtTape {
    values: Vec<Labeled>,
    origins: Vec<Origin>,
    output: usize,
    batch: usize,
    d: usize,
    out_shape: Vec<usize>,
    n_factors: usize,
}

struct Graph<'w> {
    w: &'w HTWeight,
    values: Vec<Option<Labeled>>,
    origins: Vec<Origin>,
    record: bool,
}

impl Graph<'_> {
    fn push(&mut self, origin: Origin, value: Labeled) -> usize {
        self.values.push(Some(value));
        self.origins.push(origin);
        self.values.len() - 1
    }

    fn factor(&mut self, id: usize) -> usize {
        let tree = self.w.tree();
        let node = tree.node(id);
        let axes = match node.children {
            None => vec![Axis::Rank(id), Axis::Out(node.first), Axis::In(node.first)],
            Some((l, r)) => vec![Axis::Rank(id), Axis::Rank(l), Axis::Rank(r)],
        };
        let t = self.w.factor(id).clone();
        self.push(Origin::Factor(id), Labeled { t, axes })
    }

    fn contract(&mut self, a: usize, b: usize) -> Result<usize> {
        let out = {
            let va = self.values[a].as_ref().expect("operand consumed");
            let vb = self.values[b].as_ref().expect("operand consumed");
            va.contract(vb)?
        };
        if !self.record {
            // every operand in the schedule is used exactly once
            self.values[a] = None;
            self.values[b] = None;
        }
        Ok(self.push(Origin::Contract(a, b), out))
    }

    fn visit(&mut self, id: usize, work: usize) -> Result<usize> {
        let Some((l, r)) = self.w.tree().node(id).children else {
            let f = self.factor(id);
            return self.contract(work, f);
        };
        let work = self.visit(l, work)?;
        if self.w.tree().node(r).is_leaf() {
            let g = self.factor(id);
            let u = self.factor(r);
            let merged = self.contract(g, u)?;
            self.contract(work, merged)
        } else {
            let work = self.visit(r, work)?;
            let g = self.factor(id);
            self.contract(work, g)
        }
    }
}

fn output_axes(d: usize) -> Vec<Axis> {
    [Axis::Batch, Axis::Rank(0)]
        .into_iter()
        .chain((0..d).map(Axis::Out))
        .collect()
}

fn input_axes(d: usize) -> Vec<Axis> {
    std::iter::once(Axis::Batch).chain((0..d).map(Axis::In)).collect()
}

fn run(w: &HTWeight, xs: &[f64], batch: usize, record: bool) -> Result<(Vec<f64>, Option<HtTape>)> {
    let n = w.input_len();
    if batch == 0 || xs.len() != n * batch {
        return Err(Error::Size {
            what: "HT layer input",
            expected: n * batch.max(1),
            actual: xs.len(),
        });
    }
    let d = w.d();
    let mut shape = vec![batch];
    shape.extend_from_slice(w.n_shape());
    let x = Labeled {
        t: Tensor::new(shape, xs.to_vec())?,
        axes: input_axes(d),
    };
    let mut g = Graph {
        w,
        values: Vec::with_capacity(4 * d),
        origins: Vec::with_capacity(4 * d),
        record,
    };
    let x = g.push(Origin::Input, x);
    let top = g.visit(w.tree().root(), x)?;
    let y = g.values[top].as_ref().expect("output").align(&output_axes(d))?;
    let out_shape = y.shape().to_vec();
    let y = y.into_data();
    let tape = record.then(|| HtTape {
        values: g.values.into_iter().map(|v| v.expect("recorded")).collect(),
        origins: g.origins,
        output: top,
        batch,
        d,
        out_shape,
        n_factors: w.factors().len(),
    });
    Ok((y, tape))
}

/// Computes `y = W x` for the HT-format weight without materializing `W`.
/// The output is ordered `(g, i_1, …, i_d)`, i.e. root slice major.
pub fn htl_forward(w: &HTWeight, x: &[f64]) -> Result<Vec<f64>> {
    htl_forward_batch(w, x, 1)
}

/// Row-major batch of inputs (`batch × ∏n`) to a batch of outputs.
pub fn htl_forward_batch(w: &HTWeight, xs: &[f64], batch: usize) -> Result<Vec<f64>> {
    run(w, xs, batch, false).map(|(y, _)| y)
}

/// Forward pass that keeps every intermediate for a later backward pass.
pub fn htl_forward_recorded(w: &HTWeight, xs: &[f64], batch: usize) -> Result<(Vec<f64>, HtTape)> {
    let (y, tape) = run(w, xs, batch, true)?;
    Ok((y, tape.expect("recording requested")))
}

impl HtTape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Replays the schedule in reverse. Returns per-factor gradients (preorder,
    /// storage layout of each factor) and the input gradient (`batch × ∏n`).
    pub fn backward(&self, dy: &[f64]) -> Result<(Vec<Tensor>, Vec<f64>)> {
        let expected: usize = self.out_shape.iter().product();
        if dy.len() != expected {
            return Err(Error::Size {
                what: "output gradient",
                expected,
                actual: dy.len(),
            });
        }
        let mut grads: Vec<Option<Labeled>> = vec![None; self.values.len()];
        grads[self.output] = Some(Labeled {
            t: Tensor::new(self.out_shape.clone(), dy.to_vec())?,
            axes: output_axes(self.d),
        });

        let mut factor_grads: Vec<Option<Tensor>> = vec![None; self.n_factors];
        let mut input_grad = None;
        for v in (0..self.values.len()).rev() {
            let Some(g) = grads[v].take() else { continue };
            match self.origins[v] {
                Origin::Contract(a, b) => {
                    let ga = g.contract(&self.values[b])?;
                    let gb = g.contract(&self.values[a])?;
                    accumulate(&mut grads[a], ga, &self.values[a].axes)?;
                    accumulate(&mut grads[b], gb, &self.values[b].axes)?;
                }
                Origin::Factor(id) => {
                    let t = g.align(&self.values[v].axes)?;
                    match &mut factor_grads[id] {
                        Some(acc) => acc.add_assign(&t)?,
                        slot => *slot = Some(t),
                    }
                }
                Origin::Input => input_grad = Some(g.align(&input_axes(self.d))?.into_data()),
            }
        }
        let factors = factor_grads
            .into_iter()
            .map(|g| g.expect("every factor takes part in the schedule"))
            .collect();
        Ok((factors, input_grad.expect("input takes part in the schedule")))
    }
}

fn accumulate(slot: &mut Option<Labeled>, g: Labeled, axes: &[Axis]) -> Result<()> {
    let t = g.align(axes)?;
    match slot {
        Some(acc) => {
            let mut sum = acc.align(axes)?;
            sum.add_assign(&t)?;
            *slot = Some(Labeled {
                t: sum,
                axes: axes.to_vec(),
            });
        }
        None => *slot = Some(Labeled { t, axes: axes.to_vec() }),
    }
    Ok(())
}
