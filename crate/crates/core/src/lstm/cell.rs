use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::HTGradients;
use crate::ht::{htl_forward_batch, htl_forward_recorded, HTWeight, HtLayout, HtTape};
use crate::matrix::Matrix;

/// Number of gates stacked in the projection output, in order f, u, c, o.
pub const GATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellMode {
    /// The whole stacked `[W V]` matrix is one HT weight.
    Full,
    /// HT weight on the input block only; dense recurrent matrix.
    InputOnly,
    /// Uncompressed baseline.
    Dense,
}

impl CellMode {
    pub fn name(self) -> &'static str {
        match self {
            CellMode::Full => "full",
            CellMode::InputOnly => "input-only",
            CellMode::Dense => "dense",
        }
    }
}

impl std::str::FromStr for CellMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CellMode::Full),
            "input-only" => Ok(CellMode::InputOnly),
            "dense" => Ok(CellMode::Dense),
            other => Err(Error::Config(format!("unknown cell mode '{other}'"))),
        }
    }
}

/// Linear map from `I[t] = [x ∥ 0_pad ∥ h]` to the stacked gate
/// pre-activations (`4H`, gate-major).
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Full(HTWeight),
    /// `input` covers `[x ∥ 0_pad]`; `recurrent` is `4H × H`.
    InputOnly {
        input: HTWeight,
        recurrent: Matrix,
    },
    /// `4H × (N_x + pad + H)`.
    Dense(Matrix),
}

/// LSTM cell whose gate pre-activations come from a single [`Projection`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub projection: Projection,
    /// `4H` biases, gate-major (f, u, c, o).
    pub bias: Vec<f64>,
    input_size: usize,
    hidden_size: usize,
    pad_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

fn default_bias(hidden: usize) -> Vec<f64> {
    let mut b = vec![0.0; GATES * hidden];
    b[..hidden].fill(1.0);
    b
}

fn gaussian_matrix(rows: usize, cols: usize, var: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, var.sqrt()).expect("finite std");
    let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
    Matrix::new(rows, cols, data).expect("sized")
}

/// Builds an HT-decomposed cell. `H = ∏m_k`; the HT root rank is the gate count.
pub fn make_cell(
    input_size: usize,
    n_shape: &[usize],
    m_shape: &[usize],
    leaf_rank: usize,
    internal_rank: usize,
    mode: CellMode,
    seed: u64,
) -> Result<LstmCell> {
    let hidden: usize = m_shape.iter().product();
    let layout = HtLayout {
        m_shape: m_shape.to_vec(),
        n_shape: n_shape.to_vec(),
        leaf_rank,
        internal_rank,
        root_rank: GATES,
    };
    let columns: usize = n_shape.iter().product();
    let required = match mode {
        CellMode::Full => input_size + hidden,
        CellMode::InputOnly => input_size,
        CellMode::Dense => return Err(Error::Config("dense cells are built with LstmCell::dense".into())),
    };
    if input_size == 0 {
        return Err(Error::Config("input size must be >= 1".into()));
    }
    if columns < required {
        return Err(Error::Config(format!(
            "n_shape product {columns} is too small: needs at least {required}"
        )));
    }
    let weight = HTWeight::init(&layout, seed)?;
    let projection = match mode {
        CellMode::Full => Projection::Full(weight),
        _ => Projection::InputOnly {
            input: weight,
            recurrent: gaussian_matrix(GATES * hidden, hidden, 1.0 / hidden as f64, seed ^ 0x5EED_0001),
        },
    };
    Ok(LstmCell {
        projection,
        bias: default_bias(hidden),
        input_size,
        hidden_size: hidden,
        pad_len: columns - required,
    })
}

/// Leaf and internal ranks, each at most `max_rank`, whose HT weight count
/// is the largest not exceeding `budget`. Ties prefer the smaller leaf rank.
pub fn matched_ranks(n_shape: &[usize], m_shape: &[usize], budget: usize, max_rank: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, (usize, usize))> = None;
    for leaf in 1..=max_rank {
        for internal in 1..=max_rank {
            let layout = HtLayout {
                m_shape: m_shape.to_vec(),
                n_shape: n_shape.to_vec(),
                leaf_rank: leaf,
                internal_rank: internal,
                root_rank: GATES,
            };
            let Ok(count) = layout.param_count() else { return None };
            if count <= budget && best.is_none_or(|(c, _)| count > c) {
                best = Some((count, (leaf, internal)));
            }
        }
    }
    best.map(|(_, ranks)| ranks)
}

impl LstmCell {
    /// Uncompressed cell with a `4H × (N_x + H)` matrix.
    pub fn dense(input_size: usize, hidden_size: usize, seed: u64) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::Config("dense cell sizes must be >= 1".into()));
        }
        let cols = input_size + hidden_size;
        Ok(Self {
            projection: Projection::Dense(gaussian_matrix(GATES * hidden_size, cols, 1.0 / cols as f64, seed)),
            bias: default_bias(hidden_size),
            input_size,
            hidden_size,
            pad_len: 0,
        })
    }

    pub fn from_parts(projection: Projection, bias: Vec<f64>, input_size: usize, hidden_size: usize) -> Result<Self> {
        let g = GATES * hidden_size;
        let pad_len = match &projection {
            Projection::Full(w) => {
                check_ht(w, g)?;
                w.input_len().checked_sub(input_size + hidden_size)
            }
            Projection::InputOnly { input, recurrent } => {
                check_ht(input, g)?;
                if (recurrent.rows(), recurrent.cols()) != (g, hidden_size) {
                    return Err(Error::Config("recurrent matrix must be 4H × H".into()));
                }
                input.input_len().checked_sub(input_size)
            }
            Projection::Dense(m) => {
                if m.rows() != g {
                    return Err(Error::Config("dense matrix must have 4H rows".into()));
                }
                m.cols().checked_sub(input_size + hidden_size)
            }
        }
        .ok_or_else(|| Error::Config("projection input is shorter than the cell input".into()))?;
        if bias.len() != g {
            return Err(Error::Size {
                what: "bias",
                expected: g,
                actual: bias.len(),
            });
        }
        Ok(Self {
            projection,
            bias,
            input_size,
            hidden_size,
            pad_len,
        })
    }

    pub fn mode(&self) -> CellMode {
        match self.projection {
            Projection::Full(_) => CellMode::Full,
            Projection::InputOnly { .. } => CellMode::InputOnly,
            Projection::Dense(_) => CellMode::Dense,
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn pad_len(&self) -> usize {
        self.pad_len
    }

    pub fn ht_weight(&self) -> Option<&HTWeight> {
        match &self.projection {
            Projection::Full(w) | Projection::InputOnly { input: w, .. } => Some(w),
            Projection::Dense(_) => None,
        }
    }

    /// Projection parameters, biases excluded.
    pub fn weight_param_count(&self) -> usize {
        match &self.projection {
            Projection::Full(w) => w.param_count(),
            Projection::InputOnly { input, recurrent } => input.param_count() + recurrent.data().len(),
            Projection::Dense(m) => m.data().len(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_param_count() + self.bias.len()
    }

    /// The same cell with its projection materialized as a dense matrix over
    /// `[x ∥ 0_pad ∥ h]`.
    pub fn dense_equivalent(&self) -> Result<LstmCell> {
        let matrix = match &self.projection {
            Projection::Full(w) => w.reconstruct_dense()?,
            Projection::InputOnly { input, recurrent } => {
                let wx = input.reconstruct_dense()?;
                let cols = wx.cols() + recurrent.cols();
                let mut data = Vec::with_capacity(wx.rows() * cols);
                for r in 0..wx.rows() {
                    data.extend_from_slice(wx.row(r));
                    data.extend_from_slice(recurrent.row(r));
                }
                Matrix::new(wx.rows(), cols, data)?
            }
            Projection::Dense(m) => m.clone(),
        };
        Ok(LstmCell {
            projection: Projection::Dense(matrix),
            bias: self.bias.clone(),
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            pad_len: self.pad_len,
        })
    }

    /// `[x ∥ 0_pad ∥ h]` for every sample, or `[x ∥ 0_pad]` when `with_h` is false.
    fn assemble(&self, xs: &[f64], hs: &[f64], batch: usize, with_h: bool) -> Vec<f64> {
        let (nx, h) = (self.input_size, self.hidden_size);
        let width = nx + self.pad_len + if with_h { h } else { 0 };
        let mut out = vec![0.0; batch * width];
        for b in 0..batch {
            let row = &mut out[b * width..(b + 1) * width];
            row[..nx].copy_from_slice(&xs[b * nx..(b + 1) * nx]);
            if with_h {
                row[width - h..].copy_from_slice(&hs[b * h..(b + 1) * h]);
            }
        }
        out
    }

    fn project(
        &self,
        xs: &[f64],
        hs: &[f64],
        batch: usize,
        record: bool,
    ) -> Result<(Vec<f64>, Option<ProjectionTape>)> {
        match &self.projection {
            Projection::Full(w) => {
                let input = self.assemble(xs, hs, batch, true);
                if record {
                    let (z, tape) = htl_forward_recorded(w, &input, batch)?;
                    Ok((z, Some(ProjectionTape::Ht(tape))))
                } else {
                    Ok((htl_forward_batch(w, &input, batch)?, None))
                }
            }
            Projection::InputOnly { input: w, recurrent } => {
                let input = self.assemble(xs, hs, batch, false);
                let (mut z, tape) = if record {
                    let (z, t) = htl_forward_recorded(w, &input, batch)?;
                    (z, Some(t))
                } else {
                    (htl_forward_batch(w, &input, batch)?, None)
                };
                let (g, h) = (recurrent.rows(), self.hidden_size);
                for b in 0..batch {
                    let zr = recurrent.matvec(&hs[b * h..(b + 1) * h])?;
                    for (o, v) in z[b * g..(b + 1) * g].iter_mut().zip(zr) {
                        *o += v;
                    }
                }
                Ok((z, tape.map(|t| ProjectionTape::InputOnly(t, hs.to_vec()))))
            }
            Projection::Dense(m) => {
                let input = self.assemble(xs, hs, batch, true);
                let mut z = Vec::with_capacity(batch * m.rows());
                for b in 0..batch {
                    z.extend(m.matvec(&input[b * m.cols()..(b + 1) * m.cols()])?);
                }
                Ok((z, record.then_some(ProjectionTape::Dense(input))))
            }
        }
    }

    /// Accumulates projection gradients for `dz` into `grads` and returns the
    /// gradients with respect to `xs` and `hs`.
    fn project_backward(
        &self,
        tape: &ProjectionTape,
        dz: &[f64],
        batch: usize,
        grads: &mut CellGrads,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nx, h, pad) = (self.input_size, self.hidden_size, self.pad_len);
        let mut dxs = vec![0.0; batch * nx];
        let mut dhs = vec![0.0; batch * h];
        match (tape, &self.projection) {
            (ProjectionTape::Ht(t), Projection::Full(_)) => {
                let (factors, dinput) = t.backward(dz)?;
                grads.ht.as_mut().expect("HT gradients").add_factors(&factors)?;
                let width = nx + pad + h;
                for b in 0..batch {
                    let row = &dinput[b * width..(b + 1) * width];
                    dxs[b * nx..(b + 1) * nx].copy_from_slice(&row[..nx]);
                    dhs[b * h..(b + 1) * h].copy_from_slice(&row[width - h..]);
                }
            }
            (ProjectionTape::InputOnly(t, hs), Projection::InputOnly { recurrent, .. }) => {
                let (factors, dinput) = t.backward(dz)?;
                grads.ht.as_mut().expect("HT gradients").add_factors(&factors)?;
                let width = nx + pad;
                let g = recurrent.rows();
                let dv = grads.matrix.as_mut().expect("recurrent gradient");
                for b in 0..batch {
                    dxs[b * nx..(b + 1) * nx].copy_from_slice(&dinput[b * width..b * width + nx]);
                    let dzb = &dz[b * g..(b + 1) * g];
                    let hb = &hs[b * h..(b + 1) * h];
                    outer_accumulate(dv, dzb, hb);
                    let dh = recurrent.matvec_transposed(dzb)?;
                    dhs[b * h..(b + 1) * h].copy_from_slice(&dh);
                }
            }
            (ProjectionTape::Dense(input), Projection::Dense(m)) => {
                let (g, width) = (m.rows(), m.cols());
                let dw = grads.matrix.as_mut().expect("dense gradient");
                for b in 0..batch {
                    let dzb = &dz[b * g..(b + 1) * g];
                    outer_accumulate(dw, dzb, &input[b * width..(b + 1) * width]);
                    let di = m.matvec_transposed(dzb)?;
                    dxs[b * nx..(b + 1) * nx].copy_from_slice(&di[..nx]);
                    dhs[b * h..(b + 1) * h].copy_from_slice(&di[width - h..]);
                }
            }
            _ => unreachable!("tape recorded by a different projection"),
        }
        Ok((dxs, dhs))
    }

    /// One time step for a batch. `xs` is `batch × N_x`; states are `batch × H`.
    pub(crate) fn step_batch(
        &self,
        xs: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        batch: usize,
        record: bool,
    ) -> Result<(Vec<f64>, Vec<f64>, Option<StepCache>)> {
        let (nx, h) = (self.input_size, self.hidden_size);
        if xs.len() != batch * nx {
            return Err(Error::Size {
                what: "LSTM step input",
                expected: batch * nx,
                actual: xs.len(),
            });
        }
        if h_prev.len() != batch * h || c_prev.len() != batch * h {
            return Err(Error::Size {
                what: "LSTM state",
                expected: batch * h,
                actual: h_prev.len().min(c_prev.len()),
            });
        }
        let (z, tape) = self.project(xs, h_prev, batch, record)?;
        let g = GATES * h;
        let mut acts = vec![0.0; batch * g];
        let mut c = vec![0.0; batch * h];
        let mut tanh_c = vec![0.0; batch * h];
        let mut h_new = vec![0.0; batch * h];
        for b in 0..batch {
            let zb = &z[b * g..(b + 1) * g];
            let ab = &mut acts[b * g..(b + 1) * g];
            for k in 0..h {
                let f = sigmoid(zb[k] + self.bias[k]);
                let u = sigmoid(zb[h + k] + self.bias[h + k]);
                let cand = (zb[2 * h + k] + self.bias[2 * h + k]).tanh();
                let o = sigmoid(zb[3 * h + k] + self.bias[3 * h + k]);
                let cell = f * c_prev[b * h + k] + u * cand;
                let tc = cell.tanh();
                ab[k] = f;
                ab[h + k] = u;
                ab[2 * h + k] = cand;
                ab[3 * h + k] = o;
                c[b * h + k] = cell;
                tanh_c[b * h + k] = tc;
                h_new[b * h + k] = o * tc;
            }
        }
        let cache = tape.map(|tape| StepCache {
            tape,
            acts,
            c_prev: c_prev.to_vec(),
            tanh_c,
        });
        Ok((h_new, c, cache))
    }

    /// Backward through one step. Takes the gradients flowing into `h[t]` and
    /// `c[t]`; returns those for `h[t−1]`, `c[t−1]` and `x[t]`.
    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        batch: usize,
        grads: &mut CellGrads,
    ) -> Result<StepBackward> {
        let h = self.hidden_size;
        let g = GATES * h;
        let mut dz = vec![0.0; batch * g];
        let mut dc_prev = vec![0.0; batch * h];
        for b in 0..batch {
            let a = &cache.acts[b * g..(b + 1) * g];
            for k in 0..h {
                let i = b * h + k;
                let (f, u, cand, o) = (a[k], a[h + k], a[2 * h + k], a[3 * h + k]);
                let tc = cache.tanh_c[i];
                let dct = dc[i] + dh[i] * o * (1.0 - tc * tc);
                let dzb = &mut dz[b * g..(b + 1) * g];
                dzb[k] = dct * cache.c_prev[i] * f * (1.0 - f);
                dzb[h + k] = dct * cand * u * (1.0 - u);
                dzb[2 * h + k] = dct * u * (1.0 - cand * cand);
                dzb[3 * h + k] = dh[i] * tc * o * (1.0 - o);
                dc_prev[i] = dct * f;
            }
            for (gb, d) in grads.bias.iter_mut().zip(&dz[b * g..(b + 1) * g]) {
                *gb += d;
            }
        }
        let (dx, dh_prev) = self.project_backward(&cache.tape, &dz, batch, grads)?;
        Ok(StepBackward { dh_prev, dc_prev, dx })
    }
}

fn check_ht(w: &HTWeight, outputs: usize) -> Result<()> {
    if w.root_rank() != GATES || w.output_len() != outputs {
        return Err(Error::Config(format!(
            "HT weight must have root rank {GATES} and {outputs} outputs"
        )));
    }
    Ok(())
}

fn outer_accumulate(m: &mut Matrix, left: &[f64], right: &[f64]) {
    let cols = m.cols();
    for (r, &l) in left.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        for (o, &v) in m.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(right) {
            *o += l * v;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub(crate) enum ProjectionTape {
    Ht(HtTape),
    InputOnly(HtTape, Vec<f64>),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    tape: ProjectionTape,
    acts: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub(crate) struct StepBackward {
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
    pub dx: Vec<f64>,
}

/// Gradient buffers for an [`LstmCell`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrads {
    /// HT factor gradients (`input` left empty).
    pub ht: Option<HTGradients>,
    /// Recurrent matrix gradient (input-only) or dense matrix gradient.
    pub matrix: Option<Matrix>,
    pub bias: Vec<f64>,
}

impl CellGrads {
    pub fn zeros_like(cell: &LstmCell) -> Self {
        let ht_zeros = |w: &HTWeight| HTGradients {
            input: Vec::new(),
            ..HTGradients::zeros_like(w)
        };
        let (ht, matrix) = match &cell.projection {
            Projection::Full(w) => (Some(ht_zeros(w)), None),
            Projection::InputOnly { input, recurrent } => (
                Some(ht_zeros(input)),
                Some(Matrix::zeros(recurrent.rows(), recurrent.cols())),
            ),
            Projection::Dense(m) => (None, Some(Matrix::zeros(m.rows(), m.cols()))),
        };
        Self {
            ht,
            matrix,
            bias: vec![0.0; cell.bias.len()],
        }
    }

    /// Flat views in the same order as [`LstmCell::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(ht) = &self.ht {
            out.extend(ht.factors.iter().map(|f| f.data()));
        }
        if let Some(m) = &self.matrix {
            out.push(m.data());
        }
        out.push(&self.bias);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(ht) = &mut self.ht {
            out.extend(ht.factors.iter_mut().map(|f| f.data_mut()));
        }
        if let Some(m) = &mut self.matrix {
            out.push(m.data_mut());
        }
        out.push(&mut self.bias);
        out
    }
}

impl LstmCell {
    /// Named parameter blocks: HT factors in preorder (`ht.node<id>`), then the
    /// recurrent or dense matrix, then the biases.
    pub fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        match &mut self.projection {
            Projection::Full(w) => {
                for (id, f) in w.factors_mut().iter_mut().enumerate() {
                    out.push((format!("ht.node{id}"), f.data_mut()));
                }
            }
            Projection::InputOnly { input, recurrent } => {
                for (id, f) in input.factors_mut().iter_mut().enumerate() {
                    out.push((format!("ht.node{id}"), f.data_mut()));
                }
                out.push(("recurrent".into(), recurrent.data_mut()));
            }
            Projection::Dense(m) => out.push(("dense".into(), m.data_mut())),
        }
        out.push(("bias".into(), &mut self.bias));
        out
    }
}

/// One LSTM step for a single sequence.
pub fn lstm_step(cell: &LstmCell, x: &[f64], state: &LstmState) -> Result<LstmState> {
    let (h, c, _) = cell.step_batch(x, &state.h, &state.c, 1, false)?;
    Ok(LstmState { h, c })
}
