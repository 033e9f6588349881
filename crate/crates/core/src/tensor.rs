//! Dense multiway arrays and pairwise tensor contraction.
//!
//! Storage is lexicographic with the last index varying fastest. Mode and
//! entry indices in this API are 0-based.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Size {
                what: "tensor data",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// # Panics
    /// If `shape` is empty or has a zero-length mode.
    pub fn zeros(shape: &[usize]) -> Self {
        validate_shape(shape).expect("invalid tensor shape");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, shape);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n);
            acc * n + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Adds `other` elementwise. Shapes must match exactly.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Size {
                what: "tensor addition",
                expected: self.len(),
                actual: other.len(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Reorders modes so that output mode `k` is input mode `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        check_permutation(axes, self.ndim())?;
        if axes.iter().enumerate().all(|(k, &a)| k == a) {
            return Ok(self.clone());
        }
        Ok(self.permute_unchecked(axes))
    }

    fn permute_unchecked(&self, axes: &[usize]) -> Self {
        let src_strides = self.strides();
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let strides: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; shape.len()];
        let mut off = 0usize;
        let last = shape.len() - 1;
        let (inner_n, inner_s) = (shape[last], strides[last]);
        loop {
            for k in 0..inner_n {
                data.push(self.data[off + k * inner_s]);
            }
            // odometer over all but the innermost mode
            let mut m = last;
            loop {
                if m == 0 {
                    return Self { shape, data };
                }
                m -= 1;
                idx[m] += 1;
                off += strides[m];
                if idx[m] < shape[m] {
                    break;
                }
                off -= strides[m] * shape[m];
                idx[m] = 0;
            }
        }
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Argument("tensor shape must be non-empty".into()));
    }
    if let Some(k) = shape.iter().position(|&n| n == 0) {
        return Err(Error::Argument(format!("mode {k} has zero length")));
    }
    Ok(())
}

fn check_permutation(axes: &[usize], ndim: usize) -> Result<()> {
    let mut seen = vec![false; ndim];
    if axes.len() != ndim {
        return Err(Error::Index(format!(
            "permutation of length {} for a {ndim}-mode tensor",
            axes.len()
        )));
    }
    for &a in axes {
        if a >= ndim || std::mem::replace(&mut seen[a], true) {
            return Err(Error::Index(format!("invalid permutation {axes:?}")));
        }
    }
    Ok(())
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Advances a multi-index in lexicographic order (last index fastest),
/// wrapping to all-zeros after the final entry.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Reshapes a flat vector into a tensor of the given shape.
pub fn tensorize(v: &[f64], shape: &[usize]) -> Result<Tensor> {
    Tensor::new(shape.to_vec(), v.to_vec())
}

/// Flattens a tensor in lexicographic order.
pub fn vectorize(t: &Tensor) -> Vec<f64> {
    t.data.clone()
}

/// Sums the product of `a` and `b` over the paired modes.
///
/// The result carries the free modes of `a` in order, followed by the free
/// modes of `b` in order. Contracting every mode yields a one-element tensor
/// of shape `[1]`.
pub fn contract(a: &Tensor, b: &Tensor, a_modes: &[usize], b_modes: &[usize]) -> Result<Tensor> {
    if a_modes.len() != b_modes.len() {
        return Err(Error::Argument(format!(
            "contraction mode lists differ in length ({} vs {})",
            a_modes.len(),
            b_modes.len()
        )));
    }
    check_mode_list(a_modes, a.ndim(), "A")?;
    check_mode_list(b_modes, b.ndim(), "B")?;
    for (&am, &bm) in a_modes.iter().zip(b_modes) {
        if a.shape[am] != b.shape[bm] {
            return Err(Error::Dimension {
                a_mode: am,
                b_mode: bm,
                a_len: a.shape[am],
                b_len: b.shape[bm],
            });
        }
    }

    let a_free: Vec<usize> = (0..a.ndim()).filter(|k| !a_modes.contains(k)).collect();
    let b_free: Vec<usize> = (0..b.ndim()).filter(|k| !b_modes.contains(k)).collect();

    let a_perm: Vec<usize> = a_free.iter().chain(a_modes).copied().collect();
    let b_perm: Vec<usize> = b_modes.iter().chain(&b_free).copied().collect();
    let a_mat = permuted_view(a, &a_perm);
    let b_mat = permuted_view(b, &b_perm);

    let rows: usize = a_free.iter().map(|&k| a.shape[k]).product();
    let inner: usize = a_modes.iter().map(|&k| a.shape[k]).product();
    let cols: usize = b_free.iter().map(|&k| b.shape[k]).product();

    let mut out = vec![0.0; rows * cols];
    gemm(a_mat.as_ref(), b_mat.as_ref(), &mut out, rows, inner, cols);

    let mut shape: Vec<usize> = a_free
        .iter()
        .map(|&k| a.shape[k])
        .chain(b_free.iter().map(|&k| b.shape[k]))
        .collect();
    if shape.is_empty() {
        shape.push(1);
    }
    Ok(Tensor { shape, data: out })
}

fn check_mode_list(modes: &[usize], ndim: usize, which: &str) -> Result<()> {
    for (p, &m) in modes.iter().enumerate() {
        if m >= ndim {
            return Err(Error::Index(format!(
                "mode {m} out of range for {which} with {ndim} modes"
            )));
        }
        if modes[..p].contains(&m) {
            return Err(Error::Index(format!("mode {m} repeated in {which}")));
        }
    }
    Ok(())
}

enum View<'a> {
    Borrowed(&'a [f64]),
    Owned(Vec<f64>),
}

impl AsRef<[f64]> for View<'_> {
    fn as_ref(&self) -> &[f64] {
        match self {
            View::Borrowed(s) => s,
            View::Owned(v) => v,
        }
    }
}

fn permuted_view<'a>(t: &'a Tensor, perm: &[usize]) -> View<'a> {
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        View::Borrowed(&t.data)
    } else {
        View::Owned(t.permute_unchecked(perm).data)
    }
}

/// `out (m×n) += a (m×k) · b (k×n)`, all row-major.
pub(crate) fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
}

/// Contiguous dimension set `[first..=last]` within `d` modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndexMap {
    first: usize,
    last: usize,
    d: usize,
}

impl ModeIndexMap {
    pub fn new(first: usize, last: usize, d: usize) -> Result<Self> {
        if first > last || last >= d {
            return Err(Error::Index(format!("dimension set [{first}..={last}] outside 0..{d}")));
        }
        Ok(Self { first, last, d })
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

/// Selects `(i[first..=last], j[first..=last])` for a node's frame.
pub fn phi_select(map: &ModeIndexMap, i: &[usize], j: &[usize]) -> Result<Vec<usize>> {
    if i.len() != map.d || j.len() != map.d {
        return Err(Error::Index(format!(
            "multi-indices of length {} and {} for d = {}",
            i.len(),
            j.len(),
            map.d
        )));
    }
    Ok(i[map.modes()].iter().chain(&j[map.modes()]).copied().collect())
}
