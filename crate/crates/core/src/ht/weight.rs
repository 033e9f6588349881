use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tree::DimTree;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::{contract, Tensor};

/// Default element cap for dense reconstruction.
pub const DEFAULT_ORACLE_CAP: u128 = 100_000_000;

/// Shapes and ranks of an HT weight, without factor data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtLayout {
    pub m_shape: Vec<usize>,
    pub n_shape: Vec<usize>,
    pub leaf_rank: usize,
    pub internal_rank: usize,
    pub root_rank: usize,
}

impl HtLayout {
    pub fn tree(&self) -> Result<DimTree> {
        check_shapes(&self.m_shape, &self.n_shape)?;
        DimTree::build(self.m_shape.len(), self.leaf_rank, self.internal_rank, self.root_rank)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(param_count_of(&self.tree()?, &self.m_shape, &self.n_shape))
    }
}

/// Number of factor entries: `r_k·m_k·n_k` per leaf plus `r_s·r_s1·r_s2`
/// per internal node. Biases are not part of the weight.
pub fn param_count_of(tree: &DimTree, m_shape: &[usize], n_shape: &[usize]) -> usize {
    (0..tree.nodes().len())
        .map(|id| factor_shape(tree, m_shape, n_shape, id).iter().product::<usize>())
        .sum()
}

/// `[r, m_k, n_k]` for a leaf, `[r, r_left, r_right]` for an internal node.
pub fn factor_shape(tree: &DimTree, m_shape: &[usize], n_shape: &[usize], id: usize) -> [usize; 3] {
    let node = tree.node(id);
    match node.children {
        None => [node.rank, m_shape[node.first], n_shape[node.first]],
        Some((l, r)) => [node.rank, tree.node(l).rank, tree.node(r).rank],
    }
}

fn check_shapes(m_shape: &[usize], n_shape: &[usize]) -> Result<()> {
    if m_shape.is_empty() || m_shape.len() != n_shape.len() {
        return Err(Error::Config(format!(
            "m_shape and n_shape must be non-empty and of equal length ({} vs {})",
            m_shape.len(),
            n_shape.len()
        )));
    }
    if m_shape.iter().chain(n_shape).any(|&v| v == 0) {
        return Err(Error::Config("mode lengths must be >= 1".into()));
    }
    Ok(())
}

/// Hierarchical Tucker representation of a `(g·∏m) × ∏n` weight matrix.
///
/// Factors are stored one per tree node in preorder: leaves hold frames of
/// shape `r_k × m_k × n_k`, internal nodes hold transfer tensors of shape
/// `r_s × r_left × r_right`. The root rank `g` becomes the leading output
/// mode, so rows are ordered `(g, i_1, …, i_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTWeight {
    tree: DimTree,
    m_shape: Vec<usize>,
    n_shape: Vec<usize>,
    factors: Vec<Tensor>,
}

impl HTWeight {
    pub fn from_factors(tree: DimTree, m_shape: Vec<usize>, n_shape: Vec<usize>, factors: Vec<Tensor>) -> Result<Self> {
        check_shapes(&m_shape, &n_shape)?;
        if m_shape.len() != tree.d() {
            return Err(Error::Config(format!(
                "tree has d = {} but shapes have {} modes",
                tree.d(),
                m_shape.len()
            )));
        }
        if factors.len() != tree.nodes().len() {
            return Err(Error::Size {
                what: "factor count",
                expected: tree.nodes().len(),
                actual: factors.len(),
            });
        }
        for (id, f) in factors.iter().enumerate() {
            let expected = factor_shape(&tree, &m_shape, &n_shape, id);
            if f.shape() != expected {
                return Err(Error::Config(format!(
                    "factor of node {id} has shape {:?}, expected {expected:?}",
                    f.shape()
                )));
            }
        }
        Ok(Self {
            tree,
            m_shape,
            n_shape,
            factors,
        })
    }

    pub fn zeros(layout: &HtLayout) -> Result<Self> {
        let tree = layout.tree()?;
        let factors = (0..tree.nodes().len())
            .map(|id| Tensor::zeros(&factor_shape(&tree, &layout.m_shape, &layout.n_shape, id)))
            .collect();
        Self::from_factors(tree, layout.m_shape.clone(), layout.n_shape.clone(), factors)
    }

    /// Gaussian initialization: leaf entries have variance `1/n_k`,
    /// transfer entries `1/(r_left·r_right)`. Nodes are filled in preorder
    /// from a single seeded stream.
    pub fn init(layout: &HtLayout, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(layout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in 0..w.factors.len() {
            let [_, a, b] = factor_shape(&w.tree, &w.m_shape, &w.n_shape, id);
            let var = if w.tree.node(id).is_leaf() {
                1.0 / b as f64
            } else {
                1.0 / (a * b) as f64
            };
            let normal = Normal::new(0.0, var.sqrt()).expect("finite positive std");
            for v in w.factors[id].data_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(w)
    }

    pub fn tree(&self) -> &DimTree {
        &self.tree
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn m_shape(&self) -> &[usize] {
        &self.m_shape
    }

    pub fn n_shape(&self) -> &[usize] {
        &self.n_shape
    }

    pub fn root_rank(&self) -> usize {
        self.tree.root_rank()
    }

    /// `∏ m_k`: output length per root slice.
    pub fn group_len(&self) -> usize {
        self.m_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.root_rank() * self.group_len()
    }

    pub fn input_len(&self) -> usize {
        self.n_shape.iter().product()
    }

    pub fn factors(&self) -> &[Tensor] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [Tensor] {
        &mut self.factors
    }

    pub fn factor(&self, id: usize) -> &Tensor {
        &self.factors[id]
    }

    pub fn factor_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.factors[id]
    }

    /// Frame `U_k` of mode `k`.
    pub fn leaf_frame(&self, k: usize) -> &Tensor {
        &self.factors[self.tree.leaf_of(k)]
    }

    pub fn leaf_frame_mut(&mut self, k: usize) -> &mut Tensor {
        let id = self.tree.leaf_of(k);
        &mut self.factors[id]
    }

    pub fn layout(&self) -> HtLayout {
        let leaf_rank = self.tree.leaves().next().map_or(1, |(_, n)| n.rank);
        let internal_rank = self.tree.internal().find(|&(id, _)| id != 0).map_or(1, |(_, n)| n.rank);
        HtLayout {
            m_shape: self.m_shape.clone(),
            n_shape: self.n_shape.clone(),
            leaf_rank,
            internal_rank,
            root_rank: self.root_rank(),
        }
    }

    pub fn param_count(&self) -> usize {
        param_count_of(&self.tree, &self.m_shape, &self.n_shape)
    }

    pub fn dense_entries(&self) -> u128 {
        self.output_len() as u128 * self.input_len() as u128
    }

    pub fn reconstruct_dense(&self) -> Result<Matrix> {
        self.reconstruct_dense_with_cap(DEFAULT_ORACLE_CAP)
    }

    /// Materializes the dense matrix by forming every node frame
    /// bottom-up. Frames are laid out `(r_s, m_first..m_last, n_first..n_last)`.
    pub fn reconstruct_dense_with_cap(&self, cap: u128) -> Result<Matrix> {
        let entries = self.dense_entries();
        if entries > cap {
            return Err(Error::OracleTooLarge { entries, cap });
        }
        let frame = self.node_frame(self.tree.root())?;
        Matrix::new(self.output_len(), self.input_len(), frame.into_data())
    }

    fn node_frame(&self, id: usize) -> Result<Tensor> {
        let node = self.tree.node(id);
        let Some((l, r)) = node.children else {
            return Ok(self.factors[id].clone());
        };
        let left = self.node_frame(l)?;
        let right = self.node_frame(r)?;
        let a = self.tree.node(l).len();
        let b = self.tree.node(r).len();
        // (r, p, q) x (p, M1, N1) -> (r, q, M1, N1)
        let t = contract(&self.factors[id], &left, &[1], &[0])?;
        let t = contract(&t, &right, &[1], &[0])?;
        // (r, M1, N1, M2, N2) -> (r, M1, M2, N1, N2)
        let axes: Vec<usize> = std::iter::once(0)
            .chain(1..1 + a)
            .chain(1 + 2 * a..1 + 2 * a + b)
            .chain(1 + a..1 + 2 * a)
            .chain(1 + 2 * a + b..1 + 2 * a + 2 * b)
            .collect();
        t.permute(&axes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(m: &[usize], n: &[usize], leaf: usize, internal: usize, root: usize) -> HtLayout {
        HtLayout {
            m_shape: m.to_vec(),
            n_shape: n.to_vec(),
            leaf_rank: leaf,
            internal_rank: internal,
            root_rank: root,
        }
    }

    #[test]
    fn published_parameter_counts() {
        let ucf = layout(&[4, 4, 4, 4], &[16, 16, 16, 15], 14, 12, 4);
        assert_eq!(ucf.param_count().unwrap(), 8_808);
        let yt = layout(&[4, 4, 4, 4], &[16, 16, 16, 15], 14, 11, 4);
        assert_eq!(yt.param_count().unwrap(), 8_324);
        let ucf_cnn = layout(&[4, 8, 8, 8], &[8, 8, 8, 8], 9, 6, 4);
        assert_eq!(ucf_cnn.param_count().unwrap(), 3_132);
        let hmdb = layout(&[4, 8, 8, 8], &[8, 8, 8, 8], 14, 12, 4);
        assert_eq!(hmdb.param_count().unwrap(), 8_416);
    }

    #[test]
    fn count_does_not_depend_on_seed() {
        let ucf = layout(&[4, 4, 4, 4], &[16, 16, 16, 15], 14, 12, 4);
        for seed in [0, 1, 99] {
            assert_eq!(HTWeight::init(&ucf, seed).unwrap().param_count(), 8_808);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let l = layout(&[2, 3], &[3, 2], 2, 2, 3);
        let a = HTWeight::init(&l, 7).unwrap();
        assert_eq!(a, HTWeight::init(&l, 7).unwrap());
        assert_ne!(a, HTWeight::init(&l, 8).unwrap());
    }

    #[test]
    fn all_ones_rank_one() {
        let l = layout(&[2, 2], &[2, 2], 1, 1, 1);
        let mut w = HTWeight::zeros(&l).unwrap();
        for f in w.factors_mut() {
            f.data_mut().fill(1.0);
        }
        let dense = w.reconstruct_dense().unwrap();
        assert_eq!((dense.rows(), dense.cols()), (4, 4));
        assert!(dense.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_leaf_annihilates() {
        let l = layout(&[2, 3, 2], &[3, 2, 2], 2, 2, 2);
        let mut w = HTWeight::init(&l, 3).unwrap();
        w.leaf_frame_mut(1).data_mut().fill(0.0);
        assert!(w.reconstruct_dense().unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let ucf = layout(&[4, 4, 4, 4], &[16, 16, 16, 15], 14, 12, 4);
        let w = HTWeight::zeros(&ucf).unwrap();
        assert!(matches!(
            w.reconstruct_dense_with_cap(1_000_000),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn rejects_mismatched_factor() {
        let l = layout(&[2, 2], &[2, 2], 1, 1, 1);
        let w = HTWeight::zeros(&l).unwrap();
        let mut factors = w.factors().to_vec();
        factors[1] = Tensor::zeros(&[1, 2, 3]);
        assert!(HTWeight::from_factors(w.tree().clone(), vec![2, 2], vec![2, 2], factors).is_err());
    }
}
