use crate::error::{Error, Result};
use crate::tensor::ModeIndexMap;

/// One node of a dimension tree, covering modes `first..=last` (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimNode {
    pub first: usize,
    pub last: usize,
    pub rank: usize,
    pub parent: Option<usize>,
    /// Left and right child ids; `None` for leaves.
    pub children: Option<(usize, usize)>,
}

impl DimNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

/// Balanced binary tree over contiguous dimension sets, stored in preorder.
/// Node 0 is the root and covers every mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimTree {
    d: usize,
    nodes: Vec<DimNode>,
}

impl DimTree {
    /// Builds the balanced tree; the left child of `[a..=b]` takes the
    /// ceiling half of its modes.
    pub fn build(d: usize, leaf_rank: usize, internal_rank: usize, root_rank: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(format!("dimension tree needs d >= 2, got {d}")));
        }
        if leaf_rank == 0 || internal_rank == 0 || root_rank == 0 {
            return Err(Error::Config("hierarchical ranks must be >= 1".into()));
        }
        let mut nodes = Vec::with_capacity(2 * d - 1);
        grow(&mut nodes, 0, d - 1, None);
        for (id, node) in nodes.iter_mut().enumerate() {
            node.rank = if id == 0 {
                root_rank
            } else if node.is_leaf() {
                leaf_rank
            } else {
                internal_rank
            };
        }
        Ok(Self { d, nodes })
    }

    /// Same topology as [`DimTree::build`] with an explicit preorder rank list.
    pub fn with_ranks(d: usize, ranks: &[usize]) -> Result<Self> {
        let mut tree = Self::build(d, 1, 1, 1)?;
        if ranks.len() != tree.nodes.len() {
            return Err(Error::Size {
                what: "rank list",
                expected: tree.nodes.len(),
                actual: ranks.len(),
            });
        }
        if ranks.contains(&0) {
            return Err(Error::Config("hierarchical ranks must be >= 1".into()));
        }
        for (node, &r) in tree.nodes.iter_mut().zip(ranks) {
            node.rank = r;
        }
        Ok(tree)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> &[DimNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &DimNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn root_rank(&self) -> usize {
        self.nodes[0].rank
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.rank).collect()
    }

    /// Node id of the leaf holding mode `k`.
    pub fn leaf_of(&self, k: usize) -> usize {
        self.nodes
            .iter()
            .position(|n| n.is_leaf() && n.first == k)
            .expect("every mode has a leaf")
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &DimNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_leaf())
    }

    pub fn internal(&self) -> impl Iterator<Item = (usize, &DimNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| !n.is_leaf())
    }

    pub fn mode_map(&self, id: usize) -> ModeIndexMap {
        let n = &self.nodes[id];
        ModeIndexMap::new(n.first, n.last, self.d).expect("tree nodes lie within 0..d")
    }
}

fn grow(nodes: &mut Vec<DimNode>, first: usize, last: usize, parent: Option<usize>) -> usize {
    let id = nodes.len();
    nodes.push(DimNode {
        first,
        last,
        rank: 0,
        parent,
        children: None,
    });
    if first < last {
        let split = first + (last - first + 1).div_ceil(2) - 1;
        let left = grow(nodes, first, split, Some(id));
        let right = grow(nodes, split + 1, last, Some(id));
        nodes[id].children = Some((left, right));
    }
    id
}
