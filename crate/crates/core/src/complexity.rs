//! Exact parameter counts of tensorized linear layers under the TT, TR, BT
//! and HT factorizations, and a CSV rank sweep.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    TensorTrain,
    TensorRing,
    BlockTerm,
    HierarchicalTucker,
}

impl Scheme {
    /// Column order of the rank sweep.
    pub const ALL: [Scheme; 4] = [
        Scheme::TensorTrain,
        Scheme::TensorRing,
        Scheme::BlockTerm,
        Scheme::HierarchicalTucker,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Scheme::TensorTrain => "tt",
            Scheme::TensorRing => "tr",
            Scheme::BlockTerm => "bt",
            Scheme::HierarchicalTucker => "ht",
        }
    }
}

/// A `∏m × ∏n` layer tensorized into `d` modes with a uniform rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorizationSpec {
    pub m_shape: Vec<usize>,
    pub n_shape: Vec<usize>,
    pub rank: usize,
    /// CP rank of the block-term format.
    pub bt_cp_rank: usize,
}

impl FactorizationSpec {
    pub fn new(m_shape: Vec<usize>, n_shape: Vec<usize>, rank: usize) -> Result<Self> {
        if m_shape.is_empty() || m_shape.len() != n_shape.len() {
            return Err(Error::Config(
                "m_shape and n_shape must be non-empty and equal length".into(),
            ));
        }
        if rank == 0 || m_shape.iter().chain(&n_shape).any(|&v| v == 0) {
            return Err(Error::Config("rank and mode lengths must be >= 1".into()));
        }
        Ok(Self {
            m_shape,
            n_shape,
            rank,
            bt_cp_rank: 1,
        })
    }

    pub fn with_rank(&self, rank: usize) -> Self {
        Self { rank, ..self.clone() }
    }

    pub fn d(&self) -> usize {
        self.m_shape.len()
    }

    fn mode_products(&self) -> impl Iterator<Item = u128> + '_ {
        self.m_shape.iter().zip(&self.n_shape).map(|(&m, &n)| (m * n) as u128)
    }
}

/// Exact factor-entry count of one scheme.
///
/// - TT: `Σ_k r_{k-1} m_k n_k r_k` with border ranks 1
/// - TR: `Σ_k r m_k n_k r`
/// - BT: `C (Σ_k r m_k n_k + r^d)`
/// - HT: `Σ_k r m_k n_k + (d − 2) r³ + r²` (root rank 1)
pub fn scheme_params(spec: &FactorizationSpec, scheme: Scheme) -> u128 {
    let r = spec.rank as u128;
    let d = spec.d();
    match scheme {
        Scheme::TensorTrain => spec
            .mode_products()
            .enumerate()
            .map(|(k, mn)| {
                let left = if k == 0 { 1 } else { r };
                let right = if k == d - 1 { 1 } else { r };
                left * mn * right
            })
            .sum(),
        Scheme::TensorRing => spec.mode_products().map(|mn| r * mn * r).sum(),
        Scheme::BlockTerm => {
            let c = spec.bt_cp_rank as u128;
            c * (spec.mode_products().map(|mn| r * mn).sum::<u128>() + r.pow(d as u32))
        }
        Scheme::HierarchicalTucker => {
            spec.mode_products().map(|mn| r * mn).sum::<u128>() + (d as u128 - 2) * r.pow(3) + r * r
        }
    }
}

pub fn rank_sweep_rows(spec: &FactorizationSpec, ranks: std::ops::RangeInclusive<usize>) -> Vec<(usize, [u128; 4])> {
    ranks
        .map(|r| {
            let s = spec.with_rank(r);
            (r, Scheme::ALL.map(|scheme| scheme_params(&s, scheme)))
        })
        .collect()
}

/// CSV with header `rank,tt,tr,bt,ht` and one row per rank.
pub fn emit_rank_sweep(spec: &FactorizationSpec, ranks: std::ops::RangeInclusive<usize>) -> Result<String> {
    if ranks.is_empty() || *ranks.start() == 0 {
        return Err(Error::Argument("rank range must be non-empty and start at >= 1".into()));
    }
    let mut out = String::from("rank");
    for s in Scheme::ALL {
        out.push(',');
        out.push_str(s.column());
    }
    out.push('\n');
    for (r, counts) in rank_sweep_rows(spec, ranks) {
        write!(out, "{r}").unwrap();
        for c in counts {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Shapes used for the scheme comparison sweep (a 57,600 × 256 layer).
pub fn sweep_reference_spec() -> FactorizationSpec {
    FactorizationSpec::new(vec![4, 4, 2, 4, 2], vec![8, 10, 10, 9, 8], 1).expect("valid shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ht::HtLayout;

    #[test]
    fn smallest_tensor_train() {
        let s = FactorizationSpec::new(vec![1, 1], vec![1, 1], 1).unwrap();
        assert_eq!(scheme_params(&s, Scheme::TensorTrain), 2);
    }

    #[test]
    fn reference_sweep_at_rank_two() {
        let s = sweep_reference_spec().with_rank(2);
        assert_eq!(scheme_params(&s, Scheme::HierarchicalTucker), 316);
        assert_eq!(scheme_params(&s, Scheme::TensorTrain), 480);
        assert_eq!(scheme_params(&s, Scheme::TensorRing), 576);
        assert_eq!(scheme_params(&s, Scheme::BlockTerm), 320);
    }

    #[test]
    fn ht_formula_matches_tree_count() {
        for d in 2..=6 {
            for r in 1..=8 {
                let m: Vec<usize> = (0..d).map(|k| 2 + k % 3).collect();
                let n: Vec<usize> = (0..d).map(|k| 3 + (k * 5) % 4).collect();
                let spec = FactorizationSpec::new(m.clone(), n.clone(), r).unwrap();
                let layout = HtLayout {
                    m_shape: m,
                    n_shape: n,
                    leaf_rank: r,
                    internal_rank: r,
                    root_rank: 1,
                };
                assert_eq!(
                    scheme_params(&spec, Scheme::HierarchicalTucker),
                    layout.param_count().unwrap() as u128
                );
            }
        }
    }

    #[test]
    fn ht_fewest_for_ranks_two_and_up() {
        for (r, [tt, tr, bt, ht]) in rank_sweep_rows(&sweep_reference_spec(), 2..=16) {
            assert!(ht <= tt && ht <= tr && ht <= bt, "rank {r}");
        }
    }

    #[test]
    fn growth_is_bounded_by_table_orders() {
        let spec = sweep_reference_spec();
        for r in [4usize, 8, 16, 32] {
            let s = spec.with_rank(r);
            let r2 = (r * r) as u128;
            let r3 = r2 * r as u128;
            assert!(scheme_params(&s, Scheme::TensorTrain) <= 144 * r2);
            assert!(scheme_params(&s, Scheme::TensorRing) <= 144 * r2);
            assert!(scheme_params(&s, Scheme::HierarchicalTucker) <= 144 * r as u128 + 4 * r3);
        }
    }

    #[test]
    fn cp_rank_scales_block_term() {
        let mut s = sweep_reference_spec().with_rank(3);
        let base = scheme_params(&s, Scheme::BlockTerm);
        s.bt_cp_rank = 3;
        assert_eq!(scheme_params(&s, Scheme::BlockTerm), 3 * base);
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let spec = sweep_reference_spec();
        let one = emit_rank_sweep(&spec, 3..=3).unwrap();
        assert_eq!(one.lines().count(), 2);
        assert_eq!(one.lines().next(), Some("rank,tt,tr,bt,ht"));

        let csv = emit_rank_sweep(&spec, 1..=16).unwrap();
        let rows = rank_sweep_rows(&spec, 1..=16);
        let mut prev: Option<Vec<u128>> = None;
        for (line, (r, counts)) in csv.lines().skip(1).zip(&rows) {
            let parsed: Vec<u128> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(parsed[0], *r as u128);
            assert_eq!(&parsed[1..], counts);
            if let Some(p) = &prev {
                assert!(parsed[1..].iter().zip(p).all(|(a, b)| a > b));
            }
            prev = Some(parsed[1..].to_vec());
        }
        let (lo, hi) = (2, 1);
        assert!(emit_rank_sweep(&spec, lo..=hi).is_err());
    }
}
