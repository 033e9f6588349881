//! Binary model file for HT weights.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "FDHT"            magic, 4 bytes
//! version           u16
//! d, g              u32, u32
//! m_1 .. m_d        u32 each
//! n_1 .. n_d        u32 each
//! r_0 .. r_{2d-2}   u32 each, node ranks in preorder (r_0 = g)
//! per node, preorder:
//!   dims            3 × u32   (r, m_k, n_k) for leaves, (r, r_l, r_r) otherwise
//!   payload         f64 × product(dims), last index fastest
//! ```
//!
//! A JSON sidecar duplicates the shapes and ranks for inspection.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tree::DimTree;
use super::weight::{factor_shape, HTWeight};
use crate::error::{Error, ParseError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FDHT";
pub const FORMAT_VERSION: u16 = 1;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new() -> Self {
        Self { buf: Vec::new() }
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ParseError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(ParseError::Truncated { what })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8, ParseError> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &'static str) -> Result<u16, ParseError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<usize, ParseError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    pub(crate) fn u32s(&mut self, n: usize, what: &'static str) -> Result<Vec<usize>, ParseError> {
        (0..n).map(|_| self.u32(what)).collect()
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, ParseError> {
        let bytes = n.checked_mul(8).ok_or(ParseError::Truncated { what })?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(crate) fn write_weight(out: &mut Writer, w: &HTWeight) {
    out.u32(w.d());
    out.u32(w.root_rank());
    for &m in w.m_shape() {
        out.u32(m);
    }
    for &n in w.n_shape() {
        out.u32(n);
    }
    for r in w.tree().ranks() {
        out.u32(r);
    }
    for f in w.factors() {
        for &s in f.shape() {
            out.u32(s);
        }
        out.f64s(f.data());
    }
}

pub(crate) fn read_weight(input: &mut Reader<'_>) -> Result<HTWeight, ParseError> {
    let d = input.u32("mode count")?;
    let g = input.u32("root rank")?;
    if !(2..=64).contains(&d) {
        return Err(ParseError::ShapeInconsistent(format!("mode count {d} outside 2..=64")));
    }
    let m_shape = input.u32s(d, "m_shape")?;
    let n_shape = input.u32s(d, "n_shape")?;
    if m_shape.iter().chain(&n_shape).any(|&v| v == 0) {
        return Err(ParseError::ShapeInconsistent("zero mode length".into()));
    }
    let ranks = input.u32s(2 * d - 1, "node ranks")?;
    if ranks[0] != g {
        return Err(ParseError::ShapeInconsistent(format!(
            "root rank {} in rank list disagrees with header g = {g}",
            ranks[0]
        )));
    }
    let tree = DimTree::with_ranks(d, &ranks).map_err(|e| ParseError::ShapeInconsistent(e.to_string()))?;
    let mut factors = Vec::with_capacity(ranks.len());
    for id in 0..ranks.len() {
        let dims = input.u32s(3, "factor dims")?;
        let expected = factor_shape(&tree, &m_shape, &n_shape, id);
        if dims != expected {
            return Err(ParseError::ShapeInconsistent(format!(
                "node {id} stored as {dims:?} but header implies {expected:?}"
            )));
        }
        let data = input.f64s(dims.iter().product(), "factor payload")?;
        factors.push(Tensor::new(dims, data).map_err(|e| ParseError::ShapeInconsistent(e.to_string()))?);
    }
    HTWeight::from_factors(tree, m_shape, n_shape, factors).map_err(|e| ParseError::ShapeInconsistent(e.to_string()))
}

pub(crate) fn read_preamble(input: &mut Reader<'_>) -> Result<(), ParseError> {
    if input.take(4, "magic")? != MAGIC {
        return Err(ParseError::BadMagic { expected: "FDHT" });
    }
    let version = input.u16("format version")?;
    if version != FORMAT_VERSION {
        return Err(ParseError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub(crate) fn write_preamble(out: &mut Writer) {
    out.bytes(MAGIC);
    out.u16(FORMAT_VERSION);
}

pub fn serialize(w: &HTWeight) -> Vec<u8> {
    let mut out = Writer::new();
    write_preamble(&mut out);
    write_weight(&mut out, w);
    out.finish()
}

pub fn deserialize(bytes: &[u8]) -> Result<HTWeight, ParseError> {
    let mut input = Reader::new(bytes);
    read_preamble(&mut input)?;
    let w = read_weight(&mut input)?;
    if !input.is_empty() {
        return Err(ParseError::ShapeInconsistent("trailing bytes after last factor".into()));
    }
    Ok(w)
}

/// Human-readable duplicate of the binary header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub format: String,
    pub version: u16,
    pub d: usize,
    pub root_rank: usize,
    pub m_shape: Vec<usize>,
    pub n_shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub param_count: usize,
}

impl WeightHeader {
    pub fn of(w: &HTWeight) -> Self {
        Self {
            format: "FDHT".into(),
            version: FORMAT_VERSION,
            d: w.d(),
            root_rank: w.root_rank(),
            m_shape: w.m_shape().to_vec(),
            n_shape: w.n_shape().to_vec(),
            ranks: w.tree().ranks(),
            param_count: w.param_count(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary model and its `<path>.json` sidecar.
pub fn save(w: &HTWeight, path: &Path) -> Result<()> {
    std::fs::write(path, serialize(w))?;
    let header = serde_json::to_string_pretty(&WeightHeader::of(w)).expect("header serializes");
    std::fs::write(sidecar_path(path), header + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<HTWeight> {
    let bytes = std::fs::read(path)?;
    deserialize(&bytes).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ht::HtLayout;

    fn sample() -> HTWeight {
        let layout = HtLayout {
            m_shape: vec![2, 3, 2],
            n_shape: vec![3, 2, 4],
            leaf_rank: 2,
            internal_rank: 3,
            root_rank: 4,
        };
        HTWeight::init(&layout, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let w = sample();
        let bytes = serialize(&w);
        let back = deserialize(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(serialize(&back), bytes);
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = serialize(&sample());
        for cut in [0, 3, 5, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(
                    deserialize(&bytes[..cut]),
                    Err(ParseError::Truncated { .. }) | Err(ParseError::BadMagic { .. })
                ),
                "cut at {cut}"
            );
        }
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 1]),
            Err(ParseError::Truncated { .. })
        ));
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = serialize(&sample());
        bytes[4] = 9;
        assert!(matches!(deserialize(&bytes), Err(ParseError::Version { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(deserialize(&bytes), Err(ParseError::BadMagic { .. })));
    }

    #[test]
    fn leaf_shape_must_match_header() {
        let w = sample();
        let mut bytes = serialize(&w);
        // first leaf is node 2; its dims follow the root and node 1 payloads
        let header = 4 + 2 + 4 + 4 + 3 * 4 * 2 + 5 * 4;
        let root = 12 + w.factor(0).len() * 8;
        let node1 = 12 + w.factor(1).len() * 8;
        let leaf_rank_at = header + root + node1;
        bytes[leaf_rank_at] = 7;
        assert!(matches!(deserialize(&bytes), Err(ParseError::ShapeInconsistent(_))));
    }

    #[test]
    fn sidecar_duplicates_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.fdht");
        let w = sample();
        save(&w, &path).unwrap();
        let header: WeightHeader =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(header, WeightHeader::of(&w));
        assert_eq!(load(&path).unwrap(), w);
    }
}
