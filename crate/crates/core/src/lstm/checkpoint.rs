//! Classifier checkpoints: the HT model file followed by a cell section and
//! a head section in the same versioned container.
//!
//! ```text
//! "FDHT" version           preamble
//! <HT weight block>        as in the model file
//! "CELL"
//!   mode                   u8 (0 = full, 1 = input-only)
//!   N_x, H, pad            u32 each
//!   bias                   f64 × 4H
//!   recurrent              f64 × 4H·H   (input-only only)
//! "HEAD"
//!   classes, H             u32 each
//!   weight                 f64 × classes·H
//!   bias                   f64 × classes
//! ```

use std::path::Path;

use serde::Serialize;

use super::cell::{LstmCell, Projection, GATES};
use super::classifier::{Classifier, Head};
use crate::error::{Error, ParseError, Result};
use crate::ht::io::{
    read_preamble, read_weight, sidecar_path, write_preamble, write_weight, Reader, WeightHeader, Writer,
};
use crate::matrix::Matrix;

pub fn encode_checkpoint(model: &Classifier) -> Result<Vec<u8>> {
    let cell = &model.cell;
    let (weight, recurrent, mode) = match &cell.projection {
        Projection::Full(w) => (w, None, 0u8),
        Projection::InputOnly { input, recurrent } => (input, Some(recurrent), 1u8),
        Projection::Dense(_) => return Err(Error::Argument("dense baseline cells have no HT checkpoint".into())),
    };
    let mut out = Writer::new();
    write_preamble(&mut out);
    write_weight(&mut out, weight);
    out.bytes(b"CELL");
    out.u8(mode);
    out.u32(cell.input_size());
    out.u32(cell.hidden_size());
    out.u32(cell.pad_len());
    out.f64s(&cell.bias);
    if let Some(v) = recurrent {
        out.f64s(v.data());
    }
    out.bytes(b"HEAD");
    out.u32(model.head.classes());
    out.u32(model.head.weight.cols());
    out.f64s(model.head.weight.data());
    out.f64s(&model.head.bias);
    Ok(out.finish())
}

fn tag(input: &mut Reader<'_>, expected: &'static [u8; 4], what: &'static str) -> Result<(), ParseError> {
    if input.take(4, what)? != expected {
        return Err(ParseError::ShapeInconsistent(format!("missing {what} section tag")));
    }
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Classifier, ParseError> {
    let mut input = Reader::new(bytes);
    read_preamble(&mut input)?;
    let weight = read_weight(&mut input)?;
    tag(&mut input, b"CELL", "cell")?;
    let mode = input.u8("cell mode")?;
    let nx = input.u32("input size")?;
    let hidden = input.u32("hidden size")?;
    let pad = input.u32("pad length")?;
    let bias = input.f64s(GATES * hidden, "bias")?;
    let projection = match mode {
        0 => Projection::Full(weight),
        1 => {
            let data = input.f64s(GATES * hidden * hidden, "recurrent matrix")?;
            Projection::InputOnly {
                input: weight,
                recurrent: Matrix::new(GATES * hidden, hidden, data).expect("sized"),
            }
        }
        other => return Err(ParseError::ShapeInconsistent(format!("unknown cell mode {other}"))),
    };
    let cell =
        LstmCell::from_parts(projection, bias, nx, hidden).map_err(|e| ParseError::ShapeInconsistent(e.to_string()))?;
    if cell.pad_len() != pad {
        return Err(ParseError::ShapeInconsistent(format!(
            "pad length {pad} disagrees with shapes (implied {})",
            cell.pad_len()
        )));
    }
    tag(&mut input, b"HEAD", "head")?;
    let classes = input.u32("classes")?;
    let head_h = input.u32("head width")?;
    if head_h != hidden {
        return Err(ParseError::ShapeInconsistent(format!(
            "head width {head_h} != hidden size {hidden}"
        )));
    }
    let w = input.f64s(classes * hidden, "head weight")?;
    let b = input.f64s(classes, "head bias")?;
    if !input.is_empty() {
        return Err(ParseError::ShapeInconsistent(
            "trailing bytes after head section".into(),
        ));
    }
    let head = Head {
        weight: Matrix::new(classes, hidden, w).expect("sized"),
        bias: b,
    };
    Classifier::new(cell, head).map_err(|e| ParseError::ShapeInconsistent(e.to_string()))
}

#[derive(Serialize)]
struct CheckpointHeader {
    weight: WeightHeader,
    mode: &'static str,
    input_size: usize,
    hidden_size: usize,
    pad_len: usize,
    classes: usize,
}

/// Writes the checkpoint and its `<path>.json` sidecar.
pub fn save_checkpoint(model: &Classifier, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)?)?;
    let weight = model.cell.ht_weight().expect("encoded cells carry an HT weight");
    let header = CheckpointHeader {
        weight: WeightHeader::of(weight),
        mode: model.cell.mode().name(),
        input_size: model.cell.input_size(),
        hidden_size: model.cell.hidden_size(),
        pad_len: model.cell.pad_len(),
        classes: model.head.classes(),
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    std::fs::write(sidecar_path(path), text + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Classifier> {
    Ok(decode_checkpoint(&std::fs::read(path)?)?)
}
