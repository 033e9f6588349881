//! TT, TR, BT and HT parameter counts of a 57,600 x 256 layer over ranks 1..=16.
//!
//! $ cargo run --example rank_sweep > sweep.csv

use fdht::complexity::{emit_rank_sweep, sweep_reference_spec};

fn main() -> fdht::Result<()> {
    print!("{}", emit_rank_sweep(&sweep_reference_spec(), 1..=16)?);
    Ok(())
}
