//! Parameter counts and compression ratios of the published HT LSTM
//! configurations.
//!
//! $ cargo run --example param_accounting

use fdht::commands::param_report;
use fdht::config::ModelConfig;
use fdht::lstm::CellMode;

fn config(input_size: usize, n: &[usize], m: &[usize], leaf: usize, internal: usize) -> ModelConfig {
    ModelConfig {
        input_size,
        n_shape: n.to_vec(),
        m_shape: m.to_vec(),
        leaf_rank: leaf,
        internal_rank: internal,
        mode: CellMode::Full,
        seed: 0,
    }
}

fn main() -> fdht::Result<()> {
    let rows = [
        (
            "UCF11 raw frames",
            config(57_600, &[16, 16, 16, 15], &[4, 4, 4, 4], 14, 12),
        ),
        (
            "Youtube raw frames",
            config(57_600, &[16, 16, 16, 15], &[4, 4, 4, 4], 14, 11),
        ),
        ("UCF11 CNN features", config(2_048, &[8, 8, 8, 8], &[4, 8, 8, 8], 9, 6)),
        (
            "HMDB51 CNN features",
            config(2_048, &[8, 8, 8, 8], &[4, 8, 8, 8], 14, 12),
        ),
    ];
    println!(
        "{:<20} {:>6} {:>6} {:>9} {:>12} {:>12} {:>8}",
        "config", "H", "pad", "HT", "dense W", "dense total", "ratio"
    );
    for (name, c) in rows {
        let p = param_report(&c)?;
        println!(
            "{name:<20} {:>6} {:>6} {:>9} {:>12} {:>12} {:>7}x",
            p.hidden, p.pad, p.ht_params, p.dense_weights, p.dense_total, p.ratio
        );
    }
    Ok(())
}
