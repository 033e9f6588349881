//! The HT matrix-vector kernel on a small layer (checked against the dense
//! reconstruction) and on a 61,440-input layer whose dense form is never built.
//!
//! $ cargo run --release --example ht_layer_forward

use std::time::Instant;

use fdht::{htl_forward, HTWeight, HtLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fdht::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let small = HtLayout {
        m_shape: vec![2, 3, 2],
        n_shape: vec![3, 2, 4],
        leaf_rank: 3,
        internal_rank: 2,
        root_rank: 2,
    };
    let w = HTWeight::init(&small, 1)?;
    let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fast = htl_forward(&w, &x)?;
    let dense = w.reconstruct_dense()?.matvec(&x)?;
    let err = fast.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "small layer: {} -> {} outputs, {} params",
        w.input_len(),
        w.output_len(),
        w.param_count()
    );
    println!("  max |fast - dense| = {err:.3e}");

    let big = HtLayout {
        m_shape: vec![4, 4, 4, 4],
        n_shape: vec![16, 16, 16, 15],
        leaf_rank: 14,
        internal_rank: 12,
        root_rank: 4,
    };
    let w = HTWeight::init(&big, 2)?;
    let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let start = Instant::now();
    let y = htl_forward(&w, &x)?;
    println!(
        "large layer: dense equivalent {} x {} ({} entries), {} params",
        w.output_len(),
        w.input_len(),
        w.dense_entries(),
        w.param_count()
    );
    println!(
        "  forward took {:?}, |y|_2 = {:.4}",
        start.elapsed(),
        y.iter().map(|v| v * v).sum::<f64>().sqrt()
    );
    Ok(())
}
