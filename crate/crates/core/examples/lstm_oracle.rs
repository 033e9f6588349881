//! Runs an HT LSTM cell next to the dense LSTM built from its reconstructed
//! weight and prints how far the two hidden-state trajectories drift apart.
//!
//! $ cargo run --example lstm_oracle

use fdht::lstm::{lstm_step, make_cell, CellMode, LstmState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fdht::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cell = make_cell(10, &[2, 3, 3], &[2, 1, 2], 3, 2, CellMode::Full, 4)?;
    let dense = cell.dense_equivalent()?;
    println!(
        "N_x = {}, H = {}, pad = {}; HT weight {} params, dense weight {}",
        cell.input_size(),
        cell.hidden_size(),
        cell.pad_len(),
        cell.weight_param_count(),
        dense.weight_param_count()
    );
    let mut a = LstmState::zeros(cell.hidden_size());
    let mut b = a.clone();
    for t in 1..=8 {
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        a = lstm_step(&cell, &x, &a)?;
        b = lstm_step(&dense, &x, &b)?;
        let gap =
            a.h.iter()
                .chain(&a.c)
                .zip(b.h.iter().chain(&b.c))
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
        println!(
            "t={t}  h={:?}  max gap {gap:.1e}",
            a.h.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
