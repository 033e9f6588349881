//! Analytic gradients of the HT layer and of BPTT through an HT LSTM
//! classifier, compared with central finite differences.
//!
//! $ cargo run --release --example gradient_check

use fdht::grad::{finite_diff_check, half_squared_norm};
use fdht::lstm::{bptt_finite_diff_check, make_cell, CellMode, Classifier, Head, Sequence};
use fdht::{HTWeight, HtLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn main() -> fdht::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let layout = HtLayout {
        m_shape: vec![2, 3, 2],
        n_shape: vec![3, 3, 2],
        leaf_rank: 2,
        internal_rank: 3,
        root_rank: 4,
    };
    let w = HTWeight::init(&layout, 3)?;
    let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = finite_diff_check(&w, &x, &half_squared_norm, STEP)?;
    println!(
        "HT layer: {} entries, max relative error {:.2e}",
        r.checked, r.max_error
    );

    for mode in [CellMode::Full, CellMode::InputOnly] {
        let cell = make_cell(6, &[3, 4], &[2, 2], 2, 2, mode, 8)?;
        let model = Classifier::new(cell, Head::init(3, 4, 9)?)?;
        let batch: Vec<Sequence> = (0..3)
            .map(|label| Sequence {
                frames: (0..2)
                    .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                label,
            })
            .collect();
        let mask = [1.0, 0.0, 4.0 / 3.0, 4.0 / 3.0].repeat(3);
        let r = bptt_finite_diff_check(&model, &batch, Some(&mask), STEP)?;
        println!(
            "BPTT ({}): {} entries, max relative error {:.2e}",
            mode.name(),
            r.checked,
            r.max_error
        );
    }
    Ok(())
}
