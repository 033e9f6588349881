//! Saves an input-only HT LSTM classifier, reloads it and checks that the
//! logits are unchanged.
//!
//! $ cargo run --example checkpoint_roundtrip

use fdht::lstm::checkpoint::{load_checkpoint, save_checkpoint};
use fdht::lstm::{make_cell, CellMode, Classifier, Head};

fn main() -> fdht::Result<()> {
    let cell = make_cell(12, &[2, 2, 4], &[2, 2, 1], 3, 2, CellMode::InputOnly, 1)?;
    let model = Classifier::new(cell, Head::init(5, 4, 2)?)?;
    let dir = std::env::temp_dir().join("fdht-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.fdht");
    save_checkpoint(&model, &path)?;

    let loaded = load_checkpoint(&path)?;
    let xs = vec![vec![0.25; 12]; 3];
    let before = model.logits(&xs)?;
    let after = loaded.logits(&xs)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!("sidecar:\n{}", std::fs::read_to_string(dir.join("model.fdht.json"))?);
    println!(
        "identical model: {}, identical logits: {}",
        loaded == model,
        before == after
    );
    Ok(())
}
