//! Trains a dense LSTM, a fully decomposed HT LSTM and an input-only HT
//! LSTM on the synthetic drifting-template task, then a full-mode cell with
//! ranks matched to the input-only parameter budget.
//!
//! $ cargo run --release --example train_synthetic

use fdht::lstm::{make_cell, matched_ranks, CellMode, Classifier, Head, LstmCell};
use fdht::train::{train, SyntheticTask, TrainConfig};

fn report(
    label: &str,
    cell: LstmCell,
    classes: usize,
    data: &fdht::train::Dataset,
    cfg: &TrainConfig,
) -> fdht::Result<()> {
    let weights = cell.weight_param_count();
    let mut model = Classifier::new(cell, Head::init(classes, 16, 12)?)?;
    let history = train(&mut model, data, cfg)?;
    let first = history
        .iter()
        .find(|m| m.train_acc >= 0.9)
        .map_or("-".to_string(), |m| m.epoch.to_string());
    let last = history.last().expect("epochs > 0");
    println!(
        "{label:<22} {weights:>7} {:>7} {first:>10} {:>9.3} {:>9.3} {:>8.4}",
        model.param_count(),
        last.train_acc,
        last.test_acc,
        last.train_loss
    );
    Ok(())
}

fn main() -> fdht::Result<()> {
    let task = SyntheticTask::default();
    let data = task.generate()?;
    let cfg = TrainConfig::default();
    let m = [2, 2, 2, 2];
    println!(
        "{:<22} {:>7} {:>7} {:>10} {:>9} {:>9} {:>8}",
        "cell", "weights", "total", "epoch>=90%", "train", "test", "loss"
    );
    report("dense", LstmCell::dense(256, 16, 11)?, task.classes, &data, &cfg)?;
    report(
        "full (4,4)",
        make_cell(256, &[4, 4, 4, 5], &m, 4, 4, CellMode::Full, 11)?,
        task.classes,
        &data,
        &cfg,
    )?;
    let input_only = make_cell(256, &[4, 4, 4, 4], &m, 4, 4, CellMode::InputOnly, 11)?;
    let budget = input_only.weight_param_count();
    report("input-only (4,4)", input_only, task.classes, &data, &cfg)?;
    let (leaf, internal) = matched_ranks(&[4, 4, 4, 5], &m, budget, 12).expect("budget reachable");
    let label = format!("full matched ({leaf},{internal})");
    report(
        &label,
        make_cell(256, &[4, 4, 4, 5], &m, leaf, internal, CellMode::Full, 11)?,
        task.classes,
        &data,
        &cfg,
    )?;
    Ok(())
}
