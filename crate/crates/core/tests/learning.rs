//! Training-loop behavior on the default synthetic task.

use fdht::config::RunConfig;
use fdht::train::{accuracy, train, SyntheticTask};

#[test]
fn shuffled_labels_train_to_chance() {
    let config = RunConfig::default();
    let task = SyntheticTask {
        shuffled_labels: true,
        ..config.task.clone()
    };
    let data = task.generate().unwrap();
    let mut model = config.model.build_classifier(data.classes).unwrap();
    let history = train(&mut model, &data, &config.train).unwrap();
    let acc = history.last().unwrap().test_acc;
    let p = 1.0 / data.classes as f64;
    let sd = (p * (1.0 - p) / data.test.len() as f64).sqrt();
    assert!((acc - p).abs() <= 3.5 * sd, "test accuracy {acc} vs chance {p}");
}

#[test]
fn default_run_lowers_loss_and_evaluates_deterministically() {
    let config = RunConfig::default();
    let data = config.task.generate().unwrap();
    let mut model = config.model.build_classifier(data.classes).unwrap();
    let h = train(&mut model, &data, &config.train).unwrap();
    assert_eq!(h.len(), 50);
    let mean = |s: &[fdht::train::EpochMetrics]| s.iter().map(|m| m.train_loss).sum::<f64>() / s.len() as f64;
    assert!(mean(&h[45..]) < mean(&h[..5]));
    let a = accuracy(&model, &data.test, 16).unwrap();
    let b = accuracy(&model, &data.test, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, h.last().unwrap().test_acc);
}
