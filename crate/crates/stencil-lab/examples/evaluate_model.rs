//! Evaluate a trained model on its held-out split and render the report:
//! confusion matrix, per-class precision/recall/F1, one-vs-rest ROC AUC,
//! and the better-than-median analysis.
//!
//!     cargo run --release --example evaluate_model

use stencil_lab::eval::evaluate_indices;
use stencil_lab::labeling::build_dataset;
use stencil_lab::model::train::{train, TrainConfig};
use stencil_lab::{DatasetConfig, ModelConfig};

fn main() -> stencil_lab::Result<()> {
    let dataset = build_dataset(&DatasetConfig {
        seed: 2,
        spacing_h: 0.05,
        sizes: vec![9],
        count_per_size: 400,
        ..DatasetConfig::default()
    })?;

    let mut model = ModelConfig::with_input_size(dataset.max_size);
    model.point_widths = vec![32, 32, 64];
    model.dense_widths = vec![64];
    let config = TrainConfig {
        epochs: 12,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let outcome = train(&dataset, &model, &config, |_| {})?;

    // In-memory data has no file fingerprint; the CLI fills one in.
    let report = evaluate_indices(
        &outcome.params,
        &dataset,
        &outcome.split.test,
        "test",
        "(in-memory)",
    )?;
    print!("{}", report.render());
    Ok(())
}
