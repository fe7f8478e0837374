//! Train a small quartile classifier end to end and watch the history.
//!
//! The model is a point-cloud network: per-node affine stacks, a global max
//! pool (order invariant by construction), and a dense head with dropout.
//! Everything is f64 and seeded, so rerunning reproduces the history
//! bit for bit. This example uses reduced widths to stay fast; the defaults
//! in `ModelConfig::with_input_size` match the full-size network.
//!
//!     cargo run --release --example train_classifier

use stencil_lab::labeling::build_dataset;
use stencil_lab::model::train::{evaluate_split, train, TrainConfig};
use stencil_lab::{DatasetConfig, ModelConfig};

fn main() -> stencil_lab::Result<()> {
    let dataset = build_dataset(&DatasetConfig {
        seed: 1,
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
    println!("training on {} records", dataset.records.len());
    let outcome = train(&dataset, &model, &config, |e| {
        println!(
            "epoch {:>2}: train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4}",
            e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc
        );
    })?;

    // The returned model re-estimates its normalization statistics after
    // the last epoch, so it can score above the final history row.
    let last = outcome.history.last().expect("at least one epoch");
    let (_, acc) = evaluate_split(&outcome.params, &dataset, &outcome.split.test)?;
    println!(
        "last epoch {:.4} -> returned model {:.4} over {} held-out records (chance = 0.25)",
        last.test_acc,
        acc,
        outcome.split.test.len()
    );
    Ok(())
}
