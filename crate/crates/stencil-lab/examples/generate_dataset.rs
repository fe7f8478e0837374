//! Build a labeled dataset, write it to disk, and read it back.
//!
//! A dataset holds normalized stencils of one or more sizes, each scored
//! with the error measure and assigned a per-size quartile class. The text
//! format round-trips byte-identically, and the file fingerprint ties
//! checkpoints to the exact dataset they were trained on.
//!
//!     cargo run --example generate_dataset

use stencil_lab::labeling::build_dataset;
use stencil_lab::labeling::io::{file_fingerprint, read_dataset, write_dataset};
use stencil_lab::DatasetConfig;

fn main() -> stencil_lab::Result<()> {
    let config = DatasetConfig {
        seed: 42,
        spacing_h: 0.05,
        sizes: vec![6, 9],
        count_per_size: 100,
        ..DatasetConfig::default()
    };
    let dataset = build_dataset(&config)?;

    println!("records  = {}", dataset.records.len());
    println!("max size = {}", dataset.max_size);
    for (s, cuts) in dataset.borders.iter() {
        println!("size {s}: quartile borders = {cuts:.4?}");
    }
    // Exactly count/4 records per class, by construction.
    for ((s, q), n) in dataset.class_counts() {
        println!("size {s} {}: {n} records", q.label());
    }

    let path = std::env::temp_dir().join("stencil-lab-example.ds");
    write_dataset(&dataset, &path)?;
    let reread = read_dataset(&path)?;
    assert_eq!(reread, dataset);
    println!("round trip through {} is lossless", path.display());
    println!("fingerprint = {}", file_fingerprint(&path)?);
    std::fs::remove_file(&path).ok();
    Ok(())
}
