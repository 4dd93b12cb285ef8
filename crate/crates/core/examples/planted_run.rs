// SPDX-License-Identifier: MIT OR Apache-2.0

//! Writes the planted-frequency experiment to a directory, runs the full
//! pipeline on it and prints the report tables.
//!
//! `cargo run --release --example planted_run -- [dir]`

use std::path::PathBuf;

use freqlens::pipeline::{run, write_planted, Experiment, PlantedSpec, REPORT_DIR};

fn main() -> freqlens::error::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("freqlens-planted"));
    let config = write_planted(&PlantedSpec::default(), &dir)?;
    let exp = Experiment::load(&config)?;
    let manifest = run(&exp, 1)?;
    for s in &manifest.stages {
        println!("{:<12} {:?} {} ms", s.name, s.status, s.wall_ms);
    }
    for table in ["correlation.tsv", "regression.tsv", "importance.tsv"] {
        let path = exp.out_dir().join(REPORT_DIR).join(table);
        println!("\n{table}\n{}", std::fs::read_to_string(path).unwrap_or_default());
    }
    Ok(())
}
