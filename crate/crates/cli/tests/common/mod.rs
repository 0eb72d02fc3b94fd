#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pats::glm::expit;
use pats::rng::rng_from;
use pats::simulation::Scenario;
use pats::StagedDataset;
use rand::Rng as _;

/// Writes named columns as CSV; `NaN` becomes an empty field.
pub fn write_csv(path: &Path, columns: &[(&str, Vec<f64>)]) {
    let mut text = columns.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(",");
    text.push('\n');
    for i in 0..columns[0].1.len() {
        let row: Vec<String> = columns
            .iter()
            .map(|(_, v)| if v[i].is_nan() { String::new() } else { v[i].to_string() })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// The columns of a one-stage benchmark dataset.
pub fn single_stage_columns(data: &StagedDataset) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("x1", data.history_column("x1", 1).unwrap().to_vec()),
        ("x2", data.history_column("x2", 1).unwrap().to_vec()),
        ("a", data.treatment(1).to_vec()),
        ("y", data.outcome().to_vec()),
    ]
}

pub fn two_stage_columns(data: &StagedDataset) -> Vec<(&'static str, Vec<f64>)> {
    let mut cols = Vec::new();
    for (name, stage) in [("x11", 1), ("x12", 1), ("x21", 2), ("x22", 2)] {
        cols.push((name, data.history_column(name, stage).unwrap().to_vec()));
    }
    cols.insert(2, ("a1", data.treatment(1).to_vec()));
    cols.push(("a2", data.treatment(2).to_vec()));
    cols.push(("y", data.outcome().to_vec()));
    cols
}

/// One-stage benchmark data with roughly 20% of subjects censored. With
/// `informative` the censoring depends on `x2` and `a`, otherwise on nothing.
pub fn censored_single_stage(n: usize, seed: u64, informative: bool) -> (StagedDataset, Vec<(&'static str, Vec<f64>)>) {
    let data = Scenario::S1.generate(n, seed);
    let mut rng = rng_from(seed ^ 0x5eed);
    let x2 = data.history_column("x2", 1).unwrap();
    let a = data.treatment(1);
    let c: Vec<f64> = (0..n)
        .map(|i| {
            let p = if informative { expit(-2.0 + 0.8 * x2[i] + 0.5 * a[i]) } else { 0.2 };
            f64::from(u8::from(rng.random::<f64>() < p))
        })
        .collect();
    let mut cols = single_stage_columns(&data);
    for (y, c) in cols[3].1.iter_mut().zip(&c) {
        if *c == 1.0 {
            *y = f64::NAN;
        }
    }
    cols.push(("c", c));
    (data, cols)
}

pub const SINGLE_STAGE: &str = r#"
[[stage]]
treatment = "a"
covariates = ["x1", "x2"]
tailoring = ["x1"]
"#;

pub const TWO_STAGE: &str = r#"
[[stage]]
treatment = "a1"
covariates = ["x11", "x12"]
tailoring = ["x11"]
blip_terms = ["1", "x11", "x12"]

[[stage]]
treatment = "a2"
covariates = ["x21", "x22"]
tailoring = ["x21"]
blip_terms = ["1", "x21", "x22"]
"#;

/// Writes `data.csv` and `config.toml` into `dir`; `head` holds the top-level keys.
pub fn write_config(dir: &Path, columns: &[(&str, Vec<f64>)], head: &str, stages: &str) -> PathBuf {
    write_csv(&dir.join("data.csv"), columns);
    let path = dir.join("config.toml");
    std::fs::write(&path, format!("input = \"data.csv\"\noutcome = \"y\"\n{head}\n{stages}")).unwrap();
    path
}
