//! CSV input for `analyze` and `bootstrap`.

use std::io::Read;

use pats::{StageData, StagedDataset};

use crate::config::AnalysisConfig;
use crate::CliError;

/// A dataset built from the complete cases of a CSV file.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: StagedDataset,
    /// Rows dropped because a mapped value was missing.
    pub rejected: usize,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

pub fn load(cfg: &AnalysisConfig) -> Result<LoadedData, CliError> {
    let file = std::fs::File::open(&cfg.input).map_err(|e| CliError::io(&cfg.input, e))?;
    read(cfg, file)
}

/// Reads the columns `cfg` maps. Rows with a missing value are rejected, except
/// that censored subjects may lack the outcome.
pub fn read(cfg: &AnalysisConfig, input: impl Read) -> Result<LoadedData, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let wanted = cfg.columns();
    let missing: Vec<&str> = wanted
        .iter()
        .copied()
        .filter(|c| !header.iter().any(|h| h == c))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!(
            "{} lacks column(s): {}",
            cfg.input.display(),
            missing.join(", ")
        )));
    }
    let position: Vec<usize> = wanted
        .iter()
        .map(|c| header.iter().position(|h| h == c).expect("checked above"))
        .collect();
    let outcome_at = 0;
    let censored_at = cfg.censored.as_ref().map(|_| 1);

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut rejected = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let mut row = Vec::with_capacity(wanted.len());
        let mut complete = true;
        for (k, &p) in position.iter().enumerate() {
            let field = record.get(p).unwrap_or("");
            if is_missing(field) {
                row.push(f64::NAN);
                if k != outcome_at {
                    complete = false;
                }
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Usage(format!("line {line}: column `{}` has non-numeric value `{field}`", wanted[k]))
            })?;
            row.push(v);
        }
        if complete && row[outcome_at].is_nan() {
            complete = censored_at.is_some_and(|c| row[c] == 1.0);
        }
        if !complete {
            rejected += 1;
            continue;
        }
        if let Some(c) = censored_at {
            if row[c] != 0.0 && row[c] != 1.0 {
                return Err(CliError::Usage(format!(
                    "line {line}: censoring indicator `{}` must be 0 or 1, found {}",
                    wanted[c], row[c]
                )));
            }
        }
        for (col, v) in values.iter_mut().zip(row) {
            col.push(v);
        }
    }

    let mut cols = values.into_iter().zip(wanted.iter().copied());
    let (outcome, _) = cols.next().expect("outcome column");
    let censored = censored_at.map(|_| {
        let (c, _) = cols.next().expect("censoring column");
        c.into_iter().map(|v| v == 1.0).collect::<Vec<bool>>()
    });
    let mut stages = Vec::with_capacity(cfg.stages.len());
    for s in &cfg.stages {
        let covariates: Vec<(String, Vec<f64>)> = cols
            .by_ref()
            .take(s.covariates.len())
            .map(|(v, name)| (name.to_string(), v))
            .collect();
        let (a, name) = cols.next().expect("treatment column");
        let treatment = a
            .iter()
            .map(|&v| {
                if v == 0.0 || v == 1.0 {
                    Ok(v as u8)
                } else {
                    Err(CliError::Usage(format!("treatment `{name}` must be 0 or 1, found {v}")))
                }
            })
            .collect::<Result<Vec<u8>, _>>()?;
        stages.push(StageData {
            treatment_name: s.treatment.clone(),
            treatment,
            covariates,
        });
    }
    let data = StagedDataset::new(stages, outcome, censored)?;
    if data.n() == 0 {
        return Err(CliError::Usage(format!("{} has no complete rows", cfg.input.display())));
    }
    Ok(LoadedData { data, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(censored: bool) -> AnalysisConfig {
        let c = if censored { "censored = \"c\"" } else { "" };
        AnalysisConfig::parse(&format!(
            "input = \"x.csv\"\noutcome = \"y\"\n{c}\nestimator = \"dwols\"\n\
             [[stage]]\ntreatment = \"a\"\ncovariates = [\"x1\"]\ntailoring = [\"x1\"]\n"
        ))
        .unwrap()
    }

    #[test]
    fn complete_cases_only() {
        let csv = "id,x1,a,y,c\n1,0,1,2.5,0\n2,NA,0,1,0\n3,1,1,,1\n4,1,0,,0\n5,1,0,0.5,0\n";
        let plain = read(&config(false), csv.as_bytes()).unwrap();
        assert_eq!((plain.data.n(), plain.rejected), (2, 3));
        let cens = read(&config(true), csv.as_bytes()).unwrap();
        assert_eq!((cens.data.n(), cens.rejected), (3, 2));
        assert_eq!(cens.data.censored().unwrap(), &[false, true, false]);
        assert_eq!(cens.data.treatment(1), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn schema_errors() {
        let err = read(&config(true), "x1,a\n1,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("y, c"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = read(&config(false), "x1,a,y\n1,2,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("0 or 1"), "{err}");
        let err = read(&config(false), "x1,a,y\nlow,1,0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
