//! Serialized simulation reports and inference results.

use std::io::{Read, Write};

use pats::inference::InferenceResult;
use pats::simulation::{EstimatorSummary, ParameterSummary, SimReport};

use crate::format::{sig6, Table};
use crate::CliError;

pub const SIM_COLUMNS: [&str; 15] = [
    "scenario",
    "n",
    "replications",
    "seed",
    "estimator",
    "parameter",
    "truth",
    "mean",
    "relative_bias_pct",
    "sd",
    "proportion_optimal_pct",
    "mean_loss",
    "loss_when_wrong",
    "failures",
    "used",
];

pub const INTERVAL_COLUMNS: [&str; 5] = ["stage", "term", "estimate", "ci_lower", "ci_upper"];

/// Shortest representation that parses back to the same value.
fn full(x: f64) -> String {
    x.to_string()
}

/// One row per estimator and parameter, full precision.
pub fn write_sim_csv(report: &SimReport, out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIM_COLUMNS)?;
    for e in &report.estimators {
        for p in &e.parameters {
            w.write_record([
                report.scenario.id().to_string(),
                report.n.to_string(),
                report.replications.to_string(),
                report.seed.to_string(),
                e.kind.id().to_string(),
                p.name.clone(),
                full(p.truth),
                full(p.mean),
                full(p.relative_bias_pct),
                full(p.sd),
                full(e.proportion_optimal_pct),
                full(e.mean_loss),
                full(e.loss_when_wrong),
                e.failures.to_string(),
                e.used.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::Io {
        path: "<output>".into(),
        source: e,
    })?;
    Ok(())
}

/// Inverse of [`write_sim_csv`].
pub fn read_sim_csv(input: impl Read) -> Result<SimReport, CliError> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(SIM_COLUMNS) {
        return Err(CliError::Usage("not a simulation report: unexpected header".into()));
    }
    let bad = |what: &str, v: &str| CliError::Usage(format!("simulation report: bad {what} `{v}`"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad("number", v));
    let count = |v: &str| v.parse::<usize>().map_err(|_| bad("count", v));
    let mut report: Option<SimReport> = None;
    for rec in r.records() {
        let rec = rec?;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let scenario = f(0).parse().map_err(|_| bad("scenario", f(0)))?;
        let (n, replications) = (count(f(1))?, count(f(2))?);
        let seed = f(3).parse::<u64>().map_err(|_| bad("seed", f(3)))?;
        let rep = report.get_or_insert_with(|| SimReport {
            scenario,
            n,
            replications,
            seed,
            estimators: Vec::new(),
        });
        if (rep.scenario, rep.n, rep.replications, rep.seed) != (scenario, n, replications, seed) {
            return Err(CliError::Usage("simulation report mixes several runs".into()));
        }
        let kind = f(4).parse().map_err(|_| bad("estimator", f(4)))?;
        if rep.estimators.last().is_none_or(|e| e.kind != kind) {
            rep.estimators.push(EstimatorSummary {
                kind,
                parameters: Vec::new(),
                proportion_optimal_pct: num(f(10))?,
                mean_loss: num(f(11))?,
                loss_when_wrong: num(f(12))?,
                failures: count(f(13))?,
                used: count(f(14))?,
            });
        }
        let est = rep.estimators.last_mut().expect("pushed above");
        est.parameters.push(ParameterSummary {
            name: f(5).to_string(),
            truth: num(f(6))?,
            mean: num(f(7))?,
            relative_bias_pct: num(f(8))?,
            sd: num(f(9))?,
        });
    }
    report.ok_or_else(|| CliError::Usage("empty simulation report".into()))
}

/// Relative bias and SD of every parameter, decision quality, one row per estimator.
pub fn sim_table(report: &SimReport) -> String {
    let names: Vec<&str> = report
        .estimators
        .first()
        .map(|e| e.parameters.iter().map(|p| p.name.as_str()).collect())
        .unwrap_or_default();
    let mut header = vec!["estimator".to_string()];
    header.extend(names.iter().map(|n| format!("bias% {n}")));
    header.extend(names.iter().map(|n| format!("sd {n}")));
    header.extend(["optimal%", "loss|wrong", "failures"].map(String::from));
    let mut t = Table::new(header);
    for e in &report.estimators {
        let mut row = vec![e.kind.label().to_string()];
        row.extend(e.parameters.iter().map(|p| sig6(p.relative_bias_pct)));
        row.extend(e.parameters.iter().map(|p| sig6(p.sd)));
        row.push(sig6(e.proportion_optimal_pct));
        row.push(sig6(e.loss_when_wrong));
        row.push(e.failures.to_string());
        t.push(row);
    }
    format!(
        "scenario {} ({}), n = {}, {} replications, seed {}\n{}",
        report.scenario.id(),
        report.scenario.description(),
        report.n,
        report.replications,
        report.seed,
        t.render()
    )
}

fn opt(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

/// Intervals as CSV. `tuning` appends the resample size and, when estimated,
/// `p̂` and `α̂` to every row.
pub fn write_intervals_csv(res: &InferenceResult, tuning: bool, out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = INTERVAL_COLUMNS.to_vec();
    if tuning {
        header.extend(["m", "p_hat", "alpha_hat"]);
    }
    w.write_record(&header)?;
    for iv in &res.intervals {
        let mut row = vec![
            iv.stage.to_string(),
            iv.term.clone(),
            full(iv.estimate),
            full(iv.lower),
            full(iv.upper),
        ];
        if tuning {
            row.extend([res.m_hat.to_string(), opt(res.p_hat), opt(res.alpha_hat)]);
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: "<output>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn intervals_table(res: &InferenceResult, tuning: bool) -> String {
    let mut t = Table::new(INTERVAL_COLUMNS).labels(2);
    for iv in &res.intervals {
        t.push(vec![
            iv.stage.to_string(),
            iv.term.clone(),
            sig6(iv.estimate),
            sig6(iv.lower),
            sig6(iv.upper),
        ]);
    }
    let mut out = t.render();
    if tuning {
        let show = |x: Option<f64>| x.map_or_else(|| "-".into(), sig6);
        out.push_str(&format!(
            "m = {}, p_hat = {}, alpha_hat = {}\n",
            res.m_hat,
            show(res.p_hat),
            show(res.alpha_hat)
        ));
    }
    out
}
