use proptest::prelude::*;

use pats::estimators::{fit, tailoring_weights, BalancingForm, EstimatorKind, FitOptions};
use pats::glm::{logistic_fit, wls_fit};
use pats::inference::{bootstrap, choose_m, BootstrapConfig};
use pats::linalg::Matrix;
use pats::model::{main_terms, StageSpec};
use pats::simulation::{run_replications, Scenario};
use pats::{BlipCoefficients, BlipKind, StagedDataset};

const PATS_KINDS: [EstimatorKind; 6] = [
    EstimatorKind::IptwDwols,
    EstimatorKind::IptwGest,
    EstimatorKind::IntegrateDwols,
    EstimatorKind::IntegrateGest,
    EstimatorKind::CeDwols,
    EstimatorKind::CeGest,
];

fn design(cols: &[Vec<f64>]) -> Matrix {
    let n = cols[0].len();
    let mut all = vec![vec![1.0; n]];
    all.extend(cols.iter().cloned());
    let names = (0..all.len()).map(|j| format!("z{j}")).collect();
    Matrix::from_columns(names, all).unwrap()
}

/// Ordinary least squares through the normal equations and Gaussian
/// elimination, independent of the library's QR path.
fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut m = vec![vec![0.0; p + 1]; p];
    for i in 0..x.nrows() {
        let row = x.row(i);
        for j in 0..p {
            for k in 0..p {
                m[j][k] += row[j] * row[k];
            }
            m[j][p] += row[j] * y[i];
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|a, b| m[*a][c].abs().total_cmp(&m[*b][c].abs())).unwrap();
        m.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=p {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..p).map(|j| m[j][p] / m[j][j]).collect()
}

fn regression_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (10usize..60, 1usize..4).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), p),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(0.05..5.0f64, n),
        )
    })
}

/// Single-stage data where every covariate is a tailoring covariate.
fn all_tailoring_specs(scenario: Scenario) -> Vec<StageSpec> {
    let stage = |hist: &[&str]| {
        let t = main_terms(hist);
        StageSpec::new(t.clone(), t.clone(), t.clone(), t, hist.iter().map(|s| s.to_string()).collect())
    };
    if scenario.stages() == 1 {
        vec![stage(&["x1", "x2"])]
    } else {
        vec![stage(&["x11", "x12"]), stage(&["x11", "x12", "a1", "x21", "x22"])]
    }
}

fn scenario() -> impl Strategy<Value = Scenario> {
    prop::sample::select(Scenario::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn blip_vanishes_under_the_reference_treatment(
        psi in prop::collection::vec(-5.0..5.0f64, 3),
        x1 in -4.0..4.0f64,
        x2 in -4.0..4.0f64,
    ) {
        let b = BlipCoefficients::new(1, BlipKind::Ats, main_terms(&["x1", "x2"]), psi).unwrap();
        prop_assert_eq!(b.blip_value(0, &[("x1", x1), ("x2", x2)]).unwrap(), 0.0);
    }

    #[test]
    fn decisions_ignore_positive_rescaling(
        psi in prop::collection::vec(-5.0..5.0f64, 2),
        x in -4.0..4.0f64,
        scale in 1e-3..1e3f64,
    ) {
        let terms = main_terms(&["x"]);
        let b = BlipCoefficients::new(1, BlipKind::Pats, terms.clone(), psi.clone()).unwrap();
        let scaled: Vec<f64> = psi.iter().map(|p| p * scale).collect();
        let s = BlipCoefficients::new(1, BlipKind::Pats, terms, scaled).unwrap();
        let h = [("x", x)];
        // Rescaling may move a blip that is zero up to rounding across zero.
        prop_assume!(b.blip_value(1, &h).unwrap().abs() > 1e-9);
        prop_assert_eq!(b.optimal_decision(&h).unwrap(), s.optimal_decision(&h).unwrap());
    }

    #[test]
    fn wls_residuals_are_weight_orthogonal((cols, y, w) in regression_data()) {
        let x = design(&cols);
        let fit = wls_fit(&x, &y, &w);
        prop_assume!(fit.is_ok());
        let fit = fit.unwrap();
        let n = y.len() as f64;
        for k in 0..x.ncols() {
            let s: f64 = (0..y.len()).map(|i| w[i] * x.get(i, k) * fit.residuals[i]).sum();
            prop_assert!(s.abs() <= 1e-8 * n, "column {k}: {s}");
        }
    }

    #[test]
    fn unit_weights_give_ordinary_least_squares((cols, y, _w) in regression_data()) {
        let x = design(&cols);
        let fit = wls_fit(&x, &y, &vec![1.0; y.len()]);
        prop_assume!(fit.is_ok());
        let oracle = ols_oracle(&x, &y);
        for (b, o) in fit.unwrap().coefficients.iter().zip(&oracle) {
            prop_assert!((b - o).abs() <= 1e-8 * (1.0 + o.abs()), "{b} vs {o}");
        }
    }

    #[test]
    fn doubling_weights_changes_nothing((cols, y, w) in regression_data()) {
        let x = design(&cols);
        let fit = wls_fit(&x, &y, &w);
        prop_assume!(fit.is_ok());
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let twice = wls_fit(&x, &y, &w2).unwrap();
        for (a, b) in fit.unwrap().coefficients.iter().zip(&twice.coefficients) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn logistic_score_equations_hold(
        (x, u) in (40usize..200).prop_flat_map(|n| (
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(0.0..1.0f64, n),
        )),
        beta in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let a: Vec<f64> = x
            .iter()
            .zip(&u)
            .map(|(x, u)| f64::from(u8::from(*u < pats::glm::expit(beta[0] + beta[1] * x))))
            .collect();
        let z = design(&[x]);
        let fit = logistic_fit(&z, &a, None);
        prop_assume!(fit.is_ok());
        let fit = fit.unwrap();
        let n = a.len() as f64;
        for k in 0..z.ncols() {
            let s: f64 = (0..a.len()).map(|i| z.get(i, k) * (a[i] - fit.fitted[i])).sum();
            prop_assert!(s.abs() / n <= 1e-8, "score {k}: {s}");
        }
    }

    #[test]
    fn ratio_weights_are_one_when_tailoring_on_everything(seed in any::<u64>(), sc in scenario()) {
        let data = sc.generate(300, seed);
        let specs = all_tailoring_specs(sc);
        for (j0, spec) in specs.iter().enumerate() {
            let stage = j0 + 1;
            let e = logistic_fit(&spec.treatment_terms.design(&data, stage).unwrap(), data.treatment(stage), None);
            prop_assume!(e.is_ok());
            let tw = tailoring_weights(&data, stage, spec, &e.unwrap().fitted, BalancingForm::Overlap).unwrap();
            prop_assert!(tw.ratio.iter().all(|r| *r == 1.0));
        }
    }

    #[test]
    fn choose_m_is_monotone(n in 1usize..5000, a in 0.001..1.0f64, da in 0.0..1.0f64, p in 0.0..1.0f64, dp in 0.0..1.0f64) {
        let p2 = (p + dp).min(1.0);
        prop_assert!(choose_m(n, a, p2) <= choose_m(n, a, p));
        if p > 0.0 {
            prop_assert!(choose_m(n, a + da, p) <= choose_m(n, a, p));
        }
        prop_assert_eq!(choose_m(n, a, 0.0), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn partially_adaptive_reduces_to_adaptive_without_extra_covariates(seed in any::<u64>(), sc in scenario()) {
        let data = sc.generate(400, seed);
        let specs = all_tailoring_specs(sc);
        let opts = FitOptions::default();
        for kind in PATS_KINDS {
            let ats = fit(&data, &specs, kind.ats_counterpart(), &opts);
            prop_assume!(ats.is_ok());
            let pats = fit(&data, &specs, kind, &opts).unwrap();
            prop_assert_eq!(pats.estimates(), ats.unwrap().estimates(), "{}", kind);
        }
    }

    #[test]
    fn last_stage_intermediate_blip_is_the_adaptive_blip(seed in any::<u64>(), sc in scenario()) {
        let data = sc.generate(400, seed);
        let opts = FitOptions::default();
        let k = sc.stages();
        for kind in PATS_KINDS {
            let specs = sc.analysis_specs(kind);
            let ats = fit(&data, &specs, kind.ats_counterpart(), &opts);
            prop_assume!(ats.is_ok());
            let ats = ats.unwrap();
            let pats = fit(&data, &specs, kind, &opts).unwrap();
            prop_assert_eq!(pats.stage(k).psi_dagger.psi(), ats.stage(k).psi_ats.psi(), "{}", kind);
        }
    }

    #[test]
    fn fits_are_reproducible_bit_for_bit(seed in any::<u64>(), sc in scenario()) {
        let a = sc.generate(300, seed);
        let b = sc.generate(300, seed);
        prop_assert_eq!(&a, &b);
        for kind in EstimatorKind::ALL {
            let specs = sc.analysis_specs(kind);
            let x = fit(&a, &specs, kind, &FitOptions::default());
            let y = fit(&b, &specs, kind, &FitOptions::default());
            match (x, y) {
                (Ok(x), Ok(y)) => prop_assert_eq!(bits(&x.estimates()), bits(&y.estimates())),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn bootstrap_and_simulation_are_reproducible() {
    let data: StagedDataset = Scenario::E1.generate(200, 3);
    let specs = Scenario::E1.analysis_specs(EstimatorKind::CeDwols);
    let cfg = BootstrapConfig { b1: 30, seed: 11, ..BootstrapConfig::default() };
    let opts = FitOptions::default();
    let a = bootstrap(&data, &specs, EstimatorKind::CeDwols, &opts, &cfg).unwrap();
    let b = bootstrap(&data, &specs, EstimatorKind::CeDwols, &opts, &cfg).unwrap();
    assert_eq!(a, b);
    let rows: Vec<Vec<u64>> = a.replicates.iter().map(|r| bits(r)).collect();
    assert_eq!(rows, b.replicates.iter().map(|r| bits(r)).collect::<Vec<_>>());

    let kinds = EstimatorKind::ALL;
    let r1 = run_replications(Scenario::S3, 150, 12, &kinds, 5, &opts).unwrap();
    let r2 = run_replications(Scenario::S3, 150, 12, &kinds, 5, &opts).unwrap();
    assert_eq!(format!("{r1:?}"), format!("{r2:?}"));
}
