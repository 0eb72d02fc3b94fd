use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::glm::expit;
use crate::model::{main_terms, StageData, StageSpec, StagedDataset, TermList};
use crate::rng::{child_rng, rng_from, tags, Rng};

/// The benchmark data-generating processes. `S1`–`S3` have one decision
/// point, `E1`–`E3` two.
///
/// | | treatment model | treatment-free model |
/// |---|---|---|
/// | 1 | main terms, correct | correct |
/// | 2 | misses an interaction | correct |
/// | 3 | correct | misses an interaction |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    S1,
    S2,
    S3,
    E1,
    E2,
    E3,
}

/// `(-0.5, 1, -1)`, the full blip of both stages of the two-stage scenarios.
const PSI_TWO_STAGE: [f64; 3] = [-0.5, 1.0, -1.0];

fn bern(rng: &mut Rng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `(-0.5, 1, -1) · (1, x1, x2)`
fn two_stage_blip(x1: f64, x2: f64) -> f64 {
    PSI_TWO_STAGE[0] + PSI_TWO_STAGE[1] * x1 + PSI_TWO_STAGE[2] * x2
}

/// `μ = (a^opt - a) · blip`
fn regret(a: f64, blip: f64) -> f64 {
    (f64::from(u8::from(blip > 0.0)) - a) * blip
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::S1,
        Scenario::S2,
        Scenario::S3,
        Scenario::E1,
        Scenario::E2,
        Scenario::E3,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
            Scenario::E1 => "e1",
            Scenario::E2 => "e2",
            Scenario::E3 => "e3",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::S1 | Scenario::E1 => "correctly specified treatment and treatment-free models",
            Scenario::S2 | Scenario::E2 => "misspecified treatment model, correct treatment-free model",
            Scenario::S3 | Scenario::E3 => "correct treatment model, misspecified treatment-free model",
        }
    }

    pub fn stages(self) -> usize {
        match self {
            Scenario::S1 | Scenario::S2 | Scenario::S3 => 1,
            _ => 2,
        }
    }

    fn treatment_interaction(self) -> bool {
        matches!(self, Scenario::S2 | Scenario::E2)
    }

    fn outcome_interaction(self) -> bool {
        matches!(self, Scenario::S3 | Scenario::E3)
    }

    /// Tailoring column of each stage.
    pub fn tailoring_columns(self) -> Vec<&'static str> {
        if self.stages() == 1 {
            vec!["x1"]
        } else {
            vec!["x11", "x21"]
        }
    }

    /// Draws `n` subjects. Same `(n, seed)`, same data.
    pub fn generate(self, n: usize, seed: u64) -> StagedDataset {
        let mut rng = rng_from(seed);
        if self.stages() == 1 {
            self.generate_single(n, &mut rng)
        } else {
            self.generate_two(n, &mut rng)
        }
    }

    fn generate_single(self, n: usize, rng: &mut Rng) -> StagedDataset {
        let (mut x1, mut x2, mut a, mut y) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        let ti = f64::from(u8::from(self.treatment_interaction()));
        let oi = f64::from(u8::from(self.outcome_interaction()));
        for _ in 0..n {
            let u1 = f64::from(bern(rng, 0.5));
            let u2 = f64::from(bern(rng, 0.5));
            let ai = bern(rng, expit(-0.5 + u1 + 0.5 * u2 + ti * u1 * u2));
            let mean = 0.25 * u1 + u2 + oi * u1 * u2 + f64::from(ai) * (0.5 - u1 + 1.5 * u2);
            x1.push(u1);
            x2.push(u2);
            a.push(ai);
            y.push(mean + normal(rng));
        }
        StagedDataset::new(
            vec![StageData {
                treatment_name: "a".into(),
                treatment: a,
                covariates: vec![("x1".into(), x1), ("x2".into(), x2)],
            }],
            y,
            None,
        )
        .expect("generated data are well formed")
    }

    fn generate_two(self, n: usize, rng: &mut Rng) -> StagedDataset {
        let mut cols: [Vec<f64>; 4] = Default::default();
        let (mut a1s, mut a2s, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let ti = f64::from(u8::from(self.treatment_interaction()));
        let oi = f64::from(u8::from(self.outcome_interaction()));
        for _ in 0..n {
            let x11 = f64::from(bern(rng, 0.5));
            let x12 = f64::from(bern(rng, 0.5));
            let a1 = f64::from(bern(rng, expit(-1.0 + x11 + x12 + ti * x11 * x12)));
            let x21 = f64::from(bern(rng, expit(-1.0 + x11 + a1)));
            let x22 = f64::from(bern(rng, expit(-1.0 + x12 + a1)));
            let a2 = f64::from(bern(rng, expit(-1.0 + x21 + x22 + ti * x21 * x22)));
            let mu1 = regret(a1, two_stage_blip(x11, x12));
            let mu2 = regret(a2, two_stage_blip(x21, x22));
            y.push(x11 + x12 + oi * x11 * x12 - mu1 - mu2 + normal(rng));
            for (c, v) in cols.iter_mut().zip([x11, x12, x21, x22]) {
                c.push(v);
            }
            a1s.push(a1 as u8);
            a2s.push(a2 as u8);
        }
        let [x11, x12, x21, x22] = cols;
        StagedDataset::new(
            vec![
                StageData {
                    treatment_name: "a1".into(),
                    treatment: a1s,
                    covariates: vec![("x11".into(), x11), ("x12".into(), x12)],
                },
                StageData {
                    treatment_name: "a2".into(),
                    treatment: a2s,
                    covariates: vec![("x21".into(), x21), ("x22".into(), x22)],
                },
            ],
            y,
            None,
        )
        .expect("generated data are well formed")
    }

    /// Analysis model of the benchmark: main terms only in the treatment and
    /// treatment-free models; the partially adaptive estimators get the full
    /// blip and the tailoring terms, the adaptive ones a blip restricted to
    /// the tailoring terms.
    pub fn analysis_specs(self, kind: EstimatorKind) -> Vec<StageSpec> {
        let stage = |hist: &[&str], blip: &[&str], tailor: &str| {
            let spec = StageSpec::new(
                main_terms(hist),
                main_terms(hist),
                main_terms(blip),
                main_terms(&[tailor]),
                vec![tailor.to_string()],
            );
            if kind.is_pats() {
                spec
            } else {
                spec.restricted_to_tailoring()
            }
        };
        if self.stages() == 1 {
            vec![stage(&["x1", "x2"], &["x1", "x2"], "x1")]
        } else {
            vec![
                stage(&["x11", "x12"], &["x11", "x12"], "x11"),
                stage(&["x11", "x12", "a1", "x21", "x22"], &["x21", "x22"], "x21"),
            ]
        }
    }

    /// Tailoring terms `[1, x]` of each stage, which the true parameters refer to.
    pub fn tailoring_terms(self) -> Vec<TermList> {
        self.tailoring_columns().iter().map(|c| main_terms(&[c])).collect()
    }

    /// Exact joint probability of the observed two-stage covariates and
    /// first treatment, `P(x11, x12, a1, x21, x22)`.
    fn two_stage_cells(self) -> Vec<([f64; 5], f64)> {
        let ti = f64::from(u8::from(self.treatment_interaction()));
        let mut out = Vec::with_capacity(32);
        for bits in 0..32u32 {
            let v: Vec<f64> = (0..5).map(|k| f64::from((bits >> k) & 1)).collect();
            let (x11, x12, a1, x21, x22) = (v[0], v[1], v[2], v[3], v[4]);
            let pa = expit(-1.0 + x11 + x12 + ti * x11 * x12);
            let p21 = expit(-1.0 + x11 + a1);
            let p22 = expit(-1.0 + x12 + a1);
            let pick = |p: f64, x: f64| if x == 1.0 { p } else { 1.0 - p };
            let pr = 0.25 * pick(pa, a1) * pick(p21, x21) * pick(p22, x22);
            out.push(([x11, x12, a1, x21, x22], pr));
        }
        out
    }

    /// `E[Y^{a1, d2} | x11, x12]` without the treatment-free baseline, for a
    /// stage-2 rule `d2(x21)`.
    fn stage_one_value(a1: f64, x11: f64, x12: f64, d2: impl Fn(f64) -> f64) -> f64 {
        let p21 = expit(-1.0 + x11 + a1);
        let p22 = expit(-1.0 + x12 + a1);
        let mut m = 0.0;
        for (x21, x22) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let pr = (if x21 == 1.0 { p21 } else { 1.0 - p21 }) * (if x22 == 1.0 { p22 } else { 1.0 - p22 });
            m += pr * regret(d2(x21), two_stage_blip(x21, x22));
        }
        -regret(a1, two_stage_blip(x11, x12)) - m
    }

    /// True tailored blip parameters `ψ*_j` over `[1, tailoring column]`,
    /// stage 1 first, by exact enumeration of the discrete distributions.
    pub fn true_psi_star(self) -> Vec<Vec<f64>> {
        if self.stages() == 1 {
            // E[0.5 - x1 + 1.5 x2 | x1] with x2 independent of x1
            let g = |x1: f64| 0.5 - x1 + 1.5 * 0.5;
            return vec![vec![g(0.0), g(1.0) - g(0.0)]];
        }
        // Stage 2: E[blip2 | x21] over the observational law of x22 given x21.
        let cells = self.two_stage_cells();
        let mut num = [0.0; 2];
        let mut den = [0.0; 2];
        for (v, pr) in &cells {
            let k = v[3] as usize;
            num[k] += pr * two_stage_blip(v[3], v[4]);
            den[k] += pr;
        }
        let g2 = [num[0] / den[0], num[1] / den[1]];
        let d2 = |x21: f64| f64::from(u8::from(g2[x21 as usize] > 0.0));
        // Stage 1: average over x12 (independent of x11) of the contrast in
        // E[Y^{a1, d2*} | x11, x12].
        let g1 = |x11: f64| {
            [0.0, 1.0]
                .iter()
                .map(|&x12| {
                    0.5 * (Self::stage_one_value(1.0, x11, x12, d2) - Self::stage_one_value(0.0, x11, x12, d2))
                })
                .sum::<f64>()
        };
        vec![vec![g1(0.0), g1(1.0) - g1(0.0)], vec![g2[0], g2[1] - g2[0]]]
    }

    /// The same parameters by simulating `draws` observational records and
    /// counterfactual trajectories.
    pub fn monte_carlo_psi_star(self, draws: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = child_rng(seed, tags::TRUTH, self as u64);
        if self.stages() == 1 {
            let ti = f64::from(u8::from(self.treatment_interaction()));
            let (mut s, mut c) = ([0.0; 2], [0usize; 2]);
            for _ in 0..draws {
                let x1 = bern(&mut rng, 0.5);
                let x2 = f64::from(bern(&mut rng, 0.5));
                let _ = bern(&mut rng, expit(-0.5 + f64::from(x1) + 0.5 * x2 + ti * f64::from(x1) * x2));
                s[x1 as usize] += 0.5 - f64::from(x1) + 1.5 * x2;
                c[x1 as usize] += 1;
            }
            let g = [s[0] / c[0] as f64, s[1] / c[1] as f64];
            return vec![vec![g[0], g[1] - g[0]]];
        }
        let data = self.generate(draws, rng.random());
        let x21 = data.history_column("x21", 2).unwrap();
        let x22 = data.history_column("x22", 2).unwrap();
        let (mut s, mut c) = ([0.0; 2], [0usize; 2]);
        for i in 0..draws {
            let k = x21[i] as usize;
            s[k] += two_stage_blip(x21[i], x22[i]);
            c[k] += 1;
        }
        let g2 = [s[0] / c[0] as f64, s[1] / c[1] as f64];
        let d2 = |x21: f64| f64::from(u8::from(g2[x21 as usize] > 0.0));

        // Counterfactual pairs under a1 = 1 and a1 = 0 with shared uniforms.
        let (mut s1, mut c1) = ([0.0; 2], [0usize; 2]);
        for _ in 0..draws {
            let x11 = f64::from(bern(&mut rng, 0.5));
            let x12 = f64::from(bern(&mut rng, 0.5));
            let (u21, u22): (f64, f64) = (rng.random(), rng.random());
            let y = |a1: f64| {
                let x21 = f64::from(u8::from(u21 < expit(-1.0 + x11 + a1)));
                let x22 = f64::from(u8::from(u22 < expit(-1.0 + x12 + a1)));
                -regret(a1, two_stage_blip(x11, x12)) - regret(d2(x21), two_stage_blip(x21, x22))
            };
            s1[x11 as usize] += y(1.0) - y(0.0);
            c1[x11 as usize] += 1;
        }
        let g1 = [s1[0] / c1[0] as f64, s1[1] / c1[1] as f64];
        vec![vec![g1[0], g1[1] - g1[0]], vec![g2[0], g2[1] - g2[0]]]
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Scenario::ALL.into_iter().find(|sc| sc.id() == key).ok_or_else(|| {
            let ids: Vec<&str> = Scenario::ALL.iter().map(|s| s.id()).collect();
            Error::InvalidArgument(format!("unknown scenario `{s}`; expected one of {}", ids.join(", ")))
        })
    }
}
