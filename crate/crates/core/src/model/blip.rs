use crate::error::{Error, Result};
use crate::model::dataset::StagedDataset;
use crate::model::terms::{HistoryLookup, TermList};

/// Which blip a coefficient vector parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlipKind {
    /// Full-history blip of an adaptive strategy, `γ_j(a, h; ψ_j)`.
    Ats,
    /// Tailored blip `γ*_j(a, h*; ψ*_j)`.
    Pats,
    /// Full-history blip assuming tailored future decisions, `γ†_j(a, h; ψ†_j)`.
    Intermediate,
}

/// Blip coefficients `ψ` together with the terms they multiply. The blip is
/// `a · (z(h) · ψ)`, zero under the reference treatment `a = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlipCoefficients {
    pub stage: usize,
    pub kind: BlipKind,
    terms: TermList,
    psi: Vec<f64>,
}

impl BlipCoefficients {
    pub fn new(stage: usize, kind: BlipKind, terms: TermList, psi: Vec<f64>) -> Result<Self> {
        if psi.len() != terms.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for {} blip terms",
                psi.len(),
                terms.len()
            )));
        }
        if let Some(i) = psi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "blip coefficient `{}` is not finite",
                terms.names()[i]
            )));
        }
        Ok(BlipCoefficients {
            stage,
            kind,
            terms,
            psi,
        })
    }

    pub fn terms(&self) -> &TermList {
        &self.terms
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn with_kind(&self, kind: BlipKind) -> Self {
        BlipCoefficients {
            kind,
            ..self.clone()
        }
    }

    /// `γ(a, h) = a · z(h)ψ`.
    pub fn blip_value(&self, a: u8, h: &(impl HistoryLookup + ?Sized)) -> Result<f64> {
        match a {
            0 => Ok(0.0),
            1 => {
                let row = self.terms.design_row(h)?;
                Ok(row.iter().zip(&self.psi).map(|(z, p)| z * p).sum())
            }
            other => Err(Error::Unsupported(format!(
                "treatment value {other}; only binary treatments are supported"
            ))),
        }
    }

    /// Treat iff the blip of treating is strictly positive; ties go to the
    /// reference treatment 0.
    pub fn optimal_decision(&self, h: &(impl HistoryLookup + ?Sized)) -> Result<u8> {
        Ok(u8::from(self.blip_value(1, h)? > 0.0))
    }

    /// `γ(1, h_i)` for every subject of `data` at `stage`.
    pub fn contrasts(&self, data: &StagedDataset, stage: usize) -> Result<Vec<f64>> {
        Ok(self.terms.design(data, stage)?.mul_vec(&self.psi))
    }
}
