//! Diagnostic cases pairing accuracy changes with range/null clamping.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DecompositionError, DisplacementRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseThresholds {
    /// Largest prior-task accuracy drop still counted as preserved stability.
    pub eps_stability: f64,
    /// Largest new-task accuracy deficit (vs. baseline) still counted as
    /// preserved plasticity.
    pub eps_plasticity: f64,
    /// A subspace is clamped when its displacement is below this fraction of
    /// the baseline displacement.
    pub clamp_fraction: f64,
}

impl Default for CaseThresholds {
    fn default() -> Self {
        Self {
            eps_stability: 0.02,
            eps_plasticity: 0.02,
            clamp_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityCase {
    /// Preserved, range clamped.
    #[serde(rename = "1")]
    Case1,
    /// Preserved, range not clamped.
    #[serde(rename = "2")]
    Case2,
    /// Hampered, range not clamped.
    #[serde(rename = "4")]
    Case4,
    /// Hampered with the range clamped: not a valid diagnosis, the
    /// measurement is suspect.
    #[serde(rename = "inconsistent")]
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlasticityCase {
    /// Preserved, null space clamped.
    #[serde(rename = "5")]
    Case5,
    /// Preserved, null space not clamped.
    #[serde(rename = "6")]
    Case6,
    /// Hampered, null space clamped.
    #[serde(rename = "7")]
    Case7,
    /// Hampered, null space not clamped.
    #[serde(rename = "8")]
    Case8,
}

impl fmt::Display for StabilityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StabilityCase::Case1 => "1",
            StabilityCase::Case2 => "2",
            StabilityCase::Case4 => "4",
            StabilityCase::Inconsistent => "inconsistent",
        })
    }
}

impl fmt::Display for PlasticityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlasticityCase::Case5 => "5",
            PlasticityCase::Case6 => "6",
            PlasticityCase::Case7 => "7",
            PlasticityCase::Case8 => "8",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseInputs {
    /// Prior-task accuracy before minus after learning the new task.
    pub stability_drop: f64,
    /// New-task accuracy of the baseline minus this run.
    pub plasticity_drop: f64,
    pub range_disp: f64,
    pub null_disp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseLabel {
    pub stability_case: StabilityCase,
    pub plasticity_case: PlasticityCase,
    pub stability_preserved: bool,
    pub plasticity_preserved: bool,
    pub range_clamped: bool,
    pub null_clamped: bool,
    pub thresholds: CaseThresholds,
}

/// Classifies a run against the unconstrained baseline's displacement.
pub fn classify_case(
    inputs: &CaseInputs,
    baseline: &DisplacementRecord,
    thresholds: &CaseThresholds,
) -> Result<CaseLabel, DecompositionError> {
    let (base_range, base_null) = (baseline.d_range.mean, baseline.d_null.mean);
    if !(base_range > 0.0 && base_null > 0.0) {
        return Err(DecompositionError::Unavailable(format!(
            "baseline displacement must be positive (range {base_range}, null {base_null})"
        )));
    }
    let stability_preserved = inputs.stability_drop <= thresholds.eps_stability;
    let plasticity_preserved = inputs.plasticity_drop <= thresholds.eps_plasticity;
    let range_clamped = inputs.range_disp < thresholds.clamp_fraction * base_range;
    let null_clamped = inputs.null_disp < thresholds.clamp_fraction * base_null;
    let stability_case = match (stability_preserved, range_clamped) {
        (true, true) => StabilityCase::Case1,
        (true, false) => StabilityCase::Case2,
        (false, true) => StabilityCase::Inconsistent,
        (false, false) => StabilityCase::Case4,
    };
    let plasticity_case = match (plasticity_preserved, null_clamped) {
        (true, true) => PlasticityCase::Case5,
        (true, false) => PlasticityCase::Case6,
        (false, true) => PlasticityCase::Case7,
        (false, false) => PlasticityCase::Case8,
    };
    Ok(CaseLabel {
        stability_case,
        plasticity_case,
        stability_preserved,
        plasticity_preserved,
        range_clamped,
        null_clamped,
        thresholds: *thresholds,
    })
}
