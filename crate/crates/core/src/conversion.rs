//! Hazard-ratio to risk-ratio conversion and the outcome-frequency rule.
//!
//! When the outcome is rare a hazard ratio is used as a risk ratio directly.
//! When it is common (at or above a prevalence threshold, 15% by default) the
//! hazard ratio is first converted with
//! `RR ~ (1 - 0.5^sqrt(HR)) / (1 - 0.5^sqrt(1/HR))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FREQUENCY_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    RR,
    HR,
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RR" => Ok(Measure::RR),
            "HR" => Ok(Measure::HR),
            _ => Err(Error::UnsupportedMeasure(s.trim().to_string())),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Measure::RR => "RR",
            Measure::HR => "HR",
        })
    }
}

/// A published effect estimate with its two-sided 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectSummary {
    measure: Measure,
    point: f64,
    lower: f64,
    upper: f64,
}

impl EffectSummary {
    /// Requires `0 < lower <= point <= upper`, all finite.
    pub fn new(measure: Measure, point: f64, lower: f64, upper: f64) -> Result<Self> {
        for (name, v) in [("point", point), ("lower", lower), ("upper", upper)] {
            if !v.is_finite() {
                return Err(Error::Input(format!("{name} must be finite, got {v}")));
            }
            if v <= 0.0 {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if lower > point || point > upper {
            return Err(Error::Input(format!(
                "bounds out of order: expected lower <= point <= upper, got {lower} / {point} / {upper}"
            )));
        }
        Ok(EffectSummary {
            measure,
            point,
            lower,
            upper,
        })
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn point(&self) -> f64 {
        self.point
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKind {
    Rare,
    Common,
    FromCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyClass {
    Rare,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub events: u64,
    pub n: u64,
}

impl ArmCounts {
    pub fn new(events: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("arm size n must be positive".into()));
        }
        if events > n {
            return Err(Error::Input(format!("events ({events}) exceed arm size ({n})")));
        }
        Ok(ArmCounts { events, n })
    }

    pub fn proportion(&self) -> f64 {
        self.events as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeFrequency {
    pub kind: FrequencyKind,
    /// (exposed, control) counts; required when `kind` is `FromCounts`.
    pub events_per_arm: Option<(ArmCounts, ArmCounts)>,
    pub threshold: f64,
}

impl OutcomeFrequency {
    pub fn rare() -> Self {
        Self::of_kind(FrequencyKind::Rare)
    }

    pub fn common() -> Self {
        Self::of_kind(FrequencyKind::Common)
    }

    pub fn from_counts(exposed: ArmCounts, control: ArmCounts) -> Self {
        OutcomeFrequency {
            kind: FrequencyKind::FromCounts,
            events_per_arm: Some((exposed, control)),
            threshold: DEFAULT_FREQUENCY_THRESHOLD,
        }
    }

    fn of_kind(kind: FrequencyKind) -> Self {
        OutcomeFrequency {
            kind,
            events_per_arm: None,
            threshold: DEFAULT_FREQUENCY_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        validate_threshold(threshold)?;
        self.threshold = threshold;
        Ok(self)
    }
}

pub fn validate_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "frequency threshold must lie strictly between 0 and 1, got {threshold}"
        )))
    }
}

/// Approximate risk ratio for a hazard ratio (common-outcome conversion).
pub fn hr_to_rr(hr: f64) -> Result<f64> {
    if !hr.is_finite() {
        return Err(Error::domain("hr", hr, "must be finite"));
    }
    if hr <= 0.0 {
        return Err(Error::domain("hr", hr, "must be positive"));
    }
    // Removable point: both halves equal 0.5 here, keep the result exact.
    if (hr - 1.0).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((1.0 - 0.5f64.powf(hr.sqrt())) / (1.0 - 0.5f64.powf((1.0 / hr).sqrt())))
}

/// Rare/Common classification. Counts use the largest per-arm prevalence.
pub fn classify_frequency(freq: &OutcomeFrequency) -> Result<FrequencyClass> {
    validate_threshold(freq.threshold)?;
    match freq.kind {
        FrequencyKind::Rare => Ok(FrequencyClass::Rare),
        FrequencyKind::Common => Ok(FrequencyClass::Common),
        FrequencyKind::FromCounts => {
            let (exposed, control) = freq
                .events_per_arm
                .ok_or_else(|| Error::Input("frequency 'from_counts' requires event counts for both arms".into()))?;
            for arm in [exposed, control] {
                ArmCounts::new(arm.events, arm.n)?;
            }
            let prevalence = exposed.proportion().max(control.proportion());
            if prevalence >= freq.threshold {
                Ok(FrequencyClass::Common)
            } else {
                Ok(FrequencyClass::Rare)
            }
        }
    }
}

/// An estimate and margin expressed on the risk-ratio scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrScale {
    pub estimate: EffectSummary,
    pub margin: f64,
    pub conversion_applied: bool,
}

/// Bring an estimate and its margin (declared on the estimate's scale) onto
/// the risk-ratio scale.
pub fn to_rr_scale(estimate: &EffectSummary, margin: f64, freq: &OutcomeFrequency) -> Result<RrScale> {
    if !margin.is_finite() || margin <= 0.0 {
        return Err(Error::domain("margin", margin, "must be positive and finite"));
    }
    let as_rr = |e: &EffectSummary| EffectSummary {
        measure: Measure::RR,
        ..*e
    };
    match estimate.measure {
        Measure::RR => Ok(RrScale {
            estimate: *estimate,
            margin,
            conversion_applied: false,
        }),
        Measure::HR => match classify_frequency(freq)? {
            FrequencyClass::Rare => Ok(RrScale {
                estimate: as_rr(estimate),
                margin,
                conversion_applied: false,
            }),
            FrequencyClass::Common => {
                let estimate = EffectSummary::new(
                    Measure::RR,
                    hr_to_rr(estimate.point)?,
                    hr_to_rr(estimate.lower)?,
                    hr_to_rr(estimate.upper)?,
                )?;
                Ok(RrScale {
                    estimate,
                    margin: hr_to_rr(margin)?,
                    conversion_applied: true,
                })
            }
        },
    }
}
