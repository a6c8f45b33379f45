//! Closed-form sensitivity mathematics for unmeasured confounding.
//!
//! An unmeasured confounder U with risk-ratio associations `rr_eu` (with the
//! exposure) and `rr_ud` (with the outcome) can distort an observed risk
//! ratio by at most the bias factor
//!
//! ```text
//! B = rr_ud * rr_eu / (rr_ud + rr_eu - 1)
//! ```
//!
//! The E-value is the smallest `max(rr_eu, rr_ud)` for which `B` reaches a
//! given multiplicative distance. For a non-inferiority analysis that distance
//! is `kappa = max(C/M, M/C)` between the governing confidence limit `C` and
//! the margin `M`, and the non-inferiority E-value is
//! `kappa + sqrt(kappa * (kappa - 1))`.

use serde::{Deserialize, Serialize};

use crate::conversion::EffectSummary;
use crate::error::{Error, Result};

/// A strictly positive, finite risk ratio.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct RiskRatio(f64);

impl RiskRatio {
    pub fn new(value: f64) -> Result<Self> {
        Self::named("risk ratio", value)
    }

    pub(crate) fn named(parameter: &'static str, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::domain(parameter, value, "must be finite"));
        }
        if value <= 0.0 {
            return Err(Error::domain(parameter, value, "must be positive"));
        }
        Ok(RiskRatio(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn recip(self) -> Self {
        RiskRatio(1.0 / self.0)
    }
}

impl TryFrom<f64> for RiskRatio {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        RiskRatio::new(value)
    }
}

/// Hypothesis orientation relative to the outcome coding.
///
/// `Causative` is used when D = 1 codes clinical success (margin typically
/// at or below 1, the lower confidence limit governs); `Preventive` when
/// D = 1 codes an adverse event (margin typically at or above 1, the upper
/// limit governs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Causative,
    Preventive,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "causative" => Ok(Direction::Causative),
            "preventive" => Ok(Direction::Preventive),
            other => Err(Error::Input(format!(
                "unknown direction '{other}' (expected causative or preventive)"
            ))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Causative => "causative",
            Direction::Preventive => "preventive",
        })
    }
}

/// Multiplicative distance between a limit and a margin; always `>= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Kappa(f64);

impl Kappa {
    pub const ONE: Kappa = Kappa(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::domain("kappa", value, "must be finite"));
        }
        if value < 1.0 {
            return Err(Error::domain("kappa", value, "must be at least 1"));
        }
        Ok(Kappa(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which quantity an E-value was computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    PointEstimate,
    ConfidenceLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalueResult {
    pub evalue: f64,
    pub basis: Option<Basis>,
    pub kappa: Kappa,
    /// The observed value already sits at or past the reference on the
    /// favourable side; no confounding is needed and the E-value is 1.
    pub already_at_or_beyond_reference: bool,
}

impl EvalueResult {
    fn from_kappa(kappa: Kappa) -> Self {
        EvalueResult {
            evalue: evalue_at(kappa.0),
            basis: None,
            kappa,
            already_at_or_beyond_reference: false,
        }
    }

    fn beyond_reference() -> Self {
        EvalueResult {
            evalue: 1.0,
            basis: None,
            kappa: Kappa::ONE,
            already_at_or_beyond_reference: true,
        }
    }

    pub fn with_basis(mut self, basis: Basis) -> Self {
        self.basis = Some(basis);
        self
    }
}

fn evalue_at(ratio: f64) -> f64 {
    ratio + (ratio * (ratio - 1.0)).sqrt()
}

fn at_least_one(parameter: &'static str, rr: RiskRatio) -> Result<f64> {
    if rr.0 < 1.0 {
        return Err(Error::domain(parameter, rr.0, "must be at least 1"));
    }
    Ok(rr.0)
}

/// Bias factor `B(rr_eu, rr_ud)`. Both associations must be expressed on the
/// `>= 1` side.
pub fn bias_factor(rr_eu: RiskRatio, rr_ud: RiskRatio) -> Result<f64> {
    let eu = at_least_one("rr_eu", rr_eu)?;
    let ud = at_least_one("rr_ud", rr_ud)?;
    Ok(bias_factor_unchecked(eu, ud))
}

pub(crate) fn bias_factor_unchecked(rr_eu: f64, rr_ud: f64) -> f64 {
    rr_ud * rr_eu / (rr_ud + rr_eu - 1.0)
}

/// E-value for explaining `rr_obs` away entirely (reference risk ratio 1).
pub fn classical_evalue(rr_obs: RiskRatio, direction: Direction) -> EvalueResult {
    let oriented = match direction {
        Direction::Causative => rr_obs.0,
        Direction::Preventive => 1.0 / rr_obs.0,
    };
    if oriented < 1.0 {
        return EvalueResult::beyond_reference();
    }
    EvalueResult::from_kappa(Kappa(oriented))
}

/// E-value for moving `rr_obs` to an arbitrary reference `rr_true`.
///
/// Causative: `{obs + sqrt(obs (obs - true))} / true`.
/// Preventive: `{1/obs + sqrt(1/obs (1/obs - 1/true))} * true`.
/// When the observed value is already on the favourable side of the
/// reference the result is 1 and flagged rather than NaN.
pub fn generalized_evalue(rr_obs: RiskRatio, rr_true: RiskRatio, direction: Direction) -> EvalueResult {
    let (obs, reference) = (rr_obs.0, rr_true.0);
    let evalue = match direction {
        Direction::Causative => {
            if obs < reference {
                return EvalueResult::beyond_reference();
            }
            (obs + (obs * (obs - reference)).sqrt()) / reference
        }
        Direction::Preventive => {
            if obs > reference {
                return EvalueResult::beyond_reference();
            }
            let inv_obs = 1.0 / obs;
            (inv_obs + (inv_obs * (inv_obs - 1.0 / reference)).sqrt()) * reference
        }
    };
    let ratio = match direction {
        Direction::Causative => obs / reference,
        Direction::Preventive => reference / obs,
    };
    EvalueResult {
        evalue: evalue.max(1.0),
        basis: None,
        kappa: Kappa(ratio.max(1.0)),
        already_at_or_beyond_reference: false,
    }
}

/// `kappa = max(c / m, m / c)`.
///
/// Evaluated as `(1/lo) * (1/(1/hi))` so that recoding the outcome, which
/// replaces both arguments by their floating-point reciprocals, returns the
/// bit-identical value: with `R(x) = 1/x` rounded to nearest,
/// `R(R(R(x))) == R(x)`, so the recoded call multiplies the same two factors.
/// A plain `c / m` differs from the recoded value by an ulp about a third
/// of the time.
pub fn kappa(c: RiskRatio, m: RiskRatio) -> Kappa {
    let (c, m) = (c.0, m.0);
    if 1.0 / c == 1.0 / m {
        return Kappa::ONE;
    }
    let (lo, hi) = if c < m { (c, m) } else { (m, c) };
    Kappa(((1.0 / lo) * (1.0 / (1.0 / hi))).max(1.0))
}

/// Non-inferiority E-value `kappa + sqrt(kappa (kappa - 1))`.
pub fn nie(kappa: Kappa) -> EvalueResult {
    EvalueResult::from_kappa(kappa)
}

/// The confidence limit compared with the margin: lower bound for causative
/// hypotheses, upper bound for preventive ones.
pub fn governing_limit(estimate: &EffectSummary, direction: Direction) -> RiskRatio {
    match direction {
        Direction::Causative => RiskRatio(estimate.lower()),
        Direction::Preventive => RiskRatio(estimate.upper()),
    }
}
