//! The kappa-contour of the bias factor in the (rr_eu, rr_ud) plane.
//!
//! Solving `kappa = rr_ud * rr_eu / (rr_ud + rr_eu - 1)` for `rr_ud` gives
//! `rr_ud = kappa (rr_eu - 1) / (rr_eu - kappa)`, a hyperbola with a vertical
//! asymptote at `rr_eu = kappa` and a horizontal one at `rr_ud = kappa`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sensitivity::{bias_factor_unchecked, nie, Kappa};

/// Relative offset above the vertical asymptote where sampling starts.
pub const ASYMPTOTE_OFFSET: f64 = 1e-3;
/// Relative tolerance for "on the contour".
pub const CONTOUR_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourPoint {
    pub rr_eu: f64,
    pub rr_ud: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourCurve {
    pub kappa: Kappa,
    /// Sorted by strictly increasing `rr_eu`.
    pub points: Vec<ContourPoint>,
    /// `(nie(kappa), nie(kappa))`.
    pub equal_point: ContourPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourPosition {
    Sufficient,
    OnContour,
    Insufficient,
}

impl ContourPosition {
    /// On or above the contour.
    pub fn is_sufficient(self) -> bool {
        !matches!(self, ContourPosition::Insufficient)
    }
}

/// `rr_ud` on the kappa-contour for a given `rr_eu > kappa`.
pub fn contour_rr_ud(kappa: Kappa, rr_eu: f64) -> Result<f64> {
    let k = kappa.value();
    if !rr_eu.is_finite() {
        return Err(Error::domain("rr_eu", rr_eu, "must be finite"));
    }
    if rr_eu <= k {
        return Err(Error::domain("rr_eu", rr_eu, "is at or below the contour asymptote"));
    }
    if k == 1.0 {
        return Ok(1.0);
    }
    Ok(k * (rr_eu - 1.0) / (rr_eu - k))
}

/// The `rr_eu` at which the contour crosses the horizontal line `rr_ud`.
/// The curve is symmetric, so this is the same solve with the roles swapped.
pub fn contour_rr_eu(kappa: Kappa, rr_ud: f64) -> Result<f64> {
    contour_rr_ud(kappa, rr_ud).map_err(|_| Error::domain("rr_ud", rr_ud, "is at or below the contour asymptote"))
}

/// Default upper end of the sampled `rr_eu` range: `max(10, 4 nie(kappa))`.
pub fn default_rr_eu_max(kappa: Kappa) -> f64 {
    (4.0 * nie(kappa).evalue).max(10.0)
}

/// Sample `n_points` log-spaced points on the contour over
/// `(kappa (1 + offset), rr_eu_max]`. The sample nearest the equal point
/// is replaced by the equal point itself when it falls in range.
pub fn sample_contour(kappa: Kappa, n_points: usize, rr_eu_max: f64) -> Result<ContourCurve> {
    let start = kappa.value() * (1.0 + ASYMPTOTE_OFFSET);
    sample_contour_between(kappa, n_points, start, rr_eu_max)
}

/// Like [`sample_contour`] with an explicit lower end, which must lie above
/// the asymptote. Useful for clipping the steep branch to a plot window.
pub fn sample_contour_between(kappa: Kappa, n_points: usize, rr_eu_min: f64, rr_eu_max: f64) -> Result<ContourCurve> {
    if n_points < 2 {
        return Err(Error::Input(format!("n_points must be at least 2, got {n_points}")));
    }
    if !(rr_eu_min.is_finite() && rr_eu_max.is_finite()) {
        return Err(Error::Input("contour range must be finite".into()));
    }
    if rr_eu_min <= kappa.value() {
        return Err(Error::Input(format!(
            "contour range start {rr_eu_min} must exceed kappa {}",
            kappa.value()
        )));
    }
    if rr_eu_max <= rr_eu_min {
        return Err(Error::Input(format!(
            "rr_eu_max {rr_eu_max} must exceed the range start {rr_eu_min}"
        )));
    }

    let (lo, hi) = (rr_eu_min.ln(), rr_eu_max.ln());
    let step = (hi - lo) / (n_points - 1) as f64;
    let mut xs: Vec<f64> = (0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                rr_eu_max
            } else {
                (lo + step * i as f64).exp()
            }
        })
        .collect();

    let e = nie(kappa).evalue;
    let equal_point = ContourPoint { rr_eu: e, rr_ud: e };
    if e >= rr_eu_min && e <= rr_eu_max {
        let target = e.ln();
        let nearest = xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.ln() - target).abs().total_cmp(&(b.1.ln() - target).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        xs[nearest] = e;
    }

    let points = xs
        .into_iter()
        .map(|x| {
            let y = if x == e { e } else { contour_rr_ud(kappa, x)? };
            Ok(ContourPoint { rr_eu: x, rr_ud: y })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ContourCurve {
        kappa,
        points,
        equal_point,
    })
}

/// Whether a confounder of strength (rr_eu, rr_ud) could move the limit to
/// the margin.
pub fn classify_point(kappa: Kappa, rr_eu: f64, rr_ud: f64) -> Result<ContourPosition> {
    for (name, v) in [("rr_eu", rr_eu), ("rr_ud", rr_ud)] {
        if !v.is_finite() || v < 1.0 {
            return Err(Error::domain(name, v, "must be finite and at least 1"));
        }
    }
    let b = bias_factor_unchecked(rr_eu, rr_ud);
    let k = kappa.value();
    let rel = (b - k) / k;
    Ok(if rel.abs() <= CONTOUR_TOLERANCE {
        ContourPosition::OnContour
    } else if rel > 0.0 {
        ContourPosition::Sufficient
    } else {
        ContourPosition::Insufficient
    })
}
