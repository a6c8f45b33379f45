//! Brute-force check of the bias-factor bound.
//!
//! A [`ConfounderScenario`] is a world with a binary confounder U whose
//! prevalence depends on the exposure and whose outcome risk depends on U
//! only. The exposure therefore has no effect within strata (true risk
//! ratio 1) and every departure of the observed risk ratio from 1 is
//! confounding. The bound says the observed ratio lies in `[1/B', B]` where
//! B and B' are the bias factors of the scenario's associations, oriented
//! for the causative and preventive direction respectively.
//!
//! Nothing here calls the closed-form E-value code except to read B off as
//! the quantity under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contour::{classify_point, ContourPosition};
use crate::error::{Error, Result};
use crate::sensitivity::{bias_factor_unchecked, Kappa};

/// Absolute slack allowed on the bound before it counts as violated.
pub const BOUND_SLACK: f64 = 1e-9;
/// Scenario probabilities are drawn uniformly on this interval.
pub const SCENARIO_RANGE: (f64, f64) = (0.01, 0.99);
pub const MIN_GRID_RESOLUTION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfounderScenario {
    pub p_u_given_e1: f64,
    pub p_u_given_e0: f64,
    pub risk_d_given_u1: f64,
    pub risk_d_given_u0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioAssociations {
    pub rr_eu: f64,
    pub rr_ud: f64,
    pub rr_obs: f64,
}

impl ConfounderScenario {
    pub fn new(p_u_given_e1: f64, p_u_given_e0: f64, risk_d_given_u1: f64, risk_d_given_u0: f64) -> Result<Self> {
        let fields = [
            ("p_u_given_e1", p_u_given_e1),
            ("p_u_given_e0", p_u_given_e0),
            ("risk_d_given_u1", risk_d_given_u1),
            ("risk_d_given_u0", risk_d_given_u0),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(name, v, "must lie in (0, 1]"));
            }
        }
        Ok(ConfounderScenario {
            p_u_given_e1,
            p_u_given_e0,
            risk_d_given_u1,
            risk_d_given_u0,
        })
    }

    /// The same world with the exposure labels swapped; its observed risk
    /// ratio is the reciprocal of this one's.
    pub fn exposure_swapped(&self) -> Self {
        ConfounderScenario {
            p_u_given_e1: self.p_u_given_e0,
            p_u_given_e0: self.p_u_given_e1,
            ..*self
        }
    }

    /// Associations oriented for the causative bound.
    ///
    /// `rr_eu` is the largest ratio `P(U = u | E = 1) / P(U = u | E = 0)`
    /// over both levels of U, and `rr_ud` the larger of the two risk ratios
    /// across U strata, so both are at least 1.
    pub fn associations(&self) -> ScenarioAssociations {
        let (p1, p0) = (self.p_u_given_e1, self.p_u_given_e0);
        let (r1, r0) = (self.risk_d_given_u1, self.risk_d_given_u0);
        ScenarioAssociations {
            rr_eu: (p1 / p0).max((1.0 - p1) / (1.0 - p0)),
            rr_ud: (r1 / r0).max(r0 / r1),
            rr_obs: observed_rr(self),
        }
    }
}

/// Marginal risk ratio of E on D implied by the scenario.
pub fn observed_rr(scenario: &ConfounderScenario) -> f64 {
    let (p1, p0) = (scenario.p_u_given_e1, scenario.p_u_given_e0);
    let (r1, r0) = (scenario.risk_d_given_u1, scenario.risk_d_given_u0);
    (p1 * r1 + (1.0 - p1) * r0) / (p0 * r1 + (1.0 - p0) * r0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub scenario: ConfounderScenario,
    pub rr_obs: f64,
    /// Bias factor for the causative orientation; `rr_obs <= upper_bound`.
    pub upper_bound: f64,
    /// Reciprocal of the preventive-orientation bias factor; `rr_obs >= lower_bound`.
    pub lower_bound: f64,
    /// `min(upper_bound - rr_obs, rr_obs - lower_bound)`; negative beyond
    /// the slack means a violation.
    pub margin: f64,
}

impl BoundCheck {
    pub fn violated(&self) -> bool {
        self.margin < -BOUND_SLACK
    }
}

/// Check both bounds for one scenario.
///
/// The preventive bound is the causative one applied to the
/// exposure-swapped world, whose observed ratio is `1 / rr_obs`.
pub fn check_scenario(scenario: &ConfounderScenario) -> BoundCheck {
    let causative = scenario.associations();
    let upper_bound = bias_factor_unchecked(causative.rr_eu, causative.rr_ud);
    let preventive = scenario.exposure_swapped().associations();
    let lower_bound = 1.0 / bias_factor_unchecked(preventive.rr_eu, preventive.rr_ud);
    let rr_obs = causative.rr_obs;
    BoundCheck {
        scenario: *scenario,
        rr_obs,
        upper_bound,
        lower_bound,
        margin: (upper_bound - rr_obs).min(rr_obs - lower_bound),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n_random: usize,
    pub seed: u64,
    pub violations: usize,
    /// The check with the smallest margin.
    pub worst: BoundCheck,
}

/// Draw `n_random` scenarios from a seeded ChaCha8 stream and check the
/// bound on each.
pub fn verify_bound(n_random: usize, seed: u64) -> Result<BoundReport> {
    if n_random == 0 {
        return Err(Error::Input("n_random must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = SCENARIO_RANGE;
    let mut violations = 0;
    let mut worst: Option<BoundCheck> = None;
    for _ in 0..n_random {
        let mut draw = || rng.random_range(lo..hi);
        let scenario = ConfounderScenario {
            p_u_given_e1: draw(),
            p_u_given_e0: draw(),
            risk_d_given_u1: draw(),
            risk_d_given_u0: draw(),
        };
        let check = check_scenario(&scenario);
        if check.violated() {
            violations += 1;
        }
        if worst.is_none_or(|w| check.margin < w.margin) {
            worst = Some(check);
        }
    }
    Ok(BoundReport {
        n_random,
        seed,
        violations,
        worst: worst.expect("n_random >= 1"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridMaximum {
    pub max_rr: f64,
    pub argmax: ConfounderScenario,
}

fn check_cap(name: &'static str, cap: f64) -> Result<()> {
    if !cap.is_finite() || cap < 1.0 {
        return Err(Error::Input(format!("{name} must be finite and at least 1, got {cap}")));
    }
    Ok(())
}

fn within_cap(value: f64, cap: f64) -> bool {
    value <= cap * (1.0 + 1e-12)
}

/// Largest observed risk ratio over all grid scenarios whose associations
/// stay within the caps.
///
/// Every probability ranges over `{1/res, 2/res, ..., 1}`. For fixed
/// exposure-confounder prevalences the observed ratio depends on the
/// outcome risks only through `gamma = r1 / r0` and is monotone in `gamma`,
/// so the maximum over the admissible `(r0, r1)` pairs is reached at the
/// smallest or largest admissible `gamma`. The search keeps those two and
/// enumerates every prevalence pair against both.
pub fn max_observed_rr(cap_eu: f64, cap_ud: f64, grid_resolution: usize) -> Result<GridMaximum> {
    check_cap("cap_eu", cap_eu)?;
    check_cap("cap_ud", cap_ud)?;
    if grid_resolution < MIN_GRID_RESOLUTION {
        return Err(Error::Input(format!(
            "grid_resolution must be at least {MIN_GRID_RESOLUTION}, got {grid_resolution}"
        )));
    }
    let grid: Vec<f64> = (1..=grid_resolution)
        .map(|i| i as f64 / grid_resolution as f64)
        .collect();

    // (gamma, r1, r0) at the admissible extremes; r1 == r0 is always admissible.
    let mut gamma_lo = (1.0, grid[0], grid[0]);
    let mut gamma_hi = gamma_lo;
    for &r0 in &grid {
        for &r1 in &grid {
            let gamma = r1 / r0;
            if !within_cap(gamma.max(1.0 / gamma), cap_ud) {
                continue;
            }
            if gamma < gamma_lo.0 {
                gamma_lo = (gamma, r1, r0);
            }
            if gamma > gamma_hi.0 {
                gamma_hi = (gamma, r1, r0);
            }
        }
    }

    let mut best = GridMaximum {
        max_rr: 1.0,
        argmax: ConfounderScenario {
            p_u_given_e1: grid[0],
            p_u_given_e0: grid[0],
            risk_d_given_u1: grid[0],
            risk_d_given_u0: grid[0],
        },
    };
    for &p0 in &grid {
        for &p1 in &grid {
            let rr_eu = (p1 / p0).max((1.0 - p1) / (1.0 - p0));
            if !within_cap(rr_eu, cap_eu) {
                continue;
            }
            for (_, r1, r0) in [gamma_lo, gamma_hi] {
                let scenario = ConfounderScenario {
                    p_u_given_e1: p1,
                    p_u_given_e0: p0,
                    risk_d_given_u1: r1,
                    risk_d_given_u0: r0,
                };
                let rr = observed_rr(&scenario);
                if rr > best.max_rr {
                    best = GridMaximum {
                        max_rr: rr,
                        argmax: scenario,
                    };
                }
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufficiencyCheck {
    pub rr_eu: f64,
    pub rr_ud: f64,
    pub position: ContourPosition,
    pub attained: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficiencyReport {
    pub kappa: Kappa,
    pub grid_resolution: usize,
    pub checks: Vec<SufficiencyCheck>,
    pub all_consistent: bool,
}

/// Relative shortfall tolerated when a capped grid search has to attain a
/// target: the prevalence and risk grids can only approach the extremal
/// scenario to within about `cap / resolution` in relative terms.
pub fn attainment_tolerance(cap_eu: f64, cap_ud: f64, grid_resolution: usize) -> f64 {
    2.0 * cap_eu.max(cap_ud) / grid_resolution as f64
}

/// Check one confounder strength against the kappa-contour: below the
/// contour the grid maximum must stay under kappa; on or above it, the
/// grid must reach kappa up to [`attainment_tolerance`].
pub fn check_sufficiency(kappa: Kappa, rr_eu: f64, rr_ud: f64, grid_resolution: usize) -> Result<SufficiencyCheck> {
    let position = classify_point(kappa, rr_eu, rr_ud)?;
    let attained = max_observed_rr(rr_eu, rr_ud, grid_resolution)?.max_rr;
    let k = kappa.value();
    let consistent = if position.is_sufficient() {
        attained >= k * (1.0 - attainment_tolerance(rr_eu, rr_ud, grid_resolution))
    } else {
        attained < k
    };
    Ok(SufficiencyCheck {
        rr_eu,
        rr_ud,
        position,
        attained,
        consistent,
    })
}

/// Check a 7 x 7 log-spaced lattice of confounder strengths spanning
/// `[1, 2 nie(kappa)]` on both axes against the contour.
pub fn verify_nie_sufficiency(kappa: Kappa, grid_resolution: usize) -> Result<SufficiencyReport> {
    const STEPS: usize = 7;
    let top = (2.0 * crate::sensitivity::nie(kappa).evalue).max(2.0);
    let axis: Vec<f64> = (0..STEPS)
        .map(|i| (top.ln() * i as f64 / (STEPS - 1) as f64).exp())
        .collect();
    let mut checks = Vec::with_capacity(STEPS * STEPS);
    for &x in &axis {
        for &y in &axis {
            checks.push(check_sufficiency(kappa, x, y, grid_resolution)?);
        }
    }
    let all_consistent = checks.iter().all(|c| c.consistent);
    Ok(SufficiencyReport {
        kappa,
        grid_resolution,
        checks,
        all_consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(p1: f64, p0: f64, r1: f64, r0: f64) -> ConfounderScenario {
        ConfounderScenario::new(p1, p0, r1, r0).unwrap()
    }

    #[test]
    fn observed_rr_examples() {
        assert_eq!(observed_rr(&scenario(0.3, 0.3, 0.9, 0.1)), 1.0);
        assert_eq!(observed_rr(&scenario(0.9, 0.1, 0.4, 0.4)), 1.0);
        let rr = observed_rr(&scenario(1.0, 0.5, 0.4, 0.2));
        assert!((rr - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn scenario_validation() {
        assert!(ConfounderScenario::new(0.0, 0.5, 0.5, 0.5).is_err());
        assert!(ConfounderScenario::new(0.5, 1.1, 0.5, 0.5).is_err());
        assert!(ConfounderScenario::new(0.5, 0.5, f64::NAN, 0.5).is_err());
        assert!(ConfounderScenario::new(1.0, 1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn associations_are_oriented() {
        let a = scenario(0.2, 0.6, 0.1, 0.5).associations();
        assert!((a.rr_eu - 2.0).abs() < 1e-12);
        assert!((a.rr_ud - 5.0).abs() < 1e-12);
        // Exposure-swapped world reverses the observed ratio.
        let s = scenario(0.2, 0.6, 0.1, 0.5);
        let prod = observed_rr(&s) * observed_rr(&s.exposure_swapped());
        assert!((prod - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_scenario_satisfies_bound() {
        let c = check_scenario(&scenario(0.4, 0.4, 0.7, 0.2));
        assert_eq!(c.rr_obs, 1.0);
        assert!(!c.violated());
        assert!(c.rr_obs <= c.upper_bound + BOUND_SLACK);
    }

    #[test]
    fn witness_attains_the_bound() {
        let c = check_scenario(&scenario(1.0, 0.5, 0.4, 0.2));
        assert!((c.upper_bound - 4.0 / 3.0).abs() < 1e-12);
        assert!((c.rr_obs - c.upper_bound).abs() < 1e-12);
        assert!(!c.violated());
    }

    #[test]
    fn verify_bound_is_clean_and_deterministic() {
        let a = verify_bound(2_000, 11).unwrap();
        assert_eq!(a.violations, 0);
        assert!(a.worst.margin >= -BOUND_SLACK);
        assert_eq!(a, verify_bound(2_000, 11).unwrap());
        assert_ne!(a.worst, verify_bound(2_000, 12).unwrap().worst);
    }

    #[test]
    fn verify_bound_requires_draws() {
        assert!(verify_bound(0, 1).is_err());
        let one = verify_bound(1, 7).unwrap();
        assert_eq!(one.n_random, 1);
        assert_eq!(one.worst.scenario, {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut d = || rng.random_range(0.01..0.99);
            ConfounderScenario {
                p_u_given_e1: d(),
                p_u_given_e0: d(),
                risk_d_given_u1: d(),
                risk_d_given_u0: d(),
            }
        });
    }

    #[test]
    fn grid_maximum_with_no_exposure_association() {
        let m = max_observed_rr(1.0, 8.0, 50).unwrap();
        assert!((m.max_rr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_maximum_input_validation() {
        assert!(max_observed_rr(0.5, 2.0, 50).is_err());
        assert!(max_observed_rr(2.0, f64::NAN, 50).is_err());
        assert!(max_observed_rr(2.0, 2.0, 9).is_err());
    }

    #[test]
    fn grid_maximum_respects_caps() {
        let m = max_observed_rr(2.0, 2.0, 200).unwrap();
        let a = m.argmax.associations();
        assert!(a.rr_eu <= 2.0 + 1e-9 && a.rr_ud <= 2.0 + 1e-9);
        assert_eq!(a.rr_obs, m.max_rr);
        assert!((m.max_rr - 4.0 / 3.0).abs() < 0.01);
    }

    /// Full four-way enumeration, no reduction.
    fn naive_max(cap_eu: f64, cap_ud: f64, res: usize) -> f64 {
        let grid: Vec<f64> = (1..=res).map(|i| i as f64 / res as f64).collect();
        let mut best = 1.0f64;
        for &p0 in &grid {
            for &p1 in &grid {
                for &r0 in &grid {
                    for &r1 in &grid {
                        let s = scenario(p1, p0, r1, r0);
                        let a = s.associations();
                        if within_cap(a.rr_eu, cap_eu) && within_cap(a.rr_ud, cap_ud) {
                            best = best.max(a.rr_obs);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn reduced_search_matches_full_enumeration() {
        for (x, y) in [(1.5, 1.5), (2.0, 3.0), (3.0, 1.2), (1.0, 4.0)] {
            let fast = max_observed_rr(x, y, 24).unwrap().max_rr;
            let slow = naive_max(x, y, 24);
            assert!((fast - slow).abs() < 1e-12, "caps ({x}, {y}): {fast} vs {slow}");
        }
    }

    #[test]
    fn sufficiency_examples() {
        let below = check_sufficiency(Kappa::new(1.34).unwrap(), 1.1, 1.1, 200).unwrap();
        assert_eq!(below.position, ContourPosition::Insufficient);
        assert!(below.attained < 1.34 && below.consistent);
        assert!((below.attained - 1.21 / 1.2).abs() < 0.01);

        let above = check_sufficiency(Kappa::new(1.02).unwrap(), 3.0, 3.0, 200).unwrap();
        assert_eq!(above.position, ContourPosition::Sufficient);
        assert!(above.attained >= 1.02 && above.consistent);
    }

    #[test]
    fn kappa_one_makes_everything_sufficient() {
        let report = verify_nie_sufficiency(Kappa::ONE, 50).unwrap();
        assert!(report.all_consistent);
        assert!(report.checks.iter().all(|c| c.position.is_sufficient()));
    }
}
