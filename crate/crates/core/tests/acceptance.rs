//! Acceptance criteria. Each criterion prints one PASS/FAIL line to stderr
//! (written directly, so it shows without `--nocapture`) and the test fails
//! if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use nie_core::contour::{default_rr_eu_max, sample_contour, DEFAULT_POINTS};
use nie_core::conversion::hr_to_rr;
use nie_core::oracle::{max_observed_rr, verify_bound};
use nie_core::report::{render_svg, PlotSpec};
use nie_core::sensitivity::{
    bias_factor, classical_evalue, generalized_evalue, kappa, nie, Direction, Kappa, RiskRatio,
};
use nie_core::study::{analyze_batch, parse_batch, BatchFormat};

const STUDIES_CSV: &str = include_str!("fixtures/studies.csv");
const STUDIES_JSON: &str = include_str!("fixtures/studies.json");

const SWEEP: usize = 1_000;
const REL_TOL: f64 = 1e-9;

fn rr(x: f64) -> RiskRatio {
    RiskRatio::new(x).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `n` evenly spaced values on `[lo, hi]`.
fn sweep(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn batch_replication() -> Outcome {
    // (study, NIE limit, NIE point) as reported.
    let expected = [
        ("durand2024", 2.78, 3.66),
        ("smeenk2025", 1.63, 2.00),
        ("rydbeck2023", 1.34, 1.45),
        ("zhong2024", 1.02, 2.53),
    ];
    let tol = 0.02;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (input, format) in [(STUDIES_CSV, BatchFormat::Csv), (STUDIES_JSON, BatchFormat::Json)] {
        let records = parse_batch(input.as_bytes(), format).map_err(|e| e.to_string())?;
        let results = analyze_batch(&records).map_err(|e| e.to_string())?;
        if results.len() != expected.len() {
            return Err(format!("{format:?}: expected 4 results, got {}", results.len()));
        }
        for (r, (id, limit, point)) in results.iter().zip(expected) {
            if r.study_id != id {
                failures.push(format!("order: {} != {id}", r.study_id));
            }
            for (got, want, what) in [(r.nie_limit, limit, "limit"), (r.nie_point, point, "point")] {
                let d = (got - want).abs();
                worst = worst.max(d);
                if d > tol {
                    failures.push(format!("{id} {what}: {got:.4} vs {want}"));
                }
            }
            if !r.non_inferiority_established {
                failures.push(format!("{id}: non-inferiority not established"));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        failures.push(format!("runtime {elapsed:?} >= 1 s"));
    }
    check(
        failures.is_empty(),
        format!("8 NIEs x 2 formats, max |diff| {worst:.4} <= {tol}, {elapsed:?} {failures:?}"),
    )
}

fn conversion_replication() -> Outcome {
    let cases = [
        (1.38, 1.25),
        (3.0, 2.12),
        (0.91, 0.94),
        (0.76, 0.83),
        (0.95, 0.97),
        (1.329, 1.217),
        (1.33, 1.218),
        (0.69, 0.77),
    ];
    let tol = 0.01;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (hr, want) in cases {
        let got = hr_to_rr(hr).map_err(|e| e.to_string())?;
        let d = (got - want).abs();
        worst = worst.max(d);
        if d > tol {
            failures.push(format!("{hr} -> {got:.4} (want {want})"));
        }
    }
    check(
        failures.is_empty(),
        format!("8 conversions, max |diff| {worst:.4} <= {tol} {failures:?}"),
    )
}

fn classical_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for x in sweep(1.0, 10.0, SWEEP) {
        let causative = [
            generalized_evalue(rr(x), rr(1.0), Direction::Causative).evalue,
            classical_evalue(rr(x), Direction::Causative).evalue,
            nie(kappa(rr(x), rr(1.0))).evalue,
        ];
        let inv = 1.0 / x;
        let preventive = [
            generalized_evalue(rr(inv), rr(1.0), Direction::Preventive).evalue,
            classical_evalue(rr(inv), Direction::Preventive).evalue,
            nie(kappa(rr(inv), rr(1.0))).evalue,
        ];
        for v in [causative, preventive] {
            worst = worst.max(rel(v[0], v[1])).max(rel(v[1], v[2]));
        }
    }
    check(
        worst <= REL_TOL,
        format!("{SWEEP} values in [1, 10], both directions, max rel diff {worst:.2e} <= {REL_TOL:e}"),
    )
}

fn closure_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in sweep(1.0, 50.0, SWEEP) {
        let e = nie(Kappa::new(k).unwrap()).evalue;
        let b = bias_factor(rr(e), rr(e)).map_err(|e| e.to_string())?;
        worst = worst.max(rel(b, k));
    }
    check(
        worst <= REL_TOL,
        format!("{SWEEP} kappas in [1, 50], max rel diff {worst:.2e} <= {REL_TOL:e}"),
    )
}

fn oracle_bound_suite() -> Outcome {
    let start = Instant::now();
    let report = verify_bound(10_000, 42).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    if report.violations != 0 {
        failures.push(format!("{} violations, worst {:?}", report.violations, report.worst));
    }
    let mut worst_gap: f64 = 0.0;
    for cap in [1.5, 2.0, 3.0] {
        let m = max_observed_rr(cap, cap, 200).map_err(|e| e.to_string())?;
        let b = bias_factor(rr(cap), rr(cap)).unwrap();
        let gap = (m.max_rr - b).abs();
        worst_gap = worst_gap.max(gap);
        if gap > 0.01 || m.max_rr > b + 1e-9 {
            failures.push(format!("caps ({cap}, {cap}): grid {:.5} vs B {b:.5}", m.max_rr));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(30) {
        failures.push(format!("runtime {elapsed:?} >= 30 s"));
    }
    check(
        failures.is_empty(),
        format!(
            "10000 scenarios, {} violations, worst margin {:.2e}; sharpness max gap {worst_gap:.4} <= 0.01; {elapsed:?} {failures:?}",
            report.violations, report.worst.margin
        ),
    )
}

fn contour_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for k in [1.02, 1.34, 1.63, 2.12] {
        let kap = Kappa::new(k).unwrap();
        let curve = sample_contour(kap, DEFAULT_POINTS, default_rr_eu_max(kap)).map_err(|e| e.to_string())?;
        for p in &curve.points {
            // Bias factor by direct substitution.
            let b = p.rr_ud * p.rr_eu / (p.rr_ud + p.rr_eu - 1.0);
            worst = worst.max(rel(b, k));
        }
        let e = nie(kap).evalue;
        if curve.equal_point.rr_eu != e || curve.equal_point.rr_ud != e {
            failures.push(format!("kappa {k}: equal point {:?} != ({e}, {e})", curve.equal_point));
        }
        if !curve.points.contains(&curve.equal_point) {
            failures.push(format!("kappa {k}: equal point not sampled"));
        }
    }
    check(
        worst <= 1e-6 && failures.is_empty(),
        format!("4 curves x {DEFAULT_POINTS} points, max rel diff {worst:.2e} <= 1e-6 {failures:?}"),
    )
}

fn invariance_suite() -> Outcome {
    let mut failures = Vec::new();

    let mut kappa_mismatch = 0;
    for (i, c) in sweep(0.05, 20.0, SWEEP).enumerate() {
        // Margins walk a different grid so pairs are not aligned.
        let m = 0.05 + (i * 7919 % SWEEP) as f64 * 19.95 / (SWEEP - 1) as f64;
        let a = kappa(rr(c), rr(m)).value();
        let b = kappa(rr(1.0 / c), rr(1.0 / m)).value();
        if a.to_bits() != b.to_bits() {
            kappa_mismatch += 1;
        }
    }
    if kappa_mismatch > 0 {
        failures.push(format!(
            "kappa not exactly reciprocal-invariant in {kappa_mismatch} cases"
        ));
    }

    let mut worst_hr: f64 = 0.0;
    for h in sweep(0.05, 20.0, SWEEP) {
        let prod = hr_to_rr(h).unwrap() * hr_to_rr(1.0 / h).unwrap();
        worst_hr = worst_hr.max((prod - 1.0).abs());
    }
    if worst_hr > REL_TOL {
        failures.push(format!("hr_to_rr reciprocal symmetry off by {worst_hr:.2e}"));
    }

    let values: Vec<f64> = sweep(1.0, 50.0, SWEEP)
        .map(|k| nie(Kappa::new(k).unwrap()).evalue)
        .collect();
    if !values.windows(2).all(|w| w[0] < w[1]) {
        failures.push("NIE not strictly increasing in kappa".into());
    }

    check(
        failures.is_empty(),
        format!(
            "kappa exact {}/{SWEEP}; hr_to_rr symmetry max {worst_hr:.2e}; NIE monotone over {SWEEP} {failures:?}",
            SWEEP - kappa_mismatch
        ),
    )
}

fn io_determinism() -> Outcome {
    let run = || -> Result<(String, String), String> {
        let records = parse_batch(STUDIES_CSV.as_bytes(), BatchFormat::Csv).map_err(|e| e.to_string())?;
        let results = analyze_batch(&records).map_err(|e| e.to_string())?;
        let json = serde_json::to_string_pretty(&results).map_err(|e| e.to_string())?;
        let specs = results
            .iter()
            .map(|r| PlotSpec::for_result(r, &r.study_id, None))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok((json, render_svg(&specs)))
    };
    let (json_a, svg_a) = run()?;
    let (json_b, svg_b) = run()?;
    check(
        json_a == json_b && svg_a == svg_b,
        format!(
            "JSON {} bytes, SVG {} bytes, identical across runs",
            json_a.len(),
            svg_a.len()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("1 reference batch replication", batch_replication),
        ("2 conversion replication", conversion_replication),
        ("3 classical reduction", classical_reduction),
        ("4 closure identity", closure_identity),
        ("5 oracle bound suite", oracle_bound_suite),
        ("6 contour identity", contour_identity),
        ("7 invariance suite", invariance_suite),
        ("8 I/O determinism", io_determinism),
    ];
    let mut stderr = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => {
                let _ = writeln!(stderr, "[PASS] criterion {name}: {detail}");
            }
            Err(detail) => {
                let _ = writeln!(stderr, "[FAIL] criterion {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
