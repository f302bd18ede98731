//! Acceptance criteria 1-10, one PASS/FAIL line each. Runs without the test harness so the
//! lines show up in `cargo test` output; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use clamped_spectra::cli::{canonical_json, RunConfig};
use clamped_spectra::disjointness::sweep_conjecture;
use clamped_spectra::eigensolver::{
    antisym_equals_next_sym, eigenpairs, extract_eigenfunction, scan_spectrum, EigenPair, ScanOptions,
};
use clamped_spectra::identity::{IdentityReport, Verdict};
use clamped_spectra::invariants::{
    check_cross_identity, check_positivity_family, check_stone_identity, eigenpair_reports, pair_reports,
};
use clamped_spectra::report::ReportEnvelope;
use clamped_spectra::ritz::{assemble, ritz_values};
use clamped_spectra::selftest::{eigenpair_properties, exppoly_properties, DEFAULT_SEED};
use clamped_spectra::{Parity, ProblemSpec};
use rayon::prelude::*;
use serde_json::Value;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    while b - a > 1e-15 * b {
        let mid = 0.5 * (a + b);
        if (f(mid) < 0.0) == (fa < 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// `(n, p)` with `n <= 6`, `p <= min(n, 3)`.
fn grid() -> Vec<(usize, usize)> {
    (1..=6).flat_map(|n| (1..=n.min(3)).map(move |p| (n, p))).collect()
}

fn failures(reports: &[IdentityReport]) -> Vec<String> {
    reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| format!("{} {:?} rel {:e}", r.identity_id, r.indices, r.rel_residual))
        .collect()
}

fn summarize(reports: &[IdentityReport], ids: &[&str]) -> Outcome {
    let chosen: Vec<IdentityReport> = reports.iter().filter(|r| ids.contains(&r.identity_id.as_str())).cloned().collect();
    let pass = chosen.iter().filter(|r| r.verdict == Verdict::Pass).count();
    let na = chosen.iter().filter(|r| r.verdict == Verdict::NotApplicable).count();
    let bad = failures(&chosen);
    if pass == 0 {
        return Err(format!("no applicable {ids:?} reports"));
    }
    if bad.is_empty() {
        Ok(format!("{pass} pass, {na} not applicable"))
    } else {
        Err(format!("{} failures: {}", bad.len(), bad.iter().take(5).cloned().collect::<Vec<_>>().join("; ")))
    }
}

fn criterion_1() -> Outcome {
    let tan = bisect(|x| x.sin() - x * x.cos(), PI, 1.5 * PI);
    let tanh = bisect(|x| x.sin() * x.cosh() + x.cos() * x.sinh(), 0.5 * PI, PI);
    let sq = |x: f64| x * x;
    let cases: Vec<(ProblemSpec, Vec<f64>, f64)> = vec![
        (ProblemSpec::symmetric(1, 1).unwrap(), vec![sq(PI / 2.0), sq(1.5 * PI), sq(2.5 * PI)], 1e-9),
        (ProblemSpec::antisymmetric(1, 1).unwrap(), vec![sq(PI), sq(2.0 * PI)], 1e-9),
        (ProblemSpec::symmetric(2, 1).unwrap(), vec![sq(PI), sq(2.0 * PI)], 1e-9),
        (ProblemSpec::symmetric(3, 1).unwrap(), vec![sq(tan)], 1e-7),
        (ProblemSpec::symmetric(2, 2).unwrap(), vec![tanh.powi(4)], 1e-7),
    ];
    let mut worst = 0.0f64;
    for (spec, expected, tol) in cases {
        let got = scan_spectrum(&spec, expected.len(), None).map_err(|e| format!("{spec}: {e}"))?.eigenvalues;
        for (g, e) in got.iter().zip(&expected) {
            let r = rel(*g, *e);
            if r > tol {
                return Err(format!("{spec}: {g} vs {e}, rel {r:e} > {tol:e}"));
            }
            worst = worst.max(r);
        }
    }
    Ok(format!("worst relative error {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut reports = Vec::new();
    for n in 1..=4 {
        for p in 1..=n.min(2) {
            reports.extend(antisym_equals_next_sym(n, p, 5, 1e-8).map_err(|e| format!("n={n}, p={p}: {e}"))?);
        }
    }
    let worst = reports.iter().map(|r| r.rel_residual).fold(0.0, f64::max);
    let bad = failures(&reports);
    if bad.is_empty() && reports.len() == 5 * 7 {
        Ok(format!("{} eigenvalue pairs, worst relative difference {worst:.2e}", reports.len()))
    } else {
        Err(format!("{} reports, failures: {bad:?}", reports.len()))
    }
}

fn criterion_3() -> Outcome {
    let specs: Vec<ProblemSpec> = grid()
        .into_iter()
        .flat_map(|(n, p)| [Parity::Symmetric, Parity::Antisymmetric].map(|par| ProblemSpec::new(n, p, par).unwrap()))
        .collect();
    let rows: Vec<Result<(ProblemSpec, f64, f64), String>> = specs
        .par_iter()
        .map(|spec| {
            let det = scan_spectrum(spec, 1, None).map_err(|e| format!("{spec}: {e}"))?.eigenvalues[0];
            let sys = assemble(spec, 20).map_err(|e| format!("{spec}: {e}"))?;
            let ritz = ritz_values(&sys, 1).map_err(|e| format!("{spec}: {e}"))?[0];
            Ok((*spec, det, ritz))
        })
        .collect();
    let mut worst = 0.0f64;
    for row in rows {
        let (spec, det, ritz) = row?;
        let r = rel(ritz, det);
        if r > 1e-6 {
            return Err(format!("{spec}: Ritz {ritz} vs scan {det}, rel {r:e}"));
        }
        // the scan value itself is only refined to 2p * rtol relative
        let slack = 1e-9f64.max(2.0 * spec.p as f64 * ScanOptions::default().rtol * det);
        if ritz < det - slack {
            return Err(format!("{spec}: Ritz {ritz} below scan {det} by more than {slack:e}"));
        }
        worst = worst.max(r);
    }
    Ok(format!("{} problems, worst relative difference {worst:.2e}, upper bound holds", specs.len()))
}

fn criterion_4() -> Outcome {
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for (n, p) in grid() {
        if n == p {
            continue;
        }
        let lo = scan_spectrum(&ProblemSpec::symmetric(n - 1, p).unwrap(), 3, None).map_err(|e| e.to_string())?;
        let hi = scan_spectrum(&ProblemSpec::symmetric(n, p).unwrap(), 3, None).map_err(|e| e.to_string())?;
        for (i, (a, b)) in lo.eigenvalues.iter().zip(&hi.eigenvalues).enumerate() {
            let margin = (b - a) / b;
            if margin <= 1e-6 {
                return Err(format!("(n={n}, p={p}) #{i}: {a} vs {b}, margin {margin:e}"));
            }
            worst = worst.min(margin);
            checked += 1;
        }
    }
    Ok(format!("{checked} comparisons, smallest relative margin {worst:.3e}"))
}

/// First 3 eigenpairs of every grid problem, both parities.
struct GridPairs {
    sym: Vec<(usize, usize, Vec<EigenPair>)>,
    all: Vec<EigenPair>,
}

fn grid_pairs() -> Result<GridPairs, String> {
    let specs: Vec<ProblemSpec> = grid()
        .into_iter()
        .flat_map(|(n, p)| [Parity::Symmetric, Parity::Antisymmetric].map(|par| ProblemSpec::new(n, p, par).unwrap()))
        .collect();
    let pairs: Vec<(ProblemSpec, Vec<EigenPair>)> = specs
        .par_iter()
        .map(|s| eigenpairs(s, 3).map(|v| (*s, v)).map_err(|e| format!("{s}: {e}")))
        .collect::<Result<_, _>>()?;
    let sym = pairs
        .iter()
        .filter(|(s, _)| s.parity == Parity::Symmetric)
        .map(|(s, v)| (s.n, s.p, v.clone()))
        .collect();
    let all = pairs.into_iter().flat_map(|(_, v)| v).collect();
    Ok(GridPairs { sym, all })
}

fn single_reports(g: &GridPairs) -> Vec<IdentityReport> {
    g.all.par_iter().flat_map_iter(eigenpair_reports).collect()
}

fn cross_reports(g: &GridPairs) -> Vec<IdentityReport> {
    let mut jobs = Vec::new();
    for (n, p, lo) in &g.sym {
        for (m, q, hi) in &g.sym {
            if q == p && m > n {
                for a in lo {
                    for b in hi {
                        jobs.push((a, b));
                    }
                }
            }
        }
    }
    jobs.par_iter().flat_map_iter(|(a, b)| pair_reports(a, b)).collect()
}

fn anchors() -> Outcome {
    let z1 = extract_eigenfunction(&ProblemSpec::symmetric(1, 1).unwrap(), PI * PI / 4.0).map_err(|e| e.to_string())?;
    let z2 = extract_eigenfunction(&ProblemSpec::symmetric(2, 1).unwrap(), PI * PI).map_err(|e| e.to_string())?;
    // z1 = cos(pi x / 2) and z2 = (1 + cos(pi x)) / pi under the normalization
    let z2 = z2.scaled(PI);
    let target = 2.0 * PI.powi(4);
    let eq11 = check_cross_identity(&z1, &z2);
    let mut checks = vec![("eq11 lhs", eq11.lhs, -4.0 * PI), ("eq11 rhs", eq11.rhs, -4.0 * PI)];
    let eq10 = check_stone_identity(&z2);
    checks.extend([("eq10 lhs", eq10.lhs, target), ("eq10 rhs", eq10.rhs, target)]);
    for r in check_positivity_family(&z2, 0) {
        checks.push(("eq15/19 lhs", r.lhs, target));
        checks.push(("eq15/19 rhs", r.rhs, target));
    }
    for (name, got, want) in &checks {
        if rel(*got, *want) > 1e-10 {
            return Err(format!("anchor {name}: {got} vs {want}"));
        }
    }
    Ok(format!("{} anchor values within 1e-10", checks.len()))
}

fn criterion_5(single: &[IdentityReport], cross: &[IdentityReport]) -> Outcome {
    let all: Vec<IdentityReport> = single.iter().chain(cross).cloned().collect();
    let eq10 = summarize(&all, &["eq10"])?;
    let eq11 = summarize(&all, &["eq11"])?;
    let eq13 = summarize(&all, &["eq13", "eq18"])?;
    let cons = summarize(&all, &["eq13-eq18"])?;
    let eq15 = summarize(&all, &["eq15", "eq19"])?;
    let nonpositive: Vec<&IdentityReport> = all
        .iter()
        .filter(|r| matches!(r.identity_id.as_str(), "eq15" | "eq19") && r.verdict == Verdict::Pass && !(r.lhs > 0.0 && r.rhs > 0.0))
        .collect();
    if !nonpositive.is_empty() {
        return Err(format!("{} eq15/19 values not strictly positive", nonpositive.len()));
    }
    let anchors = anchors()?;
    Ok(format!("eq10 {eq10}; eq11 {eq11}; eq13/18 {eq13}; consistency {cons}; eq15/19 {eq15}; {anchors}"))
}

fn criterion_6(single: &[IdentityReport]) -> Outcome {
    let lemma = summarize(single, &["stone-lemma"])?;
    let cross = summarize(single, &["eq12"])?;
    let chain = summarize(single, &["eq12-d2"])?;
    Ok(format!("stone lemma {lemma}; cross-k {cross}; d^2 chain {chain}"))
}

fn criterion_7(single: &[IdentityReport]) -> Outcome {
    let roots = summarize(single, &["root-completeness"])?;
    let xi = summarize(single, &["eq33"])?;
    Ok(format!("root completeness {roots}; eq33 {xi}"))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    for p in 1..=2 {
        let s = sweep_conjecture(p, 5, 5, 1e-4).map_err(|e| format!("p={p}: {e}"))?;
        if s.partial {
            return Err(format!("p={p}: partial sweep: {:?}", s.notes));
        }
        if !s.candidates.is_empty() {
            return Err(format!("p={p}: {} collision candidates", s.candidates.len()));
        }
        for ps in &s.pairs {
            lines.push(format!("p={p} n={} m={} min gap {:.4}", ps.n, ps.m, ps.min_gap.unwrap_or(f64::NAN)));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        return Err(format!("took {elapsed:?}"));
    }
    for l in &lines {
        println!("    {l}");
    }
    Ok(format!("{} pairs, zero candidates, {:.1}s", lines.len(), elapsed.as_secs_f64()))
}

fn criterion_9() -> Outcome {
    let mut checks = exppoly_properties(DEFAULT_SEED, 200);
    checks.extend(eigenpair_properties(DEFAULT_SEED, 200));
    let bad: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    if bad.is_empty() {
        Ok(checks.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", "))
    } else {
        Err(bad.join("; "))
    }
}

fn run_cli(args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_clamped-spectra")).args(args).output().map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned()))
}

fn expect_exit(args: &[&str], code: i32) -> Result<String, String> {
    let (got, out) = run_cli(args)?;
    if got != code {
        return Err(format!("{args:?}: exit {got}, expected {code}"));
    }
    Ok(out)
}

fn criterion_10() -> Outcome {
    let json = expect_exit(&["spectrum", "--n", "1", "--p", "1", "--parity", "sym", "--count", "3"], 0)?;
    expect_exit(&["spectrum", "--n", "1", "--p", "1", "--count", "0"], 1)?;
    expect_exit(&["spectrum", "--n", "1", "--p", "1", "--count", "100000"], 2)?;
    expect_exit(&["verify", "--n", "2", "--p", "1", "--count", "2", "--inject-corruption"], 3)?;
    expect_exit(&["verify", "--n", "1", "--p", "1", "--inject-corruption"], 3)?;

    // byte-stable round trip, both untyped and through the envelope type
    let value: Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    if canonical_json(&value).map_err(|e| e.to_string())? != json {
        return Err("untyped JSON round trip is not byte-identical".into());
    }
    let env: ReportEnvelope<RunConfig, Value> = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    if canonical_json(&env).map_err(|e| e.to_string())? != json {
        return Err("typed envelope round trip is not byte-identical".into());
    }
    let eigs: Vec<f64> = env.payload["spectrum"]["eigenvalues"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    let expected = [PI * PI / 4.0, (1.5 * PI).powi(2), (2.5 * PI).powi(2)];
    if eigs.len() != 3 || eigs.iter().zip(&expected).any(|(a, b)| rel(*a, *b) > 1e-9) {
        return Err(format!("spectrum payload {eigs:?}"));
    }

    // the config echo reproduces the payload
    let dir = std::env::temp_dir().join(format!("clamped-spectra-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let cfg_path = dir.join("config.json");
    std::fs::write(&cfg_path, canonical_json(&env.config).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let again = expect_exit(&["spectrum", "--config", cfg_path.to_str().unwrap()], 0)?;
    let again: ReportEnvelope<RunConfig, Value> = serde_json::from_str(&again).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&dir);
    if again.payload != env.payload || again.config != env.config {
        return Err("--config rerun changed the report".into());
    }

    let start = Instant::now();
    expect_exit(&["selftest"], 0)?;
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Err(format!("selftest took {elapsed:?}"));
    }
    Ok(format!("exit codes 0/1/2/3, byte-stable JSON, config rerun identical, selftest {:.2}s", elapsed.as_secs_f64()))
}

fn main() {
    let mut failed = 0;
    let mut report = |i: usize, name: &str, start: Instant, o: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match o {
            Ok(detail) => println!("PASS criterion {i:>2} ({name}, {secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {i:>2} ({name}, {secs:.1}s): {detail}");
            }
        }
    };
    let t = Instant::now();
    report(1, "closed-form eigenvalues", t, criterion_1());
    let t = Instant::now();
    report(2, "antisymmetric = next symmetric", t, criterion_2());
    let t = Instant::now();
    report(3, "Ritz cross-oracle", t, criterion_3());
    let t = Instant::now();
    report(4, "strict monotonicity", t, criterion_4());

    let t = Instant::now();
    match grid_pairs() {
        Ok(g) => {
            let single = single_reports(&g);
            let cross = cross_reports(&g);
            report(5, "identity suite", t, criterion_5(&single, &cross));
            let t = Instant::now();
            report(6, "stone lemma", t, criterion_6(&single));
            let t = Instant::now();
            report(7, "root completeness and xi-derivatives", t, criterion_7(&single));
        }
        Err(e) => {
            for (i, name) in [(5, "identity suite"), (6, "stone lemma"), (7, "root completeness and xi-derivatives")] {
                report(i, name, t, Err(e.clone()));
            }
        }
    }
    let t = Instant::now();
    report(8, "disjointness sweep", t, criterion_8());
    let t = Instant::now();
    report(9, "property suites", t, criterion_9());
    let t = Instant::now();
    report(10, "CLI contract", t, criterion_10());

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
