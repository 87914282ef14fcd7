//! Acceptance criteria for the analytic model, the CDF solver and the
//! simulator. Runs as a plain binary: one PASS/FAIL line per criterion,
//! exit code 1 if any criterion fails.

use std::process::Command as Process;
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hopdist::analytic::{self, ContentionModel};
use hopdist::cli::{self, Cli, MetricCheck, RunSpec, Status};
use hopdist::fading::{self, FadingModel};
use hopdist::headway::{Headway, HeadwayDistribution};
use hopdist::mc::{self, EcdfGrid, SimConfig, SimMode};
use hopdist::quad::CdfCurve;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn spec(args: &[&str]) -> RunSpec {
    let cli = Cli::try_parse_from(std::iter::once("hopdist").chain(args.iter().copied())).expect("valid args");
    RunSpec::resolve(&cli).expect("resolvable spec")
}

fn checks(args: &[&str]) -> Result<Vec<MetricCheck>, String> {
    let s = spec(args);
    let points = s.points().map_err(|e| e.to_string())?;
    cli::compare_point(&s, &points[0]).map_err(|e| e.to_string())
}

fn find<'a>(checks: &'a [MetricCheck], label: &str) -> &'a MetricCheck {
    checks.iter().find(|c| c.label == label).expect("metric present")
}

fn exp02() -> HeadwayDistribution {
    HeadwayDistribution::exponential(0.2).unwrap()
}

/// Criteria 1 and 6 share their simulations.
fn contention_runs() -> Result<Vec<(f64, Vec<MetricCheck>, f64)>, String> {
    let mut out = Vec::new();
    for ps in ["0.5", "0.7", "0.9"] {
        let start = Instant::now();
        let c = checks(&[
            "compare", "--headway", "exponential", "--rate", "0.2", "--ps", ps, "--range", "100", "--trials",
            "1000000", "--seed", "1",
        ])?;
        out.push((ps.parse().unwrap(), c, start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

fn criterion_1(runs: &[(f64, Vec<MetricCheck>, f64)]) -> Outcome {
    let mut detail = Vec::new();
    for (ps, c, secs) in runs {
        let m = &find(c, "mean_D").report;
        let e = rel(m.simulated, m.analytic);
        ensure(e < 0.01, format!("p_s={ps}: analytic {} vs MC {} ({:.3}%)", m.analytic, m.simulated, 100.0 * e))?;
        detail.push(format!("p_s={ps} mu_D={:.4} err={:.3}% {:.1}s", m.analytic, 100.0 * e, secs));
    }
    let m90 = find(&runs[2].1, "mean_D").report.analytic;
    ensure((m90 - 45.0).abs() < 0.01, format!("p_s=0.9 mean {m90}, expected about 45.0"))?;
    Ok(detail.join("; "))
}

fn criterion_2() -> Outcome {
    let families = [
        ("Uniform(0,10)", HeadwayDistribution::uniform(0.0, 10.0).unwrap()),
        ("Deterministic(50)", HeadwayDistribution::deterministic(50.0).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    for (name, d) in &families {
        let (mu, var) = (d.mean(), d.variance());
        for ps in [0.3, 0.5, 0.8] {
            let m = ContentionModel::new(ps, 100.0).unwrap();
            let want_mean = ps * mu / (1.0 - ps);
            let want_var = ps * var / (1.0 - ps) + ps * mu * mu / ((1.0 - ps) * (1.0 - ps));
            let got_mean = analytic::mean_distance(d, &m).map_err(|e| e.to_string())?;
            let got_var = analytic::variance_renewal(d, &m).map_err(|e| e.to_string())?;
            let e = rel(got_mean, want_mean).max(rel(got_var, want_var));
            ensure(e < 1e-9, format!("{name} p_s={ps}: mean {got_mean}/{want_mean} var {got_var}/{want_var}"))?;
            worst = worst.max(e);
        }
    }
    Ok(format!("6 cases, worst relative error {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let c = checks(&[
        "compare", "--headway", "exponential", "--rate", "0.2", "--ps", "0.9", "--range", "100", "--trials",
        "10000000", "--seed", "3",
    ])?;
    let renewal = find(&c, "var_D_renewal");
    let paper = find(&c, "var_D_paper");
    let sim = renewal.report.simulated;
    let e = rel(sim, renewal.report.analytic);
    ensure(e < 0.02, format!("MC variance {sim} vs renewal {} ({:.2}%)", renewal.report.analytic, 100.0 * e))?;
    ensure(
        (renewal.report.analytic - 2475.0).abs() < 1.0,
        format!("renewal variance {}", renewal.report.analytic),
    )?;
    let ratio = sim / paper.report.analytic;
    ensure(ratio > 5.0, format!("MC/quoted variance ratio {ratio}"))?;
    ensure(
        paper.status == Status::InformationalFail,
        format!("quoted variance status {:?}", paper.status),
    )?;
    Ok(format!(
        "MC var {sim:.1} vs renewal {:.1} ({:.2}%); quoted {:.1} off by {ratio:.2}x, flagged informational",
        renewal.report.analytic,
        100.0 * e,
        paper.report.analytic
    ))
}

fn random_headway(rng: &mut ChaCha8Rng, family: usize) -> HeadwayDistribution {
    match family {
        0 => HeadwayDistribution::exponential(rng.random_range(0.005..1.0)).unwrap(),
        1 => {
            let low = rng.random_range(0.0..50.0);
            HeadwayDistribution::uniform(low, low + rng.random_range(1.0..200.0)).unwrap()
        }
        2 => HeadwayDistribution::lognormal(rng.random_range(0.0..5.0), rng.random_range(0.1..1.5)).unwrap(),
        3 => HeadwayDistribution::deterministic(rng.random_range(1.0..300.0)).unwrap(),
        _ => {
            let n = rng.random_range(20..400);
            let scale = rng.random_range(5.0..100.0);
            let data: Vec<f64> = (0..n).map(|_| -scale * (1.0 - rng.random::<f64>()).ln()).collect();
            HeadwayDistribution::empirical(&data).unwrap()
        }
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut printed_violations = 0;
    for i in 0..1000 {
        let d = random_headway(&mut rng, i % 5);
        let m = ContentionModel::new(rng.random_range(0.05..0.95), rng.random_range(5.0..300.0)).unwrap();
        let s = analytic::analyze(&d, &m).map_err(|e| format!("case {i}: {e}"))?;
        let slack = 1e-9 * s.mu_d.abs().max(1e-12);
        let vslack = 1e-9 * s.var_d_paper.abs().max(1e-12);
        ensure(
            s.mean_lower <= s.mu_d + slack && s.mu_d <= s.mean_upper + slack,
            format!("case {i} {d:?} {m:?}: mean {} not in [{}, {}]", s.mu_d, s.mean_lower, s.mean_upper),
        )?;
        ensure(
            s.var_lower <= s.var_d_paper + vslack && s.var_d_paper <= s.var_upper + vslack,
            format!("case {i} {d:?} {m:?}: variance {} not in [{}, {}]", s.var_d_paper, s.var_lower, s.var_upper),
        )?;
        if s.mean_lower_printed > s.mu_d + slack {
            printed_violations += 1;
        }
    }
    let u = HeadwayDistribution::uniform(0.0, 10.0).unwrap();
    let s = analytic::analyze(&u, &ContentionModel::new(0.5, 100.0).unwrap()).map_err(|e| e.to_string())?;
    ensure(
        (s.mean_lower - 4.956).abs() < 5e-4 && (s.mean_upper - 5.0).abs() < 1e-9 && (s.mu_d - 5.0).abs() < 1e-9,
        format!("Uniform(0,10) spot values ({}, {}) around {}", s.mean_lower, s.mean_upper, s.mu_d),
    )?;
    Ok(format!(
        "1000 cases, 0 violations; spot ({:.4}, {:.4}) around {:.4}; uncorrected lower bound exceeded the mean in {printed_violations} cases",
        s.mean_lower, s.mean_upper, s.mu_d
    ))
}

fn step_exact(s: f64) -> f64 {
    1.0 - 0.5f64.powi((s / 50.0 + 1e-9).floor() as i32 + 1)
}

fn criterion_5() -> Outcome {
    let e = exp02();
    let m = ContentionModel::new(0.9, 100.0).unwrap();
    let coarse = analytic::cdf(&e, &m, 0.1, 500.0).map_err(|e| e.to_string())?;
    let f0 = 1.0 - 0.9 * e.cdf(100.0);
    let a = (coarse.values[0] - f0).abs();
    ensure(a < 1e-12, format!("(a) F_D(0) = {} vs {f0}", coarse.values[0]))?;

    let det = HeadwayDistribution::deterministic(50.0).unwrap();
    let dm = ContentionModel::new(0.5, 100.0).unwrap();
    let steps = analytic::cdf(&det, &dm, 0.5, 500.0).map_err(|e| e.to_string())?;
    let b = (0..steps.len())
        .map(|i| (steps.values[i] - step_exact(steps.s(i))).abs())
        .fold(0.0, f64::max);
    ensure(b < 1e-6, format!("(b) step function error {b}"))?;

    let sim = mc::run(&SimConfig {
        trials: 1_000_000,
        seed: 5,
        mode: SimMode::Contention(m),
        headway: &e,
        ecdf_grid: Some(EcdfGrid { step: 0.1, max_s: 500.0 }),
    })
    .map_err(|e| e.to_string())?;
    let c = coarse.sup_distance(sim.ecdf.as_ref().unwrap()).map_err(|e| e.to_string())?;
    ensure(c < 0.01, format!("(c) sup-norm vs ECDF {c}"))?;

    let fine = analytic::cdf(&e, &m, 0.05, 500.0).map_err(|e| e.to_string())?;
    let halved = CdfCurve {
        grid_step: 0.1,
        max_s: 500.0,
        values: (0..coarse.len()).map(|i| fine.values[2 * i]).collect(),
    };
    let d = coarse.sup_distance(&halved).map_err(|e| e.to_string())?;
    ensure(d < 1e-3, format!("(d) step-halving change {d}"))?;
    Ok(format!("(a) {a:.1e} (b) {b:.1e} (c) {c:.4} (d) {d:.1e}"))
}

fn criterion_6(runs: &[(f64, Vec<MetricCheck>, f64)]) -> Outcome {
    let mut detail = Vec::new();
    for (ps, c, _) in runs {
        let m = &find(c, "mean_N").report;
        let e = rel(m.simulated, m.analytic);
        ensure(e < 0.01, format!("p_s={ps}: analytic {} vs MC {}", m.analytic, m.simulated))?;
        detail.push(format!("p_s={ps} mu_N={:.4} err={:.3}%", m.analytic, 100.0 * e));
    }
    let n90 = find(&runs[2].1, "mean_N").report.analytic;
    ensure((n90 - 9.0).abs() < 0.01, format!("p_s=0.9 cluster size {n90}, expected about 9.0"))?;
    Ok(detail.join("; "))
}

const FADING_ARGS: &[&str] = &[
    "compare", "--scenario", "fading", "--headway", "exponential", "--rate", "0.2", "--alpha", "1", "--threshold",
    "0.05", "--trials", "1000000", "--seed", "7",
];

fn criterion_7(c: &[MetricCheck]) -> Outcome {
    let f = FadingModel::new(1.0, 1.0, 1.0, 1.0, 0.05).unwrap();
    let e = exp02();
    let fail = fading::hop_failure_prob(&f, &e).map_err(|e| e.to_string())?;
    let mean = fading::mean_distance_fading(&f, &e).map_err(|e| e.to_string())?;
    ensure(rel(fail, 0.2) < 1e-9, format!("F_P = {fail}"))?;
    ensure(rel(mean, 16.0) < 1e-9, format!("mean = {mean}"))?;
    let m = &find(c, "mean_D").report;
    let err = rel(m.simulated, m.analytic);
    ensure(err < 0.01, format!("MC mean {} vs {}", m.simulated, m.analytic))?;
    Ok(format!("F_P={fail} mean={mean} MC={:.4} ({:.3}%)", m.simulated, 100.0 * err))
}

fn criterion_8(c: &[MetricCheck]) -> Outcome {
    let renewal = find(c, "var_D_renewal");
    let paper = find(c, "var_D_paper");
    let sim = renewal.report.simulated;
    let e = rel(sim, 384.0);
    ensure(rel(renewal.report.analytic, 384.0) < 1e-9, format!("renewal variance {}", renewal.report.analytic))?;
    ensure(e < 0.02, format!("MC variance {sim} vs 384"))?;
    ensure(rel(paper.report.analytic, 128.0) < 1e-9, format!("quoted variance {}", paper.report.analytic))?;
    ensure(
        paper.status == Status::InformationalFail,
        format!("quoted variance status {:?}", paper.status),
    )?;
    Ok(format!("MC var {sim:.2} vs 384 ({:.2}%); quoted 128 flagged informational", 100.0 * e))
}

fn criterion_9() -> Outcome {
    let m = ContentionModel::new(0.9, 100.0).unwrap();
    let n = 40;
    let (lo, hi) = (0.01f64.ln(), 1.0f64.ln());
    let mut curve = Vec::with_capacity(n);
    for i in 0..n {
        let rate = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        let d = HeadwayDistribution::exponential(rate).unwrap();
        curve.push((rate, analytic::mean_distance(&d, &m).map_err(|e| e.to_string())?));
    }
    let (imax, &(rate_max, peak)) = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .unwrap();
    let (first, last) = (curve[0].1, curve[n - 1].1);
    ensure(imax > 0 && imax < n - 1, format!("maximum at grid end (index {imax})"))?;
    ensure(
        first <= 0.9 * peak && last <= 0.9 * peak,
        format!("endpoints {first}, {last} vs peak {peak}"),
    )?;
    Ok(format!("peak {peak:.2} m at rate {rate_max:.4}; endpoints {first:.2} and {last:.2}"))
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hopdist");
    let run = |threads: &str| -> Result<Vec<u8>, String> {
        let out = Process::new(bin)
            .args([
                "simulate", "--headway", "lognormal", "--log-mean", "3", "--log-sd", "0.5", "--ps", "0.8", "--range",
                "60", "--sweep", "ps", "--from", "0.5", "--to", "0.9", "--steps", "3", "--trials", "200000",
                "--seed", "10", "--threads", threads,
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), format!("exit {:?}", out.status.code()))?;
        Ok(out.stdout)
    };
    let reference = run("1")?;
    for threads in ["1", "4", "8"] {
        ensure(run(threads)? == reference, format!("output differs with {threads} threads"))?;
    }
    Ok(format!("{} bytes identical across 1/1/4/8 threads", reference.len()))
}

fn main() {
    let mut failures = 0;
    let mut report = |n: u32, title: &str, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {title}: {detail}");
            }
        }
    };
    let runs = contention_runs();
    report(1, "mean distance vs simulation", runs.as_ref().map_err(Clone::clone).and_then(|r| criterion_1(r)));
    report(2, "compound-geometric oracle", criterion_2());
    report(3, "variance arbitration", criterion_3());
    report(4, "mean and variance bounds", criterion_4());
    report(5, "CDF solver", criterion_5());
    report(6, "cluster size", runs.as_ref().map_err(Clone::clone).and_then(|r| criterion_6(r)));
    let fading_checks = checks(FADING_ARGS);
    report(7, "fading closed form", fading_checks.as_ref().map_err(Clone::clone).and_then(|c| criterion_7(c)));
    report(8, "fading variance arbitration", fading_checks.as_ref().map_err(Clone::clone).and_then(|c| criterion_8(c)));
    report(9, "interior maximum over headway rate", criterion_9());
    report(10, "determinism across threads", criterion_10());
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
