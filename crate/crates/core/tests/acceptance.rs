//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use sample_inflation::estimators::resample_indices;
use sample_inflation::experiments::theorems::theorem_suite;
use sample_inflation::experiments::{
    run_dmm, run_gauss, ExperimentConfig, ExperimentKind, GaussRun, Method, ReplicationEstimate, TheoremConfig,
};
use sample_inflation::{RandomSource, SampleSet};

const GAUSS_SEED: u64 = 1;
const DMM_SEED: u64 = 7;
const THEOREM_SEED: u64 = 3;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn theorem_checks() -> (Outcome, Outcome, Outcome) {
    let start = Instant::now();
    let tc = TheoremConfig::default();
    let report = theorem_suite(&tc, THEOREM_SEED).expect("theorem suite runs");
    let seconds = start.elapsed().as_secs_f64();

    let decomposition: Vec<_> = ["decomposition/standard", "decomposition/self-normalized"]
        .iter()
        .map(|n| report.check(n).expect("check exists"))
        .collect();
    let worst = decomposition.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    let c1 = outcome(
        decomposition.iter().all(|c| c.instances == 500 && c.passed && c.max_residual < 1e-10) && seconds < 10.0,
        format!("500 instances, max residual {worst:.2e} < 1e-10, suite time {seconds:.2}s < 10s"),
    );

    let bounds: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with("convex-bound/") && c.name != "convex-bound/adversarial").collect();
    let violations: usize = bounds.iter().map(|c| c.violations).sum();
    let excess = bounds.iter().map(|c| c.max_residual).fold(f64::NEG_INFINITY, f64::max);
    let c2 = outcome(
        bounds.len() == 6 && bounds.iter().all(|c| c.instances == 500) && violations == 0,
        format!("2 kinds x 3 norms x 500 instances, {violations} violations, max excess {excess:.2e} (slack 1e-12)"),
    );

    let cache = report.check("inflation-cache").expect("check exists");
    let counts = report.check("inflation-eval-count").expect("check exists");
    let c3 = outcome(
        cache.instances == 200 && cache.passed && counts.passed,
        format!(
            "200 instances, max |log w - oracle| {:.2e} < 1e-12, eval-count mismatches {}",
            cache.max_residual, counts.violations
        ),
    );
    (c1, c2, c3)
}

fn gauss_run() -> (GaussRun, f64) {
    let mut cfg = ExperimentConfig::new(ExperimentKind::GaussCentered, GAUSS_SEED);
    cfg.budgets = vec![200, 2_000, 20_000];
    cfg.replications = 50;
    cfg.group_size = 100;
    cfg.method = Method::Both;
    let start = Instant::now();
    let run = run_gauss(&cfg).expect("gauss run");
    (run, start.elapsed().as_secs_f64())
}

fn plain_mse(run: &GaussRun, budget: usize) -> f64 {
    (0..2).map(|c| run.series.row("plain", budget, c).expect("row").mse).sum()
}

fn consistency(run: &GaussRun, seconds: f64) -> Outcome {
    let medians: Vec<f64> = [200, 2_000, 20_000]
        .iter()
        .map(|&b| median(run.estimates(b, Method::Inflated).iter().map(|e| norm2(&e.value).sqrt()).collect()))
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let factors = [plain_mse(run, 200) / plain_mse(run, 2_000), plain_mse(run, 2_000) / plain_mse(run, 20_000)];
    let in_band = factors.iter().all(|f| (5.0..=20.0).contains(f));
    outcome(
        decreasing && in_band && seconds < 120.0,
        format!(
            "median |J_n - H| {:.4} > {:.4} > {:.4}; plain MSE decade factors {:.2}, {:.2} in [5, 20]; {seconds:.1}s < 120s",
            medians[0], medians[1], medians[2], factors[0], factors[1]
        ),
    )
}

fn centered_comparison(run: &GaussRun) -> Outcome {
    let plain = run.estimates(20_000, Method::Plain);
    let inflated = run.estimates(20_000, Method::Inflated);
    let wins = plain.iter().zip(&inflated).filter(|(p, i)| norm2(&i.value) <= norm2(&p.value)).count();
    let share = wins as f64 / plain.len() as f64;
    let agg_plain = plain.iter().map(|e| norm2(&e.value)).sum::<f64>() / plain.len() as f64;
    let agg_inflated = inflated.iter().map(|e| norm2(&e.value)).sum::<f64>() / inflated.len() as f64;
    outcome(
        plain.len() == 50 && share >= 0.7 && agg_inflated <= agg_plain,
        format!(
            "budget 20000, group 100: inflated MSE <= plain in {wins}/50 pairs (need >= 35); aggregate inflated {agg_inflated:.4e} vs plain {agg_plain:.4e}"
        ),
    )
}

fn evidence(run: &GaussRun) -> Outcome {
    let offset = |es: &[&ReplicationEstimate]| {
        es.iter().map(|e| e.log_evidence.expect("evidence") + 1000.0).sum::<f64>() / es.len() as f64
    };
    let plain_offset = offset(&run.estimates(20_000, Method::Plain));
    let mse = |m: &str| run.series.row(m, 20_000, 0).expect("row").log_evidence_mse.expect("evidence mse");
    let (p, i) = (mse("plain"), mse("inflated"));
    outcome(
        plain_offset.abs() <= 0.05 && i <= 3.0 * p,
        format!("plain mean(log Z + 1000) = {plain_offset:+.4} within 0.05; inflated evidence MSE {i:.3e} <= 3 x plain {p:.3e}"),
    )
}

fn dmm_comparison() -> Outcome {
    let mut cfg = ExperimentConfig::new(ExperimentKind::DmmGauss, DMM_SEED);
    cfg.budgets = vec![2_000];
    cfg.replications = 25;
    cfg.inflation_factor = 2;
    let run = run_dmm(&cfg).expect("dmm run");
    let pairs: Vec<_> = (0..25)
        .map(|r| {
            (
                run.get(2_000, Method::Plain, r).expect("plain"),
                run.get(2_000, Method::Inflated, r).expect("inflated"),
            )
        })
        .collect();
    let parity = pairs.iter().all(|(p, i)| {
        p.block_evals == i.block_evals && p.trace.iter().chain(&i.trace).all(|t| t.block_evals == 4_000)
    });
    let best = |g: usize, inflated: bool| -> Vec<f64> {
        pairs
            .iter()
            .map(|(p, i)| if inflated { i.trace[g].best_log_likelihood } else { p.trace[g].best_log_likelihood })
            .collect()
    };
    let paired_gain = median(
        pairs
            .iter()
            .map(|(p, i)| i.trace[2].best_log_likelihood - p.trace[2].best_log_likelihood)
            .collect(),
    );
    let (med_p, med_i) = (median(best(2, false)), median(best(2, true)));
    let err = |inflated: bool| {
        median(
            pairs
                .iter()
                .map(|(p, i)| if inflated { i } else { p }.trace.last().expect("trace").estimate_error)
                .collect(),
        )
    };
    let (err_p, err_i) = (err(false), err(true));
    outcome(
        parity && paired_gain > 0.0 && med_i > med_p && err_i <= err_p,
        format!(
            "eval parity {parity}; generation 3 best log-lik median {med_i:.2} vs {med_p:.2}, paired median gain {paired_gain:+.2}; final mean error median {err_i:.4} <= {err_p:.4}"
        ),
    )
}

fn resampling_law() -> Outcome {
    let set = SampleSet::from_parts(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 3f64.ln(), 6f64.ln()]).expect("set");
    let draws = 100_000;
    let idx = resample_indices(&set, draws, &mut RandomSource::new(8)).expect("resample");
    let mut freq = [0.0; 3];
    for i in idx {
        freq[i] += 1.0 / draws as f64;
    }
    let dev = freq.iter().zip([0.1, 0.3, 0.6]).map(|(f, p)| (f - p).abs()).fold(0.0, f64::max);
    outcome(
        dev <= 0.01,
        format!("frequencies ({:.4}, {:.4}, {:.4}), max deviation {dev:.4} <= 0.01", freq[0], freq[1], freq[2]),
    )
}

/// Runs the CLI and returns its CSV with the `wall_seconds` column removed.
fn golden_csv(dir: &Path, name: &str, threads: Option<usize>) -> Result<String, String> {
    let path = dir.join(name);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sinflate"));
    cmd.args(["gauss", "--seed", "42", "--replications", "5", "--budgets", "200,2000", "--output"])
        .arg(&path);
    if let Some(t) = threads {
        cmd.args(["--threads", &t.to_string()]);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let mut reader = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let wall = headers.iter().position(|h| h == "wall_seconds").ok_or("no wall_seconds column")?;
    let mut text = String::new();
    for record in std::iter::once(Ok(headers)).chain(reader.records()) {
        let record = record.map_err(|e| e.to_string())?;
        let kept: Vec<&str> = record.iter().enumerate().filter(|(i, _)| *i != wall).map(|(_, f)| f).collect();
        text.push_str(&kept.join(","));
        text.push('\n');
    }
    Ok(text)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let runs: Result<Vec<String>, String> = [("a.csv", None), ("b.csv", None), ("c.csv", Some(1)), ("d.csv", Some(4))]
        .into_iter()
        .map(|(name, t)| golden_csv(dir.path(), name, t))
        .collect();
    match runs {
        Err(e) => outcome(false, format!("cli failed: {e}")),
        Ok(runs) => {
            let identical = runs.windows(2).all(|w| w[0] == w[1]);
            let rows = runs[0].lines().count() - 1;
            outcome(
                identical && rows == 8,
                format!("seed 42, R = 5, budgets 200,2000: {rows} rows, byte-identical across 2 invocations and 1/4 threads: {identical}"),
            )
        }
    }
}

fn main() -> ExitCode {
    let (c1, c2, c3) = theorem_checks();
    let (run, seconds) = gauss_run();
    let results = [
        ("decomposition identity", c1),
        ("convex error bound", c2),
        ("inflation cache oracle", c3),
        ("consistency across budgets", consistency(&run, seconds)),
        ("centered proposal: inflated vs plain MSE", centered_comparison(&run)),
        ("evidence estimation", evidence(&run)),
        ("gaussian mixture PMC at equal evals", dmm_comparison()),
        ("resampling law", resampling_law()),
        ("determinism golden", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        if !o.passed {
            failed += 1;
        }
        println!("{} criterion {}: {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
