use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use rayon::prelude::*;

use oftrl_core::diagnostics::{emit_csv_string, fit_rate, format_float, gap_series, Check};
use oftrl_core::game::{Fixture, MarkovGame, Shape};
use oftrl_core::solver::{log_spaced_checkpoints, run, RunResult, SolverConfig};
use oftrl_core::weights::{harmonic_sweep, WeightSchedule};

use crate::{GenArgs, SolveArgs, SweepArgs, VerifyArgs};

/// Bad flag combinations detected after parsing; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::error::Error for UsageError {}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Writes through a sibling temp file and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("output path has no file name")?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn shape_from_flags(
    h: Option<usize>,
    s: Option<usize>,
    a: Option<usize>,
    b: Option<usize>,
) -> Result<Shape> {
    match (h, s, a, b) {
        (Some(h), Some(s), Some(a), Some(b)) => {
            Shape::new(h, s, a, b).map_err(|e| usage(e.to_string()))
        }
        _ => Err(usage("--seed needs all of --H --S --A --B")),
    }
}

pub fn gen(args: &GenArgs) -> Result<ExitCode> {
    let game = match (&args.fixture, args.seed) {
        (Some(name), None) => name
            .parse::<Fixture>()
            .map_err(|e| usage(e.to_string()))?
            .build(),
        (None, Some(seed)) => {
            let shape = shape_from_flags(
                args.horizon,
                args.states,
                args.actions_max,
                args.actions_min,
            )?;
            MarkovGame::generate_random(seed, shape)
        }
        _ => return Err(usage("give exactly one of --seed or --fixture")),
    };
    write_atomic(&args.out, &game.to_document_string())?;
    let report = game.validate();
    println!("{}", args.out.display());
    println!("validation: {report}");
    Ok(if report.is_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn parse_checkpoints(spec: Option<&str>, iterations: usize) -> Result<Vec<usize>> {
    let Some(spec) = spec else {
        return Ok(log_spaced_checkpoints(
            iterations,
            oftrl_core::solver::DEFAULT_CHECKPOINTS,
        ));
    };
    let bad = || usage(format!("--checkpoints: cannot parse `{spec}`"));
    if spec.contains(',') {
        let mut list = spec
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        list.sort_unstable();
        list.dedup();
        Ok(list)
    } else {
        let count = spec.trim().parse::<usize>().map_err(|_| bad())?;
        Ok(log_spaced_checkpoints(iterations, count))
    }
}

fn arm_name(optimistic: bool) -> &'static str {
    if optimistic {
        "oftrl"
    } else {
        "baseline"
    }
}

fn report_failures(label: &str, run: &RunResult) -> usize {
    let failures = run.failed_checks();
    for (t, check, slack) in &failures {
        eprintln!(
            "{label}: {} failed at t={t} (slack {}, tolerance {})",
            check.name(),
            format_float(*slack),
            format_float(-check.tolerance())
        );
    }
    failures.len()
}

pub fn solve(args: &SolveArgs) -> Result<ExitCode> {
    let game = MarkovGame::load_from_path(&args.game)
        .with_context(|| format!("loading {}", args.game.display()))?;
    let config = SolverConfig {
        c_eta: args.c_eta,
        iterations: args.iterations,
        checkpoints: parse_checkpoints(args.checkpoints.as_deref(), args.iterations)?,
        optimistic: !args.no_optimism,
        track_delta: !args.no_delta,
        seed_note: Some(args.game.display().to_string()),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let arm = arm_name(config.optimistic);
    let result = run(&game, config)?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let csv_path = args.out_dir.join(format!("{arm}.csv"));
    let policy_path = args.out_dir.join(format!("{arm}_policy.json"));
    write_atomic(&csv_path, &emit_csv_string(&result))?;
    write_atomic(&policy_path, &result.avg_policies.to_document_string())?;

    let last = result
        .final_metrics()
        .context("run recorded no checkpoints")?;
    println!("{}", csv_path.display());
    println!("{}", policy_path.display());
    println!("t={} ne_gap_avg={}", last.t, format_float(last.ne_gap_avg));
    let failures = report_failures(arm, &result);
    println!(
        "bound checks: {}",
        if failures == 0 {
            "all pass"
        } else {
            "FAILURES"
        }
    );
    Ok(if args.strict && failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

pub fn verify_weights(args: &VerifyArgs) -> Result<ExitCode> {
    if args.horizon_max == 0 || args.t_max == 0 {
        return Err(usage("--H-max and --t-max must be positive"));
    }
    let mut all_pass = true;
    for h in 1..=args.horizon_max {
        let schedule = WeightSchedule::new(h);
        let report = schedule.verify_lemma_a(args.t_max)?;
        println!("{report}");
        all_pass &= report.all_passed();
        let sweep = harmonic_sweep(&schedule, args.t_max);
        println!(
            "Lemma4 H={} t<={} {:<44} {} (min slack {:e} at t={})",
            h,
            args.t_max,
            "sum alpha_t^i / i <= (1+1/H)/t",
            if sweep.passed() { "PASS" } else { "FAIL" },
            sweep.min_slack,
            sweep.worst_t
        );
        all_pass &= sweep.passed();
    }
    println!("overall: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

struct Arm {
    name: String,
    game: MarkovGame,
    config: SolverConfig,
}

struct ArmOutcome {
    name: String,
    csv: String,
    slope: f64,
    r2: f64,
    final_gap: f64,
    thm1_pass: bool,
    failures: usize,
}

fn run_arm(arm: &Arm, out_dir: &Path) -> Result<ArmOutcome> {
    let result =
        run(&arm.game, arm.config.clone()).with_context(|| format!("running arm {}", arm.name))?;
    let csv = emit_csv_string(&result);
    write_atomic(&out_dir.join(format!("{}.csv", arm.name)), &csv)?;
    let (slope, r2) = match fit_rate(&gap_series(&result)) {
        Ok(fit) => (fit.slope, fit.r2),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let thm1_pass = result
        .checkpoints
        .iter()
        .all(|m| Check::Theorem1.passes(m.slacks.theorem1));
    Ok(ArmOutcome {
        name: arm.name.clone(),
        csv,
        slope,
        r2,
        final_gap: result.final_metrics().map_or(f64::NAN, |m| m.ne_gap_avg),
        thm1_pass,
        failures: report_failures(&arm.name, &result),
    })
}

pub fn sweep(args: &SweepArgs) -> Result<ExitCode> {
    let mut ts = args.iterations.clone();
    ts.sort_unstable();
    ts.dedup();
    let Some(&t_max) = ts.last() else {
        return Err(usage("--T needs at least one value"));
    };
    if ts[0] == 0 {
        return Err(usage("--T values must be positive"));
    }
    let checkpoints = if ts.len() == 1 {
        log_spaced_checkpoints(t_max, args.checkpoints)
    } else {
        ts.clone()
    };

    let games: Vec<(String, MarkovGame)> = match &args.game {
        Some(path) => {
            let game = MarkovGame::load_from_path(path)
                .with_context(|| format!("loading {}", path.display()))?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("game")
                .to_string();
            vec![(stem, game)]
        }
        None => {
            let shape = shape_from_flags(
                args.horizon,
                args.states,
                args.actions_max,
                args.actions_min,
            )?;
            args.seed
                .iter()
                .map(|&seed| {
                    (
                        format!("seed{seed}"),
                        MarkovGame::generate_random(seed, shape),
                    )
                })
                .collect()
        }
    };

    let mut optimism = vec![true];
    if args.no_optimism {
        optimism.push(false);
    }
    let mut arms = Vec::new();
    for (label, game) in &games {
        for &optimistic in &optimism {
            let config = SolverConfig {
                c_eta: args.c_eta,
                iterations: t_max,
                checkpoints: checkpoints.clone(),
                optimistic,
                track_delta: !args.no_delta,
                seed_note: Some(label.clone()),
            };
            config.validate().map_err(|e| usage(e.to_string()))?;
            arms.push(Arm {
                name: format!("{label}_{}", arm_name(optimistic)),
                game: game.clone(),
                config,
            });
        }
    }

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let out_dir: PathBuf = args.out_dir.clone();
    let outcomes = arms
        .par_iter()
        .map(|arm| run_arm(arm, &out_dir))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = String::from("arm,slope,r2,final_gap,thm1_pass\n");
    let mut failures = 0;
    for o in &outcomes {
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            o.name,
            format_float(o.slope),
            format_float(o.r2),
            format_float(o.final_gap),
            o.thm1_pass
        ));
        failures += o.failures;
        println!(
            "{}: slope={} r2={} final_gap={} rows={}",
            o.name,
            format_float(o.slope),
            format_float(o.r2),
            format_float(o.final_gap),
            o.csv.lines().count() - 1
        );
    }
    let summary_path = args.out_dir.join("summary.csv");
    write_atomic(&summary_path, &summary)?;
    println!("{}", summary_path.display());
    Ok(if args.strict && failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
