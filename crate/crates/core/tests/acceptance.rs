//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#![allow(clippy::needless_range_loop)]

mod common;

use std::process::ExitCode;

use common::{grid_minimax_value, literal_profile, random_matrix, HistorySolver};
use oftrl_core::diagnostics::{emit_csv_string, fit_rate, gap_series, regret_pair, Check};
use oftrl_core::equilibrium::matrix_game_solve;
use oftrl_core::game::{Fixture, MarkovGame, Shape};
use oftrl_core::rng::SplitMix64;
use oftrl_core::solver::{log_spaced_checkpoints, run, RunResult, Solver, SolverConfig};
use oftrl_core::weights::{harmonic_sweep, Property, WeightSchedule};

const SEEDS: [u64; 3] = [1, 7, 42];
const SHAPES: [(usize, usize, usize, usize); 2] = [(2, 3, 3, 3), (3, 4, 3, 3)];
const C_ETA: f64 = 0.125;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, o: &Outcome) {
    println!(
        "criterion {n} {:<4} {title}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn shape(t: (usize, usize, usize, usize)) -> Shape {
    Shape::new(t.0, t.1, t.2, t.3).unwrap()
}

fn every_iteration(t: usize) -> SolverConfig {
    let mut cfg = SolverConfig::new(t);
    cfg.c_eta = C_ETA;
    cfg.checkpoints = (1..=t).collect();
    cfg
}

struct DeskRun {
    label: String,
    result: RunResult,
}

fn desk_runs() -> Vec<DeskRun> {
    let mut out = Vec::new();
    for &sh in &SHAPES {
        for &seed in &SEEDS {
            let game = MarkovGame::generate_random(seed, shape(sh));
            out.push(DeskRun {
                label: format!("seed{seed} H={} S={}", sh.0, sh.1),
                result: run(&game, every_iteration(2000)).unwrap(),
            });
        }
    }
    out
}

fn criterion1(runs: &[DeskRun]) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for r in runs {
        for m in &r.result.checkpoints {
            worst = worst.min(m.slacks.theorem1);
            if !Check::Theorem1.passes(m.slacks.theorem1) {
                failures.push(format!("{} t={}", r.label, m.t));
            }
        }
    }
    let finals: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.3e}", r.result.final_metrics().unwrap().ne_gap_avg))
        .collect();
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{} runs x 2000 checkpoints, min thm1 slack {worst:.3e}, final gaps [{}]{}",
            runs.len(),
            finals.join(", "),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing at {}", failures.join("; "))
            }
        ),
    }
}

fn criterion2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &sh in &SHAPES {
        let game = MarkovGame::generate_random(7, shape(sh));
        for optimistic in [true, false] {
            let mut cfg = SolverConfig::new(5000);
            cfg.c_eta = C_ETA;
            cfg.optimistic = optimistic;
            cfg.track_delta = false;
            cfg.checkpoints = log_spaced_checkpoints(5000, 64);
            let result = run(&game, cfg).unwrap();
            let window: Vec<_> = gap_series(&result)
                .into_iter()
                .filter(|&(t, _)| (200..=5000).contains(&t))
                .collect();
            let fit = fit_rate(&window).unwrap();
            let arm = if optimistic { "oftrl" } else { "baseline" };
            if optimistic {
                let ok = fit.slope <= -0.85 && fit.r2 >= 0.9;
                pass &= ok;
                parts.push(format!(
                    "H={} {arm} slope {:.3} r2 {:.3} {}",
                    sh.0,
                    fit.slope,
                    fit.r2,
                    if ok { "ok" } else { "MISS" }
                ));
            } else {
                parts.push(format!(
                    "H={} {arm} slope {:.3} r2 {:.3}",
                    sh.0, fit.slope, fit.r2
                ));
            }
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion3() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for h in 1..=8 {
        let sched = WeightSchedule::new(h);
        for t in 1..=5000 {
            let slack = sched.harmonic_bound(t) - sched.weighted_harmonic(t).unwrap();
            worst = worst.min(slack);
            pass &= slack >= -1e-12;
        }
        pass &= harmonic_sweep(&sched, 5000).passed();
    }
    // Spot check against the literal product profile.
    for h in [1, 3, 8] {
        for t in [1, 2, 17, 500] {
            let lit: f64 = literal_profile(h, t)
                .iter()
                .enumerate()
                .map(|(k, a)| a / (k + 1) as f64)
                .sum();
            let got = WeightSchedule::new(h).weighted_harmonic(t).unwrap();
            pass &= (lit - got).abs() <= 1e-13;
        }
    }
    Outcome {
        pass,
        detail: format!("H in 1..=8, t in 1..=5000, min slack {worst:.3e}"),
    }
}

fn criterion4() -> Outcome {
    let mut pass = true;
    let mut mins = [f64::INFINITY; 6];
    for h in 1..=8 {
        let report = WeightSchedule::new(h).verify_lemma_a(2000).unwrap();
        pass &= report.all_passed();
        for p in Property::ALL {
            let o = report.outcome(p);
            mins[p as usize] = mins[p as usize].min(o.min_slack);
        }
    }
    // Ratio of the literal product profile against the closed form.
    let mut p3_err: f64 = 0.0;
    for h in 1..=8 {
        let sched = WeightSchedule::new(h);
        for t in [2, 3, 10, 200] {
            let lit = literal_profile(h, t);
            for i in 2..=t {
                let ratio = lit[i - 1] / lit[i - 2];
                let closed = sched.weight_ratio(i).unwrap();
                p3_err = p3_err.max(((ratio - closed) / closed).abs());
            }
        }
    }
    pass &= p3_err <= 1e-12;
    let labels: Vec<String> = Property::ALL
        .iter()
        .map(|p| format!("{} {:.1e}", p.label(), mins[*p as usize]))
        .collect();
    Outcome {
        pass,
        detail: format!(
            "H in 1..=8, t in 1..=2000, min slacks [{}], literal P3 rel err {p3_err:.1e}",
            labels.join(", ")
        ),
    }
}

fn criterion5(runs: &[DeskRun]) -> Outcome {
    let checks = [
        Check::Lemma2,
        Check::Lemma3,
        Check::Lemma5,
        Check::Eq8,
        Check::Eq9,
    ];
    let mut mins = [f64::INFINITY; 5];
    let mut skipped = 0;
    for r in runs {
        for m in &r.result.checkpoints {
            for (k, c) in checks.iter().enumerate() {
                match m.slacks.get(*c) {
                    Some(v) => mins[k] = mins[k].min(v),
                    None => skipped += 1,
                }
            }
        }
    }
    let pass = skipped == 0 && mins.iter().all(|&v| v >= -1e-8);
    let parts: Vec<String> = checks
        .iter()
        .zip(&mins)
        .map(|(c, v)| format!("{} {v:.3e}", c.name()))
        .collect();
    Outcome {
        pass,
        detail: format!("min slacks [{}], skipped {skipped}", parts.join(", ")),
    }
}

fn criterion6() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for fixture in [Fixture::MatchingPennies, Fixture::RockPaperScissors] {
        let game = fixture.build();
        let sh = game.shape();
        let mut cfg = SolverConfig::new(5000);
        cfg.c_eta = C_ETA;
        cfg.checkpoints = vec![5000];
        let mut solver = Solver::new(&game, cfg).unwrap();
        let mut delta_exact = true;
        let mut regret_ok = true;
        for _ in 0..5000 {
            solver.advance().unwrap();
            let st = solver.state();
            delta_exact &= st.delta.as_ref().unwrap()[0] == 0.0;
            let (r1, r2) = regret_pair(&st.metrics, 0, 0);
            regret_ok &= r1 + r2 >= -1e-10;
        }
        let gap = solver.checkpoint().unwrap().ne_gap_avg;
        let bound = 320.0 * 8.0 * sh.log_ab() / 5000.0;
        let ok = delta_exact && regret_ok && gap <= bound && gap <= 1e-2;
        pass &= ok;
        parts.push(format!(
            "{fixture:?}: delta exact {delta_exact}, gap {gap:.3e} (bound {bound:.3})"
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion7() -> Outcome {
    let game = MarkovGame::generate_random(7, shape((2, 2, 2, 2)));
    let sh = game.shape();
    let mut solver = Solver::new(&game, SolverConfig::new(50)).unwrap();
    let q_star = common::nest_q(&game, &solver.nash().unwrap().tables.q);
    let mut oracle = HistorySolver::new(&game, C_ETA, true, 50);
    let mut worst: f64 = 0.0;
    for t in 1..=50 {
        solver.advance().unwrap();
        oracle.step();
        let st = solver.state();
        let it = &oracle.history[t - 1];
        for h in 0..sh.horizon {
            for s in 0..sh.states {
                let (mu_hat, nu_hat) = oracle.averaged(h, s);
                let (r1, r2) = regret_pair(&st.metrics, h, s);
                let (o1, o2) = oracle.regrets(h, s);
                let pairs = st
                    .policies
                    .mu
                    .row(h, s)
                    .iter()
                    .zip(&it.mu[h][s])
                    .chain(st.policies.nu.row(h, s).iter().zip(&it.nu[h][s]))
                    .chain(st.avg_policies.mu.row(h, s).iter().zip(&mu_hat))
                    .chain(st.avg_policies.nu.row(h, s).iter().zip(&nu_hat))
                    .chain([(&r1, &o1), (&r2, &o2)]);
                for (x, y) in pairs {
                    worst = worst.max((x - y).abs());
                }
                for a in 0..sh.actions_max {
                    for b in 0..sh.actions_min {
                        worst = worst.max((st.q[sh.q_index(h, s, a, b)] - it.q[h][s][a][b]).abs());
                    }
                }
            }
            let d = st.delta.as_ref().unwrap()[h];
            worst = worst.max((d - oracle.delta(t, h, &q_star)).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("T=50 max element-wise deviation {worst:.3e}"),
    }
}

fn criterion8() -> Outcome {
    let mut pass = true;
    let pennies = matrix_game_solve(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
    pass &= (pennies.value - 0.5).abs() <= 1e-9
        && pennies
            .row_strategy
            .iter()
            .chain(&pennies.col_strategy)
            .all(|p| (p - 0.5).abs() <= 1e-9);
    let rps_m = [0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 1.0, 0.0, 0.5];
    let rps = matrix_game_solve(&rps_m, 3, 3).unwrap();
    pass &= (rps.value - 0.5).abs() <= 1e-9
        && rps
            .row_strategy
            .iter()
            .chain(&rps.col_strategy)
            .all(|p| (p - 1.0 / 3.0).abs() <= 1e-9);

    let mut rng = SplitMix64::new(8);
    let (mut worst_dual, mut worst_grid): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let m = random_matrix(&mut rng, 4, 5, 0.0, 1.0);
        let sol = matrix_game_solve(&m, 4, 5).unwrap();
        let grid = grid_minimax_value(&m, 4, 5);
        worst_dual = worst_dual.max(sol.duality_gap(&m));
        worst_grid = worst_grid.max((sol.value - grid).abs());
        pass &= grid <= sol.value + 1e-9;
    }
    pass &= worst_dual <= 2e-9 && worst_grid <= 2e-3;
    Outcome {
        pass,
        detail: format!(
            "pennies {:.12}, rps {:.12}, 200 random 4x5: max duality gap {worst_dual:.2e}, max grid diff {worst_grid:.2e}",
            pennies.value, rps.value
        ),
    }
}

fn criterion9(runs: &[DeskRun]) -> Outcome {
    let again = desk_runs();
    let identical = runs
        .iter()
        .zip(&again)
        .filter(|(a, b)| emit_csv_string(&a.result) == emit_csv_string(&b.result))
        .count();
    Outcome {
        pass: identical == runs.len() && again.len() == runs.len(),
        detail: format!("{identical}/{} CSVs byte-identical on rerun", runs.len()),
    }
}

fn main() -> ExitCode {
    let runs = desk_runs();
    let results = [
        (1, "Theorem 1 bound at every checkpoint", criterion1(&runs)),
        (2, "empirical rate on seed-7 games", criterion2()),
        (3, "weighted harmonic sum sweep", criterion3()),
        (4, "step-size profile properties", criterion4()),
        (5, "runtime bound checks", criterion5(&runs)),
        (6, "single-step reduction", criterion6()),
        (7, "history oracle equivalence", criterion7()),
        (8, "matrix game solver", criterion8()),
        (9, "determinism", criterion9(&runs)),
    ];
    for (n, title, o) in &results {
        report(*n, title, o);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
