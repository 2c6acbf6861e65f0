//! Online regret and estimation-error tracking, bound slacks, CSV output and
//! empirical rate fitting.
//!
//! Every weighted sum `sum_i alpha_t^i x_i` is kept as a running average
//! `x_t = x_{t-1} + alpha_t (x_t - x_{t-1})`, which is exact because
//! `alpha_{t+1}^i = (1 - alpha_{t+1}) alpha_t^i`. No per-iteration history is
//! stored.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::equilibrium::{ne_gap, EvalError, NashSolution};
use crate::game::{MarkovGame, Shape};
use crate::kernels::{argmax, argmin};
use crate::solver::{RunResult, SolverState};

/// Gaps at or below this are treated as solved to machine precision.
pub const FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("rate fit needs at least 3 points with gap > {FIT_FLOOR:e}, got {0}")]
    TooFewPoints(usize),
}

/// Running weighted sums behind the regret, path-length and error metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAccumulators {
    shape: Shape,
    /// `sum_i alpha_t^i [Q^i nu^i](s, a)` per `(h, s, a)`.
    pub avg_loss_max: Vec<f64>,
    /// `sum_i alpha_t^i [(Q^i)^T mu^i](s, b)` per `(h, s, b)`.
    pub avg_loss_min: Vec<f64>,
    /// `sum_i alpha_t^i <mu^i, Q^i nu^i>(s)` per `(h, s)`.
    pub avg_realized: Vec<f64>,
    /// `sum_{i>=2} alpha_t^i (|mu^i - mu^{i-1}|_1^2 + |nu^i - nu^{i-1}|_1^2)`
    /// per `(h, s)`. The first iterate contributes zero.
    pub avg_path: Vec<f64>,
    /// `sum_i alpha_t^i delta_h^i` per `h`, when Q* is available.
    pub avg_delta: Option<Vec<f64>>,
}

/// One iteration's raw quantities, folded into [`MetricAccumulators`].
pub(crate) struct IterateSample<'a> {
    pub alpha: f64,
    pub loss_max: &'a [f64],
    pub loss_min: &'a [f64],
    pub realized: &'a [f64],
    pub path: &'a [f64],
    pub delta: Option<&'a [f64]>,
}

fn fold(avg: &mut [f64], x: &[f64], alpha: f64) {
    for (m, &v) in avg.iter_mut().zip(x) {
        *m += alpha * (v - *m);
    }
}

impl MetricAccumulators {
    pub fn new(shape: Shape, track_delta: bool) -> Self {
        let cells = shape.cells();
        Self {
            shape,
            avg_loss_max: vec![0.0; cells * shape.actions_max],
            avg_loss_min: vec![0.0; cells * shape.actions_min],
            avg_realized: vec![0.0; cells],
            avg_path: vec![0.0; cells],
            avg_delta: track_delta.then(|| vec![0.0; shape.horizon]),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub(crate) fn fold(&mut self, sample: &IterateSample<'_>) {
        let alpha = sample.alpha;
        fold(&mut self.avg_loss_max, sample.loss_max, alpha);
        fold(&mut self.avg_loss_min, sample.loss_min, alpha);
        fold(&mut self.avg_realized, sample.realized, alpha);
        fold(&mut self.avg_path, sample.path, alpha);
        if let (Some(avg), Some(delta)) = (self.avg_delta.as_mut(), sample.delta) {
            fold(avg, delta, alpha);
        }
    }

    pub fn loss_max(&self, h: usize, s: usize) -> &[f64] {
        let n = self.shape.actions_max;
        let off = self.shape.cell(h, s) * n;
        &self.avg_loss_max[off..off + n]
    }

    pub fn loss_min(&self, h: usize, s: usize) -> &[f64] {
        let n = self.shape.actions_min;
        let off = self.shape.cell(h, s) * n;
        &self.avg_loss_min[off..off + n]
    }

    pub fn realized(&self, h: usize, s: usize) -> f64 {
        self.avg_realized[self.shape.cell(h, s)]
    }

    pub fn path(&self, h: usize, s: usize) -> f64 {
        self.avg_path[self.shape.cell(h, s)]
    }

    pub fn delta_avg(&self, h: usize) -> Option<f64> {
        self.avg_delta.as_ref().map(|d| d[h])
    }
}

/// Weighted individual regrets `(reg_{h,1}^t(s), reg_{h,2}^t(s))`.
///
/// The maximum of a linear form over the simplex sits at a vertex, so the
/// comparator is the best single action.
pub fn regret_pair(acc: &MetricAccumulators, h: usize, s: usize) -> (f64, f64) {
    let realized = acc.realized(h, s);
    let (_, best_max) = argmax(acc.loss_max(h, s));
    let (_, best_min) = argmin(acc.loss_min(h, s));
    (best_max - realized, realized - best_min)
}

/// The bound checks evaluated at each checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Check {
    /// Gap of the averaged pair against `320 H^5 log(AB) / (C t)`.
    Theorem1,
    /// Gap against twice the summed regrets and averaged errors.
    Lemma1,
    /// Summed regrets against `3 H^3 log(AB) / (C t)` minus the path term.
    Lemma2,
    /// `delta_h^t` against `5 e^2 H^4 log(AB) / (C t)`.
    Lemma3,
    /// `reg1 + reg2 >= -2 sum alpha delta`.
    Lemma5,
    /// `delta_h^t <= sum alpha delta_{h+1} + reg_{h+1}`.
    Eq8,
    /// `reg_h^t <= 5 H^3 log(AB) / (C t) + sum alpha delta_h / H`.
    Eq9,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Theorem1,
        Check::Lemma1,
        Check::Lemma2,
        Check::Lemma3,
        Check::Lemma5,
        Check::Eq8,
        Check::Eq9,
    ];

    /// Closed-form bounds get `1e-9`; bounds where Q* enters get `1e-8`.
    pub fn tolerance(&self) -> f64 {
        match self {
            Check::Theorem1 | Check::Lemma3 => 1e-9,
            _ => 1e-8,
        }
    }

    pub fn passes(&self, slack: f64) -> bool {
        slack >= -self.tolerance()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Check::Theorem1 => "thm1",
            Check::Lemma1 => "lemma1",
            Check::Lemma2 => "lemma2",
            Check::Lemma3 => "lemma3",
            Check::Lemma5 => "lemma5",
            Check::Eq8 => "eq8",
            Check::Eq9 => "eq9",
        }
    }
}

fn inv_c(c_eta: f64) -> f64 {
    1.0 / c_eta
}

pub fn check_theorem1(ne_gap_avg: f64, t: usize, shape: Shape, c_eta: f64) -> f64 {
    let h = shape.horizon as f64;
    320.0 * inv_c(c_eta) * h.powi(5) * shape.log_ab() / t as f64 - ne_gap_avg
}

pub fn check_lemma2(acc: &MetricAccumulators, h: usize, s: usize, t: usize, c_eta: f64) -> f64 {
    let shape = acc.shape();
    let hf = shape.horizon as f64;
    let eta = c_eta / (hf * hf);
    let (reg1, reg2) = regret_pair(acc, h, s);
    3.0 * inv_c(c_eta) * hf.powi(3) * shape.log_ab() / t as f64
        - 4.0 * eta * hf.powi(3) * acc.path(h, s)
        - (reg1 + reg2)
}

pub fn check_lemma3(delta_h: f64, t: usize, shape: Shape, c_eta: f64) -> f64 {
    let h = shape.horizon as f64;
    let e2 = std::f64::consts::E * std::f64::consts::E;
    5.0 * e2 * inv_c(c_eta) * h.powi(4) * shape.log_ab() / t as f64 - delta_h
}

/// `None` when error tracking is off.
pub fn check_lemma5(acc: &MetricAccumulators, h: usize, s: usize) -> Option<f64> {
    let avg_delta = acc.delta_avg(h)?;
    let (reg1, reg2) = regret_pair(acc, h, s);
    Some(reg1 + reg2 + 2.0 * avg_delta)
}

/// `reg_next` is used as is, even when negative.
pub fn check_recursion8(delta_h: f64, avg_delta_next: f64, reg_next: f64) -> f64 {
    avg_delta_next + reg_next - delta_h
}

pub fn check_eq9(reg_max: f64, avg_delta: f64, t: usize, shape: Shape, c_eta: f64) -> f64 {
    let h = shape.horizon as f64;
    5.0 * inv_c(c_eta) * h.powi(3) * shape.log_ab() / t as f64 + avg_delta / h - reg_max
}

/// `2 sum_h (max_s (reg1 + reg2) + 2 sum alpha delta_h) - gap`.
pub fn lemma1_slack(reg_sum_by_h: &[f64], avg_delta: &[f64], ne_gap_avg: f64) -> f64 {
    let rhs: f64 = reg_sum_by_h
        .iter()
        .zip(avg_delta)
        .map(|(r, d)| r + 2.0 * d)
        .sum();
    2.0 * rhs - ne_gap_avg
}

/// Minimum slack of each check at one checkpoint; `None` means skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSlacks {
    pub theorem1: f64,
    pub lemma2: f64,
    pub lemma1: Option<f64>,
    pub lemma3: Option<f64>,
    pub lemma5: Option<f64>,
    /// Also `None` for `H = 1`, where the recursion has no instance.
    pub eq8: Option<f64>,
    pub eq9: Option<f64>,
}

impl BoundSlacks {
    pub fn get(&self, check: Check) -> Option<f64> {
        match check {
            Check::Theorem1 => Some(self.theorem1),
            Check::Lemma1 => self.lemma1,
            Check::Lemma2 => Some(self.lemma2),
            Check::Lemma3 => self.lemma3,
            Check::Lemma5 => self.lemma5,
            Check::Eq8 => self.eq8,
            Check::Eq9 => self.eq9,
        }
    }

    /// Checks that ran and fell below tolerance.
    pub fn failures(&self) -> Vec<(Check, f64)> {
        Check::ALL
            .iter()
            .filter_map(|&c| self.get(c).map(|v| (c, v)))
            .filter(|(c, v)| !c.passes(*v))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub t: usize,
    /// Gap of the averaged pair.
    pub ne_gap_avg: f64,
    /// Gap of the current iterate.
    pub ne_gap_last: f64,
    /// `delta_h^t` per horizon, when tracked.
    pub delta: Option<Vec<f64>>,
    /// `max_s reg_{h,1}^t(s)` per horizon.
    pub reg1: Vec<f64>,
    /// `max_s reg_{h,2}^t(s)` per horizon.
    pub reg2: Vec<f64>,
    /// `max_s (reg_{h,1}^t(s) + reg_{h,2}^t(s))` per horizon.
    pub reg_sum: Vec<f64>,
    /// `reg_h^t = max_s max(reg1, reg2)` per horizon.
    pub reg_max: Vec<f64>,
    pub slacks: BoundSlacks,
}

fn min_opt(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.min(v)))
}

/// Evaluates gaps, regrets and every bound slack at the solver's current
/// iteration.
pub fn evaluate_checkpoint(
    game: &MarkovGame,
    state: &SolverState,
    nash: Option<&NashSolution>,
    c_eta: f64,
) -> Result<IterationMetrics, EvalError> {
    let shape = game.shape();
    let t = state.t;
    let acc = &state.metrics;
    let ne_gap_avg = ne_gap(game, &state.avg_policies)?;
    let ne_gap_last = ne_gap(game, &state.policies)?;

    let mut reg1 = vec![f64::NEG_INFINITY; shape.horizon];
    let mut reg2 = vec![f64::NEG_INFINITY; shape.horizon];
    let mut reg_sum = vec![f64::NEG_INFINITY; shape.horizon];
    let mut lemma2 = f64::INFINITY;
    let mut lemma5: Option<f64> = None;
    for h in 0..shape.horizon {
        for s in 0..shape.states {
            let (r1, r2) = regret_pair(acc, h, s);
            reg1[h] = reg1[h].max(r1);
            reg2[h] = reg2[h].max(r2);
            reg_sum[h] = reg_sum[h].max(r1 + r2);
            lemma2 = lemma2.min(check_lemma2(acc, h, s, t, c_eta));
            if let Some(v) = check_lemma5(acc, h, s) {
                lemma5 = min_opt(lemma5, v);
            }
        }
    }
    let reg_max: Vec<f64> = reg1.iter().zip(&reg2).map(|(a, b)| a.max(*b)).collect();

    let mut slacks = BoundSlacks {
        theorem1: check_theorem1(ne_gap_avg, t, shape, c_eta),
        lemma2,
        lemma1: None,
        lemma3: None,
        lemma5,
        eq8: None,
        eq9: None,
    };
    let delta = match (nash, acc.avg_delta.as_ref()) {
        (Some(nash), Some(avg_delta)) => {
            let delta = crate::equilibrium::q_error(shape, &state.q, &nash.tables.q)?;
            for h in 0..shape.horizon {
                slacks.lemma3 = min_opt(slacks.lemma3, check_lemma3(delta[h], t, shape, c_eta));
                slacks.eq9 = min_opt(
                    slacks.eq9,
                    check_eq9(reg_max[h], avg_delta[h], t, shape, c_eta),
                );
                if h + 1 < shape.horizon {
                    slacks.eq8 = min_opt(
                        slacks.eq8,
                        check_recursion8(delta[h], avg_delta[h + 1], reg_max[h + 1]),
                    );
                }
            }
            slacks.lemma1 = Some(lemma1_slack(&reg_sum, avg_delta, ne_gap_avg));
            Some(delta)
        }
        _ => None,
    };

    Ok(IterationMetrics {
        t,
        ne_gap_avg,
        ne_gap_last,
        delta,
        reg1,
        reg2,
        reg_sum,
        reg_max,
        slacks,
    })
}

/// Column order of the checkpoint table.
pub const CSV_HEADER: &str = "t,ne_gap_avg,ne_gap_last,delta_max,reg_sum_max,reg_max,thm1_slack,\
lemma2_min_slack,lemma3_min_slack,lemma5_min_slack,eq8_min_slack,eq9_min_slack";

/// Shortest round-trip decimal; `nan` for skipped values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        ryu::Buffer::new().format_finite(x).to_string()
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Checkpoint table as CSV text. When errors are tracked a trailing
/// `lemma1_slack` column is appended.
pub fn emit_csv_string(run: &RunResult) -> String {
    let with_lemma1 = run.config.track_delta;
    let mut out = String::from(CSV_HEADER);
    if with_lemma1 {
        out.push_str(",lemma1_slack");
    }
    out.push('\n');
    let opt = |x: Option<f64>| format_float(x.unwrap_or(f64::NAN));
    for m in &run.checkpoints {
        let delta_max = m.delta.as_deref().map(max_of);
        let fields = [
            m.t.to_string(),
            format_float(m.ne_gap_avg),
            format_float(m.ne_gap_last),
            opt(delta_max),
            format_float(max_of(&m.reg_sum)),
            format_float(max_of(&m.reg_max)),
            format_float(m.slacks.theorem1),
            format_float(m.slacks.lemma2),
            opt(m.slacks.lemma3),
            opt(m.slacks.lemma5),
            opt(m.slacks.eq8),
            opt(m.slacks.eq9),
        ];
        out.push_str(&fields.join(","));
        if with_lemma1 {
            let _ = write!(out, ",{}", opt(m.slacks.lemma1));
        }
        out.push('\n');
    }
    out
}

pub fn emit_csv<W: Write>(run: &RunResult, mut sink: W) -> io::Result<()> {
    sink.write_all(emit_csv_string(run).as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares line through `(log t, log gap)`, skipping gaps at or below
/// [`FIT_FLOOR`].
pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit, DiagnosticsError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, g)| *g > FIT_FLOOR)
        .map(|&(t, g)| ((t as f64).ln(), g.ln()))
        .collect();
    let n = usable.len();
    if n < 3 {
        return Err(DiagnosticsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        points: n,
    })
}

/// Checkpoint gaps of the averaged pair, for [`fit_rate`].
pub fn gap_series(run: &RunResult) -> Vec<(usize, f64)> {
    run.checkpoints
        .iter()
        .map(|m| (m.t, m.ne_gap_avg))
        .collect()
}
