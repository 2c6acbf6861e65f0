//! Weighted optimistic FTRL policy updates with smooth Q-value updates.
//!
//! Each iteration `t`:
//! 1. every `(h, s)` plays exponential weights on its `w`-weighted loss sum
//!    plus a one-step predictor (the previous iteration's loss);
//! 2. `Q_h` is mixed toward the one-step backup at rate `alpha_t`, from the
//!    last horizon backward;
//! 3. policies are folded into the `alpha`-weighted running average that is
//!    the algorithm's output.
//!
//! The weighted loss sums are stored normalized by the latest weight,
//! `L_t = sum_{i<=t} (w_i / w_t) x_i = (w_{t-1}/w_t) L_{t-1} + x_t`, which keeps
//! every stored magnitude at `O(t H)` even though `w_t` itself grows like
//! `t^H`.

use thiserror::Error;

use crate::diagnostics::{
    evaluate_checkpoint, IterateSample, IterationMetrics, MetricAccumulators,
};
use crate::equilibrium::{nash_q, q_error, EvalError, NashSolution};
use crate::game::{MarkovGame, Policy, PolicyPair, Side};
use crate::kernels::{bilinear, contract_max, contract_min, dot, l1_sq, softmax_into};
use crate::weights::WeightSchedule;

/// Largest admissible `C_eta`.
pub const MAX_C_ETA: f64 = 0.125;
/// Checkpoint count used when none is given.
pub const DEFAULT_CHECKPOINTS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("non-finite exponent for the {side:?} player at h={h}, s={s}")]
    NonFiniteExponent { side: Side, h: usize, s: usize },
    #[error("policy update called before the iteration counter was advanced")]
    NotAdvanced,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// `eta = c_eta / H^2`, with `c_eta` in `(0, 1/8]`.
    pub c_eta: f64,
    pub iterations: usize,
    /// Ascending iterations at which metrics are recorded.
    pub checkpoints: Vec<usize>,
    /// `false` drops the predictor term (plain weighted FTRL baseline).
    pub optimistic: bool,
    /// Track `delta_h^t` and the checks that depend on Q*.
    pub track_delta: bool,
    pub seed_note: Option<String>,
}

impl SolverConfig {
    /// Defaults: `c_eta = 1/8`, optimistic, error tracking on and
    /// [`DEFAULT_CHECKPOINTS`] log-spaced checkpoints.
    pub fn new(iterations: usize) -> Self {
        Self {
            c_eta: MAX_C_ETA,
            iterations,
            checkpoints: log_spaced_checkpoints(iterations, DEFAULT_CHECKPOINTS),
            optimistic: true,
            track_delta: true,
            seed_note: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(self.c_eta > 0.0 && self.c_eta <= MAX_C_ETA) {
            return bad(format!("c_eta = {} not in (0, 0.125]", self.c_eta));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must be strictly ascending".into());
        }
        if let Some(&c) = self
            .checkpoints
            .iter()
            .find(|&&c| c == 0 || c > self.iterations)
        {
            return bad(format!("checkpoint {c} outside [1, {}]", self.iterations));
        }
        Ok(())
    }

    pub fn eta(&self, horizon: usize) -> f64 {
        self.c_eta / (horizon * horizon) as f64
    }
}

/// `count` log-spaced iterations in `[1, t_max]` plus `t_max`, deduplicated.
pub fn log_spaced_checkpoints(t_max: usize, count: usize) -> Vec<usize> {
    if t_max == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = match count {
        0 => Vec::new(),
        1 => vec![1],
        _ => {
            let top = (t_max as f64).ln();
            (0..count)
                .map(|k| {
                    let t = (top * k as f64 / (count - 1) as f64).exp().round() as usize;
                    t.clamp(1, t_max)
                })
                .collect()
        }
    };
    out.push(t_max);
    out.sort_unstable();
    out.dedup();
    out
}

/// All running quantities of one solver run.
#[derive(Clone, Debug)]
pub struct SolverState {
    /// Iterations completed; 0 before the first update.
    pub t: usize,
    /// `Q^t[h][s][a][b]`.
    pub q: Vec<f64>,
    /// `sum_{i<=t} (w_i/w_t) [Q^i nu^i](s, a)` per `(h, s, a)`.
    pub loss_sum_max: Vec<f64>,
    /// `sum_{i<=t} (w_i/w_t) [(Q^i)^T mu^i](s, b)` per `(h, s, b)`.
    pub loss_sum_min: Vec<f64>,
    /// Predictor `[Q^t nu^t](s, .)` for the next policy update.
    pub last_loss_max: Vec<f64>,
    /// Predictor `[(Q^t)^T mu^t](s, .)`.
    pub last_loss_min: Vec<f64>,
    /// `(mu^t, nu^t)`.
    pub policies: PolicyPair,
    /// `(mu^{t-1}, nu^{t-1})`, kept for path lengths.
    pub prev_policies: PolicyPair,
    /// `alpha`-weighted averages; all zero before the first iteration.
    pub avg_policies: PolicyPair,
    /// `delta_h^t` of the latest iterate, when tracked.
    pub delta: Option<Vec<f64>>,
    pub metrics: MetricAccumulators,
}

fn zero_policy(policy: &Policy) -> Policy {
    Policy::from_probs(
        policy.shape(),
        policy.side(),
        vec![0.0; policy.probs().len()],
    )
    .expect("length copied from an existing policy")
}

impl SolverState {
    fn new(game: &MarkovGame, track_delta: bool) -> Self {
        let sh = game.shape();
        let cells = sh.cells();
        let uniform = PolicyPair::uniform(game);
        let zeros = PolicyPair {
            mu: zero_policy(&uniform.mu),
            nu: zero_policy(&uniform.nu),
        };
        Self {
            t: 0,
            q: vec![0.0; sh.q_len()],
            loss_sum_max: vec![0.0; cells * sh.actions_max],
            loss_sum_min: vec![0.0; cells * sh.actions_min],
            last_loss_max: vec![0.0; cells * sh.actions_max],
            last_loss_min: vec![0.0; cells * sh.actions_min],
            policies: uniform.clone(),
            prev_policies: uniform,
            avg_policies: zeros,
            delta: None,
            metrics: MetricAccumulators::new(sh, track_delta),
        }
    }
}

/// One run's driver: owns the state, borrows the game.
pub struct Solver<'g> {
    game: &'g MarkovGame,
    config: SolverConfig,
    schedule: WeightSchedule,
    eta: f64,
    nash: Option<NashSolution>,
    state: SolverState,
}

impl<'g> Solver<'g> {
    /// Validates the config and sets `Q^0 = 0`. Solves for Q* up front when
    /// error tracking is on.
    pub fn new(game: &'g MarkovGame, config: SolverConfig) -> Result<Self, SolverError> {
        let nash = if config.track_delta {
            Some(nash_q(game)?)
        } else {
            None
        };
        Self::with_nash(game, config, nash)
    }

    /// Like [`new`](Self::new) with a precomputed Q* (or none).
    pub fn with_nash(
        game: &'g MarkovGame,
        mut config: SolverConfig,
        nash: Option<NashSolution>,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        config.track_delta = nash.is_some();
        let horizon = game.shape().horizon;
        Ok(Self {
            game,
            schedule: WeightSchedule::new(horizon),
            eta: config.eta(horizon),
            state: SolverState::new(game, config.track_delta),
            config,
            nash,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn nash(&self) -> Option<&NashSolution> {
        self.nash.as_ref()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Recomputes `(mu^t, nu^t)` for the current `t` from the loss sums of
    /// iterations `< t` and the predictor.
    pub fn policy_update(&mut self) -> Result<(), SolverError> {
        let t = self.state.t;
        if t == 0 {
            return Err(SolverError::NotAdvanced);
        }
        let sh = self.game.shape();
        let carry = self.schedule.carry_factor(t).expect("t >= 1");
        let predictor = if self.config.optimistic { 1.0 } else { 0.0 };
        let st = &mut self.state;
        for (side, n, sums, last, sign) in [
            (
                Side::Max,
                sh.actions_max,
                &st.loss_sum_max,
                &st.last_loss_max,
                1.0,
            ),
            (
                Side::Min,
                sh.actions_min,
                &st.loss_sum_min,
                &st.last_loss_min,
                -1.0,
            ),
        ] {
            let policy = match side {
                Side::Max => &mut st.policies.mu,
                Side::Min => &mut st.policies.nu,
            };
            let mut logits = vec![0.0; n];
            for h in 0..sh.horizon {
                for s in 0..sh.states {
                    let off = sh.cell(h, s) * n;
                    for (k, l) in logits.iter_mut().enumerate() {
                        *l = carry * sums[off + k] + predictor * last[off + k];
                    }
                    if !softmax_into(&logits, sign * self.eta, policy.row_mut(h, s)) {
                        return Err(SolverError::NonFiniteExponent { side, h, s });
                    }
                }
            }
        }
        Ok(())
    }

    /// Mixes `Q_h` toward `r_h + P_h [mu_{h+1}^T Q_{h+1} nu_{h+1}]` at rate
    /// `alpha_t`, for `h` from the last step down to the first.
    pub fn value_update(&mut self) {
        let sh = self.game.shape();
        let alpha = self.schedule.alpha(self.state.t.max(1)).expect("t >= 1");
        let st = &mut self.state;
        let mut next_value = vec![0.0; sh.states];
        for h in (0..sh.horizon).rev() {
            let last = h + 1 == sh.horizon;
            if !last {
                for (s, v) in next_value.iter_mut().enumerate() {
                    let off = sh.block(h + 1, s);
                    let block = &st.q[off..off + sh.actions_max * sh.actions_min];
                    *v = bilinear(
                        block,
                        st.policies.mu.row(h + 1, s),
                        st.policies.nu.row(h + 1, s),
                    );
                }
            }
            for s in 0..sh.states {
                for a in 0..sh.actions_max {
                    for b in 0..sh.actions_min {
                        let mut target = self.game.reward(h, s, a, b);
                        if !last {
                            target += dot(self.game.transition_row(h, s, a, b), &next_value);
                        }
                        let q = &mut st.q[sh.q_index(h, s, a, b)];
                        *q += alpha * (target - *q);
                    }
                }
            }
        }
    }

    /// One full iteration: policy update, value update, then the loss sums,
    /// predictors, averaged policies and metric accumulators.
    pub fn advance(&mut self) -> Result<(), SolverError> {
        self.state.prev_policies.clone_from(&self.state.policies);
        self.state.t += 1;
        self.policy_update()?;
        self.value_update();

        let t = self.state.t;
        let sh = self.game.shape();
        let alpha = self.schedule.alpha(t).expect("t >= 1");
        let carry = self.schedule.carry_factor(t).expect("t >= 1");
        let st = &mut self.state;
        let cells = sh.cells();
        let mut loss_max = vec![0.0; cells * sh.actions_max];
        let mut loss_min = vec![0.0; cells * sh.actions_min];
        let mut realized = vec![0.0; cells];
        let mut path = vec![0.0; cells];
        for h in 0..sh.horizon {
            for s in 0..sh.states {
                let c = sh.cell(h, s);
                let off = sh.block(h, s);
                let block = &st.q[off..off + sh.actions_max * sh.actions_min];
                let mu = st.policies.mu.row(h, s);
                let nu = st.policies.nu.row(h, s);
                let lm = &mut loss_max[c * sh.actions_max..(c + 1) * sh.actions_max];
                contract_min(block, nu, lm);
                contract_max(
                    block,
                    mu,
                    &mut loss_min[c * sh.actions_min..(c + 1) * sh.actions_min],
                );
                realized[c] = dot(mu, lm);
                if t >= 2 {
                    path[c] = l1_sq(mu, st.prev_policies.mu.row(h, s))
                        + l1_sq(nu, st.prev_policies.nu.row(h, s));
                }
            }
        }
        for (sum, x) in st.loss_sum_max.iter_mut().zip(&loss_max) {
            *sum = carry * *sum + x;
        }
        for (sum, x) in st.loss_sum_min.iter_mut().zip(&loss_min) {
            *sum = carry * *sum + x;
        }
        st.last_loss_max.copy_from_slice(&loss_max);
        st.last_loss_min.copy_from_slice(&loss_min);

        for (avg, cur) in [
            (&mut st.avg_policies.mu, &st.policies.mu),
            (&mut st.avg_policies.nu, &st.policies.nu),
        ] {
            let n = avg.num_actions();
            for h in 0..sh.horizon {
                for s in 0..sh.states {
                    let row = avg.row_mut(h, s);
                    for (m, &p) in row.iter_mut().zip(cur.row(h, s)).take(n) {
                        *m += alpha * (p - *m);
                    }
                }
            }
        }

        st.delta = match &self.nash {
            Some(nash) => Some(q_error(sh, &st.q, &nash.tables.q)?),
            None => None,
        };
        st.metrics.fold(&IterateSample {
            alpha,
            loss_max: &loss_max,
            loss_min: &loss_min,
            realized: &realized,
            path: &path,
            delta: st.delta.as_deref(),
        });
        Ok(())
    }

    /// Metrics and bound slacks at the current iteration.
    pub fn checkpoint(&self) -> Result<IterationMetrics, SolverError> {
        Ok(evaluate_checkpoint(
            self.game,
            &self.state,
            self.nash.as_ref(),
            self.config.c_eta,
        )?)
    }

    /// Runs the configured number of iterations, recording metrics at each
    /// checkpoint.
    pub fn run_to_end(mut self) -> Result<RunResult, SolverError> {
        let mut checkpoints = Vec::with_capacity(self.config.checkpoints.len());
        let mut next = 0;
        while self.state.t < self.config.iterations {
            self.advance()?;
            if self.config.checkpoints.get(next) == Some(&self.state.t) {
                next += 1;
                checkpoints.push(self.checkpoint()?);
            }
        }
        Ok(RunResult {
            config: self.config,
            avg_policies: self.state.avg_policies,
            last_policies: self.state.policies,
            q: self.state.q,
            checkpoints,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: SolverConfig,
    /// `(mu_hat, nu_hat)`, the algorithm's output.
    pub avg_policies: PolicyPair,
    pub last_policies: PolicyPair,
    /// `Q^T`.
    pub q: Vec<f64>,
    pub checkpoints: Vec<IterationMetrics>,
}

impl RunResult {
    /// Every `(t, check, slack)` below tolerance.
    pub fn failed_checks(&self) -> Vec<(usize, crate::diagnostics::Check, f64)> {
        self.checkpoints
            .iter()
            .flat_map(|m| {
                m.slacks
                    .failures()
                    .into_iter()
                    .map(move |(c, v)| (m.t, c, v))
            })
            .collect()
    }

    pub fn final_metrics(&self) -> Option<&IterationMetrics> {
        self.checkpoints.last()
    }
}

/// Runs the solver on `game` under `config`.
pub fn run(game: &MarkovGame, config: SolverConfig) -> Result<RunResult, SolverError> {
    Solver::new(game, config)?.run_to_end()
}
