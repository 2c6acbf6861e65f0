//! Exact evaluation: policy values, best responses, the Nash gap and the
//! Nash Q-function by backward induction over per-state matrix games.

mod matrix;

pub use matrix::{matrix_game_solve, MatrixGameSolution, LP_TOL, MAX_PIVOTS};

use thiserror::Error;

use crate::game::{MarkovGame, Policy, PolicyPair, Shape, Side};
use crate::kernels::{argmax, argmin, bilinear, contract_max, contract_min, dot};

/// Gaps in `[-GAP_CLAMP, 0)` are rounding and reported as zero.
pub const GAP_CLAMP: f64 = 1e-9;
/// Tolerance for comparisons between dynamic-programming outputs.
pub const DP_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("simplex exceeded {0} pivots")]
    PivotCap(usize),
    #[error("linear program reported unbounded")]
    Unbounded,
    #[error("Nash gap {0:e} is below -{GAP_CLAMP:e}; evaluator is inconsistent")]
    NegativeGap(f64),
}

/// `V[h][s]` and `Q[h][s][a][b]` for one policy pair or responder.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTables {
    shape: Shape,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

impl ValueTables {
    fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            v: vec![0.0; shape.cells()],
            q: vec![0.0; shape.q_len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.v[self.shape.cell(h, s)]
    }

    pub fn q_block(&self, h: usize, s: usize) -> &[f64] {
        let off = self.shape.block(h, s);
        &self.q[off..off + self.shape.actions_max * self.shape.actions_min]
    }

    /// Fills `Q_h = r_h + P_h V_{h+1}` for every state at horizon `h`,
    /// with `V_{H+1} = 0`.
    fn backup(&mut self, game: &MarkovGame, h: usize) {
        let sh = self.shape;
        let last = h + 1 == sh.horizon;
        let next_off = if last { 0 } else { sh.cell(h + 1, 0) };
        for s in 0..sh.states {
            for a in 0..sh.actions_max {
                for b in 0..sh.actions_min {
                    let mut x = game.reward(h, s, a, b);
                    if !last {
                        let v_next = &self.v[next_off..next_off + sh.states];
                        x += dot(game.transition_row(h, s, a, b), v_next);
                    }
                    self.q[sh.q_index(h, s, a, b)] = x;
                }
            }
        }
    }
}

/// Value tables of a fixed policy pair by backward induction.
pub fn policy_value(game: &MarkovGame, pair: &PolicyPair) -> Result<ValueTables, EvalError> {
    let sh = game.shape();
    check_policy_shape(sh, &pair.mu)?;
    check_policy_shape(sh, &pair.nu)?;
    let mut t = ValueTables::zeros(sh);
    for h in (0..sh.horizon).rev() {
        t.backup(game, h);
        for s in 0..sh.states {
            let v = bilinear(t.q_block(h, s), pair.mu.row(h, s), pair.nu.row(h, s));
            t.v[sh.cell(h, s)] = v;
        }
    }
    Ok(t)
}

fn check_policy_shape(shape: Shape, policy: &Policy) -> Result<(), EvalError> {
    if policy.shape() != shape {
        return Err(EvalError::ShapeMismatch {
            what: "policy",
            expected: shape.cells() * shape.actions(policy.side()),
            found: policy.probs().len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    /// `V^{dagger, nu}` / `Q^{dagger, nu}` (or the min-player analogue).
    pub tables: ValueTables,
    /// Deterministic responder policy, lowest action index on ties.
    pub policy: Policy,
}

impl BestResponse {
    pub fn initial_value(&self, game: &MarkovGame) -> f64 {
        self.tables.value(0, game.initial_state())
    }
}

/// Best response of the other player to `opponent`.
pub fn best_response(game: &MarkovGame, opponent: &Policy) -> Result<BestResponse, EvalError> {
    let sh = game.shape();
    check_policy_shape(sh, opponent)?;
    let responder = match opponent.side() {
        Side::Max => Side::Min,
        Side::Min => Side::Max,
    };
    let n = sh.actions(responder);
    let mut tables = ValueTables::zeros(sh);
    let mut probs = vec![0.0; sh.cells() * n];
    let mut marginal = vec![0.0; n];
    for h in (0..sh.horizon).rev() {
        tables.backup(game, h);
        for s in 0..sh.states {
            let block = tables.q_block(h, s);
            let (action, value) = match responder {
                Side::Max => {
                    contract_min(block, opponent.row(h, s), &mut marginal);
                    argmax(&marginal)
                }
                Side::Min => {
                    contract_max(block, opponent.row(h, s), &mut marginal);
                    argmin(&marginal)
                }
            };
            let cell = sh.cell(h, s);
            tables.v[cell] = value;
            probs[cell * n + action] = 1.0;
        }
    }
    let policy = Policy::from_probs(sh, responder, probs).expect("length matches shape");
    Ok(BestResponse { tables, policy })
}

/// `V_1^{dagger, nu}(s_1) - V_1^{mu, dagger}(s_1)`.
pub fn ne_gap(game: &MarkovGame, pair: &PolicyPair) -> Result<f64, EvalError> {
    let upper = best_response(game, &pair.nu)?.initial_value(game);
    let lower = best_response(game, &pair.mu)?.initial_value(game);
    let gap = upper - lower;
    if gap < -GAP_CLAMP {
        return Err(EvalError::NegativeGap(gap));
    }
    Ok(gap.max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NashSolution {
    /// `V*` and `Q*`.
    pub tables: ValueTables,
    pub policies: PolicyPair,
}

/// Backward induction solving one matrix game per `(h, s)`.
pub fn nash_q(game: &MarkovGame) -> Result<NashSolution, EvalError> {
    let sh = game.shape();
    let mut tables = ValueTables::zeros(sh);
    let mut mu = Policy::uniform(sh, Side::Max);
    let mut nu = Policy::uniform(sh, Side::Min);
    for h in (0..sh.horizon).rev() {
        tables.backup(game, h);
        for s in 0..sh.states {
            let sol = matrix_game_solve(tables.q_block(h, s), sh.actions_max, sh.actions_min)?;
            tables.v[sh.cell(h, s)] = sol.value;
            mu.row_mut(h, s).copy_from_slice(&sol.row_strategy);
            nu.row_mut(h, s).copy_from_slice(&sol.col_strategy);
        }
    }
    Ok(NashSolution {
        tables,
        policies: PolicyPair { mu, nu },
    })
}

/// Per-horizon sup-norm distance `max_{s,a,b} |estimate - reference|`.
pub fn q_error(shape: Shape, estimate: &[f64], reference: &[f64]) -> Result<Vec<f64>, EvalError> {
    for (what, len) in [
        ("Q estimate", estimate.len()),
        ("Q reference", reference.len()),
    ] {
        if len != shape.q_len() {
            return Err(EvalError::ShapeMismatch {
                what,
                expected: shape.q_len(),
                found: len,
            });
        }
    }
    let per_h = shape.states * shape.actions_max * shape.actions_min;
    Ok(estimate
        .chunks(per_h)
        .zip(reference.chunks(per_h))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}
