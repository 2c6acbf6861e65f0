//! Zero-sum matrix games solved as a linear program with a dense primal
//! simplex and Bland's pivoting rule.
//!
//! With `M' = M - min(M) + 1 > 0`, the column player's program
//! `max 1^T y  s.t.  M' y <= 1, y >= 0` has optimum `1 / v'` where `v'` is the
//! value of `M'`. The row player's strategy is read off the reduced costs of
//! the slack columns in the final tableau.

use super::EvalError;
use crate::kernels::{contract_max, contract_min};

/// Pivot cap before the solve is declared a numerical failure.
pub const MAX_PIVOTS: usize = 10_000;
/// Feasibility tolerance for strategies and the saddle check.
pub const LP_TOL: f64 = 1e-9;

const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
}

impl MatrixGameSolution {
    /// `min_b (M^T x)_b`, the payoff the row strategy guarantees.
    pub fn row_guarantee(&self, m: &[f64]) -> f64 {
        let mut by_col = vec![0.0; self.col_strategy.len()];
        contract_max(m, &self.row_strategy, &mut by_col);
        by_col.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `max_a (M y)_a`, the most the column strategy concedes.
    pub fn col_guarantee(&self, m: &[f64]) -> f64 {
        let mut by_row = vec![0.0; self.row_strategy.len()];
        contract_min(m, &self.col_strategy, &mut by_row);
        by_row.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_a (M y)_a - min_b (M^T x)_b`; zero at an exact saddle point.
    pub fn duality_gap(&self, m: &[f64]) -> f64 {
        self.col_guarantee(m) - self.row_guarantee(m)
    }
}

/// Solves the row-major `rows x cols` matrix game `max_x min_y x^T M y`.
pub fn matrix_game_solve(
    m: &[f64],
    rows: usize,
    cols: usize,
) -> Result<MatrixGameSolution, EvalError> {
    if rows == 0 || cols == 0 || m.len() != rows * cols {
        return Err(EvalError::ShapeMismatch {
            what: "payoff matrix",
            expected: rows * cols,
            found: m.len(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite("payoff matrix"));
    }
    let low = m.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = low - 1.0;

    // Tableau rows: one per row action, columns y_0..y_{cols-1}, then slacks.
    let width = cols + rows;
    let mut tab = vec![0.0; rows * width];
    let mut rhs = vec![1.0; rows];
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    for i in 0..rows {
        for j in 0..cols {
            tab[i * width + j] = m[i * cols + j] - shift;
        }
        tab[i * width + cols + i] = 1.0;
    }
    let mut cost = vec![0.0; width];
    cost[..cols].fill(-1.0);
    let mut objective = 0.0;

    let mut pivots = 0;
    while let Some(enter) = (0..width).find(|&j| cost[j] < -PIVOT_EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let coef = tab[i * width + enter];
            if coef <= PIVOT_EPS {
                continue;
            }
            let ratio = rhs[i] / coef;
            leave = match leave {
                None => Some((i, ratio)),
                Some((k, best)) => {
                    let tie = (ratio - best).abs() <= PIVOT_EPS * best.abs().max(1.0);
                    if ratio < best && !tie || tie && basis[i] < basis[k] {
                        Some((i, ratio))
                    } else {
                        Some((k, best))
                    }
                }
            };
        }
        let Some((pr, _)) = leave else {
            // M' > 0 bounds the feasible region, so this signals corruption.
            return Err(EvalError::Unbounded);
        };
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(EvalError::PivotCap(MAX_PIVOTS));
        }

        let p = tab[pr * width + enter];
        for j in 0..width {
            tab[pr * width + j] /= p;
        }
        rhs[pr] /= p;
        for i in 0..rows {
            if i == pr {
                continue;
            }
            let f = tab[i * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    tab[i * width + j] -= f * tab[pr * width + j];
                }
                rhs[i] -= f * rhs[pr];
            }
        }
        let f = cost[enter];
        for j in 0..width {
            cost[j] -= f * tab[pr * width + j];
        }
        objective -= f * rhs[pr];
        basis[pr] = enter;
    }

    if !(objective > 0.0) {
        return Err(EvalError::Unbounded);
    }
    let shifted_value = 1.0 / objective;
    let mut col_strategy = vec![0.0; cols];
    for (i, &var) in basis.iter().enumerate() {
        if var < cols {
            col_strategy[var] = rhs[i] * shifted_value;
        }
    }
    let row_strategy: Vec<f64> = (0..rows).map(|i| cost[cols + i] * shifted_value).collect();
    let row_strategy = clean_distribution(row_strategy)?;
    let col_strategy = clean_distribution(col_strategy)?;

    Ok(MatrixGameSolution {
        value: shifted_value + shift,
        row_strategy,
        col_strategy,
    })
}

/// Zeroes round-off negatives and renormalizes.
fn clean_distribution(mut p: Vec<f64>) -> Result<Vec<f64>, EvalError> {
    if p.iter().any(|&x| x < -LP_TOL || !x.is_finite()) {
        return Err(EvalError::NonFinite("simplex strategy"));
    }
    for x in p.iter_mut() {
        *x = x.max(0.0);
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > LP_TOL {
        return Err(EvalError::NonFinite("simplex strategy mass"));
    }
    for x in p.iter_mut() {
        *x /= total;
    }
    Ok(p)
}
