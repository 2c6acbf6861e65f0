#![allow(dead_code, clippy::needless_range_loop)]

//! Independent reference implementations used as test oracles.

use oftrl_core::game::MarkovGame;
use oftrl_core::rng::SplitMix64;

/// Literal product `alpha_t^i = alpha_i prod_{j=i+1}^t (1 - alpha_j)`, `i = 1..=t`.
pub fn literal_profile(h: usize, t: usize) -> Vec<f64> {
    let alpha = |j: usize| (h as f64 + 1.0) / (h as f64 + j as f64);
    (1..=t)
        .map(|i| {
            let mut p = alpha(i);
            for j in i + 1..=t {
                p *= 1.0 - alpha(j);
            }
            p
        })
        .collect()
}

/// Unnormalized weights `w_1 = 1`, `w_i = w_{i-1} (H+i-1)/(i-1)`.
pub fn raw_weights(h: usize, t_max: usize) -> Vec<f64> {
    let mut w = vec![0.0; t_max + 1];
    if t_max >= 1 {
        w[1] = 1.0;
    }
    for i in 2..=t_max {
        w[i] = w[i - 1] * (h + i - 1) as f64 / (i - 1) as f64;
    }
    w
}

/// `[h][s][action]`
pub type Table3 = Vec<Vec<Vec<f64>>>;
/// `[h][s][a][b]`
pub type Table4 = Vec<Vec<Vec<Vec<f64>>>>;

#[derive(Clone, Debug)]
pub struct Iterate {
    pub mu: Table3,
    pub nu: Table3,
    pub q: Table4,
    /// `[Q^t nu^t](s, a)`
    pub x: Table3,
    /// `[(Q^t)^T mu^t](s, b)`
    pub y: Table3,
}

/// Reference solver that keeps every iterate and recomputes each quantity
/// from the full history.
pub struct HistorySolver<'g> {
    game: &'g MarkovGame,
    eta: f64,
    optimistic: bool,
    w: Vec<f64>,
    pub history: Vec<Iterate>,
    /// Bellman targets `r + P V_{h+1}^i` of every past iterate.
    targets: Vec<Table4>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

impl<'g> HistorySolver<'g> {
    pub fn new(game: &'g MarkovGame, c_eta: f64, optimistic: bool, t_max: usize) -> Self {
        let h = game.shape().horizon;
        Self {
            game,
            eta: c_eta / (h * h) as f64,
            optimistic,
            w: raw_weights(h, t_max + 1),
            history: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn step(&mut self) {
        let sh = self.game.shape();
        let t = self.history.len() + 1;
        let (hh, ss, na, nb) = (sh.horizon, sh.states, sh.actions_max, sh.actions_min);
        let wt = self.w[t];

        let mut mu = vec![vec![vec![0.0; na]; ss]; hh];
        let mut nu = vec![vec![vec![0.0; nb]; ss]; hh];
        for h in 0..hh {
            for s in 0..ss {
                let logits_a: Vec<f64> = (0..na)
                    .map(|a| {
                        let mut acc = 0.0;
                        for i in 1..t {
                            acc += self.w[i] * self.history[i - 1].x[h][s][a];
                        }
                        if self.optimistic && t >= 2 {
                            acc += wt * self.history[t - 2].x[h][s][a];
                        }
                        self.eta / wt * acc
                    })
                    .collect();
                let logits_b: Vec<f64> = (0..nb)
                    .map(|b| {
                        let mut acc = 0.0;
                        for i in 1..t {
                            acc += self.w[i] * self.history[i - 1].y[h][s][b];
                        }
                        if self.optimistic && t >= 2 {
                            acc += wt * self.history[t - 2].y[h][s][b];
                        }
                        -self.eta / wt * acc
                    })
                    .collect();
                mu[h][s] = softmax(&logits_a);
                nu[h][s] = softmax(&logits_b);
            }
        }

        let profile = literal_profile(hh, t);
        let mut q = vec![vec![vec![vec![0.0; nb]; na]; ss]; hh];
        let mut target = q.clone();
        for h in (0..hh).rev() {
            let next_v: Vec<f64> = if h + 1 < hh {
                (0..ss)
                    .map(|s| {
                        let mut v = 0.0;
                        for a in 0..na {
                            for b in 0..nb {
                                v += mu[h + 1][s][a] * q[h + 1][s][a][b] * nu[h + 1][s][b];
                            }
                        }
                        v
                    })
                    .collect()
            } else {
                vec![0.0; ss]
            };
            for s in 0..ss {
                for a in 0..na {
                    for b in 0..nb {
                        let p = self.game.transition_row(h, s, a, b);
                        let cont: f64 = p.iter().zip(&next_v).map(|(p, v)| p * v).sum();
                        target[h][s][a][b] = self.game.reward(h, s, a, b) + cont;
                        let mut val = profile[t - 1] * target[h][s][a][b];
                        for i in 1..t {
                            val += profile[i - 1] * self.targets[i - 1][h][s][a][b];
                        }
                        q[h][s][a][b] = val;
                    }
                }
            }
        }

        let mut x = vec![vec![vec![0.0; na]; ss]; hh];
        let mut y = vec![vec![vec![0.0; nb]; ss]; hh];
        for h in 0..hh {
            for s in 0..ss {
                for a in 0..na {
                    for b in 0..nb {
                        x[h][s][a] += q[h][s][a][b] * nu[h][s][b];
                        y[h][s][b] += q[h][s][a][b] * mu[h][s][a];
                    }
                }
            }
        }
        self.targets.push(target);
        self.history.push(Iterate { mu, nu, q, x, y });
    }

    pub fn t(&self) -> usize {
        self.history.len()
    }

    fn profile(&self) -> Vec<f64> {
        literal_profile(self.game.shape().horizon, self.t())
    }

    /// `(sum alpha mu^i, sum alpha nu^i)` at `(h, s)`.
    pub fn averaged(&self, h: usize, s: usize) -> (Vec<f64>, Vec<f64>) {
        let sh = self.game.shape();
        let p = self.profile();
        let mut mu = vec![0.0; sh.actions_max];
        let mut nu = vec![0.0; sh.actions_min];
        for (w, it) in p.iter().zip(&self.history) {
            for (m, v) in mu.iter_mut().zip(&it.mu[h][s]) {
                *m += w * v;
            }
            for (m, v) in nu.iter_mut().zip(&it.nu[h][s]) {
                *m += w * v;
            }
        }
        (mu, nu)
    }

    /// Weighted regrets `(reg1, reg2)` at `(h, s)`.
    pub fn regrets(&self, h: usize, s: usize) -> (f64, f64) {
        let sh = self.game.shape();
        let p = self.profile();
        let mut loss_a = vec![0.0; sh.actions_max];
        let mut loss_b = vec![0.0; sh.actions_min];
        let mut realized = 0.0;
        for (w, it) in p.iter().zip(&self.history) {
            for a in 0..sh.actions_max {
                loss_a[a] += w * it.x[h][s][a];
                realized += w * it.mu[h][s][a] * it.x[h][s][a];
            }
            for b in 0..sh.actions_min {
                loss_b[b] += w * it.y[h][s][b];
            }
        }
        let best_a = loss_a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best_b = loss_b.iter().cloned().fold(f64::INFINITY, f64::min);
        (best_a - realized, realized - best_b)
    }

    /// `sum_{i>=2} alpha_t^i (|mu^i - mu^{i-1}|_1^2 + |nu^i - nu^{i-1}|_1^2)`.
    pub fn path(&self, h: usize, s: usize) -> f64 {
        let p = self.profile();
        let l1 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>();
        (1..self.t())
            .map(|k| {
                let (cur, prev) = (&self.history[k], &self.history[k - 1]);
                p[k] * (l1(&cur.mu[h][s], &prev.mu[h][s]).powi(2)
                    + l1(&cur.nu[h][s], &prev.nu[h][s]).powi(2))
            })
            .sum()
    }

    /// `delta_h^i` for the iterate `i` (1-based) against `q_star[h][s][a][b]`.
    pub fn delta(&self, i: usize, h: usize, q_star: &Table4) -> f64 {
        let q = &self.history[i - 1].q[h];
        let mut d: f64 = 0.0;
        for (qs, rs) in q.iter().zip(&q_star[h]) {
            for (qa, ra) in qs.iter().zip(rs) {
                for (x, y) in qa.iter().zip(ra) {
                    d = d.max((x - y).abs());
                }
            }
        }
        d
    }

    pub fn avg_delta(&self, h: usize, q_star: &Table4) -> f64 {
        let p = self.profile();
        (1..=self.t())
            .map(|i| p[i - 1] * self.delta(i, h, q_star))
            .sum()
    }
}

/// Flat `Q[h][s][a][b]` into nested form.
pub fn nest_q(game: &MarkovGame, flat: &[f64]) -> Table4 {
    let sh = game.shape();
    (0..sh.horizon)
        .map(|h| {
            (0..sh.states)
                .map(|s| {
                    (0..sh.actions_max)
                        .map(|a| {
                            (0..sh.actions_min)
                                .map(|b| flat[sh.q_index(h, s, a, b)])
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Matrix game value by enumerating equal-size supports and keeping the best
/// row guarantee among the feasible equalizers.
pub fn support_enumeration_value(m: &[f64], rows: usize, cols: usize) -> f64 {
    let mut best_lower = f64::NEG_INFINITY;
    let subsets = |n: usize| -> Vec<Vec<usize>> {
        (1u32..(1 << n))
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
            .collect()
    };
    for rs in subsets(rows) {
        for cs in subsets(cols) {
            if rs.len() != cs.len() {
                continue;
            }
            let k = rs.len();
            // Unknowns: x over rs, and v. Equations: sum_i x_i M[i][j] = v for j in cs, sum x = 1.
            let n = k + 1;
            let mut a = vec![vec![0.0; n + 1]; n];
            for (e, &j) in cs.iter().enumerate() {
                for (u, &i) in rs.iter().enumerate() {
                    a[e][u] = m[i * cols + j];
                }
                a[e][k] = -1.0;
            }
            for u in 0..k {
                a[k][u] = 1.0;
            }
            a[k][n] = 1.0;
            let Some(sol) = gauss(a) else { continue };
            if sol[..k].iter().any(|&p| p < -1e-12) {
                continue;
            }
            let mut x = vec![0.0; rows];
            for (u, &i) in rs.iter().enumerate() {
                x[i] = sol[u].max(0.0);
            }
            let guarantee = (0..cols)
                .map(|j| (0..rows).map(|i| x[i] * m[i * cols + j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            best_lower = best_lower.max(guarantee);
        }
    }
    best_lower
}

fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Best row guarantee `max_x min_j (x^T M)_j` over the simplex grid with step
/// `1e-3`, found by a full coarse pass followed by nested local refinements.
/// Always a lower bound on the game value.
pub fn grid_minimax_value(m: &[f64], rows: usize, cols: usize) -> f64 {
    let guarantee = |x: &[u32], n: u32| -> f64 {
        (0..cols)
            .map(|j| {
                (0..rows)
                    .map(|i| x[i] as f64 / n as f64 * m[i * cols + j])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    };
    const FINE: u32 = 1000;
    // Enumerate compositions of `total` into `rows` parts, each part within
    // `[lo_i, hi_i]`.
    fn visit(
        i: usize,
        left: u32,
        lo: &[u32],
        hi: &[u32],
        cur: &mut Vec<u32>,
        f: &mut dyn FnMut(&[u32]),
    ) {
        if i + 1 == lo.len() {
            if left >= lo[i] && left <= hi[i] {
                cur.push(left);
                f(cur);
                cur.pop();
            }
            return;
        }
        for v in lo[i]..=hi[i].min(left) {
            cur.push(v);
            visit(i + 1, left - v, lo, hi, cur, f);
            cur.pop();
        }
    }

    let coarse = 50u32;
    let mut candidates: Vec<(f64, Vec<u32>)> = Vec::new();
    visit(
        0,
        coarse,
        &vec![0; rows],
        &vec![coarse; rows],
        &mut Vec::new(),
        &mut |x| {
            let fine: Vec<u32> = x.iter().map(|v| v * (FINE / coarse)).collect();
            candidates.push((guarantee(x, coarse), fine));
        },
    );
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    candidates.truncate(8);

    let mut best = f64::NEG_INFINITY;
    for (_, start) in candidates {
        let mut centre = start;
        for radius in [20u32, 5, 2] {
            let lo: Vec<u32> = centre.iter().map(|&c| c.saturating_sub(radius)).collect();
            let hi: Vec<u32> = centre.iter().map(|&c| (c + radius).min(FINE)).collect();
            let mut local_best = (f64::NEG_INFINITY, centre.clone());
            visit(0, FINE, &lo, &hi, &mut Vec::new(), &mut |x| {
                let g = guarantee(x, FINE);
                if g > local_best.0 {
                    local_best = (g, x.to_vec());
                }
            });
            centre = local_best.1;
            best = best.max(local_best.0);
        }
    }
    best
}

/// Random matrix with entries uniform in `[lo, hi)`.
pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| lo + (hi - lo) * rng.next_f64())
        .collect()
}
