//! Dense per-state contractions. Every reduction runs in ascending index
//! order so results are bitwise reproducible.

/// `out[a] = sum_b q[a][b] * nu[b]` for a row-major `A x B` block.
#[inline]
pub fn contract_min(q: &[f64], nu: &[f64], out: &mut [f64]) {
    let b_n = nu.len();
    for (a, o) in out.iter_mut().enumerate() {
        let row = &q[a * b_n..(a + 1) * b_n];
        *o = row.iter().zip(nu).map(|(x, p)| x * p).sum();
    }
}

/// `out[b] = sum_a mu[a] * q[a][b]`.
#[inline]
pub fn contract_max(q: &[f64], mu: &[f64], out: &mut [f64]) {
    let b_n = out.len();
    for (b, o) in out.iter_mut().enumerate() {
        *o = mu.iter().enumerate().map(|(a, p)| p * q[a * b_n + b]).sum();
    }
}

/// `mu^T q nu`, summed over `a` outer and `b` inner.
#[inline]
pub fn bilinear(q: &[f64], mu: &[f64], nu: &[f64]) -> f64 {
    let b_n = nu.len();
    mu.iter()
        .enumerate()
        .map(|(a, p)| {
            let row = &q[a * b_n..(a + 1) * b_n];
            p * row.iter().zip(nu).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Softmax of `scale * logits` with the row maximum subtracted first.
/// Returns `false` if any logit is not finite.
pub fn softmax_into(logits: &[f64], scale: f64, out: &mut [f64]) -> bool {
    let mut peak = f64::NEG_INFINITY;
    for &x in logits {
        if !x.is_finite() {
            return false;
        }
        peak = peak.max(scale * x);
    }
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (scale * x - peak).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    true
}

/// Squared L1 distance between two distributions.
#[inline]
pub fn l1_sq(x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    d * d
}

/// Index and value of the largest entry, first index on ties.
pub fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Index and value of the smallest entry, first index on ties.
pub fn argmin(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}
