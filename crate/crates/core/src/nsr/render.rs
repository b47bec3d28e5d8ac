//! TSDF-stabilized volume rendering: truncation map, opacity from
//! consecutive TSDF samples, compositing, and hierarchical ray sampling.

use crate::net::sigmoid;
use crate::scalar::Real;
use rand::Rng;

/// Truncate a raw SDF value to (-1, 1): (1-e^{-bx})/(1+e^{-bx}), which
/// equals tanh(bx/2). Overflow-safe for any finite input.
#[inline]
pub fn tsdf_map<S: Real>(x: S, b: S) -> S {
    (b * x * S::half()).tanh()
}

/// d tsdf / dx and d tsdf / db at raw value `x`.
#[inline]
pub fn tsdf_map_grad<S: Real>(x: S, b: S) -> (S, S) {
    let t = tsdf_map(x, b);
    let sech2 = S::one() - t * t;
    (b * S::half() * sech2, x * S::half() * sech2)
}

/// Phi_b(x) = sigmoid(b * x) over TSDF-mapped values.
#[inline]
fn phi_b<S: Real>(x: S, b: S) -> S {
    sigmoid(b * x)
}

/// Segment opacity from consecutive TSDF samples:
/// alpha = max(1 - Phi_b(next)/Phi_b(cur), 0).
#[inline]
pub fn alpha_from_tsdf<S: Real>(tsdf_cur: S, tsdf_next: S, b: S) -> S {
    (S::one() - phi_b(tsdf_next, b) / phi_b(tsdf_cur, b)).max(S::zero())
}

/// Opacity with partials (d/d tsdf_cur, d/d tsdf_next, d/d b); partials
/// are zero where the clamp is active.
pub fn alpha_from_tsdf_grad<S: Real>(tsdf_cur: S, tsdf_next: S, b: S) -> (S, S, S, S) {
    let sc = sigmoid(b * tsdf_cur);
    let sn = sigmoid(b * tsdf_next);
    let r = sn / sc;
    let alpha = S::one() - r;
    if alpha <= S::zero() {
        return (S::zero(), S::zero(), S::zero(), S::zero());
    }
    let d_cur = b * r * (S::one() - sc);
    let d_next = -b * r * (S::one() - sn);
    let d_b = r * ((S::one() - sc) * tsdf_cur - (S::one() - sn) * tsdf_next);
    (alpha, d_cur, d_next, d_b)
}

/// Front-to-back compositing over a background color. Returns the
/// rendered RGB and the accumulated opacity sum T_i alpha_i.
pub fn composite<S: Real>(alphas: &[S], colors: &[[S; 3]], background: [S; 3]) -> ([S; 3], S) {
    debug_assert_eq!(alphas.len(), colors.len());
    let mut t = S::one();
    let mut rgb = [S::zero(); 3];
    let mut acc = S::zero();
    for (a, c) in alphas.iter().zip(colors) {
        let w = t * *a;
        for k in 0..3 {
            rgb[k] += w * c[k];
        }
        acc += w;
        t *= S::one() - *a;
    }
    for k in 0..3 {
        rgb[k] += t * background[k];
    }
    (rgb, acc)
}

/// `n` stratified-uniform samples of [t0, t1].
pub fn stratified_samples<S: Real, R: Rng>(t0: S, t1: S, n: usize, rng: &mut R) -> Vec<S> {
    let span = (t1 - t0) / S::from_usize_(n);
    (0..n)
        .map(|i| t0 + span * (S::from_usize_(i) + S::from_f64_(rng.gen::<f64>())))
        .collect()
}

/// Draw `n` samples from the piecewise-constant density over segments
/// [t_i, t_{i+1}] proportional to `weights` (length = len(ts) - 1);
/// falls back to uniform over the whole interval when mass vanishes.
pub fn sample_importance<S: Real, R: Rng>(
    ts: &[S],
    weights: &[S],
    n: usize,
    rng: &mut R,
) -> Vec<S> {
    debug_assert_eq!(weights.len() + 1, ts.len());
    let total: S = weights.iter().fold(S::zero(), |a, &w| a + w.max(S::zero()));
    if total <= S::from_f64_(1e-12) {
        return stratified_samples(ts[0], ts[ts.len() - 1], n, rng);
    }
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = S::zero();
    for &w in weights {
        acc += w.max(S::zero()) / total;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = S::from_f64_(rng.gen::<f64>());
            let seg = cdf.partition_point(|&c| c < u).min(weights.len() - 1);
            let lo = if seg == 0 { S::zero() } else { cdf[seg - 1] };
            let hi = cdf[seg];
            let frac = if hi > lo { (u - lo) / (hi - lo) } else { S::half() };
            ts[seg] + (ts[seg + 1] - ts[seg]) * frac
        })
        .collect()
}

/// Merge two ascending-ish sample lists into one sorted vector.
pub fn merge_sorted<S: Real>(a: Vec<S>, b: Vec<S>) -> Vec<S> {
    let mut all = a;
    all.extend(b);
    all.sort_by(|x, y| x.partial_cmp(y).unwrap());
    all
}
