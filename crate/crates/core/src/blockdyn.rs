//! Spectral analysis of the per-eigenvalue iteration blocks
//! `A = [[0, 1−δλ], [−c, 1+c−qλ]]`, which propagate the centered pair
//! `(w − w*, u − w*)` in expectation along one eigen-direction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::hyper::HyperParams;

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub lambda: f64,
    pub m: Mat2,
}

pub fn block(lambda: f64, hp: &HyperParams) -> Block {
    let HyperParams { c, q, delta, .. } = *hp;
    Block { lambda, m: [[0.0, 1.0 - delta * lambda], [-c, 1.0 + c - q * lambda]] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockRegime {
    /// Real roots, `λ` above the upper double-root point.
    RealLarge,
    /// Complex-conjugate roots.
    Complex,
    /// Real roots, `λ` below the lower double-root point.
    RealSmall,
}

/// Eigenvalues of a block ordered so that `|x1| ≤ |x2|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub x1: Complex64,
    pub x2: Complex64,
    /// `(1+c−qλ)² − 4c(1−δλ)`.
    pub discriminant: f64,
    pub regime: BlockRegime,
}

fn trace_det(lambda: f64, hp: &HyperParams) -> (f64, f64) {
    (1.0 + hp.c - hp.q * lambda, hp.c * (1.0 - hp.delta * lambda))
}

pub fn eigenpair(lambda: f64, hp: &HyperParams) -> EigenPair {
    let (t, det) = trace_det(lambda, hp);
    let disc = t * t - 4.0 * det;
    if disc < 0.0 {
        let h = (-disc).sqrt() / 2.0;
        return EigenPair {
            x1: Complex64::new(t / 2.0, -h),
            x2: Complex64::new(t / 2.0, h),
            discriminant: disc,
            regime: BlockRegime::Complex,
        };
    }
    let root = disc.sqrt();
    let x2 = if t >= 0.0 { (t + root) / 2.0 } else { (t - root) / 2.0 };
    let x1 = if x2 != 0.0 { det / x2 } else { 0.0 };
    let regime = if lambda >= (1.0 - hp.c) / hp.q { BlockRegime::RealLarge } else { BlockRegime::RealSmall };
    EigenPair { x1: Complex64::new(x1, 0.0), x2: Complex64::new(x2, 0.0), discriminant: disc, regime }
}

/// `S_m = (x2^m − x1^m)/(x2 − x1)` for `m ≥ 0`, i.e. the sequence with
/// `S_0 = 0`, `S_1 = 1`, `S_{m+1} = T S_m − D S_{m−1}`.
///
/// Near a double root the quotient is replaced by the finite binomial
/// expansion in `μ = T/2` and `h² = disc/4`, which is exact, real, and free
/// of the `0/0` cancellation.
fn s_seq(ep: &EigenPair, t: f64, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mu = t / 2.0;
    let h2 = ep.discriminant / 4.0;
    let ratio = if mu != 0.0 { m as f64 * h2.abs().sqrt() / mu.abs() } else { f64::INFINITY };
    if h2 == 0.0 || ratio <= 1.0 {
        return binomial_s(mu, h2, m);
    }
    let num = ep.x2.powu(m as u32) - ep.x1.powu(m as u32);
    (num / (ep.x2 - ep.x1)).re
}

// Σ_k C(m, 2k+1) μ^{m−2k−1} (h²)^k
fn binomial_s(mu: f64, h2: f64, m: usize) -> f64 {
    if mu == 0.0 {
        return if m == 1 { 1.0 } else { 0.0 };
    }
    let mut term = m as f64 * mu.powi(m as i32 - 1);
    let mut total = term;
    let r = h2 / (mu * mu);
    let mut k = 0usize;
    while 2 * k + 3 <= m {
        let a = (m - 2 * k - 1) as f64;
        let b = (m - 2 * k - 2) as f64;
        term *= a * b / (((2 * k + 2) * (2 * k + 3)) as f64) * r;
        total += term;
        if term.abs() <= f64::EPSILON * 1e-3 * total.abs() {
            break;
        }
        k += 1;
    }
    total
}

/// `A^k` for `k ≥ 0` from the closed form.
pub fn power(lambda: f64, hp: &HyperParams, k: usize) -> Mat2 {
    if k == 0 {
        return IDENTITY;
    }
    let ep = eigenpair(lambda, hp);
    let (t, det) = trace_det(lambda, hp);
    let s_prev = s_seq(&ep, t, k - 1);
    let s_k = s_seq(&ep, t, k);
    let s_next = s_seq(&ep, t, k + 1);
    let a = 1.0 - hp.delta * lambda;
    [[-det * s_prev, a * s_k], [-hp.c * s_k, s_next]]
}

/// `A^k` for `k ≥ 1`, with entries
/// `[[−c(1−δλ)S_{k−1}, (1−δλ)S_k], [−cS_k, S_{k+1}]]`.
pub fn power_closed(lambda: f64, hp: &HyperParams, k: usize) -> Result<Mat2> {
    if k == 0 {
        return Err(validation("power_closed requires k >= 1"));
    }
    Ok(power(lambda, hp, k))
}

/// `A^k` by repeated multiplication.
pub fn power_by_multiplication(lambda: f64, hp: &HyperParams, k: usize) -> Mat2 {
    let a = block(lambda, hp).m;
    (0..k).fold(IDENTITY, |acc, _| mat_mul(&acc, &a))
}

/// `A^k` by binary exponentiation.
pub fn power_by_squaring(lambda: f64, hp: &HyperParams, mut k: usize) -> Mat2 {
    let mut base = block(lambda, hp).m;
    let mut acc = IDENTITY;
    while k > 0 {
        if k & 1 == 1 {
            acc = mat_mul(&acc, &base);
        }
        base = mat_mul(&base, &base);
        k >>= 1;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumVector {
    /// `[δ, q]ᵀ`
    DeltaQ,
    /// `[1, 1]ᵀ`
    Ones,
}

impl SumVector {
    fn value(self, hp: &HyperParams) -> [f64; 2] {
        match self {
            SumVector::DeltaQ => [hp.delta, hp.q],
            SumVector::Ones => [1.0, 1.0],
        }
    }
}

/// `Σ_{k=0}^{t−1} A^{j+k} v` via `(A^j − A^{j+t})(I − A)^{−1} v`.
///
/// The closed form loses about `|(I − A)^{−1} v| · ε` to cancellation, while
/// accumulation loses about `t · ε` per unit of sum; the cheaper-in-error
/// route is taken.
pub fn partial_sum_vec(lambda: f64, hp: &HyperParams, j: usize, t: usize, v: SumVector) -> Result<[f64; 2]> {
    if t == 0 {
        return Err(validation("partial_sum_vec requires t >= 1"));
    }
    let det = (hp.q - hp.c * hp.delta) * lambda;
    if det == 0.0 || !det.is_finite() {
        return Ok(partial_sum_direct(lambda, hp, j, t, v));
    }
    let solved = match v {
        SumVector::DeltaQ => [1.0 / lambda, 1.0 / lambda],
        SumVector::Ones => {
            let a = 1.0 - hp.c;
            [(a + (hp.q - hp.delta) * lambda) / det, a / det]
        }
    };
    let amplification = (1.0 - hp.c + (hp.q - hp.delta).abs() * lambda) / det;
    if (t as f64) <= amplification.min(1e6) {
        return Ok(partial_sum_direct(lambda, hp, j, t, v));
    }
    let lo = power(lambda, hp, j);
    let hi = power(lambda, hp, j + t);
    let diff = [[lo[0][0] - hi[0][0], lo[0][1] - hi[0][1]], [lo[1][0] - hi[1][0], lo[1][1] - hi[1][1]]];
    Ok(mat_vec(&diff, solved))
}

/// `Σ_{k=0}^{t−1} A^{j+k} v` by direct accumulation of matrix products.
pub fn partial_sum_direct(lambda: f64, hp: &HyperParams, j: usize, t: usize, v: SumVector) -> [f64; 2] {
    let a = block(lambda, hp).m;
    let mut x = mat_vec(&power_by_squaring(lambda, hp, j), v.value(hp));
    let mut acc = [0.0; 2];
    for _ in 0..t {
        acc[0] += x[0];
        acc[1] += x[1];
        x = mat_vec(&a, x);
    }
    acc
}

/// Per-step bias contraction base of ASGD in the eigen-direction `λ`.
pub fn decay_rate(lambda: f64, hp: &HyperParams) -> f64 {
    match eigenpair(lambda, hp).regime {
        BlockRegime::RealLarge => hp.c * hp.delta / hp.q,
        BlockRegime::Complex => (hp.c * (1.0 - hp.delta * lambda)).sqrt(),
        BlockRegime::RealSmall => 1.0 - (hp.gamma + hp.delta) * lambda / 2.0,
    }
}

/// Per-step bias contraction base of SGD with step `delta`.
pub fn sgd_decay_rate(lambda: f64, delta: f64) -> f64 {
    1.0 - delta * lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{Spectrum, SpectrumKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper_hp() -> HyperParams {
        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 2000).unwrap();
        HyperParams::derive_from_alpha(0.1, 0.9875, 5, 3.0, &s).unwrap()
    }

    fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }

    #[test]
    fn block_entries() {
        let hp = paper_hp();
        let b = block(1.0, &hp);
        assert_relative_eq!(b.m[0][1], 0.9, max_relative = 1e-15);
        assert_relative_eq!(b.m[1][0], -0.975, max_relative = 1e-15);
        assert_relative_eq!(b.m[1][1], 1.975 - 79.0 / 750.0, max_relative = 1e-15);
        let z = block(0.0, &hp);
        assert_eq!(z.m, [[0.0, 1.0], [-hp.c, 1.0 + hp.c]]);
    }

    #[test]
    fn zero_lambda_roots() {
        let hp = paper_hp();
        let ep = eigenpair(0.0, &hp);
        assert_relative_eq!(ep.x2.re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(ep.x1.re, hp.c, max_relative = 1e-14);
    }

    #[test]
    fn paper_roots() {
        let hp = paper_hp();
        let ep = eigenpair(1.0, &hp);
        assert_eq!(ep.regime, BlockRegime::Complex);
        assert_relative_eq!(ep.x2.norm(), 0.8775f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ep.x1.norm(), 0.8775f64.sqrt(), max_relative = 1e-12);

        let l7 = 1.0 / 49.0;
        let ep = eigenpair(l7, &hp);
        assert_eq!(ep.regime, BlockRegime::RealSmall);
        let g = hp.gamma + hp.delta;
        assert!(ep.x2.re >= 1.0 - g * l7 && ep.x2.re <= 1.0 - g * l7 / 2.0);
    }

    #[test]
    fn decay_bases() {
        let hp = paper_hp();
        let l7 = 1.0 / 49.0;
        assert_relative_eq!(decay_rate(l7, &hp), 0.993605442176870, max_relative = 1e-12);
        assert_relative_eq!(decay_rate(1.0, &hp), 0.8775f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(sgd_decay_rate(l7, 0.1), 0.997959183673469, max_relative = 1e-12);
    }

    #[test]
    fn power_base_case_and_product() {
        let hp = paper_hp();
        assert_eq!(power_closed(0.3, &hp, 1).unwrap(), block(0.3, &hp).m);
        assert!(power_closed(0.3, &hp, 0).is_err());
        let closed = power_closed(1.0, &hp, 10).unwrap();
        assert!(max_abs_diff(&closed, &power_by_multiplication(1.0, &hp, 10)) <= 1e-9);
    }

    #[test]
    fn power_at_double_root() {
        // Choose λ where the discriminant is (numerically) zero: solve the
        // quadratic (1+c−qλ)² = 4c(1−δλ) for its larger root.
        let hp = paper_hp();
        let (c, q, d) = (hp.c, hp.q, hp.delta);
        let a = q * q;
        let b = -2.0 * (1.0 + c) * q + 4.0 * c * d;
        let cc = (1.0 + c) * (1.0 + c) - 4.0 * c;
        let lam = (-b + (b * b - 4.0 * a * cc).sqrt()) / (2.0 * a);
        for dl in [0.0, 1e-12, -1e-12, 1e-8, -1e-8] {
            let l = lam * (1.0 + dl);
            for k in [1usize, 2, 7, 50, 200] {
                let closed = power(l, &hp, k);
                let sq = power_by_squaring(l, &hp, k);
                assert!(max_abs_diff(&closed, &sq) <= 1e-9, "λ={l} k={k}");
            }
        }
    }

    #[test]
    fn single_term_partial_sum() {
        let hp = paper_hp();
        let s = partial_sum_vec(0.1, &hp, 0, 1, SumVector::Ones).unwrap();
        assert_relative_eq!(s[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(s[1], 1.0, max_relative = 1e-12);
        assert!(partial_sum_vec(0.1, &hp, 0, 0, SumVector::Ones).is_err());
    }

    #[test]
    fn paper_partial_sum_bound() {
        let hp = paper_hp();
        let l7 = 1.0 / 49.0;
        let s = partial_sum_vec(l7, &hp, 0, 500, SumVector::DeltaQ).unwrap();
        let gt = hp.gamma_tilde();
        let upper = 3.0 / l7 * (1.0 - (1.0 - 2.0 * gt * l7).powi(500));
        assert!(s[0] >= 0.0 && s[0] <= upper);
    }

    prop_compose! {
        fn instance()(
            alpha in 0.5001f64..0.9999,
            delta in 1e-3f64..0.5,
            gfac in 1.0f64..50.0,
            lfrac in 0.0f64..1.0,
        ) -> (f64, HyperParams) {
            let beta = (1.0 - alpha) / alpha;
            let gamma = delta * gfac;
            let hp = HyperParams::manual(alpha, beta, gamma, delta, 3.0, 1).unwrap();
            // Stay inside the stable range λ < 1/q ≤ 1/δ.
            let lam = (lfrac * 0.999 + 1e-4) / hp.q.max(delta);
            (lam, hp)
        }
    }

    proptest! {
        #[test]
        fn closed_partial_sums_match_direct(inst in instance(), j in 0usize..10, t in 1usize..40) {
            let (lam, hp) = inst;
            for v in [SumVector::DeltaQ, SumVector::Ones] {
                let a = partial_sum_vec(lam, &hp, j, t, v).unwrap();
                let b = partial_sum_direct(lam, &hp, j, t, v);
                let scale = 1.0 + b[0].abs().max(b[1].abs());
                prop_assert!((a[0] - b[0]).abs() <= 1e-9 * scale && (a[1] - b[1]).abs() <= 1e-9 * scale,
                    "{a:?} vs {b:?}");
            }
        }

        #[test]
        fn roots_are_stable(inst in instance()) {
            let (lam, hp) = inst;
            let ep = eigenpair(lam, &hp);
            prop_assert!(ep.x2.norm() < 1.0);
            prop_assert!(ep.x1.norm() <= ep.x2.norm() * (1.0 + 1e-12));
            prop_assert_eq!(ep.regime == BlockRegime::Complex, ep.discriminant < 0.0);
        }
    }
}
