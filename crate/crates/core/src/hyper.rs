//! Hyperparameter derivation, eigenvalue cutoffs and the scalar constants
//! `l`, `r`, `U22` that enter the risk bounds.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::spectrum::Spectrum;
use crate::sum;

/// How a parameter set was obtained, which decides the validity rules that
/// apply to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Overparam,
    Classical,
    Shb,
    Manual,
}

/// ASGD parameters.
///
/// One step maps `(w, v)` to
/// `u = αw + (1−α)v`, `w' = u − δĝ(u)`, `v' = βu + (1−β)v − γĝ(u)`.
/// The derived `c = α(1−β)` and `q = αδ + (1−α)γ` are the momentum and
/// effective step size of the equivalent two-term recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub psi: f64,
    pub kappa_tilde: usize,
    pub c: f64,
    pub q: f64,
    pub regime: Regime,
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(validation(format!("{name} must be finite, got {x}")))
    }
}

impl HyperParams {
    /// Raw parameter set with derived `c`, `q` and no regime constraints.
    pub fn manual(alpha: f64, beta: f64, gamma: f64, delta: f64, psi: f64, kappa_tilde: usize) -> Result<Self> {
        for (n, x) in [("alpha", alpha), ("beta", beta), ("gamma", gamma), ("delta", delta), ("psi", psi)] {
            check_finite(n, x)?;
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(validation(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(validation(format!("beta must lie in [0, 1], got {beta}")));
        }
        if gamma < 0.0 || delta < 0.0 {
            return Err(validation("step sizes gamma and delta must be non-negative"));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
            psi,
            kappa_tilde,
            c: alpha * (1.0 - beta),
            q: alpha * delta + (1.0 - alpha) * gamma,
            regime: Regime::Manual,
        })
    }

    /// Plain SGD with step size `delta`, written as ASGD with `γ = δ`,
    /// `α = ½`, `β = 1`. Then `c = 0`, `q = δ`, and `u = w` whenever `v = w`.
    pub fn sgd(delta: f64, psi: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(validation(format!("SGD step size must be positive, got {delta}")));
        }
        Self::manual(0.5, 1.0, delta, delta, psi, 0)
    }

    /// Parameter choice for the overparameterized regime from `(δ, γ, κ̃)`.
    pub fn derive_overparam(delta: f64, gamma: f64, kappa_tilde: usize, psi: f64, s: &Spectrum) -> Result<Self> {
        check_finite("delta", delta)?;
        check_finite("gamma", gamma)?;
        check_finite("psi", psi)?;
        if kappa_tilde == 0 {
            return Err(validation("kappa_tilde must be at least 1"));
        }
        let beta = delta / (psi * kappa_tilde as f64 * gamma);
        let alpha = 1.0 / (1.0 + beta);
        Self::finish_overparam(alpha, beta, gamma, delta, psi, kappa_tilde, s)
    }

    /// Parameter choice for the overparameterized regime from `(δ, α, κ̃)`:
    /// `β = (1−α)/α` and `γ = δ/(ψκ̃β)`.
    pub fn derive_from_alpha(delta: f64, alpha: f64, kappa_tilde: usize, psi: f64, s: &Spectrum) -> Result<Self> {
        check_finite("delta", delta)?;
        check_finite("alpha", alpha)?;
        check_finite("psi", psi)?;
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(validation(format!("alpha must lie in (1/2, 1), got {alpha}")));
        }
        if kappa_tilde == 0 {
            return Err(validation("kappa_tilde must be at least 1"));
        }
        let beta = (1.0 - alpha) / alpha;
        let gamma = delta / (psi * kappa_tilde as f64 * beta);
        Self::finish_overparam(alpha, beta, gamma, delta, psi, kappa_tilde, s)
    }

    fn finish_overparam(
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        psi: f64,
        kappa_tilde: usize,
        s: &Spectrum,
    ) -> Result<Self> {
        if psi < 1.0 {
            return Err(validation(format!("psi must be >= 1, got {psi}")));
        }
        if !(delta > 0.0) {
            return Err(validation(format!("delta must be positive, got {delta}")));
        }
        let delta_max = 1.0 / (2.0 * psi * s.trace());
        if delta > delta_max {
            return Err(validation(format!(
                "delta <= 1/(2 psi tr(H)) violated: {delta} > {delta_max}"
            )));
        }
        if gamma < delta {
            return Err(validation(format!("gamma >= delta violated: {gamma} < {delta}")));
        }
        let tail = s.tail_sum_saturating(kappa_tilde);
        let gamma_max = 1.0 / (2.0 * psi * tail);
        if gamma > gamma_max {
            return Err(validation(format!(
                "gamma <= 1/(2 psi tail_sum(kappa_tilde)) violated: {gamma} > {gamma_max}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(validation(format!("beta must lie in (0, 1), got {beta}")));
        }
        let mut hp = Self::manual(alpha, beta, gamma, delta, psi, kappa_tilde)?;
        hp.regime = Regime::Overparam;
        Ok(hp)
    }

    /// Parameter choice for the classical (strongly convex, finite `d`)
    /// regime with `κ̃ = d`.
    pub fn derive_classical(s: &Spectrum, psi: f64) -> Result<Self> {
        check_finite("psi", psi)?;
        if psi < 1.0 {
            return Err(validation(format!("psi must be >= 1, got {psi}")));
        }
        let d = s.dim() as f64;
        let mu = s.min_eigenvalue();
        let delta = 1.0 / (2.0 * psi * s.trace());
        let gamma = (2.0 * delta / (psi * mu * d)).sqrt();
        let beta = (mu * delta / (2.0 * psi * d)).sqrt();
        let alpha = 1.0 / (1.0 + beta);
        let mut hp = Self::manual(alpha, beta, gamma, delta, psi, s.dim())?;
        hp.regime = Regime::Classical;
        Ok(hp)
    }

    /// Stochastic heavy ball `w' = w − qĝ(w) + c(w − w_prev)` with `δ = 0`,
    /// `α = (1+c)/2` and `q = (1−c)γ/2`.
    pub fn derive_shb(c: f64, gamma: f64, s: &Spectrum, psi: f64, n: usize) -> Result<Self> {
        check_finite("c", c)?;
        check_finite("gamma", gamma)?;
        if n == 0 {
            return Err(validation("N must be at least 1"));
        }
        let c_max = 1.0 - 2.0 / n as f64;
        if !(c > 0.0 && c <= c_max) {
            return Err(validation(format!("c in (0, 1 - 2/N] violated: c = {c}, 1 - 2/N = {c_max}")));
        }
        let gamma_max = 4.0 / (psi * s.trace());
        if !(gamma > 0.0 && gamma < gamma_max) {
            return Err(validation(format!(
                "gamma in (0, 4/(psi tr(H))) violated: gamma = {gamma}, bound = {gamma_max}"
            )));
        }
        let alpha = (1.0 + c) / 2.0;
        let beta = (1.0 - alpha) / alpha;
        let mut hp = Self::manual(alpha, beta, gamma, 0.0, psi, 0)?;
        hp.c = c;
        hp.q = (1.0 - c) * gamma / 2.0;
        hp.regime = Regime::Shb;
        Ok(hp)
    }

    /// `(q − cδ)/(1 − c)`, equal to `(γ+δ)/2` under the standard coupling.
    pub fn gamma_tilde(&self) -> f64 {
        // q − cδ and 1 − c rewritten to avoid cancellation when c ≈ 1.
        let (a, b) = (self.alpha, self.beta);
        if self.regime == Regime::Shb {
            return self.q / (1.0 - self.c);
        }
        (a * b * self.delta + (1.0 - a) * self.gamma) / (1.0 - a + a * b)
    }
}

/// Eigen-index thresholds partitioning the spectrum. Each value is
/// `max{i : λ_i meets the threshold}`, 0 when no eigenvalue does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub k_ddagger: usize,
    pub k_hat: usize,
    pub k_dagger: usize,
    pub k_star: usize,
    pub k_star_sgd: usize,
}

/// Eigenvalue thresholds behind [`Cutoffs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// `λ ≥ ddagger`: real roots on the large-λ side.
    pub ddagger: f64,
    /// `λ ≥ hat`: ASGD decays no faster than SGD.
    pub hat: f64,
    /// `λ > dagger`: outside the real small-λ regime.
    pub dagger: f64,
    pub star: f64,
    pub star_sgd: f64,
}

pub fn thresholds(hp: &HyperParams, n: usize, sgd_delta: f64) -> Thresholds {
    let HyperParams { c, q, delta, gamma, .. } = *hp;
    let a = (q - c * delta).max(0.0).sqrt();
    let b = (c * (q - delta)).max(0.0).sqrt();
    let hat = if delta > 0.0 { (1.0 - c) / delta } else { f64::INFINITY };
    Thresholds {
        ddagger: (a + b) * (a + b) / (q * q),
        hat,
        dagger: (a - b) * (a - b) / (q * q),
        star: 1.0 / ((gamma + delta) * n as f64),
        star_sgd: 1.0 / (sgd_delta * n as f64),
    }
}

/// Cutoff indices for a tail-averaging window of length `n`.
pub fn compute_cutoffs(s: &Spectrum, hp: &HyperParams, n: usize, sgd_delta: f64) -> Cutoffs {
    let t = thresholds(hp, n, sgd_delta);
    let k_hat = if hp.regime == Regime::Shb || hp.delta == 0.0 { 0 } else { s.count_prefix(|l| l >= t.hat) };
    Cutoffs {
        k_ddagger: s.count_prefix(|l| l >= t.ddagger),
        k_hat,
        k_dagger: s.count_prefix(|l| l > t.dagger),
        k_star: s.count_prefix(|l| l >= t.star),
        k_star_sgd: s.count_prefix(|l| l >= t.star_sgd),
    }
}

/// Scalar constants of the variance analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub l: f64,
    /// `1/(1 − ψl)`; infinite when `ψl ≥ 1`.
    pub r: f64,
    /// `(U_i)_{22}` per eigen-index.
    pub u22: Vec<f64>,
    /// `1/(1 − max_i (U_i)_{22})` used under one-hot design; infinite when
    /// the maximum reaches 1.
    pub r_onehot: f64,
}

/// `(U_i)_{22} = δ/2 + (1+c)(q−δ) / (2(1 − c² + cλ(q+cδ)))`.
pub fn u22(lambda: f64, hp: &HyperParams) -> f64 {
    let HyperParams { c, q, delta, .. } = *hp;
    delta / 2.0 + (1.0 + c) * (q - delta) / (2.0 * (1.0 - c * c + c * lambda * (q + c * delta)))
}

impl BoundConstants {
    /// Evaluates every constant without feasibility checks.
    pub fn evaluate(s: &Spectrum, hp: &HyperParams) -> Self {
        let l = hp.delta * s.trace() / 2.0
            + 1.0 / (2.0 * hp.psi)
            + hp.gamma / 4.0 * s.tail_sum_saturating(hp.kappa_tilde);
        let r = inverse_gap(hp.psi * l);
        let u22: Vec<f64> = s.eigenvalues().iter().map(|&lam| u22(lam, hp)).collect();
        let max_u = u22.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { l, r, u22, r_onehot: inverse_gap(max_u) }
    }

    /// `Σ_i λ_i (U_i)_{22}`.
    pub fn weighted_u22(&self, s: &Spectrum) -> f64 {
        sum::sum(s.eigenvalues().iter().zip(&self.u22).map(|(l, u)| l * u))
    }
}

fn inverse_gap(x: f64) -> f64 {
    if x < 1.0 {
        1.0 / (1.0 - x)
    } else {
        f64::INFINITY
    }
}

/// Constants `l`, `r`, `U22`; fails when `ψl ≥ 1`.
pub fn bound_constants(s: &Spectrum, hp: &HyperParams) -> Result<BoundConstants> {
    let k = BoundConstants::evaluate(s, hp);
    if !k.r.is_finite() {
        return Err(Error::Infeasible(format!("psi * l = {} >= 1, so r is unbounded", hp.psi * k.l)));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper_spectrum() -> Spectrum {
        Spectrum::new(&SpectrumKind::Polynomial(2.0), 2000).unwrap()
    }

    fn paper_hp(s: &Spectrum) -> HyperParams {
        HyperParams::derive_from_alpha(0.1, 0.9875, 5, 3.0, s).unwrap()
    }

    #[test]
    fn paper_parameters() {
        let s = paper_spectrum();
        let hp = paper_hp(&s);
        assert_relative_eq!(hp.c, 0.975, max_relative = 1e-14);
        assert_relative_eq!(hp.q, 79.0 / 750.0, max_relative = 1e-14);
        assert_relative_eq!(hp.gamma, 79.0 / 150.0, max_relative = 1e-14);
        assert_eq!(hp.regime, Regime::Overparam);
        let k = compute_cutoffs(&s, &hp, 500, hp.delta);
        assert_eq!((k.k_ddagger, k.k_hat, k.k_dagger, k.k_star, k.k_star_sgd), (0, 2, 6, 17, 7));
    }

    #[test]
    fn paper_constants() {
        let s = paper_spectrum();
        let k = bound_constants(&s, &paper_hp(&s)).unwrap();
        assert_relative_eq!(k.l, 0.2726967485523469, max_relative = 1e-13);
        assert_relative_eq!(k.r, 5.497231325565276, max_relative = 1e-13);
    }

    #[test]
    fn overparam_round_trip_through_gamma() {
        let s = paper_spectrum();
        let a = paper_hp(&s);
        let b = HyperParams::derive_overparam(a.delta, a.gamma, 5, 3.0, &s).unwrap();
        assert_relative_eq!(a.beta, b.beta, max_relative = 1e-14);
        assert_relative_eq!(a.c, b.c, max_relative = 1e-14);
    }

    #[test]
    fn overparam_rejections() {
        let s = paper_spectrum();
        let err = HyperParams::derive_overparam(0.2, 0.3, 5, 3.0, &s).unwrap_err();
        assert!(err.to_string().contains("delta <= 1/(2 psi tr(H))"));
        let err = HyperParams::derive_overparam(0.1, 0.05, 5, 3.0, &s).unwrap_err();
        assert!(err.to_string().contains("gamma >= delta"));
        let err = HyperParams::derive_overparam(0.1, 5.0, 5, 3.0, &s).unwrap_err();
        assert!(err.to_string().contains("tail_sum"));
        // alpha near 1/2 gives beta near 1 and gamma < delta.
        assert!(HyperParams::derive_from_alpha(0.1, 0.51, 5, 3.0, &s).is_err());
        assert!(HyperParams::derive_overparam(0.1, 0.2, 0, 3.0, &s).is_err());
    }

    #[test]
    fn smallest_gamma_near_half() {
        let s = Spectrum::from_eigenvalues(vec![1.0, 1e-3]).unwrap();
        // beta -> 1 gives gamma -> delta / (psi * kappa_tilde); that is below
        // delta here, so only the formula is checked.
        let alpha = 0.5 + 1e-9;
        let beta = (1.0 - alpha) / alpha;
        let gamma = 0.1 / (3.0 * beta);
        assert_relative_eq!(gamma, 0.1 / 3.0, max_relative = 1e-8);
        assert!(HyperParams::derive_from_alpha(0.1, alpha, 1, 3.0, &s).is_err());
    }

    #[test]
    fn sgd_reduction() {
        let hp = HyperParams::sgd(0.1, 3.0).unwrap();
        assert_eq!(hp.c, 0.0);
        assert_eq!(hp.q, 0.1);
    }

    #[test]
    fn classical_hand_values() {
        let s = Spectrum::from_eigenvalues(vec![1.0, 1.0]).unwrap();
        let hp = HyperParams::derive_classical(&s, 3.0).unwrap();
        assert_relative_eq!(hp.delta, 1.0 / 12.0, max_relative = 1e-15);
        assert_relative_eq!(hp.gamma, 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(hp.beta, 1.0 / 12.0, max_relative = 1e-15);

        let one = Spectrum::from_eigenvalues(vec![0.7]).unwrap();
        let hp = HyperParams::derive_classical(&one, 3.0).unwrap();
        assert_relative_eq!(hp.gamma * 0.7, 2.0 * hp.beta, max_relative = 1e-15);

        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 10).unwrap();
        let hp = HyperParams::derive_classical(&s, 3.0).unwrap();
        let k = bound_constants(&s, &hp).unwrap();
        assert_relative_eq!(k.l, hp.delta * s.trace() / 2.0 + 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(k.r, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn shb_examples() {
        let s = Spectrum::from_eigenvalues(vec![1.0, 0.25]).unwrap();
        let hp = HyperParams::derive_shb(0.9, 0.1, &s, 3.0, 100).unwrap();
        assert_relative_eq!(hp.q, 0.005, max_relative = 1e-14);
        assert_eq!(hp.delta, 0.0);
        assert!(HyperParams::derive_shb(1.0 - 2.0 / 100.0, 0.1, &s, 3.0, 100).is_ok());
        assert!(HyperParams::derive_shb(0.99, 0.1, &s, 3.0, 100).is_err());
        let gmax = 4.0 / (3.0 * s.trace());
        assert!(HyperParams::derive_shb(0.9, gmax, &s, 3.0, 100).is_err());
        let k = compute_cutoffs(&s, &hp, 100, 0.1);
        assert_eq!((k.k_ddagger, k.k_hat), (0, 0));
    }

    #[test]
    fn empty_cutoffs() {
        let s = Spectrum::from_eigenvalues(vec![1e-9, 1e-10]).unwrap();
        let hp = HyperParams::derive_overparam(0.1, 0.3, 1, 3.0, &s).unwrap();
        let k = compute_cutoffs(&s, &hp, 10, 0.1);
        assert_eq!(k, Cutoffs { k_ddagger: 0, k_hat: 0, k_dagger: 0, k_star: 0, k_star_sgd: 0 });
    }

    #[test]
    fn infeasible_constants() {
        let s = Spectrum::from_eigenvalues(vec![1.0]).unwrap();
        let hp = HyperParams::manual(0.9, 0.1, 2.0, 1.0, 3.0, 0).unwrap();
        assert!(matches!(bound_constants(&s, &hp), Err(Error::Infeasible(_))));
    }

    prop_compose! {
        fn valid_instance()(
            mut eig in prop::collection::vec(1e-5f64..1.0, 1..40),
            psi in 1.0f64..5.0,
            dfrac in 0.05f64..1.0,
            gfrac in 0.0f64..1.0,
            kt in 1usize..40,
        ) -> Option<(Spectrum, HyperParams)> {
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let s = Spectrum::from_eigenvalues(eig).unwrap();
            let kt = kt.min(s.dim());
            let delta = dfrac / (2.0 * psi * s.trace());
            let gmax = (1.0 / (2.0 * psi * s.tail_sum_saturating(kt))).min(1e6);
            let gamma = delta + gfrac * (gmax - delta).max(0.0);
            HyperParams::derive_overparam(delta, gamma, kt, psi, &s).ok().map(|hp| (s, hp))
        }
    }

    proptest! {
        #[test]
        fn qc_identities(inst in valid_instance()) {
            let Some((_s, hp)) = inst else { return Ok(()) };
            let HyperParams { alpha, beta, gamma, delta, c, q, .. } = hp;
            prop_assert!((c - (2.0 * alpha - 1.0)).abs() <= 1e-14);
            prop_assert!(beta <= 1.0 - c + 1e-15 && 1.0 - c <= 2.0 * beta + 1e-15);
            prop_assert!(delta <= q * (1.0 + 1e-14) && q <= (1.0 + c) * delta * (1.0 + 1e-14));
            prop_assert!(q - delta <= c * (q - c * delta) + 1e-15);
            let gt = (gamma + delta) / 2.0;
            prop_assert!((hp.gamma_tilde() - gt).abs() <= 1e-12 * gt + 1e-15 * gamma / (1.0 - c));
        }

        #[test]
        fn cutoff_ordering(inst in valid_instance(), n in 2usize..5000) {
            let Some((s, hp)) = inst else { return Ok(()) };
            let k = compute_cutoffs(&s, &hp, n, hp.delta);
            prop_assert!(k.k_ddagger <= k.k_hat && k.k_hat <= k.k_dagger);
            if n as f64 * (1.0 - hp.c) >= 2.0 {
                prop_assert!(k.k_dagger <= k.k_star);
            }
        }

        #[test]
        fn u22_bounds(inst in valid_instance()) {
            let Some((s, hp)) = inst else { return Ok(()) };
            let k = BoundConstants::evaluate(&s, &hp);
            let tol = 1e-12;
            for (&lam, &u) in s.eigenvalues().iter().zip(&k.u22) {
                let b1 = hp.delta / 2.0 + 1.0 / (2.0 * hp.psi * hp.kappa_tilde as f64 * lam);
                let b2 = hp.delta / 2.0 + hp.gamma / 4.0;
                prop_assert!(u <= b1 * (1.0 + tol));
                prop_assert!(u <= b2 * (1.0 + tol));
            }
            prop_assert!(k.weighted_u22(&s) <= k.l * (1.0 + tol));
            prop_assert!(hp.psi * k.l < 1.0);
        }
    }
}
