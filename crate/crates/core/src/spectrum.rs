//! Eigenvalue spectra of a diagonal data covariance and the problem
//! instance built around one.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::sum::{self, CompensatedSum};

/// Family of eigenvalue sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpectrumKind {
    /// `λ_i = i^{-exponent}`.
    Polynomial(f64),
    /// `λ_i = exp(-rate * i)`.
    Exponential(f64),
    /// Explicit non-increasing positive eigenvalues.
    Custom(Vec<f64>),
}

/// Per-coordinate weight of a segmented quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// `λ_i`
    H,
    /// `1 / λ_i`
    HInv,
    /// `1`
    Identity,
    /// `λ_i²`
    HSquared,
}

/// Descending positive eigenvalues with precomputed compensated tail sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    // tails[k] = Σ_{i>k} λ_i (1-based i), so tails[0] is the trace and tails[d] = 0.
    tails: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum of dimension `d` from a family.
    ///
    /// For [`SpectrumKind::Custom`] the list length must equal `d`.
    pub fn new(kind: &SpectrumKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(validation("spectrum dimension d must be at least 1"));
        }
        let eigenvalues = match kind {
            SpectrumKind::Polynomial(p) => {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(validation(format!("polynomial exponent must be positive, got {p}")));
                }
                (1..=d).map(|i| (i as f64).powf(-p)).collect()
            }
            SpectrumKind::Exponential(rho) => {
                if !(rho.is_finite() && *rho > 0.0) {
                    return Err(validation(format!("exponential rate must be positive, got {rho}")));
                }
                (1..=d).map(|i| (-rho * i as f64).exp()).collect()
            }
            SpectrumKind::Custom(values) => {
                if values.is_empty() {
                    return Err(validation("custom spectrum is empty"));
                }
                if values.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: values.len() });
                }
                values.clone()
            }
        };
        Self::from_eigenvalues(eigenvalues)
    }

    /// Validates and wraps an explicit eigenvalue list.
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(validation("spectrum is empty"));
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(validation(format!(
                    "eigenvalue {} must be finite and strictly positive, got {l:e}",
                    i + 1
                )));
            }
        }
        if let Some(i) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
            return Err(validation(format!(
                "eigenvalues must be non-increasing (λ_{} < λ_{})",
                i + 1,
                i + 2
            )));
        }
        let d = eigenvalues.len();
        let mut tails = vec![0.0; d + 1];
        let mut acc = CompensatedSum::new();
        for k in (0..d).rev() {
            acc.add(eigenvalues[k]);
            tails[k] = acc.value();
        }
        Ok(Self { eigenvalues, tails })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_i` with 1-based `i`.
    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i - 1]
    }

    /// Smallest eigenvalue `μ = λ_d`.
    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    pub fn trace(&self) -> f64 {
        self.tails[0]
    }

    /// `Σ_{i>k} λ_i`; `k` in `0..=d`.
    pub fn tail_sum(&self, k: usize) -> Result<f64> {
        self.tails
            .get(k)
            .copied()
            .ok_or_else(|| validation(format!("tail index {k} exceeds dimension {}", self.dim())))
    }

    /// `Σ_{i>k} λ_i`, zero when `k ≥ d`.
    pub fn tail_sum_saturating(&self, k: usize) -> f64 {
        self.tails.get(k).copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues satisfying `pred`, assuming the predicate is
    /// monotone (true on a prefix). Equals `max{i : pred(λ_i)}` with the
    /// empty maximum taken as 0.
    pub fn count_prefix(&self, pred: impl Fn(f64) -> bool) -> usize {
        self.eigenvalues.partition_point(|&l| pred(l))
    }

    /// `Σ_{i=lo+1}^{hi} w_i v_i²`.
    pub fn segmented_norm(&self, v: &[f64], lo: usize, hi: usize, weight: Weight) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        if lo > hi || hi > self.dim() {
            return Err(validation(format!(
                "segment {lo}:{hi} is not within 0:{}",
                self.dim()
            )));
        }
        Ok(self.weighted_sum(lo, hi, weight, |i| v[i] * v[i]))
    }

    /// Like [`Spectrum::segmented_norm`], but an empty or inverted segment
    /// contributes zero and `hi` is clamped to `d`.
    pub fn segment_clamped(&self, v: &[f64], lo: usize, hi: usize, weight: Weight) -> f64 {
        let hi = hi.min(self.dim());
        if lo >= hi {
            return 0.0;
        }
        self.weighted_sum(lo, hi, weight, |i| v[i] * v[i])
    }

    /// Compensated `Σ_{i in lo..hi} weight(λ_i) · f(i)` over 0-based indices.
    pub(crate) fn weighted_sum(
        &self,
        lo: usize,
        hi: usize,
        weight: Weight,
        f: impl Fn(usize) -> f64,
    ) -> f64 {
        sum::sum((lo..hi).map(|i| {
            let l = self.eigenvalues[i];
            let w = match weight {
                Weight::H => l,
                Weight::HInv => 1.0 / l,
                Weight::Identity => 1.0,
                Weight::HSquared => l * l,
            };
            w * f(i)
        }))
    }
}

/// A least-squares instance: spectrum, optimum, initialization, noise and
/// fourth-moment constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub spectrum: Spectrum,
    pub w_star: Vec<f64>,
    pub w0: Vec<f64>,
    /// Label-noise variance σ².
    pub noise_variance: f64,
    pub psi: f64,
}

impl ProblemInstance {
    pub fn new(
        spectrum: Spectrum,
        w_star: Vec<f64>,
        w0: Vec<f64>,
        noise_variance: f64,
        psi: f64,
    ) -> Result<Self> {
        let d = spectrum.dim();
        for v in [&w_star, &w0] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(validation("weight vectors must be finite"));
            }
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(validation(format!("noise variance must be >= 0, got {noise_variance}")));
        }
        if !(psi.is_finite() && psi >= 1.0) {
            return Err(validation(format!("psi must be >= 1, got {psi}")));
        }
        Ok(Self { spectrum, w_star, w0, noise_variance, psi })
    }

    /// Instance with `w* = 0`.
    pub fn centered(spectrum: Spectrum, w0: Vec<f64>, noise_variance: f64, psi: f64) -> Result<Self> {
        let d = spectrum.dim();
        Self::new(spectrum, vec![0.0; d], w0, noise_variance, psi)
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// `w0 − w*`.
    pub fn initial_error(&self) -> Vec<f64> {
        self.w0.iter().zip(&self.w_star).map(|(a, b)| a - b).collect()
    }

    /// `L(w) − L(w*) = ½ Σ λ_i (w_i − w*_i)²`.
    pub fn excess_risk(&self, w: &[f64]) -> f64 {
        let l = self.spectrum.eigenvalues();
        0.5 * sum::sum(w.iter().zip(&self.w_star).zip(l).map(|((a, b), l)| l * (a - b) * (a - b)))
    }

    /// Same instance with a different initialization.
    pub fn with_w0(&self, w0: Vec<f64>) -> Result<Self> {
        Self::new(self.spectrum.clone(), self.w_star.clone(), w0, self.noise_variance, self.psi)
    }

    pub fn with_noise(&self, noise_variance: f64) -> Result<Self> {
        Self::new(self.spectrum.clone(), self.w_star.clone(), self.w0.clone(), noise_variance, self.psi)
    }
}

/// `scale · e_index` in dimension `d` (1-based index).
pub fn scaled_basis(d: usize, index: usize, scale: f64) -> Result<Vec<f64>> {
    if index == 0 || index > d {
        return Err(validation(format!("basis index {index} outside 1..={d}")));
    }
    let mut v = vec![0.0; d];
    v[index - 1] = scale;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn polynomial_two() {
        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 4).unwrap();
        assert_eq!(s.eigenvalues(), &[1.0, 0.25, 1.0 / 9.0, 0.0625]);
    }

    #[test]
    fn exponential_half() {
        let s = Spectrum::new(&SpectrumKind::Exponential(0.5), 3).unwrap();
        assert_relative_eq!(s.lambda(1), (-0.5f64).exp());
        assert_relative_eq!(s.lambda(3), (-1.5f64).exp());
    }

    #[test]
    fn singleton_custom() {
        let s = Spectrum::new(&SpectrumKind::Custom(vec![1.0]), 1).unwrap();
        assert_eq!(s.trace(), 1.0);
        assert_eq!(s.tail_sum(1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Spectrum::new(&SpectrumKind::Polynomial(0.0), 3).is_err());
        assert!(Spectrum::new(&SpectrumKind::Exponential(-1.0), 3).is_err());
        assert!(Spectrum::new(&SpectrumKind::Custom(vec![]), 0).is_err());
        assert!(Spectrum::new(&SpectrumKind::Custom(vec![0.5, 1.0]), 2).is_err());
        assert!(Spectrum::new(&SpectrumKind::Custom(vec![1.0, 0.0]), 2).is_err());
        // Underflows to zero long before index 2000.
        assert!(Spectrum::new(&SpectrumKind::Exponential(0.5), 2000).is_err());
    }

    #[test]
    fn paper_tail_sums() {
        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 2000).unwrap();
        assert_eq!(s.trace(), 1.644434191827393);
        assert_relative_eq!(s.tail_sum(5).unwrap(), 0.18082308071628198, max_relative = 1e-14);
        assert_eq!(s.tail_sum(2000).unwrap(), 0.0);
        assert!(s.tail_sum(2001).is_err());
    }

    #[test]
    fn segmented_examples() {
        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 10).unwrap();
        let v = scaled_basis(10, 2, 10.0).unwrap();
        assert_eq!(s.segmented_norm(&v, 0, 5, Weight::H).unwrap(), 25.0);
        for w in [Weight::H, Weight::HInv, Weight::Identity, Weight::HSquared] {
            assert_eq!(s.segmented_norm(&v, 2, 5, w).unwrap(), 0.0);
        }
        let s2 = Spectrum::from_eigenvalues(vec![1.0, 0.25]).unwrap();
        assert_eq!(s2.segmented_norm(&[1.0, 1.0], 0, 2, Weight::HInv).unwrap(), 5.0);
        assert!(s2.segmented_norm(&[1.0, 1.0], 2, 1, Weight::H).is_err());
        assert!(s2.segmented_norm(&[1.0, 1.0], 0, 3, Weight::H).is_err());
    }

    #[test]
    fn count_prefix_is_max_index() {
        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 2000).unwrap();
        assert_eq!(s.count_prefix(|l| l >= 0.02), 7);
        assert_eq!(s.count_prefix(|l| l >= 2.0), 0);
        assert_eq!(s.count_prefix(|l| l > 0.0), 2000);
    }

    #[test]
    fn instance_validation() {
        let s = Spectrum::from_eigenvalues(vec![1.0, 0.5]).unwrap();
        assert!(ProblemInstance::centered(s.clone(), vec![1.0], 0.0, 3.0).is_err());
        assert!(ProblemInstance::centered(s.clone(), vec![1.0, 0.0], -1.0, 3.0).is_err());
        assert!(ProblemInstance::centered(s.clone(), vec![1.0, 0.0], 0.0, 0.5).is_err());
        let inst = ProblemInstance::centered(s, vec![1.0, 2.0], 0.0, 3.0).unwrap();
        assert_eq!(inst.excess_risk(&[1.0, 2.0]), 0.5 * (1.0 + 0.5 * 4.0));
    }

    fn spectrum_strategy() -> impl Strategy<Value = Spectrum> {
        prop::collection::vec(1e-6f64..10.0, 1..60).prop_map(|mut v| {
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            Spectrum::from_eigenvalues(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tail_sums_telescope(s in spectrum_strategy(), a in 0usize..60, b in 0usize..60) {
            let d = s.dim();
            let (k1, k2) = (a.min(b) % (d + 1), a.max(b) % (d + 1));
            let (k1, k2) = (k1.min(k2), k1.max(k2));
            let middle: f64 = s.eigenvalues()[k1..k2].iter().sum();
            let lhs = s.tail_sum(k1).unwrap();
            let rhs = s.tail_sum(k2).unwrap() + middle;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
        }

        #[test]
        fn segments_are_additive(s in spectrum_strategy(), seed in prop::collection::vec(-5f64..5.0, 60), cut in 0usize..60) {
            let d = s.dim();
            let v = &seed[..d];
            let cut = cut % (d + 1);
            for w in [Weight::H, Weight::HInv, Weight::Identity, Weight::HSquared] {
                let whole = s.segmented_norm(v, 0, d, w).unwrap();
                let parts = s.segmented_norm(v, 0, cut, w).unwrap() + s.segmented_norm(v, cut, d, w).unwrap();
                prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300));
            }
        }

        #[test]
        fn h_norm_is_twice_excess_risk(s in spectrum_strategy(), seed in prop::collection::vec(-5f64..5.0, 60)) {
            let d = s.dim();
            let inst = ProblemInstance::centered(s.clone(), seed[..d].to_vec(), 0.0, 3.0).unwrap();
            let quad = s.segmented_norm(&inst.w0, 0, d, Weight::H).unwrap();
            prop_assert!((quad - 2.0 * inst.excess_risk(&inst.w0)).abs() <= 1e-12 * quad.max(1e-300));
        }
    }
}
