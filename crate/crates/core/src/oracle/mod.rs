//! Exact second-moment recursion of ASGD on diagonal least squares.
//!
//! Per coordinate `i` the state is the 3×3 second moment of
//! `(u_i − w*_i, u_i − w_i, S_i)` where `S` is the running tail sum of
//! `w − w*`. Tracking the momentum `m = u − w` instead of `w` keeps the
//! update free of the `1 + c − qλ` cancellation when `c` is close to 1. Because `H` is diagonal and the fourth-moment excess of the
//! supported designs depends on `M_uu` only through its diagonal, the
//! diagonal blocks evolve independently of all cross-coordinate moments,
//! except through the scalar coupling `g = Σ_j λ_j E[(u_j − w*_j)²]`.

pub mod dense;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::hyper::{BoundConstants, HyperParams};
use crate::spectrum::{ProblemInstance, Spectrum};
use crate::sum;

pub type Sym3 = [[f64; 3]; 3];

/// Fourth-moment structure of the design `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FourthMomentModel {
    /// `x ~ N(0, H)`: `E[xxᵀMxxᵀ] = 2HMH + tr(HM)H`.
    GaussianExact,
    /// `x = √(λ_I/p_I) e_I` with `I ~ p`: `E[xxᵀMxxᵀ] = diag(λ_i² M_ii / p_i)`.
    OneHot(Vec<f64>),
    /// Mean dynamics only: `E[xxᵀMxxᵀ] = HMH`.
    MeanFieldOnly,
}

impl FourthMomentModel {
    /// One-hot design with `p_i = λ_i / tr(H)`.
    pub fn one_hot_default(s: &Spectrum) -> Self {
        let tr = s.trace();
        FourthMomentModel::OneHot(s.eigenvalues().iter().map(|l| l / tr).collect())
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if let FourthMomentModel::OneHot(p) = self {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(validation("one-hot probabilities must be positive"));
            }
            let total = sum::sum(p.iter().copied());
            if (total - 1.0).abs() > 1e-9 {
                return Err(validation(format!("one-hot probabilities sum to {total}, not 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskMode {
    /// Initial error and label noise.
    Full,
    /// Initial error, no label noise.
    Bias,
    /// Label noise, started at the optimum.
    Variance,
}

/// Where a risk figure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Bound,
    Oracle,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub bias: f64,
    pub variance: f64,
    /// `total − bias − variance`; zero up to rounding for exact computations
    /// under well-specified noise.
    pub cross: f64,
    pub total: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    /// Second moments over `(u − w*, u − w, S)`.
    pub blocks: Vec<Sym3>,
    /// `Σ_i λ_i blocks[i][0][0]`.
    pub coupling: f64,
    pub t: usize,
}

const U: usize = 0;
const M: usize = 1;
const S: usize = 2;

impl MomentState {
    pub fn zero(d: usize) -> Self {
        Self { blocks: vec![[[0.0; 3]; 3]; d], coupling: 0.0, t: 0 }
    }

    /// State at `t = 0` with `w0 = v0`, so `u` starts at `e` with zero
    /// momentum. When `accumulate_initial` is set, `S = e` as well.
    pub fn from_initial_error(e: &[f64], s: &Spectrum, accumulate_initial: bool) -> Self {
        let acc = if accumulate_initial { 1.0 } else { 0.0 };
        let blocks: Vec<Sym3> = e
            .iter()
            .map(|&x| {
                let x2 = x * x;
                [[x2, 0.0, acc * x2], [0.0, 0.0, 0.0], [acc * x2, 0.0, acc * x2]]
            })
            .collect();
        let mut st = Self { blocks, coupling: 0.0, t: 0 };
        st.coupling = st.recompute_coupling(s);
        st
    }

    pub fn recompute_coupling(&self, s: &Spectrum) -> f64 {
        sum::sum(s.eigenvalues().iter().zip(&self.blocks).map(|(l, b)| l * b[U][U]))
    }

    /// `(1/(2N²)) Σ_i λ_i E[S_i²]`.
    pub fn tail_risk(&self, s: &Spectrum, n: usize) -> f64 {
        let nn = n as f64;
        sum::sum(s.eigenvalues().iter().zip(&self.blocks).map(|(l, b)| l * b[S][S])) / (2.0 * nn * nn)
    }

    /// Second moment of `(w_i − w*_i, u_i − w*_i)`.
    pub fn wu_block(&self, i: usize) -> [[f64; 2]; 2] {
        let b = &self.blocks[i];
        let ww = b[U][U] - 2.0 * b[U][M] + b[M][M];
        let wu = b[U][U] - b[U][M];
        [[ww, wu], [wu, b[U][U]]]
    }

    /// `Σ_i λ_i E[(u_i − w*_i)²]`, the coupling functional.
    pub fn u_energy(&self) -> f64 {
        self.coupling
    }

    /// Smallest eigenvalue of any block relative to its largest entry.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(sym3_min_relative_eigenvalue).fold(f64::INFINITY, f64::min)
    }
}

fn sym3_min_relative_eigenvalue(b: &Sym3) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| b[i][j] / scale);
    m.symmetric_eigenvalues().min()
}

/// Advances the state by one iteration in place.
pub fn step_in_place(
    state: &mut MomentState,
    s: &Spectrum,
    hp: &HyperParams,
    fm: &FourthMomentModel,
    noise_variance: f64,
    accumulate: bool,
) {
    let HyperParams { c, q, delta, .. } = *hp;
    let g_old = state.coupling;
    let acc = if accumulate { 1.0 } else { 0.0 };
    // u' = (1−qλ)u + cm, m' = −(q−δ)λu + cm, S' = S + (1−δλ)u, with the
    // gradient noise entering through (q, q−δ, δ).
    let v = [q, q - delta, delta * acc];
    let mut coupling = sum::CompensatedSum::new();
    for (i, (b, &lam)) in state.blocks.iter_mut().zip(s.eigenvalues()).enumerate() {
        let a = 1.0 - delta * lam;
        let g: Sym3 = [[1.0 - q * lam, c, 0.0], [-(q - delta) * lam, c, 0.0], [acc * a, 0.0, 1.0]];
        let muu = b[U][U];
        let phi = match fm {
            FourthMomentModel::GaussianExact => lam * lam * muu + lam * g_old,
            FourthMomentModel::OneHot(p) => (lam * lam / p[i] - lam * lam) * muu,
            FourthMomentModel::MeanFieldOnly => 0.0,
        };
        let inject = phi + noise_variance * lam;
        let mut gb = [[0.0; 3]; 3];
        for r in 0..3 {
            for k in 0..3 {
                gb[r][k] = g[r][0] * b[0][k] + g[r][1] * b[1][k] + g[r][2] * b[2][k];
            }
        }
        let mut next = [[0.0; 3]; 3];
        for r in 0..3 {
            for k in r..3 {
                let x = gb[r][0] * g[k][0] + gb[r][1] * g[k][1] + gb[r][2] * g[k][2] + inject * v[r] * v[k];
                next[r][k] = x;
                next[k][r] = x;
            }
        }
        *b = next;
        coupling.add(lam * b[U][U]);
    }
    state.coupling = coupling.value();
    state.t += 1;
}

/// One iteration of the second-moment recursion.
pub fn step(
    state: &MomentState,
    s: &Spectrum,
    hp: &HyperParams,
    fm: &FourthMomentModel,
    noise_variance: f64,
    accumulate: bool,
) -> MomentState {
    let mut next = state.clone();
    step_in_place(&mut next, s, hp, fm, noise_variance, accumulate);
    next
}

/// Initial state and effective noise level for a mode.
pub fn initial_state(inst: &ProblemInstance, mode: RiskMode, s: usize) -> (MomentState, f64) {
    let sp = &inst.spectrum;
    match mode {
        RiskMode::Full => (MomentState::from_initial_error(&inst.initial_error(), sp, s == 0), inst.noise_variance),
        RiskMode::Bias => (MomentState::from_initial_error(&inst.initial_error(), sp, s == 0), 0.0),
        RiskMode::Variance => (MomentState::zero(inst.dim()), inst.noise_variance),
    }
}

/// Runs iterations `1..s+N` and returns the state holding the second moment
/// of `Σ_{t=s}^{s+N−1} (w_t − w*)`.
pub fn run(inst: &ProblemInstance, hp: &HyperParams, fm: &FourthMomentModel, s: usize, n: usize, mode: RiskMode) -> Result<MomentState> {
    if n == 0 {
        return Err(validation("N must be at least 1"));
    }
    fm.validate(inst.dim())?;
    let (mut st, noise) = initial_state(inst, mode, s);
    for t in 1..s + n {
        step_in_place(&mut st, &inst.spectrum, hp, fm, noise, t >= s);
    }
    Ok(st)
}

/// Exact expected excess risk of the tail average `N⁻¹ Σ_{t=s}^{s+N−1} w_t`.
pub fn exact_risk(inst: &ProblemInstance, hp: &HyperParams, fm: &FourthMomentModel, s: usize, n: usize, mode: RiskMode) -> Result<f64> {
    Ok(run(inst, hp, fm, s, n, mode)?.tail_risk(&inst.spectrum, n))
}

/// Full, bias and variance risks together.
pub fn risk_breakdown(inst: &ProblemInstance, hp: &HyperParams, fm: &FourthMomentModel, s: usize, n: usize) -> Result<RiskBreakdown> {
    let total = exact_risk(inst, hp, fm, s, n, RiskMode::Full)?;
    let bias = exact_risk(inst, hp, fm, s, n, RiskMode::Bias)?;
    let variance = exact_risk(inst, hp, fm, s, n, RiskMode::Variance)?;
    Ok(RiskBreakdown { bias, variance, cross: total - bias - variance, total, provenance: Provenance::Oracle })
}

/// Stationary second moment of the noise-driven recursion and the checks
/// run against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    /// The fixed point exists, is PSD and is reproduced by one oracle step.
    pub converged: bool,
    /// Iterations run from zero for the monotonicity check.
    pub steps: usize,
    /// `Σ_i λ_i C_∞,i[uu]`.
    pub value: f64,
    /// `Σ_i λ_i C_t,i[uu]` after the last iteration from zero.
    pub iterate_value: f64,
    /// `σ² l / (1 − ψ l)`.
    pub bound: f64,
    /// The iterated functional never decreased and stayed below `value`.
    pub monotone: bool,
    /// Relative change of the functional when one step is applied to `C_∞`.
    pub residual: f64,
}

impl StationaryReport {
    pub fn passed(&self) -> bool {
        self.converged && self.monotone && self.value <= self.bound
    }
}

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_STEPS: usize = 100_000;

/// Stationary `(u, m)` block for unit forcing `λ v vᵀ` with local feedback
/// `k · X[uu] · v vᵀ`: solves `X = G X Gᵀ + (k X[uu] + 1) v vᵀ`.
fn unit_stationary_block(lam: f64, hp: &HyperParams, k: f64) -> Option<[f64; 3]> {
    let HyperParams { c, q, delta, .. } = *hp;
    let g = [[1.0 - q * lam, c], [-(q - delta) * lam, c]];
    let v = [q, q - delta];
    let idx = [(0, 0), (0, 1), (1, 1)];
    let mut a = nalgebra::Matrix3::<f64>::identity();
    let mut rhs = nalgebra::Vector3::<f64>::zeros();
    for (row, &(r, s)) in idx.iter().enumerate() {
        a[(row, 0)] -= g[r][0] * g[s][0] + k * v[r] * v[s];
        a[(row, 1)] -= g[r][0] * g[s][1] + g[r][1] * g[s][0];
        a[(row, 2)] -= g[r][1] * g[s][1];
        rhs[row] = v[r] * v[s];
    }
    let y = a.lu().solve(&rhs)?;
    let psd = y[0] >= 0.0 && y[2] >= 0.0 && y[1] * y[1] <= y[0] * y[2] * (1.0 + 1e-9) + 1e-300;
    (y.iter().all(|x| x.is_finite()) && psd).then(|| [y[0], y[1], y[2]])
}

/// Solves for the stationary noise covariance `C_∞` directly, confirms it is
/// a fixed point of the oracle step, and iterates the recursion from zero
/// (until the relative change drops below `1e-12` or `10⁵` steps) to check
/// that the functional increases monotonically towards it.
pub fn stationary_check(inst: &ProblemInstance, hp: &HyperParams, fm: &FourthMomentModel) -> Result<StationaryReport> {
    fm.validate(inst.dim())?;
    let sp = &inst.spectrum;
    let sigma2 = inst.noise_variance;
    let k = BoundConstants::evaluate(sp, hp);
    let bound = if k.r.is_finite() { sigma2 * k.l * k.r } else { f64::INFINITY };

    // Per block X_i = f_i Y_i with f_i = λ_i (g + σ²) under Gaussian design
    // (g the coupling functional) and λ_i σ² otherwise.
    let units: Option<Vec<[f64; 3]>> = sp
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &lam)| {
            let local = match fm {
                FourthMomentModel::GaussianExact => lam * lam,
                FourthMomentModel::OneHot(p) => lam * lam / p[i] - lam * lam,
                FourthMomentModel::MeanFieldOnly => 0.0,
            };
            unit_stationary_block(lam, hp, local)
        })
        .collect();
    let gain = units
        .as_ref()
        .map(|u| sum::sum(sp.eigenvalues().iter().zip(u).map(|(l, y)| l * l * y[0])));
    let forcing = match (fm, gain) {
        (FourthMomentModel::GaussianExact, Some(a)) if a < 1.0 => Some(sigma2 / (1.0 - a)),
        (FourthMomentModel::GaussianExact, _) => None,
        (_, Some(_)) => Some(sigma2),
        (_, None) => None,
    };

    let mut value = f64::INFINITY;
    let mut residual = f64::INFINITY;
    if let (Some(units), Some(f)) = (&units, forcing) {
        let blocks: Vec<Sym3> = units
            .iter()
            .zip(sp.eigenvalues())
            .map(|(y, &lam)| {
                let s = f * lam;
                [[s * y[0], s * y[1], 0.0], [s * y[1], s * y[2], 0.0], [0.0; 3]]
            })
            .collect();
        let mut st = MomentState { blocks, coupling: 0.0, t: 0 };
        st.coupling = st.recompute_coupling(sp);
        value = st.coupling;
        step_in_place(&mut st, sp, hp, fm, sigma2, false);
        residual = if value == 0.0 { (st.coupling - value).abs() } else { (st.coupling - value).abs() / value };
    }
    let converged = value.is_finite() && residual < STATIONARY_TOL;

    let mut st = MomentState::zero(inst.dim());
    let mut prev = 0.0;
    let mut monotone = true;
    let mut steps = 0;
    for t in 1..=STATIONARY_MAX_STEPS {
        step_in_place(&mut st, sp, hp, fm, sigma2, false);
        let cur = st.u_energy();
        if cur < prev * (1.0 - 1e-14) || (converged && cur > value * (1.0 + 1e-12)) {
            monotone = false;
        }
        let change = if cur == 0.0 { 0.0 } else { (cur - prev).abs() / cur };
        prev = cur;
        steps = t;
        if change < STATIONARY_TOL {
            break;
        }
    }
    Ok(StationaryReport { converged, steps, value, iterate_value: prev, bound, monotone, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockdyn::{block, mat_mul};
    use crate::spectrum::SpectrumKind;
    use approx::assert_relative_eq;

    fn small_instance(sigma2: f64) -> (ProblemInstance, HyperParams) {
        let s = Spectrum::new(&SpectrumKind::Polynomial(2.0), 6).unwrap();
        let hp = HyperParams::derive_from_alpha(0.1, 0.9, 2, 3.0, &s).unwrap();
        let w0 = vec![1.0, -0.5, 0.3, 0.0, 2.0, 1.0];
        (ProblemInstance::centered(s, w0, sigma2, 3.0).unwrap(), hp)
    }

    #[test]
    fn zero_state_is_fixed_without_noise() {
        let (inst, hp) = small_instance(0.0);
        let st = MomentState::zero(inst.dim());
        let next = step(&st, &inst.spectrum, &hp, &FourthMomentModel::GaussianExact, 0.0, true);
        assert!(next.blocks.iter().flatten().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn mean_field_step_is_conjugation() {
        let s = Spectrum::from_eigenvalues(vec![0.4]).unwrap();
        let hp = HyperParams::derive_overparam(0.5, 0.8, 1, 2.0, &s).unwrap();
        let st = MomentState::from_initial_error(&[1.0], &s, false);
        let next = step(&st, &s, &hp, &FourthMomentModel::MeanFieldOnly, 0.0, false);
        let a = block(0.4, &hp).m;
        let at = [[a[0][0], a[1][0]], [a[0][1], a[1][1]]];
        let expect = mat_mul(&mat_mul(&a, &[[1.0, 1.0], [1.0, 1.0]]), &at);
        for r in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(next.wu_block(0)[r][k], expect[r][k], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn trivial_modes_vanish() {
        let (inst, hp) = small_instance(0.0);
        let fm = FourthMomentModel::GaussianExact;
        assert_eq!(exact_risk(&inst, &hp, &fm, 5, 10, RiskMode::Variance).unwrap(), 0.0);
        let at_opt = inst.with_w0(vec![0.0; 6]).unwrap().with_noise(0.1).unwrap();
        assert_eq!(exact_risk(&at_opt, &hp, &fm, 5, 10, RiskMode::Bias).unwrap(), 0.0);
    }

    #[test]
    fn bias_plus_variance_is_full() {
        let (inst, hp) = small_instance(0.3);
        for fm in [FourthMomentModel::GaussianExact, FourthMomentModel::one_hot_default(&inst.spectrum)] {
            let r = risk_breakdown(&inst, &hp, &fm, 7, 20).unwrap();
            assert!(r.cross.abs() <= 1e-12 * r.total, "{r:?}");
        }
    }

    #[test]
    fn s_zero_includes_initial_iterate() {
        // With N = 1 the average is w_0 itself.
        let (inst, hp) = small_instance(0.0);
        let r = exact_risk(&inst, &hp, &FourthMomentModel::GaussianExact, 0, 1, RiskMode::Bias).unwrap();
        assert_relative_eq!(r, inst.excess_risk(&inst.w0), max_relative = 1e-15);
    }

    #[test]
    fn blocks_stay_psd() {
        let (inst, hp) = small_instance(0.1);
        let fm = FourthMomentModel::GaussianExact;
        let (mut st, noise) = initial_state(&inst, RiskMode::Full, 3);
        for t in 1..60 {
            step_in_place(&mut st, &inst.spectrum, &hp, &fm, noise, t >= 3);
            assert!(st.min_relative_eigenvalue() >= -1e-10);
            assert_relative_eq!(st.coupling, st.recompute_coupling(&inst.spectrum), max_relative = 1e-12);
        }
    }

    #[test]
    fn onehot_probabilities_validated() {
        let (inst, hp) = small_instance(0.1);
        let bad = FourthMomentModel::OneHot(vec![0.5; 6]);
        assert!(exact_risk(&inst, &hp, &bad, 1, 2, RiskMode::Full).is_err());
    }

    #[test]
    fn stationary_small() {
        let (inst, hp) = small_instance(0.0);
        let rep = stationary_check(&inst, &hp, &FourthMomentModel::GaussianExact).unwrap();
        assert!(rep.converged && rep.value == 0.0);
        let (inst, hp) = small_instance(0.5);
        let rep = stationary_check(&inst, &hp, &FourthMomentModel::GaussianExact).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert_relative_eq!(rep.iterate_value, rep.value, max_relative = 1e-9);
    }

    #[test]
    fn stationary_one_hot_and_mean_field() {
        let (inst, hp) = small_instance(0.3);
        for fm in [FourthMomentModel::one_hot_default(&inst.spectrum), FourthMomentModel::MeanFieldOnly] {
            let rep = stationary_check(&inst, &hp, &fm).unwrap();
            assert!(rep.converged && rep.monotone, "{rep:?}");
            assert_relative_eq!(rep.iterate_value, rep.value, max_relative = 1e-9);
        }
    }
}
