//! Streaming ASGD runs with tail averaging, coupled bias/variance paths
//! and seeded Monte Carlo estimates.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::hyper::HyperParams;
use crate::spectrum::ProblemInstance;
use crate::sum::{self, CompensatedSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignKind {
    /// `x_i = √λ_i z_i` with `z` standard normal.
    Gaussian,
    /// `x = √(λ_I/p_I) e_I` with `I ~ p`.
    OneHot(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DataModel {
    pub kind: DesignKind,
    pub instance: ProblemInstance,
    sqrt_lambda: Vec<f64>,
    noise_sd: f64,
    onehot: Option<(WeightedIndex<f64>, Vec<f64>)>,
}

impl DataModel {
    pub fn new(kind: DesignKind, instance: ProblemInstance) -> Result<Self> {
        let lam = instance.spectrum.eigenvalues();
        let onehot = match &kind {
            DesignKind::Gaussian => None,
            DesignKind::OneHot(p) => {
                if p.len() != lam.len() {
                    return Err(Error::DimensionMismatch { expected: lam.len(), got: p.len() });
                }
                if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(validation("one-hot probabilities must be positive"));
                }
                let total = sum::sum(p.iter().copied());
                if (total - 1.0).abs() > 1e-9 {
                    return Err(validation(format!("one-hot probabilities sum to {total}, not 1")));
                }
                let idx = WeightedIndex::new(p).map_err(|e| validation(e.to_string()))?;
                let scale = lam.iter().zip(p).map(|(l, p)| (l / p).sqrt()).collect();
                Some((idx, scale))
            }
        };
        Ok(Self {
            sqrt_lambda: lam.iter().map(|l| l.sqrt()).collect(),
            noise_sd: instance.noise_variance.sqrt(),
            kind,
            instance,
            onehot,
        })
    }

    pub fn gaussian(instance: ProblemInstance) -> Self {
        Self::new(DesignKind::Gaussian, instance).expect("gaussian design has no extra constraints")
    }

    /// One-hot design with `p_i = λ_i / tr(H)`.
    pub fn one_hot_default(instance: ProblemInstance) -> Result<Self> {
        let tr = instance.spectrum.trace();
        let p = instance.spectrum.eigenvalues().iter().map(|l| l / tr).collect();
        Self::new(DesignKind::OneHot(p), instance)
    }

    pub fn dim(&self) -> usize {
        self.instance.dim()
    }

    /// Fills `x` with a fresh design vector and returns the label noise `ε`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) -> f64 {
        match &self.onehot {
            None => {
                for (xi, s) in x.iter_mut().zip(&self.sqrt_lambda) {
                    let z: f64 = StandardNormal.sample(rng);
                    *xi = s * z;
                }
            }
            Some((idx, scale)) => {
                x.fill(0.0);
                let i = idx.sample(rng);
                x[i] = scale[i];
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.noise_sd * z
    }

    /// A sample `(x, y)` with `y = ⟨w*, x⟩ + ε`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let mut x = vec![0.0; self.dim()];
        let eps = self.sample_into(rng, &mut x);
        let y = dot(&self.instance.w_star, &x) + eps;
        (x, y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic generator for repetition `rep` of a run seeded by `seed`.
pub fn rng_stream(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    /// Index `t` of the current iterate `w_t`.
    pub step_index: usize,
    tail: Vec<CompensatedSum>,
    pub tail_count: usize,
}

impl RunState {
    pub fn new(w0: &[f64]) -> Self {
        Self { w: w0.to_vec(), v: w0.to_vec(), step_index: 0, tail: vec![CompensatedSum::new(); w0.len()], tail_count: 0 }
    }

    fn accumulate(&mut self) {
        for (acc, &w) in self.tail.iter_mut().zip(&self.w) {
            acc.add(w);
        }
        self.tail_count += 1;
    }

    /// Adds `w_t` to the tail sum when `t ∈ [s, s+N)`.
    pub fn accumulate_if_in_window(&mut self, s: usize, n: usize) {
        if self.step_index >= s && self.step_index < s + n {
            self.accumulate();
        }
    }

    /// Mean of the accumulated iterates.
    pub fn tail_average(&self) -> Vec<f64> {
        let k = self.tail_count.max(1) as f64;
        self.tail.iter().map(|a| a.value() / k).collect()
    }
}

/// One ASGD iteration on the sample `(x, y)`:
/// `u = αw + (1−α)v`, `g = −(y − ⟨u,x⟩)x`, `w' = u − δg`,
/// `v' = βu + (1−β)v − γg`.
pub fn asgd_step(state: &mut RunState, hp: &HyperParams, x: &[f64], y: f64) {
    let HyperParams { alpha, beta, gamma, delta, .. } = *hp;
    let mut resid = y;
    for ((w, v), xi) in state.w.iter_mut().zip(&state.v).zip(x) {
        // Stash u in w; w' is formed from u below.
        *w = alpha * *w + (1.0 - alpha) * v;
        resid -= *w * xi;
    }
    let (rd, rg) = (delta * resid, gamma * resid);
    for ((w, v), xi) in state.w.iter_mut().zip(state.v.iter_mut()).zip(x) {
        let u = *w;
        *w = u + rd * xi;
        *v = (beta * u + (1.0 - beta) * *v) + rg * xi;
    }
    state.step_index += 1;
}

/// Excess risk of a single path and, for coupled runs, its split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRisk {
    pub excess_risk: f64,
    pub decomposition: Option<PathDecomposition>,
    pub seed: (u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDecomposition {
    pub bias_part: f64,
    pub variance_part: f64,
    /// `excess_risk − bias_part − variance_part`.
    pub cross_part: f64,
    /// `max_i |(w̄_full − w*) − (w̄_bias − w*) − (w̄_var − w*)|`.
    pub additivity_residual: f64,
}

fn check_window(n: usize) -> Result<()> {
    if n == 0 {
        return Err(validation("N must be at least 1"));
    }
    Ok(())
}

/// Runs `s + N − 1` iterations from `w0 = v0` and returns the tail average
/// `N⁻¹ Σ_{t=s}^{s+N−1} w_t` and its excess risk.
pub fn run_tail_averaged<R: Rng + ?Sized>(
    model: &DataModel,
    hp: &HyperParams,
    s: usize,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    check_window(n)?;
    let inst = &model.instance;
    let mut st = RunState::new(&inst.w0);
    let mut x = vec![0.0; model.dim()];
    st.accumulate_if_in_window(s, n);
    for _ in 1..s + n {
        let eps = model.sample_into(rng, &mut x);
        let y = dot(&inst.w_star, &x) + eps;
        asgd_step(&mut st, hp, &x, y);
        st.accumulate_if_in_window(s, n);
    }
    let w_bar = st.tail_average();
    let risk = inst.excess_risk(&w_bar);
    Ok((w_bar, risk))
}

/// Full, noise-free and started-at-optimum paths driven by one shared
/// sample stream.
pub fn run_decomposed<R: Rng + ?Sized>(
    model: &DataModel,
    hp: &HyperParams,
    s: usize,
    n: usize,
    rng: &mut R,
) -> Result<(f64, PathDecomposition)> {
    check_window(n)?;
    let inst = &model.instance;
    let mut full = RunState::new(&inst.w0);
    let mut bias = RunState::new(&inst.w0);
    let mut var = RunState::new(&inst.w_star);
    let mut x = vec![0.0; model.dim()];
    for st in [&mut full, &mut bias, &mut var] {
        st.accumulate_if_in_window(s, n);
    }
    for _ in 1..s + n {
        let eps = model.sample_into(rng, &mut x);
        let clean = dot(&inst.w_star, &x);
        asgd_step(&mut full, hp, &x, clean + eps);
        asgd_step(&mut bias, hp, &x, clean);
        asgd_step(&mut var, hp, &x, clean + eps);
        for st in [&mut full, &mut bias, &mut var] {
            st.accumulate_if_in_window(s, n);
        }
    }
    let (wf, wb, wv) = (full.tail_average(), bias.tail_average(), var.tail_average());
    let residual = (0..model.dim())
        .map(|i| {
            let ws = inst.w_star[i];
            ((wf[i] - ws) - (wb[i] - ws) - (wv[i] - ws)).abs()
        })
        .fold(0.0, f64::max);
    let total = inst.excess_risk(&wf);
    let bias_part = inst.excess_risk(&wb);
    let variance_part = inst.excess_risk(&wv);
    Ok((
        total,
        PathDecomposition { bias_part, variance_part, cross_part: total - bias_part - variance_part, additivity_residual: residual },
    ))
}

/// Path risk of repetition `rep`.
pub fn path_risk(model: &DataModel, hp: &HyperParams, s: usize, n: usize, seed: u64, rep: u64, decomposed: bool) -> Result<PathRisk> {
    let mut rng = rng_stream(seed, rep);
    if decomposed {
        let (total, dec) = run_decomposed(model, hp, s, n, &mut rng)?;
        Ok(PathRisk { excess_risk: total, decomposition: Some(dec), seed: (seed, rep) })
    } else {
        let (_, total) = run_tail_averaged(model, hp, s, n, &mut rng)?;
        Ok(PathRisk { excess_risk: total, decomposition: None, seed: (seed, rep) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    /// Sample standard error; 0 when fewer than two repetitions.
    pub stderr: f64,
    pub stderr_defined: bool,
    pub per_rep: Vec<f64>,
}

impl McSummary {
    pub fn from_values(per_rep: Vec<f64>) -> Self {
        let k = per_rep.len() as f64;
        let mean = sum::sum(per_rep.iter().copied()) / k;
        if per_rep.len() < 2 {
            return Self { mean, stderr: 0.0, stderr_defined: false, per_rep };
        }
        let var = sum::sum(per_rep.iter().map(|x| (x - mean) * (x - mean))) / (k - 1.0);
        Self { mean, stderr: (var / k).sqrt(), stderr_defined: true, per_rep }
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(validation("reps must be at least 1"));
    }
    Ok(())
}

/// Mean excess risk over `reps` independent streams `(base_seed, rep)`.
pub fn monte_carlo(model: &DataModel, hp: &HyperParams, s: usize, n: usize, reps: usize, base_seed: u64) -> Result<McSummary> {
    check_reps(reps)?;
    let values = (0..reps as u64)
        .into_par_iter()
        .map(|rep| path_risk(model, hp, s, n, base_seed, rep, false).map(|p| p.excess_risk))
        .collect::<Result<Vec<_>>>()?;
    Ok(McSummary::from_values(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDecomposed {
    pub full: McSummary,
    pub bias: McSummary,
    pub variance: McSummary,
    pub max_additivity_residual: f64,
}

/// Monte Carlo over coupled full/bias/variance paths.
pub fn monte_carlo_decomposed(
    model: &DataModel,
    hp: &HyperParams,
    s: usize,
    n: usize,
    reps: usize,
    base_seed: u64,
) -> Result<McDecomposed> {
    check_reps(reps)?;
    let runs = (0..reps as u64)
        .into_par_iter()
        .map(|rep| path_risk(model, hp, s, n, base_seed, rep, true))
        .collect::<Result<Vec<_>>>()?;
    let decs: Vec<PathDecomposition> = runs.iter().map(|r| r.decomposition.expect("decomposed run")).collect();
    Ok(McDecomposed {
        full: McSummary::from_values(runs.iter().map(|r| r.excess_risk).collect()),
        bias: McSummary::from_values(decs.iter().map(|d| d.bias_part).collect()),
        variance: McSummary::from_values(decs.iter().map(|d| d.variance_part).collect()),
        max_additivity_residual: decs.iter().map(|d| d.additivity_residual).fold(0.0, f64::max),
    })
}
