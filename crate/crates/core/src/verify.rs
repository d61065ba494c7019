//! Randomized property suites behind `asgd verify`.
//!
//! Each suite draws its cases from a seeded stream, so a failure is
//! reproduced by its [`Replay`] record alone.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockdyn::{eigenpair, partial_sum_direct, partial_sum_vec, power_closed, BlockRegime, SumVector};
use crate::bounds::{asgd_bound, shb_bound, Variant};
use crate::error::Result;
use crate::hyper::{thresholds, HyperParams};
use crate::oracle::{self, dense::DenseOracle, FourthMomentModel, RiskMode};
use crate::presets::paper_instance;
use crate::simulate::{monte_carlo_decomposed, DataModel};
use crate::spectrum::{ProblemInstance, Spectrum, SpectrumKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Fast,
    Full,
}

/// Deliberate defects used to confirm the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Scales every bound total down by 100.
    BoundCoefficient,
    /// Perturbs one entry of the closed-form matrix power.
    PowerCoefficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub level: Level,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl VerifyOptions {
    pub fn new(level: Level, seed: u64) -> Self {
        Self { level, seed, fault: None }
    }
}

/// Everything needed to rebuild a failing case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub suite: String,
    pub seed: u64,
    pub case: usize,
    pub eigenvalues: Vec<f64>,
    pub w_star: Vec<f64>,
    pub w0: Vec<f64>,
    pub noise_variance: f64,
    pub hp: Option<HyperParams>,
    pub lambda: Option<f64>,
    pub s: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub message: String,
    pub replay: Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: Vec<Failure>,
    pub elapsed_ms: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }
}

struct Suite {
    name: &'static str,
    seed: u64,
    cases: usize,
    failures: Vec<Failure>,
    started: Instant,
}

impl Suite {
    fn new(name: &'static str, seed: u64) -> Self {
        Self { name, seed, cases: 0, failures: Vec::new(), started: Instant::now() }
    }

    fn replay(&self, inst: Option<&ProblemInstance>, sp: Option<&Spectrum>) -> Replay {
        let eigenvalues = inst.map(|i| i.spectrum.eigenvalues()).or(sp.map(|s| s.eigenvalues())).unwrap_or(&[]).to_vec();
        Replay {
            suite: self.name.to_string(),
            seed: self.seed,
            case: self.cases,
            eigenvalues,
            w_star: inst.map(|i| i.w_star.clone()).unwrap_or_default(),
            w0: inst.map(|i| i.w0.clone()).unwrap_or_default(),
            noise_variance: inst.map_or(0.0, |i| i.noise_variance),
            hp: None,
            lambda: None,
            s: None,
            n: None,
        }
    }

    fn check(&mut self, ok: bool, message: impl FnOnce() -> String, replay: impl FnOnce(&Self) -> Replay) {
        if !ok && self.failures.len() < 20 {
            let replay = replay(self);
            self.failures.push(Failure { message: message(), replay });
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            cases: self.cases,
            failures: self.failures,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
        }
    }
}

/// Random descending spectrum with `1 ≤ d ≤ d_max`.
pub fn random_spectrum<R: Rng + ?Sized>(rng: &mut R, d_max: usize) -> Spectrum {
    let d = rng.random_range(1..=d_max);
    let scale: f64 = rng.random_range(0.1..2.0);
    let mut eig: Vec<f64> = match rng.random_range(0..3) {
        0 => {
            let p: f64 = rng.random_range(1.1..3.0);
            (1..=d).map(|i| scale * (i as f64).powf(-p)).collect()
        }
        1 => {
            let rate: f64 = rng.random_range(0.05..1.0);
            (1..=d).map(|i| scale * (-rate * i as f64).exp()).collect()
        }
        _ => (0..d).map(|_| scale * 10f64.powf(rng.random_range(-4.0..0.0))).collect(),
    };
    eig.sort_by(|a, b| b.total_cmp(a));
    Spectrum::from_eigenvalues(eig).expect("generated spectrum is valid")
}

/// Random parameters satisfying the overparameterized choice, with
/// `β ≥ 1e-3` so that `1 − c` stays well away from rounding.
pub fn random_overparam<R: Rng + ?Sized>(rng: &mut R, sp: &Spectrum, psi: f64) -> Result<HyperParams> {
    let delta = rng.random_range(0.05..=1.0) / (2.0 * psi * sp.trace());
    let kappa_tilde = rng.random_range(1..=sp.dim());
    let tail = sp.tail_sum_saturating(kappa_tilde);
    let gmax_feasible = if tail > 0.0 { 1.0 / (2.0 * psi * tail) } else { f64::INFINITY };
    let gmax_beta = delta / (psi * kappa_tilde as f64 * 1e-3);
    let gmax = gmax_feasible.min(gmax_beta).min(1e3 * delta).max(delta);
    let gamma = delta + rng.random_range(0.0..=1.0) * (gmax - delta);
    HyperParams::derive_overparam(delta, gamma, kappa_tilde, psi, sp)
}

fn random_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn rel_close(a: f64, b: f64, tol: f64, scale: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(scale)
}

fn with_hp(mut r: Replay, hp: &HyperParams) -> Replay {
    r.hp = Some(*hp);
    r
}

/// Lemma-level identities for `(c, q)` and the block eigenvalues.
///
/// The eigenvalue identities expand into sums of products of `x1 + x2` and
/// `x1 x2`, so their error is measured against the magnitude of those
/// expansion terms.
pub fn qc_veda(cases: usize, seed: u64) -> SuiteResult {
    let mut suite = Suite::new("qc_veda", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while suite.cases < cases {
        let sp = random_spectrum(&mut rng, 50);
        let psi = rng.random_range(1.0..4.0);
        let Ok(hp) = random_overparam(&mut rng, &sp, psi) else { continue };
        let HyperParams { alpha, beta, gamma, delta, c, q, .. } = hp;
        let tol = 1e-12;
        let gt = hp.gamma_tilde();
        let q_minus_delta_ratio = (q - delta) / (1.0 - c);
        let checks = [
            ("c = 2alpha - 1", rel_close(c, 2.0 * alpha - 1.0, tol, 1.0)),
            ("beta <= 1 - c <= 2 beta", beta <= (1.0 - c) * (1.0 + tol) && 1.0 - c <= 2.0 * beta * (1.0 + tol)),
            ("delta <= q <= (1+c) delta", delta <= q * (1.0 + tol) && q <= (1.0 + c) * delta * (1.0 + tol)),
            ("q - delta <= c(q - c delta)", q - delta <= c * (q - c * delta) + tol * q),
            ("(q - c delta)/(1 - c) = (gamma + delta)/2", rel_close(gt, (gamma + delta) / 2.0, tol, 0.0)),
            // q − δ cancels when γ ≈ δ; its rounding error scales with q/(1−c).
            ("(q - delta)/(1 - c) = (gamma - delta)/2", rel_close(q_minus_delta_ratio, (gamma - delta) / 2.0, tol, q / (1.0 - c))),
            ("delta <= gamma_tilde <= gamma", delta <= gt * (1.0 + tol) && gt <= gamma * (1.0 + tol)),
        ];
        let lam = sp.lambda(rng.random_range(1..=sp.dim()));
        let ep = eigenpair(lam, &hp);
        let (x1, x2) = (ep.x1, ep.x2);
        let one = Complex64::new(1.0, 0.0);
        let sum = (1.0 + c - q * lam).abs();
        let prod = (c * (1.0 - delta * lam)).abs();
        let veda = [
            ("(1-x1)(1-x2) = (q - c delta) lambda", (one - x1) * (one - x2), (q - c * delta) * lam, 1.0 + sum + prod),
            ("(c-x1)(c-x2) = c(q - delta) lambda", (c - x1) * (c - x2), c * (q - delta) * lam, c * c + c * sum + prod),
            ("(1+x1)(1+x2) = 2(1+c) - (q + c delta) lambda", (one + x1) * (one + x2), 2.0 * (1.0 + c) - (q + c * delta) * lam, 1.0 + sum + prod),
            (
                "(c delta - q x1)(c delta - q x2) = c(q - delta)(q - c delta)",
                (c * delta - q * x1) * (c * delta - q * x2),
                c * (q - delta) * (q - c * delta),
                (c * delta).powi(2) + c * delta * q * sum + q * q * prod,
            ),
        ];
        for (name, ok) in checks {
            suite.check(ok, || format!("{name} fails"), |s| with_hp(s.replay(None, Some(&sp)), &hp));
        }
        for (name, lhs, rhs, scale) in veda {
            let ok = (lhs.re - rhs).abs() <= tol * scale && lhs.im.abs() <= tol * scale;
            suite.check(
                ok,
                || format!("{name}: lhs {lhs}, rhs {rhs}"),
                |s| Replay { lambda: Some(lam), ..with_hp(s.replay(None, Some(&sp)), &hp) },
            );
        }
        suite.cases += 1;
    }
    suite.finish()
}

/// Root-location brackets per regime and the complex-regime modulus.
pub fn spectral_brackets(cases: usize, seed: u64) -> SuiteResult {
    let mut suite = Suite::new("spectral_brackets", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = [false; 3];
    while suite.cases < cases {
        let sp = random_spectrum(&mut rng, 20);
        let Ok(hp) = random_overparam(&mut rng, &sp, 3.0) else { continue };
        let HyperParams { c, q, delta, gamma, .. } = hp;
        let t = thresholds(&hp, 1, delta);
        // Cycle through the three regimes; the large-λ one needs λ ≥ t‡,
        // possibly beyond the spectrum, and δλ < 1.
        let target = suite.cases % 3;
        let lam = match target {
            0 if t.ddagger < 1.0 / delta => t.ddagger + rng.random_range(0.0..1.0) * (1.0 / delta - t.ddagger),
            1 if t.dagger < t.ddagger => t.dagger + rng.random_range(0.01..0.99) * (t.ddagger - t.dagger),
            _ => t.dagger * rng.random_range(0.0..1.0),
        };
        if !(lam > 0.0) {
            continue;
        }
        let ep = eigenpair(lam, &hp);
        let x2 = ep.x2;
        let tol = 1e-12;
        let (ok, what) = match ep.regime {
            BlockRegime::RealLarge => {
                seen[0] = true;
                let lo = (c * delta - (c * (q - delta) * (q - c * delta)).sqrt()) / q;
                let hi = c * delta / q;
                (x2.re >= lo - tol && x2.re <= hi + tol, format!("x2 = {} outside [{lo}, {hi}]", x2.re))
            }
            BlockRegime::Complex => {
                seen[1] = true;
                let m = (c * (1.0 - delta * lam)).sqrt();
                ((x2.norm() - m).abs() <= tol * m && (ep.x1.norm() - m).abs() <= tol * m, format!("|x2| = {} vs {m}", x2.norm()))
            }
            BlockRegime::RealSmall => {
                seen[2] = true;
                let a = (q - c * delta).sqrt();
                let b = (c * (q - delta)).max(0.0).sqrt();
                let sharp = 1.0 - a * (a + b) / (1.0 - c) * lam;
                let lo = 1.0 - (gamma + delta) * lam;
                let hi = 1.0 - (gamma + delta) / 2.0 * lam;
                let slack = tol * (1.0 + lam * (gamma + delta) / (1.0 - c));
                (
                    x2.re >= sharp - slack && sharp >= lo - slack && x2.re <= hi + slack,
                    format!("x2 = {} outside [{lo}, {hi}] (sharp lower {sharp})", x2.re),
                )
            }
        };
        suite.check(ok, || what, |s| Replay { lambda: Some(lam), ..with_hp(s.replay(None, Some(&sp)), &hp) });
        suite.check(x2.norm() < 1.0, || format!("|x2| = {} is not below 1", x2.norm()), |s| Replay {
            lambda: Some(lam),
            ..with_hp(s.replay(None, Some(&sp)), &hp)
        });
        suite.cases += 1;
    }
    suite.check(seen.iter().all(|&b| b), || format!("regimes visited {seen:?}"), |s| s.replay(None, None));
    suite.finish()
}

/// Closed-form powers against repeated multiplication for `k ≤ 200`.
pub fn closed_powers(pairs: usize, seed: u64, fault: Option<Fault>) -> SuiteResult {
    let mut suite = Suite::new("closed_powers", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while suite.cases < pairs {
        let sp = random_spectrum(&mut rng, 20);
        let Ok(hp) = random_overparam(&mut rng, &sp, 3.0) else { continue };
        let lam = sp.lambda(rng.random_range(1..=sp.dim()));
        let mut worst = 0.0f64;
        let mut prod = [[1.0, 0.0], [0.0, 1.0]];
        let blk = crate::blockdyn::block(lam, &hp).m;
        for k in 1..=200 {
            prod = crate::blockdyn::mat_mul(&prod, &blk);
            let mut closed = power_closed(lam, &hp, k).unwrap_or([[f64::NAN; 2]; 2]);
            if fault == Some(Fault::PowerCoefficient) {
                closed[0][1] *= 1.0 + 1e-3;
            }
            for r in 0..2 {
                for col in 0..2 {
                    let e = (closed[r][col] - prod[r][col]).abs();
                    worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
                }
            }
        }
        suite.check(worst <= 1e-9, || format!("max |closed - product| = {worst:e}"), |s| Replay {
            lambda: Some(lam),
            ..with_hp(s.replay(None, Some(&sp)), &hp)
        });
        suite.cases += 1;
    }
    suite.finish()
}

/// Closed-form geometric partial sums against direct summation.
pub fn partial_sums(cases: usize, seed: u64) -> SuiteResult {
    let mut suite = Suite::new("partial_sums", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while suite.cases < cases {
        let sp = random_spectrum(&mut rng, 20);
        let Ok(hp) = random_overparam(&mut rng, &sp, 3.0) else { continue };
        let lam = sp.lambda(rng.random_range(1..=sp.dim()));
        let j = rng.random_range(0..50);
        let t = rng.random_range(1..100);
        for v in [SumVector::DeltaQ, SumVector::Ones] {
            let closed = partial_sum_vec(lam, &hp, j, t, v);
            let direct = partial_sum_direct(lam, &hp, j, t, v);
            let scale = direct[0].abs().max(direct[1].abs()).max(1.0);
            let ok = closed.as_ref().is_ok_and(|c| (0..2).all(|i| (c[i] - direct[i]).abs() <= 1e-10 * scale));
            suite.check(ok, || format!("{v:?} j={j} t={t}: closed {closed:?} vs direct {direct:?}"), |s| Replay {
                lambda: Some(lam),
                ..with_hp(s.replay(None, Some(&sp)), &hp)
            });
        }
        // Oracle-free check of the δ,q sum's sign and envelope in the
        // small-λ regime.
        if eigenpair(lam, &hp).regime == BlockRegime::RealSmall {
            if let Ok(v) = partial_sum_vec(lam, &hp, j, t, SumVector::DeltaQ) {
                let env = 3.0 / lam * (1.0 - (1.0 - 2.0 * hp.gamma_tilde() * lam).powi(t as i32)).abs();
                suite.check(v[0] >= -1e-12 && v[0] <= env * (1.0 + 1e-9) + 1e-12, || format!("delta-q sum {} outside [0, {env}]", v[0]), |s| Replay {
                    lambda: Some(lam),
                    ..with_hp(s.replay(None, Some(&sp)), &hp)
                });
            }
        }
        suite.cases += 1;
    }
    suite.finish()
}

pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, d_max: usize, psi: f64) -> Option<(ProblemInstance, HyperParams)> {
    let sp = random_spectrum(rng, d_max);
    let hp = random_overparam(rng, &sp, psi).ok()?;
    let d = sp.dim();
    let w_star = random_vector(rng, d);
    let w0 = random_vector(rng, d);
    let sigma2 = rng.random_range(0.0..0.5);
    Some((ProblemInstance::new(sp, w_star, w0, sigma2, psi).ok()?, hp))
}

/// Diagonal second-moment recursion against the dense `3d × 3d` reference.
pub fn dense_oracle(cases: usize, steps: usize, seed: u64) -> SuiteResult {
    let mut suite = Suite::new("dense_oracle", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while suite.cases < cases {
        let Some((inst, hp)) = random_instance(&mut rng, 8, 3.0) else { continue };
        let s = rng.random_range(0..steps);
        let n = steps - s;
        for fm in [FourthMomentModel::GaussianExact, FourthMomentModel::one_hot_default(&inst.spectrum)] {
            let dense = match DenseOracle::new(&inst, &hp, &fm) {
                Ok(d) => d,
                Err(_) => continue,
            };
            for mode in [RiskMode::Full, RiskMode::Bias, RiskMode::Variance] {
                let a = dense.exact_risk(s, n, mode);
                let b = oracle::exact_risk(&inst, &hp, &fm, s, n, mode);
                let ok = matches!((&a, &b), (Ok(a), Ok(b)) if rel_close(*a, *b, 1e-10, 1e-300));
                suite.check(ok, || format!("{fm:?} {mode:?}: dense {a:?} vs diagonal {b:?}"), |r| Replay {
                    s: Some(s),
                    n: Some(n),
                    ..with_hp(r.replay(Some(&inst), None), &hp)
                });
            }
        }
        suite.cases += 1;
    }
    suite.finish()
}

/// Full = Bias + Variance for the oracle, and path-wise additivity of the
/// coupled simulation.
pub fn bias_variance_identity(cases: usize, seed: u64) -> SuiteResult {
    let mut suite = Suite::new("bias_variance", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while suite.cases < cases {
        let Some((inst, hp)) = random_instance(&mut rng, 30, 3.0) else { continue };
        let s = rng.random_range(0..100);
        let n = rng.random_range(1..100);
        let fm = FourthMomentModel::GaussianExact;
        match oracle::risk_breakdown(&inst, &hp, &fm, s, n) {
            Ok(rb) => suite.check(rel_close(rb.total, rb.bias + rb.variance, 1e-10, 1e-300), || format!("oracle {rb:?}"), |r| Replay {
                s: Some(s),
                n: Some(n),
                ..with_hp(r.replay(Some(&inst), None), &hp)
            }),
            Err(e) => suite.check(false, || e.to_string(), |r| r.replay(Some(&inst), None)),
        }
        let model = DataModel::gaussian(inst.clone());
        match monte_carlo_decomposed(&model, &hp, s, n, 2, seed ^ suite.cases as u64) {
            Ok(mc) => suite.check(mc.max_additivity_residual <= 1e-10, || format!("path additivity residual {:e}", mc.max_additivity_residual), |r| Replay {
                s: Some(s),
                n: Some(n),
                ..with_hp(r.replay(Some(&inst), None), &hp)
            }),
            Err(e) => suite.check(false, || e.to_string(), |r| r.replay(Some(&inst), None)),
        }
        suite.cases += 1;
    }
    suite.finish()
}

/// Window lengths with `N(1−c) ≥ 2`, capped to keep runs short.
fn random_window<R: Rng + ?Sized>(rng: &mut R, hp: &HyperParams, cap: usize) -> Option<(usize, usize)> {
    let n_min = (2.0 / (1.0 - hp.c)).ceil() as usize;
    if n_min > cap {
        return None;
    }
    let n = rng.random_range(n_min..=cap.max(n_min));
    let s = rng.random_range(0..=n);
    Some((s, n))
}

/// Bound components dominate the Gaussian oracle: `2·EB ≥ bias`,
/// `2·EV ≥ variance` and `total ≥ risk`.
pub fn bound_dominance(cases: usize, seed: u64, fault: Option<Fault>) -> SuiteResult {
    let mut suite = Suite::new("bound_dominance", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if fault == Some(Fault::BoundCoefficient) { 0.01 } else { 1.0 };
    while suite.cases < cases {
        let Some((inst, hp)) = random_instance(&mut rng, 50, 3.0) else { continue };
        let Some((s, n)) = random_window(&mut rng, &hp, 600) else { continue };
        let fm = FourthMomentModel::GaussianExact;
        for variant in [Variant::Main, Variant::Appendix] {
            let (Ok(b), Ok(rb)) = (asgd_bound(&inst, &hp, s, n, variant), oracle::risk_breakdown(&inst, &hp, &fm, s, n)) else {
                suite.check(false, || "bound or oracle evaluation failed".into(), |r| r.replay(Some(&inst), None));
                continue;
            };
            let replay = |r: &Suite| Replay { s: Some(s), n: Some(n), ..with_hp(r.replay(Some(&inst), None), &hp) };
            suite.check(scale * b.total >= rb.total, || format!("{variant:?}: total bound {} < risk {}", scale * b.total, rb.total), replay);
            suite.check(scale * 2.0 * b.effective_bias >= rb.bias, || format!("{variant:?}: 2 EB {} < bias {}", scale * 2.0 * b.effective_bias, rb.bias), replay);
            suite.check(
                scale * 2.0 * b.effective_variance >= rb.variance,
                || format!("{variant:?}: 2 EV {} < variance {}", scale * 2.0 * b.effective_variance, rb.variance),
                replay,
            );
        }
        suite.cases += 1;
    }
    suite.finish()
}

/// Heavy-ball bound is finite and dominates the heavy-ball oracle risk.
pub fn shb_dominance(cases: usize, seed: u64, fault: Option<Fault>) -> SuiteResult {
    let mut suite = Suite::new("shb_dominance", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if fault == Some(Fault::BoundCoefficient) { 0.01 } else { 1.0 };
    while suite.cases < cases {
        let sp = random_spectrum(&mut rng, 20);
        let n = rng.random_range(20..300);
        let c = rng.random_range(0.01..=(1.0 - 2.0 / n as f64));
        let gamma = rng.random_range(0.05..0.95) * 4.0 / (3.0 * sp.trace());
        let Ok(hp) = HyperParams::derive_shb(c, gamma, &sp, 3.0, n) else { continue };
        let d = sp.dim();
        let Ok(inst) = ProblemInstance::new(sp, random_vector(&mut rng, d), random_vector(&mut rng, d), rng.random_range(0.0..0.5), 3.0) else {
            continue;
        };
        let s = rng.random_range(0..=n);
        let replay = |r: &Suite| Replay { s: Some(s), n: Some(n), ..with_hp(r.replay(Some(&inst), None), &hp) };
        match (shb_bound(&inst, &hp, s, n), oracle::exact_risk(&inst, &hp, &FourthMomentModel::GaussianExact, s, n, RiskMode::Full)) {
            (Ok(b), Ok(risk)) => suite.check(
                b.total.is_finite() && scale * b.total >= risk,
                || format!("bound {} vs risk {risk}", scale * b.total),
                replay,
            ),
            (b, r) => suite.check(false, || format!("evaluation failed: {:?} / {:?}", b.err(), r.err()), replay),
        }
        suite.cases += 1;
    }
    suite.finish()
}

/// Monte Carlo mean within four standard errors of the oracle, for ASGD
/// and SGD in every mode, on the truncated published instance.
pub fn mc_vs_oracle(d: usize, s: usize, n: usize, reps: usize, seed: u64) -> SuiteResult {
    let mut suite = Suite::new("mc_vs_oracle", seed);
    let (inst, asgd) = match paper_instance(d, d.min(20)) {
        Ok(x) => x,
        Err(e) => {
            suite.check(false, || e.to_string(), |r| r.replay(None, None));
            return suite.finish();
        }
    };
    let sgd = HyperParams::sgd(0.1, 3.0).expect("valid SGD step");
    let fm = FourthMomentModel::GaussianExact;
    let model = DataModel::gaussian(inst.clone());
    for (name, hp) in [("asgd", asgd), ("sgd", sgd)] {
        let mc = monte_carlo_decomposed(&model, &hp, s, n, reps, seed);
        let Ok(mc) = mc else {
            suite.check(false, || format!("{name}: simulation failed"), |r| r.replay(Some(&inst), None));
            continue;
        };
        for (mode, summary) in [(RiskMode::Full, &mc.full), (RiskMode::Bias, &mc.bias), (RiskMode::Variance, &mc.variance)] {
            let exact = oracle::exact_risk(&inst, &hp, &fm, s, n, mode).unwrap_or(f64::NAN);
            let gap = (summary.mean - exact).abs();
            suite.check(gap <= 4.0 * summary.stderr, || {
                format!("{name} {mode:?}: MC {} ± {} vs oracle {exact}", summary.mean, summary.stderr)
            }, |r| Replay { s: Some(s), n: Some(n), ..with_hp(r.replay(Some(&inst), None), &hp) });
            suite.cases += 1;
        }
    }
    suite.finish()
}

/// Figure-2 orderings on the full published instance with the oracle.
pub fn paper_orderings(seed: u64) -> SuiteResult {
    let mut suite = Suite::new("paper_orderings", seed);
    let sgd = HyperParams::sgd(0.1, 3.0).expect("valid SGD step");
    let fm = FourthMomentModel::GaussianExact;
    for index in [1usize, 2, 20] {
        let Ok((inst, asgd)) = paper_instance(2000, index) else { continue };
        let a = oracle::exact_risk(&inst, &asgd, &fm, 500, 500, RiskMode::Full).unwrap_or(f64::NAN);
        let b = oracle::exact_risk(&inst, &sgd, &fm, 500, 500, RiskMode::Full).unwrap_or(f64::NAN);
        let ok = match index {
            1 => a > b,
            2 => a / b <= 2.0 && b / a <= 2.0,
            _ => a < b,
        };
        suite.check(ok, || format!("w0 = 10 e_{index}: ASGD {a} vs SGD {b}"), |r| Replay {
            s: Some(500),
            n: Some(500),
            ..r.replay(Some(&inst), None)
        });
        suite.cases += 1;
    }
    suite.finish()
}

/// Runs every suite for the level, in a fixed order.
pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteResult> {
    let seed = opts.seed;
    let full = opts.level == Level::Full;
    let pick = |fast: usize, full_n: usize| if full { full_n } else { fast };
    let mut out = vec![
        qc_veda(pick(2000, 10_000), seed),
        spectral_brackets(pick(2000, 10_000), seed.wrapping_add(1)),
        closed_powers(pick(100, 500), seed.wrapping_add(2), opts.fault),
        partial_sums(pick(200, 1000), seed.wrapping_add(3)),
        dense_oracle(pick(5, 20), 200, seed.wrapping_add(4)),
        bias_variance_identity(pick(10, 40), seed.wrapping_add(5)),
        bound_dominance(pick(20, 60), seed.wrapping_add(6), opts.fault),
        shb_dominance(pick(10, 20), seed.wrapping_add(7), opts.fault),
    ];
    if full {
        out.push(mc_vs_oracle(100, 200, 200, 2000, seed.wrapping_add(8)));
        out.push(paper_orderings(seed.wrapping_add(9)));
    } else {
        out.push(mc_vs_oracle(20, 50, 50, 400, seed.wrapping_add(8)));
    }
    out
}

/// Rebuilds the instance stored in a replay record.
pub fn replay_instance(r: &Replay) -> Result<ProblemInstance> {
    let sp = Spectrum::new(&SpectrumKind::Custom(r.eigenvalues.clone()), r.eigenvalues.len())?;
    ProblemInstance::new(sp, r.w_star.clone(), r.w0.clone(), r.noise_variance, r.hp.map_or(3.0, |h| h.psi))
}
