//! Closed-form excess-risk upper bounds for ASGD, SGD, heavy ball, the
//! classical regime and one-hot designs, plus ASGD-vs-SGD comparisons.
//!
//! Every bound is a sum of per-eigen-index terms once the scalar prefactors
//! are fixed, so each report also splits its total over the index segments
//! `0:k‡`, `k‡:k̂`, `k̂:k†`, `k†:k*`, `k*:∞` (left-open, right-closed).

use serde::{Deserialize, Serialize};

use crate::blockdyn::{decay_rate, sgd_decay_rate};
use crate::error::{validation, Error, Result};
use crate::hyper::{compute_cutoffs, BoundConstants, Cutoffs, HyperParams, Regime};
use crate::spectrum::{ProblemInstance, Spectrum, SpectrumKind};
use crate::sum::{self, CompensatedSum};

/// Which printed coefficient set to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Headline constants: `γ` in the variance tail terms.
    Main,
    /// Constants from the detailed proofs: `(q−cδ)/(1−c) = (γ+δ)/2` in
    /// place of `γ`.
    #[default]
    Appendix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    ZeroToDdagger,
    DdaggerToHat,
    HatToDagger,
    DaggerToStar,
    StarToInf,
}

impl Segment {
    pub const ALL: [Segment; 5] =
        [Segment::ZeroToDdagger, Segment::DdaggerToHat, Segment::HatToDagger, Segment::DaggerToStar, Segment::StarToInf];

    pub fn label(self) -> &'static str {
        match self {
            Segment::ZeroToDdagger => "0:k_ddagger",
            Segment::DdaggerToHat => "k_ddagger:k_hat",
            Segment::HatToDagger => "k_hat:k_dagger",
            Segment::DaggerToStar => "k_dagger:k_star",
            Segment::StarToInf => "k_star:inf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentContribution {
    pub segment: Segment,
    /// Unaggregated effective-bias part.
    pub bias: f64,
    /// Unaggregated effective-variance part.
    pub variance: f64,
    /// `aggregation · (bias + variance)`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub effective_bias: f64,
    pub effective_variance: f64,
    /// Factor applied to `EB + EV`: 2 for the decomposed bounds, 1 for the
    /// classical display.
    pub aggregation: f64,
    pub total: f64,
    pub per_segment: Vec<SegmentContribution>,
    pub constants_used: BoundConstants,
    pub cutoffs_used: Cutoffs,
}

/// Segment boundaries `(k‡, k̂, k†, k*)`; must be non-decreasing.
#[derive(Debug, Clone, Copy)]
struct Boundaries([usize; 4]);

impl Boundaries {
    fn new(k: [usize; 4]) -> Result<Self> {
        if k.windows(2).any(|w| w[0] > w[1]) {
            return Err(validation(format!(
                "cutoffs must satisfy k_ddagger <= k_hat <= k_dagger <= k_star, got {k:?}"
            )));
        }
        Ok(Self(k))
    }

    /// Segment of the 1-based index `i`.
    fn segment_of(&self, i: usize) -> Segment {
        let k = self.0;
        if i <= k[0] {
            Segment::ZeroToDdagger
        } else if i <= k[1] {
            Segment::DdaggerToHat
        } else if i <= k[2] {
            Segment::HatToDagger
        } else if i <= k[3] {
            Segment::DaggerToStar
        } else {
            Segment::StarToInf
        }
    }
}

/// Per-index contribution: `(effective bias, effective variance)`.
type Term = (f64, f64);

fn assemble(
    sp: &Spectrum,
    bounds: Boundaries,
    aggregation: f64,
    constants_used: BoundConstants,
    cutoffs_used: Cutoffs,
    mut term: impl FnMut(usize, f64, Segment) -> Term,
) -> BoundReport {
    let mut eb = [CompensatedSum::new(); 5];
    let mut ev = [CompensatedSum::new(); 5];
    for (idx, &lam) in sp.eigenvalues().iter().enumerate() {
        let seg = bounds.segment_of(idx + 1);
        let (b, v) = term(idx, lam, seg);
        eb[seg as usize].add(b);
        ev[seg as usize].add(v);
    }
    let per_segment: Vec<SegmentContribution> = Segment::ALL
        .iter()
        .map(|&segment| {
            let (b, v) = (eb[segment as usize].value(), ev[segment as usize].value());
            SegmentContribution { segment, bias: b, variance: v, total: aggregation * (b + v) }
        })
        .collect();
    let effective_bias = sum::sum(per_segment.iter().map(|s| s.bias));
    let effective_variance = sum::sum(per_segment.iter().map(|s| s.variance));
    BoundReport {
        effective_bias,
        effective_variance,
        aggregation,
        total: aggregation * (effective_bias + effective_variance),
        per_segment,
        constants_used,
        cutoffs_used,
    }
}

fn tail_lambda_sq(sp: &Spectrum, k: usize) -> f64 {
    sum::sum(sp.eigenvalues().iter().skip(k).map(|l| l * l))
}

fn check_window(hp: &HyperParams, n: usize) -> Result<()> {
    if n == 0 {
        return Err(validation("N must be at least 1"));
    }
    if (n as f64) * (1.0 - hp.c) < 2.0 {
        return Err(validation(format!("N(1-c) >= 2 violated: N = {n}, c = {}", hp.c)));
    }
    Ok(())
}

/// Effective-bias term of index `i` shared by the ASGD and one-hot bounds.
fn asgd_bias_term(hp: &HyperParams, variant: Variant, s: usize, n: usize, lam: f64, w2: f64, seg: Segment) -> f64 {
    let HyperParams { c, q, delta, gamma, .. } = *hp;
    let nn = (n * n) as f64;
    let si = s as i32;
    let cs = c.powi(si);
    let sgd_factor = (1.0 - delta * lam).powi(si);
    let two_s = 2 * si;
    let (coef_small, gt) = match variant {
        Variant::Main => (18.0 / (nn * (gamma + delta).powi(2)), (gamma + delta) / 2.0),
        Variant::Appendix => {
            let g = (q - c * delta) / (1.0 - c);
            (9.0 / (2.0 * nn * g * g), g)
        }
    };
    let s2 = (s * s) as f64;
    match seg {
        Segment::ZeroToDdagger => 8.0 * (c * delta / q).powi(two_s) / (nn * delta * delta) * w2 / lam,
        Segment::DdaggerToHat => {
            4.0 * s2 / nn * cs * lam * sgd_factor * w2 + 16.0 * cs / (nn * delta * delta) * sgd_factor * w2 / lam
        }
        Segment::HatToDagger => {
            4.0 * s2 / nn * cs * lam * sgd_factor * w2 + 100.0 * cs / (nn * (1.0 - c).powi(2)) * lam * sgd_factor * w2
        }
        Segment::DaggerToStar => coef_small * (1.0 - gt * lam).powi(two_s) * w2 / lam,
        Segment::StarToInf => 18.0 * lam * (1.0 - gt * lam).powi(two_s) * w2,
    }
}

fn variance_gamma(hp: &HyperParams, variant: Variant) -> f64 {
    match variant {
        Variant::Main => hp.gamma,
        Variant::Appendix => hp.gamma_tilde(),
    }
}

/// Overparameterized ASGD bound `2·EffectiveVar + 2·EffectiveBias`.
pub fn asgd_bound(inst: &ProblemInstance, hp: &HyperParams, s: usize, n: usize, variant: Variant) -> Result<BoundReport> {
    check_window(hp, n)?;
    let sp = &inst.spectrum;
    let constants = crate::hyper::bound_constants(sp, hp)?;
    let cut = compute_cutoffs(sp, hp, n, hp.delta);
    let bounds = Boundaries::new([cut.k_ddagger, cut.k_hat, cut.k_dagger, cut.k_star])?;
    let HyperParams { c, q, delta, gamma, psi, .. } = *hp;
    let (nf, sf) = (n as f64, s as f64);
    let gt = variance_gamma(hp, variant);
    let tail2 = tail_lambda_sq(sp, cut.k_star);
    let r = constants.r;
    let sigma2 = inst.noise_variance;
    let prefactor = psi * r / nf * (9.0 * cut.k_star as f64 / nf + 36.0 * nf * gt * gt * tail2);
    let dagger_star_coef = match variant {
        Variant::Main => 2.0 / (gamma + delta),
        Variant::Appendix => (1.0 - c) / (q - c * delta),
    };
    let e = inst.initial_error();
    Ok(assemble(sp, bounds, 2.0, constants.clone(), cut, |i, lam, seg| {
        let w2 = e[i] * e[i];
        let bias = asgd_bias_term(hp, variant, s, n, lam, w2, seg);
        let (noise, bracket) = match seg {
            Segment::ZeroToDdagger | Segment::DdaggerToHat => (27.0 / (2.0 * nf), 14.0 / delta * w2),
            Segment::HatToDagger => (27.0 / (2.0 * nf), 10.0 / (1.0 - c) * lam * w2),
            Segment::DaggerToStar => (27.0 / (2.0 * nf), dagger_star_coef * w2),
            Segment::StarToInf => (18.0 * (sf + nf) * gt * gt * lam * lam, 4.0 * (sf + nf) * lam * w2),
        };
        (bias, sigma2 * r * noise + prefactor * bracket)
    }))
}

/// SGD bound with step `delta` and effective dimension `k*_SGD`.
pub fn sgd_bound(inst: &ProblemInstance, delta: f64, psi: f64, s: usize, n: usize) -> Result<BoundReport> {
    if n == 0 {
        return Err(validation("N must be at least 1"));
    }
    let sp = &inst.spectrum;
    let delta_max = 1.0 / (2.0 * psi * sp.trace());
    if !(delta > 0.0 && delta <= delta_max) {
        return Err(validation(format!("SGD step must lie in (0, 1/(2 psi tr(H))] = (0, {delta_max}], got {delta}")));
    }
    let l = delta * sp.trace();
    let r = 1.0 / (1.0 - psi * l);
    let hp = HyperParams::sgd(delta, psi)?;
    let k_star = sp.count_prefix(|lam| lam >= 1.0 / (delta * n as f64));
    let cut = Cutoffs { k_ddagger: 0, k_hat: 0, k_dagger: 0, k_star, k_star_sgd: k_star };
    let bounds = Boundaries::new([0, 0, 0, k_star])?;
    let (nf, sf) = (n as f64, s as f64);
    let tail2 = tail_lambda_sq(sp, k_star);
    let prefactor = 4.0 * psi * r / nf * (k_star as f64 / nf + nf * delta * delta * tail2);
    let sigma2 = inst.noise_variance;
    let constants = BoundConstants { l, r, u22: Vec::new(), r_onehot: f64::INFINITY };
    let e = inst.initial_error();
    let _ = hp;
    Ok(assemble(sp, bounds, 2.0, constants, cut, |i, lam, seg| {
        let w2 = e[i] * e[i];
        let decay = (1.0 - delta * lam).powi(2 * s as i32);
        if seg == Segment::StarToInf {
            let bias = lam * decay * w2;
            let var = sigma2 * r * (sf + nf) * delta * delta * lam * lam + prefactor * (sf + nf) * lam * w2;
            (bias, var)
        } else {
            let bias = decay * w2 / (lam * delta * delta * nf * nf);
            (bias, sigma2 * r / nf + prefactor * w2 / delta)
        }
    }))
}

/// Stochastic heavy ball bound; `hp` must come from
/// [`HyperParams::derive_shb`].
pub fn shb_bound(inst: &ProblemInstance, hp: &HyperParams, s: usize, n: usize) -> Result<BoundReport> {
    if hp.regime != Regime::Shb {
        return Err(validation("shb_bound requires heavy-ball parameters"));
    }
    if n == 0 {
        return Err(validation("N must be at least 1"));
    }
    let c_max = 1.0 - 2.0 / n as f64;
    if !(hp.c > 0.0 && hp.c <= c_max) {
        return Err(validation(format!("c in (0, 1 - 2/N] violated: c = {}, N = {n}", hp.c)));
    }
    let sp = &inst.spectrum;
    let HyperParams { c, gamma, psi, .. } = *hp;
    let l = gamma * sp.trace() / 4.0;
    if psi * l >= 1.0 {
        return Err(Error::Infeasible(format!("psi * gamma * tr(H) / 4 = {} >= 1", psi * l)));
    }
    let r = 1.0 / (1.0 - psi * l);
    let mut cut = compute_cutoffs(sp, hp, n, gamma);
    cut.k_star = sp.count_prefix(|lam| lam >= 1.0 / (gamma * n as f64));
    let bounds = Boundaries::new([0, 0, cut.k_dagger, cut.k_star])?;
    let (nf, sf) = (n as f64, s as f64);
    let nn = nf * nf;
    let tail2 = tail_lambda_sq(sp, cut.k_star);
    let prefactor = psi * r / nf * (9.0 * cut.k_star as f64 / nf + 36.0 * nf * gamma * gamma * tail2);
    let sigma2 = inst.noise_variance;
    let cs = c.powi(s as i32);
    let constants = BoundConstants { l, r, u22: Vec::new(), r_onehot: f64::INFINITY };
    let e = inst.initial_error();
    Ok(assemble(sp, bounds, 2.0, constants, cut, |i, lam, seg| {
        let w2 = e[i] * e[i];
        let decay = (1.0 - gamma * lam / 2.0).powi(2 * s as i32);
        match seg {
            Segment::ZeroToDdagger | Segment::DdaggerToHat | Segment::HatToDagger => {
                let bias = cs * (4.0 * sf * sf + 100.0 / ((1.0 - c) * (1.0 - c))) * lam * w2 / nn;
                (bias, sigma2 * r * 27.0 / (2.0 * nf) + prefactor * 10.0 / (1.0 - c) * lam * w2)
            }
            Segment::DaggerToStar => {
                let bias = 18.0 / (nn * gamma * gamma) * decay * w2 / lam;
                (bias, sigma2 * r * 27.0 / (2.0 * nf) + prefactor * 2.0 / gamma * w2)
            }
            Segment::StarToInf => {
                let bias = 18.0 * lam * decay * w2;
                let var = sigma2 * r * 18.0 * (sf + nf) * gamma * gamma * lam * lam + prefactor * 4.0 * (sf + nf) * lam * w2;
                (bias, var)
            }
        }
    }))
}

/// Both printed forms of the classical-regime bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReport {
    pub hp: HyperParams,
    /// Display in terms of `β` with `exp(−βs/2)`.
    pub corollary: BoundReport,
    /// Display in terms of `1−c` with `exp(−(1−c)s/2)`.
    pub appendix: BoundReport,
}

/// Classical-regime bound with parameters from
/// [`HyperParams::derive_classical`]; the total is `EB + EV`.
pub fn classical_bound(inst: &ProblemInstance, psi: f64, s: usize, n: usize) -> Result<ClassicalReport> {
    if n == 0 {
        return Err(validation("N must be at least 1"));
    }
    let sp = &inst.spectrum;
    let hp = HyperParams::derive_classical(sp, psi)?;
    let constants = crate::hyper::bound_constants(sp, &hp)?;
    let cut = compute_cutoffs(sp, &hp, n, hp.delta);
    let bounds = Boundaries::new([cut.k_ddagger, cut.k_hat, cut.k_dagger, cut.k_dagger.max(cut.k_star)])?;
    let (nf, sf, d) = (n as f64, s as f64, sp.dim() as f64);
    let nn = nf * nf;
    let sigma2 = inst.noise_variance;
    let e = inst.initial_error();

    let beta = hp.beta;
    let corollary = assemble(sp, bounds, 1.0, constants.clone(), cut, |i, lam, _| {
        let l0 = 0.5 * lam * e[i] * e[i];
        let bias = 100.0 / (nn * beta * beta) * (-beta * sf / 2.0).exp() * l0;
        let var = 1008.0 * psi * d / (nn * beta) * l0 + 36.0 * sigma2 / nf + 128.0 * sigma2 / (nn * beta);
        (bias, var)
    });
    let g = 1.0 - hp.c;
    let appendix = assemble(sp, bounds, 1.0, constants, cut, |i, lam, _| {
        let h = lam * e[i] * e[i];
        let bias = 100.0 / (nn * g * g) * (-g * sf / 2.0).exp() * h;
        let var = 1008.0 * psi * d / (nn * g) * h + 36.0 * sigma2 / nf + 128.0 * sigma2 / (nn * g);
        (bias, var)
    });
    Ok(ClassicalReport { hp, corollary, appendix })
}

/// Bound for one-hot designs `x = √(λ_I/p_I) e_I`, using
/// `r = 1/(1 − max_i (U_i)_{22})`.
pub fn onehot_bound(inst: &ProblemInstance, hp: &HyperParams, s: usize, n: usize, variant: Variant) -> Result<BoundReport> {
    let HyperParams { c, delta, gamma, beta, .. } = *hp;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(validation(format!("gamma in (0, 1) violated: {gamma}")));
    }
    if !(delta > 0.0 && delta <= gamma) {
        return Err(validation(format!("delta in (0, gamma] violated: {delta}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(validation(format!("beta in (0, 1) violated: {beta}")));
    }
    check_window(hp, n)?;
    let sp = &inst.spectrum;
    let constants = BoundConstants::evaluate(sp, hp);
    let r = constants.r_onehot;
    if !r.is_finite() {
        return Err(Error::Infeasible("max_i (U_i)_22 >= 1".into()));
    }
    let cut = compute_cutoffs(sp, hp, n, delta);
    let bounds = Boundaries::new([cut.k_ddagger, cut.k_hat, cut.k_dagger, cut.k_star])?;
    let (nf, sf) = (n as f64, s as f64);
    let nn = nf * nf;
    let gt = variance_gamma(hp, variant);
    let dagger_star_coef = match variant {
        Variant::Main => 18.0 / gamma,
        Variant::Appendix => 18.0 / (gamma + delta),
    };
    let sigma2 = inst.noise_variance;
    let e = inst.initial_error();
    Ok(assemble(sp, bounds, 2.0, constants.clone(), cut, |i, lam, seg| {
        let w2 = e[i] * e[i];
        let bias = asgd_bias_term(hp, variant, s, n, lam, w2, seg);
        let (noise, bracket) = match seg {
            Segment::ZeroToDdagger | Segment::DdaggerToHat => (27.0 / (2.0 * nf), 126.0 / delta * w2 / lam),
            Segment::HatToDagger => (27.0 / (2.0 * nf), 90.0 / (1.0 - c) * w2),
            Segment::DaggerToStar => (27.0 / (2.0 * nf), dagger_star_coef * w2 / lam),
            Segment::StarToInf => (18.0 * (sf + nf) * gt * gt * lam * lam, 36.0 * gt * gt * nn * sf * lam * lam * w2),
        };
        (bias, sigma2 * r * noise + r / nn * bracket)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    Asgd,
    Sgd,
    Tie,
}

/// Relative tolerance under which two decay bases count as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    /// 1-based eigen-index.
    pub index: usize,
    pub lambda: f64,
    pub asgd_base: f64,
    pub sgd_base: f64,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<DecayRow>,
    pub k_hat: usize,
    pub asgd: BoundReport,
    pub sgd: BoundReport,
    /// ASGD decays strictly faster exactly on `i > k̂`, with a tie allowed
    /// at `i = k̂`.
    pub flip_at_k_hat: bool,
}

pub fn decay_winner(asgd: f64, sgd: f64) -> Winner {
    if (asgd - sgd).abs() <= TIE_TOLERANCE * asgd.abs().max(sgd.abs()) {
        Winner::Tie
    } else if asgd < sgd {
        Winner::Asgd
    } else {
        Winner::Sgd
    }
}

/// Per-index decay bases of ASGD and SGD with both total bounds.
pub fn compare_report(
    inst: &ProblemInstance,
    hp: &HyperParams,
    sgd_delta: f64,
    s: usize,
    n: usize,
    variant: Variant,
) -> Result<ComparisonReport> {
    let asgd = asgd_bound(inst, hp, s, n, variant)?;
    let sgd = sgd_bound(inst, sgd_delta, inst.psi, s, n)?;
    let sp = &inst.spectrum;
    let k_hat = compute_cutoffs(sp, hp, n, sgd_delta).k_hat;
    let rows: Vec<DecayRow> = sp
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let asgd_base = decay_rate(lambda, hp);
            let sgd_base = sgd_decay_rate(lambda, sgd_delta);
            DecayRow { index: i + 1, lambda, asgd_base, sgd_base, winner: decay_winner(asgd_base, sgd_base) }
        })
        .collect();
    let flip_at_k_hat = rows.iter().all(|r| match r.winner {
        Winner::Asgd => r.index > k_hat,
        Winner::Sgd => r.index <= k_hat,
        Winner::Tie => r.index == k_hat,
    });
    Ok(ComparisonReport { rows, k_hat, asgd, sgd, flip_at_k_hat })
}

/// Ordinary least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = sum::sum(x.iter().copied()) / n;
    let my = sum::sum(y.iter().copied()) / n;
    let sxx = sum::sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = sum::sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = sum::sum(y.iter().map(|b| (b - my) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept, r_squared }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub n_grid: Vec<usize>,
    /// Noise part of the effective variance at each `N` (σ² = 1, w0 = w*).
    pub variance: Vec<f64>,
    /// `ln EV` against `ln N`.
    pub loglog: LinearFit,
    /// `N · EV` against `ln N`.
    pub semilog: LinearFit,
}

/// Noise part `r[27k*/(2N) + 18(s+N)γ̃²Σ_{i>k*}λ_i²]` of the ASGD effective
/// variance with `s = 0`, σ² = 1.
pub fn noise_variance_term(sp: &Spectrum, hp: &HyperParams, n: usize, variant: Variant) -> Result<f64> {
    let k = crate::hyper::bound_constants(sp, hp)?;
    let cut = compute_cutoffs(sp, hp, n, hp.delta);
    let gt = variance_gamma(hp, variant);
    let nf = n as f64;
    Ok(k.r * (27.0 * cut.k_star as f64 / (2.0 * nf) + 18.0 * nf * gt * gt * tail_lambda_sq(sp, cut.k_star)))
}

/// Fits the decay of the noise part of the effective variance over an `N`
/// grid, with `δ = 1/(2ψ tr H)` and `γ = 1/(2ψ Σ_{i>κ̃} λ_i)`.
pub fn variance_scaling(
    kind: &SpectrumKind,
    d: usize,
    kappa_tilde: usize,
    psi: f64,
    n_grid: &[usize],
    variant: Variant,
) -> Result<ScalingFit> {
    if n_grid.len() < 2 {
        return Err(validation("N grid needs at least two points"));
    }
    let (lo, hi) = (n_grid.iter().min().unwrap(), n_grid.iter().max().unwrap());
    if (*hi as f64) < 100.0 * (*lo as f64) {
        return Err(validation("N grid must span at least two decades"));
    }
    let sp = Spectrum::new(kind, d)?;
    let delta = 1.0 / (2.0 * psi * sp.trace());
    let gamma = 1.0 / (2.0 * psi * sp.tail_sum(kappa_tilde)?);
    let hp = HyperParams::derive_overparam(delta, gamma, kappa_tilde, psi, &sp)?;
    let variance = n_grid.iter().map(|&n| noise_variance_term(&sp, &hp, n, variant)).collect::<Result<Vec<_>>>()?;
    let ln_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ln_v: Vec<f64> = variance.iter().map(|v| v.ln()).collect();
    let scaled: Vec<f64> = n_grid.iter().zip(&variance).map(|(&n, v)| n as f64 * v).collect();
    Ok(ScalingFit {
        n_grid: n_grid.to_vec(),
        loglog: linear_fit(&ln_n, &ln_v),
        semilog: linear_fit(&ln_n, &scaled),
        variance,
    })
}

/// `count` log-spaced integers from `lo` to `hi`.
pub fn log_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::scaled_basis;
    use approx::assert_relative_eq;

    fn paper(w0_index: usize) -> (ProblemInstance, HyperParams) {
        let sp = Spectrum::new(&SpectrumKind::Polynomial(2.0), 2000).unwrap();
        let hp = HyperParams::derive_from_alpha(0.1, 0.9875, 5, 3.0, &sp).unwrap();
        let w0 = scaled_basis(2000, w0_index, 10.0).unwrap();
        (ProblemInstance::centered(sp, w0, 0.01, 3.0).unwrap(), hp)
    }

    fn check_report(r: &BoundReport) {
        let seg_total: f64 = r.per_segment.iter().map(|s| s.total).sum();
        assert_relative_eq!(seg_total, r.total, max_relative = 1e-12);
        assert_relative_eq!(r.total, r.aggregation * (r.effective_bias + r.effective_variance), max_relative = 1e-12);
        assert!(r.per_segment.iter().all(|s| s.total >= 0.0 && s.bias >= 0.0 && s.variance >= 0.0));
    }

    #[test]
    fn zero_when_started_at_optimum_without_noise() {
        let (inst, hp) = paper(20);
        let quiet = inst.with_w0(vec![0.0; 2000]).unwrap().with_noise(0.0).unwrap();
        for v in [Variant::Main, Variant::Appendix] {
            assert_eq!(asgd_bound(&quiet, &hp, 500, 500, v).unwrap().total, 0.0);
        }
        assert_eq!(sgd_bound(&quiet, 0.1, 3.0, 500, 500).unwrap().total, 0.0);
    }

    #[test]
    fn paper_variance_leading_term() {
        let (inst, hp) = paper(20);
        let r = asgd_bound(&inst, &hp, 500, 500, Variant::Main).unwrap();
        check_report(&r);
        assert_eq!(r.cutoffs_used.k_star, 17);
        let lead = 0.01 * r.constants_used.r * 27.0 * 17.0 / 1000.0;
        assert_relative_eq!(lead, 0.025232291784344617, max_relative = 1e-12);
        assert!(r.effective_variance > lead);
        assert!(r.effective_variance > r.effective_bias);
    }

    #[test]
    fn sgd_paper_instance() {
        let (inst, _) = paper(7);
        let r = sgd_bound(&inst, 0.1, 3.0, 500, 500).unwrap();
        check_report(&r);
        assert_eq!(r.cutoffs_used.k_star, 7);
        // Index 7 sits in the head segment, so its bias is the H^{-1} term.
        let expect = 100.0 * (1.0 - 0.1 / 49.0f64).powi(1000) * 49.0 / (0.01 * 250_000.0);
        assert_relative_eq!(r.per_segment[3].bias, expect, max_relative = 1e-12);
        assert!(sgd_bound(&inst, 0.2, 3.0, 500, 500).is_err());
    }

    #[test]
    fn main_and_appendix_share_bias() {
        let (inst, hp) = paper(3);
        let a = asgd_bound(&inst, &hp, 200, 500, Variant::Main).unwrap();
        let b = asgd_bound(&inst, &hp, 200, 500, Variant::Appendix).unwrap();
        assert_relative_eq!(a.effective_bias, b.effective_bias, max_relative = 1e-12);
        assert!(b.effective_variance <= a.effective_variance);
    }

    #[test]
    fn rejects_short_window() {
        let (inst, hp) = paper(3);
        assert!(asgd_bound(&inst, &hp, 0, 50, Variant::Appendix).is_err());
    }

    #[test]
    fn classical_hand_example() {
        let sp = Spectrum::from_eigenvalues(vec![1.0, 1.0]).unwrap();
        let inst = ProblemInstance::centered(sp, vec![1.0, 0.0], 1.0, 3.0).unwrap();
        let rep = classical_bound(&inst, 3.0, 0, 100).unwrap();
        check_report(&rep.corollary);
        assert_relative_eq!(rep.corollary.total, 5.376, max_relative = 1e-12);
        assert_relative_eq!(rep.corollary.effective_bias, 0.72, max_relative = 1e-12);
        // κ = tr/μ = 2 here, so β = √(μδ/(2ψd)) = 1/√(24 ψ κ d / 2)·… reduces to 1/12.
        assert_relative_eq!(rep.hp.beta, 1.0 / 12.0, max_relative = 1e-14);

        let at_opt = inst.with_w0(vec![0.0, 0.0]).unwrap();
        let rep = classical_bound(&at_opt, 3.0, 0, 100).unwrap();
        assert_eq!(rep.corollary.effective_bias, 0.0);
        assert_relative_eq!(rep.corollary.total, 0.72 + 0.3072, max_relative = 1e-12);
    }

    #[test]
    fn shb_trivial_and_finite() {
        let sp = Spectrum::from_eigenvalues(vec![1.0, 0.25]).unwrap();
        let hp = HyperParams::derive_shb(0.9, 0.1, &sp, 3.0, 100).unwrap();
        let inst = ProblemInstance::centered(sp, vec![1.0, -1.0], 0.1, 3.0).unwrap();
        let r = shb_bound(&inst, &hp, 100, 100).unwrap();
        check_report(&r);
        assert!(r.total.is_finite() && r.total > 0.0);
        let quiet = inst.with_w0(vec![0.0; 2]).unwrap().with_noise(0.0).unwrap();
        assert_eq!(shb_bound(&quiet, &hp, 100, 100).unwrap().total, 0.0);
    }

    #[test]
    fn onehot_constants() {
        let sp = Spectrum::from_eigenvalues(vec![0.5, 0.3, 0.2]).unwrap();
        let hp = HyperParams::manual(1.0 / 1.1, 0.1, 0.5, 0.25, 3.0, 1).unwrap();
        let inst = ProblemInstance::centered(sp, vec![1.0, 1.0, 1.0], 0.1, 3.0).unwrap();
        let r = onehot_bound(&inst, &hp, 10, 100, Variant::Main).unwrap();
        check_report(&r);
        assert!(r.constants_used.r_onehot <= 1.0 / (1.0 - hp.gamma / 2.0));
    }

    #[test]
    fn paper_comparison_flips_at_k_hat() {
        let (inst, hp) = paper(20);
        let rep = compare_report(&inst, &hp, 0.1, 500, 500, Variant::Appendix).unwrap();
        assert_eq!(rep.k_hat, 2);
        assert!(rep.flip_at_k_hat);
        assert_eq!(rep.rows[0].winner, Winner::Sgd);
        // λ_2 = (1−c)/δ exactly, so both bases equal 0.975.
        assert_eq!(rep.rows[1].winner, Winner::Tie);
        assert!(rep.rows[2..].iter().all(|r| r.winner == Winner::Asgd));
        assert_relative_eq!(rep.rows[6].asgd_base, 0.993605442176870, max_relative = 1e-12);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1000, 1_000_000, 7);
        assert_eq!(g, vec![1000, 3162, 10000, 31623, 100000, 316228, 1000000]);
    }
}
