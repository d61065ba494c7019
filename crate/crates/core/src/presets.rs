//! Experiment presets mirroring the published figures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::hyper::HyperParams;
use crate::spectrum::{scaled_basis, ProblemInstance, Spectrum, SpectrumKind};

pub const PAPER_DIM: usize = 2000;
pub const PAPER_DELTA: f64 = 0.1;
pub const PAPER_ALPHA: f64 = 0.9875;
pub const PAPER_KAPPA_TILDE: usize = 5;
pub const PAPER_PSI: f64 = 3.0;
pub const PAPER_N: usize = 500;
pub const PAPER_NOISE: f64 = 0.01;
/// Label noise of the spectrum-comparison figures (σ = 0.2).
pub const APPENDIX_NOISE: f64 = 0.04;
/// Largest dimension for `λ_i = e^{-i/2}` whose last eigenvalue is still a
/// normal double.
pub const EXP_HALF_MAX_DIM: usize = 1400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FigurePreset {
    Fig2a,
    Fig2b,
    Fig2c,
    FigA1,
    FigA2,
    FigA3,
}

impl FigurePreset {
    pub const ALL: [FigurePreset; 6] =
        [Self::Fig2a, Self::Fig2b, Self::Fig2c, Self::FigA1, Self::FigA2, Self::FigA3];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2a => "fig2a",
            Self::Fig2b => "fig2b",
            Self::Fig2c => "fig2c",
            Self::FigA1 => "figA1",
            Self::FigA2 => "figA2",
            Self::FigA3 => "figA3",
        }
    }
}

impl fmt::Display for FigurePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigurePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| validation(format!("unknown preset '{s}', expected one of fig2a, fig2b, fig2c, figA1, figA2, figA3")))
    }
}

/// One initialization `w0 = scale · e_index` with `w* = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub label: String,
    pub w0_index: usize,
    pub w0_scale: f64,
}

impl Panel {
    fn basis(index: usize) -> Self {
        Self { label: format!("e{index}"), w0_index: index, w0_scale: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetSpec {
    pub preset: FigurePreset,
    /// `None` until a custom spectrum is supplied (figA2 only).
    pub spectrum: Option<SpectrumKind>,
    pub d: usize,
    pub noise_variance: f64,
    pub psi: f64,
    pub delta: f64,
    pub alpha: f64,
    pub kappa_tilde: usize,
    pub n: usize,
    pub s_grid: Vec<usize>,
    pub reps: usize,
    pub panels: Vec<Panel>,
    /// Emit bias/variance columns next to the full risk.
    pub decomposed: bool,
}

pub fn paper_s_grid() -> Vec<usize> {
    (1..=10).map(|k| 50 * k).collect()
}

impl PresetSpec {
    pub fn new(preset: FigurePreset) -> Self {
        let base = Self {
            preset,
            spectrum: Some(SpectrumKind::Polynomial(2.0)),
            d: PAPER_DIM,
            noise_variance: PAPER_NOISE,
            psi: PAPER_PSI,
            delta: PAPER_DELTA,
            alpha: PAPER_ALPHA,
            kappa_tilde: PAPER_KAPPA_TILDE,
            n: PAPER_N,
            s_grid: paper_s_grid(),
            reps: 10,
            panels: Vec::new(),
            decomposed: false,
        };
        let appendix = |spectrum, d| Self {
            spectrum,
            d,
            noise_variance: APPENDIX_NOISE,
            panels: vec![Panel::basis(1), Panel::basis(10)],
            decomposed: true,
            ..base.clone()
        };
        match preset {
            FigurePreset::Fig2a => Self { panels: vec![Panel::basis(1)], ..base },
            FigurePreset::Fig2b => Self { panels: vec![Panel::basis(2)], ..base },
            FigurePreset::Fig2c => Self { panels: vec![Panel::basis(20)], ..base },
            FigurePreset::FigA1 => appendix(Some(SpectrumKind::Polynomial(2.0)), PAPER_DIM),
            FigurePreset::FigA2 => appendix(None, PAPER_DIM),
            FigurePreset::FigA3 => appendix(Some(SpectrumKind::Exponential(0.5)), EXP_HALF_MAX_DIM),
        }
    }

    /// Supplies the spectrum for presets that refuse to guess one.
    pub fn with_custom_spectrum(mut self, eigenvalues: Vec<f64>) -> Result<Self> {
        Spectrum::from_eigenvalues(eigenvalues.clone())?;
        self.d = eigenvalues.len();
        self.spectrum = Some(SpectrumKind::Custom(eigenvalues));
        Ok(self)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        match &self.spectrum {
            Some(kind) => Spectrum::new(kind, self.d),
            None => Err(validation(format!(
                "{} has an ambiguous spectrum; pass an explicit custom spectrum",
                self.preset
            ))),
        }
    }

    /// ASGD parameters from `(δ, α, κ̃, ψ)` with `β = (1−α)/α`.
    pub fn asgd_params(&self, sp: &Spectrum) -> Result<HyperParams> {
        HyperParams::derive_from_alpha(self.delta, self.alpha, self.kappa_tilde, self.psi, sp)
    }

    pub fn sgd_params(&self) -> Result<HyperParams> {
        HyperParams::sgd(self.delta, self.psi)
    }

    pub fn instance(&self, sp: &Spectrum, panel: &Panel) -> Result<ProblemInstance> {
        let w0 = scaled_basis(sp.dim(), panel.w0_index, panel.w0_scale)?;
        ProblemInstance::centered(sp.clone(), w0, self.noise_variance, self.psi)
    }
}

/// The published instance (`λ_i = i^{-2}`, `d` coordinates) with
/// `w0 = 10·e_index` and its ASGD parameters.
pub fn paper_instance(d: usize, w0_index: usize) -> Result<(ProblemInstance, HyperParams)> {
    let sp = Spectrum::new(&SpectrumKind::Polynomial(2.0), d)?;
    let hp = HyperParams::derive_from_alpha(PAPER_DELTA, PAPER_ALPHA, PAPER_KAPPA_TILDE, PAPER_PSI, &sp)?;
    let w0 = scaled_basis(d, w0_index, 10.0)?;
    Ok((ProblemInstance::centered(sp, w0, PAPER_NOISE, PAPER_PSI)?, hp))
}
