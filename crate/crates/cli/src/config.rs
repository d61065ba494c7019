//! Experiment configuration. Layers are TOML tables merged key by key:
//! preset defaults, then the config file, then `--set` pairs; typed flags
//! are applied last.

use std::path::Path;

use asgd_core::bounds::Variant;
use asgd_core::oracle::FourthMomentModel;
use asgd_core::presets::{Panel, PresetSpec};
use asgd_core::simulate::{DataModel, DesignKind};
use asgd_core::spectrum::scaled_basis;
use asgd_core::{HyperParams, ProblemInstance, Spectrum, SpectrumKind};
use serde::{Deserialize, Serialize};
use toml::Table;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeSpec {
    Overparam,
    Classical,
    Shb,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Bound,
    Oracle,
    Montecarlo,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::Bound => "bound",
            Engine::Oracle => "oracle",
            Engine::Montecarlo => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Gaussian,
    Onehot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantSpec {
    Main,
    Appendix,
}

impl From<VariantSpec> for Variant {
    fn from(v: VariantSpec) -> Self {
        match v {
            VariantSpec::Main => Variant::Main,
            VariantSpec::Appendix => Variant::Appendix,
        }
    }
}

/// `"10*e_20"`, `"e_3"`, `"zero"` or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Named(String),
    Explicit(Vec<f64>),
}

impl VectorSpec {
    pub fn resolve(&self, d: usize) -> Result<Vec<f64>, CliError> {
        match self {
            VectorSpec::Explicit(v) if v.len() == d => Ok(v.clone()),
            VectorSpec::Explicit(v) => Err(CliError::Config(format!("vector has {} entries, expected d = {d}", v.len()))),
            VectorSpec::Named(s) => {
                let s = s.trim();
                if s == "zero" || s == "0" {
                    return Ok(vec![0.0; d]);
                }
                let (scale, basis) = match s.split_once('*') {
                    Some((a, b)) => (a.trim().parse::<f64>().ok(), b.trim()),
                    None => (Some(1.0), s),
                };
                let index = basis.strip_prefix("e_").and_then(|i| i.parse::<usize>().ok());
                match (scale, index) {
                    (Some(scale), Some(index)) => Ok(scaled_basis(d, index, scale)?),
                    _ => Err(CliError::Config(format!("cannot parse vector '{s}', expected e.g. \"10*e_20\", \"e_1\" or \"zero\""))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `poly:<exponent>`, `exp:<rate>` or `custom` (with `eigenvalues`).
    pub spectrum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    pub d: usize,
    pub regime: RegimeSpec,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Heavy-ball momentum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub kappa_tilde: usize,
    pub psi: f64,
    /// SGD step for comparisons; defaults to `delta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd_delta: Option<f64>,
    pub include_sgd: bool,
    pub design: Design,
    pub w0: VectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<VectorSpec>,
    pub noise_variance: f64,
    pub s: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub engines: Vec<Engine>,
    pub variant: VariantSpec,
    /// Emit bias/variance columns for Monte Carlo rows.
    pub decomposed: bool,
}

const UNSPECIFIED: &str = "unspecified";

/// Overrides given as typed command-line flags.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub engines: Option<Vec<Engine>>,
    pub variant: Option<VariantSpec>,
    pub spectrum_custom: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_preset(spec: &PresetSpec, panel: &Panel) -> Self {
        let (spectrum, eigenvalues) = match &spec.spectrum {
            Some(SpectrumKind::Polynomial(a)) => (format!("poly:{a}"), None),
            Some(SpectrumKind::Exponential(r)) => (format!("exp:{r}"), None),
            Some(SpectrumKind::Custom(v)) => ("custom".to_string(), Some(v.clone())),
            None => (UNSPECIFIED.to_string(), None),
        };
        Self {
            spectrum,
            eigenvalues,
            d: spec.d,
            regime: RegimeSpec::Overparam,
            delta: spec.delta,
            alpha: Some(spec.alpha),
            beta: None,
            gamma: None,
            c: None,
            kappa_tilde: spec.kappa_tilde,
            psi: spec.psi,
            sgd_delta: None,
            include_sgd: true,
            design: Design::Gaussian,
            w0: VectorSpec::Named(format!("{}*e_{}", panel.w0_scale, panel.w0_index)),
            w_star: None,
            noise_variance: spec.noise_variance,
            s: spec.s_grid.clone(),
            n: spec.n,
            reps: spec.reps,
            seed: 0,
            engines: vec![Engine::Oracle, Engine::Montecarlo],
            variant: VariantSpec::Appendix,
            decomposed: spec.decomposed,
        }
    }

    /// Merges the file and `--set` layers over `self`, then applies flags.
    pub fn layered(self, file: Option<&Path>, sets: &[String], flags: &FlagOverrides) -> Result<Self, CliError> {
        let mut table = Table::try_from(&self).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let layer: Table = text.parse().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            table.extend(layer);
        }
        for set in sets {
            let layer: Table = set
                .parse()
                .map_err(|e| CliError::Config(format!("--set '{set}' is not a TOML key = value pair: {e}")))?;
            table.extend(layer);
        }
        let mut cfg: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = flags.reps {
            cfg.reps = reps;
        }
        if let Some(engines) = &flags.engines {
            cfg.engines = engines.clone();
        }
        if let Some(variant) = flags.variant {
            cfg.variant = variant;
        }
        if let Some(ev) = &flags.spectrum_custom {
            cfg.spectrum = "custom".into();
            cfg.eigenvalues = Some(ev.clone());
        }
        cfg.normalize()?;
        Ok(cfg)
    }

    fn normalize(&mut self) -> Result<(), CliError> {
        if self.spectrum == "custom" {
            let ev = self.eigenvalues.as_ref().ok_or_else(|| CliError::Config("spectrum = \"custom\" needs eigenvalues".into()))?;
            self.d = ev.len();
        }
        self.s.sort_unstable();
        self.s.dedup();
        self.engines.sort_unstable();
        self.engines.dedup();
        if self.s.is_empty() {
            return Err(CliError::Config("s list is empty".into()));
        }
        if self.n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(CliError::Config("reps must be at least 1".into()));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(CliError::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spectrum_kind(&self) -> Result<SpectrumKind, CliError> {
        let bad = || CliError::Config(format!("malformed spectrum '{}', expected poly:<a>, exp:<r> or custom", self.spectrum));
        if self.spectrum == UNSPECIFIED {
            return Err(CliError::Config("this preset has an ambiguous spectrum; pass --spectrum-custom".into()));
        }
        if self.spectrum == "custom" {
            return Ok(SpectrumKind::Custom(self.eigenvalues.clone().unwrap_or_default()));
        }
        let (family, value) = self.spectrum.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        match family.trim() {
            "poly" | "polynomial" => Ok(SpectrumKind::Polynomial(value)),
            "exp" | "exponential" => Ok(SpectrumKind::Exponential(value)),
            _ => Err(bad()),
        }
    }

    pub fn spectrum(&self) -> Result<Spectrum, CliError> {
        Ok(Spectrum::new(&self.spectrum_kind()?, self.d)?)
    }

    pub fn instance(&self, sp: &Spectrum) -> Result<ProblemInstance, CliError> {
        let d = sp.dim();
        let w0 = self.w0.resolve(d)?;
        let w_star = match &self.w_star {
            Some(v) => v.resolve(d)?,
            None => vec![0.0; d],
        };
        Ok(ProblemInstance::new(sp.clone(), w_star, w0, self.noise_variance, self.psi)?)
    }

    fn need(&self, name: &str, x: Option<f64>) -> Result<f64, CliError> {
        x.ok_or_else(|| CliError::Config(format!("regime {:?} needs '{name}'", self.regime)))
    }

    pub fn hyper(&self, sp: &Spectrum) -> Result<HyperParams, CliError> {
        let hp = match self.regime {
            RegimeSpec::Overparam => match (self.alpha, self.gamma) {
                (Some(alpha), _) => HyperParams::derive_from_alpha(self.delta, alpha, self.kappa_tilde, self.psi, sp)?,
                (None, Some(gamma)) => HyperParams::derive_overparam(self.delta, gamma, self.kappa_tilde, self.psi, sp)?,
                (None, None) => return Err(CliError::Config("regime overparam needs 'alpha' or 'gamma'".into())),
            },
            RegimeSpec::Classical => HyperParams::derive_classical(sp, self.psi)?,
            RegimeSpec::Shb => HyperParams::derive_shb(self.need("c", self.c)?, self.need("gamma", self.gamma)?, sp, self.psi, self.n)?,
            RegimeSpec::Manual => HyperParams::manual(
                self.need("alpha", self.alpha)?,
                self.need("beta", self.beta)?,
                self.need("gamma", self.gamma)?,
                self.delta,
                self.psi,
                self.kappa_tilde,
            )?,
        };
        Ok(hp)
    }

    pub fn sgd_step(&self) -> f64 {
        self.sgd_delta.unwrap_or(self.delta)
    }

    /// The configured method and, when enabled, plain SGD.
    pub fn algorithms(&self, sp: &Spectrum) -> Result<Vec<Algorithm>, CliError> {
        let label = if self.regime == RegimeSpec::Shb { "shb" } else { "asgd" };
        let mut out = vec![Algorithm { label, hp: self.hyper(sp)?, regime: self.regime }];
        if self.include_sgd {
            out.push(Algorithm { label: "sgd", hp: HyperParams::sgd(self.sgd_step(), self.psi)?, regime: RegimeSpec::Manual });
        }
        Ok(out)
    }

    pub fn fourth_moment(&self, sp: &Spectrum) -> FourthMomentModel {
        match self.design {
            Design::Gaussian => FourthMomentModel::GaussianExact,
            Design::Onehot => FourthMomentModel::one_hot_default(sp),
        }
    }

    pub fn data_model(&self, inst: &ProblemInstance) -> Result<DataModel, CliError> {
        Ok(match self.design {
            Design::Gaussian => DataModel::gaussian(inst.clone()),
            Design::Onehot => DataModel::new(DesignKind::OneHot(one_hot_probabilities(&inst.spectrum)), inst.clone())?,
        })
    }
}

fn one_hot_probabilities(sp: &Spectrum) -> Vec<f64> {
    match FourthMomentModel::one_hot_default(sp) {
        FourthMomentModel::OneHot(p) => p,
        _ => unreachable!("one_hot_default builds a one-hot model"),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Algorithm {
    pub label: &'static str,
    pub hp: HyperParams,
    /// How the parameters were derived; decides which bound applies.
    pub regime: RegimeSpec,
}

/// Parses `a,b,c` or `@path` (numbers separated by commas or whitespace).
pub fn parse_eigenvalues(arg: &str) -> Result<Vec<f64>, CliError> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?,
        None => arg.to_string(),
    };
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Config(format!("malformed eigenvalue '{t}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("custom spectrum is empty".into()));
    }
    Spectrum::from_eigenvalues(values.clone())?;
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use asgd_core::presets::FigurePreset;

    fn paper() -> ExperimentConfig {
        let spec = PresetSpec::new(FigurePreset::Fig2c);
        ExperimentConfig::from_preset(&spec, &spec.panels[0])
    }

    #[test]
    fn toml_round_trip() {
        let cfg = paper();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), cfg.to_toml());
    }

    #[test]
    fn flags_beat_sets_beat_preset() {
        let flags = FlagOverrides { seed: Some(9), ..Default::default() };
        let cfg = paper().layered(None, &["seed = 4".into(), "reps = 3".into()], &flags).unwrap();
        assert_eq!((cfg.seed, cfg.reps), (9, 3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(paper().layered(None, &["colour = 1".into()], &FlagOverrides::default()).is_err());
    }

    #[test]
    fn vector_specs() {
        assert_eq!(VectorSpec::Named("10*e_2".into()).resolve(3).unwrap(), vec![0.0, 10.0, 0.0]);
        assert_eq!(VectorSpec::Named("zero".into()).resolve(2).unwrap(), vec![0.0, 0.0]);
        assert!(VectorSpec::Named("ten*e_2".into()).resolve(3).is_err());
        assert!(VectorSpec::Explicit(vec![1.0]).resolve(3).is_err());
    }

    #[test]
    fn spectrum_strings() {
        let mut cfg = paper();
        cfg.spectrum = "exp:0.5".into();
        assert_eq!(cfg.spectrum_kind().unwrap(), SpectrumKind::Exponential(0.5));
        for bad in ["poly", "poly:x", "cubic:2"] {
            cfg.spectrum = bad.into();
            assert!(matches!(cfg.spectrum_kind(), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn paper_parameters() {
        let cfg = paper();
        let sp = cfg.spectrum().unwrap();
        let algs = cfg.algorithms(&sp).unwrap();
        assert_eq!(algs.len(), 2);
        assert!((algs[0].hp.c - 0.975).abs() < 1e-12);
        assert_eq!(algs[1].hp.delta, 0.1);
    }

    #[test]
    fn eigenvalue_lists() {
        assert_eq!(parse_eigenvalues("0.5, 0.25 0.125").unwrap(), vec![0.5, 0.25, 0.125]);
        assert!(parse_eigenvalues("0.5,abc").is_err());
        assert!(parse_eigenvalues("0.1,0.5").is_err());
    }
}
