//! Experiment parameters from a flat TOML file and command-line flags.
//!
//! Precedence, lowest first: built-in defaults, `preset`, config file,
//! flags. Every subcommand resolves its parameters into a typed plan before
//! any numerics run.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use wickpt::dimer::DimerParams;
use wickpt::lattice::{build_grid, Grid, MirrorSamples, PotentialSpec};
use wickpt::roundtrip::PhysicalConfig;
use wickpt::spectra::ScanSettings;

use crate::error::{config_err, AppError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Squire,
    Doublewell,
    MirrorFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// He-Ne cavity with a 250 μm aperture.
    Hene,
    /// Squire well, u = 6, g0 = 0.25.
    Fig2,
    /// Quartic double well, g0 = 0.05, dt = 0.2, t_end = 20000.
    Fig3,
}

/// Every tunable parameter. All fields are optional so that a file, a
/// preset and the flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Two- or three-column CSV `x, R[, Delta]` for `--model mirror-file`.
    #[arg(long)]
    pub mirror_csv: Option<PathBuf>,
    /// Squire half-width.
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    /// Half-width of the double-well box.
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Grid points.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of eigenvalues.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    pub gamma_steps: Option<usize>,
    /// Explicit list of tilts; each evolve run gets its own subdirectory.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub g0: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial noise amplitude.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Steps between intensity snapshots; 0 disables the heatmap.
    #[arg(long)]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// `sigma = sigma_slope * gamma` when only `gamma` is given.
    #[arg(long)]
    pub sigma_slope: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Sweep range of `sigma / kappa`.
    #[arg(long)]
    pub ratio_min: Option<f64>,
    #[arg(long)]
    pub ratio_max: Option<f64>,
    #[arg(long)]
    pub ratio_steps: Option<usize>,
    /// Wavelength (m).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Lens focal length (m).
    #[arg(long)]
    pub focal_length: Option<f64>,
    /// Aperture size (m).
    #[arg(long)]
    pub aperture: Option<f64>,
    /// Cavity length (m).
    #[arg(long)]
    pub cavity_length: Option<f64>,
}

macro_rules! overlay {
    ($low:expr, $high:expr; $($f:ident),*) => {
        Params { $($f: $high.$f.or($low.$f)),* }
    };
}

impl Params {
    /// Fields set in `high` win.
    pub fn overlay(self, high: Params) -> Params {
        overlay!(self, high; preset, model, mirror_csv, u, beta, x0, half_width, n, k, gamma, gamma_min,
            gamma_max, gamma_steps, gammas, g0, dt, t_end, seed, noise, snapshot_stride, q, kappa, sigma,
            sigma_slope, rho, ratio_min, ratio_max, ratio_steps, lambda, focal_length, aperture, cavity_length)
    }

    pub fn from_file(path: &Path) -> Result<Params, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let key = e.span().and_then(|span| key_at(&text, span.start));
            match key {
                Some(k) => config_err(format!("{}: key `{k}`: {}", path.display(), e.message())),
                None => config_err(format!("{}: {}", path.display(), e.message())),
            }
        })
    }

    fn preset_values(preset: Preset) -> Params {
        match preset {
            Preset::Hene => Params::default(),
            Preset::Fig2 => Params {
                model: Some(Model::Squire),
                u: Some(6.0),
                g0: Some(0.25),
                ..Params::default()
            },
            Preset::Fig3 => Params {
                model: Some(Model::Doublewell),
                beta: Some(7e-6),
                x0: Some(10.0),
                g0: Some(0.05),
                dt: Some(0.2),
                t_end: Some(20_000.0),
                ..Params::default()
            },
        }
    }

    /// Layers the preset (if any) underneath the already merged values.
    pub fn with_preset(self) -> Params {
        match self.preset {
            Some(p) => Params::preset_values(p).overlay(self),
            None => self,
        }
    }

    pub fn model(&self) -> Model {
        self.model.unwrap_or(Model::Squire)
    }

    fn positive(name: &str, v: Option<f64>) -> Result<(), AppError> {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(config_err(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        }
    }

    fn finite(name: &str, v: Option<f64>) -> Result<(), AppError> {
        match v {
            Some(x) if !x.is_finite() => Err(config_err(format!("{name} must be finite, got {x}"))),
            _ => Ok(()),
        }
    }

    /// Checks that hold for every subcommand.
    pub fn check(&self) -> Result<(), AppError> {
        let model = self.model();
        if self.mirror_csv.is_some() && model != Model::MirrorFile {
            return Err(config_err("mirror_csv given but model is not mirror-file"));
        }
        if model == Model::MirrorFile && self.mirror_csv.is_none() {
            return Err(config_err("model mirror-file needs mirror_csv"));
        }
        if model != Model::Squire && self.u.is_some() {
            return Err(config_err("u applies only to the squire model"));
        }
        if model != Model::Doublewell
            && (self.beta.is_some() || self.x0.is_some() || self.half_width.is_some())
        {
            return Err(config_err(
                "beta, x0 and half_width apply only to the doublewell model",
            ));
        }
        for (name, v) in [
            ("u", self.u),
            ("beta", self.beta),
            ("x0", self.x0),
            ("half_width", self.half_width),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("noise", self.noise),
            ("kappa", self.kappa),
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("focal_length", self.focal_length),
            ("aperture", self.aperture),
            ("cavity_length", self.cavity_length),
        ] {
            Self::positive(name, v)?;
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma_min", self.gamma_min),
            ("gamma_max", self.gamma_max),
            ("g0", self.g0),
            ("q", self.q),
            ("sigma", self.sigma),
            ("sigma_slope", self.sigma_slope),
            ("ratio_min", self.ratio_min),
            ("ratio_max", self.ratio_max),
        ] {
            Self::finite(name, v)?;
        }
        if let (Some(lo), Some(hi)) = (self.gamma_min, self.gamma_max) {
            if lo >= hi {
                return Err(config_err(format!(
                    "gamma range needs gamma_min < gamma_max, got [{lo}, {hi}]"
                )));
            }
        }
        if let (Some(lo), Some(hi)) = (self.ratio_min, self.ratio_max) {
            if lo >= hi {
                return Err(config_err(format!(
                    "ratio range needs ratio_min < ratio_max, got [{lo}, {hi}]"
                )));
            }
        }
        if let Some(gs) = &self.gammas {
            if gs.is_empty() || gs.iter().any(|g| !g.is_finite()) {
                return Err(config_err(
                    "gammas must be a non-empty list of finite values",
                ));
            }
        }
        if self.n.is_some_and(|n| n < 8) {
            return Err(config_err("n must be at least 8"));
        }
        if self.k == Some(0) {
            return Err(config_err("k must be at least 1"));
        }
        Ok(())
    }

    /// Potential family (tilt zero) and its grid.
    pub fn family(&self) -> Result<(PotentialSpec, Grid), AppError> {
        let (spec, grid) = match self.model() {
            Model::Squire => {
                let u = self.u.unwrap_or(6.0);
                (
                    PotentialSpec::SquireWell { u, gamma: 0.0 },
                    build_grid(-u, u, self.n.unwrap_or(2000))?,
                )
            }
            Model::Doublewell => {
                let half = self.half_width.unwrap_or(30.0);
                (
                    PotentialSpec::QuarticDoubleWell {
                        beta: self.beta.unwrap_or(7e-6),
                        x0: self.x0.unwrap_or(10.0),
                        gamma: 0.0,
                    },
                    build_grid(-half, half, self.n.unwrap_or(3000))?,
                )
            }
            Model::MirrorFile => {
                let path = self.mirror_csv.as_ref().expect("checked");
                let samples = MirrorSamples::from_csv(path)?;
                let grid = build_grid(
                    samples.x[0],
                    samples.x[samples.x.len() - 1],
                    self.n.unwrap_or(1000),
                )?;
                (samples.to_spec(&grid, 0.0)?, grid)
            }
        };
        spec.validate()?;
        Ok((spec, grid))
    }

    pub fn default_g0(&self) -> f64 {
        self.g0.unwrap_or(match self.model() {
            Model::Doublewell => 0.05,
            _ => 0.25,
        })
    }

    /// `gammas`, else an inclusive range, else the single `gamma`.
    pub fn gamma_list(&self, default_range: (f64, f64, usize)) -> Result<Vec<f64>, AppError> {
        if let Some(gs) = &self.gammas {
            return Ok(gs.clone());
        }
        if self.gamma_min.is_none() && self.gamma_max.is_none() {
            if let Some(g) = self.gamma {
                return Ok(vec![g]);
            }
        }
        let lo = self.gamma_min.unwrap_or(default_range.0);
        let hi = self.gamma_max.unwrap_or(default_range.1);
        let steps = self.gamma_steps.unwrap_or(default_range.2);
        linspace(lo, hi, steps, "gamma")
    }

    pub fn scan_settings(&self) -> ScanSettings {
        let mut s = match self.model() {
            Model::Doublewell => ScanSettings::double_well(),
            _ => ScanSettings::squire(),
        };
        if let Some(k) = self.k {
            s.k = k;
        }
        s
    }

    /// Dimer parameters. Defaults are the reduced double-well values.
    pub fn dimer(&self) -> Result<DimerParams, AppError> {
        let sigma = match (self.sigma, self.gamma) {
            (Some(s), _) => s,
            (None, Some(g)) => self.sigma_slope.unwrap_or(7.72) * g,
            (None, None) => 0.0,
        };
        let p = DimerParams::from_gain(
            self.g0.unwrap_or(0.05),
            self.q.unwrap_or(0.0469),
            self.kappa.unwrap_or(0.00515),
            sigma,
            self.rho.unwrap_or(0.074),
        );
        p.validate()?;
        Ok(p)
    }

    pub fn physical(&self) -> Result<PhysicalConfig, AppError> {
        let base = PhysicalConfig::he_ne();
        let cfg = PhysicalConfig {
            lambda: self.lambda.unwrap_or(base.lambda),
            f: self.focal_length.unwrap_or(base.f),
            w_a: self.aperture.unwrap_or(base.w_a),
            cavity_length: self.cavity_length.unwrap_or(base.cavity_length),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Key on the `key = value` line containing byte offset `pos`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let start = text[..pos.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    Some(key.trim().to_string())
}

/// `steps` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize, name: &str) -> Result<Vec<f64>, AppError> {
    if steps == 0 {
        return Err(config_err(format!("{name}_steps must be at least 1")));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    if lo >= hi {
        return Err(config_err(format!("{name} range [{lo}, {hi}] is empty")));
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Params = toml::from_str("model = \"doublewell\"\ng0 = 0.1\nn = 500\n").unwrap();
        let flags = Params {
            g0: Some(0.2),
            ..Params::default()
        };
        let p = file.overlay(flags);
        assert_eq!(p.g0, Some(0.2));
        assert_eq!(p.n, Some(500));
        assert_eq!(p.model, Some(Model::Doublewell));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<Params>("gama = 0.1\n").unwrap_err();
        assert!(err.message().contains("gama"), "{}", err.message());
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let text = "g0 = 0.2\nn = \"many\"\n";
        let err = toml::from_str::<Params>(text).unwrap_err();
        assert_eq!(
            key_at(text, err.span().unwrap().start).as_deref(),
            Some("n")
        );
    }

    #[test]
    fn preset_sits_below_explicit_values() {
        let p = Params {
            preset: Some(Preset::Fig3),
            g0: Some(0.07),
            ..Params::default()
        }
        .with_preset();
        assert_eq!(p.g0, Some(0.07));
        assert_eq!(p.dt, Some(0.2));
        assert_eq!(p.model(), Model::Doublewell);
    }

    #[test]
    fn conflicting_model_parameters() {
        let p = Params {
            model: Some(Model::Squire),
            beta: Some(1e-5),
            ..Params::default()
        };
        assert!(p.check().is_err());
        let p = Params {
            mirror_csv: Some("m.csv".into()),
            ..Params::default()
        };
        assert!(p.check().is_err());
    }

    #[test]
    fn reversed_gamma_range() {
        let p = Params {
            gamma_min: Some(0.08),
            gamma_max: Some(0.03),
            ..Params::default()
        };
        assert!(p.check().is_err());
    }

    #[test]
    fn gamma_list_sources() {
        let p = Params {
            gamma: Some(0.04),
            ..Params::default()
        };
        assert_eq!(p.gamma_list((0.0, 1.0, 3)).unwrap(), vec![0.04]);
        let p = Params::default();
        assert_eq!(p.gamma_list((0.0, 1.0, 3)).unwrap(), vec![0.0, 0.5, 1.0]);
    }
}
