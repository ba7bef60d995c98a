//! Scenario files (TOML). Rates are in units of the drive frequency.
//!
//! ```toml
//! [drive]
//! omega = 1.0
//! n_max = 5
//!
//! [dipole]
//! lines = [{ order = 1, re = 0.5, im = 0.0 }]
//!
//! [cavity]
//! q = 3
//! omega_q = 3.0
//! g_q = 0.1
//! kappa = 0.1
//! ```

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use crate::cavity::CavityParams;
use crate::correlation::Convention;
use crate::dipole::{fourier_decompose, DipoleSpectrum, DriveParams, FluctuationModel};
use crate::error::{Error, Result};
use crate::io;
use crate::oracle::{BathDiscretization, MIN_BATH_MODES, MIN_TRIALS};
use crate::series::{self, UniformGrid};
use crate::spectrum::Normalization;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub drive: DriveSection,
    pub dipole: DipoleSection,
    #[serde(default)]
    pub fluctuation: FluctuationSection,
    pub cavity: CavitySection,
    #[serde(default)]
    pub grids: GridsSection,
    #[serde(default)]
    pub conventions: ConventionsSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub omega: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub order: usize,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Exactly one of `lines`, `coeffs` or `series` must be given.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleSection {
    pub lines: Option<Vec<LineEntry>>,
    /// `[re, im]` for `N = 0..=n_max`.
    pub coeffs: Option<Vec<[f64; 2]>>,
    /// Two-column `(t, d)` CSV, relative to the config file.
    pub series: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationSection {
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub q: usize,
    pub omega_q: f64,
    pub g_q: f64,
    pub kappa: Option<f64>,
    pub g0: Option<f64>,
    pub c: Option<f64>,
}

/// Either `start`/`stop`/`points` or an explicit `values` list.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    pub t: Option<GridSpec>,
    pub tau: Option<GridSpec>,
    pub omega: Option<GridSpec>,
    /// Reference time of the two-time correlator; stationary when absent.
    pub correlation_t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionsSection {
    #[serde(default)]
    pub correlation: Convention,
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Integrate the amplitude equation and compare with the closed forms.
    #[serde(default)]
    pub crosscheck: bool,
    #[serde(default)]
    pub monte_carlo: bool,
    pub seed: Option<u64>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    pub dt: Option<f64>,
    /// Number of explicit reservoir modes; no bath run when absent.
    pub bath_modes: Option<usize>,
    /// Band half-width in units of kappa.
    #[serde(default = "default_bath_width")]
    pub bath_half_width: f64,
    /// Bath horizon in units of 1/kappa.
    #[serde(default = "default_bath_horizon")]
    pub bath_horizon: f64,
}

fn default_trials() -> usize {
    MIN_TRIALS
}

fn default_bath_width() -> f64 {
    40.0
}

fn default_bath_horizon() -> f64 {
    5.0
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            crosscheck: false,
            monte_carlo: false,
            seed: None,
            n_trials: default_trials(),
            dt: None,
            bath_modes: None,
            bath_half_width: default_bath_width(),
            bath_horizon: default_bath_horizon(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default = "yes")]
    pub occupation: bool,
    #[serde(default = "yes")]
    pub correlation: bool,
    #[serde(default = "yes")]
    pub spectrum: bool,
    #[serde(default = "yes")]
    pub power: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            occupation: true,
            correlation: true,
            spectrum: true,
            power: true,
        }
    }
}

/// Monte-Carlo settings after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSettings {
    pub seed: u64,
    pub n_trials: usize,
    pub dt: f64,
}

/// Explicit-reservoir settings after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSettings {
    pub bath: BathDiscretization,
    pub grid: UniformGrid,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: CavityParams,
    pub spectrum: DipoleSpectrum,
    pub fluct: FluctuationModel,
    pub t_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub omega_grid: Option<Vec<f64>>,
    pub correlation_t: Option<f64>,
    pub convention: Convention,
    pub normalization: Normalization,
    pub crosscheck: bool,
    pub monte_carlo: Option<MonteCarloSettings>,
    pub bath: Option<BathSettings>,
    pub outputs: OutputsSection,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(origin, e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::config(path.display().to_string(), "config is not UTF-8"))?;
        Ok((Self::from_toml(&text, &path.display().to_string())?, bytes))
    }

    /// Checks every invariant, resolving relative paths against `base_dir`.
    pub fn validate(&self, base_dir: &Path, seed_override: Option<u64>) -> Result<Scenario> {
        let drive = DriveParams::new(self.drive.omega, self.drive.n_max).map_err(|e| at("drive", e))?;
        let spectrum = self.dipole_spectrum(drive, base_dir)?;
        let fluct = FluctuationModel::new(self.fluctuation.delta).map_err(|e| at("fluctuation.delta", e))?;
        let params = self.cavity_params()?;

        let t_grid = grid_values(self.grids.t.as_ref(), "grids.t", || default_t_grid(&params))?;
        let tau_grid = grid_values(self.grids.tau.as_ref(), "grids.tau", || default_tau_grid(&params))?;
        if let Some(&tau) = tau_grid.iter().find(|&&tau| tau < 0.0) {
            return Err(Error::config("grids.tau", format!("lags must be non-negative, found {tau}")));
        }
        let omega_grid = match &self.grids.omega {
            Some(spec) => Some(grid_values(Some(spec), "grids.omega", Vec::new)?),
            None => None,
        };
        if let Some(t) = self.grids.correlation_t {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::config("grids.correlation_t", "must be a non-negative time"));
            }
        }

        let monte_carlo = if self.oracle.monte_carlo {
            let seed = seed_override.or(self.oracle.seed).ok_or_else(|| {
                Error::config("oracle.seed", "a seed is required when monte_carlo = true")
            })?;
            if self.oracle.n_trials < MIN_TRIALS {
                return Err(Error::config(
                    "oracle.n_trials",
                    format!("need at least {MIN_TRIALS} trials, got {}", self.oracle.n_trials),
                ));
            }
            let dt = self.oracle.dt.unwrap_or(0.01 / params.omega_q().max(params.kappa()));
            let limit = crate::oracle::STABILITY_LIMIT;
            if !(dt > 0.0) || dt * params.omega_q().max(params.kappa()) > limit {
                return Err(Error::config(
                    "oracle.dt",
                    format!("dt * max(omega_q, kappa) must not exceed {limit}"),
                ));
            }
            Some(MonteCarloSettings { seed, n_trials: self.oracle.n_trials, dt })
        } else {
            None
        };

        let bath = match self.oracle.bath_modes {
            Some(n) => Some(self.bath_settings(n, &params)?),
            None => None,
        };

        Ok(Scenario {
            params,
            spectrum,
            fluct,
            t_grid,
            tau_grid,
            omega_grid,
            correlation_t: self.grids.correlation_t,
            convention: self.conventions.correlation,
            normalization: self.conventions.normalization,
            crosscheck: self.oracle.crosscheck,
            monte_carlo,
            bath,
            outputs: self.outputs,
        })
    }

    fn dipole_spectrum(&self, drive: DriveParams, base_dir: &Path) -> Result<DipoleSpectrum> {
        let d = &self.dipole;
        let given: Vec<&str> = [
            d.lines.as_ref().map(|_| "dipole.lines"),
            d.coeffs.as_ref().map(|_| "dipole.coeffs"),
            d.series.as_ref().map(|_| "dipole.series"),
        ]
        .into_iter()
        .flatten()
        .collect();
        if given.len() != 1 {
            return Err(Error::config(
                "dipole",
                format!(
                    "give exactly one of `lines`, `coeffs` or `series` (found: {})",
                    if given.is_empty() { "none".to_string() } else { given.join(", ") }
                ),
            ));
        }
        if let Some(lines) = &d.lines {
            let lines: Vec<(usize, Complex64)> = lines
                .iter()
                .map(|l| (l.order, Complex64::new(l.re, l.im)))
                .collect();
            return DipoleSpectrum::from_lines(drive, &lines).map_err(|e| at("dipole.lines", e));
        }
        if let Some(coeffs) = &d.coeffs {
            let coeffs = coeffs.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
            return DipoleSpectrum::new(drive, coeffs).map_err(|e| at("dipole.coeffs", e));
        }
        let path = base_dir.join(d.series.as_ref().expect("one source given"));
        let samples = io::read_real_series(&path)?;
        fourier_decompose(&samples, drive).map_err(|e| at("dipole.series", e))
    }

    fn cavity_params(&self) -> Result<CavityParams> {
        let c = &self.cavity;
        let params = match (c.kappa, c.g0, c.c) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::config(
                    "cavity",
                    "`cavity.kappa` conflicts with `cavity.g0`/`cavity.c`; give kappa or (g0, c), not both",
                ))
            }
            (Some(kappa), None, None) => CavityParams::new(c.q, c.omega_q, c.g_q, kappa),
            (None, Some(g0), Some(cc)) => CavityParams::from_bath(c.q, c.omega_q, c.g_q, g0, cc),
            (None, Some(_), None) | (None, None, Some(_)) => {
                return Err(Error::config("cavity", "`cavity.g0` and `cavity.c` must be given together"))
            }
            (None, None, None) => {
                return Err(Error::config("cavity", "give either `cavity.kappa` or (`cavity.g0`, `cavity.c`)"))
            }
        };
        params.map_err(|e| at("cavity", e))
    }

    fn bath_settings(&self, n_modes: usize, params: &CavityParams) -> Result<BathSettings> {
        if n_modes < MIN_BATH_MODES {
            return Err(Error::config(
                "oracle.bath_modes",
                format!("need at least {MIN_BATH_MODES} modes, got {n_modes}"),
            ));
        }
        let kappa = params.kappa();
        let bath = BathDiscretization::for_target_kappa(
            n_modes,
            params.omega_q(),
            self.oracle.bath_half_width * kappa,
            kappa,
        )
        .map_err(|e| at("oracle.bath_half_width", e))?;
        if !(self.oracle.bath_horizon > 0.0) {
            return Err(Error::config("oracle.bath_horizon", "must be positive"));
        }
        let horizon = self.oracle.bath_horizon / kappa;
        let recurrence = bath.recurrence_time();
        if horizon > recurrence {
            return Err(Error::config(
                "oracle.bath_modes",
                format!(
                    "bath too small: horizon {horizon} exceeds the recurrence time 2 pi / spacing = {recurrence}; \
                     increase bath_modes or reduce bath_horizon"
                ),
            ));
        }
        let points = (self.oracle.bath_horizon * 100.0).ceil() as usize + 1;
        let grid = UniformGrid::span(0.0, horizon, points)?;
        Ok(BathSettings { bath, grid })
    }
}

fn at(path: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } | Error::Io { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn grid_values(spec: Option<&GridSpec>, path: &str, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>> {
    let Some(spec) = spec else {
        return Ok(default());
    };
    let values = match (spec.values.as_ref(), spec.start, spec.stop, spec.points) {
        (Some(v), None, None, None) => v.clone(),
        (None, Some(start), Some(stop), Some(points)) => {
            UniformGrid::span(start, stop, points).map_err(|e| at(path, e))?.times()
        }
        _ => {
            return Err(Error::config(
                path,
                "give either `values` or all of `start`, `stop`, `points`",
            ))
        }
    };
    if values.is_empty() {
        return Err(Error::config(path, "grid is empty"));
    }
    series::check_increasing(&values).map_err(|e| at(path, e))?;
    Ok(values)
}

fn default_t_grid(params: &CavityParams) -> Vec<f64> {
    let stop = 10.0 / params.kappa();
    (0..=1000).map(|k| stop * k as f64 / 1000.0).collect()
}

fn default_tau_grid(params: &CavityParams) -> Vec<f64> {
    let step = 0.01 / params.kappa();
    (0..=3000).map(|k| k as f64 * step).collect()
}
