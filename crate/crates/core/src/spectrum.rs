//! Power spectrum of the cavity output: coherent harmonic lines plus the
//! Lorentzian continuum fed by dipole fluctuations.
//!
//! Two continuum normalizations exist. `AsWritten` uses
//! `S_delta = 2 C_delta kappa / ((omega - omega_q)^2 + kappa^2)`, whose
//! integral is the radiated fluctuation power. `WktConsistent` divides by
//! `pi`, which is what the half-range transform
//! `(1/pi) Re int_0^inf C(tau) exp(i omega tau) dtau` of the stationary
//! correlator produces. Line weights are the same under both.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{self, CavityParams};
use crate::correlation::CorrelationSeries;
use crate::dipole::{DipoleSpectrum, FluctuationModel};
use crate::error::{Error, Result};
use crate::io;
use crate::series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    AsWritten,
    WktConsistent,
}

impl Normalization {
    pub const ALL: [Normalization; 2] = [Normalization::AsWritten, Normalization::WktConsistent];

    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::AsWritten => "as-written",
            Normalization::WktConsistent => "wkt-consistent",
        }
    }

    fn continuum_scale(&self) -> f64 {
        match self {
            Normalization::AsWritten => 1.0,
            Normalization::WktConsistent => 1.0 / PI,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::param("normalization", format!("unknown normalization `{s}`")))
    }
}

/// A Dirac line `weight * delta(omega - frequency)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub order: usize,
    pub frequency: f64,
    pub weight: f64,
}

/// Real spectrum sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSpectrum {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledSpectrum {
    fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.omega.partition_point(|&w| w < lo);
        let end = self.omega.partition_point(|&w| w <= hi);
        start..end.max(start)
    }

    /// Index of the largest sample with `lo <= omega <= hi`.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<usize> {
        self.index_range(lo, hi)
            .max_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
    }

    /// Sample nearest to `omega`.
    pub fn nearest(&self, omega: f64) -> Option<usize> {
        (0..self.omega.len()).min_by(|&a, &b| {
            (self.omega[a] - omega)
                .abs()
                .total_cmp(&(self.omega[b] - omega).abs())
        })
    }

    /// Full width at half maximum of the peak at `peak`, with the crossings
    /// located by linear interpolation between samples.
    pub fn fwhm(&self, peak: usize) -> Option<f64> {
        let half = 0.5 * self.values[peak];
        let crossing = |i: usize, j: usize| {
            let (w0, w1) = (self.omega[i], self.omega[j]);
            let (v0, v1) = (self.values[i], self.values[j]);
            w0 + (half - v0) * (w1 - w0) / (v1 - v0)
        };
        let left = (1..=peak).rev().find(|&i| self.values[i - 1] < half)?;
        let right = (peak..self.omega.len() - 1).find(|&i| self.values[i + 1] < half)?;
        Some(crossing(right, right + 1) - crossing(left - 1, left))
    }

    /// Trapezoidal integral over `[lo, hi]` restricted to grid samples.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let r = self.index_range(lo, hi);
        series::trapezoid(&self.omega[r.clone()], &self.values[r])
    }

    pub fn to_csv(&self, value_label: &str) -> Result<String> {
        io::csv_string(
            &[],
            &["omega", value_label],
            self.omega.iter().zip(&self.values).map(|(&w, &s)| vec![w, s]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridWarning {
    /// The grid ends within `5 kappa` of the cavity frequency.
    CoreNotCovered { edge: f64, omega_q: f64, kappa: f64 },
    /// The grid misses part of `[0, max(omega_N, omega_q) + 10 kappa]`.
    RangeNotCovered { lo: f64, hi: f64 },
}

impl fmt::Display for GridWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridWarning::CoreNotCovered { edge, omega_q, kappa } => write!(
                f,
                "grid edge {edge} lies within 5 kappa of omega_q = {omega_q} (kappa = {kappa})"
            ),
            GridWarning::RangeNotCovered { lo, hi } => {
                write!(f, "grid does not cover [{lo}, {hi}]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub lines: Vec<SpectralLine>,
    pub continuum: SampledSpectrum,
    pub normalization: Normalization,
    /// Whether a DC line (`N = 0`) is present among `lines`.
    pub includes_dc: bool,
    pub warnings: Vec<GridWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub lines: Vec<[f64; 2]>,
    pub continuum: Vec<[f64; 2]>,
    pub normalization: Normalization,
    pub includes_dc: bool,
    pub warnings: Vec<String>,
}

impl SpectrumResult {
    pub fn to_document(&self) -> SpectrumDocument {
        SpectrumDocument {
            lines: self.lines.iter().map(|l| [l.frequency, l.weight]).collect(),
            continuum: self
                .continuum
                .omega
                .iter()
                .zip(&self.continuum.values)
                .map(|(&w, &s)| [w, s])
                .collect(),
            normalization: self.normalization,
            includes_dc: self.includes_dc,
            warnings: self.warnings.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn lines_csv(&self) -> Result<String> {
        io::csv_string(
            &[format!("normalization={}", self.normalization)],
            &["omega", "weight"],
            self.lines.iter().map(|l| vec![l.frequency, l.weight]),
        )
    }

    pub fn continuum_csv(&self) -> Result<String> {
        io::csv_string(
            &[format!("normalization={}", self.normalization)],
            &["omega", "s"],
            self.continuum
                .omega
                .iter()
                .zip(&self.continuum.values)
                .map(|(&w, &s)| vec![w, s]),
        )
    }
}

/// Uniform grid with spacing `kappa / 20` over `[0, max(omega_N, omega_q) + 10 kappa]`.
pub fn default_omega_grid(params: &CavityParams, spectrum: &DipoleSpectrum) -> Vec<f64> {
    let kappa = params.kappa();
    let step = kappa / 20.0;
    let top = highest_frequency(params, spectrum) + 10.0 * kappa;
    let n = (top / step).ceil() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn highest_frequency(params: &CavityParams, spectrum: &DipoleSpectrum) -> f64 {
    spectrum
        .lines()
        .map(|h| h.frequency)
        .fold(params.omega_q(), f64::max)
}

/// Continuum `S_delta(omega)` under the given normalization.
pub fn continuum_value(
    params: &CavityParams,
    fluct: &FluctuationModel,
    omega: f64,
    normalization: Normalization,
) -> f64 {
    let kappa = params.kappa();
    let det = omega - params.omega_q();
    let c_delta = cavity::noise_saturation(params, fluct);
    normalization.continuum_scale() * 2.0 * c_delta * kappa / (det * det + kappa * kappa)
}

pub fn power_spectrum(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
    omega_grid: &[f64],
    normalization: Normalization,
) -> Result<SpectrumResult> {
    series::check_increasing(omega_grid)?;
    if omega_grid.is_empty() {
        return Err(Error::param("omega_grid", "empty frequency grid"));
    }
    let kappa = params.kappa();
    let omega_q = params.omega_q();
    let (lo, hi) = (omega_grid[0], omega_grid[omega_grid.len() - 1]);

    let mut warnings = Vec::new();
    for edge in [lo, hi] {
        if (edge - omega_q).abs() < 5.0 * kappa || !(lo..=hi).contains(&omega_q) {
            warnings.push(GridWarning::CoreNotCovered { edge, omega_q, kappa });
            break;
        }
    }
    let need_hi = highest_frequency(params, spectrum) + 10.0 * kappa;
    if lo > 0.0 || hi < need_hi {
        warnings.push(GridWarning::RangeNotCovered { lo: 0.0, hi: need_hi });
    }

    let lines: Vec<SpectralLine> = spectrum
        .lines()
        .map(|h| SpectralLine {
            order: h.order,
            frequency: h.frequency,
            weight: h.coeff.norm_sqr() * params.filter(h.frequency),
        })
        .collect();
    let values = omega_grid
        .iter()
        .map(|&w| continuum_value(params, fluct, w, normalization))
        .collect();
    Ok(SpectrumResult {
        includes_dc: lines.iter().any(|l| l.order == 0),
        lines,
        continuum: SampledSpectrum {
            omega: omega_grid.to_vec(),
            values,
        },
        normalization,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub p_coherent: f64,
    pub p_fluctuation: f64,
    pub p_total: f64,
    pub p_fluctuation_max: f64,
    pub normalization: Normalization,
}

/// Radiated power: line weights, the integral of the continuum over
/// `omega >= 0`, and the `omega_q >> kappa` bound of the latter.
///
/// The bound is `c delta (g_q / g0)^2` when the reservoir coupling is known
/// and `delta pi g_q^2 / kappa` otherwise; the two agree since
/// `kappa = pi g0^2 / c`.
pub fn integrated_power(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
    normalization: Normalization,
) -> PowerReport {
    let scale = normalization.continuum_scale();
    let p_coherent: f64 = spectrum
        .lines()
        .map(|h| h.coeff.norm_sqr() * params.filter(h.frequency))
        .sum();
    let c_delta = cavity::noise_saturation(params, fluct);
    let p_fluctuation =
        scale * 2.0 * c_delta * (FRAC_PI_2 + (params.omega_q() / params.kappa()).atan());
    let g = params.g_q();
    let bound = match params.bath() {
        Some(b) => b.c * fluct.delta() * (g / b.g0).powi(2),
        None => fluct.delta() * PI * g * g / params.kappa(),
    };
    PowerReport {
        p_coherent,
        p_fluctuation,
        p_total: p_coherent + p_fluctuation,
        p_fluctuation_max: scale * bound,
        normalization,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Window {
    #[default]
    None,
    /// Multiply the correlator by `exp(-rate * tau)`.
    ExponentialTaper { rate: f64 },
}

impl Window {
    fn factor(&self, tau: f64) -> f64 {
        match *self {
            Window::None => 1.0,
            Window::ExponentialTaper { rate } => (-rate * tau).exp(),
        }
    }
}

/// Half-range transform `S(omega) = (1/pi) Re[sum_j w_j C(tau_j) exp(i omega tau_j)]`
/// of a stationary correlator, with trapezoidal weights `w_j`.
pub fn spectrum_from_correlation(
    series: &CorrelationSeries,
    omega_grid: &[f64],
    window: Window,
) -> Result<SampledSpectrum> {
    if !series.is_stationary() {
        return Err(Error::NotStationary);
    }
    if let Window::ExponentialTaper { rate } = window {
        if !(rate >= 0.0) {
            return Err(Error::param("window", "taper rate must be non-negative"));
        }
    }
    let dtau = series::uniform_step(&series.taus)?;
    if series.taus[0] != 0.0 {
        return Err(Error::param("taus", "the half-range transform needs tau_0 = 0"));
    }
    let n = series.taus.len();
    let weighted: Vec<(f64, Complex64)> = series
        .taus
        .iter()
        .zip(&series.values)
        .enumerate()
        .map(|(j, (&tau, &v))| (tau, v * series::trapezoid_weight(j, n, dtau) * window.factor(tau)))
        .collect();
    let values = omega_grid
        .iter()
        .map(|&w| {
            let sum: f64 = weighted
                .iter()
                .map(|&(tau, v)| (v * Complex64::from_polar(1.0, w * tau)).re)
                .sum();
            sum / PI
        })
        .collect();
    Ok(SampledSpectrum {
        omega: omega_grid.to_vec(),
        values,
    })
}

/// Effective length `sum_j w_j window(tau_j)` of the transform window. A
/// coherent line of weight `W` sampled at its own frequency has height
/// `W * length / pi`.
pub fn window_length(taus: &[f64], window: Window) -> Result<f64> {
    let dtau = series::uniform_step(taus)?;
    let n = taus.len();
    Ok(taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| series::trapezoid_weight(j, n, dtau) * window.factor(tau))
        .sum())
}
