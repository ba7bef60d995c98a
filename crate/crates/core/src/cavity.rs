//! Closed-form Langevin observables of one leaky cavity mode.
//!
//! The cavity obeys `da/dt = -(i omega_q + kappa) a + g_q d(t) + noise`, with
//! the mode and the reservoir starting in vacuum. Every quantity here is an
//! exact evaluation of the resulting solution on the non-negative harmonic
//! comb of the mean dipole.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dipole::{DipoleSpectrum, FluctuationModel};
use crate::error::{Error, Result};
use crate::io;

/// Weight of a Dirac delta sitting on the endpoint of an integration range:
/// `int_0^t f(t') delta(t - t') dt' = f(t) / 2`. The closed forms already
/// absorb it into `kappa`; the discrete-bath oracle uses it explicitly.
pub const DELTA_ENDPOINT_WEIGHT: f64 = 0.5;

/// Relative tolerance on `kappa = pi g0^2 / c` when both are supplied.
const KAPPA_CONSISTENCY_RTOL: f64 = 1e-12;

/// Reservoir coupling `g0` and dispersion speed `c` of a flat environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathCoupling {
    pub g0: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    q: usize,
    omega_q: f64,
    g_q: f64,
    kappa: f64,
    bath: Option<BathCoupling>,
}

/// Damping of a cavity leaking into a flat continuum: `kappa = g0^2 pi / c`.
pub fn kappa_from_coupling(g0: f64, c: f64) -> Result<f64> {
    if !(g0 > 0.0 && g0.is_finite()) {
        return Err(Error::param("g0", format!("must be positive, got {g0}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    Ok(g0 * g0 * PI / c)
}

impl CavityParams {
    pub fn new(q: usize, omega_q: f64, g_q: f64, kappa: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::param("q", "mode index must be positive"));
        }
        if !(omega_q > 0.0 && omega_q.is_finite()) {
            return Err(Error::param("omega_q", format!("must be positive, got {omega_q}")));
        }
        if !g_q.is_finite() {
            return Err(Error::param("g_q", "must be finite"));
        }
        if kappa == 0.0 {
            return Err(Error::NoStationaryState(kappa));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be positive, got {kappa}")));
        }
        Ok(Self {
            q,
            omega_q,
            g_q,
            kappa,
            bath: None,
        })
    }

    /// Cavity whose damping follows from the reservoir coupling.
    pub fn from_bath(q: usize, omega_q: f64, g_q: f64, g0: f64, c: f64) -> Result<Self> {
        let kappa = kappa_from_coupling(g0, c)?;
        Self::new(q, omega_q, g_q, kappa)?.with_bath(BathCoupling { g0, c })
    }

    /// Attach `(g0, c)`; they must reproduce the existing `kappa`.
    pub fn with_bath(mut self, bath: BathCoupling) -> Result<Self> {
        let implied = kappa_from_coupling(bath.g0, bath.c)?;
        if (implied - self.kappa).abs() > KAPPA_CONSISTENCY_RTOL * self.kappa {
            return Err(Error::param(
                "kappa",
                format!("g0^2 pi / c = {implied} disagrees with kappa = {}", self.kappa),
            ));
        }
        self.bath = Some(bath);
        Ok(self)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn omega_q(&self) -> f64 {
        self.omega_q
    }

    pub fn g_q(&self) -> f64 {
        self.g_q
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn bath(&self) -> Option<BathCoupling> {
        self.bath
    }

    pub fn with_omega_q(self, omega_q: f64) -> Result<Self> {
        let p = Self::new(self.q, omega_q, self.g_q, self.kappa)?;
        match self.bath {
            Some(b) => p.with_bath(b),
            None => Ok(p),
        }
    }

    /// Generator of the free cavity evolution, `-(i omega_q + kappa)`.
    pub fn propagator_rate(&self) -> Complex64 {
        Complex64::new(-self.kappa, -self.omega_q)
    }

    /// `g_q / (i (omega_q - omega) + kappa)`, the linear response at `omega`.
    pub fn response(&self, omega: f64) -> Complex64 {
        self.g_q / Complex64::new(self.kappa, self.omega_q - omega)
    }

    /// Lorentzian filter `g_q^2 / ((omega_q - omega)^2 + kappa^2)`.
    pub fn filter(&self, omega: f64) -> f64 {
        let det = self.omega_q - omega;
        self.g_q * self.g_q / (det * det + self.kappa * self.kappa)
    }
}

/// `<a_q^dagger(t)> = sum_N A_N^* [exp(i omega_N t) - exp(i omega_q t) exp(-kappa t)]`.
pub fn mode_amplitude(params: &CavityParams, spectrum: &DipoleSpectrum, t: f64) -> Complex64 {
    field_mean(params, spectrum, t).conj()
}

/// `<a_q(t)>`, the conjugate of [`mode_amplitude`].
pub(crate) fn field_mean(params: &CavityParams, spectrum: &DipoleSpectrum, t: f64) -> Complex64 {
    let transient = (params.propagator_rate() * t).exp();
    spectrum
        .harmonics()
        .map(|h| {
            let a_n = params.response(h.frequency) * h.coeff;
            a_n * (Complex64::from_polar(1.0, -h.frequency * t) - transient)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OccupationMode {
    /// `N = M` terms only, dropping the fast-oscillating cross terms.
    Diagonal,
    /// Exact squared modulus including every cross term.
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationPoint {
    pub t: f64,
    pub coherent: f64,
    pub noise: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationCurve {
    pub mode: OccupationMode,
    pub points: Vec<OccupationPoint>,
}

impl OccupationCurve {
    /// CSV with columns `t, coherent, noise, total`.
    pub fn to_csv(&self) -> Result<String> {
        io::csv_string(
            &[],
            &["t", "coherent", "noise", "total"],
            self.points.iter().map(|p| vec![p.t, p.coherent, p.noise, p.total]),
        )
    }
}

/// Photon number of the cavity at time `t`, split into the part driven by the
/// mean dipole and the part fed by dipole fluctuations.
pub fn occupation(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
    t: f64,
    mode: OccupationMode,
) -> OccupationPoint {
    let coherent = match mode {
        OccupationMode::Full => coherent_full(params, spectrum, t),
        OccupationMode::Diagonal => coherent_diagonal(params, spectrum, t),
    };
    let noise = dipole_noise_occupation(params, fluct, t);
    OccupationPoint {
        t,
        coherent,
        noise,
        total: coherent + noise,
    }
}

pub fn occupation_curve(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
    times: &[f64],
    mode: OccupationMode,
) -> OccupationCurve {
    OccupationCurve {
        mode,
        points: times
            .iter()
            .map(|&t| occupation(params, spectrum, fluct, t, mode))
            .collect(),
    }
}

// g^2 e^{-2 kappa t} |sum_N d_N (e^{i(wq-wN)t + kappa t} - 1)/(i(wq-wN)+kappa)|^2,
// with e^{-kappa t} moved inside the bracket so large kappa t cannot overflow.
fn coherent_full(params: &CavityParams, spectrum: &DipoleSpectrum, t: f64) -> f64 {
    let decay = (-params.kappa() * t).exp();
    let sum: Complex64 = spectrum
        .harmonics()
        .map(|h| {
            let det = params.omega_q() - h.frequency;
            let bracket = Complex64::from_polar(1.0, det * t) - decay;
            h.coeff * bracket / Complex64::new(params.kappa(), det)
        })
        .sum();
    params.g_q() * params.g_q() * sum.norm_sqr()
}

fn coherent_diagonal(params: &CavityParams, spectrum: &DipoleSpectrum, t: f64) -> f64 {
    let decay = (-params.kappa() * t).exp();
    spectrum
        .harmonics()
        .map(|h| {
            let det = params.omega_q() - h.frequency;
            let envelope = 1.0 + decay * decay - 2.0 * decay * (det * t).cos();
            h.coeff.norm_sqr() * params.filter(h.frequency) * envelope
        })
        .sum()
}

/// Stationary photon number `g^2 [sum_N |d_N|^2 / (det_N^2 + kappa^2) + delta / (2 kappa)]`.
pub fn occupation_longtime(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
) -> f64 {
    let coherent: f64 = spectrum
        .harmonics()
        .map(|h| h.coeff.norm_sqr() * params.filter(h.frequency))
        .sum();
    coherent + noise_saturation(params, fluct)
}

/// Noise-fed occupation `delta g^2 / (2 kappa) (1 - exp(-2 kappa t))`.
pub fn dipole_noise_occupation(params: &CavityParams, fluct: &FluctuationModel, t: f64) -> f64 {
    noise_saturation(params, fluct) * -(-2.0 * params.kappa() * t).exp_m1()
}

/// `C_delta = delta g^2 / (2 kappa)`.
pub fn noise_saturation(params: &CavityParams, fluct: &FluctuationModel) -> f64 {
    fluct.delta() * params.g_q() * params.g_q() / (2.0 * params.kappa())
}
