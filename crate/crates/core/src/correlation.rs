//! Two-time field correlations `<a_q^dagger(t) a_q(t + tau)>` from the
//! quantum regression theorem.
//!
//! The regression solution evaluated at `tau = 0` reads
//! `<N(t)> + C_delta (1 - exp(-2 kappa t))`, one noise term more than the
//! photon number itself. Both readings are available through
//! [`Convention`]: `AsWritten` keeps the extra term (stationary weight
//! `2 C_delta`), `TauZeroConsistent` drops it (stationary weight `C_delta`).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{self, CavityParams, OccupationMode};
use crate::dipole::{DipoleSpectrum, FluctuationModel};
use crate::error::{Error, Result};
use crate::io;
use crate::series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    #[default]
    AsWritten,
    TauZeroConsistent,
}

impl Convention {
    pub const ALL: [Convention; 2] = [Convention::AsWritten, Convention::TauZeroConsistent];

    pub fn as_str(&self) -> &'static str {
        match self {
            Convention::AsWritten => "as-written",
            Convention::TauZeroConsistent => "tau-zero-consistent",
        }
    }

    /// Multiplier of `C_delta exp(-(i omega_q + kappa) tau)` in the stationary correlator.
    pub fn stationary_noise_factor(&self) -> f64 {
        match self {
            Convention::AsWritten => 2.0,
            Convention::TauZeroConsistent => 1.0,
        }
    }

    /// Multiplier of the explicit noise term added on top of `<N(t)>`.
    fn extra_noise_factor(&self) -> f64 {
        self.stationary_noise_factor() - 1.0
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::param("convention", format!("unknown convention `{s}`")))
    }
}

/// Response coefficients `A_N = g_q d_N / (i (omega_q - omega_N) + kappa)`
/// and the incoherent weight `C_delta = delta g_q^2 / (2 kappa)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCoefficients {
    pub a_n: Vec<Complex64>,
    pub c_delta: f64,
}

impl CorrelationCoefficients {
    /// `sum_N |A_N|^2`.
    pub fn coherent_weight(&self) -> f64 {
        self.a_n.iter().map(|a| a.norm_sqr()).sum()
    }
}

pub fn coefficients(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
) -> CorrelationCoefficients {
    CorrelationCoefficients {
        a_n: spectrum
            .harmonics()
            .map(|h| params.response(h.frequency) * h.coeff)
            .collect(),
        c_delta: cavity::noise_saturation(params, fluct),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Stationary,
    Time(f64),
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Stationary => f.write_str("stationary"),
            Reference::Time(t) => f.write_str(&io::fmt_num(*t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub taus: Vec<f64>,
    pub values: Vec<Complex64>,
    pub reference: Reference,
    pub convention: Convention,
}

impl CorrelationSeries {
    pub fn is_stationary(&self) -> bool {
        self.reference == Reference::Stationary
    }

    /// Two-sided series on `-tau_max..=tau_max` using `C(-tau) = conj(C(tau))`.
    /// Requires the grid to start at `tau = 0`.
    pub fn hermitian_extension(&self) -> Result<(Vec<f64>, Vec<Complex64>)> {
        if self.taus.first() != Some(&0.0) {
            return Err(Error::param("taus", "Hermitian extension needs tau_0 = 0"));
        }
        let n = self.taus.len();
        let mut taus = Vec::with_capacity(2 * n - 1);
        let mut values = Vec::with_capacity(2 * n - 1);
        for i in (1..n).rev() {
            taus.push(-self.taus[i]);
            values.push(self.values[i].conj());
        }
        taus.extend_from_slice(&self.taus);
        values.extend_from_slice(&self.values);
        Ok((taus, values))
    }

    /// CSV with `#convention=` and `#t=` header lines, then `tau, re, im`.
    pub fn to_csv(&self) -> Result<String> {
        io::csv_string(
            &[
                format!("convention={}", self.convention),
                format!("t={}", self.reference),
            ],
            &["tau", "re", "im"],
            self.taus
                .iter()
                .zip(&self.values)
                .map(|(&tau, v)| vec![tau, v.re, v.im]),
        )
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if let Some(&tau) = taus.iter().find(|&&tau| tau < 0.0) {
        return Err(Error::NegativeLag(tau));
    }
    series::check_increasing(taus)
}

/// Regression-theorem correlator at reference time `t` for each lag in `taus`.
///
/// The mean-dipole drive integral is evaluated in closed form per harmonic,
/// cross terms between harmonics are kept.
pub fn two_time_correlation(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
    t: f64,
    taus: &[f64],
    convention: Convention,
) -> Result<CorrelationSeries> {
    if !(t >= 0.0) {
        return Err(Error::param("t", format!("reference time must be non-negative, got {t}")));
    }
    check_taus(taus)?;
    let coeffs = coefficients(params, spectrum, fluct);
    let n_t = cavity::occupation(params, spectrum, fluct, t, OccupationMode::Full).total;
    let adag = cavity::mode_amplitude(params, spectrum, t);
    let extra = convention.extra_noise_factor() * cavity::dipole_noise_occupation(params, fluct, t);
    let rate = params.propagator_rate();

    let values = taus
        .iter()
        .map(|&tau| {
            let free = (rate * tau).exp();
            let driven: Complex64 = spectrum
                .harmonics()
                .zip(&coeffs.a_n)
                .map(|(h, &a)| {
                    a * Complex64::from_polar(1.0, -h.frequency * t)
                        * (Complex64::from_polar(1.0, -h.frequency * tau) - free)
                })
                .sum();
            free * (n_t + extra) + adag * driven
        })
        .collect();
    Ok(CorrelationSeries {
        taus: taus.to_vec(),
        values,
        reference: Reference::Time(t),
        convention,
    })
}

/// Long-time correlator `sum_N |A_N|^2 exp(-i omega_N tau) + s C_delta exp(-(i omega_q + kappa) tau)`,
/// with `N != M` cross terms dropped.
pub fn stationary_correlation(
    params: &CavityParams,
    spectrum: &DipoleSpectrum,
    fluct: &FluctuationModel,
    taus: &[f64],
    convention: Convention,
) -> Result<CorrelationSeries> {
    check_taus(taus)?;
    let coeffs = coefficients(params, spectrum, fluct);
    let noise_weight = convention.stationary_noise_factor() * coeffs.c_delta;
    let rate = params.propagator_rate();
    let values = taus
        .iter()
        .map(|&tau| {
            let coherent: Complex64 = spectrum
                .harmonics()
                .zip(&coeffs.a_n)
                .map(|(h, a)| a.norm_sqr() * Complex64::from_polar(1.0, -h.frequency * tau))
                .sum();
            coherent + noise_weight * (rate * tau).exp()
        })
        .collect();
    Ok(CorrelationSeries {
        taus: taus.to_vec(),
        values,
        reference: Reference::Stationary,
        convention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dipole::DriveParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn drive() -> DriveParams {
        DriveParams::new(1.0, 7).unwrap()
    }

    fn lines() -> DipoleSpectrum {
        DipoleSpectrum::from_lines(drive(), &[(1, c(0.9, 0.2)), (3, c(0.4, -0.3)), (6, c(0.1, 0.1))])
            .unwrap()
    }

    #[test]
    fn resonant_coefficient_is_real() {
        let p = CavityParams::new(1, 1.0, 0.05, 0.1).unwrap();
        let s = DipoleSpectrum::from_lines(drive(), &[(1, c(1.0, 0.0))]).unwrap();
        let k = coefficients(&p, &s, &FluctuationModel::none());
        assert!((k.a_n[1] - c(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(k.c_delta, 0.0);
    }

    #[test]
    fn detuned_by_kappa() {
        let kappa = 0.2;
        let g = 0.05;
        let p = CavityParams::new(1, 1.0 + kappa, g, kappa).unwrap();
        let s = DipoleSpectrum::from_lines(drive(), &[(1, c(1.0, 0.0))]).unwrap();
        let k = coefficients(&p, &s, &FluctuationModel::none());
        assert!((k.a_n[1].norm() - g / (kappa * 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn tau_zero_consistent_matches_occupation() {
        let p = CavityParams::new(3, 3.0, 0.08, 0.15).unwrap();
        let f = FluctuationModel::new(0.3).unwrap();
        for &t in &[0.0, 1.0, 12.0, 60.0] {
            let cs = two_time_correlation(&p, &lines(), &f, t, &[0.0], Convention::TauZeroConsistent).unwrap();
            let n = cavity::occupation(&p, &lines(), &f, t, OccupationMode::Full).total;
            assert_eq!(cs.values[0], c(n, 0.0));

            let aw = two_time_correlation(&p, &lines(), &f, t, &[0.0], Convention::AsWritten).unwrap();
            let extra = cavity::dipole_noise_occupation(&p, &f, t);
            assert!((aw.values[0].re - n - extra).abs() < 1e-15);
        }
    }

    #[test]
    fn coherent_two_time_is_product_of_amplitudes() {
        // With no noise the correlator factorizes into <a^dag(t)> <a(t+tau)>.
        let p = CavityParams::new(3, 2.7, 0.1, 0.08).unwrap();
        let f = FluctuationModel::none();
        let s = lines();
        let taus: Vec<f64> = (0..40).map(|i| i as f64 * 0.73).collect();
        for &t in &[0.0, 3.3, 41.0] {
            let cs = two_time_correlation(&p, &s, &f, t, &taus, Convention::AsWritten).unwrap();
            let scale = cs.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            for (&tau, v) in taus.iter().zip(&cs.values) {
                let oracle =
                    cavity::mode_amplitude(&p, &s, t) * cavity::mode_amplitude(&p, &s, t + tau).conj();
                assert!((v - oracle).norm() <= 1e-10 * scale, "t={t} tau={tau}");
            }
        }
    }

    #[test]
    fn drive_integral_matches_quadrature() {
        // int_0^tau exp(rate (tau - s)) <d(t + s)>_+ ds by composite Simpson.
        let p = CavityParams::new(3, 2.7, 0.1, 0.08).unwrap();
        let s = lines();
        let (t, tau) = (5.0, 7.5);
        let m = 20_000;
        let h = tau / m as f64;
        let rate = p.propagator_rate();
        let integrand = |x: f64| (rate * (tau - x)).exp() * s.analytic_value(t + x);
        let mut acc = integrand(0.0) + integrand(tau);
        for j in 1..m {
            acc += integrand(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = acc * h / 3.0 * p.g_q();
        let closed: Complex64 = s
            .harmonics()
            .map(|hm| {
                p.response(hm.frequency) * hm.coeff
                    * Complex64::from_polar(1.0, -hm.frequency * t)
                    * (Complex64::from_polar(1.0, -hm.frequency * tau) - (rate * tau).exp())
            })
            .sum();
        assert!((quad - closed).norm() < 1e-12 * closed.norm().max(1.0));
    }

    #[test]
    fn stationary_at_zero_lag() {
        let p = CavityParams::new(2, 2.0, 0.05, 0.1).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        let k = coefficients(&p, &lines(), &f);
        let aw = stationary_correlation(&p, &lines(), &f, &[0.0], Convention::AsWritten).unwrap();
        assert!((aw.values[0] - c(k.coherent_weight() + 2.0 * k.c_delta, 0.0)).norm() < 1e-15);
        let tz = stationary_correlation(&p, &lines(), &f, &[0.0], Convention::TauZeroConsistent).unwrap();
        let n_inf = cavity::occupation_longtime(&p, &lines(), &f);
        assert!((tz.values[0].re - n_inf).abs() < 1e-15 * n_inf);
    }

    #[test]
    fn coherent_part_persists() {
        let kappa = 0.1;
        let p = CavityParams::new(1, 1.0, 0.05, kappa).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        let s = DipoleSpectrum::from_lines(drive(), &[(1, c(1.0, 0.0))]).unwrap();
        let k = coefficients(&p, &s, &f);
        let tau = 30.0 / kappa;
        let v = stationary_correlation(&p, &s, &f, &[tau], Convention::AsWritten).unwrap().values[0];
        let coherent = k.a_n[1].norm_sqr() * Complex64::from_polar(1.0, -tau);
        assert!((v - coherent).norm() < 1e-12);
    }

    #[test]
    fn incoherent_decay_rate_is_kappa() {
        let kappa = 0.23;
        let p = CavityParams::new(1, 1.5, 0.05, kappa).unwrap();
        let f = FluctuationModel::new(0.4).unwrap();
        let s = lines();
        let k = coefficients(&p, &s, &f);
        let taus: Vec<f64> = (0..=90).map(|i| (1.0 + i as f64 * 0.1) / kappa).collect();
        let cs = stationary_correlation(&p, &s, &f, &taus, Convention::AsWritten).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = taus
            .iter()
            .zip(&cs.values)
            .map(|(&tau, v)| {
                let coherent: Complex64 = s
                    .harmonics()
                    .zip(&k.a_n)
                    .map(|(h, a)| a.norm_sqr() * Complex64::from_polar(1.0, -h.frequency * tau))
                    .sum();
                (tau, (v - coherent).norm().ln())
            })
            .unzip();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((-slope - kappa).abs() < 1e-6 * kappa);
    }

    #[test]
    fn rejects_negative_lag() {
        let p = CavityParams::new(1, 1.0, 0.05, 0.1).unwrap();
        let f = FluctuationModel::none();
        assert!(matches!(
            stationary_correlation(&p, &lines(), &f, &[0.0, -1.0], Convention::AsWritten),
            Err(Error::NegativeLag(_))
        ));
        assert!(two_time_correlation(&p, &lines(), &f, 1.0, &[-0.5], Convention::AsWritten).is_err());
    }

    #[test]
    fn hermitian_extension_transform_is_real() {
        let p = CavityParams::new(3, 3.0, 0.05, 0.1).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        let taus: Vec<f64> = (0..2000).map(|i| i as f64 * 0.05).collect();
        let cs = stationary_correlation(&p, &lines(), &f, &taus, Convention::AsWritten).unwrap();
        let (ext_t, ext_v) = cs.hermitian_extension().unwrap();
        for &w in &[0.5, 1.0, 2.9, 3.0, PI] {
            let sum: Complex64 = ext_t
                .iter()
                .zip(&ext_v)
                .map(|(&tau, v)| v * Complex64::from_polar(1.0, w * tau))
                .sum();
            assert!(sum.im.abs() <= 1e-10 * sum.norm().max(1.0), "omega={w}: {sum}");
        }
    }

    #[test]
    fn csv_has_metadata_lines() {
        let p = CavityParams::new(1, 1.0, 0.05, 0.1).unwrap();
        let cs = two_time_correlation(&p, &lines(), &FluctuationModel::none(), 2.0, &[0.0, 1.0], Convention::TauZeroConsistent)
            .unwrap();
        let csv = cs.to_csv().unwrap();
        let head: Vec<&str> = csv.lines().take(3).collect();
        assert_eq!(head, ["#convention=tau-zero-consistent", "#t=2.0000000000000000e0", "tau,re,im"]);
    }

    #[test]
    fn convention_names_parse() {
        for c in Convention::ALL {
            assert_eq!(c.as_str().parse::<Convention>().unwrap(), c);
        }
        assert!("both".parse::<Convention>().is_err());
    }

    proptest! {
        #[test]
        fn coefficient_bound(kappa in 0.01f64..1.0, g in 0.0f64..0.3, wq in 0.5f64..9.0,
                             re in -1.0f64..1.0, im in -1.0f64..1.0, n in 0usize..=7) {
            let p = CavityParams::new(1, wq, g, kappa).unwrap();
            let d = c(re, im);
            let s = DipoleSpectrum::from_lines(drive(), &[(n, d)]).unwrap();
            let k = coefficients(&p, &s, &FluctuationModel::none());
            prop_assert!(k.a_n[n].norm() <= g * d.norm() / kappa * (1.0 + 1e-14));
        }

        #[test]
        fn zero_lag_is_real_non_negative(t in 0.0f64..100.0, delta in 0.0f64..1.0, kappa in 0.02f64..1.0) {
            let p = CavityParams::new(3, 3.0, 0.05, kappa).unwrap();
            let f = FluctuationModel::new(delta).unwrap();
            for conv in Convention::ALL {
                let v = two_time_correlation(&p, &lines(), &f, t, &[0.0], conv).unwrap().values[0];
                prop_assert!(v.re >= 0.0);
                prop_assert!(v.im.abs() <= 1e-12 * v.re.max(1e-300));
            }
        }
    }
}
