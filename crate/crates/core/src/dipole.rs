//! Classical dipole signal: harmonic decomposition and white-noise fluctuations.
//!
//! The mean dipole is stored as its non-negative-frequency coefficients
//! `d_N` on the comb `omega_N = N * omega`. Negative frequencies follow from
//! `d(-omega_N) = conj(d(omega_N))`, so the reconstructed signal is real.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{self, TimeSeries};

/// Relative tolerance on "integer number of periods".
const PERIOD_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    omega: f64,
    n_max: usize,
}

impl DriveParams {
    pub fn new(omega: f64, n_max: usize) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::param("omega", format!("must be positive, got {omega}")));
        }
        if n_max < 1 {
            return Err(Error::param("n_max", "harmonic cutoff must be at least 1"));
        }
        Ok(Self { omega, n_max })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// `omega_N = N * omega`.
    pub fn harmonic(&self, n: usize) -> f64 {
        n as f64 * self.omega
    }
}

/// One harmonic of the mean dipole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub order: usize,
    pub frequency: f64,
    pub coeff: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleSpectrum {
    drive: DriveParams,
    coeffs: Vec<Complex64>,
}

impl DipoleSpectrum {
    /// `coeffs[N]` is `d_N` for `N = 0..=n_max`.
    pub fn new(drive: DriveParams, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != drive.n_max + 1 {
            return Err(Error::LengthMismatch(format!(
                "expected {} coefficients for n_max = {}, got {}",
                drive.n_max + 1,
                drive.n_max,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::param("coeffs", "coefficients must be finite"));
        }
        Ok(Self { drive, coeffs })
    }

    pub fn zero(drive: DriveParams) -> Self {
        Self {
            drive,
            coeffs: vec![Complex64::new(0.0, 0.0); drive.n_max + 1],
        }
    }

    /// Spectrum with the listed `(N, d_N)` lines and zeros elsewhere.
    pub fn from_lines(drive: DriveParams, lines: &[(usize, Complex64)]) -> Result<Self> {
        let mut s = Self::zero(drive);
        for &(n, d) in lines {
            if n > drive.n_max {
                return Err(Error::param(
                    "lines",
                    format!("harmonic {n} exceeds n_max = {}", drive.n_max),
                ));
            }
            s.coeffs[n] = d;
        }
        Self::new(drive, s.coeffs)
    }

    pub fn drive(&self) -> &DriveParams {
        &self.drive
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, n: usize) -> Complex64 {
        self.coeffs.get(n).copied().unwrap_or_default()
    }

    /// All harmonics including zero coefficients.
    pub fn harmonics(&self) -> impl Iterator<Item = Harmonic> + '_ {
        self.coeffs.iter().enumerate().map(|(n, &c)| Harmonic {
            order: n,
            frequency: self.drive.harmonic(n),
            coeff: c,
        })
    }

    /// Harmonics with a nonzero coefficient.
    pub fn lines(&self) -> impl Iterator<Item = Harmonic> + '_ {
        self.harmonics().filter(|h| h.coeff != Complex64::new(0.0, 0.0))
    }

    /// Whether the DC term `d_0` is nonzero. It is kept in every sum; callers
    /// that apply a strictly positive-frequency reading can drop it.
    pub fn has_dc(&self) -> bool {
        self.coeffs[0] != Complex64::new(0.0, 0.0)
    }

    /// Positive-frequency part `sum_{N>=0} d_N exp(-i omega_N t)`.
    ///
    /// This is the drive seen by the cavity once counter-rotating terms are
    /// dropped.
    pub fn analytic_value(&self, t: f64) -> Complex64 {
        self.harmonics()
            .map(|h| h.coeff * Complex64::from_polar(1.0, -h.frequency * t))
            .sum()
    }

    /// Real mean dipole `<d(t)>` rebuilt with conjugate symmetry.
    pub fn mean_value(&self, t: f64) -> f64 {
        2.0 * self.analytic_value(t).re - self.coeffs[0].re
    }

    /// Period-averaged `<d>^2` from the coefficients (two-sided sum).
    pub fn mean_square(&self) -> f64 {
        let dc = self.coeffs[0].re;
        dc * dc + 2.0 * self.coeffs[1..].iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn to_document(&self) -> SpectrumDocument {
        SpectrumDocument {
            omega: self.drive.omega,
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_document(doc: &SpectrumDocument) -> Result<Self> {
        if doc.coeffs.len() < 2 {
            return Err(Error::param("coeffs", "need coefficients for N = 0 and at least N = 1"));
        }
        let drive = DriveParams::new(doc.omega, doc.coeffs.len() - 1)?;
        Self::new(
            drive,
            doc.coeffs.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
        )
    }
}

/// Serialized form `{omega, coeffs: [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDocument {
    pub omega: f64,
    pub coeffs: Vec<[f64; 2]>,
}

/// Delta-correlated dipole noise `<dd(t) dd(t')> = delta * Dirac(t - t')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationModel {
    delta: f64,
}

impl FluctuationModel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::param("delta", format!("must be non-negative, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn none() -> Self {
        Self { delta: 0.0 }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Per-sample variance of the discretized white noise at spacing `dt`.
    pub fn sample_variance(&self, dt: f64) -> f64 {
        self.delta / dt
    }
}

/// Reproducibility token for noise draws: a base seed and an independent
/// stream index (one stream per Monte-Carlo trial).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSeed {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub(crate) fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for NoiseSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed)
    }
}

/// Draws of `N(0, delta/dt)`, one per step.
pub(crate) struct FluctuationSampler {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl FluctuationSampler {
    pub(crate) fn new(model: &FluctuationModel, dt: f64, seed: NoiseSeed) -> Self {
        Self {
            rng: seed.rng(),
            sigma: model.sample_variance(dt).sqrt(),
        }
    }

    #[inline]
    pub(crate) fn next(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.sigma * z
    }
}

/// Harmonic coefficients `d_N = (1/T) int_0^T <d(t)> exp(i omega_N t) dt`.
///
/// The window may either include its closing endpoint (span = m periods,
/// trapezoidal weights) or be periodic-open (span + dt = m periods, equal
/// weights). Both are the trapezoidal rule for a periodic integrand.
pub fn fourier_decompose(signal: &TimeSeries<f64>, drive: DriveParams) -> Result<DipoleSpectrum> {
    let times = signal.times();
    let values = signal.values();
    let dt = signal.uniform_step()?;
    let period = drive.period();
    let span = times[times.len() - 1] - times[0];

    let closed = (span / period).round();
    let open = ((span + dt) / period).round();
    let (periods, n_eff) = if closed >= 1.0 && is_close(span / period, closed) {
        (closed, times.len() - 1)
    } else if open >= 1.0 && is_close((span + dt) / period, open) {
        (open, times.len())
    } else {
        return Err(Error::IncommensurateWindow { span, period });
    };

    let per_period = (n_eff as f64 / periods).round() as usize;
    let required = 2 * drive.n_max() + 1;
    if per_period < required {
        return Err(Error::AliasingRisk {
            per_period,
            required,
        });
    }

    let n = times.len();
    let closed_window = n_eff == n - 1;
    let window = periods * period;
    let coeffs = (0..=drive.n_max())
        .map(|order| {
            let w = drive.harmonic(order);
            let sum: Complex64 = times
                .iter()
                .zip(values)
                .enumerate()
                .map(|(j, (&t, &v))| {
                    let weight = if closed_window {
                        series::trapezoid_weight(j, n, dt)
                    } else {
                        dt
                    };
                    weight * v * Complex64::from_polar(1.0, w * t)
                })
                .sum();
            sum / window
        })
        .collect();
    DipoleSpectrum::new(drive, coeffs)
}

fn is_close(x: f64, target: f64) -> bool {
    (x - target).abs() <= PERIOD_RTOL * target.max(1.0)
}

/// Real mean dipole `sum_N 2 Re[d_N exp(-i omega_N t)] - Re[d_0]` on `times`.
pub fn synthesize_mean_dipole(spectrum: &DipoleSpectrum, times: &[f64]) -> Result<TimeSeries<f64>> {
    let values = times.iter().map(|&t| spectrum.mean_value(t)).collect();
    TimeSeries::new(times.to_vec(), values)
}

/// Discretized white noise on a uniform grid: independent `N(0, delta/dt)`
/// samples. The same seed always gives the same series.
pub fn sample_fluctuation(
    model: &FluctuationModel,
    times: &[f64],
    seed: impl Into<NoiseSeed>,
) -> Result<TimeSeries<f64>> {
    let dt = series::uniform_step(times)?;
    let mut sampler = FluctuationSampler::new(model, dt, seed.into());
    let values = times.iter().map(|_| sampler.next()).collect();
    TimeSeries::new(times.to_vec(), values)
}

/// Toy odd-harmonic signal: `cos(omega t)` clipped to `[-clip, clip]`.
///
/// A convenience source of a nonlinear periodic signal. It is not a model of
/// any physical emitter.
pub fn clipped_cosine(drive: &DriveParams, clip: f64, times: &[f64]) -> Result<TimeSeries<f64>> {
    if !(clip > 0.0) {
        return Err(Error::param("clip", "must be positive"));
    }
    let values = times
        .iter()
        .map(|&t| (drive.omega() * t).cos().clamp(-clip, clip))
        .collect();
    TimeSeries::new(times.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid(periods: usize, per_period: usize, omega: f64) -> Vec<f64> {
        let n = periods * per_period;
        let dt = 2.0 * PI / omega / per_period as f64;
        (0..=n).map(|i| i as f64 * dt).collect()
    }

    fn series_of(times: &[f64], f: impl Fn(f64) -> f64) -> TimeSeries<f64> {
        TimeSeries::new(times.to_vec(), times.iter().map(|&t| f(t)).collect()).unwrap()
    }

    #[test]
    fn cosine_has_single_half_coefficient() {
        let drive = DriveParams::new(1.0, 3).unwrap();
        let t = grid(2, 64, 1.0);
        let s = fourier_decompose(&series_of(&t, f64::cos), drive).unwrap();
        for (n, d) in s.coeffs().iter().enumerate() {
            let expected = if n == 1 { 0.5 } else { 0.0 };
            assert!((d - c(expected, 0.0)).norm() < 1e-10, "N={n}: {d}");
        }
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let drive = DriveParams::new(1.0, 4).unwrap();
        let t = grid(1, 32, 1.0);
        let s = fourier_decompose(&series_of(&t, |_| 0.0), drive).unwrap();
        assert!(s.coeffs().iter().all(|d| d.norm() == 0.0));
        assert!(!s.has_dc());
    }

    #[test]
    fn cube_of_cosine_matches_expansion() {
        // cos^3 x = (3 cos x + cos 3x) / 4. Also checked against a fine-grid
        // Riemann sum computed independently of the decomposition path.
        let omega = 1.7;
        let drive = DriveParams::new(omega, 5).unwrap();
        let t = grid(3, 40, omega);
        let s = fourier_decompose(&series_of(&t, |t| (omega * t).cos().powi(3)), drive).unwrap();
        let expected = [0.0, 0.375, 0.0, 0.125, 0.0, 0.0];
        for (n, e) in expected.iter().enumerate() {
            assert!((s.coeff(n) - c(*e, 0.0)).norm() < 1e-12, "N={n}: {}", s.coeff(n));
        }

        let m = 200_000;
        let period = 2.0 * PI / omega;
        let h = period / m as f64;
        for n in [1usize, 3] {
            let brute: f64 = (0..m)
                .map(|j| {
                    let tt = (j as f64 + 0.5) * h;
                    (omega * tt).cos().powi(3) * (n as f64 * omega * tt).cos()
                })
                .sum::<f64>()
                * h
                / period;
            assert!((brute - expected[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn open_periodic_window_is_accepted() {
        let drive = DriveParams::new(1.0, 3).unwrap();
        let mut t = grid(1, 16, 1.0);
        t.pop();
        let s = fourier_decompose(&series_of(&t, f64::cos), drive).unwrap();
        assert!((s.coeff(1) - c(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_incommensurate_window() {
        let drive = DriveParams::new(1.0, 3).unwrap();
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        let err = fourier_decompose(&series_of(&t, f64::cos), drive).unwrap_err();
        assert!(matches!(err, Error::IncommensurateWindow { .. }));
        assert!(err.to_string().contains("incommensurate window"));
    }

    #[test]
    fn rejects_undersampled_grid() {
        let drive = DriveParams::new(1.0, 4).unwrap();
        let t = grid(2, 8, 1.0);
        let err = fourier_decompose(&series_of(&t, f64::cos), drive).unwrap_err();
        assert!(matches!(err, Error::AliasingRisk { per_period: 8, required: 9 }));
        assert!(err.to_string().contains("aliasing risk"));
    }

    #[test]
    fn synthesis_rebuilds_cosine() {
        let drive = DriveParams::new(1.0, 2).unwrap();
        let s = DipoleSpectrum::from_lines(drive, &[(1, c(0.5, 0.0))]).unwrap();
        let out = synthesize_mean_dipole(&s, &[0.0, PI]).unwrap();
        assert!((out.values()[0] - 1.0).abs() < 1e-15);
        assert!((out.values()[1] + 1.0).abs() < 1e-15);

        let z = synthesize_mean_dipole(&DipoleSpectrum::zero(drive), &[0.0, 1.0, 2.0]).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cube_round_trip() {
        let drive = DriveParams::new(1.0, 3).unwrap();
        let t = grid(2, 50, 1.0);
        let signal = series_of(&t, |t| t.cos().powi(3));
        let s = fourier_decompose(&signal, drive).unwrap();
        let back = synthesize_mean_dipole(&s, &t).unwrap();
        let dev = signal
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dev < 1e-9, "round trip deviation {dev}");
    }

    #[test]
    fn parseval_on_clipped_cosine() {
        let drive = DriveParams::new(1.0, 40).unwrap();
        let t = grid(1, 4096, 1.0);
        let signal = clipped_cosine(&drive, 0.6, &t).unwrap();
        // A clipped cosine has only odd harmonics.
        let s = fourier_decompose(&signal, drive).unwrap();
        assert!(s.coeff(2).norm() < 1e-12 && s.coeff(4).norm() < 1e-12);
        assert!(s.coeff(3).norm() > 1e-3);

        // Parseval against a band-limited signal where the comb is complete.
        let bl = DipoleSpectrum::from_lines(
            drive,
            &[(0, c(0.2, 0.0)), (1, c(0.5, -0.1)), (3, c(0.1, 0.3)), (7, c(-0.05, 0.02))],
        )
        .unwrap();
        let back = synthesize_mean_dipole(&bl, &t).unwrap();
        let sq: Vec<f64> = back.values().iter().map(|v| v * v).collect();
        let lhs = series::trapezoid(&t, &sq) / drive.period();
        assert!((lhs - bl.mean_square()).abs() < 1e-8);
    }

    #[test]
    fn document_round_trip() {
        let drive = DriveParams::new(1.0, 2).unwrap();
        let s = DipoleSpectrum::from_lines(drive, &[(1, c(0.5, -0.25))]).unwrap();
        let json = serde_json::to_string(&s.to_document()).unwrap();
        assert_eq!(json, r#"{"omega":1.0,"coeffs":[[0.0,0.0],[0.5,-0.25],[0.0,0.0]]}"#);
        let back = DipoleSpectrum::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn zero_delta_gives_silent_noise() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let s = sample_fluctuation(&FluctuationModel::none(), &t, 7).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let model = FluctuationModel::new(0.2).unwrap();
        let t: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
        let a = sample_fluctuation(&model, &t, 11).unwrap();
        let b = sample_fluctuation(&model, &t, 11).unwrap();
        let c = sample_fluctuation(&model, &t, NoiseSeed::new(11).with_stream(1)).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn noise_rejects_non_uniform_grid() {
        let model = FluctuationModel::new(0.2).unwrap();
        assert!(matches!(
            sample_fluctuation(&model, &[0.0, 0.1, 0.3], 1),
            Err(Error::NonUniformGrid(_))
        ));
    }

    #[test]
    fn noise_variance_and_whiteness() {
        let model = FluctuationModel::new(0.2).unwrap();
        let n = 1_000_000;
        let dt = 0.01;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let s = sample_fluctuation(&model, &t, 2024).unwrap();
        let v = s.values();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 20.0).abs() < 0.2, "variance {var}");

        // Lag-0 autocorrelation: Gaussian fourth moment gives SE = sigma^2 sqrt(2/n).
        let target = 20.0;
        let se0 = target * (2.0 / n as f64).sqrt();
        let r0 = v.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((r0 - target).abs() < 5.0 * se0);
        for lag in 1..4 {
            let m = n - lag;
            let r = (0..m).map(|i| v[i] * v[i + lag]).sum::<f64>() / m as f64;
            let se = target / (m as f64).sqrt();
            assert!(r.abs() < 5.0 * se, "lag {lag}: {r}");
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(DriveParams::new(0.0, 3).is_err());
        assert!(DriveParams::new(1.0, 0).is_err());
        assert!(FluctuationModel::new(-0.1).is_err());
        let drive = DriveParams::new(1.0, 2).unwrap();
        assert!(DipoleSpectrum::new(drive, vec![c(0.0, 0.0); 2]).is_err());
        assert!(DipoleSpectrum::from_lines(drive, &[(3, c(1.0, 0.0))]).is_err());
    }

    proptest! {
        #[test]
        fn synthesized_dipole_is_real_and_symmetric(
            re in prop::collection::vec(-1.0f64..1.0, 5),
            im in prop::collection::vec(-1.0f64..1.0, 5),
            t in -50.0f64..50.0,
        ) {
            let drive = DriveParams::new(1.3, 4).unwrap();
            let coeffs: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            let s = DipoleSpectrum::new(drive, coeffs.clone()).unwrap();
            // Two-sided sum over N = -n_max..n_max with d(-N) = conj(d(N)).
            let mut two_sided = c(coeffs[0].re, 0.0);
            for (n, d) in coeffs.iter().enumerate().skip(1) {
                let w = drive.harmonic(n);
                two_sided += d * Complex64::from_polar(1.0, -w * t)
                    + d.conj() * Complex64::from_polar(1.0, w * t);
            }
            prop_assert!(two_sided.im.abs() < 1e-12);
            prop_assert!((two_sided.re - s.mean_value(t)).abs() < 1e-12);
        }
    }
}
