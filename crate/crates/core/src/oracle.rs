//! Brute-force cross-checks of the closed forms.
//!
//! The mean amplitude is integrated directly and the noise is sampled by
//! Monte-Carlo trajectories. A discrete reservoir tests the flat-coupling
//! (Markov) limit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cavity::{kappa_from_coupling, CavityParams};
use crate::dipole::{DipoleSpectrum, FluctuationModel, FluctuationSampler, NoiseSeed};
use crate::error::{Error, Result};
use crate::io;
use crate::series::{self, TimeSeries, UniformGrid};

/// Largest allowed `h * max(omega_q, kappa)` for the fixed-step schemes.
pub const STABILITY_LIMIT: f64 = 0.1;
pub const MIN_TRIALS: usize = 1000;
pub const MIN_BATH_MODES: usize = 100;
/// Trials per parallel work unit. Partial sums are reduced in block order,
/// so results do not depend on the worker count.
const BLOCK: usize = 64;

/// One classical Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: Complex64, h: f64) -> Complex64
where
    F: Fn(f64, Complex64) -> Complex64,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(t + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn check_step(params: &CavityParams, h: f64) -> Result<()> {
    let product = h * params.omega_q().abs().max(params.kappa());
    if product > STABILITY_LIMIT {
        return Err(Error::StepTooLarge { product, limit: STABILITY_LIMIT });
    }
    Ok(())
}

fn check_origin(grid: &UniformGrid) -> Result<()> {
    if grid.start() != 0.0 {
        return Err(Error::param("t_grid", "integration starts from vacuum at t = 0"));
    }
    Ok(())
}

/// Forcing for the mean-amplitude equation.
#[derive(Debug, Clone, Copy)]
pub enum MeanDipole<'a> {
    /// Positive-frequency signal `sum_N d_N exp(-i omega_N t)`.
    Spectrum(&'a DipoleSpectrum),
    /// Samples of the positive-frequency signal at half the integration
    /// step, starting at `t = 0`.
    Sampled(&'a TimeSeries<Complex64>),
}

impl MeanDipole<'_> {
    /// Forcing at every half step `k * h / 2`, `k = 0..2 len - 1`.
    fn half_step_samples(&self, grid: &UniformGrid) -> Result<Vec<Complex64>> {
        let need = 2 * grid.len() - 1;
        let half = 0.5 * grid.step();
        match self {
            MeanDipole::Spectrum(d) => Ok((0..need).map(|k| d.analytic_value(k as f64 * half)).collect()),
            MeanDipole::Sampled(s) => {
                let step = s.uniform_step()?;
                if s.times()[0] != 0.0 || (step - half).abs() > series::UNIFORM_RTOL * step {
                    return Err(Error::param(
                        "mean_dipole",
                        format!("samples must start at 0 with step {half}"),
                    ));
                }
                if s.len() < need {
                    return Err(Error::LengthMismatch(format!("{} drive samples, need {need}", s.len())));
                }
                Ok(s.values()[..need].to_vec())
            }
        }
    }
}

/// Integrates `d alpha/dt = -(i omega_q + kappa) alpha + g_q <d(t)>` from
/// `alpha(0) = 0` with fixed-step RK4 and returns `alpha = <a>` on the grid.
pub fn integrate_amplitude_ode(
    params: &CavityParams,
    mean_dipole: MeanDipole<'_>,
    t_grid: &UniformGrid,
) -> Result<TimeSeries<Complex64>> {
    check_origin(t_grid)?;
    let h = t_grid.step();
    check_step(params, h)?;
    let drive = mean_dipole.half_step_samples(t_grid)?;
    let lambda = params.propagator_rate();
    let g = params.g_q();

    let mut y = Complex64::new(0.0, 0.0);
    let mut values = Vec::with_capacity(t_grid.len());
    values.push(y);
    for n in 0..t_grid.len() - 1 {
        let t0 = t_grid.at(n);
        // Stage times are t0, t0 + h/2, t0 + h: half-step indices 2n, 2n+1, 2n+2.
        let f = |t: f64, y: Complex64| {
            let k = 2 * n + ((t - t0) / (0.5 * h)).round() as usize;
            lambda * y + g * drive[k]
        };
        y = rk4_step(f, t0, y, h);
        values.push(y);
    }
    TimeSeries::from_grid(t_grid, values)
}

/// Monte-Carlo sampling plan. All requested times must be multiples of `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    pub dt: f64,
    /// Times at which `|d(t)|^2` is averaged.
    pub sample_times: Vec<f64>,
    /// Reference time `t` of the two-time product `conj(d(t)) d(t + tau)`.
    pub t_ref: f64,
    pub taus: Vec<f64>,
    pub n_trials: usize,
}

/// Ensemble mean and standard error on a set of abscissae. For complex
/// means the standard error is `sqrt((var_re + var_im) / n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub mean: Vec<Complex64>,
    pub stderr: Vec<f64>,
}

impl EnsembleSeries {
    pub fn to_csv(&self, time_label: &str, comments: &[String]) -> Result<String> {
        io::csv_string(
            comments,
            &[time_label, "mean_re", "mean_im", "stderr"],
            self.times
                .iter()
                .zip(&self.mean)
                .zip(&self.stderr)
                .map(|((&t, m), &s)| vec![t, m.re, m.im, s]),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub n_trials: usize,
    pub seed: u64,
    pub dt: f64,
    pub occupation: EnsembleSeries,
    pub t_ref: f64,
    pub two_time: EnsembleSeries,
}

impl TrajectoryEnsemble {
    pub fn occupation_csv(&self) -> Result<String> {
        self.occupation.to_csv("t", &self.header())
    }

    pub fn two_time_csv(&self) -> Result<String> {
        let mut comments = self.header();
        comments.push(format!("t={}", io::fmt_num(self.t_ref)));
        self.two_time.to_csv("tau", &comments)
    }

    fn header(&self) -> Vec<String> {
        vec![
            format!("n_trials={}", self.n_trials),
            format!("seed={}", self.seed),
            format!("dt={}", io::fmt_num(self.dt)),
        ]
    }
}

/// One RK4 step of `y' = lambda y + u` with constant `u` is
/// `y -> growth * y + forcing * u`.
fn linear_step(lambda: Complex64, h: f64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let growth = rk4_step(|_, y| lambda * y, 0.0, one, h);
    let forcing = rk4_step(|_, y| lambda * y + one, 0.0, zero, h);
    (growth, forcing)
}

fn grid_index(t: f64, dt: f64) -> Result<usize> {
    let k = (t / dt).round();
    if t < 0.0 || (t - k * dt).abs() > 1e-6 * dt {
        return Err(Error::OffGrid { time: t, step: dt });
    }
    Ok(k as usize)
}

#[derive(Clone)]
struct Sums {
    occ: Vec<f64>,
    occ_sq: Vec<f64>,
    prod: Vec<Complex64>,
    prod_sq: Vec<f64>,
}

impl Sums {
    fn new(n_occ: usize, n_tau: usize) -> Self {
        Self {
            occ: vec![0.0; n_occ],
            occ_sq: vec![0.0; n_occ],
            prod: vec![Complex64::new(0.0, 0.0); n_tau],
            prod_sq: vec![0.0; n_tau],
        }
    }

    fn merge(mut self, other: &Sums) -> Self {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.occ, &other.occ);
        add(&mut self.occ_sq, &other.occ_sq);
        add(&mut self.prod_sq, &other.prod_sq);
        self.prod.iter_mut().zip(&other.prod).for_each(|(x, y)| *x += y);
        self
    }
}

/// Ensemble of noise-driven filter trajectories
/// `d(t) = g_q int_0^t exp(-(i omega_q + kappa)(t - s)) delta_d(s) ds`,
/// with `delta_d` piecewise constant per step and trial `i` drawing from
/// stream `i` of `seed`.
pub fn monte_carlo_noise(
    params: &CavityParams,
    fluct: &FluctuationModel,
    plan: &NoisePlan,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    if plan.n_trials < MIN_TRIALS {
        return Err(Error::TooFewTrials { got: plan.n_trials, min: MIN_TRIALS });
    }
    let dt = plan.dt;
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    check_step(params, dt)?;
    series::check_increasing(&plan.sample_times)?;
    series::check_increasing(&plan.taus)?;
    let occ_idx = plan
        .sample_times
        .iter()
        .map(|&t| grid_index(t, dt))
        .collect::<Result<Vec<_>>>()?;
    let ref_idx = grid_index(plan.t_ref, dt)?;
    let tau_idx = plan
        .taus
        .iter()
        .map(|&tau| grid_index(tau, dt).map(|k| k + ref_idx))
        .collect::<Result<Vec<_>>>()?;
    let last = occ_idx.iter().chain(&tau_idx).copied().max().unwrap_or(0);

    let (growth, forcing) = linear_step(params.propagator_rate(), dt);
    let forcing = forcing * params.g_q();
    let (n_occ, n_tau) = (occ_idx.len(), tau_idx.len());

    let trial = |i: usize, acc: &mut Sums| {
        let mut noise = FluctuationSampler::new(fluct, dt, NoiseSeed { seed, stream: i as u64 });
        let mut y = Complex64::new(0.0, 0.0);
        let mut y_ref = Complex64::new(0.0, 0.0);
        let (mut io, mut it) = (0, 0);
        for k in 0..=last {
            if k == ref_idx {
                y_ref = y;
            }
            while io < n_occ && occ_idx[io] == k {
                let v = y.norm_sqr();
                acc.occ[io] += v;
                acc.occ_sq[io] += v * v;
                io += 1;
            }
            while it < n_tau && tau_idx[it] == k {
                let v = y_ref.conj() * y;
                acc.prod[it] += v;
                acc.prod_sq[it] += v.norm_sqr();
                it += 1;
            }
            y = growth * y + forcing * noise.next();
        }
    };

    let n_blocks = plan.n_trials.div_ceil(BLOCK);
    let partial: Vec<Sums> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Sums::new(n_occ, n_tau);
            for i in b * BLOCK..((b + 1) * BLOCK).min(plan.n_trials) {
                trial(i, &mut acc);
            }
            acc
        })
        .collect();
    let total = partial
        .iter()
        .fold(Sums::new(n_occ, n_tau), |a, b| a.merge(b));

    let n = plan.n_trials as f64;
    let stderr = |sum_sq: f64, mean_sq: f64| ((sum_sq / n - mean_sq).max(0.0) / (n - 1.0)).sqrt();
    let occupation = EnsembleSeries {
        times: plan.sample_times.clone(),
        mean: total.occ.iter().map(|&s| Complex64::new(s / n, 0.0)).collect(),
        stderr: total
            .occ
            .iter()
            .zip(&total.occ_sq)
            .map(|(&s, &sq)| stderr(sq, (s / n).powi(2)))
            .collect(),
    };
    let two_time = EnsembleSeries {
        times: plan.taus.clone(),
        mean: total.prod.iter().map(|&s| s / n).collect(),
        stderr: total
            .prod
            .iter()
            .zip(&total.prod_sq)
            .map(|(&s, &sq)| stderr(sq, (s / n).norm_sqr()))
            .collect(),
    };
    Ok(TrajectoryEnsemble {
        n_trials: plan.n_trials,
        seed,
        dt,
        occupation,
        t_ref: plan.t_ref,
        two_time,
    })
}

/// Exact expectation of the discretized Monte-Carlo estimator of `|d|^2`
/// after `steps` steps: `g^2 (delta/dt) |Q|^2 (1 - |R|^(2 steps)) / (1 - |R|^2)`.
pub fn discrete_noise_expectation(params: &CavityParams, fluct: &FluctuationModel, dt: f64, steps: usize) -> f64 {
    let (growth, forcing) = linear_step(params.propagator_rate(), dt);
    let r2 = growth.norm_sqr();
    params.g_q().powi(2) * fluct.sample_variance(dt) * forcing.norm_sqr() * (1.0 - r2.powi(steps as i32))
        / (1.0 - r2)
}

/// Least-squares slope of `ln|y|` against `x`; the decay rate is its negative.
pub fn fit_log_decay(x: &[f64], y: &[Complex64]) -> f64 {
    let n = x.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.norm().ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    -sxy / sxx
}

/// Evenly spaced reservoir modes with a flat coupling `g0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathDiscretization {
    n_modes: usize,
    center: f64,
    half_width: f64,
    g0: f64,
}

impl BathDiscretization {
    pub fn new(n_modes: usize, center: f64, half_width: f64, g0: f64) -> Result<Self> {
        if n_modes < MIN_BATH_MODES {
            return Err(Error::param(
                "n_modes",
                format!("need at least {MIN_BATH_MODES} modes, got {n_modes}"),
            ));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::param("half_width", "must be positive"));
        }
        if !(g0 >= 0.0 && g0.is_finite()) {
            return Err(Error::param("g0", "must be non-negative"));
        }
        if !center.is_finite() {
            return Err(Error::param("center", "must be finite"));
        }
        Ok(Self { n_modes, center, half_width, g0 })
    }

    /// Coupling chosen so that the continuum limit decays at `kappa`:
    /// `g0 = sqrt(kappa * spacing / pi)`.
    pub fn for_target_kappa(n_modes: usize, center: f64, half_width: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::param("kappa", "must be non-negative"));
        }
        let spacing = 2.0 * half_width / (n_modes.max(2) - 1) as f64;
        Self::new(n_modes, center, half_width, (kappa * spacing / PI).sqrt())
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_modes - 1) as f64
    }

    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.spacing()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        let dw = self.spacing();
        (0..self.n_modes).map(move |k| self.center - self.half_width + k as f64 * dw)
    }

    /// Continuum-limit rate `pi g0^2 / spacing`.
    pub fn kappa_nominal(&self) -> f64 {
        kappa_from_coupling(self.g0, self.spacing()).unwrap_or(0.0)
    }

    /// Decay rate realized by the finite band `[-W', W']`, `W' = W + spacing/2`.
    /// Continuing the truncated self-energy to the pole `s = -gamma` gives the
    /// fixed point `gamma = kappa (1 + (2/pi) atan(gamma / W'))`.
    pub fn kappa_effective(&self) -> f64 {
        let kappa = self.kappa_nominal();
        if kappa == 0.0 {
            return 0.0;
        }
        let w = self.half_width + 0.5 * self.spacing();
        let mut gamma = kappa;
        for _ in 0..200 {
            let next = kappa * (1.0 + 2.0 / PI * (gamma / w).atan());
            if (next - gamma).abs() <= 1e-15 * kappa {
                return next;
            }
            gamma = next;
        }
        gamma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathDecay {
    /// Cavity amplitude in the lab frame, `alpha(0) = 1`.
    pub amplitude: TimeSeries<Complex64>,
    /// Largest `| |alpha|^2 + sum |beta_k|^2 - 1 |` over the horizon.
    pub norm_error: f64,
    pub kappa_effective: f64,
}

impl BathDecay {
    /// `max_t | |alpha(t)| - exp(-kappa t) |` divided by its reference
    /// maximum (which is 1).
    pub fn max_deviation(&self, kappa: f64) -> f64 {
        series::max_relative_deviation(self.amplitude.times().iter().zip(self.amplitude.values()).map(
            |(&t, a)| (Complex64::new(a.norm(), 0.0), Complex64::new((-kappa * t).exp(), 0.0)),
        ))
    }

    /// `max_t | |alpha(t)| e^{kappa t} - 1 |`, the pointwise relative error.
    pub fn max_pointwise_deviation(&self, kappa: f64) -> f64 {
        self.amplitude
            .times()
            .iter()
            .zip(self.amplitude.values())
            .map(|(&t, a)| (a.norm() * (kappa * t).exp() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Single-excitation dynamics of the cavity coupled to an explicit
/// reservoir: `alpha' = -i omega_q alpha - i g0 sum beta_k`,
/// `beta_k' = -i omega_k beta_k - i g0 alpha`, with `alpha(0) = 1`.
///
/// Integrated with RK4 in the frame rotating at `omega_q`, with internal
/// sub-steps of at most `0.01 / max(omega_k - omega_q, g0 sqrt(n))`.
pub fn discrete_bath_decay(
    bath: &BathDiscretization,
    params: &CavityParams,
    t_grid: &UniformGrid,
) -> Result<BathDecay> {
    check_origin(t_grid)?;
    let horizon = t_grid.end();
    let recurrence = bath.recurrence_time();
    if horizon > recurrence {
        return Err(Error::RecurrenceExceeded { horizon, recurrence });
    }
    let omega_q = params.omega_q();
    let detunings: Vec<f64> = bath.frequencies().map(|w| w - omega_q).collect();
    let g0 = bath.g0();

    let scale = detunings
        .iter()
        .fold(g0 * (bath.n_modes() as f64).sqrt(), |m, d| m.max(d.abs()));
    let substeps = if scale == 0.0 {
        1
    } else {
        (t_grid.step() * scale / 0.01).ceil().max(1.0) as usize
    };
    let h = t_grid.step() / substeps as f64;

    let n = detunings.len();
    let mut state = vec![Complex64::new(0.0, 0.0); n + 1];
    state[0] = Complex64::new(1.0, 0.0);
    let mut k = [
        vec![Complex64::new(0.0, 0.0); n + 1],
        vec![Complex64::new(0.0, 0.0); n + 1],
        vec![Complex64::new(0.0, 0.0); n + 1],
        vec![Complex64::new(0.0, 0.0); n + 1],
    ];
    let mut tmp = state.clone();
    let minus_i = Complex64::new(0.0, -1.0);
    let rhs = |y: &[Complex64], out: &mut [Complex64]| {
        let sum: Complex64 = y[1..].iter().sum();
        out[0] = minus_i * g0 * sum;
        for j in 0..n {
            out[j + 1] = minus_i * (detunings[j] * y[j + 1] + g0 * y[0]);
        }
    };

    let mut values = Vec::with_capacity(t_grid.len());
    let mut norm_error = 0.0f64;
    let mut record = |state: &[Complex64], t: f64, values: &mut Vec<Complex64>| {
        let norm: f64 = state.iter().map(|v| v.norm_sqr()).sum();
        norm_error = norm_error.max((norm - 1.0).abs());
        values.push(state[0] * Complex64::from_polar(1.0, -omega_q * t));
    };
    record(&state, 0.0, &mut values);
    for i in 1..t_grid.len() {
        for _ in 0..substeps {
            rhs(&state, &mut k[0]);
            for j in 0..=n {
                tmp[j] = state[j] + 0.5 * h * k[0][j];
            }
            rhs(&tmp, &mut k[1]);
            for j in 0..=n {
                tmp[j] = state[j] + 0.5 * h * k[1][j];
            }
            rhs(&tmp, &mut k[2]);
            for j in 0..=n {
                tmp[j] = state[j] + h * k[2][j];
            }
            rhs(&tmp, &mut k[3]);
            for j in 0..=n {
                state[j] += h / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
            }
        }
        record(&state, t_grid.at(i), &mut values);
    }
    Ok(BathDecay {
        amplitude: TimeSeries::from_grid(t_grid, values)?,
        norm_error,
        kappa_effective: bath.kappa_effective(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::mode_amplitude;
    use crate::dipole::DriveParams;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rk4_is_fourth_order() {
        // y' = i y, exact exp(i t).
        let err = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let mut y = c(1.0, 0.0);
            for k in 0..n {
                y = rk4_step(|_, y| c(0.0, 1.0) * y, k as f64 * h, y, h);
            }
            (y - Complex64::from_polar(1.0, 1.0)).norm()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn zero_dipole_gives_zero_amplitude() {
        let p = CavityParams::new(1, 1.0, 0.1, 0.1).unwrap();
        let d = DipoleSpectrum::zero(DriveParams::new(1.0, 3).unwrap());
        let grid = UniformGrid::new(0.0, 0.01, 500).unwrap();
        let a = integrate_amplitude_ode(&p, MeanDipole::Spectrum(&d), &grid).unwrap();
        assert!(a.values().iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn constant_dipole_reaches_fixed_point() {
        let p = CavityParams::new(1, 2.0, 0.1, 0.5).unwrap();
        let d = DipoleSpectrum::from_lines(DriveParams::new(1.0, 2).unwrap(), &[(0, c(0.3, 0.0))]).unwrap();
        let grid = UniformGrid::new(0.0, 0.005, 20001).unwrap();
        let a = integrate_amplitude_ode(&p, MeanDipole::Spectrum(&d), &grid).unwrap();
        let fixed = 0.1 * 0.3 / c(0.5, 2.0);
        assert!((a.values().last().unwrap() - fixed).norm() < 1e-12);
    }

    #[test]
    fn matches_closed_form_for_cubic_drive() {
        // cos^3 = (3 cos t + cos 3t) / 4, positive-frequency coefficients 3/8, 1/8.
        let drive = DriveParams::new(1.0, 3).unwrap();
        let d = DipoleSpectrum::from_lines(drive, &[(1, c(0.375, 0.0)), (3, c(0.125, 0.0))]).unwrap();
        let p = CavityParams::new(3, 3.0, 0.1, 0.05).unwrap();
        let grid = UniformGrid::new(0.0, 0.002, 50_001).unwrap();
        let a = integrate_amplitude_ode(&p, MeanDipole::Spectrum(&d), &grid).unwrap();
        let dev = series::max_relative_deviation(
            a.times().iter().zip(a.values()).map(|(&t, v)| (v.conj(), mode_amplitude(&p, &d, t))),
        );
        assert!(dev < 1e-8, "deviation {dev}");
    }

    #[test]
    fn sampled_drive_matches_spectrum_drive() {
        let drive = DriveParams::new(1.0, 2).unwrap();
        let d = DipoleSpectrum::from_lines(drive, &[(1, c(0.2, 0.1)), (2, c(0.0, 0.3))]).unwrap();
        let p = CavityParams::new(2, 2.0, 0.1, 0.2).unwrap();
        let grid = UniformGrid::new(0.0, 0.01, 1001).unwrap();
        let half = UniformGrid::new(0.0, 0.005, 2001).unwrap();
        let samples = TimeSeries::from_grid(&half, half.times().iter().map(|&t| d.analytic_value(t)).collect())
            .unwrap();
        let a = integrate_amplitude_ode(&p, MeanDipole::Spectrum(&d), &grid).unwrap();
        let b = integrate_amplitude_ode(&p, MeanDipole::Sampled(&samples), &grid).unwrap();
        assert_eq!(a, b);
        let short = TimeSeries::from_grid(&grid, vec![c(0.0, 0.0); 1001]).unwrap();
        assert!(integrate_amplitude_ode(&p, MeanDipole::Sampled(&short), &grid).is_err());
    }

    #[test]
    fn rejects_large_step() {
        let p = CavityParams::new(1, 5.0, 0.1, 0.1).unwrap();
        let d = DipoleSpectrum::zero(DriveParams::new(1.0, 1).unwrap());
        let grid = UniformGrid::new(0.0, 0.05, 10).unwrap();
        assert!(matches!(
            integrate_amplitude_ode(&p, MeanDipole::Spectrum(&d), &grid),
            Err(Error::StepTooLarge { .. })
        ));
    }

    fn plan(n_trials: usize) -> NoisePlan {
        NoisePlan {
            dt: 0.05,
            sample_times: vec![0.0, 5.0, 20.0, 60.0],
            t_ref: 40.0,
            taus: vec![0.0, 1.0, 5.0],
            n_trials,
        }
    }

    #[test]
    fn zero_noise_gives_zero_trajectories() {
        let p = CavityParams::new(1, 1.0, 1.0, 0.1).unwrap();
        let e = monte_carlo_noise(&p, &FluctuationModel::none(), &plan(1000), 1).unwrap();
        assert!(e.occupation.mean.iter().all(|v| v.norm() == 0.0));
        assert!(e.two_time.mean.iter().all(|v| v.norm() == 0.0));
        assert!(e.occupation.stderr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn monte_carlo_tracks_discrete_expectation() {
        let p = CavityParams::new(1, 1.0, 1.0, 0.1).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        let e = monte_carlo_noise(&p, &f, &plan(4000), 7).unwrap();
        for (i, &t) in e.occupation.times.iter().enumerate() {
            let steps = (t / 0.05).round() as usize;
            let exact = discrete_noise_expectation(&p, &f, 0.05, steps);
            let (m, s) = (e.occupation.mean[i].re, e.occupation.stderr[i]);
            assert!((m - exact).abs() <= 5.0 * s + 1e-15, "t={t}: {m} vs {exact} (se {s})");
        }
        // The discrete law reproduces the continuum saturation C = delta g^2 / (2 kappa).
        let sat = discrete_noise_expectation(&p, &f, 0.05, 100_000);
        assert!((sat - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ensemble_is_deterministic_and_worker_independent() {
        let p = CavityParams::new(1, 1.0, 1.0, 0.1).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        let a = monte_carlo_noise(&p, &f, &plan(1000), 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| monte_carlo_noise(&p, &f, &plan(1000), 3).unwrap());
        assert_eq!(a, b);
        let c = monte_carlo_noise(&p, &f, &plan(1000), 4).unwrap();
        assert_ne!(a.occupation.mean, c.occupation.mean);
    }

    #[test]
    fn stderr_scales_as_inverse_root_trials() {
        let p = CavityParams::new(1, 1.0, 1.0, 0.1).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        let small = monte_carlo_noise(&p, &f, &plan(1000), 11).unwrap();
        let large = monte_carlo_noise(&p, &f, &plan(10_000), 11).unwrap();
        let ratio = small.occupation.stderr[3] / large.occupation.stderr[3];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.15, "ratio {ratio}");
    }

    #[test]
    fn monte_carlo_validation() {
        let p = CavityParams::new(1, 1.0, 1.0, 0.1).unwrap();
        let f = FluctuationModel::new(0.2).unwrap();
        assert!(matches!(
            monte_carlo_noise(&p, &f, &plan(999), 1),
            Err(Error::TooFewTrials { .. })
        ));
        let mut off = plan(1000);
        off.t_ref = 40.01;
        assert!(matches!(monte_carlo_noise(&p, &f, &off, 1), Err(Error::OffGrid { .. })));
        let mut coarse = plan(1000);
        coarse.dt = 0.2;
        coarse.sample_times = vec![0.0];
        coarse.taus = vec![0.0];
        assert!(matches!(monte_carlo_noise(&p, &f, &coarse, 1), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn csv_columns() {
        let p = CavityParams::new(1, 1.0, 1.0, 0.1).unwrap();
        let e = monte_carlo_noise(&p, &FluctuationModel::new(0.2).unwrap(), &plan(1000), 1).unwrap();
        let csv = e.two_time_csv().unwrap();
        assert!(csv.contains("\ntau,mean_re,mean_im,stderr\n"));
        assert!(csv.starts_with("#n_trials=1000\n#seed=1\n"));
    }

    #[test]
    fn log_fit_recovers_rate() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<Complex64> = x.iter().map(|&t| Complex64::from_polar(2.0 * (-0.3 * t).exp(), 5.0 * t)).collect();
        assert!((fit_log_decay(&x, &y) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn decoupled_bath_keeps_excitation() {
        let p = CavityParams::new(1, 1.0, 0.1, 0.05).unwrap();
        let bath = BathDiscretization::new(200, 1.0, 2.0, 0.0).unwrap();
        let grid = UniformGrid::new(0.0, 0.5, 41).unwrap();
        let d = discrete_bath_decay(&bath, &p, &grid).unwrap();
        assert!(d.amplitude.values().iter().all(|a| (a.norm() - 1.0).abs() < 1e-12));
        assert_eq!(d.kappa_effective, 0.0);
    }

    #[test]
    fn bath_geometry() {
        let bath = BathDiscretization::for_target_kappa(2001, 1.0, 2.0, 0.05).unwrap();
        assert!((bath.spacing() - 0.002).abs() < 1e-14);
        assert!((bath.kappa_nominal() - 0.05).abs() < 1e-12);
        let f: Vec<f64> = bath.frequencies().collect();
        assert!((f[0] + 1.0).abs() < 1e-12 && (f[2000] - 3.0).abs() < 1e-12);
        let k = bath.kappa_effective();
        let w = 2.001;
        assert!((k - 0.05 * (1.0 + 2.0 / PI * (k / w).atan())).abs() < 1e-14);
        assert!(k > 0.05 && k < 0.051);
        assert!(BathDiscretization::new(99, 1.0, 2.0, 0.01).is_err());
    }

    #[test]
    fn bath_decays_and_conserves_norm() {
        let kappa = 0.05;
        let p = CavityParams::new(1, 1.0, 0.1, kappa).unwrap();
        let bath = BathDiscretization::for_target_kappa(400, 1.0, 20.0 * kappa, kappa).unwrap();
        let grid = UniformGrid::span(0.0, 3.0 / kappa, 61).unwrap();
        let d = discrete_bath_decay(&bath, &p, &grid).unwrap();
        assert!(d.norm_error < 1e-8, "norm error {}", d.norm_error);
        assert!(d.max_deviation(d.kappa_effective) < 0.05);
        // Lab-frame phase rotates at omega_q.
        let a = d.amplitude.values()[1];
        assert!(a.arg().abs() > 0.0);
    }

    #[test]
    fn bath_rejects_recurrence() {
        let p = CavityParams::new(1, 1.0, 0.1, 0.05).unwrap();
        let bath = BathDiscretization::for_target_kappa(100, 1.0, 1.0, 0.05).unwrap();
        let grid = UniformGrid::span(0.0, 2.0 * bath.recurrence_time(), 11).unwrap();
        assert!(matches!(
            discrete_bath_decay(&bath, &p, &grid),
            Err(Error::RecurrenceExceeded { .. })
        ));
    }
}
