//! `run`, `verify` and `decompose` front ends.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cavity::{self, OccupationMode};
use crate::config::{Scenario, ScenarioConfig};
use crate::correlation::{stationary_correlation, two_time_correlation, Convention};
use crate::error::{Error, Result};
use crate::io;
use crate::oracle::{self, MeanDipole, NoisePlan};
use crate::series::{self, TimeSeries, UniformGrid};
use crate::spectrum;
use crate::verify::{self, CheckReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_ORACLE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Csv(e) if e.is_io_error() => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

/// Relative-deviation limits recorded next to each crosscheck.
const AMPLITUDE_TOL: f64 = 1e-8;
const NOISE_Z_TOL: f64 = 5.0;
const BATH_TOL: f64 = 0.02;

/// One oracle comparison. `tolerance`, when present, bounds the quantity
/// named by `tested`; checks without one are informational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crosscheck {
    pub max_relative_deviation: f64,
    pub tested: &'static str,
    pub tolerance: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl Crosscheck {
    fn new(deviation: f64, tolerance: f64) -> Self {
        Self {
            max_relative_deviation: deviation,
            tested: "max_relative_deviation",
            tolerance: Some(tolerance),
            passed: deviation <= tolerance,
            extra: BTreeMap::new(),
        }
    }

    fn z_score(deviation: f64, z: f64, tolerance: Option<f64>) -> Self {
        let mut extra = BTreeMap::new();
        extra.insert("max_z_score".to_string(), z);
        Self {
            max_relative_deviation: deviation,
            tested: "max_z_score",
            tolerance,
            passed: tolerance.is_none_or(|t| z <= t),
            extra,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub convention: Convention,
    pub normalization: spectrum::Normalization,
    pub includes_dc: bool,
    pub warnings: Vec<String>,
    pub files: Vec<FileEntry>,
    pub crosschecks: BTreeMap<String, Crosscheck>,
}

impl Manifest {
    pub fn all_passed(&self) -> bool {
        self.crosschecks.values().all(|c| c.passed)
    }
}

pub struct RunOptions<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub seed_override: Option<u64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load(config: &Path, seed_override: Option<u64>) -> Result<(Scenario, Vec<u8>)> {
    let (cfg, bytes) = ScenarioConfig::load(config)?;
    let base = config.parent().unwrap_or_else(|| Path::new("."));
    Ok((cfg.validate(base, seed_override)?, bytes))
}

/// Artifacts in memory, in write order.
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    crosschecks: BTreeMap<String, Crosscheck>,
    warnings: Vec<String>,
}

impl Artifacts {
    fn add(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), content.into()));
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn compute(s: &Scenario) -> Result<Artifacts> {
    let mut a = Artifacts {
        files: Vec::new(),
        crosschecks: BTreeMap::new(),
        warnings: Vec::new(),
    };
    let (params, spec, fluct) = (&s.params, &s.spectrum, &s.fluct);
    a.add("dipole_spectrum.json", json_bytes(&spec.to_document())?);

    if s.outputs.occupation {
        let curve = cavity::occupation_curve(params, spec, fluct, &s.t_grid, OccupationMode::Full);
        a.add("occupation.csv", curve.to_csv()?);
    }
    if s.outputs.correlation {
        let corr = match s.correlation_t {
            Some(t) => two_time_correlation(params, spec, fluct, t, &s.tau_grid, s.convention)?,
            None => stationary_correlation(params, spec, fluct, &s.tau_grid, s.convention)?,
        };
        a.add("correlation.csv", corr.to_csv()?);
    }
    if s.outputs.spectrum {
        let grid = s
            .omega_grid
            .clone()
            .unwrap_or_else(|| spectrum::default_omega_grid(params, spec));
        let result = spectrum::power_spectrum(params, spec, fluct, &grid, s.normalization)?;
        a.warnings.extend(result.warnings.iter().map(ToString::to_string));
        a.add("lines.csv", result.lines_csv()?);
        a.add("continuum.csv", result.continuum_csv()?);
        a.add("spectrum.json", json_bytes(&result.to_document())?);
    }
    if s.outputs.power {
        let report = spectrum::integrated_power(params, spec, fluct, s.normalization);
        a.add("power_report.json", json_bytes(&report)?);
    }

    if s.crosscheck {
        amplitude_crosscheck(s, &mut a)?;
    }
    if let Some(mc) = &s.monte_carlo {
        let kappa = params.kappa();
        let snap = |t: f64| (t / mc.dt).round() * mc.dt;
        let horizon = snap(10.0 / kappa);
        let sample_times: Vec<f64> = (0..=20).map(|k| snap(horizon * k as f64 / 20.0)).collect();
        let t_ref = snap(20.0 / kappa);
        let taus: Vec<f64> = (0..=30).map(|k| snap(0.1 * k as f64 / kappa)).collect();
        let plan = NoisePlan {
            dt: mc.dt,
            sample_times,
            t_ref,
            taus,
            n_trials: mc.n_trials,
        };
        let e = oracle::monte_carlo_noise(params, fluct, &plan, mc.seed)?;
        a.add("mc_occupation.csv", e.occupation_csv()?);
        a.add("mc_correlation.csv", e.two_time_csv()?);

        let exact: Vec<Complex64> = plan
            .sample_times
            .iter()
            .map(|&t| Complex64::new(cavity::dipole_noise_occupation(params, fluct, t), 0.0))
            .collect();
        let dev = series::max_relative_deviation(e.occupation.mean.iter().copied().zip(exact.iter().copied()));
        let z = e
            .occupation
            .mean
            .iter()
            .zip(&exact)
            .zip(&e.occupation.stderr)
            .filter(|(_, &se)| se > 0.0)
            .map(|((m, x), se)| (m - x).norm() / se)
            .fold(0.0, f64::max);
        a.crosschecks.insert(
            "monte_carlo_noise_occupation".into(),
            Crosscheck::z_score(dev, z, Some(NOISE_Z_TOL)),
        );

        let zero = crate::dipole::DipoleSpectrum::zero(*spec.drive());
        for conv in Convention::ALL {
            let pred = stationary_correlation(params, &zero, fluct, &plan.taus, conv)?;
            let z = e
                .two_time
                .mean
                .iter()
                .zip(&pred.values)
                .zip(&e.two_time.stderr)
                .filter(|(_, &se)| se > 0.0)
                .map(|((m, p), se)| (m - p).norm() / se)
                .fold(0.0, f64::max);
            let dev = series::max_relative_deviation(e.two_time.mean.iter().copied().zip(pred.values.iter().copied()));
            // Informational: at most one convention can match.
            let mut check = Crosscheck::z_score(dev, z, None);
            check.extra.insert("agrees_within_5_stderr".into(), if z <= NOISE_Z_TOL { 1.0 } else { 0.0 });
            a.crosschecks.insert(format!("monte_carlo_correlation_{conv}"), check);
        }
    }
    if let Some(b) = &s.bath {
        let decay = oracle::discrete_bath_decay(&b.bath, params, &b.grid)?;
        let rows = decay
            .amplitude
            .times()
            .iter()
            .zip(decay.amplitude.values())
            .map(|(&t, v)| vec![t, v.re, v.im, v.norm()]);
        a.add(
            "bath_decay.csv",
            io::csv_string(
                &[
                    format!("n_modes={}", b.bath.n_modes()),
                    format!("kappa_effective={}", io::fmt_num(decay.kappa_effective)),
                ],
                &["t", "re", "im", "abs"],
                rows,
            )?,
        );
        let mut check = Crosscheck::new(decay.max_deviation(decay.kappa_effective), BATH_TOL);
        check.extra.insert("norm_error".into(), decay.norm_error);
        check.extra.insert("kappa_effective".into(), decay.kappa_effective);
        check.extra.insert(
            "max_pointwise_deviation".into(),
            decay.max_pointwise_deviation(decay.kappa_effective),
        );
        a.crosschecks.insert("markov_bath".into(), check);
    }
    Ok(a)
}

fn amplitude_crosscheck(s: &Scenario, a: &mut Artifacts) -> Result<()> {
    let params = &s.params;
    let top = s
        .spectrum
        .lines()
        .map(|h| h.frequency)
        .fold(params.omega_q().max(params.kappa()), f64::max);
    let horizon = s.t_grid.last().copied().unwrap_or(0.0).max(0.0);
    let h = 0.005 / top;
    let grid = UniformGrid::new(0.0, h, (horizon / h).ceil() as usize + 1)?;
    let alpha = oracle::integrate_amplitude_ode(params, MeanDipole::Spectrum(&s.spectrum), &grid)?;
    let amp = series::max_relative_deviation(
        alpha
            .times()
            .iter()
            .zip(alpha.values())
            .map(|(&t, v)| (v.conj(), cavity::mode_amplitude(params, &s.spectrum, t))),
    );
    let none = crate::dipole::FluctuationModel::none();
    let occ = series::max_relative_deviation(alpha.times().iter().zip(alpha.values()).map(|(&t, v)| {
        let n = cavity::occupation(params, &s.spectrum, &none, t, OccupationMode::Full).coherent;
        (Complex64::new(n, 0.0), Complex64::new(v.norm_sqr(), 0.0))
    }));
    a.crosschecks.insert("amplitude_ode".into(), Crosscheck::new(amp, AMPLITUDE_TOL));
    a.crosschecks.insert("occupation_identity".into(), Crosscheck::new(occ, AMPLITUDE_TOL));

    let stride = (grid.len() / 2000).max(1);
    let sub: Vec<usize> = (0..grid.len()).step_by(stride).collect();
    let series = TimeSeries::new(
        sub.iter().map(|&i| alpha.times()[i]).collect(),
        sub.iter().map(|&i| alpha.values()[i].conj()).collect(),
    )?;
    a.add("amplitude_oracle.csv", io::complex_series_csv(&series, "t")?);
    Ok(())
}

/// Writes every artifact into a staging directory inside `out`, then moves
/// them into place. Nothing is left behind on failure.
fn commit(out: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let staging = out.join(".staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let result = (|| {
        fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
        for (name, bytes) in files {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(p, e))?;
        }
        for (name, _) in files {
            let (from, to) = (staging.join(name), out.join(name));
            fs::rename(&from, &to).map_err(|e| Error::io(to, e))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for (name, _) in files {
            let _ = fs::remove_file(out.join(name));
        }
    }
    let _ = fs::remove_dir_all(&staging);
    result
}

/// Runs a scenario and writes its artifacts plus `manifest.json` into `out`.
pub fn run(opts: &RunOptions<'_>) -> Result<Manifest> {
    let (scenario, config_bytes) = load(opts.config, opts.seed_override)?;
    let artifacts = compute(&scenario)?;
    let files: Vec<FileEntry> = artifacts
        .files
        .iter()
        .map(|(name, bytes)| FileEntry {
            name: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        })
        .collect();
    let manifest = Manifest {
        config_sha256: sha256_hex(&config_bytes),
        seed: scenario.monte_carlo.as_ref().map(|m| m.seed),
        convention: scenario.convention,
        normalization: scenario.normalization,
        includes_dc: scenario.spectrum.has_dc(),
        warnings: artifacts.warnings,
        files,
        crosschecks: artifacts.crosschecks,
    };
    let mut all = artifacts.files;
    all.push(("manifest.json".into(), json_bytes(&manifest)?));
    commit(opts.out, &all)?;
    Ok(manifest)
}

/// Fits the configured sampled dipole and writes `dipole_spectrum.json`.
pub fn decompose(config: &Path, out: &Path) -> Result<PathBuf> {
    let (cfg, _) = ScenarioConfig::load(config)?;
    if cfg.dipole.series.is_none() {
        return Err(Error::config("dipole.series", "decompose needs a sampled dipole series"));
    }
    let scenario = cfg.validate(config.parent().unwrap_or_else(|| Path::new(".")), None)?;
    let bytes = json_bytes(&scenario.spectrum.to_document())?;
    commit(out, &[("dipole_spectrum.json".into(), bytes)])?;
    Ok(out.join("dipole_spectrum.json"))
}

fn scratch_dir(tag: &str, k: usize) -> PathBuf {
    std::env::temp_dir().join(format!("driven-cavity-{tag}-{}-{k}", std::process::id()))
}

/// Runs `config` twice into scratch directories and compares every CSV
/// byte for byte.
pub fn determinism_check(config: &Path, seed_override: Option<u64>) -> Result<CheckReport> {
    let start = std::time::Instant::now();
    let dirs = [scratch_dir("a", 0), scratch_dir("b", 1)];
    let outcome = (|| {
        let mut manifest = None;
        for d in &dirs {
            let _ = fs::remove_dir_all(d);
            manifest = Some(run(&RunOptions { config, out: d, seed_override })?);
        }
        let mut csvs = 0usize;
        let mut differing = Vec::new();
        for f in manifest.iter().flat_map(|m| &m.files).filter(|f| f.name.ends_with(".csv")) {
            csvs += 1;
            let read = |d: &Path| fs::read(d.join(&f.name)).map_err(|e| Error::io(d.join(&f.name), e));
            if read(&dirs[0])? != read(&dirs[1])? {
                differing.push(f.name.clone());
            }
        }
        Ok::<_, Error>((csvs, differing))
    })();
    for d in &dirs {
        let _ = fs::remove_dir_all(d);
    }
    let (csvs, differing) = outcome?;
    Ok(verify::determinism_report(csvs, &differing, start))
}

/// The full acceptance suite; criterion 9 reruns `config`.
pub fn verify(config: &Path, seed_override: Option<u64>) -> Result<Vec<CheckReport>> {
    let (scenario, _) = load(config, seed_override)?;
    let seed = seed_override
        .or(scenario.monte_carlo.as_ref().map(|m| m.seed))
        .unwrap_or(verify::DEFAULT_SEED);
    let mut reports = Vec::new();
    reports.extend(verify::coherent_checks(seed)?);
    reports.push(verify::noise_law(seed)?);
    reports.push(verify::longtime_limit(seed)?);
    reports.push(verify::convention_adjudication(seed, verify::ADJUDICATION_TRIALS)?);
    reports.push(verify::spectrum_round_trip(scenario.convention)?);
    reports.push(verify::power_consistency()?);
    reports.push(verify::markov_validation()?);
    reports.push(determinism_check(config, seed_override)?);
    Ok(reports)
}
