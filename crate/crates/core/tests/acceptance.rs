//! One test per acceptance criterion. Each prints a PASS/FAIL line with the
//! measured values and the limits they are held to.

use std::path::PathBuf;
use std::sync::Mutex;

use driven_cavity::cli;
use driven_cavity::correlation::Convention;
use driven_cavity::verify::{self, CheckReport, ADJUDICATION_TRIALS, DEFAULT_SEED};

// Runtime limits are wall-clock, so criteria run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn check(run: impl FnOnce() -> Vec<CheckReport>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let reports = run();
    for r in &reports {
        println!("{r}");
    }
    for r in &reports {
        assert!(r.passed(), "criterion {} ({}) failed:\n{r}", r.id, r.name);
    }
}

fn default_scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.toml")
}

#[test]
fn criterion_1_2_coherent_amplitude_and_occupation() {
    check(|| verify::coherent_checks(DEFAULT_SEED).unwrap().to_vec());
}

#[test]
fn criterion_3_noise_occupation_law() {
    check(|| vec![verify::noise_law(DEFAULT_SEED).unwrap()]);
}

#[test]
fn criterion_4_long_time_limit() {
    check(|| vec![verify::longtime_limit(DEFAULT_SEED).unwrap()]);
}

#[test]
fn criterion_5_correlation_convention() {
    check(|| vec![verify::convention_adjudication(DEFAULT_SEED, ADJUDICATION_TRIALS).unwrap()]);
}

#[test]
fn criterion_6_spectrum_round_trip() {
    check(|| {
        Convention::ALL
            .into_iter()
            .map(|c| verify::spectrum_round_trip(c).unwrap())
            .collect()
    });
}

#[test]
fn criterion_7_power_consistency() {
    check(|| vec![verify::power_consistency().unwrap()]);
}

#[test]
fn criterion_8_markov_validation() {
    check(|| vec![verify::markov_validation().unwrap()]);
}

#[test]
fn criterion_9_determinism() {
    check(|| vec![cli::determinism_check(&default_scenario(), None).unwrap()]);
}
