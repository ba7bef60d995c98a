//! Time grids and sampled series shared by every module.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a sampled grid is uniform.
pub const UNIFORM_RTOL: f64 = 1e-6;

/// Uniform grid `start + i * step` for `i in 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    start: f64,
    step: f64,
    len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::param("start", "must be finite"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("step", format!("must be positive, got {step}")));
        }
        if len == 0 {
            return Err(Error::param("len", "grid must contain at least one point"));
        }
        Ok(Self { start, step, len })
    }

    /// Grid with `len` points spanning `[start, stop]` inclusive.
    pub fn span(start: f64, stop: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::param("len", "a spanning grid needs at least two points"));
        }
        if !(stop > start) {
            return Err(Error::param("stop", format!("must exceed start ({stop} <= {start})")));
        }
        Self::new(start, (stop - start) / (len - 1) as f64, len)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.at(self.len - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.at(i)).collect()
    }

    /// Index of the grid point equal to `t`, if `t` sits on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.start) / self.step;
        let i = x.round();
        if i < 0.0 || (x - i).abs() > 1e-6 || i as usize >= self.len {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// Sampled signal on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    times: Vec<f64>,
    values: Vec<T>,
}

impl<T> TimeSeries<T> {
    pub fn new(times: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        check_increasing(&times)?;
        Ok(Self { times, values })
    }

    pub fn from_grid(grid: &UniformGrid, values: Vec<T>) -> Result<Self> {
        Self::new(grid.times(), values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<T>) {
        (self.times, self.values)
    }

    /// Spacing of the grid, or an error if it is not uniform.
    pub fn uniform_step(&self) -> Result<f64> {
        uniform_step(&self.times)
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> TimeSeries<U> {
        TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl TimeSeries<f64> {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl TimeSeries<Complex64> {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

pub(crate) fn check_increasing(times: &[f64]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::NotIncreasing(i + 1));
        }
    }
    if let Some(i) = times.iter().position(|t| !t.is_finite()) {
        return Err(Error::NotIncreasing(i));
    }
    Ok(())
}

pub(crate) fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::NonUniformGrid("fewer than two samples".into()));
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        let d = w[1] - w[0];
        if (d - step).abs() > UNIFORM_RTOL * step.abs() {
            return Err(Error::NonUniformGrid(format!(
                "spacing {d} at index {i} differs from mean spacing {step}"
            )));
        }
    }
    Ok(step)
}

/// Trapezoidal weights for `n` uniformly spaced samples with spacing `h`.
pub(crate) fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if n == 1 {
        0.0
    } else if i == 0 || i == n - 1 {
        0.5 * h
    } else {
        h
    }
}

/// Trapezoidal integral of samples `y` over the abscissae `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Largest `|a_i - b_i|` divided by the largest `|b_i|`.
///
/// Used wherever a reference curve passes through zero, so pointwise
/// relative error is undefined.
pub fn max_relative_deviation<I>(pairs: I) -> f64
where
    I: IntoIterator<Item = (Complex64, Complex64)>,
{
    let (num, den) = pairs
        .into_iter()
        .fold((0.0f64, 0.0f64), |(num, den), (a, b)| {
            (num.max((a - b).norm()), den.max(b.norm()))
        });
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
