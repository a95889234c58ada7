//! Superpositions over an eigenbasis, exact time evolution and Gaussian
//! packet projection.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D, Grid2D, Mesh};
use crate::spectral::EigenBasis;

/// Tolerance on Σ|c_n|² − 1.
pub const NORM_TOLERANCE: f64 = 1e-10;
/// Coefficients (per component) smaller than this are set to exactly zero.
pub const COEFF_CLAMP: f64 = 1e-14;
/// Default relative cutoff for "negligible" coefficients.
pub const DEFAULT_ETA: f64 = 1e-3;
/// Largest probability a packet may carry outside the well.
pub const LEAK_TOLERANCE: f64 = 1e-4;

/// Gaussian packet `e^{ip₀x} e^{−(x−x₀)²/4σ²}`, normalised on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketSpec {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
}

impl WavepacketSpec {
    pub fn new(x0: f64, p0: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !x0.is_finite() || !p0.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "packet needs finite x0, p0 and sigma > 0 (got sigma = {sigma})"
            )));
        }
        Ok(WavepacketSpec { x0, p0, sigma })
    }

    pub fn value(&self, x: f64) -> Complex64 {
        let amp = (2.0 * PI * self.sigma * self.sigma).powf(-0.25);
        let d = x - self.x0;
        Complex64::from_polar(
            amp * (-d * d / (4.0 * self.sigma * self.sigma)).exp(),
            self.p0 * x,
        )
    }

    /// Probability of `|G|²` outside `[lo, hi]`; `|G|²` is a normal density
    /// with standard deviation σ.
    pub fn probability_outside(&self, lo: f64, hi: f64) -> f64 {
        let z = |x: f64| (x - self.x0) / (SQRT_2 * self.sigma);
        0.5 * libm::erfc(-z(lo)) + 0.5 * libm::erfc(z(hi))
    }
}

/// How many projected modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep modes up to the last one with `|c_n| ≥ η·max|c|`.
    Relative(f64),
    /// Keep exactly the first `n` modes.
    Count(usize),
}

/// What a projection kept and threw away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationInfo {
    pub rule: Truncation,
    /// Number of leading modes kept (the paper-style "n > N negligible" N).
    pub index: usize,
    /// Σ|c_n|² over the kept modes before renormalising.
    pub captured_norm: f64,
    pub packet: WavepacketSpec,
}

/// `Ψ = Σ c_n ψ_n e^{−iE_n t}` over a shared eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition<G> {
    basis: Arc<EigenBasis<G>>,
    indices: Vec<usize>,
    coeffs: Vec<Complex64>,
    truncation: Option<TruncationInfo>,
}

impl<G: Mesh> Superposition<G> {
    /// Coefficients must already be normalised.
    pub fn new(basis: Arc<EigenBasis<G>>, indices: Vec<usize>, coeffs: Vec<Complex64>) -> Result<Self> {
        if indices.len() != coeffs.len() {
            return Err(Error::LengthMismatch {
                expected: indices.len(),
                found: coeffs.len(),
            });
        }
        if indices.is_empty() {
            return Err(Error::ZeroState);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= basis.len()) {
            return Err(Error::TooManyStates {
                requested: bad + 1,
                dimension: basis.len(),
            });
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(Error::InvalidInput("repeated eigenstate index".into()));
        }
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidInput(alloc::format!(
                "coefficients have norm² {norm}, expected 1"
            )));
        }
        Ok(Superposition {
            basis,
            indices,
            coeffs,
            truncation: None,
        })
    }

    /// Scales the coefficients to unit norm first.
    pub fn normalized(basis: Arc<EigenBasis<G>>, indices: Vec<usize>, coeffs: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroState);
        }
        let coeffs = coeffs.into_iter().map(|c| c / norm).collect();
        Self::new(basis, indices, coeffs)
    }

    pub fn eigenstate(basis: Arc<EigenBasis<G>>, n: usize) -> Result<Self> {
        Self::new(basis, alloc::vec![n], alloc::vec![Complex64::new(1.0, 0.0)])
    }

    /// `(ψ_m + ψ_n)/√2`.
    pub fn equal_pair(basis: Arc<EigenBasis<G>>, m: usize, n: usize) -> Result<Self> {
        let c = Complex64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::new(basis, alloc::vec![m, n], alloc::vec![c, c])
    }

    pub fn basis(&self) -> &Arc<EigenBasis<G>> {
        &self.basis
    }

    pub fn grid(&self) -> &G {
        self.basis.grid()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn truncation(&self) -> Option<&TruncationInfo> {
        self.truncation.as_ref()
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.basis.energies()[self.indices[k]]
    }

    /// Largest energy carried with nonzero weight.
    pub fn band_limit(&self) -> f64 {
        self.indices
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(&i, _)| self.basis.energies()[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ|c_n|² E_n`.
    pub fn mean_energy(&self) -> f64 {
        self.indices
            .iter()
            .zip(&self.coeffs)
            .map(|(&i, c)| c.norm_sqr() * self.basis.energies()[i])
            .sum()
    }

    /// Recurrence period `2π/|E_b − E_a|` of a two-term state.
    pub fn period(&self) -> Option<f64> {
        let live: Vec<f64> = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(&i, _)| self.basis.energies()[i])
            .collect();
        match live.as_slice() {
            [a, b] if a != b => Some(2.0 * PI / (b - a).abs()),
            _ => None,
        }
    }

    pub fn is_stationary(&self) -> bool {
        let mut live = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(&i, _)| self.basis.energies()[i]);
        match live.next() {
            Some(e) => live.all(|f| f == e),
            None => true,
        }
    }

    /// Time factors `c_n e^{−iE_n t}`.
    fn phased(&self, t: f64) -> Vec<Complex64> {
        self.indices
            .iter()
            .zip(&self.coeffs)
            .map(|(&i, &c)| c * Complex64::from_polar(1.0, -self.basis.energies()[i] * t))
            .collect()
    }

    fn combine(&self, weights: &[Complex64]) -> Field<G, Complex64> {
        let grid = *self.grid();
        let mut values = alloc::vec![Complex64::new(0.0, 0.0); grid.point_count()];
        for (&i, &w) in self.indices.iter().zip(weights) {
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (v, psi) in values.iter_mut().zip(self.basis.states()[i].values()) {
                *v += w * psi;
            }
        }
        Field::new(grid, values).expect("basis states are finite")
    }

    /// Ψ(·, t) on the grid.
    pub fn evaluate(&self, t: f64) -> Field<G, Complex64> {
        self.combine(&self.phased(t))
    }

    /// ∂Ψ/∂t(·, t), exactly.
    pub fn time_derivative(&self, t: f64) -> Field<G, Complex64> {
        let w: Vec<Complex64> = self
            .phased(t)
            .into_iter()
            .zip(&self.indices)
            .map(|(c, &i)| c * Complex64::new(0.0, -self.basis.energies()[i]))
            .collect();
        self.combine(&w)
    }

    /// `i∂Ψ/∂t − (−½∇²Ψ + UΨ)` with the grid Laplacian.
    pub fn schrodinger_residual(&self, t: f64) -> Result<Field<G, Complex64>> {
        let psi = self.evaluate(t);
        let lap = psi.laplacian();
        let dt = self.time_derivative(t);
        let u = self.basis.potential().map(|v| Complex64::new(v, 0.0));
        let h = lap.zip_map(&u.zip_map(&psi, |a, b| a * b)?, |l, up| -0.5 * l + up)?;
        dt.zip_map(&h, |d, h| Complex64::new(0.0, 1.0) * d - h)
    }
}

impl Superposition<Grid1D> {
    /// Ψ and ∂Ψ/∂x at an arbitrary point (closed form or interpolated basis).
    pub fn value_at(&self, x: f64, t: f64) -> Option<(Complex64, Complex64)> {
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for (k, w) in self.phased(t).into_iter().enumerate() {
            let (s, ds) = self.basis.state_at(self.indices[k], x)?;
            v += w * s;
            d += w * ds;
        }
        Some((v, d))
    }

    /// ∂Ψ/∂t at an arbitrary point.
    pub fn time_derivative_at(&self, x: f64, t: f64) -> Option<Complex64> {
        let mut d = Complex64::new(0.0, 0.0);
        for (k, w) in self.phased(t).into_iter().enumerate() {
            let (s, _) = self.basis.state_at(self.indices[k], x)?;
            d += w * Complex64::new(0.0, -self.energy(k)) * s;
        }
        Some(d)
    }
}

impl Superposition<Grid2D> {
    /// Ψ and ∇Ψ at an arbitrary point.
    pub fn value_at(&self, x: f64, y: f64, t: f64) -> Option<(Complex64, [Complex64; 2])> {
        let zero = Complex64::new(0.0, 0.0);
        let (mut v, mut gx, mut gy) = (zero, zero, zero);
        for (k, w) in self.phased(t).into_iter().enumerate() {
            let (s, g) = self.basis.state_at(self.indices[k], x, y)?;
            v += w * s;
            gx += w * g[0];
            gy += w * g[1];
        }
        Some((v, [gx, gy]))
    }
}

fn clamp(c: f64) -> f64 {
    if c.abs() < COEFF_CLAMP {
        0.0
    } else {
        c
    }
}

/// `c_n = ∫ψ_n G dx` for every state of the basis, by grid quadrature.
pub fn gaussian_coefficients(basis: &EigenBasis<Grid1D>, packet: &WavepacketSpec) -> Result<Vec<Complex64>> {
    let grid = *basis.grid();
    let g = Field::<Grid1D, Complex64>::sample(grid, |x| packet.value(x));
    basis
        .states()
        .iter()
        .map(|psi| {
            let c = psi.zip_map(&g, |a, b| b * a)?.integrate()?;
            Ok(Complex64::new(clamp(c.re), clamp(c.im)))
        })
        .collect()
}

/// Number of leading modes kept by `rule`.
pub fn truncation_index(coeffs: &[Complex64], rule: Truncation) -> usize {
    match rule {
        Truncation::Count(n) => n.min(coeffs.len()),
        Truncation::Relative(eta) => {
            let peak = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
            coeffs
                .iter()
                .rposition(|c| c.norm() >= eta * peak)
                .map_or(0, |i| i + 1)
        }
    }
}

/// Projects a Gaussian packet onto `basis`, keeps the leading modes chosen by
/// `rule` and renormalises them.
///
/// Fails with [`Error::PacketLeak`] when more than [`LEAK_TOLERANCE`] of the
/// packet lies outside the grid.
pub fn project_gaussian(
    basis: Arc<EigenBasis<Grid1D>>,
    packet: WavepacketSpec,
    rule: Truncation,
) -> Result<Superposition<Grid1D>> {
    let grid = *basis.grid();
    let leaked = packet.probability_outside(grid.x_min(), grid.x_max());
    if leaked > LEAK_TOLERANCE {
        return Err(Error::PacketLeak { leaked });
    }
    let all = gaussian_coefficients(&basis, &packet)?;
    let index = truncation_index(&all, rule);
    if index == 0 {
        return Err(Error::ZeroState);
    }
    if index == all.len() {
        if let Truncation::Relative(_) = rule {
            // the cutoff was never reached: the basis is too small to tell
            return Err(Error::TooManyStates {
                requested: index + 1,
                dimension: all.len(),
            });
        }
    }
    let kept = &all[..index];
    let captured_norm: f64 = kept.iter().map(|c| c.norm_sqr()).sum();
    let mut s = Superposition::normalized(basis, (0..index).collect(), kept.to_vec())?;
    s.truncation = Some(TruncationInfo {
        rule,
        index,
        captured_norm,
        packet,
    });
    Ok(s)
}

/// Result of tuning σ so that relative truncation lands on a target index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthCalibration {
    /// Midpoint of the σ interval that produces the target index.
    pub sigma: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub index: usize,
}

const CALIBRATION_SCAN: usize = 200;
const CALIBRATION_STEPS: usize = 50;

/// Finds the smallest-σ interval inside `[sigma_min, sigma_max]` on which
/// η-truncation of the projected packet keeps exactly `target` modes, and
/// returns its midpoint.
///
/// The kept-mode count first falls with σ (narrower momentum spread) and
/// then rises again once the walls clip the packet, so the range is scanned
/// before the interval edges are bisected. Widths that leak more than
/// [`LEAK_TOLERANCE`] are skipped. When no width works the error reports the
/// closest count seen.
pub fn calibrate_sigma(
    basis: &EigenBasis<Grid1D>,
    x0: f64,
    p0: f64,
    eta: f64,
    target: usize,
    sigma_min: f64,
    sigma_max: f64,
) -> Result<WidthCalibration> {
    if !(0.0 < sigma_min && sigma_min < sigma_max) {
        return Err(Error::InvalidInput("need 0 < sigma_min < sigma_max".into()));
    }
    let grid = *basis.grid();
    let count = |sigma: f64| -> Result<Option<usize>> {
        let packet = WavepacketSpec::new(x0, p0, sigma)?;
        if packet.probability_outside(grid.x_min(), grid.x_max()) > LEAK_TOLERANCE {
            return Ok(None);
        }
        let c = gaussian_coefficients(basis, &packet)?;
        Ok(Some(truncation_index(&c, Truncation::Relative(eta))))
    };
    let step = (sigma_max - sigma_min) / CALIBRATION_SCAN as f64;
    let sigma_at = |k: usize| sigma_min + step * k as f64;
    let mut counts = Vec::with_capacity(CALIBRATION_SCAN + 1);
    for k in 0..=CALIBRATION_SCAN {
        counts.push(count(sigma_at(k))?);
    }
    let Some(first) = counts.iter().position(|c| *c == Some(target)) else {
        let reached = counts
            .iter()
            .flatten()
            .min_by_key(|&&c| (c.abs_diff(target), c))
            .copied()
            .unwrap_or(0);
        return Err(Error::Calibration { target, reached });
    };
    let last = first + counts[first..].iter().take_while(|c| **c == Some(target)).count() - 1;
    // bisect an edge between a scan point that hits the target and one that does not
    let edge = |inside: f64, outside: f64| -> Result<f64> {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..CALIBRATION_STEPS {
            let m = 0.5 * (a + b);
            if count(m)? == Some(target) {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(a)
    };
    let sigma_low = if first == 0 {
        sigma_at(0)
    } else {
        edge(sigma_at(first), sigma_at(first - 1))?
    };
    let sigma_high = if last == CALIBRATION_SCAN {
        sigma_at(last)
    } else {
        edge(sigma_at(last), sigma_at(last + 1))?
    };
    let sigma = 0.5 * (sigma_low + sigma_high);
    match count(sigma)? {
        Some(index) if index == target => Ok(WidthCalibration {
            sigma,
            sigma_low,
            sigma_high,
            index,
        }),
        other => Err(Error::Calibration {
            target,
            reached: other.unwrap_or(0),
        }),
    }
}
