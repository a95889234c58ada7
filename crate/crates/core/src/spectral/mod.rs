//! Potentials, discrete Hamiltonians and eigenbases.
//!
//! Closed forms cover the infinite well, the harmonic oscillator and
//! products of well states on a 2D box; everything else goes through the
//! finite-difference Hamiltonian and the tridiagonal solver.

mod tridiag;

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D, Grid2D, Mesh, ScalarField, ScalarField2};

pub use tridiag::{SymTridiag, MAX_INVERSE_ITERATIONS};

/// Amplitude a closed-form harmonic state may keep at the grid edge.
pub const HARMONIC_EDGE_AMPLITUDE: f64 = 1e-12;

/// External potential U(x).
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// Walls at ±a, U = 0 inside. Encoded as Dirichlet ends of the grid.
    InfiniteWell { half_width: f64 },
    /// Infinite well with a centred rectangular barrier.
    WellWithBarrier {
        half_width: f64,
        barrier_height: f64,
        barrier_width: f64,
    },
    Harmonic { omega: f64 },
    /// U(x) = 240x⁴ − 120x² + 15: minima U(±½) = 0, barrier U(0) = 15.
    QuarticDoubleWell,
    Tabulated(ScalarField),
}

/// Where a rectangular barrier lands on a particular grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierGeometry {
    pub first_index: usize,
    pub last_index: usize,
    pub x_left: f64,
    pub x_right: f64,
    /// `x_right - x_left` after snapping both edges to grid points.
    pub snapped_width: f64,
}

impl Potential {
    /// U at an arbitrary point; the barrier uses its nominal edges.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::InfiniteWell { .. } => 0.0,
            Potential::WellWithBarrier {
                barrier_height,
                barrier_width,
                ..
            } => {
                if x.abs() <= 0.5 * barrier_width {
                    *barrier_height
                } else {
                    0.0
                }
            }
            Potential::Harmonic { omega } => 0.5 * omega * omega * x * x,
            Potential::QuarticDoubleWell => {
                let x2 = x * x;
                240.0 * x2 * x2 - 120.0 * x2 + 15.0
            }
            Potential::Tabulated(f) => f
                .interpolate(x)
                .map(|(v, _)| v)
                .unwrap_or(f64::NAN),
        }
    }

    /// Wall half-width for the well-type potentials.
    pub fn half_width(&self) -> Option<f64> {
        match self {
            Potential::InfiniteWell { half_width }
            | Potential::WellWithBarrier { half_width, .. } => Some(*half_width),
            _ => None,
        }
    }

    /// Barrier edges snapped to the nearest grid points.
    pub fn barrier_geometry(&self, grid: &Grid1D) -> Option<BarrierGeometry> {
        match self {
            Potential::WellWithBarrier { barrier_width, .. } => {
                let first_index = grid.nearest(-0.5 * barrier_width);
                let last_index = grid.nearest(0.5 * barrier_width);
                let (x_left, x_right) = (grid.x(first_index), grid.x(last_index));
                Some(BarrierGeometry {
                    first_index,
                    last_index,
                    x_left,
                    x_right,
                    snapped_width: x_right - x_left,
                })
            }
            _ => None,
        }
    }

    /// U on the grid. Barrier points are those between the snapped edges,
    /// inclusive.
    pub fn sample(&self, grid: &Grid1D) -> Result<ScalarField> {
        match self {
            Potential::Tabulated(f) => {
                if f.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                Ok(f.clone())
            }
            Potential::WellWithBarrier { barrier_height, .. } => {
                let b = self.barrier_geometry(grid).expect("barrier potential");
                let values = (0..grid.len())
                    .map(|i| {
                        if (b.first_index..=b.last_index).contains(&i) {
                            *barrier_height
                        } else {
                            0.0
                        }
                    })
                    .collect();
                ScalarField::new(*grid, values)
            }
            _ => Ok(ScalarField::sample(*grid, |x| self.value(x))),
        }
    }

    /// Stable 64-bit fingerprint (FNV-1a over the parameters) for caching.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        match self {
            Potential::InfiniteWell { half_width } => {
                h.write(b"well");
                h.f64(*half_width);
            }
            Potential::WellWithBarrier {
                half_width,
                barrier_height,
                barrier_width,
            } => {
                h.write(b"barrier");
                h.f64(*half_width);
                h.f64(*barrier_height);
                h.f64(*barrier_width);
            }
            Potential::Harmonic { omega } => {
                h.write(b"harmonic");
                h.f64(*omega);
            }
            Potential::QuarticDoubleWell => h.write(b"quartic"),
            Potential::Tabulated(f) => {
                h.write(b"tabulated");
                for v in f.values() {
                    h.f64(*v);
                }
            }
        }
        h.finish()
    }

    fn check_well_extent(&self, grid: &Grid1D) -> Result<()> {
        if let Some(a) = self.half_width() {
            let tol = 1e-9 * a.max(1.0);
            if (grid.x_min() + a).abs() > tol || (grid.x_max() - a).abs() > tol {
                return Err(Error::DomainMismatch(format!(
                    "well walls at ±{a} but grid spans [{}, {}]",
                    grid.x_min(),
                    grid.x_max()
                )));
            }
        }
        Ok(())
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn f64(&mut self, v: f64) {
        self.write(&v.to_bits().to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Fingerprint of (potential, grid, state count), used as a cache key.
pub fn basis_key(potential: &Potential, grid: &Grid1D, k: usize) -> u64 {
    let mut h = Fnv::new();
    h.write(&potential.fingerprint().to_le_bytes());
    h.f64(grid.x_min());
    h.f64(grid.x_max());
    h.write(&(grid.len() as u64).to_le_bytes());
    h.write(&(k as u64).to_le_bytes());
    h.finish()
}

/// Energy of level `n ≥ 1` of an infinite well of width `width` (ħ = m = 1).
pub fn infinite_well_energy(n: usize, width: f64) -> f64 {
    let k = n as f64 * PI / width;
    0.5 * k * k
}

/// Level `n ≥ 1` of the well on `[x_min, x_min + width]` and its derivative.
pub fn infinite_well_state(n: usize, x_min: f64, width: f64, x: f64) -> (f64, f64) {
    let s = x - x_min;
    if !(0.0..=width).contains(&s) {
        return (0.0, 0.0);
    }
    let amp = (2.0 / width).sqrt();
    let k = n as f64 * PI / width;
    (amp * (k * s).sin(), amp * k * (k * s).cos())
}

/// Hermite function `n` of frequency `omega` and its derivative, signed so
/// the leftmost lobe is positive.
pub fn harmonic_state(n: usize, omega: f64, x: f64) -> (f64, f64) {
    let xi = omega.sqrt() * x;
    let mut prev = 0.0;
    let mut cur = (omega / PI).powf(0.25) * (-0.5 * xi * xi).exp();
    // recurrence up to n + 1 for the derivative
    let mut levels = [0.0f64; 3];
    for k in 0..=n + 1 {
        if k + 1 >= n && k <= n + 1 {
            levels[k + 1 - n] = cur;
        }
        if k == n + 1 {
            break;
        }
        let next = (2.0 / (k + 1) as f64).sqrt() * xi * cur - (k as f64 / (k + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    let (below, at, above) = if n == 0 {
        (0.0, levels[1], levels[2])
    } else {
        (levels[0], levels[1], levels[2])
    };
    let nf = n as f64;
    let d = omega.sqrt() * ((nf / 2.0).sqrt() * below - ((nf + 1.0) / 2.0).sqrt() * above);
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    (sign * at, sign * d)
}

pub fn harmonic_energy(n: usize, omega: f64) -> f64 {
    (n as f64 + 0.5) * omega
}

/// `(E_n, ψ_n)` for the well with walls at ±a sampled on `grid`.
pub fn analytic_infinite_well(n: usize, half_width: f64, grid: &Grid1D) -> Result<(f64, ScalarField)> {
    if n == 0 {
        return Err(Error::InvalidInput("well levels start at n = 1".into()));
    }
    Potential::InfiniteWell { half_width }.check_well_extent(grid)?;
    let w = 2.0 * half_width;
    let psi = ScalarField::sample(*grid, |x| infinite_well_state(n, -half_width, w, x).0);
    Ok((infinite_well_energy(n, w), psi))
}

/// `(E_n, ψ_n)` for the harmonic oscillator; the grid must be wide enough
/// that the state has decayed below [`HARMONIC_EDGE_AMPLITUDE`] at both ends.
pub fn analytic_harmonic(n: usize, omega: f64, grid: &Grid1D) -> Result<(f64, ScalarField)> {
    let psi = ScalarField::sample(*grid, |x| harmonic_state(n, omega, x).0);
    let edge = psi.values()[0].abs().max(psi.values()[grid.len() - 1].abs());
    if edge >= HARMONIC_EDGE_AMPLITUDE {
        return Err(Error::EdgeAmplitude {
            state: n,
            amplitude: edge,
        });
    }
    Ok((harmonic_energy(n, omega), psi))
}

/// `H = -½ Δ + U` on the interior points; the two grid ends are Dirichlet
/// (ψ = 0) and are not unknowns.
pub fn build_hamiltonian(potential: &Potential, grid: &Grid1D) -> Result<SymTridiag> {
    let u = potential.sample(grid)?;
    let n = grid.len();
    let h = grid.spacing();
    let kinetic = 1.0 / (h * h);
    let mut diagonal = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let ui = u.values()[i];
        if !ui.is_finite() || !u.is_valid(i) {
            return Err(Error::NonFinite { index: i });
        }
        diagonal.push(kinetic + ui);
    }
    let off = -0.5 * kinetic;
    SymTridiag::new(diagonal, alloc::vec![off; n - 3])
}

/// How states of a basis can be evaluated away from grid points.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisFamily {
    /// Finite-difference eigenvectors; off-grid values use cubic interpolation.
    Numerical {
        potential: Potential,
        barrier: Option<BarrierGeometry>,
    },
    /// Well on `[x_min, x_min + width]`; `levels[k]` is the quantum number of state k.
    InfiniteWell {
        x_min: f64,
        width: f64,
        levels: Vec<usize>,
    },
    Harmonic { omega: f64, levels: Vec<usize> },
    /// Products `ψ_n(x) ψ_m(y)` of well states on a rectangle.
    Box2D {
        x_min: f64,
        y_min: f64,
        width_x: f64,
        width_y: f64,
        modes: Vec<(usize, usize)>,
    },
}

/// Energies and orthonormal eigenfunctions of a Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis<G> {
    grid: G,
    energies: Vec<f64>,
    states: Vec<Field<G, f64>>,
    potential: Field<G, f64>,
    family: BasisFamily,
}

impl<G: Mesh> EigenBasis<G> {
    pub fn grid(&self) -> &G {
        &self.grid
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn states(&self) -> &[Field<G, f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// U sampled on the grid.
    pub fn potential(&self) -> &Field<G, f64> {
        &self.potential
    }

    pub fn family(&self) -> &BasisFamily {
        &self.family
    }

    /// Gram matrix `∫ψ_m ψ_n` by grid quadrature.
    pub fn gram(&self) -> Result<Vec<Vec<f64>>> {
        let k = self.len();
        let mut g = alloc::vec![alloc::vec![0.0; k]; k];
        for m in 0..k {
            for n in m..k {
                let prod = self.states[m].zip_map(&self.states[n], |a, b| a * b)?;
                let v = prod.integrate()?;
                g[m][n] = v;
                g[n][m] = v;
            }
        }
        Ok(g)
    }
}

impl EigenBasis<Grid1D> {
    /// Assembles a basis from precomputed parts (used when loading a cache).
    pub fn from_parts(
        grid: Grid1D,
        energies: Vec<f64>,
        states: Vec<ScalarField>,
        potential: ScalarField,
        family: BasisFamily,
    ) -> Result<Self> {
        if energies.len() != states.len() {
            return Err(Error::LengthMismatch {
                expected: energies.len(),
                found: states.len(),
            });
        }
        if states.iter().any(|s| s.grid() != &grid) || potential.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        Ok(EigenBasis {
            grid,
            energies,
            states,
            potential,
            family,
        })
    }

    /// Closed-form well states `levels` with walls at the two grid ends.
    pub fn infinite_well(grid: Grid1D, levels: &[usize]) -> Result<Self> {
        if levels.contains(&0) {
            return Err(Error::InvalidInput("well levels start at n = 1".into()));
        }
        let (x_min, width) = (grid.x_min(), grid.width());
        let energies = levels.iter().map(|&n| infinite_well_energy(n, width)).collect();
        let states = levels
            .iter()
            .map(|&n| ScalarField::sample(grid, |x| infinite_well_state(n, x_min, width, x).0))
            .collect();
        Ok(EigenBasis {
            grid,
            energies,
            states,
            potential: ScalarField::zeros(grid),
            family: BasisFamily::InfiniteWell {
                x_min,
                width,
                levels: levels.to_vec(),
            },
        })
    }

    /// Closed-form oscillator states `0..k`.
    pub fn harmonic(grid: Grid1D, omega: f64, k: usize) -> Result<Self> {
        let mut energies = Vec::with_capacity(k);
        let mut states = Vec::with_capacity(k);
        for n in 0..k {
            let (e, psi) = analytic_harmonic(n, omega, &grid)?;
            energies.push(e);
            states.push(psi);
        }
        Ok(EigenBasis {
            grid,
            energies,
            states,
            potential: Potential::Harmonic { omega }.sample(&grid)?,
            family: BasisFamily::Harmonic {
                omega,
                levels: (0..k).collect(),
            },
        })
    }

    /// Rebuilds a finite-difference basis of `potential` from stored
    /// energies and grid-sampled states.
    pub fn numerical_from_parts(
        potential: &Potential,
        grid: Grid1D,
        energies: Vec<f64>,
        states: Vec<ScalarField>,
    ) -> Result<Self> {
        let family = BasisFamily::Numerical {
            potential: potential.clone(),
            barrier: potential.barrier_geometry(&grid),
        };
        Self::from_parts(grid, energies, states, potential.sample(&grid)?, family)
    }

    /// Lowest `k` finite-difference eigenstates of `potential` on `grid`.
    pub fn numerical(potential: &Potential, grid: Grid1D, k: usize) -> Result<Self> {
        potential.check_well_extent(&grid)?;
        let h = build_hamiltonian(potential, &grid)?;
        solve_eigen(&h, k, potential, grid)
    }

    /// Value and slope of state `k` at `x` (exact for closed forms, cubic
    /// interpolation otherwise).
    pub fn state_at(&self, k: usize, x: f64) -> Option<(f64, f64)> {
        match &self.family {
            BasisFamily::InfiniteWell {
                x_min,
                width,
                levels,
            } => self
                .grid
                .contains(x)
                .then(|| infinite_well_state(levels[k], *x_min, *width, x)),
            BasisFamily::Harmonic { omega, levels } => self
                .grid
                .contains(x)
                .then(|| harmonic_state(levels[k], *omega, x)),
            _ => self.states[k].interpolate(x),
        }
    }

    pub fn barrier(&self) -> Option<BarrierGeometry> {
        match &self.family {
            BasisFamily::Numerical { barrier, .. } => *barrier,
            _ => None,
        }
    }
}

impl EigenBasis<Grid2D> {
    /// Products of well states on the rectangle spanned by `grid`.
    /// Degenerate modes are allowed, so energies are only non-decreasing
    /// in the order given.
    pub fn box_2d(grid: Grid2D, modes: &[(usize, usize)]) -> Result<Self> {
        if modes.iter().any(|&(n, m)| n == 0 || m == 0) {
            return Err(Error::InvalidInput("box levels start at 1".into()));
        }
        let (gx, gy) = (grid.grid_x(), grid.grid_y());
        let (x_min, y_min, wx, wy) = (gx.x_min(), gy.x_min(), gx.width(), gy.width());
        let energies = modes
            .iter()
            .map(|&(n, m)| infinite_well_energy(n, wx) + infinite_well_energy(m, wy))
            .collect();
        let states = modes
            .iter()
            .map(|&(n, m)| {
                ScalarField2::sample(grid, |x, y| {
                    infinite_well_state(n, x_min, wx, x).0 * infinite_well_state(m, y_min, wy, y).0
                })
            })
            .collect();
        Ok(EigenBasis {
            grid,
            energies,
            states,
            potential: ScalarField2::zeros(grid),
            family: BasisFamily::Box2D {
                x_min,
                y_min,
                width_x: wx,
                width_y: wy,
                modes: modes.to_vec(),
            },
        })
    }

    /// Value and gradient of state `k` at `(x, y)`.
    pub fn state_at(&self, k: usize, x: f64, y: f64) -> Option<(f64, [f64; 2])> {
        match &self.family {
            BasisFamily::Box2D {
                x_min,
                y_min,
                width_x,
                width_y,
                modes,
            } => {
                if !(self.grid.grid_x().contains(x) && self.grid.grid_y().contains(y)) {
                    return None;
                }
                let (n, m) = modes[k];
                let (fx, dfx) = infinite_well_state(n, *x_min, *width_x, x);
                let (fy, dfy) = infinite_well_state(m, *y_min, *width_y, y);
                Some((fx * fy, [dfx * fy, fx * dfy]))
            }
            _ => None,
        }
    }
}

/// Lowest `k` eigenpairs of the interior Hamiltonian `h`, embedded back on
/// `grid` with zero ends, normalised by grid quadrature and signed so the
/// first component above 1e-3 of the peak is positive.
pub fn solve_eigen(h: &SymTridiag, k: usize, potential: &Potential, grid: Grid1D) -> Result<EigenBasis<Grid1D>> {
    if h.dim() + 2 != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len() - 2,
            found: h.dim(),
        });
    }
    if k >= h.dim() {
        return Err(Error::TooManyStates {
            requested: k,
            dimension: h.dim(),
        });
    }
    let pairs = h.lowest_eigenpairs(k)?;
    let mut energies = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k);
    for (e, v) in pairs {
        let mut values = alloc::vec![0.0; grid.len()];
        values[1..grid.len() - 1].copy_from_slice(&v);
        let peak = values.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let lead = values
            .iter()
            .find(|a| a.abs() > 1e-3 * peak)
            .copied()
            .unwrap_or(1.0);
        let psi = ScalarField::new(grid, values)?;
        let norm = psi.map(|a| a * a).integrate()?.sqrt();
        let scale = if lead < 0.0 { -1.0 / norm } else { 1.0 / norm };
        energies.push(e);
        states.push(psi.map(|a| a * scale));
    }
    Ok(EigenBasis {
        grid,
        energies,
        states,
        potential: potential.sample(&grid)?,
        family: BasisFamily::Numerical {
            potential: potential.clone(),
            barrier: potential.barrier_geometry(&grid),
        },
    })
}
