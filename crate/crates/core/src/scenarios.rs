//! Preset scenarios, barrier transmission and 50/50 beam-splitter tuning.
//!
//! A [`ScenarioConfig`] names a geometry, a state recipe and a time
//! sampling; [`run_scenario`] turns it into a deterministic bundle of
//! ledger frames, superoscillation masks, streamlines and node events.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{
    circulation, find_nodes, find_nodes_2d, quantile_position, streamline_family, trace_loop, vortex_profile,
    Cumulative, NodeEvent, NodeScan, NodeSearch, Streamline, StreamlineOptions, VortexProfile,
};
use crate::grid::{Grid1D, Grid2D, ScalarField};
use crate::madelung::{
    classify_superoscillation, continuity_residual, decompose, hj_residual, is_subset, EnergyDecomposition,
    SuperoscillationMask,
};
use crate::spectral::{basis_key, EigenBasis, Potential};
use crate::states::{
    calibrate_sigma, project_gaussian, Superposition, Truncation, WavepacketSpec, WidthCalibration, LEAK_TOLERANCE,
};

/// The nine presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ScenarioName {
    WellSuperposition,
    WellBarrierSuperposition,
    HoEigenstates,
    HoSuperposition,
    QuarticEigenstates,
    QuarticSuperposition,
    ReflectionPulse,
    #[cfg_attr(feature = "serde", serde(rename = "mzi_1d"))]
    Mzi1d,
    #[cfg_attr(feature = "serde", serde(rename = "vortex_2d"))]
    Vortex2d,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 9] = [
        ScenarioName::WellSuperposition,
        ScenarioName::WellBarrierSuperposition,
        ScenarioName::HoEigenstates,
        ScenarioName::HoSuperposition,
        ScenarioName::QuarticEigenstates,
        ScenarioName::QuarticSuperposition,
        ScenarioName::ReflectionPulse,
        ScenarioName::Mzi1d,
        ScenarioName::Vortex2d,
    ];

    /// The four ground + first-excited superpositions.
    pub const TWO_TERM: [ScenarioName; 4] = [
        ScenarioName::WellSuperposition,
        ScenarioName::WellBarrierSuperposition,
        ScenarioName::HoSuperposition,
        ScenarioName::QuarticSuperposition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::WellSuperposition => "well_superposition",
            ScenarioName::WellBarrierSuperposition => "well_barrier_superposition",
            ScenarioName::HoEigenstates => "ho_eigenstates",
            ScenarioName::HoSuperposition => "ho_superposition",
            ScenarioName::QuarticEigenstates => "quartic_eigenstates",
            ScenarioName::QuarticSuperposition => "quartic_superposition",
            ScenarioName::ReflectionPulse => "reflection_pulse",
            ScenarioName::Mzi1d => "mzi_1d",
            ScenarioName::Vortex2d => "vortex_2d",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown scenario '{s}'")))
    }
}

/// Spatial setup. Walls are always the grid ends.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum Geometry {
    Well { half_width: f64 },
    WellWithBarrier {
        half_width: f64,
        barrier_height: f64,
        barrier_width: f64,
    },
    /// Oscillator on `[−half_extent, half_extent]`.
    Harmonic { omega: f64, half_extent: f64 },
    /// `240x⁴ − 120x² + 15` on `[−half_extent, half_extent]`.
    QuarticDoubleWell { half_extent: f64 },
    /// Square box `[0, side]²`.
    #[cfg_attr(feature = "serde", serde(rename = "box_2d"))]
    Box2D { side: f64 },
}

impl Geometry {
    pub fn potential(&self) -> Option<Potential> {
        match *self {
            Geometry::Well { half_width } => Some(Potential::InfiniteWell { half_width }),
            Geometry::WellWithBarrier {
                half_width,
                barrier_height,
                barrier_width,
            } => Some(Potential::WellWithBarrier {
                half_width,
                barrier_height,
                barrier_width,
            }),
            Geometry::Harmonic { omega, .. } => Some(Potential::Harmonic { omega }),
            Geometry::QuarticDoubleWell { .. } => Some(Potential::QuarticDoubleWell),
            Geometry::Box2D { .. } => None,
        }
    }

    /// Half the extent of a 1D domain centred on 0.
    pub fn half_extent(&self) -> Option<f64> {
        match *self {
            Geometry::Well { half_width } | Geometry::WellWithBarrier { half_width, .. } => Some(half_width),
            Geometry::Harmonic { half_extent, .. } | Geometry::QuarticDoubleWell { half_extent } => Some(half_extent),
            Geometry::Box2D { .. } => None,
        }
    }

    pub fn grid_1d(&self, n: usize) -> Result<Grid1D> {
        let a = self
            .half_extent()
            .ok_or_else(|| Error::InvalidInput("geometry is two-dimensional".into()))?;
        Grid1D::new(-a, a, n)
    }
}

/// Gaussian pulse recipe. `sigma = None` calibrates the width so that
/// η-truncation on the empty well keeps `target_modes` terms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct PulseRecipe {
    pub x0: f64,
    pub p0: f64,
    pub target_modes: usize,
    pub sigma: Option<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Size of the basis the packet is first projected on.
    pub basis_levels: usize,
}

/// What state to build in the geometry's eigenbasis (levels count from 0).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum StateRecipe {
    /// `(ψ_a + e^{iφ} ψ_b)/√2`.
    EqualPair { levels: [usize; 2], phase: f64 },
    /// Each level run as its own stationary state.
    Eigenstates { levels: Vec<usize> },
    Pulse(PulseRecipe),
    /// `(ψ₁₂ + iψ₂₁)/√2` in the square box.
    DegenerateVortex,
}

/// Frame times.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum TimeSampling {
    /// `frames` equally spaced instants over this many recurrence periods,
    /// both ends included.
    Periods { periods: f64 },
    /// Uniform over `[0, t_end]`, both ends included.
    Window { t_end: f64 },
    /// A single frame at t = 0 (stationary states).
    Snapshot,
}

/// Named scalar diagnostics, in a fixed order.
pub type Metrics = Vec<(String, f64)>;
/// `(key, text)` remarks about choices a run made, in order.
pub type Notes = Vec<(String, String)>;

/// Barrier-height tuning for a 50/50 split.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct TuneOptions {
    pub tol: f64,
    pub u_low: f64,
    pub u_high: f64,
    pub max_probes: usize,
    pub t_measure: f64,
    pub x_split: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            tol: 0.01,
            u_low: 0.0,
            u_high: 4000.0,
            max_probes: 30,
            t_measure: 0.05,
            x_split: 0.0,
        }
    }
}

/// Which artifacts a run should produce.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct OutputSelection {
    pub fields: bool,
    pub streamlines: bool,
    pub nodes: bool,
    pub figures: bool,
}

impl Default for OutputSelection {
    fn default() -> Self {
        OutputSelection {
            fields: true,
            streamlines: true,
            nodes: true,
            figures: true,
        }
    }
}

/// A fully specified scenario; presets come from [`ScenarioConfig::preset`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub geometry: Geometry,
    pub recipe: StateRecipe,
    /// Points per axis.
    pub grid_n: usize,
    pub frames: usize,
    pub time: TimeSampling,
    /// Number of equal-probability streamline seeds.
    pub streamlines: usize,
    pub stream_tol: f64,
    /// Relative coefficient cutoff for pulse calibration.
    pub eta: f64,
    /// When set, the barrier height is replaced by the tuned 50/50 value.
    pub tune: Option<TuneOptions>,
    pub output: OutputSelection,
}

impl ScenarioConfig {
    /// Paper-default configuration for `name`.
    pub fn preset(name: ScenarioName) -> Self {
        let pair = StateRecipe::EqualPair {
            levels: [0, 1],
            phase: 0.0,
        };
        let periodic = TimeSampling::Periods { periods: 1.0 };
        let base = ScenarioConfig {
            name,
            geometry: Geometry::Well { half_width: 1.0 },
            recipe: pair.clone(),
            grid_n: 4001,
            frames: 65,
            time: periodic,
            streamlines: 19,
            stream_tol: 1e-8,
            eta: 1e-3,
            tune: None,
            output: OutputSelection::default(),
        };
        match name {
            // ψ₂ = −sin(πx) in our basis, so φ = π gives cos(πx/2) + sin(πx)
            ScenarioName::WellSuperposition => ScenarioConfig {
                recipe: StateRecipe::EqualPair {
                    levels: [0, 1],
                    phase: PI,
                },
                grid_n: 8001,
                ..base
            },
            ScenarioName::WellBarrierSuperposition => ScenarioConfig {
                geometry: Geometry::WellWithBarrier {
                    half_width: 1.0,
                    barrier_height: 15.0,
                    barrier_width: 0.2,
                },
                // even n: trapezoid quadrature, exact for the wall terms
                grid_n: 8000,
                ..base
            },
            ScenarioName::HoEigenstates => ScenarioConfig {
                geometry: Geometry::Harmonic {
                    omega: 10.0,
                    half_extent: 3.0,
                },
                recipe: StateRecipe::Eigenstates { levels: alloc::vec![0, 1] },
                grid_n: 80001,
                frames: 1,
                time: TimeSampling::Snapshot,
                streamlines: 0,
                ..base
            },
            ScenarioName::HoSuperposition => ScenarioConfig {
                geometry: Geometry::Harmonic {
                    omega: 10.0,
                    half_extent: 3.0,
                },
                ..base
            },
            ScenarioName::QuarticEigenstates => ScenarioConfig {
                geometry: Geometry::QuarticDoubleWell { half_extent: 1.25 },
                recipe: StateRecipe::Eigenstates { levels: alloc::vec![0, 1] },
                grid_n: 20001,
                frames: 1,
                time: TimeSampling::Snapshot,
                streamlines: 0,
                ..base
            },
            ScenarioName::QuarticSuperposition => ScenarioConfig {
                geometry: Geometry::QuarticDoubleWell { half_extent: 1.25 },
                ..base
            },
            // out to the wall and back: 2 · 0.5 / 25
            ScenarioName::ReflectionPulse => ScenarioConfig {
                geometry: Geometry::Well { half_width: 0.5 },
                recipe: StateRecipe::Pulse(PulseRecipe {
                    x0: 0.0,
                    p0: 25.0,
                    target_modes: 18,
                    sigma: None,
                    sigma_min: 0.02,
                    sigma_max: 0.2,
                    basis_levels: 60,
                }),
                time: TimeSampling::Window { t_end: 0.04 },
                grid_n: 4000,
                ..base
            },
            // split at 1/60, walls at 3/60, recombination at 4/60
            ScenarioName::Mzi1d => ScenarioConfig {
                geometry: Geometry::WellWithBarrier {
                    half_width: 2.0,
                    barrier_height: 0.0,
                    barrier_width: 0.02,
                },
                recipe: StateRecipe::Pulse(PulseRecipe {
                    x0: -1.0,
                    p0: 60.0,
                    target_modes: 89,
                    sigma: None,
                    sigma_min: 0.05,
                    sigma_max: 0.45,
                    basis_levels: 200,
                }),
                time: TimeSampling::Window { t_end: 0.1 },
                grid_n: 4000,
                tune: Some(TuneOptions::default()),
                ..base
            },
            ScenarioName::Vortex2d => ScenarioConfig {
                geometry: Geometry::Box2D { side: 1.0 },
                recipe: StateRecipe::DegenerateVortex,
                grid_n: 201,
                frames: 1,
                time: TimeSampling::Snapshot,
                streamlines: 8,
                stream_tol: 1e-9,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidInput(alloc::format!("{}: {why}", self.name)));
        if self.grid_n < 5 {
            return bad("grid_n must be at least 5");
        }
        if self.frames == 0 {
            return bad("frames must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.stream_tol > 0.0) {
            return bad("stream_tol must be positive");
        }
        let two_d = matches!(self.geometry, Geometry::Box2D { .. });
        if two_d != matches!(self.recipe, StateRecipe::DegenerateVortex) {
            return bad("the vortex recipe needs the 2D box and vice versa");
        }
        match &self.recipe {
            StateRecipe::EqualPair { levels, .. } if levels[0] == levels[1] => {
                return bad("equal pair needs two distinct levels");
            }
            StateRecipe::Eigenstates { levels } if levels.is_empty() => return bad("no eigenstates requested"),
            StateRecipe::Pulse(p) => {
                if p.target_modes == 0 || p.basis_levels <= p.target_modes {
                    return bad("pulse basis must be larger than the target mode count");
                }
                if !(0.0 < p.sigma_min && p.sigma_min < p.sigma_max) {
                    return bad("need 0 < sigma_min < sigma_max");
                }
            }
            _ => {}
        }
        if let TimeSampling::Periods { periods } = self.time {
            if !(periods > 0.0) || !matches!(self.recipe, StateRecipe::EqualPair { .. }) {
                return bad("period sampling needs a two-term state and periods > 0");
            }
        }
        if let TimeSampling::Window { t_end } = self.time {
            if !(t_end > 0.0) {
                return bad("t_end must be positive");
            }
        }
        if let Some(t) = &self.tune {
            if !matches!(self.geometry, Geometry::WellWithBarrier { .. })
                || !matches!(self.recipe, StateRecipe::Pulse(_))
            {
                return bad("tuning needs a pulse in a well with a barrier");
            }
            if !(t.tol > 0.0 && t.u_low >= 0.0 && t.u_low < t.u_high && t.max_probes >= 2) {
                return bad("invalid tuning options");
            }
        }
        if let Some(a) = self.geometry.half_extent() {
            if !(a > 0.0) {
                return bad("domain must have positive extent");
            }
        }
        Ok(())
    }
}

/// Persistent backing for [`EigenCache`] (e.g. a directory on disk).
///
/// `load` gets the potential and grid the key was derived from so a store
/// only needs to keep energies and sampled states.
pub trait BasisStore {
    fn load(&mut self, key: u64, potential: &Potential, grid: Grid1D) -> Option<EigenBasis<Grid1D>>;
    fn save(&mut self, key: u64, basis: &EigenBasis<Grid1D>);
}

/// Numerical eigenbases keyed by (potential fingerprint, grid, k).
#[derive(Default)]
pub struct EigenCache {
    memory: BTreeMap<u64, Arc<EigenBasis<Grid1D>>>,
    store: Option<Box<dyn BasisStore>>,
    pub solves: usize,
    pub hits: usize,
}

impl EigenCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_store(store: Box<dyn BasisStore>) -> Self {
        EigenCache {
            store: Some(store),
            ..Self::default()
        }
    }

    /// Lowest `k` finite-difference states of `potential`, solved at most once.
    pub fn numerical(&mut self, potential: &Potential, grid: Grid1D, k: usize) -> Result<Arc<EigenBasis<Grid1D>>> {
        let key = basis_key(potential, &grid, k);
        if let Some(b) = self.memory.get(&key) {
            self.hits += 1;
            return Ok(b.clone());
        }
        if let Some(b) = self.store.as_mut().and_then(|s| s.load(key, potential, grid)) {
            if b.grid() == &grid && b.len() == k {
                self.hits += 1;
                let b = Arc::new(b);
                self.memory.insert(key, b.clone());
                return Ok(b);
            }
        }
        let b = EigenBasis::numerical(potential, grid, k)?;
        self.solves += 1;
        if let Some(s) = self.store.as_mut() {
            s.save(key, &b);
        }
        let b = Arc::new(b);
        self.memory.insert(key, b.clone());
        Ok(b)
    }
}

/// Basis of a 1D geometry with at least `k` states.
pub fn basis_for(geometry: &Geometry, grid: Grid1D, k: usize, cache: &mut EigenCache) -> Result<Arc<EigenBasis<Grid1D>>> {
    match *geometry {
        Geometry::Well { .. } => Ok(Arc::new(EigenBasis::infinite_well(
            grid,
            &(1..=k).collect::<Vec<_>>(),
        )?)),
        Geometry::Harmonic { omega, .. } => Ok(Arc::new(EigenBasis::harmonic(grid, omega, k)?)),
        Geometry::Box2D { .. } => Err(Error::InvalidInput("geometry is two-dimensional".into())),
        _ => cache.numerical(&geometry.potential().expect("1D geometry"), grid, k),
    }
}

/// Probability beyond `x_split` at `t_measure`.
///
/// Fails with [`Error::NotCleared`] while more than [`LEAK_TOLERANCE`] of
/// the probability sits on the barrier.
pub fn transmission(s: &Superposition<Grid1D>, x_split: f64, t_measure: f64) -> Result<f64> {
    let rho = s.evaluate(t_measure).norm_sqr();
    if let Some(b) = s.basis().barrier() {
        let h = s.grid().spacing();
        let v = rho.values();
        let in_barrier: f64 = (b.first_index..b.last_index).map(|i| 0.5 * h * (v[i] + v[i + 1])).sum();
        if in_barrier > LEAK_TOLERANCE {
            return Err(Error::NotCleared { in_barrier });
        }
    }
    let c = Cumulative::new(&rho)?;
    let rho_x = s.value_at(x_split, t_measure).map(|(v, _)| v.norm_sqr());
    Ok(1.0 - c.cdf(x_split, rho_x))
}

/// Barrier geometry and packet held fixed while U₀ is tuned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitterSetup {
    pub grid: Grid1D,
    pub half_width: f64,
    pub barrier_width: f64,
    pub packet: WavepacketSpec,
    /// Leading barrier-basis terms kept in the pulse.
    pub modes: usize,
}

impl SplitterSetup {
    pub fn potential(&self, u0: f64) -> Potential {
        Potential::WellWithBarrier {
            half_width: self.half_width,
            barrier_height: u0,
            barrier_width: self.barrier_width,
        }
    }

    /// The band-limited pulse in the barrier basis for height `u0`.
    pub fn pulse(&self, u0: f64, cache: &mut EigenCache) -> Result<Superposition<Grid1D>> {
        let basis = cache.numerical(&self.potential(u0), self.grid, self.modes)?;
        project_gaussian(basis, self.packet, Truncation::Count(self.modes))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuningResult {
    pub u0_star: f64,
    pub transmission: f64,
    /// Number of transmission probes, bracketing included.
    pub iterations: usize,
    /// Final bisection bracket `(low, high)` in U₀.
    pub bracket: (f64, f64),
    /// Every probe in order.
    pub probes: Vec<(f64, f64)>,
}

/// Bisects U₀ until `|T − ½| < tol`. Each probe re-solves the barrier basis
/// and re-projects the packet. `u_high` is doubled while T stays above ½.
pub fn tune_beam_splitter(setup: &SplitterSetup, opts: &TuneOptions, cache: &mut EigenCache) -> Result<TuningResult> {
    let mut probes: Vec<(f64, f64)> = Vec::new();
    let mut probe = |u: f64, probes: &mut Vec<(f64, f64)>| -> Result<f64> {
        let s = setup.pulse(u, cache)?;
        let t = transmission(&s, opts.x_split, opts.t_measure)?;
        probes.push((u, t));
        Ok(t)
    };
    let done = |u: f64, t: f64, bracket: (f64, f64), probes: &Vec<(f64, f64)>| TuningResult {
        u0_star: u,
        transmission: t,
        iterations: probes.len(),
        bracket,
        probes: probes.clone(),
    };
    let (mut lo, mut hi) = (opts.u_low, opts.u_high);
    let t_lo = probe(lo, &mut probes)?;
    if (t_lo - 0.5).abs() < opts.tol {
        return Ok(done(lo, t_lo, (lo, hi), &probes));
    }
    let mut t_hi = probe(hi, &mut probes)?;
    while t_hi > 0.5 && (t_hi - 0.5).abs() >= opts.tol && probes.len() < opts.max_probes {
        lo = hi;
        hi *= 2.0;
        t_hi = probe(hi, &mut probes)?;
    }
    if (t_hi - 0.5).abs() < opts.tol {
        return Ok(done(hi, t_hi, (lo, hi), &probes));
    }
    let t_at_lo = probes.iter().rev().find(|p| p.0 == lo).map(|p| p.1).unwrap_or(t_lo);
    if !(t_at_lo > 0.5 && t_hi < 0.5) {
        return Err(Error::NoBracket { probes });
    }
    while probes.len() < opts.max_probes {
        let mid = 0.5 * (lo + hi);
        let t = probe(mid, &mut probes)?;
        if (t - 0.5).abs() < opts.tol {
            return Ok(done(mid, t, (lo, hi), &probes));
        }
        if t > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::TuningStalled { probes })
}

/// Ledger, masks and residual diagnostics at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub ledger: EnergyDecomposition<Grid1D>,
    pub mask: SuperoscillationMask<Grid1D>,
    pub checks: FrameChecks,
}

/// Residuals and set relations the ledger must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameChecks {
    pub norm: f64,
    pub qr_integral: f64,
    /// max |K_a + Q + U − E_p| over valid points.
    pub hj_max: f64,
    pub continuity_max: f64,
    /// max |Q − K_s − Q_r|.
    pub q_split_max: f64,
    /// max |K_c − K_a − K_s|.
    pub kc_split_max: f64,
    pub global_in_hard: bool,
    pub local_in_soft: bool,
    pub area_soft_qka: f64,
    pub area_soft_qrkc: f64,
    pub area_hard_qka: f64,
    pub area_hard_qrkc: f64,
}

fn max_valid(f: &ScalarField, valid: &[bool]) -> f64 {
    (0..f.len())
        .filter(|&i| valid[i] && f.is_valid(i))
        .map(|i| f.values()[i].abs())
        .fold(0.0, f64::max)
}

/// Builds one frame; `dt` is the half-width of the centred continuity stencil.
pub fn frame_at(s: &Superposition<Grid1D>, t: f64, dt: f64) -> Result<Frame> {
    let (_, ledger) = decompose(s, t)?;
    let mask = classify_superoscillation(&ledger);
    let p = &ledger.per_particle;
    let valid = &ledger.valid;
    let hj = hj_residual(&ledger)?;
    let q_split = p.q.zip_map(&p.k_s, |q, k| q - k)?.zip_map(&p.q_r, |a, b| a - b)?;
    let kc_split = p.k_c.zip_map(&p.k_a, |c, a| c - a)?.zip_map(&p.k_s, |a, b| a - b)?;
    let continuity = if s.is_stationary() {
        0.0
    } else {
        max_valid(&continuity_residual(s, t, dt)?, valid)
    };
    let checks = FrameChecks {
        norm: ledger.rho.integrate()?,
        qr_integral: ledger.density.q_r.integrate_masked()?,
        hj_max: max_valid(&hj, valid),
        continuity_max: continuity,
        q_split_max: max_valid(&q_split, valid),
        kc_split_max: max_valid(&kc_split, valid),
        global_in_hard: is_subset(&mask.forbidden_global, &mask.hard_qka),
        local_in_soft: is_subset(&mask.forbidden_local, &mask.soft_qka),
        area_soft_qka: mask.area(&mask.soft_qka),
        area_soft_qrkc: mask.area(&mask.soft_qrkc),
        area_hard_qka: mask.area(&mask.hard_qka),
        area_hard_qrkc: mask.area(&mask.hard_qrkc),
    };
    Ok(Frame { t, ledger, mask, checks })
}

/// Uniform instants over `[0, span]` with both ends included.
pub fn frame_times(span: f64, frames: usize) -> Vec<f64> {
    if frames <= 1 {
        return alloc::vec![0.0];
    }
    (0..frames).map(|k| span * k as f64 / (frames - 1) as f64).collect()
}

/// Isolated nodes of a periodic state within one period `[0, T)`.
///
/// Searches a slightly wider window, folds times into the period and merges
/// duplicates, so events sitting on the window edge are counted once.
pub fn nodes_per_period(s: &Superposition<Grid1D>, scan: NodeScan) -> Result<Vec<NodeEvent>> {
    let period = s
        .period()
        .ok_or_else(|| Error::InvalidInput("state has no recurrence period".into()))?;
    let g = *s.grid();
    let pad = 0.05 * period;
    let found = find_nodes(s, (-pad, period + pad), (g.x_min(), g.x_max()), scan)?;
    let tol_t = 4.0 * (period + 2.0 * pad) / (scan.t_points - 1) as f64;
    let tol_x = 4.0 * g.width() / (scan.x_points - 1) as f64;
    let mut out: Vec<NodeEvent> = Vec::new();
    for mut e in found.events {
        e.t_star -= period * (e.t_star / period).floor();
        if period - e.t_star < 1e-12 * period {
            e.t_star = 0.0;
        }
        let dup = out.iter().any(|o| {
            let dt = (o.t_star - e.t_star).abs();
            (o.x_star - e.x_star).abs() < tol_x && dt.min(period - dt) < tol_t
        });
        if !dup {
            out.push(e);
        }
    }
    out.sort_by(|a, b| a.t_star.total_cmp(&b.t_star).then(a.x_star.total_cmp(&b.x_star)));
    Ok(out)
}

/// One state's time series.
#[derive(Debug, Clone)]
pub struct StateRun {
    pub label: String,
    pub state: Superposition<Grid1D>,
    pub period: Option<f64>,
    pub frames: Vec<Frame>,
    pub streamlines: Vec<Streamline>,
    pub nodes: NodeSearch,
    /// Named scalar diagnostics in a fixed order.
    pub metrics: Metrics,
}

/// How the pulse width was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseInfo {
    pub sigma: f64,
    pub calibration: Option<WidthCalibration>,
    /// Count reached by η-truncation on the empty well at `sigma`.
    pub eta_index: usize,
    pub target_modes: usize,
    /// Probability of the packet captured by the kept terms.
    pub captured_norm: f64,
}

#[derive(Debug, Clone)]
pub struct VortexRun {
    pub state: Superposition<Grid2D>,
    pub ledger: EnergyDecomposition<Grid2D>,
    pub mask: SuperoscillationMask<Grid2D>,
    pub nodes: Vec<(f64, f64)>,
    pub profile: VortexProfile,
    pub circulation_node: f64,
    pub circulation_off: f64,
    /// max |E_p − E| over valid points.
    pub ep_deviation: f64,
    pub loops: Vec<Vec<(f64, f64)>>,
}

/// Everything a scenario produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub states: Vec<StateRun>,
    pub vortex: Option<VortexRun>,
    pub pulse: Option<PulseInfo>,
    pub tuning: Option<TuningResult>,
    /// Free-form provenance notes (key, value), fixed order.
    pub notes: Notes,
}

/// Centred symmetry defect `max |ρ(x) − ρ(−x)|` on a symmetric grid.
fn mirror_defect(rho: &ScalarField) -> f64 {
    let v = rho.values();
    let n = v.len();
    (0..n / 2).map(|i| (v[i] - v[n - 1 - i]).abs()).fold(0.0, f64::max)
}

/// Frame instants of `s` under `cfg`'s time sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    /// Total time covered (0 for a snapshot).
    pub span: f64,
    pub times: Vec<f64>,
    /// Half-width of the centred continuity stencil.
    pub dt: f64,
}

pub fn sampling(cfg: &ScenarioConfig, s: &Superposition<Grid1D>) -> Result<Sampling> {
    let span = match cfg.time {
        TimeSampling::Periods { periods } => {
            periods * s.period().ok_or_else(|| Error::InvalidInput("state has no recurrence period".into()))?
        }
        TimeSampling::Window { t_end } => t_end,
        TimeSampling::Snapshot => 0.0,
    };
    Ok(Sampling {
        span,
        times: frame_times(span, if span > 0.0 { cfg.frames } else { 1 }),
        dt: if span > 0.0 { span / (cfg.frames.max(2) as f64 * 8.0) } else { 1e-3 },
    })
}

/// Streamline family of `s` over the sampled span (empty for snapshots).
pub fn scenario_streamlines(cfg: &ScenarioConfig, s: &Superposition<Grid1D>) -> Result<Vec<Streamline>> {
    let span = sampling(cfg, s)?.span;
    if cfg.streamlines == 0 || span <= 0.0 {
        return Ok(Vec::new());
    }
    let opts = StreamlineOptions {
        tol: cfg.stream_tol,
        max_step: span / 256.0,
    };
    streamline_family(s, cfg.streamlines, 0.0, span, opts)
}

fn run_state(
    label: String,
    s: Superposition<Grid1D>,
    cfg: &ScenarioConfig,
    metrics: Metrics,
) -> Result<StateRun> {
    let period = s.period();
    let Sampling { span, times, dt } = sampling(cfg, &s)?;
    let frames = times.iter().map(|&t| frame_at(&s, t, dt)).collect::<Result<Vec<_>>>()?;

    let streamlines = if cfg.output.streamlines {
        scenario_streamlines(cfg, &s)?
    } else {
        Vec::new()
    };

    let g = *s.grid();
    let nodes = if !cfg.output.nodes {
        NodeSearch {
            events: Vec::new(),
            stationary_lines: Vec::new(),
        }
    } else if s.is_stationary() {
        find_nodes(&s, (0.0, 1.0), (g.x_min(), g.x_max()), NodeScan::default())?
    } else if period.is_some() && matches!(cfg.time, TimeSampling::Periods { .. }) {
        NodeSearch {
            events: nodes_per_period(&s, NodeScan::default())?,
            stationary_lines: Vec::new(),
        }
    } else {
        find_nodes(&s, (0.0, span), (g.x_min(), g.x_max()), NodeScan::default())?
    };

    let mut metrics = metrics;
    if let Some(p) = period {
        let q = decompose(&s, 0.25 * p)?.1;
        metrics.push(("period".into(), p));
        metrics.push(("quarter_period_mirror_defect".into(), mirror_defect(&q.rho)));
        // flux through the centre and the soft band around it at T/4
        let (v, d) = s.value_at(0.0, 0.25 * p).ok_or(Error::InvalidInput("centre outside grid".into()))?;
        metrics.push(("quarter_period_centre_flux".into(), (v.conj() * d).im));
        let mask = classify_superoscillation(&q);
        let c = g.nearest(0.0);
        if mask.soft_qka[c] {
            let mut a = c;
            while a > 0 && mask.soft_qka[a - 1] {
                a -= 1;
            }
            let mut b = c;
            while b + 1 < g.len() && mask.soft_qka[b + 1] {
                b += 1;
            }
            metrics.push(("quarter_period_soft_band_left".into(), g.x(a)));
            metrics.push(("quarter_period_soft_band_right".into(), g.x(b)));
        }
    }
    for (name, v) in [
        ("energy_mean", s.mean_energy()),
        ("band_limit", s.band_limit()),
        ("max_hj_residual", frames.iter().map(|f| f.checks.hj_max).fold(0.0, f64::max)),
        ("max_continuity_residual", frames.iter().map(|f| f.checks.continuity_max).fold(0.0, f64::max)),
        ("max_abs_qr_integral", frames.iter().map(|f| f.checks.qr_integral.abs()).fold(0.0, f64::max)),
    ] {
        metrics.push((name.into(), v));
    }
    if s.is_stationary() {
        let d = &frames[0].ledger.density;
        let e = s.band_limit();
        metrics.push((
            "energy_identity_error".into(),
            d.k_s.integrate_masked()? + d.u.integrate_masked()? - e,
        ));
    }
    if !streamlines.is_empty() {
        let worst = streamlines
            .iter()
            .flat_map(|l| l.samples.iter().map(move |&(t, x)| (l.seed_quantile, t, x)))
            .step_by(5)
            .map(|(q, t, x)| -> Result<f64> {
                let xq = quantile_position(&s, q, t)?;
                Ok((xq - x).abs())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        metrics.push(("max_streamline_quantile_offset".into(), worst));
    }
    Ok(StateRun {
        label,
        state: s,
        period,
        frames,
        streamlines,
        nodes,
        metrics,
    })
}

/// Chooses σ for a pulse: the given one, or the calibrated one. When the
/// target count is out of reach the closest reachable count is used instead
/// and the shortfall is recorded in the notes.
fn pulse_width(
    p: &PulseRecipe,
    grid: Grid1D,
    eta: f64,
    notes: &mut Notes,
) -> Result<(f64, Option<WidthCalibration>, usize)> {
    let empty = EigenBasis::infinite_well(grid, &(1..=p.basis_levels).collect::<Vec<_>>())?;
    let index_at = |sigma: f64| -> Result<usize> {
        let packet = WavepacketSpec::new(p.x0, p.p0, sigma)?;
        let c = crate::states::gaussian_coefficients(&empty, &packet)?;
        Ok(crate::states::truncation_index(&c, Truncation::Relative(eta)))
    };
    if let Some(sigma) = p.sigma {
        return Ok((sigma, None, index_at(sigma)?));
    }
    let cal = match calibrate_sigma(&empty, p.x0, p.p0, eta, p.target_modes, p.sigma_min, p.sigma_max) {
        Ok(c) => c,
        Err(Error::Calibration { target, reached }) => {
            notes.push((
                "calibration_shortfall".into(),
                alloc::format!(
                    "eta-truncation cannot keep exactly {target} terms for any width in [{}, {}]; \
                     calibrated to the closest reachable count {reached} and kept {target} terms",
                    p.sigma_min, p.sigma_max
                ),
            ));
            calibrate_sigma(&empty, p.x0, p.p0, eta, reached, p.sigma_min, p.sigma_max)?
        }
        Err(e) => return Err(e),
    };
    Ok((cal.sigma, Some(cal), cal.index))
}

/// The beam splitter of a tuned scenario (packet width chosen as the full
/// run chooses it), its tuning options and any calibration notes.
pub fn splitter_setup(cfg: &ScenarioConfig) -> Result<(SplitterSetup, TuneOptions, Notes)> {
    cfg.validate()?;
    let (
        Geometry::WellWithBarrier {
            half_width,
            barrier_width,
            ..
        },
        StateRecipe::Pulse(p),
        Some(opts),
    ) = (&cfg.geometry, &cfg.recipe, &cfg.tune)
    else {
        return Err(Error::InvalidInput(alloc::format!("{} has no beam splitter to tune", cfg.name)));
    };
    let grid = cfg.geometry.grid_1d(cfg.grid_n)?;
    let mut notes = Vec::new();
    let (sigma, _, _) = pulse_width(p, grid, cfg.eta, &mut notes)?;
    let setup = SplitterSetup {
        grid,
        half_width: *half_width,
        barrier_width: *barrier_width,
        packet: WavepacketSpec::new(p.x0, p.p0, sigma)?,
        modes: p.target_modes,
    };
    Ok((setup, *opts, notes))
}

/// The states a 1D scenario evolves, before any frames are computed.
#[derive(Debug, Clone)]
pub struct PreparedStates {
    /// `(label, state, metrics known at preparation)`.
    pub states: Vec<(String, Superposition<Grid1D>, Metrics)>,
    pub pulse: Option<PulseInfo>,
    pub tuning: Option<TuningResult>,
    pub notes: Notes,
}

/// Builds the scenario's states: eigenbasis, coefficients and, for the
/// beam splitter, the tuned barrier.
pub fn prepare_states(cfg: &ScenarioConfig, cache: &mut EigenCache) -> Result<PreparedStates> {
    cfg.validate()?;
    if matches!(cfg.geometry, Geometry::Box2D { .. }) {
        return Err(Error::InvalidInput("the 2D box has no 1D states".into()));
    }
    let mut out = PreparedStates {
        states: Vec::new(),
        pulse: None,
        tuning: None,
        notes: Vec::new(),
    };
    let grid = cfg.geometry.grid_1d(cfg.grid_n)?;
    match &cfg.recipe {
        StateRecipe::EqualPair { levels, phase } => {
            let k = levels[0].max(levels[1]) + 1;
            let basis = basis_for(&cfg.geometry, grid, k, cache)?;
            let c = FRAC_1_SQRT_2;
            let s = Superposition::new(
                basis,
                levels.to_vec(),
                alloc::vec![Complex64::new(c, 0.0), Complex64::from_polar(c, *phase)],
            )?;
            out.states.push(("pair".into(), s, Vec::new()));
        }
        StateRecipe::Eigenstates { levels } => {
            let k = levels.iter().max().copied().unwrap_or(0) + 1;
            let basis = basis_for(&cfg.geometry, grid, k, cache)?;
            for &n in levels {
                let s = Superposition::eigenstate(basis.clone(), n)?;
                out.states.push((alloc::format!("n{n}"), s, Vec::new()));
            }
        }
        StateRecipe::Pulse(p) => {
            let (sigma, calibration, eta_index) = pulse_width(p, grid, cfg.eta, &mut out.notes)?;
            let packet = WavepacketSpec::new(p.x0, p.p0, sigma)?;
            let mut metrics = Vec::new();
            let s = match (&cfg.geometry, &cfg.tune) {
                (
                    Geometry::WellWithBarrier {
                        half_width,
                        barrier_width,
                        ..
                    },
                    Some(t),
                ) => {
                    let setup = SplitterSetup {
                        grid,
                        half_width: *half_width,
                        barrier_width: *barrier_width,
                        packet,
                        modes: p.target_modes,
                    };
                    let tuned = tune_beam_splitter(&setup, t, cache)?;
                    let s = setup.pulse(tuned.u0_star, cache)?;
                    metrics.push(("u0_star".into(), tuned.u0_star));
                    metrics.push(("transmission".into(), tuned.transmission));
                    out.tuning = Some(tuned);
                    s
                }
                _ => {
                    let basis = basis_for(&cfg.geometry, grid, p.target_modes, cache)?;
                    project_gaussian(basis, packet, Truncation::Count(p.target_modes))?
                }
            };
            if let Geometry::WellWithBarrier { barrier_width, .. } = cfg.geometry {
                let b = s.basis().barrier().expect("barrier basis");
                out.notes.push((
                    "barrier_width".into(),
                    alloc::format!("{barrier_width} (snapped to {} on the grid)", b.snapped_width),
                ));
                if let TimeSampling::Window { t_end } = cfg.time {
                    let rho = s.evaluate(t_end).norm_sqr();
                    let c = Cumulative::new(&rho)?;
                    metrics.push(("launch_side_probability_at_end".into(), c.cdf(0.0, None)));
                }
            }
            out.pulse = Some(PulseInfo {
                sigma,
                calibration,
                eta_index,
                target_modes: p.target_modes,
                captured_norm: s.truncation().map_or(1.0, |t| t.captured_norm),
            });
            out.states.push(("pulse".into(), s, metrics));
        }
        StateRecipe::DegenerateVortex => unreachable!("validated"),
    }
    if cfg.name == ScenarioName::Mzi1d {
        out.notes.push((
            "barrier_width_reading".into(),
            "L/50 with L the unit length of the width-4L well; the alternative 4L/50 reading is barrier_width = 0.08"
                .to_string(),
        ));
    }
    Ok(out)
}

/// Runs a scenario end to end.
pub fn run_scenario(cfg: &ScenarioConfig, cache: &mut EigenCache) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let mut out = ScenarioOutput {
        config: cfg.clone(),
        states: Vec::new(),
        vortex: None,
        pulse: None,
        tuning: None,
        notes: Vec::new(),
    };
    if matches!(cfg.geometry, Geometry::Box2D { .. }) {
        out.vortex = Some(run_vortex(cfg)?);
        return Ok(out);
    }
    let prepared = prepare_states(cfg, cache)?;
    for (label, s, metrics) in prepared.states {
        out.states.push(run_state(label, s, cfg, metrics)?);
    }
    out.pulse = prepared.pulse;
    out.tuning = prepared.tuning;
    out.notes = prepared.notes;
    Ok(out)
}

/// The degenerate 2D vortex state, its ledger, profile and loops.
pub fn run_vortex(cfg: &ScenarioConfig) -> Result<VortexRun> {
    let Geometry::Box2D { side } = cfg.geometry else {
        return Err(Error::InvalidInput("the vortex needs the 2D box".into()));
    };
    let grid = Grid2D::square(0.0, side, cfg.grid_n)?;
    let basis = Arc::new(EigenBasis::box_2d(grid, &[(1, 2), (2, 1)])?);
    let c = FRAC_1_SQRT_2;
    let s = Superposition::new(basis, alloc::vec![0, 1], alloc::vec![Complex64::new(c, 0.0), Complex64::new(0.0, c)])?;
    let (_, ledger) = decompose(&s, 0.0)?;
    let mask = classify_superoscillation(&ledger);
    let e = s.band_limit();
    let ep = &ledger.per_particle.e_p;
    let ep_deviation = (0..ep.len())
        .filter(|&i| ledger.valid[i] && ep.is_valid(i))
        .map(|i| (ep.values()[i] - e).abs())
        .fold(0.0, f64::max);
    let nodes = find_nodes_2d(&s, 0.0)?;
    let center = (0.5 * side, 0.5 * side);
    let profile = vortex_profile(&s, center, 0.1 * side, 20, 0.0)?;
    let circulation_node = circulation(&s, center, 0.05 * side, 0.0, 256)?;
    let circulation_off = circulation(&s, (0.25 * side, 0.25 * side), 0.05 * side, 0.0, 256)?;

    // seeds on the vertical axis above the node, equally spaced in the
    // cumulative density of that half-line
    let mut loops = Vec::new();
    if cfg.streamlines > 0 && cfg.output.streamlines {
        let gy = grid.grid_y();
        let half = Grid1D::new(center.1, side, (cfg.grid_n / 2).max(3))?;
        let line = ScalarField::sample(half, |y| s.value_at(center.0, y, 0.0).map_or(0.0, |(v, _)| v.norm_sqr()));
        let seeds = crate::flow::seed_quantiles(&line, cfg.streamlines)?;
        let h = gy.spacing();
        for y in seeds {
            if y - center.1 < 2.0 * h || side - y < 2.0 * h {
                continue;
            }
            loops.push(trace_loop(&s, (center.0, y), 0.0, cfg.stream_tol, 2.0, 1e-4 * side)?);
        }
    }
    Ok(VortexRun {
        state: s,
        ledger,
        mask,
        nodes,
        profile,
        circulation_node,
        circulation_off,
        ep_deviation,
        loops,
    })
}
