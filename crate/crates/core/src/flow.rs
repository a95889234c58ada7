//! Fluid kinematics: equal-probability seeding, streamlines in (x, t),
//! nodes of Ψ, and the radial structure of 2D vortices.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Grid2D, Mesh, ScalarField};
use crate::madelung::{decompose, NODE_EPSILON};
use crate::states::Superposition;

/// Streamlines stop where ρ falls below this multiple of the node threshold.
pub const HALT_FACTOR: f64 = 10.0;
const MAX_STEPS: usize = 200_000;
const NEWTON_STEPS: usize = 60;
/// |Ψ| a refined node must reach, relative to max |Ψ|.
pub const NODE_TOLERANCE: f64 = 1e-8;

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One embedded step; `None` if the vector field is undefined on the way.
fn dopri_step<const D: usize>(
    f: &impl Fn(f64, [f64; D]) -> Option<[f64; D]>,
    t: f64,
    y: [f64; D],
    h: f64,
) -> Option<([f64; D], f64)> {
    let mut k = [[0.0; D]; 7];
    for s in 0..7 {
        let mut ys = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for d in 0..D {
                ys[d] += h * A[s][j] * kj[d];
            }
        }
        k[s] = f(t + C[s] * h, ys)?;
    }
    let mut y5 = y;
    let mut err = 0.0f64;
    for d in 0..D {
        let mut e = 0.0;
        for s in 0..7 {
            y5[d] += h * B5[s] * k[s][d];
            e += h * (B5[s] - B4[s]) * k[s][d];
        }
        err = err.max(e.abs());
    }
    Some((y5, err))
}

/// Why an adaptive integration ended.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Halt {
    Done,
    /// The vector field became undefined (node) at this time.
    Undefined(f64),
}

/// Adaptive Dormand–Prince from `t0` to `t1` with absolute tolerance `tol`;
/// every accepted `(t, y)` is passed to `record`.
fn integrate_adaptive<const D: usize>(
    f: impl Fn(f64, [f64; D]) -> Option<[f64; D]>,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    tol: f64,
    max_step: f64,
    mut record: impl FnMut(f64, [f64; D]) -> bool,
) -> Result<Halt> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut h = (span / 100.0).min(max_step).max(f64::MIN_POSITIVE);
    let (mut t, mut y) = (t0, y0);
    for _ in 0..MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(Halt::Done);
        }
        let remaining = (t1 - t).abs();
        let step = h.min(remaining).min(max_step);
        match dopri_step(&f, t, y, dir * step) {
            Some((y5, err)) if err <= tol => {
                t = if step == remaining { t1 } else { t + dir * step };
                y = y5;
                if !record(t, y) {
                    return Ok(Halt::Undefined(t));
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
                h = step * grow;
            }
            Some((_, err)) => {
                h = step * (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.9);
            }
            None => {
                if step < 1e-14 * span.max(1.0) {
                    return Ok(Halt::Undefined(t));
                }
                h = step * 0.25;
            }
        }
        if h < 1e-15 * span.max(1.0) {
            return Ok(Halt::Undefined(t));
        }
    }
    Err(Error::InvalidInput("adaptive integration exceeded its step budget".into()))
}

/// Cumulative probability of a 1D density (trapezoid, rescaled to end at 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Cumulative {
    grid: Grid1D,
    rho: Vec<f64>,
    cum: Vec<f64>,
}

impl Cumulative {
    pub fn new(rho: &ScalarField) -> Result<Self> {
        let grid = *rho.grid();
        let v = rho.values();
        if let Some(index) = (0..v.len()).find(|&i| !rho.is_valid(i) || v[i] < 0.0) {
            return Err(Error::NonFinite { index });
        }
        let h = grid.spacing();
        let mut cum = Vec::with_capacity(v.len());
        cum.push(0.0);
        for i in 1..v.len() {
            cum.push(cum[i - 1] + 0.5 * h * (v[i - 1] + v[i]));
        }
        let total = cum[v.len() - 1];
        if !(total > 0.0) {
            return Err(Error::ZeroState);
        }
        Ok(Cumulative {
            grid,
            rho: v.iter().map(|r| r / total).collect(),
            cum: cum.iter().map(|c| c / total).collect(),
        })
    }

    /// Probability in `[x_min, x]`; `rho_x` is ρ(x) when known exactly.
    pub fn cdf(&self, x: f64, rho_x: Option<f64>) -> f64 {
        let g = &self.grid;
        if x <= g.x_min() {
            return 0.0;
        }
        if x >= g.x_max() {
            return 1.0;
        }
        let h = g.spacing();
        let i = (((x - g.x_min()) / h).floor() as usize).min(g.len() - 2);
        let x_i = g.x(i);
        let w = (x - x_i) / h;
        let r = rho_x.unwrap_or((1.0 - w) * self.rho[i] + w * self.rho[i + 1]);
        self.cum[i] + 0.5 * (x - x_i) * (self.rho[i] + r)
    }

    /// Inverse of [`Cumulative::cdf`] on the grid's piecewise-quadratic CDF.
    pub fn quantile(&self, q: f64) -> f64 {
        let g = &self.grid;
        let i = self.cum.partition_point(|&c| c < q).clamp(1, g.len() - 1) - 1;
        let (mut a, mut b) = (g.x(i), g.x(i + 1));
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.cdf(m, None) < q {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// Positions splitting `rho0` into `m + 1` equal-probability slabs.
pub fn seed_quantiles(rho0: &ScalarField, m: usize) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::InvalidInput("need at least one streamline".into()));
    }
    let c = Cumulative::new(rho0)?;
    Ok((1..=m).map(|i| c.quantile(i as f64 / (m + 1) as f64)).collect())
}

/// Probability in `[x_min, x]` at time `t`.
pub fn cdf_at(s: &Superposition<Grid1D>, x: f64, t: f64) -> Result<f64> {
    let c = Cumulative::new(&s.evaluate(t).norm_sqr())?;
    let rho_x = s.value_at(x, t).map(|(v, _)| v.norm_sqr());
    Ok(c.cdf(x, rho_x))
}

/// `x` with `∫_{x_min}^{x} ρ(·, t) = q`, by bisection.
pub fn quantile_position(s: &Superposition<Grid1D>, q: f64, t: f64) -> Result<f64> {
    if !(0.0 < q && q < 1.0) {
        return Err(Error::InvalidInput(alloc::format!("quantile {q} outside (0, 1)")));
    }
    let c = Cumulative::new(&s.evaluate(t).norm_sqr())?;
    let guess = c.quantile(q);
    // polish with exact point densities inside the bracketing cell
    let g = *s.grid();
    let h = g.spacing();
    let (mut a, mut b) = ((guess - h).max(g.x_min()), (guess + h).min(g.x_max()));
    let f = |x: f64| c.cdf(x, s.value_at(x, t).map(|(v, _)| v.norm_sqr())) - q;
    if f(a) > 0.0 || f(b) < 0.0 {
        return Ok(guess);
    }
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// A fluid trajectory `x(t)` with its starting quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub seed_quantile: f64,
    /// `(t, x)` at every accepted step, starting with the seed.
    pub samples: Vec<(f64, f64)>,
    /// Set when the trajectory ran into a node neighbourhood and stopped.
    pub halted_at: Option<f64>,
}

impl Streamline {
    pub fn end(&self) -> (f64, f64) {
        *self.samples.last().expect("streamlines start with their seed")
    }

    /// Linear interpolation of x at time `t` within the sampled range.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let k = self.samples.partition_point(|&(ts, _)| ts < t);
        if k == 0 {
            return (self.samples[0].0 == t).then_some(self.samples[0].1);
        }
        let (t1, x1) = *self.samples.get(k)?;
        let (t0, x0) = self.samples[k - 1];
        Some(x0 + (x1 - x0) * (t - t0) / (t1 - t0))
    }
}

/// Integration controls for [`integrate_streamline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamlineOptions {
    /// Absolute local error per step, in x.
    pub tol: f64,
    /// Upper bound on the step, so plots get enough samples.
    pub max_step: f64,
}

impl Default for StreamlineOptions {
    fn default() -> Self {
        StreamlineOptions {
            tol: 1e-8,
            max_step: f64::INFINITY,
        }
    }
}

/// `v_a = Im(Ψ̄Ψ')/|Ψ|²` at a point, or `None` inside the node halo.
pub fn velocity_at(s: &Superposition<Grid1D>, x: f64, t: f64, rho_floor: f64) -> Option<f64> {
    let (v, d) = s.value_at(x, t)?;
    let rho = v.norm_sqr();
    if rho < rho_floor {
        return None;
    }
    Some((v.conj() * d).im / rho)
}

fn halo(s: &Superposition<Grid1D>, t: f64) -> f64 {
    HALT_FACTOR * NODE_EPSILON * s.evaluate(t).norm_sqr().max_abs()
}

/// Integrates `dx/dt = v_a(x, t)` from `(t0, x0)` to `t1`.
pub fn integrate_streamline(
    s: &Superposition<Grid1D>,
    x0: f64,
    t0: f64,
    t1: f64,
    opts: StreamlineOptions,
) -> Result<Streamline> {
    let floor = halo(s, t0);
    if velocity_at(s, x0, t0, floor).is_none() {
        return Err(Error::StartMasked { x: x0 });
    }
    let seed_quantile = cdf_at(s, x0, t0)?;
    let mut samples = alloc::vec![(t0, x0)];
    let f = |t: f64, y: [f64; 1]| velocity_at(s, y[0], t, floor).map(|v| [v]);
    let halt = integrate_adaptive(f, t0, [x0], t1, opts.tol, opts.max_step, |t, y| {
        samples.push((t, y[0]));
        true
    })?;
    Ok(Streamline {
        seed_quantile,
        samples,
        halted_at: match halt {
            Halt::Done => None,
            Halt::Undefined(t) => Some(t),
        },
    })
}

/// Streamlines from equal-probability seeds of ρ(·, t0), ordered by quantile.
pub fn streamline_family(
    s: &Superposition<Grid1D>,
    m: usize,
    t0: f64,
    t1: f64,
    opts: StreamlineOptions,
) -> Result<Vec<Streamline>> {
    seed_quantiles(&s.evaluate(t0).norm_sqr(), m)?
        .into_iter()
        .map(|x0| integrate_streamline(s, x0, t0, t1, opts))
        .collect()
}

/// An isolated zero of Ψ in (x, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEvent {
    pub t_star: f64,
    pub x_star: f64,
    /// Newton reached `|Ψ| < NODE_TOLERANCE · max|Ψ|`.
    pub refined: bool,
    /// `|Ψ(x*, t*)| / max|Ψ|`.
    pub residual: f64,
}

/// Result of a node search.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSearch {
    pub events: Vec<NodeEvent>,
    /// For stationary states: fixed node positions valid at all times.
    pub stationary_lines: Vec<f64>,
}

/// Lattice resolution of the (x, t) scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeScan {
    pub x_points: usize,
    pub t_points: usize,
}

impl Default for NodeScan {
    fn default() -> Self {
        NodeScan {
            x_points: 401,
            t_points: 257,
        }
    }
}

fn newton_node(s: &Superposition<Grid1D>, mut x: f64, mut t: f64, scale: f64) -> (f64, f64, f64) {
    let mut best = (x, t, f64::INFINITY);
    for _ in 0..NEWTON_STEPS {
        let Some((v, dx)) = s.value_at(x, t) else { break };
        let dt = s.time_derivative_at(x, t).unwrap_or_default();
        let r = v.norm() / scale;
        if r < best.2 {
            best = (x, t, r);
        }
        if r < 1e-3 * NODE_TOLERANCE {
            break;
        }
        // [Re Ψx  Re Ψt; Im Ψx  Im Ψt] [δx δt]ᵀ = −[Re Ψ; Im Ψ]
        let det = dx.re * dt.im - dt.re * dx.im;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let ddx = -(v.re * dt.im - dt.re * v.im) / det;
        let ddt = -(dx.re * v.im - v.re * dx.im) / det;
        x += ddx;
        t += ddt;
        if ddx.abs() < 1e-15 && ddt.abs() < 1e-15 {
            break;
        }
    }
    best
}

/// Zeros of Ψ in `x_window × t_window`.
///
/// Stationary states are reported as fixed node lines. Otherwise local
/// minima of |Ψ|² on a lattice are refined by 2D Newton on (Re Ψ, Im Ψ)
/// with exact point evaluation; events within (2 Δx, 2 Δt) are merged.
/// Zeros on the domain boundary (walls) are ignored.
pub fn find_nodes(
    s: &Superposition<Grid1D>,
    t_window: (f64, f64),
    x_window: (f64, f64),
    scan: NodeScan,
) -> Result<NodeSearch> {
    let g = *s.grid();
    let (xa, xb) = (x_window.0.max(g.x_min()), x_window.1.min(g.x_max()));
    let (ta, tb) = t_window;
    if !(xa < xb && ta < tb) || scan.x_points < 3 || scan.t_points < 3 {
        return Err(Error::InvalidInput("empty node search window".into()));
    }
    let scale = s.evaluate(ta).map(|v| v.norm()).max_abs();
    let edge = 2.0 * g.spacing();
    let inside = |x: f64| x > g.x_min() + edge && x < g.x_max() - edge;

    if s.is_stationary() {
        // sign changes of the real profile Ψ e^{iEt}
        let phase = s.evaluate(0.0);
        let k = phase
            .values()
            .iter()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .copied()
            .unwrap_or(Complex64::new(1.0, 0.0));
        let rot = k.conj() / k.norm();
        let f = |x: f64| s.value_at(x, 0.0).map_or(0.0, |(v, _)| (v * rot).re);
        let dx = (xb - xa) / (scan.x_points - 1) as f64;
        let mut lines = Vec::new();
        for i in 0..scan.x_points - 1 {
            let (mut a, mut b) = (xa + dx * i as f64, xa + dx * (i + 1) as f64);
            let (fa, fb) = (f(a), f(b));
            if fa == 0.0 && inside(a) {
                lines.push(a);
                continue;
            }
            if fa * fb < 0.0 {
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if f(a) * f(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let x = 0.5 * (a + b);
                if inside(x) {
                    lines.push(x);
                }
            }
        }
        return Ok(NodeSearch {
            events: Vec::new(),
            stationary_lines: lines,
        });
    }

    let (nx, nt) = (scan.x_points, scan.t_points);
    let dx = (xb - xa) / (nx - 1) as f64;
    let dt = (tb - ta) / (nt - 1) as f64;
    // pad the lattice by one cell so minima on the window edge are seen
    let xs: Vec<f64> = (0..nx + 2).map(|i| xa + dx * (i as f64 - 1.0)).collect();
    let ts: Vec<f64> = (0..nt + 2).map(|j| ta + dt * (j as f64 - 1.0)).collect();
    let mut rho = alloc::vec![alloc::vec![f64::INFINITY; xs.len()]; ts.len()];
    for (j, &t) in ts.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            if let Some((v, _)) = s.value_at(x, t) {
                rho[j][i] = v.norm_sqr();
            }
        }
    }
    let mut events: Vec<NodeEvent> = Vec::new();
    for j in 1..ts.len() - 1 {
        for i in 1..xs.len() - 1 {
            let c = rho[j][i];
            if !c.is_finite() || !inside(xs[i]) {
                continue;
            }
            let is_min = (-1i32..=1).all(|dj| {
                (-1i32..=1).all(|di| {
                    (di == 0 && dj == 0) || c <= rho[(j as i32 + dj) as usize][(i as i32 + di) as usize]
                })
            });
            if !is_min || c > 0.05 * scale * scale {
                continue;
            }
            let (x, t, r) = newton_node(s, xs[i], ts[j], scale);
            let refined = r < NODE_TOLERANCE;
            let (x, t) = if refined { (x, t) } else { (xs[i], ts[j]) };
            if !(xa..=xb).contains(&x) || !(ta..=tb).contains(&t) || !inside(x) {
                continue;
            }
            let dup = events
                .iter()
                .any(|e| (e.x_star - x).abs() < 2.0 * dx && (e.t_star - t).abs() < 2.0 * dt);
            if !dup {
                events.push(NodeEvent {
                    t_star: t,
                    x_star: x,
                    refined,
                    residual: if refined { r } else { c.sqrt() / scale },
                });
            }
        }
    }
    events.sort_by(|a, b| a.t_star.total_cmp(&b.t_star).then(a.x_star.total_cmp(&b.x_star)));
    Ok(NodeSearch {
        events,
        stationary_lines: Vec::new(),
    })
}

/// Zeros of a 2D state at time `t`, refined by Newton in (x, y).
pub fn find_nodes_2d(s: &Superposition<Grid2D>, t: f64) -> Result<Vec<(f64, f64)>> {
    let g = *s.grid();
    let psi = s.evaluate(t);
    let rho = psi.norm_sqr();
    let scale = rho.max_abs().sqrt();
    if !(scale > 0.0) {
        return Err(Error::ZeroState);
    }
    let (nx, ny) = (g.nx(), g.ny());
    let mut found: Vec<(f64, f64)> = Vec::new();
    for j in 2..ny - 2 {
        for i in 2..nx - 2 {
            let c = rho.values()[g.index(i, j)];
            let is_min = (j - 1..=j + 1).all(|jj| (i - 1..=i + 1).all(|ii| c <= rho.values()[g.index(ii, jj)]));
            if !is_min || c > 0.05 * scale * scale {
                continue;
            }
            let (mut x, mut y) = g.coords(g.index(i, j));
            for _ in 0..NEWTON_STEPS {
                let Some((v, [vx, vy])) = s.value_at(x, y, t) else { break };
                if v.norm() < 1e-3 * NODE_TOLERANCE * scale {
                    break;
                }
                let det = vx.re * vy.im - vy.re * vx.im;
                if det == 0.0 {
                    break;
                }
                x -= (v.re * vy.im - vy.re * v.im) / det;
                y -= (vx.re * v.im - v.re * vx.im) / det;
            }
            let ok = s
                .value_at(x, y, t)
                .is_some_and(|(v, _)| v.norm() < NODE_TOLERANCE * scale);
            let h = g.grid_x().spacing().max(g.grid_y().spacing());
            if ok && !found.iter().any(|&(a, b)| (a - x).hypot(b - y) < 2.0 * h) {
                found.push((x, y));
            }
        }
    }
    Ok(found)
}

/// Radial structure of a vortex.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexProfile {
    pub radii: Vec<f64>,
    pub q_mean: Vec<f64>,
    pub ka_mean: Vec<f64>,
    pub speed_mean: Vec<f64>,
    /// Angular mean of `Q + K_a + U − E_p` per bin.
    pub energy_residual: Vec<f64>,
    /// `Z` in `K_a ≈ Z / 2r^p`.
    pub fit_z: f64,
    pub fit_exponent: f64,
}

/// Bins the grid ledger around `center` on `[2h, r_max]` and fits
/// `K_a ≈ C r^p` by least squares in log–log; `fit_z = 2C`.
pub fn vortex_profile(
    s: &Superposition<Grid2D>,
    center: (f64, f64),
    r_max: f64,
    n_bins: usize,
    t: f64,
) -> Result<VortexProfile> {
    let g = *s.grid();
    let (gx, gy) = (g.grid_x(), g.grid_y());
    let limit = (center.0 - gx.x_min())
        .min(gx.x_max() - center.0)
        .min(center.1 - gy.x_min())
        .min(gy.x_max() - center.1);
    if r_max > limit {
        return Err(Error::RadiusTooLarge { r_max, limit });
    }
    let h = gx.spacing().max(gy.spacing());
    let r_min = 2.0 * h;
    if n_bins == 0 || r_max <= r_min {
        return Err(Error::InvalidInput("need n_bins > 0 and r_max > 2h".into()));
    }
    let (f, d) = decompose(s, t)?;
    let speed = f.speed();
    let p = &d.per_particle;
    let width = (r_max - r_min) / n_bins as f64;
    let mut acc = alloc::vec![[0.0f64; 6]; n_bins];
    for idx in 0..g.point_count() {
        if !(p.q.is_valid(idx) && p.k_a.is_valid(idx) && speed.is_valid(idx) && p.e_p.is_valid(idx)) {
            continue;
        }
        let (x, y) = g.coords(idx);
        let r = (x - center.0).hypot(y - center.1);
        if r < r_min || r > r_max {
            continue;
        }
        let b = (((r - r_min) / width) as usize).min(n_bins - 1);
        let a = &mut acc[b];
        a[0] += 1.0;
        a[1] += r;
        a[2] += p.q.values()[idx];
        a[3] += p.k_a.values()[idx];
        a[4] += speed.values()[idx];
        a[5] += p.q.values()[idx] + p.k_a.values()[idx] + p.u.values()[idx] - p.e_p.values()[idx];
    }
    let mut prof = VortexProfile {
        radii: Vec::new(),
        q_mean: Vec::new(),
        ka_mean: Vec::new(),
        speed_mean: Vec::new(),
        energy_residual: Vec::new(),
        fit_z: f64::NAN,
        fit_exponent: f64::NAN,
    };
    for a in acc.iter().filter(|a| a[0] > 0.0) {
        prof.radii.push(a[1] / a[0]);
        prof.q_mean.push(a[2] / a[0]);
        prof.ka_mean.push(a[3] / a[0]);
        prof.speed_mean.push(a[4] / a[0]);
        prof.energy_residual.push(a[5] / a[0]);
    }
    if prof.radii.len() < 2 {
        return Err(Error::InvalidInput("too few populated radial bins to fit".into()));
    }
    let pts: Vec<(f64, f64)> = prof
        .radii
        .iter()
        .zip(&prof.ka_mean)
        .filter(|(_, &k)| k > 0.0)
        .map(|(&r, &k)| (r.ln(), k.ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    let slope = sxy / sxx;
    prof.fit_exponent = slope;
    prof.fit_z = 2.0 * (my - slope * mx).exp();
    Ok(prof)
}

/// `∮ v_a · dl` counter-clockwise around a circle, from exact point values
/// (periodic trapezoid rule).
pub fn circulation(s: &Superposition<Grid2D>, center: (f64, f64), radius: f64, t: f64, n_points: usize) -> Result<f64> {
    if n_points < 8 || !(radius > 0.0) {
        return Err(Error::InvalidInput("circulation needs radius > 0 and ≥ 8 points".into()));
    }
    let mut total = 0.0;
    for k in 0..n_points {
        let th = 2.0 * PI * k as f64 / n_points as f64;
        let (c, sn) = (th.cos(), th.sin());
        let (x, y) = (center.0 + radius * c, center.1 + radius * sn);
        let (v, [vx, vy]) = s
            .value_at(x, y, t)
            .ok_or(Error::RadiusTooLarge { r_max: radius, limit: 0.0 })?;
        let rho = v.norm_sqr();
        if rho == 0.0 {
            return Err(Error::StartMasked { x });
        }
        let (ux, uy) = ((v.conj() * vx).im / rho, (v.conj() * vy).im / rho);
        total += ux * (-sn) + uy * c;
    }
    Ok(total * 2.0 * PI * radius / n_points as f64)
}

/// Closed flow loop of a stationary 2D state through `seed`, traced until it
/// comes back within `close` of the seed (or `max_time` elapses).
pub fn trace_loop(
    s: &Superposition<Grid2D>,
    seed: (f64, f64),
    t: f64,
    tol: f64,
    max_time: f64,
    close: f64,
) -> Result<Vec<(f64, f64)>> {
    let floor = HALT_FACTOR * NODE_EPSILON * s.evaluate(t).norm_sqr().max_abs();
    let f = |_: f64, y: [f64; 2]| {
        let (v, [vx, vy]) = s.value_at(y[0], y[1], t)?;
        let rho = v.norm_sqr();
        (rho >= floor).then(|| [(v.conj() * vx).im / rho, (v.conj() * vy).im / rho])
    };
    if f(0.0, [seed.0, seed.1]).is_none() {
        return Err(Error::StartMasked { x: seed.0 });
    }
    let mut pts = alloc::vec![seed];
    let mut left = false;
    integrate_adaptive(f, 0.0, [seed.0, seed.1], max_time, tol, max_time / 64.0, |_, y| {
        let d = (y[0] - seed.0).hypot(y[1] - seed.1);
        pts.push((y[0], y[1]));
        if d > 2.0 * close {
            left = true;
        }
        !(left && d < close)
    })?;
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::EigenBasis;
    use alloc::sync::Arc;

    fn well_pair() -> Superposition<Grid1D> {
        let g = Grid1D::new(-1.0, 1.0, 2001).unwrap();
        let b = Arc::new(EigenBasis::infinite_well(g, &[1, 2]).unwrap());
        let c = core::f64::consts::FRAC_1_SQRT_2;
        Superposition::new(b, alloc::vec![0, 1], alloc::vec![Complex64::new(c, 0.0), Complex64::new(-c, 0.0)])
            .unwrap()
    }

    fn vortex() -> Superposition<Grid2D> {
        let g = Grid2D::square(0.0, 1.0, 201).unwrap();
        let b = Arc::new(EigenBasis::box_2d(g, &[(1, 2), (2, 1)]).unwrap());
        let c = core::f64::consts::FRAC_1_SQRT_2;
        Superposition::new(b, alloc::vec![0, 1], alloc::vec![Complex64::new(c, 0.0), Complex64::new(0.0, c)])
            .unwrap()
    }

    #[test]
    fn uniform_density_seeds() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let seeds = seed_quantiles(&ScalarField::sample(g, |_| 1.0), 3).unwrap();
        for (s, e) in seeds.iter().zip([0.25, 0.5, 0.75]) {
            assert!((s - e).abs() < 1e-6);
        }
        assert!(seed_quantiles(&ScalarField::sample(g, |_| 1.0), 0).is_err());
    }

    #[test]
    fn symmetric_density_centres_the_middle_seed() {
        let g = Grid1D::new(-2.0, 2.0, 801).unwrap();
        let seeds = seed_quantiles(&ScalarField::sample(g, |x| (-x * x).exp()), 5).unwrap();
        assert!(seeds[2].abs() < g.spacing());
        assert!((seeds[0] + seeds[4]).abs() < 1e-9);
    }

    #[test]
    fn gaussian_seeds_match_direct_inversion() {
        // oscillator ground state: ρ is normal with variance 1/(2ω)
        let omega = 10.0;
        let g = Grid1D::new(-3.0, 3.0, 4001).unwrap();
        let rho = ScalarField::sample(g, |x| (omega / PI).sqrt() * (-omega * x * x).exp());
        let seeds = seed_quantiles(&rho, 2).unwrap();
        let sd = (0.5 / omega).sqrt();
        // independent inversion of Φ(x/sd) = 1/3 by bisection on erf
        let (mut a, mut b) = (-3.0, 0.0);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if 0.5 * libm::erfc(-m / (sd * core::f64::consts::SQRT_2)) < 1.0 / 3.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((seeds[0] - a).abs() < 1e-5, "{} vs {a}", seeds[0]);
        assert!((seeds[1] + a).abs() < 1e-5);
    }

    #[test]
    fn eigenstate_streamlines_stand_still() {
        let g = Grid1D::new(-1.0, 1.0, 801).unwrap();
        let b = Arc::new(EigenBasis::infinite_well(g, &[1, 2]).unwrap());
        let s = Superposition::eigenstate(b, 1).unwrap();
        let line = integrate_streamline(&s, 0.4, 0.0, 3.0, StreamlineOptions::default()).unwrap();
        assert!((line.end().1 - 0.4).abs() < 1e-12);
        assert_eq!(line.end().0, 3.0);
        assert!(integrate_streamline(&s, 0.0, 0.0, 1.0, StreamlineOptions::default()).is_err());
        // ρ ~ x² at the node, so the median is only pinned to ~ε^(1/3)
        assert!((quantile_position(&s, 0.5, 0.0).unwrap()).abs() < 1e-4);
        let q0 = quantile_position(&s, 0.3, 0.0).unwrap();
        assert!((quantile_position(&s, 0.3, 2.1).unwrap() - q0).abs() < 1e-12);
    }

    #[test]
    fn streamline_transports_its_quantile_and_recurs() {
        let s = well_pair();
        let period = s.period().unwrap();
        let x0 = quantile_position(&s, 0.3, 0.0).unwrap();
        let line = integrate_streamline(&s, x0, 0.0, period, StreamlineOptions::default()).unwrap();
        assert!(line.halted_at.is_none());
        assert!((line.seed_quantile - 0.3).abs() < 1e-6);
        for &(t, x) in line.samples.iter().step_by(7) {
            let q = cdf_at(&s, x, t).unwrap();
            assert!((q - 0.3).abs() < 1e-3, "t={t}: {q}");
            let xq = quantile_position(&s, 0.3, t).unwrap();
            assert!((xq - x).abs() < 1e-3, "t={t}: {x} vs {xq}");
        }
        assert!((line.end().1 - x0).abs() < 1e-3);
    }

    #[test]
    fn two_term_state_has_two_mirrored_nodes_per_period() {
        let s = well_pair();
        let period = s.period().unwrap();
        // half-open window shifted off the node instants
        let found = find_nodes(&s, (-0.1 * period, 0.9 * period), (-1.0, 1.0), NodeScan::default()).unwrap();
        assert_eq!(found.events.len(), 2, "{:?}", found.events);
        let (a, b) = (found.events[0], found.events[1]);
        assert!(a.refined && b.refined);
        assert!(a.residual < NODE_TOLERANCE && b.residual < NODE_TOLERANCE);
        assert!((a.x_star + 1.0 / 3.0).abs() < 1e-9 && a.t_star.abs() < 1e-9, "{a:?}");
        assert!((b.x_star - 1.0 / 3.0).abs() < 1e-9);
        assert!((b.t_star - a.t_star - 0.5 * period).abs() < 1e-9);
    }

    #[test]
    fn stationary_nodes_are_lines() {
        let g = Grid1D::new(-1.0, 1.0, 801).unwrap();
        let b = Arc::new(EigenBasis::infinite_well(g, &[1, 2, 3]).unwrap());
        let s = Superposition::eigenstate(b.clone(), 1).unwrap();
        let found = find_nodes(&s, (0.0, 1.0), (-1.0, 1.0), NodeScan::default()).unwrap();
        assert!(found.events.is_empty());
        assert_eq!(found.stationary_lines.len(), 1);
        assert!(found.stationary_lines[0].abs() < 1e-9);
        let s3 = Superposition::eigenstate(b, 2).unwrap();
        let lines = find_nodes(&s3, (0.0, 1.0), (-1.0, 1.0), NodeScan::default()).unwrap().stationary_lines;
        assert_eq!(lines.len(), 2);
        assert!((lines[0] + 1.0 / 3.0).abs() < 1e-9 && (lines[1] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn vortex_node_sits_at_the_centre() {
        let s = vortex();
        for &t in &[0.0, 0.05, 0.3] {
            let nodes = find_nodes_2d(&s, t).unwrap();
            assert_eq!(nodes.len(), 1, "{nodes:?}");
            assert!((nodes[0].0 - 0.5).abs() < 1e-9 && (nodes[0].1 - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn vortex_circulation_is_one_quantum() {
        let s = vortex();
        let ccw = circulation(&s, (0.5, 0.5), 0.05, 0.0, 256).unwrap();
        assert!((ccw.abs() - 2.0 * PI).abs() < 1e-6, "{ccw}");
        let off = circulation(&s, (0.25, 0.25), 0.05, 0.0, 256).unwrap();
        assert!(off.abs() < 1e-6);
    }

    #[test]
    fn vortex_follows_inverse_square() {
        let s = vortex();
        let p = vortex_profile(&s, (0.5, 0.5), 0.1, 20, 0.0).unwrap();
        assert!((p.fit_exponent + 2.0).abs() < 0.05, "{}", p.fit_exponent);
        let vr: Vec<f64> = p.radii.iter().zip(&p.speed_mean).map(|(r, v)| r * v).collect();
        let mean = vr.iter().sum::<f64>() / vr.len() as f64;
        assert!(vr.iter().all(|v| (v - mean).abs() < 0.05 * mean));
        assert!((mean - p.fit_z.sqrt()).abs() < 0.05 * mean);
        assert!(vortex_profile(&s, (0.5, 0.5), 0.6, 20, 0.0).is_err());
    }

    #[test]
    fn vortex_loops_close() {
        let s = vortex();
        let pts = trace_loop(&s, (0.5, 0.6), 0.0, 1e-9, 10.0, 1e-3).unwrap();
        let last = *pts.last().unwrap();
        assert!((last.0 - 0.5).hypot(last.1 - 0.6) < 1e-3);
        assert!(pts.len() > 10);
    }
}
