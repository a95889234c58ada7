//! Polar (Madelung) decomposition of Ψ and the local energy ledger.
//!
//! Everything is built from Ψ, ∇Ψ, ∇²Ψ and ∂Ψ/∂t through log-derivative
//! forms; S is never unwrapped and |Ψ| is never differenced directly, so
//! fields stay smooth right up to the node mask:
//!
//! ```text
//! ∇S    = Im(Ψ̄∇Ψ)/ρ        ∇R/R = Re(Ψ̄∇Ψ)/ρ       ∂S/∂t = Im(Ψ̄∂tΨ)/ρ
//! Q     = −½∇²R/R = −½Re(Ψ̄∇²Ψ)/ρ − K_a
//! Q_r   = −¼∇²ρ/ρ          k_c = ½|∇Ψ|²
//! ```

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Field, Mesh};
use crate::states::Superposition;

/// Points with ρ below this fraction of max ρ are nodes.
pub const NODE_EPSILON: f64 = 1e-10;
/// Per-particle fields are masked this many points in from every wall.
pub const WALL_DEPTH: usize = 2;
/// Inequalities must hold by more than this to count.
pub const CLASSIFY_MARGIN: f64 = 1e-12;

fn field<G: Mesh>(grid: G, values: Vec<f64>, mask: Vec<bool>) -> Field<G, f64> {
    let mut values = values;
    let mut mask = mask;
    for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
        if !*m || !v.is_finite() {
            *v = 0.0;
            *m = false;
        }
    }
    Field::with_mask(grid, values, mask).expect("consistent lengths")
}

/// ρ, R, ∇S and ∂S/∂t, with the raw derivatives of Ψ they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MadelungFields<G> {
    pub psi: Field<G, Complex64>,
    pub dpsi_dt: Field<G, Complex64>,
    pub grad_psi: Vec<Field<G, Complex64>>,
    pub laplacian_psi: Field<G, Complex64>,
    pub rho: Field<G, f64>,
    pub r: Field<G, f64>,
    /// One component per axis; equal to the fluid velocity v_a (m = 1).
    pub grad_s: Vec<Field<G, f64>>,
    pub ds_dt: Field<G, f64>,
    /// `false` at nodes (ρ < ε·max ρ).
    pub node_mask: Vec<bool>,
    /// `false` at nodes and within [`WALL_DEPTH`] of the boundary.
    pub valid: Vec<bool>,
}

impl<G: Mesh> MadelungFields<G> {
    pub fn grid(&self) -> &G {
        self.psi.grid()
    }

    /// `|v_a|` at valid points.
    pub fn speed(&self) -> Field<G, f64> {
        let n = self.rho.len();
        let values = (0..n)
            .map(|i| self.grad_s.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt())
            .collect();
        let mask = (0..n).map(|i| self.grad_s.iter().all(|g| g.is_valid(i))).collect();
        field(*self.grid(), values, mask)
    }
}

/// Polar fields of Ψ given its exact time derivative.
pub fn polar_fields<G: Mesh>(
    psi: &Field<G, Complex64>,
    dpsi_dt: &Field<G, Complex64>,
) -> Result<MadelungFields<G>> {
    if psi.grid() != dpsi_dt.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *psi.grid();
    let n = psi.len();
    let rho = psi.norm_sqr();
    let peak = rho.max_abs();
    if !(peak > 0.0) {
        return Err(Error::ZeroState);
    }
    let node_mask: Vec<bool> = (0..n)
        .map(|i| rho.is_valid(i) && rho.values()[i] >= NODE_EPSILON * peak)
        .collect();
    let interior = grid.interior_mask(WALL_DEPTH);
    let valid: Vec<bool> = (0..n)
        .map(|i| node_mask[i] && interior[i] && dpsi_dt.is_valid(i))
        .collect();
    let grad_psi = psi.gradient();
    let laplacian_psi = psi.laplacian();
    let r = rho.map(|v| v.sqrt());
    let grad_s = grad_psi
        .iter()
        .map(|g| {
            let values = (0..n)
                .map(|i| (psi.values()[i].conj() * g.values()[i]).im / rho.values()[i])
                .collect();
            let mask = (0..n).map(|i| valid[i] && g.is_valid(i)).collect();
            field(grid, values, mask)
        })
        .collect();
    let ds_dt = field(
        grid,
        (0..n)
            .map(|i| (psi.values()[i].conj() * dpsi_dt.values()[i]).im / rho.values()[i])
            .collect(),
        valid.clone(),
    );
    Ok(MadelungFields {
        psi: psi.clone(),
        dpsi_dt: dpsi_dt.clone(),
        grad_psi,
        laplacian_psi,
        rho,
        r,
        grad_s,
        ds_dt,
        node_mask,
        valid,
    })
}

/// One copy of the ledger: either per-particle energies or their densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger<G> {
    pub q: Field<G, f64>,
    pub k_a: Field<G, f64>,
    pub k_s: Field<G, f64>,
    pub q_r: Field<G, f64>,
    pub k_c: Field<G, f64>,
    pub e_p: Field<G, f64>,
    pub k_cl: Field<G, f64>,
    pub u: Field<G, f64>,
}

impl<G> Ledger<G> {
    /// `(name, field)` pairs in a fixed order, for export.
    pub fn columns(&self) -> [(&'static str, &Field<G, f64>); 8] {
        [
            ("q", &self.q),
            ("k_a", &self.k_a),
            ("k_s", &self.k_s),
            ("q_r", &self.q_r),
            ("k_c", &self.k_c),
            ("e_p", &self.e_p),
            ("k_cl", &self.k_cl),
            ("u", &self.u),
        ]
    }
}

/// Per-particle energies (Q, K_a, …) and their densities (q = ρQ, …).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecomposition<G> {
    pub per_particle: Ledger<G>,
    pub density: Ledger<G>,
    pub rho: Field<G, f64>,
    pub band_limit: f64,
    /// Points where the per-particle fields are defined.
    pub valid: Vec<bool>,
}

impl<G: Mesh> EnergyDecomposition<G> {
    pub fn grid(&self) -> &G {
        self.rho.grid()
    }
}

/// Builds the full ledger for potential `u` and band limit `e_plus`.
///
/// Density fields are division-free wherever possible (k_c, q_r, e_p, u)
/// and defined on the whole grid. In 1D a node is a simple zero at which
/// Ψ̄∇Ψ turns real, so there k_a = 0 and k_s = k_c; in 2D the split is
/// direction-dependent and k_a, k_s, q stay masked at nodes.
pub fn energy_decomposition<G: Mesh>(
    f: &MadelungFields<G>,
    u: &Field<G, f64>,
    e_plus: f64,
) -> Result<EnergyDecomposition<G>> {
    if u.grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *f.grid();
    let n = f.rho.len();
    // a density vanishing on the whole boundary sits against hard walls
    let peak = f.rho.max_abs();
    let walled = grid
        .interior_mask(1)
        .iter()
        .zip(f.rho.values())
        .all(|(&inside, &r)| inside || r <= NODE_EPSILON * peak);
    let lap_rho = if walled { f.rho.laplacian_mirrored() } else { f.rho.laplacian() };
    let fill_nodes = G::DIM == 1;

    let mut d = [(); 8].map(|_| (Vec::with_capacity(n), Vec::with_capacity(n)));
    for i in 0..n {
        let psi = f.psi.values()[i];
        let rho = f.rho.values()[i];
        let node = !f.node_mask[i];
        let derivs_ok = f.grad_psi.iter().all(|g| g.is_valid(i)) && f.laplacian_psi.is_valid(i);
        let mut k_c = 0.0;
        let mut flow = 0.0;
        let mut spread = 0.0;
        for g in &f.grad_psi {
            let gi = g.values()[i];
            k_c += 0.5 * gi.norm_sqr();
            let p = psi.conj() * gi;
            flow += 0.5 * p.im * p.im;
            spread += 0.5 * p.re * p.re;
        }
        let (k_a, k_s, split_ok) = if !node {
            (flow / rho, spread / rho, derivs_ok)
        } else if fill_nodes {
            (0.0, k_c, derivs_ok)
        } else {
            (0.0, 0.0, false)
        };
        let q = -0.5 * (psi.conj() * f.laplacian_psi.values()[i]).re - k_a;
        let q_r = -0.25 * lap_rho.values()[i];
        let e_p = -(psi.conj() * f.dpsi_dt.values()[i]).im;
        let ui = rho * u.values()[i];
        let u_ok = u.is_valid(i) && f.dpsi_dt.is_valid(i);
        let entries = [
            (q, split_ok && derivs_ok),
            (k_a, split_ok),
            (k_s, split_ok),
            (q_r, lap_rho.is_valid(i)),
            (k_c, derivs_ok),
            (e_p, f.dpsi_dt.is_valid(i)),
            (e_p - ui, u_ok),
            (ui, u.is_valid(i)),
        ];
        for (slot, (v, ok)) in d.iter_mut().zip(entries) {
            slot.0.push(v);
            slot.1.push(ok);
        }
    }
    let [q, k_a, k_s, q_r, k_c, e_p, k_cl, uu] = d.map(|(v, m)| field(grid, v, m));
    let density = Ledger {
        q,
        k_a,
        k_s,
        q_r,
        k_c,
        e_p,
        k_cl,
        u: uu,
    };

    let valid = f.valid.clone();
    let per = |dens: &Field<G, f64>| {
        let values = (0..n).map(|i| dens.values()[i] / f.rho.values()[i]).collect();
        let mask = (0..n).map(|i| valid[i] && dens.is_valid(i)).collect();
        field(grid, values, mask)
    };
    let k_a_pp = per(&density.k_a);
    let k_s_pp = per(&density.k_s);
    let k_c_pp = k_a_pp.zip_map(&k_s_pp, |a, b| a + b)?;
    let e_p_pp = f.ds_dt.map(|v| -v);
    let u_pp = u.clone();
    let k_cl_pp = e_p_pp.zip_map(&u_pp, |e, v| e - v)?;
    let per_particle = Ledger {
        q: per(&density.q),
        k_a: k_a_pp,
        k_s: k_s_pp,
        q_r: per(&density.q_r),
        k_c: k_c_pp,
        e_p: e_p_pp,
        k_cl: k_cl_pp,
        u: u_pp,
    };
    Ok(EnergyDecomposition {
        per_particle,
        density,
        rho: f.rho.clone(),
        band_limit: e_plus,
        valid,
    })
}

/// The six superoscillation / forbidden-region indicator sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperoscillationMask<G> {
    pub grid: G,
    /// Q < 0, i.e. K_a > K_cl.
    pub soft_qka: Vec<bool>,
    /// K_a > E_+ − U.
    pub hard_qka: Vec<bool>,
    /// q_r < 0, i.e. K_c > K_cl.
    pub soft_qrkc: Vec<bool>,
    /// K_c > E_+ − U.
    pub hard_qrkc: Vec<bool>,
    /// E_+ − U < 0.
    pub forbidden_global: Vec<bool>,
    /// K_cl < 0.
    pub forbidden_local: Vec<bool>,
    /// Points at which the sets are defined.
    pub valid: Vec<bool>,
}

impl<G: Mesh> SuperoscillationMask<G> {
    /// `(name, set)` pairs in export order.
    pub fn columns(&self) -> [(&'static str, &[bool]); 6] {
        [
            ("soft_qka", &self.soft_qka),
            ("hard_qka", &self.hard_qka),
            ("soft_qrkc", &self.soft_qrkc),
            ("hard_qrkc", &self.hard_qrkc),
            ("forbidden_global", &self.forbidden_global),
            ("forbidden_local", &self.forbidden_local),
        ]
    }

    /// Length (1D) or area (2D) covered by `set`.
    pub fn area(&self, set: &[bool]) -> f64 {
        set.iter().filter(|&&b| b).count() as f64 * self.grid.cell_measure()
    }
}

/// `true` where every point of `inner` also lies in `outer`.
pub fn is_subset(inner: &[bool], outer: &[bool]) -> bool {
    inner.iter().zip(outer).all(|(&a, &b)| !a || b)
}

/// Classifies every valid point. The soft tests use the Hamilton–Jacobi
/// forms K_a > K_cl (⇔ Q < 0) and K_c > K_cl (⇔ q_r < 0), so boundary
/// ties within [`CLASSIFY_MARGIN`] count as non-superoscillatory.
pub fn classify_superoscillation<G: Mesh>(d: &EnergyDecomposition<G>) -> SuperoscillationMask<G> {
    let p = &d.per_particle;
    let n = d.rho.len();
    let e_plus = d.band_limit;
    let m = CLASSIFY_MARGIN;
    let ok: Vec<bool> = (0..n)
        .map(|i| d.valid[i] && p.k_a.is_valid(i) && p.k_c.is_valid(i) && p.k_cl.is_valid(i))
        .collect();
    let set = |f: &dyn Fn(usize) -> bool| -> Vec<bool> { (0..n).map(|i| ok[i] && f(i)).collect() };
    let (k_a, k_c, k_cl, u) = (p.k_a.values(), p.k_c.values(), p.k_cl.values(), p.u.values());
    SuperoscillationMask {
        grid: *d.grid(),
        soft_qka: set(&|i| k_a[i] - k_cl[i] > m),
        hard_qka: set(&|i| k_a[i] - (e_plus - u[i]) > m),
        soft_qrkc: set(&|i| k_c[i] - k_cl[i] > m),
        hard_qrkc: set(&|i| k_c[i] - (e_plus - u[i]) > m),
        forbidden_global: set(&|i| e_plus - u[i] < -m),
        forbidden_local: set(&|i| k_cl[i] < -m),
        valid: ok,
    }
}

/// `K_a + Q + U − E_p`; vanishes for exact solutions.
pub fn hj_residual<G: Mesh>(d: &EnergyDecomposition<G>) -> Result<Field<G, f64>> {
    let p = &d.per_particle;
    p.k_a
        .zip_map(&p.q, |a, q| a + q)?
        .zip_map(&p.u, |s, u| s + u)?
        .zip_map(&p.e_p, |s, e| s - e)
}

/// `∂ρ/∂t + ∇·(ρ v_a)` with a centred time difference of width `2 dt` and
/// the current `ρ v_a = Im(Ψ̄∇Ψ)`.
pub fn continuity_residual<G: Mesh>(s: &Superposition<G>, t: f64, dt: f64) -> Result<Field<G, f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("time step must be positive".into()));
    }
    let ahead = s.evaluate(t + dt).norm_sqr();
    let behind = s.evaluate(t - dt).norm_sqr();
    let drho = ahead.zip_map(&behind, |a, b| (a - b) / (2.0 * dt))?;
    let psi = s.evaluate(t);
    let mut acc = drho;
    for (axis, g) in psi.gradient().iter().enumerate() {
        let current = psi.zip_map(g, |p, d| (p.conj() * d).im)?;
        acc = acc.zip_map(&current.partial(axis), |a, b| a + b)?;
    }
    Ok(acc)
}

/// Polar fields and ledger of `s` at time `t`.
pub fn decompose<G: Mesh>(s: &Superposition<G>, t: f64) -> Result<(MadelungFields<G>, EnergyDecomposition<G>)> {
    let f = polar_fields(&s.evaluate(t), &s.time_derivative(t))?;
    let d = energy_decomposition(&f, s.basis().potential(), s.band_limit())?;
    Ok((f, d))
}
