//! CSV and JSON layouts. Column orders are fixed; see `docs/formats.md`.
//!
//! Numbers use the shortest representation that round-trips (`ryu`), so
//! identical inputs give identical bytes. Values undefined at a point
//! (masked) are written as empty cells.

use std::fs;
use std::io::Write;
use std::path::Path;

use madelung_core::flow::{NodeSearch, Streamline, VortexProfile};
use madelung_core::madelung::{EnergyDecomposition, SuperoscillationMask};
use madelung_core::scenarios::{PulseInfo, TuningResult};
use madelung_core::spectral::{BasisFamily, EigenBasis, Potential};
use madelung_core::states::{Superposition, Truncation};
use madelung_core::{Complex64, Field, FieldValue, Grid1D, Grid2D, Mesh};
use serde_json::{json, Value};

use crate::error::{AppError, AppResult};

pub fn num(v: f64) -> String {
    if v == 0.0 {
        // -0 and 0 print alike
        "0".into()
    } else if v.is_finite() {
        let mut b = ryu::Buffer::new();
        let s = b.format_finite(v);
        s.strip_suffix(".0").unwrap_or(s).to_string()
    } else {
        String::new()
    }
}

fn opt(v: f64, ok: bool) -> String {
    if ok {
        num(v)
    } else {
        String::new()
    }
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Row stride keeping at most `max_rows` of `n` points (both ends kept when
/// the stride divides `n − 1`).
pub fn stride(n: usize, max_rows: usize) -> usize {
    if max_rows < 2 || n <= max_rows {
        1
    } else {
        (n - 1).div_ceil(max_rows - 1)
    }
}

/// Row indices written for a mesh: every `stride`-th point along each axis.
fn rows<G: Mesh>(grid: &G, max_rows: usize) -> Vec<usize> {
    match G::DIM {
        1 => (0..grid.point_count()).step_by(stride(grid.point_count(), max_rows)).collect(),
        _ => {
            let (nx, ny) = (grid.layout(0).len, grid.layout(1).len);
            let (sx, sy) = (stride(nx, max_rows), stride(ny, max_rows));
            let mut out = Vec::new();
            for j in (0..ny).step_by(sy) {
                for i in (0..nx).step_by(sx) {
                    out.push(j * nx + i);
                }
            }
            out
        }
    }
}

/// Anything with a coordinate per grid index.
pub trait Coords: Mesh {
    fn coord_names() -> &'static [&'static str];
    fn coord_values(&self, idx: usize) -> Vec<f64>;
}

impl Coords for Grid1D {
    fn coord_names() -> &'static [&'static str] {
        &["x"]
    }
    fn coord_values(&self, idx: usize) -> Vec<f64> {
        vec![self.x(idx)]
    }
}

impl Coords for Grid2D {
    fn coord_names() -> &'static [&'static str] {
        &["x", "y"]
    }
    fn coord_values(&self, idx: usize) -> Vec<f64> {
        let (x, y) = self.coords(idx);
        vec![x, y]
    }
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> AppResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let wrap = |e: csv::Error| AppError::format(path, e);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::format(path, e.to_string()))?;
    write_file(path, &bytes)
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(path, e))
}

pub fn write_json(path: &Path, v: &Value) -> AppResult<()> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    write_file(path, s.as_bytes())
}

pub fn read_json(path: &Path) -> AppResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e))
}

/// Real field: `x[,y],value,mask`.
pub fn write_scalar_field<G: Coords>(path: &Path, f: &Field<G, f64>, max_rows: usize) -> AppResult<()> {
    let mut header: Vec<String> = G::coord_names().iter().map(|s| s.to_string()).collect();
    header.extend(["value".into(), "mask".into()]);
    let g = *f.grid();
    write_rows(
        path,
        &header,
        rows(&g, max_rows).into_iter().map(|i| {
            let mut r: Vec<String> = g.coord_values(i).into_iter().map(num).collect();
            r.push(opt(f.values()[i], f.is_valid(i)));
            r.push(bit(f.is_valid(i)));
            r
        }),
    )
}

/// Complex field: `x[,y],re,im,mask`.
pub fn write_complex_field<G: Coords>(path: &Path, f: &Field<G, Complex64>, max_rows: usize) -> AppResult<()> {
    let mut header: Vec<String> = G::coord_names().iter().map(|s| s.to_string()).collect();
    header.extend(["re".into(), "im".into(), "mask".into()]);
    let g = *f.grid();
    write_rows(
        path,
        &header,
        rows(&g, max_rows).into_iter().map(|i| {
            let v = f.values()[i];
            let ok = f.is_valid(i) && v.is_finite_value();
            let mut r: Vec<String> = g.coord_values(i).into_iter().map(num).collect();
            r.extend([opt(v.re, ok), opt(v.im, ok), bit(ok)]);
            r
        }),
    )
}

/// Per-particle columns, upper-case as in the ledger (Q, K_a, …).
pub const PER_PARTICLE_COLUMNS: [&str; 8] = ["Q", "K_a", "K_s", "Q_r", "K_c", "E_p", "K_cl", "U"];

/// Ledger + masks, one row per point:
/// `x[,y], rho, valid, Q..U, q..u, soft_qka, hard_qka, soft_qrkc, hard_qrkc,
/// forbidden_global, forbidden_local`.
pub fn write_ledger<G: Coords>(
    path: &Path,
    d: &EnergyDecomposition<G>,
    m: &SuperoscillationMask<G>,
    max_rows: usize,
) -> AppResult<()> {
    let mut header: Vec<String> = G::coord_names().iter().map(|s| s.to_string()).collect();
    header.extend(["rho".into(), "valid".into()]);
    header.extend(PER_PARTICLE_COLUMNS.iter().map(|s| s.to_string()));
    header.extend(d.density.columns().iter().map(|(n, _)| n.to_string()));
    header.extend(m.columns().iter().map(|(n, _)| n.to_string()));
    let g = *d.grid();
    let per = d.per_particle.columns();
    let den = d.density.columns();
    let sets = m.columns();
    write_rows(
        path,
        &header,
        rows(&g, max_rows).into_iter().map(|i| {
            let mut r: Vec<String> = g.coord_values(i).into_iter().map(num).collect();
            r.push(num(d.rho.values()[i]));
            r.push(bit(d.valid[i]));
            for (_, f) in per.iter().chain(den.iter()) {
                r.push(opt(f.values()[i], f.is_valid(i)));
            }
            for (_, s) in sets.iter() {
                r.push(bit(s[i]));
            }
            r
        }),
    )
}

/// `seed_q,t,x`, streamlines in seed order.
pub fn write_streamlines(path: &Path, lines: &[Streamline]) -> AppResult<()> {
    write_rows(
        path,
        &["seed_q".into(), "t".into(), "x".into()],
        lines.iter().flat_map(|l| {
            l.samples
                .iter()
                .map(move |&(t, x)| vec![num(l.seed_quantile), num(t), num(x)])
        }),
    )
}

/// `seed_q,halted_at` for trajectories that stopped at a node.
pub fn streamline_halts(lines: &[Streamline]) -> Value {
    Value::Array(
        lines
            .iter()
            .filter_map(|l| l.halted_at.map(|t| json!({ "seed_q": l.seed_quantile, "halted_at": t })))
            .collect(),
    )
}

pub fn nodes_json(n: &NodeSearch) -> Value {
    json!({
        "events": n.events.iter().map(|e| json!({
            "t": e.t_star,
            "x": e.x_star,
            "refined": e.refined,
            "residual": e.residual,
        })).collect::<Vec<_>>(),
        "stationary_lines": n.stationary_lines,
    })
}

/// `r,Q,K_a,speed` (angular means per radial bin).
pub fn write_vortex_profile(path: &Path, p: &VortexProfile) -> AppResult<()> {
    write_rows(
        path,
        &["r".into(), "Q".into(), "K_a".into(), "speed".into()],
        (0..p.radii.len()).map(|k| vec![num(p.radii[k]), num(p.q_mean[k]), num(p.ka_mean[k]), num(p.speed_mean[k])]),
    )
}

/// `loop,x,y` for traced 2D flow loops.
pub fn write_loops(path: &Path, loops: &[Vec<(f64, f64)>]) -> AppResult<()> {
    write_rows(
        path,
        &["loop".into(), "x".into(), "y".into()],
        loops
            .iter()
            .enumerate()
            .flat_map(|(k, l)| l.iter().map(move |&(x, y)| vec![k.to_string(), num(x), num(y)])),
    )
}

pub fn potential_json(p: &Potential) -> Value {
    match p {
        Potential::InfiniteWell { half_width } => json!({ "kind": "infinite_well", "half_width": half_width }),
        Potential::WellWithBarrier {
            half_width,
            barrier_height,
            barrier_width,
        } => json!({
            "kind": "well_with_barrier",
            "half_width": half_width,
            "barrier_height": barrier_height,
            "barrier_width": barrier_width,
        }),
        Potential::Harmonic { omega } => json!({ "kind": "harmonic", "omega": omega }),
        Potential::QuarticDoubleWell => json!({ "kind": "quartic_double_well" }),
        Potential::Tabulated(f) => json!({ "kind": "tabulated", "points": f.len() }),
    }
}

pub fn grid_json<G: Mesh>(g: &G) -> Value {
    Value::Array(
        (0..G::DIM)
            .map(|a| {
                let ax = g.axis(a);
                json!({ "min": ax.x_min(), "max": ax.x_max(), "n": ax.len() })
            })
            .collect(),
    )
}

pub fn family_json(f: &BasisFamily) -> Value {
    match f {
        BasisFamily::Numerical { potential, barrier } => json!({
            "kind": "finite_difference",
            "potential": potential_json(potential),
            "barrier": barrier.map(|b| json!({
                "x_left": b.x_left,
                "x_right": b.x_right,
                "snapped_width": b.snapped_width,
            })),
        }),
        BasisFamily::InfiniteWell { x_min, width, levels } => json!({
            "kind": "infinite_well",
            "x_min": x_min,
            "width": width,
            "levels": levels,
        }),
        BasisFamily::Harmonic { omega, levels } => json!({
            "kind": "harmonic",
            "omega": omega,
            "levels": levels,
        }),
        BasisFamily::Box2D {
            x_min,
            y_min,
            width_x,
            width_y,
            modes,
        } => json!({
            "kind": "box_2d",
            "x_min": x_min,
            "y_min": y_min,
            "width_x": width_x,
            "width_y": width_y,
            "modes": modes,
        }),
    }
}

/// Basis reference, used indices, complex coefficients `[re, im]`, band
/// limit and truncation metadata.
pub fn superposition_json<G: Mesh>(s: &Superposition<G>) -> Value {
    let basis = s.basis();
    json!({
        "basis": {
            "family": family_json(basis.family()),
            "grid": grid_json(basis.grid()),
            "energies": s.indices().iter().map(|&k| basis.energies()[k]).collect::<Vec<_>>(),
        },
        "indices": s.indices(),
        "coefficients": s.coeffs().iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
        "band_limit": s.band_limit(),
        "mean_energy": s.mean_energy(),
        "period": s.period(),
        "truncation": s.truncation().map(|t| json!({
            "rule": match t.rule {
                Truncation::Relative(eta) => json!({ "relative": eta }),
                Truncation::Count(n) => json!({ "count": n }),
            },
            "index": t.index,
            "captured_norm": t.captured_norm,
            "packet": { "x0": t.packet.x0, "p0": t.packet.p0, "sigma": t.packet.sigma },
        })),
    })
}

pub fn pulse_json(p: &PulseInfo) -> Value {
    json!({
        "sigma": p.sigma,
        "calibration": p.calibration.map(|c| json!({
            "sigma": c.sigma,
            "sigma_low": c.sigma_low,
            "sigma_high": c.sigma_high,
            "index": c.index,
        })),
        "eta_index": p.eta_index,
        "target_modes": p.target_modes,
        "captured_norm": p.captured_norm,
    })
}

pub fn tuning_json(t: &TuningResult) -> Value {
    json!({
        "u0_star": t.u0_star,
        "transmission": t.transmission,
        "iterations": t.iterations,
        "bracket": [t.bracket.0, t.bracket.1],
        "probes": t.probes.iter().map(|&(u, tr)| json!({ "u0": u, "transmission": tr })).collect::<Vec<_>>(),
    })
}

/// Eigenbasis as `<stem>.json` (grid, energies, family) plus
/// `<stem>.csv` (`x, psi_0, psi_1, …`). Returns the two paths.
pub fn write_eigenbasis(dir: &Path, stem: &str, b: &EigenBasis<Grid1D>) -> AppResult<[std::path::PathBuf; 2]> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut header = vec!["x".to_string()];
    header.extend((0..b.len()).map(|k| format!("psi_{k}")));
    let g = *b.grid();
    write_rows(
        &csv_path,
        &header,
        (0..g.len()).map(|i| {
            let mut r = vec![num(g.x(i))];
            r.extend(b.states().iter().map(|s| num(s.values()[i])));
            r
        }),
    )?;
    write_json(
        &json_path,
        &json!({
            "grid": grid_json(&g),
            "energies": b.energies(),
            "family": family_json(b.family()),
            "states_csv": format!("{stem}.csv"),
        }),
    )?;
    Ok([json_path, csv_path])
}

/// Header + numeric cells (`None` for empty) of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Column values; missing cells become NaN.
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c].unwrap_or(f64::NAN)).collect())
    }
}

pub fn read_table(path: &Path) -> AppResult<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e))?;
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| AppError::format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| AppError::format(path, e))?;
        let row = rec
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|e| AppError::format(path, format!("{c:?}: {e}")))
                }
            })
            .collect::<AppResult<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use madelung_core::ScalarField;

    #[test]
    fn numbers_round_trip_and_stay_short() {
        for v in [0.0, 1.0, -0.5, 1e-300, 0.1 + 0.2, std::f64::consts::PI] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(2.0), "2");
        assert_eq!(num(f64::NAN), "");
        assert_eq!(num(-0.0), "0");
    }

    #[test]
    fn stride_keeps_the_ends() {
        assert_eq!(stride(100, 1000), 1);
        assert_eq!(stride(8001, 501), 16);
        assert_eq!((8001 - 1) % 16, 0);
        assert_eq!(stride(4000, 501), 8);
    }

    #[test]
    fn scalar_field_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        let mut mask = vec![true; 11];
        mask[3] = false;
        let f = ScalarField::with_mask(g, (0..11).map(|i| i as f64 / 3.0).collect(), mask).unwrap();
        let p = dir.path().join("f.csv");
        write_scalar_field(&p, &f, 1000).unwrap();
        let t = read_table(&p).unwrap();
        assert_eq!(t.headers, ["x", "value", "mask"]);
        assert_eq!(t.rows[3], vec![Some(g.x(3)), None, Some(0.0)]);
        assert_eq!(t.rows[4][1], Some(4.0 / 3.0));
    }
}
