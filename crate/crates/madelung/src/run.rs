//! Run directories: what each command writes, the manifest, and figures
//! rebuilt from the files on disk.
//!
//! Scenario layout:
//!
//! ```text
//! manifest.json            config, metrics, notes, file hashes
//! config.toml              effective config (loadable with --config)
//! tuning.json              beam-splitter probes (tuned scenarios only)
//! <state>/state.json       coefficients and basis reference
//! <state>/frames/frame_NNN.csv   ledger + masks
//! <state>/streamlines.csv  seed_q,t,x
//! <state>/nodes.json
//! <state>/figures/*.svg
//! vortex/...               ledger.csv, profile.csv, loops.csv, nodes.json
//! ```

use std::path::{Path, PathBuf};

use madelung_core::flow::NodeScan;
use madelung_core::madelung::classify_superoscillation;
use madelung_core::scenarios::{
    basis_for, frame_at, prepare_states, run_scenario, run_vortex, sampling, scenario_streamlines, splitter_setup,
    tune_beam_splitter, EigenCache, Geometry, ScenarioConfig, ScenarioOutput, StateRecipe, StateRun, TuningResult,
    VortexRun,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::to_toml;
use crate::error::{AppError, AppResult};
use crate::formats::{
    nodes_json, pulse_json, read_json, read_table, streamline_halts, superposition_json, tuning_json,
    write_complex_field, write_eigenbasis, write_file, write_json, write_ledger, write_loops, write_scalar_field,
    write_streamlines, write_vortex_profile, PER_PARTICLE_COLUMNS,
};
use crate::render::{
    curves_svg, streamlines_svg, vortex_svg, CurveFigure, FigureKind, ShadeStats, Shading, StreamlineFigure,
    VortexFigure,
};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT: &str = "madelung-run/1";

/// Output controls shared by all commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteOptions {
    /// Largest number of rows per axis in grid CSVs (decimated by stride).
    pub max_rows: usize,
    /// Figure shading; `None` renders both pictures.
    pub shading: Option<Shading>,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            max_rows: 501,
            shading: None,
        }
    }
}

/// A written file, relative to its run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl Artifact {
    fn of(root: &Path, rel: &Path) -> AppResult<Self> {
        let full = root.join(rel);
        let data = std::fs::read(&full).map_err(|e| AppError::io(&full, e))?;
        Ok(Artifact {
            path: rel.to_path_buf(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&data)),
        })
    }

    fn json(&self) -> Value {
        json!({ "path": rel_str(&self.path), "bytes": self.bytes, "sha256": self.sha256 })
    }
}

fn rel_str(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Collects artifacts as they are written.
struct Writer<'a> {
    root: &'a Path,
    written: Vec<Artifact>,
}

impl<'a> Writer<'a> {
    fn new(root: &'a Path) -> AppResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| AppError::io(root, e))?;
        Ok(Writer {
            root,
            written: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn done(&mut self, rel: &str) -> AppResult<String> {
        self.written.push(Artifact::of(self.root, Path::new(rel))?);
        Ok(rel.to_string())
    }

    fn json(&mut self, rel: &str, v: &Value) -> AppResult<String> {
        write_json(&self.path(rel), v)?;
        self.done(rel)
    }

    fn text(&mut self, rel: &str, s: &str) -> AppResult<String> {
        write_file(&self.path(rel), s.as_bytes())?;
        self.done(rel)
    }
}

fn shadings(opts: &WriteOptions) -> Vec<Shading> {
    match opts.shading {
        Some(s) => vec![s],
        None => vec![Shading::Qka, Shading::Qrkc],
    }
}

/// Frame used for single-instant figures: closest to T/4 for periodic
/// states (the universality snapshot), the first otherwise.
fn figure_frame(run: &StateRun) -> usize {
    match run.period {
        Some(p) if run.frames.len() > 1 => (0..run.frames.len())
            .min_by(|&a, &b| {
                (run.frames[a].t - 0.25 * p)
                    .abs()
                    .total_cmp(&(run.frames[b].t - 0.25 * p).abs())
            })
            .unwrap_or(0),
        _ => 0,
    }
}

fn write_state(w: &mut Writer, run: &StateRun, cfg: &ScenarioConfig, opts: &WriteOptions) -> AppResult<Value> {
    let l = &run.label;
    let state = w.json(&format!("{l}/state.json"), &superposition_json(&run.state))?;
    let mut frames = Vec::new();
    if cfg.output.fields {
        for (k, f) in run.frames.iter().enumerate() {
            let rel = format!("{l}/frames/frame_{k:03}.csv");
            write_ledger(&w.path(&rel), &f.ledger, &f.mask, opts.max_rows)?;
            frames.push(json!({
                "t": f.t,
                "file": w.done(&rel)?,
                "band_limit": f.ledger.band_limit,
                "checks": serde_json::to_value(f.checks).expect("checks serialize"),
            }));
        }
    }
    let streamlines = if run.streamlines.is_empty() {
        Value::Null
    } else {
        let rel = format!("{l}/streamlines.csv");
        write_streamlines(&w.path(&rel), &run.streamlines)?;
        Value::String(w.done(&rel)?)
    };
    let nodes = if cfg.output.nodes {
        Value::String(w.json(&format!("{l}/nodes.json"), &nodes_json(&run.nodes))?)
    } else {
        Value::Null
    };
    let metrics: serde_json::Map<String, Value> = run.metrics.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let mut entry = json!({
        "label": l,
        "period": run.period,
        "state": state,
        "frames": frames,
        "figure_frame": figure_frame(run),
        "streamlines": streamlines,
        "halted": streamline_halts(&run.streamlines),
        "nodes": nodes,
        "metrics": metrics,
        "figures": [],
    });
    if cfg.output.figures && cfg.output.fields {
        let mut figs = Vec::new();
        for sh in shadings(opts) {
            let kinds: &[FigureKind] = if run.frames.len() > 1 {
                &[FigureKind::Streamlines, FigureKind::PotentialLandscape, FigureKind::Densities]
            } else {
                &[FigureKind::PotentialLandscape, FigureKind::Densities]
            };
            for &kind in kinds {
                let rel = format!("{l}/figures/{}_{}.svg", kind.as_str(), sh.as_str());
                let (svg, _) = render_state(w.root, &entry, kind, sh, None, None, None)?;
                figs.push(Value::String(w.text(&rel, &svg)?));
            }
        }
        entry["figures"] = Value::Array(figs);
    }
    Ok(entry)
}

fn write_vortex(w: &mut Writer, v: &VortexRun, cfg: &ScenarioConfig, opts: &WriteOptions) -> AppResult<Value> {
    let state = w.json("vortex/state.json", &superposition_json(&v.state))?;
    let ledger = if cfg.output.fields {
        write_ledger(&w.path("vortex/ledger.csv"), &v.ledger, &v.mask, opts.max_rows)?;
        Value::String(w.done("vortex/ledger.csv")?)
    } else {
        Value::Null
    };
    write_vortex_profile(&w.path("vortex/profile.csv"), &v.profile)?;
    let profile = w.done("vortex/profile.csv")?;
    write_loops(&w.path("vortex/loops.csv"), &v.loops)?;
    let loops = w.done("vortex/loops.csv")?;
    let nodes = w.json(
        "vortex/nodes.json",
        &json!({ "nodes": v.nodes.iter().map(|&(x, y)| json!({ "x": x, "y": y })).collect::<Vec<_>>() }),
    )?;
    let mut entry = json!({
        "state": state,
        "ledger": ledger,
        "profile": profile,
        "loops": loops,
        "nodes": nodes,
        "circulation_node": v.circulation_node,
        "circulation_off": v.circulation_off,
        "ep_deviation": v.ep_deviation,
        "fit_exponent": v.profile.fit_exponent,
        "fit_z": v.profile.fit_z,
        "figures": [],
    });
    if cfg.output.figures && cfg.output.fields {
        let mut figs = Vec::new();
        for sh in shadings(opts) {
            let (svg, _) = render_vortex_entry(w.root, &entry, sh, None, None)?;
            figs.push(Value::String(w.text(&format!("vortex/figures/vortex_{}.svg", sh.as_str()), &svg)?));
        }
        entry["figures"] = Value::Array(figs);
    }
    Ok(entry)
}

/// Writes a scenario run directory and returns every file written
/// (manifest last).
pub fn write_run(out: &ScenarioOutput, dir: &Path, opts: &WriteOptions) -> AppResult<Vec<Artifact>> {
    let mut w = Writer::new(dir)?;
    w.text("config.toml", &to_toml(&out.config))?;
    let tuning = match &out.tuning {
        Some(t) => Value::String(w.json("tuning.json", &tuning_json(t))?),
        None => Value::Null,
    };
    let states = out
        .states
        .iter()
        .map(|r| write_state(&mut w, r, &out.config, opts))
        .collect::<AppResult<Vec<_>>>()?;
    let vortex = match &out.vortex {
        Some(v) => write_vortex(&mut w, v, &out.config, opts)?,
        None => Value::Null,
    };
    let manifest = json!({
        "format": FORMAT,
        "scenario": out.config.name.as_str(),
        "config": serde_json::to_value(&out.config).expect("configs serialize"),
        "max_rows": opts.max_rows,
        "notes": out.notes.iter().map(|(k, v)| json!({ "key": k, "value": v })).collect::<Vec<_>>(),
        "pulse": out.pulse.as_ref().map(pulse_json),
        "tuning_file": tuning,
        "tuning_result": out.tuning.as_ref().map(tuning_json),
        "states": states,
        "vortex": vortex,
        "files": w.written.iter().map(Artifact::json).collect::<Vec<_>>(),
    });
    w.json(MANIFEST, &manifest)?;
    Ok(w.written)
}

/// Runs `cfg` and writes its directory.
pub fn scenario_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, dir: &Path, opts: &WriteOptions) -> AppResult<(ScenarioOutput, Vec<Artifact>)> {
    let out = run_scenario(cfg, cache)?;
    let files = write_run(&out, dir, opts)?;
    Ok((out, files))
}

fn one_d(cfg: &ScenarioConfig) -> AppResult<()> {
    if matches!(cfg.geometry, Geometry::Box2D { .. }) {
        return Err(AppError::Usage(format!("{} is two-dimensional; use the vortex command", cfg.name)));
    }
    Ok(())
}

/// Eigenbasis of the scenario's potential: `eigenbasis.json` + `.csv`.
/// `levels` defaults to the number of states the scenario uses.
pub fn eigen_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, levels: Option<usize>, dir: &Path) -> AppResult<(Vec<f64>, Vec<Artifact>)> {
    one_d(cfg)?;
    cfg.validate()?;
    let k = levels.unwrap_or(match &cfg.recipe {
        StateRecipe::EqualPair { levels, .. } => levels[0].max(levels[1]) + 1,
        StateRecipe::Eigenstates { levels } => levels.iter().max().copied().unwrap_or(0) + 1,
        StateRecipe::Pulse(p) => p.target_modes,
        StateRecipe::DegenerateVortex => 2,
    });
    let grid = cfg.geometry.grid_1d(cfg.grid_n)?;
    let basis = basis_for(&cfg.geometry, grid, k, cache)?;
    let mut w = Writer::new(dir)?;
    for p in write_eigenbasis(dir, "eigenbasis", &basis)? {
        let rel = p.file_name().expect("named file").to_string_lossy().into_owned();
        w.done(&rel)?;
    }
    Ok((basis.energies().to_vec(), w.written))
}

/// Ψ at every sampled instant: `<state>/state.json` + `<state>/psi/psi_NNN.csv`.
pub fn evolve_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, dir: &Path, opts: &WriteOptions) -> AppResult<Vec<Artifact>> {
    one_d(cfg)?;
    let prepared = prepare_states(cfg, cache)?;
    let mut w = Writer::new(dir)?;
    for (label, s, _) in &prepared.states {
        w.json(&format!("{label}/state.json"), &superposition_json(s))?;
        for (k, &t) in sampling(cfg, s)?.times.iter().enumerate() {
            let rel = format!("{label}/psi/psi_{k:03}.csv");
            write_complex_field(&w.path(&rel), &s.evaluate(t), opts.max_rows)?;
            w.done(&rel)?;
        }
    }
    Ok(w.written)
}

/// Ledger + masks per frame: `<state>/frames/frame_NNN.csv`, plus
/// `<state>/checks.json` with the per-frame residuals and set relations.
pub fn fields_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, dir: &Path, opts: &WriteOptions) -> AppResult<Vec<Artifact>> {
    one_d(cfg)?;
    let prepared = prepare_states(cfg, cache)?;
    let mut w = Writer::new(dir)?;
    for (label, s, _) in &prepared.states {
        let smp = sampling(cfg, s)?;
        let mut checks = Vec::new();
        for (k, &t) in smp.times.iter().enumerate() {
            let f = frame_at(s, t, smp.dt)?;
            let rel = format!("{label}/frames/frame_{k:03}.csv");
            write_ledger(&w.path(&rel), &f.ledger, &f.mask, opts.max_rows)?;
            w.done(&rel)?;
            checks.push(json!({ "t": t, "checks": serde_json::to_value(f.checks).expect("checks serialize") }));
        }
        w.json(&format!("{label}/checks.json"), &Value::Array(checks))?;
    }
    Ok(w.written)
}

/// Superoscillation sets only: `<state>/masks/mask_NNN.csv` with columns
/// `x, valid, soft_qka, hard_qka, soft_qrkc, hard_qrkc, forbidden_global,
/// forbidden_local`, and `<state>/relations.json` (subset checks, areas).
pub fn classify_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, dir: &Path, opts: &WriteOptions) -> AppResult<Vec<Artifact>> {
    one_d(cfg)?;
    let prepared = prepare_states(cfg, cache)?;
    let mut w = Writer::new(dir)?;
    for (label, s, _) in &prepared.states {
        let smp = sampling(cfg, s)?;
        let mut rel_json = Vec::new();
        for (k, &t) in smp.times.iter().enumerate() {
            let f = frame_at(s, t, smp.dt)?;
            let m = classify_superoscillation(&f.ledger);
            let rel = format!("{label}/masks/mask_{k:03}.csv");
            let stride = crate::formats::stride(m.grid.len(), opts.max_rows);
            let mut text = String::from("x,valid,soft_qka,hard_qka,soft_qrkc,hard_qrkc,forbidden_global,forbidden_local\n");
            for i in (0..m.grid.len()).step_by(stride) {
                text.push_str(&crate::formats::num(m.grid.x(i)));
                text.push_str(if m.valid[i] { ",1" } else { ",0" });
                for (_, set) in m.columns() {
                    text.push_str(if set[i] { ",1" } else { ",0" });
                }
                text.push('\n');
            }
            w.text(&rel, &text)?;
            let c = f.checks;
            rel_json.push(json!({
                "t": t,
                "global_in_hard": c.global_in_hard,
                "local_in_soft": c.local_in_soft,
                "area_soft_qka": c.area_soft_qka,
                "area_soft_qrkc": c.area_soft_qrkc,
                "area_hard_qka": c.area_hard_qka,
                "area_hard_qrkc": c.area_hard_qrkc,
                "qrkc_soft_at_least_qka": c.area_soft_qrkc >= c.area_soft_qka,
            }));
        }
        w.json(&format!("{label}/relations.json"), &Value::Array(rel_json))?;
    }
    Ok(w.written)
}

/// Streamlines and node events: `<state>/streamlines.csv`, `<state>/nodes.json`.
pub fn streamlines_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, dir: &Path) -> AppResult<Vec<Artifact>> {
    one_d(cfg)?;
    let prepared = prepare_states(cfg, cache)?;
    let mut w = Writer::new(dir)?;
    for (label, s, _) in &prepared.states {
        let lines = scenario_streamlines(cfg, s)?;
        let rel = format!("{label}/streamlines.csv");
        write_streamlines(&w.path(&rel), &lines)?;
        w.done(&rel)?;
        let nodes = if s.is_stationary() {
            let g = *s.grid();
            madelung_core::flow::find_nodes(s, (0.0, 1.0), (g.x_min(), g.x_max()), NodeScan::default())?
        } else if s.period().is_some() && matches!(cfg.time, madelung_core::scenarios::TimeSampling::Periods { .. }) {
            madelung_core::flow::NodeSearch {
                events: madelung_core::scenarios::nodes_per_period(s, NodeScan::default())?,
                stationary_lines: Vec::new(),
            }
        } else {
            let g = *s.grid();
            let span = sampling(cfg, s)?.span;
            madelung_core::flow::find_nodes(s, (0.0, span), (g.x_min(), g.x_max()), NodeScan::default())?
        };
        let mut doc = nodes_json(&nodes);
        doc["halted"] = streamline_halts(&lines);
        w.json(&format!("{label}/nodes.json"), &doc)?;
    }
    Ok(w.written)
}

/// The 2D vortex: ledger, profile, loops, nodes and its figures.
pub fn vortex_to_dir(cfg: &ScenarioConfig, dir: &Path, opts: &WriteOptions) -> AppResult<(VortexRun, Vec<Artifact>)> {
    let v = run_vortex(cfg)?;
    let mut w = Writer::new(dir)?;
    let entry = write_vortex(&mut w, &v, cfg, opts)?;
    w.json("vortex/summary.json", &entry)?;
    Ok((v, w.written))
}

/// Beam-splitter tuning only; writes `tuning.json`.
pub fn tune_to_dir(cfg: &ScenarioConfig, cache: &mut EigenCache, dir: &Path) -> AppResult<(TuningResult, Vec<Artifact>)> {
    let (setup, opts, notes) = splitter_setup(cfg)?;
    let t = tune_beam_splitter(&setup, &opts, cache)?;
    let mut w = Writer::new(dir)?;
    let mut doc = tuning_json(&t);
    doc["sigma"] = json!(setup.packet.sigma);
    doc["notes"] = notes.iter().map(|(k, v)| json!({ "key": k, "value": v })).collect();
    w.json("tuning.json", &doc)?;
    Ok((t, w.written))
}

fn str_at<'a>(v: &'a Value, key: &str, ctx: &Path) -> AppResult<&'a str> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| AppError::format(ctx, format!("missing `{key}`")))
}

fn masks(table: &crate::formats::Table, sh: Shading, path: &Path) -> AppResult<(Vec<bool>, Vec<bool>)> {
    let (s, h) = sh.columns();
    let col = |name: &str| -> AppResult<Vec<bool>> {
        Ok(table
            .values(name)
            .ok_or_else(|| AppError::format(path, format!("missing column {name}")))?
            .into_iter()
            .map(|v| v == 1.0)
            .collect())
    };
    Ok((col(s)?, col(h)?))
}

/// Renders a figure of one state entry of a manifest.
pub fn render_state(
    root: &Path,
    entry: &Value,
    kind: FigureKind,
    sh: Shading,
    frame: Option<usize>,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
) -> AppResult<(String, ShadeStats)> {
    let label = entry["label"].as_str().unwrap_or("state");
    let manifest = root.join(MANIFEST);
    let frames = entry["frames"]
        .as_array()
        .filter(|f| !f.is_empty())
        .ok_or_else(|| AppError::format(&manifest, format!("{label}: no frames written")))?;
    match kind {
        FigureKind::Streamlines => {
            let mut fig = StreamlineFigure {
                title: format!("{label}: streamlines, {} shading", sh.as_str()),
                ..Default::default()
            };
            for f in frames {
                let path = root.join(str_at(f, "file", &manifest)?);
                let table = read_table(&path)?;
                if fig.x.is_empty() {
                    fig.x = table.values("x").ok_or_else(|| AppError::format(&path, "missing column x"))?;
                }
                let (s, h) = masks(&table, sh, &path)?;
                fig.times.push(f["t"].as_f64().unwrap_or(0.0));
                fig.soft.push(s);
                fig.hard.push(h);
            }
            if let Some(rel) = entry["streamlines"].as_str() {
                let path = root.join(rel);
                let t = read_table(&path)?;
                let (q, ts, xs) = (t.values("seed_q"), t.values("t"), t.values("x"));
                let (Some(q), Some(ts), Some(xs)) = (q, ts, xs) else {
                    return Err(AppError::format(&path, "expected columns seed_q,t,x"));
                };
                for k in 0..q.len() {
                    match fig.lines.last_mut() {
                        Some((sq, pts)) if *sq == q[k] => pts.push((ts[k], xs[k])),
                        _ => fig.lines.push((q[k], vec![(ts[k], xs[k])])),
                    }
                }
            }
            for h in entry["halted"].as_array().into_iter().flatten() {
                let q = h["seed_q"].as_f64().unwrap_or(f64::NAN);
                if let Some((_, pts)) = fig.lines.iter().find(|(sq, _)| *sq == q) {
                    if let Some(&(t, x)) = pts.last() {
                        fig.halts.push((t, x));
                    }
                }
            }
            if let Some(rel) = entry["nodes"].as_str() {
                let doc = read_json(&root.join(rel))?;
                for e in doc["events"].as_array().into_iter().flatten() {
                    if let (Some(t), Some(x)) = (e["t"].as_f64(), e["x"].as_f64()) {
                        fig.nodes.push((t, x));
                    }
                }
            }
            Ok(streamlines_svg(&fig, x_range, y_range))
        }
        FigureKind::Densities | FigureKind::PotentialLandscape => {
            let k = frame.unwrap_or(entry["figure_frame"].as_u64().unwrap_or(0) as usize);
            let f = frames
                .get(k)
                .ok_or_else(|| AppError::Usage(format!("{label} has {} frames; frame {k} requested", frames.len())))?;
            let path = root.join(str_at(f, "file", &manifest)?);
            let table = read_table(&path)?;
            let col = |n: &str| table.values(n).ok_or_else(|| AppError::format(&path, format!("missing column {n}")));
            let x = col("x")?;
            let (soft, hard) = masks(&table, sh, &path)?;
            let t = f["t"].as_f64().unwrap_or(0.0);
            let fig = if kind == FigureKind::Densities {
                let names = ["q", "k_a", "k_s", "q_r", "k_c", "e_p", "u"];
                CurveFigure {
                    title: format!("{label}: energy densities at t = {t:.4}"),
                    x,
                    curves: names.iter().map(|n| Ok((n.to_string(), col(n)?))).collect::<AppResult<_>>()?,
                    soft,
                    hard,
                    levels: Vec::new(),
                    y_label: "energy density".into(),
                }
            } else {
                let (q, u) = (col(PER_PARTICLE_COLUMNS[0])?, col("U")?);
                let qu = q.iter().zip(&u).map(|(a, b)| a + b).collect();
                let band = f["band_limit"].as_f64().unwrap_or(f64::NAN);
                CurveFigure {
                    title: format!("{label}: K_a and Q + U at t = {t:.4}"),
                    x,
                    curves: vec![("K_a".into(), col("K_a")?), ("Q + U".into(), qu), ("U".into(), u)],
                    soft,
                    hard,
                    levels: if band.is_finite() { vec![("E+".into(), band)] } else { Vec::new() },
                    y_label: "energy".into(),
                }
            };
            Ok(curves_svg(&fig, x_range, y_range))
        }
        FigureKind::Vortex => Err(AppError::Usage("vortex figures need a vortex_2d run".into())),
    }
}

fn render_vortex_entry(
    root: &Path,
    entry: &Value,
    sh: Shading,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
) -> AppResult<(String, ShadeStats)> {
    let manifest = root.join(MANIFEST);
    let path = root.join(str_at(entry, "ledger", &manifest)?);
    let table = read_table(&path)?;
    let (xs, ys) = match (table.values("x"), table.values("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(AppError::format(&path, "expected x,y columns")),
    };
    let mut x: Vec<f64> = Vec::new();
    for &v in &xs {
        if v == xs[0] && !x.is_empty() {
            break;
        }
        x.push(v);
    }
    let y: Vec<f64> = ys.iter().step_by(x.len()).copied().collect();
    if x.len() * y.len() != xs.len() {
        return Err(AppError::format(&path, "rows do not form a tensor grid"));
    }
    let (soft, hard) = masks(&table, sh, &path)?;
    let mut loops: Vec<Vec<(f64, f64)>> = Vec::new();
    let lp = root.join(str_at(entry, "loops", &manifest)?);
    let lt = read_table(&lp)?;
    if let (Some(id), Some(lx), Some(ly)) = (lt.values("loop"), lt.values("x"), lt.values("y")) {
        for k in 0..id.len() {
            let n = id[k] as usize;
            while loops.len() <= n {
                loops.push(Vec::new());
            }
            loops[n].push((lx[k], ly[k]));
        }
    }
    let nd = read_json(&root.join(str_at(entry, "nodes", &manifest)?))?;
    let nodes = nd["nodes"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|n| Some((n["x"].as_f64()?, n["y"].as_f64()?)))
        .collect();
    let fig = VortexFigure {
        title: format!("vortex: flow loops, {} shading", sh.as_str()),
        x,
        y,
        soft,
        hard,
        loops,
        nodes,
    };
    Ok(vortex_svg(&fig, x_range, y_range))
}

/// What to draw from an existing run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub kind: FigureKind,
    pub shading: Shading,
    /// State label; the first state when absent.
    pub state: Option<String>,
    pub frame: Option<usize>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub output: PathBuf,
}

/// Renders `spec` from the run at `root` and writes the SVG.
pub fn render_run(root: &Path, spec: &RenderSpec) -> AppResult<ShadeStats> {
    let manifest_path = root.join(MANIFEST);
    let manifest = read_json(&manifest_path)?;
    if manifest["format"] != FORMAT {
        return Err(AppError::format(&manifest_path, format!("not a {FORMAT} manifest")));
    }
    let (svg, stats) = if spec.kind == FigureKind::Vortex {
        let v = &manifest["vortex"];
        if v.is_null() {
            return Err(AppError::Usage("this run has no vortex".into()));
        }
        render_vortex_entry(root, v, spec.shading, spec.x_range, spec.y_range)?
    } else {
        let states = manifest["states"].as_array().cloned().unwrap_or_default();
        let entry = match &spec.state {
            Some(l) => states.iter().find(|s| s["label"] == l.as_str()),
            None => states.first(),
        }
        .ok_or_else(|| AppError::Usage(format!("no state {:?} in this run", spec.state.as_deref().unwrap_or("(any)"))))?;
        render_state(root, entry, spec.kind, spec.shading, spec.frame, spec.x_range, spec.y_range)?
    };
    write_file(&spec.output, svg.as_bytes())?;
    Ok(stats)
}

/// Scalar field helper for the CLI: potential on the scenario grid.
pub fn potential_to_file(cfg: &ScenarioConfig, path: &Path, opts: &WriteOptions) -> AppResult<()> {
    one_d(cfg)?;
    let grid = cfg.geometry.grid_1d(cfg.grid_n)?;
    let u = cfg
        .geometry
        .potential()
        .expect("1D geometry")
        .sample(&grid)?;
    write_scalar_field(path, &u, opts.max_rows)
}
