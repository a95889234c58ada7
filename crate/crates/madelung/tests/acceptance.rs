//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs every preset at its full resolution, so build with optimisation
//! (the workspace test profile does). Exits nonzero on any failure except
//! the ones listed in `KNOWN`, which are printed as `FAIL (known: …)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use madelung::run::{write_run, WriteOptions};
use madelung_core::flow::{cdf_at, streamline_family, StreamlineOptions};
use madelung_core::madelung::{continuity_residual, decompose, hj_residual};
use madelung_core::scenarios::{
    prepare_states, run_scenario, run_vortex, EigenCache, ScenarioConfig, ScenarioName, ScenarioOutput, StateRun,
};
use madelung_core::spectral::{EigenBasis, Potential};
use madelung_core::states::Superposition;
use madelung_core::{Grid1D, Result};

/// Criteria that cannot be met as stated; see the project notes.
const KNOWN: &[(u32, &str)] = &[(
    9,
    "no Gaussian width keeps exactly 89 terms at eta = 1e-3 on the mzi well; the count steps 91 -> 90 -> 93",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Runs {
    outputs: BTreeMap<ScenarioName, ScenarioOutput>,
}

impl Runs {
    fn state(&self, n: ScenarioName, label: &str) -> &StateRun {
        self.outputs[&n]
            .states
            .iter()
            .find(|s| s.label == label)
            .expect("state present")
    }
}

fn metric(run: &StateRun, name: &str) -> f64 {
    run.metrics
        .iter()
        .find(|(k, _)| k == name)
        .map(|&(_, v)| v)
        .unwrap_or(f64::NAN)
}

fn one_d() -> impl Iterator<Item = ScenarioName> {
    ScenarioName::ALL.into_iter().filter(|&n| n != ScenarioName::Vortex2d)
}

fn eigenvalues() -> Result<Verdict> {
    let well = EigenBasis::numerical(&Potential::InfiniteWell { half_width: 1.0 }, Grid1D::new(-1.0, 1.0, 2001)?, 4)?;
    let ho = EigenBasis::numerical(&Potential::Harmonic { omega: 10.0 }, Grid1D::new(-3.0, 3.0, 2001)?, 5)?;
    let rel = |e: f64, exact: f64| (e / exact - 1.0).abs();
    let w = (0..4)
        .map(|k| rel(well.energies()[k], ((k + 1) * (k + 1)) as f64 * PI * PI / 8.0))
        .fold(0.0, f64::max);
    let h = (0..5)
        .map(|k| rel(ho.energies()[k], (k as f64 + 0.5) * 10.0))
        .fold(0.0, f64::max);
    Ok(verdict(
        w < 1e-3 && h < 1e-3,
        format!("well n=1..4 max rel err {w:.2e}; oscillator n=0..4 max rel err {h:.2e}"),
    ))
}

/// Flatness is measured against the physical ground energy, estimated by
/// Richardson extrapolation; against its own discrete eigenvalue the ledger
/// is flat to roundoff (same stencil), which is reported alongside.
fn flatness() -> Result<Verdict> {
    let solve = |n: usize| -> Result<Arc<EigenBasis<Grid1D>>> {
        Ok(Arc::new(EigenBasis::numerical(
            &Potential::QuarticDoubleWell,
            Grid1D::new(-1.25, 1.25, n)?,
            1,
        )?))
    };
    let (b2, b4, b8) = (solve(2001)?, solve(4001)?, solve(8001)?);
    let e_ref = (4.0 * b8.energies()[0] - b4.energies()[0]) / 3.0;
    let dev = |b: &Arc<EigenBasis<Grid1D>>, e: f64| -> Result<f64> {
        let (_, d) = decompose(&Superposition::eigenstate(b.clone(), 0)?, 0.0)?;
        let (q, u) = (&d.per_particle.q, &d.per_particle.u);
        Ok((0..q.len())
            .filter(|&i| d.valid[i] && q.is_valid(i))
            .map(|i| ((q.values()[i] + u.values()[i] - e) / e).abs())
            .fold(0.0, f64::max))
    };
    let (a, b) = (dev(&b2, e_ref)?, dev(&b4, e_ref)?);
    let own = dev(&b2, b2.energies()[0])?;
    let ratio = a / b;
    Ok(verdict(
        a < 1e-3 && (3.5..4.5).contains(&ratio),
        format!(
            "E0 = {e_ref:.10}; max |Q+U-E0|/E0 = {a:.2e} at n=2001, {b:.2e} at n=4001 (ratio {ratio:.2}); \
             vs the discrete eigenvalue {own:.1e}"
        ),
    ))
}

/// The two-term well state at resolution `n`.
fn well_pair(n: usize) -> Result<Superposition<Grid1D>> {
    let mut cfg = ScenarioConfig::preset(ScenarioName::WellSuperposition);
    cfg.grid_n = n;
    Ok(prepare_states(&cfg, &mut EigenCache::new())?.states.remove(0).1)
}

/// Max over a fixed set of physical points (|x| ≤ 0.8, ρ ≥ 0.05) so that the
/// same points are compared at every resolution.
fn fixed_region_max(s: &Superposition<Grid1D>, t: f64, f: impl Fn(usize) -> f64) -> Result<f64> {
    let rho = s.evaluate(t).norm_sqr();
    let g = *s.grid();
    Ok((0..g.len())
        .filter(|&i| g.x(i).abs() <= 0.8 && rho.values()[i] >= 0.05)
        .map(f)
        .fold(0.0, f64::max))
}

fn ledger(runs: &Runs) -> Result<Verdict> {
    let split = |n: usize| -> Result<(f64, f64)> {
        let s = well_pair(n)?;
        let t = 0.3 * s.period().expect("periodic");
        let (_, d) = decompose(&s, t)?;
        let p = &d.per_particle;
        let qs = fixed_region_max(&s, t, |i| (p.q.values()[i] - p.k_s.values()[i] - p.q_r.values()[i]).abs())?;
        let kc = fixed_region_max(&s, t, |i| (p.k_c.values()[i] - p.k_a.values()[i] - p.k_s.values()[i]).abs())?;
        Ok((qs, kc))
    };
    let ((q1, k1), (q2, k2)) = (split(2001)?, split(4001)?);
    let q_ok = (3.5..4.5).contains(&(q1 / q2));
    // K_c − K_a − K_s is an exact algebraic split: expect roundoff at both sizes
    let k_ok = (3.5..4.5).contains(&(k1 / k2)) || k1.max(k2) < 1e-9;

    let mut worst_qr: (f64, String) = (0.0, String::new());
    let mut states = 0;
    for n in one_d() {
        for r in &runs.outputs[&n].states {
            states += 1;
            let v = metric(r, "max_abs_qr_integral");
            if v > worst_qr.0 || v.is_nan() {
                worst_qr = (v, format!("{n}/{}", r.label));
            }
        }
    }
    let mut worst_e: (f64, String) = (0.0, String::new());
    for n in [ScenarioName::HoEigenstates, ScenarioName::QuarticEigenstates] {
        for r in &runs.outputs[&n].states {
            let v = metric(r, "energy_identity_error").abs();
            if v > worst_e.0 || v.is_nan() {
                worst_e = (v, format!("{n}/{}", r.label));
            }
        }
    }
    Ok(verdict(
        q_ok && k_ok && worst_qr.0 < 1e-8 && worst_e.0 < 1e-6,
        format!(
            "|Q-K_s-Q_r| {q1:.2e} -> {q2:.2e}, |K_c-K_a-K_s| {k1:.2e} -> {k2:.2e}; \
             max |int q_r| {:.1e} over {states} states ({}); max |int k_s + int u - E| {:.1e} ({})",
            worst_qr.0, worst_qr.1, worst_e.0, worst_e.1
        ),
    ))
}

fn residuals() -> Result<Verdict> {
    let worst = |n: usize, dt: f64| -> Result<(f64, f64)> {
        let s = well_pair(n)?;
        let period = s.period().expect("periodic");
        let (mut hj, mut cont) = (0.0f64, 0.0f64);
        for k in 0..8 {
            let t = period * k as f64 / 8.0;
            let (_, d) = decompose(&s, t)?;
            let r = hj_residual(&d)?;
            hj = hj.max(fixed_region_max(&s, t, |i| r.values()[i].abs())?);
            let c = continuity_residual(&s, t, dt)?;
            cont = cont.max(fixed_region_max(&s, t, |i| c.values()[i].abs())?);
        }
        Ok((hj, cont))
    };
    let (h1, c1) = worst(1001, 2e-3)?;
    let (h2, c2) = worst(2001, 1e-3)?;
    // δt alone, on a grid fine enough that the spatial part is negligible
    let (_, t1) = worst(8001, 2e-2)?;
    let (_, t2) = worst(8001, 1e-2)?;
    let (rh, rc, rt) = (h1 / h2, c1 / c2, t1 / t2);
    let second = |r: f64| (3.5..4.5).contains(&r);
    Ok(verdict(
        second(rh) && second(rc) && second(rt),
        format!(
            "8 times/period: HJ {h1:.2e} -> {h2:.2e} (x{rh:.2} for h/2); continuity {c1:.2e} -> {c2:.2e} \
             (x{rc:.2} for h/2, dt/2), {t1:.2e} -> {t2:.2e} (x{rt:.2} for dt/2)"
        ),
    ))
}

fn set_relations(runs: &Runs) -> Result<Verdict> {
    let (mut frames, mut bad) = (0, Vec::new());
    for n in one_d() {
        for r in &runs.outputs[&n].states {
            for (k, f) in r.frames.iter().enumerate() {
                frames += 1;
                let c = f.checks;
                if !(c.global_in_hard && c.local_in_soft && c.area_soft_qrkc >= c.area_soft_qka) {
                    bad.push(format!("{n}/{}#{k}", r.label));
                }
            }
        }
    }
    Ok(verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{frames} frames across 8 scenarios")
        } else {
            format!("{} of {frames} frames violate: {}", bad.len(), bad.join(", "))
        },
    ))
}

fn streamlines() -> Result<Verdict> {
    let cfg = ScenarioConfig::preset(ScenarioName::WellSuperposition);
    let s = prepare_states(&cfg, &mut EigenCache::new())?.states.remove(0).1;
    let period = s.period().expect("periodic");
    let opts = StreamlineOptions {
        tol: cfg.stream_tol,
        max_step: period / 256.0,
    };
    let lines = streamline_family(&s, 9, 0.0, period, opts)?;
    let mut cdf_err = 0.0f64;
    let mut samples = 0;
    for l in &lines {
        for &(t, x) in &l.samples {
            cdf_err = cdf_err.max((cdf_at(&s, x, t)? - l.seed_quantile).abs());
            samples += 1;
        }
    }
    let ret = lines
        .iter()
        .map(|l| (l.end().1 - l.samples[0].1).abs())
        .fold(0.0, f64::max);
    let complete = lines.iter().all(|l| l.halted_at.is_none() && (l.end().0 - period).abs() < 1e-9);
    let mut ordered = true;
    for k in 0..=1000 {
        let t = period * k as f64 / 1000.0;
        let xs: Vec<f64> = lines.iter().filter_map(|l| l.position_at(t)).collect();
        ordered &= xs.len() == lines.len() && xs.windows(2).all(|w| w[0] < w[1]);
    }
    Ok(verdict(
        lines.len() == 9 && complete && cdf_err < 1e-3 && ret < 1e-3 && ordered,
        format!(
            "{} lines, {samples} samples: max |CDF - q| {cdf_err:.1e}, max |x(T) - x(0)| {ret:.1e}, \
             ordered at 1001 times: {ordered}",
            lines.len()
        ),
    ))
}

fn nodes(runs: &Runs) -> Result<Verdict> {
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [
        ScenarioName::WellSuperposition,
        ScenarioName::WellBarrierSuperposition,
        ScenarioName::HoSuperposition,
        ScenarioName::QuarticSuperposition,
    ] {
        let r = runs.state(n, "pair");
        let period = r.period.expect("two-term states recur");
        let ev = &r.nodes.events;
        let pass = ev.len() == 2 && {
            let (a, b) = (&ev[0], &ev[1]);
            let dt = (b.t_star - a.t_star).rem_euclid(period);
            ev.iter().all(|e| e.refined && e.residual < 1e-8)
                && (a.x_star + b.x_star).abs() < 1e-6
                && (dt - 0.5 * period).abs() < 1e-6 * period
        };
        ok &= pass;
        parts.push(match ev.as_slice() {
            [a, b] => format!(
                "{n}: x = {:+.6}/{:+.6}, dt = {:.6} T, |psi| <= {:.0e}",
                a.x_star,
                b.x_star,
                (b.t_star - a.t_star).rem_euclid(period) / period,
                a.residual.max(b.residual)
            ),
            _ => format!("{n}: {} events", ev.len()),
        });
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn vortex() -> Result<Verdict> {
    let cfg = ScenarioConfig::preset(ScenarioName::Vortex2d);
    let v = run_vortex(&cfg)?;
    let e = 5.0 * PI * PI / 2.0;
    let ep_ok = v.ep_deviation < 1e-6 && (v.state.band_limit() - e).abs() < 1e-9;
    let p = &v.profile;
    let vr: Vec<f64> = p.radii.iter().zip(&p.speed_mean).map(|(r, s)| r * s).collect();
    let mean = vr.iter().sum::<f64>() / vr.len() as f64;
    let spread = vr.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max);
    let exp_ok = (p.fit_exponent + 2.0).abs() <= 0.05;
    // one quantum; the sign is the winding of this state (clockwise)
    let circ_ok = ((v.circulation_node.abs() - 2.0 * PI).abs() < 1e-3) && v.circulation_off.abs() < 1e-3;
    Ok(verdict(
        ep_ok && exp_ok && spread < 0.05 && circ_ok && v.nodes.len() == 1,
        format!(
            "max |E_p - 5pi^2/2| {:.1e}; K_a exponent {:.4}; |v_a| r within {:.2}% on [2h, 0.1]; \
             circulation {:.6} at node, {:.1e} off node",
            v.ep_deviation,
            p.fit_exponent,
            100.0 * spread,
            v.circulation_node,
            v.circulation_off
        ),
    ))
}

fn band_limits(runs: &Runs) -> Result<(Verdict, bool)> {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut only_mzi_count = true;
    for (n, want) in [(ScenarioName::ReflectionPulse, 18), (ScenarioName::Mzi1d, 89)] {
        let out = &runs.outputs[&n];
        let p = out.pulse.as_ref().expect("pulse scenario");
        let s = &runs.state(n, "pulse").state;
        let norm: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum();
        let norm_ok = (norm - 1.0).abs() < 1e-10;
        let count_ok = p.eta_index == want && s.coeffs().len() == want;
        ok &= norm_ok && count_ok;
        if !norm_ok || (!count_ok && n != ScenarioName::Mzi1d) {
            only_mzi_count = false;
        }
        parts.push(format!(
            "{n}: eta-index {} (want {want}) at sigma {:.4}, {} kept, |norm - 1| {:.0e}",
            p.eta_index,
            p.sigma,
            s.coeffs().len(),
            (norm - 1.0).abs()
        ));
    }
    let shortfall = runs.outputs[&ScenarioName::Mzi1d]
        .notes
        .iter()
        .any(|(k, _)| k == "calibration_shortfall");
    Ok((verdict(ok, parts.join("; ")), !ok && only_mzi_count && shortfall))
}

fn beam_splitter(runs: &Runs) -> Result<Verdict> {
    let t = runs.outputs[&ScenarioName::Mzi1d].tuning.as_ref().expect("tuned");
    let (lo, hi) = t.bracket;
    let mut inside: Vec<(f64, f64)> = t.probes.iter().copied().filter(|&(u, _)| u >= lo && u <= hi).collect();
    inside.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = inside.len() >= 2 && inside.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(verdict(
        (t.transmission - 0.5).abs() < 0.01 && t.iterations <= 30 && monotone,
        format!(
            "U0* = {} with T = {:.4} after {} probes; bracket [{lo}, {hi}], {} probes inside, decreasing: {monotone}",
            t.u0_star,
            t.transmission,
            t.iterations,
            inside.len()
        ),
    ))
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable run dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn determinism(runs: &Runs) -> Result<Verdict> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let opts = WriteOptions::default();
    let mut compared = 0;
    let mut diffs = Vec::new();
    for n in ScenarioName::ALL {
        let cfg = ScenarioConfig::preset(n);
        let (a, b) = (tmp.path().join(format!("{n}-a")), tmp.path().join(format!("{n}-b")));
        // first copy from the shared run, second from a fresh process-state run
        let first = match runs.outputs.get(&n) {
            Some(o) => o.clone(),
            None => run_scenario(&cfg, &mut EigenCache::new())?,
        };
        write_run(&first, &a, &opts).expect("write run");
        write_run(&run_scenario(&cfg, &mut EigenCache::new())?, &b, &opts).expect("write run");
        let (fa, fb) = (files_under(&a), files_under(&b));
        compared += fa.len();
        if fa.keys().ne(fb.keys()) {
            diffs.push(format!("{n}: file lists differ"));
        }
        for (k, v) in &fa {
            if fb.get(k) != Some(v) {
                diffs.push(format!("{n}/{k}"));
            }
        }
    }
    Ok(verdict(
        diffs.is_empty(),
        if diffs.is_empty() {
            format!("9 scenarios run twice: {compared} files byte-identical, manifests included")
        } else {
            format!("differences: {}", diffs.join(", "))
        },
    ))
}

fn main() {
    let start = Instant::now();
    let mut cache = EigenCache::new();
    let mut outputs = BTreeMap::new();
    for n in ScenarioName::ALL {
        let out = run_scenario(&ScenarioConfig::preset(n), &mut cache).unwrap_or_else(|e| panic!("{n}: {e}"));
        outputs.insert(n, out);
    }
    let runs = Runs { outputs };
    eprintln!("all presets run in {:.1} s", start.elapsed().as_secs_f64());

    let mut failures = 0;
    let mut report = |id: u32, title: &str, r: Result<Verdict>, excused: bool| {
        let (status, detail) = match r {
            Ok(v) if v.pass => ("PASS".to_string(), v.detail),
            Ok(v) => match KNOWN.iter().find(|(k, _)| *k == id) {
                Some((_, why)) if excused => (format!("FAIL (known: {why})"), v.detail),
                _ => {
                    failures += 1;
                    ("FAIL".to_string(), v.detail)
                }
            },
            Err(e) => {
                failures += 1;
                ("FAIL".to_string(), format!("error: {e}"))
            }
        };
        println!("criterion {id:>2} {title}: {status} -- {detail}");
    };
    report(1, "eigenvalues", eigenvalues(), false);
    report(2, "flatness", flatness(), false);
    report(3, "ledger identities", ledger(&runs), false);
    report(4, "HJ and continuity residuals", residuals(), false);
    report(5, "superoscillation set relations", set_relations(&runs), false);
    report(6, "streamline/quantile agreement", streamlines(), false);
    report(7, "nodes", nodes(&runs), false);
    report(8, "2D vortex", vortex(), false);
    match band_limits(&runs) {
        Ok((v, excused)) => report(9, "band limits", Ok(v), excused),
        Err(e) => report(9, "band limits", Err(e), false),
    }
    report(10, "beam splitter", beam_splitter(&runs), false);
    report(11, "determinism", determinism(&runs), false);
    eprintln!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
