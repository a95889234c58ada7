//! End-to-end use of the public API at coarse resolution: build a basis,
//! evolve a state, take its ledger, classify it, follow its flow.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use madelung_core::flow::{cdf_at, find_nodes, streamline_family, NodeScan, StreamlineOptions};
use madelung_core::madelung::{classify_superoscillation, decompose, is_subset};
use madelung_core::scenarios::{nodes_per_period, run_scenario, EigenCache, ScenarioConfig, ScenarioName};
use madelung_core::spectral::{infinite_well_energy, EigenBasis, Potential};
use madelung_core::states::Superposition;
use madelung_core::{Complex64, Grid1D};

fn coarse(n: ScenarioName) -> ScenarioConfig {
    let mut c = ScenarioConfig::preset(n);
    c.frames = 5;
    c.streamlines = 3;
    c.grid_n = match n {
        ScenarioName::Vortex2d => 41,
        // pulses need enough points per wavelength
        ScenarioName::ReflectionPulse | ScenarioName::Mzi1d => c.grid_n,
        _ => 1201,
    };
    c
}

#[test]
fn numerical_and_closed_form_wells_agree() {
    let g = Grid1D::new(-1.0, 1.0, 1001).unwrap();
    let fd = EigenBasis::numerical(&Potential::InfiniteWell { half_width: 1.0 }, g, 3).unwrap();
    let exact = EigenBasis::infinite_well(g, &[1, 2, 3]).unwrap();
    for k in 0..3 {
        let e = infinite_well_energy(k + 1, 2.0);
        assert!((fd.energies()[k] / e - 1.0).abs() < 1e-5);
        assert_eq!(exact.energies()[k], e);
    }
}

#[test]
fn two_term_state_through_the_whole_pipeline() {
    let g = Grid1D::new(-1.0, 1.0, 1601).unwrap();
    let b = Arc::new(EigenBasis::infinite_well(g, &[1, 2]).unwrap());
    let c = FRAC_1_SQRT_2;
    let s = Superposition::new(b, vec![0, 1], vec![Complex64::new(c, 0.0), Complex64::new(-c, 0.0)]).unwrap();
    let period = s.period().unwrap();
    assert!((period - 2.0 * PI / (infinite_well_energy(2, 2.0) - infinite_well_energy(1, 2.0))).abs() < 1e-12);

    for k in 0..4 {
        let t = period * k as f64 / 4.0;
        let (_, d) = decompose(&s, t).unwrap();
        assert!(d.density.q_r.integrate_masked().unwrap().abs() < 1e-8);
        let m = classify_superoscillation(&d);
        assert!(is_subset(&m.forbidden_global, &m.hard_qka));
        assert!(is_subset(&m.forbidden_local, &m.soft_qka));
        assert!(m.area(&m.soft_qrkc) >= m.area(&m.soft_qka));
    }

    // a closed window [0, T] sees the t = 0 node again at T
    let nodes = find_nodes(&s, (0.0, period), (-1.0, 1.0), NodeScan::default()).unwrap();
    assert_eq!(nodes.events.len(), 3);
    let folded = nodes_per_period(&s, NodeScan::default()).unwrap();
    assert_eq!(folded.len(), 2);
    assert!((folded[0].x_star + folded[1].x_star).abs() < 1e-9);

    let opts = StreamlineOptions {
        tol: 1e-9,
        max_step: period / 64.0,
    };
    let lines = streamline_family(&s, 3, 0.0, period, opts).unwrap();
    for l in &lines {
        let (t, x) = l.end();
        assert!((cdf_at(&s, x, t).unwrap() - l.seed_quantile).abs() < 1e-6);
        assert!((x - l.samples[0].1).abs() < 1e-6);
    }
}

#[test]
fn every_preset_runs_and_keeps_its_set_relations() {
    let mut cache = EigenCache::new();
    for n in ScenarioName::ALL {
        let out = run_scenario(&coarse(n), &mut cache).unwrap_or_else(|e| panic!("{n}: {e}"));
        if n == ScenarioName::Vortex2d {
            let v = out.vortex.expect("vortex run");
            assert_eq!(v.nodes.len(), 1);
            continue;
        }
        assert!(!out.states.is_empty(), "{n}");
        for r in &out.states {
            for f in &r.frames {
                let c = f.checks;
                assert!(c.global_in_hard && c.local_in_soft, "{n}/{} at t = {}", r.label, f.t);
                assert!(c.area_soft_qrkc >= c.area_soft_qka, "{n}/{}", r.label);
                assert!((c.norm - 1.0).abs() < 1e-6, "{n}/{}: norm {}", r.label, c.norm);
            }
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = coarse(ScenarioName::QuarticSuperposition);
    let a = run_scenario(&cfg, &mut EigenCache::new()).unwrap();
    let b = run_scenario(&cfg, &mut EigenCache::new()).unwrap();
    assert_eq!(a.states.len(), b.states.len());
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.metrics, y.metrics);
        assert_eq!(x.frames.len(), y.frames.len());
        for (f, g) in x.frames.iter().zip(&y.frames) {
            assert_eq!(f.ledger, g.ledger);
            assert_eq!(f.mask, g.mask);
        }
        assert_eq!(x.nodes, y.nodes);
    }
}
