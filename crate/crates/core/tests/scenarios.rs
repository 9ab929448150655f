use std::f64::consts::FRAC_PI_6;
use std::path::PathBuf;

use bearing_formation::control::Law;
use bearing_formation::dynamics::simulate;
use bearing_formation::geometry::{bearing, Dimension};
use bearing_formation::harness::{
    emit_plot_data, load_scenario, read_trace, recompute, write_trace,
};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

#[test]
fn bundled_scenarios_match_the_published_setup() {
    let s3 = load_scenario(scenario("paper_3d.json")).unwrap();
    assert_eq!(s3.dim, Dimension::Spatial);
    assert_eq!(s3.agent_count(), 6);
    assert_eq!(s3.formation.graph.leader_count(), 2);
    assert_eq!(s3.reference.speed, 0.15);
    let h = s3.reference.heading.as_ref();
    assert!((h[0] - FRAC_PI_6.cos()).abs() < 1e-15 && (h[1] - 0.5).abs() < 1e-15 && h[2] == 0.0);
    assert_eq!((s3.gains.bearing.k1, s3.gains.bearing.k2), (15.0, 7.0));
    assert_eq!(
        (s3.gains.displacement.k1, s3.gains.displacement.k2),
        (5.0, 3.0)
    );

    let s2 = load_scenario(scenario("paper_2d.json")).unwrap();
    assert_eq!(s2.dim, Dimension::Planar);
    assert_eq!(s2.reference.speed, 0.2);
    let h = s2.reference.heading.as_ref();
    assert!((h[0] - FRAC_PI_6.cos()).abs() < 1e-15 && (h[1] - 0.5).abs() < 1e-15);
}

#[test]
fn solved_targets_reproduce_every_desired_bearing() {
    for name in ["paper_3d.json", "paper_2d.json"] {
        let s = load_scenario(scenario(name)).unwrap();
        let f = &s.formation;
        let p = f.target.positions();
        for (k, e) in f.graph.edges().iter().enumerate() {
            let g = bearing(&p[e.tail], &p[e.head]).unwrap();
            assert!(
                (g.as_ref() - f.bearings.edge(k)).amax() < 1e-9,
                "{name} edge {k}"
            );
        }
        assert!(f.rigidity().unwrap().rigid);
    }
}

#[test]
fn planar_target_is_the_published_rectangle_pattern() {
    let s = load_scenario(scenario("paper_2d.json")).unwrap();
    let expect = [
        [10.0, 0.0],
        [10.0, 5.0],
        [5.0, 5.0],
        [5.0, 0.0],
        [0.0, 0.0],
        [0.0, 5.0],
    ];
    for (p, e) in s.formation.target.positions().iter().zip(expect) {
        assert!(
            (p[0] - e[0]).abs() < 1e-9 && (p[1] - e[1]).abs() < 1e-9,
            "{p}"
        );
    }
}

#[test]
fn trace_survives_serialization_for_both_laws_and_dimensions() {
    for name in ["paper_3d.json", "paper_2d.json"] {
        let mut s = load_scenario(scenario(name)).unwrap();
        s.integrator.duration = 5.0;
        s.cadence = 7;
        for law in [Law::BearingOnly, Law::Displacement] {
            let trace = simulate(&s, law);
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).unwrap();
            let parsed = read_trace(buf.as_slice()).unwrap();
            for (k, snap) in trace.snapshots.iter().enumerate() {
                assert_eq!(parsed.row(k).state, snap.state);
            }
            assert!(recompute(&parsed, &s).unwrap().max() <= 1e-9);
        }
    }
}

#[test]
fn plot_tables_cover_every_snapshot() {
    let mut s = load_scenario(scenario("paper_2d.json")).unwrap();
    s.integrator.duration = 3.0;
    let trace = simulate(&s, Law::Displacement);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&trace, dir.path()).unwrap();
    for f in &files {
        let lines = std::fs::read_to_string(f).unwrap().lines().count();
        assert_eq!(lines, trace.snapshots.len() + 1, "{}", f.display());
    }
    let header = std::fs::read_to_string(&files[0]).unwrap();
    assert!(header.starts_with("t,p1_x,p1_y,p2_x"));
}

#[test]
fn step_halving_shows_fourth_order_convergence() {
    let base = load_scenario(scenario("paper_3d.json")).unwrap();
    let final_positions = |dt: f64| {
        let mut s = base.clone();
        s.integrator.dt = dt;
        s.integrator.duration = 5.0;
        let mut sim = s.initial.clone();
        let system = s.closed_loop(Law::BearingOnly);
        for _ in 0..s.integrator.steps() {
            sim = system.step(&sim, &s.integrator).unwrap();
        }
        sim.stacked_positions()
    };
    let a = final_positions(0.02);
    let b = final_positions(0.01);
    let c = final_positions(0.005);
    let ratio = (&a - &b).norm() / (&b - &c).norm();
    assert!((10.0..=22.0).contains(&ratio), "ratio {ratio}");
}
