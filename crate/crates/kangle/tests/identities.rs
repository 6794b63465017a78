use kangle::geometry::Snapshot;
use kangle::harness::catalog::find_entry;
use kangle::harness::sampling::halton_box;
use kangle::identities::{
    calibrate, evaluate, parallel_h_defect, Conventions, Evaluation, IdentityResidual, Tolerances,
    IDENTITY_IDS,
};
use num_rational::Ratio;

fn run_entry(name: &str, count: usize, order: usize) -> Vec<(Snapshot, Evaluation)> {
    let e = find_entry(name).unwrap();
    let spec = e.spec();
    halton_box(&e.domain, count, 0)
        .iter()
        .filter_map(|p| Snapshot::compute(&spec, p, order).ok())
        .map(|s| {
            let ev = evaluate(&s, &["all"], Conventions::default(), Tolerances::default());
            (s, ev)
        })
        .collect()
}

fn record<'a>(ev: &'a Evaluation, id: &str) -> &'a IdentityResidual {
    ev.residuals
        .iter()
        .find(|r| r.id == id)
        .unwrap_or_else(|| panic!("no record {id}"))
}

fn all_sides_below(r: &IdentityResidual, tol: f64) -> bool {
    r.lhs.iter().chain(&r.rhs).all(|x| x.abs() <= tol)
}

#[test]
fn every_identity_has_a_record() {
    let runs = run_entry("minimal_graph", 1, 3);
    let ids: Vec<&str> = runs[0].1.residuals.iter().map(|r| r.id.as_str()).collect();
    for (id, _) in IDENTITY_IDS {
        assert!(ids.contains(&id), "missing {id}");
    }
    assert!(
        ids.windows(2).all(|w| w[0] < w[1]),
        "records are sorted and unique"
    );
}

#[test]
fn constant_angle_linear_graph_is_trivially_closed() {
    for (_, ev) in run_entry("linear_n3_a0_5", 8, 3) {
        for id in [
            "kahler_form.codifferential",
            "kahler_form.codifferential_norm",
            "kahler_form.polar_codifferential",
        ] {
            let r = record(&ev, id);
            assert!(
                r.applicable && r.pass && all_sides_below(r, 1e-12),
                "{id}: {r:?}"
            );
        }
        for id in [
            "cos2_laplacian.formula",
            "weitzenboeck.formula",
            "kappa.laplacian_divergence",
        ] {
            let r = record(&ev, id);
            assert!(!r.applicable || all_sides_below(r, 1e-10), "{id}: {r:?}");
        }
    }
}

#[test]
fn minimal_graph_closes_everything() {
    let runs = run_entry("minimal_graph", 100, 3);
    assert!(runs.len() >= 95);
    for (s, ev) in &runs {
        for r in ev.residuals.iter().filter(|r| r.applicable) {
            assert!(r.pass, "{} at {:?}: {r:?}", r.id, s.point);
            if r.id.starts_with("kahler_form.") {
                assert!(
                    r.abs_residual <= 1e-7 || r.rel_residual <= 1e-6,
                    "{}: {r:?}",
                    r.id
                );
            }
            if r.id.starts_with("mean_curvature.") || r.id.starts_with("four_dim.") {
                assert!(all_sides_below(r, 1e-9), "{}: {r:?}", r.id);
            }
        }
        let closed = [
            "kappa.laplacian_curvature",
            "kappa.laplacian_divergence",
            "weitzenboeck.formula",
            "cos2_laplacian.formula",
        ];
        for id in closed {
            let r = record(ev, id);
            assert!(
                !r.applicable || r.rel_residual <= 1e-5 || r.abs_residual <= 1e-7,
                "{id}: {r:?}"
            );
        }
    }
    let applicable = runs
        .iter()
        .filter(|(_, ev)| record(ev, "kappa.laplacian_curvature").applicable)
        .count();
    assert!(applicable >= 50, "{applicable}");
}

#[test]
fn kahler_form_norm_at_a_lagrangian_point() {
    let spec = find_entry("minimal_graph").unwrap().spec();
    let s = Snapshot::compute(&spec, &[0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0], 3).unwrap();
    let ev = evaluate(
        &s,
        &["kahler_form"],
        Conventions::default(),
        Tolerances::default(),
    );
    let r = record(&ev, "kahler_form.norm");
    assert!(r.applicable && all_sides_below(r, 1e-12), "{r:?}");
    assert!(!record(&ev, "kahler_form.gradient_norm").applicable);
}

#[test]
fn non_minimal_surfaces() {
    for name in [
        "trig_surface_flat",
        "trig_surface_b_flat",
        "trig_surface_sphere",
        "trig_surface_hyperbolic",
    ] {
        let runs = run_entry(name, 100, 3);
        let mut surface = 0;
        for (s, ev) in &runs {
            for r in ev.residuals.iter().filter(|r| r.applicable) {
                assert!(r.pass, "{name} {} at {:?}: {r:?}", r.id, s.point);
            }
            surface += record(ev, "kappa.surface").applicable as usize;
        }
        assert!(surface >= 50, "{name}: {surface}");
    }
}

#[test]
fn ambient_sign_enters_through_the_einstein_constant() {
    let sphere = run_entry("trig_surface_sphere", 4, 3);
    let hyperbolic = run_entry("trig_surface_hyperbolic", 4, 3);
    for ((s, a), (t, b)) in sphere.iter().zip(&hyperbolic) {
        assert_eq!(s.ambient.einstein_constant(), 6.0);
        assert_eq!(t.ambient.einstein_constant(), -6.0);
        assert!(record(a, "kappa.surface").pass && record(b, "kappa.surface").pass);
    }
}

#[test]
fn lagrangian_torus_closed_and_parallel() {
    for (_, ev) in run_entry("lagrangian_torus_4", 32, 3) {
        for id in [
            "jh.closed",
            "jh.parallel_on_lagrangian",
            "sigma.parallel",
            "four_dim.parallel_h_balance",
            "mean_curvature.chain",
        ] {
            let r = record(&ev, id);
            assert!(r.applicable && r.abs_residual <= 1e-8, "{id}: {r:?}");
        }
        assert!(!record(&ev, "kappa.laplacian_curvature").applicable);
        let norm = ev
            .diagnostics
            .iter()
            .find(|d| d.id == "sigma.norm")
            .and_then(|d| d.value)
            .unwrap();
        assert!(norm > 0.1, "{norm}");
    }
}

#[test]
fn equal_angle_non_minimal_graph() {
    let runs = run_entry("quaternionic_graph", 64, 3);
    let mut balance = 0;
    for (s, ev) in &runs {
        assert!(s.equal_angles());
        for r in ev.residuals.iter().filter(|r| r.applicable) {
            assert!(r.pass, "{} at {:?}: {r:?}", r.id, s.point);
        }
        balance += record(ev, "four_dim.general_balance").applicable as usize;
    }
    assert!(balance >= 60);
}

#[test]
fn gating_follows_classification() {
    for name in [
        "lagrangian_torus_2",
        "holo_graph_4",
        "complex_point_surface",
    ] {
        for (s, ev) in run_entry(name, 16, 3) {
            if s.classification == kangle::geometry::Classification::Generic {
                continue;
            }
            for id in [
                "kappa.laplacian_curvature",
                "kappa.surface",
                "kahler_form.gradient_norm",
                "cos2_laplacian.last_term_form",
            ] {
                let r = record(&ev, id);
                assert!(!r.applicable && r.reason.is_some(), "{name} {id}: {r:?}");
            }
        }
    }
}

#[test]
fn evaluation_is_deterministic() {
    let a = run_entry("slant_product", 4, 3);
    let b = run_entry("slant_product", 4, 3);
    for ((_, x), (_, y)) in a.iter().zip(&b) {
        for (r, q) in x.residuals.iter().zip(&y.residuals) {
            assert_eq!(r.lhs, q.lhs);
            assert_eq!(r.rhs, q.rhs);
            assert_eq!(r.abs_residual.to_bits(), q.abs_residual.to_bits());
        }
    }
}

#[test]
fn higher_jet_order_does_not_worsen_residuals() {
    for name in ["trig_surface_sphere", "minimal_graph", "quaternionic_graph"] {
        let low = run_entry(name, 8, 3);
        let high = run_entry(name, 8, 4);
        for ((_, a), (_, b)) in low.iter().zip(&high) {
            for (r, q) in a
                .residuals
                .iter()
                .zip(&b.residuals)
                .filter(|(r, _)| r.applicable)
            {
                let floor = 1e-13 * r.scale.max(1.0);
                assert!(
                    q.abs_residual <= 2.0 * r.abs_residual.max(floor),
                    "{name} {}: {} -> {}",
                    r.id,
                    r.abs_residual,
                    q.abs_residual
                );
            }
        }
    }
}

#[test]
fn calibration_is_unique() {
    let cal = calibrate().unwrap();
    assert_eq!(cal.candidates.iter().filter(|c| c.closes).count(), 1);
    assert_eq!(
        (cal.conventions.laplacian_sign, cal.conventions.delta_sign),
        (1.0, 1.0)
    );
}

#[test]
fn parallel_mean_curvature_relation_in_exact_arithmetic() {
    let q = |a: i64, b: i64| Ratio::new(a, b);
    let (n, sin2) = (q(1, 1), q(8, 9));
    for h2 in [q(1, 1), q(4, 3), q(2, 7), q(9, 16)] {
        for rho in [q(-3, 4) * h2, q(-1, 2) * h2, q(3, 4) * h2, q(-1, 1)] {
            let defect = parallel_h_defect(n, sin2, q(6, 1) * rho, h2);
            assert_eq!(
                defect == q(0, 1),
                rho == q(-3, 4) * h2,
                "h2 {h2} rho {rho} defect {defect}"
            );
        }
    }
}
