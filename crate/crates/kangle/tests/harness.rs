use std::collections::{BTreeMap, BTreeSet};

use kangle::dsl::{parse_expr, parse_immersion};
use kangle::harness::catalog::{builtin_catalog, find_entry};
use kangle::harness::quadrature::{integrate_laplacian_of, run_check, Check};
use kangle::harness::report::to_json;
use kangle::harness::{run_suite, HarnessError, RunOptions, Target};
use kangle::identities::Conventions;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

fn targets(names: &[&str]) -> Vec<Target> {
    names
        .iter()
        .map(|n| Target::from_entry(&find_entry(n).unwrap()))
        .collect()
}

#[test]
fn catalog_expectations_hold() {
    let all: Vec<Target> = builtin_catalog().iter().map(Target::from_entry).collect();
    let opts = RunOptions {
        points: 16,
        seed: 4,
        ..RunOptions::default()
    };
    let rep = run_suite(&all, &opts).unwrap();
    for e in &rep.entries {
        assert!(e.points_evaluated > 0, "{}", e.name);
        for a in &e.assertions {
            assert!(
                a.residual.pass,
                "{} {} at {:?}: {:?}",
                e.name, a.residual.id, a.point, a.residual
            );
        }
    }
    assert!(rep.summary.pass, "{:?}", rep.summary);
    let n_assert: usize = rep.entries.iter().map(|e| e.assertions.len()).sum();
    assert!(n_assert > 500, "{n_assert}");
}

#[test]
fn suite_filter_selects_only_that_suite() {
    let opts = RunOptions {
        suites: vec!["kahler_form".into()],
        points: 8,
        ..RunOptions::default()
    };
    let rep = run_suite(&targets(&["minimal_graph"]), &opts).unwrap();
    let recs = &rep.entries[0].records;
    assert!(!recs.is_empty());
    assert!(recs
        .iter()
        .all(|r| r.residual.id.starts_with("kahler_form.")));

    let opts = RunOptions {
        suites: vec!["kappa.laplacian_curvature".into()],
        points: 8,
        ..RunOptions::default()
    };
    let rep = run_suite(&targets(&["minimal_graph"]), &opts).unwrap();
    assert!(rep.entries[0]
        .records
        .iter()
        .all(|r| r.residual.id == "kappa.laplacian_curvature"));

    let bad = RunOptions {
        suites: vec!["no_such_suite".into()],
        ..RunOptions::default()
    };
    assert!(matches!(
        run_suite(&targets(&["minimal_graph"]), &bad),
        Err(HarnessError::Usage(_))
    ));
}

#[test]
fn seed_moves_points_but_not_the_verdict() {
    let ts = targets(&["trig_surface_sphere", "quaternionic_graph"]);
    let a = run_suite(
        &ts,
        &RunOptions {
            points: 12,
            seed: 1,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let b = run_suite(
        &ts,
        &RunOptions {
            points: 12,
            seed: 2,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let again = run_suite(
        &ts,
        &RunOptions {
            points: 12,
            seed: 1,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_ne!(a.entries[0].records[0].point, b.entries[0].records[0].point);
    assert_eq!(a.summary.pass, b.summary.pass);
    assert_eq!(to_json(&a), to_json(&again));
}

fn schema_lines(v: &Value, path: String, out: &mut BTreeMap<String, BTreeSet<&'static str>>) {
    let kind = match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    };
    out.entry(path.clone()).or_default().insert(kind);
    match v {
        Value::Array(items) => items
            .iter()
            .for_each(|x| schema_lines(x, format!("{path}[]"), out)),
        Value::Object(map) => map
            .iter()
            .for_each(|(k, x)| schema_lines(x, format!("{path}.{k}"), out)),
        _ => {}
    }
}

#[test]
fn report_schema_matches_golden() {
    let opts = RunOptions {
        points: 6,
        seed: 7,
        ..RunOptions::default()
    };
    let rep = run_suite(&targets(&["minimal_graph", "lagrangian_torus_4"]), &opts).unwrap();
    let text = to_json(&rep);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], 1);
    let mut paths = BTreeMap::new();
    schema_lines(&v, "$".into(), &mut paths);
    let got: String = paths
        .iter()
        .map(|(p, kinds)| {
            format!(
                "{p}: {}\n",
                kinds.iter().cloned().collect::<Vec<_>>().join("|")
            )
        })
        .collect();
    let golden = include_str!("golden/report_schema.txt");
    assert_eq!(got, golden, "report schema changed:\n{got}");
}

/// A smooth perturbation of the Clifford torus with random trig terms.
fn random_torus<R: Rng>(rng: &mut R) -> String {
    let mut term = || {
        let (a, b) = (rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
        let (k, l) = (rng.gen_range(0..3), rng.gen_range(1..3));
        format!("{a:.3}*sin({k}*u1 + {l}*u2) + {b:.3}*cos({l}*u1 - {k}*u2)")
    };
    format!(
        "n = 1; ambient = flat; periodic; map = [cos(u1) + {}, sin(u1) + {}, cos(u2) + {}, sin(u2) + {}]",
        term(),
        term(),
        term(),
        term()
    )
}

#[test]
fn stokes_for_random_periodic_functions() {
    let mut rng = StdRng::seed_from_u64(21);
    for _ in 0..2 {
        let spec = parse_immersion(&random_torus(&mut rng)).unwrap();
        let f = format!(
            "{:.3}*sin(u1)*cos(2*u2) + exp({:.3}*cos(u1 + u2)) + {:.3}*cos(u2)^2",
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0)
        );
        let f = parse_expr(&f, Some(2)).unwrap();
        let (int, abs) = integrate_laplacian_of(&spec, &f, 64, Conventions::default()).unwrap();
        assert!(abs > 1e-2, "{abs}");
        assert!(int.abs() < 1e-8, "{int:e} (integral of |lap f| {abs:e})");
    }
}

#[test]
fn lagrangian_energy_integrals_vanish() {
    let spec = find_entry("lagrangian_torus_4").unwrap().spec();
    let q = run_check(&spec, Check::Energy, 32, Conventions::default()).unwrap();
    assert!(
        q.lhs.abs() < 1e-12 && q.rhs.abs() < 1e-12 && q.pass,
        "{q:?}"
    );
    assert!(q.product_split);
}

#[test]
fn quadrature_needs_a_periodic_spec() {
    let spec = find_entry("minimal_graph").unwrap().spec();
    assert!(matches!(
        run_check(&spec, Check::Stokes, 16, Conventions::default()),
        Err(HarnessError::Usage(_))
    ));
    let spec = find_entry("lagrangian_torus_2").unwrap().spec();
    assert!(matches!(
        run_check(&spec, Check::Stokes, 4, Conventions::default()),
        Err(HarnessError::Usage(_))
    ));
}
