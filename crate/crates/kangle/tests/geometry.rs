mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use kangle::ambient::apply_j;
use kangle::dsl::{parse_immersion, BinOp, Expr, ImmersionSpec};
use kangle::geometry::{Classification, Snapshot};
use kangle::harness::catalog::{builtin_catalog, find_entry, CatalogEntry};
use kangle::harness::sampling::halton_box;
use kangle::jets::Jet;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn snapshots(e: &CatalogEntry, count: usize) -> Vec<Snapshot> {
    let spec = e.spec();
    halton_box(&e.domain, count, 1)
        .iter()
        .filter_map(|p| Snapshot::compute(&spec, p, 3).ok())
        .collect()
}

fn entry_snapshot(name: &str, p: &[f64]) -> Snapshot {
    Snapshot::compute(&find_entry(name).unwrap().spec(), p, 3).unwrap()
}

fn random_unitary<R: Rng>(rng: &mut R, m: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(m, m, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    a.qr().q()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(1.0_f64, |m, x| m.max(x.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn angles_are_ordered_and_bounded() {
    for e in builtin_catalog() {
        for s in snapshots(&e, 16) {
            assert!(
                s.angles.iter().all(|&c| (0.0..=1.0).contains(&c)),
                "{}: {:?}",
                e.name,
                s.angles
            );
            assert!(
                s.angles.windows(2).all(|w| w[0] >= w[1]),
                "{}: {:?}",
                e.name,
                s.angles
            );
            assert!(s.raw_max_cos <= 1.0 + 1e-10, "{}", e.name);
        }
    }
}

#[test]
fn complex_curvature_sum_is_frame_independent() {
    let mut rng = StdRng::seed_from_u64(3);
    let mut checked = 0;
    for e in builtin_catalog() {
        for s in snapshots(&e, 6) {
            let Ok(frame) = s.complex_frame() else {
                continue;
            };
            let base = s.complex_curvature_sum(&frame);
            for _ in 0..3 {
                let u = random_unitary(&mut rng, s.n);
                let rows: Vec<Vec<Complex64>> = (0..s.n)
                    .map(|i| u.row(i).iter().cloned().collect())
                    .collect();
                let other = s.complex_curvature_sum(&frame.rotated(&rows));
                assert!(
                    (other - base).norm() <= 1e-8 * (1.0 + base.norm()),
                    "{}: {base} vs {other}",
                    e.name
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

/// `F -> U F + b` for a unitary `U` acting on interleaved coordinates.
fn moved(spec: &ImmersionSpec, u: &DMatrix<Complex64>, b: &[f64]) -> ImmersionSpec {
    let m = u.nrows();
    let mut comps = Vec::with_capacity(2 * m);
    for j in 0..m {
        for part in 0..2 {
            let mut acc = Expr::num(b[2 * j + part]);
            for k in 0..m {
                let q = u[(j, k)];
                // Re w = Re q x - Im q y, Im w = Im q x + Re q y
                let (cx, cy) = if part == 0 {
                    (q.re, -q.im)
                } else {
                    (q.im, q.re)
                };
                for (c, comp) in [
                    (cx, &spec.components[2 * k]),
                    (cy, &spec.components[2 * k + 1]),
                ] {
                    acc = Expr::bin(
                        BinOp::Add,
                        acc,
                        Expr::bin(BinOp::Mul, Expr::num(c), comp.clone()),
                    );
                }
            }
            comps.push(acc);
        }
    }
    ImmersionSpec {
        components: comps,
        ..spec.clone()
    }
}

fn scalars(s: &Snapshot) -> Vec<f64> {
    let mut v = s.angles.clone();
    v.extend([
        s.h_norm2(),
        s.sff_norm2(),
        s.trace_hessian(&s.omega_norm2_field()),
        s.d_omega_defect(),
    ]);
    v.extend(s.g0.iter());
    v.extend(s.omega0.iter());
    v.extend(s.delta_omega0());
    v.extend(s.jh_top0());
    v.extend(s.riemann.iter());
    if let Ok(k) = s.kappa_field() {
        v.push(k.value());
    }
    v
}

#[test]
fn unitary_affine_motions_preserve_invariants() {
    let mut rng = StdRng::seed_from_u64(5);
    let mut checked = 0;
    for e in builtin_catalog() {
        let spec = e.spec();
        if !spec.ambient.is_flat() {
            continue;
        }
        let m = 2 * spec.n;
        let u = random_unitary(&mut rng, m);
        let b: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let other = moved(&spec, &u, &b);
        for p in halton_box(&e.domain, 4, 2) {
            let (Ok(s), Ok(t)) = (
                Snapshot::compute(&spec, &p, 3),
                Snapshot::compute(&other, &p, 3),
            ) else {
                continue;
            };
            let err = max_rel(&scalars(&s), &scalars(&t));
            assert!(err <= 1e-9, "{}: {err:e}", e.name);
            assert_eq!(s.classification, t.classification, "{}", e.name);
            checked += 1;
        }
    }
    assert!(checked > 60);
}

#[test]
fn trace_hessian_equals_divergence_of_gradient() {
    let mut rng = StdRng::seed_from_u64(9);
    for e in builtin_catalog() {
        for s in snapshots(&e, 4) {
            let f = common::smooth_expr(&mut rng, 3, s.d)
                .eval_jet(&common::seeds(&s.point, 3))
                .unwrap();
            let k = s.g_inv[0].order().min(f.order() - 1);
            let df: Vec<Jet> = (0..s.d).map(|j| f.diff(j).truncate(k)).collect();
            let grad: Vec<Jet> = (0..s.d)
                .map(|i| {
                    let mut acc = Jet::zero(s.d, k);
                    for (j, dj) in df.iter().enumerate() {
                        acc.add_mul(&s.g_inv[i * s.d + j].truncate(k), dj);
                    }
                    acc
                })
                .collect();
            let (lap, div) = (s.trace_hessian(&f), s.div(&grad));
            assert!(
                (lap - div).abs() <= 1e-9 * (1.0 + lap.abs()),
                "{}: {lap} vs {div}",
                e.name
            );
        }
    }
}

#[test]
fn gauss_equation_on_every_entry() {
    for e in builtin_catalog() {
        for s in snapshots(&e, 8) {
            let err = max_rel(&s.riemann, &s.gauss_curvature_tensor());
            assert!(err <= 1e-6, "{}: {err:e}", e.name);
        }
    }
}

#[test]
fn quaternionic_graph_angle_is_projected_rotation_length() {
    let mut rng = StdRng::seed_from_u64(13);
    let e = find_entry("quaternionic_graph").unwrap();
    for s in snapshots(&e, 16) {
        for _ in 0..4 {
            let x: Vec<f64> = (0..s.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: Vec<f64> = x.iter().map(|v| v / s.inner(&x, &x).sqrt()).collect();
            let jx = apply_j(&s.push(&x));
            let cov: Vec<f64> = (0..s.d)
                .map(|i| s.amb_inner(&jx, &s.e0.column(i).iter().cloned().collect::<Vec<_>>()))
                .collect();
            let top = s.raise(&cov);
            let len = s.inner(&top, &top).sqrt();
            assert!((len - s.angles[0]).abs() <= 1e-8, "{len} vs {:?}", s.angles);
        }
    }
}

#[test]
fn normal_angles_and_phi_norm() {
    for e in builtin_catalog() {
        for s in snapshots(&e, 4) {
            let Ok(nd) = s.normal_data() else { continue };
            for (a, b) in nd.normal_angles.iter().zip(&s.angles) {
                assert!(
                    (a - b).abs() <= 1e-8,
                    "{}: {:?} vs {:?}",
                    e.name,
                    nd.normal_angles,
                    s.angles
                );
            }
            let sin2: f64 = s.angles.iter().map(|c| 1.0 - c * c).sum();
            assert!(
                (nd.phi.norm_squared() - 2.0 * sin2).abs() <= 1e-8,
                "{}",
                e.name
            );
            assert!(
                (nd.xi.norm_squared() - 2.0 * sin2).abs() <= 1e-8,
                "{}",
                e.name
            );
        }
    }
}

#[test]
fn closed_form_examples() {
    let s = entry_snapshot("linear_n2_a0_5", &[0.1, -0.3, 0.7, 0.2]);
    assert!(s.h_norm2() <= 1e-20 && s.sff_norm2() <= 1e-20);
    assert!(s.riemann.iter().all(|r| r.abs() <= 1e-10));
    assert_eq!(s.classification, Classification::Generic);
    assert!(s.equal_angles());

    let s = entry_snapshot("lagrangian_torus_2", &[0.3, 1.9]);
    assert!((s.h_norm2().sqrt() - FRAC_1_SQRT_2).abs() <= 1e-12);
    assert_eq!(s.classification, Classification::Lagrangian);
    let jh = s.jh_top0();
    assert!((s.inner(&jh, &jh).sqrt() - FRAC_1_SQRT_2).abs() <= 1e-12);

    let s = entry_snapshot("complex_point_surface", &[0.0, 0.0]);
    assert_eq!(s.classification, Classification::Complex);
    let jh = s.jh_top0();
    assert!(s.h_norm2() > 1e-6 && s.inner(&jh, &jh).sqrt() <= 1e-12);

    let plane = parse_immersion("n = 1; ambient = flat; map = [u1, 0, u2, 0]").unwrap();
    let s = Snapshot::compute(&plane, &[0.4, -0.2], 3).unwrap();
    let f = parse_immersion("n = 1; ambient = flat; map = [u1^2 + u2^2, 0, 0, 0]")
        .unwrap()
        .components[0]
        .clone();
    let fj = f.eval_jet(&common::seeds(&s.point, 3)).unwrap();
    assert!((s.trace_hessian(&fj) - 4.0).abs() <= 1e-14);
    assert_eq!(s.trace_hessian(&Jet::constant(2, 3, 2.5)), 0.0);
}
