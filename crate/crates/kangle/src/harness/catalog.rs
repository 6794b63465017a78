//! Built-in example immersions with the properties each one must exhibit.

use std::f64::consts::{PI, SQRT_2};

use crate::dsl::{parse_immersion, ImmersionSpec};
use crate::geometry::Classification;

/// Properties asserted at every sampled point of an entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct Expected {
    pub minimal: bool,
    pub totally_geodesic: bool,
    /// `Some(true)` asserts equal angles; `None` marks a candidate whose
    /// equal-angle gate is measured and reported instead.
    pub equal_angles: Option<bool>,
    pub classification: Option<Classification>,
    /// Closed form of the common angle cosine.
    pub angle: Option<fn(&[f64]) -> f64>,
    pub angle_tol: f64,
    pub mean_curvature_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    pub text: String,
    /// Sampling box, one interval per domain coordinate.
    pub domain: Vec<(f64, f64)>,
    pub expected: Expected,
}

impl CatalogEntry {
    pub fn spec(&self) -> ImmersionSpec {
        let mut spec = parse_immersion(&self.text)
            .unwrap_or_else(|e| panic!("catalog entry {}: {e}", self.name));
        spec.name = self.name.clone();
        spec
    }
}

/// `cos = 2|a| / (1 + a^2)` for the linear graphs.
pub fn linear_cos(a: f64) -> f64 {
    2.0 * a.abs() / (1.0 + a * a)
}

fn q_ds(u: &[f64]) -> f64 {
    (u[0] + u[2]).cos().powi(2) + (u[1] + u[3]).sinh().powi(2)
}

/// Angle cosine of the four-dimensional minimal graph, computed from its
/// Kähler form.
pub fn minimal_graph_cos(u: &[f64]) -> f64 {
    let q = q_ds(u);
    2.0 * q.sqrt() / (1.0 + 4.0 * q).sqrt()
}

/// The closed form printed for the same graph in the literature, which
/// differs from [`minimal_graph_cos`] by the missing square root in the denominator.
pub fn minimal_graph_cos_published(u: &[f64]) -> f64 {
    let q = q_ds(u);
    2.0 * q.sqrt() / (1.0 + 4.0 * q)
}

fn box_of(d: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    vec![(lo, hi); d]
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

/// `F(X) = (X, a J X)` with the coordinates interleaved.
fn linear_text(n: usize, a: f64, scale: f64, ambient: &str) -> String {
    let mut comps = Vec::new();
    for k in 0..2 * n {
        let (sign, var) = if k % 2 == 0 { (-1.0, k + 2) } else { (1.0, k) };
        comps.push(format!("{}*u{}", fmt_num(scale), k + 1));
        comps.push(format!("{}*u{var}", fmt_num(sign * a * scale)));
    }
    format!(
        "n = {n};\nambient = {ambient};\nmap = [{}]\n",
        comps.join(", ")
    )
}

fn linear_angle<const K: usize>(_: &[f64]) -> f64 {
    linear_cos(LINEAR_A[K])
}

const LINEAR_A: [f64; 5] = [0.0, 0.25, 0.5, 1.0, 2.0];
const LINEAR_A_NAMES: [&str; 5] = ["0", "0_25", "0_5", "1", "2"];
const LINEAR_ANGLES: [fn(&[f64]) -> f64; 5] = [
    linear_angle::<0>,
    linear_angle::<1>,
    linear_angle::<2>,
    linear_angle::<3>,
    linear_angle::<4>,
];

const TRIG_A: &str = "cos(u1) + 0.3*sin(u2)*cos(u1), sin(u1) + 0.2*cos(2*u2), cos(u2) + 0.25*sin(u1 + u2), sin(u2) - 0.1*cos(u1)";
const TRIG_B: &str = "cos(u1) + 0.2*sin(u2), sin(u1) - 0.15*cos(u1 + u2), cos(u2) + 0.1*sin(2*u1), sin(u2) + 0.25*cos(u1)";

fn scaled(list: &str, s: f64) -> String {
    list.split(", ")
        .map(|c| format!("{}*({c})", fmt_num(s)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn shift_vars(list: &str, by: usize) -> String {
    list.replace("u2", "u#2")
        .replace("u1", &format!("u{}", 1 + by))
        .replace("u#2", &format!("u{}", 2 + by))
}

fn spiral(a: &str, b: &str) -> String {
    format!("exp({a})*cos({a})*cos({b}), exp({a})*cos({a})*sin({b}), exp({a})*sin({a})*cos({b}), exp({a})*sin({a})*sin({b})")
}

fn zero(_: &[f64]) -> f64 {
    0.0
}

fn one(_: &[f64]) -> f64 {
    1.0
}

fn half_sqrt2(_: &[f64]) -> f64 {
    SQRT_2 / 2.0
}

fn entry(
    name: &str,
    description: &str,
    text: String,
    domain: Vec<(f64, f64)>,
    expected: Expected,
) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        description: description.into(),
        text,
        domain,
        expected,
    }
}

/// Every built-in entry, in report order.
pub fn builtin_catalog() -> Vec<CatalogEntry> {
    let two_pi = 2.0 * PI;
    let mut out = Vec::new();
    for n in 1..=3 {
        for (k, &a) in LINEAR_A.iter().enumerate() {
            let class = if a == 0.0 {
                Classification::Lagrangian
            } else if a == 1.0 {
                Classification::Complex
            } else {
                Classification::Generic
            };
            out.push(entry(
                &format!("linear_n{n}_a{}", LINEAR_A_NAMES[k]),
                "linear graph X -> (X, aJX) with constant equal angles",
                linear_text(n, a, 1.0, "flat"),
                box_of(2 * n, -1.0, 1.0),
                Expected {
                    minimal: true,
                    totally_geodesic: true,
                    equal_angles: Some(true),
                    classification: Some(class),
                    angle: Some(LINEAR_ANGLES[k]),
                    angle_tol: 1e-12,
                    mean_curvature_norm: None,
                },
            ));
        }
    }
    out.push(entry(
        "minimal_graph",
        "minimal graph in C^4 with equal angles and a discrete Lagrangian locus",
        "n = 2;\nambient = flat;\nmap = [u1, sin(u1 + u3)*cosh(u2 + u4), u2, -cos(u1 + u3)*sinh(u2 + u4), u3, -(sin(u1 + u3)*cosh(u2 + u4)), u4, cos(u1 + u3)*sinh(u2 + u4)]\n".into(),
        box_of(4, -1.0, 1.0),
        Expected { minimal: true, equal_angles: Some(true), angle: Some(minimal_graph_cos), angle_tol: 1e-9, ..Expected::default() },
    ));
    out.push(entry(
        "real_plane_2",
        "real plane in C^2",
        "n = 1;\nambient = flat;\nmap = [u1, 0, u2, 0]\n".into(),
        box_of(2, -1.0, 1.0),
        Expected {
            minimal: true,
            totally_geodesic: true,
            equal_angles: Some(true),
            classification: Some(Classification::Lagrangian),
            angle: Some(zero),
            angle_tol: 1e-12,
            ..Expected::default()
        },
    ));
    out.push(entry(
        "real_plane_4",
        "real 4-plane in C^4",
        "n = 2;\nambient = flat;\nmap = [u1, 0, u2, 0, u3, 0, u4, 0]\n".into(),
        box_of(4, -1.0, 1.0),
        Expected {
            minimal: true,
            totally_geodesic: true,
            equal_angles: Some(true),
            classification: Some(Classification::Lagrangian),
            angle: Some(zero),
            angle_tol: 1e-12,
            ..Expected::default()
        },
    ));
    out.push(entry(
        "real_plane_4_hyperbolic",
        "real 4-plane through the origin of the complex hyperbolic chart",
        "n = 2;\nambient = space_form(-1);\nmap = [0.4*u1, 0, 0.4*u2, 0, 0.4*u3, 0, 0.4*u4, 0]\n"
            .into(),
        box_of(4, -1.0, 1.0),
        Expected {
            equal_angles: Some(true),
            classification: Some(Classification::Lagrangian),
            angle: Some(zero),
            angle_tol: 1e-12,
            ..Expected::default()
        },
    ));
    out.push(entry(
        "lagrangian_torus_2",
        "product of two unit circles in C^2",
        "n = 1;\nambient = flat;\nperiodic;\nmap = [cos(u1), sin(u1), cos(u2), sin(u2)]\n".into(),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            classification: Some(Classification::Lagrangian),
            angle: Some(zero),
            angle_tol: 1e-12,
            mean_curvature_norm: Some(SQRT_2 / 2.0),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "lagrangian_torus_4",
        "product of four unit circles in C^4",
        "n = 2;\nambient = flat;\nperiodic;\nmap = [cos(u1), sin(u1), cos(u2), sin(u2), cos(u3), sin(u3), cos(u4), sin(u4)]\n".into(),
        box_of(4, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            classification: Some(Classification::Lagrangian),
            angle: Some(zero),
            angle_tol: 1e-12,
            mean_curvature_norm: Some(0.5),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "holo_graph_2",
        "graph of z -> z^2 + 0.3z in C^2",
        "n = 1;\nambient = flat;\nmap = [u1, u2, u1^2 - u2^2 + 0.3*u1, 2*u1*u2 + 0.3*u2]\n".into(),
        box_of(2, -1.0, 1.0),
        Expected {
            minimal: true,
            equal_angles: Some(true),
            classification: Some(Classification::Complex),
            angle: Some(one),
            angle_tol: 1e-9,
            ..Expected::default()
        },
    ));
    out.push(entry(
        "holo_graph_4",
        "graph of (z1, z2) -> (z1 z2, exp(z1/2)) in C^4",
        "n = 2;\nambient = flat;\nmap = [u1, u2, u3, u4, u1*u3 - u2*u4, u1*u4 + u2*u3, exp(0.5*u1)*cos(0.5*u2), exp(0.5*u1)*sin(0.5*u2)]\n".into(),
        box_of(4, -1.0, 1.0),
        Expected {
            minimal: true,
            equal_angles: Some(true),
            classification: Some(Classification::Complex),
            angle: Some(one),
            angle_tol: 1e-9,
            ..Expected::default()
        },
    ));
    out.push(entry(
        "complex_point_surface",
        "surface in C^2 with an isolated complex point at the origin",
        "n = 1;\nambient = flat;\nmap = [u1, u2, 0.5*(u1^2 + u2^2), 0]\n".into(),
        box_of(2, -1.0, 1.0),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "trig_surface_flat",
        "periodic trigonometric surface in C^2",
        format!("n = 1;\nambient = flat;\nperiodic;\nmap = [{TRIG_A}]\n"),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "trig_surface_b_flat",
        "second periodic trigonometric surface in C^2",
        format!("n = 1;\nambient = flat;\nperiodic;\nmap = [{TRIG_B}]\n"),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "trig_surface_sphere",
        "scaled periodic surface in the complex projective chart",
        format!(
            "n = 1;\nambient = space_form(1);\nperiodic;\nmap = [{}]\n",
            scaled(TRIG_A, 0.3)
        ),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "trig_surface_hyperbolic",
        "scaled periodic surface in the complex hyperbolic chart",
        format!(
            "n = 1;\nambient = space_form(-1);\nperiodic;\nmap = [{}]\n",
            scaled(TRIG_A, 0.3)
        ),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "trig_surface_b_sphere",
        "second scaled periodic surface in the complex projective chart",
        format!(
            "n = 1;\nambient = space_form(1);\nperiodic;\nmap = [{}]\n",
            scaled(TRIG_B, 0.3)
        ),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "trig_surface_b_hyperbolic",
        "second scaled periodic surface in the complex hyperbolic chart",
        format!(
            "n = 1;\nambient = space_form(-1);\nperiodic;\nmap = [{}]\n",
            scaled(TRIG_B, 0.3)
        ),
        box_of(2, 0.0, two_pi),
        Expected {
            equal_angles: Some(true),
            ..Expected::default()
        },
    ));
    out.push(entry(
        "quaternionic_graph",
        "graph of a map holomorphic for a second complex structure of the quaternionic C^4",
        "n = 2;\nambient = flat;\nmap = [u1, u3, u2, -u4, 0.3*(u1*u3 - u2*u4) + 0.2*(u1^2 - u2^2), 0.25*exp(0.5*u1)*cos(0.5*u2) - 0.1*(u3^2 - u4^2), 0.3*(u1*u4 + u2*u3) + 0.4*u1*u2, -(0.25*exp(0.5*u1)*sin(0.5*u2) - 0.2*u3*u4)]\n".into(),
        box_of(4, -1.0, 1.0),
        Expected { minimal: true, equal_angles: Some(true), ..Expected::default() },
    ));
    out.push(entry(
        "quaternionic_antiholomorphic_graph",
        "candidate: the same permutation applied to an antiholomorphic graph",
        "n = 2;\nambient = flat;\nmap = [u1, u3, u2, -u4, 0.3*(u1*u3 - u2*u4) + 0.2*(u1^2 - u2^2), 0.25*exp(0.5*u1)*cos(0.5*u2) - 0.1*(u3^2 - u4^2), -(0.3*(u1*u4 + u2*u3) + 0.4*u1*u2), 0.25*exp(0.5*u1)*sin(0.5*u2) - 0.2*u3*u4]\n".into(),
        box_of(4, -1.0, 1.0),
        Expected::default(),
    ));
    out.push(entry(
        "slant_product",
        "product of two logarithmic-spiral cones with the same constant angle",
        format!(
            "n = 2;\nambient = flat;\nmap = [{}, {}]\n",
            spiral("u1", "u2"),
            spiral("u3", "u4")
        ),
        box_of(4, -0.5, 0.5),
        Expected {
            equal_angles: Some(true),
            angle: Some(half_sqrt2),
            angle_tol: 1e-9,
            ..Expected::default()
        },
    ));
    out.push(entry(
        "periodic_product_4",
        "product of the two periodic trigonometric surfaces in C^4",
        format!(
            "n = 2;\nambient = flat;\nperiodic;\nmap = [{TRIG_A}, {}]\n",
            shift_vars(TRIG_B, 2)
        ),
        box_of(4, 0.0, two_pi),
        Expected::default(),
    ));
    for (name, rho) in [("sphere", "1"), ("hyperbolic", "-1")] {
        out.push(entry(
            &format!("linear_n2_a0_5_{name}"),
            "candidate: scaled linear graph in a curved chart",
            linear_text(2, 0.5, 0.3, &format!("space_form({rho})")),
            box_of(4, -1.0, 1.0),
            Expected::default(),
        ));
    }
    out
}

/// Older names still accepted on lookup. They are not listed by `catalog`.
const ALIASES: [(&str, &str); 1] = [("ds_graph", "minimal_graph")];

pub fn find_entry(name: &str) -> Option<CatalogEntry> {
    let name = ALIASES
        .iter()
        .find(|(old, _)| *old == name)
        .map_or(name, |(_, new)| new);
    builtin_catalog().into_iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::print_immersion;

    #[test]
    fn entries_parse_and_round_trip() {
        for e in builtin_catalog() {
            let spec = e.spec();
            assert_eq!(e.domain.len(), spec.domain_dim(), "{}", e.name);
            let again = parse_immersion(&print_immersion(&spec)).unwrap();
            assert_eq!(again.components, spec.components, "{}", e.name);
        }
    }

    #[test]
    fn aliases_resolve() {
        for (old, new) in ALIASES {
            assert_eq!(find_entry(old).unwrap().name, new);
        }
        assert!(find_entry("no_such_entry").is_none());
    }

    #[test]
    fn names_are_unique() {
        let cat = builtin_catalog();
        let mut names: Vec<&str> = cat.iter().map(|e| e.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), cat.len());
    }
}
