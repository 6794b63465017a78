//! Pointwise identities as residual records over a [`Snapshot`].
//!
//! Each record compares a left and a right side (scalars or small tensors
//! flattened row-major). A record is asserted only when the point lies in the
//! identity's domain of validity; otherwise it is kept as non-applicable with
//! the gating reason.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::ambient::apply_j;
use crate::dsl::parse_immersion;
use crate::geometry::{contract3, ComplexFrame, GeometryError, Snapshot, TAU_EQ, TAU_L};
use crate::jets::Jet;

/// Distance to the Lagrangian or complex locus below which identities with
/// `1/sin^2` or `1/cos` factors are skipped.
pub const NEAR_GATE: f64 = 1e-4;
/// Largest Taylor coefficient of `A^2 + cos^2 I` for the equal-angle
/// neighbourhood test.
pub const EQ_JET_TOL: f64 = 1e-8;
/// Largest non-constant Taylor coefficient of `cos^2` for constant angle.
pub const CONST_ANGLE_TOL: f64 = 1e-9;
/// Largest entry of the normal derivative of `H` for parallel mean curvature.
pub const PARALLEL_H_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            abs: 1e-7,
            rel: 1e-5,
        }
    }
}

/// Sign conventions fixed by calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conventions {
    /// Function Laplacian is `laplacian_sign * trace Hess`.
    pub laplacian_sign: f64,
    /// Codifferential is `delta_sign * (-trace nabla)`.
    pub delta_sign: f64,
    /// Inner product on 2-forms.
    pub form_norm: &'static str,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            laplacian_sign: 1.0,
            delta_sign: 1.0,
            form_norm: "half_sum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResidual {
    pub id: String,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub abs_residual: f64,
    pub rel_residual: f64,
    /// Magnitude of the largest term, used for the relative residual.
    pub scale: f64,
    pub applicable: bool,
    pub reason: Option<String>,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub pass: bool,
}

impl IdentityResidual {
    pub fn new(
        id: &str,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        terms: &[f64],
        tol: Tolerances,
    ) -> IdentityResidual {
        assert_eq!(lhs.len(), rhs.len(), "identity {id}: side lengths differ");
        let abs = lhs
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let abs = if lhs.iter().chain(&rhs).any(|x| !x.is_finite()) {
            f64::INFINITY
        } else {
            abs
        };
        let scale = lhs
            .iter()
            .chain(&rhs)
            .chain(terms)
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        let rel = if abs == 0.0 {
            0.0
        } else if scale > 0.0 {
            abs / scale
        } else {
            f64::INFINITY
        };
        let pass = abs <= tol.abs || rel <= tol.rel;
        IdentityResidual {
            id: id.to_string(),
            lhs,
            rhs,
            abs_residual: abs,
            rel_residual: rel,
            scale,
            applicable: true,
            reason: None,
            tol_abs: tol.abs,
            tol_rel: tol.rel,
            pass,
        }
    }

    pub fn skipped(id: &str, reason: impl Into<String>, tol: Tolerances) -> IdentityResidual {
        IdentityResidual {
            id: id.to_string(),
            lhs: vec![],
            rhs: vec![],
            abs_residual: 0.0,
            rel_residual: 0.0,
            scale: 0.0,
            applicable: false,
            reason: Some(reason.into()),
            tol_abs: tol.abs,
            tol_rel: tol.rel,
            pass: false,
        }
    }
}

/// A named pointwise quantity that is reported but not asserted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub id: String,
    pub value: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Evaluation {
    pub residuals: Vec<IdentityResidual>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Suite names accepted by [`evaluate`], in report order.
pub const SUITES: [&str; 12] = [
    "kahler_form",
    "mean_curvature",
    "kappa",
    "weitzenboeck",
    "cos2_laplacian",
    "four_dim",
    "sigma",
    "jh",
    "normal",
    "gauss",
    "structure",
    "hypothesis",
];

/// Every identity id with a one-line description.
pub const IDENTITY_IDS: [(&str, &str); 44] = [
    ("kahler_form.norm", "|F*w|^2 = n cos^2"),
    (
        "kahler_form.gradient_norm",
        "|nabla F*w|^2 = n |grad cos|^2 + cos^2 |nabla J_w|^2 / 2",
    ),
    (
        "kahler_form.codifferential",
        "(delta F*w)^# = (n-2) J_w grad cos",
    ),
    (
        "kahler_form.codifferential_norm",
        "|delta F*w|^2 = (n-2)^2 |grad cos|^2",
    ),
    (
        "kahler_form.polar_codifferential",
        "cos delta J_w = (n-1) J_w grad cos",
    ),
    (
        "kahler_form.sin2_gradient",
        "(1-n) grad sin^2 as a complex-frame sum of nabla dF",
    ),
    (
        "mean_curvature.derivative_split",
        "g(nabla_X H, J dF Y) = -g(nabla_X V, Y) - g(H, J nabla dF(X,Y))",
    ),
    (
        "mean_curvature.derivative_normal",
        "g(nabla_X H, J dF Y) = -g(H, nabla dF(X, A Y)) + g(nabla^perp_X H, J dF Y)",
    ),
    (
        "mean_curvature.jh_complex_sum",
        "J_w V / 2 as a complex-frame sum of g(H, J dF Z)",
    ),
    (
        "mean_curvature.chain",
        "equal forms of the mean curvature term in the kappa Laplacian",
    ),
    (
        "mean_curvature.chain_polar",
        "the same term as a divergence of J_w (JH)^T plus a codifferential pairing",
    ),
    (
        "mean_curvature.divergence",
        "div V = -4 Re sum g(nabla^perp_Z H, J dF conj Z)",
    ),
    (
        "kappa.laplacian_curvature",
        "Laplacian of kappa, curvature and mean curvature form",
    ),
    (
        "kappa.laplacian_divergence",
        "Laplacian of kappa, divergence form",
    ),
    ("kappa.surface", "Laplacian of kappa for surfaces"),
    ("kappa.surface_polar_coclosed", "delta J_w = 0 for surfaces"),
    (
        "weitzenboeck.formula",
        "Bochner-Weitzenböck formula for F*w",
    ),
    (
        "weitzenboeck.curvature_term",
        "<S F*w, F*w> = 16 cos^2 sum R(Z,Z,conj Z,conj Z)",
    ),
    ("cos2_laplacian.formula", "n Laplacian of cos^2"),
    (
        "cos2_laplacian.last_term_form",
        "last term as 8 F*w(V, grad log sin^2) (n = 2)",
    ),
    (
        "cos2_laplacian.last_term_codifferential",
        "last term through delta F*w (n >= 3)",
    ),
    (
        "four_dim.scalar_balance",
        "sin^2 cos^2 R = -2 div(A V) + 2 F*w(V, grad log sin^2) (n = 2)",
    ),
    (
        "four_dim.parallel_h_balance",
        "sin^4 cos^2 R + 8 sin^2 cos^2 |H|^2 = 2 F*w(V, grad sin^2), parallel H (n = 2)",
    ),
    (
        "four_dim.general_balance",
        "the same balance with the normal derivative term of H (n = 2)",
    ),
    ("sigma.trace_form", "two expressions of sigma agree"),
    ("sigma.exterior_derivative", "d sigma = R F*w"),
    (
        "sigma.constant_angle_chain",
        "R cos sin^2 = 2 sum dV(X,Y) = -4n cos |H|^2 - 8 Im sum g(nabla^perp H, J dF conj Z)",
    ),
    (
        "sigma.parallel",
        "nabla sigma = 0 for parallel nonzero H with R = 0",
    ),
    ("jh.closed", "d V_flat = 0 on Lagrangian neighbourhoods"),
    (
        "jh.parallel_on_lagrangian",
        "nabla V = 0 at Lagrangian points when H is parallel",
    ),
    ("normal.angles", "normal bundle angles equal tangent angles"),
    ("normal.phi_norm", "|Phi|^2 = 2 sum sin^2"),
    ("normal.xi_norm", "|Xi|^2 = 2 sum sin^2"),
    ("normal.xi_phi", "-Xi Phi = Id + A^2"),
    ("normal.phi_xi", "-Phi Xi = Id + (omega^perp)^2"),
    (
        "normal.intertwine",
        "J^perp Phi = -Phi J_w and J_w Xi = -Xi J^perp",
    ),
    ("normal.phi_metric", "g(Phi X, Phi Y) = sin^2 g(X, Y)"),
    ("normal.jh_complex_point", "V = 0 at complex points"),
    (
        "gauss.equation",
        "R^M from Christoffel symbols equals the Gauss equation",
    ),
    ("structure.form_closed", "d F*w = 0"),
    ("structure.sff_normal", "nabla dF is normal"),
    (
        "structure.laplacian_divergence",
        "trace Hess f = div grad f",
    ),
    (
        "structure.polar_field",
        "jet J_w agrees with the pointwise polar factor",
    ),
    (
        "structure.polar_square",
        "J_w^2 = -Id on the complement of its kernel",
    ),
];

#[derive(Debug, Error)]
pub enum ConventionError {
    #[error("no sign convention closes the calibration identities")]
    NoneClose,
    #[error("{0} sign conventions close the calibration identities")]
    Multiple(usize),
    #[error("calibration surface failed: {0}")]
    Geometry(#[from] GeometryError),
}

fn jc(v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

fn cvec(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn mat_cvec(m: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| v[c] * m[(r, c)]).sum())
        .collect()
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum())
        .collect()
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Quantities shared by several identities at one point.
struct Ctx<'a> {
    s: &'a Snapshot,
    conv: Conventions,
    tol: Tolerances,
    n: f64,
    r: f64,
    c: f64,
    s2: f64,
    equal: Result<(), String>,
    eq_defect: f64,
    j_field: Option<Vec<Jet>>,
    frame: Option<ComplexFrame>,
    grad_c2: Vec<f64>,
    grad_c: Option<Vec<f64>>,
    v: Vec<f64>,
    v_flat: Vec<f64>,
    h: Vec<f64>,
    h2: f64,
    nabla_h: DMatrix<f64>,
    nabla_perp_h: DMatrix<f64>,
    nabla_omega_norm: f64,
    soo: f64,
}

impl<'a> Ctx<'a> {
    fn new(s: &'a Snapshot, conv: Conventions, tol: Tolerances) -> Ctx<'a> {
        let c = s.c0();
        let eq_defect = equal_angle_jet_defect(s);
        let equal = if s.angle_spread() > TAU_EQ {
            Err(format!(
                "angles not equal (spread {:.3e})",
                s.angle_spread()
            ))
        } else if eq_defect > EQ_JET_TOL {
            Err(format!(
                "angles not equal in a neighbourhood (jet defect {eq_defect:.3e})"
            ))
        } else {
            Ok(())
        };
        let j_field = s.j_field().ok();
        let frame = s.complex_frame().ok();
        let grad_c2 = s.grad(&s.c2);
        let grad_c = if c > TAU_L {
            Some(grad_c2.iter().map(|x| x / (2.0 * c)).collect())
        } else {
            None
        };
        let h = s.h0();
        let h2 = s.amb_inner(&h, &h);
        let om: Vec<Jet> = s.omega.clone();
        let n_om = s.nabla_2form(&om);
        let d = s.d;
        let mut non = 0.0;
        for l in 0..d {
            for m in 0..d {
                for i in 0..d {
                    for a in 0..d {
                        for j in 0..d {
                            for b in 0..d {
                                let w = s.g_inv0[(l, m)] * s.g_inv0[(i, a)] * s.g_inv0[(j, b)];
                                if w != 0.0 {
                                    non +=
                                        w * n_om[(l * d + i) * d + j] * n_om[(m * d + a) * d + b];
                                }
                            }
                        }
                    }
                }
            }
        }
        let soo = s.weitzenboeck_term(&s.omega0);
        Ctx {
            s,
            conv,
            tol,
            n: s.n as f64,
            r: s.ambient.einstein_constant(),
            c,
            s2: 1.0 - c * c,
            equal,
            eq_defect,
            j_field,
            frame,
            grad_c2,
            grad_c,
            v: s.jh_top0(),
            v_flat: s.jh_flat0(),
            h,
            h2,
            nabla_h: s.nabla_h(),
            nabla_perp_h: s.nabla_perp_h(),
            nabla_omega_norm: 0.5 * non,
            soo,
        }
    }

    fn rec(&self, id: &str, lhs: Vec<f64>, rhs: Vec<f64>, terms: &[f64]) -> IdentityResidual {
        IdentityResidual::new(id, lhs, rhs, terms, self.tol)
    }

    fn skip(&self, id: &str, reason: impl Into<String>) -> IdentityResidual {
        IdentityResidual::skipped(id, reason, self.tol)
    }

    fn lap(&self, f: &Jet) -> f64 {
        self.conv.laplacian_sign * self.s.trace_hessian(f)
    }

    fn delta_omega(&self) -> Vec<f64> {
        self.s
            .delta_omega0()
            .iter()
            .map(|x| self.conv.delta_sign * x)
            .collect()
    }

    fn delta_j(&self) -> Option<Vec<f64>> {
        self.j_field.as_ref().map(|j| {
            self.s
                .codiff_11(j)
                .iter()
                .map(|x| self.conv.delta_sign * x)
                .collect()
        })
    }

    fn j0(&self) -> DMatrix<f64> {
        match &self.j_field {
            Some(j) => DMatrix::from_fn(self.s.d, self.s.d, |k, i| j[k * self.s.d + i].value()),
            None => self.s.j_point.clone(),
        }
    }

    fn nabla_j_norm(&self) -> Option<f64> {
        let j = self.j_field.as_ref()?;
        let s = self.s;
        let d = s.d;
        let nj = s.nabla_11(j);
        let mut t = 0.0;
        for l in 0..d {
            for m in 0..d {
                for k in 0..d {
                    for p in 0..d {
                        for i in 0..d {
                            for q in 0..d {
                                let w = s.g_inv0[(l, m)] * s.g0[(k, p)] * s.g_inv0[(i, q)];
                                if w != 0.0 {
                                    t += w * nj[(l * d + k) * d + i] * nj[(m * d + p) * d + q];
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(t)
    }

    fn norm2(&self, v: &[f64]) -> f64 {
        self.s.inner(v, v)
    }

    /// Off the Lagrangian locus with the near-gate buffer.
    fn off_l(&self) -> Result<(), String> {
        if self.c < NEAR_GATE {
            Err(format!("near the Lagrangian locus (cos {:.3e})", self.c))
        } else {
            Ok(())
        }
    }

    fn off_c(&self) -> Result<(), String> {
        if self.c > 1.0 - NEAR_GATE {
            Err(format!("near the complex locus (cos {:.6})", self.c))
        } else {
            Ok(())
        }
    }

    fn frame(&self) -> Result<&ComplexFrame, String> {
        self.frame
            .as_ref()
            .ok_or_else(|| "no Hermitian frame for J_w at this point".to_string())
    }

    fn constant_angle(&self) -> Result<(), String> {
        let c = self.s.c2.coeffs();
        let m = max_abs(&c[1..]);
        if m > CONST_ANGLE_TOL {
            Err(format!("angle not constant (jet {m:.3e})"))
        } else {
            Ok(())
        }
    }

    fn lagrangian_nbhd(&self) -> Result<(), String> {
        let m = max_abs(self.s.c2.coeffs());
        if m > TAU_L * TAU_L {
            Err(format!(
                "not Lagrangian in a neighbourhood (cos^2 jet {m:.3e})"
            ))
        } else {
            Ok(())
        }
    }

    fn parallel_h(&self) -> Result<(), String> {
        let m = self.nabla_perp_h.abs().max();
        if m > PARALLEL_H_TOL {
            Err(format!(
                "mean curvature not parallel (|nabla^perp H| {m:.3e})"
            ))
        } else {
            Ok(())
        }
    }

    /// `sum_m (i g(nabla_Z H, J dF conj Z) - i g(nabla_conj Z H, J dF Z))`.
    fn t_h(&self, f: &ComplexFrame) -> f64 {
        let s = self.s;
        let i = Complex64::new(0.0, 1.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..s.n {
            let z = &f.z[m];
            let zb = f.zbar(m);
            let a = s.amb_inner_c(&mat_cvec(&self.nabla_h, z), &jc(&s.push_c(&zb)));
            let b = s.amb_inner_c(&mat_cvec(&self.nabla_h, &zb), &jc(&s.push_c(z)));
            acc += i * a - i * b;
        }
        acc.re
    }

    /// `sum_m g(nabla^perp_Z H, J dF conj Z)`.
    fn t_perp(&self, f: &ComplexFrame) -> Complex64 {
        let s = self.s;
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..s.n {
            let zb = f.zbar(m);
            acc += s.amb_inner_c(&mat_cvec(&self.nabla_perp_h, &f.z[m]), &jc(&s.push_c(&zb)));
        }
        acc
    }

    fn sum_r(&self, f: &ComplexFrame) -> f64 {
        self.s.complex_curvature_sum(f).re
    }

    fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.s.d;
        let mut t = 0.0;
        for i in 0..d {
            for j in 0..d {
                t += x[i] * self.s.omega0[(i, j)] * y[j];
            }
        }
        t
    }
}

/// Largest Taylor coefficient of `A^2 + (|F*w|^2/n) Id`, which vanishes to
/// the jet order exactly when the angles stay equal near the point.
pub fn equal_angle_jet_defect(s: &Snapshot) -> f64 {
    let d = s.d;
    let mut m: f64 = 0.0;
    for k in 0..d {
        for i in 0..d {
            let mut e = if k == i {
                s.c2.clone()
            } else {
                Jet::zero(d, s.order - 1)
            };
            for j in 0..d {
                e.add_mul(&s.sharp[k * d + j], &s.sharp[j * d + i]);
            }
            m = m.max(max_abs(e.coeffs()));
        }
    }
    m
}

fn gate<T>(
    ctx: &Ctx,
    id: &str,
    conds: &[Result<(), String>],
    f: impl FnOnce() -> T,
) -> Result<T, IdentityResidual> {
    for c in conds {
        if let Err(r) = c {
            return Err(ctx.skip(id, r.clone()));
        }
    }
    Ok(f())
}

fn need_n(n: usize, ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(format!("requires {what}, n = {n}"))
    }
}

fn kahler_form(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let n = ctx.n;
    let r = &mut out.residuals;
    // norm
    r.push(
        gate(ctx, "kahler_form.norm", &[ctx.equal.clone()], || {
            let lhs = s.form_inner(&s.omega0, &s.omega0);
            let rhs = n * s.angles[0] * s.angles[0];
            ctx.rec("kahler_form.norm", vec![lhs], vec![rhs], &[])
        })
        .unwrap_or_else(|e| e),
    );
    // gradient norm
    let id = "kahler_form.gradient_norm";
    r.push(match (&ctx.grad_c, ctx.nabla_j_norm()) {
        (Some(gc), Some(nj)) => gate(
            ctx,
            id,
            &[ctx.equal.clone(), ctx.off_l(), ctx.off_c()],
            || {
                let a = n * ctx.norm2(gc);
                let b = 0.5 * ctx.c * ctx.c * nj;
                ctx.rec(id, vec![ctx.nabla_omega_norm], vec![a + b], &[a, b])
            },
        )
        .unwrap_or_else(|e| e),
        _ => ctx.skip(id, "Lagrangian point"),
    });
    let j0 = ctx.j0();
    let dom = ctx.delta_omega();
    let id = "kahler_form.codifferential";
    r.push(match &ctx.grad_c {
        Some(gc) => gate(ctx, id, &[ctx.equal.clone(), ctx.off_l()], || {
            let lhs = s.raise(&dom);
            let jg = mat_vec(&j0, gc);
            let rhs: Vec<f64> = jg.iter().map(|x| (n - 2.0) * x).collect();
            ctx.rec(id, lhs, rhs, &jg)
        })
        .unwrap_or_else(|e| e),
        None => ctx.skip(id, "Lagrangian point"),
    });
    let id = "kahler_form.codifferential_norm";
    r.push(match &ctx.grad_c {
        Some(gc) => gate(ctx, id, &[ctx.equal.clone(), ctx.off_l()], || {
            let lhs = ctx.norm2(&s.raise(&dom));
            let g2 = ctx.norm2(gc);
            ctx.rec(id, vec![lhs], vec![(n - 2.0) * (n - 2.0) * g2], &[g2])
        })
        .unwrap_or_else(|e| e),
        None => ctx.skip(id, "Lagrangian point"),
    });
    let id = "kahler_form.polar_codifferential";
    r.push(match (&ctx.grad_c, ctx.delta_j()) {
        (Some(gc), Some(dj)) => gate(ctx, id, &[ctx.equal.clone(), ctx.off_l()], || {
            let lhs: Vec<f64> = dj.iter().map(|x| ctx.c * x).collect();
            let jg = mat_vec(&j0, gc);
            let rhs: Vec<f64> = jg.iter().map(|x| (n - 1.0) * x).collect();
            ctx.rec(id, lhs, rhs, &jg)
        })
        .unwrap_or_else(|e| e),
        _ => ctx.skip(id, "Lagrangian point"),
    });
    let id = "kahler_form.sin2_gradient";
    r.push(
        gate(
            ctx,
            id,
            &[
                ctx.equal.clone(),
                ctx.off_l(),
                ctx.off_c(),
                ctx.frame().map(|_| ()),
            ],
            || {
                let f = ctx.frame().expect("gated");
                let t = s.sff_j_tensor();
                let d = s.d;
                let mut acc = vec![Complex64::new(0.0, 0.0); d];
                let mut terms = Vec::new();
                for b in 0..s.n {
                    let zbb = f.zbar(b);
                    for m in 0..s.n {
                        let zbm = f.zbar(m);
                        let x = contract3(&t, d, &zbm, &f.z[m], &f.z[b]);
                        let y = contract3(&t, d, &zbm, &f.z[b], &f.z[m]);
                        terms.push(16.0 * ctx.c * x.norm());
                        terms.push(16.0 * ctx.c * y.norm());
                        for k in 0..d {
                            acc[k] += (x - y) * zbb[k];
                        }
                    }
                }
                let i = Complex64::new(0.0, 1.0);
                let rhs: Vec<f64> = acc.iter().map(|a| 16.0 * ctx.c * (i * a).re).collect();
                let lhs: Vec<f64> = ctx.grad_c2.iter().map(|x| (1.0 - n) * -x).collect();
                ctx.rec(id, lhs, rhs, &terms)
            },
        )
        .unwrap_or_else(|e| e),
    );
    // the C in |grad sin^2|^2 <= C cos^2 sin^2 |(nabla dF)^(1,1)|^2
    let ratio = if ctx.equal.is_ok() && ctx.off_l().is_ok() && ctx.off_c().is_ok() {
        let b11 = sff_11_norm2(s, &j0);
        let num = ctx.norm2(&ctx.grad_c2);
        let den = ctx.c * ctx.c * ctx.s2 * b11;
        if den > 1e-300 {
            Diagnostic {
                id: "kahler_form.sin2_gradient_bound_ratio".into(),
                value: Some(num / den),
                reason: None,
            }
        } else {
            Diagnostic {
                id: "kahler_form.sin2_gradient_bound_ratio".into(),
                value: None,
                reason: Some("(1,1) part vanishes".into()),
            }
        }
    } else {
        Diagnostic {
            id: "kahler_form.sin2_gradient_bound_ratio".into(),
            value: None,
            reason: Some("outside the generic equal-angle set".into()),
        }
    };
    out.diagnostics.push(ratio);
}

/// `|(nabla dF)^(1,1)|^2` over the orthonormal frame, with
/// `B^(1,1)(X,Y) = (B(X,Y) + B(JX,JY)) / 2`.
fn sff_11_norm2(s: &Snapshot, j: &DMatrix<f64>) -> f64 {
    let d = s.d;
    let bd = s.big_d;
    let sff = s.sff0();
    let b = |x: &[f64], y: &[f64]| -> Vec<f64> {
        (0..bd)
            .map(|a| {
                let mut t = 0.0;
                for i in 0..d {
                    for k in 0..d {
                        t += sff[(a * d + i) * d + k] * x[i] * y[k];
                    }
                }
                t
            })
            .collect()
    };
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|i| s.frame.column(i).iter().cloned().collect())
        .collect();
    let jcols: Vec<Vec<f64>> = cols.iter().map(|c| mat_vec(j, c)).collect();
    let mut t = 0.0;
    for a in 0..d {
        for c in 0..d {
            let u = b(&cols[a], &cols[c]);
            let w = b(&jcols[a], &jcols[c]);
            let m: Vec<f64> = u.iter().zip(&w).map(|(x, y)| 0.5 * (x + y)).collect();
            t += s.amb_inner(&m, &m);
        }
    }
    t
}

fn mean_curvature(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let d = s.d;
    let bd = s.big_d;
    let r = &mut out.residuals;
    let je: Vec<Vec<f64>> = (0..d)
        .map(|k| apply_j(&(0..bd).map(|a| s.e0[(a, k)]).collect::<Vec<_>>()))
        .collect();
    let nv = s.nabla_vec(&s.jh_top);
    // (i)
    let mut l1a = DMatrix::zeros(d, d);
    let mut l1b = DMatrix::zeros(d, d);
    let mut l1c = DMatrix::zeros(d, d);
    let mut terms_b = Vec::new();
    let mut terms_c = Vec::new();
    let jh = apply_j(&ctx.h);
    let dhp = &ctx.nabla_perp_h;
    for i in 0..d {
        let nh_i: Vec<f64> = (0..bd).map(|a| ctx.nabla_h[(a, i)]).collect();
        let nph_i: Vec<f64> = (0..bd).map(|a| dhp[(a, i)]).collect();
        for j in 0..d {
            l1a[(i, j)] = s.amb_inner(&nh_i, &je[j]);
            let t1: f64 = -(0..d).map(|k| nv[(k, i)] * s.g0[(k, j)]).sum::<f64>();
            // g(H, J B) = -g(JH, B)
            let t2 = s.amb_inner(&jh, &s.sff_at(i, j));
            l1b[(i, j)] = t1 + t2;
            terms_b.extend([t1, t2]);
            let mut t3 = 0.0;
            for k in 0..d {
                t3 -= s.amb_inner(&ctx.h, &s.sff_at(i, k)) * s.sharp0[(k, j)];
            }
            let t4 = s.amb_inner(&nph_i, &je[j]);
            l1c[(i, j)] = t3 + t4;
            terms_c.extend([t3, t4]);
        }
    }
    r.push(ctx.rec(
        "mean_curvature.derivative_split",
        flat(&l1a),
        flat(&l1b),
        &terms_b,
    ));
    r.push(ctx.rec(
        "mean_curvature.derivative_normal",
        flat(&l1a),
        flat(&l1c),
        &terms_c,
    ));

    let frame_gate = [ctx.equal.clone(), ctx.off_l(), ctx.frame().map(|_| ())];
    let j0 = ctx.j0();
    let jv = mat_vec(&j0, &ctx.v);
    // (ii)
    let id = "mean_curvature.jh_complex_sum";
    r.push(
        gate(ctx, id, &frame_gate, || {
            let f = ctx.frame().expect("gated");
            let i = Complex64::new(0.0, 1.0);
            let hc = cvec(&ctx.h);
            let mut acc = vec![Complex64::new(0.0, 0.0); d];
            for b in 0..s.n {
                let zb = f.zbar(b);
                let a1 = s.amb_inner_c(&hc, &jc(&s.push_c(&f.z[b])));
                let a2 = s.amb_inner_c(&hc, &jc(&s.push_c(&zb)));
                for k in 0..d {
                    acc[k] += i * a1 * zb[k] - i * a2 * f.z[b][k];
                }
            }
            let lhs: Vec<f64> = jv.iter().map(|x| 0.5 * x).collect();
            ctx.rec(id, lhs, acc.iter().map(|a| a.re).collect(), &[])
        })
        .unwrap_or_else(|e| e),
    );
    // (iii) and (iv) hold on all of M; at Lagrangian points any orthonormal
    // pairing serves as the frame since the sharp terms vanish there
    let lag_frame = if ctx.c < TAU_L {
        Ok(())
    } else {
        Err("no Hermitian frame for J_w at this point".to_string())
    };
    let any_frame = || ctx.frame().cloned().unwrap_or_else(|_| pair_frame(s));
    let on_m = [ctx.equal.clone(), ctx.frame().map(|_| ()).or(lag_frame)];
    let id = "mean_curvature.chain";
    r.push(
        gate(ctx, id, &on_m, || {
            let f = any_frame();
            let t1 = 2.0 * ctx.t_h(&f);
            let mut t2 = 0.0;
            let mut t3 = Complex64::new(0.0, 0.0);
            let dv = s.d_1form(&s.jh_flat);
            for m in 0..s.n {
                let zb = f.zbar(m);
                t2 += 4.0 * s.inner_c(&mat_cvec(&nv, &f.z[m]), &zb).im;
                let dz = mat_cvec(&dv, &zb);
                let q: Complex64 = f.z[m].iter().zip(&dz).map(|(a, b)| a * b).sum();
                t3 += Complex64::new(0.0, -2.0) * q;
            }
            let tp = ctx.t_perp(&f);
            let t4a = -2.0 * ctx.n * ctx.c * ctx.h2;
            let t4b = -4.0 * tp.im;
            ctx.rec(
                id,
                vec![t1; 3],
                vec![t2, t3.re, t4a + t4b],
                &[t4a, t4b, t3.im],
            )
        })
        .unwrap_or_else(|e| e),
    );
    let id = "mean_curvature.chain_polar";
    r.push(match (ctx.delta_j(), &ctx.j_field) {
        (Some(dj), Some(jf)) => gate(ctx, id, &frame_gate, || {
            let f = ctx.frame().expect("gated");
            let t1 = 2.0 * ctx.t_h(f);
            let jvf: Vec<Jet> = (0..d)
                .map(|k| {
                    let mut v = Jet::zero(d, s.order - 2);
                    for i in 0..d {
                        v.add_mul(&jf[k * d + i].truncate(s.order - 2), &s.jh_top[i]);
                    }
                    v
                })
                .collect();
            let t5a = -s.div(&jvf);
            let t5b = s.inner(&dj, &ctx.v);
            ctx.rec(id, vec![t1], vec![t5a + t5b], &[t5a, t5b])
        })
        .unwrap_or_else(|e| e),
        _ => ctx.skip(id, "Lagrangian point"),
    });
    let id = "mean_curvature.divergence";
    let f = any_frame();
    let tp = ctx.t_perp(&f);
    r.push(ctx.rec(id, vec![s.div(&s.jh_top)], vec![-4.0 * tp.re], &[]));
}

struct KappaTerms {
    lap_kappa: f64,
    core: f64,
    core_terms: Vec<f64>,
}

fn kappa_terms(ctx: &Ctx) -> Result<KappaTerms, String> {
    let s = ctx.s;
    let kappa = s.kappa_field().map_err(|e| e.to_string())?;
    let f = ctx.frame()?;
    let gc = ctx.grad_c.as_ref().ok_or("Lagrangian point")?;
    let nj = ctx.nabla_j_norm().ok_or("Lagrangian point")?;
    let n = ctx.n;
    let s2 = ctx.s2;
    let sum_r = ctx.sum_r(f);
    let parts = [
        -2.0 * n * ctx.r,
        32.0 / s2 * sum_r,
        nj / s2,
        8.0 * (n - 1.0) / (s2 * s2) * ctx.norm2(gc),
    ];
    Ok(KappaTerms {
        lap_kappa: ctx.lap(&kappa),
        core: ctx.c * parts.iter().sum::<f64>(),
        core_terms: parts.iter().map(|p| ctx.c * p).collect(),
    })
}

fn kappa(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let d = s.d;
    let n = ctx.n;
    let r = &mut out.residuals;
    let base = [ctx.equal.clone(), ctx.off_l(), ctx.off_c()];
    let kt = if base.iter().all(|g| g.is_ok()) {
        kappa_terms(ctx)
    } else {
        Err(String::new())
    };
    let skip_reason = |kt: &Result<KappaTerms, String>| -> String {
        for g in &base {
            if let Err(e) = g {
                return e.clone();
            }
        }
        match kt {
            Err(e) => e.clone(),
            Ok(_) => unreachable!(),
        }
    };
    let j0 = ctx.j0();
    let jv = mat_vec(&j0, &ctx.v);
    // divergence of J_w V / sin^2 from jets
    let w_field = || -> Option<Vec<Jet>> {
        let jf = ctx.j_field.as_ref()?;
        let is2 = s.s2_field().truncate(s.order - 2).try_recip().ok()?;
        Some(
            (0..d)
                .map(|k| {
                    let mut v = Jet::zero(d, s.order - 2);
                    for i in 0..d {
                        v.add_mul(&jf[k * d + i].truncate(s.order - 2), &s.jh_top[i]);
                    }
                    &v * &is2
                })
                .collect(),
        )
    };
    let id = "kappa.laplacian_curvature";
    r.push(match &kt {
        Ok(k) => {
            let f = ctx.frame().expect("checked");
            let gc = ctx.grad_c.as_ref().expect("checked");
            let dc: Vec<f64> = s.lower(gc);
            let t_dc = -8.0 * n * ctx.c / (ctx.s2 * ctx.s2)
                * dc.iter().zip(&jv).map(|(a, b)| a * b).sum::<f64>();
            let t_h = 8.0 * n / ctx.s2 * ctx.t_h(f);
            let mut terms = k.core_terms.clone();
            terms.extend([t_dc, t_h]);
            ctx.rec(id, vec![k.lap_kappa], vec![k.core + t_dc + t_h], &terms)
        }
        Err(_) => ctx.skip(id, skip_reason(&kt)),
    });
    let id = "kappa.laplacian_divergence";
    r.push(match (&kt, w_field(), ctx.delta_j()) {
        (Ok(k), Some(w), Some(dj)) => {
            let a = -4.0 * n * s.div(&w);
            let b = 4.0 * n / ctx.s2 * s.inner(&dj, &ctx.v);
            let mut terms = k.core_terms.clone();
            terms.extend([a, b]);
            ctx.rec(id, vec![k.lap_kappa], vec![k.core + a + b], &terms)
        }
        (Err(_), _, _) => ctx.skip(id, skip_reason(&kt)),
        _ => ctx.skip(id, "J_w field unavailable"),
    });
    let id = "kappa.surface";
    let surf = need_n(s.n, s.n == 1, "n = 1");
    r.push(
        match gate(ctx, id, &[surf.clone(), ctx.off_l(), ctx.off_c()], || ()) {
            Err(e) => e,
            Ok(()) => match (s.kappa_field(), w_field()) {
                (Ok(kappa), Some(w)) => {
                    let lhs = ctx.lap(&kappa);
                    let a = -2.0 * ctx.r * ctx.c;
                    let b = -4.0 * s.div(&w);
                    ctx.rec(id, vec![lhs], vec![a + b], &[a, b])
                }
                _ => ctx.skip(id, "kappa field unavailable"),
            },
        },
    );
    let id = "kappa.surface_polar_coclosed";
    r.push(match (surf, ctx.delta_j(), &ctx.j_field) {
        (Ok(()), Some(dj), Some(jf)) if ctx.off_l().is_ok() => {
            let nj = s.nabla_11(jf);
            ctx.rec(id, dj.clone(), vec![0.0; d], &nj)
        }
        (Err(e), _, _) => ctx.skip(id, e),
        _ => ctx.skip(id, "near the Lagrangian locus"),
    });
}

fn weitzenboeck(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let r = &mut out.residuals;
    let lap_norm = ctx.lap(&s.omega_norm2_field());
    let dom: Vec<Jet> = s
        .delta_omega
        .iter()
        .map(|x| x.scale(ctx.conv.delta_sign))
        .collect();
    let hodge = s.d_1form(&dom);
    let loo = s.form_inner(&hodge, &s.omega0);
    let lhs = 0.5 * lap_norm;
    r.push(ctx.rec(
        "weitzenboeck.formula",
        vec![lhs],
        vec![-loo + ctx.nabla_omega_norm + ctx.soo],
        &[loo, ctx.nabla_omega_norm, ctx.soo],
    ));
    let id = "weitzenboeck.curvature_term";
    r.push(
        gate(
            ctx,
            id,
            &[ctx.equal.clone(), ctx.frame().map(|_| ())],
            || {
                let f = ctx.frame().expect("gated");
                let rhs = 16.0 * ctx.c * ctx.c * ctx.sum_r(f);
                ctx.rec(id, vec![ctx.soo], vec![rhs], &[])
            },
        )
        .unwrap_or_else(|e| e),
    );
}

fn av_field(s: &Snapshot) -> Vec<Jet> {
    let d = s.d;
    (0..d)
        .map(|k| {
            let mut v = Jet::zero(d, s.order - 2);
            for i in 0..d {
                v.add_mul(&s.sharp[k * d + i].truncate(s.order - 2), &s.jh_top[i]);
            }
            v
        })
        .collect()
}

fn cos2_laplacian(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let n = ctx.n;
    let r = &mut out.residuals;
    let base = [ctx.equal.clone(), ctx.off_l(), ctx.off_c()];
    let j0 = ctx.j0();
    let jv = mat_vec(&j0, &ctx.v);
    let last = |gc: &[f64]| -4.0 * n * (2.0 + (n - 4.0) * ctx.s2) / ctx.s2 * s.inner(gc, &jv);
    let id = "cos2_laplacian.formula";
    r.push(match &ctx.grad_c {
        Some(gc) => gate(ctx, id, &base, || {
            let lhs = n * ctx.lap(&s.c2);
            let grad_abs_s: Vec<f64> = gc.iter().map(|x| -ctx.c * x / ctx.s2.sqrt()).collect();
            let terms = [
                -2.0 * n * ctx.s2 * ctx.c * ctx.c * ctx.r,
                2.0 * ctx.soo,
                2.0 * ctx.nabla_omega_norm,
                4.0 * (n - 2.0) * ctx.norm2(&grad_abs_s),
                -4.0 * n * s.div(&av_field(s)),
                last(gc),
            ];
            ctx.rec(id, vec![lhs], vec![terms.iter().sum()], &terms)
        })
        .unwrap_or_else(|e| e),
        None => ctx.skip(id, "Lagrangian point"),
    });
    let grad_log_s2: Vec<f64> = ctx.grad_c2.iter().map(|x| -x / ctx.s2).collect();
    let id = "cos2_laplacian.last_term_form";
    r.push(match &ctx.grad_c {
        Some(gc) => gate(
            ctx,
            id,
            &[
                need_n(s.n, s.n == 2, "n = 2"),
                base[0].clone(),
                base[1].clone(),
                base[2].clone(),
            ],
            || {
                ctx.rec(
                    id,
                    vec![last(gc)],
                    vec![8.0 * ctx.form(&ctx.v, &grad_log_s2)],
                    &[],
                )
            },
        )
        .unwrap_or_else(|e| e),
        None => ctx.skip(id, "Lagrangian point"),
    });
    let id = "cos2_laplacian.last_term_codifferential";
    r.push(match &ctx.grad_c {
        Some(gc) => gate(
            ctx,
            id,
            &[
                need_n(s.n, s.n >= 3, "n >= 3"),
                base[0].clone(),
                base[1].clone(),
                base[2].clone(),
            ],
            || {
                let dom = ctx.delta_omega();
                let dv: f64 = dom.iter().zip(&ctx.v).map(|(a, b)| a * b).sum();
                let rhs = 4.0 * n * (2.0 + (n - 4.0) * ctx.s2) / (ctx.s2 * (n - 2.0)) * dv;
                ctx.rec(id, vec![last(gc)], vec![rhs], &[])
            },
        )
        .unwrap_or_else(|e| e),
        None => ctx.skip(id, "Lagrangian point"),
    });
}

fn four_dim(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let r = &mut out.residuals;
    let n2 = need_n(s.n, s.n == 2, "n = 2");
    let c2 = ctx.c * ctx.c;
    let s2 = ctx.s2;
    let grad_s2: Vec<f64> = ctx.grad_c2.iter().map(|x| -x).collect();
    let id = "four_dim.scalar_balance";
    r.push(
        gate(
            ctx,
            id,
            &[n2.clone(), ctx.equal.clone(), ctx.off_c()],
            || {
                let grad_log: Vec<f64> = grad_s2.iter().map(|x| x / s2).collect();
                let a = -2.0 * s.div(&av_field(s));
                let b = 2.0 * ctx.form(&ctx.v, &grad_log);
                ctx.rec(id, vec![s2 * c2 * ctx.r], vec![a + b], &[a, b])
            },
        )
        .unwrap_or_else(|e| e),
    );
    let id = "four_dim.parallel_h_balance";
    r.push(
        gate(
            ctx,
            id,
            &[n2.clone(), ctx.equal.clone(), ctx.parallel_h()],
            || {
                let a = s2 * s2 * c2 * ctx.r;
                let b = 8.0 * s2 * c2 * ctx.h2;
                ctx.rec(
                    id,
                    vec![a + b],
                    vec![2.0 * ctx.form(&ctx.v, &grad_s2)],
                    &[a, b],
                )
            },
        )
        .unwrap_or_else(|e| e),
    );
    let id = "four_dim.general_balance";
    r.push(
        gate(
            ctx,
            id,
            &[n2, ctx.equal.clone(), ctx.off_l(), ctx.frame().map(|_| ())],
            || {
                let f = ctx.frame().expect("gated");
                let a = s2 * s2 * c2 * ctx.r;
                let b = 8.0 * s2 * c2 * ctx.h2;
                let t = 8.0 * s2 * ctx.c * ctx.t_perp(f).im;
                ctx.rec(
                    id,
                    vec![a + b + t],
                    vec![2.0 * ctx.form(&ctx.v, &grad_s2)],
                    &[a, b, t],
                )
            },
        )
        .unwrap_or_else(|e| e),
    );
}

fn sigma(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let d = s.d;
    let n = ctx.n;
    let r = &mut out.residuals;
    let base = [ctx.equal.clone(), ctx.off_c()];
    let sig_field = s.sigma_field(ctx.conv.delta_sign);
    let id = "sigma.trace_form";
    r.push(match &sig_field {
        Ok(sig) => gate(ctx, id, &base, || {
            let lhs: Vec<f64> = sig.iter().map(|x| x.value()).collect();
            let t = s.sff_j_tensor();
            let rhs: Vec<f64> = (0..d)
                .map(|x| {
                    let mut acc = 0.0;
                    for i in 0..d {
                        for k in 0..d {
                            acc += s.g_inv0[(i, k)] * t[(i * d + x) * d + k];
                        }
                    }
                    -acc / ctx.s2
                })
                .collect();
            let a: Vec<f64> = ctx.v_flat.iter().map(|v| 2.0 * n * v / ctx.s2).collect();
            ctx.rec(id, lhs, rhs, &a)
        })
        .unwrap_or_else(|e| e),
        Err(e) => ctx.skip(id, e.to_string()),
    });
    let id = "sigma.exterior_derivative";
    r.push(match &sig_field {
        Ok(sig) => gate(ctx, id, &base, || {
            let ds = s.d_1form(sig);
            let rhs = &s.omega0 * ctx.r;
            let terms: Vec<f64> = (0..d * d).map(|x| sig[x / d].d1(x % d)).collect();
            ctx.rec(id, flat(&ds), flat(&rhs), &terms)
        })
        .unwrap_or_else(|e| e),
        Err(e) => ctx.skip(id, e.to_string()),
    });
    let id = "sigma.constant_angle_chain";
    let lag = ctx.lagrangian_nbhd();
    let frame_ok: Result<(), String> = if lag.is_ok() {
        Ok(())
    } else {
        ctx.frame().map(|_| ())
    };
    r.push(
        gate(
            ctx,
            id,
            &[ctx.equal.clone(), ctx.constant_angle(), frame_ok],
            || {
                // on Lagrangian neighbourhoods any orthonormal frame may be used
                let f = if lag.is_ok() {
                    pair_frame(s)
                } else {
                    ctx.frame().expect("gated").clone()
                };
                let dv = s.d_1form(&s.jh_flat);
                let mid: f64 = (0..s.n)
                    .map(|b| {
                        2.0 * f.x[b]
                            .iter()
                            .zip(mat_vec(&dv, &f.y[b]))
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                    })
                    .sum();
                let tp = ctx.t_perp(&f);
                let a = -4.0 * n * ctx.c * ctx.h2;
                let b = -8.0 * tp.im;
                let first = ctx.r * ctx.c * ctx.s2;
                ctx.rec(id, vec![first, first], vec![mid, a + b], &[a, b])
            },
        )
        .unwrap_or_else(|e| e),
    );
    let id = "sigma.parallel";
    let flat_amb = if ctx.r == 0.0 {
        Ok(())
    } else {
        Err("requires R = 0".to_string())
    };
    let nonzero_h = if ctx.h2 > 1e-12 {
        Ok(())
    } else {
        Err("mean curvature vanishes".to_string())
    };
    r.push(match &sig_field {
        Ok(sig) => gate(
            ctx,
            id,
            &[
                flat_amb,
                nonzero_h,
                ctx.parallel_h(),
                ctx.constant_angle(),
                base[0].clone(),
            ],
            || {
                let (nab, terms) = nabla_1form(s, sig);
                ctx.rec(id, nab, vec![0.0; d * d], &terms)
            },
        )
        .unwrap_or_else(|e| e),
        Err(e) => ctx.skip(id, e.to_string()),
    });
    if let Ok(sig) = &sig_field {
        let (nab, _) = nabla_1form(s, sig);
        let sv: Vec<f64> = sig.iter().map(|x| x.value()).collect();
        let sraised = s.raise(&sv);
        out.diagnostics.push(Diagnostic {
            id: "sigma.nabla_max".into(),
            value: Some(max_abs(&nab)),
            reason: None,
        });
        out.diagnostics.push(Diagnostic {
            id: "sigma.norm".into(),
            value: Some(s.inner(&sraised, &sraised).sqrt()),
            reason: None,
        });
    }
}

/// `(nabla_l beta)_i` at `l * d + i`, and the constituent term magnitudes.
fn nabla_1form(s: &Snapshot, b: &[Jet]) -> (Vec<f64>, Vec<f64>) {
    let d = s.d;
    let mut out = vec![0.0; d * d];
    let mut terms = Vec::new();
    for l in 0..d {
        for i in 0..d {
            let a = b[i].d1(l);
            let mut g = 0.0;
            for m in 0..d {
                g += s.gamma0[(m * d + l) * d + i] * b[m].value();
            }
            out[l * d + i] = a - g;
            terms.extend([a, g]);
        }
    }
    (out, terms)
}

/// Frame `X_b = e_{2b}`, `Y_b = e_{2b+1}` from the orthonormal frame.
fn pair_frame(s: &Snapshot) -> ComplexFrame {
    let col = |i: usize| -> Vec<f64> { s.frame.column(i).iter().cloned().collect() };
    let x: Vec<Vec<f64>> = (0..s.n).map(|b| col(2 * b)).collect();
    let y: Vec<Vec<f64>> = (0..s.n).map(|b| col(2 * b + 1)).collect();
    let z = x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(p, q)| Complex64::new(p / 2.0, -q / 2.0))
                .collect()
        })
        .collect();
    ComplexFrame { x, y, z }
}

fn jh(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let d = s.d;
    let r = &mut out.residuals;
    let id = "jh.closed";
    r.push(
        gate(ctx, id, &[ctx.lagrangian_nbhd()], || {
            let dv = s.d_1form(&s.jh_flat);
            let terms: Vec<f64> = (0..d * d).map(|x| s.jh_flat[x / d].d1(x % d)).collect();
            ctx.rec(id, flat(&dv), vec![0.0; d * d], &terms)
        })
        .unwrap_or_else(|e| e),
    );
    let id = "jh.parallel_on_lagrangian";
    let lag = if ctx.c < TAU_L {
        Ok(())
    } else {
        Err("not a Lagrangian point".to_string())
    };
    r.push(
        gate(ctx, id, &[lag, ctx.parallel_h()], || {
            let nv = s.nabla_vec(&s.jh_top);
            let terms: Vec<f64> = (0..d * d).map(|x| s.jh_top[x / d].d1(x % d)).collect();
            ctx.rec(id, flat(&nv), vec![0.0; d * d], &terms)
        })
        .unwrap_or_else(|e| e),
    );
}

fn normal(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let d = s.d;
    let r = &mut out.residuals;
    let nd = match s.normal_data() {
        Ok(nd) => nd,
        Err(e) => {
            for id in [
                "normal.angles",
                "normal.phi_norm",
                "normal.xi_norm",
                "normal.xi_phi",
                "normal.phi_xi",
                "normal.intertwine",
                "normal.phi_metric",
                "normal.jh_complex_point",
            ] {
                r.push(ctx.skip(id, e.to_string()));
            }
            return;
        }
    };
    r.push(ctx.rec(
        "normal.angles",
        nd.normal_angles.clone(),
        s.angles.clone(),
        &[],
    ));
    let target: f64 = 2.0 * s.angles.iter().map(|c| 1.0 - c * c).sum::<f64>();
    let phi_n = nd.phi.norm_squared();
    let xi_n = nd.xi.norm_squared();
    r.push(ctx.rec("normal.phi_norm", vec![phi_n], vec![target], &[d as f64]));
    r.push(ctx.rec("normal.xi_norm", vec![xi_n], vec![target], &[d as f64]));
    let id_d = DMatrix::<f64>::identity(d, d);
    let a_frame = s.skew.transpose();
    let lhs = -(&nd.xi * &nd.phi);
    let rhs = &id_d + &a_frame * &a_frame;
    r.push(ctx.rec("normal.xi_phi", flat(&lhs), flat(&rhs), &[1.0]));
    let lhs = -(&nd.phi * &nd.xi);
    let rhs = &id_d + &nd.omega_perp * &nd.omega_perp;
    r.push(ctx.rec("normal.phi_xi", flat(&lhs), flat(&rhs), &[1.0]));
    let id = "normal.intertwine";
    let generic = if s
        .angles
        .iter()
        .all(|&c| c > NEAR_GATE && c < 1.0 - NEAR_GATE)
    {
        Ok(())
    } else {
        Err("an angle is near 0 or 1".to_string())
    };
    r.push(
        gate(ctx, id, &[generic], || {
            let j_frame = crate::geometry::polar_factor(&a_frame, TAU_L);
            let l1 = &nd.j_perp * &nd.phi;
            let r1 = -(&nd.phi * &j_frame);
            let l2 = &j_frame * &nd.xi;
            let r2 = -(&nd.xi * &nd.j_perp);
            let mut lhs = flat(&l1);
            lhs.extend(flat(&l2));
            let mut rhs = flat(&r1);
            rhs.extend(flat(&r2));
            ctx.rec(id, lhs, rhs, &[1.0])
        })
        .unwrap_or_else(|e| e),
    );
    let id = "normal.phi_metric";
    r.push(
        gate(ctx, id, &[ctx.equal.clone()], || {
            let lhs = nd.phi.transpose() * &nd.phi;
            let rhs = &id_d * (1.0 - s.angles[0] * s.angles[0]);
            ctx.rec(id, flat(&lhs), flat(&rhs), &[1.0])
        })
        .unwrap_or_else(|e| e),
    );
    let id = "normal.jh_complex_point";
    let complex = if s.classification == crate::geometry::Classification::Complex {
        Ok(())
    } else {
        Err("not a complex point".to_string())
    };
    r.push(
        gate(ctx, id, &[complex], || {
            let hn = ctx.h2.sqrt();
            ctx.rec(id, ctx.v.clone(), vec![0.0; d], &[hn])
        })
        .unwrap_or_else(|e| e),
    );
}

fn gauss(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let rhs = s.gauss_curvature_tensor();
    let amb = s.ambient_curvature_pullback();
    let mut terms = amb.clone();
    terms.push(max_abs(&rhs));
    out.residuals
        .push(ctx.rec("gauss.equation", s.riemann.clone(), rhs, &terms));
}

fn structure(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let d = s.d;
    let r = &mut out.residuals;
    let dom_terms: Vec<f64> = (0..d * d * d).map(|x| s.omega[x / d].d1(x % d)).collect();
    r.push(ctx.rec(
        "structure.form_closed",
        vec![s.d_omega_defect()],
        vec![0.0],
        &dom_terms,
    ));
    let sffn = s.sff0();
    r.push(ctx.rec(
        "structure.sff_normal",
        vec![s.sff_tangential_defect()],
        vec![0.0],
        &sffn,
    ));
    // Laplacian against divergence of the gradient, on cos^2
    let grad: Vec<Jet> = {
        let k2 = s.order - 2;
        let gi: Vec<Jet> = s.g_inv.iter().map(|x| x.truncate(k2)).collect();
        (0..d)
            .map(|k| {
                let mut v = Jet::zero(d, k2);
                for j in 0..d {
                    v.add_mul(&gi[k * d + j], &s.c2.diff(j));
                }
                v
            })
            .collect()
    };
    let th = s.trace_hessian(&s.c2);
    r.push(ctx.rec(
        "structure.laplacian_divergence",
        vec![th],
        vec![s.div(&grad)],
        &[],
    ));
    let id = "structure.polar_field";
    r.push(match &ctx.j_field {
        Some(j) => gate(ctx, id, &[ctx.equal.clone(), ctx.off_l()], || {
            let jv: Vec<f64> = j.iter().map(|x| x.value()).collect();
            ctx.rec(id, jv, flat(&s.j_point), &[1.0])
        })
        .unwrap_or_else(|e| e),
        None => ctx.skip(id, "Lagrangian point"),
    });
    // J^2 = -Id on the complement of the kernel, in the orthonormal frame
    let pinv = s.frame.clone().try_inverse().expect("frame is invertible");
    let jf = &pinv * &s.j_point * &s.frame;
    let sq = &jf * &jf;
    let proj = -(&jf.transpose() * &jf);
    r.push(ctx.rec("structure.polar_square", flat(&sq), flat(&proj), &[1.0]));
    out.diagnostics.push(Diagnostic {
        id: "structure.equal_angle_jet_defect".into(),
        value: Some(ctx.eq_defect),
        reason: None,
    });
}

fn hypothesis(ctx: &Ctx, out: &mut Evaluation) {
    let s = ctx.s;
    let n = ctx.n;
    let dg = &mut out.diagnostics;
    let grad_s2: Vec<f64> = ctx.grad_c2.iter().map(|x| -x).collect();
    let dom = ctx.delta_omega();
    let dv: f64 = dom.iter().zip(&ctx.v).map(|(a, b)| a * b).sum();
    let eq = ctx.equal.clone().err();
    let with_gate = |id: &str, v: f64| Diagnostic {
        id: id.into(),
        value: if eq.is_none() { Some(v) } else { None },
        reason: eq.clone(),
    };
    dg.push(with_gate(
        "hypothesis.curvature_flow_sign",
        ctx.r * ctx.form(&ctx.v, &grad_s2),
    ));
    dg.push(with_gate("hypothesis.codifferential_pairing", dv));
    let gc2 = ctx.grad_c.as_ref().map(|g| ctx.norm2(g)).unwrap_or(0.0);
    dg.push(with_gate(
        "hypothesis.combined_field",
        4.0 * n * n * ctx.c * ctx.c * ctx.h2 + n * ctx.s2 * ctx.c * ctx.c * ctx.r
            - (n - 2.0) * (n - 2.0) * gc2
            + 2.0 * n * dv,
    ));
    dg.push(with_gate(
        "hypothesis.parallel_h_defect",
        parallel_h_defect(n, ctx.s2, ctx.r, ctx.h2),
    ));
    dg.push(match ctx.frame() {
        Ok(f) => Diagnostic {
            id: "hypothesis.isotropic_curvature".into(),
            value: Some(ctx.sum_r(f)),
            reason: None,
        },
        Err(e) => Diagnostic {
            id: "hypothesis.isotropic_curvature".into(),
            value: None,
            reason: Some(e),
        },
    });
    dg.push(Diagnostic {
        id: "hypothesis.theta_signed".into(),
        value: s.theta_signed,
        reason: None,
    });
}

/// `|H|^2 + sin^2 R / (4n)`, which vanishes for the parallel-mean-curvature
/// relation with `R < 0`. Generic so it can run in exact arithmetic.
pub fn parallel_h_defect<T>(n: T, sin2: T, r: T, h2: T) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<Output = T> + std::ops::Div<Output = T>,
{
    h2 + sin2 * r / (n + n + n + n)
}

/// Evaluates the selected suites at one snapshot.
pub fn evaluate(s: &Snapshot, suites: &[&str], conv: Conventions, tol: Tolerances) -> Evaluation {
    let ctx = Ctx::new(s, conv, tol);
    let mut out = Evaluation::default();
    for name in SUITES {
        if !suites.contains(&name) && !suites.contains(&"all") {
            continue;
        }
        match name {
            "kahler_form" => kahler_form(&ctx, &mut out),
            "mean_curvature" => mean_curvature(&ctx, &mut out),
            "kappa" => kappa(&ctx, &mut out),
            "weitzenboeck" => weitzenboeck(&ctx, &mut out),
            "cos2_laplacian" => cos2_laplacian(&ctx, &mut out),
            "four_dim" => four_dim(&ctx, &mut out),
            "sigma" => sigma(&ctx, &mut out),
            "jh" => jh(&ctx, &mut out),
            "normal" => normal(&ctx, &mut out),
            "gauss" => gauss(&ctx, &mut out),
            "structure" => structure(&ctx, &mut out),
            "hypothesis" => hypothesis(&ctx, &mut out),
            _ => unreachable!(),
        }
    }
    out.residuals.sort_by(|a, b| a.id.cmp(&b.id));
    out.diagnostics.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Text of the surface used to fix the sign conventions: a non-minimal
/// flat-ambient surface whose angle varies.
pub const CALIBRATION_SURFACE: &str = "n = 1;\nambient = flat;\nmap = [cos(u1) + 0.3*sin(u2)*cos(u1), sin(u1) + 0.2*cos(2*u2), cos(u2) + 0.25*sin(u1 + u2), sin(u2) - 0.1*cos(u1)]";

/// Points of the calibration surface.
pub const CALIBRATION_POINTS: [[f64; 2]; 3] = [[0.4, 1.1], [1.3, -0.7], [-0.9, 2.2]];

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationCandidate {
    pub laplacian_sign: f64,
    pub delta_sign: f64,
    /// Largest relative residual of the surface kappa identity.
    pub kappa_residual: f64,
    /// Largest relative residual of the codifferential identity.
    pub codifferential_residual: f64,
    pub closes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub conventions: Conventions,
    pub candidates: Vec<CalibrationCandidate>,
}

/// Tries all four sign assignments on the calibration surface and returns
/// the unique one that closes both the surface kappa identity and the
/// codifferential identity.
pub fn calibrate() -> Result<Calibration, ConventionError> {
    let spec = parse_immersion(CALIBRATION_SURFACE).expect("calibration surface parses");
    let snaps: Vec<Snapshot> = CALIBRATION_POINTS
        .iter()
        .map(|p| Snapshot::compute(&spec, p, 3))
        .collect::<Result<_, _>>()?;
    let tol = Tolerances::default();
    let mut candidates = Vec::new();
    for ls in [1.0, -1.0] {
        for ds in [1.0, -1.0] {
            let conv = Conventions {
                laplacian_sign: ls,
                delta_sign: ds,
                ..Conventions::default()
            };
            let (mut kr, mut cr) = (0.0f64, 0.0f64);
            let mut closes = true;
            for s in &snaps {
                let ev = evaluate(s, &["kappa", "kahler_form"], conv, tol);
                for rec in &ev.residuals {
                    if rec.id == "kappa.surface" || rec.id == "kahler_form.codifferential" {
                        if !rec.applicable {
                            closes = false;
                            continue;
                        }
                        if rec.id == "kappa.surface" {
                            kr = kr.max(rec.rel_residual);
                        } else {
                            cr = cr.max(rec.rel_residual);
                        }
                        closes &= rec.pass;
                    }
                }
            }
            candidates.push(CalibrationCandidate {
                laplacian_sign: ls,
                delta_sign: ds,
                kappa_residual: kr,
                codifferential_residual: cr,
                closes,
            });
        }
    }
    let closing: Vec<&CalibrationCandidate> = candidates.iter().filter(|c| c.closes).collect();
    match closing.len() {
        0 => Err(ConventionError::NoneClose),
        1 => {
            let c = closing[0];
            Ok(Calibration {
                conventions: Conventions {
                    laplacian_sign: c.laplacian_sign,
                    delta_sign: c.delta_sign,
                    ..Conventions::default()
                },
                candidates: candidates.clone(),
            })
        }
        k => Err(ConventionError::Multiple(k)),
    }
}
