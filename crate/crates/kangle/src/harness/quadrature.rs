//! Trapezoidal quadrature on `[0, 2pi)^{2n}` for periodic immersions.
//!
//! For a flat-ambient product of two periodic surfaces the integrals are
//! assembled from the two factors, which turns an `N^4` grid into two `N^2`
//! grids.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::{Expr, ImmersionSpec};
use crate::geometry::Snapshot;
use crate::identities::Conventions;
use crate::jets::Jet;

use super::HarnessError;

/// Integration checks offered by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `int Delta |F*w|^2 dV = 0`.
    Stokes,
    /// `int <Delta F*w, F*w> dV = int |delta F*w|^2 dV`.
    Energy,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Stokes => "stokes",
            Check::Energy => "energy",
        }
    }
}

/// Integrals of the standard integrands over the torus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TorusIntegrals {
    pub volume: f64,
    pub laplacian_norm: f64,
    pub abs_laplacian_norm: f64,
    pub form_laplacian_pairing: f64,
    pub codifferential_norm: f64,
}

impl TorusIntegrals {
    fn from_array(a: [f64; 5]) -> TorusIntegrals {
        TorusIntegrals {
            volume: a[0],
            laplacian_norm: a[1],
            abs_laplacian_norm: a[2],
            form_laplacian_pairing: a[3],
            codifferential_norm: a[4],
        }
    }

    /// Integrals over a Riemannian product. The absolute value integral is
    /// replaced by its triangle-inequality bound.
    fn product(a: &TorusIntegrals, b: &TorusIntegrals) -> TorusIntegrals {
        let mix = |x: f64, y: f64| x * b.volume + a.volume * y;
        TorusIntegrals {
            volume: a.volume * b.volume,
            laplacian_norm: mix(a.laplacian_norm, b.laplacian_norm),
            abs_laplacian_norm: mix(a.abs_laplacian_norm, b.abs_laplacian_norm),
            form_laplacian_pairing: mix(a.form_laplacian_pairing, b.form_laplacian_pairing),
            codifferential_norm: mix(a.codifferential_norm, b.codifferential_norm),
        }
    }
}

fn check_grid(spec: &ImmersionSpec, grid: usize) -> Result<(), HarnessError> {
    if !spec.periodic {
        return Err(HarnessError::Usage(
            "torus quadrature needs a spec declared `periodic`".into(),
        ));
    }
    if grid < 8 {
        return Err(HarnessError::Usage(format!(
            "quadrature grid must be at least 8, got {grid}"
        )));
    }
    Ok(())
}

fn grid_point(index: usize, d: usize, grid: usize) -> Vec<f64> {
    let h = 2.0 * PI / grid as f64;
    let mut rest = index;
    let mut p = vec![0.0; d];
    for x in p.iter_mut() {
        *x = (rest % grid) as f64 * h;
        rest /= grid;
    }
    p
}

fn at_point(
    spec: &ImmersionSpec,
    p: &[f64],
    f: &(dyn Fn(&Snapshot) -> Vec<f64> + Sync),
) -> Result<Vec<f64>, HarnessError> {
    let s = Snapshot::compute(spec, p, 3).map_err(|e| HarnessError::Quadrature {
        point: p.to_vec(),
        source: e,
    })?;
    let w = s.g0.determinant().sqrt();
    Ok(f(&s).into_iter().map(|x| x * w).collect())
}

/// Sums `f * sqrt(det g)` over the uniform grid with deterministic order.
pub fn integrate_with(
    spec: &ImmersionSpec,
    grid: usize,
    width: usize,
    f: &(dyn Fn(&Snapshot) -> Vec<f64> + Sync),
) -> Result<Vec<f64>, HarnessError> {
    check_grid(spec, grid)?;
    let d = spec.domain_dim();
    let total = grid
        .checked_pow(d as u32)
        .ok_or_else(|| HarnessError::Usage("quadrature grid too large".into()))?;
    let vals: Vec<Result<Vec<f64>, HarnessError>> = (0..total)
        .into_par_iter()
        .map(|i| at_point(spec, &grid_point(i, d, grid), f))
        .collect();
    let cell = (2.0 * PI / grid as f64).powi(d as i32);
    let mut acc = vec![0.0; width];
    for v in vals {
        for (a, x) in acc.iter_mut().zip(v?) {
            *a += x;
        }
    }
    Ok(acc.into_iter().map(|x| x * cell).collect())
}

fn standard_integrands(conv: Conventions) -> impl Fn(&Snapshot) -> Vec<f64> + Sync {
    move |s: &Snapshot| {
        let lap = conv.laplacian_sign * s.trace_hessian(&s.omega_norm2_field());
        let dom: Vec<Jet> = s
            .delta_omega
            .iter()
            .map(|x| x.scale(conv.delta_sign))
            .collect();
        let pairing = s.form_inner(&s.d_1form(&dom), &s.omega0);
        let dv = s.delta_omega0();
        vec![
            1.0,
            lap,
            lap.abs(),
            pairing,
            s.inner(&s.raise(&dv), &s.raise(&dv)),
        ]
    }
}

fn vars_used(e: &Expr, out: &mut BTreeSet<usize>) {
    match e {
        Expr::Num(_) => {}
        Expr::Var(i) => {
            out.insert(*i);
        }
        Expr::Neg(a) | Expr::Func(_, a) | Expr::Pow(a, _) => vars_used(a, out),
        Expr::Bin(_, a, b) => {
            vars_used(a, out);
            vars_used(b, out);
        }
    }
}

fn shift(e: &Expr, by: usize) -> Expr {
    match e {
        Expr::Num(x) => Expr::Num(*x),
        Expr::Var(i) => Expr::Var(i - by),
        Expr::Neg(a) => Expr::Neg(Box::new(shift(a, by))),
        Expr::Func(f, a) => Expr::Func(*f, Box::new(shift(a, by))),
        Expr::Pow(a, k) => Expr::Pow(Box::new(shift(a, by)), *k),
        Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(shift(a, by)), Box::new(shift(b, by))),
    }
}

/// Splits a flat `n = 2` spec whose first four components depend only on
/// `u1, u2` and last four only on `u3, u4` into its two surface factors.
pub fn product_factors(spec: &ImmersionSpec) -> Option<(ImmersionSpec, ImmersionSpec)> {
    if spec.n != 2 || !spec.ambient.is_flat() {
        return None;
    }
    let mut first = BTreeSet::new();
    let mut second = BTreeSet::new();
    for c in &spec.components[..4] {
        vars_used(c, &mut first);
    }
    for c in &spec.components[4..] {
        vars_used(c, &mut second);
    }
    if first.iter().any(|&v| v > 1) || second.iter().any(|&v| v < 2) {
        return None;
    }
    let mut ambient = spec.ambient;
    ambient.complex_dim = 2;
    let make = |comps: Vec<Expr>, tag: &str| ImmersionSpec {
        name: format!("{}[{tag}]", spec.name),
        n: 1,
        ambient,
        periodic: spec.periodic,
        components: comps,
    };
    Some((
        make(spec.components[..4].to_vec(), "1"),
        make(
            spec.components[4..].iter().map(|c| shift(c, 2)).collect(),
            "2",
        ),
    ))
}

/// Integrals of the standard integrands, using the product split when it
/// applies. The flag reports whether it did.
pub fn torus_integrals(
    spec: &ImmersionSpec,
    grid: usize,
    conv: Conventions,
) -> Result<(TorusIntegrals, bool), HarnessError> {
    check_grid(spec, grid)?;
    let f = standard_integrands(conv);
    if let Some((a, b)) = product_factors(spec) {
        let ia = TorusIntegrals::from_array(
            integrate_with(&a, grid, 5, &f)?
                .try_into()
                .expect("five integrands"),
        );
        let ib = TorusIntegrals::from_array(
            integrate_with(&b, grid, 5, &f)?
                .try_into()
                .expect("five integrands"),
        );
        return Ok((TorusIntegrals::product(&ia, &ib), true));
    }
    let v = integrate_with(spec, grid, 5, &f)?;
    Ok((
        TorusIntegrals::from_array(v.try_into().expect("five integrands")),
        false,
    ))
}

/// `int Delta f dV` and `int |Delta f| dV` for a periodic scalar `f`.
pub fn integrate_laplacian_of(
    spec: &ImmersionSpec,
    f: &Expr,
    grid: usize,
    conv: Conventions,
) -> Result<(f64, f64), HarnessError> {
    let d = spec.domain_dim();
    let g = |s: &Snapshot| -> Vec<f64> {
        let vars: Vec<Jet> = (0..d)
            .map(|i| Jet::seed(d, 2, &s.point, i).expect("shape"))
            .collect();
        match f.eval_jet(&vars) {
            Ok(fj) => {
                let l = conv.laplacian_sign * s.trace_hessian(&fj);
                vec![l, l.abs()]
            }
            Err(_) => vec![f64::NAN, f64::NAN],
        }
    };
    let v = integrate_with(spec, grid, 2, &g)?;
    Ok((v[0], v[1]))
}

/// Outcome of one integral check at grid `N`, with the `N/2` error for the
/// convergence ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub check: Check,
    pub grid: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub scale: f64,
    pub volume: f64,
    pub coarse_grid: usize,
    pub coarse_abs_error: f64,
    pub convergence_ratio: f64,
    /// Error drops by at least 1e3 from `N/2` to `N`, or the coarse error is
    /// already at the noise floor.
    pub spectral: bool,
    pub product_split: bool,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub pass: bool,
}

pub const QUAD_TOL_ABS: f64 = 1e-8;
pub const QUAD_TOL_REL: f64 = 1e-6;
const NOISE_FLOOR: f64 = 1e-12;

fn sides(check: Check, t: &TorusIntegrals) -> (f64, f64, f64) {
    match check {
        Check::Stokes => (t.laplacian_norm, 0.0, t.abs_laplacian_norm),
        Check::Energy => {
            let (l, r) = (t.form_laplacian_pairing, t.codifferential_norm);
            (l, r, l.abs().max(r.abs()))
        }
    }
}

pub fn run_check(
    spec: &ImmersionSpec,
    check: Check,
    grid: usize,
    conv: Conventions,
) -> Result<QuadratureResult, HarnessError> {
    let (fine, split) = torus_integrals(spec, grid, conv)?;
    let (coarse, _) = torus_integrals(spec, (grid / 2).max(8), conv)?;
    let (lhs, rhs, scale) = sides(check, &fine);
    let (cl, cr, _) = sides(check, &coarse);
    let abs_error = (lhs - rhs).abs();
    let rel_error = if abs_error == 0.0 {
        0.0
    } else {
        abs_error / scale.max(f64::MIN_POSITIVE)
    };
    let coarse_abs_error = (cl - cr).abs();
    let floor = NOISE_FLOOR * scale.max(fine.volume);
    let convergence_ratio = coarse_abs_error / abs_error.max(floor);
    let spectral = coarse_abs_error <= 1e3 * floor || convergence_ratio >= 1e3;
    Ok(QuadratureResult {
        check,
        grid,
        lhs,
        rhs,
        abs_error,
        rel_error,
        scale,
        volume: fine.volume,
        coarse_grid: (grid / 2).max(8),
        coarse_abs_error,
        convergence_ratio,
        spectral,
        product_split: split,
        tol_abs: QUAD_TOL_ABS,
        tol_rel: QUAD_TOL_REL,
        pass: abs_error <= QUAD_TOL_ABS || rel_error <= QUAD_TOL_REL,
    })
}
