//! Flat and complex space form ambients in one affine holomorphic chart.
//!
//! Real coordinates are interleaved, `(x1, y1, x2, y2, ...)`, with
//! `z_k = x_k + i y_k`. The space form of holomorphic sectional curvature
//! `4 rho` carries the Kähler potential `log(1 + rho |z|^2) / rho`, whose
//! Hermitian metric is `h_jk = delta_jk / A - rho conj(z_j) z_k / A^2`,
//! `A = 1 + rho |z|^2`.
//!
//! Curvature follows `R(X,Y,Z,W) = g(R(X,Y)Z, W)` with
//! `R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]`, so the sectional curvature of
//! a plane is `R(X,Y,Y,X)`.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::jets::{Jet, JetError, MAX_DIM};

/// Points with `1 + rho |z|^2` below this are outside the usable chart.
pub const CHART_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientKind {
    Flat,
    SpaceForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmbientSpec {
    pub kind: AmbientKind,
    pub rho: f64,
    /// Complex dimension of the ambient, equal to `2n`.
    pub complex_dim: usize,
}

impl fmt::Display for AmbientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AmbientKind::Flat => write!(f, "flat"),
            AmbientKind::SpaceForm => write!(f, "space_form({:?})", self.rho),
        }
    }
}

/// Applies the standard complex structure, `(x, y) -> (-y, x)` per block.
pub fn apply_j(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

pub fn apply_j_jets(v: &[Jet]) -> Vec<Jet> {
    let mut out = Vec::with_capacity(v.len());
    for k in 0..v.len() / 2 {
        out.push(-&v[2 * k + 1]);
        out.push(v[2 * k].clone());
    }
    out
}

/// Matrix of the standard complex structure on `R^dim`.
pub fn j_matrix(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        j[(2 * k + 1, 2 * k)] = 1.0;
        j[(2 * k, 2 * k + 1)] = -1.0;
    }
    j
}

impl AmbientSpec {
    pub fn flat(complex_dim: usize) -> AmbientSpec {
        AmbientSpec {
            kind: AmbientKind::Flat,
            rho: 0.0,
            complex_dim,
        }
    }

    /// Space form with holomorphic sectional curvature `4 rho`; `rho = 0`
    /// gives the flat ambient.
    pub fn space_form(complex_dim: usize, rho: f64) -> AmbientSpec {
        if rho == 0.0 {
            AmbientSpec::flat(complex_dim)
        } else {
            AmbientSpec {
                kind: AmbientKind::SpaceForm,
                rho,
                complex_dim,
            }
        }
    }

    pub fn is_flat(&self) -> bool {
        self.kind == AmbientKind::Flat
    }

    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim
    }

    /// `R` in `Ricci = R g`.
    pub fn einstein_constant(&self) -> f64 {
        2.0 * (self.complex_dim as f64 + 1.0) * self.rho
    }

    fn conformal_factor(&self, z: &[f64]) -> f64 {
        1.0 + self.rho * z.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn check_chart(&self, z: &[f64]) -> Result<(), String> {
        if z.len() != self.real_dim() {
            return Err(format!(
                "chart point has {} coordinates, expected {}",
                z.len(),
                self.real_dim()
            ));
        }
        if self.is_flat() {
            return Ok(());
        }
        let a = self.conformal_factor(z);
        if !(a > CHART_MARGIN) {
            return Err(format!("point outside the chart: 1 + rho|z|^2 = {a:e}"));
        }
        Ok(())
    }

    pub fn metric(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.real_dim();
        if self.is_flat() {
            return DMatrix::identity(d, d);
        }
        let a = self.conformal_factor(z);
        let r = self.rho;
        let m = self.complex_dim;
        let mut g = DMatrix::zeros(d, d);
        for j in 0..m {
            for k in 0..m {
                let (xj, yj, xk, yk) = (z[2 * j], z[2 * j + 1], z[2 * k], z[2 * k + 1]);
                let delta = if j == k { 1.0 } else { 0.0 };
                let re = delta / a - r * (xj * xk + yj * yk) / (a * a);
                let im = -r * (xj * yk - yj * xk) / (a * a);
                g[(2 * j, 2 * k)] = re;
                g[(2 * j, 2 * k + 1)] = im;
                g[(2 * j + 1, 2 * k)] = -im;
                g[(2 * j + 1, 2 * k + 1)] = re;
            }
        }
        g
    }

    /// Metric entries as jets, row-major.
    pub fn metric_jets(&self, z: &[Jet]) -> Vec<Jet> {
        let d = self.real_dim();
        let (dim, order) = (z[0].dim(), z[0].order());
        let mut g = vec![Jet::zero(dim, order); d * d];
        if self.is_flat() {
            for i in 0..d {
                g[i * d + i] = Jet::constant(dim, order, 1.0);
            }
            return g;
        }
        let r = self.rho;
        let m = self.complex_dim;
        let mut a = Jet::constant(dim, order, 1.0);
        for x in z {
            let sq = x * x;
            a.axpy(r, &sq);
        }
        let ia = a.try_recip().expect("chart checked");
        let ia2 = &ia * &ia;
        for j in 0..m {
            for k in 0..m {
                let (xj, yj, xk, yk) = (&z[2 * j], &z[2 * j + 1], &z[2 * k], &z[2 * k + 1]);
                let mut re = &(&(xj * xk) + &(yj * yk)) * &ia2 * (-r);
                if j == k {
                    re = &re + &ia;
                }
                let im = &(&(xj * yk) - &(yj * xk)) * &ia2 * (-r);
                g[2 * j * d + 2 * k] = re.clone();
                g[2 * j * d + 2 * k + 1] = im.clone();
                g[(2 * j + 1) * d + 2 * k] = -&im;
                g[(2 * j + 1) * d + 2 * k + 1] = re;
            }
        }
        g
    }

    /// `g(X, Y)` at `z`.
    pub fn inner(&self, z: &[f64], x: &[f64], y: &[f64]) -> f64 {
        if self.is_flat() {
            return x.iter().zip(y).map(|(a, b)| a * b).sum();
        }
        let g = self.metric(z);
        let d = x.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += x[i] * g[(i, j)] * y[j];
            }
        }
        s
    }

    /// `Gamma(X, Y)` from the closed form
    /// `Gamma(X,Y)_l = -rho (X_l <z, Y> + Y_l <z, X>) / A`,
    /// with `<z, X> = sum conj(z_k) X_k` in complex components.
    pub fn gamma(&self, z: &[f64], x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.real_dim();
        if self.is_flat() {
            return vec![0.0; d];
        }
        let a = self.conformal_factor(z);
        let zdot = |v: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..d / 2 {
                let (zr, zi, vr, vi) = (z[2 * k], z[2 * k + 1], v[2 * k], v[2 * k + 1]);
                re += zr * vr + zi * vi;
                im += zr * vi - zi * vr;
            }
            (re, im)
        };
        let (xr, xi) = zdot(x);
        let (yr, yi) = zdot(y);
        let s = -self.rho / a;
        let mut out = vec![0.0; d];
        for k in 0..d / 2 {
            let (ar, ai) = (x[2 * k], x[2 * k + 1]);
            let (br, bi) = (y[2 * k], y[2 * k + 1]);
            out[2 * k] = s * (ar * yr - ai * yi + br * xr - bi * xi);
            out[2 * k + 1] = s * (ar * yi + ai * yr + br * xi + bi * xr);
        }
        out
    }

    /// Jet version of [`AmbientSpec::gamma`].
    pub fn gamma_jets(&self, z: &[Jet], x: &[Jet], y: &[Jet]) -> Vec<Jet> {
        let d = self.real_dim();
        let (dim, order) = (z[0].dim(), z[0].order());
        if self.is_flat() {
            return vec![Jet::zero(dim, order); d];
        }
        let mut a = Jet::constant(dim, order, 1.0);
        for v in z {
            a.add_mul(&(v * self.rho), v);
        }
        let s = a.try_recip().expect("chart checked") * (-self.rho);
        let zdot = |v: &[Jet]| {
            let mut re = Jet::zero(dim, order);
            let mut im = Jet::zero(dim, order);
            for k in 0..d / 2 {
                re.add_mul(&z[2 * k], &v[2 * k]);
                re.add_mul(&z[2 * k + 1], &v[2 * k + 1]);
                im.add_mul(&z[2 * k], &v[2 * k + 1]);
                im.add_mul(&(-&z[2 * k + 1]), &v[2 * k]);
            }
            (&re * &s, &im * &s)
        };
        let (xr, xi) = zdot(x);
        let (yr, yi) = zdot(y);
        let mut out = Vec::with_capacity(d);
        for k in 0..d / 2 {
            let (ar, ai) = (&x[2 * k], &x[2 * k + 1]);
            let (br, bi) = (&y[2 * k], &y[2 * k + 1]);
            let mut re = ar * &yr;
            re.add_mul(&(-ai), &yi);
            re.add_mul(br, &xr);
            re.add_mul(&(-bi), &xi);
            let mut im = ar * &yi;
            im.add_mul(ai, &yr);
            im.add_mul(br, &xi);
            im.add_mul(bi, &xr);
            out.push(re);
            out.push(im);
        }
        out
    }

    /// Christoffel symbols `Gamma^a_bc`, index `(a * d + b) * d + c`, from
    /// the closed form.
    pub fn christoffel(&self, z: &[f64]) -> Vec<f64> {
        let d = self.real_dim();
        let mut out = vec![0.0; d * d * d];
        if self.is_flat() {
            return out;
        }
        let mut eb = vec![0.0; d];
        let mut ec = vec![0.0; d];
        for b in 0..d {
            eb[b] = 1.0;
            for c in 0..d {
                ec[c] = 1.0;
                let v = self.gamma(z, &eb, &ec);
                for a in 0..d {
                    out[(a * d + b) * d + c] = v[a];
                }
                ec[c] = 0.0;
            }
            eb[b] = 0.0;
        }
        out
    }

    /// Closed-form curvature `R(X,Y,Z,W)`.
    pub fn curvature(&self, z: &[f64], x: &[f64], y: &[f64], zv: &[f64], w: &[f64]) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        let g = |a: &[f64], b: &[f64]| self.inner(z, a, b);
        let (jx, jy, jz) = (apply_j(x), apply_j(y), apply_j(zv));
        self.rho
            * (g(y, zv) * g(x, w) - g(x, zv) * g(y, w) + g(&jy, zv) * g(&jx, w)
                - g(&jx, zv) * g(&jy, w)
                + 2.0 * g(x, &jy) * g(&jz, w))
    }

    /// All components `R_abcd = R(e_a, e_b, e_c, e_d)`, index
    /// `((a * d + b) * d + c) * d + e`.
    pub fn curvature_tensor(&self, z: &[f64]) -> Vec<f64> {
        let d = self.real_dim();
        let mut out = vec![0.0; d * d * d * d];
        if self.is_flat() {
            return out;
        }
        let g = self.metric(z);
        let jm = j_matrix(d);
        // (J^T g)_ab = g(J e_a, e_b)
        let jg = jm.transpose() * &g;
        let r = self.rho;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        out[((a * d + b) * d + c) * d + e] = r
                            * (g[(b, c)] * g[(a, e)] - g[(a, c)] * g[(b, e)]
                                + jg[(b, c)] * jg[(a, e)]
                                - jg[(a, c)] * jg[(b, e)]
                                + 2.0 * jg[(b, a)] * jg[(c, e)]);
                    }
                }
            }
        }
        out
    }

    /// Christoffel symbols and their first derivatives computed from the
    /// metric alone, by seeding the chart coordinates as jet variables.
    /// Returns `(Gamma^a_bc, d_e Gamma^a_bc)` with index `(a*d+b)*d+c` and
    /// `((a*d+b)*d+c)*d+e`. Needs `real_dim <= 8`.
    pub fn christoffel_from_metric(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>), JetError> {
        let d = self.real_dim();
        if d > MAX_DIM {
            return Err(JetError::Usage(format!(
                "real dimension {d} exceeds {MAX_DIM}"
            )));
        }
        let vars: Vec<Jet> = (0..d)
            .map(|i| Jet::seed(d, 2, z, i))
            .collect::<Result<_, _>>()?;
        let gj = self.metric_jets(&vars);
        let g0 = DMatrix::from_fn(d, d, |a, b| gj[a * d + b].value());
        let gi = g0
            .clone()
            .try_inverse()
            .ok_or_else(|| JetError::Domain("degenerate metric".into()))?;
        let dg = |a: usize, b: usize, c: usize| gj[a * d + b].d1(c);
        let ddg = |a: usize, b: usize, c: usize, e: usize| gj[a * d + b].d2(c, e);
        let idx3 = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
        let mut low = vec![0.0; d * d * d];
        let mut dlow = vec![0.0; d * d * d * d];
        for m in 0..d {
            for b in 0..d {
                for c in 0..d {
                    low[idx3(m, b, c)] = 0.5 * (dg(m, c, b) + dg(m, b, c) - dg(b, c, m));
                    for e in 0..d {
                        dlow[idx3(m, b, c) * d + e] =
                            0.5 * (ddg(m, c, b, e) + ddg(m, b, c, e) - ddg(b, c, m, e));
                    }
                }
            }
        }
        // d_e g^{-1} = -g^{-1} (d_e g) g^{-1}
        let mut dgi = Vec::with_capacity(d);
        for e in 0..d {
            let dge = DMatrix::from_fn(d, d, |a, b| dg(a, b, e));
            dgi.push(-(&gi * dge * &gi));
        }
        let mut gam = vec![0.0; d * d * d];
        let mut dgam = vec![0.0; d * d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut s = 0.0;
                    for m in 0..d {
                        s += gi[(a, m)] * low[idx3(m, b, c)];
                    }
                    gam[idx3(a, b, c)] = s;
                    for e in 0..d {
                        let mut t = 0.0;
                        for m in 0..d {
                            t += dgi[e][(a, m)] * low[idx3(m, b, c)]
                                + gi[(a, m)] * dlow[idx3(m, b, c) * d + e];
                        }
                        dgam[idx3(a, b, c) * d + e] = t;
                    }
                }
            }
        }
        Ok((gam, dgam))
    }

    /// Curvature tensor from [`AmbientSpec::christoffel_from_metric`]; same
    /// layout as [`AmbientSpec::curvature_tensor`].
    pub fn curvature_from_metric(&self, z: &[f64]) -> Result<Vec<f64>, JetError> {
        let d = self.real_dim();
        let (gam, dgam) = self.christoffel_from_metric(z)?;
        let g = self.metric(z);
        let idx3 = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
        let mut out = vec![0.0; d * d * d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    // (R(e_i, e_j) e_k)^m
                    let mut rm = vec![0.0; d];
                    for (m, r) in rm.iter_mut().enumerate() {
                        let mut s = dgam[idx3(m, j, k) * d + i] - dgam[idx3(m, i, k) * d + j];
                        for p in 0..d {
                            s += gam[idx3(m, i, p)] * gam[idx3(p, j, k)]
                                - gam[idx3(m, j, p)] * gam[idx3(p, i, k)];
                        }
                        *r = s;
                    }
                    for l in 0..d {
                        let mut s = 0.0;
                        for (m, r) in rm.iter().enumerate() {
                            s += r * g[(m, l)];
                        }
                        out[((i * d + j) * d + k) * d + l] = s;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Ricci tensor `Ric(Y,Z) = sum_i R(e_i, Y, Z, e_i)` contracted over a
    /// `g`-orthonormal frame built from the closed-form curvature.
    pub fn ricci(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.real_dim();
        let rt = self.curvature_tensor(z);
        let g = self.metric(z);
        let gi = g.try_inverse().expect("metric is positive definite");
        // sum over an orthonormal frame equals contraction with g^{-1}
        DMatrix::from_fn(d, d, |y, zc| {
            let mut s = 0.0;
            for i in 0..d {
                for l in 0..d {
                    s += gi[(i, l)] * rt[((i * d + y) * d + zc) * d + l];
                }
            }
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_metric_is_identity() {
        let a = AmbientSpec::space_form(2, 1.0);
        let g = a.metric(&[0.0; 4]);
        assert_eq!(g, DMatrix::identity(4, 4));
    }

    #[test]
    fn einstein_constants() {
        assert_eq!(AmbientSpec::space_form(2, 1.0).einstein_constant(), 6.0);
        assert_eq!(AmbientSpec::space_form(4, -0.5).einstein_constant(), -5.0);
        assert_eq!(AmbientSpec::flat(4).einstein_constant(), 0.0);
    }

    #[test]
    fn chart_bound() {
        let a = AmbientSpec::space_form(2, -1.0);
        assert!(a.check_chart(&[0.5, 0.0, 0.0, 0.0]).is_ok());
        assert!(a.check_chart(&[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn holomorphic_sectional_curvature() {
        let a = AmbientSpec::space_form(2, 0.7);
        let z = [0.1, -0.2, 0.3, 0.05];
        let g = a.metric(&z);
        let x = [0.3, 1.0, -0.2, 0.4];
        let n2: f64 = (0..4)
            .map(|i| (0..4).map(|j| x[i] * g[(i, j)] * x[j]).sum::<f64>())
            .sum();
        let jx = apply_j(&x);
        let k = a.curvature(&z, &x, &jx, &jx, &x) / (n2 * n2);
        assert!((k - 2.8).abs() < 1e-12);
    }

    #[test]
    fn closed_form_christoffels_match_metric() {
        let a = AmbientSpec::space_form(2, -0.5);
        let z = [0.2, 0.1, -0.3, 0.4];
        let (gam, _) = a.christoffel_from_metric(&z).unwrap();
        let cf = a.christoffel(&z);
        for (x, y) in gam.iter().zip(&cf) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
