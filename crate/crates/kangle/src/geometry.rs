//! Induced geometry of an immersion at one domain point.
//!
//! A [`Snapshot`] keeps the Taylor jets of every field that later needs to be
//! differentiated, next to plain values at the point. With truncation order
//! `K`, first-order quantities (`dF`, `g_M`, `F*omega`, `c^2`) carry order
//! `K - 1` and second-order ones (`Gamma`, `nabla dF`, `H`, `(JH)^T`,
//! `delta F*omega`) carry order `K - 2`.
//!
//! Index conventions: `E[a][i] = d_i F^a`, `Omega_ij = g(J E_i, E_j)`,
//! `A^k_i` is `(F*omega)^#` with `g(A X, Y) = Omega(X, Y)`, and
//! `Gamma^k_ij` is stored at `(k * d + i) * d + j`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::ambient::{apply_j, apply_j_jets, AmbientSpec};
use crate::dsl::{EvalError, ImmersionSpec};
use crate::jets::{Jet, MAX_ORDER};

/// Lagrangian gate on the largest angle cosine.
pub const TAU_L: f64 = 1e-6;
/// Complex gate on the smallest angle cosine.
pub const TAU_C: f64 = 1e-6;
/// Equal-angle gate on the spread of the angle cosines.
pub const TAU_EQ: f64 = 1e-8;
/// Angle cosines closer than this are merged and flagged.
pub const MERGE_GAP: f64 = 1e-10;
/// Allowed excess of a cosine above one before clamping.
pub const CLAMP_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("not an immersion at the point: {0}")]
    NotImmersion(String),
    #[error("singularity: {0}")]
    Singular(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Complex,
    Lagrangian,
    Generic,
    Mixed,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Complex => "complex",
            Classification::Lagrangian => "lagrangian",
            Classification::Generic => "generic",
            Classification::Mixed => "mixed",
        }
    }
}

/// Classifies sorted angle cosines with the default tolerances.
pub fn classify(cos: &[f64]) -> Classification {
    let max = cos.iter().cloned().fold(0.0, f64::max);
    let min = cos.iter().cloned().fold(1.0, f64::min);
    if max < TAU_L {
        Classification::Lagrangian
    } else if min > 1.0 - TAU_C {
        Classification::Complex
    } else if min < TAU_L || max > 1.0 - TAU_C {
        Classification::Mixed
    } else {
        Classification::Generic
    }
}

/// Orthonormal frame `{X_a, Y_a = J_omega X_a}` and `Z_a = (X_a - i Y_a)/2`,
/// all as coordinate vectors on the domain.
#[derive(Debug, Clone)]
pub struct ComplexFrame {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<Complex64>>,
}

impl ComplexFrame {
    pub fn zbar(&self, a: usize) -> Vec<Complex64> {
        self.z[a].iter().map(|c| c.conj()).collect()
    }

    /// Frame `Z'_b = sum_m U_bm Z_m` for a unitary `U`.
    pub fn rotated(&self, u: &[Vec<Complex64>]) -> ComplexFrame {
        let n = self.z.len();
        let d = self.z[0].len();
        let mut z = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for row in u.iter().take(n) {
            let mut v = vec![Complex64::new(0.0, 0.0); d];
            for (m, zm) in self.z.iter().enumerate() {
                for k in 0..d {
                    v[k] += row[m] * zm[k];
                }
            }
            x.push(v.iter().map(|c| 2.0 * c.re).collect());
            y.push(v.iter().map(|c| -2.0 * c.im).collect());
            z.push(v);
        }
        ComplexFrame { x, y, z }
    }
}

/// Normal-bundle data of Remark-style tangent/normal comparisons, in a
/// `g_M`-orthonormal tangent frame and a `g`-orthonormal normal frame.
#[derive(Debug, Clone)]
pub struct NormalData {
    /// Normal frame as ambient vectors (columns).
    pub frame: DMatrix<f64>,
    /// `Phi(e_i) = (J dF e_i)^perp` as a matrix `[alpha, i]`.
    pub phi: DMatrix<f64>,
    /// `Xi(nu_a) = (J nu_a)^T` as a matrix `[i, alpha]`.
    pub xi: DMatrix<f64>,
    /// `omega^perp` as the operator `U -> (J U)^perp`, matrix `[beta, alpha]`.
    pub omega_perp: DMatrix<f64>,
    /// Polar factor of `omega^perp`.
    pub j_perp: DMatrix<f64>,
    /// Normal angle cosines, descending.
    pub normal_angles: Vec<f64>,
}

/// All induced quantities at one point.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub n: usize,
    /// Domain dimension `2n`.
    pub d: usize,
    /// Ambient real dimension `4n`.
    pub big_d: usize,
    pub order: usize,
    pub point: Vec<f64>,
    pub ambient: AmbientSpec,

    pub f: Vec<Jet>,
    /// `E[a * d + i]`, order `K-1`.
    pub e: Vec<Jet>,
    /// Ambient metric along `F`, order `K-1`.
    pub gn: Vec<Jet>,
    pub g: Vec<Jet>,
    pub g_inv: Vec<Jet>,
    pub omega: Vec<Jet>,
    /// `A[k * d + i] = A^k_i`.
    pub sharp: Vec<Jet>,
    /// `|F*omega|^2 / n`, which is `cos^2 theta` for equal angles.
    pub c2: Jet,
    pub gamma: Vec<Jet>,
    /// `B[(a * d + i) * d + j] = (nabla dF)(d_i, d_j)^a`, order `K-2`.
    pub sff: Vec<Jet>,
    pub h: Vec<Jet>,
    /// `((JH)^T)^flat_i = g(JH, E_i)`.
    pub jh_flat: Vec<Jet>,
    /// `(JH)^T` as a domain vector.
    pub jh_top: Vec<Jet>,
    /// `delta F*omega` with `delta alpha_j = -g^{li} (nabla_l alpha)_ij`.
    pub delta_omega: Vec<Jet>,

    pub f0: Vec<f64>,
    pub e0: DMatrix<f64>,
    pub gn0: DMatrix<f64>,
    pub g0: DMatrix<f64>,
    pub g_inv0: DMatrix<f64>,
    pub omega0: DMatrix<f64>,
    pub sharp0: DMatrix<f64>,
    /// Columns form a `g_M`-orthonormal, oriented frame.
    pub frame: DMatrix<f64>,
    /// `F*omega` in the orthonormal frame.
    pub skew: DMatrix<f64>,
    pub angles: Vec<f64>,
    pub rank: usize,
    pub classification: Classification,
    /// Largest raw cosine before clamping.
    pub raw_max_cos: f64,
    /// True when two distinct singular values were merged.
    pub merged: bool,
    pub theta_signed: Option<f64>,
    /// Pointwise polar factor `J_omega` as a coordinate endomorphism.
    pub j_point: DMatrix<f64>,
    pub gamma0: Vec<f64>,
    /// `R^M_ijkl = g(R(d_i, d_j) d_k, d_l)`.
    pub riemann: Vec<f64>,
}

fn trunc(v: &[Jet], order: usize) -> Vec<Jet> {
    v.iter().map(|j| j.truncate(order)).collect()
}

fn values(v: &[Jet], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |r, c| v[r * cols + c].value())
}

/// Inverse of a square jet matrix by the Neumann series around its value.
pub fn jet_matrix_inverse(m: &[Jet], n: usize) -> Option<Vec<Jet>> {
    let (dim, order) = (m[0].dim(), m[0].order());
    let m0 = values(m, n, n);
    let inv0 = m0.try_inverse()?;
    // nilpotent part
    let mut nil: Vec<Jet> = m.to_vec();
    for x in nil.iter_mut() {
        *x = x.add_scalar(-x.value());
    }
    let const_mul = |a: &DMatrix<f64>, b: &[Jet]| -> Vec<Jet> {
        let mut out = vec![Jet::zero(dim, order); n * n];
        for i in 0..n {
            for j in 0..n {
                let o = &mut out[i * n + j];
                for k in 0..n {
                    o.axpy(a[(i, k)], &b[k * n + j]);
                }
            }
        }
        out
    };
    let mut term: Vec<Jet> = (0..n * n)
        .map(|k| Jet::constant(dim, order, inv0[(k / n, k % n)]))
        .collect();
    let mut sum = term.clone();
    for _ in 0..order {
        // term <- -inv0 * nil * term
        let mut nt = vec![Jet::zero(dim, order); n * n];
        for i in 0..n {
            for j in 0..n {
                let o = &mut nt[i * n + j];
                for k in 0..n {
                    o.add_mul(&nil[i * n + k], &term[k * n + j]);
                }
            }
        }
        term = const_mul(&(-&inv0), &nt);
        for (s, t) in sum.iter_mut().zip(&term) {
            s.axpy(1.0, t);
        }
    }
    Some(sum)
}

/// Real Schur-type pairing of the singular values of a skew matrix.
/// Returns descending cosines (raw, unclamped) and a merge flag.
fn paired_singular_values(s: &DMatrix<f64>) -> Result<(Vec<f64>, bool), GeometryError> {
    let d = s.nrows();
    let sts = s.transpose() * s;
    let eig = SymmetricEigen::new(sts);
    let mut lam: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let scale = lam[0].abs().max(1.0);
    let mut cos = Vec::with_capacity(d / 2);
    for k in 0..d / 2 {
        let (a, b) = (lam[2 * k], lam[2 * k + 1]);
        if (a - b).abs() > 1e-7 * scale {
            return Err(GeometryError::Degenerate(format!(
                "singular values {a:e} and {b:e} do not pair"
            )));
        }
        cos.push((0.5 * (a + b)).max(0.0).sqrt());
    }
    let mut merged = false;
    for k in 1..cos.len() {
        let gap = cos[k - 1] - cos[k];
        if gap > 0.0 && gap < MERGE_GAP {
            merged = true;
            cos[k] = cos[k - 1];
        }
    }
    Ok((cos, merged))
}

/// Polar factor `U` of `M = U |M|`, restricted to singular values above `tol`.
pub fn polar_factor(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mtm = m.transpose() * m;
    let eig = SymmetricEigen::new(mtm);
    let q = &eig.eigenvectors;
    let dinv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| {
        if l > tol * tol {
            1.0 / l.sqrt()
        } else {
            0.0
        }
    }));
    m * (q * dinv * q.transpose())
}

impl Snapshot {
    pub fn compute(
        spec: &ImmersionSpec,
        point: &[f64],
        order: usize,
    ) -> Result<Snapshot, GeometryError> {
        if !(3..=MAX_ORDER).contains(&order) {
            return Err(GeometryError::Usage(format!(
                "snapshot order must be 3 or 4, got {order}"
            )));
        }
        let n = spec.n;
        let d = 2 * n;
        let big_d = 4 * n;
        let k1 = order - 1;
        let k2 = order - 2;
        let mut ambient = spec.ambient;
        ambient.complex_dim = 2 * n;

        let f = spec.eval_components(point, order)?;
        let mut e = Vec::with_capacity(big_d * d);
        for fa in &f {
            for i in 0..d {
                e.push(fa.diff(i));
            }
        }
        let z1 = trunc(&f, k1);
        let gn = ambient.metric_jets(&z1);
        let ge: Vec<Jet> = if ambient.is_flat() {
            e.clone()
        } else {
            let mut ge = vec![Jet::zero(d, k1); big_d * d];
            for b in 0..big_d {
                for j in 0..d {
                    let o = &mut ge[b * d + j];
                    for a in 0..big_d {
                        o.add_mul(&gn[b * big_d + a], &e[a * d + j]);
                    }
                }
            }
            ge
        };
        let je = apply_j_rows(&e, big_d, d);
        let mut g = vec![Jet::zero(d, k1); d * d];
        let mut omega = vec![Jet::zero(d, k1); d * d];
        for i in 0..d {
            for j in 0..d {
                for b in 0..big_d {
                    g[i * d + j].add_mul(&e[b * d + i], &ge[b * d + j]);
                    omega[i * d + j].add_mul(&je[b * d + i], &ge[b * d + j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let s = (&g[i * d + j] + &g[j * d + i]).scale(0.5);
                g[i * d + j] = s.clone();
                g[j * d + i] = s;
                let w = (&omega[i * d + j] - &omega[j * d + i]).scale(0.5);
                omega[j * d + i] = -&w;
                omega[i * d + j] = w;
            }
        }
        let g0 = values(&g, d, d);
        let chol = Cholesky::new(g0.clone()).ok_or_else(|| {
            GeometryError::NotImmersion("induced metric is not positive definite".into())
        })?;
        let eigs = SymmetricEigen::new(g0.clone()).eigenvalues;
        let (emin, emax) = eigs
            .iter()
            .fold((f64::MAX, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if !(emin > 1e-12 * emax.max(1e-300)) {
            return Err(GeometryError::NotImmersion(format!(
                "induced metric has eigenvalue {emin:e}"
            )));
        }
        let g_inv = jet_matrix_inverse(&g, d)
            .ok_or_else(|| GeometryError::NotImmersion("singular induced metric".into()))?;
        let mut sharp = vec![Jet::zero(d, k1); d * d];
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    sharp[k * d + i].add_mul(&g_inv[k * d + j], &omega[i * d + j]);
                }
            }
        }
        let mut c2 = Jet::zero(d, k1);
        for k in 0..d {
            for i in 0..d {
                c2.add_mul(&sharp[k * d + i], &sharp[i * d + k]);
            }
        }
        let c2 = c2.scale(-1.0 / d as f64);

        // second-order quantities
        let g_inv2 = trunc(&g_inv, k2);
        let e2 = trunc(&e, k2);
        let ge2 = trunc(&ge, k2);
        let om2 = trunc(&omega, k2);
        let dg: Vec<Jet> = (0..d * d * d).map(|x| g[x / d].diff(x % d)).collect();
        // dg[(m*d+i)*d+j] = d_j g_mi
        let mut low = vec![Jet::zero(d, k2); d * d * d];
        for m in 0..d {
            for i in 0..d {
                for j in i..d {
                    let v = (&(&dg[(m * d + j) * d + i] + &dg[(m * d + i) * d + j])
                        - &dg[(i * d + j) * d + m])
                        .scale(0.5);
                    low[(m * d + j) * d + i] = v.clone();
                    low[(m * d + i) * d + j] = v;
                }
            }
        }
        let mut gamma = vec![Jet::zero(d, k2); d * d * d];
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = Jet::zero(d, k2);
                    for m in 0..d {
                        s.add_mul(&g_inv2[k * d + m], &low[(m * d + i) * d + j]);
                    }
                    gamma[(k * d + j) * d + i] = s.clone();
                    gamma[(k * d + i) * d + j] = s;
                }
            }
        }
        let z2 = trunc(&f, k2);
        let mut sff = vec![Jet::zero(d, k2); big_d * d * d];
        for i in 0..d {
            for j in i..d {
                let ei: Vec<Jet> = (0..big_d).map(|a| e2[a * d + i].clone()).collect();
                let ej: Vec<Jet> = (0..big_d).map(|a| e2[a * d + j].clone()).collect();
                let gam_n = ambient.gamma_jets(&z2, &ei, &ej);
                for a in 0..big_d {
                    let mut b = e[a * d + i].diff(j);
                    b.axpy(1.0, &gam_n[a]);
                    for k in 0..d {
                        b.add_mul(&(-&gamma[(k * d + i) * d + j]), &e2[a * d + k]);
                    }
                    sff[(a * d + j) * d + i] = b.clone();
                    sff[(a * d + i) * d + j] = b;
                }
            }
        }
        let mut h = vec![Jet::zero(d, k2); big_d];
        for (a, ha) in h.iter_mut().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    ha.add_mul(&g_inv2[i * d + j], &sff[(a * d + i) * d + j]);
                }
            }
            *ha = ha.scale(1.0 / d as f64);
        }
        let jh = apply_j_jets(&h);
        let mut jh_flat = vec![Jet::zero(d, k2); d];
        for (i, v) in jh_flat.iter_mut().enumerate() {
            for b in 0..big_d {
                v.add_mul(&jh[b], &ge2[b * d + i]);
            }
        }
        let jh_top = mat_vec(&g_inv2, &jh_flat, d);
        let mut delta_omega = vec![Jet::zero(d, k2); d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut nab = omega[i * d + j].diff(l);
                    for m in 0..d {
                        nab.add_mul(&(-&gamma[(m * d + l) * d + i]), &om2[m * d + j]);
                        nab.add_mul(&(-&gamma[(m * d + l) * d + j]), &om2[i * d + m]);
                    }
                    delta_omega[j].add_mul(&(-&g_inv2[l * d + i]), &nab);
                }
            }
        }

        // pointwise data
        let f0: Vec<f64> = f.iter().map(|x| x.value()).collect();
        let e0 = values(&e, big_d, d);
        let gn0 = values(&gn, big_d, big_d);
        let g_inv0 = values(&g_inv, d, d);
        let omega0 = values(&omega, d, d);
        let sharp0 = values(&sharp, d, d);
        let l = chol.l();
        let frame = l
            .clone()
            .try_inverse()
            .expect("cholesky factor is invertible")
            .transpose();
        let skew = frame.transpose() * &omega0 * &frame;
        let (raw, merged) = paired_singular_values(&skew)?;
        let raw_max_cos = raw.iter().cloned().fold(0.0, f64::max);
        if raw_max_cos > 1.0 + 1e-6 {
            return Err(GeometryError::Degenerate(format!(
                "angle cosine {raw_max_cos} exceeds 1"
            )));
        }
        let angles: Vec<f64> = raw.iter().map(|c| c.min(1.0)).collect();
        let rank = 2 * angles.iter().filter(|&&c| c > TAU_L).count();
        let classification = classify(&angles);
        let theta_signed = if n == 1 { Some(skew[(0, 1)]) } else { None };
        let jf = polar_factor(&skew.transpose(), TAU_L);
        let j_point = &frame * jf * l.transpose();
        let gamma0: Vec<f64> = gamma.iter().map(|x| x.value()).collect();
        let riemann = riemann_from_gamma(&gamma, &g0, d);

        Ok(Snapshot {
            n,
            d,
            big_d,
            order,
            point: point.to_vec(),
            ambient,
            f,
            e,
            gn,
            g,
            g_inv,
            omega,
            sharp,
            c2,
            gamma,
            sff,
            h,
            jh_flat,
            jh_top,
            delta_omega,
            f0,
            e0,
            gn0,
            g0,
            g_inv0,
            omega0,
            sharp0,
            frame,
            skew,
            angles,
            rank,
            classification,
            raw_max_cos,
            merged,
            theta_signed,
            j_point,
            gamma0,
            riemann,
        })
    }

    fn k1(&self) -> usize {
        self.order - 1
    }

    fn k2(&self) -> usize {
        self.order - 2
    }

    pub fn angle_spread(&self) -> f64 {
        self.angles[0] - self.angles[self.n - 1]
    }

    pub fn equal_angles(&self) -> bool {
        self.angle_spread() <= TAU_EQ
    }

    /// `g_M(X, Y)` at the point.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += x[i] * self.g0[(i, j)] * y[j];
            }
        }
        s
    }

    pub fn inner_c(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let d = self.d;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                s += x[i] * self.g0[(i, j)] * y[j];
            }
        }
        s
    }

    /// Ambient `g(U, W)` at `F(p)`.
    pub fn amb_inner(&self, u: &[f64], w: &[f64]) -> f64 {
        let bd = self.big_d;
        let mut s = 0.0;
        for a in 0..bd {
            for b in 0..bd {
                s += u[a] * self.gn0[(a, b)] * w[b];
            }
        }
        s
    }

    pub fn amb_inner_c(&self, u: &[Complex64], w: &[Complex64]) -> Complex64 {
        let bd = self.big_d;
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..bd {
            for b in 0..bd {
                s += u[a] * self.gn0[(a, b)] * w[b];
            }
        }
        s
    }

    /// `dF(X)` for a domain vector.
    pub fn push(&self, x: &[f64]) -> Vec<f64> {
        (0..self.big_d)
            .map(|a| (0..self.d).map(|i| self.e0[(a, i)] * x[i]).sum())
            .collect()
    }

    pub fn push_c(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.big_d)
            .map(|a| (0..self.d).map(|i| x[i] * self.e0[(a, i)]).sum())
            .collect()
    }

    pub fn h0(&self) -> Vec<f64> {
        self.h.iter().map(|x| x.value()).collect()
    }

    pub fn h_norm2(&self) -> f64 {
        let h = self.h0();
        self.amb_inner(&h, &h)
    }

    pub fn jh_flat0(&self) -> Vec<f64> {
        self.jh_flat.iter().map(|x| x.value()).collect()
    }

    pub fn jh_top0(&self) -> Vec<f64> {
        self.jh_top.iter().map(|x| x.value()).collect()
    }

    pub fn delta_omega0(&self) -> Vec<f64> {
        self.delta_omega.iter().map(|x| x.value()).collect()
    }

    /// Value of `|F*omega| / sqrt(n)`.
    pub fn c0(&self) -> f64 {
        self.c2.value().max(0.0).sqrt()
    }

    /// `nabla dF` at the point, `[a][i][j]` flattened.
    pub fn sff0(&self) -> Vec<f64> {
        self.sff.iter().map(|x| x.value()).collect()
    }

    pub fn sff_at(&self, i: usize, j: usize) -> Vec<f64> {
        let d = self.d;
        (0..self.big_d)
            .map(|a| self.sff[(a * d + i) * d + j].value())
            .collect()
    }

    pub fn sff_norm2(&self) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let w = self.g_inv0[(i, k)] * self.g_inv0[(j, l)];
                        if w != 0.0 {
                            s += w * self.amb_inner(&self.sff_at(i, j), &self.sff_at(k, l));
                        }
                    }
                }
            }
        }
        s
    }

    /// Largest tangential component of `nabla dF`, measured in `g`.
    pub fn sff_tangential_defect(&self) -> f64 {
        let d = self.d;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let b = self.sff_at(i, j);
                for k in 0..d {
                    let ek: Vec<f64> = (0..self.big_d).map(|a| self.e0[(a, k)]).collect();
                    m = m.max(self.amb_inner(&b, &ek).abs());
                }
            }
        }
        m
    }

    // Field realizations that need non-Lagrangian or non-complex points.

    /// `cos theta = |F*omega| / sqrt(n)` as a jet, order `K-1`.
    pub fn c_field(&self) -> Result<Jet, GeometryError> {
        if self.c2.value() <= TAU_L * TAU_L {
            return Err(GeometryError::Singular(
                "cos theta vanishes (Lagrangian point)".into(),
            ));
        }
        self.c2
            .try_sqrt()
            .map_err(|e| GeometryError::Singular(e.to_string()))
    }

    /// `J_omega = (F*omega)^# / cos theta` as jets `[k * d + i]`, order `K-1`.
    pub fn j_field(&self) -> Result<Vec<Jet>, GeometryError> {
        let c = self.c_field()?;
        let ic = c
            .try_recip()
            .map_err(|e| GeometryError::Singular(e.to_string()))?;
        Ok(self.sharp.iter().map(|a| a * &ic).collect())
    }

    /// `sin^2 theta = 1 - cos^2 theta`, order `K-1`.
    pub fn s2_field(&self) -> Jet {
        (-&self.c2).add_scalar(1.0)
    }

    /// `kappa = n log((1 + c)/(1 - c))`, order `K-1`.
    pub fn kappa_field(&self) -> Result<Jet, GeometryError> {
        let c = self.c2.value().max(0.0).sqrt();
        if c >= 1.0 - TAU_C {
            return Err(GeometryError::Singular("complex point".into()));
        }
        let cj = if self.c2.value() > TAU_L * TAU_L {
            self.c_field()?
        } else {
            return Err(GeometryError::Singular(
                "kappa is not smooth at a Lagrangian point".into(),
            ));
        };
        let num = cj.add_scalar(1.0);
        let den = (-&cj).add_scalar(1.0);
        let q = num
            .try_div(&den)
            .map_err(|e| GeometryError::Singular(e.to_string()))?;
        let l = q
            .try_log()
            .map_err(|e| GeometryError::Singular(e.to_string()))?;
        Ok(l.scale(self.n as f64))
    }

    /// `sigma = (2n (JH)^T_flat + delta F*omega) / sin^2 theta`, order `K-2`.
    pub fn sigma_field(&self, delta_sign: f64) -> Result<Vec<Jet>, GeometryError> {
        if self.c2.value() >= (1.0 - TAU_C) * (1.0 - TAU_C) {
            return Err(GeometryError::Singular(
                "sigma is undefined at complex points".into(),
            ));
        }
        let is2 = self
            .s2_field()
            .truncate(self.k2())
            .try_recip()
            .map_err(|e| GeometryError::Singular(e.to_string()))?;
        Ok((0..self.d)
            .map(|i| {
                let mut v = self.jh_flat[i].scale(2.0 * self.n as f64);
                v.axpy(delta_sign, &self.delta_omega[i]);
                &v * &is2
            })
            .collect())
    }

    /// `|F*omega|^2` with the half-sum convention, order `K-1`.
    pub fn omega_norm2_field(&self) -> Jet {
        let d = self.d;
        let mut s = Jet::zero(d, self.k1());
        for i in 0..d {
            for j in 0..d {
                // Omega^{ij} Omega_ij = sum g^{ik} g^{jl} Omega_kl Omega_ij
                let mut up = Jet::zero(d, self.k1());
                for k in 0..d {
                    for l in 0..d {
                        let w = &self.g_inv[i * d + k] * &self.g_inv[j * d + l];
                        up.add_mul(&w, &self.omega[k * d + l]);
                    }
                }
                s.add_mul(&up, &self.omega[i * d + j]);
            }
        }
        s.scale(0.5)
    }

    // Calculus at the point.

    /// Exterior derivative of a function, as a covector.
    pub fn df(&self, f: &Jet) -> Vec<f64> {
        (0..self.d).map(|i| f.d1(i)).collect()
    }

    pub fn grad(&self, f: &Jet) -> Vec<f64> {
        let df = self.df(f);
        self.raise(&df)
    }

    pub fn raise(&self, w: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|k| (0..self.d).map(|j| self.g_inv0[(k, j)] * w[j]).sum())
            .collect()
    }

    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|k| (0..self.d).map(|j| self.g0[(k, j)] * v[j]).sum())
            .collect()
    }

    /// `g^{ij} (d_i d_j f - Gamma^k_ij d_k f)`.
    pub fn trace_hessian(&self, f: &Jet) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut h = f.d2(i, j);
                for k in 0..d {
                    h -= self.gamma0[(k * d + i) * d + j] * f.d1(k);
                }
                s += self.g_inv0[(i, j)] * h;
            }
        }
        s
    }

    /// `div V = d_k V^k + Gamma^k_km V^m`.
    pub fn div(&self, v: &[Jet]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for k in 0..d {
            s += v[k].d1(k);
            for m in 0..d {
                s += self.gamma0[(k * d + k) * d + m] * v[m].value();
            }
        }
        s
    }

    /// `(nabla_l V)^k` at `[k, l]`.
    pub fn nabla_vec(&self, v: &[Jet]) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d, d, |k, l| {
            let mut s = v[k].d1(l);
            for m in 0..d {
                s += self.gamma0[(k * d + l) * d + m] * v[m].value();
            }
            s
        })
    }

    /// `(nabla_l alpha)_ij` at `(l * d + i) * d + j`.
    pub fn nabla_2form(&self, a: &[Jet]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut s = a[i * d + j].d1(l);
                    for m in 0..d {
                        s -= self.gamma0[(m * d + l) * d + i] * a[m * d + j].value();
                        s -= self.gamma0[(m * d + l) * d + j] * a[i * d + m].value();
                    }
                    out[(l * d + i) * d + j] = s;
                }
            }
        }
        out
    }

    /// `(nabla_l T)^k_i` at `(l * d + k) * d + i` for `T[k * d + i]`.
    pub fn nabla_11(&self, t: &[Jet]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d * d];
        for l in 0..d {
            for k in 0..d {
                for i in 0..d {
                    let mut s = t[k * d + i].d1(l);
                    for m in 0..d {
                        s += self.gamma0[(k * d + l) * d + m] * t[m * d + i].value();
                        s -= self.gamma0[(m * d + l) * d + i] * t[k * d + m].value();
                    }
                    out[(l * d + k) * d + i] = s;
                }
            }
        }
        out
    }

    /// `-g^{li} (nabla_l alpha)_ij`, a covector.
    pub fn codiff_2form(&self, a: &[Jet]) -> Vec<f64> {
        let d = self.d;
        let na = self.nabla_2form(a);
        (0..d)
            .map(|j| {
                let mut s = 0.0;
                for l in 0..d {
                    for i in 0..d {
                        s -= self.g_inv0[(l, i)] * na[(l * d + i) * d + j];
                    }
                }
                s
            })
            .collect()
    }

    /// `-g^{li} (nabla_l T)^k_i`, a vector.
    pub fn codiff_11(&self, t: &[Jet]) -> Vec<f64> {
        let d = self.d;
        let nt = self.nabla_11(t);
        (0..d)
            .map(|k| {
                let mut s = 0.0;
                for l in 0..d {
                    for i in 0..d {
                        s -= self.g_inv0[(l, i)] * nt[(l * d + k) * d + i];
                    }
                }
                s
            })
            .collect()
    }

    /// `(d beta)_ij = d_i beta_j - d_j beta_i`.
    pub fn d_1form(&self, b: &[Jet]) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d, d, |i, j| b[j].d1(i) - b[i].d1(j))
    }

    /// Largest component of `d(F*omega)`.
    pub fn d_omega_defect(&self) -> f64 {
        let d = self.d;
        let om = &self.omega;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = om[j * d + k].d1(i) + om[k * d + i].d1(j) + om[i * d + j].d1(k);
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Half-sum pairing of two 2-forms given as matrices.
    pub fn form_inner(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let up = &self.g_inv0 * a * &self.g_inv0;
        0.5 * up.component_mul(b).sum()
    }

    /// `(nabla_i H)^a = d_i H^a + Gamma^N(E_i, H)^a`, matrix `[a, i]`.
    pub fn nabla_h(&self) -> DMatrix<f64> {
        let d = self.d;
        let bd = self.big_d;
        let h = self.h0();
        let mut out = DMatrix::from_fn(bd, d, |a, i| self.h[a].d1(i));
        for i in 0..d {
            let ei: Vec<f64> = (0..bd).map(|a| self.e0[(a, i)]).collect();
            let gm = self.ambient.gamma(&self.f0, &ei, &h);
            for a in 0..bd {
                out[(a, i)] += gm[a];
            }
        }
        out
    }

    /// Ambient projector onto `dF(T_pM)`: `E g^{-1} E^T G`.
    pub fn tangent_projector(&self) -> DMatrix<f64> {
        &self.e0 * &self.g_inv0 * self.e0.transpose() * &self.gn0
    }

    /// Normal part of `nabla H`, matrix `[a, i]`.
    pub fn nabla_perp_h(&self) -> DMatrix<f64> {
        let nh = self.nabla_h();
        let pt = self.tangent_projector();
        &nh - pt * &nh
    }

    /// Riemann tensor of the ambient pulled back by `dF`, in the closed form.
    pub fn ambient_curvature_pullback(&self) -> Vec<f64> {
        let d = self.d;
        let r = self.ambient.rho;
        let g = &self.g0;
        let om = &self.omega0;
        let mut out = vec![0.0; d * d * d * d];
        if self.ambient.is_flat() {
            return out;
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        out[((i * d + j) * d + k) * d + l] = r
                            * (g[(j, k)] * g[(i, l)] - g[(i, k)] * g[(j, l)]
                                + om[(j, k)] * om[(i, l)]
                                - om[(i, k)] * om[(j, l)]
                                - 2.0 * om[(i, j)] * om[(k, l)]);
                    }
                }
            }
        }
        out
    }

    /// Curvature predicted by the Gauss equation from the ambient curvature
    /// and `nabla dF`.
    pub fn gauss_curvature_tensor(&self) -> Vec<f64> {
        let d = self.d;
        let mut out = self.ambient_curvature_pullback();
        let b: Vec<Vec<f64>> = (0..d * d).map(|x| self.sff_at(x / d, x % d)).collect();
        let bb = |p: usize, q: usize| self.amb_inner(&b[p], &b[q]);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        out[((i * d + j) * d + k) * d + l] +=
                            bb(i * d + l, j * d + k) - bb(i * d + k, j * d + l);
                    }
                }
            }
        }
        out
    }

    /// `R^M` evaluated on complex vectors.
    pub fn riemann_c(
        &self,
        a: &[Complex64],
        b: &[Complex64],
        c: &[Complex64],
        e: &[Complex64],
    ) -> Complex64 {
        contract4(&self.riemann, self.d, a, b, c, e)
    }

    /// `R^M` in the orthonormal frame.
    pub fn riemann_orthonormal(&self) -> Vec<f64> {
        let d = self.d;
        let p = &self.frame;
        let mut cur = self.riemann.clone();
        // contract one slot at a time; slot s is rotated to the front
        for _ in 0..4 {
            let mut next = vec![0.0; d * d * d * d];
            for a in 0..d {
                for rest in 0..d * d * d {
                    let mut s = 0.0;
                    for i in 0..d {
                        s += p[(i, a)] * cur[i * d * d * d + rest];
                    }
                    // move the new index to the back
                    next[rest * d + a] = s;
                }
            }
            cur = next;
        }
        cur
    }

    /// `<S alpha, alpha>` for the Weitzenböck curvature term on 2-forms.
    pub fn weitzenboeck_term(&self, alpha: &DMatrix<f64>) -> f64 {
        let d = self.d;
        let ro = self.riemann_orthonormal();
        let r = |a: usize, b: usize, c: usize, e: usize| ro[((a * d + b) * d + c) * d + e];
        let o = self.frame.transpose() * alpha * &self.frame;
        let ric = DMatrix::from_fn(d, d, |x, y| (0..d).map(|k| r(k, x, y, k)).sum::<f64>());
        let mut total = 0.0;
        for k in 0..d {
            for l in 0..d {
                let mut s = 0.0;
                for m in 0..d {
                    s += ric[(k, m)] * o[(m, l)] + ric[(l, m)] * o[(k, m)];
                }
                for i in 0..d {
                    for m in 0..d {
                        s += r(i, k, l, m) * o[(m, i)] + r(i, l, k, m) * o[(i, m)];
                    }
                }
                total += s * o[(k, l)];
            }
        }
        0.5 * total
    }

    /// `T[(i*d+j)*d+k] = g(nabla dF(d_i, d_j), J E_k)`.
    pub fn sff_j_tensor(&self) -> Vec<f64> {
        let d = self.d;
        let bd = self.big_d;
        let mut out = vec![0.0; d * d * d];
        let jek: Vec<Vec<f64>> = (0..d)
            .map(|k| apply_j(&(0..bd).map(|a| self.e0[(a, k)]).collect::<Vec<_>>()))
            .collect();
        for i in 0..d {
            for j in 0..d {
                let b = self.sff_at(i, j);
                for k in 0..d {
                    out[(i * d + j) * d + k] = self.amb_inner(&b, &jek[k]);
                }
            }
        }
        out
    }

    /// Hermitian frame built from the pointwise `J_omega` by Gram-Schmidt on
    /// the orthonormal frame with pivoting. Needs `J_omega` of full rank.
    pub fn complex_frame(&self) -> Result<ComplexFrame, GeometryError> {
        if self.rank < self.d {
            return Err(GeometryError::Singular(
                "J_omega is not a complex structure at this point".into(),
            ));
        }
        let d = self.d;
        let cands: Vec<Vec<f64>> = (0..d)
            .map(|i| self.frame.column(i).iter().cloned().collect())
            .collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let mut used = vec![false; d];
        while xs.len() < self.n {
            let mut best: Option<(usize, Vec<f64>, f64)> = None;
            for (c, v) in cands.iter().enumerate() {
                if used[c] {
                    continue;
                }
                let mut w = v.clone();
                for b in &basis {
                    let p = self.inner(b, &w);
                    for k in 0..d {
                        w[k] -= p * b[k];
                    }
                }
                let nw = self.inner(&w, &w).sqrt();
                if best.as_ref().is_none_or(|(_, _, bn)| nw > *bn) {
                    best = Some((c, w, nw));
                }
            }
            let (c, w, nw) = best.expect("candidates remain");
            if nw < 1e-6 {
                return Err(GeometryError::Degenerate(
                    "frame construction lost rank".into(),
                ));
            }
            used[c] = true;
            let x: Vec<f64> = w.iter().map(|v| v / nw).collect();
            let y: Vec<f64> = (0..d)
                .map(|k| (0..d).map(|m| self.j_point[(k, m)] * x[m]).sum())
                .collect();
            basis.push(x.clone());
            basis.push(y.clone());
            xs.push(x);
            ys.push(y);
        }
        let z = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .map(|(a, b)| Complex64::new(a / 2.0, -b / 2.0))
                    .collect()
            })
            .collect();
        Ok(ComplexFrame { x: xs, y: ys, z })
    }

    /// `sum_{b,m} R^M(Z_b, Z_m, conj Z_m, conj Z_b)`.
    pub fn complex_curvature_sum(&self, frame: &ComplexFrame) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for b in 0..self.n {
            for m in 0..self.n {
                s += self.riemann_c(&frame.z[b], &frame.z[m], &frame.zbar(m), &frame.zbar(b));
            }
        }
        s
    }

    /// Tangent and normal comparison objects.
    pub fn normal_data(&self) -> Result<NormalData, GeometryError> {
        let d = self.d;
        let bd = self.big_d;
        let tangent: Vec<Vec<f64>> = (0..d)
            .map(|i| self.push(&self.frame.column(i).iter().cloned().collect::<Vec<_>>()))
            .collect();
        let mut normals: Vec<Vec<f64>> = Vec::new();
        let mut used = vec![false; bd];
        while normals.len() < d {
            let mut best: Option<(usize, Vec<f64>, f64)> = None;
            for c in 0..bd {
                if used[c] {
                    continue;
                }
                let mut w = vec![0.0; bd];
                w[c] = 1.0;
                for _ in 0..2 {
                    for t in tangent.iter().chain(normals.iter()) {
                        let p = self.amb_inner(t, &w);
                        for k in 0..bd {
                            w[k] -= p * t[k];
                        }
                    }
                }
                let nw = self.amb_inner(&w, &w).sqrt();
                if best.as_ref().is_none_or(|(_, _, bn)| nw > *bn) {
                    best = Some((c, w, nw));
                }
            }
            let (c, w, nw) = best.expect("candidates remain");
            if nw < 1e-8 {
                return Err(GeometryError::Degenerate(
                    "normal frame construction lost rank".into(),
                ));
            }
            used[c] = true;
            normals.push(w.iter().map(|v| v / nw).collect());
        }
        let phi = DMatrix::from_fn(d, d, |al, i| {
            self.amb_inner(&apply_j(&tangent[i]), &normals[al])
        });
        let xi = DMatrix::from_fn(d, d, |i, al| {
            self.amb_inner(&apply_j(&normals[al]), &tangent[i])
        });
        // operator U -> (JU)^perp: column alpha holds the image of nu_alpha
        let omega_perp = DMatrix::from_fn(d, d, |be, al| {
            self.amb_inner(&apply_j(&normals[al]), &normals[be])
        });
        let j_perp = polar_factor(&omega_perp, TAU_L);
        let (nang, _) = paired_singular_values(&omega_perp)?;
        let normal_angles = nang.iter().map(|c| c.min(1.0)).collect();
        let frame = DMatrix::from_fn(bd, d, |a, al| normals[al][a]);
        Ok(NormalData {
            frame,
            phi,
            xi,
            omega_perp,
            j_perp,
            normal_angles,
        })
    }
}

fn apply_j_rows(e: &[Jet], big_d: usize, d: usize) -> Vec<Jet> {
    let mut out = e.to_vec();
    for k in 0..big_d / 2 {
        for i in 0..d {
            out[(2 * k) * d + i] = -&e[(2 * k + 1) * d + i];
            out[(2 * k + 1) * d + i] = e[(2 * k) * d + i].clone();
        }
    }
    out
}

fn mat_vec(m: &[Jet], v: &[Jet], d: usize) -> Vec<Jet> {
    let (dim, order) = (v[0].dim(), v[0].order());
    (0..d)
        .map(|k| {
            let mut s = Jet::zero(dim, order);
            for j in 0..d {
                s.add_mul(&m[k * d + j], &v[j]);
            }
            s
        })
        .collect()
}

/// `R_ijkl` lowered with `g`, from Christoffel jets of order at least one.
fn riemann_from_gamma(gamma: &[Jet], g0: &DMatrix<f64>, d: usize) -> Vec<f64> {
    let gv = |m: usize, i: usize, j: usize| gamma[(m * d + i) * d + j].value();
    let gd = |m: usize, i: usize, j: usize, l: usize| gamma[(m * d + i) * d + j].d1(l);
    let mut out = vec![0.0; d * d * d * d];
    let mut rm = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for (m, r) in rm.iter_mut().enumerate() {
                    let mut s = gd(m, j, k, i) - gd(m, i, k, j);
                    for p in 0..d {
                        s += gv(m, i, p) * gv(p, j, k) - gv(m, j, p) * gv(p, i, k);
                    }
                    *r = s;
                }
                for l in 0..d {
                    out[((i * d + j) * d + k) * d + l] = (0..d).map(|m| rm[m] * g0[(m, l)]).sum();
                }
            }
        }
    }
    out
}

/// Full contraction of a real 4-tensor with complex vectors.
pub fn contract4(
    t: &[f64],
    d: usize,
    a: &[Complex64],
    b: &[Complex64],
    c: &[Complex64],
    e: &[Complex64],
) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let ab = a[i] * b[j];
            for k in 0..d {
                let abc = ab * c[k];
                for l in 0..d {
                    s += abc * e[l] * t[((i * d + j) * d + k) * d + l];
                }
            }
        }
    }
    s
}

/// Full contraction of a real 3-tensor with complex vectors.
pub fn contract3(
    t: &[f64],
    d: usize,
    a: &[Complex64],
    b: &[Complex64],
    c: &[Complex64],
) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                s += a[i] * b[j] * c[k] * t[(i * d + j) * d + k];
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_immersion;

    #[test]
    fn neumann_inverse_matches_identity() {
        let spec =
            parse_immersion("n=1; ambient=flat; map=[u1, u2, sin(u1)*u2, cos(u2) + u1^2]").unwrap();
        let s = Snapshot::compute(&spec, &[0.3, -0.2], 3).unwrap();
        let d = s.d;
        for i in 0..d {
            for j in 0..d {
                let mut p = Jet::zero(d, 2);
                for k in 0..d {
                    p.add_mul(&s.g[i * d + k], &s.g_inv[k * d + j]);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((p.value() - target).abs() < 1e-14);
                assert!(p.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
            }
        }
    }

    #[test]
    fn linear_graph_angle() {
        let spec = parse_immersion("n=1; ambient=flat; map=[u1, -0.5*u2, u2, 0.5*u1]").unwrap();
        let s = Snapshot::compute(&spec, &[0.1, 0.2], 3).unwrap();
        assert!((s.angles[0] - 0.8).abs() < 1e-14);
        assert_eq!(s.classification, Classification::Generic);
    }

    #[test]
    fn sharp_in_frame_is_skew_transpose() {
        let spec = parse_immersion(
            "n=1; ambient=space_form(0.5); map=[0.2*u1, 0.1*u2^2, 0.3*u2, 0.1*sin(u1)]",
        )
        .unwrap();
        let s = Snapshot::compute(&spec, &[0.3, 0.4], 3).unwrap();
        let pinv = s.frame.clone().try_inverse().unwrap();
        let a = &pinv * &s.sharp0 * &s.frame;
        assert!((a - s.skew.transpose()).abs().max() < 1e-12);
    }
}
