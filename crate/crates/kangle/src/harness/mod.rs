//! Example catalog, sampling, torus quadrature and suite orchestration.

pub mod catalog;
pub mod quadrature;
pub mod report;
pub mod sampling;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ambient::AmbientSpec;
use crate::dsl::{ImmersionSpec, ParseError};
use crate::geometry::{GeometryError, Snapshot, TAU_EQ};
use crate::identities::{
    calibrate, equal_angle_jet_defect, evaluate, Calibration, ConventionError, IdentityResidual,
    Tolerances, EQ_JET_TOL, IDENTITY_IDS, SUITES,
};

use catalog::{CatalogEntry, Expected};
use report::{
    AngleStats, ConventionHeader, EntryReport, PointDiagnostic, PointRecord, RunReport, Settings,
    SkippedPoint, Summary, SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("quadrature point {point:?}: {source}")]
    Quadrature {
        point: Vec<f64>,
        source: GeometryError,
    },
    #[error(transparent)]
    Convention(#[from] ConventionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Worker count from `KANGLE_THREADS`, defaulting to the number of cores.
pub fn thread_count() -> usize {
    std::env::var("KANGLE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|k| k.get())
                .unwrap_or(1)
        })
}

pub fn thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .expect("thread pool")
}

/// An immersion to sample, with optional expectations.
#[derive(Debug, Clone)]
pub struct Target {
    pub name: String,
    pub spec: ImmersionSpec,
    pub domain: Vec<(f64, f64)>,
    pub expected: Option<Expected>,
}

impl Target {
    pub fn from_entry(e: &CatalogEntry) -> Target {
        Target {
            name: e.name.clone(),
            spec: e.spec(),
            domain: e.domain.clone(),
            expected: Some(e.expected),
        }
    }

    /// A user spec sampled over `[-1, 1]^{2n}`, or the full period box when
    /// it is declared periodic.
    pub fn from_spec(name: &str, spec: ImmersionSpec) -> Target {
        let (lo, hi) = if spec.periodic {
            (0.0, 2.0 * std::f64::consts::PI)
        } else {
            (-1.0, 1.0)
        };
        Target {
            name: name.into(),
            domain: vec![(lo, hi); spec.domain_dim()],
            spec,
            expected: None,
        }
    }

    /// Replaces the ambient. Expectations are dropped since they were stated
    /// for the original ambient.
    pub fn with_ambient(mut self, ambient: AmbientSpec) -> Target {
        if ambient != self.spec.ambient {
            self.spec.ambient = ambient;
            self.expected = None;
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub suites: Vec<String>,
    pub points: usize,
    pub seed: u64,
    pub order: usize,
    pub tol: Tolerances,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            suites: vec!["all".into()],
            points: 64,
            seed: 0,
            order: 3,
            tol: Tolerances::default(),
        }
    }
}

/// Suite names needed for a `--suite` list, validating every item.
pub fn resolve_suites(items: &[String]) -> Result<Vec<&'static str>, HarnessError> {
    let mut out = Vec::new();
    for item in items {
        if item == "all" {
            return Ok(SUITES.to_vec());
        }
        let suite = item.split('.').next().unwrap_or("");
        let known_suite = SUITES.iter().find(|s| **s == suite);
        let known = match known_suite {
            Some(_) if suite == item => true,
            Some(_) => {
                IDENTITY_IDS.iter().any(|(id, _)| id == item) || item.starts_with("hypothesis.")
            }
            None => false,
        };
        if !known {
            return Err(HarnessError::Usage(format!(
                "unknown suite or identity `{item}`"
            )));
        }
        let s = known_suite.expect("checked");
        if !out.contains(s) {
            out.push(*s);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Usage("empty suite list".into()));
    }
    Ok(out)
}

fn selected(items: &[String], id: &str) -> bool {
    items.iter().any(|i| {
        i == "all"
            || i == id
            || id
                .strip_prefix(i.as_str())
                .is_some_and(|r| r.starts_with('.'))
    })
}

struct PointOutcome {
    angles: Vec<f64>,
    classification: &'static str,
    spread: f64,
    eq_defect: f64,
    records: Vec<IdentityResidual>,
    diagnostics: Vec<crate::identities::Diagnostic>,
    assertions: Vec<IdentityResidual>,
}

fn assert_rec(id: &str, lhs: Vec<f64>, rhs: Vec<f64>, abs: f64) -> IdentityResidual {
    IdentityResidual::new(id, lhs, rhs, &[], Tolerances { abs, rel: 0.0 })
}

fn assertions(s: &Snapshot, e: &Expected) -> Vec<IdentityResidual> {
    let mut out = Vec::new();
    if e.minimal {
        out.push(assert_rec(
            "catalog.minimal",
            vec![s.h_norm2().sqrt()],
            vec![0.0],
            1e-9,
        ));
    }
    if e.totally_geodesic {
        out.push(assert_rec(
            "catalog.totally_geodesic",
            vec![s.sff_norm2().sqrt()],
            vec![0.0],
            1e-10,
        ));
    }
    if e.equal_angles == Some(true) {
        out.push(assert_rec(
            "catalog.equal_angles",
            vec![s.angle_spread()],
            vec![0.0],
            1e-9,
        ));
    }
    if let Some(c) = e.classification {
        let mut r = assert_rec(
            "catalog.classification",
            vec![s.classification as u8 as f64],
            vec![c as u8 as f64],
            0.5,
        );
        if !r.pass {
            r.reason = Some(format!(
                "observed {}, expected {}",
                s.classification.name(),
                c.name()
            ));
        }
        out.push(r);
    }
    if let Some(f) = e.angle {
        let v = f(&s.point);
        out.push(assert_rec(
            "catalog.angle",
            s.angles.clone(),
            vec![v; s.n],
            e.angle_tol,
        ));
    }
    if let Some(h) = e.mean_curvature_norm {
        out.push(assert_rec(
            "catalog.mean_curvature_norm",
            vec![s.h_norm2().sqrt()],
            vec![h],
            1e-9,
        ));
    }
    out
}

fn eval_point(
    t: &Target,
    p: &[f64],
    opts: &RunOptions,
    cal: &Calibration,
    suites: &[&str],
) -> Result<PointOutcome, String> {
    let s = Snapshot::compute(&t.spec, p, opts.order).map_err(|e| e.to_string())?;
    let ev = evaluate(&s, suites, cal.conventions, opts.tol);
    Ok(PointOutcome {
        angles: s.angles.clone(),
        classification: s.classification.name(),
        spread: s.angle_spread(),
        eq_defect: equal_angle_jet_defect(&s),
        records: ev
            .residuals
            .into_iter()
            .filter(|r| selected(&opts.suites, &r.id))
            .collect(),
        diagnostics: ev
            .diagnostics
            .into_iter()
            .filter(|d| selected(&opts.suites, &d.id))
            .collect(),
        assertions: t
            .expected
            .as_ref()
            .map(|e| assertions(&s, e))
            .unwrap_or_default(),
    })
}

/// Samples one target and evaluates the selected suites at every point.
pub fn run_target(
    t: &Target,
    opts: &RunOptions,
    cal: &Calibration,
) -> Result<EntryReport, HarnessError> {
    let suites = resolve_suites(&opts.suites)?;
    let pts = sampling::halton_box(&t.domain, opts.points, opts.seed);
    let outcomes: Vec<Result<PointOutcome, String>> = pts
        .par_iter()
        .map(|p| eval_point(t, p, opts, cal, &suites))
        .collect();
    let mut rep = EntryReport {
        name: t.name.clone(),
        ambient: t.spec.ambient,
        n: t.spec.n,
        points_sampled: pts.len(),
        points_evaluated: 0,
        skipped_points: vec![],
        classification_histogram: BTreeMap::new(),
        angle_stats: AngleStats::default(),
        equal_angle_gate: String::new(),
        assertions: vec![],
        records: vec![],
        diagnostics: vec![],
        quadrature: vec![],
    };
    let (mut lo, mut hi, mut sum, mut cnt, mut spread) =
        (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize, 0.0f64);
    let mut gate_ok = true;
    for (k, (p, o)) in pts.iter().zip(outcomes).enumerate() {
        let o = match o {
            Ok(o) => o,
            Err(reason) => {
                rep.skipped_points.push(SkippedPoint {
                    point_index: k,
                    point: p.clone(),
                    reason,
                });
                continue;
            }
        };
        rep.points_evaluated += 1;
        *rep.classification_histogram
            .entry(o.classification.to_string())
            .or_default() += 1;
        for &c in &o.angles {
            lo = lo.min(c);
            hi = hi.max(c);
            sum += c;
            cnt += 1;
        }
        spread = spread.max(o.spread);
        gate_ok &= o.spread <= TAU_EQ && o.eq_defect <= EQ_JET_TOL;
        let wrap = |r: IdentityResidual| PointRecord {
            entry: t.name.clone(),
            point_index: k,
            point: p.clone(),
            residual: r,
        };
        let mut recs = o.records;
        recs.sort_by(|a, b| a.id.cmp(&b.id));
        rep.records.extend(recs.into_iter().map(wrap));
        rep.assertions.extend(o.assertions.into_iter().map(wrap));
        rep.diagnostics
            .extend(o.diagnostics.into_iter().map(|d| PointDiagnostic {
                entry: t.name.clone(),
                point_index: k,
                diagnostic: d,
            }));
    }
    if cnt > 0 {
        rep.angle_stats = AngleStats {
            min_cos: lo,
            max_cos: hi,
            mean_cos: sum / cnt as f64,
            max_spread: spread,
        };
    }
    rep.equal_angle_gate = match t.expected.and_then(|e| e.equal_angles) {
        Some(true) => "asserted".into(),
        _ if gate_ok && rep.points_evaluated > 0 => "passed".into(),
        _ => "gate failed".into(),
    };
    Ok(rep)
}

fn header(cal: &Calibration) -> ConventionHeader {
    ConventionHeader {
        conventions: cal.conventions,
        calibration: cal.candidates.clone(),
    }
}

pub fn empty_report(cal: &Calibration, opts: &RunOptions) -> RunReport {
    RunReport {
        schema: SCHEMA_VERSION,
        tool: "kangle".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        conventions: header(cal),
        settings: Settings {
            suites: opts.suites.clone(),
            points: opts.points,
            seed: opts.seed,
            order: opts.order,
            tol_abs: opts.tol.abs,
            tol_rel: opts.tol.rel,
        },
        entries: vec![],
        summary: Summary::default(),
    }
}

/// Calibrates the sign conventions, then runs every target. Deterministic
/// for a given seed.
pub fn run_suite(targets: &[Target], opts: &RunOptions) -> Result<RunReport, HarnessError> {
    if !(3..=4).contains(&opts.order) {
        return Err(HarnessError::Usage(format!(
            "order must be 3 or 4, got {}",
            opts.order
        )));
    }
    resolve_suites(&opts.suites)?;
    let cal = calibrate()?;
    let mut rep = empty_report(&cal, opts);
    for t in targets {
        rep.entries.push(run_target(t, opts, &cal)?);
    }
    rep.summarize();
    Ok(rep)
}

/// Plain-value view of a snapshot for `kangle eval`.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotView {
    pub schema: u32,
    pub name: String,
    pub n: usize,
    pub ambient: AmbientSpec,
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    pub angle_cosines: Vec<f64>,
    pub angles: Vec<f64>,
    pub classification: &'static str,
    pub rank: usize,
    pub merged: bool,
    pub equal_angles: bool,
    pub signed_cos: Option<f64>,
    pub kappa: Option<f64>,
    pub metric: Vec<Vec<f64>>,
    pub kahler_form: Vec<Vec<f64>>,
    pub mean_curvature: Vec<f64>,
    pub mean_curvature_norm: f64,
    pub jh_tangent: Vec<f64>,
    pub second_fundamental_form_norm: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().cloned().collect())
        .collect()
}

impl SnapshotView {
    pub fn new(s: &Snapshot, name: &str) -> SnapshotView {
        SnapshotView {
            schema: SCHEMA_VERSION,
            name: name.into(),
            n: s.n,
            ambient: s.ambient,
            point: s.point.clone(),
            image: s.f0.clone(),
            angle_cosines: s.angles.clone(),
            angles: s.angles.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect(),
            classification: s.classification.name(),
            rank: s.rank,
            merged: s.merged,
            equal_angles: s.equal_angles(),
            signed_cos: s.theta_signed,
            kappa: s.kappa_field().ok().map(|k| k.value()),
            metric: rows(&s.g0),
            kahler_form: rows(&s.omega0),
            mean_curvature: s.h0(),
            mean_curvature_norm: s.h_norm2().sqrt(),
            jh_tangent: s.jh_top0(),
            second_fundamental_form_norm: s.sff_norm2().sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_lists_resolve() {
        assert_eq!(resolve_suites(&["all".into()]).unwrap().len(), SUITES.len());
        assert_eq!(
            resolve_suites(&["kahler_form.norm".into(), "kahler_form".into()]).unwrap(),
            vec!["kahler_form"]
        );
        assert!(resolve_suites(&["nope".into()]).is_err());
        assert!(resolve_suites(&["kahler_form.nope".into()]).is_err());
    }

    #[test]
    fn selection_respects_prefixes() {
        let items = vec!["kappa".to_string()];
        assert!(selected(&items, "kappa.surface"));
        assert!(!selected(&items, "kappa_x.surface"));
        assert!(selected(&["kappa.surface".to_string()], "kappa.surface"));
        assert!(!selected(
            &["kappa.surface".to_string()],
            "kappa.surface_polar_coclosed"
        ));
    }
}
