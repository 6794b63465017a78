//! JSON report types and a writer that keeps every double at 17 significant
//! digits.

use std::collections::BTreeMap;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::ambient::AmbientSpec;
use crate::identities::{CalibrationCandidate, Conventions, Diagnostic, IdentityResidual};

use super::quadrature::QuadratureResult;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ConventionHeader {
    #[serde(flatten)]
    pub conventions: Conventions,
    pub calibration: Vec<CalibrationCandidate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub suites: Vec<String>,
    pub points: usize,
    pub seed: u64,
    pub order: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

/// A residual record with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub entry: String,
    pub point_index: usize,
    pub point: Vec<f64>,
    #[serde(flatten)]
    pub residual: IdentityResidual,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointDiagnostic {
    pub entry: String,
    pub point_index: usize,
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub point_index: usize,
    pub point: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AngleStats {
    pub min_cos: f64,
    pub max_cos: f64,
    pub mean_cos: f64,
    pub max_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryReport {
    pub name: String,
    pub ambient: AmbientSpec,
    pub n: usize,
    pub points_sampled: usize,
    pub points_evaluated: usize,
    pub skipped_points: Vec<SkippedPoint>,
    pub classification_histogram: BTreeMap<String, usize>,
    pub angle_stats: AngleStats,
    /// `passed`, `gate failed` or `asserted`.
    pub equal_angle_gate: String,
    pub assertions: Vec<PointRecord>,
    pub records: Vec<PointRecord>,
    pub diagnostics: Vec<PointDiagnostic>,
    pub quadrature: Vec<QuadratureResult>,
}

impl EntryReport {
    pub fn failed_records(&self) -> impl Iterator<Item = &PointRecord> {
        self.records
            .iter()
            .chain(&self.assertions)
            .filter(|r| r.residual.applicable && !r.residual.pass)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub entries: usize,
    pub points: usize,
    pub records: usize,
    pub applicable: usize,
    pub failed: usize,
    pub assertions_failed: usize,
    pub quadrature_failed: usize,
    /// Largest observed ratio in the sin^2 gradient estimate.
    pub sin2_gradient_bound_sup: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub conventions: ConventionHeader,
    pub settings: Settings,
    pub entries: Vec<EntryReport>,
    pub summary: Summary,
}

impl RunReport {
    pub fn summarize(&mut self) {
        let mut s = Summary {
            entries: self.entries.len(),
            ..Summary::default()
        };
        for e in &self.entries {
            s.points += e.points_evaluated;
            s.records += e.records.len();
            s.applicable += e.records.iter().filter(|r| r.residual.applicable).count();
            s.failed += e
                .records
                .iter()
                .filter(|r| r.residual.applicable && !r.residual.pass)
                .count();
            s.assertions_failed += e.assertions.iter().filter(|r| !r.residual.pass).count();
            s.quadrature_failed += e.quadrature.iter().filter(|q| !q.pass).count();
            for d in &e.diagnostics {
                if d.diagnostic.id == "kahler_form.sin2_gradient_bound_ratio" {
                    if let Some(v) = d.diagnostic.value {
                        s.sin2_gradient_bound_sup =
                            Some(s.sin2_gradient_bound_sup.map_or(v, |m: f64| m.max(v)));
                    }
                }
            }
        }
        s.pass = s.failed == 0 && s.assertions_failed == 0 && s.quadrature_failed == 0;
        self.summary = s;
    }
}

/// Pretty printer that writes finite doubles as `{:.16e}`.
pub struct FullPrecision<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FullPrecision<'_> {
    fn default() -> Self {
        FullPrecision {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes any value with [`FullPrecision`]. Non-finite doubles become
/// `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision::default());
    value.serialize(&mut ser).expect("report types serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubles_keep_seventeen_digits() {
        let s = to_json(&vec![0.1, 1.0 / 3.0, -2.5e-300, f64::NAN]);
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("3.3333333333333331e-1"), "{s}");
        assert!(s.contains("-2.5000000000000000e-300"), "{s}");
        assert!(s.contains("null"), "{s}");
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[1], Some(1.0 / 3.0));
    }
}
