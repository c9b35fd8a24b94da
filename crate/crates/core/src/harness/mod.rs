//! Manifest-driven semicontinuity experiments: classify the holonomy of every
//! family member and of the limit, and compare them.

mod manifest;
mod report;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

pub use manifest::{ClassificationSection, Experiment, ExperimentManifest, FamilySection, IntegratorSection, Overrides, OutputsSection};
pub use report::{parse_csv, render, render_report, to_csv, to_text, CsvRow, ReportFiles, ReportFormat, CSV_HEADER};

use crate::config;
use crate::error::{Error, Result};
use crate::geometry::{c0_connection_distance, c1_metric_distance, compatibility_residual, ConnectionField, MetricField};
use crate::holonomy::{classify, estimate_algebra, sample_holonomy, small_loop_generators, AlgebraEstimate, Classification, HolonomySample};
use crate::linalg::{adjoint, orthonormal_frame, orthonormalize, Matrix};
use crate::subgroup::{leq, ConjugacyClass, OrderVerdict};
use crate::transport::{loop_catalog, parallel_transport, TransportResult};

/// A family member `g_k` or the limit `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Member {
    K(u32),
    Limit,
}

impl Member {
    /// CSV encoding: `k`, or `-1` for the limit.
    pub fn csv_index(self) -> i64 {
        match self {
            Member::K(k) => i64::from(k),
            Member::Limit => -1,
        }
    }
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::K(k) => write!(f, "g_{k}"),
            Member::Limit => write!(f, "g"),
        }
    }
}

impl FromStr for Member {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "limit" {
            return Ok(Member::Limit);
        }
        match s.parse::<u32>() {
            Ok(k) if k > 0 => Ok(Member::K(k)),
            _ => Err(Error::InvalidArgument(format!("expected a positive k or `limit`, got `{s}`"))),
        }
    }
}

/// Everything computed for one metric at the basepoint.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub member: Member,
    pub metric: MetricField,
    pub connection: ConnectionField,
    pub compatibility_residual: f64,
    pub sample: HolonomySample,
    pub estimate: AlgebraEstimate,
    pub classification: Classification,
    /// `[Hol(member)] ≤ [H]`.
    pub in_target: OrderVerdict,
}

impl Pipeline {
    pub fn class(&self) -> ConjugacyClass {
        ConjugacyClass::Algebra {
            id: format!("hol({})", self.member),
            ambient_dim: self.sample.frame.nrows(),
            basis: self.estimate.basis.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    /// `-1` for the limit.
    pub k: i64,
    pub c0_conn_dist: f64,
    pub c1_metric_dist: f64,
    pub max_transport_dist: f64,
    pub class_id: String,
    pub class_residual: f64,
    /// Member rows: `[Hol(g)] ≤ [Hol(g_k)]`. Limit row: `[Hol(g)] ≤ [H]`.
    pub leq_limit_member: bool,
    pub leq_residual: f64,
    pub algebra_dim: usize,
    pub spectral_gap: f64,
    /// `[Hol(g_k)] ≤ [H]`.
    pub in_target: bool,
    pub in_target_residual: f64,
    pub compatibility_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessDrift {
    pub from_k: u32,
    pub to_k: u32,
    /// Frobenius distance between the orthogonal projectors onto
    /// `Ad_{U_kᵀ}(𝔥)` for consecutive `k`. This sees `U_k` modulo the
    /// normalizer of `H`, which is all the classification determines.
    pub projector_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub target: String,
    /// Hypothesis: `Hol(g_k) ⊆ H` up to conjugation for every `k`.
    pub all_members_in_target: bool,
    pub limit_in_target: bool,
    /// `[Hol(g)] ≤ [Hol(g_k)]` for every `k`.
    pub order_holds_for_all_k: bool,
    /// The limit class is strictly smaller than every member class.
    pub strict: bool,
    /// The hypothesis implies the limit conclusion, and the order holds.
    pub semicontinuity: bool,
    /// Largest `max_transport_dist / c0_conn_dist` over member rows.
    pub transport_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemicontinuityReport {
    pub family: String,
    pub basepoint: Vec<f64>,
    /// Member rows in manifest order.
    pub rows: Vec<ReportRow>,
    pub limit: ReportRow,
    pub summary: Summary,
    pub witness_drift: Vec<WitnessDrift>,
    /// Soft failures and catalog adjustments, in a fixed order.
    pub notes: Vec<String>,
}

impl SemicontinuityReport {
    /// Member rows followed by the limit row.
    pub fn all_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().chain(std::iter::once(&self.limit))
    }

    /// 0 when the semicontinuity verdict holds, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.semicontinuity {
            0
        } else {
            1
        }
    }
}

impl Experiment {
    pub fn metric(&self, member: Member) -> Result<MetricField> {
        match member {
            Member::K(k) => self.family.member(k),
            Member::Limit => Ok(self.family.limit().clone()),
        }
    }

    pub fn connection(&self, metric: &MetricField) -> ConnectionField {
        ConnectionField::levi_civita(metric, self.family.chart.default_step())
    }

    fn frame(&self, metric: &MetricField) -> Result<(crate::linalg::BilinearForm, Matrix)> {
        let form = metric.form(&self.basepoint)?;
        let frame = orthonormal_frame(&form)?;
        Ok((form, frame))
    }

    /// Transport around one catalog loop, in chart coordinates.
    pub fn transport(&self, member: Member, label: &str) -> Result<TransportResult> {
        let m = &self.manifest;
        let catalog = loop_catalog(&self.basepoint, &m.loops, &self.family.chart)?;
        let path = catalog.loops.iter().find(|l| l.label == label).ok_or_else(|| {
            let labels: Vec<&str> = catalog.loops.iter().map(|l| l.label.as_str()).collect();
            Error::InvalidArgument(format!("no loop `{label}` in the catalog (available: {})", labels.join(", ")))
        })?;
        let metric = self.metric(member)?;
        let (form, _) = self.frame(&metric)?;
        parallel_transport(&self.connection(&metric), path, &self.family.chart, &form, m.integrator.steps)
    }

    pub fn loop_labels(&self) -> Result<Vec<String>> {
        let catalog = loop_catalog(&self.basepoint, &self.manifest.loops, &self.family.chart)?;
        Ok(catalog.loops.into_iter().map(|l| l.label).collect())
    }

    /// Samples, estimates and classifies the holonomy of one metric.
    pub fn pipeline(&self, member: Member) -> Result<Pipeline> {
        let m = &self.manifest;
        let chart = &self.family.chart;
        let x = &self.basepoint;
        let metric = self.metric(member)?;
        let connection = self.connection(&metric);
        let compat = compatibility_residual(&connection, &metric, x, chart)?;
        let (form, frame) = self.frame(&metric)?;
        let steps = m.integrator.steps;
        let sample = sample_holonomy(&connection, chart, x, &form, &frame, &m.loops, steps)?;
        let generators = small_loop_generators(&connection, chart, x, &form, &frame, m.estimation.generator_scale, steps)?;
        let estimate = estimate_algebra(&sample, &generators, &m.estimation)?;
        let c = &m.classification;
        let classification = classify(&estimate, &self.catalog, c.restarts, c.tol, c.seed)?;
        let class = ConjugacyClass::Algebra {
            id: member.to_string(),
            ambient_dim: frame.nrows(),
            basis: estimate.basis.clone(),
        };
        let in_target = leq(&class, &ConjugacyClass::Subgroup(self.target.clone()), c.restarts, c.tol, c.seed)?;
        Ok(Pipeline {
            member,
            metric,
            connection,
            compatibility_residual: compat,
            sample,
            estimate,
            classification,
            in_target,
        })
    }

    /// Runs every member and the limit, in parallel over `k`.
    pub fn run(&self) -> Result<SemicontinuityReport> {
        let m = &self.manifest;
        let c = &m.classification;
        let chart = &self.family.chart;
        let grid = m.estimation.distance_grid;

        let members: Vec<Member> = m.ks.iter().map(|&k| Member::K(k)).chain([Member::Limit]).collect();
        let mut pipelines = members.par_iter().map(|&mb| self.pipeline(mb)).collect::<Result<Vec<_>>>()?;
        let limit = pipelines.pop().expect("limit pipeline");
        let limit_class = limit.class();

        let mut notes = Vec::new();
        notes.extend(limit.sample.catalog_report.iter().cloned());
        for p in pipelines.iter().chain([&limit]) {
            if p.compatibility_residual > config::COMPATIBILITY_TOL {
                notes.push(format!(
                    "{}: compatibility residual {:.3e} exceeds {:.1e}",
                    p.member,
                    p.compatibility_residual,
                    config::COMPATIBILITY_TOL
                ));
            }
            if p.estimate.empty_warning {
                notes.push(format!("{}: no usable transports; algebra estimate is empty", p.member));
            }
            if p.classification.subgroup.is_none() {
                notes.push(format!(
                    "{}: unclassified (best residual {:.3e})",
                    p.member, p.classification.residual
                ));
            }
        }

        let rows = pipelines
            .par_iter()
            .map(|p| -> Result<ReportRow> {
                let c0 = c0_connection_distance(&p.connection, &limit.connection, chart, grid)?;
                let c1 = c1_metric_distance(&p.metric, &limit.metric, chart, grid)?;
                let transport = p
                    .sample
                    .transports
                    .iter()
                    .zip(&limit.sample.transports)
                    .map(|(a, b)| (&a.matrix - &b.matrix).norm())
                    .fold(0.0, f64::max);
                let order = leq(&limit_class, &p.class(), c.restarts, c.tol, c.seed)?;
                Ok(row(p, c0, c1, transport, &order))
            })
            .collect::<Result<Vec<_>>>()?;
        let limit_row = row(&limit, 0.0, 0.0, 0.0, &limit.in_target);

        let all_members_in_target = rows.iter().all(|r| r.in_target);
        let limit_in_target = limit.in_target.holds;
        let order_holds_for_all_k = rows.iter().all(|r| r.leq_limit_member);
        let strict = order_holds_for_all_k && rows.iter().all(|r| r.algebra_dim > limit.estimate.dim);
        let transport_constant = rows
            .iter()
            .filter(|r| r.c0_conn_dist > 0.0)
            .map(|r| r.max_transport_dist / r.c0_conn_dist)
            .fold(0.0, f64::max);

        let witness_drift = pipelines
            .windows(2)
            .filter_map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let (Member::K(ka), Member::K(kb)) = (a.member, b.member) else {
                    return None;
                };
                let pa = witness_projector(self, &a.classification)?;
                let pb = witness_projector(self, &b.classification)?;
                Some(WitnessDrift {
                    from_k: ka,
                    to_k: kb,
                    projector_distance: (pa - pb).norm(),
                })
            })
            .collect();

        Ok(SemicontinuityReport {
            family: self.family.name.clone(),
            basepoint: self.basepoint.clone(),
            rows,
            limit: limit_row,
            summary: Summary {
                target: self.target.id.clone(),
                all_members_in_target,
                limit_in_target,
                order_holds_for_all_k,
                strict,
                semicontinuity: (!all_members_in_target || limit_in_target) && order_holds_for_all_k,
                transport_constant,
            },
            witness_drift,
            notes,
        })
    }
}

fn row(p: &Pipeline, c0: f64, c1: f64, transport: f64, order: &OrderVerdict) -> ReportRow {
    ReportRow {
        k: p.member.csv_index(),
        c0_conn_dist: c0,
        c1_metric_dist: c1,
        max_transport_dist: transport,
        class_id: p.classification.id().to_string(),
        class_residual: p.classification.residual,
        leq_limit_member: order.holds,
        leq_residual: order.residual,
        algebra_dim: p.estimate.dim,
        spectral_gap: p.estimate.spectral_gap,
        in_target: p.in_target.holds,
        in_target_residual: p.in_target.residual,
        compatibility_residual: p.compatibility_residual,
    }
}

/// Projector onto `Ad_{Uᵀ}(𝔰)` for the classified subgroup `S` with witness
/// `U`, as an `l² × l²` matrix. `None` for unclassified or trivial verdicts.
fn witness_projector(experiment: &Experiment, c: &Classification) -> Option<Matrix> {
    let id = c.subgroup.as_deref()?;
    let spec = experiment.catalog.iter().find(|s| s.id == id)?;
    if spec.algebra_basis.is_empty() {
        return None;
    }
    let ut = c.witness.transpose();
    let pulled: Vec<Matrix> = spec.algebra_basis.iter().map(|b| adjoint(&ut, b)).collect();
    let basis = orthonormalize(&pulled, 1e-12);
    let l2 = ut.len();
    let mut proj = Matrix::zeros(l2, l2);
    for b in &basis {
        let v = Matrix::from_column_slice(l2, 1, b.as_slice());
        proj += &v * v.transpose();
    }
    Some(proj)
}

/// Validates the manifest, then runs it.
pub fn run_semicontinuity(manifest: &ExperimentManifest) -> Result<SemicontinuityReport> {
    manifest.resolve()?.run()
}
