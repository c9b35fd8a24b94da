use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{Error, Result};
use crate::geometry::{builtin_family, ChartDomain, FamilyParams, MetricFamily};
use crate::holonomy::EstimationConfig;
use crate::subgroup::{catalog, SubgroupSpec};
use crate::transport::LoopCatalogSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub name: String,
    #[serde(default)]
    pub params: FamilyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub steps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { steps: config::STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationSection {
    /// Catalog id of the target group `H`.
    pub target: String,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_restarts() -> usize {
    config::RESTARTS
}

fn default_tol() -> f64 {
    config::CLASSIFY_TOL
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    /// Falls back to `$HOLONOMY_LAB_OUT`, then `holonomy-out`.
    pub directory: Option<PathBuf>,
}

/// A semicontinuity experiment, read from JSON. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub family: FamilySection,
    /// Replaces the family's chart.
    #[serde(default)]
    pub chart: Option<ChartDomain>,
    /// Defaults to the family's basepoint.
    #[serde(default)]
    pub basepoint: Option<Vec<f64>>,
    pub ks: Vec<u32>,
    #[serde(default)]
    pub loops: LoopCatalogSpec,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub estimation: EstimationConfig,
    pub classification: ClassificationSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

/// Command-line overrides applied on top of a manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub steps: Option<usize>,
    /// Replaces both the classification seed and the loop seed.
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
}

/// A validated manifest with its family, chart and catalog resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub manifest: ExperimentManifest,
    pub family: MetricFamily,
    pub basepoint: Vec<f64>,
    pub catalog: Vec<SubgroupSpec>,
    pub target: SubgroupSpec,
}

impl ExperimentManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(steps) = overrides.steps {
            self.integrator.steps = steps;
        }
        if let Some(seed) = overrides.seed {
            self.classification.seed = seed;
            self.loops.seed = seed;
        }
        if let Some(restarts) = overrides.restarts {
            self.classification.restarts = restarts;
        }
    }

    /// Output directory: the manifest's, else `$HOLONOMY_LAB_OUT`, else `holonomy-out`.
    pub fn output_directory(&self) -> PathBuf {
        self.outputs
            .directory
            .clone()
            .or_else(|| std::env::var_os(config::OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUTPUT_DIR))
    }

    /// Checks everything that can be checked before computing, reporting every
    /// problem found rather than the first.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut errors = Vec::new();

        if self.ks.is_empty() {
            errors.push("ks: must not be empty".to_string());
        }
        if self.ks.contains(&0) {
            errors.push("ks: members are indexed from 1".to_string());
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            errors.push(format!("ks: must be strictly increasing, got {:?}", self.ks));
        }
        if self.integrator.steps < config::MIN_STEPS {
            errors.push(format!("integrator.steps: must be at least {}, got {}", config::MIN_STEPS, self.integrator.steps));
        }
        check_estimation(&self.estimation, &mut errors);
        check_loops(&self.loops, &mut errors);
        let c = &self.classification;
        if c.restarts == 0 {
            errors.push("classification.restarts: must be positive".to_string());
        }
        if !(c.tol > 0.0 && c.tol.is_finite()) {
            errors.push(format!("classification.tol: must be positive, got {}", c.tol));
        }

        let family = match builtin_family(&self.family.name, &self.family.params) {
            Ok(mut family) => {
                if let Some(chart) = &self.chart {
                    match chart.validate() {
                        Ok(()) if chart.dim() == family.dim() => family.chart = chart.clone(),
                        Ok(()) => errors.push(format!(
                            "chart: dimension {} does not match family dimension {}",
                            chart.dim(),
                            family.dim()
                        )),
                        Err(e) => errors.push(format!("chart: {e}")),
                    }
                }
                Some(family)
            }
            Err(e) => {
                errors.push(format!("family: {e}"));
                None
            }
        };

        let mut resolved = None;
        if let Some(family) = family {
            let basepoint = self.basepoint.clone().unwrap_or_else(|| family.basepoint.clone());
            if basepoint.len() != family.dim() {
                errors.push(format!(
                    "basepoint: expected {} coordinates, got {}",
                    family.dim(),
                    basepoint.len()
                ));
            } else if !family.chart.contains_interior(&basepoint) {
                errors.push(format!("basepoint: {basepoint:?} is not inside the chart margin"));
            } else {
                let x = &basepoint;
                let span = self.estimation.generator_scale;
                let fits = (0..x.len()).all(|i| {
                    let mut y = x.clone();
                    y[i] += span;
                    family.chart.contains_interior(&y)
                });
                if !fits {
                    errors.push(format!(
                        "estimation.generator_scale: squares of side {span} leave the chart"
                    ));
                }
            }
            match catalog(family.dim()) {
                Ok(cat) => match cat.iter().find(|s| s.id == c.target) {
                    Some(target) => resolved = Some((family.clone(), basepoint, cat.clone(), target.clone())),
                    None => errors.push(format!(
                        "classification.target: `{}` is not in the catalog for dimension {} (available: {})",
                        c.target,
                        family.dim(),
                        cat.iter().map(|s| s.id.as_str()).collect::<Vec<_>>().join(", ")
                    )),
                },
                Err(e) => errors.push(format!("family: {e}")),
            }
        }

        match resolved {
            Some((mut family, basepoint, catalog, target)) if errors.is_empty() => {
                family.basepoint = basepoint.clone();
                Ok(Experiment {
                    manifest: self.clone(),
                    family,
                    basepoint,
                    catalog,
                    target,
                })
            }
            _ => Err(Error::Manifest(errors)),
        }
    }
}

fn check_estimation(e: &EstimationConfig, errors: &mut Vec<String>) {
    if !(e.gap_threshold > 0.0 && e.gap_threshold < 1.0) {
        errors.push(format!("estimation.gap_threshold: must lie in (0, 1), got {}", e.gap_threshold));
    }
    if !(e.noise_floor >= 0.0 && e.noise_floor.is_finite()) {
        errors.push(format!("estimation.noise_floor: must be nonnegative, got {}", e.noise_floor));
    }
    if !(1..=config::MAX_CLOSURE_PASSES).contains(&e.closure_passes) {
        errors.push(format!(
            "estimation.closure_passes: must lie in 1..={}, got {}",
            config::MAX_CLOSURE_PASSES,
            e.closure_passes
        ));
    }
    if !(e.log_radius > 0.0 && e.log_radius < 1.0) {
        errors.push(format!("estimation.log_radius: must lie in (0, 1), got {}", e.log_radius));
    }
    if !(e.generator_scale > 0.0 && e.generator_scale.is_finite()) {
        errors.push(format!("estimation.generator_scale: must be positive, got {}", e.generator_scale));
    }
    if e.distance_grid < 2 {
        errors.push(format!("estimation.distance_grid: need at least 2 points per axis, got {}", e.distance_grid));
    }
}

fn check_loops(l: &LoopCatalogSpec, errors: &mut Vec<String>) {
    let positive = |v: &f64| *v > 0.0 && v.is_finite();
    if !l.square_scales.iter().all(positive) {
        errors.push(format!("loops.square_scales: must be positive, got {:?}", l.square_scales));
    }
    if !l.circle_radii.iter().all(positive) {
        errors.push(format!("loops.circle_radii: must be positive, got {:?}", l.circle_radii));
    }
    if !(l.spoke_length >= 0.0 && l.spoke_length.is_finite()) {
        errors.push(format!("loops.spoke_length: must be nonnegative, got {}", l.spoke_length));
    }
    if l.random_count > 0 && (!positive(&l.random_amplitude) || l.fourier_modes == 0) {
        errors.push("loops: random loops need a positive random_amplitude and fourier_modes ≥ 1".to_string());
    }
    if l.square_scales.is_empty() && l.circle_radii.is_empty() && l.random_count == 0 {
        errors.push("loops: the catalog is empty".to_string());
    }
}

impl Experiment {
    pub fn dim(&self) -> usize {
        self.family.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINCARE: &str = r#"{
        "family": {"name": "poincare2d"},
        "ks": [2, 4, 8],
        "classification": {"target": "so2_block"}
    }"#;

    fn messages(e: Error) -> Vec<String> {
        match e {
            Error::Manifest(m) => m,
            other => panic!("expected manifest error, got {other}"),
        }
    }

    #[test]
    fn minimal_manifest_takes_defaults() {
        let m = ExperimentManifest::from_json(POINCARE).unwrap();
        assert_eq!(m.integrator.steps, config::STEPS);
        assert_eq!(m.estimation.gap_threshold, config::GAP_THRESHOLD);
        assert_eq!(m.estimation.distance_grid, 21);
        assert_eq!(m.classification.restarts, 32);
        let e = m.resolve().unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(e.target.id, "so2_block");
        assert_eq!(e.basepoint, e.family.basepoint);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = POINCARE.replace("\"ks\"", "\"kz\": [1], \"ks\"");
        assert!(matches!(ExperimentManifest::from_json(&text), Err(Error::Manifest(_))));
        let nested = POINCARE.replace("\"target\"", "\"restart\": 3, \"target\"");
        assert!(ExperimentManifest::from_json(&nested).is_err());
    }

    #[test]
    fn all_problems_are_listed() {
        let text = r#"{
            "family": {"name": "poincare2d"},
            "ks": [4, 2],
            "basepoint": [0.9, 0.0],
            "integrator": {"steps": 2},
            "estimation": {"gap_threshold": 2.0},
            "classification": {"target": "u2", "restarts": 0}
        }"#;
        let errs = messages(ExperimentManifest::from_json(text).unwrap().resolve().unwrap_err());
        for needle in ["ks", "integrator.steps", "gap_threshold", "restarts", "basepoint", "classification.target"] {
            assert!(errs.iter().any(|e| e.contains(needle)), "{needle} missing from {errs:?}");
        }
    }

    #[test]
    fn empty_ks_and_unknown_family_are_rejected() {
        let text = POINCARE.replace("[2, 4, 8]", "[]").replace("poincare2d", "torus");
        let errs = messages(ExperimentManifest::from_json(&text).unwrap().resolve().unwrap_err());
        assert!(errs.iter().any(|e| e.starts_with("ks")));
        assert!(errs.iter().any(|e| e.contains("torus")));
    }

    #[test]
    fn overrides_replace_manifest_values() {
        let mut m = ExperimentManifest::from_json(POINCARE).unwrap();
        m.apply(&Overrides {
            steps: Some(512),
            seed: Some(9),
            restarts: Some(4),
        });
        assert_eq!((m.integrator.steps, m.classification.seed, m.loops.seed, m.classification.restarts), (512, 9, 9, 4));
    }

    #[test]
    fn manifest_roundtrips_through_json() {
        let m = ExperimentManifest::from_json(POINCARE).unwrap();
        assert_eq!(ExperimentManifest::from_json(&m.to_json()).unwrap(), m);
    }
}
