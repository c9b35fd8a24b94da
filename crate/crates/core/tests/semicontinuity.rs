use holonomy_core::harness::{parse_csv, render_report, run_semicontinuity, CsvRow, ExperimentManifest, Member, CSV_HEADER};
use holonomy_core::linalg::spd_sqrt_pair;
use holonomy_core::Matrix;
use nalgebra::{Rotation3, Unit, Vector3};

fn manifest(json: &str) -> ExperimentManifest {
    ExperimentManifest::from_json(json).unwrap()
}

/// Rotation axis of a nonzero skew 3×3 matrix, normalized.
fn axis(b: &Matrix) -> Vector3<f64> {
    Vector3::new(b[(2, 1)], b[(0, 2)], b[(1, 0)]).normalize()
}

fn sin_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm()
}

/// Axis of the holonomy algebra of the Poincaré disk times a line, pulled
/// back by `x ↦ Lx`, in the frame `M^{-1/2}`; `conformal` is the disk factor at `Lx`. The algebra in chart
/// coordinates is `L⁻¹ so(2)_{12} L`, whose kernel is `L⁻¹ e₃`.
fn planted_axis(theta: f64, shear: f64, conformal: f64) -> Vector3<f64> {
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 1.0, 1.0)), theta);
    let s = nalgebra::Matrix3::new(1.0, shear, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    let l = r.matrix() * s;
    let g = nalgebra::Matrix3::from_diagonal(&Vector3::new(conformal, conformal, 1.0));
    let m = l.transpose() * g * l;
    let (w, _) = spd_sqrt_pair(&Matrix::from_iterator(3, 3, m.iter().copied())).unwrap();
    let w = nalgebra::Matrix3::from_iterator(w.iter().copied());
    // F⁻¹ = M^{1/2} = W
    (w * l.try_inverse().unwrap() * Vector3::z()).normalize()
}

#[test]
fn sheared_family_axes_follow_the_planted_rotation_and_converge() {
    let (shear, theta_inf) = (0.5, 0.6);
    let m = manifest(
        r#"{"family": {"name": "sheared_poincare", "params": {"shear": 0.5, "theta_inf": 0.6}},
            "ks": [2, 4, 8, 16, 32], "integrator": {"steps": 1024},
            "classification": {"target": "so2_block", "restarts": 16}}"#,
    );
    let experiment = m.resolve().unwrap();
    let x = experiment.basepoint.clone();
    let limit_axis = planted_axis(theta_inf, shear, 4.0);

    let mut previous = f64::INFINITY;
    let mut axes = Vec::new();
    for &k in &m.ks {
        let p = experiment.pipeline(Member::K(k)).unwrap();
        assert_eq!(p.estimate.dim, 1);
        assert_eq!(p.classification.id(), "so2_block");
        let estimated = axis(&p.estimate.basis[0]);
        // Conformal factor of the k-th disk at y = L_k x.
        let theta = theta_inf + 1.0 / f64::from(k);
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 1.0, 1.0)), theta);
        let y = r.matrix() * nalgebra::Matrix3::new(1.0, shear, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0) * Vector3::from_column_slice(&x);
        let u = 1.0 - (y[0] * y[0] + y[1] * y[1]) / f64::from(k * k);
        let planted = planted_axis(theta, shear, 4.0 / (u * u));
        assert!(sin_between(&estimated, &planted) < 1e-8, "k = {k}");

        let to_limit = sin_between(&estimated, &limit_axis);
        assert!(to_limit < previous, "axis distance to the limit must shrink: k = {k}");
        assert!(to_limit * f64::from(k) < 2.0, "rate 1/k expected, k = {k}: {to_limit}");
        previous = to_limit;
        axes.push(estimated);
    }
    // Members' holonomy frames differ from one k to the next.
    assert!(axes.windows(2).all(|w| sin_between(&w[0], &w[1]) > 1e-3));

    let report = experiment.run().unwrap();
    assert!(report.summary.semicontinuity && report.summary.strict);
    let drift: Vec<f64> = report.witness_drift.iter().map(|d| d.projector_distance).collect();
    assert_eq!(drift.len(), 4);
    assert!(drift.windows(2).all(|w| w[1] < 0.6 * w[0]), "witness drift not Cauchy: {drift:?}");
}

#[test]
fn product_family_matches_its_planar_factor() {
    let product = run_semicontinuity(&manifest(
        r#"{"family": {"name": "product4d"}, "ks": [2, 4], "integrator": {"steps": 1024},
            "classification": {"target": "so2_block", "restarts": 16}}"#,
    ))
    .unwrap();
    assert!(product.rows.iter().all(|r| r.class_id == "so2_block" && r.algebra_dim == 1));
    assert_eq!(product.limit.class_id, "trivial");
    assert!(product.summary.strict);

    let u2 = run_semicontinuity(&manifest(
        r#"{"family": {"name": "product4d"}, "ks": [2], "integrator": {"steps": 1024},
            "classification": {"target": "u2", "restarts": 16}}"#,
    ))
    .unwrap();
    // A plane rotation fits inside U(2) after conjugation.
    assert!(u2.summary.all_members_in_target);
}

#[test]
fn fubini_study_members_are_kahler_and_the_limit_is_flat() {
    let report = run_semicontinuity(&manifest(
        r#"{"family": {"name": "fubini_study_chart"}, "ks": [1, 2], "integrator": {"steps": 1024},
            "classification": {"target": "su2", "restarts": 16}}"#,
    ))
    .unwrap();
    for r in &report.rows {
        assert_eq!(r.class_id, "u2");
        assert!(!r.in_target, "U(2) holonomy must not fit in SU(2)");
    }
    assert!(report.limit.leq_limit_member);
    assert!(!report.summary.all_members_in_target);
    assert!(report.summary.semicontinuity);
}

#[test]
fn real_report_roundtrips_through_csv() {
    let report = run_semicontinuity(&manifest(
        r#"{"family": {"name": "poincare2d"}, "ks": [2, 4, 8], "integrator": {"steps": 512},
            "classification": {"target": "so2_block", "restarts": 8}}"#,
    ))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = render_report(&report, dir.path()).unwrap();
    let text = std::fs::read_to_string(&files.csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let parsed = parse_csv(&text).unwrap();
    let expected: Vec<CsvRow> = report.all_rows().map(CsvRow::from).collect();
    assert_eq!(parsed.len(), 4);
    for (a, b) in parsed.iter().zip(&expected) {
        assert_eq!(a, b);
        assert_eq!(a.c1_metric_dist.to_bits(), b.c1_metric_dist.to_bits());
        assert_eq!(a.class_residual.to_bits(), b.class_residual.to_bits());
    }
    assert_eq!(parsed.last().unwrap().k, -1);
    let summary = std::fs::read_to_string(&files.text).unwrap();
    for k in [2, 4, 8] {
        assert!(summary.contains(&format!("[Hol(g)] ≤ [Hol(g_{k})] holds")));
    }
}

#[test]
fn limit_transports_use_the_same_loops_as_members() {
    let experiment = manifest(
        r#"{"family": {"name": "poincare2d"}, "ks": [2], "integrator": {"steps": 512},
            "classification": {"target": "so2_block", "restarts": 4}}"#,
    )
    .resolve()
    .unwrap();
    let a = experiment.pipeline(Member::K(2)).unwrap();
    let b = experiment.pipeline(Member::Limit).unwrap();
    assert_eq!(a.sample.labels, b.sample.labels);
    for t in &b.sample.transports {
        assert!((&t.matrix - Matrix::identity(2, 2)).amax() < 1e-12);
    }
}
