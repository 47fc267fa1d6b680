//! The exact identity battery: normalisation and localisation of the
//! `H^{2|2}` superintegral, and the coordinate geometry of both models.
//! Every entry is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grassmann::{
    h22_expectation_exact, localisation_check, verify_berezinian, verify_susy_horo_identities, Analytic, Form,
    LocalisationReport, SuperQuadSpec,
};
use crate::grassmann::integrate::probe_points;
use crate::graph::WeightedGraph;
use crate::report::{CheckRecord, Criterion, ExperimentReport};
use crate::sigma_hn::{verify_coordinate_identities, verify_jacobian_hn, HnConfig};

/// Tolerance of the normalisation and localisation checks.
pub const LOCALISATION_TOL: f64 = 1e-7;
/// Tolerance of the finite-difference geometry checks.
pub const GEOMETRY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SusyBattery {
    pub beta: f64,
    pub h: f64,
    /// Probe points per geometry check.
    pub points: usize,
    /// Include the two-vertex normalisation and localisation (the slow part).
    pub two_vertex: bool,
}

impl Default for SusyBattery {
    fn default() -> Self {
        Self { beta: 1.0, h: 1.0, points: 20, two_vertex: true }
    }
}

fn localisation_record(name: &str, r: &LocalisationReport) -> [CheckRecord; 2] {
    [
        CheckRecord::new(
            format!("localisation.{name}"),
            r.integral.value,
            0.0,
            r.body_at_origin,
            0.0,
            Criterion::Absolute { tol: LOCALISATION_TOL },
        )
        .with_note(format!("quadrature error {:.1e}, tail {:.1e}", r.integral.error, r.integral.tail)),
        CheckRecord::new(format!("q_residual.{name}"), r.q_residual, 0.0, 0.0, 0.0, Criterion::Absolute { tol: 1e-10 }),
    ]
}

/// Normalisation and localisation on one (and optionally two) vertices to
/// 1e-7, then the Jacobian, Berezinian and derivative identities.
pub fn run_battery(cfg: &SusyBattery) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("verify-susy", 0);
    let one = WeightedGraph::single_vertex(cfg.h)?;
    let mut graphs = vec![("single", one)];
    if cfg.two_vertex {
        graphs.push(("pair", WeightedGraph::two_vertex(cfg.beta, cfg.h)?));
    }
    for (name, g) in &graphs {
        let v = h22_expectation_exact(g, Form::c(1.0), None)?;
        report.push(CheckRecord::new(format!("normalisation.{name}"), v.value, 0.0, 1.0, 0.0, Criterion::Absolute { tol: LOCALISATION_TOL }));
        let z = h22_expectation_exact(g, Form::Z(0), None)?;
        report.push(CheckRecord::new(format!("z_mean.{name}"), z.value, 0.0, 1.0, 0.0, Criterion::Absolute { tol: LOCALISATION_TOL }));
    }

    let spec = SuperQuadSpec::default();
    for rec in localisation_record("gaussian_tau", &localisation_check(&(-Form::Tau(0, 0)).exp(), 1, &spec)?) {
        report.push(rec);
    }
    let (center, width) = (0.5, 1.0);
    let bump = Form::Tau(0, 0).apply(Analytic::Bump { center, width });
    let bump_spec = SuperQuadSpec { max_level: 6, radial_max: (center + width).sqrt().asinh(), ..spec.clone() };
    for rec in localisation_record("bump", &localisation_check(&bump, 1, &bump_spec)?) {
        report.push(rec);
    }
    if cfg.two_vertex {
        // Zero field: int e^{-H} g(z) prod 1/z_i = g(1, 1).
        let g = (-((Form::Z(0) - 1.0) * (Form::Z(0) - 1.0)) - (Form::Z(1) - 1.0) * (Form::Z(1) - 1.0)).exp();
        let action = (-Form::Inner(0, 1) - 1.0).scale(cfg.beta);
        let f = g * (-action).exp() * Form::Z(0).recip() * Form::Z(1).recip();
        // Rotation invariant, so one global angle suffices.
        let pair_spec = SuperQuadSpec { radial_max: 3.5, base_global: 1, ..spec };
        for rec in localisation_record("g_of_z_pair", &localisation_check(&f, 2, &pair_spec)?) {
            report.push(rec);
        }
    }

    let pts = probe_points(2, cfg.points);
    for n in [2usize, 3] {
        let worst = pts
            .iter()
            .map(|p| verify_jacobian_hn(n, 0.5 * p[0], &p[1..n]).map(|r| r.rel_error))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        report.push(CheckRecord::new(format!("jacobian.hn{n}"), worst, 0.0, 0.0, 0.0, Criterion::Absolute { tol: GEOMETRY_TOL }));
    }
    let mut worst = 0.0f64;
    for p in &pts {
        let point = HnConfig { n: 3, t: vec![0.5 * p[0], 0.5 * p[1]], s: vec![vec![p[2], p[3]], vec![p[3], -p[2]]] };
        worst = worst.max(verify_coordinate_identities(&point, &[0, 1])?.max_error);
    }
    report.push(CheckRecord::new("derivatives.hn", worst, 0.0, 0.0, 0.0, Criterion::Absolute { tol: GEOMETRY_TOL }));

    let horo: Vec<(Vec<f64>, Vec<f64>)> = pts.iter().map(|p| (vec![p[0], p[1]], vec![p[2], p[3]])).collect();
    let r = verify_susy_horo_identities(&horo)?;
    report.push(CheckRecord::new("derivatives.susy", r.max_error, 0.0, 0.0, 0.0, Criterion::Absolute { tol: r.tolerance }));
    let grid: Vec<(f64, f64)> = pts.iter().map(|p| (p[0], p[1])).collect();
    let b = verify_berezinian(&grid)?;
    report.push(CheckRecord::new("berezinian", b.max_error, 0.0, 0.0, 0.0, Criterion::Absolute { tol: 1e-12 }));
    Ok(report)
}
