//! Uniform-partition convergence tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorTotals};
use crate::harness::eoc::eoc;
use crate::harness::reference::{Reference, ReferenceParams};
use crate::harness::uniform::{run_uniform, UniformParams};
use crate::problems::ProblemSpec;

/// Rows of a preset convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TablePreset {
    pub problem: String,
    pub degree: usize,
    /// `(M, k⁻¹)` pairs, coarse to fine.
    pub rows: Vec<(usize, f64)>,
    /// Rows kept at desk scale; the rest need `full`.
    pub desk_rows: usize,
    /// Fine-grid reference when there is no exact solution.
    pub reference: Option<ReferenceParams>,
}

impl TablePreset {
    pub fn rows(&self, full: bool) -> &[(usize, f64)] {
        if full {
            &self.rows
        } else {
            &self.rows[..self.desk_rows.min(self.rows.len())]
        }
    }

    /// The reference sampled at the finest selected step.
    pub fn reference_for(&self, full: bool) -> Option<ReferenceParams> {
        let kinv = self.rows(full).iter().map(|r| r.1).fold(0.0, f64::max);
        self.reference.clone().map(|mut r| {
            r.k_sample = 1.0 / kinv;
            r
        })
    }
}

fn doubling(from: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| from * f64::powi(2.0, i as i32)).collect()
}

/// Degree-5 reference with 480 elements on `[−2, 2]`. The full-scale runs
/// use `k_ref⁻¹ = 40960`; desk scale uses 10240 with `full` restoring it.
fn exp1_reference(full: bool) -> ReferenceParams {
    ReferenceParams {
        degree: 5,
        elements: 480,
        k_ref: if full { 1.0 / 40960.0 } else { 1.0 / 10240.0 },
        k_sample: 1.0 / 160.0,
    }
}

/// Presets for `exp1a`, `exp1b`, `exp1c` and `exp2`.
pub fn preset(name: &str, full: bool) -> Option<TablePreset> {
    let (degree, ms, k0, desk): (usize, Vec<usize>, f64, usize) = match name {
        "exp1a" => (1, vec![640, 1280, 2560, 5120, 10240], 160.0, 3),
        "exp1b" => (2, vec![75, 120, 185, 295, 470, 750], 80.0, 4),
        "exp1c" => (3, vec![35, 50, 70, 100, 145, 200], 80.0, 4),
        "exp2" => (2, vec![75, 120, 185, 295, 470, 750, 1190, 1885], 80.0, 6),
        _ => return None,
    };
    let kinv = doubling(k0, ms.len());
    Some(TablePreset {
        problem: name.into(),
        degree,
        rows: ms.into_iter().zip(kinv).collect(),
        desk_rows: desk,
        reference: (name != "exp2").then(|| exp1_reference(full)),
    })
}

/// Element count paired with `k` by `h ≈ k^{2/(r+1)}`, rounded to the
/// nearest integer.
pub fn elements_for_step(prob: &ProblemSpec, degree: usize, k: f64) -> usize {
    let h = k.powf(2.0 / (degree as f64 + 1.0));
    (((prob.b - prob.a) / h).round() as usize).max(1)
}

/// Pairs `(M, k⁻¹)` for a list of inverse steps.
pub fn pairs_from_steps(prob: &ProblemSpec, degree: usize, k_inv: &[f64]) -> Vec<(usize, f64)> {
    k_inv.iter().map(|&ki| (elements_for_step(prob, degree, 1.0 / ki), ki)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub elements: usize,
    pub k: f64,
    pub totals: EstimatorTotals,
    /// Exact error when the solution is known, else reference error.
    pub error: Option<f64>,
    pub effectivity: Option<f64>,
    pub max_norm_drift: f64,
    pub max_midpoint_defect: f64,
    pub seconds: f64,
}

impl SweepRow {
    pub fn k_inv(&self) -> f64 {
        1.0 / self.k
    }
}

/// Estimator columns; the first four are indexed by `M`, the time ones by `k⁻¹`.
pub const SPACE_COLUMNS: [&str; 4] = ["E_S0", "E_S1", "E_S2", "E_S3"];
pub const TIME_COLUMNS: [&str; 2] = ["E_T0", "E_T1"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EocTable {
    pub problem: String,
    pub degree: usize,
    pub reference: Option<ReferenceParams>,
    pub rows: Vec<SweepRow>,
}

fn totals_column(t: &EstimatorTotals, name: &str) -> f64 {
    match name {
        "E_S0" => t.e_s0,
        "E_S1" => t.e_s1,
        "E_S2" => t.e_s2,
        "E_S3" => t.e_s3,
        "E_T0" => t.e_t0,
        "E_T1" => t.e_t1,
        "total" => t.total(),
        _ => f64::NAN,
    }
}

impl EocTable {
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match name {
                "error" => r.error.unwrap_or(f64::NAN),
                "ei" => r.effectivity.unwrap_or(f64::NAN),
                _ => totals_column(&r.totals, name),
            })
            .collect()
    }

    /// EOC of a column: against `M` for space estimators, `k⁻¹` otherwise.
    /// `None` when some value is zero or missing.
    pub fn eoc(&self, name: &str) -> Option<Vec<f64>> {
        let vals = self.column(name);
        let params: Vec<f64> = if SPACE_COLUMNS.contains(&name) {
            self.rows.iter().map(|r| r.elements as f64).collect()
        } else {
            self.rows.iter().map(SweepRow::k_inv).collect()
        };
        eoc(&vals, &params).ok()
    }
}

/// Runs every row. Rows are independent and run on the rayon pool.
pub fn run_table(
    prob: &ProblemSpec,
    degree: usize,
    rows: &[(usize, f64)],
    reference: Option<&Reference>,
    cfg: EstimatorConfig,
) -> Result<EocTable> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("a table needs at least one row".into()));
    }
    let out: Vec<SweepRow> = rows
        .par_iter()
        .map(|&(m, kinv)| {
            let mut p = UniformParams::new(degree, m, 1.0 / kinv);
            p.estimators = Some(cfg);
            let run = run_uniform(prob, &p, reference)?;
            Ok(SweepRow {
                elements: m,
                k: p.k,
                totals: run.totals.expect("estimators requested"),
                error: run.error_exact.or(run.error_ref),
                effectivity: run.effectivity(),
                max_norm_drift: run.max_norm_drift,
                max_midpoint_defect: run.max_midpoint_defect,
                seconds: run.seconds,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EocTable {
        problem: prob.name.clone(),
        degree,
        reference: reference.map(|r| r.params.clone()),
        rows: out,
    })
}

/// Runs a preset, computing its reference first when needed.
pub fn run_preset(prob: &ProblemSpec, preset: &TablePreset, full: bool, cfg: EstimatorConfig) -> Result<EocTable> {
    let reference = match (&prob.exact, preset.reference_for(full)) {
        (None, Some(rp)) => Some(Reference::compute(prob, &rp)?),
        _ => None,
    };
    run_table(prob, preset.degree, preset.rows(full), reference.as_ref(), cfg)
}
