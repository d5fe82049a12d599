//! Observable-mode experiments: space-adaptive run with ε-scaled
//! estimators against a uniform run of equal Total DoF, both measured
//! against a fine reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::adaptive_report::{run_adaptive_experiment, AdaptiveParams, AdaptiveReport};
use crate::harness::compare::density_distance;
use crate::harness::uniform::{run_uniform, UniformParams};
use crate::problems::{current_density, position_density, ProblemSpec};
use crate::spline::FeFunction;

/// Rows `(x, N, J)` on `grid`.
pub fn observable_rows(u: &FeFunction, grid: &[f64]) -> Result<Vec<[f64; 3]>> {
    let n = position_density(u, grid)?;
    let j = current_density(u, grid)?;
    Ok(grid.iter().zip(n).zip(j).map(|((x, n), j)| [*x, n, j]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineReference {
    pub degree: usize,
    pub elements: usize,
    pub k: f64,
}

impl FineReference {
    /// Linear splines on a uniform grid with a constant potential take the
    /// closed-form path, so this is cheap even for very fine grids.
    pub fn default_for(prob: &ProblemSpec) -> Self {
        let eps = prob.eps.unwrap_or(1.0);
        let len = prob.b - prob.a;
        Self {
            degree: 1,
            elements: ((40.0 * len / eps).ceil() as usize).max(1000),
            k: (eps * eps).min(prob.t_final / 1000.0),
        }
    }

    pub fn final_solution(&self, prob: &ProblemSpec) -> Result<FeFunction> {
        let p = UniformParams::new(self.degree, self.elements, self.k);
        Ok(run_uniform(prob, &p, None)?.final_state.u)
    }
}

#[derive(Clone, Debug)]
pub struct ObservableReport {
    pub adaptive: AdaptiveReport,
    pub reference: FineReference,
    /// `‖N_adaptive − N_ref‖` at the final time.
    pub adaptive_distance: f64,
    /// `‖N_uniform − N_ref‖` at the final time.
    pub uniform_distance: f64,
    pub reference_solution: FeFunction,
}

/// Observable-mode configuration: ε-scaling on, fixed time step.
pub fn observable_params(prob: &ProblemSpec) -> AdaptiveParams {
    let mut p = AdaptiveParams::from_defaults(prob);
    p.config.observable_mode = true;
    p.config.adapt_time = false;
    p.compare_uniform = true;
    p.snapshot_times = vec![0.0, prob.t_final];
    p
}

pub fn run_observables(prob: &ProblemSpec, params: &AdaptiveParams, reference: &FineReference) -> Result<ObservableReport> {
    if !params.compare_uniform {
        return Err(Error::InvalidConfig("observable comparison needs the matched uniform run".into()));
    }
    let adaptive = run_adaptive_experiment(prob, params)?;
    let reference_solution = reference.final_solution(prob)?;
    let adaptive_distance = density_distance(&adaptive.run.final_state.u, &reference_solution)?;
    let uniform = adaptive.uniform.as_ref().expect("requested above");
    let uniform_distance = density_distance(&uniform.run.final_state.u, &reference_solution)?;
    Ok(ObservableReport {
        adaptive,
        reference: reference.clone(),
        adaptive_distance,
        uniform_distance,
        reference_solution,
    })
}
