//! Adaptive runs with an optional uniform run of matched Total DoF and
//! solution snapshots at requested times.

use serde::{Deserialize, Serialize};

use crate::adaptive::{run_adaptive, AdaptiveConfig, AdaptiveRun};
use crate::error::{Error, Result};
use crate::harness::uniform::{run_uniform_with, UniformParams, UniformRun};
use crate::mesh::Mesh1D;
use crate::problems::ProblemSpec;
use crate::spline::{FeFunction, SplineSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    pub degree: usize,
    /// Elements of the initial uniform grid.
    pub elements: usize,
    pub k0: f64,
    pub config: AdaptiveConfig,
    /// Also run a uniform partition with the same Total DoF.
    pub compare_uniform: bool,
    /// Times at which both runs keep a solution snapshot.
    pub snapshot_times: Vec<f64>,
}

impl AdaptiveParams {
    /// Initial grid, step and refinement fraction from the problem defaults.
    pub fn from_defaults(prob: &ProblemSpec) -> Self {
        let d = &prob.defaults;
        Self {
            degree: d.degree,
            elements: d.elements,
            k0: d.k,
            config: AdaptiveConfig {
                tol_s: d.tol_s,
                tol_t: d.tol_t,
                refine_fraction: d.refine_fraction,
                ..AdaptiveConfig::default()
            },
            compare_uniform: false,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatchedUniform {
    pub elements: usize,
    pub k: f64,
    pub total_dof: u64,
    pub run: UniformRun,
    pub snapshots: Vec<(f64, FeFunction)>,
}

#[derive(Clone, Debug)]
pub struct AdaptiveReport {
    pub params: AdaptiveParams,
    pub run: AdaptiveRun,
    pub snapshots: Vec<(f64, FeFunction)>,
    pub uniform: Option<MatchedUniform>,
}

impl AdaptiveReport {
    /// `Ẽ^T + Ẽ^S` at the final time.
    pub fn total_estimator(&self) -> f64 {
        self.run.totals.tilde_t() + self.run.totals.tilde_s()
    }
}

/// Keeps the first state at or after each requested time.
struct SnapshotTaker {
    times: Vec<f64>,
    next: usize,
    taken: Vec<(f64, FeFunction)>,
}

impl SnapshotTaker {
    fn new(mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        Self {
            times,
            next: 0,
            taken: Vec::new(),
        }
    }

    fn offer(&mut self, t: f64, u: &FeFunction) {
        while self.next < self.times.len() && t >= self.times[self.next] - 1e-12 * (1.0 + t.abs()) {
            self.taken.push((t, u.clone()));
            self.next += 1;
        }
    }
}

/// Uniform parameters whose `Σ k·dim` matches the adaptive run: same step
/// as the final adaptive step, `dim ≈ Σ k_n dim_n / T`.
pub fn matched_uniform_params(prob: &ProblemSpec, run: &AdaptiveRun, degree: usize) -> Result<UniformParams> {
    let k = run
        .final_k()
        .ok_or_else(|| Error::InvalidConfig("adaptive run took no steps".into()))?;
    let weighted: f64 = run.records.iter().map(|r| r.k * r.dim as f64).sum();
    let dim = (weighted / prob.t_final).round().max(1.0) as usize;
    let elements = (dim + 2).saturating_sub(degree).max(1);
    let mut p = UniformParams::new(degree, elements, k);
    p.estimators = Some(run.config.estimators);
    Ok(p)
}

pub fn run_adaptive_experiment(prob: &ProblemSpec, params: &AdaptiveParams) -> Result<AdaptiveReport> {
    let mesh = Mesh1D::uniform(prob.a, prob.b, params.elements)?;
    let space = SplineSpace::new(mesh, params.degree)?;
    let mut snaps = SnapshotTaker::new(params.snapshot_times.clone());
    let run = run_adaptive(prob, space, params.k0, &params.config, &mut |_, st| {
        snaps.offer(st.t, &st.u);
        Ok(())
    })?;
    let uniform = if params.compare_uniform {
        let up = matched_uniform_params(prob, &run, params.degree)?;
        let mut usnaps = SnapshotTaker::new(params.snapshot_times.clone());
        let urun = run_uniform_with(prob, &up, None, &mut |_, st| {
            usnaps.offer(st.t, &st.u);
            Ok(())
        })?;
        let n = urun.totals.map_or(0, |t| t.steps);
        let total_dof = crate::adaptive::total_dof((0..n).map(|i| {
            let k = if i + 1 == n { prob.t_final - (n - 1) as f64 * up.k } else { up.k };
            (k, urun.final_state.u.space().dim())
        }));
        Some(MatchedUniform {
            elements: up.elements,
            k: up.k,
            total_dof,
            run: urun,
            snapshots: usnaps.taken,
        })
    } else {
        None
    };
    Ok(AdaptiveReport {
        params: params.clone(),
        run,
        snapshots: snaps.taken,
        uniform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::catalog;

    #[test]
    fn matched_uniform_has_the_same_total_dof() {
        let prob = catalog("exp1b").unwrap();
        let mut p = AdaptiveParams::from_defaults(&prob);
        p.elements = 20;
        p.k0 = 0.05;
        p.config.tol_s = 0.5;
        p.config.tol_t = 0.05;
        p.compare_uniform = true;
        p.snapshot_times = vec![0.0, 0.5, 1.0];
        let rep = run_adaptive_experiment(&prob, &p).unwrap();
        let u = rep.uniform.as_ref().unwrap();
        let a = rep.run.total_dof() as f64;
        assert!((u.total_dof as f64 - a).abs() <= 0.02 * a + 2.0, "{} vs {a}", u.total_dof);
        assert_eq!(rep.snapshots.len(), 3);
        assert_eq!(u.snapshots.len(), 3);
        assert_eq!(rep.snapshots[0].0, 0.0);
        assert_eq!(rep.snapshots[2].0, prob.t_final);
    }
}
