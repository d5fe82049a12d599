//! Fine-grid reference solutions sampled at fixed times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::compare::l2_distance;
use crate::harness::uniform::{run_uniform_with, UniformParams};
use crate::problems::ProblemSpec;
use crate::spline::{FeFunction, FeSnapshot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceParams {
    pub degree: usize,
    pub elements: usize,
    pub k_ref: f64,
    /// Spacing of stored snapshots; an integer multiple of `k_ref`.
    pub k_sample: f64,
}

#[derive(Clone, Debug)]
pub struct Reference {
    pub params: ReferenceParams,
    pub problem: String,
    /// Snapshot `i` is the solution at `i · k_sample`.
    snapshots: Vec<FeFunction>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    params: ReferenceParams,
    problem: String,
    snapshots: Vec<FeSnapshot>,
}

impl Reference {
    pub fn compute(prob: &ProblemSpec, params: &ReferenceParams) -> Result<Self> {
        let ratio = (params.k_sample / params.k_ref).round();
        if ratio < 1.0 || (ratio * params.k_ref - params.k_sample).abs() > 1e-9 * params.k_sample {
            return Err(Error::InvalidConfig(format!(
                "sample spacing {} is not a multiple of the reference step {}",
                params.k_sample, params.k_ref
            )));
        }
        let ratio = ratio as usize;
        let mut run = UniformParams::new(params.degree, params.elements, params.k_ref);
        run.estimators = None;
        run.checks = false;
        let mut snapshots = Vec::new();
        run_uniform_with(prob, &run, None, &mut |n, st| {
            if n % ratio == 0 {
                snapshots.push(st.u.clone());
            }
            Ok(())
        })?;
        Ok(Self {
            params: params.clone(),
            problem: prob.name.clone(),
            snapshots,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Snapshot at `t` when `t` is a sample time.
    pub fn at(&self, t: f64) -> Option<&FeFunction> {
        let s = t / self.params.k_sample;
        let i = s.round();
        if (s - i).abs() > 1e-6 || i < 0.0 {
            return None;
        }
        self.snapshots.get(i as usize)
    }

    /// `‖u_ref(t) − u‖` when `t` is a sample time.
    pub fn error_against(&self, t: f64, u: &FeFunction) -> Result<Option<f64>> {
        match self.at(t) {
            Some(r) => Ok(Some(l2_distance(r, u)?)),
            None => Ok(None),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ReferenceFile {
            params: self.params.clone(),
            problem: self.problem.clone(),
            snapshots: self.snapshots.iter().map(|s| s.snapshot()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ReferenceFile = serde_json::from_str(s)?;
        Ok(Self {
            params: file.params,
            problem: file.problem,
            snapshots: file.snapshots.iter().map(FeFunction::from_snapshot).collect::<Result<_>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::uniform::run_uniform;
    use crate::problems::catalog;

    #[test]
    fn coarse_run_equal_to_reference_has_zero_error() {
        let prob = catalog("exp1a").unwrap();
        let p = ReferenceParams {
            degree: 1,
            elements: 40,
            k_ref: 0.05,
            k_sample: 0.1,
        };
        let r = Reference::compute(&prob, &p).unwrap();
        assert_eq!(r.len(), 11);
        let mut run = UniformParams::new(1, 40, 0.05);
        run.estimators = None;
        let out = run_uniform(&prob, &run, Some(&r)).unwrap();
        assert!(out.error_ref.unwrap() < 1e-13);
    }

    #[test]
    fn reference_agrees_with_exact_solution() {
        let prob = catalog("exp2").unwrap();
        let p = ReferenceParams {
            degree: 4,
            elements: 160,
            k_ref: 1.0 / 10240.0,
            k_sample: 0.25,
        };
        let r = Reference::compute(&prob, &p).unwrap();
        let ex = prob.exact.as_ref().unwrap();
        for i in 0..r.len() {
            let t = i as f64 * 0.25;
            let e = crate::harness::compare::l2_error(ex, r.at(t).unwrap(), t).unwrap();
            assert!(e < 1e-6, "t={t}: {e}");
        }
    }

    #[test]
    fn json_round_trip() {
        let prob = catalog("exp1a").unwrap();
        let p = ReferenceParams {
            degree: 2,
            elements: 8,
            k_ref: 0.25,
            k_sample: 0.5,
        };
        let r = Reference::compute(&prob, &p).unwrap();
        let back = Reference::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.len(), r.len());
        assert_eq!(back.at(1.0).unwrap().coeffs(), r.at(1.0).unwrap().coeffs());
    }
}
