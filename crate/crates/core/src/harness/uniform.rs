//! Fixed-mesh runs with constant time step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    initial_estimators, step_estimators, EstimatorConfig, EstimatorTotals, InitialEstimators, StepEstimators,
};
use crate::harness::compare::l2_error;
use crate::harness::reference::Reference;
use crate::harness::spectral::{self, SpectralKernel};
use crate::harness::tridiag::TridiagKernel;
use crate::mesh::Mesh1D;
use crate::problems::ProblemSpec;
use crate::scheme::{StepState, Stepper};
use crate::spline::{FeSnapshot, SplineSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformParams {
    pub degree: usize,
    pub elements: usize,
    pub k: f64,
    /// Gauss points per element; `degree + 3` when absent.
    pub quadrature: Option<usize>,
    /// Estimators to compute; `None` only solves.
    pub estimators: Option<EstimatorConfig>,
    pub keep_steps: bool,
    pub trajectory: bool,
    /// Track the midpoint identity and norm drift.
    pub checks: bool,
    /// Allow the fused tridiagonal kernel when it applies.
    #[serde(default = "yes")]
    pub fused: bool,
}

fn yes() -> bool {
    true
}

impl UniformParams {
    pub fn new(degree: usize, elements: usize, k: f64) -> Self {
        Self {
            degree,
            elements,
            k,
            quadrature: None,
            estimators: Some(EstimatorConfig::default()),
            keep_steps: false,
            trajectory: false,
            checks: true,
            fused: true,
        }
    }

    pub fn space(&self, prob: &ProblemSpec) -> Result<SplineSpace> {
        let mesh = Mesh1D::uniform(prob.a, prob.b, self.elements)?;
        match self.quadrature {
            Some(q) => SplineSpace::with_quadrature(mesh, self.degree, q),
            None => SplineSpace::new(mesh, self.degree),
        }
    }
}

/// One entry of the JSON trajectory dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub n: usize,
    pub t: f64,
    pub k: f64,
    pub u: FeSnapshot,
    /// Coefficients of `∂̄W^{n−1/2}` on the same space (empty at `n = 0`).
    pub wbar: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct UniformRun {
    pub params: UniformParams,
    pub initial: Option<InitialEstimators>,
    pub totals: Option<EstimatorTotals>,
    pub steps: Vec<StepEstimators>,
    /// `max_n ‖u(t_n) − U^n‖` when the exact solution is known.
    pub error_exact: Option<f64>,
    /// `max_n ‖u_ref(t_n) − U^n‖` over the reference sample times.
    pub error_ref: Option<f64>,
    /// `max_n k ‖W(t_{n−1/2}) + (U^n − ΠU^{n−1})/k‖ / ‖U^n‖`.
    pub max_midpoint_defect: f64,
    /// `max_n |‖U^n‖ − ‖U^0‖| / (n ‖U^0‖)`.
    pub max_norm_drift: f64,
    pub final_state: StepState,
    pub trajectory: Vec<TrajectoryFrame>,
    pub seconds: f64,
}

impl UniformRun {
    /// Total estimator over the exact error when known, else over the
    /// reference error.
    pub fn effectivity(&self) -> Option<f64> {
        let total = self.totals?.total();
        let err = self.error_exact.or(self.error_ref)?;
        (err > 0.0).then(|| total / err)
    }
}

pub fn run_uniform(prob: &ProblemSpec, params: &UniformParams, reference: Option<&Reference>) -> Result<UniformRun> {
    if params.fused && params.degree == 1 && !params.trajectory {
        if let (Some(cfg), Some(g)) = (&params.estimators, prob.g.as_const()) {
            if !cfg.jumps && prob.f.is_zero() {
                return run_fused(prob, params, reference, *cfg, g);
            }
        }
    }
    run_uniform_with(prob, params, reference, &mut |_, _| Ok(()))
}

fn run_fused(
    prob: &ProblemSpec,
    params: &UniformParams,
    reference: Option<&Reference>,
    cfg: EstimatorConfig,
    g: f64,
) -> Result<UniformRun> {
    if !(params.k > 0.0) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {}", params.k)));
    }
    let start = Instant::now();
    let space = params.space(prob)?;
    let t_final = prob.t_final;
    let n_steps = ((t_final / params.k) - 1e-9).ceil().max(1.0) as usize;
    let mut stepper = Stepper::new(prob);
    let state0 = stepper.initial(&space)?;
    let ops = stepper.ops(&space)?;
    let initial = initial_estimators(prob, &state0, Some(&ops), &cfg)?;
    let mut totals = EstimatorTotals::from_initial(&initial, &cfg);
    let mut kernel = TridiagKernel::new(&ops, prob.alpha, g, params.k, cfg, state0.u.coeffs())?;
    let norm0 = kernel.norm();

    let needs_state = prob.exact.is_some() || reference.is_some();
    if !needs_state && spectral::applicable(&space) {
        return run_spectral(prob, params, &space, state0, initial, totals, cfg, g, start);
    }
    let mut error_exact: Option<f64> = None;
    let mut error_ref: Option<f64> = None;
    let mut track_errors = |st: &StepState| -> Result<()> {
        if let Some(ex) = &prob.exact {
            let e = l2_error(ex, &st.u, st.t)?;
            error_exact = Some(error_exact.map_or(e, |v: f64| v.max(e)));
        }
        if let Some(r) = reference {
            if let Some(e) = r.error_against(st.t, &st.u)? {
                error_ref = Some(error_ref.map_or(e, |v: f64| v.max(e)));
            }
        }
        Ok(())
    };
    let state_of = |kernel: &TridiagKernel, t: f64| StepState {
        t,
        u: ops.function(kernel.c.clone()),
        lap: ops.function(kernel.l.clone()),
    };
    if needs_state {
        track_errors(&state0)?;
    }

    let mut steps = Vec::new();
    let mut max_defect: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut t = 0.0;
    for n in 1..=n_steps {
        let k = if n == n_steps { t_final - t } else { params.k };
        if k != kernel.k() {
            kernel = TridiagKernel::new(&ops, prob.alpha, g, k, cfg, &kernel.c)?;
        }
        let (mut est, defect) = kernel.step(n, t + k);
        t = if n == n_steps { t_final } else { n as f64 * params.k };
        est.t = t;
        totals.accumulate(&est).map_err(|e| e.at_step(n))?;
        if params.keep_steps {
            steps.push(est);
        }
        if params.checks {
            let un = kernel.norm();
            if un > 0.0 {
                max_defect = max_defect.max(k * defect / un);
            }
            if norm0 > 0.0 {
                max_drift = max_drift.max((un - norm0).abs() / (norm0 * n as f64));
            }
        }
        if needs_state {
            track_errors(&state_of(&kernel, t))?;
        }
    }

    Ok(UniformRun {
        params: params.clone(),
        initial: Some(initial),
        totals: Some(totals),
        steps,
        error_exact,
        error_ref,
        max_midpoint_defect: max_defect,
        max_norm_drift: max_drift,
        final_state: state_of(&kernel, t_final),
        trajectory: Vec::new(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Without error tracking no intermediate state is needed, so the steps of
/// equal size collapse into one estimator evaluation and one phase shift.
#[allow(clippy::too_many_arguments)]
fn run_spectral(
    prob: &ProblemSpec,
    params: &UniformParams,
    space: &SplineSpace,
    state0: StepState,
    initial: InitialEstimators,
    mut totals: EstimatorTotals,
    cfg: EstimatorConfig,
    g: f64,
    start: Instant,
) -> Result<UniformRun> {
    let t_final = prob.t_final;
    let n_steps = ((t_final / params.k) - 1e-9).ceil().max(1.0) as usize;
    let mut kernel = SpectralKernel::new(space, prob.alpha, g, state0.u.coeffs())?;
    let norm0 = kernel.norm();
    let k_last = t_final - (n_steps - 1) as f64 * params.k;
    let (est, defect) = kernel.step_estimators(1, params.k, params.k, &cfg);
    let mut steps = Vec::new();
    let mut max_defect = 0.0;
    for n in 1..n_steps {
        let e = StepEstimators {
            n,
            t: n as f64 * params.k,
            ..est
        };
        totals.accumulate(&e).map_err(|e| e.at_step(n))?;
        if params.keep_steps {
            steps.push(e);
        }
        max_defect = params.k * defect;
    }
    kernel.advance(params.k, n_steps - 1);
    let (mut last, defect) = kernel.step_estimators(n_steps, t_final, k_last, &cfg);
    last.t = t_final;
    totals.accumulate(&last).map_err(|e| e.at_step(n_steps))?;
    if params.keep_steps {
        steps.push(last);
    }
    kernel.advance(k_last, 1);
    let mut max_drift = 0.0;
    if params.checks {
        let un = kernel.norm();
        if un > 0.0 {
            max_defect = f64::max(max_defect, k_last * defect) / un;
        }
        if norm0 > 0.0 {
            max_drift = (un - norm0).abs() / (norm0 * n_steps as f64);
        }
    } else {
        max_defect = 0.0;
    }
    let ops = Stepper::new(prob).ops(space)?;
    let u = ops.function(kernel.coeffs());
    let lap = ops.laplacian(&u);
    Ok(UniformRun {
        params: params.clone(),
        initial: Some(initial),
        totals: Some(totals),
        steps,
        error_exact: None,
        error_ref: None,
        max_midpoint_defect: max_defect,
        max_norm_drift: max_drift,
        final_state: StepState { t: t_final, u, lap },
        trajectory: Vec::new(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `⌈T/k⌉` steps (the last one clipped to `T`), calling `on_state`
/// with every solution including `U^0`.
pub fn run_uniform_with(
    prob: &ProblemSpec,
    params: &UniformParams,
    reference: Option<&Reference>,
    on_state: &mut dyn FnMut(usize, &StepState) -> Result<()>,
) -> Result<UniformRun> {
    if !(params.k > 0.0) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {}", params.k)));
    }
    let start = Instant::now();
    let space = params.space(prob)?;
    let t_final = prob.t_final;
    let n_steps = ((t_final / params.k) - 1e-9).ceil().max(1.0) as usize;
    let mut stepper = Stepper::new(prob);
    let mut state = stepper.initial(&space)?;
    let ops = stepper.ops(&space)?;
    let norm0 = ops.norm_sq(state.u.coeffs()).sqrt();

    let initial = match &params.estimators {
        Some(cfg) => Some(initial_estimators(prob, &state, Some(&ops), cfg)?),
        None => None,
    };
    let mut totals = match (&initial, &params.estimators) {
        (Some(i), Some(cfg)) => Some(EstimatorTotals::from_initial(i, cfg)),
        _ => None,
    };
    let mut error_exact: Option<f64> = None;
    let mut error_ref: Option<f64> = None;
    let mut track_errors = |n: usize, st: &StepState| -> Result<()> {
        if let Some(ex) = &prob.exact {
            let e = l2_error(ex, &st.u, st.t)?;
            error_exact = Some(error_exact.map_or(e, |v: f64| v.max(e)));
        }
        if let Some(r) = reference {
            if let Some(e) = r.error_against(st.t, &st.u)? {
                error_ref = Some(error_ref.map_or(e, |v: f64| v.max(e)));
            }
        }
        on_state(n, st)
    };
    track_errors(0, &state)?;

    let mut steps = Vec::new();
    let mut trajectory = Vec::new();
    if params.trajectory {
        trajectory.push(TrajectoryFrame {
            n: 0,
            t: 0.0,
            k: 0.0,
            u: state.u.snapshot(),
            wbar: Vec::new(),
        });
    }
    let mut max_defect: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut eta_prev = initial.map(|i| i.eta);
    for n in 1..=n_steps {
        let k = if n == n_steps { t_final - state.t } else { params.k };
        let res = stepper.step(&state, &space, k).map_err(|e| e.at_step(n))?;
        if let (Some(cfg), Some(tot)) = (&params.estimators, totals.as_mut()) {
            let est = step_estimators(n, &state, &res, prob, cfg, eta_prev).map_err(|e| e.at_step(n))?;
            tot.accumulate(&est)?;
            eta_prev = Some(est.eta_u);
            if params.keep_steps {
                steps.push(est);
            }
        }
        if params.checks {
            let un = ops.norm_sq(res.u_new.coeffs()).sqrt();
            if un > 0.0 {
                max_defect = max_defect.max(k * res.midpoint_defect(prob.alpha) / un);
            }
            if norm0 > 0.0 {
                max_drift = max_drift.max((un - norm0).abs() / (norm0 * n as f64));
            }
        }
        if params.trajectory {
            trajectory.push(TrajectoryFrame {
                n,
                t: res.t_new(),
                k,
                u: res.u_new.snapshot(),
                wbar: res.wbar.coeffs().iter().map(|c| [c.re, c.im]).collect(),
            });
        }
        let mut next = res.state();
        next.t = if n == n_steps { t_final } else { n as f64 * params.k };
        state = next;
        track_errors(n, &state)?;
    }

    Ok(UniformRun {
        params: params.clone(),
        initial,
        totals,
        steps,
        error_exact,
        error_ref,
        max_midpoint_defect: max_defect,
        max_norm_drift: max_drift,
        final_state: state,
        trajectory,
        seconds: start.elapsed().as_secs_f64(),
    })
}
