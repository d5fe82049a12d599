//! Time–space adaptive driver: time-step rejection, element marking, grid
//! adaptation and time-step enlargement.

use std::collections::HashSet;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::L2Expr;
use crate::error::{Error, Result};
use crate::estimators::{
    element_indicators, eta_sq_elements, initial_estimators, step_estimators, EstimatorConfig, EstimatorTotals,
    InitialEstimators, StepEstimators,
};
use crate::mesh::{ElementId, Mesh1D};
use crate::problems::ProblemSpec;
use crate::scheme::{StepResult, StepState, Stepper};
use crate::spline::SplineSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub tol_s: f64,
    pub tol_t: f64,
    /// Time-step reduction factor on rejection.
    pub delta1: f64,
    /// Time-step enlargement factor.
    pub delta2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub refine_fraction: f64,
    pub coarsen_fraction: f64,
    pub max_inner_iters: usize,
    /// Floor on `k`; `1e-12·T` when absent.
    pub k_min: Option<f64>,
    /// Scale every ζ except `ζ^{S,0}`, `ζ^{T,0}` by ε before testing.
    pub observable_mode: bool,
    /// When false `k` stays at its initial value and only the grid adapts.
    pub adapt_time: bool,
    /// Refine the initial grid until `ζ_0^I + ζ_0^{S,0} ≤ tol_S`.
    pub adapt_initial_grid: bool,
    pub estimators: EstimatorConfig,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            tol_s: 1e-1,
            tol_t: 1e-1,
            delta1: 0.75,
            delta2: 1.25,
            theta1: 0.9,
            theta2: 0.2,
            refine_fraction: 0.05,
            coarsen_fraction: 0.10,
            max_inner_iters: 200,
            k_min: None,
            observable_mode: false,
            adapt_time: true,
            adapt_initial_grid: true,
            estimators: EstimatorConfig::default(),
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.tol_s > 0.0 && self.tol_t > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.delta1 > 0.0 && self.delta1 < 1.0) || !(self.delta2 > 1.0) {
            return bad("need 0 < delta1 < 1 < delta2");
        }
        if !(self.theta1 > 0.0 && self.theta1 < 1.0) || !(self.theta2 > 0.0 && self.theta2 < self.theta1) {
            return bad("need 0 < theta2 < theta1 < 1");
        }
        if !(0.0..=1.0).contains(&self.refine_fraction) || !(0.0..=1.0).contains(&self.coarsen_fraction) {
            return bad("marking fractions must lie in [0, 1]");
        }
        if self.max_inner_iters == 0 {
            return bad("max_inner_iters must be positive");
        }
        Ok(())
    }
}

/// Elements to refine and to coarsen.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Marking {
    pub refine: HashSet<ElementId>,
    pub coarsen: HashSet<ElementId>,
}

impl Marking {
    pub fn is_empty(&self) -> bool {
        self.refine.is_empty() && self.coarsen.is_empty()
    }
}

/// Fixed-fraction marking: the `⌈refine_fraction·n⌉` largest indicators
/// are refined, the `⌊coarsen_fraction·n⌋` smallest of the rest coarsened.
/// Ties go to the lower element position.
pub fn mark(mesh: &Mesh1D, indicators: &[f64], refine_fraction: f64, coarsen_fraction: f64) -> Result<Marking> {
    let n = mesh.num_elements();
    if indicators.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: indicators.len(),
        });
    }
    let n_ref = ((refine_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_coa = ((coarsen_fraction * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let refine: HashSet<ElementId> = order[..n_ref.min(n)].iter().map(|&e| mesh.leaves()[e]).collect();
    let mut rest: Vec<usize> = order[n_ref.min(n)..].to_vec();
    rest.sort_by(|&a, &b| indicators[a].total_cmp(&indicators[b]).then(a.cmp(&b)));
    let coarsen = rest.iter().take(n_coa).map(|&e| mesh.leaves()[e]).collect();
    Ok(Marking { refine, coarsen })
}

/// Refines the marked elements, then merges sibling pairs that were both
/// marked for coarsening and survived the refinement.
pub fn adapt_mesh(mesh: &Mesh1D, marking: &Marking) -> Result<Mesh1D> {
    let refined = mesh.refine(&marking.refine)?;
    Ok(refined.coarsen(&marking.coarsen))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    ShrinkK,
    GrowK,
    Refine,
    Coarsen,
    InitialRefine,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::ShrinkK => "shrink-k",
            Action::GrowK => "grow-k",
            Action::Refine => "refine",
            Action::Coarsen => "coarsen",
            Action::InitialRefine => "initial-refine",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub n: usize,
    pub t: f64,
    pub action: Action,
    pub payload: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:.10e} {} {}", self.n, self.t, self.action, self.payload)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub t: f64,
    pub k: f64,
    pub dim: usize,
    pub elements: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub time_iters: usize,
    pub space_iters: usize,
    /// `ζ^T` and `ζ^S` as tested (scaled in observable mode).
    pub tested_t: f64,
    pub tested_s: f64,
    pub est: StepEstimators,
}

#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub config: AdaptiveConfig,
    pub initial: InitialEstimators,
    pub initial_mesh: Mesh1D,
    pub records: Vec<StepRecord>,
    /// Running `(Ẽ^T_m, Ẽ^S_m)` after every step.
    pub tilde: Vec<(f64, f64)>,
    pub totals: EstimatorTotals,
    pub events: Vec<Event>,
    pub final_state: StepState,
    pub seconds: f64,
}

impl AdaptiveRun {
    /// `⌊Σ k_n dim(V^n)⌋ + 1`.
    pub fn total_dof(&self) -> u64 {
        total_dof(self.records.iter().map(|r| (r.k, r.dim)))
    }

    /// Last accepted step size before the final step, which is clipped to
    /// land on `T`.
    pub fn final_k(&self) -> Option<f64> {
        let n = self.records.len();
        self.records.get(n.saturating_sub(2)).map(|r| r.k)
    }
}

pub fn total_dof(steps: impl IntoIterator<Item = (f64, usize)>) -> u64 {
    let s: f64 = steps.into_iter().map(|(k, d)| k * d as f64).sum();
    s.floor() as u64 + 1
}

/// Per-element `‖u_0 − U^0‖_K² + C² η_K(U^0)²`, square-rooted.
fn initial_indicators(prob: &ProblemSpec, u0: &StepState, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    let err = L2Expr::new(0.0).field(&prob.u0, 1.0).fe(&u0.u, -1.0).sq_norms_on(u0.space().mesh())?;
    let eta = eta_sq_elements(&u0.u, &u0.lap, cfg.jumps);
    let c2 = cfg.c_const * cfg.c_const;
    Ok(err.iter().zip(&eta).map(|(e, h)| (e + c2 * h).sqrt()).collect())
}

struct Trial {
    res: StepResult,
    est: StepEstimators,
    tested: StepEstimators,
}

struct Driver<'a, 'p> {
    prob: &'p ProblemSpec,
    cfg: &'a AdaptiveConfig,
    stepper: Stepper<'p>,
    degree: usize,
    quad: usize,
    k_min: f64,
    events: Vec<Event>,
}

impl<'a, 'p> Driver<'a, 'p> {
    fn space(&self, mesh: Mesh1D) -> Result<SplineSpace> {
        SplineSpace::with_quadrature(mesh, self.degree, self.quad)
    }

    fn event(&mut self, n: usize, t: f64, action: Action, payload: String) {
        self.events.push(Event { n, t, action, payload });
    }

    fn tested(&self, est: &StepEstimators) -> StepEstimators {
        match (self.cfg.observable_mode, self.prob.eps) {
            (true, Some(eps)) => est.scaled_for_observables(eps),
            _ => *est,
        }
    }

    fn solve(&mut self, n: usize, prev: &StepState, space: &SplineSpace, k: f64, eta_prev: f64) -> Result<Trial> {
        if k < self.k_min {
            return Err(Error::StepUnderflow {
                k,
                k_min: self.k_min,
                t: prev.t,
            });
        }
        let res = self.stepper.step(prev, space, k)?;
        let est = step_estimators(n, prev, &res, self.prob, &self.cfg.estimators, Some(eta_prev))?;
        let tested = self.tested(&est);
        Ok(Trial { res, est, tested })
    }

    fn too_many(&self, iters: usize, t: f64, trial: &Trial) -> Result<()> {
        if iters >= self.cfg.max_inner_iters {
            return Err(Error::MaxIterations {
                iters,
                t,
                zeta_t: trial.tested.zeta_t(),
                zeta_s: trial.tested.zeta_s(),
            });
        }
        Ok(())
    }

    /// Shrinks `k` by δ1 until `ζ^T ≤ θ1 tol_T`.
    #[allow(clippy::too_many_arguments)]
    fn time_loop(
        &mut self,
        n: usize,
        prev: &StepState,
        space: &SplineSpace,
        k: &mut f64,
        eta_prev: f64,
        trial: &mut Trial,
        iters: &mut usize,
    ) -> Result<()> {
        if !self.cfg.adapt_time {
            return Ok(());
        }
        while trial.tested.zeta_t() > self.cfg.theta1 * self.cfg.tol_t {
            self.too_many(*iters, prev.t, trial)?;
            let from = *k;
            *k *= self.cfg.delta1;
            self.event(n, prev.t, Action::ShrinkK, format!("{from:.6e} -> {:.6e}", *k));
            *trial = self.solve(n, prev, space, *k, eta_prev)?;
            *iters += 1;
        }
        Ok(())
    }

    /// One accepted step from `prev` on `space_prev` with proposed `k`.
    /// Returns the trial, the new space, the record and the next proposal.
    fn advance(
        &mut self,
        n: usize,
        prev: &StepState,
        space_prev: &SplineSpace,
        k_prop: f64,
        eta_prev: f64,
    ) -> Result<(Trial, SplineSpace, StepRecord, f64)> {
        let t_final = self.prob.t_final;
        let remaining = t_final - prev.t;
        let mut k = k_prop.min(remaining);
        let mut space = space_prev.clone();
        let mut trial = self.solve(n, prev, &space, k, eta_prev)?;
        let mut time_iters = 0;
        let mut space_iters = 0;
        self.time_loop(n, prev, &space, &mut k, eta_prev, &mut trial, &mut time_iters)?;
        while trial.tested.zeta_s() > self.cfg.tol_s {
            self.too_many(space_iters, prev.t, &trial)?;
            let mesh = space.mesh().clone();
            let ind = element_indicators(prev, &trial.res, &self.cfg.estimators)?;
            let marking = mark(&mesh, &ind, self.cfg.refine_fraction, self.cfg.coarsen_fraction)?;
            space_iters += 1;
            if !marking.is_empty() {
                let refined = mesh.refine(&marking.refine)?;
                let adapted = refined.coarsen(&marking.coarsen);
                let merged = refined.num_elements() - adapted.num_elements();
                if !marking.refine.is_empty() {
                    self.event(
                        n,
                        prev.t,
                        Action::Refine,
                        format!("{} elements -> {}", marking.refine.len(), refined.num_elements()),
                    );
                }
                if merged > 0 {
                    self.event(
                        n,
                        prev.t,
                        Action::Coarsen,
                        format!("{merged} pairs -> {}", adapted.num_elements()),
                    );
                }
                space = self.space(adapted)?;
                trial = self.solve(n, prev, &space, k, eta_prev)?;
            }
            self.time_loop(n, prev, &space, &mut k, eta_prev, &mut trial, &mut time_iters)?;
        }
        let mut k_next = if k < remaining { k } else { k_prop };
        if self.cfg.adapt_time && trial.tested.zeta_t() <= self.cfg.theta2 * self.cfg.tol_t {
            let from = k_next;
            k_next *= self.cfg.delta2;
            self.event(n, prev.t + k, Action::GrowK, format!("{from:.6e} -> {k_next:.6e}"));
        }
        let mesh = space.mesh();
        let record = StepRecord {
            n,
            t: prev.t + k,
            k,
            dim: space.dim(),
            elements: mesh.num_elements(),
            h_min: mesh.min_width(),
            h_max: mesh.max_width(),
            time_iters,
            space_iters,
            tested_t: trial.tested.zeta_t(),
            tested_s: trial.tested.zeta_s(),
            est: trial.est,
        };
        Ok((trial, space, record, k_next))
    }

    fn adapt_initial(&mut self, space0: SplineSpace) -> Result<(SplineSpace, StepState, InitialEstimators)> {
        let mut space = space0;
        let mut iters = 0;
        loop {
            let state = self.stepper.initial(&space)?;
            let ops = self.stepper.ops(&space)?;
            let init = initial_estimators(self.prob, &state, Some(&ops), &self.cfg.estimators)?;
            let value = init.zeta0_i + self.cfg.estimators.c_const * init.eta;
            if !self.cfg.adapt_initial_grid || value <= self.cfg.tol_s {
                return Ok((space, state, init));
            }
            if iters >= self.cfg.max_inner_iters {
                return Err(Error::MaxIterations {
                    iters,
                    t: 0.0,
                    zeta_t: 0.0,
                    zeta_s: value,
                });
            }
            let ind = initial_indicators(self.prob, &state, &self.cfg.estimators)?;
            let marking = mark(space.mesh(), &ind, self.cfg.refine_fraction, self.cfg.coarsen_fraction)?;
            if marking.refine.is_empty() {
                return Err(Error::InvalidConfig(
                    "initial grid exceeds tol_S but the refinement fraction marks nothing".into(),
                ));
            }
            let adapted = adapt_mesh(space.mesh(), &marking)?;
            self.event(
                0,
                0.0,
                Action::InitialRefine,
                format!("{:.6e} > tol, {} -> {} elements", value, space.num_elements(), adapted.num_elements()),
            );
            space = self.space(adapted)?;
            iters += 1;
        }
    }
}

/// Runs the adaptive algorithm from `space0` with initial step `k0`.
/// `on_state` sees every accepted solution, including `U^0`.
pub fn run_adaptive(
    prob: &ProblemSpec,
    space0: SplineSpace,
    k0: f64,
    cfg: &AdaptiveConfig,
    on_state: &mut dyn FnMut(usize, &StepState) -> Result<()>,
) -> Result<AdaptiveRun> {
    cfg.validate()?;
    if !(k0 > 0.0) {
        return Err(Error::InvalidConfig(format!("initial time step must be positive, got {k0}")));
    }
    let start = Instant::now();
    let mut drv = Driver {
        prob,
        cfg,
        stepper: Stepper::new(prob),
        degree: space0.degree(),
        quad: space0.quadrature().len(),
        k_min: cfg.k_min.unwrap_or(1e-12 * prob.t_final),
        events: Vec::new(),
    };
    let (mut space, mut state, initial) = drv.adapt_initial(space0)?;
    let initial_mesh = space.mesh().clone();
    on_state(0, &state)?;
    let mut totals = EstimatorTotals::from_initial(&initial, &cfg.estimators);
    let mut records = Vec::new();
    let mut tilde = Vec::new();
    let mut k = k0;
    let mut eta_prev = initial.eta;
    let mut n = 0;
    while state.t < prob.t_final * (1.0 - 1e-14) {
        n += 1;
        let (trial, space_new, record, k_next) = drv.advance(n, &state, &space, k, eta_prev).map_err(|e| e.at_step(n))?;
        totals.accumulate(&trial.est)?;
        tilde.push((totals.tilde_t(), totals.tilde_s()));
        eta_prev = trial.est.eta_u;
        let mut next = trial.res.state();
        if prob.t_final - next.t <= 1e-14 * prob.t_final {
            next.t = prob.t_final;
        }
        state = next;
        space = space_new;
        records.push(record);
        k = k_next;
        on_state(n, &state)?;
    }
    Ok(AdaptiveRun {
        config: cfg.clone(),
        initial,
        initial_mesh,
        records,
        tilde,
        totals,
        events: drv.events,
        final_state: state,
        seconds: start.elapsed().as_secs_f64(),
    })
}
