//! Residual-type elliptic estimators and the per-step and accumulated
//! a posteriori error quantities.
//!
//! `η(u)² = Σ_K h_K^4 ‖u'' − Δ^n u‖²_K` with `Δ^n` the discrete Laplacian.
//! Jump terms are off by default; in 1D they reduce to point values of the
//! derivative jump, weighted by `h³` with `h` the larger neighbouring width.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::L2Expr;
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::problems::ProblemSpec;
use crate::scheme::{StepResult, StepState};
use crate::spline::FeFunction;
use crate::transfer::SpaceOps;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Quadrature for `∫ (t_n − t)(t − t_{n−1})/2 ‖(−αΔ^n + g(t))∂̄W‖ dt`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRule {
    /// Norm frozen at the midpoint, kernel integrated exactly: `k³/12 ‖·‖`.
    #[default]
    Midpoint,
    /// One-point rule on the whole integrand: `k · k²/8 ‖·‖`.
    PlainMidpoint,
    /// Three-point Gauss rule on the whole integrand.
    Gauss3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Constant in front of the elliptic estimators.
    pub c_const: f64,
    /// Constant in front of the pair estimator.
    pub c_hat: f64,
    pub time_rule: TimeRule,
    /// Include derivative jumps at interior breakpoints.
    pub jumps: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            c_const: 1.0,
            c_hat: 1.0,
            time_rule: TimeRule::Midpoint,
            jumps: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialStats {
    /// Midrange of `g(·, t_mid)`.
    pub gbar: f64,
    /// `sup |g − gbar|` over the space-time slab.
    pub p: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEstimators {
    pub n: usize,
    pub t: f64,
    pub k: f64,
    pub dim: usize,
    pub zeta_t0: f64,
    pub zeta_t1: f64,
    pub zeta_s0: f64,
    pub zeta_s1: f64,
    pub zeta_s2: f64,
    pub zeta_s3: f64,
    pub zeta_c: f64,
    pub zeta_d: f64,
    #[serde(flatten)]
    pub stats: PotentialStats,
    /// `η(U^n)` without the constant, reused by the next step.
    #[serde(skip)]
    pub eta_u: f64,
}

impl StepEstimators {
    pub const COLUMNS: [&'static str; 14] = [
        "n", "t", "k", "dim", "zeta_T0", "zeta_T1", "zeta_S0", "zeta_S1", "zeta_S2", "zeta_S3", "zeta_C", "zeta_D",
        "gbar", "p",
    ];

    pub fn zeta_t(&self) -> f64 {
        self.zeta_t0 + self.zeta_t1
    }

    pub fn zeta_s(&self) -> f64 {
        self.zeta_s0 + self.zeta_s1 + self.zeta_s2 + self.zeta_s3 + self.zeta_c + self.zeta_d
    }

    /// Every quantity except `ζ^{S,0}` and `ζ^{T,0}` multiplied by `eps`.
    pub fn scaled_for_observables(&self, eps: f64) -> Self {
        Self {
            zeta_t1: self.zeta_t1 * eps,
            zeta_s1: self.zeta_s1 * eps,
            zeta_s2: self.zeta_s2 * eps,
            zeta_s3: self.zeta_s3 * eps,
            zeta_c: self.zeta_c * eps,
            zeta_d: self.zeta_d * eps,
            ..*self
        }
    }

    pub fn values(&self) -> [f64; 14] {
        [
            self.n as f64,
            self.t,
            self.k,
            self.dim as f64,
            self.zeta_t0,
            self.zeta_t1,
            self.zeta_s0,
            self.zeta_s1,
            self.zeta_s2,
            self.zeta_s3,
            self.zeta_c,
            self.zeta_d,
            self.stats.gbar,
            self.stats.p,
        ]
    }
}

/// Quantities available at `t = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimators {
    /// `‖u_0 − U^0‖`.
    pub l2_error: f64,
    /// `η(U^0)` without the constant.
    pub eta: f64,
    /// `‖u_0 − U^0‖ + C η(U^0)`.
    pub zeta0_i: f64,
}

/// Running maxima and sums over accepted steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTotals {
    pub steps: usize,
    pub t: f64,
    pub zeta0_i: f64,
    pub e_t0: f64,
    pub e_t1: f64,
    pub e_s0: f64,
    pub e_s1: f64,
    pub e_s2: f64,
    pub e_s3: f64,
    pub e_c: f64,
    pub e_d: f64,
    pub max_t1: f64,
    pub max_s1: f64,
    pub max_s2: f64,
    pub max_s3: f64,
    pub max_c: f64,
    pub max_d: f64,
}

impl EstimatorTotals {
    pub const COLUMNS: [&'static str; 13] = [
        "steps", "t", "zeta0_I", "E_T0", "E_T1", "E_S0", "E_S1", "E_S2", "E_S3", "E_C", "E_D", "tilde_E_T",
        "tilde_E_S",
    ];

    /// Starts from `ζ_0^I` and `ζ_0^{S,0} = C η(U^0)`.
    pub fn new(zeta0_i: f64, zeta_s0_initial: f64) -> Self {
        Self {
            zeta0_i,
            e_s0: zeta_s0_initial,
            ..Self::default()
        }
    }

    pub fn from_initial(init: &InitialEstimators, cfg: &EstimatorConfig) -> Self {
        Self::new(init.zeta0_i, cfg.c_const * init.eta)
    }

    pub fn accumulate(&mut self, s: &StepEstimators) -> Result<()> {
        if s.n != self.steps + 1 || (self.steps > 0 && s.t <= self.t) {
            return Err(Error::OutOfOrder {
                last: self.steps,
                got: s.n,
            });
        }
        self.steps = s.n;
        self.t = s.t;
        self.e_t0 = self.e_t0.max(s.zeta_t0);
        self.e_s0 = self.e_s0.max(s.zeta_s0);
        self.e_t1 += s.zeta_t1;
        self.e_s1 += s.zeta_s1;
        self.e_s2 += s.zeta_s2;
        self.e_s3 += s.zeta_s3;
        self.e_c += s.zeta_c;
        self.e_d += s.zeta_d;
        self.max_t1 = self.max_t1.max(s.zeta_t1);
        self.max_s1 = self.max_s1.max(s.zeta_s1);
        self.max_s2 = self.max_s2.max(s.zeta_s2);
        self.max_s3 = self.max_s3.max(s.zeta_s3);
        self.max_c = self.max_c.max(s.zeta_c);
        self.max_d = self.max_d.max(s.zeta_d);
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.zeta0_i
            + self.e_t0
            + self.e_t1
            + self.e_s0
            + self.e_s1
            + self.e_s2
            + self.e_s3
            + self.e_c
            + self.e_d
    }

    pub fn tilde_t(&self) -> f64 {
        self.e_t0 + self.max_t1
    }

    pub fn tilde_s(&self) -> f64 {
        self.zeta0_i + self.e_s0 + self.max_s1 + self.max_s2 + self.max_s3 + self.max_c + self.max_d
    }

    pub fn values(&self) -> [f64; 13] {
        [
            self.steps as f64,
            self.t,
            self.zeta0_i,
            self.e_t0,
            self.e_t1,
            self.e_s0,
            self.e_s1,
            self.e_s2,
            self.e_s3,
            self.e_c,
            self.e_d,
            self.tilde_t(),
            self.tilde_s(),
        ]
    }
}

/// Derivative of `u` at `x` from inside element `e`.
fn one_sided_deriv(u: &FeFunction, e: usize, x: f64, ders: &mut [Vec<f64>]) -> Complex64 {
    u.space().ders_in_element(e, x, 1, ders);
    ders[1].iter().enumerate().map(|(j, b)| u.coeff_unconstrained(e + j) * *b).sum()
}

/// Jump `u'(z+) − u'(z−)`; zero when `z` is not a breakpoint of `u`'s mesh.
fn deriv_jump(u: &FeFunction, z: f64) -> Complex64 {
    let mesh = u.space().mesh();
    let r = u.space().degree();
    let Ok(e) = mesh.locate(z) else {
        return Complex64::new(0.0, 0.0);
    };
    if e == 0 || mesh.breakpoints()[e] != z {
        return Complex64::new(0.0, 0.0);
    }
    let mut ders = vec![vec![0.0; r + 1]; 2];
    one_sided_deriv(u, e, z, &mut ders) - one_sided_deriv(u, e - 1, z, &mut ders)
}

/// Jump contributions `h_z³ |[(u − v)'](z)|²` at interior breakpoints of
/// `partition`, split evenly between the two neighbours.
fn jump_sq_elements(partition: &Mesh1D, u: &FeFunction, v: Option<&FeFunction>) -> Vec<f64> {
    let n = partition.num_elements();
    let bp = partition.breakpoints();
    let mut out = vec![0.0; n];
    for e in 1..n {
        let z = bp[e];
        let mut j = deriv_jump(u, z);
        if let Some(v) = v {
            j -= deriv_jump(v, z);
        }
        let h = partition.width(e - 1).max(partition.width(e));
        let val = 0.5 * h.powi(3) * j.norm_sqr();
        out[e - 1] += val;
        out[e] += val;
    }
    out
}

/// `h_K^4 ‖u'' − lap‖²_K` for every element, with `lap` on the space of `u`.
pub fn eta_sq_elements(u: &FeFunction, lap: &FeFunction, jumps: bool) -> Vec<f64> {
    debug_assert!(u.space().same_as(lap.space()));
    let space = u.space();
    let mesh = space.mesh();
    let quad = space.quadrature();
    let nq = quad.len();
    let mut d2 = vec![Complex64::new(0.0, 0.0); nq];
    let mut l0 = vec![Complex64::new(0.0, 0.0); nq];
    let mut out: Vec<f64> = (0..space.num_elements())
        .map(|e| {
            let (x0, x1) = mesh.element_bounds(e);
            let h = x1 - x0;
            if space.degree() >= 2 {
                u.element_qp_values(e, 2, &mut d2);
            }
            lap.element_qp_values(e, 0, &mut l0);
            let s: f64 = quad
                .weights
                .iter()
                .zip(d2.iter().zip(&l0))
                .map(|(w, (a, b))| w * (a - b).norm_sqr())
                .sum();
            s * h.powi(5)
        })
        .collect();
    if jumps {
        for (o, j) in out.iter_mut().zip(jump_sq_elements(mesh, u, None)) {
            *o += j;
        }
    }
    out
}

/// `η(u)` given its discrete Laplacian. With operators of the same space and
/// `r = 1` this is the quadratic form `lap^H (Σ h^4 M_K) lap`.
pub fn eta_with_lap(u: &FeFunction, lap: &FeFunction, ops: Option<&SpaceOps>, jumps: bool) -> f64 {
    match ops {
        Some(ops) if u.space().degree() == 1 && ops.space.same_as(u.space()) => {
            let mut s = ops.mass_h4().hermitian_form(lap.coeffs()).max(0.0);
            if jumps {
                s += jump_sq_elements(u.space().mesh(), u, None).iter().sum::<f64>();
            }
            s.sqrt()
        }
        _ => eta_sq_elements(u, lap, jumps).iter().sum::<f64>().sqrt(),
    }
}

/// `η_{V^n}(u)` with the discrete Laplacian of `u`'s own space.
pub fn eta_space(u: &FeFunction) -> Result<f64> {
    let ops = SpaceOps::new(u.space())?;
    let lap = ops.laplacian(u);
    Ok(eta_with_lap(u, &lap, Some(&ops), false))
}

/// Pair integrand `(u_new'' − lap_new) − (u_prev'' − lap_prev)` as an
/// expression; second derivatives are dropped for linear splines.
fn pair_expr<'a>(u_new: &'a FeFunction, lap_new: &'a FeFunction, u_prev: &'a FeFunction, lap_prev: &'a FeFunction) -> L2Expr<'a> {
    let one = Complex64::new(1.0, 0.0);
    let mut e = L2Expr::new(0.0);
    if u_new.space().degree() >= 2 {
        e = e.fe_deriv(u_new, 2, one);
    }
    if u_prev.space().degree() >= 2 {
        e = e.fe_deriv(u_prev, 2, -one);
    }
    e.fe(lap_new, -one).fe(lap_prev, one)
}

/// Squared pair estimator on the common coarsening, with precomputed
/// discrete Laplacians.
pub fn eta_pair_sq_with_laps(
    u_new: &FeFunction,
    lap_new: &FeFunction,
    u_prev: &FeFunction,
    lap_prev: &FeFunction,
    ops_new: Option<&SpaceOps>,
    jumps: bool,
) -> Result<f64> {
    if u_new.space().same_as(u_prev.space()) {
        let d = u_new.axpy(-Complex64::new(1.0, 0.0), u_prev);
        let dl = lap_new.axpy(-Complex64::new(1.0, 0.0), lap_prev);
        let e = eta_with_lap(&d, &dl, ops_new, jumps);
        return Ok(e * e);
    }
    let coarse = u_new.space().mesh().common_coarsening(u_prev.space().mesh())?;
    let parts = pair_expr(u_new, lap_new, u_prev, lap_prev).sq_norms_on(&coarse)?;
    let mut s: f64 = parts.iter().enumerate().map(|(e, v)| coarse.width(e).powi(4) * v).sum();
    if jumps {
        s += jump_sq_elements(&coarse, u_new, Some(u_prev)).iter().sum::<f64>();
    }
    Ok(s)
}

/// `η_{V̂^n}(u_new, u_prev)`, widths from the common coarsening.
pub fn eta_space_pair(u_new: &FeFunction, u_prev: &FeFunction) -> Result<f64> {
    let ln = SpaceOps::new(u_new.space())?;
    let lp = SpaceOps::new(u_prev.space())?;
    let lap_new = ln.laplacian(u_new);
    let lap_prev = lp.laplacian(u_prev);
    Ok(eta_pair_sq_with_laps(u_new, &lap_new, u_prev, &lap_prev, Some(&ln), false)?.sqrt())
}

/// `ḡ` and `p` by sampling `g` on the quadrature nodes and breakpoints of
/// `mesh` at `t_mid` (for `ḡ`) and at the ends, midpoint and eight interior
/// times of `[t_prev, t_next]` (for `p`).
pub fn potential_stats(prob: &ProblemSpec, mesh: &Mesh1D, q: usize, t_prev: f64, t_next: f64) -> PotentialStats {
    let g = &prob.g;
    let t_mid = 0.5 * (t_prev + t_next);
    if let Some(c) = g.as_const() {
        return PotentialStats { gbar: c, p: 0.0 };
    }
    let rule = crate::assembly::QuadratureRule::gauss_legendre(q);
    let mut xs: Vec<f64> = mesh.breakpoints().to_vec();
    for e in 0..mesh.num_elements() {
        let (x0, x1) = mesh.element_bounds(e);
        xs.extend(rule.mapped(x0, x1).map(|(x, _)| x));
    }
    let (lo, hi) = prob.g_range(xs.iter().copied(), t_mid);
    let gbar = 0.5 * (lo + hi);
    let mut times = vec![t_mid];
    if !g.is_time_independent() {
        times.extend([t_prev, t_next]);
        times.extend((1..=8).map(|j| t_prev + (t_next - t_prev) * j as f64 / 9.0));
    }
    let p = times
        .iter()
        .flat_map(|&t| xs.iter().map(move |&x| (g.eval(x, t) - gbar).abs()))
        .fold(0.0, f64::max);
    PotentialStats { gbar, p }
}

/// `‖u_0 − U^0‖`, `η(U^0)` and `ζ_0^I`.
pub fn initial_estimators(prob: &ProblemSpec, u0: &StepState, ops: Option<&SpaceOps>, cfg: &EstimatorConfig) -> Result<InitialEstimators> {
    let l2_error = L2Expr::new(0.0)
        .field(&prob.u0, 1.0)
        .fe(&u0.u, -1.0)
        .norm_on(u0.space().mesh())?;
    let eta = eta_with_lap(&u0.u, &u0.lap, ops, cfg.jumps);
    Ok(InitialEstimators {
        l2_error,
        eta,
        zeta0_i: l2_error + cfg.c_const * eta,
    })
}

/// `‖(−αΔ^n + g(t)) w‖` with `lap_w = Δ^n w`.
fn operator_norm(prob: &ProblemSpec, ops: &SpaceOps, w: &FeFunction, lap_w: &FeFunction, t: f64) -> Result<f64> {
    let alpha = prob.alpha;
    match prob.g.as_const() {
        Some(g) => {
            let c: Vec<Complex64> = lap_w.coeffs().iter().zip(w.coeffs()).map(|(l, w)| -alpha * l + g * w).collect();
            Ok(ops.norm_sq(&c).sqrt())
        }
        None => L2Expr::new(t).fe(lap_w, -alpha).fe_weighted(w, &prob.g, 1.0).norm_on(ops.space.mesh()),
    }
}

/// All local quantities for step `n` from `prev` (at `t_{n−1}`) to
/// `res`. `eta_prev` is `η(U^{n−1})` when already known.
pub fn step_estimators(
    n: usize,
    prev: &StepState,
    res: &StepResult,
    prob: &ProblemSpec,
    cfg: &EstimatorConfig,
    eta_prev: Option<f64>,
) -> Result<StepEstimators> {
    let k = res.k;
    let ops = res.ops.as_ref();
    let alpha = prob.alpha;
    let c = cfg.c_const;
    let t_mid = res.t_mid();
    let space = &ops.space;

    let eta_u = eta_with_lap(&res.u_new, &res.lap_new, Some(ops), cfg.jumps);
    let eta_prev = match eta_prev {
        Some(v) => v,
        None => eta_with_lap(&prev.u, &prev.lap, None, cfg.jumps),
    };
    let lap_w = ops.laplacian(&res.wbar);
    let eta_w = eta_with_lap(&res.wbar, &lap_w, Some(ops), cfg.jumps);
    let norm_w = ops.norm_sq(res.wbar.coeffs()).sqrt();
    let stats = potential_stats(prob, space.mesh(), space.quadrature().len(), res.t_prev, res.t_new());

    let t1_integral = match cfg.time_rule {
        TimeRule::Midpoint => k.powi(3) / 12.0 * operator_norm(prob, ops, &res.wbar, &lap_w, t_mid)?,
        TimeRule::PlainMidpoint => k * (k * k / 8.0) * operator_norm(prob, ops, &res.wbar, &lap_w, t_mid)?,
        TimeRule::Gauss3 => {
            let d = 0.5 * (0.6f64).sqrt();
            let nodes = [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)];
            let static_norm = if prob.g.is_time_independent() {
                Some(operator_norm(prob, ops, &res.wbar, &lap_w, t_mid)?)
            } else {
                None
            };
            let mut acc = 0.0;
            for (s, w) in nodes {
                let nrm = match static_norm {
                    Some(v) => v,
                    None => operator_norm(prob, ops, &res.wbar, &lap_w, res.t_prev + s * k)?,
                };
                acc += w * k * (s * (1.0 - s) * k * k / 2.0) * nrm;
            }
            acc
        }
    };

    let pair_sq = eta_pair_sq_with_laps(&res.u_new, &res.lap_new, &prev.u, &prev.lap, Some(ops), cfg.jumps)?;

    let zeta_c = if res.same_space || space.contains(prev.space()) {
        0.0
    } else {
        k * L2Expr::new(t_mid)
            .fe(&prev.u, 1.0 / k)
            .fe(&prev.lap, I * (alpha / 2.0))
            .fe(&res.pi_u_prev, -1.0 / k)
            .fe(&res.pi_lap_prev, -I * (alpha / 2.0))
            .norm_on(space.mesh())?
    };

    let g_part = if res.same_space && prob.g.as_const().is_some() {
        0.0
    } else {
        L2Expr::new(t_mid)
            .fe(&res.pg_half, 1.0)
            .fe_weighted(&prev.u, &prob.g, -0.5)
            .fe_weighted(&res.u_new, &prob.g, -0.5)
            .norm_on(space.mesh())?
    };
    let f_part = if prob.f.is_zero() {
        0.0
    } else {
        L2Expr::new(t_mid).field(&prob.f, 1.0).fe(&res.pf_mid, -1.0).norm_on(space.mesh())?
    };

    Ok(StepEstimators {
        n,
        t: res.t_new(),
        k,
        dim: space.dim(),
        zeta_t0: k * k / 8.0 * (norm_w + c * eta_w),
        zeta_t1: t1_integral + c * k.powi(3) / 24.0 * stats.p * eta_w,
        zeta_s0: c * eta_u,
        zeta_s1: c * k * k / 4.0 * eta_w,
        zeta_s2: c * k / 2.0 * stats.p * (eta_prev + eta_u),
        zeta_s3: cfg.c_hat * pair_sq.sqrt(),
        zeta_c,
        zeta_d: k * (g_part + f_part),
        stats,
        eta_u,
    })
}

/// Per-element refinement indicators on the new mesh:
/// `sqrt(C²η_K(U^n)² + C²(k²/4)²η_K(∂̄W)² + Ĉ² pair_K)`, where the pair part
/// is integrated per new element and weighted by `h^4` of the enclosing
/// common-coarsening element.
pub fn element_indicators(prev: &StepState, res: &StepResult, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    let ops = res.ops.as_ref();
    let mesh = ops.space.mesh();
    let k = res.k;
    let c2 = cfg.c_const * cfg.c_const;
    let eu = eta_sq_elements(&res.u_new, &res.lap_new, cfg.jumps);
    let lap_w = ops.laplacian(&res.wbar);
    let ew = eta_sq_elements(&res.wbar, &lap_w, cfg.jumps);
    let pair: Vec<f64> = if res.same_space {
        let one = Complex64::new(1.0, 0.0);
        let d = res.u_new.axpy(-one, &prev.u);
        let dl = res.lap_new.axpy(-one, &prev.lap);
        eta_sq_elements(&d, &dl, cfg.jumps)
    } else {
        let coarse = mesh.common_coarsening(prev.space().mesh())?;
        let parts = pair_expr(&res.u_new, &res.lap_new, &prev.u, &prev.lap).sq_norms_on(mesh)?;
        let mut pos = 0usize;
        let mut out = Vec::with_capacity(parts.len());
        for (e, v) in parts.into_iter().enumerate() {
            while !coarse.leaves()[pos].contains(mesh.leaves()[e]) {
                pos += 1;
            }
            out.push(coarse.width(pos).powi(4) * v);
        }
        if cfg.jumps {
            for (o, j) in out.iter_mut().zip(jump_sq_elements(mesh, &res.u_new, Some(&prev.u))) {
                *o += j;
            }
        }
        out
    };
    let s1 = (k * k / 4.0).powi(2);
    let ch2 = cfg.c_hat * cfg.c_hat;
    Ok(eu
        .iter()
        .zip(&ew)
        .zip(&pair)
        .map(|((a, b), p)| (c2 * a + c2 * s1 * b + ch2 * p).sqrt())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ComplexField, RealField};
    use crate::mesh::Mesh1D;
    use crate::problems::{catalog, ProblemSpec};
    use crate::scheme::Stepper;
    use crate::spline::SplineSpace;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pseudo(n: usize, seed: f64) -> Vec<Complex64> {
        (0..n).map(|i| c((seed * (i as f64 + 1.0)).sin(), (seed * 0.37 * i as f64).cos())).collect()
    }

    fn space(a: f64, b: f64, n: usize, r: usize) -> SplineSpace {
        SplineSpace::new(Mesh1D::uniform(a, b, n).unwrap(), r).unwrap()
    }

    fn all(m: &Mesh1D) -> HashSet<crate::mesh::ElementId> {
        m.leaves().iter().copied().collect()
    }

    #[test]
    fn zero_function_has_zero_eta() {
        let s = space(0.0, 1.0, 5, 2);
        assert_eq!(eta_space(&FeFunction::zeros(s)).unwrap(), 0.0);
    }

    #[test]
    fn single_hat_eta() {
        let s = space(0.0, 1.0, 2, 1);
        let u = FeFunction::new(s, vec![c(1.0, 0.0)]).unwrap();
        assert!((eta_space(&u).unwrap() - 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn fast_path_matches_elementwise() {
        let s = space(-1.0, 2.0, 13, 1);
        let ops = SpaceOps::new(&s).unwrap();
        let u = ops.function(pseudo(s.dim(), 0.9));
        let lap = ops.laplacian(&u);
        let fast = eta_with_lap(&u, &lap, Some(&ops), false);
        let slow = eta_with_lap(&u, &lap, None, false);
        assert!((fast - slow).abs() < 1e-12 * slow);
    }

    #[test]
    fn eta_is_homogeneous() {
        for r in 1..=3 {
            let s = space(0.0, 2.0, 9, r);
            let u = FeFunction::new(s.clone(), pseudo(s.dim(), 1.3)).unwrap();
            let z = c(2.0, 1.0);
            let a = eta_space(&u.scale(z)).unwrap();
            let b = z.norm() * eta_space(&u).unwrap();
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    /// Independent dense oracle: Laplacian from dense Gauss elimination and
    /// the norm from pointwise quadrature with fresh basis evaluation.
    fn dense_eta_sq(u: &FeFunction, widths_of: &Mesh1D) -> f64 {
        let s = u.space();
        let n = s.dim();
        let m = crate::assembly::mass_matrix(s).to_dense();
        let st = crate::assembly::stiffness_matrix(s).to_dense();
        let mut a: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                let mut row: Vec<Complex64> = m[i].iter().map(|&v| c(v, 0.0)).collect();
                let rhs: Complex64 = (0..n).map(|j| -st[i][j] * u.coeffs()[j]).sum();
                row.push(rhs);
                row
            })
            .collect();
        for k in 0..n {
            let piv = (k..n).max_by(|&x, &y| a[x][k].norm().total_cmp(&a[y][k].norm())).unwrap();
            a.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..=n {
                    let v = a[k][j];
                    a[i][j] -= f * v;
                }
            }
        }
        let mut lap = vec![c(0.0, 0.0); n];
        for i in (0..n).rev() {
            let s: Complex64 = (i + 1..n).map(|j| a[i][j] * lap[j]).sum();
            lap[i] = (a[i][n] - s) / a[i][i];
        }
        let lapf = FeFunction::new(s.clone(), lap).unwrap();
        let rule = crate::assembly::QuadratureRule::gauss_legendre(8);
        let mut total = 0.0;
        for e in 0..widths_of.num_elements() {
            let (x0, x1) = widths_of.element_bounds(e);
            let h = x1 - x0;
            // Split on u's own mesh so the integrand is smooth.
            let bps: Vec<f64> = s.mesh().breakpoints().iter().copied().filter(|&b| b > x0 && b < x1).collect();
            let mut pts = vec![x0];
            pts.extend(bps);
            pts.push(x1);
            for w in pts.windows(2) {
                for (x, wq) in rule.mapped(w[0], w[1]) {
                    let d = u.eval(x, 2).unwrap() - lapf.eval(x, 0).unwrap();
                    total += h.powi(4) * wq * d.norm_sqr();
                }
            }
        }
        total
    }

    #[test]
    fn eta_matches_dense_oracle() {
        for r in 1..=3 {
            let base = Mesh1D::uniform(0.0, 1.0, 4).unwrap();
            let mesh = base.refine(&[base.leaves()[1]].into_iter().collect()).unwrap();
            let s = SplineSpace::new(mesh.clone(), r).unwrap();
            let u = FeFunction::new(s.clone(), pseudo(s.dim(), 0.7)).unwrap();
            let got = eta_space(&u).unwrap().powi(2);
            let want = dense_eta_sq(&u, &mesh);
            assert!((got - want).abs() < 1e-11 * want.max(1.0), "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn pair_of_identical_functions_vanishes() {
        let s = space(0.0, 1.0, 6, 2);
        let u = FeFunction::new(s.clone(), pseudo(s.dim(), 0.4)).unwrap();
        assert!(eta_space_pair(&u, &u).unwrap() < 1e-13);
    }

    #[test]
    fn pair_with_zero_reduces_to_eta() {
        let coarse = Mesh1D::uniform(0.0, 1.0, 2).unwrap();
        let fine = coarse.refine(&all(&coarse)).unwrap();
        let sn = SplineSpace::new(fine.clone(), 1).unwrap();
        let sp = SplineSpace::new(coarse.clone(), 1).unwrap();
        let u = FeFunction::new(sn.clone(), pseudo(sn.dim(), 1.1)).unwrap();
        let z = FeFunction::zeros(sp);
        let got = eta_space_pair(&u, &z).unwrap().powi(2);
        // Widths come from the common coarsening (the coarse mesh).
        let want = dense_eta_sq(&u, &coarse);
        assert!((got - want).abs() < 1e-11 * want, "{got} vs {want}");
    }

    #[test]
    fn pair_on_nested_meshes_matches_dense_oracle() {
        let coarse = Mesh1D::uniform(0.0, 1.0, 2).unwrap();
        let fine = coarse.refine(&all(&coarse)).unwrap();
        for r in 1..=2 {
            let sp = SplineSpace::new(coarse.clone(), r).unwrap();
            let sn = SplineSpace::new(fine.clone(), r).unwrap();
            let un = FeFunction::new(sn.clone(), pseudo(sn.dim(), 0.3)).unwrap();
            let up = FeFunction::new(sp.clone(), pseudo(sp.dim(), 0.8)).unwrap();
            let got = eta_space_pair(&un, &up).unwrap().powi(2);
            // Oracle: η² of the difference, each part with its own Laplacian.
            let ln = discrete_lap(&un);
            let lp = discrete_lap(&up);
            let rule = crate::assembly::QuadratureRule::gauss_legendre(8);
            let mut want = 0.0;
            for e in 0..coarse.num_elements() {
                let (x0, x1) = coarse.element_bounds(e);
                let h = x1 - x0;
                let xm = 0.5 * (x0 + x1);
                for (a, b) in [(x0, xm), (xm, x1)] {
                    for (x, w) in rule.mapped(a, b) {
                        let d = (un.eval(x, 2).unwrap() - ln.eval(x, 0).unwrap())
                            - (up.eval(x, 2).unwrap() - lp.eval(x, 0).unwrap());
                        want += h.powi(4) * w * d.norm_sqr();
                    }
                }
            }
            assert!((got - want).abs() < 1e-11 * want, "r={r}: {got} vs {want}");
        }
    }

    fn discrete_lap(u: &FeFunction) -> FeFunction {
        crate::transfer::discrete_laplacian(u).unwrap()
    }

    fn plain_problem(g: RealField) -> ProblemSpec {
        let mut p = catalog("exp1a").unwrap();
        p.g = g;
        p
    }

    #[test]
    fn potential_stats_examples() {
        let m = Mesh1D::uniform(-2.0, 2.0, 8).unwrap();
        let p = plain_problem(RealField::constant(10.0 / 0.5));
        let s = potential_stats(&p, &m, 4, 0.0, 0.1);
        assert_eq!(s, PotentialStats { gbar: 20.0, p: 0.0 });

        let eps = 0.5;
        let p = plain_problem(RealField::stationary(move |x| x * x / (2.0 * eps)));
        let s = potential_stats(&p, &m, 4, 0.0, 0.1);
        assert!((s.gbar - 2.0).abs() < 1e-14);
        assert!((s.p - 2.0).abs() < 1e-14);
    }

    #[test]
    fn time_dependent_potential_spread_matches_dense_sampling() {
        let m = Mesh1D::uniform(-2.0, 2.0, 16).unwrap();
        let g = RealField::new(|x, t| (1.0 + t) * (1.0 + t) * x * x / 2.0);
        let p = plain_problem(g.clone());
        let s = potential_stats(&p, &m, 4, 0.0, 0.1);
        let gbar = 0.5 * (0.0 + g.eval(2.0, 0.05));
        let mut want: f64 = 0.0;
        for i in 0..=100 {
            for j in 0..=100 {
                let x = -2.0 + 4.0 * i as f64 / 100.0;
                let t = 0.1 * j as f64 / 100.0;
                want = want.max((g.eval(x, t) - gbar).abs());
            }
        }
        assert!((s.gbar - gbar).abs() < 1e-12);
        assert!((s.p - want).abs() < 1e-3 * want, "{} vs {}", s.p, want);
    }

    #[test]
    fn shifting_the_potential_keeps_the_spread() {
        let m = Mesh1D::uniform(-1.0, 1.0, 8).unwrap();
        let g = RealField::new(|x, t| x.sin() + t * x);
        let a = potential_stats(&plain_problem(g.clone()), &m, 4, 0.2, 0.3);
        let b = potential_stats(&plain_problem(g.affine(1.0, 7.5)), &m, 4, 0.2, 0.3);
        assert!((a.p - b.p).abs() < 1e-12);
        assert!((b.gbar - a.gbar - 7.5).abs() < 1e-12);
    }

    fn run_steps(prob: &ProblemSpec, s: &SplineSpace, k: f64, steps: usize) -> Vec<StepEstimators> {
        let mut st = Stepper::new(prob);
        let mut state = st.initial(s).unwrap();
        let cfg = EstimatorConfig::default();
        let mut out: Vec<StepEstimators> = Vec::new();
        for n in 1..=steps {
            let res = st.step(&state, s, k).unwrap();
            let est = step_estimators(n, &state, &res, prob, &cfg, out.last().map(|e| e.eta_u)).unwrap();
            out.push(est);
            state = res.state();
        }
        out
    }

    #[test]
    fn constant_potential_on_fixed_mesh() {
        let prob = catalog("exp1a").unwrap();
        let s = space(prob.a, prob.b, 40, 1);
        for e in run_steps(&prob, &s, 0.01, 3) {
            assert_eq!(e.zeta_s2, 0.0);
            assert_eq!(e.zeta_c, 0.0);
            assert_eq!(e.zeta_d, 0.0);
            assert!(e.zeta_t0 > 0.0 && e.zeta_t1 > 0.0 && e.zeta_s0 > 0.0 && e.zeta_s3 > 0.0);
        }
    }

    #[test]
    fn zero_data_gives_zero_estimators() {
        let mut prob = catalog("exp1a").unwrap();
        prob.u0 = ComplexField::zero();
        let s = space(prob.a, prob.b, 10, 2);
        for e in run_steps(&prob, &s, 0.05, 2) {
            assert_eq!(e.zeta_t() + e.zeta_s(), 0.0);
        }
    }

    #[test]
    fn coarsening_estimator_vanishes_for_refinement_only() {
        let prob = catalog("exp1a").unwrap();
        let coarse = space(prob.a, prob.b, 8, 2);
        let fine_mesh = coarse.mesh().refine(&[coarse.mesh().leaves()[3]].into_iter().collect()).unwrap();
        let fine = SplineSpace::new(fine_mesh, 2).unwrap();
        let mut st = Stepper::new(&prob);
        let cfg = EstimatorConfig::default();
        let s0 = st.initial(&fine).unwrap();
        let res = st.step(&s0, &coarse, 0.01).unwrap();
        let down = step_estimators(1, &s0, &res, &prob, &cfg, None).unwrap();
        assert!(down.zeta_c > 0.0);
        // Constant g on a changed mesh still leaves a projection defect.
        assert!(down.zeta_d > 0.0);
        let s1 = res.state();
        let res = st.step(&s1, &fine, 0.01).unwrap();
        let up = step_estimators(2, &s1, &res, &prob, &cfg, Some(down.eta_u)).unwrap();
        assert_eq!(up.zeta_c, 0.0);
    }

    #[test]
    fn time_rules_for_constant_potential() {
        let prob = catalog("exp1a").unwrap();
        let s = space(prob.a, prob.b, 20, 1);
        let mut st = Stepper::new(&prob);
        let s0 = st.initial(&s).unwrap();
        let res = st.step(&s0, &s, 0.02).unwrap();
        let m = step_estimators(1, &s0, &res, &prob, &EstimatorConfig::default(), None).unwrap();
        let g3 = EstimatorConfig {
            time_rule: TimeRule::Gauss3,
            ..Default::default()
        };
        let g = step_estimators(1, &s0, &res, &prob, &g3, None).unwrap();
        let plain = EstimatorConfig {
            time_rule: TimeRule::PlainMidpoint,
            ..Default::default()
        };
        let pm = step_estimators(1, &s0, &res, &prob, &plain, None).unwrap();
        // The norm is constant in time, so Gauss is exact: ∫ s(1−s)/2 = 1/12.
        assert!((g.zeta_t1 / m.zeta_t1 - 1.0).abs() < 1e-12);
        assert!((pm.zeta_t1 / m.zeta_t1 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pair_scaling_identity() {
        let prob = catalog("exp1a").unwrap();
        let s = space(prob.a, prob.b, 16, 2);
        let mut st = Stepper::new(&prob);
        let s0 = st.initial(&s).unwrap();
        let k = 0.01;
        let res = st.step(&s0, &s, k).unwrap();
        let direct = eta_space_pair(&res.u_new, &s0.u).unwrap();
        let z = c(1.0 / k, 0.0);
        let scaled = k * eta_space_pair(&res.u_new.scale(z), &s0.u.scale(z)).unwrap();
        assert!((direct - scaled).abs() < 1e-12 * direct);
    }

    #[test]
    fn totals_examples() {
        let mut t = EstimatorTotals::default();
        let s = StepEstimators {
            n: 1,
            t: 0.1,
            zeta_t0: 1.0,
            zeta_t1: 2.0,
            zeta_s0: 3.0,
            zeta_s1: 4.0,
            zeta_s2: 5.0,
            zeta_s3: 6.0,
            zeta_c: 7.0,
            zeta_d: 8.0,
            ..Default::default()
        };
        t.accumulate(&s).unwrap();
        assert_eq!(
            [t.e_t0, t.e_t1, t.e_s0, t.e_s1, t.e_s2, t.e_s3, t.e_c, t.e_d],
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        let s2 = StepEstimators {
            n: 2,
            t: 0.2,
            zeta_s0: 1.0,
            ..s
        };
        t.accumulate(&s2).unwrap();
        assert_eq!(t.e_s0, 3.0);
        assert_eq!(t.e_t1, 4.0);
        assert!(matches!(t.accumulate(&s2), Err(Error::OutOfOrder { last: 2, got: 2 })));
    }

    #[test]
    fn observable_scaling_skips_leading_terms() {
        let s = StepEstimators {
            zeta_t0: 1.0,
            zeta_t1: 1.0,
            zeta_s0: 1.0,
            zeta_s1: 1.0,
            zeta_d: 1.0,
            ..Default::default()
        };
        let o = s.scaled_for_observables(0.1);
        assert_eq!((o.zeta_t0, o.zeta_s0, o.zeta_t1, o.zeta_s1, o.zeta_d), (1.0, 1.0, 0.1, 0.1, 0.1));
    }

    #[test]
    fn indicators_sum_to_global_quantities_on_fixed_mesh() {
        let prob = catalog("exp1a").unwrap();
        let s = space(prob.a, prob.b, 24, 2);
        let mut st = Stepper::new(&prob);
        let s0 = st.initial(&s).unwrap();
        let res = st.step(&s0, &s, 0.01).unwrap();
        let cfg = EstimatorConfig::default();
        let e = step_estimators(1, &s0, &res, &prob, &cfg, None).unwrap();
        let ind = element_indicators(&s0, &res, &cfg).unwrap();
        let sum: f64 = ind.iter().map(|v| v * v).sum();
        let eta_w = e.zeta_s1 / (0.01f64 * 0.01 / 4.0);
        let want = e.zeta_s0.powi(2) + e.zeta_s1.powi(2) + e.zeta_s3.powi(2);
        assert!(eta_w > 0.0);
        assert!((sum - want).abs() < 1e-10 * want, "{sum} vs {want}");
    }

    #[test]
    fn jump_terms_are_off_for_smooth_splines() {
        let s = space(0.0, 1.0, 6, 2);
        let u = FeFunction::new(s.clone(), pseudo(s.dim(), 0.5)).unwrap();
        let lap = discrete_lap(&u);
        let a = eta_with_lap(&u, &lap, None, false);
        let b = eta_with_lap(&u, &lap, None, true);
        assert!((a - b).abs() < 1e-12 * a);
        let s1 = space(0.0, 1.0, 6, 1);
        let u1 = FeFunction::new(s1.clone(), pseudo(s1.dim(), 0.5)).unwrap();
        let l1 = discrete_lap(&u1);
        assert!(eta_with_lap(&u1, &l1, None, true) > eta_with_lap(&u1, &l1, None, false));
    }

    proptest! {
        #[test]
        fn estimators_are_nonnegative(seed in 0.1f64..3.0, k in 0.001f64..0.05) {
            let prob = catalog("exp2").unwrap();
            let s = space(prob.a, prob.b, 12, 2);
            let mut st = Stepper::new(&prob);
            let mut s0 = st.initial(&s).unwrap();
            s0.u = FeFunction::new(s.clone(), pseudo(s.dim(), seed)).unwrap();
            s0.lap = discrete_lap(&s0.u);
            let res = st.step(&s0, &s, k).unwrap();
            let e = step_estimators(1, &s0, &res, &prob, &EstimatorConfig::default(), None).unwrap();
            for v in e.values() {
                prop_assert!(v >= 0.0 && v.is_finite());
            }
        }
    }
}
