//! One modified Crank-Nicolson Galerkin step on possibly changing spaces,
//! and the derived quantities used by the estimators.
//!
//! With `U^{n-1}` on `V^{n-1}` and the new space `V^n`, the step solves
//!
//! ```text
//! (U^n - Π U^{n-1})/k - iα (Π Δ^{n-1} U^{n-1} + Δ^n U^n)/2
//!     + i P(g(t_{n-1/2}) U^{n-1/2}) = P f(t_{n-1/2})
//! ```
//!
//! where `Π` and `P` are L2 projections onto `V^n`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::assembly::{self, integrate::cross_load, BandedLu, BandedMatrix, L2Expr};
use crate::error::Result;
use crate::problems::ProblemSpec;
use crate::spline::{FeFunction, SplineSpace};
use crate::transfer::SpaceOps;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Solution at `t_prev` with its cached discrete Laplacian.
#[derive(Clone, Debug)]
pub struct StepState {
    pub t: f64,
    pub u: FeFunction,
    pub lap: FeFunction,
}

impl StepState {
    pub fn space(&self) -> &SplineSpace {
        self.u.space()
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub t_prev: f64,
    pub k: f64,
    pub u_new: FeFunction,
    /// `Δ^n U^n`.
    pub lap_new: FeFunction,
    /// `∂̄W^{n-1/2}`.
    pub wbar: FeFunction,
    /// `Θ(t_{n-1}) = -Π Δ^{n-1} U^{n-1}`.
    pub theta0: FeFunction,
    /// `Θ(t_{n-1/2})`.
    pub theta_mid: FeFunction,
    pub pi_u_prev: FeFunction,
    pub pi_lap_prev: FeFunction,
    /// `P(g(t_{n-1/2}) U^{n-1/2})`.
    pub pg_half: FeFunction,
    /// `P f(t_{n-1/2})`.
    pub pf_mid: FeFunction,
    /// Whether `V^n = V^{n-1}`.
    pub same_space: bool,
    pub ops: Arc<SpaceOps>,
}

impl StepResult {
    pub fn t_new(&self) -> f64 {
        self.t_prev + self.k
    }

    pub fn t_mid(&self) -> f64 {
        self.t_prev + 0.5 * self.k
    }

    /// `W(t_{n-1/2}) = iαΘ(t_{n-1/2}) + i P(g U^{n-1/2}) - P f`.
    pub fn w_mid(&self, alpha: f64) -> FeFunction {
        let c: Vec<Complex64> = self
            .theta_mid
            .coeffs()
            .iter()
            .zip(self.pg_half.coeffs())
            .zip(self.pf_mid.coeffs())
            .map(|((th, pg), pf)| I * alpha * th + I * pg - pf)
            .collect();
        self.ops.function(c)
    }

    /// `‖W(t_{n-1/2}) + (U^n - Π U^{n-1})/k‖`, zero up to rounding.
    pub fn midpoint_defect(&self, alpha: f64) -> f64 {
        let w = self.w_mid(alpha);
        let c: Vec<Complex64> = w
            .coeffs()
            .iter()
            .zip(self.u_new.coeffs())
            .zip(self.pi_u_prev.coeffs())
            .map(|((w, u), p)| w + (u - p) / self.k)
            .collect();
        self.ops.norm_sq(&c).sqrt()
    }

    pub fn state(&self) -> StepState {
        StepState {
            t: self.t_new(),
            u: self.u_new.clone(),
            lap: self.lap_new.clone(),
        }
    }
}

struct SystemCache {
    space: SplineSpace,
    k: f64,
    t_mid: f64,
    lu: BandedLu<Complex64>,
}

struct PotentialCache {
    space: SplineSpace,
    t: f64,
    b: Arc<BandedMatrix<f64>>,
}

/// Step driver with per-space operator caches.
pub struct Stepper<'p> {
    prob: &'p ProblemSpec,
    ops: Vec<Arc<SpaceOps>>,
    system: Option<SystemCache>,
    potential: Vec<PotentialCache>,
}

impl<'p> Stepper<'p> {
    pub fn new(prob: &'p ProblemSpec) -> Self {
        Self {
            prob,
            ops: Vec::new(),
            system: None,
            potential: Vec::new(),
        }
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.prob
    }

    /// Cached operators of `space` (the last few spaces are kept).
    pub fn ops(&mut self, space: &SplineSpace) -> Result<Arc<SpaceOps>> {
        if let Some(o) = self.ops.iter().find(|o| o.space.same_as(space)) {
            return Ok(o.clone());
        }
        let o = Arc::new(SpaceOps::new(space)?);
        self.ops.insert(0, o.clone());
        self.ops.truncate(4);
        Ok(o)
    }

    /// `U^0 = P u_0` on `space`.
    pub fn initial(&mut self, space: &SplineSpace) -> Result<StepState> {
        let ops = self.ops(space)?;
        let u = ops.project_field(&self.prob.u0, 0.0);
        let lap = ops.laplacian(&u);
        Ok(StepState { t: 0.0, u, lap })
    }

    /// `g(·, t)`-weighted mass matrix (None when `g` is constant).
    fn potential_matrix(&mut self, space: &SplineSpace, t: f64) -> Option<Arc<BandedMatrix<f64>>> {
        if self.prob.g.as_const().is_some() {
            return None;
        }
        let t = if self.prob.g.is_time_independent() { 0.0 } else { t };
        if let Some(p) = self.potential.iter().find(|p| p.t == t && p.space.same_as(space)) {
            return Some(p.b.clone());
        }
        let b = Arc::new(assembly::weighted_mass_matrix(space, &self.prob.g, t));
        self.potential.insert(
            0,
            PotentialCache {
                space: space.clone(),
                t,
                b: b.clone(),
            },
        );
        self.potential.truncate(4);
        Some(b)
    }

    fn system_lu(&mut self, ops: &SpaceOps, k: f64, t_mid: f64, b_mid: Option<&BandedMatrix<f64>>) -> Result<&BandedLu<Complex64>> {
        let key_t = if self.prob.g.is_time_independent() { 0.0 } else { t_mid };
        let hit = matches!(&self.system, Some(s) if s.k == k && s.t_mid == key_t && s.space.same_as(&ops.space));
        if !hit {
            let alpha = self.prob.alpha;
            let mut a = ops.mass.map(|v| Complex64::new(v / k, 0.0));
            a.axpy(I * (alpha / 2.0), &ops.stiffness.to_complex());
            match (b_mid, self.prob.g.as_const()) {
                (Some(b), _) => a.axpy(I * 0.5, &b.to_complex()),
                (None, Some(g)) => a.axpy(I * (0.5 * g), &ops.mass.to_complex()),
                (None, None) => unreachable!("non-constant potential without a matrix"),
            }
            self.system = Some(SystemCache {
                space: ops.space.clone(),
                k,
                t_mid: key_t,
                lu: a.lu()?,
            });
        }
        Ok(&self.system.as_ref().expect("just filled").lu)
    }

    /// Advances `state` by `k` onto `space_new`.
    pub fn step(&mut self, state: &StepState, space_new: &SplineSpace, k: f64) -> Result<StepResult> {
        let prob = self.prob;
        let alpha = prob.alpha;
        let t_prev = state.t;
        let t_mid = t_prev + 0.5 * k;
        let ops = self.ops(space_new)?;
        let same = state.space().same_as(space_new);
        let g_const = prob.g.as_const();
        let b_mid = self.potential_matrix(space_new, t_mid);
        let b_prev = self.potential_matrix(space_new, t_prev);

        let c_prev = state.u.coeffs();
        // ⟨U^{n-1}, φ⟩, ⟨Δ^{n-1}U^{n-1}, φ⟩ and ⟨g U^{n-1}, φ⟩ at both times.
        let (load_u, load_lap, pi_u, pi_lap) = if same {
            let mut load_lap = ops.stiffness.matvec(c_prev);
            load_lap.iter_mut().for_each(|v| *v = -*v);
            (ops.mass.matvec(c_prev), load_lap, state.u.clone(), state.lap.clone())
        } else {
            let lu = cross_load(&state.u, space_new)?;
            let ll = cross_load(&state.lap, space_new)?;
            let pu = ops.function(ops.solve_mass(&lu));
            let pl = ops.function(ops.solve_mass(&ll));
            (lu, ll, pu, pl)
        };
        let (load_g_mid, load_g_prev) = match g_const {
            Some(g) => {
                let l: Vec<Complex64> = load_u.iter().map(|v| v * g).collect();
                (l.clone(), l)
            }
            None if same => {
                let bm = b_mid.as_ref().expect("non-constant potential");
                let bp = b_prev.as_ref().expect("non-constant potential");
                let lm = bm.matvec(c_prev);
                let lp = if Arc::ptr_eq(bm, bp) { lm.clone() } else { bp.matvec(c_prev) };
                (lm, lp)
            }
            None => {
                let lm = L2Expr::new(t_mid).fe_weighted(&state.u, &prob.g, 1.0).load(space_new)?;
                let lp = if prob.g.is_time_independent() {
                    lm.clone()
                } else {
                    L2Expr::new(t_prev).fe_weighted(&state.u, &prob.g, 1.0).load(space_new)?
                };
                (lm, lp)
            }
        };
        let load_f_mid = assembly::load_vector(space_new, &prob.f, t_mid);

        let rhs: Vec<Complex64> = (0..space_new.dim())
            .map(|i| load_u[i] / k + I * (alpha / 2.0) * load_lap[i] - I * 0.5 * load_g_mid[i] + load_f_mid[i])
            .collect();
        let c_new = self.system_lu(&ops, k, t_mid, b_mid.as_deref())?.solve(&rhs);
        let lap_new = ops.laplacian_coeffs(&c_new);

        // P(g_mid U^{n-1/2}) and P(g_prev U^{n-1}).
        let (pg_half, pg_prev): (Vec<Complex64>, Vec<Complex64>) = match g_const {
            Some(g) => (
                pi_u.coeffs().iter().zip(&c_new).map(|(a, b)| 0.5 * g * (a + b)).collect(),
                pi_u.coeffs().iter().map(|a| g * a).collect(),
            ),
            None => {
                let bc = b_mid.as_ref().expect("non-constant potential").matvec(&c_new);
                let half: Vec<Complex64> = load_g_mid.iter().zip(&bc).map(|(a, b)| 0.5 * (a + b)).collect();
                (ops.solve_mass(&half), ops.solve_mass(&load_g_prev))
            }
        };
        let (pf_mid, pf_diff) = if prob.f.is_zero() {
            let z = vec![Complex64::new(0.0, 0.0); space_new.dim()];
            (z.clone(), z)
        } else {
            let lf0 = assembly::load_vector(space_new, &prob.f, t_prev);
            let diff: Vec<Complex64> = load_f_mid.iter().zip(&lf0).map(|(a, b)| a - b).collect();
            (ops.solve_mass(&load_f_mid), ops.solve_mass(&diff))
        };

        let pl = pi_lap.coeffs();
        let wbar: Vec<Complex64> = (0..space_new.dim())
            .map(|i| {
                (2.0 / k)
                    * (I * alpha * 0.5 * (pl[i] - lap_new[i]) + I * (pg_half[i] - pg_prev[i]) - pf_diff[i])
            })
            .collect();
        let theta0: Vec<Complex64> = pl.iter().map(|v| -v).collect();
        let theta_mid: Vec<Complex64> = pl.iter().zip(&lap_new).map(|(a, b)| -0.5 * (a + b)).collect();

        Ok(StepResult {
            t_prev,
            k,
            u_new: ops.function(c_new),
            lap_new: ops.function(lap_new),
            wbar: ops.function(wbar),
            theta0: ops.function(theta0),
            theta_mid: ops.function(theta_mid),
            pi_u_prev: pi_u,
            pi_lap_prev: pi_lap,
            pg_half: ops.function(pg_half),
            pf_mid: ops.function(pf_mid),
            same_space: same,
            ops,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ComplexField, RealField};
    use crate::mesh::Mesh1D;
    use crate::problems::catalog;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pseudo(n: usize, seed: f64) -> Vec<Complex64> {
        (0..n).map(|i| c((seed * (i as f64 + 1.0)).sin(), (seed * 0.7 * i as f64).cos())).collect()
    }

    fn state_from(ops: &SpaceOps, coeffs: Vec<Complex64>, t: f64) -> StepState {
        let u = ops.function(coeffs);
        let lap = ops.laplacian(&u);
        StepState { t, u, lap }
    }

    #[test]
    fn zero_stays_zero() {
        let p = catalog("exp1b").unwrap();
        let s = SplineSpace::new(Mesh1D::uniform(p.a, p.b, 10).unwrap(), 2).unwrap();
        let mut st = Stepper::new(&p);
        let ops = st.ops(&s).unwrap();
        let z = state_from(&ops, vec![c(0.0, 0.0); s.dim()], 0.0);
        let r = st.step(&z, &s, 0.01).unwrap();
        assert!(r.u_new.coeffs().iter().all(|v| v.norm() == 0.0));
        assert!(r.wbar.coeffs().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn fixed_mesh_norm_is_conserved() {
        for name in ["exp1a", "exp1b", "exp1c"] {
            let p = catalog(name).unwrap();
            let s = SplineSpace::new(Mesh1D::uniform(p.a, p.b, 24).unwrap(), p.defaults.degree).unwrap();
            let mut st = Stepper::new(&p);
            let ops = st.ops(&s).unwrap();
            let mut state = state_from(&ops, pseudo(s.dim(), 0.9), 0.0);
            let n0 = ops.norm_sq(state.u.coeffs()).sqrt();
            for n in 1..=20 {
                let r = st.step(&state, &s, 0.05).unwrap();
                let nn = ops.norm_sq(r.u_new.coeffs()).sqrt();
                assert!((nn - n0).abs() / n0 <= 1e-10 * n as f64, "{name} n={n}");
                state = r.state();
            }
        }
    }

    #[test]
    fn midpoint_identity_on_changing_meshes() {
        let p = catalog("exp2").unwrap();
        let coarse = Mesh1D::uniform(p.a, p.b, 12).unwrap();
        let fine = coarse.refine(&[coarse.leaves()[5], coarse.leaves()[6]].into_iter().collect()).unwrap();
        let other = fine.coarsen(&fine.leaves()[5..7].iter().copied().collect());
        let spaces: Vec<SplineSpace> = [coarse, fine.clone(), fine, other]
            .into_iter()
            .map(|m| SplineSpace::new(m, 2).unwrap())
            .collect();
        let mut st = Stepper::new(&p);
        let mut state = st.initial(&spaces[0]).unwrap();
        for s in &spaces[1..] {
            let r = st.step(&state, s, 0.02).unwrap();
            let scale = r.ops.norm_sq(r.u_new.coeffs()).sqrt() / r.k;
            assert!(r.midpoint_defect(p.alpha) <= 1e-10 * scale);
            state = r.state();
        }
    }

    #[test]
    fn same_space_reuses_previous_laplacian() {
        let p = catalog("exp1a").unwrap();
        let s = SplineSpace::new(Mesh1D::uniform(p.a, p.b, 16).unwrap(), 1).unwrap();
        let mut st = Stepper::new(&p);
        let state = st.initial(&s).unwrap();
        let r = st.step(&state, &s, 0.01).unwrap();
        assert_eq!(r.pi_lap_prev.coeffs(), state.lap.coeffs());
    }

    /// Dense complex Gaussian elimination.
    fn dense_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let l = a[i][k] / a[k][k];
                for j in k..n {
                    let v = a[k][j];
                    a[i][j] -= l * v;
                }
                let v = b[k];
                b[i] -= l * v;
            }
        }
        let mut x = vec![c(0.0, 0.0); n];
        for k in (0..n).rev() {
            let s: Complex64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    /// Exact hat-function Gram matrices on a uniform mesh with `n` interior
    /// nodes spacing `h`.
    fn hat_matrices(n: usize, h: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut m = vec![vec![0.0; n]; n];
        let mut s = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 2.0 * h / 3.0;
            s[i][i] = 2.0 / h;
            if i + 1 < n {
                m[i][i + 1] = h / 6.0;
                m[i + 1][i] = h / 6.0;
                s[i][i + 1] = -1.0 / h;
                s[i + 1][i] = -1.0 / h;
            }
        }
        (m, s)
    }

    fn mv(a: &[Vec<f64>], x: &[Complex64]) -> Vec<Complex64> {
        a.iter().map(|row| row.iter().zip(x).map(|(a, b)| b * a).sum()).collect()
    }

    #[test]
    fn one_step_matches_dense_oracle() {
        // Constant potential, hats, 4 elements (3 dofs).
        let p = catalog("exp1a").unwrap();
        let s = SplineSpace::new(Mesh1D::uniform(p.a, p.b, 4).unwrap(), 1).unwrap();
        let mut st = Stepper::new(&p);
        let ops = st.ops(&s).unwrap();
        let c0 = pseudo(3, 1.3);
        let state = state_from(&ops, c0.clone(), 0.0);
        let k = 0.01;
        let r = st.step(&state, &s, k).unwrap();

        let (m, sm) = hat_matrices(3, 1.0);
        let (alpha, g) = (p.alpha, 100.0);
        let a: Vec<Vec<Complex64>> = (0..3)
            .map(|i| (0..3).map(|j| m[i][j] / k + I * alpha / 2.0 * sm[i][j] + I * g / 2.0 * m[i][j]).collect())
            .collect();
        let mc = mv(&m, &c0);
        let sc = mv(&sm, &c0);
        let rhs: Vec<Complex64> = (0..3).map(|i| mc[i] / k - I * alpha / 2.0 * sc[i] - I * g / 2.0 * mc[i]).collect();
        let c1 = dense_solve(a, rhs);
        for (x, y) in r.u_new.coeffs().iter().zip(&c1) {
            assert!((x - y).norm() < 1e-11);
        }
        let lap = |cv: &[Complex64]| {
            let mm: Vec<Vec<Complex64>> = m.iter().map(|r| r.iter().map(|&v| c(v, 0.0)).collect()).collect();
            dense_solve(mm, mv(&sm, cv).into_iter().map(|v| -v).collect())
        };
        let (d0, d1) = (lap(&c0), lap(&c1));
        let wbar: Vec<Complex64> = (0..3)
            .map(|i| (1.0 / k) * (-I * alpha * (d1[i] - d0[i]) + I * g * (c1[i] - c0[i])))
            .collect();
        for (x, y) in r.wbar.coeffs().iter().zip(&wbar) {
            assert!((x - y).norm() < 1e-11 * (1.0 + y.norm()), "{x} vs {y}");
        }
    }

    #[test]
    fn time_dependent_potential_and_source_are_consistent() {
        // Variable, time-dependent g and nonzero f: the midpoint identity
        // still holds on a fixed mesh.
        let mut p = catalog("exp2").unwrap();
        p.g = RealField::new(|x, t| (1.0 + t) * x * x + 0.3);
        p.f = ComplexField::new(|x, t| c((x * t).cos(), x));
        let s = SplineSpace::new(Mesh1D::uniform(p.a, p.b, 20).unwrap(), 3).unwrap();
        let mut st = Stepper::new(&p);
        let mut state = st.initial(&s).unwrap();
        for _ in 0..5 {
            let r = st.step(&state, &s, 0.03).unwrap();
            let scale = (1.0 + r.ops.norm_sq(r.u_new.coeffs()).sqrt()) / r.k;
            assert!(r.midpoint_defect(p.alpha) <= 1e-10 * scale);
            state = r.state();
        }
    }
}
