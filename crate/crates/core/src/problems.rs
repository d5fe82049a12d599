//! Problem definitions for `u_t - iα u_xx + i g(x,t) u = f` with
//! homogeneous Dirichlet conditions, WKB initial data, the built-in
//! experiment catalog and the position/current observables.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::spline::FeFunction;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Suggested discretization and adaptivity parameters for a catalog entry.
#[derive(Clone, Debug, Serialize)]
pub struct ProblemDefaults {
    pub degree: usize,
    /// Uniform element count.
    pub elements: usize,
    /// Time step for uniform runs or the initial adaptive step.
    pub k: f64,
    pub refine_fraction: f64,
    pub tol_s: f64,
    pub tol_t: f64,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub alpha: f64,
    pub g: RealField,
    pub f: ComplexField,
    pub u0: ComplexField,
    pub exact: Option<ComplexField>,
    pub eps: Option<f64>,
    /// Human-readable description of the coefficient convention.
    pub convention: String,
    pub defaults: ProblemDefaults,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &(self.a, self.b))
            .field("t_final", &self.t_final)
            .field("alpha", &self.alpha)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

/// Run metadata recorded next to every output.
#[derive(Clone, Debug, Serialize)]
pub struct ProblemInfo {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub alpha: f64,
    pub eps: Option<f64>,
    pub convention: String,
    pub has_exact: bool,
}

impl ProblemSpec {
    pub fn info(&self) -> ProblemInfo {
        ProblemInfo {
            name: self.name.clone(),
            a: self.a,
            b: self.b,
            t_final: self.t_final,
            alpha: self.alpha,
            eps: self.eps,
            convention: self.convention.clone(),
            has_exact: self.exact.is_some(),
        }
    }

    /// Semiclassical form `u_t - i(ε/2) u_xx + (i/ε) V u = 0`.
    pub fn semiclassical(
        name: &str,
        (a, b): (f64, f64),
        t_final: f64,
        eps: f64,
        potential: RealField,
        wkb: WkbData,
        defaults: ProblemDefaults,
    ) -> Self {
        Self {
            name: name.into(),
            a,
            b,
            t_final,
            alpha: eps / 2.0,
            g: potential.affine(1.0 / eps, 0.0),
            f: ComplexField::zero(),
            u0: wkb.field(),
            exact: None,
            eps: Some(eps),
            convention: format!("alpha = eps/2, g = V/eps, f = 0 (eps = {eps})"),
            defaults,
        }
    }

    /// Samples `g(·, t)` on `xs` and returns `(sup, inf)`.
    pub fn g_range(&self, xs: impl IntoIterator<Item = f64>, t: f64) -> (f64, f64) {
        xs.into_iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), x| {
            let v = self.g.eval(x, t);
            (hi.max(v), lo.min(v))
        })
    }

    /// Whether `sup g ≥ -inf g` at time `t` on a uniform sample grid.
    pub fn shift_condition_holds(&self, t: f64) -> bool {
        let n = 512;
        let (hi, lo) = self.g_range((0..=n).map(|i| self.a + (self.b - self.a) * i as f64 / n as f64), t);
        hi >= -lo
    }

    /// Largest `|u0|` at the two endpoints.
    pub fn boundary_magnitude(&self) -> f64 {
        self.u0.eval(self.a, 0.0).norm().max(self.u0.eval(self.b, 0.0).norm())
    }
}

/// `u0 = sqrt(n0) exp(i S0 / ε)`.
#[derive(Clone)]
pub struct WkbData {
    pub n0_sqrt: RealField,
    pub s0: RealField,
    pub eps: f64,
}

impl WkbData {
    pub fn eval(&self, x: f64) -> Complex64 {
        let amp = self.n0_sqrt.eval(x, 0.0);
        Complex64::from_polar(amp, self.s0.eval(x, 0.0) / self.eps)
    }

    pub fn field(&self) -> ComplexField {
        let me = self.clone();
        ComplexField::stationary(move |x| me.eval(x))
    }

    /// `sqrt(n0) = exp(-λ²(x - 1/2)²)`, `S0 = -(1/λ) ln(e^{λ(x-1/2)} + e^{-λ(x-1/2)})`.
    pub fn focusing(lambda: f64, eps: f64) -> Self {
        Self {
            n0_sqrt: RealField::stationary(move |x| (-(lambda * (x - 0.5)).powi(2)).exp()),
            s0: RealField::stationary(move |x| -log_2cosh(lambda * (x - 0.5)) / lambda),
            eps,
        }
    }
}

/// `ln(e^a + e^{-a})` without overflow.
pub fn log_2cosh(a: f64) -> f64 {
    let m = a.abs();
    m + (-2.0 * m).exp().ln_1p()
}

pub const CATALOG: &[&str] = &[
    "exp1a",
    "exp1b",
    "exp1c",
    "exp2",
    "sensitivity",
    "adapt_case1",
    "adapt_case2",
    "tdp1",
    "tdp2",
    "obs1",
    "obs2",
    "obs3",
];

/// Built-in problem by name.
pub fn catalog(name: &str) -> Result<ProblemSpec> {
    catalog_with_eps(name, None)
}

/// Built-in problem with an optional override of the Planck constant.
pub fn catalog_with_eps(name: &str, eps: Option<f64>) -> Result<ProblemSpec> {
    let defaults = |degree, elements, k, refine_fraction, tol_s, tol_t| ProblemDefaults {
        degree,
        elements,
        k,
        refine_fraction,
        tol_s,
        tol_t,
    };
    let gauss = |c: f64, s: f64| RealField::stationary(move |x| (-c * (x - s).powi(2)).exp());
    let spec = match name {
        "exp1a" => {
            let e = eps.unwrap_or(1.0);
            ProblemSpec::semiclassical(
                name,
                (-2.0, 2.0),
                1.0,
                e,
                RealField::constant(100.0),
                WkbData {
                    n0_sqrt: gauss(12.5, 0.0),
                    s0: RealField::stationary(|x| x * x / 2.0),
                    eps: e,
                },
                defaults(1, 640, 1.0 / 160.0, 0.05, 1e-2, 1e-2),
            )
        }
        "exp1b" => {
            let e = eps.unwrap_or(0.5);
            ProblemSpec::semiclassical(
                name,
                (-2.0, 2.0),
                1.0,
                e,
                RealField::stationary(|x| x * x / 2.0),
                WkbData {
                    n0_sqrt: gauss(25.0, 0.5),
                    s0: RealField::stationary(|x| 1.0 + x),
                    eps: e,
                },
                defaults(2, 75, 1.0 / 80.0, 0.05, 1e-2, 1e-2),
            )
        }
        "exp1c" => {
            let e = eps.unwrap_or(0.25);
            ProblemSpec::semiclassical(
                name,
                (-2.0, 2.0),
                1.0,
                e,
                RealField::stationary(|x| (x * x - 0.25).powi(2)),
                WkbData {
                    n0_sqrt: gauss(12.5, 0.0),
                    s0: RealField::stationary(|x| -log_2cosh(5.0 * (x - 0.5)) / 5.0),
                    eps: e,
                },
                defaults(3, 40, 1.0 / 80.0, 0.05, 1e-2, 1e-2),
            )
        }
        "exp2" => exp2(),
        "sensitivity" => {
            let e = eps.unwrap_or(0.005);
            ProblemSpec::semiclassical(
                name,
                (-1.0, 2.0),
                0.54,
                e,
                RealField::constant(10.0),
                WkbData::focusing(5.0, e),
                defaults(1, 300, 1e-2, 0.05, 1e-2, 1e-2),
            )
        }
        "adapt_case1" => {
            let e = eps.unwrap_or(1e-4);
            ProblemSpec::semiclassical(
                name,
                (0.0, 1.0),
                0.1,
                e,
                RealField::constant(10.0),
                WkbData::focusing(30.0, e),
                defaults(4, 64, 1e-3, 0.05, 1e-2, 1e-2),
            )
        }
        "adapt_case2" => {
            let e = eps.unwrap_or(1e-3);
            ProblemSpec::semiclassical(
                name,
                (-1.0, 2.0),
                0.54,
                e,
                RealField::stationary(|x| x * x / 2.0),
                WkbData::focusing(5.0, e),
                defaults(3, 96, 1e-3, 0.05, 1e-1, 1e-1),
            )
        }
        "tdp1" => {
            let e = eps.unwrap_or(1e-2);
            let mut wkb = WkbData::focusing(5.0, e);
            wkb.s0 = RealField::stationary(|x| 5.0 * (x * x - x));
            ProblemSpec::semiclassical(
                name,
                (1.0, 2.0),
                3.0,
                e,
                RealField::new(|x, t| x * x / 2.0 / (10.0 * t + 0.05)),
                wkb,
                defaults(2, 32, 1e-3, 0.01, 1e-1, 1e-1),
            )
        }
        "tdp2" => {
            let e = eps.unwrap_or(2.5e-3);
            let mut wkb = WkbData::focusing(5.0, e);
            wkb.s0 = RealField::stationary(|x| 5.0 * (x * x - x));
            ProblemSpec::semiclassical(
                name,
                (-1.0, 2.0),
                1.0,
                e,
                RealField::new(|x, t| x * x / 2.0 / (t + 0.05)),
                wkb,
                defaults(3, 96, 1e-3, 0.01, 1e-1, 1e-1),
            )
        }
        "obs1" | "obs2" => {
            let (e0, r, k) = if name == "obs1" { (1e-3, 2, 1e-5) } else { (2.5e-4, 4, 3e-6) };
            let e = eps.unwrap_or(e0);
            ProblemSpec::semiclassical(
                name,
                (-1.0, 2.0),
                0.54,
                e,
                RealField::constant(10.0),
                WkbData::focusing(5.0, e),
                defaults(r, 300, k, 0.05, 1e-1, 1e-1),
            )
        }
        "obs3" => {
            let e = eps.unwrap_or(5e-5);
            ProblemSpec::semiclassical(
                name,
                (0.0, 1.0),
                0.1,
                e,
                RealField::constant(10.0),
                WkbData::focusing(30.0, e),
                defaults(3, 200, 5e-7, 0.05, 1e-1, 1e-1),
            )
        }
        other => return Err(Error::UnknownProblem(other.into())),
    };
    Ok(spec)
}

/// `u = exp(-25(x - t)²) exp(i(1 + t)(1 + x))` for
/// `u_t - (i/2) u_xx + i (1 + t)² x²/2 u = f`.
fn exp2() -> ProblemSpec {
    let exact = |x: f64, t: f64| -> Complex64 {
        let d = x - t;
        Complex64::from_polar((-25.0 * d * d).exp(), (1.0 + t) * (1.0 + x))
    };
    let source = move |x: f64, t: f64| -> Complex64 {
        let u = exact(x, t);
        let d = x - t;
        let phi_t = Complex64::new(50.0 * d, 1.0 + x);
        let phi_x = Complex64::new(-50.0 * d, 1.0 + t);
        let v = (1.0 + t).powi(2) * x * x / 2.0;
        u * (phi_t - 0.5 * I * (phi_x * phi_x - 50.0) + I * v)
    };
    ProblemSpec {
        name: "exp2".into(),
        a: -2.0,
        b: 2.0,
        t_final: 1.0,
        alpha: 0.5,
        g: RealField::new(|x, t| (1.0 + t).powi(2) * x * x / 2.0),
        f: ComplexField::new(source),
        u0: ComplexField::stationary(move |x| exact(x, 0.0)),
        exact: Some(ComplexField::new(exact)),
        eps: Some(1.0),
        convention: "alpha = 1/2, g = V, f from the exact solution".into(),
        defaults: ProblemDefaults {
            degree: 2,
            elements: 75,
            k: 1.0 / 80.0,
            refine_fraction: 0.01,
            tol_s: 1e-2,
            tol_t: 1e-2,
        },
    }
}

/// `N = |u|²` at each grid point.
pub fn position_density(u: &FeFunction, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter().map(|&x| Ok(u.eval(x, 0)?.norm_sqr())).collect()
}

/// `J = Im(conj(u) u')` at each grid point.
pub fn current_density(u: &FeFunction, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&x| Ok((u.eval(x, 0)?.conj() * u.eval(x, 1)?).im))
        .collect()
}

/// Uniform grid with `n` points plus every mesh breakpoint, sorted.
pub fn observable_grid(u: &FeFunction, n: usize) -> Vec<f64> {
    let mesh = u.space().mesh();
    let (a, b) = (mesh.a(), mesh.b());
    let mut g: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64).collect();
    g.extend_from_slice(mesh.breakpoints());
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh1D;
    use crate::spline::SplineSpace;
    use crate::transfer::l2_project_field;

    #[test]
    fn every_catalog_entry_builds() {
        for name in CATALOG {
            let p = catalog(name).unwrap();
            assert!(p.alpha > 0.0, "{name}");
            assert!(p.a < p.b);
        }
        assert!(matches!(catalog("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn exp1a_convention() {
        let p = catalog("exp1a").unwrap();
        assert_eq!(p.alpha, 0.5);
        assert_eq!(p.g.as_const(), Some(100.0));
        assert_eq!((p.a, p.b, p.t_final), (-2.0, 2.0, 1.0));
    }

    #[test]
    fn exp2_exact_values() {
        let p = catalog("exp2").unwrap();
        let u = p.exact.as_ref().unwrap();
        assert!((u.eval(0.0, 0.0) - Complex64::from_polar(1.0, 1.0)).norm() < 1e-15);
        let far = Complex64::from_polar((-25.0f64).exp(), 2.0);
        assert!((u.eval(1.0, 0.0) - far).norm() < 1e-25);
    }

    #[test]
    fn exp2_source_matches_finite_differences() {
        let p = catalog("exp2").unwrap();
        let u = p.exact.clone().unwrap();
        let mut seed = 12345u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = -2.0 + 4.0 * rnd();
            let t = rnd();
            let h = 1e-4;
            let ut = (u.eval(x, t + h) - u.eval(x, t - h)) / (2.0 * h);
            let uxx = (u.eval(x + h, t) - 2.0 * u.eval(x, t) + u.eval(x - h, t)) / (h * h);
            let res = ut - 0.5 * I * uxx + I * p.g.eval(x, t) * u.eval(x, t) - p.f.eval(x, t);
            // Finite-difference truncation dominates; scale by solution size.
            let scale = 1.0 + p.f.eval(x, t).norm();
            assert!(res.norm() < 1e-3 * scale, "x={x} t={t} res={res}");
        }
    }

    #[test]
    fn exp2_source_is_exact_for_a_polynomial_probe() {
        // Independent check of the closed form: along x = t the Gaussian
        // factor is 1, so u_t and u_xx reduce to elementary expressions.
        let p = catalog("exp2").unwrap();
        let t: f64 = 0.3;
        let x = t;
        let u = Complex64::from_polar(1.0, (1.0 + t) * (1.0 + x));
        let ut = u * I * (1.0 + x);
        let ux_phase = I * (1.0 + t);
        let uxx = u * (ux_phase * ux_phase - 50.0);
        let want = ut - 0.5 * I * uxx + I * (1.0 + t).powi(2) * x * x / 2.0 * u;
        assert!((p.f.eval(x, t) - want).norm() < 1e-12);
    }

    #[test]
    fn wkb_amplitude() {
        let w = WkbData::focusing(30.0, 1e-4);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((w.eval(x).norm() - w.n0_sqrt.eval(x, 0.0)).abs() < 1e-15);
        }
        assert!(w.eval(0.0).norm() < 1e-12);
        assert!(log_2cosh(800.0).is_finite());
        assert!((log_2cosh(0.3) - (0.3f64.exp() + (-0.3f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn shift_condition() {
        assert!(catalog("exp1b").unwrap().shift_condition_holds(0.0));
        let mut p = catalog("exp1b").unwrap();
        p.g = RealField::constant(-1.0);
        assert!(!p.shift_condition_holds(0.0));
    }

    #[test]
    fn densities() {
        let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, 8).unwrap(), 2).unwrap();
        let zero = FeFunction::zeros(s.clone());
        let grid = observable_grid(&zero, 11);
        assert!(position_density(&zero, &grid).unwrap().iter().all(|&v| v == 0.0));
        let real = l2_project_field(&s, &ComplexField::stationary(|x| Complex64::new(x * (1.0 - x), 0.0)), 0.0).unwrap();
        assert!(current_density(&real, &grid).unwrap().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn current_of_plane_wave_packet() {
        let kappa = 20.0;
        let bump = |x: f64| (-100.0 * (x - 0.5f64).powi(2)).exp();
        let v = ComplexField::stationary(move |x| Complex64::from_polar(bump(x), kappa * x));
        let mut errs = Vec::new();
        for n in [40, 80, 160] {
            let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, n).unwrap(), 3).unwrap();
            let u = l2_project_field(&s, &v, 0.0).unwrap();
            let grid: Vec<f64> = (1..50).map(|i| 0.3 + 0.4 * i as f64 / 50.0).collect();
            let j = current_density(&u, &grid).unwrap();
            let err = grid
                .iter()
                .zip(&j)
                .map(|(&x, &jv)| (jv - kappa * bump(x).powi(2)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < errs[0] / 4.0 && errs[2] < errs[1] / 4.0, "{errs:?}");
    }
}
