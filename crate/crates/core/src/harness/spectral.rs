//! Closed-form run for linear splines on a uniform mesh with constant
//! potential and no source.
//!
//! With zero boundary values the mass and stiffness matrices share the
//! discrete sine vectors `v_j(i) = sin(jπ i/M)`:
//!
//! ```text
//! M v_j = μ_j v_j,  μ_j = h(2 + cos θ_j)/3
//! S v_j = λ_j μ_j v_j,  λ_j = 6(1 − cos θ_j) / (h²(2 + cos θ_j)),  θ_j = jπ/M
//! ```
//!
//! so every step multiplies mode `j` by
//! `ρ_j = (1/k − iβ_j)/(1/k + iβ_j)` with `β_j = (αλ_j + g)/2`. Since
//! `|ρ_j| = 1`, every step norm is a fixed weighted sum of `|ĉ_j|²` and the
//! step estimators only change with the step size.

use num_complex::Complex64;
use rustdct::DctPlanner;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, StepEstimators};
use crate::harness::tridiag::assemble_step;
use crate::spline::SplineSpace;

const I: Complex64 = Complex64::new(0.0, 1.0);

pub struct SpectralKernel {
    h: f64,
    alpha: f64,
    g: f64,
    mu: Vec<f64>,
    lam: Vec<f64>,
    /// Orthonormal sine coefficients of the current state.
    pub chat: Vec<Complex64>,
}

/// Whether the space is linear on a uniform mesh, up to breakpoint rounding.
pub fn applicable(space: &SplineSpace) -> bool {
    let mesh = space.mesh();
    space.degree() == 1 && space.dim() >= 1 && mesh.max_width() - mesh.min_width() <= 1e-9 * mesh.max_width()
}

fn sine_transform(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let dst = DctPlanner::new().plan_dst1(n);
    let mut buf = x.to_vec();
    dst.process_dst1(&mut buf);
    // rustdct omits the 2/(N+1) normalization of the orthonormal transform.
    let s = (2.0 / (n + 1) as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

fn complex_sine_transform(c: &[Complex64]) -> Vec<Complex64> {
    let re = sine_transform(&c.iter().map(|v| v.re).collect::<Vec<_>>());
    let im = sine_transform(&c.iter().map(|v| v.im).collect::<Vec<_>>());
    re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
}

impl SpectralKernel {
    pub fn new(space: &SplineSpace, alpha: f64, g: f64, c0: &[Complex64]) -> Result<Self> {
        if !applicable(space) {
            return Err(Error::InvalidConfig("sine diagonalization needs linear splines on a uniform mesh".into()));
        }
        let m = space.num_elements();
        let h = space.mesh().max_width();
        let (mu, lam): (Vec<f64>, Vec<f64>) = (1..m)
            .map(|j| {
                let c = (j as f64 * std::f64::consts::PI / m as f64).cos();
                (h * (2.0 + c) / 3.0, 6.0 * (1.0 - c) / (h * h * (2.0 + c)))
            })
            .unzip();
        Ok(Self {
            h,
            alpha,
            g,
            mu,
            lam,
            chat: complex_sine_transform(c0),
        })
    }

    fn rho(&self, j: usize, k: f64) -> Complex64 {
        let beta = (self.alpha * self.lam[j] + self.g) / 2.0;
        (1.0 / k - I * beta) / (1.0 / k + I * beta)
    }

    pub fn norm(&self) -> f64 {
        self.mu.iter().zip(&self.chat).map(|(m, c)| m * c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Estimators of a step of size `k` from the current state, and the
    /// midpoint defect `‖W(t_{n−1/2}) + (U^n − U^{n−1})/k‖`.
    pub fn step_estimators(&self, n: usize, t: f64, k: f64, cfg: &EstimatorConfig) -> (StepEstimators, f64) {
        let h4 = self.h.powi(4);
        let mut acc = [0.0f64; 6];
        for j in 0..self.chat.len() {
            let a = self.chat[j].norm_sqr();
            let (mu, lam) = (self.mu[j], self.lam[j]);
            let rho = self.rho(j, k);
            let beta = (self.alpha * lam + self.g) / 2.0;
            let w = (2.0 / k) * (rho - 1.0) * I * beta;
            let mw = mu * w.norm_sqr() * a;
            let defect = I * beta * (1.0 + rho) + (rho - 1.0) / k;
            acc[0] += mu * lam * lam * a;
            acc[1] += mw;
            acc[2] += lam * lam * mw;
            acc[3] += (2.0 * beta).powi(2) * mw;
            acc[4] += mu * lam * lam * (rho - 1.0).norm_sqr() * a;
            acc[5] += mu * defect.norm_sqr() * a;
        }
        let norms = [
            (h4 * acc[0]).sqrt(),
            acc[1].sqrt(),
            (h4 * acc[2]).sqrt(),
            acc[3].sqrt(),
            (h4 * acc[4]).sqrt(),
        ];
        (assemble_step(n, t, k, self.chat.len(), self.g, cfg, norms), acc[5].sqrt())
    }

    /// Takes `steps` steps of size `k`.
    pub fn advance(&mut self, k: f64, steps: usize) {
        for j in 0..self.chat.len() {
            let phase = self.rho(j, k).arg() * steps as f64;
            self.chat[j] *= Complex64::from_polar(1.0, phase);
        }
    }

    /// Nodal coefficients of the current state.
    pub fn coeffs(&self) -> Vec<Complex64> {
        // The orthonormal sine transform is its own inverse.
        complex_sine_transform(&self.chat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tridiag::TridiagKernel;
    use crate::mesh::Mesh1D;
    use crate::problems::catalog;
    use crate::scheme::Stepper;

    #[test]
    fn sine_transform_is_an_involution() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
        let y = sine_transform(&sine_transform(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_the_tridiagonal_kernel_step_by_step() {
        let prob = catalog("sensitivity").unwrap();
        let space = SplineSpace::new(Mesh1D::uniform(prob.a, prob.b, 120).unwrap(), 1).unwrap();
        let mut st = Stepper::new(&prob);
        let state = st.initial(&space).unwrap();
        let ops = st.ops(&space).unwrap();
        let g = prob.g.as_const().unwrap();
        let cfg = EstimatorConfig::default();
        let k = 0.003;
        let mut tri = TridiagKernel::new(&ops, prob.alpha, g, k, cfg, state.u.coeffs()).unwrap();
        let mut spec = SpectralKernel::new(&space, prob.alpha, g, state.u.coeffs()).unwrap();
        assert!((spec.norm() - tri.norm()).abs() < 1e-12 * tri.norm());
        for n in 1..=7 {
            let (a, _) = tri.step(n, n as f64 * k);
            let (b, defect) = spec.step_estimators(n, n as f64 * k, k, &cfg);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300), "{x} vs {y}");
            }
            assert!(k * defect < 1e-12);
            spec.advance(k, 1);
        }
        let mut again = SpectralKernel::new(&space, prob.alpha, g, state.u.coeffs()).unwrap();
        again.advance(k, 7);
        for ((x, y), z) in tri.c.iter().zip(spec.coeffs()).zip(again.coeffs()) {
            assert!((x - y).norm() < 1e-10 && (y - z).norm() < 1e-10);
        }
    }
}
