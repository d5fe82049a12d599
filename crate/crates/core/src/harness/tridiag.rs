//! Fused fixed-mesh kernel for linear splines, constant potential and no
//! source. Every operator is tridiagonal, so one step plus all estimators
//! reduces to a handful of sweeps over preallocated vectors.
//!
//! With `l = Δc` and `ll = Δl` carried between steps:
//!
//! ```text
//! A c_new = M (c/k + iα/2 l − ig/2 c),   A = M/k + iα/2 S + ig/2 M
//! ∂̄W      = (2/k)(iα/2 (l − l_new) + ig/2 (c_new − c))
//! Δ∂̄W     = (2/k)(iα/2 (ll − ll_new) + ig/2 (l_new − l))
//! ```

use num_complex::Complex64;

use crate::assembly::BandedMatrix;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, PotentialStats, StepEstimators, TimeRule};
use crate::transfer::SpaceOps;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Symmetric tridiagonal matrix: `d[i]` on the diagonal, `o[i]` at `(i, i+1)`.
#[derive(Clone, Debug)]
struct Tri<T> {
    d: Vec<T>,
    o: Vec<T>,
}

impl Tri<f64> {
    fn from_banded(a: &BandedMatrix<f64>) -> Self {
        let n = a.dim();
        Self {
            d: (0..n).map(|i| a.get(i, i)).collect(),
            o: (0..n.saturating_sub(1)).map(|i| a.get(i, i + 1)).collect(),
        }
    }

    #[inline]
    fn apply(&self, x: &[Complex64], i: usize) -> Complex64 {
        let mut s = x[i] * self.d[i];
        if i > 0 {
            s += x[i - 1] * self.o[i - 1];
        }
        if i + 1 < x.len() {
            s += x[i + 1] * self.o[i];
        }
        s
    }

    /// `x^H T x`.
    fn form(&self, x: &[Complex64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        for i in 0..n {
            s += self.d[i] * x[i].norm_sqr();
        }
        for i in 0..n.saturating_sub(1) {
            s += 2.0 * self.o[i] * (x[i].conj() * x[i + 1]).re;
        }
        s.max(0.0)
    }
}

/// Unpivoted LU of a symmetric tridiagonal matrix: multipliers and inverse
/// pivots.
#[derive(Clone, Debug)]
struct TriLu<T> {
    mult: Vec<T>,
    inv_piv: Vec<T>,
    upper: Vec<T>,
}

macro_rules! tri_lu {
    ($t:ty, $zero:expr, $one:expr, $abs:expr) => {
        impl TriLu<$t> {
            fn new(d: &[$t], o: &[$t]) -> Result<Self> {
                let n = d.len();
                let scale = d.iter().map(|v| $abs(*v)).fold(0.0, f64::max);
                let mut mult = vec![$zero; n];
                let mut inv_piv = vec![$zero; n];
                let mut piv = d[0];
                for i in 0..n {
                    if i > 0 {
                        mult[i] = o[i - 1] * inv_piv[i - 1];
                        piv = d[i] - mult[i] * o[i - 1];
                    }
                    if !($abs(piv) > scale * 1e-13) {
                        return Err(Error::Singular { pivot: i });
                    }
                    inv_piv[i] = $one / piv;
                }
                Ok(Self {
                    mult,
                    inv_piv,
                    upper: o.to_vec(),
                })
            }
        }
    };
}

tri_lu!(f64, 0.0, 1.0, |v: f64| v.abs());
tri_lu!(Complex64, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), |v: Complex64| v.norm());

impl<T> TriLu<T>
where
    T: Copy,
    Complex64: std::ops::Mul<T, Output = Complex64>,
{
    /// Back substitution in place, after the forward sweep left `y` in `x`.
    fn backward(&self, x: &mut [Complex64]) {
        let n = x.len();
        x[n - 1] = x[n - 1] * self.inv_piv[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - x[i + 1] * self.upper[i]) * self.inv_piv[i];
        }
    }

    #[inline]
    fn forward_at(&self, y: &mut [Complex64], i: usize, b: Complex64) {
        y[i] = if i == 0 { b } else { b - y[i - 1] * self.mult[i] };
    }
}

/// Preallocated state of the fused run.
pub struct TridiagKernel {
    alpha: f64,
    g: f64,
    k: f64,
    cfg: EstimatorConfig,
    m: Tri<f64>,
    s: Tri<f64>,
    m4: Tri<f64>,
    a_lu: TriLu<Complex64>,
    m_lu: TriLu<f64>,
    pub c: Vec<Complex64>,
    pub l: Vec<Complex64>,
    ll: Vec<Complex64>,
    c_new: Vec<Complex64>,
    l_new: Vec<Complex64>,
    ll_new: Vec<Complex64>,
}

impl TridiagKernel {
    pub fn new(ops: &SpaceOps, alpha: f64, g: f64, k: f64, cfg: EstimatorConfig, c0: &[Complex64]) -> Result<Self> {
        let m = Tri::from_banded(&ops.mass);
        let s = Tri::from_banded(&ops.stiffness);
        let m4 = Tri::from_banded(ops.mass_h4());
        let ad: Vec<Complex64> = (0..m.d.len())
            .map(|i| m.d[i] / k + I * (alpha / 2.0) * s.d[i] + I * (g / 2.0) * m.d[i])
            .collect();
        let ao: Vec<Complex64> = (0..m.o.len())
            .map(|i| m.o[i] / k + I * (alpha / 2.0) * s.o[i] + I * (g / 2.0) * m.o[i])
            .collect();
        let a_lu = TriLu::<Complex64>::new(&ad, &ao)?;
        let m_lu = TriLu::<f64>::new(&m.d, &m.o)?;
        let n = c0.len();
        let z = vec![Complex64::new(0.0, 0.0); n];
        let mut me = Self {
            alpha,
            g,
            k,
            cfg,
            m,
            s,
            m4,
            a_lu,
            m_lu,
            c: c0.to_vec(),
            l: z.clone(),
            ll: z.clone(),
            c_new: z.clone(),
            l_new: z.clone(),
            ll_new: z,
        };
        laplacian_into(&me.s, &me.m_lu, &me.c, &mut me.l);
        laplacian_into(&me.s, &me.m_lu, &me.l, &mut me.ll);
        Ok(me)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `η(U)` of the current state.
    pub fn eta(&self) -> f64 {
        self.m4.form(&self.l).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.m.form(&self.c).sqrt()
    }

    /// Advances one step and returns the estimators together with the
    /// scaled midpoint defect.
    pub fn step(&mut self, n: usize, t_new: f64) -> (StepEstimators, f64) {
        let (alpha, g, k) = (self.alpha, self.g, self.k);
        let dim = self.c.len();

        // c_new.
        let v = |c: &[Complex64], l: &[Complex64], i: usize| c[i] / k + I * (alpha / 2.0) * l[i] - I * (g / 2.0) * c[i];
        {
            let (c, l) = (&self.c, &self.l);
            let mut vm = Complex64::new(0.0, 0.0);
            let mut vi = v(c, l, 0);
            for i in 0..dim {
                let vp = if i + 1 < dim { v(c, l, i + 1) } else { Complex64::new(0.0, 0.0) };
                let mut b = vi * self.m.d[i];
                if i > 0 {
                    b += vm * self.m.o[i - 1];
                }
                if i + 1 < dim {
                    b += vp * self.m.o[i];
                }
                self.a_lu.forward_at(&mut self.c_new, i, b);
                vm = vi;
                vi = vp;
            }
            self.a_lu.backward(&mut self.c_new);
        }
        laplacian_into(&self.s, &self.m_lu, &self.c_new, &mut self.l_new);
        laplacian_into(&self.s, &self.m_lu, &self.l_new, &mut self.ll_new);

        // Every quadratic form in one sweep.
        let s2 = 2.0 / k;
        let w_at = |i: usize, c: &[Complex64], cn: &[Complex64], l: &[Complex64], ln: &[Complex64]| {
            s2 * (I * (alpha / 2.0) * (l[i] - ln[i]) + I * (g / 2.0) * (cn[i] - c[i]))
        };
        let (c, cn, l, ln, ll, lln) = (&self.c, &self.c_new, &self.l, &self.l_new, &self.ll, &self.ll_new);
        let vals = |i: usize| -> [Complex64; 6] {
            let w = w_at(i, c, cn, l, ln);
            let lw = w_at(i, l, ln, ll, lln);
            let op = -alpha * lw + g * w;
            let d = ln[i] - l[i];
            let wmid = I * alpha * (-0.5 * (l[i] + ln[i])) + I * (g / 2.0) * (c[i] + cn[i]);
            let defect = wmid + (cn[i] - c[i]) / k;
            [ln[i], w, lw, op, d, defect]
        };
        // Norms: η(U^n)² (M4), ‖w‖² (M), η(w)² (M4), ‖op‖² (M), pair (M4), defect (M).
        let mut acc = [0.0f64; 6];
        let weight_tri = [&self.m4, &self.m, &self.m4, &self.m, &self.m4, &self.m];
        let mut cur = vals(0);
        for i in 0..dim {
            let nxt = if i + 1 < dim { Some(vals(i + 1)) } else { None };
            for j in 0..6 {
                let t = weight_tri[j];
                acc[j] += t.d[i] * cur[j].norm_sqr();
                if let Some(nx) = &nxt {
                    acc[j] += 2.0 * t.o[i] * (cur[j].conj() * nx[j]).re;
                }
            }
            if let Some(nx) = nxt {
                cur = nx;
            }
        }
        let [eta_u, norm_w, eta_w, op_norm, pair, defect] = acc.map(|v| v.max(0.0).sqrt());

        std::mem::swap(&mut self.c, &mut self.c_new);
        std::mem::swap(&mut self.l, &mut self.l_new);
        std::mem::swap(&mut self.ll, &mut self.ll_new);

        let est = assemble_step(n, t_new, k, dim, g, &self.cfg, [eta_u, norm_w, eta_w, op_norm, pair]);
        (est, defect)
    }
}

/// Step estimators of a constant-potential, source-free step from the norms
/// `[η(U^n), ‖∂̄W‖, η(∂̄W), ‖(−αΔ + g)∂̄W‖, η(U^n − U^{n−1})]`.
pub(crate) fn assemble_step(
    n: usize,
    t: f64,
    k: f64,
    dim: usize,
    g: f64,
    cfg: &EstimatorConfig,
    norms: [f64; 5],
) -> StepEstimators {
    let [eta_u, norm_w, eta_w, op_norm, pair] = norms;
    let c_const = cfg.c_const;
    let kernel = match cfg.time_rule {
        TimeRule::Midpoint | TimeRule::Gauss3 => k.powi(3) / 12.0,
        TimeRule::PlainMidpoint => k.powi(3) / 8.0,
    };
    StepEstimators {
        n,
        t,
        k,
        dim,
        zeta_t0: k * k / 8.0 * (norm_w + c_const * eta_w),
        zeta_t1: kernel * op_norm,
        zeta_s0: c_const * eta_u,
        zeta_s1: c_const * k * k / 4.0 * eta_w,
        zeta_s2: 0.0,
        zeta_s3: cfg.c_hat * pair,
        zeta_c: 0.0,
        zeta_d: 0.0,
        stats: PotentialStats { gbar: g, p: 0.0 },
        eta_u,
    }
}

/// `out = M^{-1}(−S x)`.
fn laplacian_into(s: &Tri<f64>, m_lu: &TriLu<f64>, x: &[Complex64], out: &mut [Complex64]) {
    for i in 0..x.len() {
        let b = -s.apply(x, i);
        m_lu.forward_at(out, i, b);
    }
    m_lu.backward(out);
}
