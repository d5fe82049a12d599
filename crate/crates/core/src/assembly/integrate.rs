//! Integrals of linear combinations of FE functions (possibly on different
//! meshes) and closed-form fields, computed cell by cell on the common
//! refinement so that every integrand is smooth inside each cell.

use num_complex::Complex64;

use crate::assembly::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::mesh::Mesh1D;
use crate::spline::{FeFunction, SplineSpace, TABLE_DERIVS};

#[derive(Clone, Debug)]
pub enum Term<'a> {
    /// `coef · w(x, t) · u^{(deriv)}(x)`, the derivative taken elementwise.
    Fe {
        u: &'a FeFunction,
        deriv: usize,
        coef: Complex64,
        weight: Option<&'a RealField>,
    },
    /// `coef · v(x, t)`.
    Field { v: &'a ComplexField, coef: Complex64 },
}

/// `Σ terms` evaluated at time `t`.
#[derive(Clone, Debug)]
pub struct L2Expr<'a> {
    terms: Vec<Term<'a>>,
    t: f64,
}

const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl<'a> L2Expr<'a> {
    pub fn new(t: f64) -> Self {
        Self { terms: Vec::new(), t }
    }

    pub fn fe(mut self, u: &'a FeFunction, coef: impl Into<Complex64>) -> Self {
        self.terms.push(Term::Fe {
            u,
            deriv: 0,
            coef: coef.into(),
            weight: None,
        });
        self
    }

    pub fn fe_deriv(mut self, u: &'a FeFunction, deriv: usize, coef: impl Into<Complex64>) -> Self {
        self.terms.push(Term::Fe {
            u,
            deriv,
            coef: coef.into(),
            weight: None,
        });
        self
    }

    pub fn fe_weighted(mut self, u: &'a FeFunction, w: &'a RealField, coef: impl Into<Complex64>) -> Self {
        let coef = coef.into();
        match w.as_const() {
            Some(c) => self.terms.push(Term::Fe {
                u,
                deriv: 0,
                coef: coef * c,
                weight: None,
            }),
            None => self.terms.push(Term::Fe {
                u,
                deriv: 0,
                coef,
                weight: Some(w),
            }),
        }
        self
    }

    pub fn field(mut self, v: &'a ComplexField, coef: impl Into<Complex64>) -> Self {
        if !v.is_zero() {
            self.terms.push(Term::Field { v, coef: coef.into() });
        }
        self
    }

    pub fn terms(&self) -> &[Term<'a>] {
        &self.terms
    }

    fn spaces(&self) -> Vec<&SplineSpace> {
        self.terms
            .iter()
            .filter_map(|t| match t {
                Term::Fe { u, .. } => Some(u.space()),
                Term::Field { .. } => None,
            })
            .collect()
    }

    /// `∫_K |expr|²` for every element `K` of `partition`.
    pub fn sq_norms_on(&self, partition: &Mesh1D) -> Result<Vec<f64>> {
        let mut out = vec![0.0; partition.num_elements()];
        let q = self.quad_points(None);
        let mut walker = Walker::new(self, &[partition], q)?;
        let mut pos = 0usize;
        walker.run(|cell| {
            while !partition.leaves()[pos].contains(cell.id) {
                pos += 1;
            }
            out[pos] += cell.ws.iter().zip(cell.vals).map(|(w, v)| w * v.norm_sqr()).sum::<f64>();
        });
        Ok(out)
    }

    /// L2 norm over the domain of the participating FE functions.
    pub fn norm(&self) -> Result<f64> {
        let spaces = self.spaces();
        let Some(first) = spaces.first() else {
            return Err(Error::InvalidConfig("norm of an expression without FE terms needs a mesh".into()));
        };
        self.norm_on(first.mesh())
    }

    /// L2 norm, integrating on the common refinement of `mesh` and the
    /// participating FE meshes.
    pub fn norm_on(&self, mesh: &Mesh1D) -> Result<f64> {
        let q = self.quad_points(None);
        let mut acc = 0.0;
        Walker::new(self, &[mesh], q)?.run(|cell| {
            acc += cell.ws.iter().zip(cell.vals).map(|(w, v)| w * v.norm_sqr()).sum::<f64>();
        });
        Ok(acc.sqrt())
    }

    /// `⟨expr, φ_i⟩` for the active basis of `space`.
    pub fn load(&self, space: &SplineSpace) -> Result<Vec<Complex64>> {
        let r = space.degree();
        let q = self.quad_points(Some(space));
        let mesh = space.mesh();
        let mut out = vec![Complex64::new(0.0, 0.0); space.dim()];
        let mut e = 0usize;
        let mut ders = vec![vec![0.0; r + 1]; 1];
        let table_ok = space.quadrature().len() == q;
        Walker::new(self, &[mesh], q)?.run(|cell| {
            while !mesh.leaves()[e].contains(cell.id) {
                e += 1;
            }
            let aligned = table_ok && mesh.leaves()[e] == cell.id;
            for (qp, ((&x, &w), &v)) in cell.xs.iter().zip(cell.ws).zip(cell.vals).enumerate() {
                let b: &[f64] = if aligned {
                    space.table(e).get(0, qp)
                } else {
                    space.ders_in_element(e, x, 0, &mut ders);
                    &ders[0]
                };
                let wv = v * w;
                for j in 0..=r {
                    if let Some(g) = space.active(e + j) {
                        out[g] += wv * b[j];
                    }
                }
            }
        });
        Ok(out)
    }

    fn quad_points(&self, target: Option<&SplineSpace>) -> usize {
        self.spaces()
            .into_iter()
            .chain(target)
            .map(|s| s.quadrature().len())
            .max()
            .unwrap_or(6)
    }
}

struct Cell<'c> {
    id: crate::mesh::ElementId,
    xs: &'c [f64],
    ws: &'c [f64],
    vals: &'c [Complex64],
}

struct Walker<'e, 'a> {
    expr: &'e L2Expr<'a>,
    fine: Mesh1D,
    rule: QuadratureRule,
}

impl<'e, 'a> Walker<'e, 'a> {
    fn new(expr: &'e L2Expr<'a>, extra: &[&Mesh1D], q: usize) -> Result<Self> {
        let mut meshes: Vec<&Mesh1D> = extra.to_vec();
        meshes.extend(expr.spaces().into_iter().map(|s| s.mesh()));
        let mut fine = meshes[0].clone();
        for m in &meshes[1..] {
            if *m != &fine {
                fine = fine.common_refinement(m)?;
            }
        }
        Ok(Self {
            expr,
            fine,
            rule: QuadratureRule::gauss_legendre(q),
        })
    }

    fn run(&mut self, mut visit: impl FnMut(Cell<'_>)) {
        let q = self.rule.len();
        let t = self.expr.t;
        let nt = self.expr.terms.len();
        let mut ptr = vec![0usize; nt];
        let mut xs = vec![0.0; q];
        let mut ws = vec![0.0; q];
        let mut vals = vec![Complex64::new(0.0, 0.0); q];
        let mut tmp = vec![Complex64::new(0.0, 0.0); q];
        let max_r = self.expr.spaces().iter().map(|s| s.degree()).max().unwrap_or(1);
        let mut ders = vec![vec![0.0; max_r + 1]; TABLE_DERIVS.max(3) + 1];
        for (j, &id) in self.fine.leaves().iter().enumerate() {
            let (x0, x1) = self.fine.element_bounds(j);
            for (k, (x, w)) in self.rule.mapped(x0, x1).enumerate() {
                xs[k] = x;
                ws[k] = w;
            }
            vals.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (ti, term) in self.expr.terms.iter().enumerate() {
                match *term {
                    Term::Fe { u, deriv, coef, weight } => {
                        let space = u.space();
                        let leaves = space.mesh().leaves();
                        let p = &mut ptr[ti];
                        while !leaves[*p].contains(id) {
                            *p += 1;
                        }
                        let e = *p;
                        if leaves[e] == id && space.quadrature().len() == q && deriv <= TABLE_DERIVS {
                            u.element_qp_values(e, deriv, &mut tmp);
                        } else {
                            let r = space.degree();
                            for (k, &x) in xs.iter().enumerate() {
                                space.ders_in_element(e, x, deriv, &mut ders);
                                let mut acc = Complex64::new(0.0, 0.0);
                                for (l, b) in ders[deriv].iter().enumerate().take(r + 1) {
                                    acc += u.coeff_unconstrained(e + l) * *b;
                                }
                                tmp[k] = acc;
                            }
                        }
                        match weight {
                            Some(w) => {
                                for k in 0..q {
                                    vals[k] += coef * w.eval(xs[k], t) * tmp[k];
                                }
                            }
                            None => {
                                for k in 0..q {
                                    vals[k] += coef * tmp[k];
                                }
                            }
                        }
                    }
                    Term::Field { v, coef } => {
                        for k in 0..q {
                            vals[k] += coef * v.eval(xs[k], t);
                        }
                    }
                }
            }
            visit(Cell {
                id,
                xs: &xs,
                ws: &ws,
                vals: &vals,
            });
        }
    }
}

/// `⟨u, φ_i⟩` for `u` on any compatible space.
pub fn cross_load(u: &FeFunction, space: &SplineSpace) -> Result<Vec<Complex64>> {
    L2Expr::new(0.0).fe(u, ONE).load(space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_expression() {
        let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, 4).unwrap(), 2).unwrap();
        let u = FeFunction::zeros(s);
        assert_eq!(L2Expr::new(0.0).fe(&u, ONE).norm().unwrap(), 0.0);
    }

    #[test]
    fn single_hat_norm() {
        let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, 2).unwrap(), 1).unwrap();
        let u = FeFunction::new(s, vec![ONE]).unwrap();
        let n = L2Expr::new(0.0).fe(&u, ONE).norm().unwrap();
        assert!((n - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn same_function_on_two_meshes_cancels() {
        let coarse = Mesh1D::uniform(-1.0, 1.0, 3).unwrap();
        let fine = coarse.refine(&coarse.leaves().iter().copied().collect::<HashSet<_>>()).unwrap();
        let s1 = SplineSpace::new(coarse, 1).unwrap();
        let s2 = SplineSpace::new(fine, 1).unwrap();
        let u1 = FeFunction::new(s1, vec![c(1.0, 2.0), c(-0.5, 0.25)]).unwrap();
        // Inject by nodal interpolation (exact for hats on a nested mesh).
        let coeffs: Vec<_> = s2.mesh().breakpoints()[1..s2.dim() + 1]
            .iter()
            .map(|&x| u1.eval(x, 0).unwrap())
            .collect();
        let u2 = FeFunction::new(s2, coeffs).unwrap();
        let d = L2Expr::new(0.0).fe(&u1, ONE).fe(&u2, -ONE).norm().unwrap();
        assert!(d < 1e-13, "{d}");
    }

    #[test]
    fn field_and_weight_terms() {
        let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, 2).unwrap(), 1).unwrap();
        let u = FeFunction::new(s.clone(), vec![ONE]).unwrap();
        let x = RealField::stationary(|x| x);
        // ∫ x·hat·hat = 1/6.
        let l = L2Expr::new(0.0).fe_weighted(&u, &x, ONE).load(&s).unwrap();
        assert!((l[0] - c(1.0 / 6.0, 0.0)).norm() < 1e-15);
        let one = ComplexField::constant(ONE);
        let n = L2Expr::new(0.0).field(&one, c(0.0, 2.0)).norm_on(s.mesh()).unwrap();
        assert!((n - 2.0).abs() < 1e-14);
    }

    #[test]
    fn per_element_norms_sum_to_total() {
        let m = Mesh1D::uniform(0.0, 2.0, 5).unwrap();
        let fine = m.refine(&[m.leaves()[1], m.leaves()[3]].into_iter().collect()).unwrap();
        let s = SplineSpace::new(fine, 3).unwrap();
        let u = FeFunction::new(s.clone(), (0..s.dim()).map(|i| c(i as f64, 1.0)).collect()).unwrap();
        let e = L2Expr::new(0.0).fe(&u, ONE);
        let parts = e.sq_norms_on(&m).unwrap();
        assert_eq!(parts.len(), 5);
        let total = e.norm().unwrap();
        assert!((parts.iter().sum::<f64>().sqrt() - total).abs() < 1e-13 * total);
    }
}
