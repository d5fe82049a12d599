//! Quadrature, banded assembly on a single spline space, and band solves.

pub mod banded;
pub mod integrate;
pub mod quadrature;

use num_complex::Complex64;

pub use banded::{BandedLu, BandedMatrix};
pub use integrate::{L2Expr, Term};
pub use quadrature::QuadratureRule;

use crate::error::Result;
use crate::field::{ComplexField, RealField};
use crate::spline::SplineSpace;

/// Adds `Σ_qp w(e, qp) · d^m φ_j · d^m φ_i` over every element into a band
/// matrix (active indices only).
fn assemble_sym(space: &SplineSpace, m: usize, weight: impl Fn(usize, f64, f64) -> f64) -> BandedMatrix<f64> {
    let r = space.degree();
    let mut a = BandedMatrix::zeros(space.dim(), r);
    let quad = space.quadrature();
    let mesh = space.mesh();
    let mut local = vec![0.0; (r + 1) * (r + 1)];
    for e in 0..space.num_elements() {
        let (x0, x1) = mesh.element_bounds(e);
        let h = x1 - x0;
        let scale = h.powi(-2 * m as i32);
        let tab = space.table(e);
        local.iter_mut().for_each(|v| *v = 0.0);
        for (qp, (x, w)) in quad.mapped(x0, x1).enumerate() {
            let wq = w * weight(e, x, h) * scale;
            if wq == 0.0 {
                continue;
            }
            let b = tab.get(m, qp);
            for i in 0..=r {
                let bi = b[i] * wq;
                for j in i..=r {
                    local[i * (r + 1) + j] += bi * b[j];
                }
            }
        }
        for i in 0..=r {
            let Some(gi) = space.active(e + i) else { continue };
            for j in i..=r {
                let Some(gj) = space.active(e + j) else { continue };
                let v = local[i * (r + 1) + j];
                a.add_to(gi, gj, v);
                if gi != gj {
                    a.add_to(gj, gi, v);
                }
            }
        }
    }
    a
}

/// `M_ij = ⟨φ_j, φ_i⟩`.
pub fn mass_matrix(space: &SplineSpace) -> BandedMatrix<f64> {
    assemble_sym(space, 0, |_, _, _| 1.0)
}

/// `S_ij = ⟨φ_j', φ_i'⟩`.
pub fn stiffness_matrix(space: &SplineSpace) -> BandedMatrix<f64> {
    assemble_sym(space, 1, |_, _, _| 1.0)
}

/// `Σ_K h_K^4 ⟨φ_j, φ_i⟩_K`, the Gram matrix of the `h^2`-weighted norm.
pub fn mass_matrix_h4(space: &SplineSpace) -> BandedMatrix<f64> {
    assemble_sym(space, 0, |_, _, h| h.powi(4))
}

/// `B_ij = ⟨w(·, t) φ_j, φ_i⟩`.
pub fn weighted_mass_matrix(space: &SplineSpace, w: &RealField, t: f64) -> BandedMatrix<f64> {
    match w.as_const() {
        Some(c) => mass_matrix(space).map(|v| v * c),
        None => assemble_sym(space, 0, |_, x, _| w.eval(x, t)),
    }
}

/// `⟨v(·, t), φ_i⟩`.
pub fn load_vector(space: &SplineSpace, v: &ComplexField, t: f64) -> Vec<Complex64> {
    let r = space.degree();
    let mut out = vec![Complex64::new(0.0, 0.0); space.dim()];
    if v.is_zero() {
        return out;
    }
    let quad = space.quadrature();
    let mesh = space.mesh();
    for e in 0..space.num_elements() {
        let (x0, x1) = mesh.element_bounds(e);
        let tab = space.table(e);
        for (qp, (x, w)) in quad.mapped(x0, x1).enumerate() {
            let fv = v.eval(x, t) * w;
            let b = tab.get(0, qp);
            for j in 0..=r {
                if let Some(g) = space.active(e + j) {
                    out[g] += fv * b[j];
                }
            }
        }
    }
    out
}

/// Solves `A x = rhs` by band LU.
pub fn banded_solve(a: &BandedMatrix<Complex64>, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(a.lu()?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh1D;
    use crate::spline::FeFunction;

    fn space(a: f64, b: f64, n: usize, r: usize) -> SplineSpace {
        SplineSpace::new(Mesh1D::uniform(a, b, n).unwrap(), r).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_hat_mass_and_stiffness() {
        let s = space(0.0, 1.0, 2, 1);
        let m = mass_matrix(&s);
        let k = stiffness_matrix(&s);
        assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn three_element_stiffness() {
        let s = space(0.0, 1.0, 3, 1);
        let k = stiffness_matrix(&s);
        assert!((k.get(0, 0) - 6.0).abs() < 1e-13);
        assert!((k.get(0, 1) + 3.0).abs() < 1e-13);
        assert!((k.get(1, 1) - 6.0).abs() < 1e-13);
    }

    #[test]
    fn weighted_mass_examples() {
        let s = space(0.0, 1.0, 2, 1);
        let b = weighted_mass_matrix(&s, &RealField::stationary(|x| x), 0.0);
        // ∫ x·hat² dx over [0, 1] with the hat peaking at 1/2.
        assert!((b.get(0, 0) - 1.0 / 6.0).abs() < 1e-15);
        let s = space(-1.0, 2.0, 7, 3);
        let m = mass_matrix(&s);
        let one = weighted_mass_matrix(&s, &RealField::stationary(|_| 1.0), 0.0);
        let three = weighted_mass_matrix(&s, &RealField::constant(3.0), 0.0);
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                assert!((one.get(i, j) - m.get(i, j)).abs() < 1e-15);
                assert!((three.get(i, j) - 3.0 * m.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mass_is_positive_definite() {
        let s = space(0.0, 2.0, 9, 4);
        let m = mass_matrix(&s);
        // Cholesky on the dense copy.
        let n = s.dim();
        let mut a = m.to_dense();
        for k in 0..n {
            assert!(a[k][k] > 0.0);
            let d = a[k][k].sqrt();
            for i in k..n {
                a[i][k] /= d;
            }
            for j in k + 1..n {
                for i in j..n {
                    let v = a[i][k] * a[j][k];
                    a[i][j] -= v;
                }
            }
        }
    }

    #[test]
    fn load_examples() {
        let s = space(0.0, 1.0, 2, 1);
        assert_eq!(load_vector(&s, &ComplexField::zero(), 0.0), vec![c(0.0, 0.0)]);
        let l = load_vector(&s, &ComplexField::constant(c(0.0, 1.0)), 0.0);
        assert!((l[0] - c(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn load_of_fe_function_is_mass_times_coeffs() {
        let s = space(-2.0, 2.0, 11, 3);
        let coeffs: Vec<_> = (0..s.dim()).map(|i| c((i as f64).sin(), (2.0 * i as f64).cos())).collect();
        let u = FeFunction::new(s.clone(), coeffs.clone()).unwrap();
        let field = ComplexField::stationary(move |x| u.eval(x, 0).unwrap());
        let l = load_vector(&s, &field, 0.0);
        let mc = mass_matrix(&s).matvec(&coeffs);
        for (p, q) in l.iter().zip(&mc) {
            assert!((p - q).norm() < 1e-13);
        }
    }

    #[test]
    fn quadrature_exactness_for_quadratic_weights() {
        let mesh = Mesh1D::uniform(-1.0, 1.0, 6).unwrap();
        for r in 1..=4 {
            let lo = SplineSpace::with_quadrature(mesh.clone(), r, r + 1).unwrap();
            let hi = SplineSpace::with_quadrature(mesh.clone(), r, r + 3).unwrap();
            let w = RealField::stationary(|x| 1.0 + x + x * x);
            // Degree 2r + 2 integrand needs r + 2 points; r + 1 suffices
            // for mass and stiffness.
            let (m1, m2) = (mass_matrix(&lo), mass_matrix(&hi));
            let (s1, s2) = (stiffness_matrix(&lo), stiffness_matrix(&hi));
            let b2 = weighted_mass_matrix(&hi, &w, 0.0);
            let b3 = weighted_mass_matrix(
                &SplineSpace::with_quadrature(mesh.clone(), r, r + 5).unwrap(),
                &w,
                0.0,
            );
            for i in 0..lo.dim() {
                for j in 0..lo.dim() {
                    assert!((m1.get(i, j) - m2.get(i, j)).abs() <= 1e-13 * m2.norm_inf());
                    assert!((s1.get(i, j) - s2.get(i, j)).abs() <= 1e-13 * s2.norm_inf());
                    assert!((b2.get(i, j) - b3.get(i, j)).abs() <= 1e-13 * b3.norm_inf());
                }
            }
        }
    }

    #[test]
    fn mass_solve_recovers_coefficients() {
        let s = space(0.0, 1.0, 20, 2);
        let m = mass_matrix(&s);
        let cs: Vec<_> = (0..s.dim()).map(|i| c(i as f64 * 0.1, 1.0 - i as f64)).collect();
        let b = m.matvec(&cs);
        let x = m.lu().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&cs) {
            assert!((p - q).norm() <= 1e-12 * (1.0 + q.norm()));
        }
    }
}
