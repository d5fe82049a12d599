//! Distances between discrete solutions on unrelated meshes and against
//! closed-form solutions.

use crate::assembly::{L2Expr, QuadratureRule};
use crate::error::Result;
use crate::field::ComplexField;
use crate::spline::FeFunction;

/// `‖u − v‖` integrated on the union of both breakpoint sets, so the meshes
/// need not share a macro mesh.
pub fn l2_distance(u: &FeFunction, v: &FeFunction) -> Result<f64> {
    if u.space().mesh().same_macro(v.space().mesh()) {
        return L2Expr::new(0.0).fe(u, 1.0).fe(v, -1.0).norm();
    }
    let bps = union_breakpoints(u, v);
    let q = u.space().degree().max(v.space().degree()) + 3;
    let rule = QuadratureRule::gauss_legendre(q);
    let mut acc = 0.0;
    for w in bps.windows(2) {
        for (x, wq) in rule.mapped(w[0], w[1]) {
            acc += wq * (u.eval(x, 0)? - v.eval(x, 0)?).norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

/// Sorted union of both breakpoint sets.
fn union_breakpoints(u: &FeFunction, v: &FeFunction) -> Vec<f64> {
    let mut bps: Vec<f64> = u
        .space()
        .mesh()
        .breakpoints()
        .iter()
        .chain(v.space().mesh().breakpoints())
        .copied()
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    bps
}

/// `‖|u|² − |v|²‖`, exact for the piecewise polynomial densities.
pub fn density_distance(u: &FeFunction, v: &FeFunction) -> Result<f64> {
    let q = u.space().degree().max(v.space().degree()) * 2 + 2;
    let rule = QuadratureRule::gauss_legendre(q);
    let mut acc = 0.0;
    for w in union_breakpoints(u, v).windows(2) {
        for (x, wq) in rule.mapped(w[0], w[1]) {
            acc += wq * (u.eval(x, 0)?.norm_sqr() - v.eval(x, 0)?.norm_sqr()).powi(2);
        }
    }
    Ok(acc.sqrt())
}

/// `‖u(·, t) − U‖`.
pub fn l2_error(exact: &ComplexField, u: &FeFunction, t: f64) -> Result<f64> {
    L2Expr::new(t).field(exact, 1.0).fe(u, -1.0).norm_on(u.space().mesh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh1D;
    use crate::spline::SplineSpace;
    use num_complex::Complex64;

    #[test]
    fn distance_across_unrelated_meshes() {
        // The same linear function on 3 and 4 elements.
        let line = |n: usize| {
            let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, n).unwrap(), 2).unwrap();
            let f = ComplexField::stationary(|x| Complex64::new(x * (1.0 - x), 0.0));
            crate::transfer::l2_project_field(&s, &f, 0.0).unwrap()
        };
        let (a, b) = (line(3), line(4));
        assert!(l2_distance(&a, &b).unwrap() < 1e-13);
        assert!(l2_distance(&a, &a.scale(Complex64::new(2.0, 0.0))).unwrap() > 0.1);
    }

    #[test]
    fn density_distance_ignores_phase() {
        let s = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, 5).unwrap(), 2).unwrap();
        let f = ComplexField::stationary(|x| Complex64::new(x * (1.0 - x), 2.0 * x * (1.0 - x)));
        let u = crate::transfer::l2_project_field(&s, &f, 0.0).unwrap();
        let other = SplineSpace::new(Mesh1D::uniform(0.0, 1.0, 3).unwrap(), 2).unwrap();
        let v = crate::transfer::l2_project_field(&other, &f, 0.0).unwrap();
        let rotated = v.scale(Complex64::from_polar(1.0, 0.7));
        assert!(density_distance(&u, &rotated).unwrap() < 1e-13);
        // |2u|² − |u|² = 3|u|² = 15 x²(1 − x)².
        let d = density_distance(&u, &u.scale(Complex64::new(2.0, 0.0))).unwrap();
        let n2: f64 = {
            let rule = QuadratureRule::gauss_legendre(8);
            rule.mapped(0.0, 1.0).map(|(x, w)| w * (5.0 * (x * (1.0 - x)).powi(2)).powi(2)).sum()
        };
        assert!((d - 3.0 * n2.sqrt()).abs() < 1e-12);
    }
}
