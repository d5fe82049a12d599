//! L2 projections and the discrete Laplacian.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::assembly::{self, integrate::cross_load, BandedLu, BandedMatrix};
use crate::error::Result;
use crate::field::ComplexField;
use crate::spline::{FeFunction, SplineSpace};

/// Mass and stiffness matrices of one space with a factored mass matrix.
#[derive(Debug)]
pub struct SpaceOps {
    pub space: SplineSpace,
    pub mass: BandedMatrix<f64>,
    pub stiffness: BandedMatrix<f64>,
    mass_lu: BandedLu<f64>,
    mass_h4: OnceLock<BandedMatrix<f64>>,
}

impl SpaceOps {
    pub fn new(space: &SplineSpace) -> Result<Self> {
        let mass = assembly::mass_matrix(space);
        let mass_lu = mass.lu()?;
        Ok(Self {
            space: space.clone(),
            stiffness: assembly::stiffness_matrix(space),
            mass,
            mass_lu,
            mass_h4: OnceLock::new(),
        })
    }

    /// `Σ_K h_K^4 M_K`.
    pub fn mass_h4(&self) -> &BandedMatrix<f64> {
        self.mass_h4.get_or_init(|| assembly::mass_matrix_h4(&self.space))
    }

    pub fn solve_mass(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        self.mass_lu.solve(rhs)
    }

    pub fn function(&self, coeffs: Vec<Complex64>) -> FeFunction {
        FeFunction::new(self.space.clone(), coeffs).expect("coefficient length matches space")
    }

    /// `P v(·, t)`.
    pub fn project_field(&self, v: &ComplexField, t: f64) -> FeFunction {
        let load = assembly::load_vector(&self.space, v, t);
        self.function(self.solve_mass(&load))
    }

    /// L2 projection of `u` (on any compatible space) into this space.
    pub fn project(&self, u: &FeFunction) -> Result<FeFunction> {
        if u.space().same_as(&self.space) {
            return Ok(u.clone());
        }
        let load = cross_load(u, &self.space)?;
        Ok(self.function(self.solve_mass(&load)))
    }

    /// Coefficients of `Δ^n u` for coefficients `c` on this space.
    pub fn laplacian_coeffs(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut rhs = self.stiffness.matvec(c);
        rhs.iter_mut().for_each(|v| *v = -*v);
        self.solve_mass(&rhs)
    }

    pub fn laplacian(&self, u: &FeFunction) -> FeFunction {
        debug_assert!(u.space().same_as(&self.space));
        self.function(self.laplacian_coeffs(u.coeffs()))
    }

    /// `‖u‖²` for coefficients on this space.
    pub fn norm_sq(&self, c: &[Complex64]) -> f64 {
        self.mass.hermitian_form(c).max(0.0)
    }
}

/// `P v(·, t)` onto `space`.
pub fn l2_project_field(space: &SplineSpace, v: &ComplexField, t: f64) -> Result<FeFunction> {
    Ok(SpaceOps::new(space)?.project_field(v, t))
}

/// L2 projection of `src` onto `dst`, integrated on the common refinement.
pub fn project_between(src: &FeFunction, dst: &SplineSpace) -> Result<FeFunction> {
    if src.space().same_as(dst) {
        return Ok(src.clone());
    }
    SpaceOps::new(dst)?.project(src)
}

/// `d` with `⟨d, φ⟩ = -⟨u', φ'⟩` on the space of `u`.
pub fn discrete_laplacian(u: &FeFunction) -> Result<FeFunction> {
    Ok(SpaceOps::new(u.space())?.laplacian(u))
}
