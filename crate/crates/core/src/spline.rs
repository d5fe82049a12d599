//! Degree-r B-spline spaces with homogeneous Dirichlet conditions.
//!
//! Knots are clamped at the ends and simple at every interior breakpoint.
//! The unconstrained basis on a mesh with `n` elements has `n + r`
//! functions; the first and last are dropped, leaving `n + r - 2` active
//! ones. Element `e` supports unconstrained functions `e ..= e + r`.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::mesh::{Mesh1D, MeshJson};

/// Highest derivative order kept in the per-element tables.
pub const TABLE_DERIVS: usize = 2;

#[derive(Debug)]
struct SpaceData {
    mesh: Mesh1D,
    degree: usize,
    knots: Vec<f64>,
    dim: usize,
    quad: QuadratureRule,
    /// Table index per element.
    elem_table: Vec<u32>,
    tables: Vec<BasisTable>,
}

/// Reference-coordinate basis derivatives at the quadrature nodes of one
/// element: entry `[m][qp][j]` is `d^m/ds^m N_{e+j}` with `x = x_e + s h`.
#[derive(Clone, Debug)]
pub struct BasisTable {
    stride_m: usize,
    stride_q: usize,
    vals: Vec<f64>,
}

impl BasisTable {
    #[inline]
    pub fn get(&self, m: usize, qp: usize) -> &[f64] {
        let o = m * self.stride_m + qp * self.stride_q;
        &self.vals[o..o + self.stride_q]
    }
}

/// Shared handle to an immutable spline space.
#[derive(Clone, Debug)]
pub struct SplineSpace(Arc<SpaceData>);

impl PartialEq for SplineSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.degree == other.0.degree
                && self.0.quad.len() == other.0.quad.len()
                && self.0.mesh == other.0.mesh)
    }
}

impl SplineSpace {
    /// Space with the default `r + 3` quadrature points per element.
    pub fn new(mesh: Mesh1D, degree: usize) -> Result<Self> {
        Self::with_quadrature(mesh, degree, degree + 3)
    }

    pub fn with_quadrature(mesh: Mesh1D, degree: usize, q: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidSpace("degree must be at least 1".into()));
        }
        if q < degree + 1 {
            return Err(Error::InvalidSpace(format!(
                "{q} quadrature points cannot integrate degree-{degree} mass matrices exactly"
            )));
        }
        let nel = mesh.num_elements();
        if nel + degree < 3 {
            return Err(Error::InvalidSpace(format!(
                "{nel} element(s) leave no interior degree-{degree} basis function"
            )));
        }
        let bp = mesh.breakpoints();
        let mut knots = Vec::with_capacity(nel + 2 * degree + 1);
        knots.extend(std::iter::repeat(bp[0]).take(degree));
        knots.extend_from_slice(bp);
        knots.extend(std::iter::repeat(bp[nel]).take(degree));
        let quad = QuadratureRule::gauss_legendre(q);

        let mut keys: HashMap<Vec<i64>, u32> = HashMap::new();
        let mut tables = Vec::new();
        let mut elem_table = Vec::with_capacity(nel);
        let mut local = vec![0.0; 2 * degree + 2];
        for e in 0..nel {
            let (x0, x1) = mesh.element_bounds(e);
            let h = x1 - x0;
            for (l, t) in local.iter_mut().zip(&knots[e..=e + 2 * degree + 1]) {
                *l = (t - x0) / h;
            }
            local[degree] = 0.0;
            local[degree + 1] = 1.0;
            let key = table_key(&local);
            let id = match key.and_then(|k| keys.get(&k).copied().map(Ok).or(Some(Err(k)))) {
                Some(Ok(id)) => id,
                other => {
                    let id = tables.len() as u32;
                    tables.push(build_table(&local, degree, &quad));
                    if let Some(Err(k)) = other {
                        keys.insert(k, id);
                    }
                    id
                }
            };
            elem_table.push(id);
        }
        Ok(Self(Arc::new(SpaceData {
            dim: nel + degree - 2,
            mesh,
            degree,
            knots,
            quad,
            elem_table,
            tables,
        })))
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.0.mesh
    }

    pub fn degree(&self) -> usize {
        self.0.degree
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.0.knots
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.0.quad
    }

    pub fn num_elements(&self) -> usize {
        self.0.mesh.num_elements()
    }

    /// Number of distinct reference tables (elements sharing a local knot
    /// pattern share one table).
    pub fn num_tables(&self) -> usize {
        self.0.tables.len()
    }

    #[inline]
    pub fn table(&self, e: usize) -> &BasisTable {
        &self.0.tables[self.0.elem_table[e] as usize]
    }

    pub fn same_as(&self, other: &SplineSpace) -> bool {
        self == other
    }

    /// Active index of unconstrained basis function `u`, or `None` for the
    /// two boundary functions.
    #[inline]
    pub fn active(&self, u: usize) -> Option<usize> {
        if u == 0 || u > self.0.dim {
            None
        } else {
            Some(u - 1)
        }
    }

    /// Whether the space contains `other` (same degree, finer or equal mesh).
    pub fn contains(&self, other: &SplineSpace) -> bool {
        self.degree() == other.degree() && self.mesh().is_refinement_of(other.mesh())
    }

    /// `m`-th derivatives of the `r + 1` unconstrained basis functions that
    /// are nonzero on element `e`, evaluated at `x` (which may lie anywhere
    /// in the closed element).
    pub fn ders_in_element(&self, e: usize, x: f64, nd: usize, out: &mut [Vec<f64>]) {
        ders_basis_funs(&self.0.knots, e + self.0.degree, self.0.degree, x, nd, out);
    }

    /// Unconstrained basis evaluation: returns the index of the first of
    /// the `r + 1` possibly nonzero functions and their `m`-th derivatives.
    pub fn eval_basis(&self, x: f64, m: usize) -> Result<(usize, Vec<f64>)> {
        let e = self.0.mesh.locate(x)?;
        let r = self.0.degree;
        let mut out = vec![vec![0.0; r + 1]; m + 1];
        self.ders_in_element(e, x, m, &mut out);
        Ok((e, out.swap_remove(m)))
    }

    /// Active basis evaluation as `(active index, value)` pairs; the two
    /// boundary functions are masked out.
    pub fn eval_basis_active(&self, x: f64, m: usize) -> Result<Vec<(usize, f64)>> {
        let (first, vals) = self.eval_basis(x, m)?;
        Ok(vals
            .into_iter()
            .enumerate()
            .filter_map(|(j, v)| self.active(first + j).map(|i| (i, v)))
            .collect())
    }
}

fn table_key(local: &[f64]) -> Option<Vec<i64>> {
    const SCALE: f64 = (1u64 << 24) as f64;
    local
        .iter()
        .map(|&t| {
            let s = t * SCALE;
            (s.abs() < (1u64 << 52) as f64).then(|| s.round() as i64)
        })
        .collect()
}

fn build_table(local: &[f64], r: usize, quad: &QuadratureRule) -> BasisTable {
    let nq = quad.len();
    let stride_q = r + 1;
    let stride_m = nq * stride_q;
    let mut vals = vec![0.0; (TABLE_DERIVS + 1) * stride_m];
    let mut out = vec![vec![0.0; r + 1]; TABLE_DERIVS + 1];
    for (qp, &s) in quad.nodes.iter().enumerate() {
        ders_basis_funs(local, r, r, s, TABLE_DERIVS, &mut out);
        for (m, row) in out.iter().enumerate() {
            let o = m * stride_m + qp * stride_q;
            vals[o..o + stride_q].copy_from_slice(row);
        }
    }
    BasisTable {
        stride_m,
        stride_q,
        vals,
    }
}

/// Derivatives `0..=nd` of the `p + 1` B-splines nonzero on knot span
/// `[U_i, U_{i+1})` at `x` (Piegl & Tiller, algorithm A2.3). Orders above
/// `p` are zero.
pub fn ders_basis_funs(knots: &[f64], i: usize, p: usize, x: f64, nd: usize, out: &mut [Vec<f64>]) {
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[i + 1 - j];
        right[j] = knots[i + j] - x;
        let mut saved = 0.0;
        for rr in 0..j {
            ndu[j][rr] = right[rr + 1] + left[j - rr];
            let temp = ndu[rr][j - 1] / ndu[j][rr];
            ndu[rr][j] = saved + right[rr + 1] * temp;
            saved = left[j - rr] * temp;
        }
        ndu[j][j] = saved;
    }
    for j in 0..=p {
        out[0][j] = ndu[j][p];
    }
    let n = nd.min(p);
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for rr in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut d = 0.0;
            let rk = rr as isize - k as isize;
            let pk = p - k;
            if rr >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if rr as isize - 1 <= pk as isize { k - 1 } else { p - rr };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if rr <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][rr];
                d += a[s2][k] * ndu[rr][pk];
            }
            out[k][rr] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = p as f64;
    for k in 1..=n {
        for v in out[k].iter_mut().take(p + 1) {
            *v *= fac;
        }
        fac *= (p - k) as f64;
    }
    for row in out.iter_mut().take(nd + 1).skip(n + 1) {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Complex coefficient vector on a [`SplineSpace`].
#[derive(Clone, Debug)]
pub struct FeFunction {
    space: SplineSpace,
    coeffs: Vec<Complex64>,
}

impl FeFunction {
    pub fn new(space: SplineSpace, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: coeffs.len(),
            });
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: SplineSpace) -> Self {
        let n = space.dim();
        Self {
            space,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn space(&self) -> &SplineSpace {
        &self.space
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of unconstrained basis function `u` (zero at the ends).
    #[inline]
    pub fn coeff_unconstrained(&self, u: usize) -> Complex64 {
        match self.space.active(u) {
            Some(i) => self.coeffs[i],
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self + s * other` on the same space.
    pub fn axpy(&self, s: Complex64, other: &FeFunction) -> Self {
        assert!(self.space.same_as(&other.space), "axpy across spaces");
        Self {
            space: self.space.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn eval(&self, x: f64, m: usize) -> Result<Complex64> {
        let (first, vals) = self.space.eval_basis(x, m)?;
        Ok(vals
            .iter()
            .enumerate()
            .map(|(j, v)| self.coeff_unconstrained(first + j) * v)
            .sum())
    }

    /// `m`-th derivative at every quadrature node of element `e`.
    pub fn element_qp_values(&self, e: usize, m: usize, out: &mut [Complex64]) {
        let r = self.space.degree();
        let h = self.space.mesh().width(e);
        let scale = h.powi(-(m as i32));
        let tab = self.space.table(e);
        let mut local = [Complex64::new(0.0, 0.0); 16];
        for (j, l) in local.iter_mut().enumerate().take(r + 1) {
            *l = self.coeff_unconstrained(e + j);
        }
        for (qp, o) in out.iter_mut().enumerate() {
            let b = tab.get(m, qp);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=r {
                acc += local[j] * b[j];
            }
            *o = acc * scale;
        }
    }

    pub fn snapshot(&self) -> FeSnapshot {
        FeSnapshot {
            mesh: self.space.mesh().to_json(),
            degree: self.space.degree(),
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_snapshot(s: &FeSnapshot) -> Result<Self> {
        let space = SplineSpace::new(Mesh1D::from_json(&s.mesh)?, s.degree)?;
        Self::new(space, s.coeffs.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
    }
}

/// Serialized FE function: mesh, degree and `[re, im]` coefficient pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeSnapshot {
    pub mesh: MeshJson,
    pub degree: usize,
    pub coeffs: Vec<[f64; 2]>,
}
