//! Square band matrices and band LU with partial pivoting.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalars stored in a [`BandedMatrix`].
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self {
        Self::default()
    }
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Right-hand-side types a factorization over `T` can act on.
pub trait Rhs<T>: Copy + Sub<Output = Self> + Mul<T, Output = Self> + Div<T, Output = Self> {}
impl<T, R> Rhs<T> for R where R: Copy + Sub<Output = R> + Mul<T, Output = R> + Div<T, Output = R> {}

/// Square matrix with `half_bandwidth` sub- and super-diagonals, stored by
/// rows: row `i` holds columns `i - hb ..= i + hb`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix<T> {
    dim: usize,
    hb: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(dim: usize, half_bandwidth: usize) -> Self {
        Self {
            dim,
            hb: half_bandwidth,
            data: vec![T::zero(); dim * (2 * half_bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hb
    }

    fn width(&self) -> usize {
        2 * self.hb + 1
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.dim || j >= self.dim || i.abs_diff(j) > self.hb {
            return None;
        }
        Some(i * self.width() + (j + self.hb - i))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.data[s])
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    /// Row `i` as `(first column, values)`.
    #[inline]
    pub fn row(&self, i: usize) -> (usize, &[T]) {
        let w = self.width();
        let lo = i.saturating_sub(self.hb);
        let skip = lo + self.hb - i;
        let hi = (i + self.hb).min(self.dim - 1);
        (lo, &self.data[i * w + skip..i * w + skip + (hi - lo + 1)])
    }

    pub fn matvec<R>(&self, x: &[R]) -> Vec<R>
    where
        R: Copy + Default + AddAssign + Mul<T, Output = R>,
    {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let (lo, vals) = self.row(i);
                let mut acc = R::default();
                for (k, &a) in vals.iter().enumerate() {
                    acc += x[lo + k] * a;
                }
                acc
            })
            .collect()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).1.iter().map(|v| v.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> BandedMatrix<U> {
        BandedMatrix {
            dim: self.dim,
            hb: self.hb,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + other * s`, both with the same shape.
    pub fn axpy(&mut self, s: T, other: &BandedMatrix<T>) {
        assert_eq!((self.dim, self.hb), (other.dim, other.hb));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// LU factorization with row interchanges restricted to the band.
    pub fn lu(&self) -> Result<BandedLu<T>> {
        BandedLu::factor(self)
    }
}

impl BandedMatrix<f64> {
    pub fn identity_real(dim: usize) -> Self {
        let mut m = Self::zeros(dim, 0);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    /// `x^H A x` for a real symmetric band matrix.
    pub fn hermitian_form(&self, x: &[Complex64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let w = self.width();
        let hb = self.hb;
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row = &self.data[i * w..(i + 1) * w];
            let xi = x[i];
            acc += row[hb] * xi.norm_sqr();
            let hi = (i + hb).min(self.dim - 1);
            for j in i + 1..=hi {
                let xj = x[j];
                acc += 2.0 * row[j + hb - i] * (xi.re * xj.re + xi.im * xj.im);
            }
        }
        acc
    }

    /// `Re(y^H A x)` for a real symmetric band matrix.
    pub fn real_bilinear(&self, y: &[Complex64], x: &[Complex64]) -> f64 {
        let ax = self.matvec(x);
        y.iter().zip(&ax).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
    }

    pub fn to_complex(&self) -> BandedMatrix<Complex64> {
        self.map(|v| Complex64::new(v, 0.0))
    }
}

impl BandedMatrix<Complex64> {
    pub fn identity_complex(dim: usize) -> Self {
        let mut m = Self::zeros(dim, 0);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }
}

/// LU factors of a band matrix (LINPACK `gbfa` layout: multipliers stay in
/// place and interchanges are replayed during the solve).
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    dim: usize,
    kl: usize,
    /// Upper bandwidth of U after pivoting (`2 * kl`).
    ku: usize,
    /// Row `i` stores columns `i - kl ..= i + ku`.
    data: Vec<T>,
    pivots: Vec<usize>,
    pivoted: bool,
}

impl<T: Scalar> BandedLu<T> {
    fn factor(a: &BandedMatrix<T>) -> Result<Self> {
        let n = a.dim;
        let kl = a.hb;
        let ku = 2 * a.hb;
        let w = kl + ku + 1;
        let mut data = vec![T::zero(); n * w];
        for i in 0..n {
            let (lo, vals) = a.row(i);
            for (k, &v) in vals.iter().enumerate() {
                let j = lo + k;
                data[i * w + (j + kl - i)] = v;
            }
        }
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        let tol = scale * f64::EPSILON * 1e-3;
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        let mut pivots = vec![0usize; n];
        let mut pivoted = false;
        for k in 0..n {
            let last = (k + kl).min(n.saturating_sub(1));
            let mut p = k;
            let mut best = data[idx(k, k)].modulus();
            for i in k + 1..=last {
                let m = data[idx(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if !(best > tol) {
                return Err(Error::Singular { pivot: k });
            }
            pivots[k] = p;
            let jmax = (k + ku).min(n - 1);
            if p != k {
                pivoted = true;
                for j in k..=jmax {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let piv = data[idx(k, k)];
            for i in k + 1..=last {
                let l = data[idx(i, k)] / piv;
                data[idx(i, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=jmax {
                    let u = data[idx(k, j)];
                    data[idx(i, j)] -= l * u;
                }
            }
        }
        Ok(Self {
            dim: n,
            kl,
            ku,
            data,
            pivots,
            pivoted,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place<R: Rhs<T>>(&self, b: &mut [R]) {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let (kl, ku) = (self.kl, self.ku);
        let w = kl + ku + 1;
        let d = &self.data;
        if !self.pivoted && kl == 1 {
            // Tridiagonal fast path (no interchanges happened, so U has one
            // superdiagonal).
            for k in 0..n.saturating_sub(1) {
                let l = d[(k + 1) * w];
                b[k + 1] = b[k + 1] - b[k] * l;
            }
            b[n - 1] = b[n - 1] / d[(n - 1) * w + kl];
            for k in (0..n - 1).rev() {
                let row = k * w;
                b[k] = (b[k] - b[k + 1] * d[row + kl + 1]) / d[row + kl];
            }
            return;
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                b[i] = b[i] - bk * d[i * w + (k + kl - i)];
            }
        }
        let uw = if self.pivoted { ku } else { kl };
        for k in (0..n).rev() {
            let row = k * w;
            let mut acc = b[k];
            let hi = (k + uw).min(n - 1);
            for j in k + 1..=hi {
                acc = acc - b[j] * d[row + (j + kl - k)];
            }
            b[k] = acc / d[row + kl];
        }
    }

    pub fn solve<R: Rhs<T>>(&self, b: &[R]) -> Vec<R> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
