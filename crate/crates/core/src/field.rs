//! Pointwise coefficient fields `(x, t) -> value`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

type RealFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type ComplexFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum RealKind {
    Const(f64),
    Fn(RealFn),
}

/// Real scalar field such as a potential.
#[derive(Clone)]
pub struct RealField {
    kind: RealKind,
    time_independent: bool,
}

impl RealField {
    pub fn constant(c: f64) -> Self {
        Self {
            kind: RealKind::Const(c),
            time_independent: true,
        }
    }

    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: RealKind::Fn(Arc::new(f)),
            time_independent: false,
        }
    }

    /// Field that ignores its time argument.
    pub fn stationary(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: RealKind::Fn(Arc::new(move |x, _| f(x))),
            time_independent: true,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match &self.kind {
            RealKind::Const(c) => *c,
            RealKind::Fn(f) => f(x, t),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.kind {
            RealKind::Const(c) => Some(c),
            RealKind::Fn(_) => None,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    /// `s * self + shift`.
    pub fn affine(&self, s: f64, shift: f64) -> Self {
        match &self.kind {
            RealKind::Const(c) => Self::constant(s * c + shift),
            RealKind::Fn(f) => {
                let f = f.clone();
                Self {
                    kind: RealKind::Fn(Arc::new(move |x, t| s * f(x, t) + shift)),
                    time_independent: self.time_independent,
                }
            }
        }
    }
}

impl fmt::Debug for RealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RealKind::Const(c) => write!(f, "RealField::Const({c})"),
            RealKind::Fn(_) => write!(f, "RealField::Fn(time_independent={})", self.time_independent),
        }
    }
}

#[derive(Clone)]
enum ComplexKind {
    Zero,
    Fn(ComplexFn),
}

/// Complex scalar field (sources, initial data, exact solutions).
#[derive(Clone)]
pub struct ComplexField {
    kind: ComplexKind,
    time_independent: bool,
}

impl ComplexField {
    pub fn zero() -> Self {
        Self {
            kind: ComplexKind::Zero,
            time_independent: true,
        }
    }

    pub fn new(f: impl Fn(f64, f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            kind: ComplexKind::Fn(Arc::new(f)),
            time_independent: false,
        }
    }

    pub fn stationary(f: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            kind: ComplexKind::Fn(Arc::new(move |x, _| f(x))),
            time_independent: true,
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::stationary(move |_| c)
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> Complex64 {
        match &self.kind {
            ComplexKind::Zero => Complex64::new(0.0, 0.0),
            ComplexKind::Fn(f) => f(x, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, ComplexKind::Zero)
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ComplexKind::Zero => write!(f, "ComplexField::Zero"),
            ComplexKind::Fn(_) => write!(f, "ComplexField::Fn(time_independent={})", self.time_independent),
        }
    }
}
