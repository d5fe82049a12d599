/// Gauss–Legendre rule mapped to the reference interval `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `q`-point rule, exact for polynomials of degree `2q - 1`.
    pub fn gauss_legendre(q: usize) -> Self {
        assert!(q >= 1, "need at least one quadrature point");
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        let n = q as f64;
        for i in 0..(q + 1) / 2 {
            // Chebyshev-like initial guess, then Newton on P_q.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(q, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // Map [-1, 1] -> [0, 1].
            nodes[i] = 0.5 * (1.0 - x);
            nodes[q - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[q - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights on `[x0, x1]`.
    pub fn mapped(&self, x0: f64, x1: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = x1 - x0;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&s, &w)| (x0 + h * s, h * w))
    }
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for q in 1..=12 {
            let r = QuadratureRule::gauss_legendre(q);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "q={q} sum={s}");
        }
    }

    #[test]
    fn exact_up_to_degree_2q_minus_1() {
        for q in 1..=10 {
            let r = QuadratureRule::gauss_legendre(q);
            for deg in 0..(2 * q) {
                let approx: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((approx - exact).abs() < 1e-14, "q={q} deg={deg}");
            }
        }
    }

    #[test]
    fn nodes_are_sorted_and_interior() {
        let r = QuadratureRule::gauss_legendre(7);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(r.nodes.iter().all(|&x| x > 0.0 && x < 1.0));
    }
}
