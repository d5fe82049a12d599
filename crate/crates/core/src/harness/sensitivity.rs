//! ε-sensitivity sweeps on the focusing problem with constant potential.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::EstimatorConfig;
use crate::harness::sweep::{run_table, EocTable};
use crate::problems::catalog_with_eps;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// `k = h` refined together.
    Coupled,
    /// Fixed step, mesh refined.
    Space,
    /// Fixed mesh, step refined.
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySweep {
    pub name: String,
    pub eps: f64,
    pub degree: usize,
    pub kind: SweepKind,
    /// `(M, k⁻¹)` pairs.
    pub rows: Vec<(usize, f64)>,
}

/// Domain length of the sensitivity problem, `(−1, 2)`.
const LEN: f64 = 3.0;

fn trim(rows: Vec<(usize, f64)>, full: bool, drop: usize) -> Vec<(usize, f64)> {
    let n = if full { rows.len() } else { rows.len().saturating_sub(drop) };
    rows.into_iter().take(n).collect()
}

/// ε = 0.005, linear splines, `k = h` from 1e-2 down to 1e-5. Every row
/// takes the sine-transform path, so desk scale keeps them all.
pub fn coupled_sweep() -> SensitivitySweep {
    let hs = [1e-2, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5];
    SensitivitySweep {
        name: "coupled".into(),
        eps: 0.005,
        degree: 1,
        kind: SweepKind::Coupled,
        rows: hs.iter().map(|h| ((LEN / h).round() as usize, 1.0 / h)).collect(),
    }
}

/// ε = 0.001, cubic splines, `k = 5e-5`, `M` from 600 to 9000.
pub fn space_sweep(full: bool) -> SensitivitySweep {
    let ms = [600, 1500, 3000, 4500, 6000, 7500, 9000];
    SensitivitySweep {
        name: "space".into(),
        eps: 0.001,
        degree: 3,
        kind: SweepKind::Space,
        rows: trim(ms.iter().map(|&m| (m, 2e4)).collect(), full, 2),
    }
}

/// ε = 0.001, cubic splines, `M = 6000`, `k` from 1e-3 to 2.5e-6.
pub fn time_sweep(full: bool) -> SensitivitySweep {
    let ks = [1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 2.5e-6];
    SensitivitySweep {
        name: "time".into(),
        eps: 0.001,
        degree: 3,
        kind: SweepKind::Time,
        rows: trim(ks.iter().map(|&k| (6000, 1.0 / k)).collect(), full, 2),
    }
}

pub fn run_sensitivity(sweep: &SensitivitySweep, cfg: EstimatorConfig) -> Result<EocTable> {
    let prob = catalog_with_eps("sensitivity", Some(sweep.eps))?;
    run_table(&prob, sweep.degree, &sweep.rows, None, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupled_rows_have_k_equal_h() {
        for (m, kinv) in coupled_sweep().rows {
            assert!((LEN / m as f64 * kinv - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn desk_scale_drops_the_finest_rows() {
        assert_eq!(space_sweep(false).rows.len(), 5);
        assert_eq!(time_sweep(true).rows.len(), 7);
        assert!((time_sweep(false).rows.last().unwrap().1 - 1e5).abs() < 1e-6);
    }

    #[test]
    fn coarse_coupled_rows_match_target_values() {
        let mut s = coupled_sweep();
        s.rows.truncate(3);
        let t = run_sensitivity(&s, EstimatorConfig::default()).unwrap();
        let expect = [[5.9846e-1, 5.5855], [5.1220e-3, 1.8122e-1], [1.2789e-3, 5.7015e-2]];
        for (row, [s0, t0]) in t.rows.iter().zip(expect) {
            assert!((row.totals.e_s0 / s0 - 1.0).abs() < 0.05, "{}", row.totals.e_s0);
            assert!((row.totals.e_t0 / t0 - 1.0).abs() < 0.05, "{}", row.totals.e_t0);
        }
    }
}
