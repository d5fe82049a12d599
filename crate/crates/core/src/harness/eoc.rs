//! Experimental orders of convergence.

use crate::error::{Error, Result};

/// `log(E_l / E_{l+1}) / log(N_{l+1} / N_l)` for consecutive pairs, where
/// `N` is the element count or the inverse time step.
pub fn eoc(values: &[f64], params: &[f64]) -> Result<Vec<f64>> {
    if values.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "EOC needs matching lengths, got {} values and {} parameters",
            values.len(),
            params.len()
        )));
    }
    if let Some(&v) = values.iter().chain(params).find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositive(v));
    }
    Ok(values
        .windows(2)
        .zip(params.windows(2))
        .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] / n[0]).ln())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let r = eoc(&[5.0445e-4, 1.2609e-4], &[640.0, 1280.0]).unwrap();
        assert!((r[0] - 2.0003).abs() < 5e-5);
        let r = eoc(&[1.3289e-2, 1.7796e-3], &[640.0, 1280.0]).unwrap();
        assert!((r[0] - 2.9006).abs() < 5e-5);
    }

    #[test]
    fn equal_values_give_zero() {
        assert_eq!(eoc(&[1.0, 1.0], &[10.0, 20.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn nonpositive_is_rejected() {
        assert!(matches!(eoc(&[1.0, 0.0], &[1.0, 2.0]), Err(Error::NonPositive(_))));
    }
}
