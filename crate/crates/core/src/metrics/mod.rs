//! Run statistics and reporting.

mod records;
mod report;
mod svg;

pub use records::{read_rounds_csv, read_selected_evals_csv, write_rounds_csv, write_selected_evals_csv, LocalEval, RoundRecord};
pub use report::{emit_report, summarize, ReportRun, SummaryRow};
pub use svg::{line_chart_svg, Series};

use crate::error::{Error, Result};

/// Accuracy threshold above which a selected client model counts as a success.
pub const SUCCESS_THRESHOLD: f64 = 0.2;

fn population_std(values: &[f64]) -> f64 {
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean over `(trial, round)` groups of the population standard deviation of
/// the per-client values inside each group. Empty groups (rounds that
/// selected nobody) are skipped.
pub fn sigma_tilde(groups: &[Vec<f64>]) -> Result<f64> {
    let stds: Vec<f64> = groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| population_std(g))
        .collect();
    if stds.is_empty() {
        return Err(Error::invalid("sigma_tilde needs at least one non-empty group"));
    }
    Ok(stds.iter().sum::<f64>() / stds.len() as f64)
}

/// Fraction of accuracies strictly above `threshold`.
pub fn success_rate(accuracies: &[f64], threshold: f64) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::invalid("success_rate needs at least one accuracy"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold must lie in (0, 1)"));
    }
    let hits = accuracies.iter().filter(|&&a| a > threshold).count();
    Ok(hits as f64 / accuracies.len() as f64)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean squared difference between proportions and success rates.
pub fn mse_proportions(p: &[f64], sr: &[f64]) -> Result<f64> {
    if p.len() != sr.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: sr.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::invalid("mse needs at least one pair"));
    }
    Ok(p.iter().zip(sr).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigma_tilde_examples() {
        assert_eq!(sigma_tilde(&[vec![0.4; 5], vec![0.7; 3]]).unwrap(), 0.0);
        assert_eq!(sigma_tilde(&[vec![0.0, 2.0]]).unwrap(), 1.0);
        // population sigma 1 and 3
        assert_eq!(sigma_tilde(&[vec![0.0, 2.0], vec![1.0, 7.0]]).unwrap(), 2.0);
        assert_eq!(sigma_tilde(&[vec![0.0, 2.0], vec![]]).unwrap(), 1.0);
        assert!(sigma_tilde(&[]).is_err());
        assert!(sigma_tilde(&[vec![]]).is_err());
    }

    #[test]
    fn success_rate_examples() {
        assert_eq!(success_rate(&[0.9; 4], 0.2).unwrap(), 1.0);
        assert_eq!(success_rate(&[0.1, 0.3], 0.2).unwrap(), 0.5);
        assert_eq!(success_rate(&[0.2], 0.2).unwrap(), 0.0);
        assert!(success_rate(&[], 0.2).is_err());
        assert!(success_rate(&[0.5], 1.0).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 4]), Err(Error::ZeroVariance)));
        assert!(pearson(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_proportions(&[0.1, 0.5], &[0.1, 0.5]).unwrap(), 0.0);
        assert!((mse_proportions(&[0.5], &[0.7]).unwrap() - 0.04).abs() < 1e-15);
        assert!(mse_proportions(&[0.5], &[]).is_err());
    }

    proptest! {
        #[test]
        fn sigma_tilde_non_negative(groups in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 1..6), 1..6)) {
            let s = sigma_tilde(&groups).unwrap();
            prop_assert!(s >= 0.0);
            let constant = groups.iter().all(|g| g.iter().all(|&v| v == g[0]));
            prop_assert_eq!(s == 0.0, constant);
        }

        #[test]
        fn success_rate_monotone(accs in proptest::collection::vec(0.0f64..1.0, 1..30), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(success_rate(&accs, hi).unwrap() <= success_rate(&accs, lo).unwrap());
        }

        #[test]
        fn pearson_affine_invariant(
            pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20),
            scale in 0.1f64..10.0, shift in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&x, &y) {
                let y2: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
                prop_assert!((pearson(&x, &y2).unwrap() - r).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
