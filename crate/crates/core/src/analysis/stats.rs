use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::{lexicon_features, AnalysisError, Lexicon};

/// Two-tailed significance level.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Constant samples get their value and an exact zero variance; otherwise
/// the mean gets one correction pass against summation round-off.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let m0 = xs.iter().sum::<f64>() / n;
    let m = m0 + xs.iter().map(|x| x - m0).sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-tailed p-value of Student's t: `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTest, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::DegenerateSamples);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    if sa + sb == 0.0 {
        return Err(AnalysisError::DegenerateSamples);
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2)
        / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Ok(TTest {
        t,
        df,
        p: t_two_tailed(t, df),
    })
}

/// Haldane–Anscombe corrected log odds ratio of presence in the first group
/// against the second; positive means over-represented in the first.
pub fn signed_log_odds(first: (usize, usize), second: (usize, usize)) -> Result<f64, AnalysisError> {
    let log_odds = |(present, total): (usize, usize)| {
        if total == 0 || present > total {
            return Err(AnalysisError::InvalidCounts { present, total });
        }
        let p = present as f64 + 0.5;
        let q = (total - present) as f64 + 0.5;
        Ok((p / q).ln())
    };
    Ok(log_odds(first)? - log_odds(second)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub feature: String,
    pub mean_misinfo: f64,
    pub mean_correct: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub signed_log_odds: f64,
    pub significant: bool,
}

/// Zero-variance features cannot be tested: equal means give `t = 0, p = 1`,
/// different means `t = ±inf, p = 0`, with `df = n_a + n_b - 2`.
fn ttest_or_constant(a: &[f64], b: &[f64]) -> TTest {
    welch_ttest(a, b).unwrap_or_else(|_| {
        let diff = mean_var(a).0 - mean_var(b).0;
        let df = (a.len() + b.len() - 2) as f64;
        if diff == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        }
    })
}

/// Per lexicon feature: Welch t-test on per-tweet values and signed log odds
/// on presence (`value > 0`). Sorted by descending `|signed_log_odds|`, then
/// feature name.
pub fn compare_groups<S: AsRef<str>>(
    misinfo: &[Vec<S>],
    correct: &[Vec<S>],
    lexicons: &[Lexicon],
) -> Result<Vec<GroupComparison>, AnalysisError> {
    if misinfo.len() < 2 || correct.len() < 2 {
        return Err(AnalysisError::GroupTooSmall {
            misinfo: misinfo.len(),
            correct: correct.len(),
        });
    }
    let fm: Vec<_> = misinfo.iter().map(|t| lexicon_features(t, lexicons)).collect();
    let fc: Vec<_> = correct.iter().map(|t| lexicon_features(t, lexicons)).collect();
    let mut out = Vec::new();
    for name in lexicons.iter().flat_map(Lexicon::feature_names) {
        let a: Vec<f64> = fm.iter().map(|f| f[&name]).collect();
        let b: Vec<f64> = fc.iter().map(|f| f[&name]).collect();
        let test = ttest_or_constant(&a, &b);
        let present = |xs: &[f64]| xs.iter().filter(|&&x| x > 0.0).count();
        let slo = signed_log_odds((present(&a), a.len()), (present(&b), b.len()))?;
        out.push(GroupComparison {
            mean_misinfo: mean_var(&a).0,
            mean_correct: mean_var(&b).0,
            t_statistic: test.t,
            degrees_of_freedom: test.df,
            p_value: test.p,
            signed_log_odds: slo,
            significant: test.p < SIGNIFICANCE,
            feature: name,
        });
    }
    out.sort_by(|x, y| {
        y.signed_log_odds
            .abs()
            .partial_cmp(&x.signed_log_odds.abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.feature.cmp(&y.feature))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welch_reference() {
        let r = welch_ttest(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((r.t + 3.674).abs() < 1e-3);
        assert!((r.df - 4.0).abs() < 1e-9);
        assert!((r.p - 0.0213).abs() < 5e-4);
        let same = welch_ttest(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));
        assert_eq!(welch_ttest(&[1.0], &[1.0, 2.0]), Err(AnalysisError::DegenerateSamples));
        assert_eq!(welch_ttest(&[1.0, 1.0], &[2.0, 2.0]), Err(AnalysisError::DegenerateSamples));
    }

    #[test]
    fn log_odds_reference() {
        let v = signed_log_odds((30, 100), (10, 100)).unwrap();
        assert!((v - 1.316_088_567_337_546).abs() < 1e-12);
        assert!((signed_log_odds((5, 10), (0, 10)).unwrap() - 21f64.ln()).abs() < 1e-12);
        assert_eq!(signed_log_odds((7, 20), (7, 20)).unwrap(), 0.0);
        assert!(matches!(signed_log_odds((3, 2), (1, 2)), Err(AnalysisError::InvalidCounts { .. })));
        assert!(matches!(signed_log_odds((0, 0), (1, 2)), Err(AnalysisError::InvalidCounts { .. })));
    }

    fn lex() -> Lexicon {
        Lexicon::parse("l", "trust\tcure\nfear\tdeath\n").unwrap()
    }

    #[test]
    fn constant_groups_are_not_significant() {
        // 23 * 0.2 summed does not divide back to exactly 0.2
        let mis = vec![vec!["cancer", "a", "b", "c", "d"]; 45];
        let cor = vec![vec!["cancer", "e", "f", "g", "h"]; 23];
        let lex = Lexicon::parse_categorical("lex", "negative\tcancer\n").unwrap();
        let rows = compare_groups(&mis, &cor, &[lex]).unwrap();
        assert_eq!(rows[0].mean_correct, 0.2);
        assert_eq!((rows[0].t_statistic, rows[0].p_value), (0.0, 1.0));
        assert!(!rows[0].significant);
    }

    #[test]
    fn group_comparison() {
        let mis = vec![vec!["cure", "now"], vec!["miracle", "cure"], vec!["cure", "it"], vec!["cure"]];
        let cor = vec![vec!["study", "shows"], vec!["death", "rate"], vec!["trial"], vec!["data"]];
        let rows = compare_groups(&mis, &cor, &[lex()]).unwrap();
        let trust = rows.iter().find(|r| r.feature == "l:trust").unwrap();
        assert!(trust.significant && trust.signed_log_odds > 0.0);
        assert_eq!(rows[0].feature, "l:trust");
        let fear = rows.iter().find(|r| r.feature == "l:fear").unwrap();
        assert!(!fear.significant && fear.signed_log_odds < 0.0);

        let same = compare_groups(&mis, &mis, &[lex()]).unwrap();
        assert!(same.iter().all(|r| !r.significant && r.signed_log_odds == 0.0));

        let swapped = compare_groups(&cor, &mis, &[lex()]).unwrap();
        for (a, b) in rows.iter().zip(&swapped) {
            assert_eq!(a.feature, b.feature);
            assert_eq!(a.signed_log_odds, -b.signed_log_odds);
        }
        assert!(matches!(
            compare_groups(&mis[..1], &cor, &[lex()]),
            Err(AnalysisError::GroupTooSmall { .. })
        ));
    }

    proptest! {
        #[test]
        fn log_odds_antisymmetric(a in 0usize..50, ea in 0usize..50, b in 0usize..50, eb in 0usize..50) {
            let g1 = (a, a + ea + 1);
            let g2 = (b, b + eb + 1);
            prop_assert_eq!(signed_log_odds(g1, g2).unwrap(), -signed_log_odds(g2, g1).unwrap());
        }

        #[test]
        fn welch_antisymmetric(a in proptest::collection::vec(-10.0f64..10.0, 2..8), b in proptest::collection::vec(-10.0f64..10.0, 2..8)) {
            let x = welch_ttest(&a, &b).unwrap();
            let y = welch_ttest(&b, &a).unwrap();
            prop_assert_eq!(x.t, -y.t);
            prop_assert_eq!(x.p, y.p);
            prop_assert!((0.0..=1.0).contains(&x.p));
        }
    }
}
