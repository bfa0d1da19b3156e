use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
///
/// `Ok(None)` when either input is constant, where the coefficient is
/// undefined.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("spearman correlation needs at least two values"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in spearman input".into()));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// Two-sided interval `±z(level)/sqrt(n-1)` of the Spearman coefficient
/// under the null hypothesis of zero correlation.
pub fn spearman_null_ci(n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 10 {
        return Err(Error::invalid("null interval needs n >= 10"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("confidence level must lie in (0, 1)"));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z / ((n - 1) as f64).sqrt();
    Ok((-half, half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rank by counting: rank(v) = #{u < v} + (#{u == v} + 1) / 2.
    fn brute_ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|v| {
                let less = values.iter().filter(|u| *u < v).count() as f64;
                let equal = values.iter().filter(|u| *u == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (brute_ranks(a), brute_ranks(b));
        let n = a.len() as f64;
        let ma = ra.iter().sum::<f64>() / n;
        let mb = rb.iter().sum::<f64>() / n;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn basic_values() {
        let a = [1.0, 5.0, 2.0, 8.0];
        assert_eq!(spearman(&a, &a).unwrap(), Some(1.0));
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(spearman(&a, &neg).unwrap(), Some(-1.0));
        assert_eq!(spearman(&a, &[3.0; 4]).unwrap(), None);
        assert!(spearman(&a, &a[..3]).is_err());
    }

    #[test]
    fn tied_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        let a = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 0.5];
        let b = [4.0, 1.0, 1.0, 2.0, 7.0, 7.0, 7.0];
        let got = spearman(&a, &b).unwrap().unwrap();
        assert!((got - brute_spearman(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn null_interval() {
        let (lo, hi) = spearman_null_ci(500, 0.95).unwrap();
        assert!((hi - 0.0877).abs() < 0.001);
        assert_eq!(lo, -hi);
        let (_, wider) = spearman_null_ci(100, 0.95).unwrap();
        assert!(wider > hi);
        assert!(spearman_null_ci(9, 0.95).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force_with_ties(
            a in prop::collection::vec(0i32..6, 2..30),
            seed in 0u64..100,
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| ((i as u64 * 7 + seed) % 5) as f64 - v).collect();
            match spearman(&a, &b).unwrap() {
                Some(r) => prop_assert!((r - brute_spearman(&a, &b)).abs() < 1e-12),
                None => prop_assert!(brute_spearman(&a, &b).is_nan()),
            }
        }

        #[test]
        fn invariant_under_increasing_transform(
            a in prop::collection::hash_set(-1000i32..1000, 3..40),
            shift in -3.0f64..3.0,
        ) {
            let a: Vec<f64> = a.into_iter().map(|v| f64::from(v) / 10.0).collect();
            let b: Vec<f64> = a.iter().map(|v| (v * 1.3 + shift).sin()).collect();
            let t: Vec<f64> = a.iter().map(|v| (v / 50.0).exp() * 3.0 + shift).collect();
            let r1 = spearman(&a, &b).unwrap();
            let r2 = spearman(&t, &b).unwrap();
            prop_assert_eq!(r1.is_some(), r2.is_some());
            if let (Some(x), Some(y)) = (r1, r2) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&x));
            }
        }
    }
}
