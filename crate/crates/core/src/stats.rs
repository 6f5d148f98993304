//! Small order-statistics and moment helpers shared by summaries, metrics,
//! and box plots.

use serde::{Deserialize, Serialize};

/// Five-number summary of a sample (minimum, quartiles, maximum).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between closest ranks on the sorted
/// sample (the same convention as numpy's default). `p` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Box statistics of an unsorted sample. Panics on empty input; callers
/// guard with their own domain errors.
pub fn box_stats(values: &[f64]) -> BoxStats {
    assert!(!values.is_empty(), "box stats of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value"));
    BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

pub fn mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn sample_stdev(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n > 0);
    if n == 1 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three() {
        let s = box_stats(&[15.0, 5.0, 10.0]);
        assert_eq!(s.median, 10.0);
        assert_eq!(s.min, 5.0);
        assert_eq!(s.max, 15.0);
    }

    #[test]
    fn single_value_degenerates() {
        let s = box_stats(&[7.0]);
        assert_eq!(s.min, 7.0);
        assert_eq!(s.median, 7.0);
        assert_eq!(s.max, 7.0);
        assert_eq!(s.q1, 7.0);
        assert_eq!(s.q3, 7.0);
    }

    #[test]
    fn seven_value_quartiles_match_sort_and_index_oracle() {
        // Oracle: sorted x, position p*(n-1), linear interpolation by hand.
        // x = [1, 2, 4, 7, 11, 16, 22], n = 7.
        // q1: pos = 1.5 -> 2 + 0.5*(4-2) = 3
        // med: pos = 3.0 -> 7
        // q3: pos = 4.5 -> 11 + 0.5*(16-11) = 13.5
        let s = box_stats(&[22.0, 1.0, 7.0, 2.0, 16.0, 4.0, 11.0]);
        assert_eq!(s.q1, 3.0);
        assert_eq!(s.median, 7.0);
        assert_eq!(s.q3, 13.5);
    }

    #[test]
    fn stdev_conventions() {
        assert_eq!(sample_stdev(&[4.0]), 0.0);
        assert_eq!(sample_stdev(&[3.0, 3.0, 3.0]), 0.0);
        // [6, 8]: mean 7, ss = 2, / (n-1) = 2, sqrt = 1.41..
        assert!((sample_stdev(&[6.0, 8.0]) - 2.0_f64.sqrt()).abs() < 1e-12);
    }
}
