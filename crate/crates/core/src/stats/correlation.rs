use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Below this sample size p-values come from exhaustive permutation.
pub const EXACT_PERMUTATION_BELOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    TApprox,
    Permutation,
}

impl fmt::Display for PValueMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PValueMethod::TApprox => "t_approx",
            PValueMethod::Permutation => "permutation",
        })
    }
}

/// A coefficient with its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub p_value: f64,
    pub method: PValueMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub n: usize,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub method: PValueMethod,
}

/// Significance stars: `***` p<0.001, `**` p<0.01, `*` p<0.05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::config(format!(
            "correlation inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::domain(format!("correlation needs n >= 3, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::domain("correlation inputs must be finite"));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::domain("correlation undefined for a constant input"));
    }
    Ok(())
}

/// Ranks starting at 1; tied values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| a - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn product_moment(x: &[f64], y: &[f64]) -> f64 {
    let (xc, yc) = (centered(x), centered(y));
    let r = dot(&xc, &yc) / (dot(&xc, &xc).sqrt() * dot(&yc, &yc).sqrt());
    r.clamp(-1.0, 1.0)
}

fn t_approx_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return f64::MIN_POSITIVE;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Visits every permutation of `v[start..]` (Heap's algorithm), with
/// `v[..start]` held fixed.
fn for_each_permutation(v: &mut [f64], start: usize, mut f: impl FnMut(&[f64])) {
    let n = v.len() - start;
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            v.swap(start + j, start + i);
            f(v);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Number of the n! pairings of `x` with a permutation of `y` whose
/// |Σ x̃ỹ| reaches the observed one (x̃, ỹ centered). The observed pairing
/// is included.
pub fn permutation_extreme_count(mode: ExecMode, x: &[f64], y: &[f64]) -> (u64, u64) {
    let (xc, yc) = (centered(x), centered(y));
    let observed = dot(&xc, &yc).abs();
    let threshold = observed - 1e-12 * observed.max(1.0);
    let n = y.len();
    let counts = exec::map_range(mode, n, |first| {
        let mut v = yc.clone();
        v.swap(0, first);
        let mut hits = 0u64;
        let mut total = 0u64;
        for_each_permutation(&mut v, 1, |p| {
            total += 1;
            if dot(&xc, p).abs() >= threshold {
                hits += 1;
            }
        });
        (hits, total)
    });
    counts.into_iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn with_p(mode: ExecMode, x: &[f64], y: &[f64]) -> Correlation {
    let r = product_moment(x, y);
    let n = x.len();
    if n < EXACT_PERMUTATION_BELOW {
        let (hits, total) = permutation_extreme_count(mode, x, y);
        Correlation {
            coefficient: r,
            p_value: hits as f64 / total as f64,
            method: PValueMethod::Permutation,
        }
    } else {
        Correlation {
            coefficient: r,
            p_value: t_approx_p(r, n),
            method: PValueMethod::TApprox,
        }
    }
}

/// Pearson product-moment correlation with a two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_inputs(x, y)?;
    Ok(with_p(ExecMode::Parallel, x, y))
}

/// Spearman's ρ (Pearson on average ranks) with a two-sided p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_inputs(x, y)?;
    Ok(with_p(ExecMode::Parallel, &average_ranks(x), &average_ranks(y)))
}

/// Both coefficients for one pair of samples.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let s = spearman(x, y)?;
    let p = pearson(x, y)?;
    Ok(CorrelationResult {
        n: x.len(),
        spearman_rho: s.coefficient,
        spearman_p: s.p_value,
        pearson_r: p.coefficient,
        pearson_p: p.p_value,
        method: s.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        assert_eq!(average_ranks(&[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn hand_examples() {
        let s = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert!((s.coefficient - 1.0).abs() < 1e-10);
        let s = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((s.coefficient + 1.0).abs() < 1e-10);
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((s.coefficient - 0.8).abs() < 1e-10);

        let p = pearson(&[1.0, 2.0, 3.0, 4.0], &[5.0, 7.0, 9.0, 11.0]).unwrap();
        assert!((p.coefficient - 1.0).abs() < 1e-10);
        let p = pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap();
        assert!((p.coefficient + 1.0).abs() < 1e-10);
        // cov = 4/3·… : r = 4 / (sqrt(2)·sqrt(56/6)) after centering
        let p = pearson(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        let expected = 4.0 / (2f64.sqrt() * (8.0 + 2.0 / 3.0f64).sqrt());
        assert!((p.coefficient - expected).abs() < 1e-12);
        assert!((p.coefficient - 0.9608).abs() < 1e-4);
    }

    #[test]
    fn permutation_p_for_small_n() {
        // perfect monotone, n = 3: 2 of 6 orderings reach |rho| = 1
        let s = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(s.method, PValueMethod::Permutation);
        assert!((s.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn t_approx_for_large_n() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin() + v * 0.05).collect();
        let r = pearson(&x, &y).unwrap();
        assert_eq!(r.method, PValueMethod::TApprox);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        // exact line: p floors at the smallest positive double
        let p = pearson(&x, &x).unwrap();
        assert!(p.p_value > 0.0 && p.p_value < 1e-300);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Domain(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::Config(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Domain(_))));
        let e = spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(e.to_string().contains("correlation undefined"));
    }

    #[test]
    fn stars_convention() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn heap_visits_all_permutations() {
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(&mut v, 0, |p| {
            seen.insert(p.iter().map(|x| *x as u8).collect::<Vec<_>>());
        });
        assert_eq!(seen.len(), 24);
        let mut v = vec![9.0, 1.0, 2.0, 3.0];
        let mut n = 0;
        for_each_permutation(&mut v, 1, |p| {
            assert_eq!(p[0], 9.0);
            n += 1;
        });
        assert_eq!(n, 6);
    }
}
