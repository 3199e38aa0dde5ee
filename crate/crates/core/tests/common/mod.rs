//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use bhplus_core::pvalue::{Flavor, NullTable};
use bhplus_core::stepup::bh_plus;
use bhplus_core::PValueSupport;
use rand::Rng;

/// Law of one p-value on finitely many points.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    pub flavor: Flavor,
    pub points: Vec<f64>,
    /// Null CDF at each point; the last value is 1.
    pub cdf: Vec<f64>,
    /// Probability of each point under the law (may differ from the null
    /// CDF increments for alternatives).
    pub probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn support(&self) -> PValueSupport {
        PValueSupport::new(self.flavor, self.points.clone(), self.cdf.clone()).unwrap()
    }

    /// Same points and null CDF, different outcome probabilities with extra
    /// weight on the smallest point.
    pub fn reweighted<R: Rng>(&self, rng: &mut R) -> Self {
        let mut w: Vec<f64> = self
            .points
            .iter()
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        w[0] *= 10.0;
        let total: f64 = w.iter().sum();
        Self {
            probs: w.iter().map(|x| x / total).collect(),
            ..self.clone()
        }
    }
}

fn increments(cdf: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cdf.iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}

/// A random p-value law with at most `max_points` support points, skewed
/// towards small p-values so that some ranks are feasible. Half the laws
/// are super-uniform (CDF equal to the points), half sub-uniform (CDF at
/// least the points).
pub fn random_discrete_law<R: Rng>(rng: &mut R, max_points: usize) -> DiscreteLaw {
    let k = rng.random_range(1..=max_points);
    let mut points: Vec<f64> = (0..k)
        .map(|_| rng.random_range(0.0f64..1.0).powi(3).max(1e-6))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let flavor = if rng.random_bool(0.5) {
        Flavor::Conventional
    } else {
        Flavor::Mid
    };
    let cdf: Vec<f64> = match flavor {
        Flavor::Conventional => {
            *points.last_mut().unwrap() = 1.0;
            points.dedup();
            points.clone()
        }
        Flavor::Mid => {
            let mut prev = 0.0f64;
            let mut cdf: Vec<f64> = points
                .iter()
                .map(|&p| {
                    let lo = prev.max(p);
                    prev = lo + (1.0 - lo) * rng.random_range(0.0f64..1.0).powi(3);
                    prev
                })
                .collect();
            *cdf.last_mut().unwrap() = 1.0;
            cdf
        }
    };
    let probs = increments(&cdf);
    DiscreteLaw {
        flavor,
        points,
        cdf,
        probs,
    }
}

/// Null law of a small Binomial or Fisher exact test with at most
/// `max_points` attainable p-values, in either flavor.
pub fn small_exact_test_law<R: Rng>(rng: &mut R, max_points: usize) -> DiscreteLaw {
    loop {
        let table = if rng.random_bool(0.5) {
            NullTable::binomial_test(rng.random_range(0..=7))
        } else {
            let (n1, n2) = (rng.random_range(1..=6), rng.random_range(1..=6));
            NullTable::fisher_test(n1, n2, rng.random_range(0..=n1 + n2)).unwrap()
        };
        let flavor = if rng.random_bool(0.5) {
            Flavor::Conventional
        } else {
            Flavor::Mid
        };
        let s = table.support(flavor);
        if s.len() <= max_points {
            return DiscreteLaw {
                flavor,
                points: s.points().to_vec(),
                cdf: s.cdf_values().to_vec(),
                probs: increments(s.cdf_values()),
            };
        }
    }
}

/// Exact FDR of BH+ by enumerating every joint outcome of independent
/// p-values. Each entry is the null law and, for false nulls, the law the
/// p-value actually follows.
pub fn exact_fdr(laws: &[(DiscreteLaw, Option<DiscreteLaw>)], alpha: f64) -> f64 {
    let supports: Vec<PValueSupport> = laws.iter().map(|(null, _)| null.support()).collect();
    let actual: Vec<&DiscreteLaw> = laws.iter().map(|(n, a)| a.as_ref().unwrap_or(n)).collect();
    let m = laws.len();
    let mut idx = vec![0usize; m];
    let mut fdr = 0.0;
    loop {
        let prob: f64 = (0..m).map(|i| actual[i].probs[idx[i]]).product();
        let pvalues: Vec<f64> = (0..m).map(|i| actual[i].points[idx[i]]).collect();
        let r = bh_plus(&pvalues, &supports, alpha).unwrap();
        let false_rej = r.rejected.iter().filter(|&&i| laws[i].1.is_none()).count();
        fdr += prob * false_rej as f64 / r.rejection_count.max(1) as f64;

        let mut j = 0;
        loop {
            if j == m {
                return fdr;
            }
            idx[j] += 1;
            if idx[j] < actual[j].points.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Knuth's multiplication method; fine for the small means used in tests.
pub fn poisson_draw<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    let limit = (-lambda).exp();
    let mut k = 0;
    let mut prod: f64 = rng.random();
    while prod > limit {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}
