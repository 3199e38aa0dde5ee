//! Two-sided conventional and mid p-values of exact tests, and the null
//! distribution of each p-value flavor.
//!
//! For an observation `x0` with null mass function `f`, let `l` be the mass
//! of outcomes strictly less probable than `x0` and `e` the mass of outcomes
//! exactly as probable. The conventional p-value is `l + e` and the mid
//! p-value is `l + e / 2`. Ties are decided on the integer numerators of the
//! exact null masses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dist::{ratio_to_f64, DiscreteDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Conventional,
    Mid,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Conventional => "conventional",
            Flavor::Mid => "mid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSidedPValues {
    /// Mass of outcomes strictly less probable than the observation.
    pub l: f64,
    /// Mass of outcomes exactly as probable as the observation.
    pub e: f64,
    pub p_conventional: f64,
    pub p_mid: f64,
}

/// Attainable values of one p-value and its null CDF at those values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueSupport {
    flavor: Flavor,
    points: Vec<f64>,
    cdf: Vec<f64>,
}

impl PValueSupport {
    /// Validates and builds a support. Conventional supports must satisfy
    /// `cdf == points`; mid supports must satisfy `cdf >= points`.
    pub fn new(flavor: Flavor, points: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidSupport(msg));
        if points.is_empty() {
            return bad("empty support".into());
        }
        if points.len() != cdf.len() {
            return bad(format!(
                "{} points but {} cdf values",
                points.len(),
                cdf.len()
            ));
        }
        if points.iter().chain(&cdf).any(|v| !(0.0..=1.0).contains(v)) {
            return bad("values must lie in [0, 1]".into());
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return bad("points must be strictly ascending".into());
        }
        if cdf.windows(2).any(|w| w[0] > w[1]) {
            return bad("cdf values must be nondecreasing".into());
        }
        if *cdf.last().unwrap() != 1.0 {
            return bad("last cdf value must be 1".into());
        }
        match flavor {
            Flavor::Conventional if points != cdf => {
                return bad("conventional supports need cdf equal to points".into())
            }
            Flavor::Mid if points.iter().zip(&cdf).any(|(p, c)| c < p) => {
                return bad("mid supports need cdf at least the points".into())
            }
            _ => {}
        }
        Ok(Self {
            flavor,
            points,
            cdf,
        })
    }

    /// Support of a p-value that is uniform on (0, 1) at a finite set of
    /// checkpoints, e.g. to run BH+ on continuous p-values.
    pub fn identity(points: Vec<f64>) -> Result<Self> {
        let mut points = points;
        if points.last() != Some(&1.0) {
            points.push(1.0);
        }
        Self::new(Flavor::Conventional, points.clone(), points)
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Null CDF evaluated at `t` (right-continuous step function).
    pub fn cdf_at(&self, t: f64) -> f64 {
        match self.points.partition_point(|&p| p <= t) {
            0 => 0.0,
            i => self.cdf[i - 1],
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.points.binary_search_by(|q| q.total_cmp(&p)).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TieClass {
    l: f64,
    e: f64,
    p: f64,
    q: f64,
}

/// Precomputed p-values for every outcome of an exact null, with both
/// flavors' null supports. Building one table and looking observations up
/// in it is how repeated tests sharing a margin stay cheap.
#[derive(Debug, Clone)]
pub struct NullTable {
    outcomes: Vec<u64>,
    class_of: Vec<usize>,
    classes: Vec<TieClass>,
    conventional: PValueSupport,
    mid: PValueSupport,
}

impl NullTable {
    pub fn new(dist: &DiscreteDistribution) -> Result<Self> {
        let (numerators, denominator) = dist.exact().ok_or(Error::InexactNull)?;

        // Tie classes in ascending order of probability. The conventional
        // p-value of a class is the total mass of all classes up to and
        // including it.
        let mut by_mass: BTreeMap<&BigUint, usize> = BTreeMap::new();
        for w in numerators {
            *by_mass.entry(w).or_default() += 1;
        }
        let two_den = denominator * 2u32;
        let mut below = BigUint::zero();
        let mut classes = Vec::with_capacity(by_mass.len());
        let mut rank = BTreeMap::new();
        for (j, (&w, &count)) in by_mass.iter().enumerate() {
            let tie = w * count;
            let upto = &below + &tie;
            let mid = &below * 2u32 + &tie;
            classes.push(TieClass {
                l: ratio_to_f64(&below, denominator),
                e: ratio_to_f64(&tie, denominator),
                p: ratio_to_f64(&upto, denominator),
                q: ratio_to_f64(&mid, &two_den),
            });
            rank.insert(w, j);
            below = upto;
        }
        let class_of = numerators.iter().map(|w| rank[w]).collect();

        let conventional = merge_support(Flavor::Conventional, classes.iter().map(|c| (c.p, c.p)))?;
        let mid = merge_support(Flavor::Mid, classes.iter().map(|c| (c.q, c.p)))?;
        Ok(Self {
            outcomes: dist.support().to_vec(),
            class_of,
            classes,
            conventional,
            mid,
        })
    }

    /// Binomial test null for total count `total`.
    pub fn binomial_test(total: u64) -> Self {
        Self::new(&DiscreteDistribution::binomial_null(total)).expect("binomial null is exact")
    }

    /// Fisher exact test null for group sizes `n1`, `n2` and margin `m_total`.
    pub fn fisher_test(n1: u64, n2: u64, m_total: u64) -> Result<Self> {
        Self::new(&DiscreteDistribution::hypergeometric_null(n1, n2, m_total)?)
    }

    fn class(&self, x0: u64) -> Result<&TieClass> {
        let i = self
            .outcomes
            .binary_search(&x0)
            .map_err(|_| Error::OutcomeOutsideSupport(x0))?;
        Ok(&self.classes[self.class_of[i]])
    }

    pub fn two_sided(&self, x0: u64) -> Result<TwoSidedPValues> {
        let c = self.class(x0)?;
        Ok(TwoSidedPValues {
            l: c.l,
            e: c.e,
            p_conventional: c.p,
            p_mid: c.q,
        })
    }

    pub fn pvalue(&self, x0: u64, flavor: Flavor) -> Result<f64> {
        let c = self.class(x0)?;
        Ok(match flavor {
            Flavor::Conventional => c.p,
            Flavor::Mid => c.q,
        })
    }

    pub fn support(&self, flavor: Flavor) -> &PValueSupport {
        match flavor {
            Flavor::Conventional => &self.conventional,
            Flavor::Mid => &self.mid,
        }
    }

    pub fn outcomes(&self) -> &[u64] {
        &self.outcomes
    }
}

/// Identifies the exact null of one test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NullKey {
    Binomial { total: u64 },
    Hypergeometric { n1: u64, n2: u64, m_total: u64 },
}

/// Thread-safe memo of null tables keyed by test margins.
#[derive(Debug, Default)]
pub struct NullTableCache {
    tables: Mutex<HashMap<NullKey, Arc<NullTable>>>,
}

impl NullTableCache {
    pub fn get(&self, key: NullKey) -> Result<Arc<NullTable>> {
        if let Some(t) = self.tables.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(match key {
            NullKey::Binomial { total } => NullTable::binomial_test(total),
            NullKey::Hypergeometric { n1, n2, m_total } => NullTable::fisher_test(n1, n2, m_total)?,
        });
        let mut tables = self.tables.lock().unwrap();
        Ok(Arc::clone(tables.entry(key).or_insert(table)))
    }

    pub fn len(&self) -> usize {
        self.tables.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds a support from `(point, cdf)` pairs in ascending order, folding
/// distinct rationals that round to the same float into one point.
fn merge_support(flavor: Flavor, pairs: impl Iterator<Item = (f64, f64)>) -> Result<PValueSupport> {
    let mut points: Vec<f64> = Vec::new();
    let mut cdf: Vec<f64> = Vec::new();
    for (p, c) in pairs {
        if points.last() == Some(&p) {
            *cdf.last_mut().unwrap() = c;
        } else {
            points.push(p);
            cdf.push(c);
        }
    }
    PValueSupport::new(flavor, points, cdf)
}

/// Two-sided p-values of `x0` under `dist`.
pub fn two_sided(dist: &DiscreteDistribution, x0: u64) -> Result<TwoSidedPValues> {
    NullTable::new(dist)?.two_sided(x0)
}

/// Null distribution of the chosen p-value flavor under `dist`.
pub fn null_support(dist: &DiscreteDistribution, flavor: Flavor) -> Result<PValueSupport> {
    Ok(NullTable::new(dist)?.support(flavor).clone())
}

/// Binomial test of two Poisson counts: `c1` out of `c1 + c2` trials under
/// success probability 0.5.
pub fn bt_pvalues(c1: u64, c2: u64, flavor: Flavor) -> (f64, PValueSupport) {
    let table = NullTable::binomial_test(c1 + c2);
    let p = table.pvalue(c1, flavor).expect("c1 lies in 0..=c1+c2");
    (p, table.support(flavor).clone())
}

/// Fisher's exact test of `c1` successes out of `n1` against `c2` out of `n2`.
pub fn fet_pvalues(
    c1: u64,
    c2: u64,
    n1: u64,
    n2: u64,
    flavor: Flavor,
) -> Result<(f64, PValueSupport)> {
    check_count(c1, n1)?;
    check_count(c2, n2)?;
    let table = NullTable::fisher_test(n1, n2, c1 + c2)?;
    let p = table.pvalue(c1, flavor)?;
    Ok((p, table.support(flavor).clone()))
}

pub(crate) fn check_count(count: u64, trials: u64) -> Result<()> {
    if count > trials {
        Err(Error::CountExceedsTrials { count, trials })
    } else {
        Ok(())
    }
}
