//! Discrete null distributions with exact rational masses, plus the
//! floating-point distributions used to generate simulated counts.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};

/// Upper-tail mass below which a Poisson table is truncated.
pub const POISSON_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistKind {
    Binomial { theta: f64, n: u64 },
    Hypergeometric { n1: u64, n2: u64, m_total: u64 },
    Poisson { lambda: f64 },
}

/// Probability masses attached to the support points.
#[derive(Debug, Clone, PartialEq)]
pub enum Masses {
    /// `numerators[i] / denominator`, all numerators positive.
    Exact {
        numerators: Vec<BigUint>,
        denominator: BigUint,
    },
    Float(Vec<f64>),
}

/// A finite discrete distribution on nonnegative integer outcomes.
///
/// Masses are exact rationals for the test nulls (Binomial(0.5, n) and the
/// central hypergeometric) so that tie classes of equal probability can be
/// decided on integers. Data-generating distributions carry float masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    kind: DistKind,
    support: Vec<u64>,
    masses: Masses,
    cdf: Vec<f64>,
}

/// Converts `num / den` to the nearest `f64`.
pub(crate) fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num == den {
        return 1.0;
    }
    let ratio = BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()));
    ratio
        .to_f64()
        .expect("ratio of finite integers is representable")
}

/// Row `n` of Pascal's triangle.
pub(crate) fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 1..=n {
        c = c * BigUint::from(n - k + 1) / BigUint::from(k);
        row.push(c.clone());
    }
    row
}

/// The single coefficient C(n, k).
pub(crate) fn binomial_coefficient(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 1..=k {
        c = c * BigUint::from(n - k + i) / BigUint::from(i);
    }
    c
}

impl DiscreteDistribution {
    fn from_exact(
        kind: DistKind,
        support: Vec<u64>,
        numerators: Vec<BigUint>,
        denominator: BigUint,
    ) -> Self {
        debug_assert_eq!(support.len(), numerators.len());
        let mut running = BigUint::zero();
        let cdf = numerators
            .iter()
            .map(|w| {
                running += w;
                ratio_to_f64(&running, &denominator)
            })
            .collect();
        debug_assert_eq!(running, denominator);
        Self {
            kind,
            support,
            masses: Masses::Exact {
                numerators,
                denominator,
            },
            cdf,
        }
    }

    fn from_float(kind: DistKind, pairs: Vec<(u64, f64)>) -> Self {
        let (support, weights): (Vec<u64>, Vec<f64>) =
            pairs.into_iter().filter(|&(_, w)| w > 0.0).unzip();
        let mut running = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                running += w;
                running.min(1.0)
            })
            .collect();
        Self {
            kind,
            support,
            masses: Masses::Float(weights),
            cdf,
        }
    }

    /// Binomial(0.5, n): masses C(n, x) / 2^n.
    pub fn binomial_null(n: u64) -> Self {
        let numerators = binomial_row(n);
        let denominator = BigUint::one() << n;
        Self::from_exact(
            DistKind::Binomial { theta: 0.5, n },
            (0..=n).collect(),
            numerators,
            denominator,
        )
    }

    /// Central hypergeometric null of Fisher's exact test: the count in
    /// group 1 given group sizes `n1`, `n2` and `m_total` total successes.
    pub fn hypergeometric_null(n1: u64, n2: u64, m_total: u64) -> Result<Self> {
        let total = n1 + n2;
        if m_total > total {
            return Err(Error::MarginOutOfRange { m_total, total });
        }
        let lo = m_total.saturating_sub(n2);
        let hi = n1.min(m_total);
        let row1 = binomial_row(n1);
        let row2 = binomial_row(n2);
        let numerators = (lo..=hi)
            .map(|x| &row1[x as usize] * &row2[(m_total - x) as usize])
            .collect();
        Ok(Self::from_exact(
            DistKind::Hypergeometric { n1, n2, m_total },
            (lo..=hi).collect(),
            numerators,
            binomial_coefficient(total, m_total),
        ))
    }

    /// Binomial(theta, n) with floating masses, for data generation.
    pub fn binomial(theta: f64, n: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "binomial success probability {theta} outside [0, 1]"
            )));
        }
        let kind = DistKind::Binomial { theta, n };
        if theta == 0.0 {
            return Ok(Self::from_float(kind, vec![(0, 1.0)]));
        }
        if theta == 1.0 {
            return Ok(Self::from_float(kind, vec![(n, 1.0)]));
        }
        let (ln_t, ln_f) = (theta.ln(), (1.0 - theta).ln());
        let pairs = (0..=n)
            .map(|x| {
                let ln_mass = ln_binomial(n, x) + x as f64 * ln_t + (n - x) as f64 * ln_f;
                (x, ln_mass.exp())
            })
            .collect();
        Ok(Self::from_float(kind, pairs))
    }

    /// Poisson(lambda) truncated at the smallest `k` whose upper-tail mass
    /// falls below [`POISSON_TAIL`].
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "poisson mean {lambda} must be positive and finite"
            )));
        }
        let ln_lambda = lambda.ln();
        let mut pairs = Vec::new();
        let mut cumulative = 0.0;
        let mut k = 0u64;
        loop {
            let mass = (k as f64 * ln_lambda - lambda - ln_factorial(k)).exp();
            cumulative += mass;
            pairs.push((k, mass));
            if k as f64 >= lambda && 1.0 - cumulative < POISSON_TAIL {
                break;
            }
            k += 1;
        }
        Ok(Self::from_float(DistKind::Poisson { lambda }, pairs))
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn masses(&self) -> &Masses {
        &self.masses
    }

    /// Exact numerators and their common denominator, when available.
    pub fn exact(&self) -> Option<(&[BigUint], &BigUint)> {
        match &self.masses {
            Masses::Exact {
                numerators,
                denominator,
            } => Some((numerators, denominator)),
            Masses::Float(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Position of `x` in the support.
    pub fn index_of(&self, x: u64) -> Option<usize> {
        self.support.binary_search(&x).ok()
    }

    pub fn mass(&self, x: u64) -> f64 {
        match self.index_of(x) {
            None => 0.0,
            Some(i) => match &self.masses {
                Masses::Exact {
                    numerators,
                    denominator,
                } => ratio_to_f64(&numerators[i], denominator),
                Masses::Float(w) => w[i],
            },
        }
    }

    /// `Pr(X <= x)`.
    pub fn cdf(&self, x: u64) -> f64 {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0.0,
            i => self.cdf[i - 1],
        }
    }

    pub fn max_outcome(&self) -> u64 {
        *self.support.last().expect("distributions are nonempty")
    }
}

/// Inverse-CDF transform.
pub trait Quantile {
    type Output;

    /// Quantile at `u`, which must lie strictly inside (0, 1).
    fn quantile(&self, u: f64) -> Result<Self::Output>;
}

fn check_open_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(u))
    }
}

impl Quantile for DiscreteDistribution {
    type Output = u64;

    /// Smallest support value with CDF at least `u`. Truncated tables map
    /// the residual tail to the largest retained outcome.
    fn quantile(&self, u: f64) -> Result<u64> {
        check_open_unit(u)?;
        let i = self.cdf.partition_point(|&c| c < u);
        Ok(self.support[i.min(self.support.len() - 1)])
    }
}

/// Type I Pareto with density `shape * location^shape / x^(shape + 1)` on
/// `x >= location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pareto {
    pub location: f64,
    pub shape: f64,
}

impl Pareto {
    pub fn new(location: f64, shape: f64) -> Result<Self> {
        if !(location > 0.0 && shape > 0.0 && location.is_finite() && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pareto location {location} and shape {shape} must be positive"
            )));
        }
        Ok(Self { location, shape })
    }
}

impl Quantile for Pareto {
    type Output = f64;

    fn quantile(&self, u: f64) -> Result<f64> {
        check_open_unit(u)?;
        Ok(self.location * (1.0 - u).powf(-1.0 / self.shape))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    pub low: f64,
    pub high: f64,
}

impl Uniform {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low <= high && low.is_finite() && high.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "uniform bounds [{low}, {high}] are not ordered"
            )));
        }
        Ok(Self { low, high })
    }
}

impl Quantile for Uniform {
    type Output = f64;

    fn quantile(&self, u: f64) -> Result<f64> {
        check_open_unit(u)?;
        Ok(self.low + (self.high - self.low) * u)
    }
}
