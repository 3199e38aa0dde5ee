//! Two-group count simulation: FDR and power of BH, BH+ and BH+ on mid
//! p-values for Binomial tests of Poisson counts and Fisher exact tests of
//! binomial counts, under independence or block-equicorrelated Gaussian
//! copula dependence.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use statrs::function::erf::erfc;

use crate::dist::{DiscreteDistribution, Pareto, Quantile, Uniform};
use crate::error::{Error, Result};
use crate::pvalue::{Flavor, NullKey, NullTable, NullTableCache};
use crate::stepup::{bh, bh_plus};

pub const PARETO_SHAPE: f64 = 5.0;
pub const FOLD_CHANGE: (f64, f64) = (3.0, 5.5);
pub const NULL_SUCCESS: (f64, f64) = (0.2, 0.3);
pub const ALT_SUCCESS: (f64, f64) = (0.3, 0.75);

pub const GRID_PI0: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
pub const GRID_ALPHA: [f64; 4] = [0.05, 0.1, 0.15, 0.2];
pub const GRID_ETA: [f64; 3] = [3.0, 4.5, 6.0];
pub const GRID_TRIALS: [u64; 3] = [10, 20, 30];

/// Data-generating design and the test applied to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    /// Poisson counts with Pareto(eta, 5) means, Binomial test.
    Bt { eta: f64 },
    /// Binomial counts with `trials` trials per group, Fisher's exact test.
    Fet { trials: u64 },
}

impl Design {
    pub fn test_name(&self) -> &'static str {
        match self {
            Design::Bt { .. } => "bt",
            Design::Fet { .. } => "fet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dependence {
    Independent,
    /// `blocks` equicorrelated blocks of `block_size` tests with
    /// within-block correlation `rho`.
    BlockCopula {
        block_size: usize,
        blocks: usize,
        rho: f64,
    },
}

impl Dependence {
    pub const REFERENCE_BLOCKS: Dependence = Dependence::BlockCopula {
        block_size: 40,
        blocks: 5,
        rho: 0.2,
    };
}

impl fmt::Display for Dependence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dependence::Independent => f.write_str("indep"),
            Dependence::BlockCopula { .. } => f.write_str("block"),
        }
    }
}

/// Whether both groups of a test read the same copula uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CopulaSharing {
    #[default]
    SharedAcrossGroups,
    PerGroup,
}

impl fmt::Display for CopulaSharing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CopulaSharing::SharedAcrossGroups => "shared",
            CopulaSharing::PerGroup => "per-group",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    pub pi0: f64,
    pub alpha: f64,
    pub design: Design,
    pub dependence: Dependence,
    pub copula_sharing: CopulaSharing,
    pub reps: usize,
    pub seed: u64,
}

impl SimConfig {
    /// A cell of the reference design: 200 tests, 300 replications.
    pub fn reference(design: Design, pi0: f64, alpha: f64, dependence: Dependence) -> Self {
        Self {
            m: 200,
            pi0,
            alpha,
            design,
            dependence,
            copula_sharing: CopulaSharing::default(),
            reps: 300,
            seed: 0,
        }
    }

    pub fn m0(&self) -> usize {
        (self.m as f64 * self.pi0).round() as usize
    }

    pub fn m1(&self) -> usize {
        self.m - self.m0()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return bad(format!("pi0 {} outside [0, 1]", self.pi0));
        }
        let m0 = self.m as f64 * self.pi0;
        if (m0 - m0.round()).abs() > 1e-9 {
            return bad(format!("m * pi0 = {m0} is not an integer"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.reps == 0 {
            return bad("reps must be positive".into());
        }
        match self.design {
            Design::Bt { eta } if !(eta > 0.0 && eta.is_finite()) => {
                return bad(format!("eta {eta} must be positive"))
            }
            Design::Fet { trials: 0 } => return bad("trials must be positive".into()),
            _ => {}
        }
        if let Dependence::BlockCopula {
            block_size,
            blocks,
            rho,
        } = self.dependence
        {
            if block_size * blocks != self.m {
                return bad(format!(
                    "{blocks} blocks of {block_size} do not cover m = {}",
                    self.m
                ));
            }
            if !(0.0..1.0).contains(&rho) {
                return bad(format!("rho {rho} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

/// True nulls occupy indices `0..m0`; false nulls `m0..m0 + first_half`
/// are enriched in group 2, the rest in group 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthAssignment {
    pub m0: usize,
    pub m1: usize,
    pub first_half: usize,
}

impl TruthAssignment {
    pub fn new(m: usize, m0: usize) -> Self {
        let m1 = m - m0;
        Self {
            m0,
            m1,
            first_half: m1 / 2,
        }
    }

    pub fn is_null(&self, i: usize) -> bool {
        i < self.m0
    }

    pub fn null_indices(&self) -> std::ops::Range<usize> {
        0..self.m0
    }
}

/// One simulated data set: per-test parameters and counts for both groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub theta: Vec<[f64; 2]>,
    pub counts: Vec<[u64; 2]>,
    pub truth: TruthAssignment,
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

/// Standard normal CDF, kept strictly inside (0, 1).
fn phi(z: f64) -> f64 {
    let u = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Uniforms with a block-diagonal equicorrelated Gaussian copula, via the
/// one-factor representation `z = sqrt(rho) g + sqrt(1 - rho) e`.
pub fn gen_copula_uniforms<R: Rng + ?Sized>(
    blocks: usize,
    block_size: usize,
    rho: f64,
    rng: &mut R,
) -> Vec<f64> {
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut u = Vec::with_capacity(blocks * block_size);
    for _ in 0..blocks {
        let g: f64 = rng.sample(StandardNormal);
        for _ in 0..block_size {
            let e: f64 = rng.sample(StandardNormal);
            u.push(phi(a * g + b * e));
        }
    }
    u
}

/// Uniforms driving the counts of both groups for every test.
fn count_uniforms<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Vec<[f64; 2]> {
    match config.dependence {
        Dependence::Independent => (0..config.m).map(|_| [open01(rng), open01(rng)]).collect(),
        Dependence::BlockCopula {
            block_size,
            blocks,
            rho,
        } => match config.copula_sharing {
            CopulaSharing::SharedAcrossGroups => gen_copula_uniforms(blocks, block_size, rho, rng)
                .into_iter()
                .map(|u| [u, u])
                .collect(),
            CopulaSharing::PerGroup => {
                let u1 = gen_copula_uniforms(blocks, block_size, rho, rng);
                let u2 = gen_copula_uniforms(blocks, block_size, rho, rng);
                u1.into_iter().zip(u2).map(|(a, b)| [a, b]).collect()
            }
        },
    }
}

/// Poisson means from Pareto(eta, 5) with fold changes Unif(3, 5.5) on
/// false nulls, then counts by inverse-CDF.
pub fn gen_poisson_pair<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<GeneratedData> {
    let Design::Bt { eta } = config.design else {
        return Err(Error::InvalidConfig(
            "poisson data need the BT design".into(),
        ));
    };
    let truth = TruthAssignment::new(config.m, config.m0());
    let pareto = Pareto::new(eta, PARETO_SHAPE)?;
    let fold = Uniform::new(FOLD_CHANGE.0, FOLD_CHANGE.1)?;

    let base: Vec<f64> = (0..config.m)
        .map(|_| pareto.quantile(open01(rng)))
        .collect::<Result<_>>()?;
    let rho: Vec<f64> = (0..truth.m1)
        .map(|_| fold.quantile(open01(rng)))
        .collect::<Result<_>>()?;
    let theta: Vec<[f64; 2]> = base
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if truth.is_null(i) {
                [t, t]
            } else if i < truth.m0 + truth.first_half {
                [t, rho[i - truth.m0] * t]
            } else {
                [rho[i - truth.m0] * t, t]
            }
        })
        .collect();

    let uniforms = count_uniforms(config, rng);
    let counts = theta
        .iter()
        .zip(&uniforms)
        .map(|(th, u)| {
            Ok([
                DiscreteDistribution::poisson(th[0])?.quantile(u[0])?,
                DiscreteDistribution::poisson(th[1])?.quantile(u[1])?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok(GeneratedData {
        theta,
        counts,
        truth,
    })
}

/// Success probabilities Unif(0.2, 0.3) on true nulls and (0.3, 0.75) or
/// (0.75, 0.3) on false nulls, then binomial counts by inverse-CDF.
pub fn gen_binomial_pair<R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<GeneratedData> {
    let Design::Fet { trials } = config.design else {
        return Err(Error::InvalidConfig(
            "binomial data need the FET design".into(),
        ));
    };
    let truth = TruthAssignment::new(config.m, config.m0());
    let null_success = Uniform::new(NULL_SUCCESS.0, NULL_SUCCESS.1)?;
    let (lo, hi) = ALT_SUCCESS;
    let theta: Vec<[f64; 2]> = (0..config.m)
        .map(|i| {
            Ok(if truth.is_null(i) {
                let t = null_success.quantile(open01(rng))?;
                [t, t]
            } else if i < truth.m0 + truth.first_half {
                [lo, hi]
            } else {
                [hi, lo]
            })
        })
        .collect::<Result<_>>()?;

    let uniforms = count_uniforms(config, rng);
    let counts = theta
        .iter()
        .zip(&uniforms)
        .map(|(th, u)| {
            Ok([
                DiscreteDistribution::binomial(th[0], trials)?.quantile(u[0])?,
                DiscreteDistribution::binomial(th[1], trials)?.quantile(u[1])?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok(GeneratedData {
        theta,
        counts,
        truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Procedure {
    #[serde(rename = "BH")]
    Bh,
    #[serde(rename = "BH+")]
    BhPlus,
    #[serde(rename = "MidPBH+")]
    MidPBhPlus,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::Bh, Procedure::BhPlus, Procedure::MidPBhPlus];

    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Bh => "BH",
            Procedure::BhPlus => "BH+",
            Procedure::MidPBhPlus => "MidPBH+",
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-procedure results of one replication, indexed like [`Procedure::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOutcome {
    pub rejections: [usize; 3],
    pub false_rejections: [usize; 3],
    pub fdp: [f64; 3],
    pub tdp: [f64; 3],
}

/// The RNG of replication `rep`: one ChaCha stream per replication, so
/// results do not depend on scheduling.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Null tables, conventional p-values and mid p-values, one entry per test.
pub type DataPValues = (Vec<Arc<NullTable>>, Vec<f64>, Vec<f64>);

/// Conventional and mid p-values of every test of a generated data set,
/// with their null tables.
pub fn data_pvalues(
    design: Design,
    data: &GeneratedData,
    cache: &NullTableCache,
) -> Result<DataPValues> {
    let mut tables = Vec::with_capacity(data.counts.len());
    let mut conv = Vec::with_capacity(data.counts.len());
    let mut mid = Vec::with_capacity(data.counts.len());
    for &[c1, c2] in &data.counts {
        let key = match design {
            Design::Bt { .. } => NullKey::Binomial { total: c1 + c2 },
            Design::Fet { trials } => NullKey::Hypergeometric {
                n1: trials,
                n2: trials,
                m_total: c1 + c2,
            },
        };
        let table = cache.get(key)?;
        conv.push(table.pvalue(c1, Flavor::Conventional)?);
        mid.push(table.pvalue(c1, Flavor::Mid)?);
        tables.push(table);
    }
    Ok((tables, conv, mid))
}

pub fn run_replication(
    config: &SimConfig,
    rep: u64,
    cache: &NullTableCache,
) -> Result<ReplicationOutcome> {
    let mut rng = replication_rng(config.seed, rep);
    let data = match config.design {
        Design::Bt { .. } => gen_poisson_pair(config, &mut rng)?,
        Design::Fet { .. } => gen_binomial_pair(config, &mut rng)?,
    };
    let (tables, conv, mid) = data_pvalues(config.design, &data, cache)?;
    let conv_supports: Vec<_> = tables
        .iter()
        .map(|t| t.support(Flavor::Conventional))
        .collect();
    let mid_supports: Vec<_> = tables.iter().map(|t| t.support(Flavor::Mid)).collect();

    let results = [
        bh(&conv, config.alpha)?,
        bh_plus(&conv, &conv_supports, config.alpha)?,
        bh_plus(&mid, &mid_supports, config.alpha)?,
    ];
    let truth = &data.truth;
    let mut outcome = ReplicationOutcome {
        rejections: [0; 3],
        false_rejections: [0; 3],
        fdp: [0.0; 3],
        tdp: [0.0; 3],
    };
    for (j, r) in results.iter().enumerate() {
        let false_rej = r.rejected.iter().filter(|&&i| truth.is_null(i)).count();
        let true_rej = r.rejection_count - false_rej;
        outcome.rejections[j] = r.rejection_count;
        outcome.false_rejections[j] = false_rej;
        outcome.fdp[j] = false_rej as f64 / r.rejection_count.max(1) as f64;
        outcome.tdp[j] = if truth.m1 == 0 {
            0.0
        } else {
            true_rej as f64 / truth.m1 as f64
        };
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcedureStats {
    pub procedure: Procedure,
    /// Mean false discovery proportion.
    pub fdr: f64,
    pub fdp_sd: f64,
    /// Mean true discovery proportion.
    pub power: f64,
    pub tdp_sd: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub config: SimConfig,
    pub stats: [ProcedureStats; 3],
}

impl SimSummary {
    pub fn get(&self, procedure: Procedure) -> &ProcedureStats {
        &self.stats[procedure as usize]
    }
}

/// Mean and sample standard deviation, summed in input order.
fn mean_sd(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn summarize(config: &SimConfig, outcomes: &[ReplicationOutcome]) -> SimSummary {
    let stats = Procedure::ALL.map(|procedure| {
        let j = procedure as usize;
        let (fdr, fdp_sd) = mean_sd(outcomes.iter().map(|o| o.fdp[j]));
        let (power, tdp_sd) = mean_sd(outcomes.iter().map(|o| o.tdp[j]));
        ProcedureStats {
            procedure,
            fdr,
            fdp_sd,
            power,
            tdp_sd,
            reps: outcomes.len(),
        }
    });
    SimSummary {
        config: *config,
        stats,
    }
}

/// Runs every replication of a cell and keeps the per-replication outcomes.
pub fn run_cell_detailed(config: &SimConfig) -> Result<(SimSummary, Vec<ReplicationOutcome>)> {
    config.validate()?;
    let cache = NullTableCache::default();
    let outcomes = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, rep, &cache))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(config, &outcomes), outcomes))
}

pub fn run_cell(config: &SimConfig) -> Result<SimSummary> {
    run_cell_detailed(config).map(|(summary, _)| summary)
}

/// The full factorial of cells (pi0 x alpha x eta or trials) for one test.
pub fn reference_grid(fet: bool, dependence: Dependence, reps: usize, seed: u64) -> Vec<SimConfig> {
    let designs: Vec<Design> = if fet {
        GRID_TRIALS
            .iter()
            .map(|&trials| Design::Fet { trials })
            .collect()
    } else {
        GRID_ETA.iter().map(|&eta| Design::Bt { eta }).collect()
    };
    let mut cells = Vec::new();
    for &pi0 in &GRID_PI0 {
        for &alpha in &GRID_ALPHA {
            for &design in &designs {
                let mut c = SimConfig::reference(design, pi0, alpha, dependence);
                c.reps = reps;
                c.seed = seed;
                cells.push(c);
            }
        }
    }
    cells
}

fn display<S: Serializer, T: fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Serialize)]
struct CsvRow {
    test: &'static str,
    #[serde(serialize_with = "display")]
    dependence: Dependence,
    #[serde(serialize_with = "display")]
    copula_sharing: CopulaSharing,
    m: usize,
    pi0: f64,
    alpha: f64,
    eta: Option<f64>,
    n: Option<u64>,
    reps: usize,
    seed: u64,
    procedure: Procedure,
    fdr: f64,
    fdp_sd: f64,
    power: f64,
    tdp_sd: f64,
}

/// Writes one CSV row per (cell, procedure).
pub fn write_summaries_csv<W: Write>(writer: W, summaries: &[SimSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in summaries {
        let c = &s.config;
        let (eta, n) = match c.design {
            Design::Bt { eta } => (Some(eta), None),
            Design::Fet { trials } => (None, Some(trials)),
        };
        for st in &s.stats {
            w.serialize(CsvRow {
                test: c.design.test_name(),
                dependence: c.dependence,
                copula_sharing: c.copula_sharing,
                m: c.m,
                pi0: c.pi0,
                alpha: c.alpha,
                eta,
                n,
                reps: c.reps,
                seed: c.seed,
                procedure: st.procedure,
                fdr: st.fdr,
                fdp_sd: st.fdp_sd,
                power: st.power,
                tdp_sd: st.tdp_sd,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
