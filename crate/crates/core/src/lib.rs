//! BH+ false discovery rate control for p-values with step (càdlàg) null
//! distribution functions.
//!
//! The crate is organised bottom-up:
//!
//! * [`dist`] exact null distributions (Binomial(0.5, n), hypergeometric) and
//!   the floating-point data-generating distributions used by the simulator.
//! * [`pvalue`] two-sided conventional and mid p-values together with the
//!   full null distribution of each p-value flavor.
//! * [`stepup`] the pointwise-maximum null CDF, BH+ critical values, the BH
//!   and BH+ step-up procedures and the mid-vs-conventional comparison.
//! * [`sim`] the two-group count simulation study (FDR and power).
//! * [`ingest`] loading, filtering and analysing two-group count tables.

pub mod dist;
mod error;
pub mod ingest;
pub mod pvalue;
pub mod sim;
pub mod stepup;

pub use dist::{DiscreteDistribution, DistKind, Pareto, Quantile, Uniform};
pub use error::{Error, Result};
pub use ingest::{AnalysisReport, CountRecord, Format, TestKind};
pub use pvalue::{Flavor, NullTable, PValueSupport, TwoSidedPValues};
pub use sim::{Dependence, Design, SimConfig, SimSummary};
pub use stepup::{MaxCdf, MidConventionalReport, StepUpResult};
