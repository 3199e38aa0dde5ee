//! BH and BH+ step-up procedures.
//!
//! BH+ replaces the BH constants `alpha * k / m` by the largest candidate
//! threshold `t` at which the pointwise maximum `F*` of the null p-value
//! CDFs is still at most `alpha * k / m`.

use std::borrow::Borrow;

use rayon::slice::ParallelSliceMut;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pvalue::PValueSupport;

/// Event count above which the sweep sorts in parallel.
const PAR_SORT_MIN: usize = 1 << 16;

/// The BH level `alpha * k / m` for rank `k`.
#[inline]
pub fn rank_level(alpha: f64, k: usize, m: usize) -> f64 {
    alpha * k as f64 / m as f64
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Pointwise maximum of several step CDFs on the union of their supports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxCdf {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl MaxCdf {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `F*(t)`; zero below the first grid point.
    pub fn eval(&self, t: f64) -> f64 {
        match self.grid.partition_point(|&g| g <= t) {
            0 => 0.0,
            i => self.values[i - 1],
        }
    }

    /// Largest grid point whose value is at most `level`.
    pub fn largest_below(&self, level: f64) -> Option<f64> {
        match self.values.partition_point(|&v| v <= level) {
            0 => None,
            i => Some(self.grid[i - 1]),
        }
    }

    /// Critical values `gamma_1..gamma_m`; `None` marks a rank at which no
    /// grid point is feasible.
    pub fn critical_values(&self, alpha: f64, m: usize) -> Result<Vec<Option<f64>>> {
        check_alpha(alpha)?;
        Ok((1..=m)
            .map(|k| self.largest_below(rank_level(alpha, k, m)))
            .collect())
    }
}

/// Builds `F* = max_i F_i` over the union of all support points.
///
/// Each `F_i` is nondecreasing, so `max_i F_i(t)` equals the largest CDF
/// value attached to any support point `<= t`. One sort of all events plus a
/// running maximum therefore evaluates `F*` on the whole grid.
pub fn build_max_cdf<S: Borrow<PValueSupport>>(supports: &[S]) -> Result<MaxCdf> {
    if supports.is_empty() {
        return Err(Error::NoHypotheses);
    }
    let total: usize = supports.iter().map(|s| s.borrow().len()).sum();
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(total);
    for s in supports {
        let s = s.borrow();
        events.extend(
            s.points()
                .iter()
                .copied()
                .zip(s.cdf_values().iter().copied()),
        );
    }
    if events.len() >= PAR_SORT_MIN {
        events.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    } else {
        events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    }

    let mut grid: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut running = 0.0f64;
    for (point, level) in events {
        running = running.max(level);
        if grid.last() == Some(&point) {
            *values.last_mut().unwrap() = running;
        } else {
            grid.push(point);
            values.push(running);
        }
    }
    Ok(MaxCdf { grid, values })
}

/// Outcome of one step-up procedure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepUpResult {
    /// `gamma_k` for `k = 1..=m`; `None` when no threshold is feasible.
    pub critical_values: Vec<Option<f64>>,
    pub rejection_count: usize,
    /// `gamma_R` when at least one hypothesis is rejected.
    pub threshold: Option<f64>,
    /// Indices of rejected hypotheses, ascending.
    pub rejected: Vec<usize>,
}

impl StepUpResult {
    pub fn rejection_mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &i in &self.rejected {
            mask[i] = true;
        }
        mask
    }
}

/// Generic step-up given precomputed critical values.
fn step_up(pvalues: &[f64], critical_values: Vec<Option<f64>>) -> StepUpResult {
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));

    let rank = order
        .iter()
        .zip(&critical_values)
        .rposition(|(&i, gamma)| matches!(gamma, Some(g) if pvalues[i] <= *g));

    let Some(r) = rank else {
        return StepUpResult {
            critical_values,
            rejection_count: 0,
            threshold: None,
            rejected: Vec::new(),
        };
    };
    let threshold = critical_values[r].expect("rank was feasible");
    let rejected: Vec<usize> = (0..pvalues.len())
        .filter(|&i| pvalues[i] <= threshold)
        .collect();
    StepUpResult {
        critical_values,
        rejection_count: rejected.len(),
        threshold: Some(threshold),
        rejected,
    }
}

/// BH+ on p-values whose null distributions are `supports`.
pub fn bh_plus<S: Borrow<PValueSupport>>(
    pvalues: &[f64],
    supports: &[S],
    alpha: f64,
) -> Result<StepUpResult> {
    check_alpha(alpha)?;
    if pvalues.len() != supports.len() {
        return Err(Error::LengthMismatch {
            pvalues: pvalues.len(),
            supports: supports.len(),
        });
    }
    for (index, (&p, s)) in pvalues.iter().zip(supports).enumerate() {
        if !s.borrow().contains(p) {
            return Err(Error::NotOnSupport { index, pvalue: p });
        }
    }
    let max_cdf = build_max_cdf(supports)?;
    bh_plus_with(pvalues, &max_cdf, alpha)
}

/// BH+ given a prebuilt `F*`. The p-values are not checked against supports.
pub fn bh_plus_with(pvalues: &[f64], max_cdf: &MaxCdf, alpha: f64) -> Result<StepUpResult> {
    if pvalues.is_empty() {
        return Err(Error::NoHypotheses);
    }
    let gammas = max_cdf.critical_values(alpha, pvalues.len())?;
    Ok(step_up(pvalues, gammas))
}

/// Classical Benjamini–Hochberg step-up with constants `alpha * k / m`.
pub fn bh(pvalues: &[f64], alpha: f64) -> Result<StepUpResult> {
    check_alpha(alpha)?;
    if pvalues.is_empty() {
        return Err(Error::NoHypotheses);
    }
    if let Some(&p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidPValue(p));
    }
    let m = pvalues.len();
    let gammas = (1..=m).map(|k| Some(rank_level(alpha, k, m))).collect();
    Ok(step_up(pvalues, gammas))
}

/// BH+ on conventional versus mid p-values, with the closed-form check of
/// whether the mid p-values reject at least as many hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MidConventionalReport {
    /// `W_mp(Q_(R_cp)) <= alpha * R_cp / m`, vacuously true when `R_cp = 0`.
    pub condition_holds: bool,
    /// `W_mp` at the `R_cp`-th smallest mid p-value, absent when `R_cp = 0`.
    pub w_mp_at_order_stat: Option<f64>,
    pub r_cp: usize,
    pub r_mp: usize,
    pub mid_result: StepUpResult,
}

impl MidConventionalReport {
    /// Whether the condition agrees with the observed rejection counts.
    pub fn equivalence_holds(&self) -> bool {
        self.condition_holds == (self.r_mp >= self.r_cp)
    }
}

/// Runs BH+ on the mid p-values and evaluates the condition against the
/// conventional result. Returns [`Error::Invariant`] if the condition and
/// the observed rejection counts disagree.
pub fn mid_vs_conventional<S: Borrow<PValueSupport>>(
    conv_result: &StepUpResult,
    mid_supports: &[S],
    mid_pvalues: &[f64],
    alpha: f64,
) -> Result<MidConventionalReport> {
    let m = mid_pvalues.len();
    if conv_result.critical_values.len() != m {
        return Err(Error::LengthMismatch {
            pvalues: m,
            supports: conv_result.critical_values.len(),
        });
    }
    let mid_result = bh_plus(mid_pvalues, mid_supports, alpha)?;
    let w_mp = build_max_cdf(mid_supports)?;
    let r_cp = conv_result.rejection_count;

    let (condition_holds, w_mp_at_order_stat) = if r_cp == 0 {
        (true, None)
    } else {
        let mut sorted = mid_pvalues.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = w_mp.eval(sorted[r_cp - 1]);
        (w <= rank_level(alpha, r_cp, m), Some(w))
    };
    let report = MidConventionalReport {
        condition_holds,
        w_mp_at_order_stat,
        r_cp,
        r_mp: mid_result.rejection_count,
        mid_result,
    };
    if !report.equivalence_holds() {
        return Err(Error::Invariant(format!(
            "condition is {} but R_mp = {} and R_cp = {}",
            report.condition_holds, report.r_mp, report.r_cp
        )));
    }
    Ok(report)
}
