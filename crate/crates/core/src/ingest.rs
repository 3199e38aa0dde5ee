//! Two-group count tables: loading, application filters and the three-way
//! BH / BH+ / MidPBH+ analysis.
//!
//! Input files carry a header naming the columns `id,c1,c2` and, for
//! Fisher exact tests, the per-group trial totals `n1,n2`.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pvalue::{Flavor, NullKey, NullTableCache};
use crate::sim::Procedure;
use crate::stepup::{bh, bh_plus, mid_vs_conventional, StepUpResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Inclusion bounds of the methylation filter.
pub const METHYLATION_MIN_TOTAL_EXCLUSIVE: u64 = 10;
pub const METHYLATION_MAX_COUNT: u64 = 25;
/// Inclusion bound of the HIV filter.
pub const HIV_MIN_TOTAL: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountRecord {
    pub id: String,
    pub c1: u64,
    pub c2: u64,
    pub n1: Option<u64>,
    pub n2: Option<u64>,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.c1 + self.c2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    /// `.tsv` and `.tab` files are tab-delimited, anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab") => {
                Format::Tsv
            }
            _ => Format::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Bt,
    Fet,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Bt => "bt",
            TestKind::Fet => "fet",
        })
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bt" => Ok(TestKind::Bt),
            "fet" => Ok(TestKind::Fet),
            other => Err(Error::InvalidParameter(format!("unknown test '{other}'"))),
        }
    }
}

pub fn load_counts(path: &Path, format: Format) -> Result<Vec<CountRecord>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_counts_from_reader(file, format)
}

fn parse_count(line: u64, column: &str, raw: &str) -> Result<u64> {
    let record_err = |message: String| Error::Record { line, message };
    if raw.is_empty() {
        return Err(record_err(format!("missing value for {column}")));
    }
    if let Ok(v) = raw.parse::<i64>() {
        if v < 0 {
            return Err(record_err(format!("negative count {column} = {v}")));
        }
    }
    raw.parse::<u64>()
        .map_err(|_| record_err(format!("invalid count {column} = '{raw}'")))
}

pub fn load_counts_from_reader<R: Read>(reader: R, format: Format) -> Result<Vec<CountRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let required = |name: &str| {
        col(name).ok_or_else(|| Error::Schema(format!("missing required column '{name}'")))
    };
    let (id_col, c1_col, c2_col) = (required("id")?, required("c1")?, required("c2")?);
    let totals = match (col("n1"), col("n2")) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => {
            return Err(Error::Schema(
                "columns n1 and n2 must appear together".into(),
            ))
        }
    };

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| {
            row.get(i).ok_or_else(|| Error::Record {
                line,
                message: format!("missing field {name}"),
            })
        };
        let id = field(id_col, "id")?.to_string();
        let c1 = parse_count(line, "c1", field(c1_col, "c1")?)?;
        let c2 = parse_count(line, "c2", field(c2_col, "c2")?)?;
        let (n1, n2) = match totals {
            None => (None, None),
            Some((a, b)) => {
                let n1 = parse_count(line, "n1", field(a, "n1")?)?;
                let n2 = parse_count(line, "n2", field(b, "n2")?)?;
                for (c, n, name) in [(c1, n1, "1"), (c2, n2, "2")] {
                    if c > n {
                        return Err(Error::Record {
                            line,
                            message: format!("record '{id}': c{name} = {c} exceeds n{name} = {n}"),
                        });
                    }
                }
                (Some(n1), Some(n2))
            }
        };
        records.push(CountRecord { id, c1, c2, n1, n2 });
    }
    Ok(records)
}

/// Keeps records whose total exceeds 10 and whose counts are at most 25.
pub fn filter_methylation(records: &[CountRecord]) -> Vec<CountRecord> {
    records
        .iter()
        .filter(|r| {
            r.total() > METHYLATION_MIN_TOTAL_EXCLUSIVE
                && r.c1 <= METHYLATION_MAX_COUNT
                && r.c2 <= METHYLATION_MAX_COUNT
        })
        .cloned()
        .collect()
}

/// Keeps records whose total is at least 5.
pub fn filter_hiv(records: &[CountRecord]) -> Vec<CountRecord> {
    records
        .iter()
        .filter(|r| r.total() >= HIV_MIN_TOTAL)
        .cloned()
        .collect()
}

/// Per-hypothesis output row. Rejection columns of procedures that were
/// not requested are left empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisRow {
    pub id: String,
    pub p_conv: f64,
    pub p_mid: f64,
    pub reject_bh: Option<bool>,
    pub reject_bhplus: Option<bool>,
    pub reject_midpbhplus: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcedureSummary {
    pub procedure: Procedure,
    pub pvalue: Flavor,
    pub rejections: usize,
    /// The rejection threshold `gamma_R`, absent when nothing is rejected.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub r_cp: usize,
    pub r_mp: usize,
    pub condition_holds: bool,
    pub w_mp_at_order_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub schema_version: u32,
    pub test: TestKind,
    pub alpha: f64,
    pub hypotheses: usize,
    pub procedures: Vec<ProcedureSummary>,
    pub comparison: ComparisonSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub rows: Vec<HypothesisRow>,
    pub summary: AnalysisSummary,
    pub results: [StepUpResult; 3],
}

impl AnalysisReport {
    pub fn result(&self, procedure: Procedure) -> &StepUpResult {
        &self.results[procedure as usize]
    }

    pub fn rejections(&self, procedure: Procedure) -> usize {
        self.result(procedure).rejection_count
    }
}

/// Null key of one record under the chosen test.
pub fn null_key(record: &CountRecord, test: TestKind) -> Result<NullKey> {
    match test {
        TestKind::Bt => Ok(NullKey::Binomial {
            total: record.total(),
        }),
        TestKind::Fet => match (record.n1, record.n2) {
            (Some(n1), Some(n2)) => Ok(NullKey::Hypergeometric {
                n1,
                n2,
                m_total: record.total(),
            }),
            _ => Err(Error::Schema(format!(
                "record '{}' lacks the trial totals n1, n2 a Fisher exact test needs",
                record.id
            ))),
        },
    }
}

/// Conventional and mid p-values of every record with their null tables.
pub fn record_pvalues(
    records: &[CountRecord],
    test: TestKind,
    cache: &NullTableCache,
) -> Result<Vec<(std::sync::Arc<crate::pvalue::NullTable>, f64, f64)>> {
    records
        .par_iter()
        .map(|r| {
            let table = cache.get(null_key(r, test)?)?;
            let p = table.pvalue(r.c1, Flavor::Conventional)?;
            let q = table.pvalue(r.c1, Flavor::Mid)?;
            Ok((table, p, q))
        })
        .collect()
}

/// Computes both p-value flavors for every record and runs BH, BH+ and
/// MidPBH+. `procedures` selects what the rows and summary report; all
/// three are always computed.
pub fn analyze(
    records: &[CountRecord],
    test: TestKind,
    alpha: f64,
    procedures: &[Procedure],
) -> Result<AnalysisReport> {
    if records.is_empty() {
        return Err(Error::NoHypotheses);
    }
    let cache = NullTableCache::default();
    let computed = record_pvalues(records, test, &cache)?;
    let conv: Vec<f64> = computed.iter().map(|c| c.1).collect();
    let mid: Vec<f64> = computed.iter().map(|c| c.2).collect();
    let conv_supports: Vec<_> = computed
        .iter()
        .map(|c| c.0.support(Flavor::Conventional))
        .collect();
    let mid_supports: Vec<_> = computed.iter().map(|c| c.0.support(Flavor::Mid)).collect();

    let bh_result = bh(&conv, alpha)?;
    let plus_result = bh_plus(&conv, &conv_supports, alpha)?;
    let comparison = mid_vs_conventional(&plus_result, &mid_supports, &mid, alpha)?;
    let results = [bh_result, plus_result, comparison.mid_result.clone()];

    let m = records.len();
    let masks: Vec<Option<Vec<bool>>> = Procedure::ALL
        .iter()
        .map(|p| {
            procedures
                .contains(p)
                .then(|| results[*p as usize].rejection_mask(m))
        })
        .collect();
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, r)| HypothesisRow {
            id: r.id.clone(),
            p_conv: conv[i],
            p_mid: mid[i],
            reject_bh: masks[0].as_ref().map(|v| v[i]),
            reject_bhplus: masks[1].as_ref().map(|v| v[i]),
            reject_midpbhplus: masks[2].as_ref().map(|v| v[i]),
        })
        .collect();

    let summaries = Procedure::ALL
        .iter()
        .filter(|p| procedures.contains(p))
        .map(|&procedure| {
            let r = &results[procedure as usize];
            ProcedureSummary {
                procedure,
                pvalue: match procedure {
                    Procedure::MidPBhPlus => Flavor::Mid,
                    _ => Flavor::Conventional,
                },
                rejections: r.rejection_count,
                threshold: r.threshold,
            }
        })
        .collect();

    Ok(AnalysisReport {
        rows,
        summary: AnalysisSummary {
            schema_version: SCHEMA_VERSION,
            test,
            alpha,
            hypotheses: m,
            procedures: summaries,
            comparison: ComparisonSummary {
                r_cp: comparison.r_cp,
                r_mp: comparison.r_mp,
                condition_holds: comparison.condition_holds,
                w_mp_at_order_stat: comparison.w_mp_at_order_stat,
            },
        },
        results,
    })
}

/// Writes `id,p_conv,p_mid,reject_bh,reject_bhplus,reject_midpbhplus`.
pub fn write_rows_csv<W: Write>(writer: W, report: &AnalysisReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_summary_json<W: Write>(mut writer: W, report: &AnalysisReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, &report.summary)?;
    writeln!(writer).map_err(csv::Error::from)?;
    Ok(())
}
