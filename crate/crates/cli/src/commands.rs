use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use bhplus_core::ingest::{
    self, analyze as run_analysis, filter_hiv, filter_methylation, load_counts, record_pvalues,
    CountRecord, SCHEMA_VERSION,
};
use bhplus_core::pvalue::NullTableCache;
use bhplus_core::sim::{self, reference_grid, CopulaSharing, Procedure};
use bhplus_core::stepup::build_max_cdf;
use bhplus_core::{Dependence, Design, Flavor, Format, SimConfig, TestKind};

use crate::{
    AnalyzeArgs, CompareArgs, CopulaArg, DependenceArg, Failure, FilterArg, FlavorArg, InputArgs,
    OutputFormat, PValueArg, SimulateArgs, SupportArgs, TestArg,
};

type Outcome = Result<(), Failure>;

const BLOCK_SIZE: usize = 40;
const BLOCK_RHO: f64 = 0.2;

fn io_failure(path: Option<&Path>, e: impl std::fmt::Display) -> Failure {
    match path {
        Some(p) => Failure::Data(format!("{}: {e}", p.display())),
        None => Failure::Data(format!("stdout: {e}")),
    }
}

/// Runs `body` against the output file, or standard output.
fn with_output(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> Result<(), Failure>,
) -> Outcome {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_failure(Some(p), e))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush().map_err(|e| io_failure(Some(p), e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush().map_err(|e| io_failure(None, e))
        }
    }
}

fn read_records(input: &InputArgs) -> Result<Vec<CountRecord>, Failure> {
    let records = load_counts(&input.input, Format::from_path(&input.input))?;
    Ok(match input.filter {
        FilterArg::Methylation => filter_methylation(&records),
        FilterArg::Hiv => filter_hiv(&records),
        FilterArg::None => records,
    })
}

pub fn analyze(args: AnalyzeArgs) -> Outcome {
    let records = read_records(&args.input)?;
    let procedures: &[Procedure] = match args.pvalue {
        PValueArg::Conventional => &[Procedure::Bh, Procedure::BhPlus],
        PValueArg::Mid => &[Procedure::MidPBhPlus],
        PValueArg::Both => &Procedure::ALL,
    };
    let report = run_analysis(&records, args.input.test.into(), args.alpha, procedures)?;
    if let Some(path) = &args.summary {
        with_output(Some(path), |w| Ok(ingest::write_summary_json(w, &report)?))?;
    }
    with_output(args.output.output.as_deref(), |w| {
        match args.format {
            OutputFormat::Csv => ingest::write_rows_csv(w, &report)?,
            OutputFormat::Json => ingest::write_summary_json(w, &report)?,
        }
        Ok(())
    })
}

pub fn simulate(args: SimulateArgs) -> Outcome {
    let dependence = match args.dependence {
        DependenceArg::Indep => Dependence::Independent,
        DependenceArg::Block => Dependence::BlockCopula {
            block_size: BLOCK_SIZE,
            blocks: args.m / BLOCK_SIZE,
            rho: BLOCK_RHO,
        },
    };
    let copula_sharing = match args.copula {
        CopulaArg::Shared => CopulaSharing::SharedAcrossGroups,
        CopulaArg::PerGroup => CopulaSharing::PerGroup,
    };
    let mut cells = if args.grid {
        reference_grid(args.test == TestArg::Fet, dependence, args.reps, args.seed)
    } else {
        let design = match (args.test, args.eta, args.n) {
            (TestArg::Bt, Some(eta), None) => Design::Bt { eta },
            (TestArg::Fet, None, Some(trials)) => Design::Fet { trials },
            (TestArg::Bt, _, _) => {
                return Err(Failure::Usage("--test bt needs --eta and no --n".into()))
            }
            (TestArg::Fet, _, _) => {
                return Err(Failure::Usage("--test fet needs --n and no --eta".into()))
            }
        };
        // Both are required unless --grid.
        let (pi0, alpha) = (args.pi0.unwrap(), args.alpha.unwrap());
        let mut c = SimConfig::reference(design, pi0, alpha, dependence);
        c.reps = args.reps;
        c.seed = args.seed;
        vec![c]
    };
    for c in &mut cells {
        c.m = args.m;
        c.copula_sharing = copula_sharing;
        c.validate()?;
    }
    let summaries = cells
        .iter()
        .map(sim::run_cell)
        .collect::<Result<Vec<_>, _>>()?;
    with_output(args.output.output.as_deref(), |w| {
        Ok(sim::write_summaries_csv(w, &summaries)?)
    })
}

#[derive(Serialize)]
struct SupportRow<'a> {
    kind: &'static str,
    id: &'a str,
    point: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct TestSupport<'a> {
    id: &'a str,
    points: &'a [f64],
    cdf: &'a [f64],
}

#[derive(Serialize)]
struct MaxCdfDump<'a> {
    grid: &'a [f64],
    values: &'a [f64],
}

#[derive(Serialize)]
struct SupportDump<'a> {
    schema_version: u32,
    test: TestKind,
    pvalue: Flavor,
    tests: Vec<TestSupport<'a>>,
    max_cdf: MaxCdfDump<'a>,
}

pub fn support(args: SupportArgs) -> Outcome {
    let records = read_records(&args.input)?;
    if records.is_empty() {
        return Err(bhplus_core::Error::NoHypotheses.into());
    }
    let flavor = match args.pvalue {
        FlavorArg::Conventional => Flavor::Conventional,
        FlavorArg::Mid => Flavor::Mid,
    };
    let test: TestKind = args.input.test.into();
    let cache = NullTableCache::default();
    let tables = record_pvalues(&records, test, &cache)?;
    let supports: Vec<_> = tables.iter().map(|t| t.0.support(flavor)).collect();
    let max_cdf = build_max_cdf(&supports)?;

    with_output(args.output.output.as_deref(), |w| {
        match args.format {
            OutputFormat::Csv => {
                let mut out = csv::Writer::from_writer(w);
                let write = |out: &mut csv::Writer<_>, row: SupportRow| {
                    out.serialize(row).map_err(|e| Failure::Data(e.to_string()))
                };
                for (r, s) in records.iter().zip(&supports) {
                    for (&point, &cdf) in s.points().iter().zip(s.cdf_values()) {
                        write(
                            &mut out,
                            SupportRow {
                                kind: "test",
                                id: &r.id,
                                point,
                                cdf,
                            },
                        )?;
                    }
                }
                for (&point, &cdf) in max_cdf.grid().iter().zip(max_cdf.values()) {
                    write(
                        &mut out,
                        SupportRow {
                            kind: "max",
                            id: "",
                            point,
                            cdf,
                        },
                    )?;
                }
                out.flush().map_err(|e| io_failure(None, e))?;
            }
            OutputFormat::Json => {
                let dump = SupportDump {
                    schema_version: SCHEMA_VERSION,
                    test,
                    pvalue: flavor,
                    tests: records
                        .iter()
                        .zip(&supports)
                        .map(|(r, s)| TestSupport {
                            id: &r.id,
                            points: s.points(),
                            cdf: s.cdf_values(),
                        })
                        .collect(),
                    max_cdf: MaxCdfDump {
                        grid: max_cdf.grid(),
                        values: max_cdf.values(),
                    },
                };
                serde_json::to_writer_pretty(&mut *w, &dump)
                    .map_err(|e| Failure::Data(e.to_string()))?;
                writeln!(w).map_err(|e| io_failure(None, e))?;
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct CompareReport {
    schema_version: u32,
    test: TestKind,
    alpha: f64,
    hypotheses: usize,
    r_cp: usize,
    r_mp: usize,
    condition_holds: bool,
    w_mp_at_order_stat: Option<f64>,
    mid_at_least_conventional: bool,
}

pub fn compare(args: CompareArgs) -> Outcome {
    let records = read_records(&args.input)?;
    let report = run_analysis(
        &records,
        args.input.test.into(),
        args.alpha,
        &Procedure::ALL,
    )?;
    let s = &report.summary;
    let c = &s.comparison;
    let out = CompareReport {
        schema_version: SCHEMA_VERSION,
        test: s.test,
        alpha: s.alpha,
        hypotheses: s.hypotheses,
        r_cp: c.r_cp,
        r_mp: c.r_mp,
        condition_holds: c.condition_holds,
        w_mp_at_order_stat: c.w_mp_at_order_stat,
        mid_at_least_conventional: c.r_mp >= c.r_cp,
    };
    with_output(args.output.output.as_deref(), |w| {
        match args.format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut *w, &out)
                    .map_err(|e| Failure::Data(e.to_string()))?;
                writeln!(w).map_err(|e| io_failure(None, e))?;
            }
            OutputFormat::Csv => {
                let mut csv_out = csv::Writer::from_writer(w);
                csv_out
                    .serialize(&out)
                    .map_err(|e| Failure::Data(e.to_string()))?;
                csv_out.flush().map_err(|e| io_failure(None, e))?;
            }
        }
        Ok(())
    })
}
