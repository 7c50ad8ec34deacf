use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use tcd_npe_cli::{
    parse_dataflows, parse_topology, run_benchmarks, run_selftest, write_reports, RunSpec,
    BENCHMARK_SUITE,
};
use tcd_npe_core::mapper::ArrayShape;
use tcd_npe_core::npesim::MemGeometry;
use tcd_npe_core::ppamodel::{load_ppa_file, PpaParams};

/// Benchmark harness for the deferring-MAC neural processing engine.
#[derive(Debug, Parser)]
#[command(name = "tcd-npe", version, about)]
struct Args {
    /// MLP topology such as 784:700:10; repeat for several models.
    /// Defaults to the built-in benchmark suite.
    #[arg(long = "model")]
    models: Vec<String>,

    /// Batches to process per model.
    #[arg(long, default_value_t = 1)]
    batch: u32,

    /// PE-array rows (MAC groups).
    #[arg(long, default_value_t = 16)]
    rows: u32,

    /// MACs per group.
    #[arg(long, default_value_t = 8)]
    cols: u32,

    /// Dataflows to report: os-tcd, os-conv, nlr, rna, all, or a
    /// comma-separated list.
    #[arg(long, default_value = "all")]
    dataflow: String,

    /// Parameter file overriding the built-in PPA defaults.
    #[arg(long, env = "TCDNPE_PPA")]
    ppa: Option<PathBuf>,

    /// Report output directory.
    #[arg(long, default_value = "reports")]
    out: PathBuf,

    /// Report format: json, csv, or both.
    #[arg(long, default_value = "both")]
    format: String,

    /// Seed for weight and input generation.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Run the bit-exact equivalence suite instead of benchmarks.
    #[arg(long, default_value_t = false)]
    selftest: bool,
}

fn run(args: Args) -> Result<()> {
    if args.selftest {
        return run_selftest();
    }

    let models = if args.models.is_empty() {
        BENCHMARK_SUITE.iter().map(|s| s.to_string()).collect()
    } else {
        args.models.clone()
    };
    for model in &models {
        parse_topology(model)?;
    }
    let ppa = match &args.ppa {
        Some(path) => load_ppa_file(path).map_err(anyhow::Error::msg)?,
        None => PpaParams::default(),
    };
    let spec = RunSpec {
        geom: MemGeometry::default(),
        models,
        batch: args.batch,
        shape: ArrayShape::new(args.rows, args.cols),
        dataflows: parse_dataflows(&args.dataflow)?,
        ppa,
        out_dir: args.out.clone(),
        format: args.format.parse().map_err(anyhow::Error::msg)?,
        seed: args.seed,
    };

    let report = run_benchmarks(&spec)?;
    let written = write_reports(&report, &spec)?;
    for run in &report.runs {
        println!(
            "{:<20} {:<8} rolls={:<6} cycles={:<12} exec={:.1} ns energy={:.1} pJ",
            run.benchmark, run.dataflow, run.rolls, run.cycles, run.exec_ns, run.total_energy_pj
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
