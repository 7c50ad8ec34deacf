//! Benchmark harness: schedule and simulate MLP models across dataflows,
//! emit machine-readable reports, and host the self-test suite.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use tcd_npe_core::bitmac::{conv_mac_stream, tcd_mac_stream, FixedWord, MacParams};
use tcd_npe_core::goldref::{self, random_inputs, MlpModel};
use tcd_npe_core::mapper::{self, ArrayShape};
use tcd_npe_core::npesim::{self, rlc, Dataflow, MemGeometry, SimConfig};
use tcd_npe_core::ppamodel::{self, PpaParams};

/// Benchmark topologies shipped with the harness (digit recognition,
/// census, FFT, wine, iris, poker hands, fashion images).
pub const BENCHMARK_SUITE: &[&str] = &[
    "784:700:10",
    "14:48:2",
    "8:140:2",
    "13:10:3",
    "4:10:5:3",
    "10:85:50:10",
    "728:256:128:100:10",
];

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub models: Vec<String>,
    pub batch: u32,
    pub shape: ArrayShape,
    pub geom: MemGeometry,
    pub dataflows: Vec<Dataflow>,
    pub ppa: PpaParams,
    pub out_dir: PathBuf,
    pub format: ReportFormat,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "both" => Ok(ReportFormat::Both),
            other => Err(format!("unknown format {other:?} (json, csv, both)")),
        }
    }
}

/// Parse a colon-separated topology like `784:700:10`.
pub fn parse_topology(text: &str) -> Result<Vec<usize>> {
    let fields: Vec<&str> = text.split(':').collect();
    if fields.len() < 2 {
        bail!("topology {text:?} needs at least an input and one layer");
    }
    fields
        .iter()
        .map(|tok| match tok.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("topology {text:?}: bad layer size {tok:?}"),
        })
        .collect()
}

pub fn parse_dataflows(text: &str) -> Result<Vec<Dataflow>> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(Dataflow::ALL.to_vec());
    }
    text.split(',')
        .map(|tok| tok.trim().parse::<Dataflow>().map_err(anyhow::Error::msg))
        .collect()
}

/// One (benchmark x dataflow) result row. CSV columns appear in field
/// order and must agree with the JSON field-for-field.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunRecord {
    pub benchmark: String,
    pub dataflow: String,
    pub batch: u32,
    pub rolls: u64,
    pub cycles: f64,
    pub exec_ns: f64,
    pub utilization: f64,
    pub pe_dynamic_pj: f64,
    pub pe_leakage_pj: f64,
    pub mem_leakage_pj: f64,
    pub other_leakage_pj: f64,
    pub mem_dynamic_pj: f64,
    pub total_energy_pj: f64,
    pub w_mem_reads: u64,
    pub fm_mem_reads: u64,
    pub fm_mem_writes: u64,
    pub rlc_bytes_in: u64,
}

pub const CSV_HEADER: &str = "benchmark,dataflow,batch,rolls,cycles,exec_ns,utilization,\
pe_dynamic_pj,pe_leakage_pj,mem_leakage_pj,other_leakage_pj,mem_dynamic_pj,total_energy_pj,\
w_mem_reads,fm_mem_reads,fm_mem_writes,rlc_bytes_in";

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.benchmark,
            self.dataflow,
            self.batch,
            self.rolls,
            self.cycles,
            self.exec_ns,
            self.utilization,
            self.pe_dynamic_pj,
            self.pe_leakage_pj,
            self.mem_leakage_pj,
            self.other_leakage_pj,
            self.mem_dynamic_pj,
            self.total_energy_pj,
            self.w_mem_reads,
            self.fm_mem_reads,
            self.fm_mem_writes,
            self.rlc_bytes_in
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub seed: u64,
    pub batch: u32,
    pub array_rows: u32,
    pub array_cols: u32,
    pub runs: Vec<RunRecord>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for run in &self.runs {
            let _ = writeln!(out, "{}", run.csv_row());
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Simulate one model once (bit-exact output-stationary run), verify it
/// against the golden forward pass, and derive per-dataflow records.
fn run_one_benchmark(
    topology: &str,
    spec: &RunSpec,
    model_seed: u64,
) -> Result<Vec<RunRecord>> {
    let layers = parse_topology(topology)?;
    let model = MlpModel::random(&layers, model_seed, -256, 255)
        .map_err(|e| anyhow::anyhow!("{topology}: {e}"))?;
    let inputs = random_inputs(spec.batch as usize, layers[0], model_seed ^ 0x5eed, -256, 255);

    let sim_cfg = SimConfig {
        shape: spec.shape,
        geom: spec.geom,
        dataflow: Dataflow::OsTcd,
        ..SimConfig::default()
    };
    let sim = npesim::run_model(&model, &inputs, &sim_cfg)
        .with_context(|| format!("simulating {topology}"))?;

    let gold = goldref::mlp_forward(&model, &inputs, sim_cfg.fraction_bits)
        .map_err(|e| anyhow::anyhow!("{topology}: {e}"))?;
    if sim.outputs != gold.outputs() {
        bail!("{topology}: simulator diverged from the golden forward pass");
    }

    let counters = &sim.counters;
    let rolls: u64 = counters.per_layer.iter().map(|l| l.rolls).sum();
    let work: u64 = counters
        .per_layer
        .iter()
        .map(|l| l.batches as u64 * l.neurons as u64)
        .sum();
    let utilization = work as f64 / (rolls * spec.shape.total_pes() as u64) as f64;

    let mut records = Vec::new();
    for &dataflow in &spec.dataflows {
        let energy = ppamodel::energy_report(counters, &spec.ppa, dataflow);
        records.push(RunRecord {
            benchmark: topology.to_string(),
            dataflow: dataflow.name().to_string(),
            batch: spec.batch,
            rolls,
            cycles: ppamodel::dataflow_cycles(counters, &spec.ppa, dataflow),
            exec_ns: energy.exec_time_ns,
            utilization,
            pe_dynamic_pj: energy.pe_dynamic_pj,
            pe_leakage_pj: energy.pe_leakage_pj,
            mem_leakage_pj: energy.mem_leakage_pj,
            other_leakage_pj: energy.other_leakage_pj,
            mem_dynamic_pj: energy.mem_dynamic_pj,
            total_energy_pj: energy.total_pj,
            w_mem_reads: counters.totals.w_mem_reads,
            fm_mem_reads: counters.totals.fm_mem_reads,
            fm_mem_writes: counters.totals.fm_mem_writes,
            rlc_bytes_in: counters.totals.rlc_bytes_in,
        });
    }
    Ok(records)
}

/// Run every (benchmark x dataflow) pair of a spec.
pub fn run_benchmarks(spec: &RunSpec) -> Result<Report> {
    let mut runs = Vec::new();
    for (i, topology) in spec.models.iter().enumerate() {
        runs.extend(run_one_benchmark(topology, spec, spec.seed.wrapping_add(i as u64))?);
    }
    Ok(Report {
        seed: spec.seed,
        batch: spec.batch,
        array_rows: spec.shape.rows,
        array_cols: spec.shape.cols,
        runs,
    })
}

/// Write the requested report files; returns the paths written.
pub fn write_reports(report: &Report, spec: &RunSpec) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&spec.out_dir)
        .with_context(|| format!("creating {}", spec.out_dir.display()))?;
    let mut written = Vec::new();
    if matches!(spec.format, ReportFormat::Json | ReportFormat::Both) {
        let path = spec.out_dir.join("report.json");
        std::fs::write(&path, report.to_json())?;
        written.push(path);
    }
    if matches!(spec.format, ReportFormat::Csv | ReportFormat::Both) {
        let path = spec.out_dir.join("report.csv");
        std::fs::write(&path, report.to_csv())?;
        written.push(path);
    }
    Ok(written)
}

fn check(name: &str, ok: bool, failures: &mut u32) {
    println!("selftest: {name:<42} {}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failures += 1;
    }
}

/// Bit-exact equivalence suite, printed one line per check.
pub fn run_selftest() -> Result<()> {
    use tcd_npe_core::goldref::exact_dot;

    let mut failures = 0u32;

    // Deferring MAC vs exact dot product on seeded random streams.
    {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xd07);
        let mut ok = true;
        for _ in 0..300 {
            let len = rng.gen_range(1..256);
            let pairs: Vec<(FixedWord, FixedWord)> = (0..len)
                .map(|_| (FixedWord::new(rng.gen()), FixedWord::new(rng.gen())))
                .collect();
            let got = tcd_mac_stream(&pairs);
            let conv = conv_mac_stream(&pairs);
            ok &= got.value == exact_dot(&pairs)
                && conv.value == got.value
                && got.cycles == pairs.len() as u64 + 1
                && conv.cycles == pairs.len() as u64;
        }
        check("mac stream equals exact dot product", ok, &mut failures);
    }

    // Exhaustive products at reduced width.
    {
        let params = MacParams::new(4, 16);
        let mut ok = true;
        for a in -8i32..=7 {
            for b in -8i32..=7 {
                let got = tcd_npe_core::bitmac::tcd_mac_stream_with(params, &[(a, b)]);
                ok &= got.value == (((a * b) as i64 as u64) & params.mask());
            }
        }
        check("exhaustive 4-bit products", ok, &mut failures);
    }

    // Improvement table against the reference cells.
    {
        let tcd = ppamodel::tcd_mac_ppa();
        let mut ok = true;
        for (name, thr, en) in reference_improvements() {
            let conv = ppamodel::mac_by_name(name).unwrap();
            let rows = ppamodel::improvement_table(&tcd, &conv, &[1, 10, 100, 1000]);
            for (i, row) in rows.iter().enumerate() {
                ok &= (row.throughput_improvement_pct.round() as i64 - thr[i]).abs() <= 1;
                ok &= (row.energy_improvement_pct.round() as i64 - en[i]).abs() <= 1;
            }
        }
        check("mac improvement table", ok, &mut failures);
    }

    // Scheduler optimality on a small sweep.
    {
        let shape = ArrayShape::new(6, 3);
        let mut ok = true;
        for b in 1..=6 {
            for n in 1..=20 {
                ok &= mapper::min_rolls(b, n, shape)
                    == mapper::brute_force_min_rolls(b, n, shape).unwrap();
            }
        }
        check("scheduler roll optimality", ok, &mut failures);
    }

    // End-to-end engine vs golden forward pass.
    {
        let mut ok = true;
        for topology in ["13:10:3", "4:10:5:3"] {
            let layers = parse_topology(topology)?;
            for batch in [1usize, 2] {
                let model = MlpModel::random(&layers, 42, -256, 255).unwrap();
                let inputs = random_inputs(batch, layers[0], 43, -256, 255);
                let gold = goldref::mlp_forward(&model, &inputs, 8).unwrap();
                for dataflow in [Dataflow::OsTcd, Dataflow::OsConv] {
                    let cfg = SimConfig {
                        dataflow,
                        ..SimConfig::default()
                    };
                    let sim = npesim::run_model(&model, &inputs, &cfg).unwrap();
                    ok &= sim.outputs == gold.outputs();
                }
            }
        }
        check("engine matches golden forward pass", ok, &mut failures);
    }

    // Transfer coding round trip.
    {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x41c);
        let mut ok = true;
        for _ in 0..1000 {
            let len = rng.gen_range(0..512);
            let data: Vec<u8> = (0..len).map(|_| rng.gen_range(0..4)).collect();
            ok &= rlc::rlc_decode(&rlc::rlc_encode(&data)).unwrap() == data;
        }
        check("run-length coding round trip", ok, &mut failures);
    }

    if failures > 0 {
        bail!("{failures} selftest check(s) failed");
    }
    println!("selftest: all checks passed");
    Ok(())
}

fn reference_improvements() -> [(&'static str, [i64; 4], [i64; 4]); 8] {
    [
        ("(BRx2, KS)", [25, 59, 62, 63], [-10, 40, 45, 45]),
        ("(BRx2, BK)", [23, 58, 62, 62], [5, 48, 52, 53]),
        ("(BRx8, BK)", [17, 55, 58, 59], [0, 45, 50, 50]),
        ("(BRx4, BK)", [14, 53, 57, 57], [7, 49, 53, 54]),
        ("(WAL, KS)", [5, 48, 52, 53], [-3, 44, 48, 49]),
        ("(WAL, BK)", [4, 48, 52, 52], [0, 45, 50, 50]),
        ("(BRx4, KS)", [-3, 44, 48, 49], [-27, 31, 36, 37]),
        ("(BRx8, KS)", [-7, 41, 46, 47], [-19, 35, 40, 41]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_parsing() {
        assert_eq!(parse_topology("14:48:2").unwrap(), vec![14, 48, 2]);
        assert_eq!(parse_topology("8:140:2").unwrap(), vec![8, 140, 2]);
        let err = parse_topology("x:3").unwrap_err().to_string();
        assert!(err.contains("\"x\""), "{err}");
        assert!(parse_topology("5").is_err());
        assert!(parse_topology("4:0:3").is_err());
    }

    #[test]
    fn dataflow_list_parsing() {
        assert_eq!(parse_dataflows("all").unwrap().len(), 4);
        assert_eq!(
            parse_dataflows("os-tcd,nlr").unwrap(),
            vec![Dataflow::OsTcd, Dataflow::Nlr]
        );
        assert!(parse_dataflows("bogus").is_err());
    }

    #[test]
    fn csv_and_json_agree_field_for_field() {
        let spec = RunSpec {
            geom: MemGeometry::default(),
            models: vec!["4:10:5:3".into()],
            batch: 2,
            shape: ArrayShape::new(6, 3),
            dataflows: Dataflow::ALL.to_vec(),
            ppa: PpaParams::default(),
            out_dir: PathBuf::from("unused"),
            format: ReportFormat::Both,
            seed: 7,
        };
        let report = run_benchmarks(&spec).unwrap();
        let csv = report.to_csv();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        let header: Vec<&str> = lines[0].split(',').collect();
        let runs = json["runs"].as_array().unwrap();
        assert_eq!(lines.len() - 1, runs.len());
        for (line, run) in lines[1..].iter().zip(runs) {
            for (field, cell) in header.iter().zip(line.split(',')) {
                let v = &run[*field];
                if let Some(s) = v.as_str() {
                    assert_eq!(cell, s, "{field}");
                } else if let Some(u) = v.as_u64() {
                    assert_eq!(cell.parse::<u64>().unwrap(), u, "{field}");
                } else {
                    let f = v.as_f64().unwrap();
                    assert_eq!(cell.parse::<f64>().unwrap(), f, "{field}");
                }
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let spec = RunSpec {
            geom: MemGeometry::default(),
            models: vec!["13:10:3".into()],
            batch: 1,
            shape: ArrayShape::new(16, 8),
            dataflows: vec![Dataflow::OsTcd],
            ppa: PpaParams::default(),
            out_dir: PathBuf::from("unused"),
            format: ReportFormat::Both,
            seed: 99,
        };
        let a = run_benchmarks(&spec).unwrap();
        let b = run_benchmarks(&spec).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn tiny_benchmark_rolls_match_oracle() {
        let shape = ArrayShape::new(16, 8);
        let spec = RunSpec {
            geom: MemGeometry::default(),
            models: vec!["4:10:5:3".into()],
            batch: 1,
            shape,
            dataflows: vec![Dataflow::OsTcd],
            ppa: PpaParams::default(),
            out_dir: PathBuf::from("unused"),
            format: ReportFormat::Both,
            seed: 5,
        };
        let report = run_benchmarks(&spec).unwrap();
        let want: u64 = [10u32, 5, 3]
            .iter()
            .map(|&u| mapper::brute_force_min_rolls(1, u, shape).unwrap())
            .sum();
        assert_eq!(report.runs[0].rolls, want);
    }
}
