//! Command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analytics::{advise_with, compute_stats, MatrixStats, MemoryReport, RatioBasis};
use crate::error::{Error, Result};
use crate::kernels::{spgemm_square, PhaseTiming, SpgemmOptions, SpgemmRun};
use crate::oracle::{dense_spgemm_fp64, dense_spgemm_mixed_ordered, smape};
use crate::tile_format::{read_matrix_market, read_tiled, write_tiled, ElementCoo, ElementKind, TiledMatrix, MAGIC};

#[derive(Debug, Parser)]
#[command(name = "tilemul", version, about = "Bitmap-tiled sparse matrix multiplication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a Matrix Market file to the tiled binary format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Precision::Fp16)]
        precision: Precision,
    },
    /// Compute A * A and write the result as a tiled binary file.
    Square {
        /// Matrix Market or tiled binary input.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write a JSON run report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the SMAPE of the pipeline result against a reference product.
    Compare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Fp64)]
        mode: Mode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print size and density statistics.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print which approaches the tiled method is expected to beat.
    Advise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: bool,
        /// Tile-pair count used in the intermediate-product ratio.
        #[arg(long, value_enum, default_value_t = Ratio::Filtered)]
        ratio: Ratio,
    },
    /// Time the phases of A * A over several runs and append a CSV row.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
        iters: u32,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub pairing: Switch,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, env = "TILEMUL_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

impl RunArgs {
    fn options(&self) -> SpgemmOptions {
        SpgemmOptions {
            pairing: self.pairing == Switch::On,
            threads: self.threads.map(|n| n as usize),
        }
    }

    fn thread_count(&self) -> usize {
        self.threads
            .map(|n| n as usize)
            .unwrap_or_else(rayon::current_num_threads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    Fp16,
    Fp32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fp64,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ratio {
    Filtered,
    Raw,
}

/// JSON summary of one `square` run.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub matrix_name: String,
    pub dims: usize,
    pub nnz_a: usize,
    pub nnz_c: usize,
    pub timing: PhaseTiming,
    pub memory: MemoryReport,
    /// Percent.
    pub smape_vs_fp64: f64,
    pub thread_count: usize,
    /// The pipeline draws no random numbers; always 0.
    pub seed: u64,
}

pub const BENCH_HEADER: [&str; 11] = [
    "matrix",
    "threads",
    "iters",
    "task_list",
    "sort",
    "counting",
    "multiply",
    "compaction",
    "total",
    "peak_bytes",
    "output_sha256",
];

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Convert {
            input,
            output,
            precision,
        } => {
            let coo = read_matrix_market(&input)?;
            let kind = match precision {
                Precision::Fp16 => ElementKind::Half,
                Precision::Fp32 => ElementKind::Single,
            };
            let m = TiledMatrix::from_element_coo(&coo, kind, false)?;
            fs::write(&output, encode(&m)?)?;
            writeln!(out, "tiles: {}", m.num_tiles())?;
            writeln!(out, "elements: {}", m.nnz())?;
        }
        Command::Square {
            input,
            output,
            run,
            report,
        } => {
            let (a, reference) = load_operand(&input)?;
            let result = spgemm_square(&a, run.options())?;
            let bytes = encode(&result.output)?;
            fs::write(&output, &bytes)?;
            let fp64 = dense_spgemm_fp64(&reference, &reference)?;
            let report_data = RunReport {
                matrix_name: matrix_name(&input),
                dims: a.rows(),
                nnz_a: a.nnz(),
                nnz_c: result.output.nnz(),
                timing: result.timing,
                memory: result.memory,
                smape_vs_fp64: smape(&result.output.to_element_coo(), &fp64)?,
                thread_count: run.thread_count(),
                seed: 0,
            };
            writeln!(out, "nnzC: {}", report_data.nnz_c)?;
            writeln!(out, "total: {:.6} s", report_data.timing.total)?;
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&report_data).map_err(|e| Error::Runtime(e.to_string()))?;
                fs::write(path, json + "\n")?;
            }
        }
        Command::Compare { input, mode, run } => {
            let (a, reference) = load_operand(&input)?;
            let result = spgemm_square(&a, run.options())?;
            let want = match mode {
                Mode::Fp64 => dense_spgemm_fp64(&reference, &reference)?,
                Mode::Mixed => dense_spgemm_mixed_ordered(&reference, &reference)?,
            };
            let s = smape(&result.output.to_element_coo(), &want)?;
            let label = match mode {
                Mode::Fp64 => "fp64",
                Mode::Mixed => "mixed",
            };
            writeln!(out, "SMAPE vs {label} reference: {s}%")?;
        }
        Command::Stats { input, json } => {
            let stats = stats_of(&input)?;
            if json {
                writeln!(out, "{}", to_json(&stats)?)?;
            } else {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(MatrixStats::CSV_HEADER)
                    .and_then(|_| w.write_record(stats.csv_record(&matrix_name(&input))))
                    .map_err(csv_error)?;
                out.write_all(&w.into_inner().map_err(|e| Error::Runtime(e.to_string()))?)?;
            }
        }
        Command::Advise { input, json, ratio } => {
            let stats = stats_of(&input)?;
            let basis = match ratio {
                Ratio::Filtered => RatioBasis::Filtered,
                Ratio::Raw => RatioBasis::Raw,
            };
            let advice = advise_with(&stats, basis);
            if json {
                writeln!(out, "{}", to_json(&advice)?)?;
            } else {
                write!(out, "{advice}")?;
            }
        }
        Command::Bench { input, iters, run, csv } => {
            let (a, _) = load_operand(&input)?;
            let opts = run.options();
            spgemm_square(&a, opts)?;
            let runs = (0..iters)
                .map(|_| spgemm_square(&a, opts))
                .collect::<Result<Vec<_>>>()?;
            let row = bench_row(&matrix_name(&input), run.thread_count(), &runs)?;
            append_csv(&csv, &row)?;
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

fn encode(m: &TiledMatrix) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_tiled(m, &mut bytes)?;
    Ok(bytes)
}

/// Reads a Matrix Market or tiled binary operand, returning it stored as
/// binary16 along with the values the `f64` reference should use.
///
/// Matrix Market values are rounded straight to binary16 so the mixed
/// reference sees exactly the same operand.
fn load_operand(path: &Path) -> Result<(TiledMatrix, ElementCoo)> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        let m = read_tiled(&bytes)?;
        let coo = m.to_element_coo();
        Ok((m.to_kind(ElementKind::Half)?, coo))
    } else {
        let coo = crate::tile_format::parse_matrix_market(bytes.as_slice())?;
        let m = TiledMatrix::from_element_coo(&coo, ElementKind::Half, false)?;
        Ok((m, coo))
    }
}

fn stats_of(path: &Path) -> Result<MatrixStats> {
    let coo = read_matrix_market(path)?;
    // binary32 storage keeps the pattern of every finite input
    let m = TiledMatrix::from_element_coo(&coo, ElementKind::Single, false)?;
    compute_stats(&m, m.rows() == m.cols())
}

fn matrix_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Runtime(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Runtime(format!("csv: {e}"))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// One CSV row of per-phase median times over `runs`.
pub fn bench_row(name: &str, threads: usize, runs: &[SpgemmRun]) -> Result<Vec<String>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Runtime("bench needs at least one run".into()))?;
    let phase = |f: fn(&PhaseTiming) -> f64| format!("{:.9}", median(runs.iter().map(|r| f(&r.timing)).collect()));
    let hash = hex::encode(Sha256::digest(encode(&first.output)?));
    Ok(vec![
        name.to_string(),
        threads.to_string(),
        runs.len().to_string(),
        phase(|t| t.task_list),
        phase(|t| t.sort),
        phase(|t| t.counting),
        phase(|t| t.multiply),
        phase(|t| t.compaction),
        phase(|t| t.total),
        first.memory.peak.to_string(),
        hash,
    ])
}

/// Appends `row`, writing the header first when the file is new or empty.
fn append_csv(path: &Path, row: &[String]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(BENCH_HEADER).map_err(csv_error)?;
    }
    w.write_record(row).map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

/// Entry point for the binary: runs and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SpgemmOptions;

    fn run_args(args: &[&str]) -> (Result<()>, String) {
        let mut out = Vec::new();
        let cli = Cli::try_parse_from(std::iter::once("tilemul").chain(args.iter().copied())).unwrap();
        let r = run(cli, &mut out);
        (r, String::from_utf8(out).unwrap())
    }

    fn write_mtx(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(vec![3.0]), 3.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![5.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn convert_one_entry() {
        let dir = tempfile::tempdir().unwrap();
        let mtx = write_mtx(
            dir.path(),
            "one.mtx",
            "%%MatrixMarket matrix coordinate real general\n9 9 1\n9 9 2.5\n",
        );
        let out = dir.path().join("one.tspz");
        let (r, text) = run_args(&[
            "convert",
            "--input",
            mtx.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        r.unwrap();
        assert!(text.contains("tiles: 1"));
        let m = read_tiled(&fs::read(&out).unwrap()).unwrap();
        assert_eq!(m.num_tiles(), 1);
        assert_eq!(m.tiles()[0].key(), (1, 1));
        assert_eq!(m.elements(), &[2.5]);
    }

    #[test]
    fn convert_out_of_range_for_fp16_only() {
        let dir = tempfile::tempdir().unwrap();
        let mtx = write_mtx(
            dir.path(),
            "big.mtx",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1e6\n",
        );
        let out = dir.path().join("big.tspz");
        let (r, _) = run_args(&[
            "convert",
            "--input",
            mtx.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(r.unwrap_err().exit_code(), 3);
        let (r, _) = run_args(&[
            "convert",
            "--input",
            mtx.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--precision",
            "fp32",
        ]);
        r.unwrap();
    }

    #[test]
    fn bench_row_shape() {
        let a = TiledMatrix::identity(16, ElementKind::Half);
        let runs: Vec<_> = (0..3)
            .map(|_| spgemm_square(&a, SpgemmOptions::default()).unwrap())
            .collect();
        let row = bench_row("id", 1, &runs).unwrap();
        assert_eq!(row.len(), BENCH_HEADER.len());
        assert_eq!(row[2], "3");
        let total: f64 = row[8].parse().unwrap();
        let multiply: f64 = row[6].parse().unwrap();
        assert!(total >= multiply);
        assert_eq!(row[10].len(), 64);
        assert!(bench_row("id", 1, &[]).is_err());
    }

    #[test]
    fn stats_csv_has_header_and_row() {
        let dir = tempfile::tempdir().unwrap();
        let mtx = write_mtx(
            dir.path(),
            "d.mtx",
            "%%MatrixMarket matrix coordinate pattern general\n3 3 2\n1 1\n2 3\n",
        );
        let (r, text) = run_args(&["stats", "--input", mtx.to_str().unwrap()]);
        r.unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("matrix,dims,nnzA,nnzC"));
        assert!(lines[1].starts_with("d,3,2,1,"));
    }
}
