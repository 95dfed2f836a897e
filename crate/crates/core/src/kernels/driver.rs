use std::borrow::Cow;
use std::time::Instant;

use serde::Serialize;

use super::{compact, counting_pass, multiply_pass};
use crate::analytics::{memory_report, MemoryReport, RunSizes};
use crate::error::{Error, Result};
use crate::pipeline::{enumerate_pairs, filter_zero_products, sort_and_segment};
use crate::tile_format::{ElementKind, TiledMatrix};

/// Wall time per phase, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseTiming {
    pub task_list: f64,
    pub sort: f64,
    pub counting: f64,
    pub multiply: f64,
    pub compaction: f64,
    /// Includes allocations and any binary32 to binary16 operand conversion.
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpgemmOptions {
    /// Run segments two at a time through the diagonal 16x16 kernel.
    pub pairing: bool,
    /// Worker count; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl Default for SpgemmOptions {
    fn default() -> Self {
        SpgemmOptions {
            pairing: true,
            threads: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpgemmRun {
    pub output: TiledMatrix,
    pub timing: PhaseTiming,
    pub memory: MemoryReport,
    pub sizes: RunSizes,
}

/// `C = A * B` through the full tiled pipeline.
pub fn spgemm(a: &TiledMatrix, b: &TiledMatrix, opts: SpgemmOptions) -> Result<SpgemmRun> {
    with_threads(opts.threads, || run(a, Some(b), opts.pairing))
}

/// `C = A * A`.
pub fn spgemm_square(a: &TiledMatrix, opts: SpgemmOptions) -> Result<SpgemmRun> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension(format!(
            "squaring needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    with_threads(opts.threads, || run(a, None, opts.pairing))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Runtime(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

fn as_half(m: &TiledMatrix) -> Result<Cow<'_, TiledMatrix>> {
    Ok(match m.kind() {
        ElementKind::Half => Cow::Borrowed(m),
        ElementKind::Single => Cow::Owned(m.to_kind(ElementKind::Half)?),
    })
}

fn run(a: &TiledMatrix, b: Option<&TiledMatrix>, pairing: bool) -> Result<SpgemmRun> {
    let start = Instant::now();
    let a = as_half(a)?;
    let b_half = b.map(as_half).transpose()?;
    let b: &TiledMatrix = b_half.as_deref().unwrap_or(&a);

    let t = Instant::now();
    let raw = enumerate_pairs(&a, b)?;
    let raw_pairs = raw.len();
    let kept = filter_zero_products(&raw, &a, b);
    drop(raw);
    let task_list = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let filtered_pairs = kept.len();
    let tl = sort_and_segment(kept, &a, b, raw_pairs);
    let sort = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let cr = counting_pass(&a, b, &tl);
    let counting = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mr = multiply_pass(&a, b, &tl, &cr, pairing)?;
    let multiply = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let output = compact(&mr);
    let compaction = t.elapsed().as_secs_f64();
    let total = start.elapsed().as_secs_f64();

    let mut operand_tiles = a.num_tiles();
    let mut operand_elements = a.nnz();
    if b_half.is_some() {
        operand_tiles += b.num_tiles();
        operand_elements += b.nnz();
    }
    let sizes = RunSizes {
        operand_tiles,
        operand_elements,
        raw_pairs,
        filtered_pairs,
        segments: tl.num_segments(),
        counted_elements: cr.total_elements,
        output_tiles: output.num_tiles(),
        output_elements: output.nnz(),
    };
    Ok(SpgemmRun {
        output,
        timing: PhaseTiming {
            task_list,
            sort,
            counting,
            multiply,
            compaction,
            total,
        },
        memory: memory_report(&sizes),
        sizes,
    })
}
