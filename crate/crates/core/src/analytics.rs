//! Matrix statistics, memory accounting and approach selection.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::dense_spgemm_fp64;
use crate::pipeline::{count_filtered_pairs, count_pairs};
use crate::tile_format::{ElementKind, TiledMatrix, HEADER_BYTES, TILE, TILE_RECORD_BYTES};

/// Size and structure summary of a matrix and of its square.
///
/// The `nnz_c*` fields are `None` unless the square was analysed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatrixStats {
    pub dims: usize,
    pub nnz_a: usize,
    pub nnz_c: Option<usize>,
    /// Element-level intermediate products of `A * A`.
    pub nnz_cbar_elements: Option<usize>,
    pub nnz_c_tiles: Option<usize>,
    /// Tile pairs before the zero-product filter.
    pub nnz_cbar_tiles_raw: Option<usize>,
    /// Tile pairs after the zero-product filter.
    pub nnz_cbar_tiles_filtered: Option<usize>,
    pub avg_row: f64,
    pub density_median: f64,
    pub density_mean: f64,
    pub density_std: f64,
}

impl MatrixStats {
    /// CSV header, columns in the order of the statistics table.
    pub const CSV_HEADER: [&'static str; 12] = [
        "matrix",
        "dims",
        "nnzA",
        "nnzC",
        "nnzCbarElements",
        "nnzCtiles",
        "nnzCbarTilesRaw",
        "nnzCbarTilesFiltered",
        "avgRow",
        "densityMedian",
        "densityMean",
        "densityStd",
    ];

    pub fn csv_record(&self, name: &str) -> Vec<String> {
        let opt = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
        vec![
            name.to_string(),
            self.dims.to_string(),
            self.nnz_a.to_string(),
            opt(self.nnz_c),
            opt(self.nnz_cbar_elements),
            opt(self.nnz_c_tiles),
            opt(self.nnz_cbar_tiles_raw),
            opt(self.nnz_cbar_tiles_filtered),
            format!("{:.4}", self.avg_row),
            format!("{}", self.density_median),
            format!("{:.4}", self.density_mean),
            format!("{:.4}", self.density_std),
        ]
    }
}

/// Per-row nonzero counts of a tiled matrix.
fn row_counts(a: &TiledMatrix) -> Vec<usize> {
    let mut counts = vec![0usize; a.rows()];
    for t in a.tiles() {
        for r in 0..TILE {
            let n = ((t.bitmap >> (8 * r)) & 0xff).count_ones() as usize;
            if n > 0 {
                counts[t.tile_row as usize * TILE + r] += n;
            }
        }
    }
    counts
}

/// Element-level intermediate product count of `A * A`: every nonzero
/// `a(i, j)` meets `nnz(row j)` entries of the second operand.
fn intermediate_products(a: &TiledMatrix, rows: &[usize]) -> usize {
    let mut total = 0usize;
    for t in a.tiles() {
        let mut rest = t.bitmap;
        while rest != 0 {
            let b = rest.trailing_zeros() as usize;
            total += rows[t.tile_col as usize * TILE + b % TILE];
            rest &= rest - 1;
        }
    }
    total
}

/// Lower median, mean and population standard deviation of tile popcounts.
fn density_summary(a: &TiledMatrix) -> (f64, f64, f64) {
    let mut pops: Vec<u32> = a.tiles().iter().map(|t| t.bitmap.count_ones()).collect();
    if pops.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    pops.sort_unstable();
    let n = pops.len() as f64;
    let median = pops[(pops.len() - 1) / 2] as f64;
    let mean = pops.iter().map(|&p| p as f64).sum::<f64>() / n;
    let var = pops.iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / n;
    (median, mean, var.sqrt())
}

/// Statistics of `a`; with `square_products`, also of `A * A`.
///
/// `nnz_c` and `nnz_c_tiles` come from the positions of the `f64` reference
/// product, so exact cancellation in `f64` removes entries.
pub fn compute_stats(a: &TiledMatrix, square_products: bool) -> Result<MatrixStats> {
    let dims = a.rows();
    let nnz_a = a.nnz();
    let avg_row = if dims == 0 { 0.0 } else { nnz_a as f64 / dims as f64 };
    let (density_median, density_mean, density_std) = density_summary(a);
    let mut stats = MatrixStats {
        dims,
        nnz_a,
        nnz_c: None,
        nnz_cbar_elements: None,
        nnz_c_tiles: None,
        nnz_cbar_tiles_raw: None,
        nnz_cbar_tiles_filtered: None,
        avg_row,
        density_median,
        density_mean,
        density_std,
    };
    if !square_products {
        return Ok(stats);
    }
    if a.rows() != a.cols() {
        return Err(Error::Dimension(format!(
            "square statistics need a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    stats.nnz_cbar_elements = Some(intermediate_products(a, &row_counts(a)));
    stats.nnz_cbar_tiles_raw = Some(count_pairs(a, a)?);
    stats.nnz_cbar_tiles_filtered = Some(count_filtered_pairs(a, a)?);

    let coo = a.to_element_coo();
    let c = dense_spgemm_fp64(&coo, &coo)?;
    let tiles: BTreeSet<(usize, usize)> = c.entries().iter().map(|&(r, c, _)| (r / TILE, c / TILE)).collect();
    stats.nnz_c = Some(c.nnz());
    stats.nnz_c_tiles = Some(tiles.len());
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Approach {
    #[serde(rename = "cuSPARSE")]
    CuSparse,
    #[serde(rename = "CUSP")]
    Cusp,
    #[serde(rename = "RMerge2")]
    RMerge2,
    #[serde(rename = "Nsparse")]
    Nsparse,
    #[serde(rename = "AC-SpGEMM")]
    AcSpgemm,
    #[serde(rename = "spECK")]
    Speck,
    #[serde(rename = "global")]
    Global,
    #[serde(rename = "globalRelaxed")]
    GlobalRelaxed,
}

impl Approach {
    pub const ALL: [Approach; 8] = [
        Approach::CuSparse,
        Approach::Cusp,
        Approach::RMerge2,
        Approach::Nsparse,
        Approach::AcSpgemm,
        Approach::Speck,
        Approach::Global,
        Approach::GlobalRelaxed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::CuSparse => "cuSPARSE",
            Approach::Cusp => "CUSP",
            Approach::RMerge2 => "RMerge2",
            Approach::Nsparse => "Nsparse",
            Approach::AcSpgemm => "AC-SpGEMM",
            Approach::Speck => "spECK",
            Approach::Global => "global",
            Approach::GlobalRelaxed => "globalRelaxed",
        }
    }
}

/// Which tile-pair count the intermediate-product ratio divides by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioBasis {
    #[default]
    Filtered,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AdviceEntry {
    pub approach: Approach,
    /// True when the tiled approach is expected to beat `approach`.
    pub recommended: bool,
    pub condition: &'static str,
    /// The condition with this matrix's numbers filled in.
    pub evaluated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Advice {
    pub ratio_basis: RatioBasis,
    pub entries: Vec<AdviceEntry>,
}

impl Advice {
    pub fn get(&self, approach: Approach) -> &AdviceEntry {
        self.entries
            .iter()
            .find(|e| e.approach == approach)
            .expect("every approach is evaluated")
    }

    pub fn recommended(&self, approach: Approach) -> bool {
        self.get(approach).recommended
    }
}

impl fmt::Display for Advice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:<6} {:<40} evaluated", "versus", "use", "condition")?;
        for e in &self.entries {
            let verdict = if e.recommended { "yes" } else { "no" };
            writeln!(
                f,
                "{:<14} {:<6} {:<40} {}",
                e.approach.name(),
                verdict,
                e.condition,
                e.evaluated
            )?;
        }
        Ok(())
    }
}

pub fn advise(s: &MatrixStats) -> Advice {
    advise_with(s, RatioBasis::Filtered)
}

/// Evaluates the selection thresholds against `s`.
pub fn advise_with(s: &MatrixStats, basis: RatioBasis) -> Advice {
    let nnz = s.nnz_a;
    let row = s.avg_row;
    let tiles = match basis {
        RatioBasis::Filtered => s.nnz_cbar_tiles_filtered,
        RatioBasis::Raw => s.nnz_cbar_tiles_raw,
    };
    // ratio tests in integers: cbar / tiles >= 1  <=>  cbar >= tiles, etc.
    let ratio = match (s.nnz_cbar_elements, tiles) {
        (Some(cbar), Some(t)) if t > 0 => Some((cbar, t)),
        _ => None,
    };
    let ratio_text = |op: &str, rhs: usize| match ratio {
        Some((cbar, t)) => format!("{cbar} / {t} = {:.3} {op} {rhs}", cbar as f64 / t as f64),
        None => "ratio unavailable".to_string(),
    };
    let rows_and_size = |limit: usize| (row > 42.0 && nnz > limit, format!("{row:.3} > 42 AND {nnz} > {limit}"));

    let mut entries = Vec::with_capacity(Approach::ALL.len());
    for approach in Approach::ALL {
        let (recommended, condition, evaluated) = match approach {
            Approach::CuSparse => (nnz > 200_000, "NNZ(A) > 200000", format!("{nnz} > 200000")),
            Approach::Cusp => (
                ratio.is_some_and(|(cbar, t)| cbar >= t),
                "NNZ(Cbar) / NNZ(Cbar_tiles) >= 1",
                ratio_text(">=", 1),
            ),
            Approach::RMerge2 | Approach::Nsparse => {
                let (ok, text) = rows_and_size(100_000);
                (ok, "avgRow > 42 AND NNZ(A) > 100000", text)
            }
            Approach::AcSpgemm => (
                ratio.is_some_and(|(cbar, t)| cbar > 9 * t),
                "NNZ(Cbar) / NNZ(Cbar_tiles) > 9",
                ratio_text(">", 9),
            ),
            Approach::Speck | Approach::Global => {
                let (ok, text) = rows_and_size(300_000);
                (ok, "avgRow > 42 AND NNZ(A) > 300000", text)
            }
            Approach::GlobalRelaxed => (
                row > 21.0 && nnz > 300_000,
                "avgRow > 21 AND NNZ(A) > 300000",
                format!("{row:.3} > 21 AND {nnz} > 300000"),
            ),
        };
        entries.push(AdviceEntry {
            approach,
            recommended,
            condition,
            evaluated,
        });
    }
    Advice {
        ratio_basis: basis,
        entries,
    }
}

/// Sizes of the structures one multiplication run allocates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSizes {
    /// Tiles and elements over the distinct binary16 operands.
    pub operand_tiles: usize,
    pub operand_elements: usize,
    pub raw_pairs: usize,
    pub filtered_pairs: usize,
    pub segments: usize,
    pub counted_elements: usize,
    pub output_tiles: usize,
    pub output_elements: usize,
}

/// Byte accounting per structure and per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryReport {
    pub input: usize,
    pub task_list: usize,
    pub counting: usize,
    pub pre_compaction: usize,
    pub output: usize,
    pub phases: PhaseBytes,
    pub peak: usize,
}

/// Bytes live during each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseBytes {
    pub task_list: usize,
    pub sort: usize,
    pub counting: usize,
    pub multiply: usize,
    pub compaction: usize,
}

/// Two `u32` tile indices.
pub const PAIR_BYTES: usize = 8;
const OFFSET_BYTES: usize = 8;
const COORD_BYTES: usize = 8;
const COUNT_BYTES: usize = 4;
const BITMAP_BYTES: usize = 8;
const FLAG_BYTES: usize = 1;

/// Serialized size of a tiled matrix with the given shape.
pub fn matrix_bytes(tiles: usize, elements: usize, kind: ElementKind) -> usize {
    HEADER_BYTES + tiles * TILE_RECORD_BYTES + elements * kind.byte_width()
}

/// Accounts the bytes of each run structure using the on-disk record
/// sizes, and the bytes live in each phase:
///
/// - task list: operands, raw and filtered pair lists
/// - sort: operands, task list
/// - counting: operands, task list, counting arrays
/// - multiply: operands, task list, counting arrays, uncompacted output
/// - compaction: operands, counting arrays, uncompacted and final output
pub fn memory_report(s: &RunSizes) -> MemoryReport {
    let input = matrix_bytes(s.operand_tiles, s.operand_elements, ElementKind::Half);
    let task_list = s.filtered_pairs * PAIR_BYTES + (s.segments + 1) * OFFSET_BYTES + s.segments * COORD_BYTES;
    let counting = s.segments * (COUNT_BYTES + BITMAP_BYTES) + (s.segments + 1) * OFFSET_BYTES;
    let pre_compaction = matrix_bytes(s.segments, s.counted_elements, ElementKind::Single) + s.segments * FLAG_BYTES;
    let output = matrix_bytes(s.output_tiles, s.output_elements, ElementKind::Single);
    let phases = PhaseBytes {
        task_list: input + (s.raw_pairs + s.filtered_pairs) * PAIR_BYTES,
        sort: input + task_list,
        counting: input + task_list + counting,
        multiply: input + task_list + counting + pre_compaction,
        compaction: input + counting + pre_compaction + output,
    };
    let peak = [
        phases.task_list,
        phases.sort,
        phases.counting,
        phases.multiply,
        phases.compaction,
    ]
    .into_iter()
    .max()
    .unwrap_or(0);
    MemoryReport {
        input,
        task_list,
        counting,
        pre_compaction,
        output,
        phases,
        peak,
    }
}
