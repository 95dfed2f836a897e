//! Task-list construction: which A tile multiplies which B tile, and in
//! what order the products are accumulated.
//!
//! The list holds only tile references, never products. Pairs are grouped
//! into segments, one per output tile, ordered by output coordinate and,
//! inside a segment, by the shared inner tile index.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tile_format::TiledMatrix;

/// Reference to one A tile and one B tile whose product feeds an output tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TilePair {
    pub a: u32,
    pub b: u32,
}

/// Sorted, segmented list of tile pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskList {
    pub pairs: Vec<TilePair>,
    /// `pairs[seg_offsets[s]..seg_offsets[s + 1]]` is segment `s`.
    pub seg_offsets: Vec<usize>,
    /// Output tile coordinate of each segment.
    pub out_coords: Vec<(u32, u32)>,
    /// Pair count before zero-product filtering.
    pub raw_pairs: usize,
}

impl TaskList {
    pub fn num_segments(&self) -> usize {
        self.out_coords.len()
    }

    pub fn segment(&self, s: usize) -> &[TilePair] {
        &self.pairs[self.seg_offsets[s]..self.seg_offsets[s + 1]]
    }
}

fn check_operands(a: &TiledMatrix, b: &TiledMatrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.num_tiles() > u32::MAX as usize || b.num_tiles() > u32::MAX as usize {
        return Err(Error::Dimension("more than 2^32 tiles in an operand".into()));
    }
    Ok(())
}

/// Lists every `(a, b)` with `tile_col(a) == tile_row(b)`, in A-tile order.
pub fn enumerate_pairs(a: &TiledMatrix, b: &TiledMatrix) -> Result<Vec<TilePair>> {
    check_operands(a, b)?;
    let b_rows = b.tile_row_offsets();
    let pairs = a
        .tiles()
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ia, ta)| {
            let k = ta.tile_col as usize;
            (b_rows[k]..b_rows[k + 1]).map(move |ib| TilePair {
                a: ia as u32,
                b: ib as u32,
            })
        })
        .collect();
    Ok(pairs)
}

/// Number of pairs [`enumerate_pairs`] would produce, without building them.
pub fn count_pairs(a: &TiledMatrix, b: &TiledMatrix) -> Result<usize> {
    check_operands(a, b)?;
    let b_rows = b.tile_row_offsets();
    Ok(a.tiles()
        .par_iter()
        .map(|t| b_rows[t.tile_col as usize + 1] - b_rows[t.tile_col as usize])
        .sum())
}

/// Boolean 8x8 product of two occupancy masks: bit `(i, j)` of the result
/// is set iff some `k` has `(i, k)` set in `a` and `(k, j)` set in `b`.
#[inline]
pub fn boolean_tile_mm(a: u64, b: u64) -> u64 {
    let mut out = 0u64;
    for i in 0..8 {
        let mut row = (a >> (8 * i)) & 0xff;
        let mut acc = 0u64;
        while row != 0 {
            let k = row.trailing_zeros();
            acc |= (b >> (8 * k)) & 0xff;
            row &= row - 1;
        }
        out |= acc << (8 * i);
    }
    out
}

/// Bit `k` set iff column `k` of the tile holds a nonzero.
#[inline]
pub fn column_occupancy(bitmap: u64) -> u8 {
    let x = bitmap | bitmap >> 32;
    let x = x | x >> 16;
    (x | x >> 8) as u8
}

/// Bit `k` set iff row `k` of the tile holds a nonzero.
#[inline]
pub fn row_occupancy(bitmap: u64) -> u8 {
    (0..8).fold(0u8, |m, k| if (bitmap >> (8 * k)) & 0xff != 0 { m | 1 << k } else { m })
}

/// True iff the boolean product of the two masks is nonzero.
#[inline]
pub fn has_nonzero_product(a: u64, b: u64) -> bool {
    column_occupancy(a) & row_occupancy(b) != 0
}

/// Drops pairs whose tile product is structurally zero. Order is preserved.
pub fn filter_zero_products(pairs: &[TilePair], a: &TiledMatrix, b: &TiledMatrix) -> Vec<TilePair> {
    let (at, bt) = (a.tiles(), b.tiles());
    pairs
        .par_iter()
        .copied()
        .filter(|p| has_nonzero_product(at[p.a as usize].bitmap, bt[p.b as usize].bitmap))
        .collect()
}

/// Number of pairs surviving the zero-product filter, without building them.
pub fn count_filtered_pairs(a: &TiledMatrix, b: &TiledMatrix) -> Result<usize> {
    check_operands(a, b)?;
    let b_rows = b.tile_row_offsets();
    let bt = b.tiles();
    Ok(a.tiles()
        .par_iter()
        .map(|ta| {
            let k = ta.tile_col as usize;
            bt[b_rows[k]..b_rows[k + 1]]
                .iter()
                .filter(|tb| has_nonzero_product(ta.bitmap, tb.bitmap))
                .count()
        })
        .sum())
}

// Rows with at most this many pairs are insertion-sorted.
const SHORT_ROW: usize = 32;

fn insertion_sort_by_key<T: Copy, K: Ord>(v: &mut [T], key: impl Fn(&T) -> K) {
    for i in 1..v.len() {
        let x = v[i];
        let kx = key(&x);
        let mut j = i;
        while j > 0 && key(&v[j - 1]) > kx {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
    }
}

/// Orders pairs by output tile `(tile_row(a), tile_col(b))`, ties broken by
/// the inner index `tile_col(a)`, and cuts the list into segments.
///
/// Pairs are first grouped by A tile-row (already the case for output of
/// [`enumerate_pairs`]); each row group is then sorted on its own, short
/// rows by insertion and long ones by merge sort.
pub fn sort_and_segment(mut pairs: Vec<TilePair>, a: &TiledMatrix, b: &TiledMatrix, raw_pairs: usize) -> TaskList {
    let (at, bt) = (a.tiles(), b.tiles());
    let out_row = |p: &TilePair| at[p.a as usize].tile_row;
    let key = |p: &TilePair| {
        let ta = &at[p.a as usize];
        (bt[p.b as usize].tile_col, ta.tile_col)
    };

    if !pairs.windows(2).all(|w| out_row(&w[0]) <= out_row(&w[1])) {
        pairs.par_sort_by_key(out_row);
    }
    pairs.par_chunk_by_mut(|x, y| out_row(x) == out_row(y)).for_each(|row| {
        if row.len() <= SHORT_ROW {
            insertion_sort_by_key(row, key);
        } else {
            row.sort_by_key(key);
        }
    });

    let coord = |p: &TilePair| (at[p.a as usize].tile_row, bt[p.b as usize].tile_col);
    let mut seg_offsets = Vec::new();
    let mut out_coords = Vec::new();
    for (n, p) in pairs.iter().enumerate() {
        let c = coord(p);
        if out_coords.last() != Some(&c) {
            seg_offsets.push(n);
            out_coords.push(c);
        }
    }
    seg_offsets.push(pairs.len());
    TaskList {
        pairs,
        seg_offsets,
        out_coords,
        raw_pairs,
    }
}

/// Enumerate, filter, sort and segment in one call.
pub fn build_task_list(a: &TiledMatrix, b: &TiledMatrix) -> Result<TaskList> {
    let raw = enumerate_pairs(a, b)?;
    let raw_pairs = raw.len();
    let kept = filter_zero_products(&raw, a, b);
    drop(raw);
    Ok(sort_and_segment(kept, a, b, raw_pairs))
}
