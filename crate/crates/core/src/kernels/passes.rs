use rayon::prelude::*;

use super::{paired_tile_mm, tile_mm_reference};
use crate::error::{Error, Result};
use crate::pipeline::{boolean_tile_mm, TaskList, TilePair};
use crate::tile_format::{ElementKind, Tile8, TileEntry, TileKind, TiledMatrix};

/// Upper-bound sizing of every output tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountResult {
    /// Popcount of each segment's OR-accumulated boolean product.
    pub per_tile_count: Vec<u32>,
    /// Exclusive prefix sum of `per_tile_count`, one longer than it.
    pub elem_offsets: Vec<usize>,
    pub total_elements: usize,
    /// The boolean product masks the counts were taken from.
    pub bound_bitmaps: Vec<u64>,
}

/// Boolean simulation of the multiplication: which output slots can be
/// nonzero, ignoring cancellation.
pub fn counting_pass(a: &TiledMatrix, b: &TiledMatrix, tl: &TaskList) -> CountResult {
    let (at, bt) = (a.tiles(), b.tiles());
    let bound_bitmaps: Vec<u64> = (0..tl.num_segments())
        .into_par_iter()
        .map(|s| {
            tl.segment(s).iter().fold(0u64, |m, p| {
                m | boolean_tile_mm(at[p.a as usize].bitmap, bt[p.b as usize].bitmap)
            })
        })
        .collect();
    let per_tile_count: Vec<u32> = bound_bitmaps.iter().map(|m| m.count_ones()).collect();
    let mut elem_offsets = Vec::with_capacity(per_tile_count.len() + 1);
    let mut total = 0usize;
    elem_offsets.push(0);
    for &c in &per_tile_count {
        total += c as usize;
        elem_offsets.push(total);
    }
    CountResult {
        per_tile_count,
        elem_offsets,
        total_elements: total,
        bound_bitmaps,
    }
}

/// Output of the multiplication pass before compaction.
#[derive(Debug, Clone, PartialEq)]
pub struct MulResult {
    pub rows: usize,
    pub cols: usize,
    /// One entry per segment; `elem_index` is the counted slot start and
    /// `bitmap` may be zero for tiles that cancelled out.
    pub tiles: Vec<TileEntry>,
    /// `f32` values, segment `s` owning `elem_offsets[s]..elem_offsets[s + 1]`.
    /// Slots beyond a tile's realized count are zero.
    pub elements: Vec<f32>,
    pub elem_offsets: Vec<usize>,
    pub empty: Vec<bool>,
}

impl MulResult {
    pub fn realized_nnz(&self) -> usize {
        self.tiles.iter().map(TileEntry::nnz).sum()
    }
}

struct Operands<'a> {
    a: &'a TiledMatrix,
    b: &'a TiledMatrix,
}

impl Operands<'_> {
    fn load(&self, p: &TilePair, ta: &mut Tile8, tb: &mut Tile8) {
        self.a.expand_tile(p.a as usize, ta);
        self.b.expand_tile(p.b as usize, tb);
    }

    fn accumulate_one(&self, seg: &[TilePair]) -> Tile8 {
        let mut c = Tile8::zeros(TileKind::Accumulator);
        let mut ta = Tile8::zeros(TileKind::Half);
        let mut tb = Tile8::zeros(TileKind::Half);
        for p in seg {
            self.load(p, &mut ta, &mut tb);
            tile_mm_reference(&ta, &tb, &mut c);
        }
        c
    }

    // Two segments in lockstep; the shorter one is fed zero tiles.
    fn accumulate_two(&self, s0: &[TilePair], s1: &[TilePair]) -> (Tile8, Tile8) {
        let mut c0 = Tile8::zeros(TileKind::Accumulator);
        let mut c1 = Tile8::zeros(TileKind::Accumulator);
        let mut a0 = Tile8::zeros(TileKind::Half);
        let mut b0 = Tile8::zeros(TileKind::Half);
        let mut a1 = Tile8::zeros(TileKind::Half);
        let mut b1 = Tile8::zeros(TileKind::Half);
        for step in 0..s0.len().max(s1.len()) {
            for (seg, ta, tb) in [(s0, &mut a0, &mut b0), (s1, &mut a1, &mut b1)] {
                match seg.get(step) {
                    Some(p) => self.load(p, ta, tb),
                    None => {
                        ta.data = [0.0; 64];
                        tb.data = [0.0; 64];
                    }
                }
            }
            paired_tile_mm(&a0, &b0, &a1, &b1, &mut c0, &mut c1);
        }
        (c0, c1)
    }
}

/// Writes the nonzeros of `acc` in bit order into `slots` and returns the
/// realized bitmap.
fn extract(acc: &Tile8, slots: &mut [f32], coord: (u32, u32)) -> Result<u64> {
    let mut bitmap = 0u64;
    let mut n = 0;
    for (b, &v) in acc.data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Precision {
                tile_row: coord.0,
                tile_col: coord.1,
            });
        }
        if v != 0.0 {
            bitmap |= 1 << b;
            slots[n] = v;
            n += 1;
        }
    }
    Ok(bitmap)
}

/// Multiplies and accumulates every segment into its counted slots.
///
/// Both operands must be binary16-stored. With `pairing` set, consecutive
/// segments run two at a time through the diagonal 16x16 kernel; the result
/// is identical either way.
pub fn multiply_pass(
    a: &TiledMatrix,
    b: &TiledMatrix,
    tl: &TaskList,
    cr: &CountResult,
    pairing: bool,
) -> Result<MulResult> {
    if a.kind() != ElementKind::Half || b.kind() != ElementKind::Half {
        return Err(Error::Invariant("multiply_pass needs binary16-stored operands".into()));
    }
    let nseg = tl.num_segments();
    debug_assert_eq!(cr.per_tile_count.len(), nseg);
    let mut elements = vec![0.0f32; cr.total_elements];

    // Disjoint output windows, one per segment.
    let mut windows: Vec<&mut [f32]> = Vec::with_capacity(nseg);
    let mut rest = elements.as_mut_slice();
    for &count in &cr.per_tile_count {
        let (head, tail) = rest.split_at_mut(count as usize);
        windows.push(head);
        rest = tail;
    }

    let ops = Operands { a, b };
    let unit = if pairing { 2 } else { 1 };
    let bitmaps: Vec<u64> = windows
        .par_chunks_mut(unit)
        .enumerate()
        .map(|(u, win)| -> Result<Vec<u64>> {
            let s0 = u * unit;
            if win.len() == 2 {
                let (c0, c1) = ops.accumulate_two(tl.segment(s0), tl.segment(s0 + 1));
                let (w0, w1) = win.split_at_mut(1);
                Ok(vec![
                    extract(&c0, w0[0], tl.out_coords[s0])?,
                    extract(&c1, w1[0], tl.out_coords[s0 + 1])?,
                ])
            } else {
                let c = ops.accumulate_one(tl.segment(s0));
                Ok(vec![extract(&c, win[0], tl.out_coords[s0])?])
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let tiles = bitmaps
        .iter()
        .enumerate()
        .map(|(s, &bitmap)| TileEntry {
            tile_row: tl.out_coords[s].0,
            tile_col: tl.out_coords[s].1,
            elem_index: cr.elem_offsets[s],
            bitmap,
        })
        .collect();
    let empty = bitmaps.iter().map(|&m| m == 0).collect();
    Ok(MulResult {
        rows: a.rows(),
        cols: b.cols(),
        tiles,
        elements,
        elem_offsets: cr.elem_offsets.clone(),
        empty,
    })
}

/// Drops empty tiles and packs the element array down to realized values.
pub fn compact(mr: &MulResult) -> TiledMatrix {
    let mut tiles = Vec::with_capacity(mr.tiles.len());
    let mut elements = Vec::with_capacity(mr.realized_nnz());
    for (t, empty) in mr.tiles.iter().zip(&mr.empty) {
        if *empty {
            continue;
        }
        let start = elements.len();
        elements.extend_from_slice(&mr.elements[t.elem_index..t.elem_index + t.nnz()]);
        tiles.push(TileEntry {
            elem_index: start,
            ..*t
        });
    }
    TiledMatrix::from_parts_unchecked(mr.rows, mr.cols, ElementKind::Single, tiles, elements)
}
