//! Bitmap-tiled sparse matrix storage.
//!
//! The matrix is cut into an 8x8 grid. Every block holding at least one
//! nonzero becomes a [`TileEntry`]: its grid coordinates, a 64-bit occupancy
//! mask and the offset of its first value in the shared element array.
//!
//! Bit `8 * r + c` of the mask (bit 0 least significant) marks element
//! `(r, c)` of the tile. The values of one tile are stored contiguously in
//! ascending bit order, so the value for bit `b` lives at
//! `elem_index + popcount(bitmap & ((1 << b) - 1))`.

mod binary;
mod coo;
mod mtx;

pub use binary::{
    read_tiled, read_tiled_binary, write_tiled, write_tiled_binary, HEADER_BYTES, MAGIC, TILE_RECORD_BYTES, VERSION,
};
pub use coo::ElementCoo;
pub use mtx::{parse_matrix_market, read_matrix_market, write_matrix_market};

use crate::error::{Error, Result};
use crate::half::{is_half_representable, round_to_half, round_to_single};

/// Edge length of a tile.
pub const TILE: usize = 8;
/// Number of slots in a tile.
pub const TILE_AREA: usize = TILE * TILE;

/// Precision the element array is stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// binary16 values (held as `f32` in memory, `u16` bit patterns on disk).
    Half,
    /// binary32 values.
    Single,
}

impl ElementKind {
    pub fn byte_width(self) -> usize {
        match self {
            ElementKind::Half => 2,
            ElementKind::Single => 4,
        }
    }

    fn round(self, x: f64) -> Result<f64> {
        match self {
            ElementKind::Half => round_to_half(x),
            ElementKind::Single => round_to_single(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileEntry {
    pub tile_row: u32,
    pub tile_col: u32,
    pub elem_index: usize,
    pub bitmap: u64,
}

impl TileEntry {
    pub fn nnz(&self) -> usize {
        self.bitmap.count_ones() as usize
    }

    /// Grid key ordering tiles row-major.
    #[inline]
    pub fn key(&self) -> (u32, u32) {
        (self.tile_row, self.tile_col)
    }
}

/// Offset of the value for `bit` inside a tile's element run.
#[inline]
pub fn element_slot(bitmap: u64, bit: u32) -> usize {
    (bitmap & ((1u64 << bit) - 1)).count_ones() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileKind {
    /// 0/1 occupancy values.
    Boolean,
    /// binary16-representable values.
    Half,
    /// binary32 accumulator.
    Accumulator,
}

/// Dense 8x8 scratch tile, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile8 {
    pub kind: TileKind,
    pub data: [f32; TILE_AREA],
}

impl Tile8 {
    pub fn zeros(kind: TileKind) -> Self {
        Tile8 {
            kind,
            data: [0.0; TILE_AREA],
        }
    }

    /// Boolean tile with ones at the bitmap's set positions.
    pub fn from_bitmap(bitmap: u64) -> Self {
        let mut t = Tile8::zeros(TileKind::Boolean);
        for (b, v) in t.data.iter_mut().enumerate() {
            if bitmap >> b & 1 == 1 {
                *v = 1.0;
            }
        }
        t
    }

    pub fn identity(kind: TileKind) -> Self {
        let mut t = Tile8::zeros(kind);
        for i in 0..TILE {
            t.data[i * TILE + i] = 1.0;
        }
        t
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * TILE + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * TILE + c] = v;
    }

    pub fn bitmap(&self) -> u64 {
        bitmap_of_dense_tile(self)
    }
}

/// Occupancy mask of a dense tile: bit `8 * r + c` is set iff `t[r][c] != 0`.
pub fn bitmap_of_dense_tile(t: &Tile8) -> u64 {
    t.data
        .iter()
        .enumerate()
        .fold(0u64, |m, (b, &v)| if v != 0.0 { m | 1 << b } else { m })
}

/// Sparse matrix in bitmap-tiled COO form.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledMatrix {
    rows: usize,
    cols: usize,
    kind: ElementKind,
    tiles: Vec<TileEntry>,
    elements: Vec<f32>,
}

impl TiledMatrix {
    /// Assembles a matrix from raw parts, checking every structural invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        kind: ElementKind,
        tiles: Vec<TileEntry>,
        elements: Vec<f32>,
    ) -> Result<Self> {
        let m = TiledMatrix {
            rows,
            cols,
            kind,
            tiles,
            elements,
        };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn from_parts_unchecked(
        rows: usize,
        cols: usize,
        kind: ElementKind,
        tiles: Vec<TileEntry>,
        elements: Vec<f32>,
    ) -> Self {
        let m = TiledMatrix {
            rows,
            cols,
            kind,
            tiles,
            elements,
        };
        debug_assert!(m.validate().is_ok(), "{:?}", m.validate());
        m
    }

    pub fn empty(rows: usize, cols: usize, kind: ElementKind) -> Self {
        TiledMatrix {
            rows,
            cols,
            kind,
            tiles: Vec::new(),
            elements: Vec::new(),
        }
    }

    pub fn identity(n: usize, kind: ElementKind) -> Self {
        TiledMatrix::from_element_coo(&ElementCoo::identity(n), kind, false)
            .expect("identity is representable in every kind")
    }

    /// Checks every invariant of the tiled representation.
    pub fn validate(&self) -> Result<()> {
        let inv = |msg: String| Err(Error::Invariant(msg));
        let (tile_rows, tile_cols) = (self.tile_rows(), self.tile_cols());
        let mut expected_index = 0usize;
        for (k, t) in self.tiles.iter().enumerate() {
            if t.tile_row as usize >= tile_rows || t.tile_col as usize >= tile_cols {
                return inv(format!("tile {k} at {:?} outside the tile grid", t.key()));
            }
            if k > 0 && self.tiles[k - 1].key() >= t.key() {
                return inv(format!("tiles unsorted or duplicated at tile {k}"));
            }
            if t.bitmap == 0 {
                return inv(format!("tile {k} has an empty bitmap"));
            }
            if t.elem_index != expected_index {
                return inv(format!(
                    "tile {k} elem_index {} but previous tiles hold {expected_index} elements",
                    t.elem_index
                ));
            }
            // Slots past the matrix edge must stay empty.
            let valid_r = (self.rows - TILE * t.tile_row as usize).min(TILE);
            let valid_c = (self.cols - TILE * t.tile_col as usize).min(TILE);
            if t.bitmap & !edge_mask(valid_r, valid_c) != 0 {
                return inv(format!("tile {k} has bits beyond the matrix edge"));
            }
            expected_index += t.nnz();
        }
        if expected_index != self.elements.len() {
            return inv(format!(
                "bitmaps hold {expected_index} elements but element array has {}",
                self.elements.len()
            ));
        }
        for (n, &v) in self.elements.iter().enumerate() {
            if !v.is_finite() || v == 0.0 {
                return inv(format!("element {n} is {v}; stored values must be finite and nonzero"));
            }
            if self.kind == ElementKind::Half && !is_half_representable(v as f64) {
                return inv(format!("element {n} = {v} is not binary16-representable"));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_rows(&self) -> usize {
        self.rows.div_ceil(TILE)
    }

    pub fn tile_cols(&self) -> usize {
        self.cols.div_ceil(TILE)
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn tiles(&self) -> &[TileEntry] {
        &self.tiles
    }

    pub fn elements(&self) -> &[f32] {
        &self.elements
    }

    pub fn nnz(&self) -> usize {
        self.elements.len()
    }

    pub fn num_tiles(&self) -> usize {
        self.tiles.len()
    }

    /// Values of tile `t` in ascending bit order.
    pub fn tile_values(&self, t: usize) -> &[f32] {
        let e = &self.tiles[t];
        &self.elements[e.elem_index..e.elem_index + e.nnz()]
    }

    /// Scatters tile `t` into a dense scratch tile (overwriting it).
    pub fn expand_tile(&self, t: usize, out: &mut Tile8) {
        let bitmap = self.tiles[t].bitmap;
        out.data = [0.0; TILE_AREA];
        let mut rest = bitmap;
        for &v in self.tile_values(t) {
            let b = rest.trailing_zeros() as usize;
            out.data[b] = v;
            rest &= rest - 1;
        }
    }

    /// Range of tile indices in tile-row `tile_row`. Tiles are sorted, so
    /// this is a binary search.
    pub fn tile_row_range(&self, tile_row: u32) -> std::ops::Range<usize> {
        let start = self.tiles.partition_point(|t| t.tile_row < tile_row);
        let end = self.tiles.partition_point(|t| t.tile_row <= tile_row);
        start..end
    }

    /// Prefix offsets of tile-rows: tiles of tile-row `r` are
    /// `offsets[r]..offsets[r + 1]`.
    pub fn tile_row_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0usize; self.tile_rows() + 1];
        for t in &self.tiles {
            offsets[t.tile_row as usize + 1] += 1;
        }
        for r in 0..self.tile_rows() {
            offsets[r + 1] += offsets[r];
        }
        offsets
    }

    /// Converts an element-level matrix, rounding values to `kind`.
    ///
    /// Zero entries, and entries that round to zero, are discarded.
    /// Non-finite entries are dropped when `drop_nonfinite` is set and
    /// rejected otherwise.
    pub fn from_element_coo(m: &ElementCoo, kind: ElementKind, drop_nonfinite: bool) -> Result<Self> {
        if m.rows().div_ceil(TILE) > u32::MAX as usize || m.cols().div_ceil(TILE) > u32::MAX as usize {
            return Err(Error::Dimension(format!(
                "{}x{} exceeds the 32-bit tile grid",
                m.rows(),
                m.cols()
            )));
        }
        let mut keyed = Vec::with_capacity(m.nnz());
        for &(r, c, v) in m.entries() {
            if !v.is_finite() {
                if drop_nonfinite {
                    continue;
                }
                return Err(Error::NonFinite {
                    row: r,
                    col: c,
                    value: v,
                });
            }
            let v = kind.round(v)?;
            if v == 0.0 {
                continue;
            }
            let key = ((r / TILE) as u32, (c / TILE) as u32);
            let bit = ((r % TILE) * TILE + c % TILE) as u8;
            keyed.push((key, bit, v as f32));
        }
        keyed.sort_unstable_by_key(|&(key, bit, _)| (key, bit));

        let mut tiles: Vec<TileEntry> = Vec::new();
        let mut elements = Vec::with_capacity(keyed.len());
        for (n, &((tile_row, tile_col), bit, v)) in keyed.iter().enumerate() {
            match tiles.last_mut() {
                Some(t) if t.key() == (tile_row, tile_col) => t.bitmap |= 1 << bit,
                _ => tiles.push(TileEntry {
                    tile_row,
                    tile_col,
                    elem_index: n,
                    bitmap: 1 << bit,
                }),
            }
            elements.push(v);
        }
        Ok(TiledMatrix::from_parts_unchecked(
            m.rows(),
            m.cols(),
            kind,
            tiles,
            elements,
        ))
    }

    /// Expands back to element-level coordinates.
    pub fn to_element_coo(&self) -> ElementCoo {
        let mut entries = Vec::with_capacity(self.nnz());
        for (t, e) in self.tiles.iter().enumerate() {
            let (r0, c0) = (e.tile_row as usize * TILE, e.tile_col as usize * TILE);
            let mut rest = e.bitmap;
            for &v in self.tile_values(t) {
                let b = rest.trailing_zeros() as usize;
                entries.push((r0 + b / TILE, c0 + b % TILE, v as f64));
                rest &= rest - 1;
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        ElementCoo::from_sorted_unchecked(self.rows, self.cols, entries)
    }

    /// Re-rounds the stored values to `kind`. Values that round to zero are
    /// dropped and their tiles shrink accordingly.
    pub fn to_kind(&self, kind: ElementKind) -> Result<Self> {
        if kind == self.kind || kind == ElementKind::Single {
            return Ok(TiledMatrix { kind, ..self.clone() });
        }
        let mut tiles = Vec::with_capacity(self.tiles.len());
        let mut elements = Vec::with_capacity(self.elements.len());
        for (t, e) in self.tiles.iter().enumerate() {
            let start = elements.len();
            let mut bitmap = 0u64;
            let mut rest = e.bitmap;
            for &v in self.tile_values(t) {
                let b = rest.trailing_zeros();
                rest &= rest - 1;
                let r = kind.round(v as f64)?;
                if r != 0.0 {
                    bitmap |= 1 << b;
                    elements.push(r as f32);
                }
            }
            if bitmap != 0 {
                tiles.push(TileEntry {
                    elem_index: start,
                    bitmap,
                    ..*e
                });
            }
        }
        Ok(TiledMatrix::from_parts_unchecked(
            self.rows, self.cols, kind, tiles, elements,
        ))
    }

    /// Row-major dense copy. Intended for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for (r, c, v) in self.to_element_coo().entries().iter().copied() {
            out[r * self.cols + c] = v;
        }
        out
    }

    /// Builds a tiled matrix from a row-major dense array.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64], kind: ElementKind) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "dense array of length {} for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let entries = data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(n, &v)| (n / cols, n % cols, v))
            .collect();
        TiledMatrix::from_element_coo(&ElementCoo::from_sorted_unchecked(rows, cols, entries), kind, false)
    }
}

/// Mask of the slots `(r, c)` with `r < valid_rows` and `c < valid_cols`.
fn edge_mask(valid_rows: usize, valid_cols: usize) -> u64 {
    let row_bits: u64 = if valid_cols >= TILE {
        0xff
    } else {
        (1u64 << valid_cols) - 1
    };
    (0..valid_rows).fold(0u64, |m, r| m | row_bits << (r * TILE))
}
