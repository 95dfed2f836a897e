//! Little-endian on-disk layout:
//!
//! ```text
//! "TSPZ" | u32 version | u8 kind | u64 rows | u64 cols | u64 tiles | u64 elements
//! u32 tile_row[tiles] | u32 tile_col[tiles] | u64 bitmap[tiles] | u64 elem_index[tiles]
//! elements: u16 binary16 patterns (kind 0) or f32 (kind 1)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ElementKind, TileEntry, TiledMatrix};
use crate::error::{Error, Result};
use crate::half::{half_bits, half_from_bits};

pub const MAGIC: &[u8; 4] = b"TSPZ";
pub const VERSION: u32 = 1;
/// Size of the fixed header in bytes.
pub const HEADER_BYTES: usize = 4 + 4 + 1 + 4 * 8;
/// Bytes per tile record (row, col, bitmap, element index).
pub const TILE_RECORD_BYTES: usize = 4 + 4 + 8 + 8;

/// Serializes a matrix into the tiled binary layout.
pub fn write_tiled<W: Write>(m: &TiledMatrix, mut out: W) -> Result<()> {
    let mut buf =
        Vec::with_capacity(HEADER_BYTES + m.num_tiles() * TILE_RECORD_BYTES + m.nnz() * m.kind().byte_width());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match m.kind() {
        ElementKind::Half => 0,
        ElementKind::Single => 1,
    });
    for n in [m.rows(), m.cols(), m.num_tiles(), m.nnz()] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    let tiles = m.tiles();
    tiles
        .iter()
        .for_each(|t| buf.extend_from_slice(&t.tile_row.to_le_bytes()));
    tiles
        .iter()
        .for_each(|t| buf.extend_from_slice(&t.tile_col.to_le_bytes()));
    tiles
        .iter()
        .for_each(|t| buf.extend_from_slice(&t.bitmap.to_le_bytes()));
    tiles
        .iter()
        .for_each(|t| buf.extend_from_slice(&(t.elem_index as u64).to_le_bytes()));
    match m.kind() {
        ElementKind::Half => m
            .elements()
            .iter()
            .for_each(|&v| buf.extend_from_slice(&half_bits(v as f64).to_le_bytes())),
        ElementKind::Single => m
            .elements()
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_tiled_binary<P: AsRef<Path>>(m: &TiledMatrix, path: P) -> Result<()> {
    let mut buf = Vec::new();
    write_tiled(m, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_tiled_binary<P: AsRef<Path>>(path: P) -> Result<TiledMatrix> {
    read_tiled(&fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Format(format!("{what} does not fit in memory")))
    }

    fn array<T, const N: usize>(&mut self, len: usize, what: &str, f: fn([u8; N]) -> T) -> Result<Vec<T>> {
        let bytes = self.take(len.saturating_mul(N), what)?;
        Ok(bytes.chunks_exact(N).map(|c| f(c.try_into().unwrap())).collect())
    }
}

/// Parses the tiled binary layout. Structural problems (bad magic, version,
/// truncation, trailing bytes) are [`Error::Format`]; well-formed files that
/// break matrix invariants are [`Error::Invariant`].
pub fn read_tiled(bytes: &[u8]) -> Result<TiledMatrix> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = match cur.take(1, "element kind")?[0] {
        0 => ElementKind::Half,
        1 => ElementKind::Single,
        k => return Err(Error::Format(format!("unknown element kind {k}"))),
    };
    let rows = cur.count("rows")?;
    let cols = cur.count("cols")?;
    let num_tiles = cur.count("tile count")?;
    let num_elements = cur.count("element count")?;

    let tile_rows = cur.array(num_tiles, "tile rows", u32::from_le_bytes)?;
    let tile_cols = cur.array(num_tiles, "tile cols", u32::from_le_bytes)?;
    let bitmaps = cur.array(num_tiles, "bitmaps", u64::from_le_bytes)?;
    let indices = cur.array(num_tiles, "element indices", u64::from_le_bytes)?;
    let elements: Vec<f32> = match kind {
        ElementKind::Half => cur.array(num_elements, "elements", |b| half_from_bits(u16::from_le_bytes(b)))?,
        ElementKind::Single => cur.array(num_elements, "elements", f32::from_le_bytes)?,
    };
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }

    let tiles = (0..num_tiles)
        .map(|k| TileEntry {
            tile_row: tile_rows[k],
            tile_col: tile_cols[k],
            elem_index: usize::try_from(indices[k]).unwrap_or(usize::MAX),
            bitmap: bitmaps[k],
        })
        .collect();
    TiledMatrix::from_parts(rows, cols, kind, tiles, elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tile_format::ElementCoo;

    fn sample(kind: ElementKind) -> TiledMatrix {
        let coo = ElementCoo::new(20, 13, vec![(0, 0, 1.5), (3, 12, -2.0), (19, 4, 0.125), (19, 5, 3.0)]).unwrap();
        TiledMatrix::from_element_coo(&coo, kind, false).unwrap()
    }

    fn encode(m: &TiledMatrix) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tiled(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_both_kinds() {
        for kind in [ElementKind::Half, ElementKind::Single] {
            let m = sample(kind);
            let bytes = encode(&m);
            assert_eq!(
                bytes.len(),
                HEADER_BYTES + m.num_tiles() * TILE_RECORD_BYTES + m.nnz() * kind.byte_width()
            );
            assert_eq!(read_tiled(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample(ElementKind::Half));
        assert_eq!(&bytes[..4], b"TSPZ");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 0);
        assert_eq!(u64::from_le_bytes(bytes[9..17].try_into().unwrap()), 20);
        assert_eq!(u64::from_le_bytes(bytes[17..25].try_into().unwrap()), 13);
        // first element is 1.5 = 0x3e00
        let elem_start = bytes.len() - 2 * 4;
        assert_eq!(&bytes[elem_start..elem_start + 2], &0x3e00u16.to_le_bytes());
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = encode(&sample(ElementKind::Single));
        for cut in [0, 3, 8, 20, HEADER_BYTES, bytes.len() - 1] {
            assert!(
                matches!(read_tiled(&bytes[..cut]), Err(Error::Format(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn bad_header_fields() {
        let good = encode(&sample(ElementKind::Half));
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(read_tiled(&b), Err(Error::Format(_))));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(read_tiled(&b), Err(Error::Format(_))));
        let mut b = good.clone();
        b[8] = 7;
        assert!(matches!(read_tiled(&b), Err(Error::Format(_))));
        let mut b = good.clone();
        b.push(0);
        assert!(matches!(read_tiled(&b), Err(Error::Format(_))));
        // huge element count must not allocate
        let mut b = good;
        b[33..41].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(read_tiled(&b), Err(Error::Format(_))));
    }

    #[test]
    fn unsorted_tiles_are_an_invariant_error() {
        let m = sample(ElementKind::Single);
        assert!(m.num_tiles() >= 2);
        let mut b = encode(&m);
        // swap the first two tile_row/tile_col entries
        let rows = HEADER_BYTES;
        let cols = rows + 4 * m.num_tiles();
        let last = m.num_tiles() - 1;
        for base in [rows, cols] {
            let (x, y) = (base, base + 4 * last);
            for i in 0..4 {
                b.swap(x + i, y + i);
            }
        }
        assert!(matches!(read_tiled(&b), Err(Error::Invariant(_))));
    }

    #[test]
    fn infinite_half_is_an_invariant_error() {
        let mut b = encode(&sample(ElementKind::Half));
        let n = b.len();
        b[n - 2..].copy_from_slice(&0x7c00u16.to_le_bytes());
        assert!(matches!(read_tiled(&b), Err(Error::Invariant(_))));
    }
}
