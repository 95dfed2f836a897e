//! Tile multiply kernels and the counting / multiplication passes.
//!
//! Arithmetic follows a fixed mixed-precision contract: operands are
//! binary16 values, every product is formed exactly, and products are added
//! to an `f32` accumulator one at a time in ascending inner index. The same
//! contract is implemented independently in [`crate::oracle`].

mod driver;
mod passes;

pub use driver::{spgemm, spgemm_square, PhaseTiming, SpgemmOptions, SpgemmRun};
pub use passes::{compact, counting_pass, multiply_pass, CountResult, MulResult};

use crate::tile_format::{Tile8, TILE};

/// `c += a * b` for 8x8 tiles.
///
/// For each output, `k` runs 0..8 and each exact product is added to the
/// `f32` accumulator separately.
pub fn tile_mm_reference(a: &Tile8, b: &Tile8, c: &mut Tile8) {
    for i in 0..TILE {
        for j in 0..TILE {
            let mut acc = c.data[i * TILE + j];
            for k in 0..TILE {
                acc += a.data[i * TILE + k] * b.data[k * TILE + j];
            }
            c.data[i * TILE + j] = acc;
        }
    }
}

const PAIR: usize = 2 * TILE;

/// 16x16 row-major block holding two 8x8 tiles on its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile16 {
    pub data: [f32; PAIR * PAIR],
}

impl Tile16 {
    /// Zero block with `t0` in the upper-left and `t1` in the lower-right.
    pub fn diagonal(t0: &Tile8, t1: &Tile8) -> Self {
        let mut data = [0.0; PAIR * PAIR];
        for r in 0..TILE {
            data[r * PAIR..r * PAIR + TILE].copy_from_slice(&t0.data[r * TILE..(r + 1) * TILE]);
            data[(r + TILE) * PAIR + TILE..(r + TILE + 1) * PAIR].copy_from_slice(&t1.data[r * TILE..(r + 1) * TILE]);
        }
        Tile16 { data }
    }

    /// Copies out the 8x8 block at block coordinate `(br, bc)`.
    pub fn block(&self, br: usize, bc: usize, out: &mut Tile8) {
        for r in 0..TILE {
            let src = (br * TILE + r) * PAIR + bc * TILE;
            out.data[r * TILE..(r + 1) * TILE].copy_from_slice(&self.data[src..src + TILE]);
        }
    }

    /// `self += a * b` over the full 16x16 shape.
    pub fn mm_accumulate(&mut self, a: &Tile16, b: &Tile16) {
        for i in 0..PAIR {
            for j in 0..PAIR {
                let mut acc = self.data[i * PAIR + j];
                for k in 0..PAIR {
                    acc += a.data[i * PAIR + k] * b.data[k * PAIR + j];
                }
                self.data[i * PAIR + j] = acc;
            }
        }
    }
}

/// Runs two independent tile products as one 16x16 product and returns the
/// whole 16x16 accumulator. The diagonal blocks hold `c0 + a0*b0` and
/// `c1 + a1*b1`; the off-diagonal blocks stay zero.
pub fn paired_product(a0: &Tile8, b0: &Tile8, a1: &Tile8, b1: &Tile8, c0: &Tile8, c1: &Tile8) -> Tile16 {
    let a = Tile16::diagonal(a0, a1);
    let b = Tile16::diagonal(b0, b1);
    let mut c = Tile16::diagonal(c0, c1);
    c.mm_accumulate(&a, &b);
    c
}

/// `c0 += a0 * b0` and `c1 += a1 * b1` through one diagonal 16x16 product.
///
/// Bit-identical to two [`tile_mm_reference`] calls provided the
/// accumulators hold no negative zeros, which holds for every accumulator
/// that starts from `+0.0` (round-to-nearest never produces `-0.0` from a
/// sum involving `+0.0`). A job with fewer addends is padded with zero tiles.
pub fn paired_tile_mm(a0: &Tile8, b0: &Tile8, a1: &Tile8, b1: &Tile8, c0: &mut Tile8, c1: &mut Tile8) {
    let c = paired_product(a0, b0, a1, b1, c0, c1);
    c.block(0, 0, c0);
    c.block(1, 1, c1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tile_format::TileKind;
    use proptest::prelude::*;

    fn half_tile() -> impl Strategy<Value = Tile8> {
        // binary16 bit patterns below infinity, with about half the slots zero
        proptest::collection::vec((any::<bool>(), 0u16..0x7c00, any::<bool>()), 64).prop_map(|v| {
            let mut t = Tile8::zeros(TileKind::Half);
            for (n, (keep, bits, neg)) in v.into_iter().enumerate() {
                if keep {
                    let x = crate::half::half_from_bits(bits);
                    t.data[n] = if neg { -x } else { x };
                }
            }
            t
        })
    }

    fn acc_tile() -> impl Strategy<Value = Tile8> {
        proptest::collection::vec(-1e6f32..1e6, 64).prop_map(|v| {
            let mut t = Tile8::zeros(TileKind::Accumulator);
            for (n, x) in v.into_iter().enumerate() {
                // +0.0 canonical zero
                t.data[n] = x + 0.0;
            }
            t
        })
    }

    fn triple_loop(a: &Tile8, b: &Tile8, c: &Tile8) -> Tile8 {
        let mut out = c.clone();
        for i in 0..8 {
            for j in 0..8 {
                let mut s = c.get(i, j);
                for k in 0..8 {
                    let p = (a.get(i, k) as f64 * b.get(k, j) as f64) as f32;
                    s += p;
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn bits(t: &Tile8) -> Vec<u32> {
        t.data.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn identity_adds_b() {
        let mut b = Tile8::zeros(TileKind::Half);
        for (n, v) in b.data.iter_mut().enumerate() {
            *v = n as f32 - 20.0;
        }
        let mut c = Tile8::zeros(TileKind::Accumulator);
        tile_mm_reference(&Tile8::identity(TileKind::Half), &b, &mut c);
        assert_eq!(c.data, b.data);
    }

    #[test]
    fn cancellation_gives_exact_zero() {
        let mut a = Tile8::zeros(TileKind::Half);
        a.set(0, 0, 1.0);
        a.set(0, 1, -1.0);
        let mut b = Tile8::zeros(TileKind::Half);
        b.set(0, 0, 1.0);
        b.set(1, 0, 1.0);
        let mut c = Tile8::zeros(TileKind::Accumulator);
        tile_mm_reference(&a, &b, &mut c);
        assert_eq!(c.get(0, 0).to_bits(), 0);
    }

    #[test]
    fn paired_with_zero_second_job() {
        let mut a0 = Tile8::identity(TileKind::Half);
        a0.set(3, 5, 2.5);
        let b0 = Tile8::from_bitmap(0x00ff_00ff_00ff_00ff);
        let zero = Tile8::zeros(TileKind::Half);
        let mut c1 = Tile8::zeros(TileKind::Accumulator);
        c1.set(2, 2, 7.0);
        let c1_before = c1.clone();
        let mut c0 = Tile8::zeros(TileKind::Accumulator);
        paired_tile_mm(&a0, &b0, &zero, &zero, &mut c0, &mut c1);
        let mut single = Tile8::zeros(TileKind::Accumulator);
        tile_mm_reference(&a0, &b0, &mut single);
        assert_eq!(bits(&c0), bits(&single));
        assert_eq!(bits(&c1), bits(&c1_before));
    }

    #[test]
    fn paired_identities() {
        let id = Tile8::identity(TileKind::Half);
        let b0 = Tile8::from_bitmap(0x1234_5678_9abc_def0);
        let b1 = Tile8::from_bitmap(0x0fed_cba9_8765_4321);
        let mut c0 = Tile8::zeros(TileKind::Accumulator);
        let mut c1 = Tile8::zeros(TileKind::Accumulator);
        paired_tile_mm(&id, &b0, &id, &b1, &mut c0, &mut c1);
        assert_eq!(c0.data, b0.data);
        assert_eq!(c1.data, b1.data);
    }

    proptest! {
        #[test]
        fn reference_matches_triple_loop(a in half_tile(), b in half_tile(), c in acc_tile()) {
            let mut got = c.clone();
            tile_mm_reference(&a, &b, &mut got);
            prop_assert_eq!(bits(&got), bits(&triple_loop(&a, &b, &c)));
        }

        #[test]
        fn paired_matches_two_references(
            a0 in half_tile(), b0 in half_tile(), a1 in half_tile(), b1 in half_tile(),
            c0 in acc_tile(), c1 in acc_tile(),
        ) {
            let full = paired_product(&a0, &b0, &a1, &b1, &c0, &c1);
            let mut off = Tile8::zeros(TileKind::Accumulator);
            for (br, bc) in [(0, 1), (1, 0)] {
                full.block(br, bc, &mut off);
                prop_assert!(off.data.iter().all(|v| v.to_bits() == 0));
            }
            let (mut r0, mut r1) = (c0.clone(), c1.clone());
            tile_mm_reference(&a0, &b0, &mut r0);
            tile_mm_reference(&a1, &b1, &mut r1);
            let (mut p0, mut p1) = (c0, c1);
            paired_tile_mm(&a0, &b0, &a1, &b1, &mut p0, &mut p1);
            prop_assert_eq!(bits(&p0), bits(&r0));
            prop_assert_eq!(bits(&p1), bits(&r1));
        }
    }
}
