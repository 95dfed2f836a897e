//! Reference products for validating the tiled pipeline.
//!
//! Everything here works on element-level coordinates and knows nothing
//! about tiles. binary16 rounding goes through the `half` crate rather than
//! [`crate::half`], so a rounding bug cannot hide in both places.

use crate::error::{Error, Result};
use crate::tile_format::ElementCoo;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_coo(m: &ElementCoo) -> Self {
        let mut d = DenseMatrix::zeros(m.rows(), m.cols());
        for &(r, c, v) in m.entries() {
            d.data[r * m.cols() + c] = v;
        }
        d
    }

    pub fn to_coo(&self) -> ElementCoo {
        let entries = self
            .data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(n, &v)| (n / self.cols, n % self.cols, v))
            .collect();
        ElementCoo::new(self.rows, self.cols, entries).expect("row-major scan is sorted")
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Textbook triple loop: each output is one dot product over `k`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dims(self.rows, self.cols, other.rows, other.cols)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut dot = 0.0;
                for k in 0..self.cols {
                    dot += self.get(i, k) * other.get(k, j);
                }
                out.data[i * other.cols + j] = dot;
            }
        }
        Ok(out)
    }
}

fn check_dims(ar: usize, ac: usize, br: usize, bc: usize) -> Result<()> {
    if ac != br {
        return Err(Error::Dimension(format!("cannot multiply {ar}x{ac} by {br}x{bc}")));
    }
    Ok(())
}

fn row_starts(m: &ElementCoo) -> Vec<usize> {
    let mut starts = vec![0usize; m.rows() + 1];
    for &(r, _, _) in m.entries() {
        starts[r + 1] += 1;
    }
    for r in 0..m.rows() {
        starts[r + 1] += starts[r];
    }
    starts
}

/// Row-by-row product with a dense accumulator per output row. For each
/// output `(i, j)`, contributions arrive in ascending `k`.
fn rowwise_product<T, F>(a: &ElementCoo, b: &ElementCoo, a_vals: &[T], b_vals: &[T], mac: F) -> ElementCoo
where
    T: Copy + Default + PartialEq + Into<f64>,
    F: Fn(T, T, T) -> T,
{
    let (a_rows, b_rows) = (row_starts(a), row_starts(b));
    let (ae, be) = (a.entries(), b.entries());
    let mut acc = vec![T::default(); b.cols()];
    let mut touched = vec![false; b.cols()];
    let mut cols = Vec::new();
    let mut entries = Vec::new();
    for i in 0..a.rows() {
        for na in a_rows[i]..a_rows[i + 1] {
            let k = ae[na].1;
            for nb in b_rows[k]..b_rows[k + 1] {
                let j = be[nb].1;
                if !touched[j] {
                    touched[j] = true;
                    cols.push(j);
                }
                acc[j] = mac(acc[j], a_vals[na], b_vals[nb]);
            }
        }
        cols.sort_unstable();
        for &j in &cols {
            let v: f64 = acc[j].into();
            if v != 0.0 {
                entries.push((i, j, v));
            }
            acc[j] = T::default();
            touched[j] = false;
        }
        cols.clear();
    }
    ElementCoo::new(a.rows(), b.cols(), entries).expect("rows emitted in order")
}

/// Exact-semantics product in `f64`. Zero results are dropped.
pub fn dense_spgemm_fp64(a: &ElementCoo, b: &ElementCoo) -> Result<ElementCoo> {
    check_dims(a.rows(), a.cols(), b.rows(), b.cols())?;
    let av: Vec<f64> = a.entries().iter().map(|e| e.2).collect();
    let bv: Vec<f64> = b.entries().iter().map(|e| e.2).collect();
    Ok(rowwise_product(a, b, &av, &bv, |c, x, y| c + x * y))
}

/// Nearest binary16 to `x`, ties to even, found by comparing the decoded
/// neighbours of a candidate pattern. `half`'s own `f64` conversion can round
/// twice (through `f32`), so it only supplies the starting point.
pub fn nearest_half(x: f64) -> Result<f32> {
    if !x.is_finite() || x.abs() > 65504.0 {
        return Err(Error::Overflow {
            value: x,
            target: "binary16",
        });
    }
    let mag = x.abs();
    let start = ::half::f16::from_f64(mag).to_bits().min(0x7bff);
    let mut best = start;
    for bits in start.saturating_sub(1)..=(start + 1).min(0x7bff) {
        let d = (mag - ::half::f16::from_bits(bits).to_f64()).abs();
        let e = (mag - ::half::f16::from_bits(best).to_f64()).abs();
        if d < e || (d == e && bits % 2 == 0) {
            best = bits;
        }
    }
    let v = ::half::f16::from_bits(best).to_f32();
    Ok(if x.is_sign_negative() { -v } else { v })
}

/// Mixed-precision product: inputs rounded to binary16, each product formed
/// exactly, accumulated in `f32` one product at a time with `k` ascending.
pub fn dense_spgemm_mixed_ordered(a: &ElementCoo, b: &ElementCoo) -> Result<ElementCoo> {
    check_dims(a.rows(), a.cols(), b.rows(), b.cols())?;
    let av = a
        .entries()
        .iter()
        .map(|e| nearest_half(e.2))
        .collect::<Result<Vec<_>>>()?;
    let bv = b
        .entries()
        .iter()
        .map(|e| nearest_half(e.2))
        .collect::<Result<Vec<_>>>()?;
    Ok(rowwise_product(a, b, &av, &bv, |c, x, y| {
        // binary16 x binary16 fits in the 24-bit f32 significand, so this is exact
        let p = (x as f64 * y as f64) as f32;
        c + p
    }))
}

/// Symmetric mean absolute percentage error over the union of nonzero
/// positions. Missing values count as 0; a term where both values are 0
/// contributes 0. Returns 0 for two empty matrices.
pub fn smape(x: &ElementCoo, y: &ElementCoo) -> Result<f64> {
    if (x.rows(), x.cols()) != (y.rows(), y.cols()) {
        return Err(Error::Dimension(format!(
            "smape of {}x{} against {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let term = |a: f64, b: f64| {
        let den = a.abs() + b.abs();
        if den == 0.0 {
            0.0
        } else {
            (a - b).abs() / den
        }
    };
    let (xe, ye) = (x.entries(), y.entries());
    let (mut i, mut j) = (0, 0);
    let (mut n, mut sum) = (0usize, 0.0f64);
    while i < xe.len() || j < ye.len() {
        let kx = xe.get(i).map(|e| (e.0, e.1));
        let ky = ye.get(j).map(|e| (e.0, e.1));
        let t = match (kx, ky) {
            (Some(p), Some(q)) if p == q => {
                i += 1;
                j += 1;
                term(xe[i - 1].2, ye[j - 1].2)
            }
            (Some(p), Some(q)) if p < q => {
                i += 1;
                term(xe[i - 1].2, 0.0)
            }
            (Some(_), None) => {
                i += 1;
                term(xe[i - 1].2, 0.0)
            }
            _ => {
                j += 1;
                term(0.0, ye[j - 1].2)
            }
        };
        sum += t;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { 100.0 * sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coo(rows: usize, cols: usize, density: f64, seed: u64, int: bool) -> ElementCoo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen_bool(density) {
                    let v = if int {
                        rng.gen_range(-3..=3) as f64
                    } else {
                        rng.gen_range(-2.0..2.0)
                    };
                    entries.push((r, c, v));
                }
            }
        }
        ElementCoo::new(rows, cols, entries).unwrap()
    }

    #[test]
    fn identity_and_scalar() {
        let b = random_coo(10, 10, 0.3, 1, false).without_zeros();
        assert_eq!(dense_spgemm_fp64(&ElementCoo::identity(10), &b).unwrap(), b);
        let two = ElementCoo::new(1, 1, vec![(0, 0, 2.0)]).unwrap();
        let three = ElementCoo::new(1, 1, vec![(0, 0, 3.0)]).unwrap();
        assert_eq!(dense_spgemm_fp64(&two, &three).unwrap().entries(), &[(0, 0, 6.0)]);
    }

    #[test]
    fn dimension_errors() {
        let a = ElementCoo::empty(2, 3);
        assert!(matches!(dense_spgemm_fp64(&a, &a), Err(Error::Dimension(_))));
        assert!(matches!(dense_spgemm_mixed_ordered(&a, &a), Err(Error::Dimension(_))));
        assert!(matches!(smape(&a, &ElementCoo::empty(3, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn fp64_agrees_with_dot_products() {
        for seed in 0..10 {
            let a = random_coo(17, 23, 0.2, seed, false);
            let b = random_coo(23, 11, 0.2, seed + 50, false);
            let fast = DenseMatrix::from_coo(&dense_spgemm_fp64(&a, &b).unwrap());
            let naive = DenseMatrix::from_coo(&a).matmul(&DenseMatrix::from_coo(&b)).unwrap();
            for (x, y) in fast.data.iter().zip(&naive.data) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
            }
            // integer inputs: both orders are exact
            let a = random_coo(17, 23, 0.2, seed, true);
            let b = random_coo(23, 11, 0.2, seed + 50, true);
            let fast = dense_spgemm_fp64(&a, &b).unwrap();
            let naive = DenseMatrix::from_coo(&a)
                .matmul(&DenseMatrix::from_coo(&b))
                .unwrap()
                .to_coo();
            assert_eq!(fast, naive);
        }
    }

    #[test]
    fn mixed_matches_fp64_on_integers() {
        let a = random_coo(30, 30, 0.2, 3, true);
        assert_eq!(
            dense_spgemm_mixed_ordered(&a, &a).unwrap(),
            dense_spgemm_fp64(&a, &a).unwrap()
        );
    }

    #[test]
    fn mixed_rounds_inputs() {
        let a = ElementCoo::new(1, 1, vec![(0, 0, 0.1)]).unwrap();
        let got = dense_spgemm_mixed_ordered(&a, &a).unwrap().entries()[0].2;
        // independent evaluation: binary16(0.1) = 0x2e66 = 1638 * 2^-14
        let h = 1638.0 * 2f64.powi(-14);
        assert_eq!(got, (h * h) as f32 as f64);
        assert_ne!(got, 0.01);
        assert!(matches!(
            dense_spgemm_mixed_ordered(&ElementCoo::new(1, 1, vec![(0, 0, 7e4)]).unwrap(), &a),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn mixed_accumulates_in_single() {
        // 2^24 + 1 rounds back to 2^24 in f32
        let big = 4096.0;
        let a = ElementCoo::new(1, 3, vec![(0, 0, big), (0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let b = ElementCoo::new(3, 1, vec![(0, 0, big), (1, 0, 1.0), (2, 0, 1.0)]).unwrap();
        let got = dense_spgemm_mixed_ordered(&a, &b).unwrap().entries()[0].2;
        assert_eq!(got, 16777216.0);
        assert_eq!(dense_spgemm_fp64(&a, &b).unwrap().entries()[0].2, 16777218.0);
    }

    #[test]
    fn nearest_half_rounds_once() {
        let x = 1.0 + 2f64.powi(-11) + 2f64.powi(-40);
        assert_eq!(nearest_half(x).unwrap(), 1.0 + 2f32.powi(-10));
        assert_eq!(nearest_half(1.0 + 2f64.powi(-11)).unwrap(), 1.0);
        assert_eq!(nearest_half(-2049.0).unwrap(), -2048.0);
        assert_eq!(nearest_half(65504.0).unwrap(), 65504.0);
        assert_eq!(nearest_half(2f64.powi(-25)).unwrap(), 0.0);
        assert!(nearest_half(65504.5).is_err());
    }

    #[test]
    fn smape_values() {
        let a = ElementCoo::new(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let b = ElementCoo::new(2, 2, vec![(0, 0, 3.0)]).unwrap();
        assert_eq!(smape(&a, &a).unwrap(), 0.0);
        assert_eq!(smape(&a, &b).unwrap(), 50.0);
        let c = ElementCoo::new(2, 2, vec![(1, 1, 3.0)]).unwrap();
        assert_eq!(smape(&a, &c).unwrap(), 100.0);
        assert_eq!(smape(&ElementCoo::empty(2, 2), &ElementCoo::empty(2, 2)).unwrap(), 0.0);
        // explicit zeros on both sides contribute 0 over n = 2
        let z = ElementCoo::new(2, 2, vec![(0, 0, 1.0), (1, 1, 0.0)]).unwrap();
        assert_eq!(smape(&z, &z).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn smape_properties(s1 in any::<u64>(), s2 in any::<u64>()) {
            let x = random_coo(12, 12, 0.2, s1, false);
            let y = random_coo(12, 12, 0.2, s2, false);
            let xy = smape(&x, &y).unwrap();
            prop_assert_eq!(xy, smape(&y, &x).unwrap());
            prop_assert!((0.0..=100.0).contains(&xy));
            prop_assert_eq!(smape(&x, &x).unwrap(), 0.0);
        }

        #[test]
        fn mixed_times_identity_rounds(seed in any::<u64>()) {
            let x = random_coo(16, 16, 0.3, seed, false);
            let got = dense_spgemm_mixed_ordered(&x, &ElementCoo::identity(16)).unwrap();
            let want = x.map_values(crate::half::round_to_half).unwrap().without_zeros();
            prop_assert_eq!(got, want);
        }
    }
}
