use crate::error::{Error, Result};

/// Element-level coordinate matrix, entries sorted by `(row, col)` with no
/// duplicate positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementCoo {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl ElementCoo {
    /// Builds a matrix from entries that already satisfy the ordering and
    /// uniqueness invariants.
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for (n, &(r, c, _)) in entries.iter().enumerate() {
            if r >= rows || c >= cols {
                return Err(Error::Invariant(format!("entry ({r}, {c}) outside {rows}x{cols}")));
            }
            if n > 0 {
                let (pr, pc, _) = entries[n - 1];
                if (pr, pc) >= (r, c) {
                    return Err(Error::Invariant(format!("entries not strictly sorted at ({r}, {c})")));
                }
            }
        }
        Ok(ElementCoo { rows, cols, entries })
    }

    /// Builds a matrix from unordered triplets, summing duplicates.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<_> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::Invariant(format!("entry ({r}, {c}) outside {rows}x{cols}")));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        entries.dedup_by(|next, kept| {
            if (next.0, next.1) == (kept.0, kept.1) {
                kept.2 += next.2;
                true
            } else {
                false
            }
        });
        Ok(ElementCoo { rows, cols, entries })
    }

    pub(crate) fn from_sorted_unchecked(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        ElementCoo { rows, cols, entries }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        ElementCoo {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        ElementCoo {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Returns the same matrix with explicit zero entries removed.
    pub fn without_zeros(&self) -> Self {
        ElementCoo {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().copied().filter(|e| e.2 != 0.0).collect(),
        }
    }

    /// Applies `f` to every value, keeping positions.
    pub fn map_values<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| Ok((r, c, f(v)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ElementCoo {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_sorted_and_summed() {
        let m = ElementCoo::from_triplets(3, 3, [(2, 0, 1.0), (0, 1, 2.0), (2, 0, 0.5)]).unwrap();
        assert_eq!(m.entries(), &[(0, 1, 2.0), (2, 0, 1.5)]);
    }

    #[test]
    fn new_rejects_bad_entries() {
        assert!(ElementCoo::new(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(ElementCoo::new(2, 2, vec![(1, 0, 1.0), (0, 1, 1.0)]).is_err());
        assert!(ElementCoo::new(2, 2, vec![(0, 1, 1.0), (0, 1, 1.0)]).is_err());
        assert!(ElementCoo::new(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).is_ok());
    }
}
