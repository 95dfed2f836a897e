use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::ElementCoo;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

/// Reads a Matrix Market coordinate file.
pub fn read_matrix_market<P: AsRef<Path>>(path: P) -> Result<ElementCoo> {
    let file = File::open(path)?;
    parse_matrix_market(BufReader::new(file))
}

/// Parses Matrix Market coordinate data.
///
/// Supports `real`, `integer` and `pattern` fields with `general` or
/// `symmetric` symmetry. Symmetric inputs are expanded to both triangles,
/// pattern entries get the value 1.0, and duplicate positions are summed.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<ElementCoo> {
    // undecodable text is a malformed file, not an I/O failure
    let mut lines = reader.lines().enumerate().map(|(n, l)| {
        let l = l.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::parse(n + 1, "line is not valid UTF-8"),
            _ => Error::Io(e),
        });
        (n + 1, l)
    });

    let (_, banner) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let banner = banner?;
    let (field, symmetric) = parse_banner(&banner)?;

    let (size_line, rows, cols, nnz) = loop {
        let (n, line) = lines.next().ok_or_else(|| Error::parse(1, "missing size line"))?;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let nums: Vec<&str> = t.split_whitespace().collect();
        if nums.len() != 3 {
            return Err(Error::parse(n, "size line must hold rows, cols and nnz"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(n, format!("bad count {s:?}")))
        };
        break (n, parse(nums[0])?, parse(nums[1])?, parse(nums[2])?);
    };
    if symmetric && rows != cols {
        return Err(Error::parse(size_line, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0usize;
    for (n, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        if seen == nnz {
            return Err(Error::parse(n, format!("more than the declared {nnz} entries")));
        }
        let mut it = t.split_whitespace();
        let mut index = |what: &str, limit: usize| -> Result<usize> {
            let s = it
                .next()
                .ok_or_else(|| Error::parse(n, format!("missing {what} index")))?;
            let i: usize = s
                .parse()
                .map_err(|_| Error::parse(n, format!("bad {what} index {s:?}")))?;
            if i == 0 || i > limit {
                return Err(Error::parse(n, format!("{what} index {i} outside 1..={limit}")));
            }
            Ok(i - 1)
        };
        let r = index("row", rows)?;
        let c = index("column", cols)?;
        let v = match field {
            Field::Pattern => 1.0,
            Field::Real | Field::Integer => {
                let s = it.next().ok_or_else(|| Error::parse(n, "missing value"))?;
                s.parse::<f64>()
                    .map_err(|_| Error::parse(n, format!("bad value {s:?}")))?
            }
        };
        if it.next().is_some() {
            return Err(Error::parse(n, "trailing tokens after entry"));
        }
        triplets.push((r, c, v));
        if symmetric && r != c {
            triplets.push((c, r, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::parse(
            size_line,
            format!("declared {nnz} entries but found {seen}"),
        ));
    }
    ElementCoo::from_triplets(rows, cols, triplets)
}

fn parse_banner(line: &str) -> Result<(Field, bool)> {
    let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(Error::parse(
            1,
            "expected '%%MatrixMarket matrix <format> <field> <symmetry>'",
        ));
    }
    match words[2].as_str() {
        "coordinate" => {}
        "array" => return Err(Error::Unsupported("array (dense) Matrix Market format".into())),
        other => return Err(Error::parse(1, format!("unknown format {other:?}"))),
    }
    let field = match words[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        "complex" => return Err(Error::Unsupported("complex-valued matrices".into())),
        other => return Err(Error::parse(1, format!("unknown field {other:?}"))),
    };
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        "skew-symmetric" | "hermitian" => return Err(Error::Unsupported(format!("{} symmetry", words[4]))),
        other => return Err(Error::parse(1, format!("unknown symmetry {other:?}"))),
    };
    Ok((field, symmetric))
}

/// Writes a `coordinate real general` Matrix Market file.
pub fn write_matrix_market<W: Write>(m: &ElementCoo, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for &(r, c, v) in m.entries() {
        writeln!(out, "{} {} {v:e}", r + 1, c + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ElementCoo> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn single_real_entry() {
        let m = parse("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 2.5\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.entries(), &[(0, 0, 2.5)]);
    }

    #[test]
    fn binary_garbage_is_a_parse_error() {
        let bytes = b"%%MatrixMarket matrix coordinate real general\n1 1 1\n\xff\xfe 1\n";
        assert!(matches!(
            parse_matrix_market(&bytes[..]),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn symmetric_expansion() {
        let m = parse("%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 2\n2 1 4.0\n3 3 1\n").unwrap();
        assert_eq!(m.entries(), &[(0, 1, 4.0), (1, 0, 4.0), (2, 2, 1.0)]);
    }

    #[test]
    fn pattern_values_are_one() {
        let m = parse("%%MatrixMarket matrix coordinate pattern general\n3 3 3\n1 1\n2 3\n3 2\n").unwrap();
        assert_eq!(m.nnz(), 3);
        assert!(m.entries().iter().all(|e| e.2 == 1.0));
    }

    #[test]
    fn integer_and_duplicates() {
        let m = parse("%%MatrixMarket matrix coordinate integer general\n2 2 3\n1 2 3\n1 2 4\n2 1 -1\n").unwrap();
        assert_eq!(m.entries(), &[(0, 1, 7.0), (1, 0, -1.0)]);
    }

    #[test]
    fn banner_is_case_insensitive() {
        assert!(parse("%%MatrixMarket MATRIX Coordinate Real General\n1 1 0\n").is_ok());
    }

    #[test]
    fn unsupported_inputs() {
        for banner in [
            "%%MatrixMarket matrix coordinate complex general",
            "%%MatrixMarket matrix array real general",
            "%%MatrixMarket matrix coordinate real hermitian",
        ] {
            let r = parse(&format!("{banner}\n1 1 0\n"));
            assert!(matches!(r, Err(Error::Unsupported(_))), "{banner}");
        }
    }

    #[test]
    fn malformed_inputs() {
        let cases = [
            "",
            "hello\n1 1 0\n",
            "%%MatrixMarket matrix coordinate real general\n",
            "%%MatrixMarket matrix coordinate real general\n2 2\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n",
        ];
        for c in cases {
            assert!(matches!(parse(c), Err(Error::Parse { .. })), "{c:?}");
        }
    }

    #[test]
    fn write_then_parse() {
        let m = ElementCoo::new(3, 4, vec![(0, 3, 0.1), (2, 0, -7.5)]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        assert_eq!(parse_matrix_market(buf.as_slice()).unwrap(), m);
    }
}
