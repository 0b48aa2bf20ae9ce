//! Matrix Market coordinate I/O.
//!
//! Only `coordinate real general` and `coordinate real symmetric` files are
//! accepted. The lower triangle (diagonal included) is extracted; for
//! symmetric files an entry stored above the diagonal stands for its mirror.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::matrix::CsrLowerTriangular;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_header(line: &str) -> Result<Symmetry> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::UnsupportedFormat(line.trim().to_string()));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::UnsupportedFormat(format!(
            "storage '{}' (only coordinate is supported)",
            tokens[2]
        )));
    }
    if tokens[3] != "real" {
        return Err(Error::UnsupportedFormat(format!(
            "field '{}' (only real is supported)",
            tokens[3]
        )));
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(Error::UnsupportedFormat(format!("symmetry '{other}'"))),
    }
}

/// Parses a Matrix Market stream into its lower-triangular part.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<CsrLowerTriangular> {
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let symmetry = parse_header(&header?)?;

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let lineno = lineno + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        match size {
            None => {
                let mut next = |what: &str| -> Result<usize> {
                    it.next()
                        .ok_or_else(|| Error::parse(lineno, format!("missing {what}")))?
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad {what}")))
                };
                let rows = next("row count")?;
                let cols = next("column count")?;
                let nnz = next("entry count")?;
                if rows != cols {
                    return Err(Error::parse(
                        lineno,
                        format!("matrix must be square, got {rows}x{cols}"),
                    ));
                }
                size = Some((rows, nnz));
                triplets.reserve(nnz);
            }
            Some((n, _)) => {
                let r: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(lineno, "bad row index"))?;
                let c: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(lineno, "bad column index"))?;
                let v: f64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(lineno, "bad value"))?;
                if r == 0 || c == 0 || r > n || c > n {
                    return Err(Error::IndexOutOfBounds { row: r, col: c, n });
                }
                let (r, c) = (r - 1, c - 1);
                match symmetry {
                    Symmetry::General if c > r => {}
                    Symmetry::General => triplets.push((r, c, v)),
                    Symmetry::Symmetric => triplets.push((r.max(c), r.min(c), v)),
                }
            }
        }
    }
    let (n, _) = size.ok_or_else(|| Error::parse(0, "missing size line"))?;
    CsrLowerTriangular::from_triplets(n, &triplets)
}

pub fn read_matrix_market_str(text: &str) -> Result<CsrLowerTriangular> {
    read_matrix_market(text.as_bytes())
}

pub fn read_matrix_market_file(path: impl AsRef<std::path::Path>) -> Result<CsrLowerTriangular> {
    let f = std::fs::File::open(path)?;
    read_matrix_market(std::io::BufReader::new(f))
}

/// Writes `a` as `coordinate real general`, 1-based, row-major.
///
/// Values use the shortest representation that parses back to the same
/// `f64`, so a write/read cycle reproduces the CSR arrays exactly.
pub fn write_matrix_market<W: Write>(a: &CsrLowerTriangular, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_file(
    a: &CsrLowerTriangular,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_matrix_market(a, std::io::BufWriter::new(f))
}
