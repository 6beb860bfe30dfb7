//! Text persistence for [`ScorerParams`]:
//!
//! ```text
//! BILIN1 <n>
//! <alpha>
//! <beta>
//! <n rows of M>
//! <n rows of N>
//! ```
//!
//! Values are written in shortest round-trip form, so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{ScorerError, ScorerParams};
use crate::linalg::Matrix;

const MAGIC: &str = "BILIN1";

pub fn write_params(params: &ScorerParams) -> String {
    let mut out = String::new();
    let n = params.dim();
    writeln!(out, "{MAGIC} {n}").unwrap();
    writeln!(out, "{:?}", params.alpha()).unwrap();
    writeln!(out, "{:?}", params.beta()).unwrap();
    for m in [params.m(), params.n()] {
        for i in 0..n {
            let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out
}

pub fn parse_params(text: &str) -> Result<ScorerParams, ScorerError> {
    let last_line = text.lines().count();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: String| ScorerError::Parse {
        line: line + 1,
        message,
    };

    let (hl, header) = lines.next().ok_or_else(|| err(0, "empty scorer file".into()))?;
    let mut head = header.split_whitespace();
    if head.next() != Some(MAGIC) {
        return Err(err(hl, format!("expected `{MAGIC} <n>` header")));
    }
    let n: usize = head
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| err(hl, "missing or invalid dimension".into()))?;

    let mut numbers = |count: usize, what: &str| -> Result<Vec<f64>, ScorerError> {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| err(last_line, format!("unexpected end of file reading {what}")))?;
        let vals = line
            .split_whitespace()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(ln, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != count {
            return Err(err(
                ln,
                format!("{what}: expected {count} values, found {}", vals.len()),
            ));
        }
        Ok(vals)
    };

    let alpha = numbers(1, "alpha")?[0];
    let beta = numbers(1, "beta")?[0];
    let mut read_matrix = |name: &str| -> Result<Matrix, ScorerError> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            data.extend(numbers(n, &format!("{name} row {i}"))?);
        }
        Ok(Matrix::from_row_major(n, data).expect("n*n values collected"))
    };
    let m = read_matrix("M")?;
    let nm = read_matrix("N")?;
    ScorerParams::new(m, nm, alpha, beta)
}

pub fn save_params(params: &ScorerParams, path: &Path) -> Result<(), ScorerError> {
    std::fs::write(path, write_params(params)).map_err(|source| ScorerError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_params(path: &Path) -> Result<ScorerParams, ScorerError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScorerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_params(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(
            n in 1usize..5,
            vals in proptest::collection::vec(-1e6f64..1e6, 32),
            alpha in -10.0f64..10.0,
            beta in 0.001f64..10.0,
        ) {
            let m = Matrix::from_row_major(n, vals[..n * n].to_vec()).unwrap();
            let nm = Matrix::from_row_major(n, vals[16..16 + n * n].to_vec()).unwrap();
            let p = ScorerParams::new(m, nm, alpha, beta).unwrap();
            prop_assert_eq!(parse_params(&write_params(&p)).unwrap(), p);
        }
    }

    #[test]
    fn layout_and_errors() {
        let p = ScorerParams::identity(2, 0.5, 2.0).unwrap();
        assert_eq!(
            write_params(&p),
            "BILIN1 2\n0.5\n2.0\n1.0 0.0\n0.0 1.0\n1.0 0.0\n0.0 1.0\n"
        );
        assert!(parse_params("BILIN2 2\n").is_err());
        assert!(parse_params("BILIN1 2\n0\n1\n1 0\n").is_err());
        assert!(matches!(
            parse_params("BILIN1 1\n0\n0\n1\n1\n"),
            Err(ScorerError::ZeroBeta)
        ));
        assert!(matches!(
            parse_params("BILIN1 1\n0\n1\n1 2\n1\n"),
            Err(ScorerError::Parse { line: 4, .. })
        ));
    }
}
