//! The GFLD1 field dump format.
//!
//! A dump is one ASCII header line
//!
//! ```text
//! GFLD1 n=<n> N=<points_per_axis> kind=<scalar|tensor>\n
//! ```
//!
//! followed by little-endian IEEE-754 `f64` pairs `(re, im)`. Points appear in
//! grid order (see [`super::GridSpec`]). A scalar dump holds one pair per
//! point; a tensor dump holds the full `n x n` matrix per point in row-major
//! order, i.e. `n*n` pairs per point.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{GridSpec, HermitianTensorField, ScalarField};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldDump {
    Scalar(ScalarField),
    Tensor(HermitianTensorField),
}

fn write_values<W: Write>(out: &mut W, values: impl Iterator<Item = Complex64>) -> Result<()> {
    let mut buf = Vec::with_capacity(1 << 16);
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
        if buf.len() >= 1 << 16 {
            out.write_all(&buf)?;
            buf.clear();
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_gfld<W: Write>(out: &mut W, field: &FieldDump) -> Result<()> {
    match field {
        FieldDump::Scalar(f) => {
            let g = f.grid();
            writeln!(out, "GFLD1 n={} N={} kind=scalar", g.n(), g.points_per_axis())?;
            write_values(out, f.values().iter().copied())
        }
        FieldDump::Tensor(t) => {
            let g = t.grid();
            let n = g.n();
            writeln!(out, "GFLD1 n={} N={} kind=tensor", n, g.points_per_axis())?;
            let values = (0..g.len()).flat_map(move |p| {
                (0..n * n).map(move |k| t.entry(p, k / n, k % n))
            });
            write_values(out, values)
        }
    }
}

fn header_field<'a>(token: Option<&'a str>, key: &str) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| Error::Format(format!("missing header field {key}")))
}

pub fn read_gfld<R: BufRead>(input: &mut R) -> Result<FieldDump> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let mut tokens = header.trim_end_matches('\n').split(' ');
    if tokens.next() != Some("GFLD1") {
        return Err(Error::Format("bad magic".into()));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad integer {s:?}")))
    };
    let n = parse(header_field(tokens.next(), "n")?)?;
    let len = parse(header_field(tokens.next(), "N")?)?;
    let kind = header_field(tokens.next(), "kind")?.to_string();
    if tokens.next().is_some() {
        return Err(Error::Format("trailing header tokens".into()));
    }
    let grid = GridSpec::new(n, len)?;
    let per_point = match kind.as_str() {
        "scalar" => 1,
        "tensor" => n * n,
        other => return Err(Error::Format(format!("unknown kind {other:?}"))),
    };
    let count = grid.len() * per_point;
    let mut bytes = vec![0u8; count * 16];
    input.read_exact(&mut bytes)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing data".into()));
    }
    let values: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    if per_point == 1 {
        return Ok(FieldDump::Scalar(ScalarField::from_values(grid, values)?));
    }
    let field = HermitianTensorField::from_point_fn(grid, |p| {
        CMatrix::from_row_slice(n, n, &values[p * n * n..(p + 1) * n * n])
    });
    Ok(FieldDump::Tensor(field))
}
