//! On-disk formats: the `.tns3` dense tensor text format, the `.cpd.json`
//! factor-matrix format, and the float formatting shared by every CSV writer.
//!
//! `.tns3`: first line `tns3 n1 n2 n3`, then the entries in layout order
//! (third index fastest), whitespace-separated; the writer emits 17
//! significant digits so values round-trip exactly.
//!
//! `.cpd.json`: `{"dims": [n1, n2, n3], "factors": {"A": [...], "B": [...],
//! "C": [...]}}` where each factor is a list of its columns.

use crate::error::{Error, Result};
use crate::tensor::{Cpd, Tensor3};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// 17-significant-digit scientific notation; `inf`/`nan` pass through in
/// their standard spellings.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_tns3(path: &Path, t: &Tensor3) -> Result<()> {
    let (n1, n2, n3) = t.dims();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "tns3 {n1} {n2} {n3}")?;
    for row in t.data().chunks(n3.max(1)) {
        let line: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    Ok(())
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn read_tns3(path: &Path) -> Result<Tensor3> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))??;
    let mut it = header.split_whitespace();
    if it.next() != Some("tns3") {
        return Err(format_err(path, 1, "expected header `tns3 n1 n2 n3`"));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = it
            .next()
            .ok_or_else(|| format_err(path, 1, "missing dimension in header"))?
            .parse()
            .map_err(|e| format_err(path, 1, format!("bad dimension: {e}")))?;
    }
    if it.next().is_some() {
        return Err(format_err(path, 1, "trailing tokens in header"));
    }
    let expected = dims[0] * dims[1] * dims[2];
    let mut data = Vec::with_capacity(expected);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| format_err(path, lineno + 2, format!("bad value `{tok}`: {e}")))?;
            if !v.is_finite() {
                return Err(format_err(path, lineno + 2, format!("non-finite value `{tok}`")));
            }
            data.push(v);
            if data.len() > expected {
                return Err(format_err(
                    path,
                    lineno + 2,
                    format!("more than {expected} values"),
                ));
            }
        }
    }
    if data.len() != expected {
        return Err(format_err(
            path,
            1,
            format!("expected {expected} values, found {}", data.len()),
        ));
    }
    Tensor3::new((dims[0], dims[1], dims[2]), data)
}

#[derive(Serialize, Deserialize)]
struct FactorsJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CpdJson {
    dims: [usize; 3],
    factors: FactorsJson,
}

fn columns_of(cpd: &Cpd, which: usize) -> Vec<Vec<f64>> {
    cpd.terms()
        .iter()
        .map(|t| {
            let v = match which {
                0 => &t.a,
                1 => &t.b,
                _ => &t.c,
            };
            v.iter().cloned().collect()
        })
        .collect()
}

pub fn write_cpd_json(path: &Path, cpd: &Cpd) -> Result<()> {
    let (n1, n2, n3) = cpd.dims();
    let doc = CpdJson {
        dims: [n1, n2, n3],
        factors: FactorsJson {
            a: columns_of(cpd, 0),
            b: columns_of(cpd, 1),
            c: columns_of(cpd, 2),
        },
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let body = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::InvalidArgument(format!("serialize: {e}")))?;
    writeln!(f, "{body}")?;
    Ok(())
}

pub fn read_cpd_json(path: &Path) -> Result<Cpd> {
    let text = std::fs::read_to_string(path)?;
    let doc: CpdJson = serde_json::from_str(&text).map_err(|e| Error::FileFormat {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let [n1, n2, n3] = doc.dims;
    let r = doc.factors.a.len();
    if doc.factors.b.len() != r || doc.factors.c.len() != r {
        return Err(format_err(path, 1, "factor column counts differ"));
    }
    if r == 0 {
        return Err(format_err(path, 1, "empty decomposition"));
    }
    let column = |cols: &[Vec<f64>], i: usize, n: usize, name: &str| -> Result<DVector<f64>> {
        let col = &cols[i];
        if col.len() != n {
            return Err(format_err(
                path,
                1,
                format!("factor {name} column {i} has length {}, expected {n}", col.len()),
            ));
        }
        Ok(DVector::from_column_slice(col))
    };
    let mut terms = Vec::with_capacity(r);
    for i in 0..r {
        terms.push(crate::tensor::Rank1Term::new(
            column(&doc.factors.a, i, n1, "A")?,
            column(&doc.factors.b, i, n2, "B")?,
            column(&doc.factors.c, i, n3, "C")?,
        )?);
    }
    Cpd::new(terms)
}
