//! JSON and CSV plumbing shared by the library and the command line.

use std::io::Write;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mat2::{Mat2C, C64};

/// Complex number as `{"re": .., "im": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ComplexJson {
    fn from(z: C64) -> Self {
        ComplexJson { re: z.re, im: z.im }
    }
}

impl From<ComplexJson> for C64 {
    fn from(z: ComplexJson) -> Self {
        C64::new(z.re, z.im)
    }
}

pub fn ser_c64<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    ComplexJson::from(*z).serialize(s)
}

pub fn ser_mat2c<S: Serializer>(m: &Mat2C, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: [[ComplexJson; 2]; 2] = [[m.a11.into(), m.a12.into()], [m.a21.into(), m.a22.into()]];
    rows.serialize(s)
}

/// Parse a complex number written as `re+imi`, `re-imi`, `imi`, `i` or `re`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::InvalidInput(format!("cannot parse complex number {s:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    let finite = |z: C64| if z.is_finite() { Ok(z) } else { Err(bad()) };
    if !t.ends_with('i') {
        return finite(C64::new(t.parse().map_err(|_| bad())?, 0.0));
    }
    let body = &t[..t.len() - 1];
    // Split at the last sign that is not the leading one or part of an exponent.
    let bytes = body.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            split = Some(k);
            break;
        }
    }
    let coef = |p: &str| -> Result<f64> {
        match p {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => p.parse().map_err(|_| bad()),
        }
    };
    let z = match split {
        Some(k) => C64::new(body[..k].parse().map_err(|_| bad())?, coef(&body[k..])?),
        None => C64::new(0.0, coef(body)?),
    };
    finite(z)
}

/// Write rows of numbers as CSV with a header.
pub fn write_csv<W: Write>(out: &mut W, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format_number(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Shortest decimal that reads back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:?}");
        s
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
