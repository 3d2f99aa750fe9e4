//! Text formats shared across commands: embedding tables and key=value
//! config files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

/// Writes "V d" then one "word f1 .. fd" line per word. Floats use the
/// shortest representation that round-trips, so a parse-back gives the
/// same bits.
pub fn write_embedding(
    path: impl AsRef<Path>,
    words: &[String],
    dim: usize,
    data: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(data.len(), words.len() * dim);
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{} {}", words.len(), dim)?;
        for (w, row) in words.iter().zip(data.chunks(dim)) {
            write!(out, "{w}")?;
            for v in row {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads the embedding text format back into (words, dim, row-major data).
/// Non-finite entries and shape mismatches are data errors naming the line.
pub fn read_embedding(path: impl AsRef<Path>) -> Result<(Vec<String>, usize, Vec<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::data(format!("{}: empty embedding file", path.display()))),
    };
    let mut it = header.split_whitespace();
    let (v, dim): (usize, usize) = match (
        it.next().and_then(|s| s.parse().ok()),
        it.next().and_then(|s| s.parse().ok()),
        it.next(),
    ) {
        (Some(v), Some(d), None) => (v, d),
        _ => {
            return Err(Error::data(format!(
                "{}:1: expected header \"V d\"",
                path.display()
            )))
        }
    };
    if dim == 0 {
        return Err(Error::data(format!("{}:1: zero dimensionality", path.display())));
    }
    let mut words = Vec::with_capacity(v);
    let mut data = Vec::with_capacity(v * dim);
    for (ln, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a first token");
        let mut n = 0usize;
        for tok in parts {
            let val: f64 = tok.parse().map_err(|_| {
                Error::data(format!("{}:{}: bad float {tok:?}", path.display(), ln + 1))
            })?;
            if !val.is_finite() {
                return Err(Error::data(format!(
                    "{}:{}: non-finite entry",
                    path.display(),
                    ln + 1
                )));
            }
            data.push(val);
            n += 1;
        }
        if n != dim {
            return Err(Error::data(format!(
                "{}:{}: expected {dim} values, found {n}",
                path.display(),
                ln + 1
            )));
        }
        words.push(word.to_string());
    }
    if words.len() != v {
        return Err(Error::data(format!(
            "{}: header promised {v} words, found {}",
            path.display(),
            words.len()
        )));
    }
    Ok((words, dim, data))
}

/// Reads flat key=value lines. Blank lines and lines starting with '#'
/// are ignored; repeated keys are kept in order.
pub fn read_config(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed.split_once('=').ok_or_else(|| {
            Error::data(format!("{}:{}: expected key=value", path.display(), ln + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn write_config(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (k, v) in pairs {
        writeln!(out, "{k}={v}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
