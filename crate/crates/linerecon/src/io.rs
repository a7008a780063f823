//! Text formats: sampled spectra and traces as CSV, everything else as JSON.
//!
//! Numbers are written in shortest round-trip scientific notation, so a
//! write followed by a read reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use linerecon_core::spectrum::{Grid, SampledSpectrum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest tolerated distance of an x value from its uniform grid node, in
/// grid steps.
pub const UNIFORMITY_TOL: f64 = 1e-9;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a numeric CSV with the given header; rows are numbered from 1 after
/// the header.
pub fn read_columns<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<[f64; N]>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| malformed(path, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(malformed(
            path,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| malformed(path, format!("row {row}: {e}")))?;
        let mut out = [0.0; N];
        for (slot, field) in out.iter_mut().zip(record.iter()) {
            *slot = field
                .parse()
                .map_err(|_| malformed(path, format!("row {row}: `{field}` is not a number")))?;
        }
        rows.push(out);
    }
    Ok(rows)
}

/// Writes rows under `header`.
pub fn write_columns<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: &[[f64; N]],
) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let fields: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

/// Reads an `x,value` CSV and checks that the x column is a uniform grid.
pub fn read_sampled_csv(path: &Path) -> Result<SampledSpectrum> {
    let rows = read_columns(path, ["x", "value"])?;
    if rows.is_empty() {
        return Err(Error::EmptySpectrum {
            path: path.to_path_buf(),
        });
    }
    for (k, w) in rows.windows(2).enumerate() {
        if !(w[1][0] > w[0][0]) {
            return Err(Error::NonMonotone {
                path: path.to_path_buf(),
                row: k + 2,
            });
        }
    }
    if rows.len() < 2 {
        return Err(malformed(path, "a spectrum needs at least two samples"));
    }
    let grid = Grid::new(rows[0][0], rows[rows.len() - 1][0], rows.len())?;
    let h = grid.step();
    for (k, row) in rows.iter().enumerate() {
        let deviation = (row[0] - grid.node(k)).abs() / h;
        if deviation > UNIFORMITY_TOL {
            return Err(Error::NonUniform {
                path: path.to_path_buf(),
                row: k + 1,
                deviation,
            });
        }
    }
    Ok(SampledSpectrum::new(
        grid,
        rows.iter().map(|r| r[1]).collect(),
    )?)
}

pub fn write_sampled_csv(spectrum: &SampledSpectrum, path: &Path) -> Result<()> {
    let rows: Vec<[f64; 2]> = spectrum
        .grid()
        .nodes()
        .zip(spectrum.values())
        .map(|(x, &v)| [x, v])
        .collect();
    write_columns(path, ["x", "value"], &rows)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value)).map_err(io_err(path))
}
