//! Plot-ready CSV tables of the stage outputs.
//!
//! `fig_forward.csv` and `fig_reconstruction.csv` are long tables with a
//! `series,x,value` header; stems carry their intensity as the value.
//! `fig_discrepancy.csv` is `alpha,residual` and `fig_regularized.csv` is a
//! plain `x,value` spectrum.

use std::path::{Path, PathBuf};

use linerecon_core::refine::ReconstructionResult;
use linerecon_core::spectrum::{LineSpectrum, SampledSpectrum};

use crate::error::{Error, Result};
use crate::io::{read_columns, write_columns, write_sampled_csv};

pub const FORWARD: &str = "fig_forward.csv";
pub const DISCREPANCY: &str = "fig_discrepancy.csv";
pub const REGULARIZED: &str = "fig_regularized.csv";
pub const RECONSTRUCTION: &str = "fig_reconstruction.csv";

/// Series labels of the long tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Truth,
    Clean,
    Noisy,
    Spline,
    Regularized,
    Refined,
}

impl Series {
    pub fn name(self) -> &'static str {
        match self {
            Series::Truth => "truth",
            Series::Clean => "clean",
            Series::Noisy => "noisy",
            Series::Spline => "spline",
            Series::Regularized => "regularized",
            Series::Refined => "refined",
        }
    }

    fn parse(s: &str) -> Option<Series> {
        [
            Series::Truth,
            Series::Clean,
            Series::Noisy,
            Series::Spline,
            Series::Regularized,
            Series::Refined,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Whatever stage outputs are available; absent parts produce no file or
/// no rows.
#[derive(Debug, Default, Clone, Copy)]
pub struct FigureData<'a> {
    pub truth: Option<&'a LineSpectrum>,
    pub clean: Option<&'a SampledSpectrum>,
    pub noisy: Option<&'a SampledSpectrum>,
    pub spline: Option<&'a SampledSpectrum>,
    pub trace: Option<&'a [(f64, f64)]>,
    pub regularized: Option<&'a SampledSpectrum>,
    pub result: Option<&'a ReconstructionResult>,
}

type Row = (Series, f64, f64);

fn curve(series: Series, s: &SampledSpectrum) -> impl Iterator<Item = Row> + '_ {
    s.grid()
        .nodes()
        .zip(s.values())
        .map(move |(x, &v)| (series, x, v))
}

fn write_series(path: &Path, rows: &[Row]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(["series", "x", "value"]).map_err(io)?;
    for (s, x, v) in rows {
        w.write_record([s.name(), &format!("{x:e}"), &format!("{v:e}")])
            .map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a `series,x,value` table back.
pub fn read_series(path: &Path) -> Result<Vec<(Series, f64, f64)>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |message: String| Error::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(["series", "x", "value"]) {
        return Err(bad("expected header `series,x,value`".into()));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
        let series = Series::parse(&rec[0])
            .ok_or_else(|| bad(format!("row {}: unknown series `{}`", k + 1, &rec[0])))?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{s}` is not a number", k + 1)))
        };
        rows.push((series, num(&rec[1])?, num(&rec[2])?));
    }
    Ok(rows)
}

pub fn read_trace(path: &Path) -> Result<Vec<(f64, f64)>> {
    Ok(read_columns(path, ["alpha", "residual"])?
        .into_iter()
        .map(|[a, r]| (a, r))
        .collect())
}

/// Writes every table the available data supports and returns the paths.
pub fn emit_figure_data(data: &FigureData<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let stems = |series: Series, lines: &LineSpectrum| -> Vec<Row> {
        lines
            .lines()
            .iter()
            .map(|l| (series, l.frequency, l.intensity))
            .collect()
    };
    if let Some(noisy) = data.noisy {
        let mut rows: Vec<Row> = data
            .truth
            .map(|t| stems(Series::Truth, t))
            .unwrap_or_default();
        if let Some(c) = data.clean {
            rows.extend(curve(Series::Clean, c));
        }
        rows.extend(curve(Series::Noisy, noisy));
        if let Some(s) = data.spline {
            rows.extend(curve(Series::Spline, s));
        }
        let p = dir.join(FORWARD);
        write_series(&p, &rows)?;
        written.push(p);
    }
    if let Some(trace) = data.trace {
        let p = dir.join(DISCREPANCY);
        let rows: Vec<[f64; 2]> = trace.iter().map(|&(a, r)| [a, r]).collect();
        write_columns(&p, ["alpha", "residual"], &rows)?;
        written.push(p);
    }
    if let Some(z) = data.regularized {
        let p = dir.join(REGULARIZED);
        write_sampled_csv(z, &p)?;
        written.push(p);
    }
    if let Some(result) = data.result {
        let mut rows: Vec<Row> = data
            .truth
            .map(|t| stems(Series::Truth, t))
            .unwrap_or_default();
        if let Some(z) = data.regularized {
            rows.extend(curve(Series::Regularized, z));
        }
        rows.extend(
            result
                .lines
                .iter()
                .map(|l| (Series::Refined, l.frequency, l.intensity)),
        );
        let p = dir.join(RECONSTRUCTION);
        write_series(&p, &rows)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_sampled_csv;
    use linerecon_core::refine::Diagnostics;
    use linerecon_core::spectrum::Grid;

    fn empty_result() -> ReconstructionResult {
        ReconstructionResult {
            lines: vec![],
            background: 0.1,
            threshold: 0.2,
            rejected: vec![],
            diagnostics: Diagnostics::default(),
            background_nonpositive: false,
        }
    }

    #[test]
    fn deconvolve_only_writes_two_tables() {
        let dir = tempfile::tempdir().unwrap();
        let z = SampledSpectrum::from_fn(Grid::new(0.0, 1.0, 11).unwrap(), |x| x * x).unwrap();
        let trace = [(1e-3, 0.5), (1e-2, 0.7)];
        let data = FigureData {
            trace: Some(&trace),
            regularized: Some(&z),
            ..FigureData::default()
        };
        let files = emit_figure_data(&data, dir.path()).unwrap();
        assert_eq!(
            files,
            vec![dir.path().join(DISCREPANCY), dir.path().join(REGULARIZED)]
        );
        assert_eq!(read_sampled_csv(&files[1]).unwrap(), z);
        assert_eq!(read_trace(&files[0]).unwrap(), trace);
    }

    #[test]
    fn empty_reconstruction_has_only_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let r = empty_result();
        let data = FigureData {
            result: Some(&r),
            ..FigureData::default()
        };
        emit_figure_data(&data, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(RECONSTRUCTION)).unwrap();
        assert_eq!(text, "series,x,value\n");
        assert!(read_series(&dir.path().join(RECONSTRUCTION))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unwritable_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "").unwrap();
        let r = empty_result();
        let data = FigureData {
            result: Some(&r),
            ..FigureData::default()
        };
        assert!(matches!(
            emit_figure_data(&data, &blocker.join("sub")),
            Err(Error::Io { .. })
        ));
    }
}
