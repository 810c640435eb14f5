//! Dataset files.
//!
//! CSV layout, one row per sample:
//!
//! ```text
//! id,treatment,v_1,...,v_d,y_0001,...,y_T[,vc_0001,...,vc_Tc]
//! ```
//!
//! Grids are implicit: `T` uniform points on `[0, 1]`. The JSON layout holds
//! the same fields plus explicit grid arrays. Schema errors report the
//! 1-based data row (the header is row 0).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Curve, Dataset, Grid, ObservationalSample};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Json,
}

impl DatasetFormat {
    /// Guesses the format from a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => DatasetFormat::Json,
            _ => DatasetFormat::Csv,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let file = BufReader::new(File::open(path)?);
    match format {
        DatasetFormat::Csv => read_csv(file),
        DatasetFormat::Json => read_json(file),
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    match format {
        DatasetFormat::Csv => write_csv(ds, &mut file)?,
        DatasetFormat::Json => write_json(ds, &mut file)?,
    }
    file.flush()?;
    Ok(())
}

/// Column label with four-digit zero padding, e.g. `y_0007`.
pub fn grid_column(prefix: &str, index: usize) -> String {
    format!("{prefix}_{:04}", index + 1)
}

struct Layout {
    dim: usize,
    outcome_len: usize,
    covariate_len: usize,
}

fn parse_header(header: &csv::StringRecord) -> Result<Layout> {
    let schema = |message: String| Error::Schema { row: 0, message };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "treatment" {
        return Err(schema("header must start with `id,treatment`".into()));
    }
    let mut pos = 2;
    let mut dim = 0;
    while pos < cols.len() && cols[pos] == format!("v_{}", dim + 1) {
        dim += 1;
        pos += 1;
    }
    let mut outcome_len = 0;
    while pos < cols.len() && cols[pos] == grid_column("y", outcome_len) {
        outcome_len += 1;
        pos += 1;
    }
    let mut covariate_len = 0;
    while pos < cols.len() && cols[pos] == grid_column("vc", covariate_len) {
        covariate_len += 1;
        pos += 1;
    }
    if pos != cols.len() {
        return Err(schema(format!("unexpected column `{}`", cols[pos])));
    }
    if outcome_len < 2 {
        return Err(schema(format!("need at least 2 outcome columns, found {outcome_len}")));
    }
    if covariate_len == 1 {
        return Err(schema("covariate curve needs at least 2 columns".into()));
    }
    Ok(Layout {
        dim,
        outcome_len,
        covariate_len,
    })
}

fn parse_field(record: &csv::StringRecord, idx: usize, row: usize) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    let value: f64 = raw.parse().map_err(|_| Error::Schema {
        row,
        message: format!("column {} holds `{raw}`, not a number", idx + 1),
    })?;
    if !value.is_finite() {
        return Err(Error::Schema {
            row,
            message: format!("column {} is not finite", idx + 1),
        });
    }
    Ok(value)
}

pub(crate) fn read_csv(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let layout = parse_header(rdr.headers()?)?;
    let width = 2 + layout.dim + layout.outcome_len + layout.covariate_len;
    let outcome_grid = Grid::uniform(layout.outcome_len)?;
    let covariate_grid = if layout.covariate_len > 0 {
        Some(Grid::uniform(layout.covariate_len)?)
    } else {
        None
    };

    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != width {
            return Err(Error::Schema {
                row,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let id = record.get(0).unwrap_or("").trim().to_string();
        let treatment = parse_field(&record, 1, row)?;
        let mut col = 2;
        let mut take = |count: usize| -> Result<Vec<f64>> {
            let out = (col..col + count)
                .map(|j| parse_field(&record, j, row))
                .collect::<Result<Vec<_>>>()?;
            col += count;
            Ok(out)
        };
        let covariates = take(layout.dim)?;
        let outcome = Curve::new(outcome_grid.clone(), take(layout.outcome_len)?)?;
        let covariate_curve = match &covariate_grid {
            Some(g) => Some(Curve::new(g.clone(), take(layout.covariate_len)?)?),
            None => None,
        };
        samples.push(ObservationalSample {
            id,
            treatment,
            covariates,
            covariate_curve,
            outcome,
        });
    }
    Dataset::new(samples)
}

pub(crate) fn write_csv(ds: &Dataset, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "treatment".to_string()];
    header.extend((1..=ds.covariate_dim()).map(|j| format!("v_{j}")));
    header.extend((0..ds.outcome_grid().len()).map(|j| grid_column("y", j)));
    if let Some(g) = ds.covariate_grid() {
        header.extend((0..g.len()).map(|j| grid_column("vc", j)));
    }
    wtr.write_record(&header)?;
    for s in ds.samples() {
        let mut rec = vec![s.id.clone(), s.treatment.to_string()];
        rec.extend(s.covariates.iter().map(f64::to_string));
        rec.extend(s.outcome.values().iter().map(f64::to_string));
        if let Some(c) = &s.covariate_curve {
            rec.extend(c.values().iter().map(f64::to_string));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonSample {
    id: String,
    treatment: f64,
    covariates: Vec<f64>,
    outcome: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariate_curve: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    outcome_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariate_grid: Option<Vec<f64>>,
    samples: Vec<JsonSample>,
}

pub(crate) fn read_json(reader: impl Read) -> Result<Dataset> {
    let raw: JsonDataset = serde_json::from_reader(reader)?;
    let outcome_grid = Grid::from_points(raw.outcome_grid)?;
    let covariate_grid = raw.covariate_grid.map(Grid::from_points).transpose()?;
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (i, s) in raw.samples.into_iter().enumerate() {
        let row = i + 1;
        let schema = |e: Error| Error::Schema {
            row,
            message: e.to_string(),
        };
        let outcome = Curve::new(outcome_grid.clone(), s.outcome).map_err(schema)?;
        let covariate_curve = match (&covariate_grid, s.covariate_curve) {
            (Some(g), Some(v)) => Some(Curve::new(g.clone(), v).map_err(schema)?),
            (None, None) => None,
            _ => {
                return Err(Error::Schema {
                    row,
                    message: "covariate curve does not match covariate_grid".into(),
                })
            }
        };
        samples.push(ObservationalSample {
            id: s.id,
            treatment: s.treatment,
            covariates: s.covariates,
            covariate_curve,
            outcome,
        });
    }
    Dataset::new(samples)
}

pub(crate) fn write_json(ds: &Dataset, writer: impl Write) -> Result<()> {
    let raw = JsonDataset {
        outcome_grid: ds.outcome_grid().points().to_vec(),
        covariate_grid: ds.covariate_grid().map(|g| g.points().to_vec()),
        samples: ds
            .samples()
            .iter()
            .map(|s| JsonSample {
                id: s.id.clone(),
                treatment: s.treatment,
                covariates: s.covariates.clone(),
                outcome: s.outcome.values().to_vec(),
                covariate_curve: s.covariate_curve.as_ref().map(|c| c.values().to_vec()),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(writer, &raw)?;
    Ok(())
}

/// Writes curves keyed by id, e.g. warping functions as `id,g_0001..g_T`.
pub fn write_curve_table<'a>(
    path: impl AsRef<Path>,
    prefix: &str,
    rows: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header_written = false;
    for (id, values) in rows {
        if !header_written {
            let mut header = vec!["id".to_string()];
            header.extend((0..values.len()).map(|j| grid_column(prefix, j)));
            wtr.write_record(&header)?;
            header_written = true;
        }
        let mut rec = vec![id.to_string()];
        rec.extend(values.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a table written by [`write_curve_table`].
pub fn read_curve_table(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let values = (1..record.len())
            .map(|j| parse_field(&record, j, i + 1))
            .collect::<Result<Vec<_>>>()?;
        out.push((record.get(0).unwrap_or("").to_string(), values));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dataset(with_curves: bool) -> Dataset {
        let g = Grid::uniform(4).unwrap();
        let gc = Grid::uniform(3).unwrap();
        let samples = (0..3)
            .map(|i| ObservationalSample {
                id: format!("s{i}"),
                treatment: (i % 2) as f64,
                covariates: vec![0.1 * i as f64, -1.0 / 3.0],
                covariate_curve: with_curves
                    .then(|| Curve::from_fn(&gc, |t| t * i as f64 + 0.7).unwrap()),
                outcome: Curve::from_fn(&g, |t| (t + i as f64).sin() / 7.0).unwrap(),
            })
            .collect();
        Dataset::new(samples).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        for curves in [false, true] {
            let ds = small_dataset(curves);
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn json_round_trip() {
        let ds = small_dataset(true);
        let mut buf = Vec::new();
        write_json(&ds, &mut buf).unwrap();
        assert_eq!(read_json(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn short_row_is_schema_error() {
        let text = "id,treatment,y_0001,y_0002,y_0003\na,1,0,1,2\nb,0,0,1\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema { row: 2, .. }), "{err}");
    }

    #[test]
    fn missing_value_is_schema_error() {
        let text = "id,treatment,y_0001,y_0002\na,1,0,\nb,0,0,1\n";
        assert!(matches!(
            read_csv(text.as_bytes()),
            Err(Error::Schema { row: 1, .. })
        ));
    }

    #[test]
    fn bad_header_is_schema_error() {
        let text = "id,treatment,y_0001,y_0003\na,1,0,1\nb,0,0,1\n";
        assert!(matches!(
            read_csv(text.as_bytes()),
            Err(Error::Schema { row: 0, .. })
        ));
    }

    #[test]
    fn mixed_treatments_load() {
        let text = "id,treatment,y_0001,y_0002\na,1,0,1\nb,0.5,0,1\nc,0,2,3\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        let column_is_binary = text
            .lines()
            .skip(1)
            .all(|l| matches!(l.split(',').nth(1), Some("0") | Some("1")));
        assert_eq!(ds.is_binary(), column_is_binary);
        assert!(!ds.is_binary());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(DatasetFormat::from_path(Path::new("a.JSON")), DatasetFormat::Json);
        assert_eq!(DatasetFormat::from_path(Path::new("a.csv")), DatasetFormat::Csv);
    }
}
