use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::Matrix;

use super::{Dataset, Label};

/// Reads a headered CSV. A final column named `label` holds `0`/`1`.
///
/// Rows in error messages are 1-based file lines, so the first data row is
/// row 2. Columns are 1-based.
pub fn read_csv<F: Float, R: Read>(source: R) -> Result<Dataset<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.is_empty() {
        return Err(Error::ParseError {
            row: 1,
            column: 1,
            message: "missing header".into(),
        });
    }
    let width = headers.len();
    let has_label = headers.get(width - 1) == Some("label");
    let d = if has_label { width - 1 } else { width };
    let names: Vec<String> = headers.iter().take(d).map(str::to_owned).collect();

    let mut values: Vec<F> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 1usize;
    loop {
        row += 1;
        let more = reader
            .read_record(&mut record)
            .map_err(|e| csv_error(e, row))?;
        if !more {
            break;
        }
        if let Some(pos) = record.position() {
            row = pos.line() as usize;
        }
        if record.len() != width {
            return Err(Error::RaggedRows {
                row,
                expected: width,
                actual: record.len(),
            });
        }
        for (j, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::ParseError {
                row,
                column: j + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, column: j + 1 });
            }
            values.push(F::lit(v));
        }
        if has_label {
            let field = &record[d];
            labels.push(match field {
                "1" => Label::Normal,
                "0" => Label::Anomalous,
                other => {
                    return Err(Error::ParseError {
                        row,
                        column: width,
                        message: format!("label must be 0 or 1, got {other:?}"),
                    })
                }
            });
        }
    }

    let n = values.len().checked_div(d).unwrap_or(labels.len());
    let points = Matrix::from_row_major(n, d, values);
    Dataset::new(points, has_label.then_some(labels))?.with_feature_names(names)
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    let row = e.position().map_or(row, |p| p.line() as usize);
    Error::ParseError {
        row,
        column: 1,
        message: e.to_string(),
    }
}

/// Writes the dataset with a header (`x1..xd` unless names are set) and a
/// trailing `label` column when labels are present. Numbers use the
/// shortest representation that round-trips.
pub fn write_csv<F: Float, W: Write>(data: &Dataset<F>, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = match data.feature_names() {
        Some(names) => names.to_vec(),
        None => (1..=data.d()).map(|j| format!("x{j}")).collect(),
    };
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(into_io)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for (i, x) in data.points().iter_rows().enumerate() {
        fields.clear();
        fields.extend(x.iter().map(|v| v.to_string()));
        if let Some(l) = data.labels() {
            fields.push(l[i].as_digit().to_string());
        }
        w.write_record(&fields).map_err(into_io)?;
    }
    w.flush()?;
    Ok(())
}

fn into_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
