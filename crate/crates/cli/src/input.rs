//! Sensor CSV frames: one row per time sample, one column per channel,
//! decimal values. An optional non-numeric first row is taken as a header.

use std::path::Path;

use bnnsim::bitpack::Shape3;
use bnnsim::model::{Fixed16, FixedTensor};

use crate::error::{CliError, CliResult};

pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::Parse(format!(
                    "{}: row {} has a non-numeric value",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// Number of whole frames of `shape` in `rows`.
pub fn frame_count(rows: &[Vec<f64>], shape: Shape3) -> usize {
    rows.len() / shape.positions()
}

/// Cuts frame `index` out of `rows`: the frame's rows fill positions in
/// raster order, columns are channels.
pub fn frame(rows: &[Vec<f64>], shape: Shape3, index: usize, source: &Path) -> CliResult<FixedTensor> {
    let positions = shape.positions();
    let start = index * positions;
    if rows.len() < start + positions {
        return Err(CliError::Contract(format!(
            "{}: frame {index} needs rows {}..{} but the file has {} data rows (model input {shape} = {} samples x {} channels)",
            source.display(),
            start + 1,
            start + positions,
            rows.len(),
            positions,
            shape.channels
        )));
    }
    let mut data = vec![Fixed16::ZERO; shape.numel()];
    for (pos, row) in rows[start..start + positions].iter().enumerate() {
        if row.len() != shape.channels {
            return Err(CliError::Contract(format!(
                "{}: row {} has {} columns, model input {shape} expects {} channels",
                source.display(),
                start + pos + 1,
                row.len(),
                shape.channels
            )));
        }
        for (c, &x) in row.iter().enumerate() {
            data[pos * shape.channels + c] = Fixed16::from_real(x).ok_or_else(|| {
                CliError::Parse(format!(
                    "{}: value {x} in row {} is outside the Q8.8 range",
                    source.display(),
                    start + pos + 1
                ))
            })?;
        }
    }
    Ok(FixedTensor::new(shape, data))
}

/// Writes a tensor as CSV in the layout [`frame`] reads.
pub fn write_frame(t: &FixedTensor, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for row in t.data.chunks(t.shape.channels) {
        w.write_record(row.iter().map(|x| format!("{}", x.to_real::<f64>())))
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
