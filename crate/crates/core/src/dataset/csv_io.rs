use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::{validate_schema, ColumnKind, ColumnSchema, DatasetError, TabularDataset};
use crate::matrix::Matrix;

/// Schema column name -> CSV header. Schema columns absent from the map are
/// looked up under their own name.
pub type ColumnMapping = HashMap<String, String>;

pub fn load_csv(
    path: &Path,
    schema: &[ColumnSchema],
    mapping: &ColumnMapping,
) -> Result<TabularDataset, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, schema, mapping)
}

/// Parses comma-separated text with one header row. Rows keep their input
/// order; data rows are numbered from 1 in errors. Empty cells read as NaN
/// so that `clean` can deal with them.
pub fn read_csv<R: Read>(
    reader: R,
    schema: &[ColumnSchema],
    mapping: &ColumnMapping,
) -> Result<TabularDataset, DatasetError> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
        Ok(_) => return Err(DatasetError::EmptyFile),
        Err(e) => {
            return Err(DatasetError::Malformed {
                row: 0,
                message: e.to_string(),
            })
        }
    };

    // Loaded columns: features in schema order, then the target.
    let loaded: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Feature)
        .chain(schema.iter().filter(|c| c.kind == ColumnKind::Target))
        .collect();
    let positions = loaded
        .iter()
        .map(|c| {
            let header = mapping.get(&c.name).unwrap_or(&c.name);
            headers
                .iter()
                .position(|h| h == header)
                .ok_or_else(|| DatasetError::MissingColumn(header.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let width = loaded.len() - 1;
    let mut data = Vec::new();
    let mut target = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(DatasetError::Malformed {
                    row: row + 1,
                    message: e.to_string(),
                })
            }
        }
        row += 1;
        for (slot, (&pos, col)) in positions.iter().zip(&loaded).enumerate() {
            let cell = record.get(pos).ok_or_else(|| DatasetError::Malformed {
                row,
                message: format!("missing field for column {:?}", col.name),
            })?;
            let value = parse_cell(cell).ok_or_else(|| DatasetError::Parse {
                row,
                column: col.name.clone(),
                value: cell.to_string(),
            })?;
            if slot < width {
                data.push(value);
            } else {
                target.push(value);
            }
        }
    }
    if row == 0 {
        return Err(DatasetError::EmptyFile);
    }
    TabularDataset::new(schema.to_vec(), Matrix::from_vec(row, width, data), target)
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.is_empty() {
        return Some(f64::NAN);
    }
    // Only plain decimal notation (and the usual spellings of NaN/inf);
    // reject Rust-specific forms such as "infinity" written oddly or hex.
    let ok = cell
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    let special = matches!(
        cell.to_ascii_lowercase().as_str(),
        "nan" | "inf" | "+inf" | "-inf"
    );
    if !ok && !special {
        return None;
    }
    cell.parse::<f64>().ok()
}
