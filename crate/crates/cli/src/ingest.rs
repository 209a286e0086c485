use std::path::Path;

use fibercav::analysis::{Trace, Unit};

use crate::CliError;

/// Numeric table read from a CSV file with a header row.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// File line number of each row.
    pub lines: Vec<u64>,
}

/// Reads `columns` numeric columns. Rows holding a non-finite value are
/// dropped with a warning naming their line.
pub fn read_table(path: &Path, columns: usize, warnings: &mut Vec<String>) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() != columns {
        return Err(CliError::Data(format!(
            "{}: expected {columns} columns, header has {}",
            path.display(),
            headers.len()
        )));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let values: Vec<f64> = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    CliError::Data(format!("{}:{line}: `{field}` is not a number", path.display()))
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != columns {
            return Err(CliError::Data(format!(
                "{}:{line}: expected {columns} fields, found {}",
                path.display(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            warnings.push(format!("{}:{line}: non-finite value, row skipped", path.display()));
            continue;
        }
        rows.push(values);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Table { headers, rows, lines })
}

fn header_unit(path: &Path, header: &str, expected: &[Unit]) -> Result<Unit, CliError> {
    let unit = Unit::from_header(header).ok_or_else(|| {
        CliError::Data(format!(
            "{}: column `{header}` does not declare a unit (use a suffix such as `_ns`)",
            path.display()
        ))
    })?;
    if !expected.contains(&unit) {
        let names: Vec<&str> = expected.iter().map(|u| u.suffix()).collect();
        return Err(CliError::Data(format!(
            "{}: column `{header}` is in {unit}, expected {}",
            path.display(),
            names.join(" or ")
        )));
    }
    Ok(unit)
}

/// Two-column trace with units taken from the header.
pub fn read_trace(
    path: &Path,
    x_units: &[Unit],
    y_units: &[Unit],
    warnings: &mut Vec<String>,
) -> Result<Trace, CliError> {
    let table = read_table(path, 2, warnings)?;
    let x_unit = header_unit(path, &table.headers[0], x_units)?;
    let y_unit = header_unit(path, &table.headers[1], y_units)?;
    if let Some(i) = table.rows.windows(2).position(|w| !(w[1][0] > w[0][0])) {
        return Err(CliError::Data(format!(
            "{}:{}: abscissa not strictly increasing ({} after {})",
            path.display(),
            table.lines[i + 1],
            table.rows[i + 1][0],
            table.rows[i][0]
        )));
    }
    let x = table.rows.iter().map(|r| r[0]).collect();
    let y = table.rows.iter().map(|r| r[1]).collect();
    Trace::new(x, y, x_unit, y_unit).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Long-format spectra `(index, wavelength_nm, counts)`, as written by the
/// spectrometer export.
pub fn read_indexed_spectra(path: &Path, warnings: &mut Vec<String>) -> Result<Vec<(usize, f64, f64)>, CliError> {
    let table = read_table(path, 3, warnings)?;
    header_unit(path, &table.headers[1], &[Unit::Nm])?;
    header_unit(path, &table.headers[2], &[Unit::Counts])?;
    table
        .rows
        .iter()
        .zip(&table.lines)
        .map(|(r, line)| {
            if r[0] < 0.0 || r[0].fract() != 0.0 {
                return Err(CliError::Data(format!(
                    "{}:{line}: index {} is not a non-negative integer",
                    path.display(),
                    r[0]
                )));
            }
            Ok((r[0] as usize, r[1], r[2]))
        })
        .collect()
}

/// Splits long-format records into one spectrum per index.
pub fn spectra_from_records(records: &[(usize, f64, f64)]) -> Result<Vec<Trace>, CliError> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let idx = sorted[start].0;
        let end = start + sorted[start..].iter().take_while(|r| r.0 == idx).count();
        let chunk = &sorted[start..end];
        let trace = Trace::new(
            chunk.iter().map(|r| r.1).collect(),
            chunk.iter().map(|r| r.2).collect(),
            Unit::Nm,
            Unit::Counts,
        )
        .map_err(|e| CliError::Data(format!("spectrum {idx}: {e}")))?;
        out.push(trace);
        start = end;
    }
    Ok(out)
}
