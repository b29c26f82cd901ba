//! CSV point I/O. Floats are printed with 17 significant digits so an
//! eval -> fit round trip loses nothing.

use crate::CliError;
use freemesh::bench::format_f64;
use std::fs;
use std::io::Write;
use std::path::Path;

fn parse_field(field: &str, line_no: usize, path: &Path) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::input(format!(
            "{}: line {line_no}: cannot parse '{}' as a number",
            path.display(),
            field.trim()
        ))
    })
}

fn split_line(line: &str) -> Vec<&str> {
    line.split(',').collect()
}

/// Reads a sample file with header x1,x2,x3,f.
pub fn read_points_csv(path: &Path) -> Result<(Vec<[f64; 3]>, Vec<f64>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().eq_ignore_ascii_case("x1,x2,x3,f") => {}
        Some((_, header)) => {
            return Err(CliError::input(format!(
                "{}: line 1: expected header 'x1,x2,x3,f', found '{}'",
                path.display(),
                header.trim()
            )))
        }
        None => {
            return Err(CliError::input(format!(
                "{}: empty file (expected header 'x1,x2,x3,f')",
                path.display()
            )))
        }
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 4 {
            return Err(CliError::input(format!(
                "{}: line {line_no}: expected 4 comma-separated fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        points.push([
            parse_field(fields[0], line_no, path)?,
            parse_field(fields[1], line_no, path)?,
            parse_field(fields[2], line_no, path)?,
        ]);
        values.push(parse_field(fields[3], line_no, path)?);
    }
    Ok((points, values))
}

/// Reads a query file with header x1,x2,x3. A header-only (or empty) file
/// yields an empty query set.
pub fn read_query_csv(path: &Path) -> Result<Vec<[f64; 3]>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().eq_ignore_ascii_case("x1,x2,x3") => {}
        Some((_, header)) => {
            return Err(CliError::input(format!(
                "{}: line 1: expected header 'x1,x2,x3', found '{}'",
                path.display(),
                header.trim()
            )))
        }
        None => return Ok(points), // zero-byte file: empty query set
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(line);
        if fields.len() != 3 {
            return Err(CliError::input(format!(
                "{}: line {line_no}: expected 3 comma-separated fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        points.push([
            parse_field(fields[0], line_no, path)?,
            parse_field(fields[1], line_no, path)?,
            parse_field(fields[2], line_no, path)?,
        ]);
    }
    Ok(points)
}

/// Writes query points and interpolated values with header
/// x1,x2,x3,f_interp.
pub fn write_values_csv(path: &Path, points: &[[f64; 3]], values: &[f64]) -> Result<(), CliError> {
    let mut out = String::from("x1,x2,x3,f_interp\n");
    for (p, v) in points.iter().zip(values) {
        out.push_str(&format_f64(p[0]));
        out.push(',');
        out.push_str(&format_f64(p[1]));
        out.push(',');
        out.push_str(&format_f64(p[2]));
        out.push(',');
        out.push_str(&format_f64(*v));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file =
        fs::File::create(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}
