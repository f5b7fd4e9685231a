//! CSV ingestion and export.
//!
//! Data files have a header row `group,t₁,…,t_m` (grid points as column
//! names) and one row per subject. Contrast files have a header
//! `block,g₁,…,g_k`; consecutive rows with the same block label form one
//! block. Target files are headerless numeric CSV with one row per stacked
//! contrast row and one column per grid point.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::design::{Dataset, FunctionalSample, Grid, HypothesisFamily};
use crate::error::{Error, Result};

fn ingest_error(path: &Path, line: u64, column: Option<usize>, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    ingest_error(path, line, None, e.to_string())
}

fn parse_real(path: &Path, line: u64, column: usize, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ingest_error(path, line, Some(column), format!("'{field}' is not a finite number"))),
    }
}

/// Reads a data file, taking the grid from the header.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    ingest(path.as_ref(), None)
}

/// Reads a data file with an explicitly supplied grid; the header's value
/// columns are then only counted.
pub fn ingest_csv_with_grid(path: impl AsRef<Path>, grid: Grid) -> Result<Dataset> {
    ingest(path.as_ref(), Some(grid))
}

fn ingest(path: &Path, grid: Option<Grid>) -> Result<Dataset> {
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0).map(|h| h.eq_ignore_ascii_case("group")) != Some(true) {
        return Err(ingest_error(path, 1, Some(1), "first column must be named 'group'"));
    }
    if header.len() < 2 {
        return Err(ingest_error(path, 1, None, "no value columns"));
    }
    let grid = match grid {
        Some(g) => {
            if g.len() != header.len() - 1 {
                return Err(ingest_error(
                    path,
                    1,
                    None,
                    format!("{} value columns but the grid has {} points", header.len() - 1, g.len()),
                ));
            }
            g
        }
        None => {
            let points = header
                .iter()
                .enumerate()
                .skip(1)
                .map(|(c, f)| parse_real(path, 1, c + 1, f))
                .collect::<Result<Vec<_>>>()?;
            if let Some(c) = points.windows(2).position(|w| w[1] <= w[0]) {
                return Err(ingest_error(
                    path,
                    1,
                    Some(c + 3),
                    format!("grid points must increase strictly ({} after {})", points[c + 1], points[c]),
                ));
            }
            Grid::new(points).map_err(|e| ingest_error(path, 1, None, e.to_string()))?
        }
    };
    let m = grid.len();

    // group label -> (first line, values)
    let mut groups: BTreeMap<usize, (u64, Vec<f64>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != m + 1 {
            return Err(ingest_error(
                path,
                line,
                None,
                format!("expected {} fields, found {}", m + 1, record.len()),
            ));
        }
        let label = &record[0];
        let group = match label.parse::<usize>() {
            Ok(g) if g >= 1 => g,
            _ => {
                return Err(ingest_error(
                    path,
                    line,
                    Some(1),
                    format!("group label '{label}' is not a positive integer"),
                ))
            }
        };
        let entry = groups.entry(group).or_insert_with(|| (line, Vec::new()));
        for (c, field) in record.iter().enumerate().skip(1) {
            entry.1.push(parse_real(path, line, c + 1, field)?);
        }
    }
    if groups.is_empty() {
        return Err(ingest_error(path, 1, None, "no data rows"));
    }
    let k = groups.len();
    if let Some((expected, _)) = (1..=k).zip(groups.keys()).find(|(e, g)| *e != **g) {
        return Err(ingest_error(
            path,
            0,
            Some(1),
            format!("group labels must be 1..{k} without gaps; group {expected} is missing"),
        ));
    }
    let mut samples = Vec::with_capacity(k);
    for (group, (line, values)) in groups {
        let n = values.len() / m;
        if n < 2 {
            return Err(ingest_error(
                path,
                line,
                Some(1),
                format!("group {group} has {n} subject, at least 2 are needed"),
            ));
        }
        samples.push(FunctionalSample::new(group, DMatrix::from_row_slice(n, m, &values))?);
    }
    Dataset::new(grid, samples)
}

/// Writes a dataset in the format read by [`ingest_csv`]. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut line = String::from("group");
    for t in data.grid().points() {
        line.push_str(&format!(",{t}"));
    }
    writeln!(out, "{line}").map_err(io_err)?;
    for sample in data.samples() {
        for row in sample.values().row_iter() {
            line.clear();
            line.push_str(&sample.group_id().to_string());
            for v in row.iter() {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Reads numbers separated by commas, whitespace or newlines.
pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for (c, field) in line.split(|ch: char| ch == ',' || ch.is_whitespace()).filter(|f| !f.is_empty()).enumerate() {
            points.push(parse_real(path, i as u64 + 1, c + 1, field)?);
        }
    }
    Grid::new(points)
}

/// Reads a contrast file for `k` groups.
pub fn read_contrasts(path: impl AsRef<Path>) -> Result<HypothesisFamily> {
    let path = path.as_ref();
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0).map(|h| h.eq_ignore_ascii_case("block")) != Some(true) {
        return Err(ingest_error(path, 1, Some(1), "first column must be named 'block'"));
    }
    let k = header.len() - 1;
    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != k + 1 {
            return Err(ingest_error(path, line, None, format!("expected {} fields, found {}", k + 1, record.len())));
        }
        let row = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, f)| parse_real(path, line, c + 1, f))
            .collect::<Result<Vec<_>>>()?;
        if labels.last().map(String::as_str) != Some(&record[0]) {
            if labels.iter().any(|l| l == &record[0]) {
                return Err(ingest_error(path, line, Some(1), format!("rows of block '{}' are not consecutive", &record[0])));
            }
            labels.push(record[0].to_string());
            rows.push(Vec::new());
        }
        rows.last_mut().expect("pushed above").push(row);
    }
    let blocks = rows
        .iter()
        .map(|r| DMatrix::from_fn(r.len(), k, |a, i| r[a][i]))
        .collect();
    HypothesisFamily::new(blocks, labels)
}

/// Reads a headerless numeric matrix.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rdr = reader(path, false)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| parse_real(path, line, c + 1, f))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(ingest_error(path, line, None, format!("expected {} fields, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ingest_error(path, 1, None, "empty matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |a, j| rows[a][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn message(e: Error) -> (u64, Option<usize>, String) {
        match e {
            Error::Ingest { line, column, message, .. } => (line, column, message),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn small_file() {
        let f = file("group,0,0.5,1\n1,1,2,3\n2,0,0,0\n1,4,5,6\n2,1,1,1\n");
        let d = ingest_csv(f.path()).unwrap();
        assert_eq!(d.num_groups(), 2);
        assert_eq!(d.group_sizes(), vec![2, 2]);
        assert_eq!(d.grid_len(), 3);
        assert_eq!(d.samples()[0].values()[(1, 2)], 6.0);
    }

    #[test]
    fn decreasing_header() {
        let f = file("group,1,0.5,0\n1,1,2,3\n1,1,2,3\n2,1,2,3\n2,1,2,3\n");
        let (line, column, msg) = message(ingest_csv(f.path()).unwrap_err());
        assert_eq!((line, column), (1, Some(3)));
        assert!(msg.contains("increase"));
    }

    #[test]
    fn singleton_group() {
        let f = file("group,0,1\n1,1,2\n1,1,2\n2,0,0\n2,3,3\n3,1,1\n");
        let (line, _, msg) = message(ingest_csv(f.path()).unwrap_err());
        assert_eq!(line, 6);
        assert!(msg.contains("group 3 has 1"));
    }

    #[test]
    fn malformed_inputs() {
        for (content, expect) in [
            ("subject,0,1\n1,1,2\n", "'group'"),
            ("group,0,1\n1,1,2\n1,1\n", "expected 3 fields"),
            ("group,0,1\n1,1,2\n1,x,2\n", "not a finite number"),
            ("group,0,1\n0,1,2\n", "positive integer"),
            ("group,0,1\n1,1,2\n1,1,2\n3,1,2\n3,1,2\n", "group 2 is missing"),
            ("group,0,1\n", "no data rows"),
        ] {
            let f = file(content);
            let err = ingest_csv(f.path()).unwrap_err().to_string();
            assert!(err.contains(expect), "{content:?}: {err}");
        }
        assert!(matches!(ingest_csv("/nonexistent/data.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn round_trip() {
        let grid = Grid::new(vec![0.0, 0.1, 1.0 / 3.0, 2.5e-7 + 0.5]).unwrap();
        let samples = (1..=2)
            .map(|g| {
                FunctionalSample::new(g, DMatrix::from_fn(3, 4, |s, j| ((g * 31 + s * 7 + j) as f64).sin() * 1e-5 / 7.0))
                    .unwrap()
            })
            .collect();
        let data = Dataset::new(grid, samples).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&data, f.path()).unwrap();
        assert_eq!(ingest_csv(f.path()).unwrap(), data);
    }

    #[test]
    fn explicit_grid_and_contrasts() {
        let g = file("0 0.25\n1\n");
        let grid = read_grid(g.path()).unwrap();
        assert_eq!(grid.points(), &[0.0, 0.25, 1.0]);
        let f = file("group,a,b,c\n1,1,2,3\n1,1,2,4\n2,0,0,0\n2,1,1,1\n");
        let d = ingest_csv_with_grid(f.path(), grid).unwrap();
        assert_eq!(d.grid().points(), &[0.0, 0.25, 1.0]);

        let c = file("block,g1,g2,g3\nfirst,1,-1,0\nsecond,1,0,-1\nsecond,0,1,-1\n");
        let fam = read_contrasts(c.path()).unwrap();
        assert_eq!(fam.labels(), &["first", "second"]);
        assert_eq!(fam.block(1).nrows(), 2);
        let bad = file("block,g1,g2\na,1,-1\nb,1,-1\na,1,-1\n");
        assert!(read_contrasts(bad.path()).unwrap_err().to_string().contains("consecutive"));

        let t = file("0,1,2\n3,4,5\n");
        assert_eq!(read_matrix(t.path()).unwrap(), DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
    }
}
