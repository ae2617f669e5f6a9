//! Lattice data as CSV: a header `row,col,y,x1,...,xk` and one record per site.
//!
//! Leading lines starting with `#` are comments. Comments of the form
//! `# truth <key> = <value>` carry the parameters of simulated data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NeighborhoodTemplate};
use crate::simulate::{GroundTruth, SarDataset, WeightScheme};

/// Parsed file: the dataset (with truth attached when present) and its comments.
#[derive(Debug, Clone)]
pub struct GridFile {
    pub dataset: SarDataset,
    pub comments: Vec<String>,
}

const TRUTH_PREFIX: &str = "truth ";

fn split_comments(text: &str) -> (Vec<String>, usize, &str) {
    let mut comments = Vec::new();
    let mut offset = 0;
    let mut lines = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if let Some(c) = trimmed.strip_prefix('#') {
            comments.push(c.trim().to_string());
            offset += line.len();
            lines += 1;
        } else {
            break;
        }
    }
    (comments, lines, &text[offset..])
}

fn parse_header(fields: &csv::StringRecord, line: usize) -> Result<usize> {
    let names: Vec<&str> = fields.iter().map(str::trim).collect();
    if names.len() < 4 || names[..3] != ["row", "col", "y"] {
        return Err(Error::data(line, format!("header must start with row,col,y and name at least one regressor, got {names:?}")));
    }
    for (i, name) in names[3..].iter().enumerate() {
        let expected = format!("x{}", i + 1);
        if *name != expected {
            return Err(Error::data(line, format!("expected column {expected:?}, found {name:?}")));
        }
    }
    Ok(names.len() - 3)
}

pub fn read_grid_csv<R: Read>(mut reader: R) -> Result<GridFile> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let (comments, skipped, body) = split_comments(&text);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(body.as_bytes());
    let header_line = skipped + 1;
    let headers = rdr.headers().map_err(|e| Error::data(header_line, e.to_string()))?.clone();
    let k = parse_header(&headers, header_line)?;

    let mut records: Vec<(usize, usize, f64, Vec<f64>, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize) + skipped;
            Error::data(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize) + skipped;
        if rec.len() != k + 3 {
            return Err(Error::data(line, format!("expected {} fields, found {}", k + 3, rec.len())));
        }
        let index = |i: usize, name: &str| -> Result<usize> {
            rec[i]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::data(line, format!("{name} {:?} is not a nonnegative integer", &rec[i])))
        };
        let value = |i: usize| -> Result<f64> {
            let v = rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::data(line, format!("field {} ({:?}) is not a number", i + 1, &rec[i])))?;
            if !v.is_finite() {
                return Err(Error::data(line, format!("field {} is not finite", i + 1)));
            }
            Ok(v)
        };
        let row = index(0, "row")?;
        let col = index(1, "col")?;
        let y = value(2)?;
        let x = (3..k + 3).map(value).collect::<Result<Vec<f64>>>()?;
        records.push((row, col, y, x, line));
    }
    if records.is_empty() {
        return Err(Error::data(header_line, "no records"));
    }
    let nrows = records.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let ncols = records.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    let lattice = Lattice::new(nrows, ncols).map_err(|e| Error::data(header_line, e.to_string()))?;
    let n = lattice.n();
    let mut seen = vec![false; n];
    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, k);
    for (row, col, yv, xv, line) in &records {
        let s = lattice.site(*row, *col);
        if seen[s] {
            return Err(Error::data(*line, format!("duplicate site ({row}, {col})")));
        }
        seen[s] = true;
        y[s] = *yv;
        for (p, v) in xv.iter().enumerate() {
            x[(s, p)] = *v;
        }
    }
    if records.len() != n {
        let missing = seen.iter().position(|v| !v).unwrap_or(0);
        let (r, c) = lattice.coords(missing);
        return Err(Error::data(
            records.last().map_or(header_line, |r| r.4),
            format!("{} records do not cover the {nrows}x{ncols} grid; site ({r}, {c}) is missing", records.len()),
        ));
    }
    let mut dataset = SarDataset::new(lattice, y, x)?;
    dataset.truth = parse_truth(&comments).map_err(|e| Error::data(1, e.to_string()))?;
    Ok(GridFile { dataset, comments })
}

pub fn read_grid_csv_path(path: &Path) -> Result<GridFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_grid_csv(std::io::BufReader::new(file))
}

/// Writes `dataset` with `comments` (without the leading `#`) and its truth, if any.
pub fn write_grid_csv<W: Write>(out: W, dataset: &SarDataset, comments: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    if let Some(t) = &dataset.truth {
        for c in truth_comments(t) {
            writeln!(out, "# {c}")?;
        }
    }
    let k = dataset.k();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["row".to_string(), "col".to_string(), "y".to_string()];
    header.extend((1..=k).map(|p| format!("x{p}")));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    let lattice = &dataset.lattice;
    for s in 0..lattice.n() {
        let (r, c) = lattice.coords(s);
        let mut rec = vec![r.to_string(), c.to_string(), dataset.y[s].to_string()];
        rec.extend((0..k).map(|p| dataset.x[(s, p)].to_string()));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// `truth <key> = <value>` lines describing `truth`.
pub fn truth_comments(truth: &GroundTruth) -> Vec<String> {
    let mut lines = vec![format!("{TRUTH_PREFIX}scheme = {}", truth.scheme.name())];
    match &truth.scheme {
        WeightScheme::FromVector { template, w } => {
            lines.push(format!("{TRUTH_PREFIX}m = {}", template.m()));
            lines.push(format!("{TRUTH_PREFIX}w = {}", join(w)));
        }
        s => lines.push(format!("{TRUTH_PREFIX}c = {}", s.c())),
    }
    lines.push(format!("{TRUTH_PREFIX}beta = {}", join(&truth.beta)));
    lines.push(format!("{TRUTH_PREFIX}sigma = {}", truth.sigma));
    lines
}

/// `key = value` pairs from comment or config lines; later keys win.
pub fn parse_key_values<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in lines.into_iter().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::data(i + 1, format!("expected `key = value`, got {line:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("{v:?} is not a number"))))
        .collect()
}

/// Ground truth from `truth ...` comments, if any are present.
pub fn parse_truth(comments: &[String]) -> Result<Option<GroundTruth>> {
    let lines: Vec<&str> = comments.iter().filter_map(|c| c.strip_prefix(TRUTH_PREFIX)).collect();
    if lines.is_empty() {
        return Ok(None);
    }
    let kv = parse_key_values(lines)?;
    let get = |k: &str| kv.get(k).ok_or_else(|| Error::invalid(format!("truth is missing `{k}`")));
    let num = |k: &str| -> Result<f64> {
        get(k)?.parse::<f64>().map_err(|_| Error::invalid(format!("truth `{k}` is not a number")))
    };
    let scheme = match get("scheme")?.as_str() {
        "vector" => {
            let m = num("m")? as usize;
            WeightScheme::FromVector {
                template: NeighborhoodTemplate::new(m)?,
                w: parse_list(get("w")?)?,
            }
        }
        name => WeightScheme::from_name(name, num("c")?)?,
    };
    Ok(Some(GroundTruth {
        scheme,
        beta: parse_list(get("beta")?)?,
        sigma: num("sigma")?,
    }))
}
