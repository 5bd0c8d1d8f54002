//! Numeric CSV ingestion with optional label binarization.

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Label column selector: zero-based index or header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSpec {
    Index(usize),
    Name(String),
    /// The last column of the file.
    Last,
}

impl FromStr for ColumnSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty column spec".into()));
        }
        if s == "last" {
            return Ok(Self::Last);
        }
        Ok(s.parse::<usize>().map_or_else(|_| Self::Name(s.to_string()), Self::Index))
    }
}

impl fmt::Display for ColumnSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Index(i) => write!(f, "{i}"),
            Self::Name(n) => f.write_str(n),
            Self::Last => f.write_str("last"),
        }
    }
}

/// Collapses a multi-class label into two classes.
#[derive(Debug, Clone, PartialEq)]
pub enum BinarizeRule {
    /// `threshold:<col>:<value>`: the numeric score in `column` becomes the
    /// label source; scores strictly above `value` map to class 1.
    Threshold { column: ColumnSpec, value: f64 },
    /// `group:<l1,l2,...>`: listed labels map to class 0, all others to class 1.
    Group { labels: Vec<String> },
}

impl FromStr for BinarizeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed binarization rule {s:?}"));
        if let Some(rest) = s.strip_prefix("threshold:") {
            let (col, value) = rest.rsplit_once(':').ok_or_else(bad)?;
            let value = value.trim().parse::<f64>().map_err(|_| bad())?;
            return Ok(Self::Threshold { column: col.parse()?, value });
        }
        if let Some(rest) = s.strip_prefix("group:") {
            let labels: Vec<String> =
                rest.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
            if labels.is_empty() {
                return Err(bad());
            }
            return Ok(Self::Group { labels });
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label: ColumnSpec,
    pub binarize: Option<BinarizeRule>,
    pub standardize: bool,
    /// `None` sniffs the first row: it is a header when a feature cell is not numeric.
    pub has_header: Option<bool>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { label: ColumnSpec::Last, binarize: None, standardize: false, has_header: None }
    }
}

fn resolve(spec: &ColumnSpec, header: Option<&csv::StringRecord>, width: usize) -> Result<usize> {
    let idx = match spec {
        ColumnSpec::Index(i) => *i,
        ColumnSpec::Last => width.checked_sub(1).ok_or_else(|| Error::UnknownColumn("last".into()))?,
        ColumnSpec::Name(name) => header
            .and_then(|h| h.iter().position(|c| c.trim() == name))
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
    };
    if idx >= width {
        return Err(Error::UnknownColumn(spec.to_string()));
    }
    Ok(idx)
}

fn labels_match(a: &str, b: &str) -> bool {
    a == b || matches!((a.parse::<f64>(), b.parse::<f64>()), (Ok(x), Ok(y)) if x == y)
}

fn integer_label(s: &str) -> Option<usize> {
    let v = s.parse::<f64>().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < 1e9).then_some(v as usize)
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_csv(file, opts)
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let width = first.len();

    let label_spec = match &opts.binarize {
        Some(BinarizeRule::Threshold { column, .. }) => column,
        _ => &opts.label,
    };
    let has_header = match opts.has_header {
        Some(h) => h,
        None => {
            matches!(label_spec, ColumnSpec::Name(_)) || {
                let guess = resolve(label_spec, None, width).unwrap_or(usize::MAX);
                first.iter().enumerate().any(|(c, v)| c != guess && v.parse::<f64>().is_err())
            }
        }
    };
    let header = has_header.then_some(first);
    let label_col = resolve(label_spec, header, width)?;
    let body = &records[usize::from(has_header)..];
    if body.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let dim = width - 1;
    let mut features = Vec::with_capacity(body.len() * dim);
    let mut raw_labels = Vec::with_capacity(body.len());
    for rec in body {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::MalformedRow { line, expected: width, found: rec.len() });
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_col {
                raw_labels.push((line, cell.to_string()));
                continue;
            }
            let v = cell.parse::<f64>().map_err(|_| Error::NonNumericFeature {
                line,
                column: c,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericFeature { line, column: c, value: cell.to_string() });
            }
            features.push(v);
        }
    }

    let labels: Vec<usize> = match &opts.binarize {
        Some(BinarizeRule::Threshold { value, .. }) => raw_labels
            .iter()
            .map(|(line, s)| {
                s.parse::<f64>()
                    .map(|score| usize::from(score > *value))
                    .map_err(|_| Error::NonNumericLabel { line: *line, value: s.clone() })
            })
            .collect::<Result<_>>()?,
        Some(BinarizeRule::Group { labels: group }) => raw_labels
            .iter()
            .map(|(_, s)| usize::from(!group.iter().any(|g| labels_match(g, s))))
            .collect(),
        None => raw_labels
            .iter()
            .map(|(line, s)| integer_label(s).ok_or_else(|| Error::NonNumericLabel { line: *line, value: s.clone() }))
            .collect::<Result<_>>()?,
    };

    let num_classes = if opts.binarize.is_some() { 2 } else { labels.iter().max().map_or(0, |m| m + 1) };
    let mut seen = vec![false; num_classes.max(2)];
    for &y in &labels {
        seen[y] = true;
    }
    if let Some(class) = seen.iter().position(|s| !s) {
        return Err(Error::UnseenLabel { class, num_classes: num_classes.max(2) });
    }

    let mut data = LabeledDataset::new(features, dim, labels, num_classes)?;
    if opts.standardize {
        data.standardize();
    }
    Ok(data)
}

/// Writes `x0,..,x{d-1},label` with a header row.
pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_csv_to(data, file)
}

pub fn write_csv_to<W: std::io::Write>(data: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.dim()).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (x, y) in data.rows() {
        let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv writer>".into(), source })?;
    Ok(())
}
