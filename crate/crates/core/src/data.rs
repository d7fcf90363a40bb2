//! Multivariate series, labelled training signals and their CSV form.
//!
//! The CSV layout is one row per time point with a header row
//! `ch1,...,chP[,label]`. Values are written in Rust's shortest
//! round-trip decimal form, so `read(write(x)) == x` holds bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A `P × T` real-valued signal, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MultivariateSeries {
    channels: usize,
    len: usize,
    values: Vec<f64>,
}

impl MultivariateSeries {
    /// Builds a series from one vector per channel.
    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        let p = channels.len();
        if p == 0 {
            return Err(Error::Validation("series needs at least one channel".into()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::Validation("series needs at least one time point".into()));
        }
        if let Some(bad) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::Shape(format!(
                "channel {} has {} points, channel 1 has {len}",
                bad + 1,
                channels[bad].len()
            )));
        }
        let values: Vec<f64> = channels.into_iter().flatten().collect();
        Self::from_channel_major(p, len, values)
    }

    /// Builds a series from a flat channel-major buffer of `channels * len` values.
    pub fn from_channel_major(channels: usize, len: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || len == 0 {
            return Err(Error::Validation("series must have P >= 1 and T >= 1".into()));
        }
        if values.len() != channels * len {
            return Err(Error::Shape(format!(
                "expected {} values for {channels} x {len}, got {}",
                channels * len,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!("channel {}, time {} holds {}", i / len + 1, i % len, values[i])));
        }
        Ok(Self { channels, len, values })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of time points `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, p: usize) -> &[f64] {
        &self.values[p * self.len..(p + 1) * self.len]
    }

    pub fn get(&self, p: usize, t: usize) -> f64 {
        self.values[p * self.len + t]
    }

    /// Copy of time points `start..start + len` for every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len {
            return Err(Error::Length { needed: start + len, got: self.len });
        }
        let values = (0..self.channels).flat_map(|p| self.channel(p)[start..start + len].iter().copied()).collect();
        Self::from_channel_major(self.channels, len, values)
    }
}

/// A series together with its per-time class labels (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledSeries {
    series: MultivariateSeries,
    labels: Vec<usize>,
}

impl LabelledSeries {
    pub fn new(series: MultivariateSeries, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != series.len() {
            return Err(Error::Shape(format!("{} labels for a series of length {}", labels.len(), series.len())));
        }
        if let Some(t) = labels.iter().position(|&l| l == 0) {
            return Err(Error::Validation(format!("label at time {t} is 0; labels are 1-based")));
        }
        Ok(Self { series, labels })
    }

    pub fn series(&self) -> &MultivariateSeries {
        &self.series
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_parts(self) -> (MultivariateSeries, Vec<usize>) {
        (self.series, self.labels)
    }

    /// Largest label present.
    pub fn max_label(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// First differences of every channel: `out[p][t] = x[p][t+1] - x[p][t]`.
pub fn detrend_first_difference(x: &MultivariateSeries) -> Result<MultivariateSeries> {
    if x.len() < 2 {
        return Err(Error::Length { needed: 2, got: x.len() });
    }
    let values = (0..x.channels()).flat_map(|p| x.channel(p).windows(2).map(|w| w[1] - w[0])).collect();
    MultivariateSeries::from_channel_major(x.channels(), x.len() - 1, values)
}

/// Either kind of parsed CSV file.
#[derive(Clone, Debug, PartialEq)]
pub enum CsvSeries {
    Unlabelled(MultivariateSeries),
    Labelled(LabelledSeries),
}

/// Reads a CSV file. With `has_labels`, the final column must be named
/// `label`; without it, a trailing `label` column is ignored.
pub fn read_csv(path: impl AsRef<Path>, has_labels: bool) -> Result<CsvSeries> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_csv(file, has_labels, None).map_err(|e| with_path(e, path))
}

/// Reads an unlabelled series, dropping a trailing `label` column if present.
pub fn read_series(path: impl AsRef<Path>) -> Result<MultivariateSeries> {
    match read_csv(path, false)? {
        CsvSeries::Unlabelled(s) => Ok(s),
        CsvSeries::Labelled(l) => Ok(l.into_parts().0),
    }
}

/// Reads a labelled series. When `n_classes` is given, labels outside
/// `1..=n_classes` are rejected.
pub fn read_labelled(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<LabelledSeries> {
    let path = path.as_ref();
    let file = File::open(path)?;
    match parse_csv(file, true, n_classes).map_err(|e| with_path(e, path))? {
        CsvSeries::Labelled(l) => Ok(l),
        CsvSeries::Unlabelled(_) => unreachable!("labelled parse returns labelled data"),
    }
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Parse { line, column, message, .. } => {
            Error::Parse { path: Some(path.to_path_buf()), line, column, message }
        }
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Parses CSV text from any reader.
pub fn parse_csv<R: Read>(reader: R, has_labels: bool, n_classes: Option<usize>) -> Result<CsvSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<String> = headers.iter().map(str::to_owned).collect();
    let label_col = names.last().is_some_and(|h| h.eq_ignore_ascii_case("label"));
    if has_labels && !label_col {
        return Err(Error::Validation("expected a final `label` column".into()));
    }
    let p = if label_col { names.len() - 1 } else { names.len() };
    if p == 0 {
        return Err(Error::Validation("no channel columns in header".into()));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |pos| pos.line());
        for (c, column) in columns.iter_mut().enumerate() {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: None,
                line,
                column: Some(names[c].clone()),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: None,
                    line,
                    column: Some(names[c].clone()),
                    message: format!("`{cell}` is not finite"),
                });
            }
            column.push(v);
        }
        if label_col {
            let cell = &record[p];
            let label: usize = cell.parse().map_err(|_| Error::Parse {
                path: None,
                line,
                column: Some("label".into()),
                message: format!("`{cell}` is not a positive integer label"),
            })?;
            let upper = n_classes.unwrap_or(usize::MAX);
            if label == 0 || label > upper {
                return Err(Error::Validation(format!(
                    "line {line}: label {label} outside 1..={}",
                    n_classes.map_or("N_c".to_string(), |n| n.to_string())
                )));
            }
            labels.push(label);
        }
    }
    let series = MultivariateSeries::from_channels(columns)?;
    if label_col {
        return Ok(CsvSeries::Labelled(LabelledSeries::new(series, labels)?));
    }
    Ok(CsvSeries::Unlabelled(series))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("row has {len} fields, header has {expected_len}")
        }
        _ => e.to_string(),
    };
    Error::Parse { path: None, line, column: None, message }
}

fn header(channels: usize, labelled: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=channels).map(|p| format!("ch{p}")).collect();
    if labelled {
        h.push("label".into());
    }
    h
}

/// Writes an unlabelled series as CSV.
pub fn write_series<W: Write>(x: &MultivariateSeries, out: W) -> Result<()> {
    write_rows(x, None, out)
}

/// Writes a labelled series as CSV with a trailing `label` column.
pub fn write_labelled<W: Write>(x: &LabelledSeries, out: W) -> Result<()> {
    write_rows(x.series(), Some(x.labels()), out)
}

pub fn write_series_file(x: &MultivariateSeries, path: impl AsRef<Path>) -> Result<()> {
    write_series(x, File::create(path)?)
}

pub fn write_labelled_file(x: &LabelledSeries, path: impl AsRef<Path>) -> Result<()> {
    write_labelled(x, File::create(path)?)
}

fn write_rows<W: Write>(x: &MultivariateSeries, labels: Option<&[usize]>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header(x.channels(), labels.is_some())).map_err(csv_error)?;
    let mut row = Vec::with_capacity(x.channels() + 1);
    for t in 0..x.len() {
        row.clear();
        row.extend((0..x.channels()).map(|p| format_f64(x.get(p, t))));
        if let Some(l) = labels {
            row.push(l[t].to_string());
        }
        wtr.write_record(&row).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(ch: &[&[f64]]) -> MultivariateSeries {
        MultivariateSeries::from_channels(ch.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    #[test]
    fn parses_three_channels_four_rows() {
        let text = "ch1,ch2,ch3\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n";
        let CsvSeries::Unlabelled(s) = parse_csv(text.as_bytes(), false, None).unwrap() else {
            panic!("expected unlabelled");
        };
        assert_eq!(s.channels(), 3);
        assert_eq!(s.len(), 4);
        assert_eq!(s.channel(1), &[2.0, 5.0, 8.0, 11.0]);
    }

    #[test]
    fn parses_trailing_label_column() {
        let text = "ch1,ch2,label\n0.5,1,1\n0.25,2,1\n-1,3,2\n";
        let CsvSeries::Labelled(l) = parse_csv(text.as_bytes(), true, Some(2)).unwrap() else {
            panic!("expected labelled");
        };
        assert_eq!(l.labels(), &[1, 1, 2]);
        assert_eq!(l.series().channels(), 2);
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let text = "ch1,ch2\n1,2\n3,abc\n";
        let err = parse_csv(text.as_bytes(), false, None).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column.as_deref(), Some("ch2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_a_parse_error_with_line() {
        let text = "ch1,ch2\n1,2\n3\n";
        match parse_csv(text.as_bytes(), false, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_outside_class_range_is_rejected() {
        let text = "ch1,label\n1,1\n2,3\n";
        assert!(matches!(parse_csv(text.as_bytes(), true, Some(2)), Err(Error::Validation(_))));
        let text = "ch1,label\n1,0\n";
        assert!(matches!(parse_csv(text.as_bytes(), true, None), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_label_column_when_required() {
        let text = "ch1,ch2\n1,2\n";
        assert!(matches!(parse_csv(text.as_bytes(), true, None), Err(Error::Validation(_))));
    }

    #[test]
    fn first_differences() {
        let d = detrend_first_difference(&series(&[&[1.0, 3.0, 6.0, 10.0]])).unwrap();
        assert_eq!(d.channel(0), &[2.0, 3.0, 4.0]);
        let d = detrend_first_difference(&series(&[&[5.0; 4]])).unwrap();
        assert_eq!(d.channel(0), &[0.0, 0.0, 0.0]);
        let d = detrend_first_difference(&series(&[&[0.0, 2.0, 4.0, 6.0, 8.0]])).unwrap();
        assert_eq!(d.channel(0), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn differencing_needs_two_points() {
        assert!(matches!(detrend_first_difference(&series(&[&[1.0]])), Err(Error::Length { needed: 2, got: 1 })));
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(MultivariateSeries::from_channels(vec![vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn labelled_round_trip() {
        let s = series(&[&[0.1, 1e-300, -2.5], &[1.0 / 3.0, 7.0, 0.0]]);
        let l = LabelledSeries::new(s, vec![1, 2, 2]).unwrap();
        let mut buf = Vec::new();
        write_labelled(&l, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ch1,ch2,label\n"));
        let CsvSeries::Labelled(back) = parse_csv(buf.as_slice(), true, None).unwrap() else {
            panic!("expected labelled");
        };
        assert_eq!(back, l);
    }
}
