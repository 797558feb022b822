//! Univariate series loading, log-return transform and train/test split.
//!
//! CSV input is comma separated with a mandatory header row and `.` as the
//! decimal separator. Missing or unparseable cells are errors; nothing is
//! imputed or silently dropped.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TarmaError};

/// An ordered, finite, non-empty sequence of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_timestamps(values, None)
    }

    pub fn with_timestamps(values: Vec<f64>, timestamps: Option<Vec<String>>) -> Result<Self> {
        if values.is_empty() {
            return Err(TarmaError::NoObservations);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TarmaError::NonFinite(i));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != values.len() {
                return Err(TarmaError::Timestamps(format!(
                    "{} timestamps for {} values",
                    ts.len(),
                    values.len()
                )));
            }
            // ISO-8601 labels of equal width order lexicographically.
            if let Some(w) = ts.windows(2).position(|w| w[0] >= w[1]) {
                return Err(TarmaError::Timestamps(format!(
                    "not strictly increasing at position {}",
                    w + 1
                )));
            }
        }
        Ok(Self { values, timestamps })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Appends `other` to `self`. Timestamps survive only if both sides carry them.
    pub fn concat(&self, other: &TimeSeries) -> Result<TimeSeries> {
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let timestamps = match (&self.timestamps, &other.timestamps) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        TimeSeries::with_timestamps(values, timestamps)
    }
}

/// Selects a CSV column by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl From<&str> for ColumnSelector {
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        }
    }
}

/// Reads one numeric column from a headed CSV file.
///
/// A column named `date`, `time`, `month` or `timestamp` (case-insensitive),
/// if present, is picked up as the timestamp labels. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, column: &ColumnSelector) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| TarmaError::io(path, e))?;
    read_csv(file, column)
}

pub fn read_csv<R: std::io::Read>(reader: R, column: &ColumnSelector) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TarmaError::Csv(e.to_string()))?
        .clone();
    let col = match column {
        ColumnSelector::Index(i) if *i < headers.len() => *i,
        ColumnSelector::Index(i) => return Err(TarmaError::MissingColumn(i.to_string())),
        ColumnSelector::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TarmaError::MissingColumn(name.clone()))?,
    };
    let ts_col = headers.iter().position(|h| {
        matches!(
            h.to_ascii_lowercase().as_str(),
            "date" | "time" | "month" | "timestamp"
        )
    });

    let mut values = Vec::new();
    let mut stamps = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| TarmaError::Csv(format!("row {row}: {e}")))?;
        let cell = rec.get(col).unwrap_or("");
        let v: f64 = cell.parse().map_err(|_| TarmaError::BadCell {
            row,
            cell: cell.to_string(),
        })?;
        if !v.is_finite() {
            return Err(TarmaError::BadCell {
                row,
                cell: cell.to_string(),
            });
        }
        values.push(v);
        if let Some(tc) = ts_col {
            stamps.push(rec.get(tc).unwrap_or("").to_string());
        }
    }
    let timestamps = ts_col.filter(|&tc| tc != col).map(|_| stamps);
    TimeSeries::with_timestamps(values, timestamps)
}

/// `x_t = ln(y_t / y_{t-1})`; output is one shorter than the input.
pub fn log_returns(series: &TimeSeries) -> Result<TimeSeries> {
    let y = series.values();
    if y.len() < 2 {
        return Err(TarmaError::TooShort {
            needed: 2,
            got: y.len(),
        });
    }
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(TarmaError::NonPositive { index, value });
    }
    let values = y.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let timestamps = series.timestamps().map(|ts| ts[1..].to_vec());
    TimeSeries::with_timestamps(values, timestamps)
}

/// Splits off the last `test_len` observations.
pub fn split(series: &TimeSeries, test_len: usize) -> Result<(TimeSeries, TimeSeries)> {
    let n = series.len();
    if test_len == 0 || test_len >= n {
        return Err(TarmaError::InvalidArgument(format!(
            "test length {test_len} must lie in 1..{n}"
        )));
    }
    let cut = n - test_len;
    let (a, b) = series.values().split_at(cut);
    let (ta, tb) = match series.timestamps() {
        Some(ts) => (Some(ts[..cut].to_vec()), Some(ts[cut..].to_vec())),
        None => (None, None),
    };
    Ok((
        TimeSeries::with_timestamps(a.to_vec(), ta)?,
        TimeSeries::with_timestamps(b.to_vec(), tb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, col: &str) -> Result<TimeSeries> {
        read_csv(text.as_bytes(), &ColumnSelector::from(col))
    }

    #[test]
    fn reads_named_column() {
        let s = parse("date,price\n2020-01,1.0\n2020-02,2.0\n2020-03,3.0\n", "price").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.timestamps().unwrap()[2], "2020-03");
    }

    #[test]
    fn reads_column_by_index() {
        let s = parse("a,b\n1,10\n2,20\n", "1").unwrap();
        assert_eq!(s.values(), &[10.0, 20.0]);
    }

    #[test]
    fn empty_data_section() {
        let err = parse("price\n", "price").unwrap_err();
        assert_eq!(err.to_string(), "no observations");
    }

    #[test]
    fn bad_cell_names_row() {
        let err = parse("price\n1.0\nabc\n3.0\n", "price").unwrap_err();
        match err {
            TarmaError::BadCell { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column() {
        assert!(matches!(
            parse("price\n1\n", "volume"),
            Err(TarmaError::MissingColumn(_))
        ));
    }

    #[test]
    fn missing_file() {
        let err = load_csv("/nonexistent/file.csv", &ColumnSelector::Index(0)).unwrap_err();
        assert!(matches!(err, TarmaError::Io { .. }));
    }

    #[test]
    fn timestamps_must_increase() {
        let err = parse("month,price\n2020-02,1\n2020-01,2\n", "price").unwrap_err();
        assert!(matches!(err, TarmaError::Timestamps(_)));
    }

    #[test]
    fn log_returns_examples() {
        let s = TimeSeries::new(vec![1.0, std::f64::consts::E]).unwrap();
        assert_eq!(log_returns(&s).unwrap().values(), &[1.0]);
        let c = TimeSeries::new(vec![3.5; 3]).unwrap();
        assert_eq!(log_returns(&c).unwrap().values(), &[0.0, 0.0]);
        let z = TimeSeries::new(vec![1.0, 0.0, 2.0]).unwrap();
        assert!(matches!(
            log_returns(&z),
            Err(TarmaError::NonPositive { index: 1, .. })
        ));
        let one = TimeSeries::new(vec![1.0]).unwrap();
        assert!(log_returns(&one).is_err());
    }

    #[test]
    fn split_examples() {
        let s = TimeSeries::new((0..336).map(f64::from).collect()).unwrap();
        let (tr, te) = split(&s, 12).unwrap();
        assert_eq!((tr.len(), te.len()), (324, 12));

        let s5 = TimeSeries::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(split(&s5, 5).is_err());
        assert!(split(&s5, 0).is_err());
        let (tr, te) = split(&s5, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 1));
    }

    #[test]
    fn json_shape() {
        let s = TimeSeries::with_timestamps(vec![1.5], Some(vec!["2021-01".into()])).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"values":[1.5],"timestamps":["2021-01"]}"#);
    }

    proptest! {
        #[test]
        fn split_concat_roundtrip(v in prop::collection::vec(-1e6f64..1e6, 2..200), frac in 0.0f64..1.0) {
            let s = TimeSeries::new(v.clone()).unwrap();
            let k = 1 + ((v.len() - 2) as f64 * frac) as usize;
            let (a, b) = split(&s, k).unwrap();
            prop_assert_eq!(a.concat(&b).unwrap(), s);
        }

        #[test]
        fn log_returns_invert_cumsum(z in prop::collection::vec(-0.5f64..0.5, 1..200)) {
            let mut level = 0.0;
            let mut prices = vec![1.0];
            for dz in &z {
                level += dz;
                prices.push(level.exp());
            }
            let r = log_returns(&TimeSeries::new(prices).unwrap()).unwrap();
            for (a, b) in r.values().iter().zip(&z) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
