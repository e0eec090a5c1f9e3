//! Per-stock daily price series and CSV ingestion.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub(crate) const CSV_HEADER: [&str; 7] = ["date", "open", "high", "low", "close", "adj_close", "volume"];

/// Daily OHLCV series for one ticker. Columns are equal length, dates are
/// strictly increasing, prices strictly positive and volume non-negative.
#[derive(Debug, Clone)]
pub struct OhlcvFrame {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub adj_close: Vec<f64>,
    pub volume: Vec<f64>,
}

impl OhlcvFrame {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        for (name, col) in [
            ("open", &self.open),
            ("high", &self.high),
            ("low", &self.low),
            ("close", &self.close),
            ("adj_close", &self.adj_close),
            ("volume", &self.volume),
        ] {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "{}: column '{name}' has {} rows, expected {n}",
                    self.ticker,
                    col.len()
                )));
            }
        }
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Data(format!(
                    "{}: dates not strictly increasing at {} -> {}",
                    self.ticker, w[0], w[1]
                )));
            }
        }
        for i in 0..n {
            for (name, col) in [
                ("open", &self.open),
                ("high", &self.high),
                ("low", &self.low),
                ("close", &self.close),
                ("adj_close", &self.adj_close),
            ] {
                if !(col[i] > 0.0) {
                    return Err(Error::Data(format!(
                        "{}: non-positive {name} {} at {}",
                        self.ticker, col[i], self.dates[i]
                    )));
                }
            }
            if !(self.volume[i] >= 0.0) {
                return Err(Error::Data(format!(
                    "{}: negative volume {} at {}",
                    self.ticker, self.volume[i], self.dates[i]
                )));
            }
        }
        Ok(())
    }
}

/// Load one `<TICKER>.csv` with the exact header
/// `date,open,high,low,close,adj_close,volume`. Rows are sorted ascending by
/// date; duplicate dates are rejected. Errors name the offending data row
/// (1-based, excluding the header).
pub fn load_ohlcv(path: &Path) -> Result<OhlcvFrame> {
    let ticker = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("cannot derive ticker from path {}", path.display())))?
        .to_uppercase();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{ticker}: cannot open {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{ticker}: cannot read header: {e}")))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != CSV_HEADER {
        return Err(Error::Data(format!(
            "{ticker}: bad header {:?}, expected {:?}",
            got.join(","),
            CSV_HEADER.join(",")
        )));
    }

    let mut rows: Vec<(NaiveDate, [f64; 6])> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Data(format!("{ticker}: row {row}: {e}")))?;
        if rec.len() != 7 {
            return Err(Error::Data(format!(
                "{ticker}: row {row}: expected 7 fields, got {}",
                rec.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("{ticker}: row {row}: bad date '{}': {e}", &rec[0])))?;
        let mut vals = [0.0f64; 6];
        for (j, v) in vals.iter_mut().enumerate() {
            let field = &rec[j + 1];
            *v = field.parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "{ticker}: row {row}: unparsable {} '{field}'",
                    CSV_HEADER[j + 1]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{ticker}: row {row}: non-finite {}",
                    CSV_HEADER[j + 1]
                )));
            }
        }
        for j in 0..5 {
            if vals[j] <= 0.0 {
                return Err(Error::Data(format!(
                    "{ticker}: row {row}: non-positive {} {}",
                    CSV_HEADER[j + 1],
                    vals[j]
                )));
            }
        }
        if vals[5] < 0.0 {
            return Err(Error::Data(format!("{ticker}: row {row}: negative volume {}", vals[5])));
        }
        rows.push((date, vals));
    }

    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Data(format!("{ticker}: duplicate date {}", w[0].0)));
        }
    }

    let n = rows.len();
    let mut frame = OhlcvFrame {
        ticker,
        dates: Vec::with_capacity(n),
        open: Vec::with_capacity(n),
        high: Vec::with_capacity(n),
        low: Vec::with_capacity(n),
        close: Vec::with_capacity(n),
        adj_close: Vec::with_capacity(n),
        volume: Vec::with_capacity(n),
    };
    for (date, v) in rows {
        frame.dates.push(date);
        frame.open.push(v[0]);
        frame.high.push(v[1]);
        frame.low.push(v[2]);
        frame.close.push(v[3]);
        frame.adj_close.push(v[4]);
        frame.volume.push(v[5]);
    }
    frame.validate()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "date,open,high,low,close,adj_close,volume").unwrap();
        write!(f, "{body}").unwrap();
        path
    }

    #[test]
    fn well_formed_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(
            &dir,
            "abc.csv",
            "2020-01-02,10,11,9,10.5,10.5,1000\n2020-01-03,10.5,12,10,11,11,1200\n2020-01-06,11,11.5,10.8,11.2,11.2,900\n",
        );
        let f = load_ohlcv(&p).unwrap();
        assert_eq!(f.ticker, "ABC");
        assert_eq!(f.len(), 3);
        assert_eq!(f.close[1], 11.0);
    }

    #[test]
    fn duplicate_date_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(
            &dir,
            "dup.csv",
            "2020-01-02,10,11,9,10.5,10.5,1000\n2020-01-02,10,11,9,10.5,10.5,1000\n",
        );
        let err = load_ohlcv(&p).unwrap_err();
        assert!(err.to_string().contains("duplicate date"), "{err}");
    }

    #[test]
    fn unsorted_rows_are_sorted_ascending() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(
            &dir,
            "uns.csv",
            "2020-01-06,11,11.5,10.8,11.2,11.2,900\n2020-01-02,10,11,9,10.5,10.5,1000\n",
        );
        let f = load_ohlcv(&p).unwrap();
        assert!(f.dates[0] < f.dates[1]);
        assert_eq!(f.open[0], 10.0);
    }

    #[test]
    fn bad_header_and_bad_number_name_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "date,open,high,low,close,volume\n").unwrap();
        assert!(load_ohlcv(&path).unwrap_err().to_string().contains("bad header"));

        let p = write_csv(&dir, "nan.csv", "2020-01-02,10,11,9,oops,10.5,1000\n");
        let err = load_ohlcv(&p).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("close"), "{err}");
    }

    #[test]
    fn non_positive_price_rejected_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_csv(
            &dir,
            "neg.csv",
            "2020-01-02,10,11,9,10.5,10.5,1000\n2020-01-03,-1,11,9,10.5,10.5,1000\n",
        );
        let err = load_ohlcv(&p).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("open"), "{err}");
    }
}
