//! Price ingestion, log returns and the CSV formats read and written by the
//! rolling and clustering stages.
//!
//! Numbers are written in plain decimal with 12 significant digits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{LatentPath, SvcjParams, PARAM_NAMES};
use crate::rolling::{ParamEstimate, ParamTimeSeries};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("order error at line {line}: date {date} does not follow {prev}")]
    Order {
        line: u64,
        date: NaiveDate,
        prev: NaiveDate,
    },
    #[error("duplicate date {date} at line {line}")]
    DuplicateDate { line: u64, date: NaiveDate },
    #[error("value error at line {line}: {msg}")]
    Value { line: u64, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("need at least 2 prices to form a return, got {0}")]
    TooShort(usize),
    #[error("scale must be finite and positive, got {0}")]
    InvalidScale(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io),
            other => DataError::Parse {
                line,
                msg: format!("{other:?}"),
            },
        }
    }
}

const DATE_FMT: &str = "%Y-%m-%d";

/// Formats a number in plain decimal notation with 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let prec = (11 - exp).max(0) as usize;
    let mut s = format!("{x:.prec$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn format_date(d: NaiveDate) -> String {
    d.format(DATE_FMT).to_string()
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate, DataError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FMT).map_err(|e| DataError::Parse {
        line,
        msg: format!("bad date '{s}': {e}"),
    })
}

fn check_increasing(dates: &[NaiveDate], lines: &[u64]) -> Result<(), DataError> {
    for i in 1..dates.len() {
        let line = lines.get(i).copied().unwrap_or(i as u64 + 1);
        if dates[i] == dates[i - 1] {
            return Err(DataError::DuplicateDate {
                line,
                date: dates[i],
            });
        }
        if dates[i] < dates[i - 1] {
            return Err(DataError::Order {
                line,
                date: dates[i],
                prev: dates[i - 1],
            });
        }
    }
    Ok(())
}

/// Daily index levels keyed by strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self, DataError> {
        if dates.len() != prices.len() {
            return Err(DataError::LengthMismatch(format!(
                "{} dates vs {} prices",
                dates.len(),
                prices.len()
            )));
        }
        for (i, p) in prices.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(DataError::Value {
                    line: i as u64 + 2,
                    msg: format!("price must be positive, got {p}"),
                });
            }
        }
        let lines: Vec<u64> = (0..dates.len() as u64).map(|i| i + 2).collect();
        check_increasing(&dates, &lines)?;
        Ok(Self { dates, prices })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Sub-series over the half-open row range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            prices: self.prices[range].to_vec(),
        }
    }
}

/// Parses a `date,price` CSV.
pub fn parse_prices<R: Read>(reader: R) -> Result<PriceSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "price" {
        return Err(DataError::Schema(format!(
            "expected header 'date,price', got '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(DataError::Parse {
                line,
                msg: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        let date = parse_date(&rec[0], line)?;
        let price: f64 = rec[1].parse().map_err(|_| DataError::Value {
            line,
            msg: format!("non-numeric price '{}'", &rec[1]),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(DataError::Value {
                line,
                msg: format!("price must be positive, got {}", &rec[1]),
            });
        }
        dates.push(date);
        prices.push(price);
        lines.push(line);
    }
    check_increasing(&dates, &lines)?;
    Ok(PriceSeries { dates, prices })
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries, DataError> {
    parse_prices(File::open(path)?)
}

pub fn write_prices(path: impl AsRef<Path>, prices: &PriceSeries) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "price"])?;
    for (d, p) in prices.dates.iter().zip(&prices.prices) {
        w.write_record([format_date(*d), format_number(*p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Scaled log returns; `dates[t]` is the date of the later price.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub scale: f64,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// `returns[t] = scale * ln(prices[t+1] / prices[t])`.
pub fn log_returns(prices: &PriceSeries, scale: f64) -> Result<ReturnSeries, DataError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(DataError::InvalidScale(scale));
    }
    if prices.len() < 2 {
        return Err(DataError::TooShort(prices.len()));
    }
    let returns = prices
        .prices
        .windows(2)
        .map(|w| scale * (w[1] / w[0]).ln())
        .collect();
    Ok(ReturnSeries {
        dates: prices.dates[1..].to_vec(),
        returns,
        scale,
    })
}

fn param_header() -> Vec<String> {
    let mut h = vec!["date".to_string()];
    h.extend(PARAM_NAMES.iter().map(|n| n.to_string()));
    h.extend(PARAM_NAMES.iter().map(|n| format!("{n}_sd")));
    h
}

/// Writes the parameter time series. Missing rows keep their date and leave
/// every value empty.
pub fn write_param_series_to<W: Write>(
    writer: W,
    series: &ParamTimeSeries,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(param_header())?;
    for (d, row) in series.dates.iter().zip(&series.rows) {
        let mut rec = Vec::with_capacity(21);
        rec.push(format_date(*d));
        match row {
            Some(est) => {
                rec.extend(est.mean.to_array().iter().map(|x| format_number(*x)));
                rec.extend(est.sd.iter().map(|x| format_number(*x)));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 20)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_param_series(
    series: &ParamTimeSeries,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    write_param_series_to(File::create(path)?, series)
}

pub fn read_param_series_from<R: Read>(reader: R) -> Result<ParamTimeSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = param_header();

    let mut columns = vec![None; expected.len()];
    for (i, h) in headers.iter().enumerate() {
        match expected.iter().position(|e| e == h) {
            Some(j) if columns[j].is_none() => columns[j] = Some(i),
            Some(_) => return Err(DataError::Schema(format!("duplicate column '{h}'"))),
            None => return Err(DataError::Schema(format!("unknown column '{h}'"))),
        }
    }
    let missing: Vec<&str> = expected
        .iter()
        .zip(&columns)
        .filter(|(_, c)| c.is_none())
        .map(|(e, _)| e.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(DataError::Schema(format!(
            "missing column(s): {}",
            missing.join(", ")
        )));
    }
    let columns: Vec<usize> = columns.into_iter().map(|c| c.unwrap()).collect();

    let mut dates = Vec::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        dates.push(parse_date(&rec[columns[0]], line)?);
        lines.push(line);

        let cells: Vec<&str> = columns[1..].iter().map(|&c| &rec[c]).collect();
        if cells.iter().all(|c| c.is_empty()) {
            rows.push(None);
            continue;
        }
        let mut vals = [0.0; 20];
        for (k, cell) in cells.iter().enumerate() {
            vals[k] = cell.parse().map_err(|_| DataError::Value {
                line,
                msg: format!("column '{}': non-numeric value '{cell}'", expected[k + 1]),
            })?;
        }
        let mut mean = [0.0; 10];
        let mut sd = [0.0; 10];
        mean.copy_from_slice(&vals[..10]);
        sd.copy_from_slice(&vals[10..]);
        rows.push(Some(ParamEstimate {
            mean: SvcjParams::from_array(mean),
            sd,
        }));
    }
    check_increasing(&dates, &lines)?;
    Ok(ParamTimeSeries {
        dates,
        rows,
        window: None,
    })
}

pub fn read_param_series(path: impl AsRef<Path>) -> Result<ParamTimeSeries, DataError> {
    read_param_series_from(File::open(path)?)
}

/// Writes `date,label`.
pub fn write_labels(
    path: impl AsRef<Path>,
    dates: &[NaiveDate],
    labels: &[usize],
) -> Result<(), DataError> {
    if dates.len() != labels.len() {
        return Err(DataError::LengthMismatch(format!(
            "{} dates vs {} labels",
            dates.len(),
            labels.len()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "label"])?;
    for (d, l) in dates.iter().zip(labels) {
        w.write_record([format_date(*d), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `label,<dim...>,<dim>_scaled...`: centroids in original units
/// followed by the same centroids in z-scored units.
pub fn write_centroids(
    path: impl AsRef<Path>,
    dim_names: &[String],
    original: &[Vec<f64>],
    scaled: &[Vec<f64>],
) -> Result<(), DataError> {
    if original.len() != scaled.len() {
        return Err(DataError::LengthMismatch(
            "original and scaled centroid counts differ".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend(dim_names.iter().cloned());
    header.extend(dim_names.iter().map(|d| format!("{d}_scaled")));
    w.write_record(&header)?;
    for (k, (o, s)) in original.iter().zip(scaled).enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(o.iter().map(|x| format_number(*x)));
        rec.extend(s.iter().map(|x| format_number(*x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `k,wcss`.
pub fn write_wcss_curve(path: impl AsRef<Path>, curve: &[f64]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "wcss"])?;
    for (i, v) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format_number(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a simulated path as `date,price,y,v,j,zy,zv`, with a price index
/// built from the returns: `S_{t+1} = S_t exp(y_t / scale)`. The first row
/// holds the starting level and the initial variance with empty shocks.
pub fn write_simulated_path(
    path: impl AsRef<Path>,
    start: NaiveDate,
    initial_price: f64,
    scale: f64,
    sim: &LatentPath,
) -> Result<(), DataError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(DataError::InvalidScale(scale));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "price", "y", "v", "j", "zy", "zv"])?;
    let mut date = start;
    let mut price = initial_price;
    w.write_record([
        format_date(date),
        format_number(price),
        String::new(),
        format_number(sim.v0),
        String::new(),
        String::new(),
        String::new(),
    ])?;
    for t in 0..sim.len() {
        date = date.succ_opt().ok_or_else(|| DataError::Value {
            line: t as u64 + 3,
            msg: "date overflow".into(),
        })?;
        price *= (sim.y[t] / scale).exp();
        w.write_record([
            format_date(date),
            format_number(price),
            format_number(sim.y[t]),
            format_number(sim.v[t]),
            sim.j[t].to_string(),
            format_number(sim.zy[t]),
            format_number(sim.zv[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FMT).unwrap()
    }

    #[test]
    fn parses_well_formed_prices() {
        let p = parse_prices("date,price\n2015-01-01,1000\n2015-01-02,1010".as_bytes()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.dates()[1], d("2015-01-02"));
        assert_eq!(p.prices(), &[1000.0, 1010.0]);
    }

    #[test]
    fn rejects_decreasing_dates() {
        let e = parse_prices("date,price\n2015-01-02,1000\n2015-01-01,1010".as_bytes());
        assert!(matches!(e, Err(DataError::Order { .. })), "{e:?}");
    }

    #[test]
    fn rejects_duplicate_dates() {
        let e = parse_prices("date,price\n2015-01-02,1000\n2015-01-02,1010".as_bytes());
        assert!(matches!(e, Err(DataError::DuplicateDate { .. })), "{e:?}");
    }

    #[test]
    fn rejects_nonpositive_and_garbage_prices() {
        for bad in ["-5", "0", "abc", "NaN"] {
            let src = format!("date,price\n2015-01-01,{bad}\n");
            let e = parse_prices(src.as_bytes());
            assert!(matches!(e, Err(DataError::Value { .. })), "{bad}: {e:?}");
        }
    }

    #[test]
    fn rejects_bad_date_and_header() {
        let e = parse_prices("date,price\n2015-13-01,1\n".as_bytes());
        assert!(matches!(e, Err(DataError::Parse { .. })), "{e:?}");
        let e = parse_prices("day,close\n2015-01-01,1\n".as_bytes());
        assert!(matches!(e, Err(DataError::Schema(_))), "{e:?}");
        let e = parse_prices("date,price\n2015-01-01,1,2\n".as_bytes());
        assert!(matches!(e, Err(DataError::Parse { .. })), "{e:?}");
    }

    #[test]
    fn gaps_in_calendar_are_fine() {
        let p = parse_prices("date,price\n2015-01-01,1\n2015-01-09,2\n".as_bytes()).unwrap();
        let r = log_returns(&p, 1.0).unwrap();
        assert_eq!(r.dates, vec![d("2015-01-09")]);
    }

    #[test]
    fn log_return_examples() {
        let p = PriceSeries::new(vec![d("2020-01-01"), d("2020-01-02")], vec![100.0, 105.0])
            .unwrap();
        let r = log_returns(&p, 1.0).unwrap();
        assert!((r.returns[0] - 0.04879016416943205).abs() < 1e-15);

        let p = PriceSeries::new(
            vec![d("2020-01-01"), d("2020-01-02"), d("2020-01-03")],
            vec![100.0; 3],
        )
        .unwrap();
        assert_eq!(log_returns(&p, 100.0).unwrap().returns, vec![0.0, 0.0]);
    }

    #[test]
    fn log_returns_need_two_prices() {
        let p = PriceSeries::new(vec![d("2020-01-01")], vec![1.0]).unwrap();
        assert!(matches!(log_returns(&p, 1.0), Err(DataError::TooShort(1))));
        let p = PriceSeries::new(vec![d("2020-01-01"), d("2020-01-02")], vec![1.0, 2.0]).unwrap();
        assert!(matches!(log_returns(&p, 0.0), Err(DataError::InvalidScale(_))));
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-12345.678901234), "-12345.6789012");
        assert_eq!(format_number(1e-7 / 3.0), "0.0000000333333333333");
        assert_eq!(format_number(2e15), "2000000000000000");
        assert!(!format_number(123456.789).contains(','));
    }

    #[test]
    fn param_series_missing_beta_column() {
        let header: Vec<String> = param_header()
            .into_iter()
            .filter(|h| h != "beta")
            .collect();
        let src = format!("{}\n", header.join(","));
        let e = read_param_series_from(src.as_bytes());
        match e {
            Err(DataError::Schema(msg)) => assert!(msg.contains("beta"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn param_series_unknown_column() {
        let mut header = param_header();
        header.push("gamma".into());
        let src = format!("{}\n", header.join(","));
        assert!(matches!(
            read_param_series_from(src.as_bytes()),
            Err(DataError::Schema(_))
        ));
    }

    #[test]
    fn empty_param_series_is_header_only() {
        let s = ParamTimeSeries {
            dates: vec![],
            rows: vec![],
            window: None,
        };
        let mut buf = Vec::new();
        write_param_series_to(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("date,mu,mu_y,sigma_y,lambda,alpha,beta,rho,sigma_v,rho_j,mu_v,mu_sd,"));
        let back = read_param_series_from(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }
}
