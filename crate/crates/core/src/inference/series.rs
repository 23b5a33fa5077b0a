//! Monthly count series and their CSV form `month,class_id,count`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month, ordered and convertible to a running month index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid("month", format!("must be 1..=12, got {month}")));
        }
        Ok(Self { year, month })
    }

    /// Months since year 0, January.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }

    pub fn from_index(i: i64) -> Self {
        Self {
            year: i.div_euclid(12) as i32,
            month: i.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn plus(self, months: i64) -> Self {
        Self::from_index(self.index() + months)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let d = NaiveDate::parse_from_str(&format!("{}-01", s.trim()), "%Y-%m-%d")
            .map_err(|_| Error::invalid("month", format!("expected YYYY-MM, got {s:?}")))?;
        if s.trim().len() != 7 {
            return Err(Error::invalid("month", format!("expected YYYY-MM, got {s:?}")));
        }
        Self::new(d.year(), d.month())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Observed,
    Synthesized,
}

/// One class's monthly counts. Month `t` is measured from `origin`, so the
/// first observation usually sits at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub class_id: String,
    pub origin: YearMonth,
    /// `(t, n)` with strictly increasing `t`.
    pub points: Vec<(i64, u64)>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl CountSeries {
    pub fn new(
        class_id: impl Into<String>,
        origin: YearMonth,
        points: Vec<(i64, u64)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let s = Self {
            class_id: class_id.into(),
            origin,
            points,
            provenance,
        };
        s.validate()?;
        Ok(s)
    }

    /// Consecutive months starting at `t = 0`.
    pub fn from_counts(class_id: impl Into<String>, origin: YearMonth, counts: &[u64]) -> Self {
        Self {
            class_id: class_id.into(),
            origin,
            points: counts.iter().enumerate().map(|(i, &n)| (i as i64, n)).collect(),
            provenance: Provenance::Observed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(
                    "months",
                    format!("month indices must increase strictly ({} then {})", w[0].0, w[1].0),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn last(&self) -> Option<(i64, u64)> {
        self.points.last().copied()
    }

    pub fn count_at(&self, t: i64) -> Option<u64> {
        self.points
            .binary_search_by_key(&t, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// The first `k` observations.
    pub fn head(&self, k: usize) -> Self {
        Self {
            points: self.points[..k.min(self.points.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Same observations indexed from a different origin month.
    pub fn rebase(&self, origin: YearMonth) -> Self {
        let shift = self.origin.index() - origin.index();
        Self {
            origin,
            points: self.points.iter().map(|&(t, n)| (t + shift, n)).collect(),
            ..self.clone()
        }
    }

    /// Observations with `t > after`.
    pub fn after(&self, after: i64) -> Self {
        Self {
            points: self.points.iter().copied().filter(|p| p.0 > after).collect(),
            ..self.clone()
        }
    }

    pub fn push(&mut self, t: i64, n: u64) -> Result<()> {
        if let Some((last, _)) = self.last() {
            if t <= last {
                return Err(Error::invalid("months", format!("{t} does not follow {last}")));
            }
        }
        self.points.push((t, n));
        Ok(())
    }

    pub fn month_of(&self, t: i64) -> YearMonth {
        self.origin.plus(t)
    }
}

fn parse_error(line: u64, column: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => parse_error(
            line,
            (*len).min(*expected_len) + 1,
            format!("expected {expected_len} fields, found {len}"),
        ),
        csv::ErrorKind::Utf8 { err, .. } => {
            parse_error(line, err.field() as u64 + 1, "invalid UTF-8")
        }
        _ => parse_error(line, 0, e.to_string()),
    }
}

/// Reads `month,class_id,count` rows into one series per class, in order of
/// first appearance of the class.
pub fn read_counts_csv<R: Read>(input: R) -> Result<Vec<CountSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let expected = ["month", "class_id", "count"];
    for (i, want) in expected.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *want => {}
            other => {
                return Err(parse_error(
                    1,
                    i as u64 + 1,
                    format!("header must be month,class_id,count; column {} is {:?}", i + 1, other.unwrap_or("")),
                ))
            }
        }
    }
    if headers.len() != 3 {
        return Err(parse_error(1, 4, "header must have exactly 3 columns"));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(YearMonth, u64, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let month: YearMonth = rec[0]
            .parse()
            .map_err(|_| parse_error(line, 1, format!("expected YYYY-MM, got {:?}", &rec[0])))?;
        let class = rec[1].to_string();
        if class.is_empty() {
            return Err(parse_error(line, 2, "class_id is empty"));
        }
        let count: u64 = rec[2].parse().map_err(|_| {
            parse_error(line, 3, format!("count must be a non-negative integer, got {:?}", &rec[2]))
        })?;
        if !rows.contains_key(&class) {
            order.push(class.clone());
        }
        rows.entry(class).or_default().push((month, count, line));
    }
    if order.is_empty() {
        return Err(parse_error(2, 1, "no data rows"));
    }

    let mut out = Vec::new();
    for class in order {
        let mut r = rows.remove(&class).unwrap_or_default();
        r.sort_by_key(|x| x.0);
        for w in r.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(parse_error(
                    w[1].2,
                    1,
                    format!("duplicate month {} for class {class}", w[1].0),
                ));
            }
        }
        let origin = r[0].0;
        let points = r.iter().map(|(m, n, _)| (m.index() - origin.index(), *n)).collect();
        out.push(CountSeries::new(class, origin, points, Provenance::Observed)?);
    }
    Ok(out)
}

pub fn write_counts_csv<W: Write>(series: &[CountSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "class_id", "count"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for s in series {
        for &(t, n) in &s.points {
            w.write_record([s.month_of(t).to_string(), s.class_id.clone(), n.to_string()])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Quarterly totals, the input of the monthly synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterlySeries {
    pub class_id: String,
    /// First month of the first quarter.
    pub origin: YearMonth,
    pub counts: Vec<f64>,
}

fn parse_quarter(s: &str) -> Option<YearMonth> {
    let s = s.trim();
    let (y, q) = s.split_once(['Q', 'q'])?;
    let y: i32 = y.trim_end_matches('-').parse().ok()?;
    let q: u32 = q.parse().ok()?;
    if !(1..=4).contains(&q) {
        return None;
    }
    YearMonth::new(y, 3 * (q - 1) + 1).ok()
}

/// Reads `quarter,class_id,count` rows with quarters written `YYYY-Qn`.
pub fn read_quarterly_csv<R: Read>(input: R) -> Result<Vec<QuarterlySeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["quarter", "class_id", "count"] {
        return Err(parse_error(1, 1, "header must be quarter,class_id,count"));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(YearMonth, f64, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let start = parse_quarter(&rec[0])
            .ok_or_else(|| parse_error(line, 1, format!("expected YYYY-Qn, got {:?}", &rec[0])))?;
        let count: f64 = rec[2]
            .parse()
            .ok()
            .filter(|c: &f64| c.is_finite() && *c >= 0.0)
            .ok_or_else(|| parse_error(line, 3, format!("count must be >= 0, got {:?}", &rec[2])))?;
        let class = rec[1].to_string();
        if !rows.contains_key(&class) {
            order.push(class.clone());
        }
        rows.entry(class).or_default().push((start, count, line));
    }
    let mut out = Vec::new();
    for class in order {
        let mut r = rows.remove(&class).unwrap_or_default();
        r.sort_by_key(|x| x.0);
        for w in r.windows(2) {
            if w[1].0.index() - w[0].0.index() != 3 {
                return Err(parse_error(w[1].2, 1, "quarters must be consecutive"));
            }
        }
        out.push(QuarterlySeries {
            class_id: class,
            origin: r[0].0,
            counts: r.iter().map(|x| x.1).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_round_trip() {
        let m: YearMonth = "2015-03".parse().unwrap();
        assert_eq!(m.to_string(), "2015-03");
        assert_eq!(m.plus(10).to_string(), "2016-01");
        assert_eq!(YearMonth::from_index(m.index()), m);
        assert!("2015-13".parse::<YearMonth>().is_err());
        assert!("2015-3".parse::<YearMonth>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "month,class_id,count\n2015-03,theft,3500\n2015-04,theft,3490\n2015-03,fraud,12\n2015-05,theft,3470\n";
        let s = read_counts_csv(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].class_id, "theft");
        assert_eq!(s[0].points, vec![(0, 3500), (1, 3490), (2, 3470)]);
        let mut buf = Vec::new();
        write_counts_csv(&s, &mut buf).unwrap();
        let again = read_counts_csv(buf.as_slice()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let bad = "month,class_id,count\n2015-03,theft,3500\n2015-04,theft,-2\n";
        assert_eq!(
            read_counts_csv(bad.as_bytes()).unwrap_err(),
            Error::Parse {
                line: 3,
                column: 3,
                message: "count must be a non-negative integer, got \"-2\"".into()
            }
        );
        let bad = "month,class_id,count\n2015/03,theft,3500\n";
        assert!(matches!(
            read_counts_csv(bad.as_bytes()),
            Err(Error::Parse { line: 2, column: 1, .. })
        ));
        let bad = "month,class_id,count\n2015-03,theft\n";
        assert!(matches!(read_counts_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = "month,class,count\n";
        assert!(matches!(
            read_counts_csv(bad.as_bytes()),
            Err(Error::Parse { line: 1, column: 2, .. })
        ));
    }

    #[test]
    fn quarterly_csv() {
        let text = "quarter,class_id,count\n2015-Q1,theft,900\n2015-Q2,theft,930\n2015-Q3,theft,960\n";
        let q = read_quarterly_csv(text.as_bytes()).unwrap();
        assert_eq!(q[0].origin.to_string(), "2015-01");
        assert_eq!(q[0].counts, vec![900.0, 930.0, 960.0]);
        let gap = "quarter,class_id,count\n2015-Q1,theft,900\n2015-Q3,theft,930\n";
        assert!(read_quarterly_csv(gap.as_bytes()).is_err());
    }
}
