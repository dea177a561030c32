//! Calendar months as used by the monthly climate inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CalendarError {
    #[error("invalid month `{0}`: expected YYYY-MM")]
    BadMonth(String),
    #[error("invalid month range `{0}`: expected YYYY-MM..YYYY-MM with start <= end")]
    BadRange(String),
}

/// A calendar month, e.g. `2020-07`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    /// Month of year, 1-12.
    pub fn month(self) -> u32 {
        self.month
    }

    pub fn days(self) -> u32 {
        match self.month {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            _ if is_leap(self.year) => 29,
            _ => 28,
        }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    /// Inclusive range of months from `self` to `end`.
    pub fn through(self, end: YearMonth) -> Vec<YearMonth> {
        let mut out = Vec::new();
        let mut m = self;
        while m <= end {
            out.push(m);
            m = m.succ();
        }
        out
    }

    /// Parse `YYYY-MM..YYYY-MM` into the inclusive list of months.
    pub fn parse_range(s: &str) -> Result<Vec<YearMonth>, CalendarError> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| CalendarError::BadRange(s.to_string()))?;
        let start: YearMonth = a.trim().parse()?;
        let end: YearMonth = b.trim().parse()?;
        if end < start {
            return Err(CalendarError::BadRange(s.to_string()));
        }
        Ok(start.through(end))
    }

    /// Parse a comma separated list of months or month ranges.
    pub fn parse_list(s: &str) -> Result<Vec<YearMonth>, CalendarError> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.contains("..") {
                out.extend(Self::parse_range(part)?);
            } else {
                out.push(part.parse()?);
            }
        }
        if out.is_empty() {
            return Err(CalendarError::BadMonth(s.to_string()));
        }
        Ok(out)
    }
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = CalendarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CalendarError::BadMonth(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).ok_or_else(bad)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn days_per_month() {
        let ym = |y, m| YearMonth::new(y, m).unwrap();
        assert_eq!(ym(2020, 2).days(), 29);
        assert_eq!(ym(2019, 2).days(), 28);
        assert_eq!(ym(1900, 2).days(), 28);
        assert_eq!(ym(2000, 2).days(), 29);
        assert_eq!(ym(2020, 9).days(), 30);
        assert_eq!(ym(2020, 12).days(), 31);
    }

    #[test]
    fn ranges_cross_year_end() {
        let r = YearMonth::parse_range("2019-11..2020-02").unwrap();
        let s: Vec<String> = r.iter().map(|m| m.to_string()).collect();
        assert_eq!(s, ["2019-11", "2019-12", "2020-01", "2020-02"]);
        assert!(YearMonth::parse_range("2020-03..2020-01").is_err());
        assert!("2020-13".parse::<YearMonth>().is_err());
        assert!("20-01".parse::<YearMonth>().is_err());
        let l = YearMonth::parse_list("2020-07, 2020-09..2020-10").unwrap();
        assert_eq!(l.len(), 3);
    }
}
