//! Monthly calendar periods.

use std::fmt;
use std::str::FromStr;

/// A calendar month, stored as a month count since year 0 so that
/// arithmetic and ordering are plain integer operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period(i32);

impl Period {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        if (1..=12).contains(&month) {
            Some(Period(year * 12 + month as i32 - 1))
        } else {
            None
        }
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    pub fn offset(self, months: i32) -> Self {
        Period(self.0 + months)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: Period) -> i32 {
        self.0 - other.0
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsePeriodError(pub String);

impl fmt::Display for ParsePeriodError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed period {:?} (expected YYYY-MM)", self.0)
    }
}

impl std::error::Error for ParsePeriodError {}

impl FromStr for Period {
    type Err = ParsePeriodError;

    /// Accepts `YYYY-MM` and the `YYYY:MM` notation common in macro data.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParsePeriodError(s.to_string());
        let s = s.trim();
        let (y, m) = s.split_once(['-', ':']).ok_or_else(err)?;
        if y.len() != 4 || m.is_empty() || m.len() > 2 {
            return Err(err());
        }
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        Period::new(year, month).ok_or_else(err)
    }
}

/// Inclusive range of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeriodRange {
    pub start: Period,
    pub end: Period,
}

impl PeriodRange {
    pub fn new(start: Period, end: Period) -> Self {
        PeriodRange { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end.months_since(self.start) + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: Period) -> bool {
        self.start <= p && p <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = Period> {
        let start = self.start;
        (0..self.len() as i32).map(move |k| start.offset(k))
    }
}

impl fmt::Display for PeriodRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let p: Period = "2010-12".parse().unwrap();
        assert_eq!(p.year(), 2010);
        assert_eq!(p.month(), 12);
        assert_eq!(p.succ().to_string(), "2011-01");
        assert_eq!("2002:01".parse::<Period>().unwrap().to_string(), "2002-01");
        assert!("2002-13".parse::<Period>().is_err());
        assert!("02-01".parse::<Period>().is_err());
        assert!("2002".parse::<Period>().is_err());
    }

    #[test]
    fn range_len() {
        let r = PeriodRange::new("2002-01".parse().unwrap(), "2010-12".parse().unwrap());
        assert_eq!(r.len(), 108);
        assert_eq!(r.iter().last(), Some(r.end));
    }
}
