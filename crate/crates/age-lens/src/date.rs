//! Calendar dates at whole-day resolution.
//!
//! Review timestamps carry day precision only, so every date in the pipeline
//! is a day count since the Unix epoch. Durations convert to years by /365.25.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Days in a year used for all day-to-year conversions.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Days between 0001-01-01 (chrono's CE origin) and 1970-01-01.
const EPOCH_CE_DAYS: i64 = 719_163;

/// A calendar date stored as whole days since 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i64);

impl Day {
    /// Truncates a Unix timestamp in seconds to a whole day.
    pub fn from_unix_seconds(secs: i64) -> Day {
        Day(secs.div_euclid(86_400))
    }

    /// Midnight of this day as a Unix timestamp in seconds.
    pub fn to_unix_seconds(self) -> i64 {
        self.0 * 86_400
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        Some(Day(i64::from(date.num_days_from_ce()) - EPOCH_CE_DAYS))
    }

    /// Parses a `YYYY-MM-DD` string.
    pub fn parse(s: &str) -> Result<Day, Error> {
        let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| Error::Data(format!("invalid date `{s}` (expected YYYY-MM-DD)")))?;
        Ok(Day(i64::from(date.num_days_from_ce()) - EPOCH_CE_DAYS))
    }

    /// Signed duration from `earlier` to `self`, in years.
    pub fn years_since(self, earlier: Day) -> f64 {
        (self.0 - earlier.0) as f64 / DAYS_PER_YEAR
    }

    pub fn add_days(self, days: i64) -> Day {
        Day(self.0 + days)
    }

    /// `YYYY-MM` bucket label, used for drift series grouping.
    pub fn month_bucket(self) -> String {
        let date = self.as_naive();
        format!("{:04}-{:02}", date.year(), date.month())
    }

    fn as_naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt((self.0 + EPOCH_CE_DAYS) as i32)
            .expect("day count out of calendar range")
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_naive().format("%Y-%m-%d"))
    }
}

impl Serialize for Day {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Day {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Day, D::Error> {
        let s = String::deserialize(deserializer)?;
        Day::parse(&s).map_err(serde::de::Error::custom)
    }
}
