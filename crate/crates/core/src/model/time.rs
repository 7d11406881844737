use chrono::{DateTime, Datelike, NaiveDateTime, TimeZone, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Weekly activity period of a timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    Weekday,
    Weeknight,
    Weekend,
}

impl TimeBucket {
    pub const ALL: [TimeBucket; 3] = [TimeBucket::Weekday, TimeBucket::Weeknight, TimeBucket::Weekend];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeBucket::Weekday => "weekday",
            TimeBucket::Weeknight => "weeknight",
            TimeBucket::Weekend => "weekend",
        }
    }
}

/// Assigns a UTC instant to its weekly bucket.
///
/// Day hours run 08:00-19:59. A night window belongs to the day it opens on:
/// Friday 20:00 through Saturday 07:59 is a weeknight, while Sunday 20:00
/// through Monday 07:59 is weekend.
pub fn classify_time(ts: DateTime<Utc>) -> TimeBucket {
    let hour = ts.hour();
    let day = ts.weekday();
    let is_day_hours = (8..20).contains(&hour);
    match day {
        Weekday::Sat if hour < 8 => TimeBucket::Weeknight,
        Weekday::Sat | Weekday::Sun => TimeBucket::Weekend,
        Weekday::Mon if hour < 8 => TimeBucket::Weekend,
        _ if is_day_hours => TimeBucket::Weekday,
        _ => TimeBucket::Weeknight,
    }
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if s.len() != 20 {
        return None;
    }
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|naive| Utc.from_utc_datetime(&naive))
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Past (T0) and present (T1) observation windows, each half-open.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    #[serde(with = "ts_serde")]
    pub t0_start: DateTime<Utc>,
    #[serde(with = "ts_serde")]
    pub t0_end: DateTime<Utc>,
    #[serde(with = "ts_serde")]
    pub t1_start: DateTime<Utc>,
    #[serde(with = "ts_serde")]
    pub t1_end: DateTime<Utc>,
}

impl StudyWindow {
    pub fn new(
        t0_start: DateTime<Utc>,
        t0_end: DateTime<Utc>,
        t1_start: DateTime<Utc>,
        t1_end: DateTime<Utc>,
    ) -> Result<Self> {
        if !(t0_start < t0_end && t0_end <= t1_start && t1_start < t1_end) {
            return Err(Error::Window(format!(
                "expected t0_start < t0_end <= t1_start < t1_end, got {} / {} / {} / {}",
                format_timestamp(t0_start),
                format_timestamp(t0_end),
                format_timestamp(t1_start),
                format_timestamp(t1_end)
            )));
        }
        Ok(StudyWindow {
            t0_start,
            t0_end,
            t1_start,
            t1_end,
        })
    }

    /// January 2014 - July 2015 as the past, August - December 2015 as the present.
    pub fn reference() -> Self {
        let at = |y, m| Utc.with_ymd_and_hms(y, m, 1, 0, 0, 0).unwrap();
        StudyWindow::new(at(2014, 1), at(2015, 8), at(2015, 8), at(2016, 1)).unwrap()
    }

    pub fn in_t0(&self, ts: DateTime<Utc>) -> bool {
        self.t0_start <= ts && ts < self.t0_end
    }

    pub fn in_t1(&self, ts: DateTime<Utc>) -> bool {
        self.t1_start <= ts && ts < self.t1_end
    }
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow::reference()
    }
}

pub(crate) mod ts_serde {
    use chrono::{DateTime, Utc};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(*ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_timestamp(&s).ok_or_else(|| de::Error::custom(format!("bad timestamp {s:?}")))
    }
}
