//! Local-time bucketing of event timestamps.
//!
//! Timestamps are stored in UTC. Day-of-week, calendar-day and calendar-week
//! buckets are derived after shifting by a fixed offset, so a deployment can
//! pick the operator's local time zone without touching the stored data. The
//! weekend convention defaults to Saturday and Sunday and is configurable.

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Utc};

use crate::error::{Error, Result};

/// Fixed UTC offset plus weekend convention used for all day bucketing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Calendar {
    utc_offset_minutes: i32,
    /// Indexed Monday = 0 .. Sunday = 6.
    weekend: [bool; 7],
}

impl Default for Calendar {
    fn default() -> Self {
        Calendar::new(0, &[5, 6]).expect("default weekend")
    }
}

impl Calendar {
    /// `weekend_days` are indices Monday = 0 .. Sunday = 6.
    pub fn new(utc_offset_minutes: i32, weekend_days: &[usize]) -> Result<Self> {
        if utc_offset_minutes.abs() > 18 * 60 {
            return Err(Error::Config(format!(
                "utc offset {utc_offset_minutes} minutes out of range"
            )));
        }
        if weekend_days.is_empty() || weekend_days.len() >= 7 {
            return Err(Error::Config(
                "weekend must name between 1 and 6 days".into(),
            ));
        }
        let mut weekend = [false; 7];
        for &d in weekend_days {
            if d > 6 {
                return Err(Error::Config(format!("weekday index {d} out of range")));
            }
            weekend[d] = true;
        }
        Ok(Calendar {
            utc_offset_minutes,
            weekend,
        })
    }

    /// Parses a comma-separated day list such as `"SAT,SUN"`.
    pub fn with_weekend_names(utc_offset_minutes: i32, names: &str) -> Result<Self> {
        let mut days = Vec::new();
        for name in names.split(',') {
            let idx = match name.trim().to_ascii_uppercase().as_str() {
                "MON" => 0,
                "TUE" => 1,
                "WED" => 2,
                "THU" => 3,
                "FRI" => 4,
                "SAT" => 5,
                "SUN" => 6,
                other => {
                    return Err(Error::Config(format!("unknown weekday name {other:?}")));
                }
            };
            days.push(idx);
        }
        Calendar::new(utc_offset_minutes, &days)
    }

    pub fn utc_offset_minutes(&self) -> i32 {
        self.utc_offset_minutes
    }

    fn local(&self, ts: DateTime<Utc>) -> NaiveDateTime {
        (ts + Duration::minutes(i64::from(self.utc_offset_minutes))).naive_utc()
    }

    /// Monday = 0 .. Sunday = 6 in local time.
    pub fn weekday_index(&self, ts: DateTime<Utc>) -> u8 {
        self.local(ts).weekday().num_days_from_monday() as u8
    }

    pub fn is_weekend(&self, ts: DateTime<Utc>) -> bool {
        self.weekend[self.weekday_index(ts) as usize]
    }

    /// Local calendar day as days since the common-era epoch.
    pub fn day_ordinal(&self, ts: DateTime<Utc>) -> i32 {
        self.local(ts).date().num_days_from_ce()
    }

    /// Local ISO week, encoded to sort chronologically.
    pub fn week_key(&self, ts: DateTime<Utc>) -> i32 {
        let iso = self.local(ts).date().iso_week();
        iso.year() * 100 + iso.week() as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_timestamp;

    #[test]
    fn saturday_and_sunday_are_weekend_by_default() {
        let cal = Calendar::default();
        let sat = parse_timestamp("2021-01-09T12:00:00Z").unwrap();
        let mon = parse_timestamp("2021-01-04T12:00:00Z").unwrap();
        assert!(cal.is_weekend(sat));
        assert!(!cal.is_weekend(mon));
        assert_eq!(cal.weekday_index(mon), 0);
        assert_eq!(cal.weekday_index(sat), 5);
    }

    #[test]
    fn utc_offset_shifts_the_day_boundary() {
        // 23:30 UTC on Friday is already Saturday at +05:00.
        let cal = Calendar::new(5 * 60, &[5, 6]).unwrap();
        let ts = parse_timestamp("2021-01-08T23:30:00Z").unwrap();
        assert!(cal.is_weekend(ts));
        let utc = Calendar::default();
        assert!(!utc.is_weekend(ts));
        assert_eq!(cal.day_ordinal(ts), utc.day_ordinal(ts) + 1);
    }

    #[test]
    fn week_key_changes_at_iso_week_boundary() {
        let cal = Calendar::default();
        let sun = parse_timestamp("2021-01-10T23:59:59Z").unwrap();
        let mon = parse_timestamp("2021-01-11T00:00:00Z").unwrap();
        assert_eq!(cal.week_key(sun) + 1, cal.week_key(mon));
    }

    #[test]
    fn custom_weekend_names() {
        let cal = Calendar::with_weekend_names(0, "FRI,SAT").unwrap();
        let fri = parse_timestamp("2021-01-08T12:00:00Z").unwrap();
        let sun = parse_timestamp("2021-01-10T12:00:00Z").unwrap();
        assert!(cal.is_weekend(fri));
        assert!(!cal.is_weekend(sun));
        assert!(Calendar::with_weekend_names(0, "NODAY").is_err());
    }
}
