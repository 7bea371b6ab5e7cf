use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

/// Half-open time range `[start, end)`. An unbounded side serializes as
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(with = "open_start")]
    pub start: DateTime<Utc>,
    #[serde(with = "open_end")]
    pub end: DateTime<Utc>,
}

macro_rules! open_bound {
    ($name:ident, $limit:expr) => {
        mod $name {
            use chrono::{DateTime, Utc};
            use serde::{Deserialize, Deserializer, Serialize, Serializer};

            pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
                (*t != $limit).then_some(t).serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
                Ok(Option::<DateTime<Utc>>::deserialize(d)?.unwrap_or($limit))
            }
        }
    };
}

open_bound!(open_start, DateTime::<Utc>::MIN_UTC);
open_bound!(open_end, DateTime::<Utc>::MAX_UTC);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("window start {start} is after end {end}")]
pub struct InvalidWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, InvalidWindow> {
        if start > end {
            return Err(InvalidWindow { start, end });
        }
        Ok(TimeWindow { start, end })
    }

    /// A window covering every representable instant.
    pub fn all() -> Self {
        TimeWindow {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }

    /// The `days`-long window ending at `end`.
    pub fn ending_at(end: DateTime<Utc>, days: u32) -> Self {
        TimeWindow {
            start: end - Duration::days(i64::from(days)),
            end,
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// Compact stamp used in outbox filenames, e.g. `20240301T000000Z`.
    pub fn stamp(&self) -> String {
        self.start.format("%Y%m%dT%H%M%SZ").to_string()
    }
}

/// Parses RFC 3339 or a bare `YYYY-MM-DD` date (midnight UTC).
pub fn parse_instant(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    let d = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    Some(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0)?))
}
