//! Domain types shared by every stage of the pipeline.

mod antenna;
pub mod geo;
mod time;

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use antenna::{Antenna, AntennaRegistry, EndemicZone};
pub(crate) use time::ts_serde as time_serde;
pub use time::{classify_time, format_timestamp, parse_timestamp, StudyWindow, TimeBucket};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(id: impl AsRef<str>) -> Self {
                $name(Arc::from(id.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }
    };
}

string_id!(
    /// Opaque (anonymized) subscriber identifier.
    UserId
);
string_id!(
    /// Cell tower identifier.
    AntennaId
);

/// Direction of a call relative to the logged client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Incoming, Direction::Outgoing];

    pub fn code(self) -> char {
        match self {
            Direction::Incoming => 'I',
            Direction::Outgoing => 'O',
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "I" => Some(Direction::Incoming),
            "O" => Some(Direction::Outgoing),
            _ => None,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::Incoming => Direction::Outgoing,
            Direction::Outgoing => Direction::Incoming,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Direction::Incoming => "in",
            Direction::Outgoing => "out",
        }
    }
}

/// One anonymized communication event, seen from the billed client.
///
/// `caller` is the logged client, `direction` is relative to that client and
/// `antenna` is the tower that served it. `caller != callee` always holds for
/// records produced by ingestion.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CallRecord {
    pub caller: UserId,
    pub callee: UserId,
    pub timestamp: DateTime<Utc>,
    pub direction: Direction,
    pub antenna: AntennaId,
    pub duration_s: u64,
}

impl CallRecord {
    pub fn bucket(&self) -> TimeBucket {
        classify_time(self.timestamp)
    }

    /// Serializes to the six-column CDR line format.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.caller,
            self.callee,
            format_timestamp(self.timestamp),
            self.direction.code(),
            self.antenna,
            self.duration_s
        )
    }
}
