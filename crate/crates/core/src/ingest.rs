//! CDR CSV ingestion with per-line quarantine.
//!
//! Line format (no header): `caller_id,callee_id,timestamp,direction,antenna_id[,duration_s]`.
//! Bad lines are counted per reason and skipped; only an unreadable source is fatal.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{parse_timestamp, AntennaId, AntennaRegistry, CallRecord, Direction, UserId};
use crate::Merge;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadFieldCount,
    BadTimestamp,
    BadDirection,
    BadDuration,
    SelfCall,
    UnknownAntenna,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::BadFieldCount,
        RejectReason::BadTimestamp,
        RejectReason::BadDirection,
        RejectReason::BadDuration,
        RejectReason::SelfCall,
        RejectReason::UnknownAntenna,
    ];
}

/// Parses one CDR line against the registry.
pub fn parse_line(line: &str, registry: &AntennaRegistry) -> Result<CallRecord, RejectReason> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 5 && fields.len() != 6 {
        return Err(RejectReason::BadFieldCount);
    }
    if fields[0].is_empty() || fields[1].is_empty() || fields[4].is_empty() {
        return Err(RejectReason::BadFieldCount);
    }
    let timestamp = parse_timestamp(fields[2]).ok_or(RejectReason::BadTimestamp)?;
    let direction = Direction::from_code(fields[3]).ok_or(RejectReason::BadDirection)?;
    let duration_s = match fields.get(5) {
        None => 0,
        Some(raw) => raw.parse::<u64>().map_err(|_| RejectReason::BadDuration)?,
    };
    if fields[0] == fields[1] {
        return Err(RejectReason::SelfCall);
    }
    let antenna = registry
        .resolve(fields[4])
        .cloned()
        .ok_or(RejectReason::UnknownAntenna)?;
    Ok(CallRecord {
        caller: UserId::new(fields[0]),
        callee: UserId::new(fields[1]),
        timestamp,
        direction,
        antenna,
        duration_s,
    })
}

/// Mergeable ingestion counters. Distinct sets are kept so shard merges stay exact.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestStats {
    lines: u64,
    accepted: u64,
    rejected: BTreeMap<RejectReason, u64>,
    users: HashSet<UserId>,
    antennas: HashSet<AntennaId>,
    span: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl IngestStats {
    pub fn accept(&mut self, rec: &CallRecord) {
        self.lines += 1;
        self.accepted += 1;
        self.users.insert(rec.caller.clone());
        self.users.insert(rec.callee.clone());
        self.antennas.insert(rec.antenna.clone());
        self.span = Some(match self.span {
            None => (rec.timestamp, rec.timestamp),
            Some((lo, hi)) => (lo.min(rec.timestamp), hi.max(rec.timestamp)),
        });
    }

    pub fn reject(&mut self, reason: RejectReason) {
        self.lines += 1;
        *self.rejected.entry(reason).or_default() += 1;
    }

    pub fn report(&self) -> IngestReport {
        let mut rejected_by_reason: BTreeMap<RejectReason, u64> = RejectReason::ALL.iter().map(|r| (*r, 0)).collect();
        for (reason, n) in &self.rejected {
            rejected_by_reason.insert(*reason, *n);
        }
        IngestReport {
            lines: self.lines,
            accepted: self.accepted,
            rejected_by_reason,
            distinct_users: self.users.len() as u64,
            distinct_antennas: self.antennas.len() as u64,
            time_span: self.span.map(|(min, max)| TimeSpan { min, max }),
        }
    }
}

impl Merge for IngestStats {
    fn merge(&mut self, other: Self) {
        self.lines += other.lines;
        self.accepted += other.accepted;
        for (reason, n) in other.rejected {
            *self.rejected.entry(reason).or_default() += n;
        }
        self.users.extend(other.users);
        self.antennas.extend(other.antennas);
        self.span = match (self.span, other.span) {
            (Some((a, b)), Some((c, d))) => Some((a.min(c), b.max(d))),
            (x, None) | (None, x) => x,
        };
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    #[serde(with = "crate::model::time_serde")]
    pub min: DateTime<Utc>,
    #[serde(with = "crate::model::time_serde")]
    pub max: DateTime<Utc>,
}

/// Data-quality summary; `accepted + Σ rejected_by_reason = lines`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines: u64,
    pub accepted: u64,
    pub rejected_by_reason: BTreeMap<RejectReason, u64>,
    pub distinct_users: u64,
    pub distinct_antennas: u64,
    pub time_span: Option<TimeSpan>,
}

impl IngestReport {
    pub fn rejected(&self) -> u64 {
        self.rejected_by_reason.values().sum()
    }
}

/// Parses a shard of lines, preserving input order among accepted records.
pub fn parse_lines<'a, I>(lines: I, registry: &AntennaRegistry) -> (Vec<CallRecord>, IngestStats)
where
    I: IntoIterator<Item = &'a str>,
{
    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for line in lines {
        match parse_line(line, registry) {
            Ok(rec) => {
                stats.accept(&rec);
                records.push(rec);
            }
            Err(reason) => stats.reject(reason),
        }
    }
    (records, stats)
}

pub fn parse_cdr_stream<R: BufRead>(source: R, registry: &AntennaRegistry) -> Result<(Vec<CallRecord>, IngestReport)> {
    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for line in source.lines() {
        let line = line?;
        match parse_line(&line, registry) {
            Ok(rec) => {
                stats.accept(&rec);
                records.push(rec);
            }
            Err(reason) => stats.reject(reason),
        }
    }
    Ok((records, stats.report()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> AntennaRegistry {
        AntennaRegistry::from_csv_reader("antenna_id,lat,lon\nA17,-27,-60\nA18,-27.1,-60\n".as_bytes()).unwrap()
    }

    #[test]
    fn accepts_well_formed_line() {
        let (recs, report) = parse_cdr_stream("u1,u2,2015-08-03T09:15:00Z,O,A17\n".as_bytes(), &registry()).unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].direction, Direction::Outgoing);
        assert_eq!(recs[0].duration_s, 0);
        assert_eq!(recs[0].to_csv_line(), "u1,u2,2015-08-03T09:15:00Z,O,A17,0");
    }

    #[test]
    fn reason_codes() {
        let reg = registry();
        let cases = [
            ("u1,u1,2015-08-03T09:15:00Z,O,A17", RejectReason::SelfCall),
            ("u1,u2,2015-08-03T09:15:00Z,X,A17", RejectReason::BadDirection),
            ("u1,u2,2015-08-03T09:15:00Z,O,A99", RejectReason::UnknownAntenna),
            ("u1,u2,2015-08-03,O,A17", RejectReason::BadTimestamp),
            ("u1,u2,2015-08-03T09:15:00Z,O", RejectReason::BadFieldCount),
            ("", RejectReason::BadFieldCount),
            ("u1,u2,2015-08-03T09:15:00Z,O,A17,-3", RejectReason::BadDuration),
        ];
        for (line, reason) in cases {
            assert_eq!(parse_line(line, &reg), Err(reason), "{line}");
        }
    }

    #[test]
    fn bad_direction_is_reported() {
        let (_, report) = parse_cdr_stream("u1,u2,2015-08-03T09:15:00Z,X,A17\n".as_bytes(), &registry()).unwrap();
        assert_eq!(report.rejected_by_reason[&RejectReason::BadDirection], 1);
        assert_eq!(report.accepted, 0);
    }

    #[test]
    fn unknown_antenna_fixture() {
        let text = "u1,u2,2015-08-03T09:15:00Z,O,A17,30\n\
                    u2,u3,2015-08-03T21:15:00Z,I,A99,10\n\
                    u3,u1,2015-08-04T09:15:00Z,O,A18\n";
        let (recs, report) = parse_cdr_stream(text.as_bytes(), &registry()).unwrap();
        assert_eq!(report.accepted, 2);
        assert_eq!(report.rejected_by_reason[&RejectReason::UnknownAntenna], 1);
        assert_eq!(report.lines, 3);
        assert_eq!(report.distinct_users, 3);
        assert_eq!(report.distinct_antennas, 2);
        assert_eq!(recs[0].duration_s, 30);
        assert_eq!(recs[1].caller.as_str(), "u3");
    }

    #[test]
    fn crlf_tolerated() {
        let (recs, _) = parse_cdr_stream("u1,u2,2015-08-03T09:15:00Z,O,A17,5\r\n".as_bytes(), &registry()).unwrap();
        assert_eq!(recs[0].duration_s, 5);
    }

    #[test]
    fn duplicates_are_kept() {
        let line = "u1,u2,2015-08-03T09:15:00Z,O,A17\n";
        let (recs, _) = parse_cdr_stream(line.repeat(2).as_bytes(), &registry()).unwrap();
        assert_eq!(recs.len(), 2);
    }

    #[test]
    fn report_json_shape() {
        let (_, report) = parse_cdr_stream("u1,u2,2015-08-03T09:15:00Z,X,A17\n".as_bytes(), &registry()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&report).unwrap();
        assert_eq!(v["rejected_by_reason"]["bad_direction"], 1);
        assert_eq!(v["rejected_by_reason"]["self_call"], 0);
        assert!(v["time_span"].is_null());
    }

    struct FailingReader;
    impl std::io::Read for FailingReader {
        fn read(&mut self, _: &mut [u8]) -> std::io::Result<usize> {
            Err(std::io::Error::other("disk gone"))
        }
    }

    #[test]
    fn unreadable_source_is_fatal() {
        let src = std::io::BufReader::new(FailingReader);
        assert!(parse_cdr_stream(src, &registry()).is_err());
    }
}
