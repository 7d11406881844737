#![allow(dead_code)]

use cdr_risk::{Antenna, AntennaRegistry, CallRecord, Direction, UserId};
use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

pub const ANTENNAS: [&str; 6] = ["A0", "A1", "A2", "A3", "A4", "A5"];

pub fn registry() -> AntennaRegistry {
    AntennaRegistry::new(
        ANTENNAS
            .iter()
            .enumerate()
            .map(|(i, id)| Antenna::new(id, -27.0 + 0.37 * i as f64, -60.0 - 0.21 * (i * i) as f64).unwrap()),
    )
    .unwrap()
}

pub fn record(caller: usize, callee: usize, secs: i64, out: bool, antenna: usize, duration_s: u64) -> CallRecord {
    let base = Utc.with_ymd_and_hms(2015, 8, 3, 0, 0, 0).unwrap();
    CallRecord {
        caller: UserId::new(format!("u{caller}")),
        callee: UserId::new(format!("u{callee}")),
        timestamp: base + Duration::seconds(secs),
        direction: if out { Direction::Outgoing } else { Direction::Incoming },
        antenna: ANTENNAS[antenna % ANTENNAS.len()].into(),
        duration_s,
    }
}

/// Valid records among `n_users` users over four weeks.
pub fn arb_records(n_users: usize, max_len: usize) -> impl Strategy<Value = Vec<CallRecord>> {
    prop::collection::vec(
        (
            0..n_users,
            1..n_users,
            0i64..28 * 86_400,
            any::<bool>(),
            0..ANTENNAS.len(),
            0u64..900,
        ),
        0..max_len,
    )
    .prop_map(move |v| {
        v.into_iter()
            .map(|(a, off, t, out, ant, dur)| record(a, (a + off) % n_users, t, out, ant, dur))
            .collect()
    })
}
