//! Home-antenna inference from weeknight activity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{AntennaId, CallRecord, EndemicZone, TimeBucket, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Weeknight,
    FallbackAllCalls,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Weeknight => "weeknight",
            Provenance::FallbackAllCalls => "fallback_all_calls",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Home {
    pub antenna: AntennaId,
    pub provenance: Provenance,
}

/// Client → home antenna.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HomeAssignment {
    homes: BTreeMap<UserId, Home>,
}

impl HomeAssignment {
    pub fn get(&self, user: &str) -> Option<&Home> {
        self.homes.get(user)
    }

    pub fn antenna_of(&self, user: &str) -> Option<&AntennaId> {
        self.homes.get(user).map(|h| &h.antenna)
    }

    pub fn len(&self) -> usize {
        self.homes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.homes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, &Home)> {
        self.homes.iter()
    }

    pub fn insert(&mut self, user: UserId, home: Home) {
        self.homes.insert(user, home);
    }

    /// `user_id,home_antenna,provenance`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("user_id,home_antenna,provenance\n");
        for (u, h) in &self.homes {
            out.push_str(&format!("{u},{},{}\n", h.antenna, h.provenance.name()));
        }
        out
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    weeknight: u64,
    all: u64,
}

/// Infers each client's home antenna.
///
/// The home is the antenna with the most weeknight records; ties go to the
/// antenna with most records overall, then to the smallest id. Clients with
/// no weeknight records fall back to their most used antenna overall.
pub fn infer_homes<'a, I>(records: I, window: Option<Range<DateTime<Utc>>>) -> HomeAssignment
where
    I: IntoIterator<Item = &'a CallRecord>,
{
    let mut counts: HashMap<&UserId, HashMap<&AntennaId, Tally>> = HashMap::new();
    for rec in records {
        if let Some(w) = &window {
            if !w.contains(&rec.timestamp) {
                continue;
            }
        }
        let t = counts.entry(&rec.caller).or_default().entry(&rec.antenna).or_default();
        t.all += 1;
        if rec.bucket() == TimeBucket::Weeknight {
            t.weeknight += 1;
        }
    }

    let mut homes = HomeAssignment::default();
    for (user, per_antenna) in counts {
        let best = per_antenna
            .iter()
            .max_by(|(a_id, a), (b_id, b)| {
                (a.weeknight, a.all)
                    .cmp(&(b.weeknight, b.all))
                    .then_with(|| b_id.cmp(a_id))
            })
            .expect("users in the tally have at least one record");
        let provenance = if best.1.weeknight > 0 {
            Provenance::Weeknight
        } else {
            Provenance::FallbackAllCalls
        };
        homes.insert(
            user.clone(),
            Home {
                antenna: (*best.0).clone(),
                provenance,
            },
        );
    }
    homes
}

/// Users whose home antenna is in the zone.
pub fn residents_of(homes: &HomeAssignment, zone: &EndemicZone) -> BTreeSet<UserId> {
    homes
        .iter()
        .filter(|(_, h)| zone.contains(h.antenna.as_str()))
        .map(|(u, _)| u.clone())
        .collect()
}
