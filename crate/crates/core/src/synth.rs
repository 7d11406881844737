//! Deterministic synthetic CDR corpora with planted ground truth.
//!
//! # Generator
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! The layout, homes and social ties are drawn from one stream seeded with
//! `seed`; each user's call records come from their own stream seeded with
//! `seed ^ user_index`, so users can be generated in parallel.
//!
//! * Antennas sit on a square-ish grid (0.1° spacing). The leftmost columns
//!   form the endemic zone; an antenna's hop distance to the zone is its
//!   column distance to the last zone column.
//! * Each user is a migrant with probability `migrant_fraction`. Migrants live
//!   at a zone antenna during T0 and at a non-zone antenna during T1. Everyone
//!   else keeps one uniformly drawn home for both windows.
//! * Ties follow a two-block model. Endemic residents mostly know other
//!   residents; migrants know a resident with probability
//!   `tie_strength_endemic`; other users know a resident with probability
//!   `local_tie_strength · tie_decay^(hops - 1)`.
//! * Per user and window, `mean_calls_per_user_per_period` calls are split
//!   across weekday / weeknight / weekend with weights 0.5 / 0.3 / 0.2
//!   (largest remainder). Times are uniform within the chosen bucket.
//!   Weeknight calls use the home antenna with probability `p_home_call`,
//!   otherwise a uniformly chosen grid neighbor of the home.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    classify_time, Antenna, AntennaId, AntennaRegistry, CallRecord, Direction, EndemicZone, StudyWindow, TimeBucket,
    UserId,
};

const GRID_SPACING_DEG: f64 = 0.1;
const ORIGIN: (f64, f64) = (-22.0, -64.0);
const BUCKET_WEIGHTS: [(TimeBucket, f64); 3] = [
    (TimeBucket::Weekday, 0.5),
    (TimeBucket::Weeknight, 0.3),
    (TimeBucket::Weekend, 0.2),
];
/// Probability that an endemic resident's contact is another resident.
const RESIDENT_INTERNAL_TIE: f64 = 0.8;
const WORK_ANTENNA_SHARE: f64 = 0.6;
const WEEKEND_HOME_SHARE: f64 = 0.5;
const MIN_PERIOD_SECS: i64 = 7 * 24 * 3600;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_antennas: usize,
    pub endemic_antenna_fraction: f64,
    pub p_home_call: f64,
    pub migrant_fraction: f64,
    pub mean_calls_per_user_per_period: f64,
    pub tie_strength_endemic: f64,
    pub contacts_per_user: usize,
    pub local_tie_strength: f64,
    pub tie_decay: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_users: 2000,
            n_antennas: 100,
            endemic_antenna_fraction: 0.2,
            p_home_call: 0.9,
            migrant_fraction: 0.2,
            mean_calls_per_user_per_period: 80.0,
            tie_strength_endemic: 0.8,
            contacts_per_user: 10,
            local_tie_strength: 0.15,
            tie_decay: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("endemic_antenna_fraction", self.endemic_antenna_fraction),
            ("p_home_call", self.p_home_call),
            ("migrant_fraction", self.migrant_fraction),
            ("tie_strength_endemic", self.tie_strength_endemic),
            ("local_tie_strength", self.local_tie_strength),
            ("tie_decay", self.tie_decay),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.n_antennas < 2 {
            return Err(Error::Config("n_antennas must be at least 2".into()));
        }
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if self.n_users < 2 {
            return Err(Error::Config("at least two users are needed to place calls".into()));
        }
        if !(self.mean_calls_per_user_per_period > 0.0 && self.mean_calls_per_user_per_period.is_finite()) {
            return Err(Error::Config("mean_calls_per_user_per_period must be positive".into()));
        }
        if self.contacts_per_user == 0 {
            return Err(Error::Config("contacts_per_user must be positive".into()));
        }
        Ok(())
    }

    pub fn sub_seed(&self, user_index: usize) -> u64 {
        self.seed ^ user_index as u64
    }
}

/// Antenna grid with the endemic zone in its leftmost columns.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    pub cols: usize,
    pub rows: usize,
    pub zone_cols: usize,
    cells: Vec<(usize, usize)>,
    ids: Vec<AntennaId>,
    index: HashMap<AntennaId, usize>,
}

impl GridLayout {
    fn new(n_antennas: usize, endemic_fraction: f64) -> Self {
        let cols = (n_antennas as f64).sqrt().ceil() as usize;
        let rows = n_antennas.div_ceil(cols);
        let zone_cols = ((endemic_fraction * cols as f64).round() as usize).clamp(1, cols - 1);
        let width = digits(n_antennas - 1).max(3);
        let cells = (0..n_antennas).map(|i| (i / cols, i % cols)).collect();
        let ids: Vec<AntennaId> = (0..n_antennas)
            .map(|i| AntennaId::new(format!("A{i:0width$}")))
            .collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        GridLayout {
            cols,
            rows,
            zone_cols,
            cells,
            ids,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &AntennaId {
        &self.ids[i]
    }

    fn is_zone(&self, i: usize) -> bool {
        self.cells[i].1 < self.zone_cols
    }

    fn hops(&self, i: usize) -> usize {
        (self.cells[i].1 + 1).saturating_sub(self.zone_cols)
    }

    /// Column distance to the zone; 0 for zone antennas.
    pub fn hops_to_zone(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.hops(i))
    }

    /// Grid neighbors (8-connected) of antenna `i`.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let (r, c) = self.cells[i];
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nc >= self.cols as i64 {
                    continue;
                }
                let j = nr as usize * self.cols + nc as usize;
                if j < self.len() {
                    out.push(j);
                }
            }
        }
        out
    }

    fn position(&self, i: usize) -> (f64, f64) {
        let (r, c) = self.cells[i];
        (
            ORIGIN.0 - r as f64 * GRID_SPACING_DEG,
            ORIGIN.1 + c as f64 * GRID_SPACING_DEG,
        )
    }
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub t0_home: AntennaId,
    pub t1_home: AntennaId,
    pub lived_in_endemic_t0: bool,
    pub contacts: Vec<UserId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub users: BTreeMap<UserId, TruthEntry>,
}

impl GroundTruth {
    pub fn migrants(&self) -> usize {
        self.users.values().filter(|e| e.t0_home != e.t1_home).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub struct SynthCorpus {
    pub config: SynthConfig,
    pub window: StudyWindow,
    pub records: Vec<CallRecord>,
    pub registry: AntennaRegistry,
    pub zone: EndemicZone,
    pub truth: GroundTruth,
    pub layout: GridLayout,
}

impl SynthCorpus {
    pub fn cdr_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn registry_csv(&self) -> String {
        self.registry.to_csv_string()
    }

    pub fn zone_csv(&self) -> String {
        self.zone.to_csv_string()
    }

    pub fn truth_json(&self) -> String {
        self.truth.to_json()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Group {
    Resident,
    Migrant,
    Other,
}

struct Planted {
    t0_home: usize,
    t1_home: usize,
    group: Group,
    contacts: Vec<usize>,
}

fn pick<'a, R: Rng>(rng: &mut R, pool: &'a [usize]) -> Option<&'a usize> {
    pool.choose(rng)
}

fn plant(config: &SynthConfig, layout: &GridLayout, rng: &mut ChaCha8Rng) -> Vec<Planted> {
    let zone: Vec<usize> = (0..layout.len()).filter(|&i| layout.is_zone(i)).collect();
    let outside: Vec<usize> = (0..layout.len()).filter(|&i| !layout.is_zone(i)).collect();

    let mut users: Vec<Planted> = (0..config.n_users)
        .map(|_| {
            if rng.gen_bool(config.migrant_fraction) {
                Planted {
                    t0_home: *pick(rng, &zone).unwrap(),
                    t1_home: *pick(rng, &outside).unwrap(),
                    group: Group::Migrant,
                    contacts: Vec::new(),
                }
            } else {
                let home = rng.gen_range(0..layout.len());
                let group = if layout.is_zone(home) {
                    Group::Resident
                } else {
                    Group::Other
                };
                Planted {
                    t0_home: home,
                    t1_home: home,
                    group,
                    contacts: Vec::new(),
                }
            }
        })
        .collect();

    let residents: Vec<usize> = (0..users.len())
        .filter(|&u| users[u].group == Group::Resident)
        .collect();
    let non_residents: Vec<usize> = (0..users.len())
        .filter(|&u| users[u].group != Group::Resident)
        .collect();
    // Residents reach out of the zone preferentially toward nearby users.
    let decay_weights: Vec<f64> = non_residents
        .iter()
        .map(|&u| config.tie_decay.powi(layout.hops(users[u].t1_home) as i32 - 1))
        .collect();
    let cumulative: Vec<f64> = decay_weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total_weight = cumulative.last().copied().unwrap_or(0.0);

    let everyone: Vec<usize> = (0..users.len()).collect();
    let wanted = config.contacts_per_user.min(users.len() - 1);
    for u in 0..users.len() {
        let p_resident_tie = match users[u].group {
            Group::Resident => RESIDENT_INTERNAL_TIE,
            Group::Migrant => config.tie_strength_endemic,
            Group::Other => {
                let hops = layout.hops(users[u].t1_home) as i32;
                config.local_tie_strength * config.tie_decay.powi(hops - 1)
            }
        };
        let mut contacts: Vec<usize> = Vec::with_capacity(wanted);
        let mut attempts = 0;
        while contacts.len() < wanted {
            attempts += 1;
            let candidate = if attempts > 50 * wanted {
                *pick(rng, &everyone).unwrap()
            } else if rng.gen_bool(p_resident_tie) && !residents.is_empty() {
                *pick(rng, &residents).unwrap()
            } else if users[u].group == Group::Resident && total_weight > 0.0 {
                let x = rng.gen::<f64>() * total_weight;
                let k = cumulative.partition_point(|&c| c <= x).min(non_residents.len() - 1);
                non_residents[k]
            } else if let Some(&v) = pick(rng, &non_residents) {
                v
            } else {
                *pick(rng, &everyone).unwrap()
            };
            if candidate != u && !contacts.contains(&candidate) {
                contacts.push(candidate);
            }
        }
        contacts.sort_unstable();
        users[u].contacts = contacts;
    }
    users
}

fn bucket_counts(total: usize) -> [(TimeBucket, usize); 3] {
    let raw: Vec<f64> = BUCKET_WEIGHTS.iter().map(|(_, w)| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    let mut left = total - counts.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    [
        (BUCKET_WEIGHTS[0].0, counts[0]),
        (BUCKET_WEIGHTS[1].0, counts[1]),
        (BUCKET_WEIGHTS[2].0, counts[2]),
    ]
}

fn sample_time<R: Rng>(rng: &mut R, start: DateTime<Utc>, end: DateTime<Utc>, bucket: TimeBucket) -> DateTime<Utc> {
    let (lo, hi) = (start.timestamp(), end.timestamp());
    loop {
        let ts = Utc.timestamp_opt(rng.gen_range(lo..hi), 0).unwrap();
        if classify_time(ts) == bucket {
            return ts;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn user_records(
    config: &SynthConfig,
    layout: &GridLayout,
    user_ids: &[UserId],
    u: usize,
    planted: &Planted,
    window: &StudyWindow,
) -> Vec<CallRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.sub_seed(u));
    let n_calls = config.mean_calls_per_user_per_period.round().max(1.0) as usize;
    let periods = [
        (window.t0_start, window.t0_end, planted.t0_home),
        (window.t1_start, window.t1_end, planted.t1_home),
    ];
    let mut out = Vec::with_capacity(2 * n_calls);
    for (start, end, home) in periods {
        let nearby = layout.neighbors(home);
        let work = *nearby.choose(&mut rng).unwrap_or(&home);
        for (bucket, count) in bucket_counts(n_calls) {
            for _ in 0..count {
                let timestamp = sample_time(&mut rng, start, end, bucket);
                let share = match bucket {
                    TimeBucket::Weeknight => config.p_home_call,
                    TimeBucket::Weekend => WEEKEND_HOME_SHARE,
                    TimeBucket::Weekday => 0.0,
                };
                let antenna = if bucket == TimeBucket::Weekday && rng.gen_bool(WORK_ANTENNA_SHARE) {
                    work
                } else if rng.gen_bool(share) {
                    home
                } else {
                    *nearby.choose(&mut rng).unwrap_or(&home)
                };
                let contact = *planted.contacts.choose(&mut rng).expect("every user has contacts");
                let direction = if rng.gen_bool(0.5) {
                    Direction::Outgoing
                } else {
                    Direction::Incoming
                };
                out.push(CallRecord {
                    caller: user_ids[u].clone(),
                    callee: user_ids[contact].clone(),
                    timestamp,
                    direction,
                    antenna: layout.id(antenna).clone(),
                    duration_s: rng.gen_range(5..=600),
                });
            }
        }
    }
    out
}

/// Generates a corpus spanning both windows of `window`.
pub fn generate(config: &SynthConfig, window: &StudyWindow) -> Result<SynthCorpus> {
    config.validate()?;
    for (name, lo, hi) in [
        ("T0", window.t0_start, window.t0_end),
        ("T1", window.t1_start, window.t1_end),
    ] {
        if (hi - lo).num_seconds() < MIN_PERIOD_SECS {
            return Err(Error::Config(format!("{name} must span at least one week")));
        }
    }
    let layout = GridLayout::new(config.n_antennas, config.endemic_antenna_fraction);
    let antennas = (0..layout.len())
        .map(|i| {
            let (lat, lon) = layout.position(i);
            Antenna::new(layout.id(i).as_str(), lat, lon)
        })
        .collect::<Result<Vec<_>>>()?;
    let registry = AntennaRegistry::new(antennas)?;
    let zone = EndemicZone::new(
        "synthetic-endemic",
        (0..layout.len())
            .filter(|&i| layout.is_zone(i))
            .map(|i| layout.id(i).clone()),
        &registry,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let planted = plant(config, &layout, &mut rng);
    let width = digits(config.n_users - 1).max(4);
    let user_ids: Vec<UserId> = (0..config.n_users)
        .map(|u| UserId::new(format!("u{u:0width$}")))
        .collect();

    let mut records: Vec<CallRecord> = planted
        .par_iter()
        .enumerate()
        .flat_map_iter(|(u, p)| user_records(config, &layout, &user_ids, u, p, window))
        .collect();
    records.sort_by(|a, b| {
        (a.timestamp, &a.caller, &a.callee, &a.antenna, a.direction, a.duration_s).cmp(&(
            b.timestamp,
            &b.caller,
            &b.callee,
            &b.antenna,
            b.direction,
            b.duration_s,
        ))
    });

    let truth = GroundTruth {
        users: planted
            .iter()
            .enumerate()
            .map(|(u, p)| {
                (
                    user_ids[u].clone(),
                    TruthEntry {
                        t0_home: layout.id(p.t0_home).clone(),
                        t1_home: layout.id(p.t1_home).clone(),
                        lived_in_endemic_t0: layout.is_zone(p.t0_home),
                        contacts: p.contacts.iter().map(|&v| user_ids[v].clone()).collect(),
                    },
                )
            })
            .collect(),
    };

    Ok(SynthCorpus {
        config: config.clone(),
        window: *window,
        records,
        registry,
        zone,
        truth,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 120,
            n_antennas: 25,
            mean_calls_per_user_per_period: 20.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let w = StudyWindow::reference();
        for bad in [
            SynthConfig {
                n_antennas: 1,
                ..small()
            },
            SynthConfig { n_users: 0, ..small() },
            SynthConfig {
                p_home_call: 1.5,
                ..small()
            },
            SynthConfig {
                migrant_fraction: -0.1,
                ..small()
            },
        ] {
            assert!(matches!(generate(&bad, &w), Err(Error::Config(_))));
        }
    }

    #[test]
    fn deterministic_output() {
        let w = StudyWindow::reference();
        let a = generate(&small(), &w).unwrap();
        let b = generate(&small(), &w).unwrap();
        assert_eq!(a.cdr_csv(), b.cdr_csv());
        assert_eq!(a.truth_json(), b.truth_json());
        assert_eq!(a.registry_csv(), b.registry_csv());
        let c = generate(&SynthConfig { seed: 7, ..small() }, &w).unwrap();
        assert_ne!(a.cdr_csv(), c.cdr_csv());
    }

    #[test]
    fn no_migration_means_current_residency() {
        let cfg = SynthConfig {
            migrant_fraction: 0.0,
            ..small()
        };
        let corpus = generate(&cfg, &StudyWindow::reference()).unwrap();
        for e in corpus.truth.users.values() {
            assert_eq!(e.lived_in_endemic_t0, corpus.zone.contains(e.t1_home.as_str()));
            assert_eq!(e.t0_home, e.t1_home);
        }
    }

    #[test]
    fn bucket_split_sums() {
        assert_eq!(bucket_counts(80).map(|(_, n)| n), [40, 24, 16]);
        assert_eq!(bucket_counts(7).map(|(_, n)| n).iter().sum::<usize>(), 7);
        assert_eq!(bucket_counts(1).map(|(_, n)| n).iter().sum::<usize>(), 1);
    }

    #[test]
    fn layout_hops() {
        let layout = GridLayout::new(100, 0.2);
        assert_eq!((layout.cols, layout.rows, layout.zone_cols), (10, 10, 2));
        assert_eq!(layout.hops_to_zone("A000"), Some(0));
        assert_eq!(layout.hops_to_zone("A001"), Some(0));
        assert_eq!(layout.hops_to_zone("A002"), Some(1));
        assert_eq!(layout.hops_to_zone("A009"), Some(8));
        assert_eq!(layout.neighbors(0).len(), 3);
        assert_eq!(layout.neighbors(55).len(), 8);
    }

    #[test]
    fn records_within_windows_and_contacts() {
        let corpus = generate(&small(), &StudyWindow::reference()).unwrap();
        let w = corpus.window;
        assert_eq!(corpus.records.len(), 120 * 2 * 20);
        for r in &corpus.records {
            assert!(w.in_t0(r.timestamp) || w.in_t1(r.timestamp));
            let entry = &corpus.truth.users[&r.caller];
            assert!(entry.contacts.contains(&r.callee));
        }
    }
}
