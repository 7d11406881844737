//! Per-user migration features from the present window and residency labels
//! from the past window.
//!
//! Column layout (63 columns, fixed order):
//!
//! | range   | columns |
//! |---------|---------|
//! | 0..3    | `endemic`, `exposed`, `vulnerable` flags (0/1) |
//! | 3..5    | `degree`, `endemic_neighbors` |
//! | 5..7    | `diameter_all_km`, `diameter_weeknight_km` |
//! | 7..17   | `top_all_{1..10}_endemic` |
//! | 17..27  | `top_weeknight_{1..10}_endemic` |
//! | 27..63  | `{all,endemic,nonendemic}_{in,out}_{weekday,weeknight,weekend}_{calls,duration_s}` |

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Dataset;
use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::homes::{infer_homes, HomeAssignment};
use crate::model::geo::{max_pairwise_km, LatLon};
use crate::model::{AntennaId, AntennaRegistry, CallRecord, Direction, EndemicZone, StudyWindow, TimeBucket, UserId};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: &str = "migration-features/v1";
pub const TOP_K: usize = 10;
pub const EDGE_GROUPS: [&str; 3] = ["all", "endemic", "nonendemic"];
pub const N_EDGE_AGGREGATES: usize = 36;
pub const N_FEATURES: usize = 7 + 2 * TOP_K + N_EDGE_AGGREGATES;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeriodSplit {
    pub t0: Vec<CallRecord>,
    pub t1: Vec<CallRecord>,
    pub dropped: usize,
}

/// Partitions records into the half-open T0 and T1 windows.
pub fn split_periods(records: &[CallRecord], window: &StudyWindow) -> PeriodSplit {
    let mut split = PeriodSplit::default();
    for r in records {
        if window.in_t0(r.timestamp) {
            split.t0.push(r.clone());
        } else if window.in_t1(r.timestamp) {
            split.t1.push(r.clone());
        } else {
            split.dropped += 1;
        }
    }
    split
}

fn rank_antennas<'a>(counts: impl Iterator<Item = (&'a AntennaId, u64)>, k: usize) -> Vec<AntennaId> {
    let mut ranked: Vec<(&AntennaId, u64)> = counts.filter(|(_, n)| *n > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(a, _)| a.clone()).collect()
}

/// Most used antennas of `user`, by descending event count then id.
pub fn top_antennas(user: &str, records: &[CallRecord], k: usize, bucket: Option<TimeBucket>) -> Vec<AntennaId> {
    let mut counts: HashMap<&AntennaId, u64> = HashMap::new();
    for r in records {
        if r.caller.as_str() == user && bucket.is_none_or(|b| r.bucket() == b) {
            *counts.entry(&r.antenna).or_default() += 1;
        }
    }
    rank_antennas(counts.into_iter(), k)
}

/// Largest great-circle distance between any two used antennas.
/// Antennas missing from the registry are ignored.
pub fn mobility_diameter<'a, T: Scalar>(
    antennas: impl IntoIterator<Item = &'a AntennaId>,
    registry: &AntennaRegistry,
) -> T {
    let unique: BTreeSet<&AntennaId> = antennas.into_iter().collect();
    let points: Vec<LatLon<T>> = unique
        .into_iter()
        .filter_map(|id| registry.get(id.as_str()))
        .map(|a| LatLon::new(T::from_f64_lossy(a.latitude), T::from_f64_lossy(a.longitude)))
        .collect();
    max_pairwise_km(&points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserFeatures {
    pub top_antennas_all: Vec<AntennaId>,
    pub top_antennas_weeknight: Vec<AntennaId>,
    pub endemic_flag: bool,
    pub exposed_flag: bool,
    pub mobility_diameter_all_km: f64,
    pub mobility_diameter_weeknight_km: f64,
    pub degree: u64,
    pub endemic_neighbor_count: u64,
    pub vulnerable_flag: bool,
    /// See the module docs for the layout.
    pub edge_aggregates: Vec<u64>,
    /// Zone membership of each top antenna, cached for the vector layout.
    top_all_endemic: Vec<bool>,
    top_weeknight_endemic: Vec<bool>,
}

pub fn edge_index(group: usize, direction: Direction, bucket: TimeBucket, duration: bool) -> usize {
    group * 12 + direction.index() * 6 + bucket.index() * 2 + usize::from(duration)
}

pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "endemic",
        "exposed",
        "vulnerable",
        "degree",
        "endemic_neighbors",
        "diameter_all_km",
        "diameter_weeknight_km",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for scope in ["all", "weeknight"] {
        for i in 1..=TOP_K {
            names.push(format!("top_{scope}_{i}_endemic"));
        }
    }
    for group in EDGE_GROUPS {
        for d in Direction::ALL {
            for b in TimeBucket::ALL {
                for metric in ["calls", "duration_s"] {
                    names.push(format!("{group}_{}_{}_{metric}", d.short_name(), b.name()));
                }
            }
        }
    }
    debug_assert_eq!(names.len(), N_FEATURES);
    names
}

/// Column mask of the non-negative count features fed to naive Bayes:
/// degree, endemic neighbors and every edge call count.
pub fn count_columns() -> Vec<usize> {
    let mut cols = vec![3, 4];
    let base = 7 + 2 * TOP_K;
    for g in 0..EDGE_GROUPS.len() {
        for d in Direction::ALL {
            for b in TimeBucket::ALL {
                cols.push(base + edge_index(g, d, b, false));
            }
        }
    }
    cols
}

impl UserFeatures {
    pub fn to_vector<T: Scalar>(&self) -> Vec<T> {
        let flag = |b: bool| if b { T::one() } else { T::zero() };
        let int = |n: u64| T::from_count(n as usize);
        let mut v = Vec::with_capacity(N_FEATURES);
        v.push(flag(self.endemic_flag));
        v.push(flag(self.exposed_flag));
        v.push(flag(self.vulnerable_flag));
        v.push(int(self.degree));
        v.push(int(self.endemic_neighbor_count));
        v.push(T::from_f64_lossy(self.mobility_diameter_all_km));
        v.push(T::from_f64_lossy(self.mobility_diameter_weeknight_km));
        for list in [&self.top_all_endemic, &self.top_weeknight_endemic] {
            for i in 0..TOP_K {
                v.push(flag(list.get(i).copied().unwrap_or(false)));
            }
        }
        v.extend(self.edge_aggregates.iter().map(|&n| int(n)));
        v
    }

    /// CSV fields in column order; integers bare, distances with 6 decimals.
    pub fn csv_fields(&self) -> Vec<String> {
        self.to_vector::<f64>()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if i == 5 || i == 6 {
                    format!("{x:.6}")
                } else {
                    format!("{}", *x as u64)
                }
            })
            .collect()
    }
}

/// Per-user antenna use by bucket, indexed once for a window.
#[derive(Default)]
pub struct ActivityIndex<'a> {
    per_user: HashMap<&'a str, (&'a UserId, HashMap<&'a AntennaId, [u64; 3]>)>,
}

impl<'a> ActivityIndex<'a> {
    pub fn build(records: &'a [CallRecord]) -> Self {
        let mut per_user: HashMap<&str, (&UserId, HashMap<&AntennaId, [u64; 3]>)> = HashMap::new();
        for r in records {
            let (_, counts) = per_user
                .entry(r.caller.as_str())
                .or_insert_with(|| (&r.caller, HashMap::new()));
            counts.entry(&r.antenna).or_default()[r.bucket().index()] += 1;
        }
        ActivityIndex { per_user }
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.per_user.contains_key(user)
    }

    pub fn users(&self) -> impl Iterator<Item = &'a UserId> + '_ {
        self.per_user.values().map(|(u, _)| *u)
    }

    pub fn top(&self, user: &str, k: usize, bucket: Option<TimeBucket>) -> Vec<AntennaId> {
        let Some((_, counts)) = self.per_user.get(user) else {
            return Vec::new();
        };
        rank_antennas(
            counts.iter().map(|(a, c)| {
                let n = match bucket {
                    Some(b) => c[b.index()],
                    None => c.iter().sum(),
                };
                (*a, n)
            }),
            k,
        )
    }

    fn used(&self, user: &str, bucket: Option<TimeBucket>) -> Vec<&'a AntennaId> {
        self.per_user
            .get(user)
            .map(|(_, counts)| {
                counts
                    .iter()
                    .filter(|(_, c)| bucket.map_or(c.iter().sum::<u64>(), |b| c[b.index()]) > 0)
                    .map(|(a, _)| *a)
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Shared read-only inputs for feature extraction over one window.
pub struct FeatureContext<'a> {
    pub activity: ActivityIndex<'a>,
    pub graph: &'a CommGraph,
    pub homes: &'a HomeAssignment,
    pub zone: &'a EndemicZone,
    pub registry: &'a AntennaRegistry,
}

impl<'a> FeatureContext<'a> {
    pub fn new(
        records: &'a [CallRecord],
        graph: &'a CommGraph,
        homes: &'a HomeAssignment,
        zone: &'a EndemicZone,
        registry: &'a AntennaRegistry,
    ) -> Self {
        FeatureContext {
            activity: ActivityIndex::build(records),
            graph,
            homes,
            zone,
            registry,
        }
    }

    fn is_resident(&self, user: &str) -> bool {
        self.homes
            .antenna_of(user)
            .is_some_and(|a| self.zone.contains(a.as_str()))
    }

    /// Features of one client, or `None` if it has no records in the window.
    pub fn features(&self, user: &UserId) -> Option<UserFeatures> {
        if !self.activity.has_user(user.as_str()) {
            return None;
        }
        let top_all = self.activity.top(user.as_str(), TOP_K, None);
        let top_night = self.activity.top(user.as_str(), TOP_K, Some(TimeBucket::Weeknight));
        let in_zone = |ids: &[AntennaId]| ids.iter().map(|a| self.zone.contains(a.as_str())).collect::<Vec<_>>();
        let top_all_endemic = in_zone(&top_all);
        let top_weeknight_endemic = in_zone(&top_night);
        let exposed_flag = top_all_endemic.iter().chain(&top_weeknight_endemic).any(|&b| b);

        let mut aggregates = vec![0u64; N_EDGE_AGGREGATES];
        let mut endemic_neighbors = 0u64;
        let mut degree = 0u64;
        for v in self.graph.neighbor_iter(user.as_str()) {
            degree += 1;
            let group = if self.is_resident(v.as_str()) {
                endemic_neighbors += 1;
                1
            } else {
                2
            };
            let stats = self.graph.edge_from(user, v).expect("neighbor implies edge");
            for d in Direction::ALL {
                for b in TimeBucket::ALL {
                    for (is_duration, value) in [(false, stats.calls(d, b)), (true, stats.duration(d, b))] {
                        aggregates[edge_index(0, d, b, is_duration)] += value;
                        aggregates[edge_index(group, d, b, is_duration)] += value;
                    }
                }
            }
        }

        Some(UserFeatures {
            endemic_flag: self.is_resident(user.as_str()),
            exposed_flag,
            mobility_diameter_all_km: mobility_diameter(self.activity.used(user.as_str(), None), self.registry),
            mobility_diameter_weeknight_km: mobility_diameter(
                self.activity.used(user.as_str(), Some(TimeBucket::Weeknight)),
                self.registry,
            ),
            degree,
            endemic_neighbor_count: endemic_neighbors,
            vulnerable_flag: endemic_neighbors > 0,
            edge_aggregates: aggregates,
            top_antennas_all: top_all,
            top_antennas_weeknight: top_night,
            top_all_endemic,
            top_weeknight_endemic,
        })
    }

    /// Features for every client with records in the window, sorted by user.
    pub fn all_features(&self) -> Vec<(UserId, UserFeatures)> {
        let mut users: Vec<&UserId> = self.activity.users().collect();
        users.sort();
        users
            .par_iter()
            .filter_map(|u| self.features(u).map(|f| ((*u).clone(), f)))
            .collect()
    }
}

/// Features of one user from raw window records.
pub fn build_features(
    user: &UserId,
    records: &[CallRecord],
    graph: &CommGraph,
    homes: &HomeAssignment,
    zone: &EndemicZone,
    registry: &AntennaRegistry,
) -> Option<UserFeatures> {
    FeatureContext::new(records, graph, homes, zone, registry).features(user)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationLabel {
    pub user: UserId,
    pub lived_in_endemic_t0: bool,
}

/// Labels every user active in T0 by whether their T0 home is in the zone.
pub fn build_labels(t0_records: &[CallRecord], zone: &EndemicZone) -> Vec<MigrationLabel> {
    infer_homes(t0_records, None)
        .iter()
        .map(|(u, h)| MigrationLabel {
            user: u.clone(),
            lived_in_endemic_t0: zone.contains(h.antenna.as_str()),
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub rows: usize,
    pub positives: usize,
    pub features_without_label: usize,
    pub labels_without_features: usize,
}

/// Joined training table: one row per user with both features and a label.
pub struct FeatureTable {
    pub users: Vec<UserId>,
    pub features: Vec<UserFeatures>,
    pub labels: Vec<bool>,
    pub report: JoinReport,
}

pub fn join(features: Vec<(UserId, UserFeatures)>, labels: &[MigrationLabel]) -> FeatureTable {
    let label_of: HashMap<&UserId, bool> = labels.iter().map(|l| (&l.user, l.lived_in_endemic_t0)).collect();
    let featured: BTreeSet<&UserId> = features.iter().map(|(u, _)| u).collect();
    let labels_without_features = labels.iter().filter(|l| !featured.contains(&l.user)).count();
    let mut table = FeatureTable {
        users: Vec::new(),
        features: Vec::new(),
        labels: Vec::new(),
        report: JoinReport {
            labels_without_features,
            ..JoinReport::default()
        },
    };
    for (u, f) in features {
        match label_of.get(&u) {
            Some(&label) => {
                table.users.push(u);
                table.features.push(f);
                table.labels.push(label);
            }
            None => table.report.features_without_label += 1,
        }
    }
    table.report.rows = table.users.len();
    table.report.positives = table.labels.iter().filter(|&&l| l).count();
    table
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,");
        out.push_str(&feature_names().join(","));
        out.push_str(",label\n");
        for ((u, f), l) in self.users.iter().zip(&self.features).zip(&self.labels) {
            out.push_str(u.as_str());
            out.push(',');
            out.push_str(&f.csv_fields().join(","));
            out.push_str(if *l { ",1\n" } else { ",0\n" });
        }
        out
    }

    pub fn to_dataset<T: Scalar>(&self) -> Result<Dataset<T>> {
        Dataset::new(
            feature_names(),
            self.users.iter().map(|u| u.to_string()).collect(),
            self.features.iter().map(|f| f.to_vector()).collect(),
            self.labels.clone(),
        )
    }
}

/// Sidecar manifest written next to the dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub columns: Vec<String>,
    pub count_columns: Vec<String>,
    pub window: StudyWindow,
    pub zone: String,
    pub zone_sha256: String,
    pub join: JoinReport,
    pub records_dropped_outside_windows: usize,
    pub inputs: std::collections::BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn check_columns(&self, header: &[String]) -> Result<()> {
        if self.columns != header {
            return Err(Error::Dataset("dataset header does not match its manifest".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::model::parse_timestamp;

    fn registry() -> AntennaRegistry {
        AntennaRegistry::from_csv_reader("antenna_id,lat,lon\nA,0,0\nB,0,1\nC,0,2\nZ,0,-1\n".as_bytes()).unwrap()
    }

    fn call(caller: &str, callee: &str, ts: &str, antenna: &str, dir: Direction, dur: u64) -> CallRecord {
        CallRecord {
            caller: caller.into(),
            callee: callee.into(),
            timestamp: parse_timestamp(ts).unwrap(),
            direction: dir,
            antenna: antenna.into(),
            duration_s: dur,
        }
    }

    #[test]
    fn schema_size() {
        assert_eq!(feature_names().len(), 63);
        assert_eq!(N_FEATURES, 63);
        assert_eq!(count_columns().len(), 20);
        let names = feature_names();
        assert_eq!(names[27], "all_in_weekday_calls");
        assert_eq!(names[62], "nonendemic_out_weekend_duration_s");
    }

    #[test]
    fn split_boundaries() {
        let w = StudyWindow::reference();
        let at = |t| call("u", "v", t, "A", Direction::Outgoing, 0);
        let recs = vec![
            at("2014-01-01T00:00:00Z"),
            at("2015-08-01T00:00:00Z"),
            at("2016-01-01T00:00:00Z"),
            at("2013-12-31T23:59:59Z"),
        ];
        let s = split_periods(&recs, &w);
        assert_eq!((s.t0.len(), s.t1.len(), s.dropped), (1, 1, 2));
        assert_eq!(s.t0[0], recs[0]);
    }

    #[test]
    fn top_antennas_tie_break() {
        let mut recs = Vec::new();
        for (a, n) in [("B", 3), ("A", 3), ("C", 1)] {
            for _ in 0..n {
                recs.push(call("u", "v", "2015-08-04T10:00:00Z", a, Direction::Outgoing, 0));
            }
        }
        let ids = |v: Vec<AntennaId>| v.iter().map(|a| a.to_string()).collect::<Vec<_>>();
        assert_eq!(ids(top_antennas("u", &recs, 2, None)), ["A", "B"]);
        assert_eq!(ids(top_antennas("u", &recs[..1], 10, None)), ["B"]);
        assert!(top_antennas("u", &recs, 10, Some(TimeBucket::Weeknight)).is_empty());
    }

    #[test]
    fn diameter_cases() {
        let reg = registry();
        assert_eq!(mobility_diameter::<f64>([&AntennaId::new("A")], &reg), 0.0);
        let d: f64 = mobility_diameter([&AntennaId::new("A"), &AntennaId::new("B")], &reg);
        assert!((d - 111.195).abs() < 0.001);
        let d: f64 = mobility_diameter(
            [
                &AntennaId::new("A"),
                &AntennaId::new("B"),
                &AntennaId::new("Z"),
                &AntennaId::new("A"),
            ],
            &reg,
        );
        assert!((d - 2.0 * 111.19492664455873).abs() < 1e-9);
    }

    #[test]
    fn isolated_user() {
        let reg = registry();
        let zone = EndemicZone::new("z", [AntennaId::new("Z")], &reg).unwrap();
        let recs = vec![call("u", "v", "2015-08-04T10:00:00Z", "A", Direction::Outgoing, 5)];
        let homes = infer_homes(&recs, None);
        // graph built from other records: u has no edges
        let g = CommGraph::new();
        let f = build_features(&UserId::new("u"), &recs, &g, &homes, &zone, &reg).unwrap();
        assert_eq!(f.degree, 0);
        assert!(!f.vulnerable_flag);
        assert!(f.edge_aggregates.iter().all(|&x| x == 0));
        assert!(build_features(&UserId::new("nobody"), &recs, &g, &homes, &zone, &reg).is_none());
    }

    #[test]
    fn single_endemic_neighbor() {
        let reg = registry();
        let zone = EndemicZone::new("z", [AntennaId::new("Z")], &reg).unwrap();
        let recs = vec![
            call("u", "r", "2015-08-04T10:00:00Z", "A", Direction::Outgoing, 60),
            call("u", "r", "2015-08-05T11:00:00Z", "A", Direction::Outgoing, 60),
            // r lives in the zone; this call goes to a third party
            call("r", "x", "2015-08-05T22:00:00Z", "Z", Direction::Incoming, 1),
        ];
        let homes = infer_homes(&recs, None);
        let g = build_graph(&recs);
        let f = build_features(&UserId::new("u"), &recs, &g, &homes, &zone, &reg).unwrap();
        assert_eq!(f.endemic_neighbor_count, 1);
        assert_eq!(f.degree, 1);
        assert!(f.vulnerable_flag);
        assert!(!f.endemic_flag);
        let (d, b) = (Direction::Outgoing, TimeBucket::Weekday);
        for (group, calls, dur) in [(0, 2, 120), (1, 2, 120), (2, 0, 0)] {
            assert_eq!(f.edge_aggregates[edge_index(group, d, b, false)], calls);
            assert_eq!(f.edge_aggregates[edge_index(group, d, b, true)], dur);
        }
        assert_eq!(f.edge_aggregates.iter().sum::<u64>(), 2 * 2 + 2 * 120);
        let r = build_features(&UserId::new("r"), &recs, &g, &homes, &zone, &reg).unwrap();
        assert!(r.endemic_flag && r.exposed_flag);
        assert_eq!(
            r.edge_aggregates[edge_index(0, Direction::Incoming, TimeBucket::Weekday, false)],
            2
        );
    }

    #[test]
    fn labels_from_t0_homes() {
        let reg = registry();
        let zone = EndemicZone::new("z", [AntennaId::new("Z")], &reg).unwrap();
        let recs = vec![
            call("e", "x", "2014-03-04T22:00:00Z", "Z", Direction::Outgoing, 1),
            call("n", "x", "2014-03-04T22:00:00Z", "A", Direction::Outgoing, 1),
        ];
        let labels = build_labels(&recs, &zone);
        assert_eq!(labels.len(), 2);
        assert!(
            labels
                .iter()
                .find(|l| l.user.as_str() == "e")
                .unwrap()
                .lived_in_endemic_t0
        );
        assert!(
            !labels
                .iter()
                .find(|l| l.user.as_str() == "n")
                .unwrap()
                .lived_in_endemic_t0
        );
    }

    #[test]
    fn join_counts_exclusions() {
        let reg = registry();
        let zone = EndemicZone::new("z", [AntennaId::new("Z")], &reg).unwrap();
        let recs = vec![
            call("a", "b", "2015-08-04T10:00:00Z", "A", Direction::Outgoing, 5),
            call("c", "b", "2015-08-04T10:00:00Z", "A", Direction::Outgoing, 5),
        ];
        let homes = infer_homes(&recs, None);
        let g = build_graph(&recs);
        let ctx = FeatureContext::new(&recs, &g, &homes, &zone, &reg);
        let feats = ctx.all_features();
        assert_eq!(feats.len(), 2);
        let labels = vec![
            MigrationLabel {
                user: "a".into(),
                lived_in_endemic_t0: true,
            },
            MigrationLabel {
                user: "z".into(),
                lived_in_endemic_t0: false,
            },
        ];
        let table = join(feats, &labels);
        assert_eq!(table.report.rows, 1);
        assert_eq!(table.report.features_without_label, 1);
        assert_eq!(table.report.labels_without_features, 1);
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("user_id,endemic,exposed"));
        assert!(lines.next().unwrap().starts_with("a,0,0,0,1,0,0.000000,0.000000,"));
    }
}
