mod common;

use std::collections::{BTreeSet, HashMap};

use cdr_risk::features::{build_labels, edge_index, join, mobility_diameter, top_antennas, FeatureContext, N_FEATURES};
use cdr_risk::model::geo::EARTH_RADIUS_KM;
use cdr_risk::{
    build_graph, infer_homes, Antenna, AntennaId, AntennaRegistry, CallRecord, Direction, EndemicZone, TimeBucket,
    UserId,
};
use proptest::prelude::*;

fn zone(mask: u8) -> EndemicZone {
    let members: Vec<AntennaId> = common::ANTENNAS
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, a)| (*a).into())
        .collect();
    EndemicZone::new("z", members, &common::registry()).unwrap()
}

fn features_of(recs: &[CallRecord], z: &EndemicZone) -> Vec<(UserId, cdr_risk::features::UserFeatures)> {
    let reg = common::registry();
    let g = build_graph(recs);
    let homes = infer_homes(recs, None);
    FeatureContext::new(recs, &g, &homes, z, &reg).all_features()
}

/// Great-circle distance from the chord between unit vectors.
fn chord_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let v = |(lat, lon): (f64, f64)| {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (p, q) = (v(a), v(b));
    let c = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
    2.0 * EARTH_RADIUS_KM * (c / 2.0).min(1.0).asin()
}

proptest! {
    #[test]
    fn features_ignore_record_order(recs in common::arb_records(10, 120), mask in 1u8..64) {
        let z = zone(mask);
        let mut rev = recs.clone();
        rev.reverse();
        prop_assert_eq!(features_of(&recs, &z), features_of(&rev, &z));
    }

    #[test]
    fn per_user_invariants(recs in common::arb_records(10, 150), mask in 1u8..64) {
        let z = zone(mask);
        let homes = infer_homes(&recs, None);
        for (u, f) in features_of(&recs, &z) {
            prop_assert!(f.mobility_diameter_weeknight_km <= f.mobility_diameter_all_km);
            prop_assert_eq!(f.to_vector::<f64>().len(), N_FEATURES);

            let neighbors: BTreeSet<&UserId> = recs
                .iter()
                .filter_map(|r| if r.caller == u { Some(&r.callee) } else if r.callee == u { Some(&r.caller) } else { None })
                .collect();
            let resident = |v: &UserId| homes.antenna_of(v.as_str()).is_some_and(|a| z.contains(a.as_str()));
            let endemic = neighbors.iter().filter(|v| resident(v)).count() as u64;
            prop_assert_eq!(f.degree, neighbors.len() as u64);
            prop_assert_eq!(f.endemic_neighbor_count, endemic);
            prop_assert_eq!(f.vulnerable_flag, endemic > 0);

            let incident: Vec<&CallRecord> = recs.iter().filter(|r| r.caller == u || r.callee == u).collect();
            let total: u64 = Direction::ALL
                .iter()
                .flat_map(|&d| TimeBucket::ALL.map(move |b| (d, b)))
                .map(|(d, b)| f.edge_aggregates[edge_index(0, d, b, false)])
                .sum();
            prop_assert_eq!(total, incident.len() as u64);
            for i in 0..12 {
                prop_assert_eq!(f.edge_aggregates[i], f.edge_aggregates[12 + i] + f.edge_aggregates[24 + i]);
            }
        }
    }

    #[test]
    fn exposed_flag_grows_with_zone(recs in common::arb_records(10, 120), m1 in 1u8..64, extra in 0u8..64) {
        // Homes are fixed by the records, so enlarging the zone only adds endemic antennas.
        let small = features_of(&recs, &zone(m1));
        let large = features_of(&recs, &zone(m1 | extra));
        for ((_, a), (_, b)) in small.iter().zip(&large) {
            prop_assert!(!a.exposed_flag || b.exposed_flag);
        }
    }

    #[test]
    fn top_antennas_match_sort(recs in common::arb_records(4, 200), k in 1usize..8) {
        for u in 0..4 {
            let user = format!("u{u}");
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for r in recs.iter().filter(|r| r.caller.as_str() == user) {
                *counts.entry(r.antenna.as_str()).or_default() += 1;
            }
            let mut brute: Vec<(&str, usize)> = counts.into_iter().collect();
            brute.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let expected: Vec<&str> = brute.into_iter().take(k).map(|(a, _)| a).collect();
            let got = top_antennas(&user, &recs, k, None);
            prop_assert_eq!(got.iter().map(|a| a.as_str()).collect::<Vec<_>>(), expected);
        }
    }

    #[test]
    fn diameter_matches_chord_oracle(points in prop::collection::vec((-80.0f64..80.0, -179.0f64..179.0), 1..10)) {
        let reg = AntennaRegistry::new(points.iter().enumerate().map(|(i, &(la, lo))| Antenna::new(format!("P{i}"), la, lo).unwrap())).unwrap();
        let ids: Vec<AntennaId> = reg.iter().map(|a| a.id.clone()).collect();
        let got: f64 = mobility_diameter(&ids, &reg);
        let mut best: f64 = 0.0;
        for a in &points {
            for b in &points {
                best = best.max(chord_km(*a, *b));
            }
        }
        prop_assert!((got - best).abs() <= 1e-6 * best.max(1.0), "{} vs {}", got, best);
    }

    #[test]
    fn join_keeps_exactly_labelled_users(t0 in common::arb_records(12, 80), t1 in common::arb_records(12, 80), mask in 1u8..64) {
        let z = zone(mask);
        let feats = features_of(&t1, &z);
        let labels = build_labels(&t0, &z);
        let n_feat = feats.len();
        let table = join(feats.clone(), &labels);
        let labelled: BTreeSet<&UserId> = labels.iter().map(|l| &l.user).collect();
        let featured: BTreeSet<&UserId> = feats.iter().map(|(u, _)| u).collect();
        let both: Vec<&UserId> = featured.intersection(&labelled).copied().collect();
        prop_assert_eq!(table.users.iter().collect::<Vec<_>>(), both);
        prop_assert_eq!(table.report.features_without_label, n_feat - table.users.len());
        prop_assert_eq!(table.report.labels_without_features, labels.len() - table.users.len());
        prop_assert_eq!(table.features.len(), table.labels.len());
    }
}
