//! Vulnerable-user tagging, per-antenna risk indicators, display filters and
//! map export (GeoJSON and CSV).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::homes::{residents_of, HomeAssignment};
use crate::model::{AntennaId, AntennaRegistry, CallRecord, Direction, EndemicZone, UserId};
use crate::scalar::Scalar;
use crate::Merge;

/// Indicators for one antenna.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntennaStats {
    pub antenna_id: AntennaId,
    pub lat: f64,
    pub lon: f64,
    /// N_a: clients whose home is this antenna.
    pub residents: u64,
    /// V_a: residents tagged vulnerable.
    pub vulnerable: u64,
    /// C_a: outgoing records served by this antenna.
    pub calls_out: u64,
    /// VC_a: outgoing records whose callee is a zone resident.
    pub calls_to_endemic: u64,
}

impl AntennaStats {
    /// V_a / N_a, or zero for an empty antenna.
    pub fn frac_vulnerable<T: Scalar>(&self) -> T {
        if self.residents == 0 {
            T::zero()
        } else {
            T::from_count(self.vulnerable as usize) / T::from_count(self.residents as usize)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tagging {
    pub vulnerable: BTreeSet<UserId>,
    /// Residents that are not nodes of the graph (ignored).
    pub unknown_residents: usize,
}

/// Tags every graph neighbor of a resident as vulnerable.
pub fn tag_vulnerable(g: &CommGraph, residents: &BTreeSet<UserId>) -> Tagging {
    let mut tagging = Tagging::default();
    for r in residents {
        if !g.contains_node(r.as_str()) {
            tagging.unknown_residents += 1;
            continue;
        }
        tagging.vulnerable.extend(g.neighbor_iter(r.as_str()).cloned());
    }
    tagging
}

/// Outgoing call volume per antenna; shards merge by addition.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CallTally {
    per_antenna: HashMap<AntennaId, (u64, u64)>,
}

impl CallTally {
    pub fn from_records<'a, I>(records: I, residents: &BTreeSet<UserId>) -> Self
    where
        I: IntoIterator<Item = &'a CallRecord>,
    {
        let mut tally = CallTally::default();
        for rec in records {
            if rec.direction != Direction::Outgoing {
                continue;
            }
            let slot = tally.per_antenna.entry(rec.antenna.clone()).or_default();
            slot.0 += 1;
            if residents.contains(&rec.callee) {
                slot.1 += 1;
            }
        }
        tally
    }

    pub fn get(&self, antenna: &str) -> (u64, u64) {
        self.per_antenna.get(antenna).copied().unwrap_or_default()
    }
}

impl Merge for CallTally {
    fn merge(&mut self, other: Self) {
        for (k, (c, vc)) in other.per_antenna {
            let slot = self.per_antenna.entry(k).or_default();
            slot.0 += c;
            slot.1 += vc;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOptions {
    /// Also count zone residents as vulnerable, regardless of their ties.
    pub count_zone_residents_as_vulnerable: bool,
}

/// Per-antenna indicators over every registry antenna, zeros included.
pub fn aggregate(
    registry: &AntennaRegistry,
    homes: &HomeAssignment,
    g: &CommGraph,
    records: &[CallRecord],
    zone: &EndemicZone,
    options: AggregateOptions,
) -> Vec<AntennaStats> {
    let residents = residents_of(homes, zone);
    let mut vulnerable = tag_vulnerable(g, &residents).vulnerable;
    if options.count_zone_residents_as_vulnerable {
        vulnerable.extend(residents.iter().cloned());
    }
    let tally = CallTally::from_records(records, &residents);
    aggregate_from_parts(registry, homes, &vulnerable, &tally)
}

pub fn aggregate_from_parts(
    registry: &AntennaRegistry,
    homes: &HomeAssignment,
    vulnerable: &BTreeSet<UserId>,
    tally: &CallTally,
) -> Vec<AntennaStats> {
    let mut population: HashMap<&str, (u64, u64)> = HashMap::new();
    for (user, home) in homes.iter() {
        let slot = population.entry(home.antenna.as_str()).or_default();
        slot.0 += 1;
        if vulnerable.contains(user) {
            slot.1 += 1;
        }
    }
    registry
        .iter()
        .map(|a| {
            let (residents, vuln) = population.get(a.id.as_str()).copied().unwrap_or_default();
            let (calls_out, calls_to_endemic) = tally.get(a.id.as_str());
            AntennaStats {
                antenna_id: a.id.clone(),
                lat: a.latitude,
                lon: a.longitude,
                residents,
                vulnerable: vuln,
                calls_out,
                calls_to_endemic,
            }
        })
        .collect()
}

/// Keeps antennas with V_a/N_a > beta and N_a > min_pop (both strict).
pub fn filter_map<T: Scalar>(stats: &[AntennaStats], beta: T, min_pop: u64) -> Vec<AntennaStats> {
    stats
        .iter()
        .filter(|s| s.residents > 0 && s.residents > min_pop && s.frac_vulnerable::<T>() > beta)
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub beta: f64,
    pub min_pop: u64,
    pub color_max: f64,
    pub radius_k: f64,
    pub count_zone_residents_as_vulnerable: bool,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            beta: 0.01,
            min_pop: 50,
            color_max: 0.5,
            radius_k: 1.0,
            count_zone_residents_as_vulnerable: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskMap {
    pub stats: Vec<AntennaStats>,
    pub params: RiskParams,
    pub zone: String,
    pub filtered: bool,
    /// Input name → SHA-256 digest, plus any other provenance strings.
    pub metadata: BTreeMap<String, String>,
}

fn fixed6(v: f64) -> Box<RawValue> {
    let v = if v == 0.0 { 0.0 } else { v };
    RawValue::from_string(format!("{v:.6}")).expect("formatted float is valid json")
}

/// Linear yellow → red ramp saturating at `color_max`.
pub fn color_for(frac: f64, color_max: f64) -> String {
    let t = if color_max > 0.0 {
        (frac / color_max).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let green = (255.0 * (1.0 - t)).round() as u8;
    format!("#FF{green:02X}00")
}

#[derive(Serialize)]
struct FeatureCollection<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    parameters: GeoParams<'a>,
    features: Vec<Feature>,
}

#[derive(Serialize)]
struct GeoParams<'a> {
    beta: f64,
    min_pop: u64,
    color_max: f64,
    radius_k: f64,
    count_zone_residents_as_vulnerable: bool,
    zone: &'a str,
    filtered: bool,
    metadata: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: &'static str,
    geometry: Geometry,
    properties: Properties,
}

#[derive(Serialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: &'static str,
    coordinates: [Box<RawValue>; 2],
}

#[derive(Serialize)]
struct Properties {
    antenna_id: String,
    residents: u64,
    vulnerable: u64,
    frac_vulnerable: Box<RawValue>,
    calls_out: u64,
    calls_to_endemic: u64,
    marker_radius: Box<RawValue>,
    color: String,
}

impl RiskMap {
    pub fn to_geojson(&self) -> String {
        let features = self
            .stats
            .iter()
            .map(|s| {
                let frac = s.frac_vulnerable::<f64>();
                Feature {
                    kind: "Feature",
                    geometry: Geometry {
                        kind: "Point",
                        coordinates: [fixed6(s.lon), fixed6(s.lat)],
                    },
                    properties: Properties {
                        antenna_id: s.antenna_id.to_string(),
                        residents: s.residents,
                        vulnerable: s.vulnerable,
                        frac_vulnerable: fixed6(frac),
                        calls_out: s.calls_out,
                        calls_to_endemic: s.calls_to_endemic,
                        marker_radius: fixed6(self.params.radius_k * (s.residents as f64).sqrt()),
                        color: color_for(frac, self.params.color_max),
                    },
                }
            })
            .collect();
        let doc = FeatureCollection {
            kind: "FeatureCollection",
            parameters: GeoParams {
                beta: self.params.beta,
                min_pop: self.params.min_pop,
                color_max: self.params.color_max,
                radius_k: self.params.radius_k,
                count_zone_residents_as_vulnerable: self.params.count_zone_residents_as_vulnerable,
                zone: &self.zone,
                filtered: self.filtered,
                metadata: &self.metadata,
            },
            features,
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("geojson serializes");
        out.push('\n');
        out
    }

    /// Reads back a document produced by [`RiskMap::to_geojson`].
    pub fn from_geojson(text: &str) -> Result<RiskMap> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let bad = |what: &str| Error::Config(format!("geojson: missing or invalid {what}"));
        let params_v = doc.get("parameters").ok_or_else(|| bad("parameters"))?;
        let params = RiskParams {
            beta: params_v["beta"].as_f64().ok_or_else(|| bad("beta"))?,
            min_pop: params_v["min_pop"].as_u64().ok_or_else(|| bad("min_pop"))?,
            color_max: params_v["color_max"].as_f64().ok_or_else(|| bad("color_max"))?,
            radius_k: params_v["radius_k"].as_f64().ok_or_else(|| bad("radius_k"))?,
            count_zone_residents_as_vulnerable: params_v["count_zone_residents_as_vulnerable"]
                .as_bool()
                .ok_or_else(|| bad("count_zone_residents_as_vulnerable"))?,
        };
        let metadata = serde_json::from_value(params_v["metadata"].clone())?;
        let features = doc["features"].as_array().ok_or_else(|| bad("features"))?;
        let mut stats = Vec::with_capacity(features.len());
        for f in features {
            let p = &f["properties"];
            let coords = &f["geometry"]["coordinates"];
            let count = |key: &str| p[key].as_u64().ok_or_else(|| bad(key));
            stats.push(AntennaStats {
                antenna_id: AntennaId::new(p["antenna_id"].as_str().ok_or_else(|| bad("antenna_id"))?),
                lon: coords[0].as_f64().ok_or_else(|| bad("coordinates"))?,
                lat: coords[1].as_f64().ok_or_else(|| bad("coordinates"))?,
                residents: count("residents")?,
                vulnerable: count("vulnerable")?,
                calls_out: count("calls_out")?,
                calls_to_endemic: count("calls_to_endemic")?,
            });
        }
        Ok(RiskMap {
            stats,
            params,
            zone: params_v["zone"].as_str().ok_or_else(|| bad("zone"))?.to_string(),
            filtered: params_v["filtered"].as_bool().ok_or_else(|| bad("filtered"))?,
            metadata,
        })
    }

    /// `antenna_id,lat,lon,residents,vulnerable,frac_vulnerable,calls_out,calls_to_endemic`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("antenna_id,lat,lon,residents,vulnerable,frac_vulnerable,calls_out,calls_to_endemic\n");
        for s in &self.stats {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.antenna_id,
                fixed6(s.lat).get(),
                fixed6(s.lon).get(),
                s.residents,
                s.vulnerable,
                fixed6(s.frac_vulnerable::<f64>()).get(),
                s.calls_out,
                s.calls_to_endemic
            ));
        }
        out
    }
}

pub fn export_geojson(map: &RiskMap) -> String {
    map.to_geojson()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::homes::infer_homes;
    use crate::model::parse_timestamp;

    fn stats(id: &str, n: u64, v: u64) -> AntennaStats {
        AntennaStats {
            antenna_id: id.into(),
            lat: -30.0,
            lon: -60.0,
            residents: n,
            vulnerable: v,
            calls_out: 0,
            calls_to_endemic: 0,
        }
    }

    fn call(caller: &str, callee: &str, antenna: &str) -> CallRecord {
        CallRecord {
            caller: caller.into(),
            callee: callee.into(),
            // Tuesday night
            timestamp: parse_timestamp("2015-08-04T22:00:00Z").unwrap(),
            direction: Direction::Outgoing,
            antenna: antenna.into(),
            duration_s: 60,
        }
    }

    #[test]
    fn path_graph_tagging() {
        let g = build_graph(&[call("u1", "u2", "A"), call("u2", "u3", "A")]);
        let t = tag_vulnerable(&g, &BTreeSet::from([UserId::new("u2")]));
        assert_eq!(t.vulnerable, BTreeSet::from([UserId::new("u1"), UserId::new("u3")]));
        assert!(tag_vulnerable(&g, &BTreeSet::new()).vulnerable.is_empty());
        let t = tag_vulnerable(&g, &BTreeSet::from([UserId::new("ghost")]));
        assert_eq!(t.unknown_residents, 1);
    }

    #[test]
    fn no_records_zeroes_every_antenna() {
        let reg = AntennaRegistry::from_csv_reader("antenna_id,lat,lon\nA,0,0\nB,1,1\n".as_bytes()).unwrap();
        let zone = EndemicZone::new("z", [AntennaId::new("A")], &reg).unwrap();
        let out = aggregate(
            &reg,
            &HomeAssignment::default(),
            &CommGraph::new(),
            &[],
            &zone,
            Default::default(),
        );
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| s.residents == 0 && s.calls_out == 0));
    }

    #[test]
    fn zone_residents_flag() {
        let reg = AntennaRegistry::from_csv_reader("antenna_id,lat,lon\nA,0,0\nB,1,1\n".as_bytes()).unwrap();
        let zone = EndemicZone::new("z", [AntennaId::new("A")], &reg).unwrap();
        // u1 lives in the zone and only talks to u2 outside it.
        let recs = [call("u1", "u2", "A"), call("u2", "u1", "B")];
        let homes = infer_homes(&recs, None);
        let g = build_graph(&recs);
        let literal = aggregate(&reg, &homes, &g, &recs, &zone, Default::default());
        assert_eq!((literal[0].residents, literal[0].vulnerable), (1, 0));
        assert_eq!((literal[1].residents, literal[1].vulnerable), (1, 1));
        let opts = AggregateOptions {
            count_zone_residents_as_vulnerable: true,
        };
        let broad = aggregate(&reg, &homes, &g, &recs, &zone, opts);
        assert_eq!(broad[0].vulnerable, 1);
    }

    #[test]
    fn strict_thresholds() {
        let s = vec![
            stats("A", 100, 25),
            stats("B", 51, 1),
            stats("C", 50, 50),
            stats("D", 0, 0),
        ];
        let kept: Vec<_> = filter_map(&s, 0.25, 50)
            .iter()
            .map(|s| s.antenna_id.to_string())
            .collect();
        assert!(kept.is_empty());
        let kept: Vec<_> = filter_map(&s, 0.0, 50)
            .iter()
            .map(|s| s.antenna_id.to_string())
            .collect();
        assert_eq!(kept, ["A", "B"]);
        let kept: Vec<_> = filter_map(&s, 0.0, 0)
            .iter()
            .map(|s| s.antenna_id.to_string())
            .collect();
        assert_eq!(kept, ["A", "B", "C"]);
    }

    #[test]
    fn geojson_single_antenna() {
        let map = RiskMap {
            stats: vec![stats("A", 100, 25)],
            params: RiskParams::default(),
            zone: "chaco".into(),
            filtered: false,
            metadata: BTreeMap::new(),
        };
        let text = map.to_geojson();
        assert!(text.contains("\"frac_vulnerable\": 0.250000"), "{text}");
        assert!(text.contains("\"marker_radius\": 10.000000"));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["features"][0]["properties"]["marker_radius"].as_f64(), Some(10.0));
        assert_eq!(v["features"][0]["properties"]["color"], "#FF8000");
        assert_eq!(RiskMap::from_geojson(&text).unwrap(), map);
    }

    #[test]
    fn geojson_empty_map_keeps_parameters() {
        let map = RiskMap {
            stats: vec![],
            params: RiskParams {
                beta: 0.15,
                ..RiskParams::default()
            },
            zone: "chaco".into(),
            filtered: true,
            metadata: BTreeMap::from([("records".to_string(), "abc".to_string())]),
        };
        let v: serde_json::Value = serde_json::from_str(&map.to_geojson()).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        assert_eq!(v["features"].as_array().unwrap().len(), 0);
        assert_eq!(v["parameters"]["beta"], 0.15);
        assert_eq!(v["parameters"]["min_pop"], 50);
        assert_eq!(v["parameters"]["metadata"]["records"], "abc");
    }

    #[test]
    fn color_ramp_endpoints() {
        assert_eq!(color_for(0.0, 0.5), "#FFFF00");
        assert_eq!(color_for(0.5, 0.5), "#FF0000");
        assert_eq!(color_for(0.9, 0.5), "#FF0000");
    }

    #[test]
    fn csv_format() {
        let map = RiskMap {
            stats: vec![stats("A", 3, 1)],
            params: RiskParams::default(),
            zone: "z".into(),
            filtered: false,
            metadata: BTreeMap::new(),
        };
        assert_eq!(
            map.to_csv(),
            "antenna_id,lat,lon,residents,vulnerable,frac_vulnerable,calls_out,calls_to_endemic\n\
             A,-30.000000,-60.000000,3,1,0.333333,0,0\n"
        );
    }
}
