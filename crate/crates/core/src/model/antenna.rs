use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geo::LatLon;
use super::AntennaId;
use crate::error::{Error, Result};

/// Cell tower with WGS84 coordinates in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Antenna {
    pub id: AntennaId,
    pub latitude: f64,
    pub longitude: f64,
}

impl Antenna {
    pub fn new(id: impl AsRef<str>, latitude: f64, longitude: f64) -> Result<Self> {
        let id = AntennaId::new(id);
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::Registry(format!(
                "antenna {id} has out-of-range coordinates ({latitude}, {longitude})"
            )));
        }
        Ok(Antenna {
            id,
            latitude,
            longitude,
        })
    }

    pub fn position(&self) -> LatLon<f64> {
        LatLon::new(self.latitude, self.longitude)
    }
}

#[derive(Deserialize)]
struct AntennaRow {
    antenna_id: String,
    lat: f64,
    lon: f64,
}

/// Lookup table of all known antennas, keyed and iterated by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AntennaRegistry {
    antennas: BTreeMap<AntennaId, Antenna>,
}

impl AntennaRegistry {
    pub fn new(antennas: impl IntoIterator<Item = Antenna>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for a in antennas {
            let id = a.id.clone();
            if map.insert(id.clone(), a).is_some() {
                return Err(Error::Registry(format!("duplicate antenna id {id}")));
            }
        }
        Ok(AntennaRegistry { antennas: map })
    }

    /// Reads the `antenna_id,lat,lon` CSV format.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["antenna_id", "lat", "lon"] {
            return Err(Error::Registry(format!(
                "expected header antenna_id,lat,lon, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut antennas = Vec::new();
        for row in rdr.deserialize() {
            let row: AntennaRow = row?;
            antennas.push(Antenna::new(row.antenna_id, row.lat, row.lon)?);
        }
        AntennaRegistry::new(antennas)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        AntennaRegistry::from_csv_reader(file)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("antenna_id,lat,lon\n");
        for a in self.antennas.values() {
            out.push_str(&format!("{},{:.6},{:.6}\n", a.id, a.latitude, a.longitude));
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<&Antenna> {
        self.antennas.get(id)
    }

    /// Returns the registry's own interned id, so callers can share it.
    pub fn resolve(&self, id: &str) -> Option<&AntennaId> {
        self.antennas.get_key_value(id).map(|(k, _)| k)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.antennas.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.antennas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antennas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Antenna> {
        self.antennas.values()
    }
}

/// Set of antennas covering the endemic region.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndemicZone {
    pub name: String,
    members: BTreeSet<AntennaId>,
}

impl EndemicZone {
    pub fn new(
        name: impl Into<String>,
        members: impl IntoIterator<Item = AntennaId>,
        registry: &AntennaRegistry,
    ) -> Result<Self> {
        let members: BTreeSet<AntennaId> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::Zone("zone has no member antennas".into()));
        }
        if let Some(unknown) = members.iter().find(|id| !registry.contains(id.as_str())) {
            return Err(Error::Zone(format!("member antenna {unknown} is not in the registry")));
        }
        Ok(EndemicZone {
            name: name.into(),
            members,
        })
    }

    /// Parses either a JSON array of ids or a CSV with an `antenna_id` header.
    pub fn parse(name: impl Into<String>, text: &str, registry: &AntennaRegistry) -> Result<Self> {
        let trimmed = text.trim_start();
        let ids: Vec<String> = if trimmed.starts_with('[') {
            serde_json::from_str(trimmed)?
        } else {
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            if rdr.headers()?.iter().collect::<Vec<_>>() != ["antenna_id"] {
                return Err(Error::Zone("expected a single antenna_id header".into()));
            }
            rdr.records()
                .map(|r| r.map(|rec| rec[0].to_string()))
                .collect::<std::result::Result<_, _>>()?
        };
        EndemicZone::new(name, ids.iter().map(AntennaId::new), registry)
    }

    pub fn from_path(path: &Path, registry: &AntennaRegistry) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "zone".into());
        EndemicZone::parse(name, &text, registry)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("antenna_id\n");
        for id in &self.members {
            out.push_str(id.as_str());
            out.push('\n');
        }
        out
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.contains(id)
    }

    pub fn members(&self) -> &BTreeSet<AntennaId> {
        &self.members
    }

    /// SHA-256 over the sorted member ids, one per line.
    pub fn digest(&self) -> String {
        crate::provenance::sha256_hex(self.to_csv_string().as_bytes())
    }

    pub fn union(&self, other: &EndemicZone) -> EndemicZone {
        EndemicZone {
            name: format!("{}+{}", self.name, other.name),
            members: self.members.union(&other.members).cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> AntennaRegistry {
        AntennaRegistry::from_csv_reader("antenna_id,lat,lon\nA1,-27.0,-60.0\nA2,-34.6,-58.4\n".as_bytes()).unwrap()
    }

    #[test]
    fn registry_rejects_duplicates_and_bad_coords() {
        let dup = "antenna_id,lat,lon\nA1,0,0\nA1,1,1\n";
        assert!(AntennaRegistry::from_csv_reader(dup.as_bytes()).is_err());
        let bad = "antenna_id,lat,lon\nA1,91,0\n";
        assert!(AntennaRegistry::from_csv_reader(bad.as_bytes()).is_err());
        let header = "id,lat,lon\nA1,0,0\n";
        assert!(AntennaRegistry::from_csv_reader(header.as_bytes()).is_err());
    }

    #[test]
    fn registry_csv_round_trip() {
        let reg = registry();
        let again = AntennaRegistry::from_csv_reader(reg.to_csv_string().as_bytes()).unwrap();
        assert_eq!(reg, again);
    }

    #[test]
    fn zone_formats() {
        let reg = registry();
        let csv = EndemicZone::parse("chaco", "antenna_id\nA1\n", &reg).unwrap();
        let json = EndemicZone::parse("chaco", r#"["A1"]"#, &reg).unwrap();
        assert_eq!(csv, json);
        assert!(csv.contains("A1"));
        assert!(!csv.contains("A2"));
    }

    #[test]
    fn zone_validation() {
        let reg = registry();
        assert!(EndemicZone::parse("z", "[]", &reg).is_err());
        assert!(EndemicZone::parse("z", r#"["A9"]"#, &reg).is_err());
    }
}
