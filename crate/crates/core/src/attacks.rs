//! Catalog of concrete attacks on imaging devices, each mapped onto one or
//! more patterns from the pattern catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capec::PatternCatalog;
use crate::error::{Error, Result};

/// Device family an attack targets. Families outside the bundled four are
/// carried through verbatim.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeviceClass {
    GenericMid,
    GenericCt,
    GenericMri,
    GenericUltrasound,
    Other(String),
}

impl DeviceClass {
    pub fn as_str(&self) -> &str {
        match self {
            DeviceClass::GenericMid => "GenericMID",
            DeviceClass::GenericCt => "GenericCT",
            DeviceClass::GenericMri => "GenericMRI",
            DeviceClass::GenericUltrasound => "GenericUltrasound",
            DeviceClass::Other(name) => name,
        }
    }
}

impl From<&str> for DeviceClass {
    fn from(name: &str) -> Self {
        match name {
            "GenericMID" => DeviceClass::GenericMid,
            "GenericCT" => DeviceClass::GenericCt,
            "GenericMRI" => DeviceClass::GenericMri,
            "GenericUltrasound" => DeviceClass::GenericUltrasound,
            other => DeviceClass::Other(other.to_string()),
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for DeviceClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DeviceClass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Ok(DeviceClass::from(name.as_str()))
    }
}

/// Whether an attack was already described elsewhere or is newly identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Novelty {
    Known,
    New,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attack {
    pub id: String,
    pub name: String,
    pub device: DeviceClass,
    pub novelty: Novelty,
    pub capec_refs: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub citations: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AttackDocument {
    attacks: Vec<Attack>,
}

/// Attack records keyed by id, preserving document order so device grouping
/// in reports follows the order devices first appear.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackCatalog {
    attacks: BTreeMap<String, Attack>,
    order: Vec<String>,
}

impl AttackCatalog {
    pub fn new(records: Vec<Attack>) -> Result<Self> {
        let mut attacks = BTreeMap::new();
        let mut order = Vec::with_capacity(records.len());
        for record in records {
            if record.capec_refs.is_empty() {
                return Err(Error::Integrity(format!(
                    "attack {} maps to no patterns",
                    record.id
                )));
            }
            order.push(record.id.clone());
            if let Some(previous) = attacks.insert(record.id.clone(), record) {
                return Err(Error::DuplicateId {
                    kind: "attack",
                    id: previous.id,
                });
            }
        }
        Ok(AttackCatalog { attacks, order })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: AttackDocument =
            serde_json::from_str(json).map_err(|e| Error::parse("attack catalog", e))?;
        AttackCatalog::new(doc.attacks)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: AttackDocument = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("attack catalog {}", path.display()), e))?;
        AttackCatalog::new(doc.attacks)
    }

    /// Serializes back to the document form in original record order.
    pub fn to_json_string(&self) -> String {
        let doc = AttackDocument {
            attacks: self
                .order
                .iter()
                .map(|id| self.attacks[id].clone())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("attack serialization cannot fail")
    }

    pub fn lookup(&self, id: &str) -> Result<&Attack> {
        self.attacks.get(id).ok_or_else(|| Error::NotFound {
            kind: "attack",
            id: id.to_string(),
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.attacks.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.attacks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attacks.is_empty()
    }

    /// Attacks in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Attack> {
        self.attacks.values()
    }

    /// Attack ids in id order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.attacks.keys().map(String::as_str)
    }

    /// Attacks in original document order.
    pub fn iter_in_document_order(&self) -> impl Iterator<Item = &Attack> {
        self.order.iter().map(|id| &self.attacks[id])
    }

    /// Device families in the order they first appear in the document.
    pub fn device_order(&self) -> Vec<DeviceClass> {
        let mut seen = Vec::new();
        for id in &self.order {
            let device = &self.attacks[id].device;
            if !seen.contains(device) {
                seen.push(device.clone());
            }
        }
        seen
    }

    /// Reports every mapping that names a pattern absent from `patterns`,
    /// in (attack id, pattern id) order.
    pub fn validate_mappings(&self, patterns: &PatternCatalog) -> Vec<MappingViolation> {
        let mut violations = Vec::new();
        for attack in self.attacks.values() {
            for reference in &attack.capec_refs {
                if !patterns.contains(reference) {
                    violations.push(MappingViolation {
                        attack: attack.id.clone(),
                        pattern: reference.clone(),
                    });
                }
            }
        }
        violations
    }

    /// Knowledge-compression summary: how many attacks are expressed with
    /// how few distinct patterns, and the mean mappings per attack.
    pub fn compression_stats(&self) -> CompressionStats {
        let distinct: BTreeSet<&str> = self
            .attacks
            .values()
            .flat_map(|a| a.capec_refs.iter().map(String::as_str))
            .collect();
        let total_mappings: usize = self.attacks.values().map(|a| a.capec_refs.len()).sum();
        let mean = if self.attacks.is_empty() {
            0.0
        } else {
            total_mappings as f64 / self.attacks.len() as f64
        };
        CompressionStats {
            attacks: self.attacks.len(),
            distinct_patterns: distinct.len(),
            mean_mappings: mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingViolation {
    pub attack: String,
    pub pattern: String,
}

impl fmt::Display for MappingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "attack {} maps to unknown pattern {}",
            self.attack, self.pattern
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionStats {
    pub attacks: usize,
    pub distinct_patterns: usize,
    pub mean_mappings: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capec::{Abstraction, AttackPattern, PatternCatalog};

    fn attack(id: &str, device: &str, refs: &[&str]) -> Attack {
        Attack {
            id: id.to_string(),
            name: format!("{id} name"),
            device: DeviceClass::from(device),
            novelty: Novelty::Known,
            capec_refs: refs.iter().map(|r| r.to_string()).collect(),
            citations: Vec::new(),
        }
    }

    fn pattern(id: &str) -> AttackPattern {
        AttackPattern {
            id: id.to_string(),
            name: format!("{id} name"),
            abstraction: Abstraction::Standard,
            summary: None,
            prerequisites: Vec::new(),
            severity_default: None,
            likelihood_default: None,
            methods: Vec::new(),
            skill_required: None,
            mitigations: Vec::new(),
            parent_of: None,
        }
    }

    #[test]
    fn empty_mapping_set_is_an_integrity_error() {
        let err = AttackCatalog::new(vec![attack("A1", "GenericMID", &[])]).unwrap_err();
        assert!(matches!(err, Error::Integrity(msg) if msg.contains("A1")));
    }

    #[test]
    fn duplicate_attack_ids_are_rejected() {
        let err = AttackCatalog::new(vec![
            attack("A1", "GenericMID", &["CAPEC-1"]),
            attack("A1", "GenericCT", &["CAPEC-2"]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId { kind: "attack", .. }));
    }

    #[test]
    fn unresolved_mapping_is_reported_per_reference() {
        let catalog = AttackCatalog::new(vec![
            attack("A1", "GenericMID", &["CAPEC-1", "CAPEC-9"]),
            attack("A2", "GenericMID", &["CAPEC-1"]),
        ])
        .unwrap();
        let patterns = PatternCatalog::new("t", vec![pattern("CAPEC-1")]).unwrap();
        let violations = catalog.validate_mappings(&patterns);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].attack, "A1");
        assert_eq!(violations[0].pattern, "CAPEC-9");
    }

    #[test]
    fn compression_counts_distinct_patterns_and_mean_mappings() {
        let catalog = AttackCatalog::new(vec![
            attack("A1", "GenericMID", &["CAPEC-1", "CAPEC-2"]),
            attack("A2", "GenericMID", &["CAPEC-1"]),
            attack("A3", "GenericCT", &["CAPEC-3"]),
        ])
        .unwrap();
        let stats = catalog.compression_stats();
        assert_eq!(stats.attacks, 3);
        assert_eq!(stats.distinct_patterns, 3);
        assert!((stats.mean_mappings - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn device_order_follows_first_appearance() {
        let catalog = AttackCatalog::new(vec![
            attack("A2", "GenericCT", &["CAPEC-1"]),
            attack("A1", "GenericMID", &["CAPEC-1"]),
            attack("A3", "GenericCT", &["CAPEC-1"]),
        ])
        .unwrap();
        assert_eq!(
            catalog.device_order(),
            vec![DeviceClass::GenericCt, DeviceClass::GenericMid]
        );
    }

    #[test]
    fn unknown_device_names_round_trip_verbatim() {
        let device = DeviceClass::from("GenericPET");
        assert_eq!(device, DeviceClass::Other("GenericPET".to_string()));
        assert_eq!(device.to_string(), "GenericPET");
    }

    #[test]
    fn serialization_round_trips_with_document_order() {
        let catalog = AttackCatalog::new(vec![
            attack("A2", "GenericCT", &["CAPEC-1"]),
            attack("A1", "GenericMID", &["CAPEC-2", "CAPEC-1"]),
        ])
        .unwrap();
        let reloaded = AttackCatalog::from_json_str(&catalog.to_json_string()).unwrap();
        assert_eq!(catalog, reloaded);
        assert_eq!(
            reloaded.iter_in_document_order().map(|a| a.id.as_str()).collect::<Vec<_>>(),
            vec!["A2", "A1"]
        );
    }
}
