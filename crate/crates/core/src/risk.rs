//! Risk scoring: pattern-derived likelihoods, the likelihood shift and its
//! calibration, weighted severity composition, and risk integration with
//! deterministic prioritization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::attacks::{Attack, AttackCatalog};
use crate::elicitation::{ConsensusVector, SubjectKind};
use crate::error::{Error, Result};

/// Upper end of the elicitation score scale.
pub const SCALE_MAX: f64 = 5.0;

/// Default additive likelihood correction, calibrated once against directly
/// elicited attack likelihoods.
pub const DEFAULT_LIKELIHOOD_SHIFT: f64 = -0.13;

/// How the mapped pattern scores of one attack are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Max,
}

impl Aggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        }
    }
}

/// Likelihood of one attack derived from its mapped patterns' consensus
/// scores, scaled to [0, 1]. Every mapped pattern must be scored.
pub fn capec_based_likelihood(attack: &Attack, consensus: &ConsensusVector) -> Result<f64> {
    capec_based_likelihood_with(attack, consensus, Aggregation::Mean)
}

pub fn capec_based_likelihood_with(
    attack: &Attack,
    consensus: &ConsensusVector,
    aggregation: Aggregation,
) -> Result<f64> {
    if consensus.kind != SubjectKind::CapecLikelihood {
        return Err(Error::Integrity(format!(
            "attack likelihood needs a {} consensus, got {}",
            SubjectKind::CapecLikelihood,
            consensus.kind
        )));
    }
    let mut scores = Vec::with_capacity(attack.capec_refs.len());
    let mut missing = Vec::new();
    for reference in &attack.capec_refs {
        match consensus.values.get(reference) {
            Some(&score) => scores.push(score),
            None => missing.push(reference.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage {
            context: format!("pattern consensus for attack {}", attack.id),
            missing,
        });
    }
    if scores.is_empty() {
        return Err(Error::Integrity(format!(
            "attack {} maps to no patterns",
            attack.id
        )));
    }
    let combined = match aggregation {
        Aggregation::Mean => {
            let sum: f64 = scores.iter().sum();
            sum / scores.len() as f64
        }
        Aggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(combined / SCALE_MAX)
}

/// Where a likelihood shift came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftSource {
    Fixed,
    Calibrated,
}

impl ShiftSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShiftSource::Fixed => "fixed",
            ShiftSource::Calibrated => "calibrated",
        }
    }
}

/// An additive correction applied to pattern-derived likelihoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftCalibration {
    c_like: f64,
    pub source: ShiftSource,
}

impl ShiftCalibration {
    /// A fixed shift; magnitudes above 1 cannot arise from [0, 1] likelihood
    /// vectors and are rejected.
    pub fn fixed(c: f64) -> Result<Self> {
        if !c.is_finite() || c.abs() > 1.0 {
            return Err(Error::OutOfRange {
                context: "likelihood shift".to_string(),
                value: c,
                min: -1.0,
                max: 1.0,
            });
        }
        Ok(ShiftCalibration {
            c_like: c,
            source: ShiftSource::Fixed,
        })
    }

    pub fn c_like(&self) -> f64 {
        self.c_like
    }
}

impl Default for ShiftCalibration {
    fn default() -> Self {
        ShiftCalibration {
            c_like: DEFAULT_LIKELIHOOD_SHIFT,
            source: ShiftSource::Fixed,
        }
    }
}

/// Chooses the shift that makes the mean pattern-derived likelihood equal
/// the mean directly elicited likelihood over the same attacks.
pub fn calibrate_shift(
    capec_based: &ConsensusVector,
    direct: &ConsensusVector,
) -> Result<ShiftCalibration> {
    for (label, vector) in [("pattern-derived", capec_based), ("direct", direct)] {
        if vector.kind != SubjectKind::DirectAttackLikelihood {
            return Err(Error::Integrity(format!(
                "calibration takes attack-likelihood vectors; the {label} vector is about {}",
                vector.kind
            )));
        }
        if vector.values.is_empty() {
            return Err(Error::Integrity(format!(
                "calibration {label} vector is empty"
            )));
        }
    }
    let missing_in_direct: Vec<String> = capec_based
        .values
        .keys()
        .filter(|k| !direct.values.contains_key(*k))
        .cloned()
        .collect();
    let missing_in_capec: Vec<String> = direct
        .values
        .keys()
        .filter(|k| !capec_based.values.contains_key(*k))
        .cloned()
        .collect();
    if !missing_in_direct.is_empty() {
        return Err(Error::Coverage {
            context: "direct likelihood vector".to_string(),
            missing: missing_in_direct,
        });
    }
    if !missing_in_capec.is_empty() {
        return Err(Error::Coverage {
            context: "pattern-derived likelihood vector".to_string(),
            missing: missing_in_capec,
        });
    }
    let mean = |v: &ConsensusVector| -> f64 {
        let sum: f64 = v.values.values().sum();
        sum / v.values.len() as f64
    };
    let c = mean(direct) - mean(capec_based);
    Ok(ShiftCalibration {
        c_like: c,
        source: ShiftSource::Calibrated,
    })
}

/// A shifted likelihood plus whether clamping to [0, 1] changed the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedLikelihood {
    pub value: f64,
    pub clamped: bool,
}

/// Applies the shift and clamps the result into [0, 1].
pub fn apply_shift(likelihood: f64, calibration: &ShiftCalibration) -> ShiftedLikelihood {
    let raw = likelihood + calibration.c_like;
    let value = raw.clamp(0.0, 1.0);
    ShiftedLikelihood {
        value,
        clamped: value != raw,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeverityAspect {
    pub id: String,
    pub weight: f64,
}

/// Weighted decomposition of severity into aspects. Weights are normalized
/// to sum to one on construction; `shift` is an additive severity correction.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityModel {
    aspects: Vec<SeverityAspect>,
    pub shift: f64,
}

#[derive(Deserialize)]
struct SeverityModelDocument {
    aspects: Vec<SeverityAspectDocument>,
    #[serde(default)]
    shift: f64,
}

#[derive(Deserialize)]
struct SeverityAspectDocument {
    id: String,
    weight: f64,
}

impl SeverityModel {
    pub fn new(aspects: Vec<(String, f64)>, shift: f64) -> Result<Self> {
        if aspects.is_empty() {
            return Err(Error::Integrity("severity model has no aspects".to_string()));
        }
        if !shift.is_finite() {
            return Err(Error::OutOfRange {
                context: "severity shift".to_string(),
                value: shift,
                min: f64::NEG_INFINITY,
                max: f64::INFINITY,
            });
        }
        let mut seen = BTreeMap::new();
        for (id, weight) in &aspects {
            if seen.insert(id.clone(), ()).is_some() {
                return Err(Error::DuplicateId {
                    kind: "aspect",
                    id: id.clone(),
                });
            }
            if !weight.is_finite() || *weight < 0.0 {
                return Err(Error::OutOfRange {
                    context: format!("weight for aspect {id}"),
                    value: *weight,
                    min: 0.0,
                    max: f64::INFINITY,
                });
            }
        }
        let total: f64 = aspects.iter().map(|(_, w)| *w).sum();
        if total <= 0.0 {
            return Err(Error::Integrity(
                "severity aspect weights sum to zero".to_string(),
            ));
        }
        Ok(SeverityModel {
            aspects: aspects
                .into_iter()
                .map(|(id, weight)| SeverityAspect {
                    id,
                    weight: weight / total,
                })
                .collect(),
            shift,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let doc: SeverityModelDocument =
            serde_json::from_str(json).map_err(|e| Error::parse("severity model", e))?;
        SeverityModel::new(
            doc.aspects.into_iter().map(|a| (a.id, a.weight)).collect(),
            doc.shift,
        )
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: SeverityModelDocument = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("severity model {}", path.display()), e))?;
        SeverityModel::new(
            doc.aspects.into_iter().map(|a| (a.id, a.weight)).collect(),
            doc.shift,
        )
    }

    pub fn aspects(&self) -> &[SeverityAspect] {
        &self.aspects
    }

    /// One-line description for report metadata.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .aspects
            .iter()
            .map(|a| format!("{} (weight {:.3})", a.id, a.weight))
            .collect();
        format!("{}; shift {:.3}", parts.join(", "), self.shift)
    }
}

/// Weighted sum of aspect magnitudes plus the model shift. The magnitude map
/// must cover the model's aspects exactly.
pub fn composite_severity(
    model: &SeverityModel,
    magnitudes: &BTreeMap<String, f64>,
) -> Result<f64> {
    let missing: Vec<String> = model
        .aspects
        .iter()
        .filter(|a| !magnitudes.contains_key(&a.id))
        .map(|a| format!("aspect {}", a.id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage {
            context: "severity magnitudes".to_string(),
            missing,
        });
    }
    let extra: Vec<String> = magnitudes
        .keys()
        .filter(|k| !model.aspects.iter().any(|a| a.id == **k))
        .map(|k| format!("unexpected aspect {k}"))
        .collect();
    if !extra.is_empty() {
        return Err(Error::Coverage {
            context: "severity magnitudes".to_string(),
            missing: extra,
        });
    }
    for (aspect, &magnitude) in magnitudes {
        if !magnitude.is_finite() || !(0.0..=SCALE_MAX).contains(&magnitude) {
            return Err(Error::OutOfRange {
                context: format!("severity magnitude for aspect {aspect}"),
                value: magnitude,
                min: 0.0,
                max: SCALE_MAX,
            });
        }
    }
    let mut severity = 0.0;
    for aspect in &model.aspects {
        severity += aspect.weight * magnitudes[&aspect.id];
    }
    Ok(severity + model.shift)
}

/// Risk is the plain product of the shifted likelihood and the composite
/// severity, computed on unrounded values.
pub fn integrate_risk(likelihood_shifted: f64, severity: f64) -> f64 {
    likelihood_shifted * severity
}

/// One scored attack. `risk` is always the exact product of
/// `likelihood_shifted` and `severity`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRow {
    pub attack_id: String,
    pub likelihood: f64,
    pub likelihood_shifted: f64,
    pub severity: f64,
    pub risk: f64,
    pub rank: u32,
}

/// Orders rows by risk (descending), breaking ties by higher severity and
/// then attack id, and assigns dense 1-based ranks in that order.
pub fn prioritize(mut rows: Vec<AssessmentRow>) -> Vec<AssessmentRow> {
    rows.sort_by(|a, b| {
        b.risk
            .total_cmp(&a.risk)
            .then_with(|| b.severity.total_cmp(&a.severity))
            .then_with(|| a.attack_id.cmp(&b.attack_id))
    });
    for (index, row) in rows.iter_mut().enumerate() {
        row.rank = index as u32 + 1;
    }
    rows
}

/// A shifted likelihood that had to be clamped back into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ClampEvent {
    pub attack_id: String,
    pub unclamped: f64,
    pub clamped: f64,
}

/// A full scoring pass over an attack catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    /// Rows in priority order with ranks assigned.
    pub rows: Vec<AssessmentRow>,
    pub clamp_events: Vec<ClampEvent>,
}

/// Scores every attack in the catalog: pattern-derived likelihood, shift,
/// composite severity, risk, and global priority ranks.
pub fn assess(
    attacks: &AttackCatalog,
    capec_consensus: &ConsensusVector,
    severity_consensus: &BTreeMap<String, ConsensusVector>,
    model: &SeverityModel,
    calibration: &ShiftCalibration,
    aggregation: Aggregation,
) -> Result<Assessment> {
    for (aspect, vector) in severity_consensus {
        match &vector.kind {
            SubjectKind::SeverityMagnitude(named) if named == aspect => {}
            other => {
                return Err(Error::Integrity(format!(
                    "severity consensus for aspect {aspect} is about {other}"
                )))
            }
        }
    }
    let mut rows = Vec::with_capacity(attacks.len());
    let mut clamp_events = Vec::new();
    for attack in attacks.iter() {
        let likelihood = capec_based_likelihood_with(attack, capec_consensus, aggregation)?;
        let shifted = apply_shift(likelihood, calibration);
        if shifted.clamped {
            clamp_events.push(ClampEvent {
                attack_id: attack.id.clone(),
                unclamped: likelihood + calibration.c_like(),
                clamped: shifted.value,
            });
        }
        let mut magnitudes = BTreeMap::new();
        for aspect in model.aspects() {
            let vector = severity_consensus.get(&aspect.id).ok_or_else(|| {
                Error::Coverage {
                    context: "severity consensus".to_string(),
                    missing: vec![format!("aspect {}", aspect.id)],
                }
            })?;
            let magnitude = vector.score(&attack.id).ok_or_else(|| Error::Coverage {
                context: format!("severity consensus for aspect {}", aspect.id),
                missing: vec![attack.id.clone()],
            })?;
            magnitudes.insert(aspect.id.clone(), magnitude);
        }
        let severity = composite_severity(model, &magnitudes)?;
        let risk = integrate_risk(shifted.value, severity);
        rows.push(AssessmentRow {
            attack_id: attack.id.clone(),
            likelihood,
            likelihood_shifted: shifted.value,
            severity,
            risk,
            rank: 0,
        });
    }
    Ok(Assessment {
        rows: prioritize(rows),
        clamp_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{DeviceClass, Novelty};
    use crate::elicitation::Provenance;

    fn attack(id: &str, refs: &[&str]) -> Attack {
        Attack {
            id: id.to_string(),
            name: format!("{id} name"),
            device: DeviceClass::GenericMid,
            novelty: Novelty::Known,
            capec_refs: refs.iter().map(|r| r.to_string()).collect(),
            citations: Vec::new(),
        }
    }

    fn consensus(kind: SubjectKind, scores: &[(&str, f64)]) -> ConsensusVector {
        ConsensusVector {
            kind,
            values: scores.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn mean_likelihood_averages_then_scales() {
        let c = consensus(
            SubjectKind::CapecLikelihood,
            &[("CAPEC-1", 4.5), ("CAPEC-2", 3.75)],
        );
        let l = capec_based_likelihood(&attack("A1", &["CAPEC-1", "CAPEC-2"]), &c).unwrap();
        assert!((l - 0.825).abs() < 1e-12);
    }

    #[test]
    fn max_likelihood_takes_the_largest_score() {
        let c = consensus(
            SubjectKind::CapecLikelihood,
            &[("CAPEC-1", 4.5), ("CAPEC-2", 3.75)],
        );
        let l = capec_based_likelihood_with(
            &attack("A1", &["CAPEC-1", "CAPEC-2"]),
            &c,
            Aggregation::Max,
        )
        .unwrap();
        assert!((l - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unscored_pattern_is_a_coverage_error() {
        let c = consensus(SubjectKind::CapecLikelihood, &[("CAPEC-1", 4.5)]);
        let err = capec_based_likelihood(&attack("A1", &["CAPEC-1", "CAPEC-9"]), &c).unwrap_err();
        match err {
            Error::Coverage { context, missing } => {
                assert!(context.contains("A1"));
                assert_eq!(missing, vec!["CAPEC-9".to_string()]);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn calibration_equalizes_the_means() {
        let capec_based = consensus(
            SubjectKind::DirectAttackLikelihood,
            &[("A1", 0.5), ("A2", 0.7)],
        );
        let direct = consensus(
            SubjectKind::DirectAttackLikelihood,
            &[("A1", 0.4), ("A2", 0.6)],
        );
        let calibration = calibrate_shift(&capec_based, &direct).unwrap();
        assert!((calibration.c_like() - (-0.1)).abs() < 1e-12);
        assert_eq!(calibration.source, ShiftSource::Calibrated);
    }

    #[test]
    fn calibration_rejects_mismatched_attack_sets() {
        let capec_based = consensus(SubjectKind::DirectAttackLikelihood, &[("A1", 0.5)]);
        let direct = consensus(SubjectKind::DirectAttackLikelihood, &[("A2", 0.4)]);
        let err = calibrate_shift(&capec_based, &direct).unwrap_err();
        assert!(matches!(err, Error::Coverage { .. }));
    }

    #[test]
    fn shift_clamps_at_zero_and_reports_it() {
        let calibration = ShiftCalibration::fixed(-0.13).unwrap();
        let shifted = apply_shift(0.05, &calibration);
        assert_eq!(shifted.value, 0.0);
        assert!(shifted.clamped);
        let unclamped = apply_shift(0.5, &calibration);
        assert!((unclamped.value - 0.37).abs() < 1e-12);
        assert!(!unclamped.clamped);
    }

    #[test]
    fn shift_magnitude_above_one_is_rejected() {
        assert!(ShiftCalibration::fixed(1.5).is_err());
        assert!(ShiftCalibration::fixed(f64::NAN).is_err());
        assert!(ShiftCalibration::fixed(-1.0).is_ok());
    }

    #[test]
    fn composite_severity_is_the_weighted_sum_plus_shift() {
        let model = SeverityModel::new(
            vec![
                ("x".to_string(), 0.2),
                ("y".to_string(), 0.3),
                ("z".to_string(), 0.5),
            ],
            0.1,
        )
        .unwrap();
        let magnitudes: BTreeMap<String, f64> = [
            ("x".to_string(), 5.0),
            ("y".to_string(), 3.0),
            ("z".to_string(), 1.0),
        ]
        .into_iter()
        .collect();
        let severity = composite_severity(&model, &magnitudes).unwrap();
        assert!((severity - 2.5).abs() < 1e-12);
    }

    #[test]
    fn model_weights_are_normalized_on_construction() {
        let model =
            SeverityModel::new(vec![("x".to_string(), 2.0), ("y".to_string(), 2.0)], 0.0).unwrap();
        assert!((model.aspects()[0].weight - 0.5).abs() < 1e-12);
        assert!((model.aspects()[1].weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negative_magnitude_is_a_range_error() {
        let model = SeverityModel::new(vec![("x".to_string(), 1.0)], 0.0).unwrap();
        let magnitudes: BTreeMap<String, f64> = [("x".to_string(), -0.5)].into_iter().collect();
        let err = composite_severity(&model, &magnitudes).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn aspect_coverage_must_be_exact() {
        let model = SeverityModel::new(vec![("x".to_string(), 1.0)], 0.0).unwrap();
        let empty = BTreeMap::new();
        assert!(matches!(
            composite_severity(&model, &empty).unwrap_err(),
            Error::Coverage { .. }
        ));
        let extra: BTreeMap<String, f64> =
            [("x".to_string(), 1.0), ("q".to_string(), 1.0)].into_iter().collect();
        assert!(matches!(
            composite_severity(&model, &extra).unwrap_err(),
            Error::Coverage { .. }
        ));
    }

    #[test]
    fn prioritization_breaks_risk_ties_by_severity_then_id() {
        let row = |id: &str, risk: f64, severity: f64| AssessmentRow {
            attack_id: id.to_string(),
            likelihood: 0.5,
            likelihood_shifted: 0.5,
            severity,
            risk,
            rank: 0,
        };
        let ranked = prioritize(vec![
            row("A8", 1.645, 3.5),
            row("A9", 1.645, 4.0),
            row("A20", 1.645, 3.5),
            row("A1", 3.0, 4.0),
        ]);
        let order: Vec<&str> = ranked.iter().map(|r| r.attack_id.as_str()).collect();
        assert_eq!(order, vec!["A1", "A9", "A20", "A8"]);
        assert_eq!(ranked.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn assessment_rows_satisfy_the_product_identity() {
        let attacks = AttackCatalog::new(vec![
            attack("A1", &["CAPEC-1"]),
            attack("A2", &["CAPEC-1", "CAPEC-2"]),
        ])
        .unwrap();
        let capec = consensus(
            SubjectKind::CapecLikelihood,
            &[("CAPEC-1", 4.0), ("CAPEC-2", 2.0)],
        );
        let severity = consensus(
            SubjectKind::SeverityMagnitude("overall".to_string()),
            &[("A1", 4.5), ("A2", 3.0)],
        );
        let severity_map: BTreeMap<String, ConsensusVector> =
            [("overall".to_string(), severity)].into_iter().collect();
        let model = SeverityModel::new(vec![("overall".to_string(), 1.0)], 0.0).unwrap();
        let assessment = assess(
            &attacks,
            &capec,
            &severity_map,
            &model,
            &ShiftCalibration::default(),
            Aggregation::Mean,
        )
        .unwrap();
        assert_eq!(assessment.rows.len(), 2);
        for row in &assessment.rows {
            assert_eq!(row.risk, row.likelihood_shifted * row.severity);
        }
        assert_eq!(assessment.rows[0].attack_id, "A1");
        assert!(assessment.clamp_events.is_empty());
    }

    #[test]
    fn assessment_reports_clamped_rows() {
        let attacks = AttackCatalog::new(vec![attack("A1", &["CAPEC-1"])]).unwrap();
        let capec = consensus(SubjectKind::CapecLikelihood, &[("CAPEC-1", 0.25)]);
        let severity = consensus(
            SubjectKind::SeverityMagnitude("overall".to_string()),
            &[("A1", 4.5)],
        );
        let severity_map: BTreeMap<String, ConsensusVector> =
            [("overall".to_string(), severity)].into_iter().collect();
        let model = SeverityModel::new(vec![("overall".to_string(), 1.0)], 0.0).unwrap();
        let assessment = assess(
            &attacks,
            &capec,
            &severity_map,
            &model,
            &ShiftCalibration::default(),
            Aggregation::Mean,
        )
        .unwrap();
        assert_eq!(assessment.clamp_events.len(), 1);
        assert_eq!(assessment.rows[0].likelihood_shifted, 0.0);
        assert_eq!(assessment.rows[0].risk, 0.0);
    }

    #[test]
    fn default_shift_is_minus_point_thirteen() {
        assert_eq!(DEFAULT_LIKELIHOOD_SHIFT, -0.13);
        assert_eq!(ShiftCalibration::default().c_like(), -0.13);
    }
}
