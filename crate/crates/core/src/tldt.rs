//! Threat-linked security dimensions and the 12-entry capability vector.
//!
//! Dimensions are grouped into three layers of four (self-defense,
//! owner-protection, enterprise-security). Each has a stable index in
//! `0..12` which is also the tie-break order for argmin scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default score at or above which a dimension counts as proficient.
pub const DEFAULT_PROFICIENCY: f64 = 90.0;

pub const DIMENSION_COUNT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DimensionId {
    S1,
    S2,
    S3,
    S4,
    O1,
    O2,
    O3,
    O4,
    E1,
    E2,
    E3,
    E4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    SelfDefense,
    OwnerProtection,
    EnterpriseSecurity,
}

impl DimensionId {
    pub const ALL: [DimensionId; DIMENSION_COUNT] = [
        DimensionId::S1,
        DimensionId::S2,
        DimensionId::S3,
        DimensionId::S4,
        DimensionId::O1,
        DimensionId::O2,
        DimensionId::O3,
        DimensionId::O4,
        DimensionId::E1,
        DimensionId::E2,
        DimensionId::E3,
        DimensionId::E4,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            DimensionId::S1 => "S1",
            DimensionId::S2 => "S2",
            DimensionId::S3 => "S3",
            DimensionId::S4 => "S4",
            DimensionId::O1 => "O1",
            DimensionId::O2 => "O2",
            DimensionId::O3 => "O3",
            DimensionId::O4 => "O4",
            DimensionId::E1 => "E1",
            DimensionId::E2 => "E2",
            DimensionId::E3 => "E3",
            DimensionId::E4 => "E4",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DimensionId::S1 => "Instruction Immunity",
            DimensionId::S2 => "Memory Defense",
            DimensionId::S3 => "Supply Chain Security",
            DimensionId::S4 => "Credential Security",
            DimensionId::O1 => "Anti-Phishing",
            DimensionId::O2 => "Social Engineering Defense",
            DimensionId::O3 => "Privacy Preservation",
            DimensionId::O4 => "Unsafe Network Resistance",
            DimensionId::E1 => "Data Handling",
            DimensionId::E2 => "Compliance",
            DimensionId::E3 => "Insider Risk Mitigation",
            DimensionId::E4 => "Incident Response",
        }
    }

    pub fn layer(self) -> Layer {
        match self.index() / 4 {
            0 => Layer::SelfDefense,
            1 => Layer::OwnerProtection,
            _ => Layer::EnterpriseSecurity,
        }
    }
}

impl fmt::Display for DimensionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CapabilityError {
    #[error("unknown dimension code {0:?}")]
    UnknownDimension(String),
    #[error("score {score} for {dim} outside [0, 100]")]
    ScoreOutOfRange { dim: DimensionId, score: f64 },
    #[error("dimension {0} missing from capability vector")]
    MissingDimension(DimensionId),
    #[error("proficiency threshold {0} outside [0, 100]")]
    ThresholdOutOfRange(f64),
}

impl FromStr for DimensionId {
    type Err = CapabilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|d| d.code() == s)
            .ok_or_else(|| CapabilityError::UnknownDimension(s.to_string()))
    }
}

fn check_score(dim: DimensionId, score: f64) -> Result<f64, CapabilityError> {
    if (0.0..=100.0).contains(&score) {
        Ok(score)
    } else {
        Err(CapabilityError::ScoreOutOfRange { dim, score })
    }
}

/// Scores for all 12 dimensions plus the proficiency threshold.
///
/// Construction validates every score; the only mutator clamps into range,
/// so a live vector always satisfies `0 <= score <= 100`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapabilityRepr", into = "CapabilityRepr")]
pub struct CapabilityVector {
    scores: [f64; DIMENSION_COUNT],
    proficiency_threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct CapabilityRepr {
    scores: BTreeMap<DimensionId, f64>,
    #[serde(default = "default_threshold")]
    proficiency_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_PROFICIENCY
}

impl TryFrom<CapabilityRepr> for CapabilityVector {
    type Error = CapabilityError;

    fn try_from(repr: CapabilityRepr) -> Result<Self, Self::Error> {
        let mut scores = [0.0; DIMENSION_COUNT];
        for dim in DimensionId::ALL {
            let score = *repr
                .scores
                .get(&dim)
                .ok_or(CapabilityError::MissingDimension(dim))?;
            scores[dim.index()] = check_score(dim, score)?;
        }
        CapabilityVector::new(scores)?.with_threshold(repr.proficiency_threshold)
    }
}

impl From<CapabilityVector> for CapabilityRepr {
    fn from(v: CapabilityVector) -> Self {
        CapabilityRepr {
            scores: DimensionId::ALL.iter().map(|&d| (d, v.score(d))).collect(),
            proficiency_threshold: v.proficiency_threshold,
        }
    }
}

impl CapabilityVector {
    pub fn new(scores: [f64; DIMENSION_COUNT]) -> Result<Self, CapabilityError> {
        for dim in DimensionId::ALL {
            check_score(dim, scores[dim.index()])?;
        }
        Ok(CapabilityVector {
            scores,
            proficiency_threshold: DEFAULT_PROFICIENCY,
        })
    }

    pub fn uniform(score: f64) -> Result<Self, CapabilityError> {
        Self::new([score; DIMENSION_COUNT])
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, CapabilityError> {
        if !(0.0..=100.0).contains(&threshold) {
            return Err(CapabilityError::ThresholdOutOfRange(threshold));
        }
        self.proficiency_threshold = threshold;
        Ok(self)
    }

    pub fn score(&self, dim: DimensionId) -> f64 {
        self.scores[dim.index()]
    }

    /// Sets a score, clamping into `[0, 100]`.
    pub fn set_score(&mut self, dim: DimensionId, score: f64) {
        self.scores[dim.index()] = score.clamp(0.0, 100.0);
    }

    pub fn scores(&self) -> &[f64; DIMENSION_COUNT] {
        &self.scores
    }

    pub fn proficiency_threshold(&self) -> f64 {
        self.proficiency_threshold
    }

    pub fn mean_score(&self) -> f64 {
        self.scores.iter().sum::<f64>() / DIMENSION_COUNT as f64
    }

    /// Lowest-scoring dimension; ties go to the lowest index.
    pub fn weakest_dimension(&self) -> DimensionId {
        let mut best = 0;
        for i in 1..DIMENSION_COUNT {
            if self.scores[i] < self.scores[best] {
                best = i;
            }
        }
        DimensionId::ALL[best]
    }

    /// Number of dimensions scoring at or above the proficiency threshold.
    pub fn proficient_count(&self) -> usize {
        self.scores
            .iter()
            .filter(|&&s| s >= self.proficiency_threshold)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vector_from(values: impl IntoIterator<Item = f64>) -> CapabilityVector {
        let v: Vec<f64> = values.into_iter().collect();
        CapabilityVector::new(v.try_into().unwrap()).unwrap()
    }

    #[test]
    fn layers_partition_four_each() {
        for layer in [
            Layer::SelfDefense,
            Layer::OwnerProtection,
            Layer::EnterpriseSecurity,
        ] {
            let n = DimensionId::ALL
                .iter()
                .filter(|d| d.layer() == layer)
                .count();
            assert_eq!(n, 4);
        }
        assert_eq!(DimensionId::S1.name(), "Instruction Immunity");
        for (i, d) in DimensionId::ALL.iter().enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(d.code().parse::<DimensionId>().unwrap(), *d);
        }
        assert!("X9".parse::<DimensionId>().is_err());
    }

    #[test]
    fn mean_score_examples() {
        assert!((CapabilityVector::uniform(80.9).unwrap().mean_score() - 80.9).abs() < 1e-12);
        assert_eq!(CapabilityVector::uniform(0.0).unwrap().mean_score(), 0.0);
        // 89 + 90 + ... + 100 = 1134
        let v = vector_from((0..12).map(|i| 89.0 + i as f64));
        let oracle: f64 = (89..=100).map(|x| x as f64).sum::<f64>() / 12.0;
        assert_eq!(oracle, 94.5);
        assert!((v.mean_score() - 94.5).abs() < 1e-12);
    }

    #[test]
    fn weakest_dimension_examples() {
        let mut v = CapabilityVector::uniform(90.0).unwrap();
        v.set_score(DimensionId::S3, 70.0);
        assert_eq!(v.weakest_dimension(), DimensionId::S3);

        assert_eq!(
            CapabilityVector::uniform(42.0).unwrap().weakest_dimension(),
            DimensionId::S1
        );

        let mut v = CapabilityVector::uniform(95.0).unwrap();
        v.set_score(DimensionId::S2, 80.0);
        v.set_score(DimensionId::O1, 80.0);
        assert_eq!(v.weakest_dimension(), DimensionId::S2);
    }

    #[test]
    fn tie_break_independent_of_insertion_order() {
        // every assignment order of the two tied minima yields the lower index
        let tied = [DimensionId::S2, DimensionId::O1];
        for order in [[0usize, 1], [1, 0]] {
            let mut v = CapabilityVector::uniform(95.0).unwrap();
            for &k in &order {
                v.set_score(tied[k], 80.0);
            }
            assert_eq!(v.weakest_dimension(), DimensionId::S2);
        }
    }

    #[test]
    fn proficient_count_examples() {
        assert_eq!(
            CapabilityVector::uniform(96.9).unwrap().proficient_count(),
            12
        );
        let mut v = CapabilityVector::uniform(95.0).unwrap();
        v.set_score(DimensionId::E4, 85.0);
        assert_eq!(v.proficient_count(), 11);
        assert_eq!(
            CapabilityVector::uniform(89.999)
                .unwrap()
                .proficient_count(),
            0
        );
        assert_eq!(
            CapabilityVector::uniform(90.0).unwrap().proficient_count(),
            12
        );
    }

    #[test]
    fn rejects_out_of_range() {
        let mut scores = [50.0; 12];
        scores[3] = 100.5;
        assert!(matches!(
            CapabilityVector::new(scores),
            Err(CapabilityError::ScoreOutOfRange {
                dim: DimensionId::S4,
                ..
            })
        ));
        assert!(CapabilityVector::uniform(-0.1).is_err());
    }

    #[test]
    fn serializes_with_codes() {
        let v = CapabilityVector::uniform(80.9).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"S1\":80.9"));
        let back: CapabilityVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        let bad = json.replace("\"E4\":80.9", "\"E4\":180.9");
        assert!(serde_json::from_str::<CapabilityVector>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn mean_within_min_max(scores in prop::array::uniform12(0.0f64..=100.0)) {
            let v = CapabilityVector::new(scores).unwrap();
            let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v.mean_score() >= lo - 1e-9 && v.mean_score() <= hi + 1e-9);
        }

        #[test]
        fn weakest_is_index_minimal_argmin(scores in prop::array::uniform12(prop::sample::select(vec![70.0, 80.0, 90.0, 100.0]))) {
            let v = CapabilityVector::new(scores).unwrap();
            let w = v.weakest_dimension().index();
            for i in 0..12 {
                prop_assert!(scores[w] <= scores[i]);
                if i < w {
                    prop_assert!(scores[i] > scores[w]);
                }
            }
        }

        #[test]
        fn raising_a_score_never_lowers_proficient_count(
            scores in prop::array::uniform12(0.0f64..=100.0),
            idx in 0usize..12,
            bump in 0.0f64..50.0,
        ) {
            let v = CapabilityVector::new(scores).unwrap();
            let mut raised = v.clone();
            let dim = DimensionId::ALL[idx];
            raised.set_score(dim, v.score(dim) + bump);
            prop_assert!(raised.proficient_count() >= v.proficient_count());
        }
    }
}
