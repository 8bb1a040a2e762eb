//! Ten-level cultivation bookkeeping.
//!
//! Each assessed domain contributes a sub-level of 0 to 2 from configurable
//! cut scores; the overall level is their sum, capped at the top of the
//! Integration band because no cross-domain probes are implemented.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Foundation,
    Integration,
    Synthesis,
    Mastery,
}

impl Stage {
    pub fn for_level(level: u8) -> Stage {
        match level {
            0..=2 => Stage::Foundation,
            3..=5 => Stage::Integration,
            6..=8 => Stage::Synthesis,
            _ => Stage::Mastery,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CultivationError {
    #[error("{field} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// Cut scores for the two assessed domains. Placeholders: no published
/// criteria exist for level transitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelThresholds {
    /// Mean capability score cut points `[sub-level 1, sub-level 2]`.
    pub domain1: [f64; 2],
    /// Calibration-quality cut points `[sub-level 1, sub-level 2]`.
    pub domain3: [f64; 2],
    /// Highest level reachable without integration evidence.
    pub cap: u8,
}

impl Default for LevelThresholds {
    fn default() -> Self {
        LevelThresholds {
            domain1: [85.0, 90.0],
            domain3: [0.6, 0.8],
            cap: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CultivationRecord {
    pub domain1_score: f64,
    pub domain3_score: f64,
    pub level: u8,
    pub stage: Stage,
}

fn sub_level(score: f64, cuts: [f64; 2]) -> u8 {
    (score >= cuts[0]) as u8 + (score >= cuts[1]) as u8
}

fn check(field: &'static str, value: f64, min: f64, max: f64) -> Result<(), CultivationError> {
    if (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(CultivationError::OutOfRange {
            field,
            value,
            min,
            max,
        })
    }
}

/// Calibration quality `1 - brier`, clamped to `[0, 1]`.
pub fn calibration_quality(brier: f64) -> f64 {
    (1.0 - brier).clamp(0.0, 1.0)
}

pub fn assess_level(
    domain1_score: f64,
    domain3_score: f64,
    thresholds: &LevelThresholds,
) -> Result<CultivationRecord, CultivationError> {
    check("domain1_score", domain1_score, 0.0, 100.0)?;
    check("domain3_score", domain3_score, 0.0, 1.0)?;
    let level = (sub_level(domain1_score, thresholds.domain1)
        + sub_level(domain3_score, thresholds.domain3))
    .min(thresholds.cap.min(9));
    Ok(CultivationRecord {
        domain1_score,
        domain3_score,
        level,
        stage: Stage::for_level(level),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let th = LevelThresholds::default();
        let floor = assess_level(0.0, 0.0, &th).unwrap();
        assert_eq!((floor.level, floor.stage), (0, Stage::Foundation));
        let r = assess_level(96.9, 0.85, &th).unwrap();
        assert_eq!((r.level, r.stage), (4, Stage::Integration));
        assert_eq!(assess_level(89.99, 0.6, &th).unwrap().level, 2);
        assert_eq!(assess_level(90.0, 0.79, &th).unwrap().level, 3);
        assert!(matches!(
            assess_level(100.5, 0.5, &th),
            Err(CultivationError::OutOfRange {
                field: "domain1_score",
                ..
            })
        ));
        assert!(assess_level(50.0, -0.1, &th).is_err());
    }

    #[test]
    fn stage_bands() {
        let stages: Vec<Stage> = (0..=9).map(Stage::for_level).collect();
        use Stage::*;
        assert_eq!(
            stages,
            [
                Foundation,
                Foundation,
                Foundation,
                Integration,
                Integration,
                Integration,
                Synthesis,
                Synthesis,
                Synthesis,
                Mastery
            ]
        );
    }

    proptest! {
        #[test]
        fn monotone_and_capped(a in 0.0f64..=100.0, b in 0.0f64..=1.0, da in 0.0f64..=100.0, db in 0.0f64..=1.0) {
            let th = LevelThresholds::default();
            let base = assess_level(a, b, &th).unwrap();
            let up = assess_level((a + da).min(100.0), (b + db).min(1.0), &th).unwrap();
            prop_assert!(up.level >= base.level);
            prop_assert!(up.level <= 5);
            prop_assert_eq!(up.stage, Stage::for_level(up.level));
        }
    }
}
