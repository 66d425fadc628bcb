//! Run statistics and cost accounting.

use std::collections::BTreeMap;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{GenMixError, Result};
use crate::filter::FilterReport;
use crate::manifest::AugmentedRecord;

/// Relative training-time overhead in percent:
/// `(t_aug - t_van) * 100 / t_van`.
///
/// Generic so exact rational arithmetic can be used.
pub fn augmentation_overhead<T>(t_aug: T, t_van: T) -> Result<T>
where
    T: Num + PartialOrd + Copy + FromPrimitive + std::fmt::Debug,
{
    // Written so that NaN is rejected too.
    if t_van.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(GenMixError::NonPositiveBaseline(format!("{t_van:?}")));
    }
    let hundred = T::from_u32(100).expect("100 is representable");
    Ok((t_aug - t_van) * hundred / t_van)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub t_aug: f64,
    pub t_van: f64,
    pub a_o: f64,
    /// Set when augmentation was cheaper than the baseline.
    pub negative: bool,
}

impl OverheadReport {
    pub fn new(t_aug: f64, t_van: f64) -> Result<Self> {
        if !t_aug.is_finite() || t_aug < 0.0 {
            return Err(GenMixError::Config(format!("invalid t_aug {t_aug}")));
        }
        let a_o = augmentation_overhead(t_aug, t_van)?;
        if a_o < 0.0 {
            log::warn!("augmented time {t_aug} is below baseline {t_van}");
        }
        Ok(Self {
            t_aug,
            t_van,
            a_o,
            negative: a_o < 0.0,
        })
    }
}

/// Wall-clock timing written by `run`; one of these per run can be fed to
/// the overhead computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub wall_seconds: f64,
    pub records: usize,
    pub accepted: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub errors: usize,
    pub per_prompt: BTreeMap<String, usize>,
    pub per_mask: BTreeMap<String, usize>,
    pub per_fractal: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterReport>,
}

/// Aggregate counts over a set of records. Prompt, mask and fractal counts
/// include every record, whatever its outcome.
pub fn run_stats(records: &[AugmentedRecord]) -> RunStats {
    let mut s = RunStats {
        total: records.len(),
        ..RunStats::default()
    };
    for r in records {
        if r.error.is_some() {
            s.errors += 1;
        } else if r.accepted {
            s.accepted += 1;
        } else {
            s.rejected += 1;
        }
        *s.per_prompt.entry(r.prompt_id.clone()).or_default() += 1;
        *s.per_mask.entry(r.mask_kind.to_string()).or_default() += 1;
        *s.per_fractal.entry(r.fractal_id.clone()).or_default() += 1;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overhead_basic() {
        assert_eq!(augmentation_overhead(160.0, 100.0).unwrap(), 60.0);
        assert_eq!(augmentation_overhead(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(augmentation_overhead(90i64, 100).unwrap(), -10);
    }

    #[test]
    fn overhead_rejects_bad_baseline() {
        assert!(augmentation_overhead(1.0, 0.0).is_err());
        assert!(augmentation_overhead(1.0, -3.0).is_err());
        assert!(augmentation_overhead(1.0, f64::NAN).is_err());
    }

    #[test]
    fn empty_record_set_gives_zero_report() {
        assert_eq!(run_stats(&[]), RunStats::default());
    }

    #[test]
    fn overhead_report_flags_negative() {
        let r = OverheadReport::new(90.0, 100.0).unwrap();
        assert!(r.negative);
        assert!(!OverheadReport::new(160.0, 100.0).unwrap().negative);
    }
}
