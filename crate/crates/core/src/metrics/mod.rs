//! Overlap and surface-distance metrics per tumor region, and cohort summaries.

mod distance;
mod summary;

pub use distance::{hd95, surface, HdPenalty};
pub use summary::{
    box_plot, quantile, summarize, write_box_plot_csv, write_case_csv, write_summary_csv, BoxPlot,
    Stats, SummaryStats, STAT_LABELS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::volume::{Dims3, SegVolume, Spacing};

/// Evaluated tumor regions, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    ET,
    WT,
    TC,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::ET, Region::WT, Region::TC];

    pub fn contains(self, label: u8) -> bool {
        match self {
            Region::WT => matches!(label, 1 | 2 | 4),
            Region::TC => matches!(label, 1 | 4),
            Region::ET => label == 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::ET => "ET",
            Region::WT => "WT",
            Region::TC => "TC",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary mask of one region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    pub region: Region,
    pub dims: Dims3,
    pub mask: Vec<bool>,
}

impl RegionMask {
    pub fn from_seg(seg: &SegVolume, region: Region) -> Self {
        RegionMask {
            region,
            dims: seg.dims(),
            mask: seg.labels().iter().map(|&l| region.contains(l)).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

/// Masks of every region, in [`Region::ALL`] order.
pub fn region_masks(seg: &SegVolume) -> [RegionMask; 3] {
    Region::ALL.map(|r| RegionMask::from_seg(seg, r))
}

#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

fn confusion(pred: &RegionMask, reference: &RegionMask) -> Result<Confusion> {
    if pred.dims != reference.dims {
        return Err(Error::DimensionMismatch(format!(
            "prediction {} vs reference {}",
            pred.dims, reference.dims
        )));
    }
    let mut c = Confusion::default();
    for (&p, &r) in pred.mask.iter().zip(&reference.mask) {
        match (p, r) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2|P∩R| / (|P|+|R|)`; 1 when both are empty.
pub fn dice(pred: &RegionMask, reference: &RegionMask) -> Result<f64> {
    let c = confusion(pred, reference)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 {
        1.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    })
}

/// `TP / (TP + FN)`; with an empty reference, 1 if the prediction is empty too, else 0.
pub fn sensitivity(pred: &RegionMask, reference: &RegionMask) -> Result<f64> {
    let c = confusion(pred, reference)?;
    Ok(match c.tp + c.fn_ {
        0 if c.fp == 0 => 1.0,
        0 => 0.0,
        p => c.tp as f64 / p as f64,
    })
}

/// `TN / (TN + FP)`; 1 when the reference has no negatives.
pub fn specificity(pred: &RegionMask, reference: &RegionMask) -> Result<f64> {
    let c = confusion(pred, reference)?;
    Ok(match c.tn + c.fp {
        0 => 1.0,
        n => c.tn as f64 / n as f64,
    })
}

/// Soft Dice of a region probability map against a reference mask.
pub fn soft_dice(probs: &[f32], reference: &RegionMask) -> f64 {
    let (mut inter, mut ps, mut ts) = (0.0, 0.0, 0.0);
    for (&p, &t) in probs.iter().zip(&reference.mask) {
        let p = f64::from(p);
        ps += p;
        if t {
            inter += p;
            ts += 1.0;
        }
    }
    if ps + ts == 0.0 {
        1.0
    } else {
        2.0 * inter / (ps + ts)
    }
}

/// All four metrics for one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub hd95: f64,
}

/// Per-region metrics of one case, in [`Region::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub regions: [RegionMetrics; 3],
}

impl CaseMetrics {
    pub fn region(&self, r: Region) -> &RegionMetrics {
        &self.regions[r as usize]
    }
}

/// The four report metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Dice,
    Sensitivity,
    Specificity,
    Hausdorff95,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Dice,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Hausdorff95,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dice => "Dice",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Hausdorff95 => "Hausdorff95",
        }
    }

    pub fn of(self, m: &RegionMetrics) -> f64 {
        match self {
            Metric::Dice => m.dice,
            Metric::Sensitivity => m.sensitivity,
            Metric::Specificity => m.specificity,
            Metric::Hausdorff95 => m.hd95,
        }
    }
}

/// Region masks of both volumes and all four metrics per region.
pub fn evaluate_case(
    case_id: impl Into<String>,
    pred: &SegVolume,
    reference: &SegVolume,
    spacing: Spacing,
    penalty: HdPenalty,
) -> Result<CaseMetrics> {
    if pred.dims() != reference.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {} vs reference {}",
            pred.dims(),
            reference.dims()
        )));
    }
    let p = region_masks(pred);
    let r = region_masks(reference);
    let mut regions = [RegionMetrics {
        dice: 0.0,
        sensitivity: 0.0,
        specificity: 0.0,
        hd95: 0.0,
    }; 3];
    for i in 0..3 {
        regions[i] = RegionMetrics {
            dice: dice(&p[i], &r[i])?,
            sensitivity: sensitivity(&p[i], &r[i])?,
            specificity: specificity(&p[i], &r[i])?,
            hd95: hd95(&p[i], &r[i], spacing, penalty)?,
        };
    }
    Ok(CaseMetrics {
        case_id: case_id.into(),
        regions,
    })
}

/// Evaluates `(case_id, prediction, reference)` triples, in input order.
pub fn evaluate_cases(
    cases: &[(String, SegVolume, SegVolume)],
    penalty: HdPenalty,
    exec: Exec,
) -> Result<Vec<CaseMetrics>> {
    exec.map(cases.len(), |i| {
        let (id, p, r) = &cases[i];
        evaluate_case(id.clone(), p, r, r.spacing(), penalty)
    })
    .into_iter()
    .collect()
}
