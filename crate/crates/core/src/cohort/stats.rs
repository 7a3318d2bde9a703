//! Two-sample distribution comparison of biomarker tables.

use serde::{Deserialize, Serialize};

use super::biomarkers::{BiomarkerTable, BIOMARKER_NAMES};
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 5;

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `sup_x |F_a(x) − F_b(x)|` over the pooled sample, by a merge walk.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerComparison {
    pub name: String,
    pub median_a: f64,
    pub median_b: f64,
    pub iqr_a: f64,
    pub iqr_b: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub markers: Vec<MarkerComparison>,
}

impl DistributionReport {
    pub fn mean_ks(&self) -> f64 {
        self.markers.iter().map(|m| m.ks).sum::<f64>() / self.markers.len() as f64
    }

    pub fn count_within(&self, tol: f64) -> usize {
        self.markers.iter().filter(|m| m.ks <= tol).count()
    }
}

/// Per-biomarker medians, IQRs and KS statistics of two cohorts.
pub fn compare_distributions(a: &[BiomarkerTable], b: &[BiomarkerTable]) -> Result<DistributionReport> {
    if a.len() < MIN_SAMPLES || b.len() < MIN_SAMPLES {
        return Err(Error::validation(format!(
            "need at least {MIN_SAMPLES} samples per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let markers = BIOMARKER_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let xa: Vec<f64> = a.iter().map(|t| t.values()[k]).collect();
            let xb: Vec<f64> = b.iter().map(|t| t.values()[k]).collect();
            let (sa, sb) = (sorted(&xa), sorted(&xb));
            MarkerComparison {
                name: name.to_string(),
                median_a: quantile_sorted(&sa, 0.5),
                median_b: quantile_sorted(&sb, 0.5),
                iqr_a: quantile_sorted(&sa, 0.75) - quantile_sorted(&sa, 0.25),
                iqr_b: quantile_sorted(&sb, 0.75) - quantile_sorted(&sb, 0.25),
                ks: ks_statistic(&xa, &xb),
            }
        })
        .collect();
    Ok(DistributionReport { markers })
}
