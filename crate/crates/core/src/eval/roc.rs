use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROC_CSV_HEADER: &str = "threshold,p_fa,p_d,tp,fn,fp,tn";

/// Outcome tallies against ground truth. Eve is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_detections: u64,
    pub missed_detections: u64,
    pub false_alarms: u64,
    pub correct_accepts: u64,
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn eve_total(&self) -> u64 {
        self.true_detections + self.missed_detections
    }

    pub fn bob_total(&self) -> u64 {
        self.false_alarms + self.correct_accepts
    }

    pub fn p_d(&self) -> f64 {
        rate(self.true_detections, self.eve_total())
    }

    pub fn p_fa(&self) -> f64 {
        rate(self.false_alarms, self.bob_total())
    }

    /// Tallies one message. `flagged` means the detector said Eve.
    pub fn record(&mut self, is_eve: bool, flagged: bool) {
        match (is_eve, flagged) {
            (true, true) => self.true_detections += 1,
            (true, false) => self.missed_detections += 1,
            (false, true) => self.false_alarms += 1,
            (false, false) => self.correct_accepts += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
    pub counts: ConfusionCounts,
}

impl RocPoint {
    pub fn from_counts(threshold: f64, counts: ConfusionCounts) -> Self {
        Self {
            threshold,
            p_fa: counts.p_fa(),
            p_d: counts.p_d(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Builds a curve from sweep points, adding the accept-all and flag-all
    /// endpoints, sorting by `(p_fa, p_d)` and integrating by the trapezoid
    /// rule.
    ///
    /// `accept_all` and `flag_all` are the thresholds that realize the two
    /// endpoints for the detector at hand.
    pub fn from_sweep(sweep: Vec<RocPoint>, bob_total: u64, eve_total: u64, accept_all: f64, flag_all: f64) -> Self {
        let start = RocPoint {
            threshold: accept_all,
            p_fa: 0.0,
            p_d: 0.0,
            counts: ConfusionCounts {
                missed_detections: eve_total,
                correct_accepts: bob_total,
                ..Default::default()
            },
        };
        let end = RocPoint {
            threshold: flag_all,
            p_fa: 1.0,
            p_d: 1.0,
            counts: ConfusionCounts {
                true_detections: eve_total,
                false_alarms: bob_total,
                ..Default::default()
            },
        };
        let mut points = Vec::with_capacity(sweep.len() + 2);
        points.push(start);
        points.extend(sweep);
        points.push(end);
        points.sort_by(|a, b| a.p_fa.total_cmp(&b.p_fa).then(a.p_d.total_cmp(&b.p_d)));
        let auc = points
            .windows(2)
            .map(|w| (w[1].p_fa - w[0].p_fa) * (w[0].p_d + w[1].p_d) / 2.0)
            .sum::<f64>()
            .clamp(0.0, 1.0);
        Self { points, auc }
    }

    /// Distinct `(p_fa, p_d)` pairs on the curve.
    pub fn distinct_points(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            if out.last() != Some(&(p.p_fa, p.p_d)) {
                out.push((p.p_fa, p.p_d));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

/// Sweep point with the largest `p_fa <= target_p_fa`, best `p_d` among
/// ties. No interpolation: the realized `p_fa` is returned as is.
pub fn operating_point(curve: &RocCurve, target_p_fa: f64) -> Result<OperatingPoint> {
    if target_p_fa.is_nan() {
        return Err(Error::Contract("target p_fa is NaN".into()));
    }
    curve
        .points
        .iter()
        .filter(|p| p.p_fa <= target_p_fa)
        .max_by(|a, b| a.p_fa.total_cmp(&b.p_fa).then(a.p_d.total_cmp(&b.p_d)))
        .map(|p| OperatingPoint {
            threshold: p.threshold,
            p_fa: p.p_fa,
            p_d: p.p_d,
        })
        .ok_or_else(|| Error::Contract("curve has no point at or below the target false-alarm rate".into()))
}

/// Writes `threshold,p_fa,p_d,tp,fn,fp,tn`, one row per curve point.
pub fn write_roc_csv<W: Write>(mut w: W, curve: &RocCurve) -> std::io::Result<()> {
    writeln!(w, "{ROC_CSV_HEADER}")?;
    for p in &curve.points {
        let c = p.counts;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.threshold, p.p_fa, p.p_d, c.true_detections, c.missed_detections, c.false_alarms, c.correct_accepts
        )?;
    }
    Ok(())
}
