//! Pooled equal error rate and score files.

mod scores;

pub use scores::{parse_scores, read_scores, render_scores, write_scores, ScoreRecord};

use std::fmt::Write as _;

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// One operating point: accept iff `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    /// Fraction of spoofs accepted.
    pub far: f64,
    /// Fraction of bonafide rejected.
    pub frr: f64,
}

/// Operating points at every distinct score, ascending.
pub fn det_points(records: &[ScoreRecord]) -> Result<Vec<OperatingPoint>> {
    let mut pairs: Vec<(f64, Label)> = records.iter().map(|r| (r.score, r.label)).collect();
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::InvalidInput(format!("score of {} is not finite", r.utt_id)));
    }
    let n_bona = pairs.iter().filter(|p| p.1 == Label::Bonafide).count();
    let n_spoof = pairs.len() - n_bona;
    if n_bona == 0 || n_spoof == 0 {
        return Err(Error::MetricUndefined(format!(
            "EER needs both classes, got {n_bona} bonafide and {n_spoof} spoof"
        )));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = Vec::new();
    // counts of each class strictly below the current threshold
    let (mut bona_below, mut spoof_below) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        points.push(OperatingPoint {
            threshold: t,
            far: (n_spoof - spoof_below) as f64 / n_spoof as f64,
            frr: bona_below as f64 / n_bona as f64,
        });
        while i < pairs.len() && pairs[i].0 == t {
            match pairs[i].1 {
                Label::Bonafide => bona_below += 1,
                Label::Spoof => spoof_below += 1,
            }
            i += 1;
        }
    }
    Ok(points)
}

/// EER with linear interpolation between the operating points where `FAR − FRR` changes sign.
pub fn pooled_eer(records: &[ScoreRecord]) -> Result<Eer> {
    let points = det_points(records)?;
    let last = *points.last().expect("both classes present");
    // above the top score nothing is accepted
    let end = OperatingPoint {
        threshold: last.threshold,
        far: 0.0,
        frr: 1.0,
    };
    let mut prev = points[0];
    for p in points.iter().copied().chain(std::iter::once(end)) {
        let d = p.far - p.frr;
        if d == 0.0 {
            return Ok(Eer {
                eer: p.far,
                threshold: p.threshold,
            });
        }
        if d < 0.0 {
            let d_prev = prev.far - prev.frr;
            let w = d_prev / (d_prev - d);
            return Ok(Eer {
                eer: prev.far + w * (p.far - prev.far),
                threshold: prev.threshold + w * (p.threshold - prev.threshold),
            });
        }
        prev = p;
    }
    unreachable!("the end point has FAR - FRR = -1")
}

/// `threshold,far,frr` rows with a header.
pub fn det_csv(records: &[ScoreRecord]) -> Result<String> {
    let mut out = String::from("threshold,far,frr\n");
    for p in det_points(records)? {
        writeln!(out, "{:.8e},{:.8e},{:.8e}", p.threshold, p.far, p.frr).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(bona: &[f64], spoof: &[f64]) -> Vec<ScoreRecord> {
        let mut v = Vec::new();
        for (i, &s) in bona.iter().enumerate() {
            v.push(ScoreRecord::new(format!("b{i}"), s, Label::Bonafide));
        }
        for (i, &s) in spoof.iter().enumerate() {
            v.push(ScoreRecord::new(format!("s{i}"), s, Label::Spoof));
        }
        v
    }

    #[test]
    fn separated_and_anti_separated() {
        assert_eq!(pooled_eer(&recs(&[0.9, 0.8], &[0.1, 0.2])).unwrap().eer, 0.0);
        assert_eq!(pooled_eer(&recs(&[0.1, 0.2], &[0.8, 0.9])).unwrap().eer, 1.0);
    }

    #[test]
    fn worked_example_is_one_third() {
        let e = pooled_eer(&recs(&[0.9, 0.8, 0.3], &[0.7, 0.2, 0.1])).unwrap();
        assert_eq!(e.eer, 1.0 / 3.0);
        assert_eq!(e.threshold, 0.7);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(pooled_eer(&recs(&[0.1, 0.2], &[])), Err(Error::MetricUndefined(_))));
        assert!(matches!(pooled_eer(&recs(&[], &[0.3])), Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn interpolates_between_points() {
        // (FAR, FRR) goes (1/3, 0) at t=0.4 then (1/3, 1/2) at t=0.5
        let e = pooled_eer(&recs(&[0.6, 0.4], &[0.5, 0.3, 0.1])).unwrap();
        assert!((e.eer - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.threshold - (0.4 + 0.1 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn det_csv_has_header_and_one_row_per_distinct_score() {
        let csv = det_csv(&recs(&[0.5, 0.5, 0.7], &[0.1])).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "threshold,far,frr");
        assert_eq!(lines.len(), 4);
    }
}
