use std::path::Path;

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub utt_id: String,
    /// Higher means more bonafide.
    pub score: f64,
    pub label: Label,
}

impl ScoreRecord {
    pub fn new(utt_id: impl Into<String>, score: f64, label: Label) -> Self {
        Self {
            utt_id: utt_id.into(),
            score,
            label,
        }
    }
}

/// `utt_id<TAB>score<TAB>label` per line, scores with 9 significant digits.
pub fn render_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("{}\t{:.8e}\t{}\n", r.utt_id, r.score, r.label.as_str()));
    }
    out
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::InvalidInput(format!("score of {} is not finite", r.utt_id)));
    }
    std::fs::write(path, render_scores(records))?;
    Ok(())
}

pub fn parse_scores(text: &str, origin: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let score: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad score `{}`", fields[1])))?;
        if !score.is_finite() {
            return Err(err("score is not finite".into()));
        }
        let label: Label = fields[2].parse().map_err(err)?;
        out.push(ScoreRecord::new(fields[0], score, label));
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_scores(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_at_printed_precision() {
        let recs: Vec<ScoreRecord> = (0..200)
            .map(|i| {
                let s = ((i as f64) * 0.7319).sin() * 10f64.powi(i % 7 - 3);
                let label = if i % 3 == 0 { Label::Spoof } else { Label::Bonafide };
                ScoreRecord::new(format!("u{i}"), s, label)
            })
            .collect();
        let text = render_scores(&recs);
        let back = parse_scores(&text, "mem").unwrap();
        assert_eq!(back.len(), 200);
        assert_eq!(render_scores(&back), text);
        for (a, b) in recs.iter().zip(&back) {
            assert!((a.score - b.score).abs() <= 1e-8 * a.score.abs());
        }
    }

    #[test]
    fn scientific_notation_parses() {
        let r = parse_scores("a\t-1.25000000e-3\tspoof\n", "mem").unwrap();
        assert_eq!(r[0].score, -0.00125);
        assert_eq!(r[0].label, Label::Spoof);
    }

    #[test]
    fn missing_label_reports_line() {
        let err = parse_scores("a\t1.0\tbonafide\nb\t2.0\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
