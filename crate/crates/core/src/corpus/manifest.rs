use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Label, Split};
use crate::error::{Error, Result};

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub label: Label,
    pub spoof_method: Option<String>,
    pub audio_path: String,
    pub split: Split,
}

impl ManifestRecord {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.utt_id,
            self.speaker_id,
            self.label,
            self.spoof_method.as_deref().unwrap_or("-"),
            self.audio_path,
            self.split
        )
    }

    fn parse_line(line: &str, path: &str, lineno: usize) -> Result<Self> {
        let perr = |msg: String| Error::Parse {
            path: path.to_string(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(perr(format!("expected 6 fields, found {}", fields.len())));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(perr("empty field".into()));
        }
        let label: Label = fields[2].parse().map_err(perr)?;
        let spoof_method = match fields[3] {
            "-" => None,
            m => Some(m.to_string()),
        };
        let split: Split = fields[5].parse().map_err(perr)?;
        Ok(Self {
            utt_id: fields[0].to_string(),
            speaker_id: fields[1].to_string(),
            label,
            spoof_method,
            audio_path: fields[4].to_string(),
            split,
        })
    }
}

fn check_unique(records: &[ManifestRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.utt_id.as_str()) {
            return Err(Error::DuplicateId(r.utt_id.clone()));
        }
    }
    Ok(())
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    check_unique(records)?;
    let mut out = String::new();
    for r in records {
        writeln!(out, "{}", r.to_line()).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a manifest. Blank lines are ignored; anything else must be a full record.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ManifestRecord::parse_line(l, &name, i + 1))
        .collect::<Result<Vec<_>>>()?;
    check_unique(&records)?;
    Ok(records)
}

/// Relative audio paths are resolved against the manifest's directory.
pub fn resolve_audio_path(manifest_path: &Path, record: &ManifestRecord) -> PathBuf {
    let p = Path::new(&record.audio_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, label: Label) -> ManifestRecord {
        ManifestRecord {
            utt_id: id.into(),
            speaker_id: "spk01".into(),
            label,
            spoof_method: (label == Label::Spoof).then(|| "quantize8".to_string()),
            audio_path: format!("wav/{id}.wav"),
            split: Split::Dev,
        }
    }

    #[test]
    fn five_field_line_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(
            &path,
            "a\ts\tbonafide\t-\tx.wav\ttrain\nb\ts\tbonafide\t-\tx.wav\n",
        )
        .unwrap();
        match read_manifest(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let records = vec![rec("a", Label::Bonafide), rec("a", Label::Spoof)];
        assert!(matches!(
            write_manifest(&path, &records),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
        std::fs::write(
            &path,
            "a\ts\tbonafide\t-\tx.wav\ttrain\na\ts\tbonafide\t-\ty.wav\ttrain\n",
        )
        .unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn unknown_label_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, "a\ts\tgenuine\t-\tx.wav\ttrain\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let r = rec("a", Label::Bonafide);
        assert_eq!(
            resolve_audio_path(Path::new("/data/set/manifest.tsv"), &r),
            PathBuf::from("/data/set/wav/a.wav")
        );
    }
}
