//! Tab-separated corpus index, one mixture per line.
//!
//! Columns: `id split seed snr_db mixture sources condition`, where `sources`
//! is a comma-separated list. Paths are relative to the manifest's directory.
//! Lines starting with `#` are comments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
const HEADER: &str = "# id\tsplit\tseed\tsnr_db\tmixture\tsources\tcondition";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Split::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown split {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureRecord {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub snr_db: f64,
    pub mixture: PathBuf,
    pub sources: Vec<PathBuf>,
    pub condition: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<MixtureRecord>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &MixtureRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn render(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.records {
            let sources: Vec<String> = r.sources.iter().map(|p| p.display().to_string()).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.split,
                r.seed,
                r.snr_db,
                r.mixture.display(),
                sources.join(","),
                r.condition
            ));
        }
        out
    }

    /// Parses manifest text; `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let here = offset;
            offset += line.len() as u64;
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| CliError::format(path, here, m);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 tab-separated fields, found {}", f.len())));
            }
            let sources: Vec<PathBuf> = f[5].split(',').filter(|s| !s.is_empty()).map(PathBuf::from).collect();
            if sources.is_empty() {
                return Err(bad("record lists no sources".into()));
            }
            records.push(MixtureRecord {
                id: f[0].to_string(),
                split: f[1].parse().map_err(bad)?,
                seed: f[2].parse().map_err(|e| bad(format!("seed: {e}")))?,
                snr_db: f[3].parse().map_err(|e| bad(format!("snr_db: {e}")))?,
                mixture: PathBuf::from(f[4]),
                sources,
                condition: f[6].to_string(),
            });
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, split: Split) -> MixtureRecord {
        MixtureRecord {
            id: id.into(),
            split,
            seed: 42,
            snr_db: 3.25,
            mixture: format!("wav/{id}_mix.wav").into(),
            sources: vec![format!("wav/{id}_s1.wav").into(), format!("wav/{id}_s2.wav").into()],
            condition: "tone+chirp".into(),
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let m = Manifest { records: vec![record("a", Split::Train), record("b", Split::Test)] };
        let text = m.render();
        assert!(text.starts_with("# id\t"));
        assert_eq!(Manifest::parse(&text, Path::new("m")).unwrap(), m);
        assert_eq!(m.split(Split::Test).count(), 1);
    }

    #[test]
    fn bad_line_reports_its_offset() {
        let text = format!("{HEADER}\nonly\tthree\tfields\n");
        match Manifest::parse(&text, Path::new("m")).unwrap_err() {
            CliError::Format { offset, .. } => assert_eq!(offset, HEADER.len() as u64 + 1),
            e => panic!("{e}"),
        }
        let text = "x\tdev\t1\t0\tm.wav\ts.wav\tc\n";
        assert!(Manifest::parse(text, Path::new("m")).is_err());
    }
}
