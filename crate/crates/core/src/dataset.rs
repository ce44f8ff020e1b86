//! Plain-text dataset files.
//!
//! Paired data has one utterance per line, `frames<TAB>transcript`, with
//! both sides space-separated integer ids. Text-only corpora carry just the
//! transcript. An empty transcript is an empty field (or an empty line).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Domain, Observation, Symbol, Utterance};

/// What a dataset may be used for. Scales are tuned on `Dev` only and
/// reported on `Eval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SourceTrain,
    TargetText,
    Dev,
    Eval,
}

impl Role {
    pub fn file_name(self) -> &'static str {
        match self {
            Role::SourceTrain => "source_train.tsv",
            Role::TargetText => "target_text.txt",
            Role::Dev => "target_dev.tsv",
            Role::Eval => "target_eval.tsv",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Role::SourceTrain => Domain::Source,
            _ => Domain::Target,
        }
    }

    /// Role implied by a file name (`*dev.tsv`, `*eval.tsv`, ...).
    pub fn from_path(path: &Path) -> Option<Role> {
        let name = path.file_name()?.to_str()?;
        [Role::SourceTrain, Role::TargetText, Role::Dev, Role::Eval]
            .into_iter()
            .find(|r| name == r.file_name())
            .or_else(|| {
                let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
                if stem.ends_with("dev") {
                    Some(Role::Dev)
                } else if stem.ends_with("eval") {
                    Some(Role::Eval)
                } else {
                    None
                }
            })
    }
}

fn ids<T: FromStr>(field: &str, what: &'static str, line: usize) -> Result<Vec<T>> {
    field
        .split_whitespace()
        .map(|x| {
            x.parse::<T>()
                .map_err(|_| Error::parse(what, line, format!("bad id `{x}`")))
        })
        .collect()
}

fn join<T: std::fmt::Display>(out: &mut String, xs: impl IntoIterator<Item = T>) {
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x}");
    }
}

pub fn format_transcript(w: &[Symbol]) -> String {
    let mut s = String::new();
    join(&mut s, w.iter().map(|x| x.0));
    s
}

pub fn parse_transcript(text: &str, line: usize) -> Result<Vec<Symbol>> {
    let raw: Vec<u32> = ids(text, "transcript", line)?;
    if raw.contains(&0) {
        return Err(Error::parse("transcript", line, "label id 0 is reserved for blank"));
    }
    Ok(raw.into_iter().map(Symbol).collect())
}

pub fn paired_to_text(data: &[Utterance]) -> String {
    let mut out = String::new();
    for u in data {
        join(&mut out, &u.frames);
        out.push('\t');
        join(&mut out, u.transcript.iter().map(|s| s.0));
        out.push('\n');
    }
    out
}

pub fn paired_from_text(text: &str, domain: Domain) -> Result<Vec<Utterance>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let (frames, transcript) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("dataset", i + 1, "expected `frames<TAB>transcript`"))?;
            let frames: Vec<Observation> = ids(frames, "frames", i + 1)?;
            if frames.is_empty() {
                return Err(Error::parse("dataset", i + 1, "utterance has no frames"));
            }
            Ok(Utterance {
                frames,
                transcript: parse_transcript(transcript, i + 1)?,
                domain,
            })
        })
        .collect()
}

pub fn text_to_string(corpus: &[Vec<Symbol>]) -> String {
    let mut out = String::new();
    for w in corpus {
        out.push_str(&format_transcript(w));
        out.push('\n');
    }
    out
}

/// Reads a text corpus. Paired lines are accepted too; their frames are
/// dropped.
pub fn text_from_str(text: &str) -> Result<Vec<Vec<Symbol>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let transcript = line.split_once('\t').map_or(line, |(_, t)| t);
            parse_transcript(transcript, i + 1)
        })
        .collect()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_paired(path: &Path, domain: Domain) -> Result<Vec<Utterance>> {
    paired_from_text(&read(path)?, domain)
}

pub fn write_paired(path: &Path, data: &[Utterance]) -> Result<()> {
    write(path, &paired_to_text(data))
}

pub fn read_text(path: &Path) -> Result<Vec<Vec<Symbol>>> {
    text_from_str(&read(path)?)
}

pub fn write_text(path: &Path, corpus: &[Vec<Symbol>]) -> Result<()> {
    write(path, &text_to_string(corpus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::labels;

    #[test]
    fn paired_round_trip_keeps_empty_transcripts() {
        let data = vec![
            Utterance { frames: vec![4, 5, 0], transcript: labels(&[3, 1]), domain: Domain::Target },
            Utterance { frames: vec![2], transcript: vec![], domain: Domain::Target },
        ];
        let text = paired_to_text(&data);
        assert_eq!(text, "4 5 0\t3 1\n2\t\n");
        assert_eq!(paired_from_text(&text, Domain::Target).unwrap(), data);
    }

    #[test]
    fn text_corpus_round_trip() {
        let corpus = vec![labels(&[1, 2]), vec![], labels(&[4])];
        let text = text_to_string(&corpus);
        assert_eq!(text, "1 2\n\n4\n");
        assert_eq!(text_from_str(&text).unwrap(), corpus);
        assert_eq!(text_from_str("0 1\t2 3\n").unwrap(), vec![labels(&[2, 3])]);
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(paired_from_text("1 2 3\n", Domain::Target), Err(Error::Parse { line: 1, .. })));
        assert!(paired_from_text("\t1\n", Domain::Target).is_err());
        assert!(text_from_str("1 x\n").is_err());
        assert!(text_from_str("1 0\n").is_err());
    }

    #[test]
    fn roles_from_names() {
        assert_eq!(Role::from_path(Path::new("a/target_dev.tsv")), Some(Role::Dev));
        assert_eq!(Role::from_path(Path::new("my_eval.tsv")), Some(Role::Eval));
        assert_eq!(Role::from_path(Path::new("target_text.txt")), Some(Role::TargetText));
        assert_eq!(Role::from_path(Path::new("other.tsv")), None);
    }
}
