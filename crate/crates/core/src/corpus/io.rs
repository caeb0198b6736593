use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dialogue, Origin, Sample, TokenizeMode, Utterance};
use crate::error::{Error, Result};
use crate::labels::EditLabel;

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    speaker: u32,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    history: Vec<TurnRecord>,
    incomplete: TurnRecord,
    rewritten: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<String>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

fn to_record(s: &Sample) -> SampleRecord {
    let turn = |u: &Utterance| TurnRecord {
        speaker: u.speaker,
        text: u.text.clone(),
    };
    SampleRecord {
        history: s.dialogue.history.iter().map(turn).collect(),
        incomplete: turn(&s.dialogue.incomplete),
        rewritten: s.rewritten.text.clone(),
        labels: s
            .labels
            .as_ref()
            .map(|ls| ls.iter().map(|l| l.as_str().to_string()).collect()),
        origin: match s.origin {
            Origin::Original => None,
            o => Some(o.as_str().to_string()),
        },
        extra: s.extra.clone(),
    }
}

fn from_record(rec: SampleRecord, mode: TokenizeMode) -> std::result::Result<Sample, String> {
    let history = rec
        .history
        .into_iter()
        .map(|t| Utterance::new(t.speaker, t.text, mode))
        .collect();
    let incomplete = Utterance::new(rec.incomplete.speaker, rec.incomplete.text, mode);
    let rewritten = Utterance::new(incomplete.speaker, rec.rewritten, mode);
    let labels = match rec.labels {
        None => None,
        Some(ls) => Some(
            ls.iter()
                .map(|l| l.parse::<EditLabel>())
                .collect::<std::result::Result<Vec<_>, _>>()?,
        ),
    };
    let origin = match rec.origin.as_deref() {
        None => Origin::Original,
        Some(o) => Origin::parse(o).ok_or_else(|| format!("unknown origin `{o}`"))?,
    };
    let mut sample = Sample::new(Dialogue { history, incomplete }, rewritten);
    sample.labels = labels;
    sample.origin = origin;
    sample.extra = rec.extra;
    if let Some(ls) = &sample.labels {
        let k = crate::corpus::linearize(&sample.dialogue).len();
        if ls.len() != k {
            return Err(format!("labels length {} != stream length {k}", ls.len()));
        }
    }
    Ok(sample)
}

/// Parses JSON-lines corpus text. `origin` names the source in errors.
pub fn read_corpus(reader: impl Read, origin: &Path, mode: TokenizeMode) -> Result<Vec<Sample>> {
    let reader = BufReader::new(reader);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        out.push(from_record(rec, mode).map_err(record_err)?);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, mode: TokenizeMode) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, path, mode)
}

pub fn write_corpus(samples: &[Sample], mut writer: impl Write) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut writer, &to_record(s))?;
        writer.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

pub fn save_corpus(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(samples, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
