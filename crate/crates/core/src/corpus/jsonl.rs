//! Line-delimited JSON corpus format.
//!
//! One record per line:
//! `{"task", "split", "domain"?, "intent", "slots": [{"slot", "value"}], "text", "delex_text"}`.
//! Tasks are numbered in order of first appearance.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DialogAct, SlotValue, Split, Task, TaskStream, Utterance};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub task: String,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub intent: String,
    pub slots: Vec<SlotRecord>,
    pub text: String,
    pub delex_text: String,
}

impl CorpusRecord {
    pub fn from_utterance(task: &str, split: Split, u: &Utterance) -> Self {
        CorpusRecord {
            task: task.to_string(),
            split: split.as_str().to_string(),
            domain: Some(u.da.domain.clone()),
            intent: u.da.intent.clone(),
            slots: u
                .da
                .pairs
                .iter()
                .map(|p| SlotRecord {
                    slot: p.slot.clone(),
                    value: p.value.clone(),
                })
                .collect(),
            text: u.raw_text.clone(),
            delex_text: u.delex_text(),
        }
    }

    /// Falls back to the intent prefix (`Attraction-Inform` -> `attraction`)
    /// and then to the task name.
    fn resolved_domain(&self) -> String {
        if let Some(d) = &self.domain {
            return d.clone();
        }
        match self.intent.split_once('-') {
            Some((prefix, _)) if !prefix.is_empty() => prefix.to_lowercase(),
            _ => self.task.to_lowercase(),
        }
    }

    fn into_utterance(self) -> Utterance {
        let domain = self.resolved_domain();
        let da = DialogAct {
            domain,
            intent: self.intent,
            pairs: self
                .slots
                .into_iter()
                .map(|s| SlotValue {
                    slot: s.slot,
                    value: s.value,
                })
                .collect(),
        };
        Utterance::from_delex(&self.delex_text, da, self.text)
    }
}

/// Converts one record into an utterance (domain fallbacks applied).
pub fn parse_record(record: CorpusRecord) -> Utterance {
    record.into_utterance()
}

pub fn parse_corpus(content: &str) -> Result<TaskStream> {
    let mut tasks: Vec<Task> = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let split = Split::parse(&record.split).ok_or_else(|| Error::Format {
            line: line_no,
            message: format!("unknown split label `{}`", record.split),
        })?;
        if record.intent.is_empty() {
            return Err(Error::Format {
                line: line_no,
                message: "empty intent".into(),
            });
        }
        let idx = match tasks.iter().position(|t| t.name == record.task) {
            Some(idx) => idx,
            None => {
                tasks.push(Task::new(tasks.len(), record.task.clone()));
                tasks.len() - 1
            }
        };
        tasks[idx].split_mut(split).push(record.into_utterance());
    }
    TaskStream::new(tasks)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<TaskStream> {
    let content = std::fs::read_to_string(path)?;
    parse_corpus(&content)
}

pub fn to_jsonl(stream: &TaskStream) -> String {
    let mut out = String::new();
    for task in &stream.tasks {
        for split in [Split::Train, Split::Valid, Split::Test] {
            for u in task.split(split) {
                let rec = CorpusRecord::from_utterance(&task.name, split, u);
                // records only hold strings; serialization cannot fail
                let line = serde_json::to_string(&rec).expect("serialize record");
                let _ = writeln!(out, "{line}");
            }
        }
    }
    out
}

pub fn write_corpus(stream: &TaskStream, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_jsonl(stream))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS;

    const TWO_LINES: &str = r#"{"task":"attraction","split":"train","intent":"Attraction-Inform","slots":[{"slot":"name","value":"ADC Theatre"}],"text":"The ADC Theatre is nice","delex_text":"the [slot-attraction-name] is nice"}
{"task":"attraction","split":"test","intent":"Attraction-Inform","slots":[{"slot":"fee","value":"free"}],"text":"Entry is free","delex_text":"entry is [slot-attraction-fee]"}
"#;

    #[test]
    fn loads_one_task_two_splits() {
        let s = parse_corpus(TWO_LINES).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.tasks[0].train.len(), 1);
        assert_eq!(s.tasks[0].test.len(), 1);
        assert!(s.tasks[0].valid.is_empty());
        let u = &s.tasks[0].train[0];
        assert_eq!(u.da.domain, "attraction");
        assert_eq!(u.tokens.last().unwrap(), EOS);
        assert_eq!(u.tokens.len(), 5);
    }

    #[test]
    fn empty_file_has_no_tasks() {
        let err = parse_corpus("").unwrap_err();
        assert!(err.to_string().contains("no tasks"));
    }

    #[test]
    fn missing_slots_names_line() {
        let line = r#"{"task":"a","split":"train","intent":"i","text":"x","delex_text":"x"}"#;
        match parse_corpus(line).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("slots"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_split_is_format_error() {
        let line =
            r#"{"task":"a","split":"holdout","intent":"i","slots":[],"text":"x","delex_text":"x"}"#;
        assert!(matches!(
            parse_corpus(line).unwrap_err(),
            Error::Format { line: 1, .. }
        ));
    }

    #[test]
    fn empty_train_split_rejected() {
        let line =
            r#"{"task":"a","split":"test","intent":"i","slots":[],"text":"x","delex_text":"x"}"#;
        assert!(matches!(
            parse_corpus(line).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn domain_fallbacks() {
        let line = r#"{"task":"Taxi","split":"train","intent":"inform","slots":[],"text":"x","delex_text":"x"}"#;
        let s = parse_corpus(line).unwrap();
        assert_eq!(s.tasks[0].train[0].da.domain, "taxi");
    }

    #[test]
    fn round_trip() {
        let s = parse_corpus(TWO_LINES).unwrap();
        let again = parse_corpus(&to_jsonl(&s)).unwrap();
        assert_eq!(s, again);
    }
}
