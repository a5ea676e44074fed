//! Dialog-act data model, task streams and vocabulary bookkeeping.
//!
//! A [`TaskStream`] is an ordered list of [`Task`]s, each holding
//! delexicalized [`Utterance`]s split into train/valid/test. Slot values are
//! replaced by placeholder tokens of the form `[slot-<domain>-<slotname>]`
//! and every token sequence ends with [`EOS`].

mod delex;
mod jsonl;
mod synthetic;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use delex::{delexicalize, is_placeholder, placeholder, tokenize_delex};
pub use jsonl::{
    load_corpus, parse_corpus, parse_record, to_jsonl, write_corpus, CorpusRecord, SlotRecord,
};
pub use synthetic::{generate_synthetic_stream, SyntheticSpec};

/// End-of-sequence marker appended to every token sequence.
pub const EOS: &str = "<eos>";

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotValue {
    pub slot: String,
    pub value: String,
}

/// An intent plus ordered slot-value pairs.
///
/// `domain` only feeds placeholder naming; it does not take part in the
/// feature map.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogAct {
    pub domain: String,
    pub intent: String,
    pub pairs: Vec<SlotValue>,
}

impl DialogAct {
    pub fn new(domain: impl Into<String>, intent: impl Into<String>) -> Self {
        DialogAct {
            domain: domain.into(),
            intent: intent.into(),
            pairs: Vec::new(),
        }
    }

    pub fn with_pair(mut self, slot: impl Into<String>, value: impl Into<String>) -> Self {
        self.pairs.push(SlotValue {
            slot: slot.into(),
            value: value.into(),
        });
        self
    }

    /// Distinct slot names, sorted.
    pub fn slot_set(&self) -> BTreeSet<String> {
        self.pairs.iter().map(|p| p.slot.clone()).collect()
    }

    /// `|S(d)|`: number of distinct slot names.
    pub fn slot_count(&self) -> usize {
        self.slot_set().len()
    }

    /// One placeholder per pair, so repeated slots yield repeated placeholders.
    pub fn required_placeholders(&self) -> Vec<String> {
        self.pairs
            .iter()
            .map(|p| placeholder(&self.domain, &p.slot))
            .collect()
    }

    /// Grouping key used for BLEU reference groups: intent plus the
    /// delexicalized pairs (values dropped, multiplicity kept).
    pub fn delex_key(&self) -> (String, String, Vec<String>) {
        let mut slots: Vec<String> = self.pairs.iter().map(|p| p.slot.clone()).collect();
        slots.sort();
        (self.domain.clone(), self.intent.clone(), slots)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    /// Delexicalized, lowercased tokens ending in [`EOS`].
    pub tokens: Vec<String>,
    pub da: DialogAct,
    pub raw_text: String,
}

impl Utterance {
    /// Builds an utterance from already delexicalized text.
    pub fn from_delex(delex_text: &str, da: DialogAct, raw_text: impl Into<String>) -> Self {
        Utterance {
            tokens: tokenize_delex(delex_text),
            da,
            raw_text: raw_text.into(),
        }
    }

    /// Builds an utterance by delexicalizing `raw_text` against `da`.
    pub fn from_raw(raw_text: impl Into<String>, da: DialogAct) -> Self {
        let raw_text = raw_text.into();
        let tokens = delexicalize(&raw_text, &da);
        Utterance {
            tokens,
            da,
            raw_text,
        }
    }

    /// Tokens without the trailing end marker, joined by spaces.
    pub fn delex_text(&self) -> String {
        strip_eos(&self.tokens).join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn strip_eos(tokens: &[String]) -> &[String] {
    match tokens.last() {
        Some(t) if t == EOS => &tokens[..tokens.len() - 1],
        _ => tokens,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn parse(label: &str) -> Option<Split> {
        match label {
            "train" => Some(Split::Train),
            "valid" | "validation" | "dev" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub name: String,
    pub train: Vec<Utterance>,
    pub valid: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Task {
    pub fn new(id: usize, name: impl Into<String>) -> Self {
        Task {
            id,
            name: name.into(),
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn split(&self, split: Split) -> &[Utterance] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Utterance> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    /// Distinct tokens of the train split.
    pub fn train_vocab(&self) -> HashSet<&str> {
        self.train
            .iter()
            .flat_map(|u| u.tokens.iter().map(String::as_str))
            .collect()
    }
}

/// Global token inventory in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    /// Task index at which each token first appears (any split).
    first_task: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn build(tasks: &[Task]) -> Self {
        let mut vocab = Vocab::default();
        for (t, task) in tasks.iter().enumerate() {
            for split in [Split::Train, Split::Valid, Split::Test] {
                for u in task.split(split) {
                    for tok in &u.tokens {
                        if !vocab.index.contains_key(tok) {
                            vocab.index.insert(tok.clone(), vocab.tokens.len());
                            vocab.tokens.push(tok.clone());
                            vocab.first_task.push(t);
                        }
                    }
                }
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn first_task(&self, id: usize) -> usize {
        self.first_task[id]
    }

    pub fn eos_id(&self) -> Option<usize> {
        self.id(EOS)
    }
}

/// Ordered intent and slot names defining the binary DA feature space.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaInventory {
    pub intents: Vec<String>,
    pub slots: Vec<String>,
}

impl DaInventory {
    pub fn new(intents: Vec<String>, slots: Vec<String>) -> Self {
        DaInventory { intents, slots }
    }

    pub fn dim(&self) -> usize {
        self.intents.len() + self.slots.len()
    }

    /// Intent one-hot followed by one indicator per distinct slot.
    pub fn feature_vector(&self, da: &DialogAct) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim()];
        let intent = self
            .intents
            .iter()
            .position(|i| *i == da.intent)
            .ok_or_else(|| Error::Inventory {
                kind: "intent",
                name: da.intent.clone(),
            })?;
        v[intent] = 1.0;
        for slot in da.slot_set() {
            let s = self
                .slots
                .iter()
                .position(|x| *x == slot)
                .ok_or(Error::Inventory {
                    kind: "slot",
                    name: slot,
                })?;
            v[self.intents.len() + s] = 1.0;
        }
        Ok(v)
    }
}

/// Free-function form of [`DaInventory::feature_vector`].
pub fn da_feature_vector(da: &DialogAct, inventory: &DaInventory) -> Result<Vec<f64>> {
    inventory.feature_vector(da)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    vocab: Vocab,
}

impl TaskStream {
    /// Validates the tasks, renumbers nothing, and builds the vocabulary.
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Validation("no tasks".into()));
        }
        for (i, task) in tasks.iter().enumerate() {
            if task.id != i {
                return Err(Error::Validation(format!(
                    "task `{}` has id {} at position {i}",
                    task.name, task.id
                )));
            }
            if task.train.is_empty() {
                return Err(Error::Validation(format!(
                    "task `{}` has an empty train split",
                    task.name
                )));
            }
            for u in task.train.iter().chain(&task.valid).chain(&task.test) {
                if u.tokens.is_empty() {
                    return Err(Error::Validation(format!(
                        "task `{}` contains an utterance with no tokens",
                        task.name
                    )));
                }
                if u.da.intent.is_empty() {
                    return Err(Error::Validation(format!(
                        "task `{}` contains an empty intent",
                        task.name
                    )));
                }
            }
        }
        let vocab = Vocab::build(&tasks);
        Ok(TaskStream { tasks, vocab })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Intents and slots in first-appearance order over all splits.
    pub fn inventory(&self) -> DaInventory {
        let mut intents = Vec::new();
        let mut slots = Vec::new();
        let mut seen_i = HashSet::new();
        let mut seen_s = HashSet::new();
        for task in &self.tasks {
            for u in task.train.iter().chain(&task.valid).chain(&task.test) {
                if seen_i.insert(u.da.intent.clone()) {
                    intents.push(u.da.intent.clone());
                }
                for p in &u.da.pairs {
                    if seen_s.insert(p.slot.clone()) {
                        slots.push(p.slot.clone());
                    }
                }
            }
        }
        DaInventory { intents, slots }
    }

    /// Returns a stream with tasks permuted by `order` and ids renumbered.
    pub fn reordered(&self, order: &[usize]) -> Result<TaskStream> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.tasks.len()).collect::<Vec<_>>() {
            return Err(Error::Validation(format!(
                "order {order:?} is not a permutation of 0..{}",
                self.tasks.len()
            )));
        }
        let tasks = order
            .iter()
            .enumerate()
            .map(|(new_id, &old)| {
                let mut t = self.tasks[old].clone();
                t.id = new_id;
                t
            })
            .collect();
        TaskStream::new(tasks)
    }

    /// Keeps only the listed tasks, in the given order, renumbered from 0.
    pub fn subset(&self, ids: &[usize]) -> Result<TaskStream> {
        let mut seen = HashSet::new();
        for &i in ids {
            if i >= self.tasks.len() {
                return Err(Error::Index {
                    index: i,
                    max: self.tasks.len(),
                });
            }
            if !seen.insert(i) {
                return Err(Error::Validation(format!("task {i} listed twice")));
            }
        }
        let tasks = ids
            .iter()
            .enumerate()
            .map(|(new_id, &old)| {
                let mut t = self.tasks[old].clone();
                t.id = new_id;
                t
            })
            .collect();
        TaskStream::new(tasks)
    }

    /// `(V_old, V_new)` for 1-based task index `t`, from train splits only.
    pub fn vocab_counts(&self, t: usize) -> Result<(usize, usize)> {
        if t == 0 || t > self.tasks.len() {
            return Err(Error::Index {
                index: t,
                max: self.tasks.len(),
            });
        }
        let old: HashSet<&str> = self.tasks[..t - 1]
            .iter()
            .flat_map(|task| task.train_vocab())
            .collect();
        let new = self.tasks[t - 1]
            .train_vocab()
            .into_iter()
            .filter(|tok| !old.contains(tok))
            .count();
        Ok((old.len(), new))
    }
}

/// Free-function form of [`TaskStream::vocab_counts`].
pub fn vocab_counts(stream: &TaskStream, upto: usize) -> Result<(usize, usize)> {
    stream.vocab_counts(upto)
}

/// An utterance mapped to token ids and its DA feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub da: Vec<f64>,
}

/// Maps utterances into model inputs for a fixed vocabulary and inventory.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub vocab: Vocab,
    pub inventory: DaInventory,
}

impl Encoder {
    pub fn for_stream(stream: &TaskStream) -> Self {
        Encoder {
            vocab: stream.vocab().clone(),
            inventory: stream.inventory(),
        }
    }

    pub fn eos_id(&self) -> usize {
        self.vocab.eos_id().unwrap_or(0)
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| self.vocab.id(t).ok_or_else(|| Error::Encoding(t.clone())))
            .collect()
    }

    pub fn encode(&self, u: &Utterance) -> Result<Example> {
        Ok(Example {
            tokens: self.encode_tokens(&u.tokens)?,
            da: self.inventory.feature_vector(&u.da)?,
        })
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.vocab.token(i).to_string())
            .collect()
    }
}
