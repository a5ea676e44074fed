//! Deterministic template-based task streams for desk-scale experiments.
//!
//! Each task is a domain with its own intents, a private lexicon and a slot
//! inventory that is partly shared with every other task (shared slot names,
//! domain-qualified placeholders). Raw text is realized with concrete values
//! and then run through [`delexicalize`](super::delexicalize).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DialogAct, Task, TaskStream, Utterance};
use crate::error::{Error, Result};

const DOMAINS: &[&str] = &[
    "attraction",
    "restaurant",
    "hotel",
    "train",
    "taxi",
    "hospital",
    "police",
    "booking",
];

const SLOT_NAMES: &[&str] = &[
    "area",
    "name",
    "pricerange",
    "phone",
    "address",
    "postcode",
    "type",
    "stars",
    "parking",
    "internet",
    "food",
    "fee",
    "day",
    "people",
    "time",
    "departure",
    "destination",
    "leaveat",
    "arriveby",
    "ref",
    "choice",
    "duration",
    "price",
    "department",
];

const INTENTS: &[&str] = &["Inform", "Recommend", "Offer"];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_tasks: usize,
    pub utterances_per_task: usize,
    pub slots_per_task: usize,
    pub shared_slot_fraction: f64,
    pub template_count: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_tasks: 3,
            utterances_per_task: 500,
            slots_per_task: 6,
            shared_slot_fraction: 0.3,
            template_count: 5,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_tasks", self.n_tasks),
            ("utterances_per_task", self.utterances_per_task),
            ("slots_per_task", self.slots_per_task),
            ("template_count", self.template_count),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.shared_slot_fraction) {
            return Err(Error::Validation(format!(
                "shared_slot_fraction {} outside [0, 1]",
                self.shared_slot_fraction
            )));
        }
        Ok(())
    }

    fn n_shared(&self) -> usize {
        ((self.shared_slot_fraction * self.slots_per_task as f64).round() as usize)
            .min(self.slots_per_task)
    }
}

struct WordMint {
    used: HashSet<String>,
}

impl WordMint {
    fn new() -> Self {
        WordMint {
            used: ["and", "the", "is", "a", "with"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

struct TaskGrammar {
    domain: String,
    intents: Vec<String>,
    slots: Vec<String>,
    carriers: Vec<String>,
    values: Vec<Vec<String>>,
    /// templates[intent][j] = (prefix words, suffix words)
    templates: Vec<Vec<(Vec<String>, Vec<String>)>>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn slot_name(idx: usize) -> String {
    SLOT_NAMES
        .get(idx)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("slot{idx}"))
}

fn build_grammar(
    spec: &SyntheticSpec,
    t: usize,
    mint: &mut WordMint,
    value_counter: &mut usize,
    rng: &mut ChaCha8Rng,
) -> TaskGrammar {
    let domain = DOMAINS
        .get(t)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("domain{t}"));
    let intents = INTENTS
        .iter()
        .map(|i| format!("{}-{}", capitalize(&domain), i))
        .collect();

    let n_shared = spec.n_shared();
    let n_own = spec.slots_per_task - n_shared;
    let mut slots: Vec<String> = (0..n_shared).map(slot_name).collect();
    slots.extend((0..n_own).map(|j| slot_name(n_shared + t * n_own + j)));

    let lexicon: Vec<String> = (0..10 * spec.template_count)
        .map(|_| mint.word(rng))
        .collect();
    let carriers = slots.iter().map(|_| mint.word(rng)).collect();
    let values = slots
        .iter()
        .map(|_| {
            (0..4)
                .map(|_| {
                    *value_counter += 1;
                    format!("{} {}", capitalize(&mint.word(rng)), value_counter)
                })
                .collect()
        })
        .collect();

    // cycle through a shuffled lexicon so every word gets used
    let mut pool: Vec<String> = Vec::new();
    let mut draw = |rng: &mut ChaCha8Rng| {
        if pool.is_empty() {
            pool = lexicon.clone();
            pool.shuffle(rng);
        }
        pool.pop().unwrap()
    };
    let templates = INTENTS
        .iter()
        .map(|_| {
            (0..spec.template_count)
                .map(|_| {
                    let prefix_len = rng.gen_range(3..=4);
                    let suffix_len = rng.gen_range(0..=2);
                    let prefix = (0..prefix_len).map(|_| draw(rng)).collect();
                    let suffix = (0..suffix_len).map(|_| draw(rng)).collect();
                    (prefix, suffix)
                })
                .collect()
        })
        .collect();

    TaskGrammar {
        domain,
        intents,
        slots,
        carriers,
        values,
        templates,
    }
}

fn realize(g: &TaskGrammar, rng: &mut ChaCha8Rng) -> Utterance {
    let intent = rng.gen_range(0..g.intents.len());
    let k = rng.gen_range(1..=g.slots.len().min(3));
    let mut chosen: Vec<usize> = (0..g.slots.len()).collect();
    chosen.shuffle(rng);
    chosen.truncate(k);
    chosen.sort_unstable();

    let (prefix, suffix) = &g.templates[intent][rng.gen_range(0..g.templates[intent].len())];
    let mut words: Vec<String> = prefix.clone();
    let mut da = DialogAct::new(g.domain.clone(), g.intents[intent].clone());
    for (n, &s) in chosen.iter().enumerate() {
        let value = &g.values[s][rng.gen_range(0..g.values[s].len())];
        if n > 0 {
            words.push("and".into());
        }
        words.push(g.carriers[s].clone());
        words.push(value.clone());
        da = da.with_pair(g.slots[s].clone(), value.clone());
    }
    words.extend(suffix.iter().cloned());
    let raw = capitalize(&words.join(" "));
    Utterance::from_raw(raw, da)
}

/// Generates a stream with an 80/10/10 train/valid/test split per task.
pub fn generate_synthetic_stream(spec: &SyntheticSpec) -> Result<TaskStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mint = WordMint::new();
    let mut value_counter = 0;
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for t in 0..spec.n_tasks {
        let grammar = build_grammar(spec, t, &mut mint, &mut value_counter, &mut rng);
        let utterances: Vec<Utterance> = (0..spec.utterances_per_task)
            .map(|_| realize(&grammar, &mut rng))
            .collect();
        let n = utterances.len();
        let n_valid = n / 10;
        let n_test = n / 10;
        let n_train = n - n_valid - n_test;
        let mut it = utterances.into_iter();
        let mut task = Task::new(t, grammar.domain.clone());
        task.train = it.by_ref().take(n_train).collect();
        task.valid = it.by_ref().take(n_valid).collect();
        task.test = it.collect();
        tasks.push(task);
    }
    TaskStream::new(tasks)
}
