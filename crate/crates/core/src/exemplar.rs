//! Exemplar selection, budget apportionment and priority-list reduction.
//!
//! Every selection routine returns a [`PriorityList`]; the only mutation a
//! list supports afterwards is keeping a prefix, so reducing a task's
//! exemplars to a smaller budget always drops from the back.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, Encoder, Split, Utterance};
use crate::error::{Error, Result};
use crate::model::Model;

/// `U = loss · slot_count^β`, with `0^β = 0` for `β > 0` and `0^0 = 1`.
pub fn priority_score(loss: f64, slot_count: usize, beta: f64) -> f64 {
    let weight = if slot_count == 0 {
        if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (slot_count as f64).powf(beta)
    };
    loss * weight
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub utterance: Utterance,
    pub u_score: f64,
    /// Position in the task's training split.
    pub source_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorityList {
    items: Vec<Exemplar>,
}

impl PriorityList {
    pub fn from_items(items: Vec<Exemplar>) -> Self {
        PriorityList { items }
    }

    pub fn items(&self) -> &[Exemplar] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar> {
        self.items.iter()
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.items.iter().map(|e| &e.utterance)
    }

    /// Keeps the first `n` items.
    pub fn truncate(&mut self, n: usize) {
        self.items.truncate(n);
    }

    pub fn is_prefix_of(&self, other: &PriorityList) -> bool {
        self.len() <= other.len() && other.items[..self.len()] == self.items[..]
    }
}

/// Per-task priority lists under a global budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExemplarStore {
    pub budget: usize,
    pub per_task: BTreeMap<usize, PriorityList>,
}

impl ExemplarStore {
    pub fn new(budget: usize) -> Self {
        ExemplarStore {
            budget,
            per_task: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> usize {
        self.per_task.values().map(PriorityList::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn get(&self, task: usize) -> Option<&PriorityList> {
        self.per_task.get(&task)
    }

    pub fn insert(&mut self, task: usize, list: PriorityList) {
        self.per_task.insert(task, list);
    }

    /// All stored utterances, task by task, in priority order.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.per_task.values().flat_map(|l| l.utterances())
    }

    /// Truncates every list to its apportioned share of the budget.
    /// `sizes[j]` is the training-set size of task `j`.
    pub fn reduce(&mut self, sizes: &[usize]) {
        let shares = allocate_budget(self.budget, sizes);
        for (task, list) in self.per_task.iter_mut() {
            let share = shares.get(*task).copied().unwrap_or(0);
            if list.len() > share {
                list.truncate(share);
            }
        }
    }

    /// JSONL dump using the corpus schema plus a `u_score` field.
    pub fn to_jsonl(&self, task_names: &[String]) -> String {
        let mut out = String::new();
        for (task, list) in &self.per_task {
            let name = task_names
                .get(*task)
                .cloned()
                .unwrap_or_else(|| task.to_string());
            for e in list.iter() {
                let rec = StoredRecord {
                    record: CorpusRecord::from_utterance(&name, Split::Train, &e.utterance),
                    u_score: e.u_score,
                    source_index: e.source_index,
                };
                out.push_str(&serde_json::to_string(&rec).expect("serialize exemplar"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(content: &str, task_names: &[String], budget: usize) -> Result<Self> {
        let mut store = ExemplarStore::new(budget);
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoredRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let task = task_names
                .iter()
                .position(|n| *n == rec.record.task)
                .ok_or_else(|| Error::Format {
                    line: i + 1,
                    message: format!("unknown task `{}`", rec.record.task),
                })?;
            let list = store.per_task.entry(task).or_default();
            let parsed = crate::corpus::parse_record(rec.record);
            list.items.push(Exemplar {
                utterance: parsed,
                u_score: rec.u_score,
                source_index: rec.source_index,
            });
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredRecord {
    #[serde(flatten)]
    record: CorpusRecord,
    u_score: f64,
    #[serde(default)]
    source_index: usize,
}

/// Largest-remainder apportionment of `budget` proportional to `sizes`,
/// remainder ties to the earlier task, each share capped at its size.
pub fn allocate_budget(budget: usize, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    if budget >= total {
        return sizes.to_vec();
    }
    // exact integer arithmetic: share_i = budget * size_i / total
    let mut shares: Vec<usize> = Vec::with_capacity(sizes.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(sizes.len());
    for (i, &s) in sizes.iter().enumerate() {
        let num = budget as u128 * s as u128;
        shares.push((num / total as u128) as usize);
        remainders.push((num % total as u128, i));
    }
    let mut left = budget - shares.iter().sum::<usize>();
    // largest remainder first, earlier task on ties
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        shares[i] += 1;
        left -= 1;
    }
    shares
}

/// Priority scores of `items` under `model`.
pub fn score_items(
    model: &Model,
    encoder: &Encoder,
    items: &[Utterance],
    beta: f64,
) -> Result<Vec<f64>> {
    items
        .iter()
        .map(|u| {
            let loss = model.loss_ce(&encoder.encode(u)?)?;
            Ok(priority_score(loss, u.da.slot_count(), beta))
        })
        .collect()
}

fn make_list(items: &[Utterance], scores: &[f64], picked: &[usize]) -> PriorityList {
    PriorityList::from_items(
        picked
            .iter()
            .map(|&i| Exemplar {
                utterance: items[i].clone(),
                u_score: scores[i],
                source_index: i,
            })
            .collect(),
    )
}

/// Ascending-score passes; within a pass each distinct slot set is taken at
/// most once. Stops at `m` items or when `items` is exhausted.
pub fn select_prioritized(items: &[Utterance], scores: &[f64], m: usize) -> PriorityList {
    assert_eq!(items.len(), scores.len());
    let mut remaining: Vec<usize> = (0..items.len()).collect();
    // stable: equal scores keep input order
    remaining.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let slot_sets: Vec<BTreeSet<String>> = items.iter().map(|u| u.da.slot_set()).collect();

    let target = m.min(items.len());
    let mut picked = Vec::with_capacity(target);
    while picked.len() < target {
        let mut seen: HashSet<&BTreeSet<String>> = HashSet::new();
        let mut kept = Vec::with_capacity(remaining.len());
        for &i in &remaining {
            if picked.len() < target && seen.insert(&slot_sets[i]) {
                picked.push(i);
            } else {
                kept.push(i);
            }
        }
        remaining = kept;
    }
    make_list(items, scores, &picked)
}

/// Prioritized selection with scores computed from `model`.
pub fn select_exemplars_prioritized(
    items: &[Utterance],
    model: &Model,
    encoder: &Encoder,
    m: usize,
    beta: f64,
) -> Result<PriorityList> {
    let scores = score_items(model, encoder, items, beta)?;
    Ok(select_prioritized(items, &scores, m))
}

/// Uniform sample without replacement, stored in ascending score order.
pub fn select_random(items: &[Utterance], scores: &[f64], m: usize, seed: u64) -> PriorityList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, items.len(), m.min(items.len())).into_vec();
    picked.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    make_list(items, scores, &picked)
}

pub fn select_exemplars_random(
    items: &[Utterance],
    model: &Model,
    encoder: &Encoder,
    m: usize,
    beta: f64,
    seed: u64,
) -> Result<PriorityList> {
    let scores = score_items(model, encoder, items, beta)?;
    Ok(select_random(items, &scores, m, seed))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy herding towards the mean feature; selection order is kept.
pub fn select_herding(
    items: &[Utterance],
    features: &[Vec<f64>],
    scores: &[f64],
    m: usize,
) -> PriorityList {
    assert_eq!(items.len(), features.len());
    let n = items.len();
    let target = m.min(n);
    if target == 0 {
        return PriorityList::default();
    }
    let dim = features[0].len();
    let mut mu = vec![0.0; dim];
    for f in features {
        for (a, b) in mu.iter_mut().zip(f) {
            *a += b;
        }
    }
    mu.iter_mut().for_each(|v| *v /= n as f64);

    let mut used = vec![false; n];
    let mut running = vec![0.0; dim];
    let mut picked = Vec::with_capacity(target);
    let mut candidate = vec![0.0; dim];
    for k in 1..=target {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in features.iter().enumerate() {
            if used[i] {
                continue;
            }
            for j in 0..dim {
                candidate[j] = (running[j] + f[j]) / k as f64;
            }
            let d = dist2(&mu, &candidate);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("an unselected item remains");
        used[i] = true;
        for (r, f) in running.iter_mut().zip(&features[i]) {
            *r += f;
        }
        picked.push(i);
    }
    make_list(items, scores, &picked)
}

pub fn select_exemplars_herding(
    items: &[Utterance],
    model: &Model,
    encoder: &Encoder,
    m: usize,
    beta: f64,
) -> Result<PriorityList> {
    let scores = score_items(model, encoder, items, beta)?;
    let features = items
        .iter()
        .map(|u| encoder.inventory.feature_vector(&u.da))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_herding(items, &features, &scores, m))
}

/// Replaces each exemplar's text by the model's own greedy generation for
/// the same dialog act and rescores it.
pub fn make_pseudo_exemplars(
    model: &Model,
    encoder: &Encoder,
    list: &PriorityList,
    beta: f64,
    max_len: usize,
) -> Result<PriorityList> {
    let eos = encoder.eos_id();
    let items = list
        .iter()
        .map(|e| {
            let da_vec = encoder.inventory.feature_vector(&e.utterance.da)?;
            let ids = model.generate(&da_vec, eos, max_len)?;
            let tokens = encoder.decode(&ids);
            let loss = model.loss_ce(&crate::corpus::Example {
                tokens: ids,
                da: da_vec,
            })?;
            let utterance = Utterance {
                raw_text: crate::corpus::strip_eos(&tokens).join(" "),
                tokens,
                da: e.utterance.da.clone(),
            };
            Ok(Exemplar {
                u_score: priority_score(loss, utterance.da.slot_count(), beta),
                utterance,
                source_index: e.source_index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PriorityList::from_items(items))
}
