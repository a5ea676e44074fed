//! Slot error rate, corpus BLEU-4 and the Ω stream aggregates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_placeholder, strip_eos, DialogAct, Encoder, Utterance};
use crate::error::{Error, Result};
use crate::model::Model;

/// Scores after learning task `step` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub ser_all: f64,
    pub bleu_all: f64,
    pub ser_first: f64,
    pub bleu_first: f64,
}

/// Missing/redundant placeholder counts for one generated utterance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SlotErrors {
    pub missing: usize,
    pub redundant: usize,
    pub required: usize,
}

impl SlotErrors {
    pub fn ratio(&self) -> f64 {
        if self.required == 0 {
            0.0
        } else {
            (self.missing + self.redundant) as f64 / self.required as f64
        }
    }

    fn add(&mut self, o: SlotErrors) {
        self.missing += o.missing;
        self.redundant += o.redundant;
        self.required += o.required;
    }
}

/// Multiset comparison of produced against required placeholders.
pub fn slot_errors(generated: &[String], da: &DialogAct) -> SlotErrors {
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let required = da.required_placeholders();
    for p in &required {
        counts.entry(p.clone()).or_default().0 += 1;
    }
    for t in generated.iter().filter(|t| is_placeholder(t)) {
        counts.entry(t.clone()).or_default().1 += 1;
    }
    let mut e = SlotErrors {
        required: required.len(),
        ..Default::default()
    };
    for (req, prod) in counts.values() {
        e.missing += req.saturating_sub(*prod);
        e.redundant += prod.saturating_sub(*req);
    }
    e
}

/// `(missing + redundant) / |required|`; may exceed 1. Zero-slot acts
/// score 0 and are excluded from pooled SER.
pub fn ser(generated: &[String], da: &DialogAct) -> f64 {
    slot_errors(generated, da).ratio()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus-level BLEU-4: clipped n-gram precisions, uniform weights,
/// closest-reference-length brevity penalty, no smoothing.
pub fn bleu4(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} candidates but {} reference groups",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Shape("empty reference group".into()));
        }
        cand_len += cand.len();
        // closest reference length, shorter on ties
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap();
        ref_len += closest;
        for n in 1..=4 {
            let cand_counts = ngram_counts(cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in cand_counts {
                matched[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    if cand_len == 0 || matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * log_p.exp())
}

/// Arithmetic mean of per-step scores.
pub fn omega(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Precondition("omega of an empty list".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalScores {
    pub ser: f64,
    pub bleu: f64,
    pub slot_errors: SlotErrors,
}

/// Generates for every test act and scores the pool: SER micro-averaged over
/// required slots, BLEU against all pool utterances sharing the same
/// delexicalized act.
pub fn evaluate_model(
    model: &Model,
    encoder: &Encoder,
    test_sets: &[&[Utterance]],
    max_len: usize,
) -> Result<EvalScores> {
    let pool: Vec<&Utterance> = test_sets.iter().flat_map(|s| s.iter()).collect();
    if pool.is_empty() {
        return Err(Error::Precondition("empty evaluation pool".into()));
    }
    let eos = encoder.eos_id();
    let mut groups: HashMap<_, Vec<Vec<String>>> = HashMap::new();
    for u in &pool {
        groups
            .entry(u.da.delex_key())
            .or_default()
            .push(strip_eos(&u.tokens).to_vec());
    }

    // generation only depends on the binary feature vector
    let mut cache: HashMap<Vec<u8>, Vec<String>> = HashMap::new();
    let mut candidates = Vec::with_capacity(pool.len());
    let mut references = Vec::with_capacity(pool.len());
    let mut errors = SlotErrors::default();
    for u in &pool {
        let feat = encoder.inventory.feature_vector(&u.da)?;
        let key: Vec<u8> = feat.iter().map(|&v| v as u8).collect();
        let generated = match cache.get(&key) {
            Some(g) => g.clone(),
            None => {
                let ids = model.generate(&feat, eos, max_len)?;
                let g = encoder.decode(&ids);
                cache.insert(key, g.clone());
                g
            }
        };
        if !u.da.pairs.is_empty() {
            errors.add(slot_errors(&generated, &u.da));
        }
        candidates.push(strip_eos(&generated).to_vec());
        references.push(groups[&u.da.delex_key()].clone());
    }
    Ok(EvalScores {
        ser: errors.ratio(),
        bleu: bleu4(&candidates, &references)?,
        slot_errors: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn da(slots: &[&str]) -> DialogAct {
        let mut d = DialogAct::new("restaurant", "inform");
        for s in slots {
            d = d.with_pair(*s, "v");
        }
        d
    }

    #[test]
    fn ser_one_missing_one_redundant() {
        let g = toks(
            "[slot-restaurant-name] serves [slot-restaurant-food] at [slot-restaurant-pricerange]",
        );
        let r = ser(&g, &da(&["name", "food", "area"]));
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ser_exact_match_is_zero() {
        let g = toks("[slot-restaurant-area] and [slot-restaurant-name]");
        assert_eq!(ser(&g, &da(&["name", "area"])), 0.0);
    }

    #[test]
    fn ser_can_exceed_one() {
        let g = toks("[slot-restaurant-area] [slot-restaurant-fee]");
        assert_eq!(ser(&g, &da(&["name"])), 3.0);
    }

    #[test]
    fn ser_counts_duplicates_as_redundant() {
        let g = toks("[slot-restaurant-name] [slot-restaurant-name]");
        let e = slot_errors(&g, &da(&["name"]));
        assert_eq!((e.missing, e.redundant, e.required), (0, 1, 1));
        let e = slot_errors(&g, &da(&["name", "name"]));
        assert_eq!((e.missing, e.redundant), (0, 0));
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = toks("the cat sat on the mat");
        assert!((bleu4(&[c.clone()], &[vec![c.clone()]]).unwrap() - 1.0).abs() < 1e-12);
        let d = toks("a dog ran far away quickly");
        assert_eq!(bleu4(&[d], &[vec![c]]).unwrap(), 0.0);
    }

    #[test]
    fn bleu_length_mismatch() {
        assert!(matches!(bleu4(&[toks("a")], &[]), Err(Error::Shape(_))));
        assert!(bleu4(&[toks("a")], &[vec![]]).is_err());
    }

    #[test]
    fn bleu_brevity_penalty() {
        // candidate is a 4-token prefix of an 8-token reference: all p_n = 1
        let r = toks("one two three four five six seven eight");
        let c = toks("one two three four");
        let b = bleu4(&[c], &[vec![r]]).unwrap();
        assert!((b - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn omega_cases() {
        assert_eq!(omega(&[10.0, 20.0]).unwrap(), 15.0);
        assert_eq!(omega(&[3.5]).unwrap(), 3.5);
        assert_eq!(omega(&[0.25; 7]).unwrap(), 0.25);
        assert!(omega(&[]).is_err());
    }
}
