//! Independent reference implementations used by the acceptance checks.
//! None of these call into the code under test beyond reading model losses.

use std::collections::{BTreeSet, HashMap};

use arper_core::corpus::Example;
use arper_core::model::Model;

pub const FD_EPS: f64 = 1e-4;

/// Central finite-difference gradient of the teacher-forced loss.
pub fn fd_grad(model: &Model, ex: &Example) -> Vec<f64> {
    let mut m = model.clone();
    let mut g = vec![0.0; m.num_params()];
    for (i, gi) in g.iter_mut().enumerate() {
        let orig = m.theta()[i];
        m.theta_mut()[i] = orig + FD_EPS;
        let up = m.loss_ce(ex).unwrap();
        m.theta_mut()[i] = orig - FD_EPS;
        let down = m.loss_ce(ex).unwrap();
        m.theta_mut()[i] = orig;
        *gi = (up - down) / (2.0 * FD_EPS);
    }
    g
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Straight-line transcription of the prioritized selection loop:
/// sort once, then sweep repeatedly with a per-sweep set of seen slot sets.
pub fn algorithm1(scores: &[f64], slot_sets: &[BTreeSet<String>], m: usize) -> Vec<usize> {
    let mut d: Vec<usize> = (0..scores.len()).collect();
    // insertion sort keeps equal keys in input order
    for i in 1..d.len() {
        let mut j = i;
        while j > 0 && scores[d[j - 1]] > scores[d[j]] {
            d.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut e: Vec<usize> = Vec::new();
    while e.len() < m {
        if d.is_empty() {
            return e;
        }
        let mut seen: Vec<&BTreeSet<String>> = Vec::new();
        let snapshot = d.clone();
        for item in snapshot {
            if seen.contains(&&slot_sets[item]) {
                continue;
            }
            d.retain(|&x| x != item);
            e.push(item);
            seen.push(&slot_sets[item]);
            if e.len() == m {
                return e;
            }
        }
    }
    e
}

/// Greedy herding recomputing every candidate mean from scratch.
pub fn herding(features: &[Vec<f64>], m: usize) -> Vec<usize> {
    let n = features.len();
    let dim = features.first().map_or(0, Vec::len);
    let mu: Vec<f64> = (0..dim)
        .map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n as f64)
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < m.min(n) {
        let k = chosen.len() + 1;
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..n {
            if chosen.contains(&cand) {
                continue;
            }
            let mut dist = 0.0;
            for j in 0..dim {
                let s: f64 =
                    chosen.iter().map(|&c| features[c][j]).sum::<f64>() + features[cand][j];
                let diff = mu[j] - s / k as f64;
                dist += diff * diff;
            }
            match best {
                Some((bd, _)) if bd <= dist => {}
                _ => best = Some((dist, cand)),
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

fn ngrams(tokens: &[&str], n: usize) -> HashMap<Vec<String>, usize> {
    let mut out = HashMap::new();
    for i in 0..tokens.len().saturating_sub(n - 1) {
        let g: Vec<String> = tokens[i..i + n].iter().map(|s| s.to_string()).collect();
        *out.entry(g).or_insert(0) += 1;
    }
    out
}

/// Reference corpus BLEU-4 computed as a product of precisions.
pub fn reference_bleu(cands: &[&str], refs: &[Vec<&str>]) -> f64 {
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, rs) in cands.iter().zip(refs) {
        let ct: Vec<&str> = c.split_whitespace().collect();
        let rts: Vec<Vec<&str>> = rs.iter().map(|r| r.split_whitespace().collect()).collect();
        c_len += ct.len();
        let mut best = usize::MAX;
        let mut best_diff = usize::MAX;
        for r in &rts {
            let diff = r.len().abs_diff(ct.len());
            if diff < best_diff || (diff == best_diff && r.len() < best) {
                best = r.len();
                best_diff = diff;
            }
        }
        r_len += best;
        for n in 1..=4 {
            let cg = ngrams(&ct, n);
            for (g, cnt) in &cg {
                let max_ref = rts
                    .iter()
                    .map(|r| *ngrams(r, n).get(g).unwrap_or(&0))
                    .max()
                    .unwrap();
                num[n - 1] += (*cnt).min(max_ref);
                den[n - 1] += cnt;
            }
        }
    }
    if num.contains(&0) {
        return 0.0;
    }
    let prod: f64 = (0..4).map(|i| num[i] as f64 / den[i] as f64).product();
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    bp * prod.powf(0.25)
}
