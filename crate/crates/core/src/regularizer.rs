//! Quadratic consolidation penalties and distillation.
//!
//! EWC anchors the model to the previous task's converged parameters with a
//! diagonal empirical Fisher computed on the stored exemplars; its weight is
//! scaled by `sqrt(V_old / V_new)` so tasks that bring little new vocabulary
//! are consolidated harder. L2 is the unit-Fisher special case.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherDiagonal(pub Vec<f64>);

impl FisherDiagonal {
    pub fn ones(n: usize) -> Self {
        FisherDiagonal(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcAnchor {
    pub theta_prev: Vec<f64>,
    pub fisher: FisherDiagonal,
}

impl EwcAnchor {
    pub fn new(theta_prev: Vec<f64>, fisher: FisherDiagonal) -> Result<Self> {
        if theta_prev.len() != fisher.len() {
            return Err(Error::Shape(format!(
                "anchor has {} parameters but Fisher has {}",
                theta_prev.len(),
                fisher.len()
            )));
        }
        Ok(EwcAnchor { theta_prev, fisher })
    }
}

/// Empirical Fisher: mean over exemplars of the squared loss gradient.
pub fn fisher_diagonal(model: &Model, exemplars: &[Example]) -> Result<FisherDiagonal> {
    if exemplars.is_empty() {
        return Err(Error::Precondition(
            "Fisher diagonal needs at least one exemplar".into(),
        ));
    }
    let mut f = vec![0.0; model.num_params()];
    for ex in exemplars {
        let (_, g) = model.grad_ce(ex)?;
        for (a, b) in f.iter_mut().zip(&g) {
            *a += b * b;
        }
    }
    let n = exemplars.len() as f64;
    f.iter_mut().for_each(|v| *v /= n);
    Ok(FisherDiagonal(f))
}

/// Adds `2λ F ⊙ (θ − θ_prev)` to `grad` and returns `λ Σ F_i (θ_i − θ_prev,i)²`.
pub fn add_ewc_term(
    theta: &[f64],
    anchor: &EwcAnchor,
    lambda: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if theta.len() != anchor.theta_prev.len() || grad.len() != theta.len() {
        return Err(Error::Shape(format!(
            "theta has {} entries, anchor has {}",
            theta.len(),
            anchor.theta_prev.len()
        )));
    }
    let mut penalty = 0.0;
    for (((g, &w), &w0), &f) in grad
        .iter_mut()
        .zip(theta)
        .zip(&anchor.theta_prev)
        .zip(&anchor.fisher.0)
    {
        let delta = w - w0;
        penalty += f * delta * delta;
        *g += 2.0 * lambda * f * delta;
    }
    Ok(lambda * penalty)
}

/// `(λ Σ F_i Δ_i², 2λ F ⊙ Δ)`; no ½ factor.
pub fn ewc_penalty(theta: &[f64], anchor: &EwcAnchor, lambda: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; theta.len()];
    let p = add_ewc_term(theta, anchor, lambda, &mut grad)?;
    Ok((p, grad))
}

/// `λ_base · sqrt(V_old / max(V_new, 1))`.
pub fn adaptive_lambda(lambda_base: f64, v_old: usize, v_new: usize) -> f64 {
    lambda_base * (v_old as f64 / v_new.max(1) as f64).sqrt()
}

/// EWC with unit Fisher.
pub fn l2_penalty(theta: &[f64], theta_prev: &[f64], weight: f64) -> Result<(f64, Vec<f64>)> {
    if theta.len() != theta_prev.len() {
        return Err(Error::Shape(format!(
            "theta has {} entries, previous has {}",
            theta.len(),
            theta_prev.len()
        )));
    }
    let mut grad = vec![0.0; theta.len()];
    let mut penalty = 0.0;
    for ((g, &w), &w0) in grad.iter_mut().zip(theta).zip(theta_prev) {
        let delta = w - w0;
        penalty += delta * delta;
        *g = 2.0 * weight * delta;
    }
    Ok((weight * penalty, grad))
}

/// Tokens seen in previous tasks but absent from the current one.
pub fn old_only_vocab(prev: &BTreeSet<usize>, cur: &BTreeSet<usize>) -> BTreeSet<usize> {
    prev.difference(cur).copied().collect()
}

fn restricted_softmax(logits: &[f64], subset: &[usize]) -> Vec<f64> {
    let max = subset
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = subset.iter().map(|&i| (logits[i] - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Distillation loss and its gradient with respect to the current model's
/// logits at each position. Both distributions are renormalized over
/// `subset` (temperature 1).
pub fn kd_logit_terms(
    cur_logits: &[Vec<f64>],
    prev_logits: &[Vec<f64>],
    subset: &[usize],
) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let grads = cur_logits
        .iter()
        .zip(prev_logits)
        .map(|(cur, prev)| {
            let mut g = vec![0.0; cur.len()];
            if subset.is_empty() {
                return g;
            }
            let p_hat = restricted_softmax(prev, subset);
            let p = restricted_softmax(cur, subset);
            for ((&i, &t), &q) in subset.iter().zip(&p_hat).zip(&p) {
                loss -= t * q.ln();
                g[i] = q - t;
            }
            g
        })
        .collect();
    (loss, grads)
}

/// `−Σ_k Σ_{i∈L} p̂_{k,i} log p_{k,i}` under teacher forcing on `ex`.
pub fn kd_loss(cur: &Model, prev: &Model, ex: &Example, subset: &BTreeSet<usize>) -> Result<f64> {
    if subset.is_empty() {
        return Ok(0.0);
    }
    let subset: Vec<usize> = subset.iter().copied().collect();
    let cur_logits: Vec<Vec<f64>> = cur
        .forward_eval(ex)?
        .steps
        .into_iter()
        .map(|s| s.logits)
        .collect();
    let prev_logits: Vec<Vec<f64>> = prev
        .forward_eval(ex)?
        .steps
        .into_iter()
        .map(|s| s.logits)
        .collect();
    Ok(kd_logit_terms(&cur_logits, &prev_logits, &subset).0)
}
