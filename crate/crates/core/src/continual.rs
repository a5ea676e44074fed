//! Per-task training, the exemplar lifecycle and stream execution.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Encoder, Example, Task, TaskStream, Utterance};
use crate::error::{Error, Result};
use crate::exemplar::{
    allocate_budget, make_pseudo_exemplars, select_exemplars_herding, select_exemplars_prioritized,
    select_exemplars_random, ExemplarStore, PriorityList,
};
use crate::metrics::{evaluate_model, omega, EvalRecord};
use crate::model::{Model, ModelConfig};
use crate::optim::Adam;
use crate::regularizer::{
    adaptive_lambda, add_ewc_term, fisher_diagonal, kd_logit_terms, old_only_vocab, EwcAnchor,
    FisherDiagonal,
};

/// Share of each stored exemplar list held out for validation (taken from the tail).
pub const VALID_EXEMPLAR_FRACTION: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Prioritized,
    Random,
    Herding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Finetune,
    Full,
    Er(Selection),
    ErL2,
    ErKd,
    ErDropout,
    Arper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSpec {
    pub variant: Variant,
    pub pseudo_exemplars: bool,
}

impl MethodSpec {
    pub fn new(variant: Variant) -> Self {
        MethodSpec {
            variant,
            pseudo_exemplars: false,
        }
    }

    pub fn with_pseudo(variant: Variant) -> Result<Self> {
        let m = MethodSpec {
            variant,
            pseudo_exemplars: true,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pseudo_exemplars && !self.uses_exemplars() {
            return Err(Error::Config(format!(
                "{} keeps no exemplars, pseudo-exemplars are meaningless",
                self.base_name()
            )));
        }
        Ok(())
    }

    pub fn uses_exemplars(&self) -> bool {
        !matches!(self.variant, Variant::Finetune | Variant::Full)
    }

    /// Selection rule used to build each task's exemplar list.
    pub fn selection(&self) -> Option<Selection> {
        match self.variant {
            Variant::Finetune | Variant::Full => None,
            Variant::Er(s) => Some(s),
            _ => Some(Selection::Prioritized),
        }
    }

    fn base_name(&self) -> &'static str {
        match self.variant {
            Variant::Finetune => "finetune",
            Variant::Full => "full",
            Variant::Er(Selection::Prioritized) => "er_prio",
            Variant::Er(Selection::Random) => "er_random",
            Variant::Er(Selection::Herding) => "er_herding",
            Variant::ErL2 => "er_prio+l2",
            Variant::ErKd => "er_prio+kd",
            Variant::ErDropout => "er_prio+dropout",
            Variant::Arper => "arper",
        }
    }

    /// Every base variant, in reporting order.
    pub fn all() -> Vec<MethodSpec> {
        [
            Variant::Finetune,
            Variant::Er(Selection::Random),
            Variant::Er(Selection::Herding),
            Variant::Er(Selection::Prioritized),
            Variant::ErDropout,
            Variant::ErL2,
            Variant::ErKd,
            Variant::Arper,
            Variant::Full,
        ]
        .into_iter()
        .map(MethodSpec::new)
        .collect()
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base_name())?;
        if self.pseudo_exemplars {
            f.write_str("+pseudo")?;
        }
        Ok(())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_lowercase();
        let (base, pseudo) = match lower.strip_suffix("+pseudo") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let variant = match base {
            "finetune" => Variant::Finetune,
            "full" => Variant::Full,
            "er" | "er_prio" => Variant::Er(Selection::Prioritized),
            "er_random" => Variant::Er(Selection::Random),
            "er_herding" => Variant::Er(Selection::Herding),
            "er_prio+l2" | "er+l2" => Variant::ErL2,
            "er_prio+kd" | "er+kd" => Variant::ErKd,
            "er_prio+dropout" | "er+dropout" => Variant::ErDropout,
            "arper" => Variant::Arper,
            _ => return Err(Error::Config(format!("unknown method `{s}`"))),
        };
        let m = MethodSpec {
            variant,
            pseudo_exemplars: pseudo,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta: f64,
    /// Must be tuned per corpus.
    pub lambda_base: Option<f64>,
    pub eta: f64,
    pub l2_weight: f64,
    pub dropout_rate: f64,
    /// Total exemplar budget M.
    pub budget: usize,
    pub seed: u64,
    pub max_decode_len: usize,
    /// Ω_all as the mean of per-task scores instead of pooled test data.
    pub macro_average: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-3,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            beta: 0.5,
            lambda_base: None,
            eta: 2.0,
            l2_weight: 1e-3,
            dropout_rate: 0.25,
            budget: 250,
            seed: 0,
            max_decode_len: 50,
            macro_average: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        let weights = [
            ("beta", Some(self.beta)),
            ("lambda_base", self.lambda_base),
            ("eta", Some(self.eta)),
            ("l2_weight", Some(self.l2_weight)),
        ];
        for (name, v) in weights {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!(
                        "{name} must be a non-negative number"
                    )));
                }
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn lambda_base_for(&self, method: &MethodSpec) -> Result<f64> {
        match (method.variant, self.lambda_base) {
            (Variant::Arper, None) => Err(Error::Config(
                "arper needs an explicit lambda_base for this corpus".into(),
            )),
            (_, l) => Ok(l.unwrap_or(0.0)),
        }
    }
}

/// Hidden and embedding widths; vocabulary and DA sizes come from the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub hidden_size: usize,
    pub embed_size: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            hidden_size: 128,
            embed_size: 64,
        }
    }
}

impl ModelShape {
    pub fn config_for(&self, encoder: &Encoder) -> ModelConfig {
        ModelConfig::new(
            self.hidden_size,
            self.embed_size,
            encoder.vocab.len(),
            encoder.inventory.dim(),
        )
    }
}

pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 folded over the parts
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        let mut z = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Distillation towards a frozen previous model on the old-only vocabulary.
#[derive(Clone, Debug)]
pub struct KdTerm<'a> {
    pub teacher: &'a Model,
    pub subset: Vec<usize>,
    pub eta: f64,
}

/// A method-resolved batch loss.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    pub train: Vec<&'a Example>,
    pub valid: Vec<&'a Example>,
    /// Quadratic anchor and its weight (EWC, or L2 with a unit Fisher).
    pub penalty: Option<(EwcAnchor, f64)>,
    pub kd: Option<KdTerm<'a>>,
    pub dropout_rate: f64,
}

impl Objective<'_> {
    /// Mean per-example loss plus the penalty, and its gradient.
    pub fn batch_loss_grad(
        &self,
        model: &Model,
        batch: &[&Example],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)> {
        let n = model.num_params();
        let mut grad = vec![0.0; n];
        let mut loss = 0.0;
        for ex in batch {
            let trace = if model.config.dropout_rate > 0.0 {
                model.forward(ex, Some(&mut *rng))?
            } else {
                model.forward::<ChaCha8Rng>(ex, None)?
            };
            let mut dlogits = trace.ce_logit_grads();
            loss += trace.loss();
            if let Some(kd) = &self.kd {
                if !kd.subset.is_empty() {
                    let teacher: Vec<Vec<f64>> = kd
                        .teacher
                        .forward_eval(ex)?
                        .steps
                        .into_iter()
                        .map(|s| s.logits)
                        .collect();
                    let student: Vec<Vec<f64>> =
                        trace.steps.iter().map(|s| s.logits.clone()).collect();
                    let (kd_loss, kd_grads) = kd_logit_terms(&student, &teacher, &kd.subset);
                    loss += kd.eta * kd_loss;
                    for (d, g) in dlogits.iter_mut().zip(&kd_grads) {
                        for (a, b) in d.iter_mut().zip(g) {
                            *a += kd.eta * b;
                        }
                    }
                }
            }
            model.backward(&trace, &dlogits, &mut grad);
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        loss *= scale;
        if let Some((anchor, lambda)) = &self.penalty {
            loss += add_ewc_term(model.theta(), anchor, *lambda, &mut grad)?;
        }
        Ok((loss, grad))
    }
}

/// What a method's objective may draw on at task `task` (0-based).
#[derive(Clone, Debug)]
pub struct ObjectiveContext<'a> {
    pub task: usize,
    pub current_train: &'a [Example],
    pub current_valid: &'a [Example],
    /// Train/valid data of tasks before `task`; read only by `Full`.
    pub history_train: Vec<&'a Example>,
    pub history_valid: Vec<&'a Example>,
    pub replay_train: Vec<&'a Example>,
    pub replay_valid: Vec<&'a Example>,
    pub model_prev: Option<&'a Model>,
    pub anchor: Option<EwcAnchor>,
    pub lambda: f64,
    pub eta: f64,
    pub l2_weight: f64,
    pub dropout_rate: f64,
    pub kd_subset: Vec<usize>,
}

pub fn objective_for<'a>(method: &MethodSpec, ctx: ObjectiveContext<'a>) -> Result<Objective<'a>> {
    method.validate()?;
    let mut train: Vec<&Example> = ctx.current_train.iter().collect();
    let mut valid: Vec<&Example> = ctx.current_valid.iter().collect();
    let later = ctx.task > 0;
    match method.variant {
        Variant::Finetune => {}
        Variant::Full => {
            train.extend(ctx.history_train);
            valid.extend(ctx.history_valid);
        }
        _ => {
            train.extend(ctx.replay_train);
            valid.extend(ctx.replay_valid);
        }
    }

    let mut penalty = None;
    let mut kd = None;
    let mut dropout_rate = 0.0;
    match method.variant {
        Variant::ErL2 if later => {
            let prev = ctx
                .model_prev
                .ok_or_else(|| Error::Config("er_prio+l2 needs the previous model".into()))?;
            let anchor = EwcAnchor::new(
                prev.theta().to_vec(),
                FisherDiagonal::ones(prev.num_params()),
            )?;
            penalty = Some((anchor, ctx.l2_weight));
        }
        Variant::Arper if later => match ctx.anchor {
            Some(anchor) => {
                if ctx.lambda > 0.0 {
                    penalty = Some((anchor, ctx.lambda));
                }
            }
            // no stored exemplars, so no Fisher estimate and no penalty
            None if ctx.lambda == 0.0 || train.len() == ctx.current_train.len() => {}
            None => {
                return Err(Error::Config(
                    "arper needs an EWC anchor after the first task".into(),
                ))
            }
        },
        Variant::ErKd if later => {
            let teacher = ctx
                .model_prev
                .ok_or_else(|| Error::Config("er_prio+kd needs the previous model".into()))?;
            kd = Some(KdTerm {
                teacher,
                subset: ctx.kd_subset,
                eta: ctx.eta,
            });
        }
        Variant::ErDropout if later => dropout_rate = ctx.dropout_rate,
        _ => {}
    }
    if train.is_empty() {
        return Err(Error::Precondition("empty training pool".into()));
    }
    Ok(Objective {
        train,
        valid,
        penalty,
        kd,
        dropout_rate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl From<&TrainConfig> for FitConfig {
    fn from(c: &TrainConfig) -> Self {
        FitConfig {
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            seed: c.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub model: Model,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    /// Mean validation loss after each epoch.
    pub valid_history: Vec<f64>,
}

fn mean_loss(model: &Model, data: &[&Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += model.loss_ce(ex)?;
    }
    Ok(total / data.len() as f64)
}

/// Called after every epoch with the epoch number and the current parameters.
pub type EpochHook<'h> = dyn FnMut(usize, &Model) -> Result<()> + 'h;

/// Adam over shuffled minibatches with early stopping on validation loss.
/// Validation falls back to the training pool when no validation data exists.
pub fn fit(
    model: &Model,
    objective: &Objective<'_>,
    config: &FitConfig,
    mut on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<FitOutcome> {
    if objective.train.is_empty() {
        return Err(Error::Precondition("fit needs training data".into()));
    }
    if config.patience == 0 || config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::Config(
            "patience, batch_size and max_epochs must be positive".into(),
        ));
    }
    let valid: &[&Example] = if objective.valid.is_empty() {
        &objective.train
    } else {
        &objective.valid
    };

    let restore_rate = model.config.dropout_rate;
    let mut current = model.clone();
    current.config.dropout_rate = objective.dropout_rate;
    let mut adam = Adam::new(current.num_params(), config.learning_rate);
    let mut order: Vec<usize> = (0..objective.train.len()).collect();

    let mut best_theta = current.theta().to_vec();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| objective.train[i]).collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, epoch as u64, b as u64, 1]));
            let (loss, grad) = objective.batch_loss_grad(&current, &batch, &mut rng)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b });
            }
            adam.step(current.theta_mut(), &grad);
        }
        epochs_run = epoch;
        let v = mean_loss(&current, valid)?;
        if !v.is_finite() {
            return Err(Error::Divergence { epoch, batch: 0 });
        }
        history.push(v);
        if v < best_loss {
            best_loss = v;
            best_epoch = epoch;
            best_theta.copy_from_slice(current.theta());
            stale = 0;
        } else {
            stale += 1;
        }
        if let Some(hook) = on_epoch.as_deref_mut() {
            hook(epoch, &current)?;
        }
        if stale >= config.patience {
            break;
        }
    }
    current.theta_mut().copy_from_slice(&best_theta);
    current.config.dropout_rate = restore_rate;
    Ok(FitOutcome {
        model: current,
        epochs_run,
        best_epoch,
        best_valid_loss: best_loss,
        valid_history: history,
    })
}

/// Encoded train/valid splits for every task, built once per stream.
#[derive(Clone, Debug)]
pub struct EncodedStream {
    pub encoder: Encoder,
    pub train: Vec<Vec<Example>>,
    pub valid: Vec<Vec<Example>>,
    train_vocab: Vec<BTreeSet<usize>>,
}

impl EncodedStream {
    pub fn new(stream: &TaskStream) -> Result<Self> {
        Self::with_encoder(stream, Encoder::for_stream(stream))
    }

    pub fn with_encoder(stream: &TaskStream, encoder: Encoder) -> Result<Self> {
        let encode = |us: &[Utterance]| {
            us.iter()
                .map(|u| encoder.encode(u))
                .collect::<Result<Vec<_>>>()
        };
        let mut train = Vec::new();
        let mut valid = Vec::new();
        let mut train_vocab = Vec::new();
        for t in &stream.tasks {
            let tr = encode(&t.train)?;
            train_vocab.push(tr.iter().flat_map(|e| e.tokens.iter().copied()).collect());
            train.push(tr);
            valid.push(encode(&t.valid)?);
        }
        Ok(EncodedStream {
            encoder,
            train,
            valid,
            train_vocab,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TaskOutcome {
    pub model: Model,
    /// Adaptive EWC weight used for this task (ARPER after the first task).
    pub lambda: Option<f64>,
    pub anchor: Option<EwcAnchor>,
    pub fit: FitSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
}

/// Splits a stored list into replay-training and held-out validation parts.
pub fn split_exemplars(list: &PriorityList) -> (usize, usize) {
    let n_valid = list.len() / VALID_EXEMPLAR_FRACTION;
    (list.len() - n_valid, n_valid)
}

/// Learns task `t` (0-based) of `stream`, then selects its exemplars and
/// shrinks earlier lists so the store stays within budget.
#[allow(clippy::too_many_arguments)]
pub fn learn_task(
    stream: &TaskStream,
    data: &EncodedStream,
    t: usize,
    store: &mut ExemplarStore,
    model_prev: &Model,
    config: &TrainConfig,
    method: &MethodSpec,
    on_epoch: Option<&mut EpochHook<'_>>,
) -> Result<TaskOutcome> {
    config.validate()?;
    method.validate()?;
    let task: &Task = stream.tasks.get(t).ok_or(Error::Index {
        index: t,
        max: stream.len(),
    })?;
    if task.train.is_empty() {
        return Err(Error::Precondition(format!(
            "task `{}` has no training data",
            task.name
        )));
    }
    let encoder = &data.encoder;

    // replay data drawn from the store
    let mut replay_train: Vec<Example> = Vec::new();
    let mut replay_valid: Vec<Example> = Vec::new();
    let mut all_stored: Vec<Example> = Vec::new();
    if method.uses_exemplars() {
        for (_, list) in store.per_task.iter() {
            let (n_train, _) = split_exemplars(list);
            let train_part = PriorityList::from_items(list.items()[..n_train].to_vec());
            let train_part = if method.pseudo_exemplars {
                make_pseudo_exemplars(
                    model_prev,
                    encoder,
                    &train_part,
                    config.beta,
                    config.max_decode_len,
                )?
            } else {
                train_part
            };
            for u in train_part.utterances() {
                replay_train.push(encoder.encode(u)?);
            }
            for e in &list.items()[n_train..] {
                replay_valid.push(encoder.encode(&e.utterance)?);
            }
            for u in list.utterances() {
                all_stored.push(encoder.encode(u)?);
            }
        }
    }

    let mut lambda = None;
    let mut anchor = None;
    let mut lambda_value = 0.0;
    if method.variant == Variant::Arper && t > 0 {
        let (v_old, v_new) = stream.vocab_counts(t + 1)?;
        lambda_value = adaptive_lambda(config.lambda_base_for(method)?, v_old, v_new);
        lambda = Some(lambda_value);
        if !all_stored.is_empty() {
            let fisher = fisher_diagonal(model_prev, &all_stored)?;
            anchor = Some(EwcAnchor::new(model_prev.theta().to_vec(), fisher)?);
        }
    }

    let kd_subset = if method.variant == Variant::ErKd && t > 0 {
        let prev: BTreeSet<usize> = data.train_vocab[..t].iter().flatten().copied().collect();
        old_only_vocab(&prev, &data.train_vocab[t])
            .into_iter()
            .collect()
    } else {
        Vec::new()
    };

    let ctx = ObjectiveContext {
        task: t,
        current_train: &data.train[t],
        current_valid: &data.valid[t],
        history_train: data.train[..t].iter().flatten().collect(),
        history_valid: data.valid[..t].iter().flatten().collect(),
        replay_train: replay_train.iter().collect(),
        replay_valid: replay_valid.iter().collect(),
        model_prev: Some(model_prev),
        anchor: anchor.clone(),
        lambda: lambda_value,
        eta: config.eta,
        l2_weight: config.l2_weight,
        dropout_rate: config.dropout_rate,
        kd_subset,
    };
    let objective = objective_for(method, ctx)?;
    let mut fit_config = FitConfig::from(config);
    fit_config.seed = mix_seed(&[config.seed, t as u64]);
    let outcome = fit(model_prev, &objective, &fit_config, on_epoch)?;

    if let Some(selection) = method.selection() {
        let sizes: Vec<usize> = stream.tasks[..=t].iter().map(|x| x.train.len()).collect();
        let shares = allocate_budget(store.budget, &sizes);
        let m = shares[t];
        let model = &outcome.model;
        let list = match selection {
            Selection::Prioritized => {
                select_exemplars_prioritized(&task.train, model, encoder, m, config.beta)?
            }
            Selection::Random => select_exemplars_random(
                &task.train,
                model,
                encoder,
                m,
                config.beta,
                mix_seed(&[config.seed, t as u64, 2]),
            )?,
            Selection::Herding => {
                select_exemplars_herding(&task.train, model, encoder, m, config.beta)?
            }
        };
        store.insert(t, list);
        store.reduce(&sizes);
    }

    Ok(TaskOutcome {
        model: outcome.model,
        lambda,
        anchor,
        fit: FitSummary {
            epochs_run: outcome.epochs_run,
            best_epoch: outcome.best_epoch,
            best_valid_loss: outcome.best_valid_loss,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaSummary {
    pub ser_all: f64,
    pub bleu_all: f64,
    pub ser_first: f64,
    pub bleu_first: f64,
}

impl OmegaSummary {
    pub fn from_records(records: &[EvalRecord]) -> Result<Self> {
        let col = |f: fn(&EvalRecord) -> f64| omega(&records.iter().map(f).collect::<Vec<_>>());
        Ok(OmegaSummary {
            ser_all: col(|r| r.ser_all)?,
            bleu_all: col(|r| r.bleu_all)?,
            ser_first: col(|r| r.ser_first)?,
            bleu_first: col(|r| r.bleu_first)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub method: MethodSpec,
    pub records: Vec<EvalRecord>,
    pub omega: OmegaSummary,
    pub wall_clock_secs: Vec<f64>,
    pub lambdas: Vec<Option<f64>>,
    pub fits: Vec<FitSummary>,
    pub store_snapshots: Vec<ExemplarStore>,
    pub final_model: Model,
}

/// Everything known right after task `step` (1-based) has been learned.
pub struct StepReport<'a> {
    pub step: usize,
    pub task: &'a Task,
    pub model: &'a Model,
    pub anchor: Option<&'a EwcAnchor>,
    pub store: &'a ExemplarStore,
    pub record: &'a EvalRecord,
    pub lambda: Option<f64>,
    pub fit: &'a FitSummary,
}

pub fn run_stream(
    stream: &TaskStream,
    method: &MethodSpec,
    config: &TrainConfig,
    shape: &ModelShape,
) -> Result<ExperimentResult> {
    run_stream_with(stream, method, config, shape, &mut |_| Ok(()))
}

/// Learns the tasks in order, scoring after each on pooled test data of the
/// tasks seen so far and on the first task alone.
pub fn run_stream_with(
    stream: &TaskStream,
    method: &MethodSpec,
    config: &TrainConfig,
    shape: &ModelShape,
    on_step: &mut dyn FnMut(StepReport<'_>) -> Result<()>,
) -> Result<ExperimentResult> {
    if stream.is_empty() {
        return Err(Error::Precondition("stream has no tasks".into()));
    }
    config.validate()?;
    config.lambda_base_for(method)?;
    let data = EncodedStream::new(stream)?;
    let mut model = Model::init(shape.config_for(&data.encoder), config.seed)?;
    let mut store = ExemplarStore::new(config.budget);

    let mut records = Vec::new();
    let mut wall = Vec::new();
    let mut lambdas = Vec::new();
    let mut fits = Vec::new();
    let mut snapshots = Vec::new();
    for t in 0..stream.len() {
        let start = Instant::now();
        let outcome = learn_task(stream, &data, t, &mut store, &model, config, method, None)?;
        wall.push(start.elapsed().as_secs_f64());
        model = outcome.model;

        let record = evaluate_step(&model, &data.encoder, &stream.tasks[..=t], config)?;
        on_step(StepReport {
            step: t + 1,
            task: &stream.tasks[t],
            model: &model,
            anchor: outcome.anchor.as_ref(),
            store: &store,
            record: &record,
            lambda: outcome.lambda,
            fit: &outcome.fit,
        })?;
        records.push(record);
        lambdas.push(outcome.lambda);
        fits.push(outcome.fit);
        snapshots.push(store.clone());
    }
    Ok(ExperimentResult {
        method: *method,
        omega: OmegaSummary::from_records(&records)?,
        records,
        wall_clock_secs: wall,
        lambdas,
        fits,
        store_snapshots: snapshots,
        final_model: model,
    })
}

fn evaluate_step(
    model: &Model,
    encoder: &Encoder,
    seen: &[Task],
    config: &TrainConfig,
) -> Result<EvalRecord> {
    let len = config.max_decode_len;
    let first = evaluate_model(model, encoder, &[&seen[0].test], len)?;
    let (ser_all, bleu_all) = if config.macro_average {
        let mut ser = 0.0;
        let mut bleu = 0.0;
        for task in seen {
            let s = evaluate_model(model, encoder, &[&task.test], len)?;
            ser += s.ser;
            bleu += s.bleu;
        }
        (ser / seen.len() as f64, bleu / seen.len() as f64)
    } else {
        let sets: Vec<&[Utterance]> = seen.iter().map(|t| t.test.as_slice()).collect();
        let s = evaluate_model(model, encoder, &sets, len)?;
        (s.ser, s.bleu)
    };
    Ok(EvalRecord {
        step: seen.len(),
        ser_all,
        bleu_all,
        ser_first: first.ser,
        bleu_first: first.bleu,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub ser: f64,
    pub bleu: f64,
}

/// Trains a model already fit on `task_a` on `task_b` with `method`,
/// scoring on A's test set at epoch 0, every `eval_every` epochs and after
/// the last epoch run. Both tasks must belong to `stream`'s vocabulary.
pub fn diagnose_forgetting(
    model_a: &Model,
    stream: &TaskStream,
    task_a: usize,
    task_b: usize,
    config: &TrainConfig,
    method: &MethodSpec,
    eval_every: usize,
) -> Result<Vec<CurvePoint>> {
    if eval_every == 0 {
        return Err(Error::Config("eval_every must be positive".into()));
    }
    if task_a == task_b {
        return Err(Error::Config("diagnosis needs two distinct tasks".into()));
    }
    config.lambda_base_for(method)?;
    let encoder = Encoder::for_stream(stream);
    let pair = stream.subset(&[task_a, task_b])?;
    let data = EncodedStream::with_encoder(&pair, encoder)?;
    let test_a = &pair.tasks[0].test;
    let score = |m: &Model, epoch: usize| -> Result<CurvePoint> {
        let s = evaluate_model(m, &data.encoder, &[test_a], config.max_decode_len)?;
        Ok(CurvePoint {
            epoch,
            ser: s.ser,
            bleu: s.bleu,
        })
    };

    let mut store = ExemplarStore::new(config.budget);
    if let Some(selection) = method.selection() {
        let a = &pair.tasks[0].train;
        let m = allocate_budget(config.budget, &[a.len()])[0];
        let list = match selection {
            Selection::Prioritized => {
                select_exemplars_prioritized(a, model_a, &data.encoder, m, config.beta)?
            }
            Selection::Random => select_exemplars_random(
                a,
                model_a,
                &data.encoder,
                m,
                config.beta,
                mix_seed(&[config.seed, 0, 2]),
            )?,
            Selection::Herding => {
                select_exemplars_herding(a, model_a, &data.encoder, m, config.beta)?
            }
        };
        store.insert(0, list);
    }

    let mut curve = vec![score(model_a, 0)?];
    let mut last: Option<(usize, Model)> = None;
    let mut hook = |epoch: usize, m: &Model| -> Result<()> {
        if epoch % eval_every == 0 {
            curve.push(score(m, epoch)?);
        }
        last = Some((epoch, m.clone()));
        Ok(())
    };
    learn_task(
        &pair,
        &data,
        1,
        &mut store,
        model_a,
        config,
        method,
        Some(&mut hook),
    )?;
    if let Some((epoch, m)) = last {
        if epoch % eval_every != 0 {
            curve.push(score(&m, epoch)?);
        }
    }
    Ok(curve)
}

/// Fits a fresh model on one task of `stream`, sized for the whole stream's
/// vocabulary so it can be passed to [`diagnose_forgetting`].
pub fn pretrain(
    stream: &TaskStream,
    task: usize,
    config: &TrainConfig,
    shape: &ModelShape,
) -> Result<Model> {
    let encoder = Encoder::for_stream(stream);
    let single = stream.subset(&[task])?;
    let data = EncodedStream::with_encoder(&single, encoder)?;
    let model = Model::init(shape.config_for(&data.encoder), config.seed)?;
    let mut store = ExemplarStore::new(0);
    let finetune = MethodSpec::new(Variant::Finetune);
    Ok(learn_task(
        &single, &data, 0, &mut store, &model, config, &finetune, None,
    )?
    .model)
}

/// Elementwise `|θ_a − θ_b|` over one parameter segment, shaped rows × cols.
pub fn weight_delta(a: &Model, b: &Model, segment: &str) -> Result<Vec<Vec<f64>>> {
    if a.layout() != b.layout() {
        return Err(Error::Shape(
            "models have different parameter layouts".into(),
        ));
    }
    let seg = a
        .layout()
        .segment(segment)
        .ok_or_else(|| Error::Shape(format!("unknown segment `{segment}`")))?;
    let (ta, tb) = (&a.theta()[seg.range()], &b.theta()[seg.range()]);
    Ok((0..seg.rows)
        .map(|r| {
            (0..seg.cols)
                .map(|c| (ta[r * seg.cols + c] - tb[r * seg.cols + c]).abs())
                .collect()
        })
        .collect())
}

/// A model together with the EWC anchor it was trained against, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub method: String,
    pub model: Model,
    pub anchor: Option<EwcAnchor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        // f64 with float_roundtrip; serialization of plain data cannot fail
        serde_json::to_string(self).expect("serialize checkpoint")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.model.theta().len() != c.model.layout().total() {
            return Err(Error::Shape(
                "checkpoint parameters do not match layout".into(),
            ));
        }
        Ok(c)
    }
}
