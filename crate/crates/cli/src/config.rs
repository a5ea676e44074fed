//! TOML run configuration.
//!
//! ```toml
//! [corpus]
//! path = "corpus.jsonl"          # or a [corpus.synthetic] table
//!
//! [run]
//! methods = ["finetune", "er_random", "arper"]
//! seeds = [0, 1, 2]
//! order = "rotate-first"           # or "fixed" with `orders = [[0, 1, 2]]`
//!
//! [train]
//! lambda_base = 1000.0
//!
//! [model]
//! hidden_size = 32
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arper_core::continual::{MethodSpec, ModelShape, TrainConfig};
use arper_core::corpus::{
    generate_synthetic_stream, load_corpus, to_jsonl, SyntheticSpec, TaskStream,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelShape,
    #[serde(default)]
    pub diagnose: Option<DiagnoseSection>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderMode {
    #[default]
    Fixed,
    RotateFirst,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub order: OrderMode,
    /// Explicit task orders for `fixed` mode; defaults to the file order.
    pub orders: Vec<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            methods: vec!["finetune".into(), "arper".into()],
            seeds: vec![0],
            order: OrderMode::Fixed,
            orders: Vec::new(),
            out: None,
            workers: None,
        }
    }
}

/// A task given by position in the corpus or by name.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TaskRef {
    Index(usize),
    Name(String),
}

impl TaskRef {
    pub fn resolve(&self, stream: &TaskStream) -> Result<usize> {
        match self {
            TaskRef::Index(i) if *i < stream.len() => Ok(*i),
            TaskRef::Index(i) => bail!(
                "task index {i} out of range (stream has {} tasks)",
                stream.len()
            ),
            TaskRef::Name(n) => stream
                .tasks
                .iter()
                .position(|t| t.name.eq_ignore_ascii_case(n))
                .with_context(|| format!("no task named `{n}`")),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    pub pretrain: TaskRef,
    pub transfer: TaskRef,
    #[serde(default = "default_diagnose_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_diagnose_methods() -> Vec<String> {
    ["finetune", "er_random", "er_prio", "arper", "full"]
        .map(String::from)
        .to_vec()
}

fn default_eval_every() -> usize {
    1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(_), Some(_)) => bail!("corpus: give either `path` or `synthetic`, not both"),
            (None, None) => bail!("corpus: one of `path` or `synthetic` is required"),
            _ => {}
        }
        if self.run.methods.is_empty() {
            bail!("run.methods: at least one method is required");
        }
        if self.run.seeds.is_empty() {
            bail!("run.seeds: at least one seed is required");
        }
        self.methods()?;
        if let Some(d) = &self.diagnose {
            parse_methods(&d.methods, "diagnose.methods")?;
            if d.eval_every == 0 {
                bail!("diagnose.eval_every must be positive");
            }
        }
        if self.run.workers == Some(0) {
            bail!("run.workers must be positive");
        }
        self.train.validate().context("train")?;
        if self.model.hidden_size == 0 || self.model.embed_size == 0 {
            bail!("model: hidden_size and embed_size must be positive");
        }
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<MethodSpec>> {
        parse_methods(&self.run.methods, "run.methods")
    }

    /// The corpus relative paths are resolved against `base`.
    pub fn load_stream(&self, base: &Path) -> Result<TaskStream> {
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(p), _) => {
                let p = if p.is_absolute() {
                    p.clone()
                } else {
                    base.join(p)
                };
                load_corpus(&p).with_context(|| format!("corpus {}", p.display()))
            }
            (None, Some(spec)) => generate_synthetic_stream(spec).context("corpus.synthetic"),
            (None, None) => bail!("corpus: no source configured"),
        }
    }

    /// Task orders for `seed`, each validated as a permutation.
    pub fn orders(&self, n_tasks: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
        match self.run.order {
            OrderMode::RotateFirst => Ok(crate::orders::rotate_first(n_tasks, seed)),
            OrderMode::Fixed if self.run.orders.is_empty() => Ok(vec![(0..n_tasks).collect()]),
            OrderMode::Fixed => {
                for (i, o) in self.run.orders.iter().enumerate() {
                    let mut sorted = o.clone();
                    sorted.sort_unstable();
                    if sorted != (0..n_tasks).collect::<Vec<_>>() {
                        bail!(
                            "run.orders[{i}]: {o:?} is not a permutation of the {n_tasks} task ids"
                        );
                    }
                }
                Ok(self.run.orders.clone())
            }
        }
    }
}

fn parse_methods(names: &[String], field: &str) -> Result<Vec<MethodSpec>> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            n.parse::<MethodSpec>()
                .with_context(|| format!("{field}[{i}]"))
        })
        .collect()
}

/// SHA-256 of the corpus in its canonical JSONL form.
pub fn corpus_hash(stream: &TaskStream) -> String {
    crate::sha256_hex(to_jsonl(stream).as_bytes())
}
