//! `arper run`: one directory per (method, seed, order).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use arper_core::continual::{
    run_stream_with, Checkpoint, FitSummary, MethodSpec, ModelShape, OmegaSummary, TrainConfig,
};
use arper_core::corpus::TaskStream;
use arper_core::metrics::EvalRecord;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{corpus_hash, RunConfig};
use crate::report;
use crate::sha256_hex;

pub const METRICS_HEADER: &str = "run_id,method,step,ser_all,bleu_all,ser_first,bleu_first";
pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.csv";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunJob {
    pub method: MethodSpec,
    pub seed: u64,
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A completed run with the same identity already existed.
    Skipped,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub job: RunJob,
    pub run_id: String,
    pub dir: PathBuf,
    pub status: RunStatus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub status: String,
    pub method: String,
    pub seed: u64,
    pub order: Vec<usize>,
    pub task_names: Vec<String>,
    pub corpus_sha256: String,
    pub identity_sha256: String,
    pub train: TrainConfig,
    pub model: ModelShape,
    pub omega: Option<OmegaSummary>,
    pub lambdas: Vec<Option<f64>>,
    pub fits: Vec<FitSummary>,
    pub wall_clock_secs: Vec<f64>,
    /// SHA-256 of every file written into the run directory.
    pub files: BTreeMap<String, String>,
    pub error: Option<String>,
}

fn slug(method: &MethodSpec) -> String {
    method.to_string().replace('+', "-")
}

/// Hash of everything that determines a run's results.
fn identity(job: &RunJob, corpus_sha: &str, train: &TrainConfig, model: &ModelShape) -> String {
    let value = json!({
        "corpus_sha256": corpus_sha,
        "method": job.method.to_string(),
        "seed": job.seed,
        "order": job.order,
        "train": train,
        "model": model,
    });
    sha256_hex(value.to_string().as_bytes())
}

pub fn metrics_csv(run_id: &str, method: &str, records: &[EvalRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{run_id},{method},{},{},{},{},{}",
            r.step, r.ser_all, r.bleu_all, r.ser_first, r.bleu_first
        );
    }
    out
}

fn read_manifest(dir: &Path) -> Option<Manifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST)).ok()?;
    serde_json::from_str(&text).ok()
}

struct Writer {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Writer {
    fn write(&mut self, rel: &str, content: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, content)?;
        self.files.insert(rel.to_string(), sha256_hex(content));
        Ok(())
    }
}

/// Runs one job unless a completed run with the same identity exists.
pub fn execute(
    job: &RunJob,
    stream: &TaskStream,
    corpus_sha: &str,
    config: &RunConfig,
    out: &Path,
) -> RunOutcome {
    let mut train = config.train.clone();
    train.seed = job.seed;
    let id_hash = identity(job, corpus_sha, &train, &config.model);
    let run_id = id_hash[..16].to_string();
    let order_tag: Vec<String> = job.order.iter().map(usize::to_string).collect();
    let dir = out.join(format!(
        "{}-s{}-o{}-{}",
        slug(&job.method),
        job.seed,
        order_tag.join("."),
        &run_id[..12]
    ));
    let outcome = |status| RunOutcome {
        job: job.clone(),
        run_id: run_id.clone(),
        dir: dir.clone(),
        status,
    };
    if read_manifest(&dir).is_some_and(|m| m.status == "complete" && m.run_id == run_id) {
        return outcome(RunStatus::Skipped);
    }

    let mut manifest = Manifest {
        run_id: run_id.clone(),
        status: "running".into(),
        method: job.method.to_string(),
        seed: job.seed,
        order: job.order.clone(),
        task_names: job
            .order
            .iter()
            .map(|&t| stream.tasks[t].name.clone())
            .collect(),
        corpus_sha256: corpus_sha.to_string(),
        identity_sha256: id_hash.clone(),
        train: train.clone(),
        model: config.model,
        omega: None,
        lambdas: Vec::new(),
        fits: Vec::new(),
        wall_clock_secs: Vec::new(),
        files: BTreeMap::new(),
        error: None,
    };
    let result = (|| -> Result<Vec<EvalRecord>> {
        if dir.exists() {
            // leftovers of an interrupted or failed attempt
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        let ordered = stream.reordered(&job.order)?;
        let task_names: Vec<String> = ordered.tasks.iter().map(|t| t.name.clone()).collect();
        let mut writer = Writer {
            dir: dir.clone(),
            files: BTreeMap::new(),
        };
        let method_name = job.method.to_string();
        let result = run_stream_with(&ordered, &job.method, &train, &config.model, &mut |step| {
            let ckpt = Checkpoint {
                step: step.step,
                method: method_name.clone(),
                model: step.model.clone(),
                anchor: step.anchor.cloned(),
            };
            writer.write(
                &format!("checkpoints/step-{}.json", step.step),
                ckpt.to_json().as_bytes(),
            )?;
            if job.method.uses_exemplars() {
                writer.write(
                    &format!("exemplars/step-{}.jsonl", step.step),
                    step.store.to_jsonl(&task_names).as_bytes(),
                )?;
            }
            Ok(())
        })?;
        writer.write(
            METRICS,
            metrics_csv(&run_id, &method_name, &result.records).as_bytes(),
        )?;
        manifest.omega = Some(result.omega.clone());
        manifest.lambdas = result.lambdas.clone();
        manifest.fits = result.fits.clone();
        manifest.wall_clock_secs = result.wall_clock_secs.clone();
        manifest.files = writer.files;
        Ok(result.records)
    })();

    let status = match result {
        Ok(_) => {
            manifest.status = "complete".into();
            RunStatus::Completed
        }
        Err(e) => {
            let msg = format!("{e:#}");
            manifest.status = "failed".into();
            manifest.error = Some(msg.clone());
            RunStatus::Failed(msg)
        }
    };
    let write_manifest = || -> Result<()> {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    };
    match write_manifest() {
        Ok(()) => outcome(status),
        Err(e) => outcome(RunStatus::Failed(format!("cannot write manifest: {e:#}"))),
    }
}

/// The job matrix in a fixed order: seed, then task order, then method.
pub fn plan(config: &RunConfig, n_tasks: usize, seeds: &[u64]) -> Result<Vec<RunJob>> {
    let methods = config.methods()?;
    let mut jobs = Vec::new();
    for &seed in seeds {
        for order in config.orders(n_tasks, seed)? {
            for method in &methods {
                jobs.push(RunJob {
                    method: *method,
                    seed,
                    order: order.clone(),
                });
            }
        }
    }
    Ok(jobs)
}

/// Executes the whole matrix on `workers` threads and writes
/// `summary.md`/`summary.csv` over the runs that finished.
pub fn cmd_run(
    config: &RunConfig,
    base: &Path,
    out: &Path,
    workers: usize,
    seed: Option<u64>,
) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let stream = config.load_stream(base)?;
    let corpus_sha = corpus_hash(&stream);
    let seeds = match seed {
        Some(s) => vec![s],
        None => config.run.seeds.clone(),
    };
    let jobs = plan(config, stream.len(), &seeds)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let o = execute(job, &stream, &corpus_sha, config, out);
                match &o.status {
                    RunStatus::Failed(e) => eprintln!("run {} failed: {e}", o.dir.display()),
                    RunStatus::Skipped => {
                        eprintln!("run {} already complete, skipped", o.dir.display())
                    }
                    RunStatus::Completed => eprintln!("run {} complete", o.dir.display()),
                }
                results.lock().unwrap()[i] = Some(o);
            });
        }
    });
    let outcomes: Vec<RunOutcome> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect();

    let done: Vec<PathBuf> = outcomes
        .iter()
        .filter(|o| !matches!(o.status, RunStatus::Failed(_)))
        .map(|o| o.dir.clone())
        .collect();
    if !done.is_empty() {
        let rep = report::build(&done)?;
        std::fs::write(out.join("summary.md"), rep.markdown())?;
        std::fs::write(out.join("summary.csv"), rep.csv())?;
    }
    Ok(outcomes)
}
