//! `arper diagnose` and `arper weight-delta`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arper_core::continual::{diagnose_forgetting, pretrain, weight_delta, Checkpoint, CurvePoint};
use arper_core::model::Model;

use crate::config::RunConfig;

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("epoch,ser,bleu\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{}", p.epoch, p.ser, p.bleu);
    }
    s
}

/// Pretrains on the configured task, then writes one forgetting curve per
/// method to `out/diagnose/<method>.csv`. Returns the files written.
pub fn cmd_diagnose(
    config: &RunConfig,
    base: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let Some(d) = &config.diagnose else {
        bail!("config has no [diagnose] section");
    };
    let stream = config.load_stream(base)?;
    let a = d.pretrain.resolve(&stream).context("diagnose.pretrain")?;
    let b = d.transfer.resolve(&stream).context("diagnose.transfer")?;
    if a == b {
        bail!("diagnose.pretrain and diagnose.transfer name the same task");
    }
    let mut train = config.train.clone();
    train.seed = seed.unwrap_or(config.run.seeds[0]);

    let dir = out.join("diagnose");
    std::fs::create_dir_all(&dir)?;
    let model_a = pretrain(&stream, a, &train, &config.model)?;
    let ckpt = Checkpoint {
        step: 1,
        method: "finetune".into(),
        model: model_a.clone(),
        anchor: None,
    };
    std::fs::write(dir.join("pretrain.json"), ckpt.to_json())?;

    let mut written = Vec::new();
    for name in &d.methods {
        let method = name
            .parse()
            .with_context(|| format!("diagnose.methods: `{name}`"))?;
        let curve = diagnose_forgetting(&model_a, &stream, a, b, &train, &method, d.eval_every)
            .with_context(|| format!("diagnosing {name}"))?;
        let path = dir.join(format!("{}.csv", method.to_string().replace('+', "-")));
        std::fs::write(&path, curve_csv(&curve))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a checkpoint file; a bare serialized model is accepted as well.
pub fn load_model(path: &Path) -> Result<Model> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match Checkpoint::from_json(&text) {
        Ok(c) => Ok(c.model),
        Err(_) => Model::from_json(&text)
            .with_context(|| format!("{} is not a checkpoint", path.display())),
    }
}

/// `|θ_a − θ_b|` over one segment as header-less CSV, one matrix row per line.
pub fn cmd_weight_delta(a: &Path, b: &Path, segment: &str) -> Result<String> {
    let ma = load_model(a)?;
    let mb = load_model(b)?;
    let delta = weight_delta(&ma, &mb, segment).context("incompatible checkpoints")?;
    let mut s = String::new();
    for row in delta {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}
