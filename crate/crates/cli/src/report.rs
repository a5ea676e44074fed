//! `arper report`: Ω tables over run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arper_core::continual::OmegaSummary;
use arper_core::metrics::EvalRecord;

use crate::runner::{METRICS, METRICS_HEADER};

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub dir: PathBuf,
    pub run_id: String,
    pub method: String,
    pub records: Vec<EvalRecord>,
}

/// Parses a metrics CSV written by `arper run`.
pub fn parse_metrics(text: &str) -> Result<(String, String, Vec<EvalRecord>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        Some(h) => bail!("unexpected header `{h}`"),
        None => bail!("empty metrics file"),
    }
    let mut ids = None;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            bail!("line {line_no}: expected 7 columns, found {}", cols.len());
        }
        let (run_id, method) = (cols[0].to_string(), cols[1].to_string());
        match &ids {
            None => ids = Some((run_id, method)),
            Some(prev) if *prev != (run_id, method) => {
                bail!("line {line_no}: run id or method differs from earlier rows")
            }
            _ => {}
        }
        let num = |j: usize| -> Result<f64> {
            let v: f64 = cols[j]
                .parse()
                .with_context(|| format!("line {line_no}: bad number `{}`", cols[j]))?;
            if !v.is_finite() {
                bail!("line {line_no}: non-finite value");
            }
            Ok(v)
        };
        let step: usize = cols[2]
            .parse()
            .with_context(|| format!("line {line_no}: bad step `{}`", cols[2]))?;
        if step != records.len() + 1 {
            bail!(
                "line {line_no}: expected step {}, found {step}",
                records.len() + 1
            );
        }
        records.push(EvalRecord {
            step,
            ser_all: num(3)?,
            bleu_all: num(4)?,
            ser_first: num(5)?,
            bleu_first: num(6)?,
        });
    }
    let Some((run_id, method)) = ids else {
        bail!("metrics file has no rows")
    };
    Ok((run_id, method, records))
}

pub fn read_run(dir: &Path) -> Result<RunMetrics> {
    let path = dir.join(METRICS);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let (run_id, method, records) =
        parse_metrics(&text).with_context(|| path.display().to_string())?;
    Ok(RunMetrics {
        dir: dir.to_path_buf(),
        run_id,
        method,
        records,
    })
}

/// Directories under `root` (inclusive) that look like runs: they hold a
/// metrics file or a manifest.
pub fn find_runs(root: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    if root.join(METRICS).exists() || root.join(crate::runner::MANIFEST).exists() {
        found.push(root.to_path_buf());
        return found;
    }
    if let Ok(entries) = std::fs::read_dir(root) {
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        children.sort();
        for c in children {
            found.extend(find_runs(&c));
        }
    }
    found
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub runs: usize,
    pub ser_all: Stat,
    pub bleu_all: Stat,
    pub ser_first: Stat,
    pub bleu_first: Stat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<MethodRow>,
    /// Run directories that could not be read, with the reason.
    pub problems: Vec<(PathBuf, String)>,
}

impl Report {
    pub fn markdown(&self) -> String {
        let mut s = String::from(
            "| Method | Runs | Ω_all SER | Ω_all BLEU | Ω_first SER | Ω_first BLEU |\n\
             |---|---|---|---|---|---|\n",
        );
        let cell = |st: &Stat| format!("{:.4} ± {:.4}", st.mean, st.std);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                r.method,
                r.runs,
                cell(&r.ser_all),
                cell(&r.bleu_all),
                cell(&r.ser_first),
                cell(&r.bleu_first)
            );
        }
        if !self.problems.is_empty() {
            s.push_str("\nSkipped runs:\n\n");
            for (p, why) in &self.problems {
                let _ = writeln!(s, "- `{}`: {why}", p.display());
            }
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(
            "method,runs,ser_all_mean,ser_all_std,bleu_all_mean,bleu_all_std,\
             ser_first_mean,ser_first_std,bleu_first_mean,bleu_first_std\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.runs,
                r.ser_all.mean,
                r.ser_all.std,
                r.bleu_all.mean,
                r.bleu_all.std,
                r.ser_first.mean,
                r.ser_first.std,
                r.bleu_first.mean,
                r.bleu_first.std
            );
        }
        s
    }
}

pub fn aggregate(runs: &[RunMetrics]) -> Result<Vec<MethodRow>> {
    let mut by_method: BTreeMap<&str, Vec<OmegaSummary>> = BTreeMap::new();
    for r in runs {
        by_method
            .entry(&r.method)
            .or_default()
            .push(OmegaSummary::from_records(&r.records)?);
    }
    Ok(by_method
        .into_iter()
        .map(|(method, oms)| {
            let col =
                |f: fn(&OmegaSummary) -> f64| Stat::of(&oms.iter().map(f).collect::<Vec<_>>());
            MethodRow {
                method: method.to_string(),
                runs: oms.len(),
                ser_all: col(|o| o.ser_all),
                bleu_all: col(|o| o.bleu_all),
                ser_first: col(|o| o.ser_first),
                bleu_first: col(|o| o.bleu_first),
            }
        })
        .collect())
}

/// Reads every run directory found under `paths`; unreadable runs are
/// listed rather than fatal.
pub fn build(paths: &[PathBuf]) -> Result<Report> {
    let mut dirs = Vec::new();
    for p in paths {
        if !p.exists() {
            bail!("{} does not exist", p.display());
        }
        dirs.extend(find_runs(p));
    }
    if dirs.is_empty() {
        bail!("no runs found");
    }
    let mut runs = Vec::new();
    let mut problems = Vec::new();
    for d in dirs {
        match read_run(&d) {
            Ok(r) => runs.push(r),
            Err(e) => problems.push((d, format!("{e:#}"))),
        }
    }
    if runs.is_empty() {
        bail!("no readable runs found ({} unreadable)", problems.len());
    }
    Ok(Report {
        rows: aggregate(&runs)?,
        problems,
    })
}

pub fn cmd_report(paths: &[PathBuf]) -> Result<Report> {
    build(paths)
}
