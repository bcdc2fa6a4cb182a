//! Summary tables over grid results: CSV files plus a markdown digest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nli_core::dataset::Sampling;
use nli_core::models::ModelKind;
use serde::{Deserialize, Serialize};

use crate::experiments::{duration_label, CvResult, DurationStats, ExperimentResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub model: ModelKind,
    pub best_acc: f64,
    pub duration_s: f64,
    pub sampling: Sampling,
    pub cell_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingEffectRow {
    pub model: ModelKind,
    pub duration_s: f64,
    pub oversample_acc: f64,
    pub undersample_acc: f64,
    /// `oversample_acc - undersample_acc`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTimeRow {
    pub model: ModelKind,
    pub cells: usize,
    pub total_seconds: f64,
    pub mean_seconds: f64,
    pub mean_epochs: f64,
    pub seconds_per_epoch: f64,
}

/// Highest hold-out accuracy per model; the first cell in input order wins ties.
pub fn best_by_model(results: &[ExperimentResult]) -> Vec<BestRow> {
    let mut best: BTreeMap<ModelKind, &ExperimentResult> = BTreeMap::new();
    for r in results {
        let e = best.entry(r.model).or_insert(r);
        if r.final_test_acc > e.final_test_acc {
            *e = r;
        }
    }
    best.into_values()
        .map(|r| BestRow {
            model: r.model,
            best_acc: r.final_test_acc,
            duration_s: r.duration_s,
            sampling: r.sampling,
            cell_id: r.cell_id.clone(),
        })
        .collect()
}

/// Oversample minus undersample accuracy for every (model, duration) that has both.
pub fn sampling_effect(results: &[ExperimentResult]) -> Vec<SamplingEffectRow> {
    let find = |m: ModelKind, d: f64, s: Sampling| {
        results.iter().find(|r| r.model == m && r.duration_s == d && r.sampling == s).map(|r| r.final_test_acc)
    };
    let mut out = Vec::new();
    for r in results.iter().filter(|r| r.sampling == Sampling::Oversample) {
        if let Some(under) = find(r.model, r.duration_s, Sampling::Undersample) {
            out.push(SamplingEffectRow {
                model: r.model,
                duration_s: r.duration_s,
                oversample_acc: r.final_test_acc,
                undersample_acc: under,
                delta: r.final_test_acc - under,
            });
        }
    }
    out
}

pub fn wall_time(results: &[ExperimentResult]) -> Vec<WallTimeRow> {
    let mut by: BTreeMap<ModelKind, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        by.entry(r.model).or_default().push(r);
    }
    by.into_iter()
        .map(|(model, rs)| {
            let total: f64 = rs.iter().map(|r| r.wall_seconds).sum();
            let epochs: usize = rs.iter().map(|r| r.epochs).sum();
            WallTimeRow {
                model,
                cells: rs.len(),
                total_seconds: total,
                mean_seconds: total / rs.len() as f64,
                mean_epochs: epochs as f64 / rs.len() as f64,
                seconds_per_epoch: total / epochs.max(1) as f64,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(csv::Reader::from_path(path)?.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CvSummaryRow {
    model: ModelKind,
    duration_s: f64,
    sampling: Sampling,
    k: usize,
    mean: f64,
    std: f64,
    holdout_acc: Option<f64>,
    delta_vs_holdout: Option<f64>,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CvFoldRow {
    model: ModelKind,
    duration_s: f64,
    sampling: Sampling,
    fold: usize,
    val_acc: f64,
    holdout_acc: f64,
    epochs: usize,
}

pub fn write_cv(out: &Path, cv: &[CvResult]) -> anyhow::Result<()> {
    let summary: Vec<CvSummaryRow> = cv
        .iter()
        .map(|c| CvSummaryRow {
            model: c.model,
            duration_s: c.duration_s,
            sampling: c.sampling,
            k: c.k,
            mean: c.mean,
            std: c.std,
            holdout_acc: c.holdout_acc,
            delta_vs_holdout: c.delta_vs_holdout,
            seed: c.seed,
        })
        .collect();
    let folds: Vec<CvFoldRow> = cv
        .iter()
        .flat_map(|c| {
            c.folds.iter().map(|f| CvFoldRow {
                model: c.model,
                duration_s: c.duration_s,
                sampling: c.sampling,
                fold: f.fold,
                val_acc: f.val_acc,
                holdout_acc: f.holdout_acc,
                epochs: f.epochs,
            })
        })
        .collect();
    write_csv(&out.join("cv_summary.csv"), &summary)?;
    write_csv(&out.join("cv_folds.csv"), &folds)
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Writes the summary CSVs and `report.md` under `out`; returns the paths.
/// `cv_path` is a `cv_summary.csv` to include, if any.
pub fn emit_report(
    out: &Path,
    results: &[ExperimentResult],
    stats: &[DurationStats],
    cv_path: Option<&Path>,
) -> anyhow::Result<Vec<PathBuf>> {
    anyhow::ensure!(!results.is_empty(), "no results to report");
    let best = best_by_model(results);
    let effect = sampling_effect(results);
    let wall = wall_time(results);
    let mut written = Vec::new();
    for (name, res) in [
        ("best_by_model.csv", write_csv(&out.join("best_by_model.csv"), &best)),
        ("sampling_effect.csv", write_csv(&out.join("sampling_effect.csv"), &effect)),
        ("wall_time.csv", write_csv(&out.join("wall_time.csv"), &wall)),
        ("durations.csv", write_csv(&out.join("durations.csv"), stats)),
    ] {
        res?;
        written.push(out.join(name));
    }
    let cv: Vec<CvSummaryRow> = match cv_path {
        Some(p) => read_csv(p)?,
        None => Vec::new(),
    };

    let mut md = String::new();
    writeln!(md, "# Experiment report\n")?;
    let n_grid = results.len();
    writeln!(
        md,
        "{n_grid} grid cells and {} cross-validation runs ({} experiments). The default grid of \
         3 models x 7 durations x 3 sampling modes gives 63 cells; with one cross-validation run \
         per model that makes 66. This breakdown of 66 is an assumption, not a documented count.\n",
        cv.len(),
        n_grid + cv.len()
    )?;

    writeln!(md, "## Best cell per model\n\n| model | accuracy (%) | duration (s) | sampling |\n|---|---|---|---|")?;
    for b in &best {
        writeln!(md, "| {} | {} | {} | {} |", b.model, pct(b.best_acc), duration_label(b.duration_s), b.sampling)?;
    }

    writeln!(md, "\n## Sampling effect (oversample - undersample, percentage points)\n")?;
    if effect.is_empty() {
        writeln!(md, "No cell has both sampling modes.")?;
    } else {
        writeln!(md, "| model | duration (s) | oversample | undersample | delta |\n|---|---|---|---|---|")?;
        for e in &effect {
            writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                e.model,
                duration_label(e.duration_s),
                pct(e.oversample_acc),
                pct(e.undersample_acc),
                pct(e.delta)
            )?;
        }
    }

    writeln!(md, "\n## Segments and accuracy by duration\n")?;
    let models: Vec<ModelKind> = best.iter().map(|b| b.model).collect();
    write!(md, "| duration (s) | segments | train segments |")?;
    for m in &models {
        write!(md, " {m} best (%) |")?;
    }
    writeln!(md, "\n|---|---|---|{}", "---|".repeat(models.len()))?;
    for s in stats {
        write!(md, "| {} | {} | {} |", duration_label(s.duration_s), s.segments, s.train_segments)?;
        for m in &models {
            let acc = results
                .iter()
                .filter(|r| r.model == *m && r.duration_s == s.duration_s)
                .map(|r| r.final_test_acc)
                .fold(f64::NAN, f64::max);
            write!(md, " {} |", if acc.is_nan() { "-".into() } else { pct(acc) })?;
        }
        writeln!(md)?;
    }

    writeln!(md, "\n## Training cost (measured on this machine)\n")?;
    writeln!(md, "| model | cells | total (s) | mean per cell (s) | mean epochs | s/epoch |\n|---|---|---|---|---|---|")?;
    for w in &wall {
        writeln!(
            md,
            "| {} | {} | {:.1} | {:.1} | {:.1} | {:.2} |",
            w.model, w.cells, w.total_seconds, w.mean_seconds, w.mean_epochs, w.seconds_per_epoch
        )?;
    }

    if !cv.is_empty() {
        writeln!(md, "\n## Cross-validation\n")?;
        writeln!(md, "| model | duration (s) | sampling | k | mean (%) | std (%) | hold-out (%) | delta |\n|---|---|---|---|---|---|---|---|")?;
        for c in &cv {
            writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                c.model,
                duration_label(c.duration_s),
                c.sampling,
                c.k,
                pct(c.mean),
                pct(c.std),
                c.holdout_acc.map_or("-".into(), pct),
                c.delta_vs_holdout.map_or("-".into(), pct)
            )?;
        }
    }
    let md_path = out.join("report.md");
    std::fs::write(&md_path, md)?;
    written.push(md_path);
    Ok(written)
}
