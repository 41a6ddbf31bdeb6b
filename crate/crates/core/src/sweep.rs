//! Preset sweeps: run a named group of configurations across seeds in
//! parallel, with per-run directories and aggregate CSVs.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{self, MetricsRow};
use crate::run::{execute_run, RunManifest};
use crate::trainer::{preset, TrainConfig};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REWARD_STD_FILE: &str = "reward_std_by_step.csv";

/// Named sweep groups and the presets they compare.
pub fn sweep_groups() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("reward-design", vec!["grpo-fixed", "grpo-soft"]),
        ("training-type", vec!["grpo-soft", "grpo-prime-soft", "tw-grpo-soft"]),
        (
            "token-weighting",
            vec!["grpo-prime-soft", "tw-grpo-soft"],
        ),
        (
            "alpha",
            vec![
                "tw-alpha-0.0",
                "tw-alpha-0.1",
                "tw-alpha-0.3",
                "tw-alpha-0.5",
                "tw-alpha-0.7",
                "tw-alpha-0.9",
                "tw-alpha-1.1",
                "tw-alpha-1.3",
                "tw-alpha-1.5",
                "tw-alpha-2.0",
            ],
        ),
        ("sampling", vec!["tw-group-4", "tw-group-8", "tw-group-12"]),
        (
            "temperature",
            vec!["tw-temp-0.5", "tw-temp-1.0", "tw-temp-1.5"],
        ),
        (
            "position-mask",
            vec![
                "tw-mask-none",
                "tw-mask-padding-only",
                "tw-mask-content-only",
                "tw-mask-all",
            ],
        ),
    ]
}

pub fn group_presets(group: &str) -> Result<Vec<&'static str>> {
    sweep_groups()
        .into_iter()
        .find(|(name, _)| *name == group)
        .map(|(_, presets)| presets)
        .ok_or_else(|| {
            let names: Vec<&str> = sweep_groups().iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "unknown sweep group {group:?}; known: {}",
                names.join(", ")
            ))
        })
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub preset: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
}

/// Apply per-run knobs on top of a preset.
fn resolve_config(base: TrainConfig, seed: u64, steps: Option<u64>) -> TrainConfig {
    let mut cfg = base;
    cfg.seed = seed;
    if let Some(steps) = steps {
        cfg.steps = steps;
    }
    cfg
}

/// Run `group` across `seeds`, up to `jobs` runs in parallel. Each run gets
/// its own directory under `out`; aggregates land next to them.
pub fn run_sweep(
    group: &str,
    seeds: &[u64],
    corpus: &Path,
    out: &Path,
    jobs: usize,
    steps: Option<u64>,
) -> Result<Vec<SweepRun>> {
    if seeds.is_empty() {
        return Err(Error::Config("seeds list must be nonempty".into()));
    }
    let presets = group_presets(group)?;
    std::fs::create_dir_all(out)?;
    let mut jobs_list = Vec::new();
    for name in &presets {
        for &seed in seeds {
            jobs_list.push((name.to_string(), seed));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Result<Vec<SweepRun>> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|(name, seed)| {
                let config = resolve_config(preset(name)?, *seed, steps);
                let manifest = RunManifest::new(corpus, Some(name.clone()), config)?;
                let dir = out.join(format!("{name}-seed{seed}"));
                let metrics = execute_run(&dir, &manifest)?;
                Ok(SweepRun {
                    preset: name.clone(),
                    seed: *seed,
                    dir,
                    metrics,
                })
            })
            .collect()
    });
    let runs = runs?;
    write_summary(&out.join(SUMMARY_FILE), &presets, seeds, &runs)?;
    write_reward_std(&out.join(REWARD_STD_FILE), &runs)?;
    Ok(runs)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_summary(
    path: &Path,
    presets: &[&str],
    seeds: &[u64],
    runs: &[SweepRun],
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "config,seeds,final_accuracy_mean,final_accuracy_std,final_soft_accuracy_mean,final_soft_accuracy_std"
    )?;
    for name in presets {
        let finals: Vec<&MetricsRow> = runs
            .iter()
            .filter(|r| r.preset == *name)
            .filter_map(|r| r.metrics.last())
            .collect();
        let acc: Vec<f64> = finals.iter().map(|m| m.eval_accuracy).collect();
        let soft: Vec<f64> = finals.iter().map(|m| m.eval_soft_accuracy).collect();
        let (am, astd) = mean_std(&acc);
        let (sm, sstd) = mean_std(&soft);
        writeln!(
            f,
            "{name},{},{am:?},{astd:?},{sm:?},{sstd:?}",
            seeds.len()
        )?;
    }
    Ok(())
}

fn write_reward_std(path: &Path, runs: &[SweepRun]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "config,seed,step,group_reward_std")?;
    for run in runs {
        for m in &run.metrics {
            writeln!(f, "{},{},{},{:?}", run.preset, run.seed, m.step, m.group_reward_std)?;
        }
    }
    Ok(())
}

/// Collect every `metrics.csv` under `root` into one tidy long-format CSV
/// with (run, step, metric, value) rows for external plotting.
pub fn export_plots(root: &Path, out: &Path) -> Result<()> {
    let mut runs = Vec::new();
    collect_metrics_files(root, &mut runs)?;
    runs.sort();
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "run,step,metric,value")?;
    for path in runs {
        let rows = metrics::load_metrics(&path)?;
        let run = path
            .parent()
            .and_then(|p| p.strip_prefix(root).ok())
            .map(|p| p.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "run".into());
        for m in rows {
            for (metric, value) in [
                ("mean_total_reward", m.mean_total_reward),
                ("group_reward_std", m.group_reward_std),
                ("mean_completion_length", m.mean_completion_length),
                ("eval_accuracy", m.eval_accuracy),
                ("eval_soft_accuracy", m.eval_soft_accuracy),
                ("mean_d_t", m.mean_d_t),
            ] {
                writeln!(f, "{run},{},{metric},{value:?}", m.step)?;
            }
        }
    }
    Ok(())
}

fn collect_metrics_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_metrics_files(&path, out)?;
        } else if path.file_name().and_then(|n| n.to_str()) == Some(crate::run::METRICS_FILE) {
            out.push(path.clone());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_corpus, TaskSpec};
    use crate::qai;

    fn tiny_corpus(dir: &Path) -> PathBuf {
        let path = dir.join("corpus.jsonl");
        let records = generate_corpus(
            &TaskSpec {
                train: 4,
                eval: 2,
                ..TaskSpec::default()
            },
            5,
        )
        .unwrap();
        qai::save_corpus(&path, &records).unwrap();
        path
    }

    #[test]
    fn reward_design_sweep_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(dir.path());
        let out = dir.path().join("sweep");
        let runs = run_sweep("reward-design", &[1, 2], &corpus, &out, 2, Some(4)).unwrap();
        assert_eq!(runs.len(), 4); // 2 configs x 2 seeds
        for name in ["grpo-fixed-seed1", "grpo-fixed-seed2", "grpo-soft-seed1", "grpo-soft-seed2"]
        {
            assert!(out.join(name).join("metrics.csv").exists(), "{name}");
            assert!(out.join(name).join("manifest.toml").exists());
        }
        let summary = std::fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 3); // header + 2 configs
        let stds = std::fs::read_to_string(out.join(REWARD_STD_FILE)).unwrap();
        assert!(stds.lines().count() > 4);
    }

    #[test]
    fn parallel_and_serial_sweeps_agree() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(dir.path());
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run_sweep("token-weighting", &[3], &corpus, &a, 4, Some(4)).unwrap();
        run_sweep("token-weighting", &[3], &corpus, &b, 1, Some(4)).unwrap();
        for name in ["grpo-prime-soft-seed3", "tw-grpo-soft-seed3"] {
            let left = std::fs::read(a.join(name).join("metrics.csv")).unwrap();
            let right = std::fs::read(b.join(name).join("metrics.csv")).unwrap();
            assert_eq!(left, right, "{name}");
        }
    }

    #[test]
    fn empty_seeds_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(dir.path());
        assert!(run_sweep("alpha", &[], &corpus, dir.path(), 1, None).is_err());
    }

    #[test]
    fn unknown_group_rejected() {
        assert!(group_presets("bogus").is_err());
        for (name, presets) in sweep_groups() {
            assert!(!presets.is_empty(), "{name}");
            for p in presets {
                crate::trainer::preset(p).unwrap();
            }
        }
    }

    #[test]
    fn export_plots_tidy_format() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus(dir.path());
        let out = dir.path().join("sweep");
        run_sweep("reward-design", &[1], &corpus, &out, 2, Some(4)).unwrap();
        let tidy = dir.path().join("tidy.csv");
        export_plots(&out, &tidy).unwrap();
        let text = std::fs::read_to_string(&tidy).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("run,step,metric,value"));
        let body: Vec<&str> = lines.collect();
        assert!(!body.is_empty());
        assert!(body.iter().any(|l| l.starts_with("grpo-fixed-seed1,")));
        assert!(body.iter().any(|l| l.contains(",eval_soft_accuracy,")));
        for line in &body {
            assert_eq!(line.split(',').count(), 4, "{line}");
        }
    }
}
