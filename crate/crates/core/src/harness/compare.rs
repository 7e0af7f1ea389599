//! Cross-run statistics and seed sweeps.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::log::{format_float, read_run_csv_file, KeyValueFile};
use crate::harness::run::{run_experiment, RunLog, EGAN_FITNESS_NOTE};
use crate::metrics::{describe, ranksum_holm, Describe, PairwiseComparison};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub alpha: f64,
    /// Final best-mixture Fréchet distance per run, keyed by method.
    pub scores: BTreeMap<String, Vec<f64>>,
    pub summaries: BTreeMap<String, Describe>,
    /// Empty when only one method was given.
    pub pairwise: Vec<PairwiseComparison>,
}

/// Mean, std%, median and IQR per method plus Holm-adjusted pairwise
/// rank-sum tests. Every method needs at least 3 runs.
pub fn compare_runs(scores: &BTreeMap<String, Vec<f64>>, alpha: f64) -> Result<ComparisonReport> {
    if scores.is_empty() {
        return Err(Error::Config("nothing to compare".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut summaries = BTreeMap::new();
    for (name, runs) in scores {
        if runs.len() < 3 {
            return Err(Error::TooFewSamples {
                needed: 3,
                got: runs.len(),
            });
        }
        summaries.insert(name.clone(), describe(runs)?);
    }
    let pairwise = if scores.len() >= 2 { ranksum_holm(scores)? } else { Vec::new() };
    Ok(ComparisonReport {
        alpha,
        scores: scores.clone(),
        summaries,
        pairwise,
    })
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        if self.scores.keys().any(|k| k == "e-gan") {
            writeln!(s, "# {EGAN_FITNESS_NOTE}")?;
        }
        writeln!(s, "# score: best-mixture Frechet distance after the final epoch (lower is better)")?;
        writeln!(s, "method,runs,mean,std_pct,median,iqr,min,max")?;
        for (name, d) in &self.summaries {
            writeln!(
                s,
                "{name},{},{},{},{},{},{},{}",
                d.n,
                format_float(d.mean),
                format_float(d.std_pct),
                format_float(d.median),
                format_float(d.iqr()),
                format_float(d.min),
                format_float(d.max)
            )?;
        }
        if !self.pairwise.is_empty() {
            writeln!(s)?;
            writeln!(s, "first,second,u,raw_p,holm_p,significant_at_{}", self.alpha)?;
            for p in &self.pairwise {
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    p.first,
                    p.second,
                    format_float(p.u),
                    format_float(p.raw_p),
                    format_float(p.adjusted_p),
                    p.adjusted_p < self.alpha
                )?;
            }
        }
        f.write_str(&s)
    }
}

/// Variant name and final best FD of one run directory, read from
/// `summary.txt` and the last row of `run.csv`.
pub fn load_run(dir: &Path) -> Result<(String, f64)> {
    let summary = KeyValueFile::read(&dir.join("summary.txt"))?;
    let variant = summary.require("variant")?.to_string();
    let records = read_run_csv_file(&dir.join("run.csv"))?;
    let last = records
        .last()
        .ok_or_else(|| Error::Parse(format!("{} has no epochs", dir.display())))?;
    Ok((variant, last.best_fd))
}

/// Collects runs from `inputs`; each input is a run directory or a directory
/// whose immediate subdirectories are runs.
pub fn collect_runs(inputs: &[PathBuf]) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut add = |dir: &Path| -> Result<()> {
        let (variant, fd) = load_run(dir)?;
        out.entry(variant).or_default().push(fd);
        Ok(())
    };
    for input in inputs {
        if input.join("summary.txt").is_file() {
            add(input)?;
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        children.sort();
        let mut found = false;
        for child in children {
            if child.join("summary.txt").is_file() {
                add(&child)?;
                found = true;
            }
        }
        if !found {
            return Err(Error::Config(format!("no runs under {}", input.display())));
        }
    }
    Ok(out)
}

/// Runs `base` once per seed, writing each run to `<out>/<variant>-seed<seed>`
/// when `base.out` is set.
pub fn sweep(base: &RunConfig, seeds: &[u64]) -> Result<Vec<RunLog>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.out = base.out.as_ref().map(|o| o.join(format!("{}-seed{seed}", base.variant)));
            run_experiment(&cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_runs_have_no_spread() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![2.5; 4]);
        let r = compare_runs(&m, 0.05).unwrap();
        let d = &r.summaries["a"];
        assert_eq!(d.std_pct, 0.0);
        assert_eq!(d.iqr(), 0.0);
        assert!(r.pairwise.is_empty());
    }

    #[test]
    fn median_and_iqr() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![1.0, 2.0, 3.0]);
        m.insert("b".to_string(), vec![4.0, 5.0, 6.0]);
        let r = compare_runs(&m, 0.05).unwrap();
        assert_eq!(r.summaries["a"].median, 2.0);
        assert_eq!(r.summaries["a"].iqr(), 1.0);
        assert_eq!(r.pairwise.len(), 1);
        let text = r.to_string();
        assert!(text.contains("a,3,"));
        assert!(text.contains("first,second"));
    }

    #[test]
    fn rejects_short_or_bad_input() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![1.0, 2.0]);
        assert!(compare_runs(&m, 0.05).is_err());
        m.insert("a".to_string(), vec![1.0, 2.0, 3.0]);
        assert!(compare_runs(&m, 1.5).is_err());
        assert!(compare_runs(&BTreeMap::new(), 0.05).is_err());
    }
}
