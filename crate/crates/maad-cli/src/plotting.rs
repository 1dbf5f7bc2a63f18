//! Learning-curve plotting from metrics CSVs. A pure reader: nothing here
//! recomputes training quantities.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use maad::agent::{parse_metrics_csv, Metrics};
use maad::error::{Error, Result};

use crate::config::RunConfig;
use crate::svg::{Chart, Series, PALETTE};

struct RunCurves {
    algorithm: String,
    env: String,
    /// Aligned per-seed curves: `steps[i]` with one value per seed.
    steps: Vec<u64>,
    per_seed: Vec<Vec<f64>>,
}

fn metric_value(m: &Metrics, name: &str) -> Result<f64> {
    Ok(match name {
        "mean_return" => m.mean_return,
        "std_return" => m.std_return,
        "normalized_return" => m.normalized_return,
        "idm_nll" => m.idm_nll,
        "reg_kl" => m.reg_kl,
        "backend_diag" => m.backend_diag,
        other => return Err(Error::contract(format!("unknown metric '{other}'"))),
    })
}

fn load_run(dir: &Path, metric: &str) -> Result<RunCurves> {
    let cfg = RunConfig::load(dir.join("config.resolved.toml"))?;
    let mut seed_rows: Vec<Vec<Metrics>> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed_"))
        })
        .collect();
    entries.sort();
    for seed_dir in entries {
        let text = std::fs::read_to_string(seed_dir.join("metrics.csv"))?;
        seed_rows.push(parse_metrics_csv(&text)?);
    }
    if seed_rows.is_empty() {
        return Err(Error::contract(format!(
            "no seed_* directories under {}",
            dir.display()
        )));
    }
    let n = seed_rows.iter().map(|r| r.len()).min().unwrap_or(0);
    if n == 0 {
        return Err(Error::contract(format!(
            "empty metrics under {}",
            dir.display()
        )));
    }
    let steps: Vec<u64> = seed_rows[0][..n].iter().map(|m| m.env_steps).collect();
    let mut per_seed = Vec::with_capacity(seed_rows.len());
    for rows in &seed_rows {
        let vals: Vec<f64> = rows[..n]
            .iter()
            .map(|m| metric_value(m, metric))
            .collect::<Result<_>>()?;
        per_seed.push(vals);
    }
    Ok(RunCurves {
        algorithm: cfg.train.algorithm.name().to_string(),
        env: cfg.env.name.clone(),
        steps,
        per_seed,
    })
}

fn mean_std(per_seed: &[Vec<f64>], i: usize) -> (f64, f64) {
    let vals: Vec<f64> = per_seed.iter().map(|s| s[i]).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Renders the mean ± std chart for every run directory, and optionally the
/// per-algorithm median chart across environments on a quantile grid.
pub fn plot(
    runs: &[PathBuf],
    out: &Path,
    metric: &str,
    median_out: Option<&Path>,
    quantiles: usize,
) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::contract("plot needs at least one run directory"));
    }
    let curves: Vec<RunCurves> = runs
        .iter()
        .map(|dir| load_run(dir, metric))
        .collect::<Result<_>>()?;

    let mut series = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let xs: Vec<f64> = c.steps.iter().map(|&s| s as f64).collect();
        let mut ys = Vec::with_capacity(xs.len());
        let mut band = Vec::with_capacity(xs.len());
        for k in 0..xs.len() {
            let (m, s) = mean_std(&c.per_seed, k);
            ys.push(m);
            band.push(s);
        }
        series.push(Series {
            label: format!("{} ({} seeds, {})", c.algorithm, c.per_seed.len(), c.env),
            color: PALETTE[i % PALETTE.len()].to_string(),
            xs,
            ys,
            band: Some(band),
        });
    }
    let chart = Chart {
        title: format!("{metric} (mean ± std across seeds)"),
        x_label: "environment steps".into(),
        y_label: metric.replace('_', " "),
        series,
        y_clip: if metric == "normalized_return" {
            Some((-1.0, 1.5))
        } else {
            None
        },
    };
    std::fs::write(out, chart.render())?;
    println!("wrote {}", out.display());

    if let Some(median_path) = median_out {
        // group runs by algorithm; resample each environment's mean curve
        // onto a shared quantile grid, then take medians per algorithm
        let q = quantiles.max(2);
        let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for c in &curves {
            let xs: Vec<f64> = c.steps.iter().map(|&s| s as f64).collect();
            let ys: Vec<f64> = (0..xs.len()).map(|k| mean_std(&c.per_seed, k).0).collect();
            let max_x = *xs.last().expect("non-empty curve");
            let resampled: Vec<f64> = (0..q)
                .map(|i| {
                    let x = max_x * i as f64 / (q - 1) as f64;
                    interp(&xs, &ys, x)
                })
                .collect();
            groups
                .entry(c.algorithm.clone())
                .or_default()
                .push(resampled);
        }
        let mut series = Vec::new();
        for (i, (algo, members)) in groups.iter().enumerate() {
            let ys: Vec<f64> = (0..quantiles.max(2))
                .map(|k| {
                    let mut vals: Vec<f64> = members.iter().map(|m| m[k]).collect();
                    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
                    let n = vals.len();
                    if n % 2 == 1 {
                        vals[n / 2]
                    } else {
                        0.5 * (vals[n / 2 - 1] + vals[n / 2])
                    }
                })
                .collect();
            let xs: Vec<f64> = (0..ys.len())
                .map(|k| k as f64 / (ys.len() - 1) as f64)
                .collect();
            series.push(Series {
                label: format!("{algo} (median over {} envs)", members.len()),
                color: PALETTE[i % PALETTE.len()].to_string(),
                xs,
                ys,
                band: None,
            });
        }
        let chart = Chart {
            title: format!("median {metric} per algorithm"),
            x_label: "fraction of interaction budget".into(),
            y_label: format!("median {}", metric.replace('_', " ")),
            series,
            y_clip: if metric == "normalized_return" {
                Some((-1.0, 1.5))
            } else {
                None
            },
        };
        std::fs::write(median_path, chart.render())?;
        println!("wrote {}", median_path.display());
    }
    Ok(())
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let mut lo = 0;
    let mut hi = xs.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}
