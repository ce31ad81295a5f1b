use std::fs;
use std::path::{Path, PathBuf};

use liftseg_core::{
    apply_recipe, assign_labels, compute_metrics, history_csv, solve_with, ChannelStack, LabelMap,
    MetricsReport, SimplexMode,
};

use crate::config::{validate_config, RunConfig};
use crate::error::CliError;
use crate::io::{load_channels, read_labels, write_labels, write_mask};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub output_dir: Option<PathBuf>,
    /// Suppresses progress messages on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    /// Files written, relative to `output_dir`.
    pub files: Vec<String>,
    pub labels: LabelMap,
    pub metrics: Option<MetricsReport>,
    pub iterations: usize,
}

/// Lift, solve, assign labels, evaluate, then write artifacts.
///
/// Artifacts are staged in a sibling temporary directory and moved into
/// place only once everything has been written.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let diagnostics = validate_config(cfg);
    if !diagnostics.is_empty() {
        let all: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
        return Err(CliError::Config(all.join("; ")));
    }
    let say = |msg: String| {
        if !opts.quiet {
            eprintln!("{msg}");
        }
    };

    let mut channels = Vec::new();
    for path in cfg.input_paths() {
        channels.extend(load_channels(
            &path,
            cfg.input.intensity,
            cfg.input.grayscale,
        )?);
    }
    let views: Vec<_> = channels.iter().map(|c| c.view()).collect();
    let stack = ndarray::stack(ndarray::Axis(0), &views)
        .map_err(|e| CliError::Config(format!("input.paths: {e}")))?;
    let input = ChannelStack::with_spacing(stack, cfg.input.spacing)?;
    let features = apply_recipe(&input, &cfg.recipe(input.channels()))?;
    let k = features.channels();
    let (n1, n2) = features.dims();
    say(format!(
        "lifted {} input channels to {k} features on a {n2}x{n1} grid",
        input.channels()
    ));

    let solver = &cfg.solver.config;
    let truth = match &cfg.evaluation {
        Some(ev) => {
            let raw = read_labels(&cfg.resolve(&ev.ground_truth), ev.values.as_deref())?;
            let map = LabelMap::new(raw, k as u16, solver.mode == SimplexMode::Inequality)
                .map_err(|e| CliError::Config(format!("evaluation.ground_truth: {e}")))?;
            Some((map, ev.include_background))
        }
        None => None,
    };
    let reference = truth
        .as_ref()
        .map(|(t, _)| t.indicator_masks(input.spacing()));
    let solution = solve_with(&features, solver, None, reference, |_| {})?;
    say(format!(
        "ran {} iterations (sigma {:.4e}, tau {:.4e}), final energy {:.6e}",
        solver.max_iters,
        solution.sigma,
        solution.tau,
        solution.history.last().map_or(f64::NAN, |h| h.energy)
    ));

    let labels = assign_labels(&solution.masks, solver.mode);
    let metrics = match &truth {
        Some((t, with_bg)) => Some(compute_metrics(&labels, t, *with_bg)?),
        None => None,
    };

    let out_dir = opts.output_dir.clone().unwrap_or_else(|| cfg.output_dir());
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".liftseg-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;

    let mut files = Vec::new();
    let mut emit = |name: String, write: &dyn Fn(&Path) -> Result<(), CliError>| {
        write(&staging.path().join(&name))?;
        files.push(name);
        Ok::<_, CliError>(())
    };
    let out = &cfg.output;
    if out.masks {
        for c in 0..k {
            emit(format!("mask_{}.png", c + 1), &|p| {
                write_mask(p, solution.masks.channel(c))
            })?;
        }
    }
    if out.labels {
        emit("labels.png".into(), &|p| write_labels(p, labels.labels()))?;
    }
    if out.curves {
        let csv = history_csv(&solution.history);
        emit("history.csv".into(), &|p| {
            fs::write(p, &csv).map_err(|e| CliError::io(p, e))
        })?;
    }
    if let (true, Some(m)) = (out.metrics, &metrics) {
        let csv = m.to_csv();
        emit("metrics.csv".into(), &|p| {
            fs::write(p, &csv).map_err(|e| CliError::io(p, e))
        })?;
    }

    publish(staging, &out_dir, &files)?;
    say(format!(
        "wrote {} files to {}",
        files.len(),
        out_dir.display()
    ));
    Ok(RunSummary {
        output_dir: out_dir,
        files,
        labels,
        metrics,
        iterations: solver.max_iters,
    })
}

/// Moves the staged files into `dest`, renaming the whole directory when
/// `dest` does not exist yet.
fn publish(staging: tempfile::TempDir, dest: &Path, files: &[String]) -> Result<(), CliError> {
    if !dest.exists() {
        let path = staging.keep();
        return fs::rename(&path, dest).map_err(|e| {
            let _ = fs::remove_dir_all(&path);
            CliError::io(dest, e)
        });
    }
    if !dest.is_dir() {
        return Err(CliError::io(
            dest,
            "output path exists and is not a directory",
        ));
    }
    for name in files {
        let target = dest.join(name);
        fs::rename(staging.path().join(name), &target).map_err(|e| CliError::io(&target, e))?;
    }
    Ok(())
}
