use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, Context};
use fisgan_core::checkpoint;
use fisgan_core::config::TrainConfig;
use fisgan_core::data::{write_image_grid, Dataset, MetricRow, MetricsWriter};
use fisgan_core::flows::FlowKind;
use fisgan_core::gan::{Observer, RefreshRecord, RunSummary, Trainer};
use fisgan_core::norms::NormKind;
use fisgan_core::Tensor2;
use log::{info, warn};

use crate::experiment::ExperimentFile;
use crate::CliError;

pub const CONFIG_ECHO: &str = "config.echo";
pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINT: &str = "final.ckpt";
pub const GRIDS: &str = "grids";
pub const REFRESHES: &str = "refreshes.csv";
const SCATTER_SIDE: usize = 64;

/// Renders a batch as an image grid, or as a density image for 2-D points.
pub fn save_samples(path: &Path, samples: &Tensor2, data: &Dataset, count: usize) -> fisgan_core::Result<()> {
    let n = count.min(samples.rows()).max(1);
    let head = samples.select_rows(&(0..n).collect::<Vec<_>>());
    match data.image_side {
        Some(side) => {
            let cols = (n as f64).sqrt().ceil() as usize;
            write_image_grid(&head, side, cols, data.pixel_range, path)
        }
        None => {
            let image = scatter_image(samples, data.pixel_range, SCATTER_SIDE);
            write_image_grid(&image, SCATTER_SIDE, 1, (0.0, 1.0), path)
        }
    }
}

/// Histogram of the first two coordinates; bright where samples are dense.
fn scatter_image(samples: &Tensor2, (lo, hi): (f64, f64), side: usize) -> Tensor2 {
    let mut counts = vec![0.0f64; side * side];
    if samples.cols() >= 2 {
        let bin = |v: f64| (((v - lo) / (hi - lo) * side as f64).floor() as isize).clamp(0, side as isize - 1) as usize;
        for p in samples.iter_rows() {
            // y grows upward in the picture.
            counts[(side - 1 - bin(p[1])) * side + bin(p[0])] += 1.0;
        }
    }
    let max = counts.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        counts.iter_mut().for_each(|c| *c /= max);
    }
    Tensor2::from_vec(1, side * side, counts).expect("finite counts")
}

type Merged = Arc<Mutex<MetricsWriter>>;

struct RunSink<'a> {
    metrics: MetricsWriter,
    refreshes: File,
    merged: Option<(Merged, String)>,
    grids: PathBuf,
    data: &'a Dataset,
    grid_samples: usize,
}

impl Observer for RunSink<'_> {
    fn on_metric(&mut self, row: &MetricRow, samples: &Tensor2) -> fisgan_core::Result<()> {
        self.metrics.write(row)?;
        if let Some((writer, variant)) = &self.merged {
            writer.lock().expect("merged writer").write_variant(variant, row)?;
        }
        let path = self.grids.join(format!("iter_{:06}.pgm", row.iteration));
        save_samples(&path, samples, self.data, self.grid_samples)?;
        info!(
            "iter {:>6}  proxy_fid {:.4}  d_loss {:.4}  g_loss {:.4}",
            row.iteration, row.proxy_fid, row.d_loss, row.g_loss
        );
        Ok(())
    }

    fn on_refresh(&mut self, r: &RefreshRecord) -> fisgan_core::Result<()> {
        let nll = r.final_nll.map(|v| format!("{v:.11e}")).unwrap_or_default();
        writeln!(self.refreshes, "{},{:.6},{:.6},{nll}", r.iteration, r.norm_ms, r.fit_ms)?;
        self.refreshes.flush()?;
        Ok(())
    }
}

/// Opens the per-refresh timing log, writing its header when new.
fn refresh_log(path: &Path, append: bool) -> std::io::Result<File> {
    if append && path.is_file() {
        return OpenOptions::new().append(true).open(path);
    }
    let mut f = File::create(path)?;
    writeln!(f, "iteration,norm_ms,fit_ms,final_nll")?;
    Ok(f)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
}

fn io_err(e: impl Into<anyhow::Error>, what: String) -> CliError {
    CliError::runtime(e.into().context(what))
}

/// Trains one experiment into its run directory. With `resume`, training
/// continues in the checkpoint's directory and appends to its metrics.
pub fn train_run(exp: &ExperimentFile, resume: Option<&Path>, merged: Option<(Merged, String)>) -> Result<RunOutcome, CliError> {
    let data = exp.load_dataset()?;
    let (dir, state) = match resume {
        Some(ckpt) => {
            let (saved, state) = checkpoint::load(ckpt)
                .with_context(|| format!("cannot load checkpoint {}", ckpt.display()))
                .map_err(CliError::runtime)?;
            let comparable = |c: &TrainConfig| TrainConfig { max_iters: 0, wall_clock: false, ..c.clone() };
            if comparable(&saved) != comparable(&exp.train) {
                return Err(CliError::config(anyhow!(
                    "configuration differs from the checkpoint beyond max_iters and wall_clock"
                )));
            }
            let dir = ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
            (dir, Some(state))
        }
        None => (exp.out.join(exp.run_name()), None),
    };
    let grids = dir.join(GRIDS);
    fs::create_dir_all(&grids).map_err(|e| io_err(e, format!("cannot create {}", grids.display())))?;
    fs::write(dir.join(CONFIG_ECHO), exp.echo()).map_err(|e| io_err(e, "cannot write config echo".into()))?;

    let metrics_path = dir.join(METRICS);
    let metrics = if state.is_some() { MetricsWriter::append(&metrics_path) } else { MetricsWriter::create(&metrics_path) }
        .map_err(CliError::from_core)?;
    let refreshes = refresh_log(&dir.join(REFRESHES), state.is_some())
        .map_err(|e| io_err(e, "cannot open refresh log".into()))?;
    let mut trainer = match state {
        Some(s) => Trainer::resume(exp.train.clone(), s, &data),
        None => Trainer::new(exp.train.clone(), &data),
    }
    .map_err(CliError::from_core)?;

    info!("run directory {}", dir.display());
    let mut sink = RunSink { metrics, refreshes, merged, grids, data: &data, grid_samples: exp.grid_samples };
    let summary = trainer
        .train(&mut sink)
        .map_err(|e| CliError::runtime(anyhow!(e).context("training aborted")))?;
    if let Some(skipped) = summary.skipped_refreshes.first() {
        warn!("{} refreshes skipped, first at iteration {skipped}", summary.skipped_refreshes.len());
    }
    checkpoint::save(&dir.join(CHECKPOINT), trainer.config(), trainer.state()).map_err(CliError::from_core)?;
    Ok(RunOutcome { dir, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Norm,
    Flow,
}

/// One run per axis value with everything else shared, merged into
/// `<out>/ablate-<axis>.csv` with a `variant` column.
pub fn ablate(exp: &ExperimentFile, axis: Axis, values: &[String], parallel: bool) -> Result<Vec<RunOutcome>, CliError> {
    if values.is_empty() {
        return Err(CliError::config(anyhow!("no values given for the ablation axis")));
    }
    let mut variants = Vec::with_capacity(values.len());
    for v in values {
        let mut e = exp.clone();
        match axis {
            Axis::Norm => e.train.norm_kind = v.parse::<NormKind>().map_err(|err| CliError::config(anyhow!(err)))?,
            Axis::Flow => e.train.flow_kind = v.parse::<FlowKind>().map_err(|err| CliError::config(anyhow!(err)))?,
        }
        variants.push((v.clone(), e));
    }
    fs::create_dir_all(&exp.out).map_err(|e| io_err(e, format!("cannot create {}", exp.out.display())))?;
    let name = match axis {
        Axis::Norm => "norm",
        Axis::Flow => "flow",
    };
    let merged_path = exp.out.join(format!("ablate-{name}.csv"));
    let merged = Arc::new(Mutex::new(MetricsWriter::create_merged(&merged_path).map_err(CliError::from_core)?));

    let results: Vec<Result<RunOutcome, CliError>> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = variants
                .iter()
                .map(|(v, e)| {
                    let m = Some((merged.clone(), v.clone()));
                    scope.spawn(move || train_run(e, None, m))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
        })
    } else {
        variants.iter().map(|(v, e)| train_run(e, None, Some((merged.clone(), v.clone())))).collect()
    };
    info!("merged metrics in {}", merged_path.display());
    results.into_iter().collect()
}

/// Scores a checkpoint against the dataset and writes a sample grid.
pub fn evaluate(ckpt: &Path, exp: &ExperimentFile, samples: usize, grid: Option<&Path>) -> Result<f64, CliError> {
    if samples < 2 {
        return Err(CliError::config(anyhow!("need at least 2 samples, got {samples}")));
    }
    if samples == 2 {
        warn!("2 samples give a very high-variance covariance estimate");
    }
    let (mut config, state) = checkpoint::load(ckpt)
        .with_context(|| format!("cannot load checkpoint {}", ckpt.display()))
        .map_err(CliError::runtime)?;
    let data = exp.load_dataset()?;
    config.eval_samples = samples;
    let iteration = state.iteration;
    let trainer = Trainer::resume(config, state, &data).map_err(CliError::from_core)?;
    let (fid, generated) = trainer.evaluate(iteration).map_err(CliError::from_core)?;
    let grid = grid.map(Path::to_path_buf).unwrap_or_else(|| ckpt.with_file_name("eval.pgm"));
    save_samples(&grid, &generated, &data, exp.grid_samples).map_err(CliError::from_core)?;
    Ok(fid)
}
