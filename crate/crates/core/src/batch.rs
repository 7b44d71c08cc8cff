//! Batch execution of a run configuration: one ensemble per sweep point,
//! per-trajectory checkpoints for resuming, CSV output and gnuplot scripts.
//!
//! Layout under `<output_dir>/<label>/`:
//!
//! ```text
//! summary.csv
//! point-000/config.toml          resolved configuration of the point
//! point-000/trajectories.jsonl   one completed trajectory per line, by index
//! point-000/stats.csv            time,observable,value,stderr,count
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{resolve_output_dir, ConfigError, Method, RunConfig, SweepPoint};
use crate::ensemble::{for_each_trajectory, EnsembleAccumulator, EnsembleError, EnsembleSpec, LEAKAGE};
use crate::hilbert::DensityMatrix;
use crate::lindblad::{integrate_master, LindbladError, MasterEquationRun};
use crate::observables::{settled_mean, EnsembleStats, ObservableError, SettledMean};
use crate::stochastic::TrajectoryRecord;

pub const STATS_HEADER: &str = "time,observable,value,stderr,count";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_FILE: &str = "trajectories.jsonl";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{path}: {reason}")]
    Summary { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fixed 17-significant-digit rendering used in every CSV file.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: usize,
    pub resume: bool,
    pub output_dir: Option<PathBuf>,
    /// Stop after this many newly computed trajectories, leaving a resumable
    /// checkpoint.
    pub max_new_trajectories: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSummary {
    pub index: usize,
    pub coordinates: Vec<(String, f64)>,
    pub observable: String,
    pub result: SettledMean,
    pub max_leakage: f64,
    pub valid: u64,
    pub invalid: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Complete { run_dir: PathBuf, points: Vec<PointSummary> },
    Interrupted { run_dir: PathBuf, completed: u64 },
}

impl RunOutcome {
    pub fn run_dir(&self) -> &Path {
        match self {
            Self::Complete { run_dir, .. } | Self::Interrupted { run_dir, .. } => run_dir,
        }
    }
}

pub fn point_dir(run_dir: &Path, index: usize) -> PathBuf {
    run_dir.join(format!("point-{index:03}"))
}

/// Run every sweep point of `config`.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunOutcome, BatchError> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    config.validate()?;
    let run_dir = resolve_output_dir(options.output_dir.as_deref(), &config).join(&config.label);
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let mut budget = options.max_new_trajectories;
    let mut points = Vec::new();
    let mut completed = 0;
    for point in config.points()? {
        let dir = point_dir(&run_dir, point.index);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        match run_point(&point, &dir, options, &mut budget)? {
            Some(summary) => points.push(summary),
            None => {
                return Ok(RunOutcome::Interrupted {
                    run_dir,
                    completed,
                })
            }
        }
        completed += 1;
    }
    write_summary(&run_dir.join(SUMMARY_FILE), &config.label, &points)?;
    Ok(RunOutcome::Complete { run_dir, points })
}

fn run_point(
    point: &SweepPoint,
    dir: &Path,
    options: &RunOptions,
    budget: &mut Option<u64>,
) -> Result<Option<PointSummary>, BatchError> {
    let config = &point.config;
    let config_path = dir.join("config.toml");
    let resolved = config.to_toml_string();
    if options.resume && config_path.exists() {
        let previous = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
        if previous != resolved {
            return Err(BatchError::Checkpoint {
                path: config_path,
                reason: "configuration differs from the checkpointed run".into(),
            });
        }
    } else {
        fs::write(&config_path, &resolved).map_err(io_err(&config_path))?;
    }
    let model = config.build_model()?;
    let psi0 = config.initial_state(&model)?;
    let stats = match config.stepper(&model) {
        None => {
            let stats = lindblad_stats(config, &model, &psi0)?;
            (stats, 0.0, 1, 0)
        }
        Some(stepper) => {
            let spec = EnsembleSpec {
                model: &model,
                psi0: &psi0,
                config: stepper,
                seed: config.seed,
                span: config.span(),
            };
            let mut acc = EnsembleAccumulator::new(model.space().n_modes(), spec.record_times(), config.transient_fraction);
            let ckpt = dir.join(CHECKPOINT_FILE);
            let done = if options.resume {
                load_checkpoint(&ckpt, config.n_trajectories, &mut acc)?
            } else {
                File::create(&ckpt).map_err(io_err(&ckpt))?;
                0
            };
            let mut end = config.n_trajectories;
            if let Some(left) = budget {
                end = end.min(done + *left);
                *left -= end - done;
            }
            let file = OpenOptions::new().append(true).open(&ckpt).map_err(io_err(&ckpt))?;
            let mut writer = BufWriter::new(file);
            let mut sink_err = None;
            let result = for_each_trajectory(&spec, done..end, options.workers.max(1), |record| {
                acc.absorb(&record)?;
                if let Err(e) = append_record(&mut writer, &record) {
                    sink_err = Some(e);
                }
                Ok(())
            });
            writer.flush().map_err(io_err(&ckpt))?;
            result?;
            if let Some(e) = sink_err {
                return Err(BatchError::Io { path: ckpt, source: e });
            }
            if end < config.n_trajectories {
                return Ok(None);
            }
            (acc.stats, acc.max_leakage, acc.valid, acc.invalid)
        }
    };
    let (stats, max_leakage, valid, invalid) = stats;
    let leakage = if config.unravelling == Method::LindbladOracle {
        stats
            .iter()
            .find(|s| s.observable == LEAKAGE)
            .map(|s| s.means().into_iter().fold(0.0, f64::max))
            .unwrap_or(0.0)
    } else {
        max_leakage
    };
    write_stats(&dir.join("stats.csv"), &stats)?;
    let observable = config.summary_observable();
    let target = stats
        .iter()
        .find(|s| s.observable == observable)
        .expect("summary observable validated against the recorded names");
    let result = if valid == 0 {
        SettledMean {
            mean: f64::NAN,
            stderr: f64::NAN,
            settled: false,
            block_means: (f64::NAN, f64::NAN),
            trajectories: 0,
        }
    } else {
        settled_mean(target, config.settle_tolerance)?
    };
    Ok(Some(PointSummary {
        index: point.index,
        coordinates: point.coordinates.clone(),
        observable,
        result,
        max_leakage: leakage,
        valid,
        invalid,
    }))
}

fn append_record(writer: &mut impl Write, record: &TrajectoryRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *writer, record)?;
    writer.write_all(b"\n")
}

/// Re-absorb the checkpointed trajectories `0..k` and return `k`. A trailing
/// partial line from an interrupted write is truncated away.
fn load_checkpoint(path: &Path, n: u64, acc: &mut EnsembleAccumulator) -> Result<u64, BatchError> {
    if !path.exists() {
        File::create(path).map_err(io_err(path))?;
        return Ok(0);
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut good_bytes = 0u64;
    let mut next = 0u64;
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(io_err(path))?;
        if read == 0 || !line.ends_with('\n') {
            break;
        }
        let record: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| BatchError::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", next + 1),
        })?;
        if record.index != next {
            return Err(BatchError::Checkpoint {
                path: path.to_path_buf(),
                reason: format!("expected trajectory {next}, found {}", record.index),
            });
        }
        if next < n {
            acc.absorb(&record)?;
        }
        next += 1;
        good_bytes += read as u64;
    }
    let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    file.set_len(good_bytes).map_err(io_err(path))?;
    Ok(next.min(n))
}

fn lindblad_stats(
    config: &RunConfig,
    model: &crate::models::SystemModel,
    psi0: &crate::hilbert::StateVector,
) -> Result<Vec<EnsembleStats>, BatchError> {
    let span = config.span();
    let run = MasterEquationRun {
        model,
        rho0: DensityMatrix::pure(psi0),
        t_start: 0.0,
        dt: config.dt * model.drive_period(),
        steps: span.steps,
        record_every: span.record_every,
    };
    let solution = integrate_master(&run)?;
    let space = model.space();
    let masks = space.leakage_masks();
    let names = config.observable_names();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rho in &solution.states {
        let mut values = Vec::new();
        for (x, p) in model.positions().iter().zip(model.momenta()) {
            values.push(rho.expectation(x).re);
            values.push(rho.expectation(p).re);
        }
        let diag = rho.matrix().diagonal();
        let leak = masks
            .iter()
            .map(|mask| mask.iter().zip(diag.iter()).filter(|(m, _)| **m).map(|(_, d)| d.re).sum::<f64>())
            .fold(0.0, f64::max);
        values.push(leak);
        values.push(rho.purity());
        for (s, v) in series.iter_mut().zip(values) {
            s.push(v);
        }
    }
    names
        .into_iter()
        .zip(series)
        .map(|(name, values)| {
            let mut stats = EnsembleStats::new(name, solution.times.clone(), config.transient_fraction);
            stats.push_series(&values)?;
            Ok(stats)
        })
        .collect()
}

/// Per-time-point ensemble statistics in the CSV schema.
pub fn write_stats(path: &Path, stats: &[EnsembleStats]) -> Result<(), BatchError> {
    let mut out = String::new();
    out.push_str(STATS_HEADER);
    out.push('\n');
    for s in stats {
        for (t, m) in s.times.iter().zip(&s.points) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(*t),
                s.observable,
                fmt_f64(m.mean()),
                fmt_f64(m.stderr()),
                m.count()
            ));
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn summary_header(axes: &[String]) -> String {
    let mut cols = vec!["label".to_string(), "point".to_string()];
    cols.extend(axes.iter().cloned());
    cols.extend(
        [
            "observable",
            "mean",
            "stderr",
            "settled",
            "block_mean_early",
            "block_mean_late",
            "max_leakage",
            "valid",
            "invalid",
        ]
        .map(String::from),
    );
    cols.join(",")
}

pub fn write_summary(path: &Path, label: &str, points: &[PointSummary]) -> Result<(), BatchError> {
    let axes: Vec<String> = points
        .first()
        .map(|p| p.coordinates.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut out = summary_header(&axes);
    out.push('\n');
    for p in points {
        let mut cols = vec![label.to_string(), p.index.to_string()];
        cols.extend(p.coordinates.iter().map(|(_, v)| fmt_f64(*v)));
        cols.push(p.observable.clone());
        cols.push(fmt_f64(p.result.mean));
        cols.push(fmt_f64(p.result.stderr));
        cols.push(p.result.settled.to_string());
        cols.push(fmt_f64(p.result.block_means.0));
        cols.push(fmt_f64(p.result.block_means.1));
        cols.push(fmt_f64(p.max_leakage));
        cols.push(p.valid.to_string());
        cols.push(p.invalid.to_string());
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// One row of a summary table, as read back for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub settled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTable {
    pub x_label: String,
    pub observable: String,
    pub rows: Vec<SummaryRow>,
}

/// Read a summary file; the x coordinate is the first sweep axis, or the
/// point index when the run had no sweep.
pub fn read_summary(path: &Path) -> Result<SummaryTable, BatchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |reason: String| BatchError::Summary {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty summary".into()))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| bad(format!("missing column `{name}`")));
    let (label_c, point_c, obs_c, mean_c, se_c, settled_c) =
        (col("label")?, col("point")?, col("observable")?, col("mean")?, col("stderr")?, col("settled")?);
    let x_c = if obs_c > point_c + 1 { point_c + 1 } else { point_c };
    let mut table = SummaryTable {
        x_label: header[x_c].to_string(),
        observable: String::new(),
        rows: Vec::new(),
    };
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad(format!("row {} has {} columns, expected {}", n + 1, f.len(), header.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| bad(format!("row {}: `{}`: {e}", n + 1, f[i])));
        table.observable = f[obs_c].to_string();
        table.rows.push(SummaryRow {
            label: f[label_c].to_string(),
            x: num(x_c)?,
            mean: num(mean_c)?,
            stderr: num(se_c)?,
            settled: f[settled_c] == "true",
        });
    }
    if table.rows.is_empty() {
        return Err(bad("summary has no data rows".into()));
    }
    Ok(table)
}

/// Paths written by [`emit_plot`].
#[derive(Clone, Debug, PartialEq)]
pub struct PlotFiles {
    pub data: PathBuf,
    pub script: PathBuf,
}

/// Write `<stem>.dat` (one gnuplot data block per summary, columns
/// `x mean stderr`, rows in ascending x) and `<stem>.gp` plotting mean ± one
/// standard error per series.
///
/// The x axis runs left to right in ascending sweep value. For capacitance
/// (or scale factor) sweeps this puts the quantum limit (small C) on the
/// left and the correspondence limit on the right, on a log axis. For
/// Duffing β sweeps the classical limit (small β) is on the left.
pub fn emit_plot(summaries: &[PathBuf], stem: &Path) -> Result<PlotFiles, BatchError> {
    if summaries.is_empty() {
        return Err(BatchError::Summary {
            path: stem.to_path_buf(),
            reason: "no summary files given".into(),
        });
    }
    let tables = summaries.iter().map(|p| read_summary(p)).collect::<Result<Vec<_>, _>>()?;
    let data = stem.with_extension("dat");
    let script = stem.with_extension("gp");
    let mut dat = String::new();
    for (k, table) in tables.iter().enumerate() {
        if k > 0 {
            dat.push_str("\n\n");
        }
        dat.push_str(&format!("# series {k}: {} ({})\n# x mean stderr\n", table.rows[0].label, table.observable));
        let mut rows = table.rows.clone();
        rows.sort_by(|a, b| a.x.total_cmp(&b.x));
        for r in &rows {
            dat.push_str(&format!("{} {} {}\n", fmt_f64(r.x), fmt_f64(r.mean), fmt_f64(r.stderr)));
        }
    }
    let x_label = &tables[0].x_label;
    let log_x = x_label.contains("capacitance") || x_label.contains("scale");
    let y_label = if tables[0].observable == crate::ensemble::ENTROPY {
        "mean entanglement entropy (nats)".to_string()
    } else {
        format!("mean {}", tables[0].observable)
    };
    let data_name = data.file_name().expect("stem has a file name").to_string_lossy().into_owned();
    let png_name = stem.with_extension("png").file_name().expect("stem has a file name").to_string_lossy().into_owned();
    let mut gp = String::new();
    gp.push_str("# Mean with one-standard-error bars, ascending x.\n");
    if log_x {
        gp.push_str("# Small capacitance (quantum limit) is on the left.\n");
    } else if x_label.contains("beta") {
        gp.push_str("# Small beta (classical limit) is on the left.\n");
    }
    gp.push_str("set terminal pngcairo size 800,600\n");
    gp.push_str(&format!("set output '{png_name}'\n"));
    gp.push_str(&format!("set xlabel '{x_label}'\nset ylabel '{y_label}'\n"));
    if log_x {
        gp.push_str("set logscale x\nset format x '10^{%L}'\n");
    }
    gp.push_str("set key top right\nset offsets graph 0.05, graph 0.05, graph 0.05, graph 0.05\n");
    let series: Vec<String> = tables
        .iter()
        .enumerate()
        .map(|(k, t)| format!("'{data_name}' index {k} using 1:2:3 with yerrorlines title '{}'", t.rows[0].label))
        .collect();
    gp.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    fs::write(&data, dat).map_err(io_err(&data))?;
    fs::write(&script, gp).map_err(io_err(&script))?;
    Ok(PlotFiles { data, script })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(unravelling: &str) -> RunConfig {
        RunConfig::from_toml_str(&format!(
            r#"
label = "t"
model = "single_mode_test"
unravelling = "{unravelling}"
n_levels = 8
dt = 0.002
t_span = 0.2
record_every = 10
n_trajectories = 5
seed = 9
leakage_limit = 1.0
[squid]
scale_a = 1e-3
"#
        ))
        .unwrap()
    }

    #[test]
    fn fmt_has_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn run_writes_schema_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let options = RunOptions {
            workers: 2,
            output_dir: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        };
        let outcome = run(&config("jumps"), &options).unwrap();
        let RunOutcome::Complete { run_dir, points } = outcome else {
            panic!("interrupted")
        };
        assert_eq!(points.len(), 1);
        let stats = fs::read_to_string(point_dir(&run_dir, 0).join("stats.csv")).unwrap();
        assert!(stats.starts_with("time,observable,value,stderr,count\n"));
        assert!(!stats.contains('\r'));
        let rows = stats.lines().count() - 1;
        assert_eq!(rows, 3 * 11);
        let summary = read_summary(&run_dir.join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.rows.len(), 1);
        let ckpt = fs::read_to_string(point_dir(&run_dir, 0).join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(ckpt.lines().count(), 5);
    }

    #[test]
    fn lindblad_oracle_run() {
        let dir = tempfile::tempdir().unwrap();
        let options = RunOptions {
            workers: 1,
            output_dir: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        };
        let RunOutcome::Complete { run_dir, points } = run(&config("lindblad_oracle"), &options).unwrap() else {
            panic!("interrupted")
        };
        assert_eq!(points[0].valid, 1);
        let stats = fs::read_to_string(point_dir(&run_dir, 0).join("stats.csv")).unwrap();
        assert!(stats.contains(",purity,"));
    }

    #[test]
    fn resume_after_partial_line() {
        let dir = tempfile::tempdir().unwrap();
        let full = RunOptions {
            workers: 1,
            output_dir: Some(dir.path().join("a")),
            ..RunOptions::default()
        };
        let c = config("qsd");
        run(&c, &full).unwrap();
        let partial = RunOptions {
            output_dir: Some(dir.path().join("b")),
            max_new_trajectories: Some(2),
            ..full.clone()
        };
        assert!(matches!(run(&c, &partial).unwrap(), RunOutcome::Interrupted { .. }));
        let ckpt = point_dir(&dir.path().join("b").join("t"), 0).join(CHECKPOINT_FILE);
        let mut f = OpenOptions::new().append(true).open(&ckpt).unwrap();
        f.write_all(b"{\"seed\":9,\"ind").unwrap();
        drop(f);
        let resumed = RunOptions {
            resume: true,
            max_new_trajectories: None,
            workers: 3,
            ..partial
        };
        run(&c, &resumed).unwrap();
        for file in ["summary.csv", "point-000/stats.csv", "point-000/trajectories.jsonl"] {
            let a = fs::read(dir.path().join("a/t").join(file)).unwrap();
            let b = fs::read(dir.path().join("b/t").join(file)).unwrap();
            assert!(a == b, "{file} differs");
        }
    }

    #[test]
    fn resume_rejects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        let options = RunOptions {
            workers: 1,
            output_dir: Some(dir.path().to_path_buf()),
            max_new_trajectories: Some(1),
            ..RunOptions::default()
        };
        run(&config("qsd"), &options).unwrap();
        let mut changed = config("qsd");
        changed.seed = 10;
        let err = run(
            &changed,
            &RunOptions {
                resume: true,
                ..options
            },
        )
        .unwrap_err();
        assert!(matches!(err, BatchError::Checkpoint { .. }));
    }

    #[test]
    fn plot_single_point_and_error_bars() {
        let dir = tempfile::tempdir().unwrap();
        let summary = dir.path().join("summary.csv");
        fs::write(
            &summary,
            format!("{}\nx,0,1e-16,entropy_nats,0.25,0.01,true,0.24,0.26,1e-6,10,0\n", summary_header(&["squid.capacitance_farads".into()])),
        )
        .unwrap();
        let files = emit_plot(&[summary.clone()], &dir.path().join("fig")).unwrap();
        let dat = fs::read_to_string(&files.data).unwrap();
        assert!(dat.contains(&format!("{} {} {}", fmt_f64(1e-16), fmt_f64(0.25), fmt_f64(0.01))));
        let gp = fs::read_to_string(&files.script).unwrap();
        assert!(gp.contains("logscale x") && gp.contains("yerrorlines"));

        fs::write(&summary, format!("{}\n", summary_header(&[]))).unwrap();
        assert!(matches!(emit_plot(&[summary], &dir.path().join("g")), Err(BatchError::Summary { .. })));
    }
}
