//! `digmm` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or
//! convergence error. Data artifacts go to stdout (or `--out`), diagnostics
//! to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::dataio::{
    generate_scenario, read_csv, read_model, write_csv, write_model, Dataset, ScenarioSpec,
};
use crate::detector::{
    fit_digmm_with, log_threshold_for_fpr, AnyModel, Detector, DigmmConfig, ModelKind,
    ThresholdGmmModel,
};
use crate::error::Error;
use crate::eval::{decision_grid, evaluate, EvalReport};
use crate::featmap::FeatureScaling;
use crate::gmm::{fit_em, EmConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "digmm",
    version,
    about = "Gaussian-mixture anomaly detection with a one-class boundary"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    PaperLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Digmm,
    ThresholdGmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    Raw,
    PeakNormalized,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset.
    Synth {
        /// JSON scenario description.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Overrides the seed in the scenario file or preset.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a detector on normal data. Rows labelled 0 are dropped.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        /// Number of mixture components.
        #[arg(long)]
        m: usize,
        /// One-class penalty, in (0, 1]; required for digmm.
        #[arg(long)]
        nu: Option<f64>,
        /// Natural log of the density threshold (threshold-gmm).
        #[arg(long, allow_negative_numbers = true, conflicts_with = "target_fpr")]
        log_threshold: Option<f64>,
        /// Fraction of training points to place at or below the threshold
        /// (threshold-gmm).
        #[arg(long)]
        target_fpr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        n_init: usize,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = crate::ocsvm::DEFAULT_TOL)]
        solver_tol: f64,
        #[arg(long, value_enum, default_value_t = ScalingArg::Raw)]
        feature_scaling: ScalingArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score and label every row of a dataset.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one or more models on labelled data.
    Eval {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the model surface on a 2-D grid as `x,y,value` CSV.
    Grid {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        xmin: f64,
        #[arg(long, allow_negative_numbers = true)]
        xmax: f64,
        #[arg(long, allow_negative_numbers = true)]
        ymin: f64,
        #[arg(long, allow_negative_numbers = true)]
        ymax: f64,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) => EXIT_USAGE,
            Error::DegenerateData(_)
            | Error::Infeasible { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NonSymmetric { .. }
            | Error::InfeasiblePoint { .. }
            | Error::RejectionStall { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Synth {
            spec,
            preset,
            seed,
            out,
        } => cmd_synth(spec.as_deref(), preset, seed, out.as_deref(), stdout),
        Command::Fit {
            data,
            detector,
            m,
            nu,
            log_threshold,
            target_fpr,
            seed,
            n_init,
            max_iters,
            solver_tol,
            feature_scaling,
            out,
        } => {
            let em = EmConfig {
                max_iters,
                n_init,
                seed,
                ..EmConfig::default()
            };
            let opts = FitOptions {
                detector,
                m,
                nu,
                log_threshold,
                target_fpr,
                em,
                solver_tol,
                scaling: match feature_scaling {
                    ScalingArg::Raw => FeatureScaling::Raw,
                    ScalingArg::PeakNormalized => FeatureScaling::PeakNormalized,
                },
            };
            cmd_fit(&data, &opts, out.as_deref(), stdout, stderr)
        }
        Command::Detect { model, data, out } => cmd_detect(&model, &data, out.as_deref(), stdout),
        Command::Eval { model, data, out } => cmd_eval(&model, &data, out.as_deref(), stdout),
        Command::Grid {
            model,
            xmin,
            xmax,
            ymin,
            ymax,
            resolution,
            out,
        } => cmd_grid(
            &model,
            (xmin, xmax),
            (ymin, ymax),
            resolution,
            out.as_deref(),
            stdout,
        ),
    }
}

fn open_read(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))
}

fn with_output(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> CliResult<()>,
) -> CliResult<()> {
    match out {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::data(e.to_string()))
        }
        None => {
            f(stdout)?;
            stdout.flush().map_err(|e| CliError::data(e.to_string()))
        }
    }
}

fn load_dataset(path: &Path) -> CliResult<Dataset<f64>> {
    read_csv(open_read(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<AnyModel<f64>> {
    read_model(open_read(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn cmd_synth(
    spec: Option<&Path>,
    preset: Option<Preset>,
    seed: Option<u64>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let mut scenario = match (spec, preset) {
        (Some(p), _) => serde_json::from_reader::<_, ScenarioSpec>(open_read(p)?)
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        (None, Some(Preset::PaperLike)) => ScenarioSpec::paper_like(0),
        (None, None) => return Err(CliError::usage("one of --spec or --preset is required")),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let data: Dataset<f64> = generate_scenario(&scenario).map_err(|e| match e {
        Error::InvalidParameter(m) => CliError::data(format!("invalid scenario: {m}")),
        other => other.into(),
    })?;
    with_output(out, stdout, |w| write_csv(&data, w).map_err(CliError::from))
}

struct FitOptions {
    detector: DetectorArg,
    m: usize,
    nu: Option<f64>,
    log_threshold: Option<f64>,
    target_fpr: Option<f64>,
    em: EmConfig,
    solver_tol: f64,
    scaling: FeatureScaling,
}

fn cmd_fit(
    data_path: &Path,
    opts: &FitOptions,
    out: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<()> {
    if opts.m == 0 {
        return Err(CliError::usage("--m must be positive"));
    }
    if opts.em.n_init == 0 || opts.em.max_iters == 0 {
        return Err(CliError::usage("--n-init and --max-iters must be positive"));
    }
    // validate flags before touching the data
    match opts.detector {
        DetectorArg::Digmm => {
            let nu = opts
                .nu
                .ok_or_else(|| CliError::usage("--nu is required for digmm"))?;
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(CliError::usage(format!(
                    "--nu must lie in (0, 1], got {nu}"
                )));
            }
            if !(opts.solver_tol > 0.0) {
                return Err(CliError::usage("--solver-tol must be positive"));
            }
        }
        DetectorArg::ThresholdGmm => match (opts.log_threshold, opts.target_fpr) {
            (Some(t), None) if t.is_finite() => {}
            (Some(_), None) => return Err(CliError::usage("--log-threshold must be finite")),
            (None, Some(q)) if (0.0..=1.0).contains(&q) => {}
            (None, Some(q)) => {
                return Err(CliError::usage(format!(
                    "--target-fpr must lie in [0, 1], got {q}"
                )))
            }
            _ => {
                return Err(CliError::usage(
                    "threshold-gmm needs exactly one of --log-threshold or --target-fpr",
                ))
            }
        },
    }

    let all = load_dataset(data_path)?;
    let train = all.normal_only();
    let _ = writeln!(stderr, "training on {} of {} rows", train.n(), all.n());

    let model: AnyModel<f64> = match opts.detector {
        DetectorArg::Digmm => {
            let mut cfg = DigmmConfig::new(opts.m, opts.nu.expect("validated"), opts.em);
            cfg.solver_tol = opts.solver_tol;
            cfg.scaling = opts.scaling;
            let model = fit_digmm_with(&train, &cfg)?;
            let meta = model.metadata();
            let _ = writeln!(
                stderr,
                "em: log-likelihood {:.6} after {} iterations (restart {}, converged {})",
                meta.final_log_likelihood, meta.em_iterations, meta.em_restart, meta.em_converged
            );
            let _ = writeln!(
                stderr,
                "solver: {:?} after {} updates, kkt violation {:.3e}, rho {:.6e}, {} support vectors",
                meta.solver_status,
                meta.solver_iterations,
                meta.kkt_violation,
                model.rho(),
                model.svm().support_idx.len()
            );
            model.into()
        }
        DetectorArg::ThresholdGmm => {
            let (gmm, trace) = fit_em(&train, opts.m, &opts.em)?;
            let lt = match (opts.log_threshold, opts.target_fpr) {
                (Some(t), _) => t,
                (None, Some(q)) => log_threshold_for_fpr(&gmm, &train, q)?,
                (None, None) => unreachable!("validated above"),
            };
            let _ = writeln!(
                stderr,
                "em: log-likelihood {:.6} after {} iterations (restart {}, converged {}); log threshold {lt}",
                trace.final_log_likelihood(),
                trace.iterations,
                trace.restart,
                trace.converged
            );
            ThresholdGmmModel::new(gmm, lt)?.into()
        }
    };
    with_output(out, stdout, |w| {
        write_model(&model, w).map_err(CliError::from)
    })
}

fn cmd_detect(
    model_path: &Path,
    data_path: &Path,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let data = load_dataset(data_path)?;
    if data.n() > 0 && data.d() != model.dim() {
        return Err(CliError::data(format!(
            "model expects {} columns, data has {}",
            model.dim(),
            data.d()
        )));
    }
    let verdicts = data
        .points()
        .iter_rows()
        .map(|x| model.classify(x))
        .collect::<crate::error::Result<Vec<_>>>()?;
    with_output(out, stdout, |w| {
        let io = |e: io::Error| CliError::data(e.to_string());
        writeln!(w, "index,score,label").map_err(io)?;
        for (i, v) in verdicts.iter().enumerate() {
            writeln!(w, "{i},{},{}", v.score, v.label.as_str()).map_err(io)?;
        }
        Ok(())
    })
}

#[derive(serde::Serialize)]
struct ReportLine<'a> {
    model: String,
    model_kind: &'a str,
    report: &'a EvalReport,
}

#[derive(serde::Serialize)]
struct Comparison {
    digmm: String,
    threshold_gmm: String,
    /// DiGMM AUC minus baseline AUC.
    auc_delta: f64,
    /// Difference of balanced accuracies at each model's native boundary.
    balanced_accuracy_delta: f64,
    /// DiGMM balanced accuracy at its boundary minus the baseline's best
    /// balanced accuracy over all thresholds.
    ceiling_delta: f64,
}

fn cmd_eval(
    models: &[PathBuf],
    data_path: &Path,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let data = load_dataset(data_path)?;
    if data.labels().is_none() {
        return Err(CliError::data(format!(
            "{} has no label column",
            data_path.display()
        )));
    }
    let mut reports = Vec::with_capacity(models.len());
    for p in models {
        let model = load_model(p)?;
        let report = evaluate(&model, &data)?;
        reports.push((p.display().to_string(), model.kind(), report));
    }
    let digmm = reports.iter().find(|r| r.1 == ModelKind::Digmm);
    let baseline = reports.iter().find(|r| r.1 == ModelKind::ThresholdGmm);
    let comparison = match (digmm, baseline) {
        (Some(d), Some(b)) => Some(Comparison {
            digmm: d.0.clone(),
            threshold_gmm: b.0.clone(),
            auc_delta: d.2.auc - b.2.auc,
            balanced_accuracy_delta: d.2.balanced_accuracy_at_zero()
                - b.2.balanced_accuracy_at_zero(),
            ceiling_delta: d.2.balanced_accuracy_at_zero()
                - b.2.best_threshold_accuracy.unwrap_or(f64::NAN),
        }),
        _ => None,
    };
    with_output(out, stdout, |w| {
        let ser = |e: serde_json::Error| CliError::data(e.to_string());
        let io = |e: io::Error| CliError::data(e.to_string());
        for (path, kind, report) in &reports {
            let line = ReportLine {
                model: path.clone(),
                model_kind: kind.as_str(),
                report,
            };
            serde_json::to_writer(&mut *w, &line).map_err(ser)?;
            writeln!(w).map_err(io)?;
        }
        if let Some(c) = &comparison {
            serde_json::to_writer(&mut *w, &serde_json::json!({ "comparison": c })).map_err(ser)?;
            writeln!(w).map_err(io)?;
        }
        Ok(())
    })
}

fn cmd_grid(
    model_path: &Path,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    if resolution < 2 {
        return Err(CliError::usage("--resolution must be at least 2"));
    }
    if !(x_range.1 > x_range.0 && y_range.1 > y_range.0) {
        return Err(CliError::usage("grid ranges need max > min"));
    }
    let model = load_model(model_path)?;
    let grid = decision_grid(&model, x_range, y_range, resolution)?;
    with_output(out, stdout, |w| grid.write_csv(w).map_err(CliError::from))
}
