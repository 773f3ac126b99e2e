//! `siascor`: fit, inspect, constrain, compare.
//!
//! Exit status: 0 ok, 2 configuration error, 3 numerical failure (including
//! a failed certification), 4 infeasible constraints.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use siascor::artifact::{write_atomic, ModelArtifact};
use siascor::constraints::{expert_constraint_set, ConstraintError, ShapeConstraintSet};
use siascor::domain::{dataset_to_csv, infer_schema, load_dataset, DataError, Dataset, InputBox, TransformKind};
use siascor::fidelity::{fidelity_slices, select_anchors, InspectionGrid, Scaling};
use siascor::gpr::GprConfig;
use siascor::metrics::predictions_csv;
use siascor::pipeline::{compare, gpr_artifact, initial_artifact, siascor_artifact, CompareConfig, CompareModel, PipelineError};
use siascor::regression::{log_grid, Penalty, RegressionConfig, RegressionError};
use siascor::sip::{certify_model, SipConfig, SipError};
use siascor::synthetic::{generate_synthetic, SyntheticSpec, GROUND_TRUTH_ID};
use siascor::violation::{CertificationReport, CertifyConfig, SearchBudget};

#[derive(Parser)]
#[command(name = "siascor", version, about = "Shape-constrained polynomial regression")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for reports and default output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file; `# box: name, lower, upper[, unit]` header lines give the ranges.
    #[arg(long)]
    data: PathBuf,
    /// Output column (default: the last column).
    #[arg(long)]
    output: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Lasso,
    Ridge,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Unit,
    Raw,
}

#[derive(Subcommand)]
enum Cmd {
    /// Penalized polynomial fit with the penalty weight chosen by cross-validation.
    FitInitial {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, value_enum, default_value = "lasso")]
        penalty: PenaltyArg,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
        folds: u32,
        #[arg(long, default_value_t = 1e-6)]
        lambda_min: f64,
        #[arg(long, default_value_t = 10.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 30)]
        lambda_count: usize,
        /// Model file (default: <out-dir>/initial.model.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Anchor points and per-dimension slices through them.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Grid points per dimension.
        #[arg(long, default_value_t = 5)]
        grid: usize,
        /// Samples per slice.
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long, value_enum, default_value = "unit")]
        scaling: ScalingArg,
    },
    /// Constrained training with certification.
    TrainSiascor {
        #[command(flatten)]
        data: DataArgs,
        /// Constraint list JSON (default: the built-in brushing set).
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[command(flatten)]
        sip: SipArgs,
        /// Model file (default: <out-dir>/siascor.model.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian process baseline.
    FitGpr {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Model file (default: <out-dir>/gpr.model.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated comparison of the initial, constrained and GP models.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Comma-separated subset of lasso, siascor, gpr.
        #[arg(long, default_value = "lasso,siascor,gpr")]
        models: String,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
        folds: u32,
        /// Degree of the penalized initial model.
        #[arg(long, default_value_t = 3)]
        initial_degree: usize,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[command(flatten)]
        sip: SipArgs,
    },
    /// Checks a model against a constraint set.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        points: usize,
        #[arg(long, default_value_t = 100)]
        refine_from: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps_feas: f64,
        /// Report file (default: <out-dir>/certification.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a synthetic brushing-like dataset.
    GenerateSynthetic {
        #[arg(long, default_value_t = 125)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        /// Comma-separated subset of dia,t_c,n_b,n_w,a_e.
        #[arg(long, default_value = "dia,t_c,n_b,n_w,a_e")]
        dims: String,
        /// Dataset file (default: <out-dir>/synthetic.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the matching constraint list here.
        #[arg(long)]
        constraints_out: Option<PathBuf>,
    },
    /// HTTP service storing its state under --out-dir.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Args)]
struct SipArgs {
    #[arg(long, default_value_t = 4)]
    degree: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps_feas: f64,
    /// Tightening margin for working-set rows.
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 4096)]
    scan_points: usize,
    #[arg(long, default_value_t = 50)]
    refine_steps: usize,
    #[arg(long, default_value_t = 8)]
    multistarts: usize,
    #[arg(long, default_value_t = 5)]
    add_per_family: usize,
    /// Points in the final certification scan.
    #[arg(long, default_value_t = 1_000_000)]
    certify_points: usize,
}

impl SipArgs {
    fn config(&self, seed: u64) -> SipConfig {
        SipConfig {
            degree: self.degree,
            eps_feas: self.eps_feas,
            delta: self.delta,
            max_outer: self.max_outer,
            search: SearchBudget {
                scan_points: self.scan_points,
                refine_steps: self.refine_steps,
                multistarts: self.multistarts,
                ..SearchBudget::default()
            },
            add_per_family: self.add_per_family,
            certify_points: self.certify_points,
            seed,
            ..SipConfig::default()
        }
    }
}

enum Failure {
    Config(String),
    Numeric(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Infeasible(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Infeasible(m) => m,
        }
    }
}

type Res<T> = Result<T, Failure>;

fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn numeric<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Numeric(e.to_string())
}

fn from_constraint(e: ConstraintError) -> Failure {
    match e {
        ConstraintError::BoundsOrder { .. } | ConstraintError::Conflict { .. } => {
            Failure::Infeasible(format!("constraints cannot hold together: {e}"))
        }
        e => Failure::Config(e.to_string()),
    }
}

fn from_pipeline(e: PipelineError) -> Failure {
    match e {
        PipelineError::Sip(SipError::Infeasible { families }) => {
            Failure::Infeasible(format!("constraints cannot hold together; involved: {}", families.join(", ")))
        }
        PipelineError::Sip(e @ (SipError::Config(_) | SipError::DimMismatch { .. })) => config(e),
        PipelineError::Regression(e) => match e {
            RegressionError::EmptyGrid | RegressionError::BadLambda(_) | RegressionError::Folds(_) => config(e),
            e => numeric(e),
        },
        PipelineError::DimMismatch { .. } | PipelineError::Data(_) => config(e),
        e => numeric(e),
    }
}

fn load_data(a: &DataArgs) -> Res<Dataset> {
    let text = fs::read_to_string(&a.data).map_err(|e| Failure::Config(format!("{}: {e}", a.data.display())))?;
    let origin = a.data.display().to_string();
    let schema = infer_schema(&text, a.output.as_deref()).map_err(|e| Failure::Config(format!("{origin}: {e}")))?;
    load_dataset(&a.data, &schema).map_err(|e: DataError| Failure::Config(format!("{origin}: {e}")))
}

fn load_constraints(path: Option<&Path>, input_box: &InputBox) -> Res<ShapeConstraintSet> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ShapeConstraintSet::from_json(&text, input_box).map_err(from_constraint)
        }
        None => {
            let brushing = InputBox::brushing();
            if input_box.names().iter().any(|n| brushing.index_of(n).is_none()) {
                return Err(Failure::Config(
                    "--constraints is required for data that is not over the brushing parameters".into(),
                ));
            }
            expert_constraint_set().restrict(&brushing, input_box).map_err(from_constraint)
        }
    }
}

fn load_model(path: &Path) -> Res<ModelArtifact> {
    ModelArtifact::load(path).map_err(config)
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, text.as_bytes()).map_err(config)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn certification_summary(r: &CertificationReport) -> String {
    let mut s = format!(
        "certification {} (max violation {:e}, eps {:e})",
        if r.pass { "PASS" } else { "FAIL" },
        r.max_violation(),
        r.eps_feas
    );
    for f in r.failing() {
        s.push_str(&format!(
            "\n  {} {}: {:e}",
            f.constraint.kind,
            f.constraint.dim.as_deref().unwrap_or("-"),
            f.max_violation
        ));
    }
    s
}

fn run(cli: Cli) -> Res<()> {
    let c = &cli.common;
    let out_dir = &c.out_dir;
    let default_out = |o: &Option<PathBuf>, name: &str| o.clone().unwrap_or_else(|| out_dir.join(name));
    match &cli.cmd {
        Cmd::FitInitial {
            data,
            degree,
            penalty,
            folds,
            lambda_min,
            lambda_max,
            lambda_count,
            out,
        } => {
            let d = load_data(data)?;
            if !(*lambda_min > 0.0 && lambda_max >= lambda_min && *lambda_count >= 1) {
                return Err(Failure::Config("need 0 < lambda-min <= lambda-max and lambda-count >= 1".into()));
            }
            let cfg = RegressionConfig {
                degree: *degree,
                penalty: match penalty {
                    PenaltyArg::Lasso => Penalty::Lasso,
                    PenaltyArg::Ridge => Penalty::Ridge,
                },
                lambda_grid: log_grid(*lambda_min, *lambda_max, *lambda_count),
                folds: *folds as usize,
                seed: c.seed,
                ..RegressionConfig::default()
            };
            let (art, fit) = initial_artifact(&d, &cfg).map_err(from_pipeline)?;
            let path = default_out(out, "initial.model.json");
            write(&path, &art.to_json())?;
            write(
                &out_dir.join("fit_initial_cv.json"),
                &pretty(&json!({ "lambda": fit.lambda, "folds": cfg.folds, "seed": c.seed, "grid": fit.cv })),
            )?;
            println!("lambda = {:e}; model written to {}", fit.lambda, path.display());
            Ok(())
        }
        Cmd::Inspect {
            model,
            data,
            grid,
            samples,
            scaling,
        } => {
            let art = load_model(model)?;
            let m = art.to_model().map_err(config)?;
            let d = load_data(data)?;
            let g = InspectionGrid::new(d.input_box(), *grid).map_err(config)?;
            let scaling = match scaling {
                ScalingArg::Unit => Scaling::Unit,
                ScalingArg::Raw => Scaling::Raw,
            };
            let anchors = select_anchors(&m, &d, &g, scaling).map_err(config)?;
            write(&out_dir.join("anchors.json"), &pretty(&anchors))?;
            let slices = fidelity_slices(&m, &anchors, *samples).map_err(config)?;
            for (label, s) in &slices {
                write(&out_dir.join("slices").join(format!("{label}.json")), &s.to_json())?;
            }
            println!("high fidelity anchor: {:?}", anchors.x_min);
            println!("low fidelity anchor:  {:?}", anchors.x_max);
            println!("{} slices written to {}", slices.len(), out_dir.join("slices").display());
            Ok(())
        }
        Cmd::TrainSiascor {
            data,
            constraints,
            sip,
            out,
        } => {
            let d = load_data(data)?;
            let set = load_constraints(constraints.as_deref(), d.input_box())?;
            let cfg = sip.config(c.seed);
            let mut log_text = String::new();
            let (art, outcome) = siascor_artifact(&d, &set, &cfg, |r| {
                let line = serde_json::to_string(r).expect("record serializes");
                eprintln!("{line}");
                log_text.push_str(&line);
                log_text.push('\n');
            })
            .map_err(from_pipeline)?;
            let path = default_out(out, "siascor.model.json");
            write(&path, &art.to_json())?;
            write(&out_dir.join("certification.json"), &pretty(&outcome.certification))?;
            write(&out_dir.join("train_log.ndjson"), &log_text)?;
            println!("{}", certification_summary(&outcome.certification));
            println!("model written to {}", path.display());
            if !outcome.converged {
                return Err(Failure::Numeric(format!("no certified model within {} outer iterations", cfg.max_outer)));
            }
            if !outcome.certification.pass {
                return Err(Failure::Numeric("certification failed".into()));
            }
            Ok(())
        }
        Cmd::FitGpr {
            data,
            starts,
            max_iter,
            out,
        } => {
            let d = load_data(data)?;
            if *starts == 0 {
                return Err(Failure::Config("--starts must be at least 1".into()));
            }
            let cfg = GprConfig {
                starts: *starts,
                max_iter: *max_iter,
                seed: c.seed,
                ..GprConfig::default()
            };
            let (art, starts) = gpr_artifact(&d, TransformKind::SqrtThenUnitScale, &cfg).map_err(from_pipeline)?;
            let path = default_out(out, "gpr.model.json");
            write(&path, &art.to_json())?;
            write(&out_dir.join("gpr_starts.json"), &pretty(&starts))?;
            println!("model written to {}", path.display());
            Ok(())
        }
        Cmd::Compare {
            data,
            constraints,
            models,
            folds,
            initial_degree,
            starts,
            sip,
        } => {
            let d = load_data(data)?;
            let models: Vec<CompareModel> = models
                .split(',')
                .map(|m| CompareModel::parse(m.trim()).ok_or_else(|| Failure::Config(format!("unknown model `{m}`"))))
                .collect::<Res<_>>()?;
            let set = if models.contains(&CompareModel::Siascor) {
                load_constraints(constraints.as_deref(), d.input_box())?
            } else {
                ShapeConstraintSet::empty(d.dim())
            };
            let cfg = CompareConfig {
                models,
                folds: *folds as usize,
                seed: c.seed,
                regression: RegressionConfig {
                    degree: *initial_degree,
                    ..RegressionConfig::default()
                },
                sip: sip.config(c.seed),
                gpr: GprConfig {
                    starts: *starts,
                    ..GprConfig::default()
                },
                ..CompareConfig::default()
            };
            let report = compare(&d, &set, &cfg).map_err(from_pipeline)?;
            write(&out_dir.join("compare.json"), &report.to_json())?;
            write(&out_dir.join("compare.csv"), &report.table_csv())?;
            for cv in &report.cv {
                write(&out_dir.join(format!("predictions_{}.csv", cv.model)), &predictions_csv(cv))?;
            }
            print!("{}", report.table_csv());
            if report.any_failed() {
                return Err(Failure::Numeric("some folds failed to train".into()));
            }
            Ok(())
        }
        Cmd::Certify {
            model,
            constraints,
            points,
            refine_from,
            eps_feas,
            out,
        } => {
            let art = load_model(model)?;
            let m = art.to_model().map_err(config)?;
            let set = load_constraints(constraints.as_deref(), m.transform().input_box())?;
            if *points == 0 || !(*eps_feas >= 0.0) {
                return Err(Failure::Config("--points must be positive and --eps-feas non-negative".into()));
            }
            let cfg = CertifyConfig {
                n_points: *points,
                refine_from: *refine_from,
                eps_feas: *eps_feas,
                seed: c.seed,
                ..CertifyConfig::default()
            };
            let report = certify_model(&m, &set, &cfg).map_err(config)?;
            write(&default_out(out, "certification.json"), &pretty(&report))?;
            println!("{}", certification_summary(&report));
            if !report.pass {
                return Err(Failure::Numeric("certification failed".into()));
            }
            Ok(())
        }
        Cmd::GenerateSynthetic {
            n,
            sigma,
            dims,
            out,
            constraints_out,
        } => {
            let names: Vec<&str> = dims.split(',').map(str::trim).collect();
            let input_box = InputBox::brushing().select(&names).map_err(config)?;
            let spec = SyntheticSpec {
                input_box,
                n: *n,
                sigma: *sigma,
                seed: c.seed,
                truth: GROUND_TRUTH_ID.to_string(),
            };
            let d = generate_synthetic(&spec).map_err(config)?;
            let path = default_out(out, "synthetic.csv");
            write(&path, &dataset_to_csv(&d))?;
            if let Some(p) = constraints_out {
                write(p, &format!("{}\n", spec.constraints().to_json(&spec.input_box)))?;
            }
            println!("{} rows written to {}", d.len(), path.display());
            Ok(())
        }
        Cmd::Serve { port, host } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Failure::Config(format!("bad address {host}:{port}: {e}")))?;
            fs::create_dir_all(out_dir).map_err(|e| Failure::Config(format!("{}: {e}", out_dir.display())))?;
            let rt = tokio::runtime::Runtime::new().map_err(numeric)?;
            rt.block_on(siascor_service::serve(addr, out_dir)).map_err(config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
