use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use okreg::error::{Error, Result};
use okreg::io::save_predictor;
use okreg::ntk::{export_metrics_csv, train_corrected, MlpSpec, NtkMode, TrainSetup, WeightInit};
use okreg::regression::Predictor;
use okreg::tasks::write_dataset_csv;
use okreg_cli::config::{ExperimentConfig, LearnerKind};
use okreg_cli::export::{export_curves, ExportFormat};
use okreg_cli::report::equivalence_report;
use okreg_cli::runner::{self, prepare_task, run_experiment};

/// Experiment harness for online kernel regression with target correction.
#[derive(Parser)]
#[command(name = "okreg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured task and write it to disk
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the first configured learner on the first seed and save its
    /// predictor and learning curve
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use seeds 0..K instead of the configured list
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Also write the per-chunk correction coefficient matrices
        #[arg(long)]
        dump_coeffs: bool,
    },
    /// Run the equivalence checks and exit nonzero on any breach
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every configured learner over all seeds and export curves
    Curve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Train the configured MLP learner(s) and export metrics traces
    NtkTrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<u64>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_EQUIVALENCE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn classify(err: &Error) -> u8 {
    match err.root() {
        Error::NotPositiveDefinite { .. }
        | Error::IllConditioned { .. }
        | Error::DegenerateDecay
        | Error::DegenerateSchur { .. }
        | Error::SingularCorrectionBlock
        | Error::SingularSchurBlock
        | Error::JitterExhausted { .. }
        | Error::StorageGuard { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn load_config(path: &PathBuf, seeds: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(k) = seeds {
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "seeds",
                reason: "need at least one seed".to_string(),
            });
        }
        config.seeds = (0..k).collect();
    }
    Ok(config)
}

fn ensure_dir(dir: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn cmd_gen(config: &PathBuf, out: &PathBuf) -> Result<u8> {
    let config = load_config(config, None)?;
    ensure_dir(out)?;
    let prepared = prepare_task(&config, config.seeds[0])?;
    let csv = out.join("task.csv");
    write_dataset_csv(&csv, &prepared.train, &prepared.test, Some(&config.task))?;
    println!("wrote {}", csv.display());
    println!("wrote {}", csv.with_extension("json").display());
    Ok(0)
}

fn cmd_fit(
    config: &PathBuf,
    out: &PathBuf,
    seeds: Option<u64>,
    format: Format,
    dump_coeffs: bool,
) -> Result<u8> {
    let config = load_config(config, seeds)?;
    ensure_dir(out)?;
    let seed = config.seeds[0];
    let learner = config.learners[0].clone();
    let prepared = prepare_task(&config, seed)?;
    let mut coeffs = Vec::new();
    let sink = if dump_coeffs { Some(&mut coeffs) } else { None };
    let records = runner::run_learner(&config, &learner, &prepared, seed, sink)
        .map_err(|e| e.with_context(format!("learner {} at seed {seed}", learner.tag())))?;
    let curve = out.join(format!("fit_curve.{}", ExportFormat::from(format).extension()));
    export_curves(&records, &curve, format.into())?;
    println!("wrote {}", curve.display());

    let train = &prepared.train.data;
    let hp = &config.hp;
    let predictor = match &learner {
        LearnerKind::Offline | LearnerKind::CumulativeReplay => Some(Predictor::Offline {
            kernel: prepared.kernel.clone(),
            x: train.x().to_owned(),
            y: train.y().to_owned(),
            gamma: hp.gamma,
        }),
        LearnerKind::OnlineTrue => Some(Predictor::OnlineClosedForm {
            kernel: prepared.kernel.clone(),
            x: train.x().to_owned(),
            y: train.y().to_owned(),
            eta: hp.eta,
            gamma: 0.0,
        }),
        LearnerKind::OnlineCorrected => {
            let z = okreg::correction::corrected_targets(
                &prepared.kernel,
                train.x(),
                train.y(),
                hp.eta,
                hp.gamma,
            )?;
            Some(Predictor::OnlineClosedForm {
                kernel: prepared.kernel.clone(),
                x: train.x().to_owned(),
                y: z.values().to_owned(),
                eta: hp.eta,
                gamma: 0.0,
            })
        }
        LearnerKind::OnlineIterCorrected => {
            let mut pipe = okreg::correction::CorrectionPipeline::new(
                prepared.kernel.clone(),
                hp.clone(),
                train.input_dim(),
                train.output_dim(),
            )?;
            let mut lo = 0;
            while lo < train.len() {
                let hi = (lo + config.correction_chunk).min(train.len());
                pipe.push_chunk(
                    train.x().slice(ndarray::s![.., lo..hi]),
                    train.y().slice(ndarray::s![.., lo..hi]),
                    None,
                )?;
                lo = hi;
            }
            Some(Predictor::OnlineClosedForm {
                kernel: prepared.kernel.clone(),
                x: train.x().to_owned(),
                y: pipe.corrected().values().to_owned(),
                eta: hp.eta,
                gamma: 0.0,
            })
        }
        LearnerKind::SgdMlp { .. } => None,
    };
    if let Some(p) = predictor {
        let json = save_predictor(&p, out, "predictor")?;
        println!("wrote {}", json.display());
    }
    if dump_coeffs {
        for (i, c) in coeffs.iter().enumerate() {
            let on = out.join(format!("coeffs_{i:04}_c_on.csv"));
            let off = out.join(format!("coeffs_{i:04}_c_off.csv"));
            okreg::io::write_matrix_csv(&on, c.c_on.view())?;
            okreg::io::write_matrix_csv(&off, c.c_off.view())?;
        }
        println!("wrote {} coefficient pairs under {}", coeffs.len(), out.display());
    }
    Ok(0)
}

fn cmd_report(config: &PathBuf) -> Result<u8> {
    let config = load_config(config, None)?;
    let prepared = prepare_task(&config, config.seeds[0])?;
    let report = equivalence_report(
        &prepared.train.data,
        prepared.test.x(),
        &prepared.kernel,
        &config.hp,
    );
    print!("{}", report.render());
    Ok(if report.all_pass() { 0 } else { EXIT_EQUIVALENCE })
}

fn cmd_curve(config: &PathBuf, out: &PathBuf, seeds: Option<u64>, format: Format) -> Result<u8> {
    let config = load_config(config, seeds)?;
    ensure_dir(out)?;
    let output = run_experiment(&config)?;
    let curve = out.join(format!("curves.{}", ExportFormat::from(format).extension()));
    export_curves(&output.records, &curve, format.into())?;
    let summary_path = out.join("summary.json");
    let body = serde_json::to_string_pretty(&output.summary).map_err(|e| Error::Parse {
        path: summary_path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(&summary_path, body).map_err(|e| Error::Io {
        path: summary_path.display().to_string(),
        source: e,
    })?;
    for s in &output.summary {
        match (s.mean_final_accuracy, s.sem_final_accuracy) {
            (Some(acc), Some(sem)) => println!(
                "{:<24} final test mse {:.6e} ± {:.2e}, accuracy {:.4} ± {:.4} ({} seeds)",
                s.learner, s.mean_final_test_mse, s.sem_final_test_mse, acc, sem, s.n_seeds
            ),
            _ => println!(
                "{:<24} final test mse {:.6e} ± {:.2e} ({} seeds)",
                s.learner, s.mean_final_test_mse, s.sem_final_test_mse, s.n_seeds
            ),
        }
    }
    println!("wrote {}", curve.display());
    Ok(0)
}

fn cmd_ntk_train(config: &PathBuf, out: &PathBuf, seeds: Option<u64>) -> Result<u8> {
    let config = load_config(config, seeds)?;
    ensure_dir(out)?;
    let mlp = config
        .learners
        .iter()
        .find(|l| matches!(l, LearnerKind::SgdMlp { .. }))
        .cloned()
        .ok_or_else(|| Error::InvalidParameter {
            name: "learners",
            reason: "ntk-train needs an sgd_mlp learner in the config".to_string(),
        })?;
    let LearnerKind::SgdMlp {
        hidden,
        activation,
        schedule,
        correction,
    } = &mlp
    else {
        unreachable!()
    };
    for &seed in &config.seeds {
        let prepared = prepare_task(&config, seed)?;
        let train = &prepared.train.data;
        let mut layers = vec![train.input_dim()];
        layers.extend_from_slice(hidden);
        layers.push(train.output_dim());
        let spec = MlpSpec::new(layers, *activation)?;
        let mut hp = config.hp.clone();
        hp.seed = config.hp.seed.wrapping_add(seed);
        let setup = TrainSetup {
            hp,
            schedule: *schedule,
            correction: *correction,
            chunk: config.correction_chunk,
            epochs_per_task: config.epochs_per_task,
            eval_every: config.eval_every,
            init: WeightInit::Gaussian,
            ntk_mode: NtkMode::TraceAveraged,
        };
        let (metrics, weights) = train_corrected(
            &spec,
            train,
            &prepared.train.boundaries,
            &prepared.test,
            &setup,
        )
        .map_err(|e| e.with_context(format!("ntk-train at seed {seed}")))?;
        let metrics_path = out.join(format!("metrics_seed{seed}.csv"));
        export_metrics_csv(&metrics_path, &metrics)?;
        for (l, w) in weights.layers().iter().enumerate() {
            let wp = out.join(format!("weights_seed{seed}_layer{l}.csv"));
            okreg::io::write_matrix_csv(&wp, w.view())?;
        }
        let last = metrics.last().unwrap();
        match last.test_accuracy {
            Some(acc) => println!(
                "seed {seed}: final test mse {:.6e}, accuracy {:.4}",
                last.test_mse, acc
            ),
            None => println!("seed {seed}: final test mse {:.6e}", last.test_mse),
        }
    }
    println!("wrote metrics and weights under {}", out.display());
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Gen { config, out } => cmd_gen(config, out),
        Command::Fit {
            config,
            out,
            seeds,
            format,
            dump_coeffs,
        } => cmd_fit(config, out, *seeds, *format, *dump_coeffs),
        Command::Report { config } => cmd_report(config),
        Command::Curve {
            config,
            out,
            seeds,
            format,
        } => cmd_curve(config, out, *seeds, *format),
        Command::NtkTrain { config, out, seeds } => cmd_ntk_train(config, out, *seeds),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
