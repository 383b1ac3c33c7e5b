//! Drives learners over generated tasks and collects learning curves.
//!
//! Every learner is evaluated against the true targets of the full train
//! set and the held-out test set at a fixed cadence of update steps. Seeds
//! run in parallel worker threads; records are concatenated in seed order so
//! output bytes do not depend on scheduling.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use okreg::correction::{corrected_targets, CorrectionCoefficients, CorrectionPipeline};
use okreg::error::Result;
use okreg::kernel::{self, KernelSpec};
use okreg::linalg::CholeskyFactor;
use okreg::ntk::{
    accuracy_of, mse_of, train_corrected, MlpSpec, NtkMode, TrainSetup, WeightInit,
};
use okreg::regression::{offline_dual, HyperParams, OnlineDualTracker, OrderedDataset};
use okreg::tasks::{self, OrderedTask, TaskKind};

use crate::config::{ExperimentConfig, LearnerKind};

/// One evaluation point of one learner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub seed: u64,
    pub step: usize,
    pub learner: String,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_accuracy: Option<f64>,
}

/// Final-point aggregate across seeds (SEM = sample stddev / √seeds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub learner: String,
    pub n_seeds: usize,
    pub mean_final_test_mse: f64,
    pub sem_final_test_mse: f64,
    pub mean_final_accuracy: Option<f64>,
    pub sem_final_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub records: Vec<CurveRecord>,
    pub summary: Vec<LearnerSummary>,
}

/// A generated task with the kernel the learners will use, plus the train
/// and train-to-test Gram matrices every learner evaluation slices into.
pub struct PreparedTask {
    pub train: OrderedTask,
    pub test: OrderedDataset,
    pub kernel: KernelSpec,
    pub k_train: Array2<f64>,
    pub k_test: Array2<f64>,
}

/// Generate the task for one run seed. The effective generator seed is
/// `task.seed + run_seed` so a config shifts the whole family at once.
pub fn prepare_task(config: &ExperimentConfig, run_seed: u64) -> Result<PreparedTask> {
    let seed = config.task.seed.wrapping_add(run_seed);
    let (train_raw, mut test) = match &config.task.kind {
        TaskKind::Gp1d(cfg) => {
            let t = tasks::gen_gp1d(cfg, seed)?;
            (t.train, t.test)
        }
        TaskKind::ClusterClassification(cfg) => tasks::gen_cluster_classification(cfg, seed)?,
    };
    let train = tasks::order_samples(&train_raw, &config.task.ordering, seed)?;
    // The shared binary head changes the target space for held-out data too.
    if let tasks::OrderingPolicy::DomainIncremental { pairings } = &config.task.ordering {
        let pairs = tasks::resolve_pairings(
            pairings,
            train_raw.labels().ok_or_else(|| {
                okreg::error::Error::InvalidParameter {
                    name: "ordering",
                    reason: "domain-incremental order needs labels".to_string(),
                }
            })?,
        )?;
        test = tasks::remap_binary_head(&test, &pairs)?;
    }
    let kernel = config.kernel.build(train.data.input_dim(), seed)?;
    let k_train = kernel::gram_self(&kernel, train.data.x())?;
    let k_test = kernel::gram(&kernel, train.data.x(), test.x())?;
    Ok(PreparedTask {
        train,
        test,
        kernel,
        k_train,
        k_test,
    })
}

struct Evaluator<'a> {
    prepared: &'a PreparedTask,
    train: &'a OrderedDataset,
    test: &'a OrderedDataset,
}

impl<'a> Evaluator<'a> {
    fn new(prepared: &'a PreparedTask) -> Self {
        Evaluator {
            prepared,
            train: &prepared.train.data,
            test: &prepared.test,
        }
    }

    /// Metrics of dual coefficients over the first `t` training samples.
    fn record(
        &self,
        dual: ArrayView2<f64>,
        t: usize,
        seed: u64,
        step: usize,
        tag: &str,
    ) -> Result<CurveRecord> {
        let pred_train = dual.dot(&self.prepared.k_train.slice(s![..t, ..]));
        let pred_test = dual.dot(&self.prepared.k_test.slice(s![..t, ..]));
        Ok(CurveRecord {
            seed,
            step,
            learner: tag.to_string(),
            train_mse: mse_of(pred_train.view(), self.train.y()),
            test_mse: mse_of(pred_test.view(), self.test.y()),
            test_accuracy: self
                .test
                .labels()
                .map(|l| accuracy_of(pred_test.view(), l)),
        })
    }
}

fn eval_steps(n: usize, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (1..=n).filter(|t| t % every == 0).collect();
    if steps.last() != Some(&n) {
        steps.push(n);
    }
    steps
}

/// Stream (x, z) through the sample-by-sample online learner, evaluating at
/// the cadence against the true targets.
fn stream_learner(
    ev: &Evaluator,
    targets: ArrayView2<f64>,
    hp: &HyperParams,
    eval_every: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<CurveRecord>> {
    let train = ev.train;
    let mut tracker = OnlineDualTracker::new(
        ev.prepared.kernel.clone(),
        hp.eta,
        train.input_dim(),
        train.output_dim(),
    )?;
    let mut records = Vec::new();
    for t in 0..train.len() {
        tracker.push(train.x().column(t), targets.column(t))?;
        let step = t + 1;
        if step % eval_every == 0 || step == train.len() {
            records.push(ev.record(tracker.dual(), step, seed, step, tag)?);
        }
    }
    Ok(records)
}

fn run_kernel_learner(
    config: &ExperimentConfig,
    learner: &LearnerKind,
    hp: &HyperParams,
    tag: &str,
    prepared: &PreparedTask,
    seed: u64,
    coeffs_sink: Option<&mut Vec<CorrectionCoefficients>>,
) -> Result<Vec<CurveRecord>> {
    let train = &prepared.train.data;
    let ev = Evaluator::new(prepared);
    match learner {
        LearnerKind::Offline => {
            let dual = offline_dual(&prepared.kernel, train.x(), train.y(), hp.gamma)?;
            let base = ev.record(dual.view(), train.len(), seed, 0, tag)?;
            Ok(eval_steps(train.len(), config.eval_every)
                .into_iter()
                .map(|step| CurveRecord {
                    step,
                    ..base.clone()
                })
                .collect())
        }
        LearnerKind::OnlineTrue => {
            stream_learner(&ev, train.y(), hp, config.eval_every, seed, tag)
        }
        LearnerKind::OnlineCorrected => {
            let z = corrected_targets(&prepared.kernel, train.x(), train.y(), hp.eta, hp.gamma)?;
            stream_learner(&ev, z.values(), hp, config.eval_every, seed, tag)
        }
        LearnerKind::OnlineIterCorrected => {
            let mut pipe = CorrectionPipeline::new(
                prepared.kernel.clone(),
                hp.clone(),
                train.input_dim(),
                train.output_dim(),
            )?;
            let n = train.len();
            let mut z = Array2::zeros((train.output_dim(), n));
            let mut sink = coeffs_sink;
            let mut lo = 0;
            while lo < n {
                let hi = (lo + config.correction_chunk).min(n);
                let res = pipe.push_chunk(
                    train.x().slice(s![.., lo..hi]),
                    train.y().slice(s![.., lo..hi]),
                    None,
                )?;
                z.slice_mut(s![.., lo..hi]).assign(&res.z_new);
                if let Some(sink) = sink.as_deref_mut() {
                    sink.push(res.coefficients);
                }
                lo = hi;
            }
            stream_learner(&ev, z.view(), hp, config.eval_every, seed, tag)
        }
        LearnerKind::CumulativeReplay => {
            let n = train.len();
            let mut records = Vec::new();
            let mut chol: Option<CholeskyFactor> = None;
            let k_full = &prepared.k_train;
            let mut consumed = 0usize;
            for t in eval_steps(n, config.eval_every) {
                let cross = k_full.slice(s![..consumed, consumed..t]);
                let mut corner = k_full.slice(s![consumed..t, consumed..t]).to_owned();
                for i in 0..(t - consumed) {
                    corner[(i, i)] += hp.gamma;
                }
                match chol.as_mut() {
                    Some(f) => f.extend(cross, corner.view())?,
                    None => chol = Some(CholeskyFactor::decompose(corner.view())?),
                }
                consumed = t;
                let f = chol.as_ref().unwrap();
                let y_train = train.y();
                let y_t = y_train.slice(s![.., ..t]).t().to_owned();
                let dual = f.solve(y_t.view()).t().to_owned();
                records.push(ev.record(dual.view(), t, seed, t, tag)?);
            }
            Ok(records)
        }
        LearnerKind::SgdMlp { .. } => unreachable!("dispatched in run_learner"),
    }
}

fn run_mlp_learner(
    config: &ExperimentConfig,
    learner: &LearnerKind,
    hp: &HyperParams,
    tag: &str,
    prepared: &PreparedTask,
    seed: u64,
) -> Result<Vec<CurveRecord>> {
    let LearnerKind::SgdMlp {
        hidden,
        activation,
        schedule,
        correction,
    } = learner
    else {
        unreachable!("mlp runner called with kernel learner")
    };
    let train = &prepared.train.data;
    let mut layers = vec![train.input_dim()];
    layers.extend_from_slice(hidden);
    layers.push(train.output_dim());
    let spec = MlpSpec::new(layers, *activation)?;
    let mut hp_run = hp.clone();
    hp_run.seed = hp.seed.wrapping_add(seed);
    let setup = TrainSetup {
        hp: hp_run,
        schedule: *schedule,
        correction: *correction,
        chunk: config.correction_chunk,
        epochs_per_task: config.epochs_per_task,
        eval_every: config.eval_every,
        init: WeightInit::Gaussian,
        ntk_mode: NtkMode::TraceAveraged,
    };
    let (metrics, _) = train_corrected(
        &spec,
        train,
        &prepared.train.boundaries,
        &prepared.test,
        &setup,
    )?;
    Ok(metrics
        .into_iter()
        .map(|m| CurveRecord {
            seed,
            step: m.step,
            learner: tag.to_string(),
            train_mse: m.train_mse,
            test_mse: m.test_mse,
            test_accuracy: m.test_accuracy,
        })
        .collect())
}

/// Tags for every (hyperparameter setting, learner) pair; grid runs carry
/// an explicit suffix so records stay distinguishable.
fn setting_tags(config: &ExperimentConfig) -> Vec<(HyperParams, Vec<(LearnerKind, String)>)> {
    let settings = config.hp_settings();
    let multi = settings.len() > 1;
    settings
        .into_iter()
        .map(|hp| {
            let pairs = config
                .learners
                .iter()
                .map(|l| {
                    let tag = if multi {
                        format!("{}[eta={},gamma={}]", l.tag(), hp.eta, hp.gamma)
                    } else {
                        l.tag()
                    };
                    (l.clone(), tag)
                })
                .collect();
            (hp, pairs)
        })
        .collect()
}

/// Run one learner for one seed with the config's base hyperparameters.
pub fn run_learner(
    config: &ExperimentConfig,
    learner: &LearnerKind,
    prepared: &PreparedTask,
    seed: u64,
    coeffs_sink: Option<&mut Vec<CorrectionCoefficients>>,
) -> Result<Vec<CurveRecord>> {
    let tag = learner.tag();
    run_learner_with(config, learner, &config.hp, &tag, prepared, seed, coeffs_sink)
}

fn run_learner_with(
    config: &ExperimentConfig,
    learner: &LearnerKind,
    hp: &HyperParams,
    tag: &str,
    prepared: &PreparedTask,
    seed: u64,
    coeffs_sink: Option<&mut Vec<CorrectionCoefficients>>,
) -> Result<Vec<CurveRecord>> {
    match learner {
        LearnerKind::SgdMlp { .. } => run_mlp_learner(config, learner, hp, tag, prepared, seed),
        _ => run_kernel_learner(config, learner, hp, tag, prepared, seed, coeffs_sink),
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<CurveRecord>> {
    let prepared = prepare_task(config, seed)?;
    let mut records = Vec::new();
    for (hp, pairs) in setting_tags(config) {
        for (learner, tag) in pairs {
            let rs = run_learner_with(config, &learner, &hp, &tag, &prepared, seed, None)
                .map_err(|e| e.with_context(format!("learner {tag} at seed {seed}")))?;
            records.extend(rs);
        }
    }
    Ok(records)
}

/// Run every (seed, learner) pair and aggregate final-point statistics.
/// Seeds execute on parallel worker threads; output order is seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut per_seed: Vec<Option<Result<Vec<CurveRecord>>>> =
        (0..config.seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &seed in &config.seeds {
            handles.push(scope.spawn(move || run_seed(config, seed)));
        }
        for (slot, handle) in per_seed.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("worker panicked"));
        }
    });
    let mut records = Vec::new();
    for slot in per_seed {
        records.extend(slot.expect("slot filled")?);
    }
    let summary = summarize(config, &records);
    Ok(RunOutput { records, summary })
}

fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt() / (n as f64).sqrt())
}

fn summarize(config: &ExperimentConfig, records: &[CurveRecord]) -> Vec<LearnerSummary> {
    let mut out = Vec::new();
    let tags: Vec<String> = setting_tags(config)
        .into_iter()
        .flat_map(|(_, pairs)| pairs.into_iter().map(|(_, tag)| tag))
        .collect();
    for tag in tags {
        let mut final_mse = Vec::new();
        let mut final_acc = Vec::new();
        for &seed in &config.seeds {
            let last = records
                .iter()
                .filter(|r| r.learner == tag && r.seed == seed)
                .max_by_key(|r| r.step);
            if let Some(r) = last {
                final_mse.push(r.test_mse);
                if let Some(a) = r.test_accuracy {
                    final_acc.push(a);
                }
            }
        }
        if final_mse.is_empty() {
            continue;
        }
        let (mean_mse, sem_mse) = mean_sem(&final_mse);
        let acc = if final_acc.len() == final_mse.len() {
            Some(mean_sem(&final_acc))
        } else {
            None
        };
        out.push(LearnerSummary {
            learner: tag,
            n_seeds: final_mse.len(),
            mean_final_test_mse: mean_mse,
            sem_final_test_mse: sem_mse,
            mean_final_accuracy: acc.map(|a| a.0),
            sem_final_accuracy: acc.map(|a| a.1),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KernelDescriptor;
    use okreg::tasks::{ClusterConfig, Gp1dConfig, OrderingPolicy, TaskConfig};

    fn gp_config(learners: Vec<LearnerKind>) -> ExperimentConfig {
        ExperimentConfig {
            task: TaskConfig {
                kind: TaskKind::Gp1d(Gp1dConfig::default()),
                ordering: OrderingPolicy::AsGenerated,
                seed: 0,
            },
            kernel: KernelDescriptor::Rbf { bandwidth: 0.1 },
            learners,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn offline_curve_is_flat() {
        let config = gp_config(vec![LearnerKind::Offline]);
        let out = run_experiment(&config).unwrap();
        assert!(out.records.len() >= 2);
        let first = out.records.first().unwrap();
        for r in &out.records {
            assert_eq!(r.test_mse, first.test_mse);
            assert_eq!(r.test_accuracy, None);
        }
        let steps: Vec<usize> = out.records.iter().map(|r| r.step).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn corrected_final_matches_offline() {
        let mut config = gp_config(vec![
            LearnerKind::Offline,
            LearnerKind::OnlineTrue,
            LearnerKind::OnlineCorrected,
        ]);
        config.seeds = (0..8).collect();
        let out = run_experiment(&config).unwrap();
        // Exact per seed: corrected online reproduces the offline fit.
        for &seed in &config.seeds {
            let final_of = |tag: &str| {
                out.records
                    .iter()
                    .filter(|r| r.learner == tag && r.seed == seed)
                    .max_by_key(|r| r.step)
                    .unwrap()
            };
            let off = final_of("offline");
            let corr = final_of("online_corrected");
            assert!((off.test_mse - corr.test_mse).abs() < 1e-8);
        }
        // On average the uncorrected online run trails both.
        let mean_of = |tag: &str| {
            out.summary
                .iter()
                .find(|s| s.learner == tag)
                .unwrap()
                .mean_final_test_mse
        };
        assert!(mean_of("online_true") >= mean_of("offline"));
        assert!(mean_of("online_true") >= mean_of("online_corrected"));
    }

    #[test]
    fn replay_final_matches_offline() {
        let config = gp_config(vec![LearnerKind::Offline, LearnerKind::CumulativeReplay]);
        let out = run_experiment(&config).unwrap();
        let last_replay = out
            .records
            .iter()
            .filter(|r| r.learner == "cumulative_replay")
            .max_by_key(|r| r.step)
            .unwrap();
        let off = out
            .records
            .iter()
            .find(|r| r.learner == "offline")
            .unwrap();
        assert!((last_replay.test_mse - off.test_mse).abs() < 1e-10);
    }

    #[test]
    fn cluster_run_reports_accuracy_and_summary() {
        let config = ExperimentConfig {
            task: TaskConfig {
                kind: TaskKind::ClusterClassification(ClusterConfig {
                    n_classes: 4,
                    input_dim: 8,
                    spread: 0.2,
                    n_train: 64,
                    n_test: 32,
                }),
                ordering: OrderingPolicy::ClassIncremental,
                seed: 3,
            },
            kernel: KernelDescriptor::Rbf { bandwidth: 2.0 },
            learners: vec![LearnerKind::Offline, LearnerKind::OnlineIterCorrected],
            hp: HyperParams {
                eta: 0.5,
                gamma: 1.0,
                gamma_o: 0.0,
                block: 1,
                seed: 0,
            },
            seeds: vec![0, 1],
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&config).unwrap();
        assert!(out.records.iter().all(|r| r.test_accuracy.is_some()));
        assert_eq!(out.summary.len(), 2);
        for s in &out.summary {
            assert_eq!(s.n_seeds, 2);
            assert!(s.mean_final_accuracy.unwrap() > 0.25, "{s:?}");
        }
    }

    #[test]
    fn hp_grid_runs_every_setting_with_tag_suffix() {
        let mut config = gp_config(vec![LearnerKind::OnlineTrue]);
        config.hp_grid = vec![
            HyperParams {
                eta: 0.1,
                ..HyperParams::default()
            },
            HyperParams {
                eta: 0.5,
                ..HyperParams::default()
            },
        ];
        let out = run_experiment(&config).unwrap();
        let tags: std::collections::BTreeSet<String> =
            out.records.iter().map(|r| r.learner.clone()).collect();
        assert_eq!(
            tags.into_iter().collect::<Vec<_>>(),
            vec![
                "online_true[eta=0.1,gamma=1]".to_string(),
                "online_true[eta=0.5,gamma=1]".to_string()
            ]
        );
        assert_eq!(out.summary.len(), 2);
    }

    #[test]
    fn sem_is_sample_stddev_over_sqrt_n() {
        let (mean, sem) = mean_sem(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        // sample variance = 5/3; SEM = sqrt(5/3)/2
        assert!((sem - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        let (_, sem1) = mean_sem(&[7.0]);
        assert_eq!(sem1, 0.0);
    }

    #[test]
    fn deterministic_records() {
        let config = gp_config(vec![LearnerKind::OnlineTrue]);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.records, b.records);
    }
}
