//! Executable statement of the equivalence results: each check computes two
//! routes to the same quantity and reports the worst absolute deviation
//! against its threshold. Degenerate hyperparameters surface as errors, not
//! silent passes.

use ndarray::{s, Array2, ArrayView2};

use okreg::correction::{
    corrected_targets, correction_one_step, iterative_correction_bcg_oracle, CorrectionPipeline,
    CorrectionStep,
};
use okreg::error::Result;
use okreg::kernel::KernelSpec;
use okreg::regression::{
    minibatch_closed_form, offline_predict, online_closed_form, sgd_run, HyperParams,
    OrderedDataset, SgdOptions,
};
use okreg::shift::{effective_targets, Provenance, ShiftTracker, TargetMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Error(String),
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub threshold: f64,
    pub deviation: Option<f64>,
    pub status: CheckStatus,
}

impl CheckResult {
    fn from_run(name: &str, threshold: f64, run: Result<f64>) -> Self {
        match run {
            Ok(dev) => CheckResult {
                name: name.to_string(),
                threshold,
                deviation: Some(dev),
                status: if dev < threshold {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
            },
            Err(e) => CheckResult {
                name: name.to_string(),
                threshold,
                deviation: None,
                status: CheckStatus::Error(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub checks: Vec<CheckResult>,
}

impl EquivalenceReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            match &c.status {
                CheckStatus::Pass => out.push_str(&format!(
                    "[PASS] {:<34} max dev {:.3e} < {:.1e}\n",
                    c.name,
                    c.deviation.unwrap(),
                    c.threshold
                )),
                CheckStatus::Fail => out.push_str(&format!(
                    "[FAIL] {:<34} max dev {:.3e} >= {:.1e}\n",
                    c.name,
                    c.deviation.unwrap(),
                    c.threshold
                )),
                CheckStatus::Error(msg) => {
                    out.push_str(&format!("[ERROR] {:<33} {msg}\n", c.name))
                }
            }
        }
        out
    }
}

fn max_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    (&a.to_owned() - &b.to_owned())
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Run all equivalence checks on one dataset/kernel/hyperparameter choice.
/// The SGD legs need an explicit-feature kernel.
pub fn equivalence_report(
    train: &OrderedDataset,
    test_x: ArrayView2<f64>,
    kernel: &KernelSpec,
    hp: &HyperParams,
) -> EquivalenceReport {
    let x = train.x();
    let y = train.y();
    let mut checks = Vec::new();

    checks.push(CheckResult::from_run("streaming_sgd_vs_closed_form", 1e-8, {
        (|| {
            let cf = online_closed_form(kernel, x, y, hp.eta, hp.gamma, test_x)?;
            let run = sgd_run(kernel, train, hp.eta, hp.gamma, &SgdOptions::default(), None)?;
            let f = run.predictor.predict(test_x)?;
            Ok(max_diff(cf.view(), f.view()))
        })()
    }));

    checks.push(CheckResult::from_run(
        "minibatch_sgd_vs_closed_form",
        1e-8,
        (|| {
            let mut worst = 0.0_f64;
            for b in [2usize, 4, 8] {
                let b = b.min(train.len());
                let cf = minibatch_closed_form(kernel, x, y, hp.eta, b, test_x)?;
                let opts = SgdOptions {
                    batch: b,
                    ..SgdOptions::default()
                };
                let run = sgd_run(kernel, train, hp.eta, 0.0, &opts, None)?;
                let f = run.predictor.predict(test_x)?;
                worst = worst.max(max_diff(cf.view(), f.view()));
            }
            Ok(worst)
        })(),
    ));

    checks.push(CheckResult::from_run("effective_targets_reproduce_online", 1e-8, {
        (|| {
            let eff = effective_targets(kernel, x, y, hp.eta, hp.gamma)?;
            let f_off = offline_predict(kernel, x, eff.values(), hp.gamma, test_x)?;
            let f_on = online_closed_form(kernel, x, y, hp.eta, 0.0, test_x)?;
            Ok(max_diff(f_off.view(), f_on.view()))
        })()
    }));

    checks.push(CheckResult::from_run("corrected_targets_reproduce_offline", 1e-8, {
        (|| {
            let corr = corrected_targets(kernel, x, y, hp.eta, hp.gamma)?;
            let f_on = online_closed_form(kernel, x, corr.values(), hp.eta, 0.0, test_x)?;
            let f_off = offline_predict(kernel, x, y, hp.gamma, test_x)?;
            Ok(max_diff(f_on.view(), f_off.view()))
        })()
    }));

    checks.push(CheckResult::from_run(
        "shift_correction_composition",
        1e-10,
        (|| {
            let corr = corrected_targets(kernel, x, y, hp.eta, hp.gamma)?;
            let back = effective_targets(kernel, x, corr.values(), hp.eta, hp.gamma)?;
            let eff = effective_targets(kernel, x, y, hp.eta, hp.gamma)?;
            let back2 = corrected_targets(kernel, x, eff.values(), hp.eta, hp.gamma)?;
            Ok(max_diff(back.values(), y).max(max_diff(back2.values(), y)))
        })(),
    ));

    checks.push(CheckResult::from_run("shift_one_step_vs_batch", 1e-10, {
        (|| {
            let mut tracker = ShiftTracker::new(
                kernel.clone(),
                hp.eta,
                hp.gamma,
                train.input_dim(),
                train.output_dim(),
            )?;
            let mut worst = 0.0_f64;
            for t in 0..train.len() {
                tracker.push(x.column(t), y.column(t))?;
                let batch = effective_targets(
                    kernel,
                    x.slice(s![.., ..t + 1]),
                    y.slice(s![.., ..t + 1]),
                    hp.eta,
                    hp.gamma,
                )?;
                worst = worst.max(max_diff(tracker.effective().values(), batch.values()));
            }
            Ok(worst)
        })()
    }));

    checks.push(CheckResult::from_run(
        "correction_one_step_vs_batch",
        1e-10,
        (|| {
            let mut prev =
                TargetMatrix::new(Array2::zeros((train.output_dim(), 0)), Provenance::Corrected);
            let mut worst = 0.0_f64;
            for t in 0..train.len() {
                prev = correction_one_step(
                    &prev,
                    kernel,
                    x.slice(s![.., ..t]),
                    y.slice(s![.., ..t]),
                    x.column(t),
                    y.column(t),
                    hp.eta,
                    hp.gamma,
                )?;
                let batch = corrected_targets(
                    kernel,
                    x.slice(s![.., ..t + 1]),
                    y.slice(s![.., ..t + 1]),
                    hp.eta,
                    hp.gamma,
                )?;
                worst = worst.max(max_diff(prev.values(), batch.values()));
            }
            Ok(worst)
        })(),
    ));

    // The chunked identity is checked at a Tikhonov weight that keeps the
    // near-singular 1-D chunk grams conditioned; the identity holds for any
    // gamma_o, but at 0 the comparison only measures round-off.
    let gamma_o = hp.gamma_o.max(1e-2);
    checks.push(CheckResult::from_run(
        "block_correction_route_agreement",
        1e-9,
        (|| {
            let mut hp_c = hp.clone();
            hp_c.gamma_o = gamma_o;
            let mut pipe = CorrectionPipeline::new(
                kernel.clone(),
                hp_c.clone(),
                train.input_dim(),
                train.output_dim(),
            )?;
            let n = train.len();
            let chunk = 8.min(n);
            let mut worst = 0.0_f64;
            let mut lo = 0;
            while lo < n {
                let hi = (lo + chunk).min(n);
                let step = CorrectionStep::new(
                    pipe.corrected().values().to_owned(),
                    x.slice(s![.., ..lo]).to_owned(),
                    x.slice(s![.., lo..hi]).to_owned(),
                    y.slice(s![.., ..lo]).to_owned(),
                    y.slice(s![.., lo..hi]).to_owned(),
                    hp_c.clone(),
                )?;
                let z_bcg = iterative_correction_bcg_oracle(kernel, &step)?;
                let res =
                    pipe.push_chunk(x.slice(s![.., lo..hi]), y.slice(s![.., lo..hi]), None)?;
                worst = worst.max(max_diff(res.z_new.view(), z_bcg.view()));
                lo = hi;
            }
            Ok(worst)
        })(),
    ));

    EquivalenceReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use okreg::tasks::{gen_gp1d, gen_random_feature_map, Gp1dConfig};

    #[test]
    fn gp_defaults_all_pass() {
        let task = gen_gp1d(&Gp1dConfig::default(), 0).unwrap();
        let kernel = gen_random_feature_map(100, 1, 0);
        let hp = HyperParams {
            eta: 0.5,
            gamma: 1.0,
            gamma_o: 0.0,
            block: 1,
            seed: 0,
        };
        let report = equivalence_report(&task.train, task.test.x(), &kernel, &hp);
        assert!(report.all_pass(), "\n{}", report.render());
        assert_eq!(report.checks.len(), 8);
    }

    #[test]
    fn degenerate_decay_reported_not_silent() {
        let task = gen_gp1d(&Gp1dConfig::default(), 1).unwrap();
        let kernel = gen_random_feature_map(100, 1, 1);
        let hp = HyperParams {
            eta: 0.5,
            gamma: 2.0, // eta*gamma = 1
            gamma_o: 0.0,
            block: 1,
            seed: 0,
        };
        let report = equivalence_report(&task.train, task.test.x(), &kernel, &hp);
        assert!(!report.all_pass());
        let first = &report.checks[0];
        match &first.status {
            CheckStatus::Error(msg) => assert!(msg.contains("degenerate decay"), "{msg}"),
            other => panic!("expected error status, got {other:?}"),
        }
    }

    #[test]
    fn single_sample_dataset_all_identities_hold() {
        let cfg = Gp1dConfig {
            n_train: 1,
            n_test: 8,
            ..Gp1dConfig::default()
        };
        let task = gen_gp1d(&cfg, 2).unwrap();
        let kernel = gen_random_feature_map(50, 1, 2);
        let hp = HyperParams {
            eta: 0.3,
            gamma: 0.7,
            gamma_o: 0.0,
            block: 1,
            seed: 0,
        };
        let report = equivalence_report(&task.train, task.test.x(), &kernel, &hp);
        assert!(report.all_pass(), "\n{}", report.render());
    }
}
