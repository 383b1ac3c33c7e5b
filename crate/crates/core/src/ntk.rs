//! Small fully connected networks with exact parameter Jacobians, empirical
//! NTK Gram assembly, and streaming trainers that feed block-corrected
//! targets to mini-batch SGD with a periodically refreshed kernel snapshot.
//!
//! The snapshot enters the correction as a precomputed kernel indexed by
//! global sample position, so chunk corrections only ever look up stored
//! entries; network outputs supply the online predictions.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::correction::CorrectionPipeline;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::regression::{HyperParams, OrderedDataset};

/// Dense-NTK storage guard.
pub const NTK_STORAGE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    ReLU,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::ReLU => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative from the post-activation value (subgradient 0 at the ReLU
    /// kink).
    fn derivative_from_output(&self, h: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths `[d_x, h₁, …, d_y]` and the hidden activation. Layers carry
/// no bias; the output layer is linear.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, activation: Activation) -> Result<Self> {
        if layers.len() < 2 || layers.iter().any(|&w| w == 0) {
            return Err(Error::InvalidParameter {
                name: "layers",
                reason: format!("need >= 2 nonzero widths, got {layers:?}"),
            });
        }
        Ok(MlpSpec { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn n_weight_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        (0..self.n_weight_layers())
            .map(|l| self.layers[l + 1] * self.layers[l])
            .sum()
    }
}

/// Weight matrices, one per layer: `W_l` has shape `(layers[l+1], layers[l])`.
#[derive(Debug, Clone)]
pub struct MlpWeights {
    w: Vec<Array2<f64>>,
}

impl MlpWeights {
    /// Independent zero-mean Gaussians with variance 1/fan-in.
    pub fn init_gaussian(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
        let w = (0..spec.n_weight_layers())
            .map(|l| {
                let fan_in = spec.layers[l] as f64;
                let std = (1.0 / fan_in).sqrt();
                Array2::from_shape_fn((spec.layers[l + 1], spec.layers[l]), |_| {
                    std * normal.sample(&mut rng)
                })
            })
            .collect();
        MlpWeights { w }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let w = (0..spec.n_weight_layers())
            .map(|l| Array2::zeros((spec.layers[l + 1], spec.layers[l])))
            .collect();
        MlpWeights { w }
    }

    pub fn from_layers(w: Vec<Array2<f64>>) -> Self {
        MlpWeights { w }
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.w
    }

    pub fn layer(&self, l: usize) -> ArrayView2<'_, f64> {
        self.w[l].view()
    }

    fn check(&self, spec: &MlpSpec) -> Result<()> {
        if self.w.len() != spec.n_weight_layers() {
            return Err(Error::DimensionMismatch {
                context: "mlp weights",
                expected: format!("{} layers", spec.n_weight_layers()),
                actual: format!("{}", self.w.len()),
            });
        }
        for (l, w) in self.w.iter().enumerate() {
            if w.nrows() != spec.layers[l + 1] || w.ncols() != spec.layers[l] {
                return Err(Error::DimensionMismatch {
                    context: "mlp weights",
                    expected: format!("layer {l}: {}x{}", spec.layers[l + 1], spec.layers[l]),
                    actual: format!("{}x{}", w.nrows(), w.ncols()),
                });
            }
        }
        Ok(())
    }
}

/// Post-activation inputs to each weight layer plus the network output.
struct ForwardCache {
    /// inputs[l] feeds W_l; inputs[0] is X itself.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn forward_cached(spec: &MlpSpec, w: &MlpWeights, x: ArrayView2<f64>) -> Result<ForwardCache> {
    w.check(spec)?;
    if x.nrows() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "mlp_forward",
            expected: format!("{} input rows", spec.input_dim()),
            actual: format!("{}", x.nrows()),
        });
    }
    let l_total = spec.n_weight_layers();
    let mut inputs = Vec::with_capacity(l_total);
    let mut h = x.to_owned();
    for l in 0..l_total {
        inputs.push(h.clone());
        let a = w.w[l].dot(&h);
        h = if l + 1 < l_total {
            a.mapv(|v| spec.activation.apply(v))
        } else {
            a
        };
    }
    Ok(ForwardCache { inputs, output: h })
}

/// Feedforward pass; columns in, columns out.
pub fn mlp_forward(spec: &MlpSpec, w: &MlpWeights, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(forward_cached(spec, w, x)?.output)
}

/// Summed-over-batch MSE gradient `∂ ½‖f(X)-Y‖²_F / ∂W_l` for every layer,
/// plus the residual `f(X) - Y`.
pub fn mse_gradient(
    spec: &MlpSpec,
    w: &MlpWeights,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
    let cache = forward_cached(spec, w, x)?;
    if y.nrows() != spec.output_dim() || y.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "mse_gradient targets",
            expected: format!("{}x{}", spec.output_dim(), x.ncols()),
            actual: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    let l_total = spec.n_weight_layers();
    let mut grads = vec![Array2::zeros((0, 0)); l_total];
    let residual = &cache.output - &y;
    let mut delta = residual.clone();
    for l in (0..l_total).rev() {
        grads[l] = delta.dot(&cache.inputs[l].t());
        if l > 0 {
            let mut back = w.w[l].t().dot(&delta);
            back.zip_mut_with(&cache.inputs[l], |d, &h| {
                *d *= spec.activation.derivative_from_output(h)
            });
            delta = back;
        }
    }
    Ok((grads, residual))
}

/// One plain SGD step on the batch: `W_l ← W_l - η·grad_l`.
pub fn sgd_step(
    spec: &MlpSpec,
    w: &mut MlpWeights,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
) -> Result<()> {
    let (grads, _) = mse_gradient(spec, w, x, y)?;
    for (wl, gl) in w.w.iter_mut().zip(grads) {
        *wl = &*wl - &gl.mapv(|v| eta * v);
    }
    Ok(())
}

/// Exact reverse-mode Jacobian of the outputs w.r.t. all weights, d_y × P,
/// parameters flattened layer by layer, row-major within a layer.
pub fn mlp_jacobian(spec: &MlpSpec, w: &MlpWeights, x: ArrayView1<f64>) -> Result<Array2<f64>> {
    let cache = forward_cached(spec, w, x.insert_axis(ndarray::Axis(1)))?;
    let d_y = spec.output_dim();
    let l_total = spec.n_weight_layers();
    // sens[l][:, a] = ∂f_a/∂preact_l for the single sample.
    let mut sens: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); l_total];
    sens[l_total - 1] = Array2::eye(d_y);
    for l in (0..l_total - 1).rev() {
        let mut back = w.w[l + 1].t().dot(&sens[l + 1]);
        for (i, mut row) in back.rows_mut().into_iter().enumerate() {
            let d = spec.activation.derivative_from_output(cache.inputs[l + 1][(i, 0)]);
            row.mapv_inplace(|v| v * d);
        }
        sens[l] = back;
    }
    let mut jac = Array2::zeros((d_y, spec.param_count()));
    let mut offset = 0;
    for l in 0..l_total {
        let rows = spec.layers[l + 1];
        let cols = spec.layers[l];
        for a in 0..d_y {
            for i in 0..rows {
                let g = sens[l][(i, a)];
                if g == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    jac[(a, offset + i * cols + j)] = g * cache.inputs[l][(j, 0)];
                }
            }
        }
        offset += rows * cols;
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum NtkMode {
    PerOutput,
    TraceAveraged,
}

/// Empirical-NTK Gram(s) at fixed weights: one matrix per output dimension,
/// or their average.
#[derive(Debug, Clone)]
pub struct NtkSnapshot {
    grams: Vec<Array2<f64>>,
    mode: NtkMode,
    pub taken_at: usize,
}

impl NtkSnapshot {
    pub fn mode(&self) -> NtkMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.grams[0].nrows()
    }

    pub fn grams(&self) -> &[Array2<f64>] {
        &self.grams
    }

    /// The single Gram used for correction (trace-averaged mode).
    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.grams[0].view()
    }

    /// Wrap as a precomputed kernel over stored-sample indices.
    pub fn to_kernel(&self) -> Result<KernelSpec> {
        match self.mode {
            NtkMode::TraceAveraged => KernelSpec::precomputed(self.grams[0].clone()),
            NtkMode::PerOutput => Err(Error::Unsupported {
                reason: "per-output snapshots do not define a single kernel".to_string(),
            }),
        }
    }
}

/// Assemble `⟨J(xᵢ), J(xⱼ)⟩` per output, or averaged over outputs.
///
/// Layer-wise factorization: the block of J for W_l contributes
/// (sensᵀsens) ∘ (inputᵀinput), so no per-sample Jacobian is materialized.
pub fn empirical_ntk_gram(
    spec: &MlpSpec,
    w: &MlpWeights,
    x: ArrayView2<f64>,
    mode: NtkMode,
    taken_at: usize,
) -> Result<NtkSnapshot> {
    let n = x.ncols();
    if n > NTK_STORAGE_LIMIT {
        return Err(Error::StorageGuard {
            n,
            limit: NTK_STORAGE_LIMIT,
        });
    }
    let cache = forward_cached(spec, w, x)?;
    let d_y = spec.output_dim();
    let l_total = spec.n_weight_layers();

    // sens[l][a]: (layers[l+1] × n) sensitivity of output a to preact_l.
    let mut sens_next: Vec<Array2<f64>> = (0..d_y)
        .map(|a| {
            let mut m = Array2::zeros((d_y, n));
            m.row_mut(a).fill(1.0);
            m
        })
        .collect();
    let mut per_output: Vec<Array2<f64>> = vec![Array2::zeros((n, n)); d_y];
    for l in (0..l_total).rev() {
        let hdot = cache.inputs[l].t().dot(&cache.inputs[l]);
        for a in 0..d_y {
            let sdot = sens_next[a].t().dot(&sens_next[a]);
            per_output[a] = &per_output[a] + &(&sdot * &hdot);
        }
        if l > 0 {
            for a in 0..d_y {
                let mut back = w.w[l].t().dot(&sens_next[a]);
                back.zip_mut_with(&cache.inputs[l], |d, &h| {
                    *d *= spec.activation.derivative_from_output(h)
                });
                sens_next[a] = back;
            }
        }
    }
    let grams = match mode {
        NtkMode::PerOutput => per_output,
        NtkMode::TraceAveraged => {
            let mut avg: Array2<f64> = Array2::zeros((n, n));
            for g in &per_output {
                avg = avg + g;
            }
            vec![avg.mapv(|v| v / d_y as f64)]
        }
    };
    Ok(NtkSnapshot {
        grams,
        mode,
        taken_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RefreshSchedule {
    FixedK,
    RefreshPerTask,
    RefreshPerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CorrectionMode {
    None,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WeightInit {
    Gaussian,
    Zeros,
}

/// Knobs for [`train_corrected`]. `hp.block` is the SGD mini-batch size and
/// also the block size of the directional matrix inside the correction;
/// `chunk` is the look-ahead horizon of the block correction. `hp.gamma`
/// parameterizes the offline predictor the correction chases; the SGD
/// updates themselves carry no weight decay.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub hp: HyperParams,
    pub schedule: RefreshSchedule,
    pub correction: CorrectionMode,
    pub chunk: usize,
    pub epochs_per_task: usize,
    pub eval_every: usize,
    pub init: WeightInit,
    pub ntk_mode: NtkMode,
}

impl Default for TrainSetup {
    fn default() -> Self {
        TrainSetup {
            hp: HyperParams::default(),
            schedule: RefreshSchedule::RefreshPerTask,
            correction: CorrectionMode::Iterative,
            chunk: 20,
            epochs_per_task: 1,
            eval_every: 16,
            init: WeightInit::Gaussian,
            ntk_mode: NtkMode::TraceAveraged,
        }
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub task_id: usize,
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_accuracy: Option<f64>,
}

/// Mean squared error per sample and output dimension.
pub fn mse_of(pred: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let diff = &pred.to_owned() - &y.to_owned();
    let total: f64 = diff.iter().map(|v| v * v).sum();
    total / (pred.nrows() * pred.ncols()).max(1) as f64
}

/// Argmax accuracy against integer labels; ties break to the lowest index.
pub fn accuracy_of(pred: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let mut hits = 0usize;
    for (j, &label) in labels.iter().enumerate() {
        let col = pred.column(j);
        let mut best = 0usize;
        for r in 1..col.len() {
            if col[r] > col[best] {
                best = r;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    hits as f64 / labels.len().max(1) as f64
}

/// Mini-batch SGD over a task stream, optionally feeding block-corrected
/// targets computed from the current NTK snapshot. `boundaries` are
/// end-exclusive task ends (cumulative); an empty slice means one task.
/// Returns the metrics trace and final weights.
pub fn train_corrected(
    spec: &MlpSpec,
    train: &OrderedDataset,
    boundaries: &[usize],
    test: &OrderedDataset,
    setup: &TrainSetup,
) -> Result<(Vec<MetricsRecord>, MlpWeights)> {
    setup.hp.validate()?;
    if setup.chunk == 0 || setup.epochs_per_task == 0 || setup.eval_every == 0 {
        return Err(Error::InvalidParameter {
            name: "setup",
            reason: "chunk, epochs_per_task, and eval_every must be >= 1".to_string(),
        });
    }
    if spec.input_dim() != train.input_dim() || spec.output_dim() != train.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "train_corrected",
            expected: format!("net {}->{}", train.input_dim(), train.output_dim()),
            actual: format!("net {}->{}", spec.input_dim(), spec.output_dim()),
        });
    }
    if test.input_dim() != train.input_dim() || test.output_dim() != train.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "train_corrected test set",
            expected: format!("{}->{}", train.input_dim(), train.output_dim()),
            actual: format!("{}->{}", test.input_dim(), test.output_dim()),
        });
    }
    let n = train.len();
    let bounds: Vec<usize> = if boundaries.is_empty() {
        vec![n]
    } else {
        if boundaries.last() != Some(&n) || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "boundaries",
                reason: format!("must be strictly increasing and end at {n}"),
            });
        }
        boundaries.to_vec()
    };

    let mut w = match setup.init {
        WeightInit::Gaussian => MlpWeights::init_gaussian(spec, setup.hp.seed),
        WeightInit::Zeros => MlpWeights::zeros(spec),
    };
    let batch = setup.hp.block;
    let eta = setup.hp.eta;
    let mut records = Vec::new();
    let mut step = 0usize;

    // Index columns address snapshot entries; the pipeline sees indices,
    // never raw inputs.
    let index_block =
        |lo: usize, hi: usize| Array2::from_shape_fn((1, hi - lo), |(_, j)| (lo + j) as f64);

    let mut pipeline = match setup.correction {
        CorrectionMode::Iterative => Some(CorrectionPipeline::new(
            KernelSpec::precomputed(Array2::zeros((0, 0)))?,
            setup.hp.clone(),
            1,
            spec.output_dim(),
        )?),
        CorrectionMode::None => None,
    };
    let mut snapshot_taken = false;

    let mut task_start = 0usize;
    for (task_id, &task_end) in bounds.iter().enumerate() {
        let committed = pipeline.clone();
        let mut task_targets: Vec<Array2<f64>> = Vec::new();
        for epoch in 0..setup.epochs_per_task {
            let refresh = match setup.schedule {
                RefreshSchedule::FixedK => !snapshot_taken,
                RefreshSchedule::RefreshPerTask => epoch == 0,
                RefreshSchedule::RefreshPerEpoch => true,
            };
            let recompute_targets = epoch == 0 || matches!(setup.schedule, RefreshSchedule::RefreshPerEpoch);
            if let Some(pipe) = pipeline.as_mut() {
                if refresh {
                    let cover = match setup.schedule {
                        RefreshSchedule::FixedK => n,
                        _ => task_end,
                    };
                    let snap = empirical_ntk_gram(
                        spec,
                        &w,
                        train.x().slice(s![.., ..cover]),
                        setup.ntk_mode,
                        step,
                    )?;
                    pipe.replace_kernel(snap.to_kernel()?)?;
                    snapshot_taken = true;
                }
                if epoch > 0 && recompute_targets {
                    // Re-correct the current task against the refreshed
                    // kernel; earlier tasks stay frozen.
                    let mut rolled = committed.clone().expect("pipeline present");
                    rolled.replace_kernel(pipe.kernel().clone())?;
                    *pipe = rolled;
                }
            }
            if recompute_targets {
                task_targets.clear();
            }

            let x_all = train.x();
            let mut chunk_start = task_start;
            let mut chunk_idx = 0usize;
            while chunk_start < task_end {
                let chunk_end = (chunk_start + setup.chunk).min(task_end);
                let x_chunk = x_all.slice(s![.., chunk_start..chunk_end]);
                let targets: Array2<f64> = match (pipeline.as_mut(), recompute_targets) {
                    (Some(pipe), true) => {
                        let f_on = mlp_forward(spec, &w, x_chunk)?;
                        let res = pipe.push_chunk(
                            index_block(chunk_start, chunk_end).view(),
                            train.y().slice(s![.., chunk_start..chunk_end]),
                            Some(f_on.view()),
                        )?;
                        task_targets.push(res.z_new.clone());
                        res.z_new
                    }
                    (Some(_), false) => task_targets[chunk_idx].clone(),
                    (None, _) => train.y().slice(s![.., chunk_start..chunk_end]).to_owned(),
                };
                let mut lo = chunk_start;
                while lo < chunk_end {
                    let hi = (lo + batch).min(chunk_end);
                    sgd_step(
                        spec,
                        &mut w,
                        train.x().slice(s![.., lo..hi]),
                        targets.slice(s![.., lo - chunk_start..hi - chunk_start]),
                        eta,
                    )?;
                    step += 1;
                    if step % setup.eval_every == 0 {
                        records.push(evaluate(spec, &w, train, test, step, task_id, epoch)?);
                    }
                    lo = hi;
                }
                chunk_start = chunk_end;
                chunk_idx += 1;
            }
        }
        task_start = task_end;
    }
    if records.last().map(|r| r.step) != Some(step) {
        let last_task = bounds.len() - 1;
        records.push(evaluate(
            spec,
            &w,
            train,
            test,
            step,
            last_task,
            setup.epochs_per_task - 1,
        )?);
    }
    Ok((records, w))
}

fn evaluate(
    spec: &MlpSpec,
    w: &MlpWeights,
    train: &OrderedDataset,
    test: &OrderedDataset,
    step: usize,
    task_id: usize,
    epoch: usize,
) -> Result<MetricsRecord> {
    let train_pred = mlp_forward(spec, w, train.x())?;
    let test_pred = mlp_forward(spec, w, test.x())?;
    Ok(MetricsRecord {
        step,
        task_id,
        epoch,
        train_mse: mse_of(train_pred.view(), train.y()),
        test_mse: mse_of(test_pred.view(), test.y()),
        test_accuracy: test.labels().map(|l| accuracy_of(test_pred.view(), l)),
    })
}

/// `step,task_id,epoch,train_mse,test_mse,test_accuracy` rows; accuracy is
/// empty for regression traces.
pub fn export_metrics_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,task_id,epoch,train_mse,test_mse,test_accuracy\n");
    for r in records {
        let acc = r
            .test_accuracy
            .map(|a| a.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.task_id, r.epoch, r.train_mse, r.test_mse, acc
        ));
    }
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use ndarray::arr2;

    fn max_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
        max_abs((&a.to_owned() - &b.to_owned()).view())
    }

    fn random_net(layers: Vec<usize>, act: Activation, seed: u64) -> (MlpSpec, MlpWeights) {
        let spec = MlpSpec::new(layers, act).unwrap();
        let w = MlpWeights::init_gaussian(&spec, seed);
        (spec, w)
    }

    /// Straight-line reimplementation used only as an oracle.
    fn forward_naive(spec: &MlpSpec, w: &MlpWeights, x: ArrayView2<f64>) -> Array2<f64> {
        let n = x.ncols();
        let d_y = spec.output_dim();
        let mut out = Array2::zeros((d_y, n));
        for j in 0..n {
            let mut h: Vec<f64> = x.column(j).to_vec();
            for l in 0..spec.n_weight_layers() {
                let rows = spec.layers[l + 1];
                let mut next = vec![0.0; rows];
                for (i, nv) in next.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, hv) in h.iter().enumerate() {
                        acc += w.layer(l)[(i, k)] * hv;
                    }
                    *nv = if l + 1 < spec.n_weight_layers() {
                        spec.activation.apply(acc)
                    } else {
                        acc
                    };
                }
                h = next;
            }
            for (r, hv) in h.iter().enumerate() {
                out[(r, j)] = *hv;
            }
        }
        out
    }

    #[test]
    fn forward_identity_single_layer_is_linear() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Identity).unwrap();
        let w = MlpWeights::init_gaussian(&spec, 1);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i + j) as f64 * 0.3 - 1.0);
        let out = mlp_forward(&spec, &w, x.view()).unwrap();
        let direct = w.layer(0).dot(&x);
        assert_eq!(out, direct);
    }

    #[test]
    fn forward_zero_weights_zero_output() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::ReLU).unwrap();
        let w = MlpWeights::zeros(&spec);
        let x = Array2::from_elem((3, 4), 1.0);
        let out = mlp_forward(&spec, &w, x.view()).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((2, 4)));
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        for act in [Activation::ReLU, Activation::Tanh, Activation::Identity] {
            let (spec, w) = random_net(vec![4, 7, 5, 3], act, 9);
            let x = Array2::from_shape_fn((4, 6), |(i, j)| ((i * 6 + j) as f64 * 0.17).sin());
            let fast = mlp_forward(&spec, &w, x.view()).unwrap();
            let slow = forward_naive(&spec, &w, x.view());
            assert!(max_diff(fast.view(), slow.view()) < 1e-12);
        }
    }

    #[test]
    fn jacobian_linear_scalar_is_input() {
        let spec = MlpSpec::new(vec![3, 1], Activation::Identity).unwrap();
        let w = MlpWeights::init_gaussian(&spec, 2);
        let x = ndarray::arr1(&[0.5, -1.0, 2.0]);
        let j = mlp_jacobian(&spec, &w, x.view()).unwrap();
        assert_eq!(j, arr2(&[[0.5, -1.0, 2.0]]));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for act in [Activation::ReLU, Activation::Tanh, Activation::Identity] {
            for layers in [vec![3, 2], vec![3, 8, 2], vec![3, 6, 5, 2]] {
                let (spec, w) = random_net(layers.clone(), act, 11);
                let x = ndarray::arr1(&[0.4, -0.7, 1.1]);
                let jac = mlp_jacobian(&spec, &w, x.view()).unwrap();
                let h = 1e-5;
                let mut offset = 0;
                let mut max_rel = 0.0_f64;
                for l in 0..spec.n_weight_layers() {
                    let (rows, cols) = (spec.layers[l + 1], spec.layers[l]);
                    for i in 0..rows {
                        for jdx in 0..cols {
                            let mut wp = w.clone();
                            wp.w[l][(i, jdx)] += h;
                            let fp = mlp_forward(&spec, &wp, x.view().insert_axis(ndarray::Axis(1)))
                                .unwrap();
                            let mut wm = w.clone();
                            wm.w[l][(i, jdx)] -= h;
                            let fm = mlp_forward(&spec, &wm, x.view().insert_axis(ndarray::Axis(1)))
                                .unwrap();
                            for a in 0..spec.output_dim() {
                                let fd = (fp[(a, 0)] - fm[(a, 0)]) / (2.0 * h);
                                let an = jac[(a, offset + i * cols + jdx)];
                                let rel = (fd - an).abs() / an.abs().max(1.0);
                                max_rel = max_rel.max(rel);
                            }
                        }
                    }
                    offset += rows * cols;
                }
                assert!(
                    max_rel < 1e-5,
                    "act {act:?} layers {layers:?}: rel {max_rel}"
                );
            }
        }
    }

    #[test]
    fn jacobian_dead_relu_rows_zero() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::ReLU).unwrap();
        let mut w = MlpWeights::zeros(&spec);
        // First hidden unit always negative for positive inputs.
        w.w[0] = arr2(&[[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
        w.w[1] = arr2(&[[1.0, 1.0, 1.0]]);
        let x = ndarray::arr1(&[0.5, 0.7]);
        let j = mlp_jacobian(&spec, &w, x.view()).unwrap();
        // W_0 rows for the dead unit occupy the first two parameter slots.
        assert_eq!(j[(0, 0)], 0.0);
        assert_eq!(j[(0, 1)], 0.0);
        assert!(j[(0, 2)] != 0.0);
    }

    #[test]
    fn ntk_linear_identity_is_linear_kernel() {
        let spec = MlpSpec::new(vec![3, 1], Activation::Identity).unwrap();
        let w = MlpWeights::init_gaussian(&spec, 3);
        let x = Array2::from_shape_fn((3, 6), |(i, j)| ((i + j) as f64 * 0.23).cos());
        let snap = empirical_ntk_gram(&spec, &w, x.view(), NtkMode::TraceAveraged, 0).unwrap();
        let lin = x.t().dot(&x);
        assert!(max_diff(snap.gram(), lin.view()) < 1e-12);
    }

    #[test]
    fn ntk_consistent_with_jacobian_dots() {
        let (spec, w) = random_net(vec![3, 5, 2], Activation::Tanh, 21);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| ((2 * i + j) as f64 * 0.31).sin());
        let per = empirical_ntk_gram(&spec, &w, x.view(), NtkMode::PerOutput, 0).unwrap();
        let avg = empirical_ntk_gram(&spec, &w, x.view(), NtkMode::TraceAveraged, 0).unwrap();
        let jacs: Vec<Array2<f64>> = (0..5)
            .map(|j| mlp_jacobian(&spec, &w, x.column(j)).unwrap())
            .collect();
        for i in 0..5 {
            for j in 0..5 {
                let mut tr = 0.0;
                for a in 0..2 {
                    let d: f64 = jacs[i].row(a).dot(&jacs[j].row(a));
                    assert!(
                        (per.grams()[a][(i, j)] - d).abs() < 1e-10,
                        "per-output mismatch at ({i},{j},{a})"
                    );
                    tr += d;
                }
                assert!((avg.gram()[(i, j)] - tr / 2.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ntk_symmetric_psd_and_deterministic() {
        let (spec, w) = random_net(vec![4, 6, 3], Activation::ReLU, 33);
        let x = Array2::from_shape_fn((4, 8), |(i, j)| ((i * 8 + j) as f64 * 0.13).sin());
        let a = empirical_ntk_gram(&spec, &w, x.view(), NtkMode::TraceAveraged, 0).unwrap();
        let b = empirical_ntk_gram(&spec, &w, x.view(), NtkMode::TraceAveraged, 0).unwrap();
        assert_eq!(a.gram(), b.gram());
        crate::kernel::GramBundle::new(a.gram().to_owned(), 1).unwrap();
    }

    #[test]
    fn ntk_storage_guard() {
        let (spec, w) = random_net(vec![1, 2], Activation::Identity, 1);
        let x = Array2::zeros((1, NTK_STORAGE_LIMIT + 1));
        assert!(matches!(
            empirical_ntk_gram(&spec, &w, x.view(), NtkMode::TraceAveraged, 0),
            Err(Error::StorageGuard { .. })
        ));
    }

    #[test]
    fn plain_training_matches_sgd_run_bit_exact() {
        // Linear net, no hidden layer: the training loop must reproduce the
        // explicit-feature SGD run exactly.
        let spec = MlpSpec::new(vec![3, 2], Activation::Identity).unwrap();
        let x = Array2::from_shape_fn((3, 17), |(i, j)| ((i * 17 + j) as f64 * 0.19).sin());
        let y = Array2::from_shape_fn((2, 17), |(i, j)| ((i * 17 + j) as f64 * 0.07).cos());
        let data = OrderedDataset::new(x, y).unwrap();
        let hp = HyperParams {
            eta: 0.05,
            gamma: 1.0,
            gamma_o: 0.0,
            block: 4,
            seed: 0,
        };
        let setup = TrainSetup {
            hp: hp.clone(),
            correction: CorrectionMode::None,
            init: WeightInit::Zeros,
            ..TrainSetup::default()
        };
        let (_, w) = train_corrected(&spec, &data, &[], &data, &setup).unwrap();
        let kernel = KernelSpec::linear(3);
        let opts = crate::regression::SgdOptions {
            batch: 4,
            ..Default::default()
        };
        let run = crate::regression::sgd_run(&kernel, &data, hp.eta, 0.0, &opts, None).unwrap();
        assert_eq!(w.layer(0), run.final_state.w.view());
    }

    #[test]
    fn metrics_csv_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = vec![
            MetricsRecord {
                step: 16,
                task_id: 0,
                epoch: 0,
                train_mse: 0.5,
                test_mse: 0.75,
                test_accuracy: Some(0.25),
            },
            MetricsRecord {
                step: 32,
                task_id: 1,
                epoch: 0,
                train_mse: 0.25,
                test_mse: 0.5,
                test_accuracy: None,
            },
        ];
        export_metrics_csv(&path, &records).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "step,task_id,epoch,train_mse,test_mse,test_accuracy");
        assert_eq!(lines[1], "16,0,0,0.5,0.75,0.25");
        assert_eq!(lines[2], "32,1,0,0.25,0.5,");
    }
}
