//! Offline kernel ridge regression, streaming SGD in explicit feature space,
//! and the closed-form predictors that reproduce the streaming runs exactly.
//!
//! The closed forms never build an inverse: the symmetric system goes through
//! a Cholesky factor and the directional systems through back-substitution.
//! Divergent settings (large η) are representable on purpose; the closed form
//! tracks the iterative run wherever the arithmetic stays finite.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, decay_diag, directional_mask, FeatureMap, KernelSpec};
use crate::linalg::{right_solve_upper_triangular, spd_right_solve, ColBuffer};
use crate::shift::TargetMatrix;

/// A sample sequence whose column order is the presentation order.
#[derive(Debug, Clone)]
pub struct OrderedDataset {
    x: Array2<f64>,
    y: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl OrderedDataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch {
                context: "OrderedDataset",
                expected: format!("{} target columns", x.ncols()),
                actual: format!("{}", y.ncols()),
            });
        }
        Ok(OrderedDataset { x, y, labels: None })
    }

    pub fn with_labels(x: Array2<f64>, y: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "OrderedDataset labels",
                expected: format!("{}", x.ncols()),
                actual: format!("{}", labels.len()),
            });
        }
        let mut d = OrderedDataset::new(x, y)?;
        d.labels = Some(labels);
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// First `n` samples in presentation order.
    pub fn prefix(&self, n: usize) -> OrderedDataset {
        OrderedDataset {
            x: self.x.slice(s![.., ..n]).to_owned(),
            y: self.y.slice(s![.., ..n]).to_owned(),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
        }
    }

    /// New dataset with columns picked by `indices` (reordering creates a
    /// different presentation order by construction).
    pub fn select(&self, indices: &[usize]) -> OrderedDataset {
        let pick = |a: &Array2<f64>| {
            let mut out = Array2::zeros((a.nrows(), indices.len()));
            for (j, &i) in indices.iter().enumerate() {
                out.column_mut(j).assign(&a.column(i));
            }
            out
        };
        OrderedDataset {
            x: pick(&self.x),
            y: pick(&self.y),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Concatenate `epochs` copies; multi-epoch streams are modeled as the
    /// repeated sequence so the closed forms apply verbatim.
    pub fn repeat(&self, epochs: usize) -> OrderedDataset {
        let n = self.len();
        let mut x = Array2::zeros((self.input_dim(), n * epochs));
        let mut y = Array2::zeros((self.output_dim(), n * epochs));
        for e in 0..epochs {
            x.slice_mut(s![.., e * n..(e + 1) * n]).assign(&self.x);
            y.slice_mut(s![.., e * n..(e + 1) * n]).assign(&self.y);
        }
        OrderedDataset {
            x,
            y,
            labels: self.labels.as_ref().map(|l| l.repeat(epochs)),
        }
    }
}

/// Learning-rate, ridge, correction-Tikhonov, block size, and seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub eta: f64,
    pub gamma: f64,
    pub gamma_o: f64,
    pub block: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta: 0.5,
            gamma: 1.0,
            gamma_o: 0.0,
            block: 1,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("must be > 0, got {}", self.eta),
            });
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be >= 0, got {}", self.gamma),
            });
        }
        if self.gamma_o < 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma_o",
                reason: format!("must be >= 0, got {}", self.gamma_o),
            });
        }
        if self.block == 0 {
            return Err(Error::InvalidParameter {
                name: "block",
                reason: "must be >= 1".to_string(),
            });
        }
        Ok(())
    }
}

/// Weight matrix of the explicit-feature learner plus its step counter.
#[derive(Debug, Clone)]
pub struct WeightState {
    pub w: Array2<f64>,
    pub step: usize,
}

impl WeightState {
    pub fn zeros(output_dim: usize, feature_dim: usize) -> Self {
        WeightState {
            w: Array2::zeros((output_dim, feature_dim)),
            step: 0,
        }
    }
}

/// An evaluable predictor in one of the four closed forms.
#[derive(Clone)]
pub enum Predictor {
    Offline {
        kernel: KernelSpec,
        x: Array2<f64>,
        y: Array2<f64>,
        gamma: f64,
    },
    OnlineClosedForm {
        kernel: KernelSpec,
        x: Array2<f64>,
        y: Array2<f64>,
        eta: f64,
        gamma: f64,
    },
    MinibatchClosedForm {
        kernel: KernelSpec,
        x: Array2<f64>,
        y: Array2<f64>,
        eta: f64,
        block: usize,
    },
    ExplicitWeights {
        w: Array2<f64>,
        map: Arc<dyn FeatureMap>,
    },
}

impl std::fmt::Debug for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Predictor::Offline { gamma, x, .. } => {
                write!(f, "Offline {{ n: {}, gamma: {gamma} }}", x.ncols())
            }
            Predictor::OnlineClosedForm { eta, gamma, x, .. } => write!(
                f,
                "OnlineClosedForm {{ n: {}, eta: {eta}, gamma: {gamma} }}",
                x.ncols()
            ),
            Predictor::MinibatchClosedForm { eta, block, x, .. } => write!(
                f,
                "MinibatchClosedForm {{ n: {}, eta: {eta}, block: {block} }}",
                x.ncols()
            ),
            Predictor::ExplicitWeights { w, .. } => {
                write!(f, "ExplicitWeights {{ {}x{} }}", w.nrows(), w.ncols())
            }
        }
    }
}

impl Predictor {
    /// Evaluate the predictor at the columns of `x_star`.
    pub fn predict(&self, x_star: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Predictor::Offline { kernel, x, y, gamma } => {
                offline_predict(kernel, x.view(), y.view(), *gamma, x_star)
            }
            Predictor::OnlineClosedForm {
                kernel,
                x,
                y,
                eta,
                gamma,
            } => online_closed_form(kernel, x.view(), y.view(), *eta, *gamma, x_star),
            Predictor::MinibatchClosedForm {
                kernel,
                x,
                y,
                eta,
                block,
            } => minibatch_closed_form(kernel, x.view(), y.view(), *eta, *block, x_star),
            Predictor::ExplicitWeights { w, map } => Ok(w.dot(&map.map_batch(x_star))),
        }
    }
}

/// Dual row-coefficients A with f(x*) = A·k(X, x*) for the offline ridge
/// predictor: A = Y (γI + K)⁻¹.
pub fn offline_dual(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    gamma: f64,
) -> Result<Array2<f64>> {
    check_xy("offline_predict", x, y)?;
    if gamma < 0.0 {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must be >= 0, got {gamma}"),
        });
    }
    let n = x.ncols();
    let k = kernel::gram_self(kernel, x)?;
    let a = &k + &(Array2::<f64>::eye(n) * gamma);
    spd_right_solve("offline_predict", y, a.view())
}

/// Offline ridge prediction `Y (γI + K)⁻¹ k(X, X*)`.
pub fn offline_predict(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    gamma: f64,
    x_star: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if x.ncols() == 0 {
        return Ok(Array2::zeros((y.nrows(), x_star.ncols())));
    }
    let dual = offline_dual(kernel, x, y, gamma)?;
    let cross = kernel::gram(kernel, x, x_star)?;
    Ok(dual.dot(&cross))
}

/// Dual row-coefficients of the online closed form,
/// `Y·D_n·(1/η I + K^U/(1-ηγ))⁻¹`; γ = 0 drops the decay diagonal.
pub fn online_dual(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
    gamma: f64,
) -> Result<Array2<f64>> {
    check_xy("online_closed_form", x, y)?;
    check_eta(eta)?;
    let shrink = 1.0 - eta * gamma;
    if shrink.abs() < 1e-12 {
        return Err(Error::DegenerateDecay);
    }
    let n = x.ncols();
    if n == 0 {
        return Ok(Array2::zeros((y.nrows(), 0)));
    }
    let k = kernel::gram_self(kernel, x)?;
    let ku = directional_mask(k.view(), 1)?;
    let mut a = ku;
    if gamma != 0.0 {
        a.mapv_inplace(|v| v / shrink);
    }
    for i in 0..n {
        a[(i, i)] = 1.0 / eta;
    }
    let scaled = if gamma == 0.0 {
        y.to_owned()
    } else {
        decay_diag(n, eta, gamma).scale_columns(y)
    };
    Ok(right_solve_upper_triangular(scaled.view(), a.view()))
}

/// Closed form for the sample-by-sample online run (weight decay ηγ per step):
/// `Y D_n (1/η I + K^U/(1-ηγ))⁻¹ k(X, X*)`.
pub fn online_closed_form(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
    gamma: f64,
    x_star: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if x.ncols() == 0 {
        check_eta(eta)?;
        return Ok(Array2::zeros((y.nrows(), x_star.ncols())));
    }
    let dual = online_dual(kernel, x, y, eta, gamma)?;
    let cross = kernel::gram(kernel, x, x_star)?;
    Ok(dual.dot(&cross))
}

/// Dual row-coefficients of the mini-batch closed form `Y (1/η I + K^bU)⁻¹`
/// (no L2 term in this form).
pub fn minibatch_dual(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
    block: usize,
) -> Result<Array2<f64>> {
    check_xy("minibatch_closed_form", x, y)?;
    check_eta(eta)?;
    let n = x.ncols();
    if n == 0 {
        return Ok(Array2::zeros((y.nrows(), 0)));
    }
    let k = kernel::gram_self(kernel, x)?;
    let mut a = directional_mask(k.view(), block)?;
    for i in 0..n {
        a[(i, i)] = 1.0 / eta;
    }
    Ok(right_solve_upper_triangular(y, a.view()))
}

/// Closed form for the mini-batch run: `Y (1/η I + K^bU)⁻¹ K(X, X*)`.
pub fn minibatch_closed_form(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
    block: usize,
    x_star: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if x.ncols() == 0 {
        check_eta(eta)?;
        return Ok(Array2::zeros((y.nrows(), x_star.ncols())));
    }
    let dual = minibatch_dual(kernel, x, y, eta, block)?;
    let cross = kernel::gram(kernel, x, x_star)?;
    Ok(dual.dot(&cross))
}

/// Options for [`sgd_run`].
#[derive(Debug, Clone)]
pub struct SgdOptions {
    /// Consecutive chunk size; 1 is sample-by-sample.
    pub batch: usize,
    /// Initial weights; defaults to zeros.
    pub w_init: Option<Array2<f64>>,
    /// Record the weight state after every update (memory n·d_y·d_φ).
    pub record_trajectory: bool,
}

impl Default for SgdOptions {
    fn default() -> Self {
        SgdOptions {
            batch: 1,
            w_init: None,
            record_trajectory: false,
        }
    }
}

/// Result of a streaming SGD pass.
#[derive(Debug, Clone)]
pub struct SgdRun {
    /// Weight states after each update, when recording was requested.
    pub trajectory: Vec<WeightState>,
    pub final_state: WeightState,
    pub predictor: Predictor,
}

/// Single pass of (mini-batch) SGD in explicit feature space:
/// `W ← W - η((WΦ_c - Y_c)Φ_cᵀ + γW)` per consecutive chunk, gradients
/// summed over the chunk. `targets_override` replaces Y column-for-column.
pub fn sgd_run(
    kernel: &KernelSpec,
    data: &OrderedDataset,
    eta: f64,
    gamma: f64,
    opts: &SgdOptions,
    targets_override: Option<&TargetMatrix>,
) -> Result<SgdRun> {
    check_eta(eta)?;
    if opts.batch == 0 {
        return Err(Error::InvalidParameter {
            name: "batch",
            reason: "must be >= 1".to_string(),
        });
    }
    let map = feature_map_arc(kernel)?;
    let phi = map.map_batch(data.x());
    let y = match targets_override {
        Some(t) => {
            if t.values().ncols() != data.len() || t.values().nrows() != data.output_dim() {
                return Err(Error::DimensionMismatch {
                    context: "targets_override",
                    expected: format!("{}x{}", data.output_dim(), data.len()),
                    actual: format!("{}x{}", t.values().nrows(), t.values().ncols()),
                });
            }
            t.values().to_owned()
        }
        None => data.y().to_owned(),
    };
    let d_phi = map.feature_dim();
    let d_y = data.output_dim();
    let mut w = match &opts.w_init {
        Some(w0) => {
            if w0.nrows() != d_y || w0.ncols() != d_phi {
                return Err(Error::DimensionMismatch {
                    context: "sgd w_init",
                    expected: format!("{d_y}x{d_phi}"),
                    actual: format!("{}x{}", w0.nrows(), w0.ncols()),
                });
            }
            w0.clone()
        }
        None => Array2::zeros((d_y, d_phi)),
    };
    let n = data.len();
    let mut trajectory = Vec::new();
    let mut step = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + opts.batch).min(n);
        let phi_c = phi.slice(s![.., start..end]);
        let y_c = y.slice(s![.., start..end]);
        let resid = w.dot(&phi_c) - &y_c;
        let grad = resid.dot(&phi_c.t());
        if gamma == 0.0 {
            w = w - grad.mapv(|v| eta * v);
        } else {
            w = &w - &((grad + &w * gamma) * eta);
        }
        step += 1;
        if opts.record_trajectory {
            trajectory.push(WeightState { w: w.clone(), step });
        }
        start = end;
    }
    let final_state = WeightState { w: w.clone(), step };
    let predictor = Predictor::ExplicitWeights { w, map };
    Ok(SgdRun {
        trajectory,
        final_state,
        predictor,
    })
}

/// Online dual coefficients maintained one sample at a time (γ = 0 stream),
/// O(n) per push. Equivalent to `online_dual` with γ = 0 at every prefix.
#[derive(Debug, Clone)]
pub struct OnlineDualTracker {
    kernel: KernelSpec,
    eta: f64,
    x: ColBuffer,
    dual: ColBuffer,
}

impl OnlineDualTracker {
    pub fn new(kernel: KernelSpec, eta: f64, input_dim: usize, output_dim: usize) -> Result<Self> {
        check_eta(eta)?;
        Ok(OnlineDualTracker {
            kernel,
            eta,
            x: ColBuffer::new(input_dim),
            dual: ColBuffer::new(output_dim),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Online prediction of the current model at `x_star` columns.
    pub fn predict(&self, x_star: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.is_empty() {
            return Ok(Array2::zeros((self.dual.dim(), x_star.ncols())));
        }
        let cross = kernel::gram(&self.kernel, self.x.view(), x_star)?;
        Ok(self.dual.view().dot(&cross))
    }

    /// Consume one sample; returns the pre-update residual
    /// `f_on(x) - y` of the model on that sample.
    pub fn push(&mut self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x2 = x.insert_axis(Axis(1));
        let f = self.predict(x2)?;
        let e = f.index_axis_move(Axis(1), 0) - &y;
        self.x.push(x);
        self.dual.push(e.mapv(|v| -self.eta * v).view());
        Ok(e)
    }

    pub fn dual(&self) -> ArrayView2<'_, f64> {
        self.dual.view()
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

pub(crate) fn feature_map_arc(kernel: &KernelSpec) -> Result<Arc<dyn FeatureMap>> {
    match kernel {
        KernelSpec::RandomFeatureTanh(t) => Ok(Arc::new(t.clone())),
        KernelSpec::ExplicitFeature(m) => Ok(m.clone()),
        other => Err(Error::ExplicitFeaturesRequired {
            kind: other.kind_name(),
        }),
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("must be > 0, got {eta}"),
        });
    }
    Ok(())
}

fn check_xy(context: &'static str, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: format!("{} target columns", x.ncols()),
            actual: format!("{}", y.ncols()),
        });
    }
    Ok(())
}
