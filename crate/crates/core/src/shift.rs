//! Effective targets: the labels an offline learner would need to reproduce
//! an online run exactly, `Y^e = Y (1/η I + K^U)⁻¹ (γI + K)`, plus their
//! one-step dynamics.
//!
//! The γ here parameterizes the offline baseline being mimicked; the online
//! side of the equivalence always runs without weight decay. Callers pass
//! both so the asymmetry stays explicit.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::linalg::ColBuffer;
use crate::regression::{self, OnlineDualTracker, OrderedDataset};

/// Where a target matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    True,
    Effective,
    Corrected,
    IterativeCorrected,
}

impl Provenance {
    /// Column prefix used in CSV exports.
    pub fn column_prefix(&self) -> &'static str {
        match self {
            Provenance::True => "y_true",
            Provenance::Effective => "y_eff",
            Provenance::Corrected => "y_corr",
            Provenance::IterativeCorrected => "y_iter",
        }
    }
}

/// d_y × n targets with a provenance tag.
#[derive(Debug, Clone)]
pub struct TargetMatrix {
    values: Array2<f64>,
    provenance: Provenance,
}

impl TargetMatrix {
    pub fn new(values: Array2<f64>, provenance: Provenance) -> Self {
        TargetMatrix { values, provenance }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Effective targets `Y^e = Y (1/η I + K^U)⁻¹ (γI + K)`.
pub fn effective_targets(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
    gamma: f64,
) -> Result<TargetMatrix> {
    let n = x.ncols();
    let dual = regression::online_dual(kernel, x, y, eta, 0.0)?;
    let k = kernel::gram_self(kernel, x)?;
    let reg = &k + &(Array2::<f64>::eye(n) * gamma);
    Ok(TargetMatrix::new(dual.dot(&reg), Provenance::Effective))
}

/// Prediction error of the online predictor on a fresh sample:
/// `e = f_on(x_new; X, Y) - y_new` with the γ = 0 closed form. An empty
/// history predicts zero.
pub fn online_residual(
    kernel: &KernelSpec,
    x_hist: ArrayView2<f64>,
    y_hist: ArrayView2<f64>,
    eta: f64,
    x_new: ArrayView1<f64>,
    y_new: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let x_star = x_new.insert_axis(Axis(1));
    let f = regression::online_closed_form(kernel, x_hist, y_hist, eta, 0.0, x_star)?;
    Ok(f.index_axis_move(Axis(1), 0) - &y_new)
}

/// One-step update of the effective targets when sample (x_new, y_new)
/// arrives with online residual `e`:
/// old columns shift by -η·e·k(x_new, xᵢ); the new column is
/// y_new - (η(γ + k_new) - 1)·e.
pub fn shift_one_step(
    prev: &TargetMatrix,
    kernel: &KernelSpec,
    x_hist: ArrayView2<f64>,
    x_new: ArrayView1<f64>,
    y_new: ArrayView1<f64>,
    residual: ArrayView1<f64>,
    eta: f64,
    gamma: f64,
) -> Result<TargetMatrix> {
    let n = x_hist.ncols();
    if prev.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "shift_one_step",
            expected: format!("{n} effective-target columns"),
            actual: format!("{}", prev.ncols()),
        });
    }
    let d_y = prev.output_dim();
    let mut out = Array2::zeros((d_y, n + 1));
    let x_new2 = x_new.insert_axis(Axis(1));
    let cross = kernel::gram(kernel, x_hist, x_new2)?; // n × 1
    for i in 0..n {
        let kni = cross[(i, 0)];
        for r in 0..d_y {
            out[(r, i)] = prev.values()[(r, i)] - eta * residual[r] * kni;
        }
    }
    let k_new = kernel::eval_kernel(kernel, x_new, x_new)?;
    let coeff = eta * (gamma + k_new) - 1.0;
    for r in 0..d_y {
        out[(r, n)] = y_new[r] - coeff * residual[r];
    }
    Ok(TargetMatrix::new(out, Provenance::Effective))
}

/// Streaming effective-target state: O(n) per sample, matching the batch
/// formula at every prefix. Single-owner; send between threads, don't share.
#[derive(Debug, Clone)]
pub struct ShiftTracker {
    gamma: f64,
    tracker: OnlineDualTracker,
    effective: ColBuffer,
    y_true: ColBuffer,
}

impl ShiftTracker {
    pub fn new(
        kernel: KernelSpec,
        eta: f64,
        gamma: f64,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        Ok(ShiftTracker {
            gamma,
            tracker: OnlineDualTracker::new(kernel, eta, input_dim, output_dim)?,
            effective: ColBuffer::new(output_dim),
            y_true: ColBuffer::new(output_dim),
        })
    }

    pub fn len(&self) -> usize {
        self.tracker.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<()> {
        let kernel = self.tracker.kernel().clone();
        let eta = self.tracker.eta();
        let x_hist = self.tracker.inputs().to_owned();
        let cross = if self.is_empty() {
            Array2::zeros((0, 1))
        } else {
            kernel::gram(&kernel, x_hist.view(), x.insert_axis(Axis(1)))?
        };
        // Residual from the dual tracker; pushing also extends the dual.
        let e = self.tracker.push(x, y)?;
        let d_y = self.effective.dim();
        let n = self.effective.len();
        {
            let mut eff = self.effective.view_mut();
            for i in 0..n {
                let kni = cross[(i, 0)];
                for r in 0..d_y {
                    eff[(r, i)] -= eta * e[r] * kni;
                }
            }
        }
        let k_new = kernel::eval_kernel(&kernel, x, x)?;
        let coeff = eta * (self.gamma + k_new) - 1.0;
        let new_col = Array1::from_shape_fn(d_y, |r| y[r] - coeff * e[r]);
        self.effective.push(new_col.view());
        self.y_true.push(y);
        Ok(())
    }

    pub fn effective(&self) -> TargetMatrix {
        TargetMatrix::new(self.effective.to_array(), Provenance::Effective)
    }

    /// Current online prediction (γ = 0 closed form) at `x_star` columns.
    pub fn online_prediction(&self, x_star: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.tracker.predict(x_star)
    }
}

/// Write `index, y_true…, <prefix>…` rows for side-by-side target plots.
/// The prefix column names follow the provenance of `targets`.
pub fn export_targets_csv(
    path: impl AsRef<Path>,
    data: &OrderedDataset,
    targets: &TargetMatrix,
) -> Result<()> {
    let path = path.as_ref();
    if targets.ncols() != data.len() || targets.output_dim() != data.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "export_targets_csv",
            expected: format!("{}x{}", data.output_dim(), data.len()),
            actual: format!("{}x{}", targets.output_dim(), targets.ncols()),
        });
    }
    let mut out = String::new();
    out.push_str("index");
    for r in 0..data.output_dim() {
        out.push_str(&format!(",y_true_{r}"));
    }
    let prefix = targets.provenance().column_prefix();
    for r in 0..data.output_dim() {
        out.push_str(&format!(",{prefix}_{r}"));
    }
    out.push('\n');
    for i in 0..data.len() {
        out.push_str(&format!("{i}"));
        for r in 0..data.output_dim() {
            out.push_str(&format!(",{}", data.y()[(r, i)]));
        }
        for r in 0..data.output_dim() {
            out.push_str(&format!(",{}", targets.values()[(r, i)]));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
