//! Corrected targets: the labels an online learner must train on to land
//! exactly on the offline ridge predictor, `Y^c = Y (γI + K)⁻¹ (1/η I + K^U)`,
//! their one-step dynamics, and the causal block-wise approximation that only
//! ever sees past data plus the current chunk.
//!
//! Two independent routes compute the block correction: the coefficient form
//! (`iterative_correction`) and the block-matrix form
//! (`iterative_correction_bcg_oracle`). They must agree; the oracle exists
//! for that cross-check and is exercised by the equivalence report.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernel::{self, directional_mask, KernelSpec};
use crate::linalg::{
    right_solve_lower_triangular, right_solve_upper_triangular, solve_upper_triangular,
    spd_right_solve, spd_solve, CholeskyFactor, ColBuffer,
};
use crate::regression::HyperParams;
use crate::shift::{Provenance, TargetMatrix};

/// Exact corrected targets `Y^c = Y (γI + K)⁻¹ (1/η I + K^U)`.
pub fn corrected_targets(
    kernel: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    eta: f64,
    gamma: f64,
) -> Result<TargetMatrix> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("must be > 0, got {eta}"),
        });
    }
    let n = x.ncols();
    let k = kernel::gram_self(kernel, x)?;
    let reg = &k + &(Array2::<f64>::eye(n) * gamma);
    let dual = spd_right_solve("corrected_targets", y, reg.view())?;
    let mut a = directional_mask(k.view(), 1)?;
    for i in 0..n {
        a[(i, i)] = 1.0 / eta;
    }
    Ok(TargetMatrix::new(dual.dot(&a), Provenance::Corrected))
}

/// One-step update of the corrected targets on arrival of (x_new, y_new).
///
/// Uses the offline residual `e_off = f_off(x_new; X, Y) - y_new` and the
/// Schur data q = k(x_new,X)(γI+K)⁻¹k(X,x_new):
/// old columns gain ρ·e_off·[k(x_new,X)·C_K]ᵢ, the new column is
/// y_new + c_q·e_off with c_q = (γ + k_new - 1/η)/(γ + k_new - q).
pub fn correction_one_step(
    prev: &TargetMatrix,
    kernel: &KernelSpec,
    x_hist: ArrayView2<f64>,
    y_hist: ArrayView2<f64>,
    x_new: ArrayView1<f64>,
    y_new: ArrayView1<f64>,
    eta: f64,
    gamma: f64,
) -> Result<TargetMatrix> {
    let n = x_hist.ncols();
    if prev.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "correction_one_step",
            expected: format!("{n} corrected-target columns"),
            actual: format!("{}", prev.ncols()),
        });
    }
    let d_y = prev.output_dim();
    let k_new = kernel::eval_kernel(kernel, x_new, x_new)?;
    let (q, e_off, v) = if n == 0 {
        (0.0, y_new.mapv(|t| -t), Array1::zeros(0))
    } else {
        let k = kernel::gram_self(kernel, x_hist)?;
        let reg = &k + &(Array2::<f64>::eye(n) * gamma);
        let cross = kernel::gram(kernel, x_hist, x_new.insert_axis(Axis(1)))?;
        let a = spd_solve("correction_one_step", reg.view(), cross.view())?;
        let a = a.index_axis_move(Axis(1), 0);
        let q = cross.column(0).dot(&a);
        let f_off = y_hist.dot(&a);
        let e_off = &f_off - &y_new;
        // v = aᵀ(1/η I + K^U): row weights for the past-column updates.
        let ku = directional_mask(k.view(), 1)?;
        let v = a.mapv(|t| t / eta) + ku.t().dot(&a);
        (q, e_off, v)
    };
    let denom = gamma + k_new - q;
    if denom <= 1e-12 * (gamma + k_new).abs().max(1.0) {
        return Err(Error::DegenerateSchur { value: denom });
    }
    let rho = 1.0 / denom;
    let c_q = (gamma + k_new - 1.0 / eta) * rho;
    let mut out = Array2::zeros((d_y, n + 1));
    for i in 0..n {
        for r in 0..d_y {
            out[(r, i)] = prev.values()[(r, i)] + rho * e_off[r] * v[i];
        }
    }
    for r in 0..d_y {
        out[(r, n)] = y_new[r] + c_q * e_off[r];
    }
    Ok(TargetMatrix::new(out, Provenance::Corrected))
}

/// A frozen optimization step: past inputs with their emitted targets, plus
/// one new block. True targets beyond the new block never enter.
#[derive(Debug, Clone)]
pub struct CorrectionStep {
    z_past: Array2<f64>,
    x_past: Array2<f64>,
    x_new: Array2<f64>,
    y_past: Array2<f64>,
    y_new: Array2<f64>,
    hp: HyperParams,
}

impl CorrectionStep {
    pub fn new(
        z_past: Array2<f64>,
        x_past: Array2<f64>,
        x_new: Array2<f64>,
        y_past: Array2<f64>,
        y_new: Array2<f64>,
        hp: HyperParams,
    ) -> Result<Self> {
        hp.validate()?;
        let n_p = x_past.ncols();
        if z_past.ncols() != n_p || y_past.ncols() != n_p {
            return Err(Error::DimensionMismatch {
                context: "CorrectionStep past",
                expected: format!("{n_p} columns"),
                actual: format!("z {} / y {}", z_past.ncols(), y_past.ncols()),
            });
        }
        if x_new.ncols() != y_new.ncols() || x_new.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "CorrectionStep new block",
                expected: format!("{} nonzero columns", x_new.ncols()),
                actual: format!("{}", y_new.ncols()),
            });
        }
        if hp.block > 1 && n_p % hp.block != 0 {
            return Err(Error::InvalidParameter {
                name: "block",
                reason: format!(
                    "past size {n_p} must sit on the block grid (block = {})",
                    hp.block
                ),
            });
        }
        Ok(CorrectionStep {
            z_past,
            x_past,
            x_new,
            y_past,
            y_new,
            hp,
        })
    }

    pub fn empty_past(x_new: Array2<f64>, y_new: Array2<f64>, hp: HyperParams) -> Result<Self> {
        let d_x = x_new.nrows();
        let d_y = y_new.nrows();
        CorrectionStep::new(
            Array2::zeros((d_y, 0)),
            Array2::zeros((d_x, 0)),
            x_new,
            Array2::zeros((d_y, 0)),
            y_new,
            hp,
        )
    }

    pub fn has_past(&self) -> bool {
        self.x_past.ncols() > 0
    }

    pub fn z_past(&self) -> ArrayView2<'_, f64> {
        self.z_past.view()
    }

    pub fn x_past(&self) -> ArrayView2<'_, f64> {
        self.x_past.view()
    }

    pub fn x_new(&self) -> ArrayView2<'_, f64> {
        self.x_new.view()
    }

    pub fn y_past(&self) -> ArrayView2<'_, f64> {
        self.y_past.view()
    }

    pub fn y_new(&self) -> ArrayView2<'_, f64> {
        self.y_new.view()
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }
}

/// Coefficients of the block correction; `gamma_o` is the effective Tikhonov
/// weight after the conditioning fallback, and enters the block loss too.
#[derive(Debug, Clone)]
pub struct CorrectionCoefficients {
    pub c_on: Array2<f64>,
    pub c_off: Array2<f64>,
    pub q: Array2<f64>,
    pub gamma_o: f64,
}

/// Effective γ_o and the factor of (γ_o I + K_nn). With γ_o = 0 a jitter of
/// 1e-8·trace(K_nn)/b kicks in when K_nn is singular or its condition
/// estimate exceeds 1e10.
fn resolve_gamma_o(hp: &HyperParams, k_nn: ArrayView2<f64>) -> Result<(f64, CholeskyFactor)> {
    let b = k_nn.nrows();
    let with = |g: f64| -> Result<CholeskyFactor> {
        let m = &k_nn.to_owned() + &(Array2::<f64>::eye(b) * g);
        CholeskyFactor::decompose(m.view())
    };
    if hp.gamma_o > 0.0 {
        return Ok((hp.gamma_o, with(hp.gamma_o).map_err(|_| Error::SingularCorrectionBlock)?));
    }
    match with(0.0) {
        Ok(f) if f.cond_estimate() <= 1e10 => Ok((0.0, f)),
        _ => {
            let trace: f64 = (0..b).map(|i| k_nn[(i, i)]).sum();
            let jitter = 1e-8 * trace / b as f64;
            let f = with(jitter).map_err(|_| Error::SingularCorrectionBlock)?;
            Ok((jitter, f))
        }
    }
}

fn schur_and_offline(
    kernel: &KernelSpec,
    step: &CorrectionStep,
    k_nn: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let gamma = step.hp.gamma;
    let b = k_nn.nrows();
    if !step.has_past() {
        let q = k_nn + &(Array2::<f64>::eye(b) * gamma);
        return Ok((q, Array2::zeros((step.y_new.nrows(), b))));
    }
    let n_p = step.x_past.ncols();
    let k_pp = kernel::gram_self(kernel, step.x_past())?;
    let k_pn = kernel::gram(kernel, step.x_past(), step.x_new())?;
    let reg = &k_pp + &(Array2::<f64>::eye(n_p) * gamma);
    let s = spd_solve("iterative_correction past", reg.view(), k_pn.view())?;
    let q = k_nn + &(Array2::<f64>::eye(b) * gamma) - &k_pn.t().dot(&s);
    let f_off = step.y_past().dot(&s);
    Ok((q, f_off))
}

fn correction_from_parts(
    hp: &HyperParams,
    k_nn: &Array2<f64>,
    q: Array2<f64>,
    y_new: ArrayView2<f64>,
    f_on_new: ArrayView2<f64>,
    f_off_new: ArrayView2<f64>,
) -> Result<(Array2<f64>, CorrectionCoefficients)> {
    let b = k_nn.nrows();
    let (gamma_o, chol_nn) = resolve_gamma_o(hp, k_nn.view())?;
    let mut t = directional_mask(k_nn.view(), hp.block.min(b))?;
    for i in 0..b {
        t[(i, i)] = 1.0 / hp.eta;
    }
    let m = chol_nn.solve(t.view());
    let c_on = &m - &Array2::<f64>::eye(b);
    let chol_q = CholeskyFactor::decompose(q.view()).map_err(|_| Error::SingularSchurBlock)?;
    let c_off = chol_q.solve(m.view()).mapv(|v| hp.gamma * v);
    let z = &y_new.to_owned()
        + &(&y_new.to_owned() - &f_on_new).dot(&c_on)
        + (&f_off_new.to_owned() - &y_new).dot(&c_off);
    Ok((
        z,
        CorrectionCoefficients {
            c_on,
            c_off,
            q,
            gamma_o,
        },
    ))
}

/// Block correction in coefficient form:
/// `Z_new = Y_new + (Y_new - f_on)·C_on + (f_off - Y_new)·C_off`.
///
/// `f_on_new` must be the online prediction on the new block from
/// (X_past, Z_past) — closed form in kernel mode, live-model output in NTK
/// mode — and `f_off_new` the offline prediction from (X_past, Y_past).
/// The directional matrix inside the coefficients uses `hp.block`, so
/// mini-batch runs substitute K^bU for K^U.
pub fn iterative_correction(
    kernel: &KernelSpec,
    step: &CorrectionStep,
    f_on_new: ArrayView2<f64>,
    f_off_new: ArrayView2<f64>,
) -> Result<(Array2<f64>, CorrectionCoefficients)> {
    let b = step.x_new.ncols();
    if f_on_new.ncols() != b || f_off_new.ncols() != b {
        return Err(Error::DimensionMismatch {
            context: "iterative_correction predictions",
            expected: format!("{b} columns"),
            actual: format!("on {} / off {}", f_on_new.ncols(), f_off_new.ncols()),
        });
    }
    let k_nn = kernel::gram_self(kernel, step.x_new())?;
    let (q, _) = schur_and_offline(kernel, step, &k_nn)?;
    correction_from_parts(&step.hp, &k_nn, q, step.y_new(), f_on_new, f_off_new)
}

/// Offline prediction on the new block from the past under `kernel`,
/// `Y_p (γI + K_pp)⁻¹ K_pn`; zero when the past is empty.
pub fn step_offline_prediction(kernel: &KernelSpec, step: &CorrectionStep) -> Result<Array2<f64>> {
    let k_nn = kernel::gram_self(kernel, step.x_new())?;
    let (_, f_off) = schur_and_offline(kernel, step, &k_nn)?;
    Ok(f_off)
}

/// Online prediction on the new block from (X_past, Z_past) under `kernel`,
/// `Z_p (1/η I + K^bU_pp)⁻¹ K_pn`; zero when the past is empty.
pub fn step_online_prediction(kernel: &KernelSpec, step: &CorrectionStep) -> Result<Array2<f64>> {
    if !step.has_past() {
        return Ok(Array2::zeros((step.y_new.nrows(), step.x_new.ncols())));
    }
    let dual = crate::regression::minibatch_dual(
        kernel,
        step.x_past(),
        step.z_past(),
        step.hp.eta,
        step.hp.block.min(step.x_past.ncols()),
    )?;
    let k_pn = kernel::gram(kernel, step.x_past(), step.x_new())?;
    Ok(dual.dot(&k_pn))
}

/// Independent route to the same block correction through the block matrices
/// B, C, G: `Z_new = (G - Z_past·B)·C⁻¹`. Exists as a cross-check.
pub fn iterative_correction_bcg_oracle(
    kernel: &KernelSpec,
    step: &CorrectionStep,
) -> Result<Array2<f64>> {
    let hp = &step.hp;
    let b = step.x_new.ncols();
    let k_nn = kernel::gram_self(kernel, step.x_new())?;
    let (gamma_o, _) = resolve_gamma_o(hp, k_nn.view())?;
    let r = &k_nn + &(Array2::<f64>::eye(b) * gamma_o);
    let mut a_unn = directional_mask(k_nn.view(), hp.block.min(b))?;
    for i in 0..b {
        a_unn[(i, i)] = 1.0 / hp.eta;
    }
    let a_lnn = a_unn.t().to_owned();
    // C = A_unn⁻¹ (γ_o I + K_nn) A_lnn⁻¹
    let w = solve_upper_triangular(a_unn.view(), r.view());
    let c = right_solve_lower_triangular(w.view(), a_lnn.view());

    let (q, f_off) = schur_and_offline(kernel, step, &k_nn)?;
    // G = (Y_n + γ[f_off - Y_n] Q⁻¹) A_lnn⁻¹
    let resid = (&f_off - &step.y_new()).mapv(|v| hp.gamma * v);
    let g_inner = &step.y_new.view() + &spd_right_solve("bcg oracle Q", resid.view(), q.view())?;
    let g = right_solve_lower_triangular(g_inner.view(), a_lnn.view());

    let zb = if step.has_past() {
        let n_p = step.x_past.ncols();
        let k_pp = kernel::gram_self(kernel, step.x_past())?;
        let k_pn = kernel::gram(kernel, step.x_past(), step.x_new())?;
        let mut a_upp = directional_mask(k_pp.view(), hp.block.min(n_p))?;
        for i in 0..n_p {
            a_upp[(i, i)] = 1.0 / hp.eta;
        }
        // B = A_upp⁻¹ K_pn (I - A_unn⁻¹ R) A_lnn⁻¹
        let u1 = solve_upper_triangular(a_upp.view(), k_pn.view());
        let inner = &Array2::<f64>::eye(b) - &w;
        let t2 = u1.dot(&inner);
        let bmat = right_solve_lower_triangular(t2.view(), a_lnn.view());
        step.z_past().dot(&bmat)
    } else {
        Array2::zeros((step.y_new.nrows(), b))
    };
    let num = &g - &zb;
    spd_right_solve("bcg oracle C", num.view(), c.view())
}

/// Block-wise correction loss: with M_on = (1/η I + K^bU_tot)⁻¹ and
/// M_off = (γI + K_tot)⁻¹,
/// `½·tr(Δ K_tot Δᵀ) + (γ_o/2)·‖[Z_past, Z_new] M_on‖²_F` where
/// `Δ = [Z_past, Z_new] M_on - Y_tot M_off`. γ_o is resolved exactly as in
/// `iterative_correction` so the minimizer matches.
pub fn eval_block_loss(
    kernel: &KernelSpec,
    z_new: ArrayView2<f64>,
    step: &CorrectionStep,
) -> Result<f64> {
    let hp = &step.hp;
    let b = step.x_new.ncols();
    if z_new.ncols() != b || z_new.nrows() != step.y_new.nrows() {
        return Err(Error::DimensionMismatch {
            context: "eval_block_loss",
            expected: format!("{}x{b}", step.y_new.nrows()),
            actual: format!("{}x{}", z_new.nrows(), z_new.ncols()),
        });
    }
    let x_tot = concatenate(Axis(1), &[step.x_past(), step.x_new()]).expect("shape");
    let y_tot = concatenate(Axis(1), &[step.y_past(), step.y_new()]).expect("shape");
    let z_tot = concatenate(Axis(1), &[step.z_past(), z_new]).expect("shape");
    let n = x_tot.ncols();
    let k_tot = kernel::gram_self(kernel, x_tot.view())?;
    let k_nn = k_tot.slice(s![n - b.., n - b..]).to_owned();
    let (gamma_o, _) = resolve_gamma_o(hp, k_nn.view())?;
    let mut a_on = directional_mask(k_tot.view(), hp.block.min(n))?;
    for i in 0..n {
        a_on[(i, i)] = 1.0 / hp.eta;
    }
    let p = right_solve_upper_triangular(z_tot.view(), a_on.view());
    let reg = &k_tot + &(Array2::<f64>::eye(n) * hp.gamma);
    let o = spd_right_solve("eval_block_loss", y_tot.view(), reg.view())?;
    let delta = &p - &o;
    let dk = delta.dot(&k_tot);
    let rkhs: f64 = dk.iter().zip(delta.iter()).map(|(a, d)| a * d).sum();
    let frob: f64 = p.iter().map(|v| v * v).sum();
    Ok(0.5 * rkhs + 0.5 * gamma_o * frob)
}

/// Per-chunk outcome of the streaming pipeline.
#[derive(Debug, Clone)]
pub struct ChunkResult {
    pub z_new: Array2<f64>,
    pub coefficients: CorrectionCoefficients,
}

/// Streaming block correction: consumes chunks in order, freezing each
/// chunk's targets as it goes. The factor of (γI + K_pp) is extended per
/// chunk, bounding per-chunk work at O(n·b² + b³).
#[derive(Debug, Clone)]
pub struct CorrectionPipeline {
    kernel: KernelSpec,
    hp: HyperParams,
    x_past: ColBuffer,
    y_past: ColBuffer,
    z_past: ColBuffer,
    /// Z_past (1/η I + K^bU_pp)⁻¹, extended blockwise.
    dual: ColBuffer,
    chol: Option<CholeskyFactor>,
}

impl CorrectionPipeline {
    pub fn new(kernel: KernelSpec, hp: HyperParams, input_dim: usize, output_dim: usize) -> Result<Self> {
        hp.validate()?;
        Ok(CorrectionPipeline {
            kernel,
            hp,
            x_past: ColBuffer::new(input_dim),
            y_past: ColBuffer::new(output_dim),
            z_past: ColBuffer::new(output_dim),
            dual: ColBuffer::new(output_dim),
            chol: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x_past.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Emitted targets so far.
    pub fn corrected(&self) -> TargetMatrix {
        TargetMatrix::new(self.z_past.to_array(), Provenance::IterativeCorrected)
    }

    /// Online prediction (γ = 0 closed form over emitted targets) at the
    /// columns of `x_star`.
    pub fn online_prediction(&self, x_star: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.is_empty() {
            return Ok(Array2::zeros((self.y_past.dim(), x_star.ncols())));
        }
        let cross = kernel::gram(&self.kernel, self.x_past.view(), x_star)?;
        Ok(self.dual.view().dot(&cross))
    }

    /// Offline prediction from the past true targets at `x_star` columns.
    pub fn offline_prediction(&self, x_star: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (Some(chol), false) = (&self.chol, self.is_empty()) else {
            return Ok(Array2::zeros((self.y_past.dim(), x_star.ncols())));
        };
        let cross = kernel::gram(&self.kernel, self.x_past.view(), x_star)?;
        let s = chol.solve(cross.view());
        Ok(self.y_past.view().dot(&s))
    }

    /// Swap in a refreshed kernel (e.g. a new NTK snapshot) and rebuild the
    /// cached factor and dual over the accumulated past. Emitted targets
    /// stay frozen.
    pub fn replace_kernel(&mut self, kernel: KernelSpec) -> Result<()> {
        self.kernel = kernel;
        let n = self.len();
        if n == 0 {
            self.chol = None;
            return Ok(());
        }
        let k_pp = kernel::gram_self(&self.kernel, self.x_past.view())?;
        let reg = &k_pp + &(Array2::<f64>::eye(n) * self.hp.gamma);
        self.chol = Some(CholeskyFactor::decompose(reg.view())?);
        let mut a = directional_mask(k_pp.view(), self.hp.block.min(n))?;
        for i in 0..n {
            a[(i, i)] = 1.0 / self.hp.eta;
        }
        let dual = right_solve_upper_triangular(self.z_past.view(), a.view());
        let mut buf = ColBuffer::new(self.y_past.dim());
        buf.push_block(dual.view());
        self.dual = buf;
        Ok(())
    }

    /// Correct one chunk and freeze it. `f_on_override` supplies the online
    /// prediction on the chunk (live-model output in NTK mode); without it
    /// the kernel closed form over the emitted targets is used.
    pub fn push_chunk(
        &mut self,
        x_new: ArrayView2<f64>,
        y_new: ArrayView2<f64>,
        f_on_override: Option<ArrayView2<f64>>,
    ) -> Result<ChunkResult> {
        let b = x_new.ncols();
        let n_p = self.len();
        if self.hp.block > 1 && n_p % self.hp.block != 0 {
            return Err(Error::InvalidParameter {
                name: "block",
                reason: format!(
                    "chunk starts at {n_p}, off the block grid (block = {})",
                    self.hp.block
                ),
            });
        }
        let k_nn = kernel::gram_self(&self.kernel, x_new)?;
        let k_pn = if n_p > 0 {
            kernel::gram(&self.kernel, self.x_past.view(), x_new)?
        } else {
            Array2::zeros((0, b))
        };
        let (q, f_off) = if n_p > 0 {
            let chol = self.chol.as_ref().expect("factor present with past");
            let s = chol.solve(k_pn.view());
            let q = &k_nn + &(Array2::<f64>::eye(b) * self.hp.gamma) - &k_pn.t().dot(&s);
            (q, self.y_past.view().dot(&s))
        } else {
            (
                &k_nn + &(Array2::<f64>::eye(b) * self.hp.gamma),
                Array2::zeros((self.y_past.dim(), b)),
            )
        };
        let f_on = match f_on_override {
            Some(f) => f.to_owned(),
            None => self.dual_prediction(&k_pn, b),
        };
        let (z_new, coefficients) =
            correction_from_parts(&self.hp, &k_nn, q, y_new, f_on.view(), f_off.view())?;

        // Extend the dual: new block = (Z_new - dual·K_pn)·A_unn⁻¹.
        let mut a_unn = directional_mask(k_nn.view(), self.hp.block.min(b))?;
        for i in 0..b {
            a_unn[(i, i)] = 1.0 / self.hp.eta;
        }
        let lead = if n_p > 0 {
            &z_new - &self.dual.view().dot(&k_pn)
        } else {
            z_new.clone()
        };
        let dual_new = right_solve_upper_triangular(lead.view(), a_unn.view());
        self.dual.push_block(dual_new.view());

        // Extend the offline factor with the new block.
        let corner = &k_nn + &(Array2::<f64>::eye(b) * self.hp.gamma);
        match self.chol.as_mut() {
            Some(chol) => chol.extend(k_pn.view(), corner.view())?,
            None => self.chol = Some(CholeskyFactor::decompose(corner.view())?),
        }
        self.x_past.push_block(x_new);
        self.y_past.push_block(y_new);
        self.z_past.push_block(z_new.view());
        Ok(ChunkResult {
            z_new,
            coefficients,
        })
    }

    fn dual_prediction(&self, k_pn: &Array2<f64>, b: usize) -> Array2<f64> {
        if self.is_empty() {
            Array2::zeros((self.y_past.dim(), b))
        } else {
            self.dual.view().dot(k_pn)
        }
    }
}
