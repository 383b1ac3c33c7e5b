//! Kernel evaluation, Gram assembly, directional masking, and the decay
//! diagonal.
//!
//! The directional matrices are the core structural objects: `K^U` keeps only
//! strictly upper-triangular kernel entries (past-to-present interactions),
//! and its block variant `K^bU` additionally zeroes the block-diagonal so
//! samples inside one mini-batch do not interact. Blocks are anchored at
//! index 0; a trailing partial block is treated as one smaller block.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, CholeskyFactor};

/// Explicit feature map φ with `k(x, x') = φ(x)ᵀφ(x')`.
pub trait FeatureMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn map(&self, x: ArrayView1<f64>) -> Array1<f64>;

    /// Map every column of a d_x×n input matrix; returns d_φ×n.
    fn map_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n = x.ncols();
        let mut out = Array2::zeros((self.feature_dim(), n));
        for (j, col) in x.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.map(col));
        }
        out
    }

    /// Serializable description, when the map has one.
    fn descriptor(&self) -> Option<FeatureMapDescriptor> {
        None
    }
}

/// Descriptions of the feature maps that can be written to disk.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum FeatureMapDescriptor {
    Identity { dim: usize },
}

/// φ(x) = scale · tanh(Jx), the random-feature family.
#[derive(Debug, Clone)]
pub struct TanhFeatures {
    projection: Array2<f64>,
    scale: f64,
}

impl TanhFeatures {
    pub fn new(projection: Array2<f64>, scale: f64) -> Self {
        TanhFeatures { projection, scale }
    }

    pub fn projection(&self) -> ArrayView2<'_, f64> {
        self.projection.view()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl FeatureMap for TanhFeatures {
    fn input_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn feature_dim(&self) -> usize {
        self.projection.nrows()
    }

    fn map(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.projection.dot(&x).mapv(|v| self.scale * v.tanh())
    }

    fn map_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.projection.dot(&x).mapv(|v| self.scale * v.tanh())
    }
}

/// φ(x) = x, i.e. the linear kernel.
#[derive(Debug, Clone)]
pub struct IdentityFeatures {
    dim: usize,
}

impl IdentityFeatures {
    pub fn new(dim: usize) -> Self {
        IdentityFeatures { dim }
    }
}

impl FeatureMap for IdentityFeatures {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn map(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.to_owned()
    }

    fn map_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.to_owned()
    }

    fn descriptor(&self) -> Option<FeatureMapDescriptor> {
        Some(FeatureMapDescriptor::Identity { dim: self.dim })
    }
}

/// The kernel function used by every predictor.
///
/// `Precomputed` holds a Gram matrix over a fixed sample set; its "inputs"
/// are single-element index vectors into that set, and it cannot evaluate
/// anything outside the stored set.
#[derive(Clone)]
pub enum KernelSpec {
    /// `k(x, x') = exp(-‖x-x'‖² / bandwidth)`.
    Rbf { bandwidth: f64 },
    RandomFeatureTanh(TanhFeatures),
    ExplicitFeature(Arc<dyn FeatureMap>),
    Precomputed { gram: Array2<f64> },
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { bandwidth } => write!(f, "Rbf {{ bandwidth: {bandwidth} }}"),
            KernelSpec::RandomFeatureTanh(t) => write!(
                f,
                "RandomFeatureTanh {{ {}x{}, scale: {} }}",
                t.feature_dim(),
                t.input_dim(),
                t.scale()
            ),
            KernelSpec::ExplicitFeature(m) => {
                write!(f, "ExplicitFeature {{ {}->{} }}", m.input_dim(), m.feature_dim())
            }
            KernelSpec::Precomputed { gram } => {
                write!(f, "Precomputed {{ {}x{} }}", gram.nrows(), gram.ncols())
            }
        }
    }
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: format!("must be strictly positive, got {bandwidth}"),
            });
        }
        Ok(KernelSpec::Rbf { bandwidth })
    }

    pub fn random_feature_tanh(projection: Array2<f64>, scale: f64) -> Self {
        KernelSpec::RandomFeatureTanh(TanhFeatures::new(projection, scale))
    }

    pub fn linear(dim: usize) -> Self {
        KernelSpec::ExplicitFeature(Arc::new(IdentityFeatures::new(dim)))
    }

    pub fn precomputed(gram: Array2<f64>) -> Result<Self> {
        let n = gram.nrows();
        if gram.ncols() != n {
            return Err(Error::InvalidGram {
                reason: format!("precomputed gram must be square, got {}x{}", n, gram.ncols()),
            });
        }
        let tol = 1e-8 * max_abs(gram.view()).max(1e-300);
        for i in 0..n {
            for j in (i + 1)..n {
                if (gram[(i, j)] - gram[(j, i)]).abs() > tol {
                    return Err(Error::InvalidGram {
                        reason: format!("asymmetry at ({i},{j})"),
                    });
                }
            }
        }
        Ok(KernelSpec::Precomputed { gram })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::RandomFeatureTanh(_) => "random_feature_tanh",
            KernelSpec::ExplicitFeature(_) => "explicit_feature",
            KernelSpec::Precomputed { .. } => "precomputed",
        }
    }

    /// The explicit feature map behind this kernel, when one exists.
    pub fn feature_map(&self) -> Option<&dyn FeatureMap> {
        match self {
            KernelSpec::RandomFeatureTanh(t) => Some(t),
            KernelSpec::ExplicitFeature(m) => Some(m.as_ref()),
            _ => None,
        }
    }

    fn check_input(&self, context: &'static str, x: ArrayView1<f64>) -> Result<()> {
        match self {
            KernelSpec::Rbf { .. } => Ok(()),
            KernelSpec::RandomFeatureTanh(t) => {
                if x.len() == t.input_dim() {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        context,
                        expected: format!("input dim {}", t.input_dim()),
                        actual: format!("{}", x.len()),
                    })
                }
            }
            KernelSpec::ExplicitFeature(m) => {
                if x.len() == m.input_dim() {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        context,
                        expected: format!("input dim {}", m.input_dim()),
                        actual: format!("{}", x.len()),
                    })
                }
            }
            KernelSpec::Precomputed { .. } => {
                if x.len() == 1 {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch {
                        context,
                        expected: "a single stored-set index".to_string(),
                        actual: format!("vector of dim {}", x.len()),
                    })
                }
            }
        }
    }

    fn stored_index(&self, x: ArrayView1<f64>) -> Result<usize> {
        let KernelSpec::Precomputed { gram } = self else {
            unreachable!("stored_index on non-precomputed kernel")
        };
        let v = x[0];
        let idx = v.round();
        if (v - idx).abs() > 1e-9 || idx < 0.0 || (idx as usize) >= gram.nrows() {
            return Err(Error::PrecomputedCrossEval {
                context: format!("index {v} outside stored set of size {}", gram.nrows()),
            });
        }
        Ok(idx as usize)
    }
}

/// Evaluate `k(x, x')`; symmetric in its arguments.
pub fn eval_kernel(spec: &KernelSpec, x: ArrayView1<f64>, x2: ArrayView1<f64>) -> Result<f64> {
    spec.check_input("eval_kernel", x)?;
    spec.check_input("eval_kernel", x2)?;
    match spec {
        KernelSpec::Rbf { bandwidth } => {
            if x.len() != x2.len() {
                return Err(Error::DimensionMismatch {
                    context: "eval_kernel",
                    expected: format!("{}", x.len()),
                    actual: format!("{}", x2.len()),
                });
            }
            let d2: f64 = x
                .iter()
                .zip(x2.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok((-d2 / bandwidth).exp())
        }
        KernelSpec::RandomFeatureTanh(t) => Ok(t.map(x).dot(&t.map(x2))),
        KernelSpec::ExplicitFeature(m) => Ok(m.map(x).dot(&m.map(x2))),
        KernelSpec::Precomputed { gram } => {
            let i = spec.stored_index(x)?;
            let j = spec.stored_index(x2)?;
            Ok(gram[(i, j)])
        }
    }
}

/// Pairwise Gram matrix: entry (i, j) = k(xᵢ, x'ⱼ). Inputs are columns.
pub fn gram(spec: &KernelSpec, x: ArrayView2<f64>, x2: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() == 0 || x2.ncols() == 0 {
        return Ok(Array2::zeros((x.ncols(), x2.ncols())));
    }
    match spec {
        // Feature kernels batch through a single matrix product.
        KernelSpec::RandomFeatureTanh(t) => {
            spec.check_input("gram", x.column(0))?;
            spec.check_input("gram", x2.column(0))?;
            Ok(t.map_batch(x).t().dot(&t.map_batch(x2)))
        }
        KernelSpec::ExplicitFeature(m) => {
            spec.check_input("gram", x.column(0))?;
            spec.check_input("gram", x2.column(0))?;
            Ok(m.map_batch(x).t().dot(&m.map_batch(x2)))
        }
        _ => {
            let n = x.ncols();
            let m = x2.ncols();
            let mut k = Array2::zeros((n, m));
            for i in 0..n {
                for j in 0..m {
                    k[(i, j)] = eval_kernel(spec, x.column(i), x2.column(j))?;
                }
            }
            Ok(k)
        }
    }
}

/// Gram of a set with itself, mirrored so symmetry is exact.
pub fn gram_self(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.ncols();
    let mut k = gram(spec, x, x)?;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = k[(i, j)];
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Keep entry (i, j) iff column j lies in a strictly later block than row i;
/// `b = 1` gives the strict upper triangle `K^U`.
pub fn directional_mask(k: ArrayView2<f64>, b: usize) -> Result<Array2<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "directional_mask",
            expected: format!("{n}x{n}"),
            actual: format!("{}x{}", k.nrows(), k.ncols()),
        });
    }
    if b < 1 || b > n.max(1) {
        return Err(Error::BlockOutOfRange { block: b, n });
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i / b < j / b {
                out[(i, j)] = k[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Diagonal of (1-ηγ)^(n-i) factors for the regularized online closed form.
#[derive(Debug, Clone)]
pub struct DecayDiagonal {
    eta: f64,
    gamma: f64,
    diag: Array1<f64>,
}

impl DecayDiagonal {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> ArrayView1<'_, f64> {
        self.diag.view()
    }

    /// Scale the columns of a d×n matrix by the diagonal.
    pub fn scale_columns(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = y.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col *= self.diag[j];
        }
        out
    }
}

/// Build D_n with entry i = (1-ηγ)^(n-i), i = 1..n. ηγ = 1 is permitted
/// here; consumers that cannot tolerate it must check.
pub fn decay_diag(n: usize, eta: f64, gamma: f64) -> DecayDiagonal {
    let base = 1.0 - eta * gamma;
    let diag = Array1::from_shape_fn(n, |i| base.powi((n - 1 - i) as i32));
    DecayDiagonal { eta, gamma, diag }
}

/// A validated Gram matrix with its directional mask.
#[derive(Debug, Clone)]
pub struct GramBundle {
    k: Array2<f64>,
    block_size: usize,
    k_directional: Array2<f64>,
}

impl GramBundle {
    /// Validates symmetry and positive semidefiniteness to within
    /// `1e-8·max|K|` before masking.
    pub fn new(k: Array2<f64>, block_size: usize) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::InvalidGram {
                reason: format!("gram must be square, got {}x{}", n, k.ncols()),
            });
        }
        let tol = 1e-8 * max_abs(k.view()).max(1e-300);
        for i in 0..n {
            for j in (i + 1)..n {
                if (k[(i, j)] - k[(j, i)]).abs() > tol {
                    return Err(Error::InvalidGram {
                        reason: format!("asymmetry at ({i},{j})"),
                    });
                }
            }
        }
        // K + tol·I admitting a Cholesky factor certifies eigenvalues ≥ -tol.
        let shifted = &k + &(Array2::<f64>::eye(n) * tol);
        if CholeskyFactor::decompose(shifted.view()).is_err() {
            return Err(Error::InvalidGram {
                reason: format!("not positive semidefinite within tolerance {tol:.3e}"),
            });
        }
        let k_directional = directional_mask(k.view(), block_size)?;
        Ok(GramBundle {
            k,
            block_size,
            k_directional,
        })
    }

    pub fn k(&self) -> ArrayView2<'_, f64> {
        self.k.view()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn directional(&self) -> ArrayView2<'_, f64> {
        self.k_directional.view()
    }

    /// K^L = (K^U)ᵀ.
    pub fn lower(&self) -> Array2<f64> {
        self.k_directional.t().to_owned()
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }
}
