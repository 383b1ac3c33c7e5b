//! Dense symmetric and triangular solves.
//!
//! Everything here works on row-major `ndarray` matrices and never forms an
//! explicit inverse: symmetric positive-definite systems go through a
//! Cholesky factor, triangular systems through back- or forward-substitution.
//! The Cholesky factor can be extended in place by a trailing block, which is
//! what keeps the chunked correction pipeline at O(n·b²) per chunk.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder};

use crate::error::{Error, Result};

/// Condition-estimate ceiling; solves beyond it fail loudly.
pub const COND_LIMIT: f64 = 1e12;

pub(crate) fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// extendable by trailing blocks.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: Array2<f64>,
}

impl CholeskyFactor {
    /// Factor `a = L Lᵀ`. Only the lower triangle of `a` is read.
    pub fn decompose(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "cholesky",
                expected: format!("{n}x{n}"),
                actual: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let partial = {
                    let ri = l.row(i);
                    let rj = l.row(j);
                    ri.slice(s![..j]).dot(&rj.slice(s![..j]))
                };
                let sum = a[(i, j)] - partial;
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            index: i,
                            pivot: sum,
                        });
                    }
                    l[(i, j)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(CholeskyFactor { l })
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// L·v, e.g. for drawing correlated samples from a factored covariance.
    pub fn lower_product(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.l.dot(&v)
    }

    /// Cheap two-sided condition estimate from the factor diagonal,
    /// cond(A) ≈ (max dᵢ / min dᵢ)². Underestimates the true condition
    /// number but catches the degeneracies the guard is for.
    pub fn cond_estimate(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..self.n() {
            let d = self.l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if self.n() == 0 {
            return 1.0;
        }
        (hi / lo).powi(2)
    }

    /// Solve `A X = B` for X given the factor of A.
    pub fn solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let y = solve_lower_triangular(self.l.view(), b);
        solve_upper_triangular(self.l.t(), y.view())
    }

    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let b2 = b.insert_axis(ndarray::Axis(1));
        let x = self.solve(b2);
        x.index_axis_move(ndarray::Axis(1), 0)
    }

    /// Extend the factored matrix by a trailing block:
    /// A' = [A, cross; crossᵀ, corner]. `cross` is n×b, `corner` b×b.
    pub fn extend(&mut self, cross: ArrayView2<f64>, corner: ArrayView2<f64>) -> Result<()> {
        let n = self.n();
        let b = corner.nrows();
        if cross.nrows() != n || cross.ncols() != b || corner.ncols() != b {
            return Err(Error::DimensionMismatch {
                context: "cholesky extend",
                expected: format!("cross {n}x{b}, corner {b}x{b}"),
                actual: format!(
                    "cross {}x{}, corner {}x{}",
                    cross.nrows(),
                    cross.ncols(),
                    corner.nrows(),
                    corner.ncols()
                ),
            });
        }
        // L m = cross, then corner - mᵀm gets its own factor.
        let m = solve_lower_triangular(self.l.view(), cross);
        let schur = corner.to_owned() - m.t().dot(&m);
        let lb = CholeskyFactor::decompose(schur.view())?;
        let mut l = Array2::<f64>::zeros((n + b, n + b));
        l.slice_mut(s![..n, ..n]).assign(&self.l);
        l.slice_mut(s![n.., ..n]).assign(&m.t());
        l.slice_mut(s![n.., n..]).assign(&lb.l);
        self.l = l;
        Ok(())
    }
}

/// Solve `A X = B` for symmetric positive-definite `A` with a condition guard.
pub fn spd_solve(context: &'static str, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let f = CholeskyFactor::decompose(a)?;
    let cond = f.cond_estimate();
    if cond > COND_LIMIT {
        return Err(Error::IllConditioned {
            context,
            cond,
            limit: COND_LIMIT,
        });
    }
    Ok(f.solve(b))
}

/// Solve `Y A = B` for `Y` with symmetric positive-definite `A`
/// (right division; A symmetric so this is solve(A, Bᵀ)ᵀ).
pub fn spd_right_solve(context: &'static str, b: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let bt = b.t().to_owned();
    let x = spd_solve(context, a, bt.view())?;
    Ok(x.t().to_owned())
}

/// Back-substitution for `U X = B` with upper-triangular `U`, sweeping rows
/// bottom-up with vectorized row updates.
pub fn solve_upper_triangular(u: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let n = u.nrows();
    debug_assert_eq!(u.ncols(), n);
    debug_assert_eq!(b.nrows(), n);
    let mut x = b.to_owned();
    for k in (0..n).rev() {
        let (mut top, mut rest) = x.view_mut().split_at(Axis(0), k);
        let mut xk = rest.row_mut(0);
        let d = u[(k, k)];
        xk.mapv_inplace(|v| v / d);
        let xk = rest.row(0);
        for i in 0..k {
            let uik = u[(i, k)];
            if uik != 0.0 {
                top.row_mut(i).scaled_add(-uik, &xk);
            }
        }
    }
    x
}

/// Forward substitution for `L X = B` with lower-triangular `L`.
pub fn solve_lower_triangular(l: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    debug_assert_eq!(l.ncols(), n);
    debug_assert_eq!(b.nrows(), n);
    let mut x = b.to_owned();
    for k in 0..n {
        let (_, mut rest) = x.view_mut().split_at(Axis(0), k);
        let mut xk = rest.row_mut(0);
        let d = l[(k, k)];
        xk.mapv_inplace(|v| v / d);
        let (xk, mut below) = rest.split_at(Axis(0), 1);
        let xk = xk.row(0);
        for i in (k + 1)..n {
            let lik = l[(i, k)];
            if lik != 0.0 {
                below.row_mut(i - k - 1).scaled_add(-lik, &xk);
            }
        }
    }
    x
}

/// Solve `Z U = Y` for `Z` with upper-triangular `U` (right division),
/// via the transposed lower-triangular system.
pub fn right_solve_upper_triangular(y: ArrayView2<f64>, u: ArrayView2<f64>) -> Array2<f64> {
    let yt = y.t().to_owned();
    let ut = u.t().to_owned();
    let zt = solve_lower_triangular(ut.view(), yt.view());
    zt.t().to_owned()
}

/// Solve `Z L = Y` for `Z` with lower-triangular `L` (right division).
pub fn right_solve_lower_triangular(y: ArrayView2<f64>, l: ArrayView2<f64>) -> Array2<f64> {
    let yt = y.t().to_owned();
    let zt = solve_upper_triangular(l.t(), yt.view());
    zt.t().to_owned()
}

/// Column-appendable matrix with a fixed row count; views are d×n.
#[derive(Debug, Clone)]
pub(crate) struct ColBuffer {
    dim: usize,
    data: Vec<f64>,
}

impl ColBuffer {
    pub fn new(dim: usize) -> Self {
        ColBuffer {
            dim,
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn push(&mut self, col: ArrayView1<f64>) {
        debug_assert_eq!(col.len(), self.dim);
        self.data.extend(col.iter());
    }

    pub fn push_block(&mut self, block: ArrayView2<f64>) {
        debug_assert_eq!(block.nrows(), self.dim);
        for col in block.columns() {
            self.push(col);
        }
    }

    /// View as d×n; columns are stored contiguously (column-major).
    pub fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.dim, self.len()).f(), &self.data).expect("layout")
    }

    pub fn view_mut(&mut self) -> ndarray::ArrayViewMut2<'_, f64> {
        let n = self.len();
        ndarray::ArrayViewMut2::from_shape((self.dim, n).f(), &mut self.data).expect("layout")
    }

    pub fn to_array(&self) -> Array2<f64> {
        self.view().to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spd(n: usize, seed: u64) -> Array2<f64> {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        g.dot(&g.t()) + Array2::<f64>::eye(n) * 0.5
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = spd(8, 1);
        let f = CholeskyFactor::decompose(a.view()).unwrap();
        let b = Array2::from_shape_fn((8, 3), |(i, j)| (i + 2 * j) as f64);
        let x = f.solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(max_abs(r.view()) < 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            CholeskyFactor::decompose(a.view()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn extend_matches_full_factor() {
        let a = spd(10, 2);
        let mut f = CholeskyFactor::decompose(a.slice(s![..6, ..6])).unwrap();
        f.extend(a.slice(s![..6, 6..]), a.slice(s![6.., 6..])).unwrap();
        let full = CholeskyFactor::decompose(a.view()).unwrap();
        let d = &f.l - &full.l;
        assert!(max_abs(d.view()) < 1e-10);
    }

    #[test]
    fn triangular_solves() {
        let u = array![[2.0, 1.0, 3.0], [0.0, 4.0, -1.0], [0.0, 0.0, 5.0]];
        let b = array![[1.0], [2.0], [3.0]];
        let x = solve_upper_triangular(u.view(), b.view());
        assert!(max_abs((u.dot(&x) - &b).view()) < 1e-12);

        let y = array![[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]];
        let z = right_solve_upper_triangular(y.view(), u.view());
        assert!(max_abs((z.dot(&u) - &y).view()) < 1e-12);
    }

    #[test]
    fn lower_solve() {
        let l = array![[3.0, 0.0], [1.0, 2.0]];
        let b = array![[3.0], [5.0]];
        let x = solve_lower_triangular(l.view(), b.view());
        assert!(max_abs((l.dot(&x) - &b).view()) < 1e-12);
    }

    #[test]
    fn col_buffer_layout() {
        let mut cb = ColBuffer::new(2);
        cb.push(array![1.0, 2.0].view());
        cb.push(array![3.0, 4.0].view());
        let v = cb.view();
        assert_eq!(v[(0, 1)], 3.0);
        assert_eq!(v[(1, 0)], 2.0);
    }
}
