//! Regularized Gram matrices, elliptical bonuses and ridge solves.
//!
//! `GramState` keeps `Λ = λI + Σ φφᵀ` together with its lower Cholesky
//! factor. Each [`GramState::add`] applies an O(d²) rank-one update to the
//! factor; every [`REFACTOR_EVERY`] updates the factor is rebuilt from `Λ` to
//! bound accumulated drift. Quadratic forms and solves go through the factor,
//! never through an explicit inverse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail_arg;
use crate::{Error, Result};

pub const REFACTOR_EVERY: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct GramState {
    dim: usize,
    lambda: f64,
    /// Row-major `Λ`.
    matrix: Vec<f64>,
    /// Row-major lower-triangular `L` with `L Lᵀ = Λ`.
    chol: Vec<f64>,
    count: usize,
}

impl GramState {
    /// `Λ = λI` with no samples.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            bail_arg!("Gram dimension must be >= 1");
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            bail_arg!("ridge parameter must be positive, got {lambda}");
        }
        let mut matrix = vec![0.0; dim * dim];
        let mut chol = vec![0.0; dim * dim];
        let root = libm::sqrt(lambda);
        for i in 0..dim {
            matrix[i * dim + i] = lambda;
            chol[i * dim + i] = root;
        }
        Ok(GramState {
            dim,
            lambda,
            matrix,
            chol,
            count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of accumulated feature vectors.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `Λ += φφᵀ`.
    pub fn add(&mut self, phi: &[f64]) -> Result<()> {
        let d = self.dim;
        if phi.len() != d {
            bail_arg!("feature length {} does not match Gram dimension {d}", phi.len());
        }
        for i in 0..d {
            for j in 0..=i {
                let v = self.matrix[i * d + j] + phi[i] * phi[j];
                self.matrix[i * d + j] = v;
                self.matrix[j * d + i] = v;
            }
        }
        self.count += 1;
        if self.count.is_multiple_of(REFACTOR_EVERY) {
            self.refactor()
        } else {
            self.rank_one_update(phi);
            Ok(())
        }
    }

    fn rank_one_update(&mut self, phi: &[f64]) {
        let d = self.dim;
        let l = &mut self.chol;
        let mut x: Vec<f64> = phi.to_vec();
        for k in 0..d {
            if x[k] == 0.0 {
                continue;
            }
            let lkk = l[k * d + k];
            let r = libm::hypot(lkk, x[k]);
            let c = r / lkk;
            let s = x[k] / lkk;
            l[k * d + k] = r;
            for i in k + 1..d {
                let lik = (l[i * d + k] + s * x[i]) / c;
                l[i * d + k] = lik;
                x[i] = c * x[i] - s * lik;
            }
        }
    }

    /// Rebuilds the Cholesky factor from `Λ`.
    pub fn refactor(&mut self) -> Result<()> {
        self.chol = cholesky(&self.matrix, self.dim)?;
        Ok(())
    }

    /// Solves `L y = b` in place.
    fn forward(&self, y: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let acc: f64 = row.iter().zip(&y[..i]).map(|(l, v)| l * v).sum();
            y[i] = (y[i] - acc) / self.chol[i * d + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    fn backward(&self, x: &mut [f64]) {
        let d = self.dim;
        for i in (0..d).rev() {
            let mut acc = x[i];
            for k in i + 1..d {
                acc -= self.chol[k * d + i] * x[k];
            }
            x[i] = acc / self.chol[i * d + i];
        }
    }

    /// `Λ⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim, "right-hand side dimension mismatch");
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// `φᵀ Λ⁻¹ φ`, computed as `‖L⁻¹φ‖²`.
    pub fn quad_form(&self, phi: &[f64]) -> f64 {
        assert_eq!(phi.len(), self.dim, "feature dimension mismatch");
        let mut y = phi.to_vec();
        self.forward(&mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// `min{β √(φᵀΛ⁻¹φ), cap}`.
    pub fn bonus(&self, phi: &[f64], beta: f64, cap: f64) -> f64 {
        bonus_from_quad(self.quad_form(phi), beta, cap)
    }

    /// Ridge weights `w = Λ⁻¹ b`, i.e. the minimizer of
    /// `Σ (y − wᵀφ)² + λ‖w‖²` for the accumulated samples.
    pub fn ridge_solve(&self, moment: &MomentVector) -> Result<Vec<f64>> {
        if moment.b.len() != self.dim {
            bail_arg!(
                "moment length {} does not match Gram dimension {}",
                moment.b.len(),
                self.dim
            );
        }
        let w = self.solve(&moment.b);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "ridge solve produced non-finite weights (count {})",
                self.count
            )));
        }
        Ok(w)
    }

    /// `det Λ` from the factor diagonal.
    pub fn determinant(&self) -> f64 {
        (0..self.dim)
            .map(|i| {
                let l = self.chol[i * self.dim + i];
                l * l
            })
            .product()
    }

    /// Smallest eigenvalue of `Λ` by cyclic Jacobi rotations.
    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.matrix, self.dim)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

#[inline]
pub(crate) fn bonus_from_quad(quad: f64, beta: f64, cap: f64) -> f64 {
    let width = beta * libm::sqrt(quad.max(0.0));
    if width < cap {
        width
    } else {
        cap
    }
}

/// Accumulator for `b = Σ φ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub b: Vec<f64>,
}

impl MomentVector {
    pub fn zeros(dim: usize) -> Self {
        MomentVector { b: vec![0.0; dim] }
    }

    pub fn add(&mut self, phi: &[f64], target: f64) {
        for (b, p) in self.b.iter_mut().zip(phi) {
            *b += p * target;
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

/// Dense lower Cholesky factor of a row-major symmetric matrix.
pub fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut acc = a[i * d + j];
            for k in 0..j {
                acc -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(acc > 0.0) {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at pivot {i} ({acc})"
                    )));
                }
                l[i * d + i] = libm::sqrt(acc);
            } else {
                l[i * d + j] = acc / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Eigenvalues of a small symmetric matrix (cyclic Jacobi).
pub fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j] * m[i * d + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).collect()
}
