//! Regularized design matrix state.
//!
//! Maintains `V = λI + Σ x xᵀ` over all observed feature vectors together
//! with its inverse and log-determinant. The inverse is updated in O(d²)
//! per observation by the Sherman-Morrison identity and recomputed from `V`
//! by a direct symmetric solve every [`DEFAULT_REFRESH_INTERVAL`] updates
//! (or as soon as a residual check detects drift), which keeps the
//! max-abs entry of `V·V⁻¹ − I` below `1e-8` at all times.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rank-one updates allowed between direct re-inversions of `V`.
pub const DEFAULT_REFRESH_INTERVAL: usize = 1_000;

/// Max-abs residual of `V·V⁻¹ − I` tolerated before an early refresh.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Symmetric positive definite design matrix with maintained inverse.
///
/// Value semantics: cloning yields an independent state; mutating
/// operations take `&mut self`; read-only queries are safe under
/// concurrent readers.
#[derive(Debug, Clone)]
pub struct SpdState {
    dim: usize,
    lambda: f64,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    log_det: f64,
    updates_since_refresh: usize,
    refresh_interval: usize,
}

impl SpdState {
    /// Creates `V = λI`, `V⁻¹ = (1/λ)I`, `log det V = d·ln λ`.
    pub fn init(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "ridge parameter must be a positive real, got {lambda}"
            )));
        }
        Ok(Self {
            dim,
            lambda,
            v: DMatrix::from_diagonal_element(dim, dim, lambda),
            v_inv: DMatrix::from_diagonal_element(dim, dim, 1.0 / lambda),
            log_det: dim as f64 * lambda.ln(),
            updates_since_refresh: 0,
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
        })
    }

    /// Same as [`SpdState::init`] with a custom refresh interval.
    pub fn init_with_refresh(dim: usize, lambda: f64, refresh_interval: usize) -> Result<Self> {
        if refresh_interval == 0 {
            return Err(Error::invalid("refresh interval must be positive"));
        }
        let mut state = Self::init(dim, lambda)?;
        state.refresh_interval = refresh_interval;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Applies `V ← V + xxᵀ`, updating the inverse by Sherman-Morrison and
    /// the log-determinant by `log det(V + xxᵀ) = log det V + log(1 + xᵀV⁻¹x)`.
    pub fn rank_one_update(&mut self, x: &DVector<f64>) -> Result<()> {
        self.check_dim(x)?;
        let u = &self.v_inv * x;
        let s = 1.0 + x.dot(&u);
        self.v.ger(1.0, x, x, 1.0);
        self.v_inv.ger(-1.0 / s, &u, &u, 1.0);
        self.log_det += s.ln();
        self.symmetrize_inv();
        self.updates_since_refresh += 1;

        if self.updates_since_refresh >= self.refresh_interval || self.directional_drift(x) {
            self.refresh();
        }
        Ok(())
    }

    /// Returns `yᵀ V⁻¹ y` (the squared `‖y‖`-norm in the data-dependent metric).
    pub fn quad_form(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(y)?;
        Ok(y.dot(&(&self.v_inv * y)).max(0.0))
    }

    /// Returns the sampling score `|xᵀ V⁻¹ y| / sqrt(1 + xᵀ V⁻¹ x)`.
    ///
    /// This is the per-arm quantity that ranks how much appending `xxᵀ` to
    /// `V` shrinks the uncertainty of the direction `y`.
    pub fn whitened_score(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let vx = &self.v_inv * x;
        let numerator = vx.dot(y).abs();
        let denominator = (1.0 + x.dot(&vx).max(0.0)).sqrt();
        Ok(numerator / denominator)
    }

    /// Max-abs entry of `V·V⁻¹ − I`.
    pub fn identity_residual(&self) -> f64 {
        let mut prod = &self.v * &self.v_inv;
        for i in 0..self.dim {
            prod[(i, i)] -= 1.0;
        }
        prod.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()))
    }

    /// Recomputes `V⁻¹` and `log det V` from `V` by a Cholesky solve.
    pub fn refresh(&mut self) {
        let chol = self
            .v
            .clone()
            .cholesky()
            .expect("V = lambda*I + sum(x x^T) must stay positive definite");
        self.log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        self.v_inv = chol.inverse();
        self.symmetrize_inv();
        self.updates_since_refresh = 0;
    }

    // Cheap O(d²) drift check along the direction just inserted.
    fn directional_drift(&self, x: &DVector<f64>) -> bool {
        let r = &self.v * (&self.v_inv * x) - x;
        r.iter().any(|e| e.abs() > RESIDUAL_TOLERANCE)
    }

    // Sherman-Morrison preserves symmetry analytically but not bit-exactly.
    fn symmetrize_inv(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let m = 0.5 * (self.v_inv[(i, j)] + self.v_inv[(j, i)]);
                self.v_inv[(i, j)] = m;
                self.v_inv[(j, i)] = m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RngStream;
    use approx::assert_relative_eq;

    fn e(dim: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v
    }

    #[test]
    fn init_identity() {
        let s = SpdState::init(2, 1.0).unwrap();
        assert_eq!(s.v(), &DMatrix::identity(2, 2));
        assert_eq!(s.v_inv(), &DMatrix::identity(2, 2));
        assert_eq!(s.log_det(), 0.0);
    }

    #[test]
    fn init_scalar_matrix() {
        let s = SpdState::init(3, 2.0).unwrap();
        assert_relative_eq!(s.log_det(), 3.0 * 2.0_f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(s.v()[(1, 1)], 2.0);
        assert_relative_eq!(s.v_inv()[(2, 2)], 0.5);
    }

    #[test]
    fn init_one_dimensional() {
        let s = SpdState::init(1, 0.5).unwrap();
        assert_relative_eq!(s.v()[(0, 0)], 0.5);
        assert_relative_eq!(s.v_inv()[(0, 0)], 2.0);
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(SpdState::init(0, 1.0).is_err());
        assert!(SpdState::init(2, 0.0).is_err());
        assert!(SpdState::init(2, -1.0).is_err());
        assert!(SpdState::init(2, f64::NAN).is_err());
    }

    #[test]
    fn rank_one_diagonal_case() {
        let mut s = SpdState::init(2, 1.0).unwrap();
        s.rank_one_update(&e(2, 0)).unwrap();
        assert_relative_eq!(s.v()[(0, 0)], 2.0);
        assert_relative_eq!(s.v()[(1, 1)], 1.0);
        assert_relative_eq!(s.v_inv()[(0, 0)], 0.5);
        assert_relative_eq!(s.v_inv()[(1, 1)], 1.0);
        assert_relative_eq!(s.log_det(), 2.0_f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn rank_one_matches_direct_inverse() {
        let mut s = SpdState::init(2, 1.0).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]) / 2.0_f64.sqrt();
        s.rank_one_update(&x).unwrap();
        let direct = s.v().clone().try_inverse().unwrap();
        assert!((s.v_inv() - &direct).amax() < 1e-14);
        assert!(s.identity_residual() < 1e-14);
    }

    #[test]
    fn long_update_sequence_stays_consistent() {
        let mut s = SpdState::init(10, 1.0).unwrap();
        let mut rng = RngStream::new(7, 0);
        for _ in 0..10_000 {
            let x = crate::env::sample_unit_vector(10, &mut rng);
            s.rank_one_update(&x).unwrap();
        }
        let direct = s.v().clone().try_inverse().unwrap();
        assert!((s.v_inv() - &direct).amax() < 1e-8);
        assert!(s.identity_residual() < 1e-8);
        let expected_log_det = s.v().clone().cholesky().unwrap().determinant().ln();
        assert_relative_eq!(s.log_det(), expected_log_det, max_relative = 1e-8);
    }

    #[test]
    fn quad_form_examples() {
        let s = SpdState::init(2, 1.0).unwrap();
        let y = e(2, 0) - e(2, 1);
        assert_relative_eq!(s.quad_form(&y).unwrap(), 2.0);

        let s4 = SpdState::init(2, 4.0).unwrap();
        assert_relative_eq!(s4.quad_form(&(e(2, 1) - e(2, 0))).unwrap(), 0.5);

        let mut s6 = SpdState::init(2, 1.0).unwrap();
        for _ in 0..5 {
            s6.rank_one_update(&e(2, 0)).unwrap();
        }
        assert_relative_eq!(s6.quad_form(&e(2, 0)).unwrap(), 1.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn quad_form_bounded_by_euclidean_over_lambda() {
        let mut s = SpdState::init(3, 0.7).unwrap();
        let mut rng = RngStream::new(3, 1);
        for _ in 0..50 {
            let x = crate::env::sample_unit_vector(3, &mut rng);
            s.rank_one_update(&x).unwrap();
            let y = crate::env::sample_unit_vector(3, &mut rng) * 2.0;
            let q = s.quad_form(&y).unwrap();
            assert!(q >= 0.0);
            assert!(q <= y.norm_squared() / 0.7 + 1e-12);
        }
    }

    #[test]
    fn whitened_score_examples() {
        let s = SpdState::init(2, 1.0).unwrap();
        let y = e(2, 0) - e(2, 1);
        assert_relative_eq!(
            s.whitened_score(&e(2, 0), &y).unwrap(),
            1.0 / 2.0_f64.sqrt(),
            max_relative = 1e-15
        );

        let s3 = SpdState::init(3, 1.0).unwrap();
        let y3 = e(3, 0) - e(3, 1);
        assert_eq!(s3.whitened_score(&e(3, 2), &y3).unwrap(), 0.0);

        // x = (cos w, sin w), y = e1 - x at w = pi/6; value from direct
        // evaluation of |x'y|/sqrt(1+x'x) = (1-cos w)/sqrt(2).
        let w = std::f64::consts::PI / 6.0;
        let x = DVector::from_vec(vec![w.cos(), w.sin()]);
        let y = e(2, 0) - &x;
        assert_relative_eq!(
            s.whitened_score(&x, &y).unwrap(),
            0.09473434549075299,
            max_relative = 1e-12
        );
    }

    #[test]
    fn whitened_score_scales_linearly_in_y() {
        let mut s = SpdState::init(2, 2.0).unwrap();
        s.rank_one_update(&e(2, 0)).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let y = DVector::from_vec(vec![0.3, -0.4]);
        let one = s.whitened_score(&x, &y).unwrap();
        let scaled = s.whitened_score(&x, &(&y * 7.5)).unwrap();
        assert_relative_eq!(scaled, 7.5 * one, max_relative = 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = SpdState::init(2, 1.0).unwrap();
        assert!(s.rank_one_update(&e(3, 0)).is_err());
        assert!(s.quad_form(&e(3, 0)).is_err());
        assert!(s.whitened_score(&e(2, 0), &e(3, 0)).is_err());
    }
}
