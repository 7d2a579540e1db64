//! Least-squares kernel shared by every estimator.
//!
//! Systems are reduced with a Householder QR and the small triangular factor is
//! solved by back substitution, or through its SVD (minimum-norm minimizer) when the
//! design is rank deficient. The explicit normal-equations formula only appears
//! in [`oracle_normal_equations`], kept for differential testing.

use nalgebra::linalg::SVD;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below `RANK_RCOND * s_max` are treated as zero.
pub const RANK_RCOND: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub coefficients: DVector<f64>,
    pub residual_sse: f64,
    pub rank_deficient: bool,
}

/// `Qᵀ`-reduced form of a least-squares problem.
///
/// `‖y − Xh‖² = ‖qty − r·h‖² + residual_floor` for every `h`, so reduced systems
/// can be stacked and solved in place of the raw trials.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub r: DMatrix<f64>,
    pub qty: DVector<f64>,
    pub residual_floor: f64,
}

fn check_system(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "least squares needs N >= 1 and d >= 1, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but response has length {}",
            x.nrows(),
            y.len()
        )));
    }
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite least-squares input".into(),
        ));
    }
    Ok(())
}

impl ReducedSystem {
    /// Minimum-norm least-squares solution of this system.
    pub fn solve(&self) -> Result<LinearFit> {
        solve_reduced(self)
    }
}

/// Reduces `(X, y)` with a thin Householder QR.
pub fn reduce(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<ReducedSystem> {
    check_system(x, y)?;
    Ok(reduce_unchecked(x.clone(), y.clone()))
}

fn reduce_unchecked(x: DMatrix<f64>, mut y: DVector<f64>) -> ReducedSystem {
    let (n, p) = x.shape();
    if n <= p {
        return ReducedSystem {
            r: x,
            qty: y,
            residual_floor: 0.0,
        };
    }
    let qr = x.qr();
    qr.q_tr_mul(&mut y);
    let r = qr.r();
    let residual_floor = y.rows(p, n - p).norm_squared();
    ReducedSystem {
        r,
        qty: y.rows(0, p).into_owned(),
        residual_floor,
    }
}

/// Minimum-norm minimizer of `‖qty − r·h‖`.
fn solve_reduced(sys: &ReducedSystem) -> Result<LinearFit> {
    let p = sys.r.ncols();
    let svd = checked_svd(&sys.r)?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let cutoff = RANK_RCOND * s_max;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count();
    let triangular = sys.r.nrows() == p && (0..p).all(|j| (j + 1..p).all(|i| sys.r[(i, j)] == 0.0));
    let coefficients = match sys.r.solve_upper_triangular(&sys.qty) {
        Some(h) if rank == p && triangular => h,
        _ => {
            let mut h = DVector::zeros(p);
            for (i, &s) in svd.singular_values.iter().enumerate() {
                if s > cutoff && s > 0.0 {
                    h.axpy(u.column(i).dot(&sys.qty) / s, &v_t.row(i).transpose(), 1.0);
                }
            }
            h
        }
    };
    let residual_sse = (&sys.qty - &sys.r * &coefficients).norm_squared() + sys.residual_floor;
    Ok(LinearFit {
        coefficients,
        residual_sse,
        rank_deficient: rank < p,
    })
}

/// Full SVD whose factors are checked to reproduce `m`.
///
/// The default nalgebra iteration occasionally stops on a wrong factorization
/// of triangular matrices with several exact zero singular values, so the
/// result is verified and recomputed with a tighter convergence threshold, or
/// through the transpose, when it does not reconstruct the input.
pub fn checked_svd(m: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let scale = m.norm();
    let ok = |svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>| match svd.clone().recompose() {
        Ok(back) => (back - m).norm() <= 1e-8 * scale.max(f64::MIN_POSITIVE),
        Err(_) => false,
    };
    let first = m.clone().svd(true, true);
    if ok(&first) {
        return Ok(first);
    }
    if let Some(tight) = m
        .clone()
        .try_svd(true, true, f64::EPSILON * 1e-3, 1_000_000)
    {
        if ok(&tight) {
            return Ok(tight);
        }
    }
    let t = m.transpose().svd(true, true);
    let flipped = SVD {
        u: t.v_t.map(|v| v.transpose()),
        v_t: t.u.map(|u| u.transpose()),
        singular_values: t.singular_values,
    };
    if ok(&flipped) {
        return Ok(flipped);
    }
    Err(Error::Singular(format!(
        "SVD of a {}x{} matrix did not converge",
        m.nrows(),
        m.ncols()
    )))
}

/// Ordinary least squares `argmin ‖y − Xh‖²`.
///
/// Falls back to the minimum-norm minimizer (and sets `rank_deficient`) when
/// `XᵀX` is numerically singular.
pub fn solve_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearFit> {
    check_system(x, y)?;
    solve_reduced(&reduce_unchecked(x.clone(), y.clone()))
}

/// Solves the pooled problem over several reduced systems.
pub fn solve_stacked(systems: &[&ReducedSystem]) -> Result<LinearFit> {
    let Some(first) = systems.first() else {
        return Err(Error::InvalidArgument("no systems to stack".into()));
    };
    let p = first.r.ncols();
    if systems.iter().any(|s| s.r.ncols() != p) {
        return Err(Error::Dimension("stacked systems differ in width".into()));
    }
    let rows: usize = systems.iter().map(|s| s.r.nrows()).sum();
    let mut r = DMatrix::zeros(rows, p);
    let mut qty = DVector::zeros(rows);
    let mut at = 0;
    let mut floor = 0.0;
    for s in systems {
        let k = s.r.nrows();
        r.rows_mut(at, k).copy_from(&s.r);
        qty.rows_mut(at, k).copy_from(&s.qty);
        floor += s.residual_floor;
        at += k;
    }
    let mut reduced = reduce_unchecked(r, qty);
    reduced.residual_floor += floor;
    solve_reduced(&reduced)
}

/// Weighted least squares `argmin Σ wᵢ (yᵢ − hᵀxᵢ)²` with one weight per row.
pub fn solve_weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
) -> Result<LinearFit> {
    check_system(x, y)?;
    if weights.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} rows",
            weights.len(),
            y.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let mut xs = x.clone();
    let mut ys = y.clone();
    for (i, &w) in weights.iter().enumerate() {
        if w != 1.0 {
            let s = w.sqrt();
            xs.row_mut(i).scale_mut(s);
            ys[i] *= s;
        }
    }
    solve_reduced(&reduce_unchecked(xs, ys))
}

/// `ŷ = X h`.
pub fn predict(h: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != h.len() {
        return Err(Error::InvalidArgument(format!(
            "predictor width {} does not match coefficient length {}",
            x.ncols(),
            h.len()
        )));
    }
    Ok(x * h)
}

/// `log N(x | mean, variance)`.
pub fn gaussian_log_density(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "variance must be positive, got {variance}"
        )));
    }
    let r = x - mean;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * variance).ln() - r * r / (2.0 * variance))
}

/// Test oracle: `h = (XᵀX)⁻¹ Xᵀ y` by Gaussian elimination with partial
/// pivoting. Fails on singular `XᵀX` instead of falling back.
pub fn oracle_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearFit> {
    oracle_weighted_normal_equations(x, y, &vec![1.0; y.len()])
}

/// Test oracle: `h = (XᵀWX)⁻¹ XᵀW y`, same elimination as
/// [`oracle_normal_equations`]; `residual_sse` is the weighted sum.
pub fn oracle_weighted_normal_equations(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
) -> Result<LinearFit> {
    check_system(x, y)?;
    if weights.len() != y.len() {
        return Err(Error::InvalidArgument(
            "weight count differs from row count".into(),
        ));
    }
    let (n, p) = x.shape();
    // Normal equations accumulated by explicit loops, independent of the QR path.
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..n).map(|k| weights[k] * x[(k, i)] * x[(k, j)]).sum();
        }
        a[i][p] = (0..n).map(|k| weights[k] * x[(k, i)] * y[k]).sum();
    }
    let scale = a
        .iter()
        .flat_map(|r| r[..p].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        if a[pivot][col].abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular("XᵀX is singular".into()));
        }
        a.swap(col, pivot);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for k in col..=p {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut h = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * h[j]).sum();
        h[i] = (a[i][p] - s) / a[i][i];
    }
    let coefficients = DVector::from_vec(h);
    let residual_sse = (0..n)
        .map(|k| {
            let r = y[k] - (0..p).map(|j| x[(k, j)] * coefficients[j]).sum::<f64>();
            weights[k] * r * r
        })
        .sum();
    Ok(LinearFit {
        coefficients,
        residual_sse,
        rank_deficient: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn identity_design() {
        let fit = solve_least_squares(
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![3.0, -1.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.coefficients[1], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.residual_sse, 0.0, epsilon = 1e-24);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn exact_and_midpoint_fits() {
        let fit =
            solve_least_squares(&col(&[1.0, 2.0]), &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.residual_sse, 0.0, epsilon = 1e-24);

        let fit =
            solve_least_squares(&col(&[1.0, 1.0]), &DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.residual_sse, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_reproduces_the_same_examples() {
        let cases = [
            (
                DMatrix::identity(2, 2),
                vec![3.0, -1.0],
                vec![3.0, -1.0],
                0.0,
            ),
            (col(&[1.0, 2.0]), vec![2.0, 4.0], vec![2.0], 0.0),
            (col(&[1.0, 1.0]), vec![1.0, 3.0], vec![2.0], 2.0),
        ];
        for (x, y, h, sse) in cases {
            let fit = oracle_normal_equations(&x, &DVector::from_vec(y)).unwrap();
            for (a, b) in fit.coefficients.iter().zip(&h) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
            assert_abs_diff_eq!(fit.residual_sse, sse, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_refuses_singular_systems() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            oracle_normal_equations(&x, &y),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // Columns identical: every h with h0 + h1 = 1 fits; min norm is (1/2, 1/2).
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = solve_least_squares(&x, &y).unwrap();
        assert!(fit.rank_deficient);
        assert_abs_diff_eq!(fit.coefficients[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.5, epsilon = 1e-12);

        // Fewer rows than columns.
        let x = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let fit = solve_least_squares(&x, &DVector::from_vec(vec![5.0])).unwrap();
        assert!(fit.rank_deficient);
        assert_abs_diff_eq!(fit.coefficients[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 0.8, epsilon = 1e-12);

        let fit = solve_least_squares(&DMatrix::zeros(3, 2), &y).unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.coefficients, DVector::zeros(2));
        assert_abs_diff_eq!(fit.residual_sse, 14.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let y = DVector::from_vec(vec![1.0, f64::INFINITY]);
        assert!(solve_least_squares(&DMatrix::identity(2, 2), &y).is_err());
        assert!(solve_least_squares(&DMatrix::identity(2, 2), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn weighted_reductions() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 5.0]);
        let plain = solve_least_squares(&x, &y).unwrap();
        let unit = solve_weighted_least_squares(&x, &y, &[1.0; 3]).unwrap();
        assert_eq!(plain, unit);

        let x = DMatrix::from_row_slice(2, 1, &[2.0, 1.0]);
        let y = DVector::from_vec(vec![6.0, 10.0]);
        let fit = solve_weighted_least_squares(&x, &y, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 3.0, epsilon = 1e-14);

        assert!(matches!(
            solve_weighted_least_squares(&x, &y, &[0.0, 0.0]),
            Err(Error::DegenerateWeights)
        ));
        assert!(solve_weighted_least_squares(&x, &y, &[1.0, -1.0]).is_err());
        assert!(solve_weighted_least_squares(&x, &y, &[1.0]).is_err());
    }

    #[test]
    fn stacked_reduced_systems_match_direct_pooling() {
        let x1 = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, 0.1]);
        let y1 = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let x2 = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let y2 = DVector::from_vec(vec![0.7]);
        let direct = solve_least_squares(
            &DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -1.0, 2.0, 0.3, 0.1, 2.0, -1.0]),
            &DVector::from_vec(vec![1.0, 2.0, -0.5, 0.7]),
        )
        .unwrap();
        let s1 = reduce(&x1, &y1).unwrap();
        let s2 = reduce(&x2, &y2).unwrap();
        let pooled = solve_stacked(&[&s1, &s2]).unwrap();
        assert_abs_diff_eq!(pooled.coefficients, direct.coefficients, epsilon = 1e-13);
        assert_abs_diff_eq!(pooled.residual_sse, direct.residual_sse, epsilon = 1e-12);
    }

    #[test]
    fn predict_examples() {
        let h = DVector::from_vec(vec![1.0, 0.0]);
        let x = DMatrix::from_row_slice(1, 2, &[5.0, 7.0]);
        assert_eq!(predict(&h, &x).unwrap()[0], 5.0);
        assert_eq!(predict(&DVector::zeros(2), &x).unwrap()[0], 0.0);
        assert!(predict(&DVector::zeros(3), &x).is_err());
    }

    #[test]
    fn log_density() {
        let peak = gaussian_log_density(1.3, 1.3, 1.0).unwrap();
        assert_abs_diff_eq!(peak, -0.918_938_533_204_672_7, epsilon = 1e-15);
        let a = gaussian_log_density(2.0 + 0.7, 2.0, 0.3).unwrap();
        let b = gaussian_log_density(2.0 - 0.7, 2.0, 0.3).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        // ln N(1.5 | 0.2, 0.49), 40-digit reference.
        let v = gaussian_log_density(1.5, 0.2, 0.49).unwrap();
        assert_abs_diff_eq!(v, -2.286_753_385_184_307_7, epsilon = 1e-14);
        assert!(gaussian_log_density(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_log_density(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn checked_svd_reconstructs_rank_deficient_triangular_factors() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::seeded(77);
        for _ in 0..200 {
            let x = DMatrix::from_fn(150, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let h = DMatrix::from_fn(3, 15, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = (x * h).qr().r();
            let svd = checked_svd(&r).unwrap();
            let back = svd.recompose().unwrap();
            assert!((back - &r).norm() <= 1e-8 * r.norm());
        }
        assert_eq!(
            checked_svd(&DMatrix::zeros(2, 3))
                .unwrap()
                .singular_values
                .max(),
            0.0
        );
    }
}
