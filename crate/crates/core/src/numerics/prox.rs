use nalgebra::{DMatrix, DVector};

/// `‖W‖₂₁ = Σ_i ‖row_i(W)‖₂`.
pub fn l21_norm(w: &DMatrix<f64>) -> f64 {
    w.row_iter().map(|r| r.norm()).sum()
}

/// Diagonal of the half-quadratic majorizer of the ℓ21 norm:
/// `D_ii = 1 / (2 · max(‖row_i(W)‖₂, eps))`.
///
/// With this weight, `tr(WᵀDW) + Σ_i max(‖w⁰_i‖, eps)/2` upper-bounds the
/// Huber-smoothed ℓ21 norm and touches it at the current iterate `W⁰`.
pub fn l21_reweight(w: &DMatrix<f64>, eps: f64) -> DVector<f64> {
    assert!(eps > 0.0, "l21_reweight needs eps > 0");
    DVector::from_iterator(w.nrows(), w.row_iter().map(|r| 0.5 / r.norm().max(eps)))
}

/// Singular value soft-thresholding `U · max(S - tau, 0) · Vᵀ`.
pub fn singular_value_shrink(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values.map(|s| (s - tau).max(0.0));
    u * DMatrix::from_diagonal(&s) * vt
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reweight_formula_and_clamp() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let d = l21_reweight(&w, 1e-12);
        assert_eq!(d.as_slice(), &[0.5, 0.25]);
        let z = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]);
        assert!((l21_reweight(&z, 1e-6)[0] - 5e5).abs() < 1e-6);
    }

    #[test]
    fn reweight_majorizes_l21() {
        // tr(WᵀDW) + Σ‖w⁰_i‖/2 ≥ ‖W‖₂₁ for any W, with equality at W = W⁰.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let w0 = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let w = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let d = l21_reweight(&w0, 1e-6);
            let offset: f64 = w0.row_iter().map(|r| 0.5 * r.norm().max(1e-6)).sum();
            let quad =
                |m: &DMatrix<f64>| -> f64 { (0..m.nrows()).map(|i| d[i] * m.row(i).norm_squared()).sum::<f64>() };
            assert!(quad(&w) + offset >= l21_norm(&w) - 1e-12);
            assert!((quad(&w0) + offset - l21_norm(&w0)).abs() < 1e-12);
        }
    }

    #[test]
    fn shrink_identity_and_annihilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::from_fn(4, 3, |_, _| rng.random::<f64>());
        assert!((singular_value_shrink(&m, 0.0) - &m).amax() < 1e-10);
        let smax = m.singular_values().max();
        assert!(singular_value_shrink(&m, smax).amax() < 1e-12);
    }

    #[test]
    fn shrink_rank_two_example() {
        // M = 3·u1·v1ᵀ + 1·u2·v2ᵀ with orthonormal u, v; tau = 2 → singular values [1, 0]
        let u = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        let v = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let m = &u * s * v.transpose();
        let out = singular_value_shrink(&m, 2.0);
        let mut sv: Vec<f64> = out.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!((sv[0] - 1.0).abs() < 1e-12);
        assert!(sv[1].abs() < 1e-12);
    }
}
