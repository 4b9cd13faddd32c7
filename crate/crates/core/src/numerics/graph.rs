use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XmsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    IntraModalityKnn,
    SameClassIntrinsic,
    DiffClassPenalty,
    MultimodalBlock,
}

/// Heat-kernel bandwidth for kNN affinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median Euclidean length of the kNN edges.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub affinity: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub kind: GraphKind,
}

impl GraphSpec {
    fn from_affinity(affinity: DMatrix<f64>, kind: GraphKind) -> Self {
        let laplacian = laplacian(&affinity);
        GraphSpec {
            affinity,
            laplacian,
            kind,
        }
    }
}

/// `L = D - W` with `D` the diagonal of row sums.
pub fn laplacian(affinity: &DMatrix<f64>) -> DMatrix<f64> {
    // per-row sums, accumulated column by column
    let deg = affinity.column_sum();
    let mut l = -affinity;
    for (i, d) in deg.iter().enumerate() {
        l[(i, i)] += d;
    }
    l
}

/// Squared Euclidean distances between the columns of `x`.
pub fn pairwise_sq_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let gram = x.transpose() * x;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            // read one triangle so the result is exactly symmetric
            (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i.min(j), i.max(j))]).max(0.0)
        }
    })
}

/// Indices of the `k` nearest candidates of `i` (ties by index), excluding `i`.
fn nearest(dist: &DMatrix<f64>, i: usize, k: usize, allow: impl Fn(usize) -> bool) -> Vec<usize> {
    // column i equals row i and is contiguous
    let col = dist.column(i);
    let mut cand: Vec<usize> = (0..dist.ncols()).filter(|&j| j != i && allow(j)).collect();
    let cmp = |a: &usize, b: &usize| col[*a].total_cmp(&col[*b]).then(a.cmp(b));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand
}

fn neighbor_lists(dist: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    (0..dist.ncols()).map(|i| nearest(dist, i, k, |_| true)).collect()
}

/// Symmetrized kNN graph with heat-kernel weights `exp(-‖xi - xj‖² / σ²)` on
/// kNN edges; symmetrization keeps `max(w_ij, w_ji)`.
pub fn knn_graph(x: &DMatrix<f64>, k: usize, bandwidth: Bandwidth) -> Result<GraphSpec> {
    let n = x.ncols();
    if k == 0 {
        return Err(XmsError::InvalidArgument("kNN graph needs k >= 1".into()));
    }
    if k >= n {
        return Err(XmsError::InvalidArgument(format!(
            "kNN graph needs k < n, got k={k}, n={n}"
        )));
    }
    let dist = pairwise_sq_distances(x);
    let lists = neighbor_lists(&dist, k);
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 => s,
        Bandwidth::Fixed(s) => {
            return Err(XmsError::InvalidArgument(format!("bandwidth must be > 0, got {s}")));
        }
        Bandwidth::Median => {
            let mut lens: Vec<f64> = lists
                .iter()
                .enumerate()
                .flat_map(|(i, l)| l.iter().map(move |&j| (i, j)))
                .map(|(i, j)| dist[(i, j)].sqrt())
                .collect();
            lens.sort_by(f64::total_cmp);
            let med = median_sorted(&lens);
            if med > 0.0 {
                med
            } else {
                // all kNN edges have zero length: fall back to any positive distance
                lens.iter().copied().find(|&v| v > 0.0).unwrap_or(1.0)
            }
        }
    };
    let s2 = sigma * sigma;
    let mut w = DMatrix::zeros(n, n);
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            let v = (-dist[(i, j)] / s2).exp();
            if v > w[(i, j)] {
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Ok(GraphSpec::from_affinity(w, GraphKind::IntraModalityKnn))
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        m if m % 2 == 1 => v[m / 2],
        m => 0.5 * (v[m / 2 - 1] + v[m / 2]),
    }
}

/// Binary label-aware kNN graph: each sample links to its `k` nearest
/// same-class neighbors (`same_class = true`, intrinsic graph) or its `k`
/// nearest different-class neighbors (penalty graph). Symmetrized.
pub fn class_graph(x: &DMatrix<f64>, labels: &[usize], k: usize, same_class: bool) -> Result<GraphSpec> {
    let n = x.ncols();
    if k == 0 {
        return Err(XmsError::InvalidArgument("class graph needs k >= 1".into()));
    }
    if labels.len() != n {
        return Err(XmsError::PairCountMismatch {
            detail: format!("{} labels for {} samples", labels.len(), n),
        });
    }
    let dist = pairwise_sq_distances(x);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in nearest(&dist, i, k, |j| (labels[j] == labels[i]) == same_class) {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
    }
    let kind = if same_class {
        GraphKind::SameClassIntrinsic
    } else {
        GraphKind::DiffClassPenalty
    };
    Ok(GraphSpec::from_affinity(w, kind))
}

/// Joint `2n × 2n` graph over both modalities (modality `a` first).
///
/// Diagonal blocks are the heat-kernel kNN graphs of each modality. The
/// cross block links every true pair `(a_i, b_i)` with weight 1, and links
/// `a_i` to `b_j` with weight 1 when the two share a class and `j` is among
/// the `k` nearest neighbours of `i` in either modality.
pub fn multimodal_graph(xa: &DMatrix<f64>, xb: &DMatrix<f64>, labels: &[usize], k: usize) -> Result<GraphSpec> {
    let n = xa.ncols();
    if k == 0 {
        return Err(XmsError::InvalidArgument("multimodal graph needs k >= 1".into()));
    }
    if xb.ncols() != n || labels.len() != n {
        return Err(XmsError::PairCountMismatch {
            detail: format!("{} / {} / {} samples", n, xb.ncols(), labels.len()),
        });
    }
    let kk = k.min(n.saturating_sub(1));
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    if kk > 0 {
        let ga = knn_graph(xa, kk, Bandwidth::Median)?;
        let gb = knn_graph(xb, kk, Bandwidth::Median)?;
        w.view_mut((0, 0), (n, n)).copy_from(&ga.affinity);
        w.view_mut((n, n), (n, n)).copy_from(&gb.affinity);
    }

    let na = neighbor_lists(&pairwise_sq_distances(xa), kk);
    let nb = neighbor_lists(&pairwise_sq_distances(xb), kk);
    let mut link = |i: usize, j: usize| {
        w[(i, n + j)] = 1.0;
        w[(n + j, i)] = 1.0;
    };
    for i in 0..n {
        link(i, i);
        for &j in na[i].iter().chain(nb[i].iter()) {
            if labels[i] == labels[j] {
                link(i, j);
                link(j, i);
            }
        }
    }
    Ok(GraphSpec::from_affinity(w, GraphKind::MultimodalBlock))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sym_eigen_desc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_laplacian_ok(g: &GraphSpec) {
        let l = &g.laplacian;
        assert!((l - l.transpose()).amax() < 1e-12);
        for i in 0..l.nrows() {
            assert!(l.row(i).sum().abs() < 1e-10);
            assert_eq!(g.affinity[(i, i)], 0.0);
        }
        let (vals, _) = sym_eigen_desc(l);
        assert!(vals.min() >= -1e-8, "min eigenvalue {}", vals.min());
    }

    #[test]
    fn far_clusters_have_no_cross_edges() {
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 0.1, 100.0, 100.1]);
        let g = knn_graph(&x, 1, Bandwidth::Median).unwrap();
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(g.affinity[(i, j)], 0.0);
            }
        }
        assert!(g.affinity[(0, 1)] > 0.0 && g.affinity[(2, 3)] > 0.0);
        assert_laplacian_ok(&g);
    }

    #[test]
    fn collinear_points_match_hand_formula() {
        // points 0, 1, 3 on a line; k = 2 connects everything.
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 3.0]);
        let g = knn_graph(&x, 2, Bandwidth::Median).unwrap();
        // kNN edge lengths: from 0: {1,3}, from 1: {1,2}, from 3: {2,3} → median 2
        let s2 = 4.0;
        let expect = |d2: f64| (-d2 / s2).exp();
        assert!((g.affinity[(0, 1)] - expect(1.0)).abs() < 1e-15);
        assert!((g.affinity[(1, 2)] - expect(4.0)).abs() < 1e-15);
        assert!((g.affinity[(0, 2)] - expect(9.0)).abs() < 1e-15);
        let ones = nalgebra::DVector::from_element(3, 1.0);
        assert!((&g.laplacian * ones).amax() < 1e-15);
    }

    #[test]
    fn knn_argument_errors() {
        let x = DMatrix::zeros(2, 3);
        assert!(knn_graph(&x, 0, Bandwidth::Median).is_err());
        assert!(knn_graph(&x, 3, Bandwidth::Median).is_err());
        assert!(multimodal_graph(&x, &x, &[1, 1, 1], 0).is_err());
    }

    #[test]
    fn multimodal_two_samples_distinct_classes_links_true_pairs_only() {
        let xa = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let xb = DMatrix::from_row_slice(1, 2, &[0.0, 5.0]);
        let g = multimodal_graph(&xa, &xb, &[1, 2], 1).unwrap();
        let cross = g.affinity.view((0, 2), (2, 2)).into_owned();
        assert_eq!(cross, DMatrix::identity(2, 2));
        assert_laplacian_ok(&g);
    }

    #[test]
    fn multimodal_single_class_full_k_is_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 6;
        let xa = DMatrix::from_fn(3, n, |_, _| rng.random::<f64>());
        let xb = DMatrix::from_fn(2, n, |_, _| rng.random::<f64>());
        let g = multimodal_graph(&xa, &xb, &vec![1; n], n - 1).unwrap();
        let cross = g.affinity.view((0, n), (n, n)).into_owned();
        assert_eq!(cross, DMatrix::from_element(n, n, 1.0));
        assert_laplacian_ok(&g);
    }

    #[test]
    fn random_graphs_are_valid_laplacians() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for t in 0..20 {
            let n = 8 + t;
            let xa = DMatrix::from_fn(4, n, |_, _| rng.random::<f64>());
            let xb = DMatrix::from_fn(3, n, |_, _| rng.random::<f64>());
            let labels: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
            assert_laplacian_ok(&multimodal_graph(&xa, &xb, &labels, 3).unwrap());
            assert_laplacian_ok(&knn_graph(&xa, 4, Bandwidth::Median).unwrap());
            assert_laplacian_ok(&class_graph(&xa, &labels, 2, true).unwrap());
            assert_laplacian_ok(&class_graph(&xa, &labels, 5, false).unwrap());
        }
    }

    #[test]
    fn class_graphs_respect_labels() {
        let x = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 2.0, 3.0]);
        let labels = [1, 2, 1, 2];
        let intr = class_graph(&x, &labels, 1, true).unwrap();
        let pen = class_graph(&x, &labels, 1, false).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if intr.affinity[(i, j)] > 0.0 {
                    assert_eq!(labels[i], labels[j]);
                }
                if pen.affinity[(i, j)] > 0.0 {
                    assert_ne!(labels[i], labels[j]);
                }
            }
        }
    }
}
