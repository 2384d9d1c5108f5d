use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;

use crate::error::{IlbError, Result};
use crate::nn::Matrix;
use crate::patternnet::SimilarityMatrix;
use crate::rng::seeded;

/// (A + Aᵀ) / 2.
pub fn symmetrize(a: &SimilarityMatrix) -> Matrix {
    let v = a.values();
    (v + &v.t()) * 0.5
}

/// I − D^{-1/2} A D^{-1/2} with D the row sums of `a_sym`.
pub fn normalized_laplacian(a_sym: &Matrix) -> Result<Matrix> {
    let n = a_sym.nrows();
    if a_sym.ncols() != n {
        return Err(IlbError::Shape(format!("adjacency is {:?}", a_sym.dim())));
    }
    if let Some(v) = a_sym.iter().find(|v| !(**v >= 0.0)) {
        return Err(IlbError::Domain(format!("negative edge weight {v}")));
    }
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, row) in a_sym.rows().into_iter().enumerate() {
        let d = row.sum();
        if d <= 0.0 {
            return Err(IlbError::IsolatedNode(i));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        let off = -a_sym[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 + off
        } else {
            off
        }
    }))
}

/// Ascending eigenvalues and matching orthonormal eigenvectors (as columns)
/// of a symmetric matrix.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(IlbError::Shape(format!("matrix is {:?}", m.dim())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(IlbError::Numerical("non-finite matrix entry".into()));
    }
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, 10_000)
        .ok_or_else(|| IlbError::Numerical("eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let values = order.iter().map(|i| eig.eigenvalues[*i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigenvectors of the `k` smallest eigenvalues of `l`, one per column, each
/// signed so that its largest-magnitude entry is positive.
pub fn spectral_embed(l: &Matrix, k: usize) -> Result<Matrix> {
    let n = l.nrows();
    if k == 0 || k > n {
        return Err(IlbError::Domain(format!("k = {k} outside 1..={n}")));
    }
    let (_, vectors) = symmetric_eigen(l)?;
    let mut out = vectors.slice(ndarray::s![.., ..k]).to_owned();
    for mut col in out.columns_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(out)
}

const KMEANS_ITERATIONS: usize = 100;
const KMEANS_RESTARTS: usize = 10;

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: ndarray::ArrayView1<f64>, centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_centers<R: Rng>(points: &Matrix, k: usize, rng: &mut R) -> Option<Matrix> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    for c in 1..k {
        let chosen = centers.slice(ndarray::s![..c, ..]).to_owned();
        let d2: Vec<f64> = points.rows().into_iter().map(|p| nearest(p, &chosen).1).collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.row_mut(c).assign(&points.row(pick));
    }
    Some(centers)
}

fn lloyd(points: &Matrix, mut centers: Matrix) -> Option<Vec<usize>> {
    let k = centers.nrows();
    let mut assign: Vec<usize> = points.rows().into_iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..KMEANS_ITERATIONS {
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (p, a) in points.rows().into_iter().zip(&assign) {
            let mut row = sums.row_mut(*a);
            row += &p;
            counts[*a] += 1;
        }
        if counts.contains(&0) {
            return None;
        }
        for (c, count) in counts.iter().enumerate() {
            let mean = &sums.row(c) / *count as f64;
            centers.row_mut(c).assign(&mean);
        }
        let next: Vec<usize> = points.rows().into_iter().map(|p| nearest(p, &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let mut counts = vec![0usize; k];
    for a in &assign {
        counts[*a] += 1;
    }
    (!counts.contains(&0)).then_some(assign)
}

/// Lloyd's algorithm from k-means++ seeds, restarted when a cluster empties.
pub fn kmeans(points: &Matrix, clusters: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.nrows();
    if clusters == 0 || n < clusters.max(2) {
        return Err(IlbError::Domain(format!("{n} points for {clusters} clusters")));
    }
    let mut rng = seeded(seed);
    for _ in 0..KMEANS_RESTARTS {
        let Some(centers) = plus_plus_centers(points, clusters, &mut rng) else {
            continue;
        };
        if let Some(assign) = lloyd(points, centers) {
            return Ok(assign);
        }
    }
    Err(IlbError::DegenerateClustering(format!(
        "no non-empty {clusters}-way split after {KMEANS_RESTARTS} restarts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sim(values: Matrix) -> SimilarityMatrix {
        SimilarityMatrix::new(values).unwrap()
    }

    #[test]
    fn symmetrize_cases() {
        let a = sim(array![[0.8, 0.2], [0.4, 0.6]]);
        let s = symmetrize(&a);
        assert!((s[[0, 1]] - 0.3).abs() < 1e-15 && (s[[1, 0]] - 0.3).abs() < 1e-15);
        let sym = sim(array![[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(symmetrize(&sym), *sym.values());
        let d = &s - &s.t();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn laplacian_two_nodes() {
        let l = normalized_laplacian(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(l, array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_complete_graph_spectrum() {
        let a = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let (vals, _) = symmetric_eigen(&normalized_laplacian(&a).unwrap()).unwrap();
        for (v, e) in vals.iter().zip([0.0, 1.5, 1.5]) {
            assert!((v - e).abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn laplacian_isolated_node() {
        let a = array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert!(matches!(normalized_laplacian(&a), Err(IlbError::IsolatedNode(2))));
    }

    #[test]
    fn first_eigenvector_is_sqrt_degree() {
        let a = array![[0.0, 2.0, 1.0], [2.0, 0.0, 0.5], [1.0, 0.5, 0.0]];
        let l = normalized_laplacian(&a).unwrap();
        let e = spectral_embed(&l, 1).unwrap();
        let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum().sqrt()).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..3 {
            assert!((e[[i, 0]] - d[i] / norm).abs() < 1e-10);
        }
    }

    #[test]
    fn two_triangles_separate() {
        let mut a = Matrix::zeros((6, 6));
        for (i, j) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        let e = spectral_embed(&normalized_laplacian(&a).unwrap(), 2).unwrap();
        let labels = kmeans(&e, 2, 3).unwrap();
        assert!(labels[0] == labels[1] && labels[1] == labels[2]);
        assert!(labels[3] == labels[4] && labels[4] == labels[5]);
        assert_ne!(labels[0], labels[3]);
        let dot: f64 = e.column(0).dot(&e.column(1));
        assert!(dot.abs() < 1e-9);
    }

    fn cost(points: &Matrix, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for c in 0..2 {
            let members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == c).collect();
            if members.is_empty() {
                return f64::INFINITY;
            }
            let mut mean = ndarray::Array1::<f64>::zeros(points.ncols());
            for m in &members {
                mean += &points.row(*m);
            }
            mean /= members.len() as f64;
            total += members.iter().map(|m| sq_dist(points.row(*m), mean.view())).sum::<f64>();
        }
        total
    }

    #[test]
    fn kmeans_matches_brute_force_on_separated_clouds() {
        let points = array![
            [0.0, 0.1],
            [0.2, -0.1],
            [-0.1, 0.0],
            [0.1, 0.2],
            [5.0, 5.1],
            [5.2, 4.9],
            [4.9, 5.0],
            [5.1, 5.2]
        ];
        let labels = kmeans(&points, 2, 1).unwrap();
        let best = (1u32..(1 << 7))
            .map(|mask| {
                let l: Vec<usize> = (0..8).map(|i| if i == 7 { 0 } else { ((mask >> i) & 1) as usize }).collect();
                cost(&points, &l)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((cost(&points, &labels) - best).abs() < 1e-12);
        assert!(labels.iter().all(|l| *l < 2));
    }

    #[test]
    fn kmeans_identical_points_is_degenerate() {
        let points = Matrix::from_elem((5, 2), 0.3);
        assert!(matches!(kmeans(&points, 2, 0), Err(IlbError::DegenerateClustering(_))));
    }

    #[test]
    fn kmeans_is_deterministic() {
        let points = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 13 + j * 7) as f64).sin());
        assert_eq!(kmeans(&points, 2, 9).unwrap(), kmeans(&points, 2, 9).unwrap());
    }
}
