use super::matrix::{dot, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Haar-ish random orthogonal matrix: QR of a seeded standard-Gaussian matrix
/// with the sign convention that R's diagonal is positive, which makes the
/// output a deterministic function of `(n, seed)`.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    assert!(n >= 1, "n must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    // Modified Gram–Schmidt on columns, stored as rows of the transpose.
    let mut q = g.transpose(); // q.row(j) = column j
    for j in 0..n {
        for k in 0..j {
            let proj = dot(q.row(j), q.row(k));
            let (head, tail) = q.data_mut().split_at_mut(j * n);
            let qk = &head[k * n..(k + 1) * n];
            let qj = &mut tail[..n];
            for (a, b) in qj.iter_mut().zip(qk) {
                *a -= proj * b;
            }
        }
        let norm = dot(q.row(j), q.row(j)).sqrt();
        // Fix the sign of the corresponding R diagonal entry: flip the column
        // so that the projection of the original column onto it is positive.
        let sign = if dot(q.row(j), g.transpose().row(j)) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for v in q.row_mut(j) {
            *v *= sign / norm;
        }
    }
    q.transpose()
}
