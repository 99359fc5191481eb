//! Dense symmetric eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// Column `j` of `vectors` is the unit eigenvector for `values[j]`. Each
/// eigenvector's sign is fixed so that its largest-magnitude entry (earliest
/// index on ties) is positive, which makes downstream results independent of
/// the solver's sign convention.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(matrix: &DMatrix<f64>) -> Self {
        assert!(matrix.is_square(), "eigendecomposition needs a square matrix");
        let n = matrix.nrows();
        if n == 0 {
            return Self {
                values: Vec::new(),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        // Symmetrize explicitly; the solver only reads the lower triangle.
        let sym = (matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .total_cmp(&eig.eigenvalues[b])
                .then(a.cmp(&b))
        });

        let mut vectors = DMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (dst, &src) in order.iter().enumerate() {
            values.push(eig.eigenvalues[src]);
            let mut col = eig.eigenvectors.column(src).into_owned();
            let mut pivot = 0;
            for i in 1..n {
                if col[i].abs() > col[pivot].abs() + 1e-12 {
                    pivot = i;
                }
            }
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            vectors.set_column(dst, &col);
        }
        Self { values, vectors }
    }

    /// Largest `‖M v − λ v‖₂` over all pairs.
    pub fn max_residual(&self, matrix: &DMatrix<f64>) -> f64 {
        (0..self.values.len())
            .map(|j| {
                let v = self.vectors.column(j);
                (matrix * v - v * self.values[j]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.values.clone()));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

/// Largest absolute deviation of `XᵀX` from the identity.
pub fn orthonormality_error(columns: &DMatrix<f64>) -> f64 {
    let gram = columns.transpose() * columns;
    let k = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}
