use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenpairs of a symmetric matrix in ascending order.
///
/// Each eigenvector is scaled so that its largest component is positive,
/// which keeps outputs reproducible.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (c, &k) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        let mut big = 0;
        for r in 0..n {
            if col[r].abs() > col[big].abs() + 1e-12 {
                big = r;
            }
        }
        let sign = if col[big] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vecs[(r, c)] = sign * col[r];
        }
    }
    (vals, vecs)
}

/// Ascending eigenvalues only.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let x = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
}
