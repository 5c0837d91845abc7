//! Small dense helpers: nullspace by Gaussian elimination and Gram-Schmidt.

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

/// Orthonormal basis of `{x : A x = 0}`.
///
/// Reduced row echelon form with partial pivoting; pivots below
/// `rel_tol * max|pivot|` count as zero.
pub fn nullspace(a: &Dense, rel_tol: f64) -> Vec<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    let mut r = a.data.clone();
    let scale = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = rel_tol * scale.max(1.0);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row >= m {
            break;
        }
        let (best, best_val) = (row..m)
            .map(|i| (i, r[i * n + col].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_val <= tol {
            continue;
        }
        if best != row {
            for j in 0..n {
                r.swap(best * n + j, row * n + j);
            }
        }
        let p = r[row * n + col];
        for j in 0..n {
            r[row * n + j] /= p;
        }
        for i in 0..m {
            if i != row {
                let f = r[i * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        r[i * n + j] -= f * r[row * n + j];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let mut is_pivot = vec![false; n];
    for &c in &pivots {
        is_pivot[c] = true;
    }
    let mut basis = Vec::new();
    for free in (0..n).filter(|&c| !is_pivot[c]) {
        let mut v = vec![0.0; n];
        v[free] = 1.0;
        for (k, &pc) in pivots.iter().enumerate() {
            v[pc] = -r[k * n + free];
        }
        basis.push(v);
    }
    orthonormalize(basis)
}

/// Modified Gram-Schmidt, applied twice; drops numerically dependent vectors.
pub fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        let norm0 = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = dot(&v, q);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * norm0.max(1e-300) {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when `A` is numerically singular.
pub fn solve(a: &Dense, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[piv * n + col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        for i in col + 1..n {
            let f = m[i * n + col] / m[col * n + col];
            if f != 0.0 {
                for j in col..n {
                    m[i * n + j] -= f * m[col * n + j];
                }
                x[i] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i * n + j] * x[j]).sum();
        x[i] = (x[i] - s) / m[i * n + i];
    }
    Some(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
