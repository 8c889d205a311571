//! Dense Gaussian elimination with partial pivoting and iterative refinement.

/// Square row-major matrix.
#[derive(Debug, Clone)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.n + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.n + c]
    }
}

/// LU factors with the row permutation from partial pivoting.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &Matrix) -> Option<Self> {
        let n = a.n;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * 1e-14 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            for r in k + 1..n {
                let f = lu[(r, k)] / lu[(k, k)];
                lu[(r, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        let v = lu[(k, c)];
                        lu[(r, c)] -= f * v;
                    }
                }
            }
        }
        Some(Self { lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[(r, c)] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[(r, c)] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[(r, r)];
        }
        x
    }
}

/// Solves `a x = b`, refining until the max-norm residual is at most `tol` or refinement
/// stops helping. Returns `None` when `a` is numerically singular.
pub fn solve(a: &Matrix, b: &[f64], tol: f64) -> Option<Vec<f64>> {
    assert_eq!(a.n, b.len());
    let lu = Lu::factor(a)?;
    let mut x = lu.solve(b);
    let residual = |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let mut r = residual(&x);
    for _ in 0..8 {
        if norm(&r) <= tol {
            break;
        }
        let dx = lu.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let r_new = residual(&candidate);
        if norm(&r_new) >= norm(&r) {
            break;
        }
        x = candidate;
        r = r_new;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_needing_pivoting() {
        let mut a = Matrix::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, -1.0, 0.0], [3.0, 0.0, 4.0]];
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                a[(r, c)] = v;
            }
        }
        let x_true = [1.5, -2.0, 0.25];
        let b = a.mul_vec(&x_true);
        let x = solve(&a, &b, 1e-14).unwrap();
        for (got, want) in x.iter().zip(x_true) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_detected() {
        let mut a = Matrix::identity(2);
        a[(1, 1)] = 0.0;
        assert!(solve(&a, &[1.0, 1.0], 1e-12).is_none());
    }
}
