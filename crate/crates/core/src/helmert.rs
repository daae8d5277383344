//! Helmert (Gram-Charlier) orthogonal transform.
//!
//! For size m the matrix A has first row `(1/√m)(1, …, 1)` and, for
//! 2 ≤ i ≤ m, row i equal to `(1/√(i(i−1)))(1, …, 1, −(i−1), 0, …, 0)` with
//! the `−(i−1)` in column i. A is orthogonal, so the inverse is Aᵀ and
//! |det A| = 1. Both directions are evaluated row-formula-wise in O(m)
//! without forming A.

use ndarray::Array2;

/// The Helmert transform of a fixed size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrthogonalMap {
    size: usize,
}

impl OrthogonalMap {
    /// # Panics
    /// If `size` is zero.
    pub fn new(size: usize) -> Self {
        assert!(size >= 1, "Helmert transform needs size >= 1");
        OrthogonalMap { size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// y = A·x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size];
        self.apply_into(x, &mut y);
        y
    }

    /// x = Aᵀ·y
    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.size];
        self.invert_into(y, &mut x);
        x
    }

    /// # Panics
    /// If either slice length differs from the map size.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.size;
        assert_eq!(x.len(), m);
        assert_eq!(y.len(), m);
        let mut prefix = 0.0;
        for i in 1..m {
            // 0-based row i is the 1-based row i+1: (x_1 + … + x_i − i·x_{i+1}) / √(i(i+1))
            let fi = i as f64;
            y[i] = (prefix + x[i - 1] - fi * x[i]) / (fi * (fi + 1.0)).sqrt();
            prefix += x[i - 1];
        }
        y[0] = (prefix + x[m - 1]) / (m as f64).sqrt();
    }

    /// # Panics
    /// If either slice length differs from the map size.
    pub fn invert_into(&self, y: &[f64], x: &mut [f64]) {
        let m = self.size;
        assert_eq!(y.len(), m);
        assert_eq!(x.len(), m);
        let head = y[0] / (m as f64).sqrt();
        // suffix accumulates Σ_{rows below r} y_row / √(row(row−1)) in 1-based terms
        let mut suffix = 0.0;
        for r in (0..m).rev() {
            let mut xr = head + suffix;
            if r >= 1 {
                let fr = r as f64;
                let c = y[r] / (fr * (fr + 1.0)).sqrt();
                xr -= fr * c;
                suffix += c;
            }
            x[r] = xr;
        }
    }

    /// Materializes A by applying the map to unit vectors.
    pub fn matrix(&self) -> Array2<f64> {
        let m = self.size;
        let mut a = Array2::zeros((m, m));
        let mut e = vec![0.0; m];
        for c in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.apply(&e);
            for r in 0..m {
                a[[r, c]] = col[r];
            }
        }
        a
    }
}

/// Dimension-raising map: concatenate `(x, u)` and apply the Helmert
/// transform of size `x.len() + u.len()`.
pub fn birth_map(x: &[f64], u: &[f64]) -> Vec<f64> {
    let mut joined = Vec::with_capacity(x.len() + u.len());
    joined.extend_from_slice(x);
    joined.extend_from_slice(u);
    OrthogonalMap::new(joined.len()).apply(&joined)
}

/// Inverse of [`birth_map`]: apply Aᵀ to `x_prime` and split it into the
/// retained head of length `k0` and the discarded tail.
///
/// # Panics
/// Unless `1 <= k0 < x_prime.len()`.
pub fn death_map(x_prime: &[f64], k0: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(
        k0 >= 1 && k0 < x_prime.len(),
        "death_map needs 1 <= k0 < len"
    );
    let mut full = OrthogonalMap::new(x_prime.len()).invert(x_prime);
    let tail = full.split_off(k0);
    (full, tail)
}
