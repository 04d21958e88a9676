//! Thomas elimination for the backward-Euler diffusion lines.

/// Solves the tridiagonal system with constant off-diagonals `sub`/`sup`
/// and main diagonal `diag`, overwriting `rhs` with the solution.
///
/// No pivoting; callers supply diagonally dominant systems.
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    assert_eq!(diag.len(), n);
    assert_eq!(sub.len() + 1, n.max(1));
    assert_eq!(sup.len() + 1, n.max(1));
    if n == 0 {
        return;
    }
    let mut cp = vec![0.0; n];
    let mut m = diag[0];
    if n > 1 {
        cp[0] = sup[0] / m;
    }
    rhs[0] /= m;
    for i in 1..n {
        m = diag[i] - sub[i - 1] * cp[i - 1];
        if i + 1 < n {
            cp[i] = sup[i] / m;
        }
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

/// Pre-factored `(I - dt·D²)` for one grid line with mirrored-ghost
/// (zero-flux) ends, where `r = dt / h²`.
///
/// Rows sum to one and off-diagonals are negative, so each solve is a
/// convex averaging: it conserves the line sum and never raises the
/// maximum or lowers the minimum.
#[derive(Debug, Clone)]
pub struct NeumannLine {
    r: f64,
    cp: Vec<f64>,
    inv_m: Vec<f64>,
}

impl NeumannLine {
    pub fn new(n: usize, r: f64) -> Self {
        assert!(n >= 2);
        let diag = |i: usize| if i == 0 || i + 1 == n { 1.0 + r } else { 1.0 + 2.0 * r };
        let mut cp = vec![0.0; n];
        let mut inv_m = vec![0.0; n];
        let mut m = diag(0);
        inv_m[0] = 1.0 / m;
        cp[0] = -r / m;
        for i in 1..n {
            m = diag(i) + r * cp[i - 1];
            inv_m[i] = 1.0 / m;
            cp[i] = -r / m;
        }
        NeumannLine { r, cp, inv_m }
    }

    pub fn len(&self) -> usize {
        self.cp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cp.is_empty()
    }

    /// Solves in place for a contiguous line. Constant lines are returned
    /// unchanged, which is their exact solution.
    pub fn solve(&self, line: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(line.len(), n);
        if line.iter().all(|&x| x == line[0]) {
            return;
        }
        line[0] *= self.inv_m[0];
        for i in 1..n {
            line[i] = (line[i] + self.r * line[i - 1]) * self.inv_m[i];
        }
        for i in (0..n - 1).rev() {
            line[i] -= self.cp[i] * line[i + 1];
        }
    }

    /// Solves in place for the line `data[start + k*stride]`, `k < len`.
    pub fn solve_strided(&self, data: &mut [f64], start: usize, stride: usize) {
        let n = self.len();
        let at = |k: usize| start + k * stride;
        if (1..n).all(|k| data[at(k)] == data[start]) {
            return;
        }
        data[at(0)] *= self.inv_m[0];
        for i in 1..n {
            data[at(i)] = (data[at(i)] + self.r * data[at(i - 1)]) * self.inv_m[i];
        }
        for i in (0..n - 1).rev() {
            data[at(i)] -= self.cp[i] * data[at(i + 1)];
        }
    }
}
