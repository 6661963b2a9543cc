//! Reference solvers used only by tests.
//!
//! [`BarrierProblem`] minimizes a convex quadratic subject to linear matrix
//! inequalities with a log-det barrier and damped Newton steps. It knows
//! nothing about the estimator's own algorithms, so it serves as an
//! independent oracle for the proximal maps, the eigenvalue-floor
//! projection and small instances of the full problem.

use nalgebra::{DMatrix, DVector};

/// `C + sum_i z_i A_i >= 0` (positive semidefinite).
#[derive(Debug, Clone)]
pub struct Lmi {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl Lmi {
    pub fn new(constant: DMatrix<f64>) -> Self {
        Self {
            constant,
            terms: Vec::new(),
        }
    }

    pub fn term(mut self, var: usize, coeff: DMatrix<f64>) -> Self {
        self.terms.push((var, coeff));
        self
    }

    /// Scalar constraint `c + a^T z >= 0`.
    pub fn scalar(c: f64, coeffs: &[(usize, f64)]) -> Self {
        let mut l = Lmi::new(DMatrix::from_element(1, 1, c));
        for &(i, a) in coeffs {
            l.terms.push((i, DMatrix::from_element(1, 1, a)));
        }
        l
    }

    fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, a) in &self.terms {
            m += a * z[*i];
        }
        m
    }

    fn dim(&self) -> usize {
        self.constant.nrows()
    }
}

/// `minimize 0.5 z^T P z + q^T z + c` subject to a list of LMIs.
#[derive(Debug, Clone)]
pub struct BarrierProblem {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub constant: f64,
    pub lmis: Vec<Lmi>,
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Upper bound on the suboptimality (`m / t`).
    pub gap: f64,
}

impl BarrierProblem {
    pub fn new(n: usize) -> Self {
        Self {
            quad: DMatrix::zeros(n, n),
            lin: DVector::zeros(n),
            constant: 0.0,
            lmis: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.lin.len()
    }

    /// Add `weight * (a^T z - b)^2` with sparse `a`.
    pub fn add_square(&mut self, a: &[(usize, f64)], b: f64, weight: f64) {
        for &(i, ai) in a {
            for &(j, aj) in a {
                self.quad[(i, j)] += 2.0 * weight * ai * aj;
            }
            self.lin[i] -= 2.0 * weight * ai * b;
        }
        self.constant += weight * b * b;
    }

    pub fn add_linear(&mut self, i: usize, c: f64) {
        self.lin[i] += c;
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.quad * z)) + self.lin.dot(z) + self.constant
    }

    fn barrier(&self, z: &DVector<f64>) -> Option<f64> {
        let mut total = 0.0;
        for l in &self.lmis {
            let chol = nalgebra::Cholesky::new(l.eval(z))?;
            total -= 2.0 * chol.l().diagonal().map(f64::ln).sum();
        }
        Some(total)
    }

    fn newton_system(&self, z: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut grad = (&self.quad * z + &self.lin) * t;
        let mut hess = &self.quad * t;
        for l in &self.lmis {
            let xinv = nalgebra::Cholesky::new(l.eval(z))
                .expect("iterates stay strictly feasible")
                .inverse();
            let mapped: Vec<(usize, DMatrix<f64>)> =
                l.terms.iter().map(|(i, a)| (*i, &xinv * a)).collect();
            for (i, ma) in &mapped {
                grad[*i] -= ma.trace();
            }
            for (i, ma) in &mapped {
                for (j, mb) in &mapped {
                    hess[(*i, *j)] += (ma * mb).trace();
                }
            }
        }
        debug_assert_eq!(grad.len(), n);
        (grad, hess)
    }

    /// Barrier method from a strictly feasible `z0` until the duality-gap
    /// bound `m / t` falls below `gap_tol`.
    pub fn solve(&self, z0: DVector<f64>, gap_tol: f64) -> Result<BarrierSolution, String> {
        let mut z = z0;
        if self.barrier(&z).is_none() {
            return Err("starting point is not strictly feasible".into());
        }
        let m: usize = self.lmis.iter().map(Lmi::dim).sum();
        let mut t = 1.0;
        loop {
            for _ in 0..200 {
                let (g, h) = self.newton_system(&z, t);
                // A numerically singular system only shows up deep along the
                // central path; the current point is as centered as it gets.
                let step = match h.clone().cholesky() {
                    Some(c) => c.solve(&(-&g)),
                    None => match h.lu().solve(&(-&g)) {
                        Some(d) => d,
                        None if t > 1.0 => break,
                        None => return Err("singular Newton system at the first center".into()),
                    },
                };
                let decrement = -g.dot(&step);
                // centering error is divided by t in the original objective
                if decrement / 2.0 < 1e-9 {
                    break;
                }
                let phi = |w: &DVector<f64>| -> Option<f64> {
                    Some(t * self.objective(w) + self.barrier(w)?)
                };
                // Inside the quadratic-convergence region of a self-concordant
                // barrier the full step is taken; Armijo comparisons there are
                // at the rounding level of t * f.
                if decrement < 0.05 {
                    let full = &z + &step;
                    if self.barrier(&full).is_some() {
                        z = full;
                        continue;
                    }
                }
                let f0 = phi(&z).expect("feasible");
                let mut s = 1.0;
                loop {
                    let cand = &z + &step * s;
                    if let Some(f) = phi(&cand) {
                        if f <= f0 - 0.25 * s * decrement {
                            z = cand;
                            break;
                        }
                    }
                    s *= 0.5;
                    if s < 1e-20 {
                        break;
                    }
                }
                if s < 1e-20 {
                    break;
                }
            }
            let gap = m as f64 / t;
            if gap < gap_tol {
                return Ok(BarrierSolution {
                    objective: self.objective(&z),
                    z,
                    gap,
                });
            }
            t *= 8.0;
        }
    }
}

/// Index of the upper-triangle entry `(j, k)`, `j <= k`, in a packed
/// symmetric `p x p` matrix.
pub fn packed_index(p: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    j * p - j * (j + 1) / 2 + k
}

/// Coefficient matrix of packed variable `(j, k)` in a symmetric matrix.
pub fn sym_basis(p: usize, j: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    m[(j, k)] = 1.0;
    m[(k, j)] = 1.0;
    m
}

/// Unpack a symmetric matrix from packed variables starting at `offset`.
pub fn unpack(z: &DVector<f64>, p: usize, offset: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, k| z[offset + packed_index(p, j, k)])
}

/// Nearest symmetric matrix to `a` (Frobenius) with `M - eps I >= 0`.
pub fn nearest_floored(a: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let p = a.nrows();
    let n = p * (p + 1) / 2;
    let mut prob = BarrierProblem::new(n);
    let mut lmi = Lmi::new(DMatrix::from_diagonal_element(p, p, -eps));
    for j in 0..p {
        for k in j..p {
            let idx = packed_index(p, j, k);
            let weight = if j == k { 1.0 } else { 2.0 };
            let target = if j == k { a[(j, j)] } else { 0.5 * (a[(j, k)] + a[(k, j)]) };
            prob.add_square(&[(idx, 1.0)], target, weight);
            lmi = lmi.term(idx, sym_basis(p, j, k));
        }
    }
    prob.lmis.push(lmi);
    let start = a.amax() + eps.abs() + 1.0;
    let mut z0 = DVector::zeros(n);
    for j in 0..p {
        z0[packed_index(p, j, j)] = start;
    }
    let sol = prob.solve(z0, 1e-13).expect("projection oracle");
    unpack(&sol.z, p, 0)
}

/// Minimizer of `0.5 ||x - y||^2 + a sum_h t_h |x_h| + b ||x||_2`.
///
/// Variables are `x` (H), `u` (H) with `|x_h| <= u_h`, and `s >= ||x||`
/// written as the arrow LMI `[[s, x^T], [x, s I]] >= 0`.
pub fn sparse_group_prox(y: &[f64], thresholds: &[f64], group: f64) -> Vec<f64> {
    // Epigraph variables with zero weight would be unbounded, so each one
    // is only introduced when its weight is positive.
    let h = y.len();
    let lasso: Vec<usize> = (0..h).filter(|&i| thresholds[i] > 0.0).collect();
    let n = h + lasso.len() + usize::from(group > 0.0);
    let mut prob = BarrierProblem::new(n);
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut z0 = DVector::zeros(n);
    for i in 0..h {
        prob.add_square(&[(i, 1.0)], y[i], 0.5);
    }
    for (slot, &i) in lasso.iter().enumerate() {
        let u = h + slot;
        prob.add_linear(u, thresholds[i]);
        prob.lmis.push(Lmi::scalar(0.0, &[(u, 1.0), (i, -1.0)]));
        prob.lmis.push(Lmi::scalar(0.0, &[(u, 1.0), (i, 1.0)]));
        z0[u] = scale;
    }
    if group > 0.0 {
        let s_idx = n - 1;
        prob.add_linear(s_idx, group);
        let mut arrow = Lmi::new(DMatrix::zeros(h + 1, h + 1));
        arrow = arrow.term(s_idx, DMatrix::identity(h + 1, h + 1));
        for i in 0..h {
            let mut e = DMatrix::zeros(h + 1, h + 1);
            e[(0, i + 1)] = 1.0;
            e[(i + 1, 0)] = 1.0;
            arrow = arrow.term(i, e);
        }
        prob.lmis.push(arrow);
        z0[s_idx] = scale;
    }
    if prob.lmis.is_empty() {
        return y.to_vec();
    }
    let sol = prob.solve(z0, 1e-14).expect("prox oracle");
    (0..h).map(|i| sol.z[i]).collect()
}

/// Optimum of the joint penalized problem on small instances.
///
/// Minimizes `sum_h sum_{j!=k} r_hjk^2 + sum_h lambda_h sum_{j!=k} |W_hjk|
/// + gamma sum_{j!=k} ||W_.jk||` with `r = T - w_j - w_k + 2 W_jk`, subject
/// to `W_h - eps I >= 0` for every slice. Ordered pairs are folded into
/// unordered ones with a factor of two.
pub fn penalized_optimum(
    thetas: &[DMatrix<f64>],
    lambdas: &[f64],
    gamma: f64,
    eps: f64,
) -> (f64, Vec<DMatrix<f64>>) {
    let h = thetas.len();
    let p = thetas[0].nrows();
    let block = p * (p + 1) / 2;
    let pairs: Vec<(usize, usize)> =
        (0..p).flat_map(|j| (j + 1..p).map(move |k| (j, k))).collect();
    let mut n = h * block;
    let mut abs_vars = Vec::new();
    for s in 0..h {
        if lambdas[s] > 0.0 {
            for &(j, k) in &pairs {
                abs_vars.push((s, j, k, n));
                n += 1;
            }
        }
    }
    let mut norm_vars = Vec::new();
    if gamma > 0.0 {
        for &(j, k) in &pairs {
            norm_vars.push((j, k, n));
            n += 1;
        }
    }
    let var = |s: usize, j: usize, k: usize| s * block + packed_index(p, j, k);

    let mut prob = BarrierProblem::new(n);
    let mut z0 = DVector::zeros(n);
    for (s, theta) in thetas.iter().enumerate() {
        for &(j, k) in &pairs {
            let a = [(var(s, j, j), -1.0), (var(s, k, k), -1.0), (var(s, j, k), 2.0)];
            prob.add_square(&a, -theta[(j, k)], 2.0);
        }
        let mut lmi = Lmi::new(DMatrix::from_diagonal_element(p, p, -eps));
        for j in 0..p {
            for k in j..p {
                lmi = lmi.term(var(s, j, k), sym_basis(p, j, k));
            }
        }
        prob.lmis.push(lmi);
        let start = theta.amax() + eps.abs() + 1.0;
        for j in 0..p {
            z0[var(s, j, j)] = start;
        }
    }
    for &(s, j, k, u) in &abs_vars {
        prob.add_linear(u, 2.0 * lambdas[s]);
        prob.lmis.push(Lmi::scalar(0.0, &[(u, 1.0), (var(s, j, k), -1.0)]));
        prob.lmis.push(Lmi::scalar(0.0, &[(u, 1.0), (var(s, j, k), 1.0)]));
        z0[u] = 1.0;
    }
    for &(j, k, t) in &norm_vars {
        prob.add_linear(t, 2.0 * gamma);
        let mut arrow = Lmi::new(DMatrix::zeros(h + 1, h + 1));
        arrow = arrow.term(t, DMatrix::identity(h + 1, h + 1));
        for s in 0..h {
            let mut e = DMatrix::zeros(h + 1, h + 1);
            e[(0, s + 1)] = 1.0;
            e[(s + 1, 0)] = 1.0;
            arrow = arrow.term(var(s, j, k), e);
        }
        prob.lmis.push(arrow);
        z0[t] = 1.0;
    }
    let sol = prob.solve(z0, 1e-11).expect("penalized oracle");
    let slices = (0..h).map(|s| unpack(&sol.z, p, s * block)).collect();
    (sol.objective, slices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_roundtrip() {
        let p = 4;
        let mut seen = vec![false; p * (p + 1) / 2];
        for j in 0..p {
            for k in j..p {
                let i = packed_index(p, j, k);
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn scalar_lasso() {
        // 0.5 (x - 3)^2 + |x| -> x = 2
        let x = sparse_group_prox(&[3.0], &[1.0], 0.0);
        assert!((x[0] - 2.0).abs() < 1e-7, "{x:?}");
    }

    #[test]
    fn group_shrink() {
        // soft gives (3, 4); group 2.5 halves it
        let x = sparse_group_prox(&[3.0, 4.0], &[0.0, 0.0], 2.5);
        assert!((x[0] - 1.5).abs() < 1e-7 && (x[1] - 2.0).abs() < 1e-7, "{x:?}");
    }

    #[test]
    fn projection_of_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        let m = nearest_floored(&a, 0.1);
        assert!((m[(1, 1)] - 0.1).abs() < 1e-7 && (m[(0, 0)] - 2.0).abs() < 1e-7, "{m}");
    }

    #[test]
    fn penalized_recovers_diagonal_truth() {
        // T from W = diag(1, 2, 3); with any lambda > 0, W is the unique zero
        let t = DMatrix::from_row_slice(3, 3, &[0.0, 3.0, 4.0, 3.0, 0.0, 5.0, 4.0, 5.0, 0.0]);
        let (obj, w) = penalized_optimum(&[t], &[0.1], 0.1, 1e-4);
        assert!(obj.abs() < 1e-8, "{obj}");
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!((&w[0] - expect).norm() < 1e-6, "{}", w[0]);
    }
}
