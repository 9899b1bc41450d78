//! Least squares over the probability simplex:
//!
//! ```text
//!     minimize |M x - b|   subject to   x >= 0,  sum(x) = 1
//! ```
//!
//! Primal active-set method. The free set `P` is kept affinely independent
//! (the stacked columns `[M_j; 1]`, `j in P`, are linearly independent), so
//! every equality-constrained subproblem has a unique solution. Subproblems
//! eliminate one coordinate through `sum(x) = 1` and are solved by QR
//! (modified Gram-Schmidt with reorthogonalisation).

use nalgebra as na;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct LsqProblem<F: Real> {
    pub design: na::DMatrix<F>,
    pub target: na::DVector<F>,
}

impl<F: Real> LsqProblem<F> {
    pub fn new(design: na::DMatrix<F>, target: na::DVector<F>) -> Result<Self> {
        if design.ncols() == 0 {
            return Err(Error::InvalidParams("design matrix has no columns".into()));
        }
        if design.nrows() != target.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, target has {} entries",
                design.nrows(),
                target.len()
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target vector"));
        }
        Ok(LsqProblem { design, target })
    }

    pub fn nvars(&self) -> usize {
        self.design.ncols()
    }

    /// `|M x - b|`.
    pub fn residual(&self, x: &[F]) -> F {
        let x = na::DVector::from_column_slice(x);
        let r = &self.design * x - &self.target;
        r.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt()
    }

    /// Largest KKT violation at a simplex point `x`, measured on the full
    /// gradient `2 M^T (M x - b)`: spread of the gradient over the support
    /// and the shortfall of off-support components below the multiplier.
    pub fn kkt_violation(&self, x: &[F], support_tol: F) -> F {
        let grad = self.gradient(x);
        let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] > support_tol).collect();
        if support.is_empty() {
            return F::infinity();
        }
        let mu = support.iter().map(|&j| grad[j]).fold(F::zero(), |a, b| a + b) / F::lit(support.len() as f64);
        let mut worst = F::zero();
        for j in 0..x.len() {
            let v = if x[j] > support_tol { (grad[j] - mu).abs() } else { mu - grad[j] };
            worst = worst.max(v);
        }
        worst
    }

    /// `2 M^T (M x - b)`.
    pub fn gradient(&self, x: &[F]) -> Vec<F> {
        let x = na::DVector::from_column_slice(x);
        let r = &self.design * x - &self.target;
        let g = self.design.tr_mul(&r);
        g.iter().map(|&v| v + v).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationCap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsqSolution<F> {
    pub x: Vec<F>,
    pub residual: F,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Minimises `|M x - b|` over the simplex, starting from the vertex with the
/// smallest residual (lowest index on ties).
pub fn simplex_lsq<F: Real>(problem: &LsqProblem<F>) -> Result<LsqSolution<F>> {
    let cols = columns(problem);
    let target: Vec<F> = problem.target.iter().copied().collect();
    let start = (0..cols.len())
        .map(|j| (j, dist2(&cols[j], &target)))
        .fold(None::<(usize, F)>, |best, (j, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((j, d)),
        })
        .map(|(j, _)| j)
        .expect("at least one column");
    let mut x = vec![F::zero(); cols.len()];
    x[start] = F::one();
    Ok(ActiveSet::new(&cols, &target).run(x))
}

/// Same minimisation from a caller-supplied feasible starting point.
pub fn simplex_lsq_from<F: Real>(problem: &LsqProblem<F>, start: &[F]) -> Result<LsqSolution<F>> {
    if start.len() != problem.nvars() {
        return Err(Error::DimensionMismatch(format!(
            "start has {} entries, problem has {} variables",
            start.len(),
            problem.nvars()
        )));
    }
    let tol = F::lit(1e-9);
    let sum = start.iter().fold(F::zero(), |a, &b| a + b);
    if start.iter().any(|v| !v.is_finite() || *v < -tol) || (sum - F::one()).abs() > tol {
        return Err(Error::InvalidSimplex { sum: sum.to_f64().unwrap_or(f64::NAN) });
    }
    let x: Vec<F> = start.iter().map(|&v| v.max(F::zero()) / sum).collect();
    let cols = columns(problem);
    let target: Vec<F> = problem.target.iter().copied().collect();
    Ok(ActiveSet::new(&cols, &target).run(x))
}

fn columns<F: Real>(problem: &LsqProblem<F>) -> Vec<Vec<F>> {
    problem.design.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

fn dist2<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Thin QR of a column list, or the first column that depends on the
/// previous ones together with its expansion coefficients.
enum Factor<F> {
    Full { q: Vec<Vec<F>>, r: Vec<Vec<F>> },
    Dependent { col: usize, coeffs: Vec<F> },
}

fn factor<F: Real>(cols: &[Vec<F>], rel_tol: F) -> Factor<F> {
    let mut q: Vec<Vec<F>> = Vec::with_capacity(cols.len());
    let mut r: Vec<Vec<F>> = Vec::with_capacity(cols.len());
    for (j, col) in cols.iter().enumerate() {
        let norm0 = dot(col, col).sqrt();
        let mut v = col.clone();
        let mut h = vec![F::zero(); j];
        // Two passes of Gram-Schmidt keep Q orthogonal to working precision.
        for _ in 0..2 {
            for (l, ql) in q.iter().enumerate() {
                let s = dot(ql, &v);
                h[l] += s;
                for (vi, &qi) in v.iter_mut().zip(ql) {
                    *vi -= s * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= rel_tol * norm0 || norm0 == F::zero() {
            return Factor::Dependent { col: j, coeffs: back_substitute(&r, &h) };
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        h.push(norm);
        q.push(v);
        r.push(h);
    }
    Factor::Full { q, r }
}

/// Solves `R y = h` for upper-triangular `R` stored by columns.
fn back_substitute<F: Real>(r: &[Vec<F>], h: &[F]) -> Vec<F> {
    let n = r.len();
    let mut y = vec![F::zero(); n];
    for j in (0..n).rev() {
        let mut s = h[j];
        for l in j + 1..n {
            s -= r[l][j] * y[l];
        }
        y[j] = s / r[j][j];
    }
    y
}

struct ActiveSet<'a, F: Real> {
    cols: &'a [Vec<F>],
    target: &'a [F],
    rank_tol: F,
    enter_tol: F,
    max_iter: usize,
}

enum Subproblem<F> {
    Solved(Vec<F>),
    /// Position in `P` of a column dependent on the earlier ones, with the
    /// null direction over `P` it induces.
    Dependent(usize, Vec<F>),
}

impl<'a, F: Real> ActiveSet<'a, F> {
    fn new(cols: &'a [Vec<F>], target: &'a [F]) -> Self {
        ActiveSet {
            cols,
            target,
            rank_tol: F::epsilon().sqrt() * F::lit(1e-2),
            enter_tol: F::epsilon() * F::lit(1e3),
            max_iter: 50 * cols.len(),
        }
    }

    /// Unique minimiser of `|M_P z - b|` subject to `sum(z) = 1`, using the
    /// first free index as the eliminated coordinate.
    fn solve_subproblem(&self, free: &[usize]) -> Subproblem<F> {
        let r = free[0];
        if free.len() == 1 {
            return Subproblem::Solved(vec![F::one()]);
        }
        let base = &self.cols[r];
        let diffs: Vec<Vec<F>> = free[1..]
            .iter()
            .map(|&j| self.cols[j].iter().zip(base).map(|(&a, &b)| a - b).collect())
            .collect();
        match factor(&diffs, self.rank_tol) {
            Factor::Dependent { col, coeffs } => {
                let mut d = vec![F::zero(); free.len()];
                d[col + 1] = F::one();
                let mut sum = F::zero();
                for (l, &y) in coeffs.iter().enumerate() {
                    d[l + 1] = -y;
                    sum += y;
                }
                d[0] = sum - F::one();
                Subproblem::Dependent(col + 1, d)
            }
            Factor::Full { q, r: rr } => {
                let mut b: Vec<F> = self.target.iter().zip(base).map(|(&t, &m)| t - m).collect();
                let mut h = Vec::with_capacity(q.len());
                for ql in &q {
                    let s = dot(ql, &b);
                    h.push(s);
                    for (bi, &qi) in b.iter_mut().zip(ql) {
                        *bi -= s * qi;
                    }
                }
                let y = back_substitute(&rr, &h);
                let mut z = Vec::with_capacity(free.len());
                z.push(F::one() - y.iter().fold(F::zero(), |a, &b| a + b));
                z.extend(y);
                Subproblem::Solved(z)
            }
        }
    }

    /// Moves along null directions of the free set (leaving `M x` unchanged)
    /// until the support is affinely independent.
    fn reduce_support(&self, x: &mut [F]) -> Vec<usize> {
        loop {
            let free: Vec<usize> = (0..x.len()).filter(|&j| x[j] > F::zero()).collect();
            match self.solve_subproblem(&free) {
                Subproblem::Solved(_) => return free,
                Subproblem::Dependent(_, d) => {
                    // Step along -d until the first coordinate with d > 0 reaches zero.
                    let (mut t, mut hit) = (F::infinity(), 0);
                    for (pos, &dj) in d.iter().enumerate() {
                        if dj > F::zero() {
                            let ratio = x[free[pos]] / dj;
                            if ratio < t {
                                t = ratio;
                                hit = pos;
                            }
                        }
                    }
                    for (pos, &dj) in d.iter().enumerate() {
                        let j = free[pos];
                        x[j] = (x[j] - t * dj).max(F::zero());
                    }
                    x[free[hit]] = F::zero();
                }
            }
        }
    }

    fn half_gradient(&self, x: &[F]) -> Vec<F> {
        let mut r: Vec<F> = self.target.iter().map(|&t| -t).collect();
        for (j, &xj) in x.iter().enumerate() {
            if xj != F::zero() {
                for (ri, &m) in r.iter_mut().zip(&self.cols[j]) {
                    *ri += xj * m;
                }
            }
        }
        self.cols.iter().map(|c| dot(c, &r)).collect()
    }

    fn run(&self, mut x: Vec<F>) -> LsqSolution<F> {
        let n = self.cols.len();
        let mut free = self.reduce_support(&mut x);
        let mut blocked = vec![false; n];
        let mut iterations = 0;
        let mut status = SolveStatus::IterationCap;
        while iterations < self.max_iter {
            iterations += 1;
            let z = match self.solve_subproblem(&free) {
                Subproblem::Solved(z) => z,
                Subproblem::Dependent(pos, _) => {
                    // Only a freshly entered index can break independence.
                    let j = free.remove(pos);
                    blocked[j] = true;
                    continue;
                }
            };
            if z.iter().all(|&v| v > F::zero()) {
                x.iter_mut().for_each(|v| *v = F::zero());
                for (&j, &v) in free.iter().zip(&z) {
                    x[j] = v;
                }
                let grad = self.half_gradient(&x);
                let mu = free.iter().map(|&j| grad[j]).fold(F::zero(), |a, b| a + b) / F::lit(free.len() as f64);
                let scale = F::one() + grad.iter().fold(F::zero(), |a, &b| a.max(b.abs()));
                let mut best: Option<(usize, F)> = None;
                for j in 0..n {
                    if free.contains(&j) || blocked[j] {
                        continue;
                    }
                    let violation = mu - grad[j];
                    if violation > self.enter_tol * scale && best.is_none_or(|(_, v)| violation > v) {
                        best = Some((j, violation));
                    }
                }
                match best {
                    Some((j, _)) => free.push(j),
                    None => {
                        status = SolveStatus::Converged;
                        break;
                    }
                }
            } else {
                // Step towards z until the first free coordinate hits zero.
                let (mut t, mut hit) = (F::infinity(), 0);
                for (pos, (&j, &zj)) in free.iter().zip(&z).enumerate() {
                    if zj <= F::zero() {
                        let denom = x[j] - zj;
                        let ratio = if denom > F::zero() { x[j] / denom } else { F::zero() };
                        if ratio < t {
                            t = ratio;
                            hit = pos;
                        }
                    }
                }
                if t > F::zero() {
                    blocked.iter_mut().for_each(|b| *b = false);
                }
                for (&j, &zj) in free.iter().zip(&z) {
                    x[j] = x[j] + t * (zj - x[j]);
                }
                let dropped = free[hit];
                x[dropped] = F::zero();
                if t == F::zero() {
                    blocked[dropped] = true;
                }
                free.retain(|&j| x[j] > F::zero());
            }
        }
        finish(self.cols, self.target, x, iterations, status)
    }
}

fn finish<F: Real>(cols: &[Vec<F>], target: &[F], mut x: Vec<F>, iterations: usize, status: SolveStatus) -> LsqSolution<F> {
    for v in x.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    let sum = x.iter().fold(F::zero(), |a, &b| a + b);
    if sum != F::one() && sum > F::zero() {
        x.iter_mut().for_each(|v| *v /= sum);
    }
    let mut r: Vec<F> = target.iter().map(|&t| -t).collect();
    for (j, &xj) in x.iter().enumerate() {
        for (ri, &m) in r.iter_mut().zip(&cols[j]) {
            *ri += xj * m;
        }
    }
    let residual = dot(&r, &r).sqrt();
    LsqSolution { x, residual, iterations, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: &[&[f64]], target: &[f64]) -> LsqProblem<f64> {
        let m = na::DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        LsqProblem::new(m, na::DVector::from_column_slice(target)).unwrap()
    }

    #[test]
    fn interpolation_with_slack() {
        let p = problem(&[&[0., 1., 0., 0.], &[0., 0., 1., 0.], &[0., 0., 0., 1.]], &[0.3, 0.2, 0.4]);
        let s = simplex_lsq(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        for (g, w) in s.x.iter().zip([0.1, 0.3, 0.2, 0.4]) {
            assert!((g - w).abs() < 1e-12, "{:?}", s.x);
        }
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn recovers_forward_computed_point() {
        let rows: [&[f64]; 3] = [&[0., 1., 0., 1.], &[0., 0., 1., 1.], &[0., 0., 0., 1.]];
        let truth = [0.15, 0.25, 0.25, 0.35];
        let target: Vec<f64> = rows.iter().map(|r| r.iter().zip(&truth).map(|(a, b)| a * b).sum()).collect();
        let s = simplex_lsq(&problem(&rows, &target)).unwrap();
        for (g, w) in s.x.iter().zip(truth) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn infeasible_target_matches_grid_oracle() {
        let rows: [&[f64]; 3] = [&[0., 1., 0., 1.], &[0., 0., 1., 1.], &[0., 0., 0., 1.]];
        let p = problem(&rows, &[2.0, 2.0, 2.0]);
        let s = simplex_lsq(&p).unwrap();
        // Grid over the simplex at step 0.01.
        let mut best = f64::INFINITY;
        for a in 0..=100 {
            for b in 0..=(100 - a) {
                for c in 0..=(100 - a - b) {
                    let d = 100 - a - b - c;
                    let x = [a as f64 / 100., b as f64 / 100., c as f64 / 100., d as f64 / 100.];
                    best = best.min(p.residual(&x));
                }
            }
        }
        assert!(s.residual > 0.0);
        assert!(s.residual <= best + 1e-12);
        assert!((s.residual - best).abs() < 1e-9, "{} vs {best}", s.residual);
        // Optimum is the all-ones vertex: distance sqrt(3).
        assert!((s.residual - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_columns_are_handled() {
        let p = problem(&[&[1., 1., 0.], &[0., 0., 1.]], &[0.5, 0.5]);
        let s = simplex_lsq(&p).unwrap();
        assert!(s.residual < 1e-12);
        assert!(p.kkt_violation(&s.x, 1e-12) < 1e-8);
        let s2 = simplex_lsq_from(&p, &[0.3, 0.3, 0.4]).unwrap();
        assert!((s.residual - s2.residual).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let m = na::DMatrix::from_element(2, 2, f64::NAN);
        assert!(LsqProblem::new(m, na::DVector::zeros(2)).is_err());
        let m = na::DMatrix::from_element(2, 2, 1.0);
        assert!(LsqProblem::new(m.clone(), na::DVector::zeros(3)).is_err());
        let p = LsqProblem::new(m, na::DVector::zeros(2)).unwrap();
        assert!(simplex_lsq_from(&p, &[0.2, 0.2]).is_err());
    }

    #[test]
    fn single_precision() {
        let m = na::DMatrix::<f32>::identity(3, 3);
        let p = LsqProblem::new(m, na::DVector::from_column_slice(&[0.2f32, 0.3, 0.5])).unwrap();
        let s = simplex_lsq(&p).unwrap();
        assert!(s.residual < 1e-5);
    }
}
