//! Dense convex QP: minimize ½xᵀQx + cᵀx subject to l ≤ Ax ≤ u.
//!
//! Dual active-set method of Goldfarb and Idnani. The unconstrained minimum is
//! the starting point, so no feasible initial guess is needed; violated
//! constraints are added one at a time and dropped again when their
//! multiplier would turn negative. A solver instance remembers the final
//! active set and tries those constraints first on the next call.

use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl QpProblem {
    /// A problem without constraints.
    pub fn unconstrained(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let d = c.len();
        QpProblem { q, c, a: DMatrix::zeros(0, d), l: DVector::zeros(0), u: DVector::zeros(0) }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let d = self.dim();
        let m = self.rows();
        if self.q.shape() != (d, d) || self.a.ncols() != d || self.l.len() != m || self.u.len() != m {
            return Err(QpError::BadProblem(format!(
                "inconsistent shapes: Q {:?}, c {}, A {:?}, l {}, u {}",
                self.q.shape(),
                d,
                self.a.shape(),
                self.l.len(),
                self.u.len()
            )));
        }
        if self.q.iter().chain(self.c.iter()).chain(self.a.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::BadProblem("non-finite entry in Q, c or A".into()));
        }
        let scale = self.q.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(QpError::BadProblem(format!("Q is not symmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..m {
            if self.l[i].is_nan() || self.u[i].is_nan() || self.l[i] > self.u[i] {
                return Err(QpError::BadProblem(format!("row {i}: l = {} > u = {}", self.l[i], self.u[i])));
            }
        }
        Ok(())
    }
}

pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("bad QP: {0}")]
    BadProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iter: usize,
    /// Primal feasibility tolerance, relative to 1 + |bound|.
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { max_iter: 1000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lower,
    Upper,
    /// `l == u`; the row is held as an equality.
    Equal,
}

/// A constraint row held at one of its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveBound {
    pub row: usize,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    /// Active bounds with their multipliers (≥ 0 for inequalities; the sign
    /// convention is that a positive multiplier pushes `Ax` away from the bound).
    pub active: Vec<(ActiveBound, f64)>,
    pub iterations: usize,
    /// Diagonal shift added to Q when it was only positive semidefinite.
    pub regularization: f64,
}

impl QpSolution {
    pub fn active_bounds(&self) -> Vec<ActiveBound> {
        self.active.iter().map(|(b, _)| *b).collect()
    }
}

/// Constraint in the one-sided form `nᵀx ≥ b`.
#[derive(Debug, Clone)]
struct OneSided {
    bound: ActiveBound,
    normal: DVector<f64>,
    b: f64,
}

fn one_sided(problem: &QpProblem, bound: ActiveBound) -> OneSided {
    let row = problem.a.row(bound.row).transpose();
    match bound.side {
        Side::Lower | Side::Equal => OneSided { bound, normal: row, b: problem.l[bound.row] },
        Side::Upper => OneSided { bound, normal: -row, b: -problem.u[bound.row] },
    }
}

fn factor(q: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), QpError> {
    if let Some(ch) = q.clone().cholesky() {
        return Ok((ch, 0.0));
    }
    let scale = q.amax().max(1.0);
    let mut shift = 1e-12 * scale;
    while shift <= 1e-6 * scale {
        let mut shifted = q.clone();
        for i in 0..q.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(ch) = shifted.cholesky() {
            return Ok((ch, shift));
        }
        shift *= 10.0;
    }
    Err(QpError::BadProblem("Q is not positive semidefinite".into()))
}

/// Working set with the cached products the dual steps need.
struct WorkingSet {
    cons: Vec<OneSided>,
    mult: Vec<f64>,
    /// Q⁻¹ nₖ for every active constraint
    qinv_n: Vec<DVector<f64>>,
    /// factorization of Nᵀ Q⁻¹ N
    gram: Option<nalgebra::LU<f64, Dyn, Dyn>>,
}

impl WorkingSet {
    fn new() -> Self {
        WorkingSet { cons: Vec::new(), mult: Vec::new(), qinv_n: Vec::new(), gram: None }
    }

    fn len(&self) -> usize {
        self.cons.len()
    }

    fn refactor(&mut self) {
        let q = self.len();
        if q == 0 {
            self.gram = None;
            return;
        }
        let g = DMatrix::from_fn(q, q, |i, j| self.cons[i].normal.dot(&self.qinv_n[j]));
        self.gram = Some(g.lu());
    }

    fn push(&mut self, c: OneSided, multiplier: f64, chol: &Cholesky<f64, Dyn>) {
        self.qinv_n.push(chol.solve(&c.normal));
        self.cons.push(c);
        self.mult.push(multiplier);
        self.refactor();
    }

    fn remove(&mut self, k: usize) {
        self.cons.remove(k);
        self.mult.remove(k);
        self.qinv_n.remove(k);
        self.refactor();
    }

    /// Minimizer with every working constraint held as an equality.
    fn resolve(&mut self, c: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> DVector<f64> {
        let qinv_c = chol.solve(c);
        let mut x = -&qinv_c;
        if let Some(gram) = &self.gram {
            let rhs = DVector::from_iterator(self.len(), self.cons.iter().map(|k| k.b + k.normal.dot(&qinv_c)));
            if let Some(u) = gram.solve(&rhs) {
                for (k, col) in self.qinv_n.iter().enumerate() {
                    x.axpy(u[k], col, 1.0);
                }
                self.mult = u.iter().copied().collect();
            }
        }
        x
    }
}

/// Stateful solver that warm-starts from the previous active set.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub options: QpOptions,
    warm: Vec<ActiveBound>,
}

impl QpSolver {
    pub fn new(options: QpOptions) -> Self {
        QpSolver { options, warm: Vec::new() }
    }

    /// Active set remembered from the last solve.
    pub fn warm_start(&self) -> &[ActiveBound] {
        &self.warm
    }

    pub fn set_warm_start(&mut self, bounds: Vec<ActiveBound>) {
        self.warm = bounds;
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve(&mut self, problem: &QpProblem) -> Result<QpSolution, QpError> {
        let sol = solve_with_hint(problem, &self.options, &self.warm)?;
        if sol.status == QpStatus::Optimal {
            self.warm = sol.active_bounds();
        } else {
            self.warm.clear();
        }
        Ok(sol)
    }
}

/// Cold-start solve.
pub fn solve_qp(problem: &QpProblem, options: &QpOptions) -> Result<QpSolution, QpError> {
    solve_with_hint(problem, options, &[])
}

/// Violation allowance of a row, relative to the size of its terms at `x`
/// so that round-off of the re-solve cannot re-trigger degenerate rows.
fn violation_tol(options: &QpOptions, b: f64, row_scale: f64) -> f64 {
    options.tol * (1.0 + b.abs() + row_scale)
}

/// Most violated constraint, preferring bounds listed in `hint`.
fn pick_violated(
    problem: &QpProblem,
    options: &QpOptions,
    x: &DVector<f64>,
    ws: &WorkingSet,
    hint: &[ActiveBound],
) -> Option<OneSided> {
    let ax = &problem.a * x;
    let is_active = |row: usize| ws.cons.iter().any(|c| c.bound.row == row);
    let x_norm = x.amax();
    let mut best: Option<(bool, f64, ActiveBound)> = None;
    for row in 0..problem.rows() {
        if is_active(row) {
            continue;
        }
        let (l, u) = (problem.l[row], problem.u[row]);
        let scale = problem.a.row(row).amax() * x_norm;
        let candidate = if l == u {
            let s = -(ax[row] - l).abs();
            (s < -violation_tol(options, l, scale)).then_some((s, Side::Equal))
        } else if l.is_finite() && ax[row] - l < -violation_tol(options, l, scale) {
            Some((ax[row] - l, Side::Lower))
        } else if u.is_finite() && u - ax[row] < -violation_tol(options, u, scale) {
            Some((u - ax[row], Side::Upper))
        } else {
            None
        };
        let Some((s, side)) = candidate else { continue };
        let bound = ActiveBound { row, side };
        let preferred = hint.iter().any(|h| h.row == row && (h.side == side || h.side == Side::Equal));
        let better = match best {
            None => true,
            Some((bp, bs, _)) => (preferred && !bp) || (preferred == bp && s < bs),
        };
        if better {
            best = Some((preferred, s, bound));
        }
    }
    best.map(|(_, _, bound)| {
        let mut c = one_sided(problem, bound);
        if bound.side == Side::Equal && c.normal.dot(x) > c.b {
            // Approach an equality from the violated side.
            c.normal = -c.normal;
            c.b = -c.b;
        }
        c
    })
}

/// Largest row violation at `x` in units of the row's violation allowance.
fn relative_violation(problem: &QpProblem, options: &QpOptions, x: &DVector<f64>) -> f64 {
    let ax = &problem.a * x;
    let x_norm = x.amax();
    (0..problem.rows())
        .map(|row| {
            let scale = problem.a.row(row).amax() * x_norm;
            let (l, u) = (problem.l[row], problem.u[row]);
            let below = if l.is_finite() { (l - ax[row]) / violation_tol(options, l, scale) } else { 0.0 };
            let above = if u.is_finite() { (ax[row] - u) / violation_tol(options, u, scale) } else { 0.0 };
            below.max(above)
        })
        .fold(0.0, f64::max)
}

/// Multiple of the violation allowance still accepted when degenerate rows
/// start cycling.
const CYCLE_ACCEPT: f64 = 1e3;

fn solve_with_hint(problem: &QpProblem, options: &QpOptions, hint: &[ActiveBound]) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let mut seen: HashSet<Vec<ActiveBound>> = HashSet::new();
    let (chol, shift) = factor(&problem.q)?;
    let mut ws = WorkingSet::new();
    let mut x = ws.resolve(&problem.c, &chol);
    let mut iterations = 0;

    let finish = |x: DVector<f64>, ws: &WorkingSet, status: QpStatus, iterations: usize| {
        let mut active: Vec<(ActiveBound, f64)> = ws
            .cons
            .iter()
            .zip(&ws.mult)
            .map(|(c, &m)| {
                // Report equality multipliers with respect to the original row.
                let sign = if c.bound.side == Side::Equal && c.normal.dot(&problem.a.row(c.bound.row).transpose()) < 0.0 {
                    -1.0
                } else {
                    1.0
                };
                (c.bound, sign * m)
            })
            .collect();
        active.sort_by_key(|(b, _)| *b);
        QpSolution { x, status, active, iterations, regularization: shift }
    };

    while let Some(p) = pick_violated(problem, options, &x, &ws, hint) {
        let mut mult_p = 0.0;
        let qinv_np = chol.solve(&p.normal);
        let unprojected = p.normal.dot(&qinv_np).max(f64::MIN_POSITIVE);
        loop {
            iterations += 1;
            if iterations > options.max_iter {
                return Ok(finish(x, &ws, QpStatus::MaxIter, iterations));
            }
            let s = p.normal.dot(&x) - p.b;
            let q = ws.len();
            let r = match &ws.gram {
                Some(gram) => {
                    let nt = DVector::from_iterator(q, ws.cons.iter().map(|c| c.normal.dot(&qinv_np)));
                    gram.solve(&nt).unwrap_or_else(|| DVector::zeros(q))
                }
                None => DVector::zeros(0),
            };
            let mut z = qinv_np.clone();
            for (k, col) in ws.qinv_n.iter().enumerate() {
                z.axpy(-r[k], col, 1.0);
            }

            let mut t1 = f64::INFINITY;
            let mut blocking = None;
            for k in 0..q {
                if ws.cons[k].bound.side != Side::Equal && r[k] > 0.0 {
                    let t = ws.mult[k] / r[k];
                    if t < t1 {
                        t1 = t;
                        blocking = Some(k);
                    }
                }
            }
            let zn = z.dot(&p.normal);
            let t2 = if zn > 1e-12 * unprojected { (-s / zn).max(0.0) } else { f64::INFINITY };
            let t = t1.min(t2);
            if t.is_infinite() {
                // No dual step decreases the violation: the constraints are inconsistent.
                return Ok(finish(x, &ws, QpStatus::Infeasible, iterations));
            }

            for k in 0..q {
                ws.mult[k] -= t * r[k];
            }
            mult_p += t;
            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            if t2 <= t1 {
                ws.push(p.clone(), mult_p, &chol);
                x = ws.resolve(&problem.c, &chol);
                let mut key: Vec<ActiveBound> = ws.cons.iter().map(|c| c.bound).collect();
                key.sort();
                if !seen.insert(key) {
                    // Degenerate rows trading places on round-off.
                    let status = if relative_violation(problem, options, &x) <= CYCLE_ACCEPT {
                        QpStatus::Optimal
                    } else {
                        QpStatus::MaxIter
                    };
                    return Ok(finish(x, &ws, status, iterations));
                }
                break;
            }
            ws.remove(blocking.expect("finite partial step has a blocking constraint"));
        }
    }
    Ok(finish(x, &ws, QpStatus::Optimal, iterations))
}

/// Karush-Kuhn-Tucker residuals of a solution, each as an infinity norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    pub dual: f64,
}

pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let ax = &problem.a * &sol.x;
    let mut grad = &problem.q * &sol.x + &problem.c;
    let mut complementarity: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for (bound, m) in &sol.active {
        let row = problem.a.row(bound.row).transpose();
        match bound.side {
            Side::Lower | Side::Equal => {
                grad -= &row * *m;
                complementarity = complementarity.max((m * (ax[bound.row] - problem.l[bound.row])).abs());
            }
            Side::Upper => {
                grad += &row * *m;
                complementarity = complementarity.max((m * (problem.u[bound.row] - ax[bound.row])).abs());
            }
        }
        if bound.side != Side::Equal {
            dual = dual.max(-m);
        }
    }
    let mut primal: f64 = 0.0;
    for i in 0..problem.rows() {
        primal = primal.max(problem.l[i] - ax[i]).max(ax[i] - problem.u[i]);
    }
    KktResiduals { stationarity: grad.amax(), primal: primal.max(0.0), complementarity, dual: dual.max(0.0) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(lo: f64, hi: f64) -> QpProblem {
        QpProblem {
            q: DMatrix::from_element(1, 1, 1.0),
            c: DVector::from_element(1, -1.0),
            a: DMatrix::from_element(1, 1, 1.0),
            l: DVector::from_element(1, lo),
            u: DVector::from_element(1, hi),
        }
    }

    #[test]
    fn unconstrained_scalar() {
        let p = QpProblem::unconstrained(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, -1.0));
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-15);
        assert!(s.active.is_empty());
    }

    #[test]
    fn upper_bound_becomes_active() {
        let p = scalar(f64::NEG_INFINITY, 0.5);
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.x[0], 0.5, epsilon = 1e-15);
        assert_eq!(s.active_bounds(), vec![ActiveBound { row: 0, side: Side::Upper }]);
        assert_relative_eq!(s.active[0].1, 0.5, epsilon = 1e-15);
        let k = kkt_residuals(&p, &s);
        assert!(k.stationarity < 1e-12 && k.primal < 1e-12 && k.complementarity < 1e-12);
    }

    #[test]
    fn equality_row() {
        let p = scalar(3.0, 3.0);
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-14);
        assert_eq!(s.active[0].0.side, Side::Equal);
        assert_relative_eq!(s.active[0].1, 2.0, epsilon = 1e-14);
        assert!(kkt_residuals(&p, &s).stationarity < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x ≥ 1 and x ≤ 0 through two separate rows.
        let p = QpProblem {
            q: DMatrix::identity(1, 1),
            c: DVector::zeros(1),
            a: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            l: DVector::from_vec(vec![1.0, f64::NEG_INFINITY]),
            u: DVector::from_vec(vec![f64::INFINITY, 0.0]),
        };
        assert_eq!(solve_qp(&p, &QpOptions::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn bad_problems_are_rejected() {
        let mut p = scalar(1.0, 0.0);
        assert!(matches!(p.validate(), Err(QpError::BadProblem(_))));
        p = QpProblem::unconstrained(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&p, &QpOptions::default()), Err(QpError::BadProblem(_))));
        p = QpProblem::unconstrained(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert!(matches!(solve_qp(&p, &QpOptions::default()), Err(QpError::BadProblem(_))));
    }

    #[test]
    fn semidefinite_q_gets_a_small_shift() {
        // min x0 with 0 ≤ x ≤ 1 and no curvature in x0.
        let p = QpProblem {
            q: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
            c: DVector::from_vec(vec![1.0, -0.5]),
            a: DMatrix::identity(2, 2),
            l: DVector::zeros(2),
            u: DVector::from_element(2, 1.0),
        };
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.regularization > 0.0);
        assert_relative_eq!(s.x[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn warm_start_is_remembered() {
        let mut solver = QpSolver::default();
        let p = scalar(f64::NEG_INFINITY, 0.5);
        let cold = solver.solve(&p).unwrap();
        assert_eq!(solver.warm_start(), &[ActiveBound { row: 0, side: Side::Upper }]);
        let warm = solver.solve(&p).unwrap();
        assert_eq!(cold.x, warm.x);
    }
}
