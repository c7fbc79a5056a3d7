//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Every row gets a slack so the system reads `A x + s = b`; rows whose
//! starting residual the slack cannot absorb also get an artificial column.
//! Phase 1 drives the artificials to zero, after which they are fixed at
//! `[0, 0]` and may linger in the basis on redundant rows. The solver keeps
//! its basis between calls to [`SimplexSolver::maximize`], so re-optimizing
//! the same polyhedron under a new cost vector starts from the last vertex.
//!
//! Pricing is Dantzig's rule; after a run of degenerate pivots it switches to
//! Bland's rule until the objective moves again. Given the row order the
//! whole procedure is deterministic.

use crate::polyhedron::{Polyhedron, RowKind};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (empty when infeasible).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    FreeZero,
}

#[derive(Debug, Clone)]
pub struct SimplexSolver {
    n_struct: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    rhs: Vec<f64>,
    first_artificial: usize,
    pivots_since_refactor: usize,
    feasible: bool,
    total_iterations: usize,
    iteration_limit: usize,
}

impl SimplexSolver {
    /// Builds the solver and runs phase 1. Use [`is_feasible`](Self::is_feasible)
    /// to learn whether the polyhedron is empty.
    pub fn new(poly: &Polyhedron) -> Self {
        let n = poly.num_vars();
        let m = poly.num_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut rhs = Vec::with_capacity(m);
        for (i, row) in poly.rows().iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
            rhs.push(row.rhs);
        }
        let mut lo: Vec<f64> = poly.lower().to_vec();
        let mut hi: Vec<f64> = poly.upper().to_vec();
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (v, s) = if lo[j].is_finite() {
                (lo[j], VarState::AtLower)
            } else if hi[j].is_finite() {
                (hi[j], VarState::AtUpper)
            } else {
                (0.0, VarState::FreeZero)
            };
            x.push(v);
            state.push(s);
        }
        let mut residual = rhs.clone();
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                residual[i] -= a * x[j];
            }
        }
        let mut basis = vec![usize::MAX; m];
        // slacks
        for (i, row) in poly.rows().iter().enumerate() {
            let (slo, shi) = match row.kind {
                RowKind::Le => (0.0, f64::INFINITY),
                RowKind::Ge => (f64::NEG_INFINITY, 0.0),
                RowKind::Eq => (0.0, 0.0),
            };
            cols.push(vec![(i, 1.0)]);
            lo.push(slo);
            hi.push(shi);
            let r = residual[i];
            let absorbs = match row.kind {
                RowKind::Le => r >= 0.0,
                RowKind::Ge => r <= 0.0,
                RowKind::Eq => false,
            };
            if absorbs {
                basis[i] = n + i;
                state.push(VarState::Basic(i));
                x.push(r);
            } else if row.kind == RowKind::Ge {
                state.push(VarState::AtUpper);
                x.push(0.0);
            } else {
                state.push(VarState::AtLower);
                x.push(0.0);
            }
        }
        let first_artificial = n + m;
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            if basis[i] == usize::MAX {
                let sigma = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
                let j = cols.len();
                cols.push(vec![(i, sigma)]);
                lo.push(0.0);
                hi.push(f64::INFINITY);
                x.push(residual[i].abs());
                state.push(VarState::Basic(i));
                basis[i] = j;
                binv[i * m + i] = sigma;
            } else {
                binv[i * m + i] = 1.0;
            }
        }
        let mut solver = Self {
            n_struct: n,
            m,
            cols,
            lo,
            hi,
            x,
            state,
            basis,
            binv,
            rhs,
            first_artificial,
            pivots_since_refactor: 0,
            feasible: false,
            total_iterations: 0,
            iteration_limit: 200_000,
        };
        solver.phase_one();
        solver
    }

    pub fn is_feasible(&self) -> bool {
        self.feasible
    }

    pub fn num_structural(&self) -> usize {
        self.n_struct
    }

    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    pub fn with_iteration_limit(mut self, limit: usize) -> Self {
        self.iteration_limit = limit;
        self
    }

    /// Current vertex (structural part).
    pub fn point(&self) -> Vec<f64> {
        self.x[..self.n_struct].to_vec()
    }

    fn phase_one(&mut self) {
        let total = self.cols.len();
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(self.first_artificial) {
            *c = -1.0;
        }
        let scale = 1.0 + self.rhs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let status = self.iterate(&cost);
        let infeasibility: f64 = self.x[self.first_artificial..].iter().sum();
        self.feasible = status == LpStatus::Optimal && infeasibility <= 1e-8 * scale;
        for j in self.first_artificial..total {
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
            if !matches!(self.state[j], VarState::Basic(_)) {
                self.state[j] = VarState::AtLower;
                self.x[j] = 0.0;
            }
        }
    }

    /// Maximizes `costs · x` over the polyhedron, warm-starting from the
    /// current basis.
    pub fn maximize(&mut self, costs: &[f64]) -> LpSolution {
        assert_eq!(costs.len(), self.n_struct, "cost vector length");
        if !self.feasible {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                iterations: 0,
            };
        }
        let mut full = vec![0.0; self.cols.len()];
        full[..self.n_struct].copy_from_slice(costs);
        let before = self.total_iterations;
        let status = self.iterate(&full);
        let x = self.point();
        let objective = costs.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            status,
            x,
            objective,
            iterations: self.total_iterations - before,
        }
    }

    fn iterate(&mut self, cost: &[f64]) -> LpStatus {
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut y = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        let mut iterations = 0usize;
        loop {
            if iterations >= self.iteration_limit {
                return LpStatus::IterationLimit;
            }
            // duals y = c_B B^{-1}
            y.iter_mut().for_each(|v| *v = 0.0);
            for (i, &bj) in self.basis.iter().enumerate() {
                let cb = cost[bj];
                if cb != 0.0 {
                    let row = &self.binv[i * m..(i + 1) * m];
                    for (yr, &b) in y.iter_mut().zip(row) {
                        *yr += cb * b;
                    }
                }
            }
            // pricing
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.cols.len() {
                let dir = match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ if self.lo[j] == self.hi[j] => continue,
                    s => {
                        let d = cost[j] - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>();
                        match s {
                            VarState::AtLower if d > DUAL_TOL => (1.0, d),
                            VarState::AtUpper if d < -DUAL_TOL => (-1.0, -d),
                            VarState::FreeZero if d.abs() > DUAL_TOL => (d.signum(), d.abs()),
                            _ => continue,
                        }
                    }
                };
                if bland {
                    entering = Some((j, dir.0));
                    break;
                }
                if dir.1 > best {
                    best = dir.1;
                    entering = Some((j, dir.0));
                }
            }
            let Some((q, dir)) = entering else {
                if self.max_basic_infeasibility() > 10.0 * PRIMAL_TOL && self.pivots_since_refactor > 0 {
                    self.refactor();
                    continue;
                }
                return LpStatus::Optimal;
            };

            // alpha = B^{-1} A_q
            alpha.iter_mut().for_each(|v| *v = 0.0);
            for &(r, a) in &self.cols[q] {
                for (i, al) in alpha.iter_mut().enumerate() {
                    *al += self.binv[i * m + r] * a;
                }
            }

            // ratio test; basic i moves by -dir * alpha[i] * t
            let mut t_best = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_key = (0.0_f64, usize::MAX);
            for i in 0..m {
                let delta = -dir * alpha[i];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[i];
                let (t, to_upper) = if delta < 0.0 {
                    if self.lo[bj] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.x[bj] - self.lo[bj]) / -delta).max(0.0), false)
                } else {
                    if self.hi[bj] == f64::INFINITY {
                        continue;
                    }
                    (((self.hi[bj] - self.x[bj]) / delta).max(0.0), true)
                };
                let better = if t < t_best - 1e-12 {
                    true
                } else if t <= t_best + 1e-12 && leave.is_some() {
                    if bland {
                        bj < leave_key.1
                    } else {
                        delta.abs() > leave_key.0
                    }
                } else {
                    false
                };
                if better || (leave.is_none() && t <= t_best) {
                    t_best = t;
                    leave = Some((i, to_upper));
                    leave_key = (delta.abs(), bj);
                }
            }
            if t_best == f64::INFINITY {
                return LpStatus::Unbounded;
            }

            iterations += 1;
            self.total_iterations += 1;
            if t_best <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            // move
            for i in 0..m {
                let bj = self.basis[i];
                self.x[bj] -= dir * alpha[i] * t_best;
            }
            self.x[q] += dir * t_best;

            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.x[q] = self.hi[q];
                        self.state[q] = VarState::AtUpper;
                    } else {
                        self.x[q] = self.lo[q];
                        self.state[q] = VarState::AtLower;
                    }
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    if to_upper {
                        self.x[out] = self.hi[out];
                        self.state[out] = VarState::AtUpper;
                    } else {
                        self.x[out] = self.lo[out];
                        self.state[out] = VarState::AtLower;
                    }
                    self.basis[r] = q;
                    self.state[q] = VarState::Basic(r);
                    self.pivot(r, &alpha);
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= REFACTOR_EVERY {
                        self.refactor();
                    }
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        for v in &mut self.binv[r * m..(r + 1) * m] {
            *v /= piv;
        }
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (prow, rest) = tail.split_at_mut(m);
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                let off = (i - r - 1) * m;
                &mut rest[off..off + m]
            };
            for (v, &p) in row.iter_mut().zip(prow.iter()) {
                *v -= a * p;
            }
        }
    }

    fn max_basic_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .map(|&j| (self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Recomputes B^{-1} from scratch and the basic values from the nonbasic
    /// ones.
    fn refactor(&mut self) {
        let m = self.m;
        self.pivots_since_refactor = 0;
        if m == 0 {
            return;
        }
        let mut b = vec![0.0; m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[j] {
                b[r * m + pos] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv_row = (col..m)
                .max_by(|&a, &c| b[a * m + col].abs().total_cmp(&b[c * m + col].abs()))
                .expect("nonempty range");
            let piv = b[piv_row * m + col];
            if piv.abs() < 1e-13 {
                // singular basis; keep the product-form inverse
                return;
            }
            if piv_row != col {
                for k in 0..m {
                    b.swap(piv_row * m + k, col * m + k);
                    inv.swap(piv_row * m + k, col * m + k);
                }
            }
            let inv_piv = 1.0 / piv;
            for k in 0..m {
                b[col * m + k] *= inv_piv;
                inv[col * m + k] *= inv_piv;
            }
            for row in 0..m {
                if row == col {
                    continue;
                }
                let f = b[row * m + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    b[row * m + k] -= f * b[col * m + k];
                    inv[row * m + k] -= f * inv[col * m + k];
                }
            }
        }
        self.binv = inv;
        let mut resid = self.rhs.clone();
        for j in 0..self.cols.len() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.x[j];
            if v != 0.0 {
                for &(r, a) in &self.cols[j] {
                    resid[r] -= a * v;
                }
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|r| self.binv[i * m + r] * resid[r]).sum();
            self.x[self.basis[i]] = v;
        }
    }
}

/// One-shot LP: maximize `costs · x` over `poly`.
pub fn lp_solve(costs: &[f64], poly: &Polyhedron) -> LpSolution {
    SimplexSolver::new(poly).maximize(costs)
}
