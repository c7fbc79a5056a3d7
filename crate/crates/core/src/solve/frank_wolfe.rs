//! Away-step conditional gradient over a polyhedron, with an LP oracle that
//! keeps its simplex basis across iterations and across calls.

use super::lp::{LpStatus, SimplexSolver};
use super::DriftObjective;
use crate::error::{Error, Result};
use crate::polyhedron::Polyhedron;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Objective was linear; the LP vertex is exact.
    Optimal,
    GapReached,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative gap: stop once `gap <= tol * max(1, |h|)`.
    pub tol: f64,
    pub max_iterations: usize,
    pub away_steps: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iterations: 5000,
            away_steps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub point: Vec<f64>,
    pub objective: f64,
    /// Frank–Wolfe gap `∇h(z)·(s − z)` at the returned point; an upper bound
    /// on the suboptimality of `objective`.
    pub gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

const SAME_VERTEX: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct ConditionalGradient {
    lp: SimplexSolver,
    /// Convex decomposition of the current iterate.
    active: Vec<(Vec<f64>, f64)>,
}

impl ConditionalGradient {
    pub fn new(poly: &Polyhedron) -> Result<Self> {
        let lp = SimplexSolver::new(poly);
        if !lp.is_feasible() {
            return Err(Error::QosUnsupportable);
        }
        Ok(Self {
            lp,
            active: Vec::new(),
        })
    }

    /// Drops the remembered iterate; the LP basis is kept.
    pub fn reset(&mut self) {
        self.active.clear();
    }

    fn oracle(&mut self, g: &[f64]) -> Result<Vec<f64>> {
        let sol = self.lp.maximize(g);
        match sol.status {
            LpStatus::Optimal => Ok(sol.x),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::Infeasible => Err(Error::QosUnsupportable),
            LpStatus::IterationLimit => Err(Error::Solver("simplex iteration limit reached".into())),
        }
    }

    fn iterate_point(&self) -> Vec<f64> {
        let n = self.active[0].0.len();
        let mut z = vec![0.0; n];
        for (v, w) in &self.active {
            for (zi, vi) in z.iter_mut().zip(v) {
                *zi += w * vi;
            }
        }
        z
    }

    /// Maximizes the concave objective, starting from the previous call's
    /// iterate when there is one.
    pub fn maximize(&mut self, obj: &DriftObjective<'_>, opts: &SolveOptions) -> Result<SolveReport> {
        let n = self.lp.num_structural();
        if obj.is_linear() {
            let zeros = vec![0.0; n];
            let g = obj.gradient(&zeros);
            let s = self.oracle(&g)?;
            self.active = vec![(s.clone(), 1.0)];
            return Ok(SolveReport {
                objective: obj.value(&s),
                point: s,
                gap: 0.0,
                iterations: 0,
                status: SolveStatus::Optimal,
            });
        }
        if self.active.is_empty() {
            let g = obj.gradient(&vec![0.0; n]);
            let s = self.oracle(&g)?;
            self.active.push((s, 1.0));
        }
        let mut z = self.iterate_point();
        let map = obj.map();
        for it in 0..opts.max_iterations {
            let g = obj.gradient(&z);
            let s = self.oracle(&g)?;
            let gz = dot(&g, &z);
            let fw_gap = dot(&g, &s) - gz;
            let h = obj.value(&z);
            if fw_gap <= opts.tol * h.abs().max(1.0) {
                return Ok(SolveReport {
                    point: z,
                    objective: h,
                    gap: fw_gap.max(0.0),
                    iterations: it,
                    status: SolveStatus::GapReached,
                });
            }
            let away = if opts.away_steps && self.active.len() > 1 {
                let (ai, gv) = self
                    .active
                    .iter()
                    .enumerate()
                    .map(|(i, (v, _))| (i, dot(&g, v)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                Some((ai, gz - gv))
            } else {
                None
            };
            match away {
                Some((ai, away_gap)) if away_gap > fw_gap => {
                    let wa = self.active[ai].1;
                    let gmax = wa / (1.0 - wa);
                    let d: Vec<f64> = z.iter().zip(&self.active[ai].0).map(|(a, b)| a - b).collect();
                    let step = line_search(obj, &map.apply(&z), &map.apply(&d), gmax);
                    for (_, w) in self.active.iter_mut() {
                        *w *= 1.0 + step;
                    }
                    if step >= gmax {
                        self.active.remove(ai);
                    } else {
                        self.active[ai].1 -= step;
                    }
                    axpy(&mut z, step, &d);
                }
                _ => {
                    let d: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a - b).collect();
                    let step = line_search(obj, &map.apply(&z), &map.apply(&d), 1.0);
                    if step >= 1.0 {
                        self.active = vec![(s, 1.0)];
                        z = self.active[0].0.clone();
                    } else {
                        for (_, w) in self.active.iter_mut() {
                            *w *= 1.0 - step;
                        }
                        match self.active.iter().position(|(v, _)| max_abs_diff(v, &s) < SAME_VERTEX) {
                            Some(i) => self.active[i].1 += step,
                            None => self.active.push((s, step)),
                        }
                        self.active.retain(|(_, w)| *w > 0.0);
                        axpy(&mut z, step, &d);
                    }
                }
            }
        }
        let g = obj.gradient(&z);
        let s = self.oracle(&g)?;
        let gap = (dot(&g, &s) - dot(&g, &z)).max(0.0);
        Ok(SolveReport {
            objective: obj.value(&z),
            point: z,
            gap,
            iterations: opts.max_iterations,
            status: SolveStatus::MaxIterations,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(z: &mut [f64], a: f64, d: &[f64]) {
    for (zi, di) in z.iter_mut().zip(d) {
        *zi += a * di;
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact line search on the concave restriction φ(γ) = h(x + γ dx) for
/// γ ∈ [0, γmax], by bisection on φ'.
fn line_search(obj: &DriftObjective<'_>, x: &[f64], dx: &[f64], gmax: f64) -> f64 {
    let slope = |g: f64| {
        let xs: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + g * b).collect();
        dot(&obj.service_gradient(&xs), dx)
    };
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    if slope(gmax) >= 0.0 {
        return gmax;
    }
    let (mut lo, mut hi) = (0.0, gmax);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
