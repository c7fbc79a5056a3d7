//! Drift-plus-penalty objectives and the solvers that maximize them over a
//! polyhedron.

mod frank_wolfe;
pub mod lp;

use std::fmt;
use std::sync::Arc;

pub use frank_wolfe::{ConditionalGradient, SolveOptions, SolveReport, SolveStatus};
pub use lp::{lp_solve, LpSolution, LpStatus, SimplexSolver};

use crate::error::{Error, Result};
use crate::model::QueueState;

/// Floor applied to expected service inside α-fair gradient evaluations.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Linear map from solver variables to per-pair expected service
/// `x_pair = Σ coeff · z_var`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServiceMap {
    pair_count: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl ServiceMap {
    pub fn new(pair_count: usize) -> Self {
        Self {
            pair_count,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, var: usize, pair: usize, coeff: f64) {
        debug_assert!(pair < self.pair_count);
        self.entries.push((var, pair, coeff));
    }

    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.pair_count];
        for &(var, pair, a) in &self.entries {
            x[pair] += a * z[var];
        }
        x
    }

    /// `out = Mᵀ w`, written over the first `out.len()` variables.
    pub fn apply_transpose(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(var, pair, a) in &self.entries {
            out[var] += a * w[pair];
        }
    }
}

/// Concave utility of the per-pair expected service vector.
pub trait PairUtility: fmt::Debug + Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// `(f_min, f_max)` over the box `[0, x_max]^pairs`.
    fn bounds(&self, x_max: f64) -> (f64, f64);
}

#[derive(Debug, Clone)]
pub enum UtilityFunction {
    /// Σ over `enabled` pairs of `w_c · x^{1−α_c} / (1−α_c)`.
    AlphaFair {
        weights: Vec<f64>,
        alphas: Vec<f64>,
        enabled: Vec<bool>,
    },
    /// Σ coeffs[pair] · x[pair].
    Linear { coeffs: Vec<f64> },
    Custom(Arc<dyn PairUtility>),
}

impl UtilityFunction {
    pub fn alpha_fair(weights: Vec<f64>, alphas: Vec<f64>, enabled: Vec<bool>) -> Result<Self> {
        if weights.len() != alphas.len() {
            return Err(Error::Dimension {
                expected: weights.len(),
                got: alphas.len(),
            });
        }
        if !enabled.len().is_multiple_of(weights.len().max(1)) {
            return Err(Error::InvalidArgument(
                "pair mask length must be a multiple of the class count".into(),
            ));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidArgument(format!("alpha {a} must lie in (0, 1)")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weight {w} must be >= 0")));
        }
        Ok(Self::AlphaFair {
            weights,
            alphas,
            enabled,
        })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear { .. })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::AlphaFair {
                weights,
                alphas,
                enabled,
            } => {
                let classes = weights.len();
                x.iter()
                    .enumerate()
                    .filter(|(p, _)| enabled[*p])
                    .map(|(p, &xp)| {
                        let c = p % classes;
                        let e = 1.0 - alphas[c];
                        weights[c] * xp.max(0.0).powf(e) / e
                    })
                    .sum()
            }
            Self::Linear { coeffs } => coeffs.iter().zip(x).map(|(c, v)| c * v).sum(),
            Self::Custom(u) => u.value(x),
        }
    }

    /// ∂f/∂x; α-fair arguments are floored at [`GRADIENT_FLOOR`].
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::AlphaFair {
                weights,
                alphas,
                enabled,
            } => {
                let classes = weights.len();
                for (p, (g, &xp)) in out.iter_mut().zip(x).enumerate() {
                    *g = if enabled[p] {
                        let c = p % classes;
                        weights[c] * xp.max(GRADIENT_FLOOR).powf(-alphas[c])
                    } else {
                        0.0
                    };
                }
            }
            Self::Linear { coeffs } => out.copy_from_slice(coeffs),
            Self::Custom(u) => u.gradient(x, out),
        }
    }

    pub fn bounds(&self, x_max: f64) -> (f64, f64) {
        match self {
            Self::AlphaFair {
                weights,
                alphas,
                enabled,
            } => {
                let classes = weights.len();
                let fmax = enabled
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| **e)
                    .map(|(p, _)| {
                        let c = p % classes;
                        let e = 1.0 - alphas[c];
                        weights[c] * x_max.powf(e) / e
                    })
                    .sum();
                (0.0, fmax)
            }
            Self::Linear { coeffs } => coeffs.iter().fold((0.0, 0.0), |(lo, hi), &c| {
                (lo + (c * x_max).min(0.0), hi + (c * x_max).max(0.0))
            }),
            Self::Custom(u) => u.bounds(x_max),
        }
    }
}

/// h_t(z) = Σ_pair Q_pair · x_pair(z) + V · f(x(z)).
#[derive(Debug, Clone)]
pub struct DriftObjective<'a> {
    queue: Vec<f64>,
    v: f64,
    utility: &'a UtilityFunction,
    map: &'a ServiceMap,
}

impl<'a> DriftObjective<'a> {
    pub fn new(
        queue: &QueueState,
        v: f64,
        utility: &'a UtilityFunction,
        map: &'a ServiceMap,
    ) -> Result<Self> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("V = {v} must be >= 0")));
        }
        if queue.backlog().len() != map.pair_count() {
            return Err(Error::Dimension {
                expected: map.pair_count(),
                got: queue.backlog().len(),
            });
        }
        Ok(Self {
            queue: queue.backlog().iter().map(|&q| q as f64).collect(),
            v,
            utility,
            map,
        })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn map(&self) -> &ServiceMap {
        self.map
    }

    /// True when h_t is linear in z (V = 0 or a linear utility).
    pub fn is_linear(&self) -> bool {
        self.v == 0.0 || self.utility.is_linear()
    }

    pub fn service(&self, z: &[f64]) -> Vec<f64> {
        self.map.apply(z)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.value_at_service(&self.map.apply(z))
    }

    pub fn value_at_service(&self, x: &[f64]) -> f64 {
        let drift: f64 = self.queue.iter().zip(x).map(|(q, v)| q * v).sum();
        if self.v == 0.0 {
            drift
        } else {
            drift + self.v * self.utility.value(x)
        }
    }

    /// Per-pair weights ∂h/∂x = Q + V ∇f(x).
    pub fn service_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        if self.v != 0.0 {
            self.utility.gradient(x, &mut g);
        }
        for (gp, q) in g.iter_mut().zip(&self.queue) {
            *gp = q + self.v * *gp;
        }
        g
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let x = self.map.apply(z);
        let w = self.service_gradient(&x);
        let mut out = vec![0.0; z.len()];
        self.map.apply_transpose(&w, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_link_map(r: f64) -> ServiceMap {
        let mut m = ServiceMap::new(1);
        m.push(0, 0, r);
        m
    }

    #[test]
    fn hand_expanded_single_link() {
        let map = single_link_map(0.5);
        let f = UtilityFunction::Linear { coeffs: vec![3.0] };
        let q = QueueState::from_backlog(vec![2], 0);
        let h = DriftObjective::new(&q, 1.0, &f, &map).unwrap();
        for p in [0.0, 0.3, 1.0] {
            assert!((h.value(&[p]) - 2.5 * p).abs() < 1e-15);
        }
        assert!((h.gradient(&[0.4])[0] - 2.5).abs() < 1e-15);
        assert!(h.is_linear());
    }

    #[test]
    fn zero_queue_is_pure_utility_and_zero_v_is_linear() {
        let map = single_link_map(0.8);
        let f = UtilityFunction::alpha_fair(vec![0.7], vec![0.75], vec![true]).unwrap();
        let q0 = QueueState::empty(1);
        let h = DriftObjective::new(&q0, 1.0, &f, &map).unwrap();
        assert!((h.value(&[0.5]) - f.value(&[0.4])).abs() < 1e-15);
        assert!(!h.is_linear());
        let q = QueueState::from_backlog(vec![3], 0);
        let lin = DriftObjective::new(&q, 0.0, &f, &map).unwrap();
        assert!(lin.is_linear());
        assert!((lin.value(&[0.5]) - 3.0 * 0.4).abs() < 1e-15);
        assert!(DriftObjective::new(&q, -1.0, &f, &map).is_err());
    }

    #[test]
    fn alpha_fair_gradient_matches_central_differences() {
        let f = UtilityFunction::alpha_fair(
            vec![0.106, 0.516, 0.7],
            vec![0.5, 0.875, 0.75],
            vec![true; 6],
        )
        .unwrap();
        let x = vec![0.01, 0.3, 2.0, 17.0, 60.0, 0.05];
        let mut g = vec![0.0; 6];
        f.gradient(&x, &mut g);
        let h = 1e-6;
        for p in 0..6 {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[p] += h;
            dn[p] -= h;
            let fd = (f.value(&up) - f.value(&dn)) / (2.0 * h);
            assert!(((fd - g[p]) / g[p]).abs() < 1e-5, "pair {p}: {fd} vs {}", g[p]);
        }
    }

    #[test]
    fn alpha_fair_bounds_and_mask() {
        let f = UtilityFunction::alpha_fair(vec![1.0, 2.0], vec![0.5, 0.5], vec![true, false]).unwrap();
        let (lo, hi) = f.bounds(4.0);
        assert_eq!(lo, 0.0);
        assert!((hi - 4.0).abs() < 1e-12);
        assert!((f.value(&[4.0, 100.0]) - 4.0).abs() < 1e-12);
        assert!(UtilityFunction::alpha_fair(vec![1.0], vec![1.0], vec![true]).is_err());
    }
}
