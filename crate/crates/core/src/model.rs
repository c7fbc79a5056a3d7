//! Network, QoS, arrival and queue vocabulary shared by every other module.
//!
//! Pairs `(client, class)` are flattened as `client * class_count + class`.
//! Links are kept in a canonical order sorted by `(inp, client)`; that order
//! fixes the layout of [`SchedulePrior`] and the categorical sampling order in
//! the simulator.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the per-InP simplex and the client rate caps.
pub const PRIOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub inp: usize,
    pub client: usize,
    /// Probability that an activation of this link delivers one unit.
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    inp_count: usize,
    client_count: usize,
    class_count: usize,
    links: Vec<Link>,
    rate_caps: Vec<f64>,
    inp_links: Vec<Vec<usize>>,
    client_links: Vec<Vec<usize>>,
}

impl NetworkTopology {
    pub fn new(
        inp_count: usize,
        client_count: usize,
        class_count: usize,
        mut links: Vec<Link>,
        rate_caps: Vec<f64>,
    ) -> Result<Self> {
        if inp_count == 0 || client_count == 0 || class_count == 0 {
            return Err(Error::Topology(
                "InP, client and class counts must be positive".into(),
            ));
        }
        if rate_caps.len() != client_count {
            return Err(Error::Dimension {
                expected: client_count,
                got: rate_caps.len(),
            });
        }
        if let Some(u) = rate_caps.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
            return Err(Error::Topology(format!("rate cap {u} must be positive")));
        }
        links.sort_by_key(|l| (l.inp, l.client));
        for pair in links.windows(2) {
            if pair[0].inp == pair[1].inp && pair[0].client == pair[1].client {
                return Err(Error::Topology(format!(
                    "duplicate link ({}, {})",
                    pair[0].inp, pair[0].client
                )));
            }
        }
        let mut inp_links = vec![Vec::new(); inp_count];
        let mut client_links = vec![Vec::new(); client_count];
        for (idx, link) in links.iter().enumerate() {
            if link.inp >= inp_count || link.client >= client_count {
                return Err(Error::Topology(format!(
                    "link ({}, {}) references an unknown endpoint",
                    link.inp, link.client
                )));
            }
            if !(link.success > 0.0 && link.success < 1.0) {
                return Err(Error::Topology(format!(
                    "success probability {} of link ({}, {}) must lie in (0, 1)",
                    link.success, link.inp, link.client
                )));
            }
            inp_links[link.inp].push(idx);
            client_links[link.client].push(idx);
        }
        if let Some(i) = client_links.iter().position(Vec::is_empty) {
            return Err(Error::Topology(format!("client {i} has no incident link")));
        }
        if let Some(k) = inp_links.iter().position(Vec::is_empty) {
            return Err(Error::Topology(format!("InP {k} has no incident link")));
        }
        Ok(Self {
            inp_count,
            client_count,
            class_count,
            links,
            rate_caps,
            inp_links,
            client_links,
        })
    }

    /// Every InP connected to every client; `inp_success[k]` is shared by all
    /// links of InP `k`.
    pub fn full_mesh(
        inp_success: &[f64],
        client_count: usize,
        class_count: usize,
        rate_cap: f64,
    ) -> Result<Self> {
        let links = inp_success
            .iter()
            .enumerate()
            .flat_map(|(inp, &success)| {
                (0..client_count).map(move |client| Link {
                    inp,
                    client,
                    success,
                })
            })
            .collect();
        Self::new(
            inp_success.len(),
            client_count,
            class_count,
            links,
            vec![rate_cap; client_count],
        )
    }

    pub fn inp_count(&self) -> usize {
        self.inp_count
    }

    pub fn client_count(&self) -> usize {
        self.client_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn pair_count(&self) -> usize {
        self.client_count * self.class_count
    }

    pub fn pair_index(&self, client: usize, class: usize) -> usize {
        client * self.class_count + class
    }

    /// Inverse of [`pair_index`](Self::pair_index).
    pub fn pair_of(&self, pair: usize) -> (usize, usize) {
        (pair / self.class_count, pair % self.class_count)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Indices (into [`links`](Self::links)) of the links of InP `k`.
    pub fn inp_links(&self, inp: usize) -> &[usize] {
        &self.inp_links[inp]
    }

    /// Indices of the links incident to client `i`.
    pub fn client_links(&self, client: usize) -> &[usize] {
        &self.client_links[client]
    }

    /// N(k): clients reachable from InP `k`.
    pub fn clients_of(&self, inp: usize) -> impl Iterator<Item = usize> + '_ {
        self.inp_links[inp].iter().map(|&l| self.links[l].client)
    }

    /// N(i): InPs that can serve client `i`.
    pub fn inps_of(&self, client: usize) -> impl Iterator<Item = usize> + '_ {
        self.client_links[client].iter().map(|&l| self.links[l].inp)
    }

    pub fn link_index(&self, inp: usize, client: usize) -> Option<usize> {
        self.inp_links
            .get(inp)?
            .iter()
            .copied()
            .find(|&l| self.links[l].client == client)
    }

    pub fn rate_caps(&self) -> &[f64] {
        &self.rate_caps
    }

    pub fn rate_cap(&self, client: usize) -> f64 {
        self.rate_caps[client]
    }

    pub fn r_max(&self) -> f64 {
        self.links.iter().map(|l| l.success).fold(0.0, f64::max)
    }

    pub fn u_max(&self) -> f64 {
        self.rate_caps.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-pair service-level agreement `(T_s, γ, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QosSpec {
    frame_slots: usize,
    gamma: Vec<f64>,
    reliability: Vec<f64>,
}

impl QosSpec {
    pub fn new(
        topo: &NetworkTopology,
        frame_slots: usize,
        gamma: Vec<f64>,
        reliability: Vec<f64>,
    ) -> Result<Self> {
        if frame_slots == 0 {
            return Err(Error::QosSpec("frame size must be positive".into()));
        }
        for v in [&gamma, &reliability] {
            if v.len() != topo.pair_count() {
                return Err(Error::Dimension {
                    expected: topo.pair_count(),
                    got: v.len(),
                });
            }
        }
        if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0 && **g < 1.0)) {
            return Err(Error::QosSpec(format!("gamma {g} must lie in [0, 1)")));
        }
        if let Some(&q) = reliability.iter().find(|q| !(**q >= 0.0 && **q < 1.0)) {
            return Err(Error::Reliability(q));
        }
        Ok(Self {
            frame_slots,
            gamma,
            reliability,
        })
    }

    /// No active QoS requirement anywhere.
    pub fn unconstrained(topo: &NetworkTopology, frame_slots: usize) -> Result<Self> {
        let n = topo.pair_count();
        Self::new(topo, frame_slots, vec![0.0; n], vec![0.0; n])
    }

    /// Same frame size with every requirement dropped (q = 0).
    pub fn without_requirements(&self) -> Self {
        Self {
            frame_slots: self.frame_slots,
            gamma: vec![0.0; self.gamma.len()],
            reliability: vec![0.0; self.reliability.len()],
        }
    }

    pub fn frame_slots(&self) -> usize {
        self.frame_slots
    }

    pub fn gamma(&self, pair: usize) -> f64 {
        self.gamma[pair]
    }

    pub fn reliability(&self, pair: usize) -> f64 {
        self.reliability[pair]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    pub fn reliabilities(&self) -> &[f64] {
        &self.reliability
    }

    pub fn is_active(&self, pair: usize) -> bool {
        self.reliability[pair] > 0.0
    }

    /// The active set S = {(i, c) : q > 0}, as flat pair indices.
    pub fn active_pairs(&self) -> Vec<usize> {
        (0..self.reliability.len())
            .filter(|&p| self.is_active(p))
            .collect()
    }

    /// ‖q‖∞ over the active set (0 when nothing is active).
    pub fn max_reliability(&self) -> f64 {
        self.reliability.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Constant { rate: u64 },
    /// Poisson draws clamped at the cap.
    Poisson { rate: f64 },
    /// Pareto(shape, scale) draws rounded to the nearest integer and clamped.
    TruncatedPareto { shape: f64, scale: f64 },
}

impl ArrivalProcess {
    /// Truncated Pareto whose scale is solved so the truncated mean equals
    /// `rate`.
    pub fn pareto_with_mean(rate: f64, shape: f64, a_max: u64) -> Result<Self> {
        if !(shape > 0.0) {
            return Err(Error::Arrival(format!("Pareto shape {shape} must be positive")));
        }
        if !(rate > 0.0 && rate < a_max as f64) {
            return Err(Error::Arrival(format!(
                "Pareto mean {rate} must lie in (0, {a_max})"
            )));
        }
        let (mut lo, mut hi) = (0.0_f64, a_max as f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let m = Self::TruncatedPareto { shape, scale: mid }.mean(a_max);
            if m < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self::TruncatedPareto {
            shape,
            scale: 0.5 * (lo + hi),
        })
    }

    pub fn validate(&self, a_max: u64) -> Result<()> {
        match *self {
            Self::Constant { rate } if rate > a_max => Err(Error::Arrival(format!(
                "constant rate {rate} exceeds A_max = {a_max}"
            ))),
            Self::Poisson { rate } if !(rate.is_finite() && rate >= 0.0) => {
                Err(Error::Arrival(format!("Poisson rate {rate} must be >= 0")))
            }
            Self::TruncatedPareto { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                Err(Error::Arrival(format!(
                    "Pareto shape {shape} and scale {scale} must be positive"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Exact mean of the capped integer process.
    pub fn mean(&self, a_max: u64) -> f64 {
        self.moments(a_max).0
    }

    /// Exact second moment E[a²] of the capped integer process.
    pub fn second_moment(&self, a_max: u64) -> f64 {
        self.moments(a_max).1
    }

    fn moments(&self, a_max: u64) -> (f64, f64) {
        match *self {
            Self::Constant { rate } => {
                let r = rate.min(a_max) as f64;
                (r, r * r)
            }
            Self::Poisson { rate } => {
                if rate == 0.0 {
                    return (0.0, 0.0);
                }
                let (mut m1, mut m2, mut below) = (0.0, 0.0, 0.0);
                let ln_rate = rate.ln();
                let mut ln_pmf = -rate;
                for k in 0..a_max {
                    let pk = ln_pmf.exp();
                    let kf = k as f64;
                    m1 += kf * pk;
                    m2 += kf * kf * pk;
                    below += pk;
                    ln_pmf += ln_rate - ((k + 1) as f64).ln();
                }
                let tail = (1.0 - below).max(0.0);
                let a = a_max as f64;
                (m1 + a * tail, m2 + a * a * tail)
            }
            Self::TruncatedPareto { shape, scale } => {
                let cdf = |x: f64| {
                    if x < scale {
                        0.0
                    } else {
                        1.0 - (scale / x).powf(shape)
                    }
                };
                let (mut m1, mut m2) = (0.0, 0.0);
                for n in 1..a_max {
                    let nf = n as f64;
                    let pn = cdf(nf + 0.5) - cdf(nf - 0.5);
                    m1 += nf * pn;
                    m2 += nf * nf * pn;
                }
                let a = a_max as f64;
                let tail = 1.0 - cdf(a - 0.5);
                (m1 + a * tail, m2 + a * a * tail)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, a_max: u64) -> u64 {
        match *self {
            Self::Constant { rate } => rate.min(a_max),
            Self::Poisson { rate } => {
                if rate == 0.0 {
                    return 0;
                }
                let draw: f64 = Poisson::new(rate)
                    .expect("validated Poisson rate")
                    .sample(rng);
                (draw as u64).min(a_max)
            }
            Self::TruncatedPareto { shape, scale } => {
                let u = 1.0 - rng.random::<f64>();
                let x = scale * u.powf(-1.0 / shape);
                if x >= a_max as f64 {
                    a_max
                } else {
                    (x.round() as u64).min(a_max)
                }
            }
        }
    }
}

/// Arrival processes for every pair; `None` marks a pair without traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalModel {
    processes: Vec<Option<ArrivalProcess>>,
    a_max: u64,
}

impl ArrivalModel {
    pub fn new(processes: Vec<Option<ArrivalProcess>>, a_max: u64) -> Result<Self> {
        if a_max == 0 {
            return Err(Error::Arrival("A_max must be positive".into()));
        }
        for p in processes.iter().flatten() {
            p.validate(a_max)?;
        }
        Ok(Self { processes, a_max })
    }

    pub fn a_max(&self) -> u64 {
        self.a_max
    }

    pub fn pair_count(&self) -> usize {
        self.processes.len()
    }

    pub fn process(&self, pair: usize) -> Option<&ArrivalProcess> {
        self.processes[pair].as_ref()
    }

    pub fn has_flow(&self, pair: usize) -> bool {
        self.processes[pair].is_some()
    }

    /// λ per pair (0 for pairs without traffic).
    pub fn rates(&self) -> Vec<f64> {
        self.processes
            .iter()
            .map(|p| p.as_ref().map_or(0.0, |p| p.mean(self.a_max)))
            .collect()
    }

    pub fn second_moments(&self) -> Vec<f64> {
        self.processes
            .iter()
            .map(|p| p.as_ref().map_or(0.0, |p| p.second_moment(self.a_max)))
            .collect()
    }

    /// One frame of arrivals, drawn in pair order from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        self.processes
            .iter()
            .map(|p| p.as_ref().map_or(0, |p| p.sample(rng, self.a_max)))
            .collect()
    }
}

/// δ(λ) = min over pairs with λ > 0 of λ / (K·T_s).
pub fn min_load_factor(lambda: &[f64], topo: &NetworkTopology, frame_slots: usize) -> Result<f64> {
    let capacity = (topo.inp_count() * frame_slots) as f64;
    lambda
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .map(|l| l / capacity)
        .reduce(f64::min)
        .ok_or(Error::EmptySystem)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueueState {
    backlog: Vec<u64>,
    frame: u64,
}

impl QueueState {
    pub fn empty(pair_count: usize) -> Self {
        Self {
            backlog: vec![0; pair_count],
            frame: 0,
        }
    }

    pub fn from_backlog(backlog: Vec<u64>, frame: u64) -> Self {
        Self { backlog, frame }
    }

    pub fn backlog(&self) -> &[u64] {
        &self.backlog
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn total(&self) -> u64 {
        self.backlog.iter().sum()
    }

    pub fn max_backlog(&self) -> u64 {
        self.backlog.iter().copied().max().unwrap_or(0)
    }

    /// Q(t+1) = (Q(t) + a(t) − μ(t))⁺ entrywise. Counts are unsigned, so
    /// negative inputs cannot be expressed.
    pub fn update(&self, arrivals: &[u64], service: &[u64]) -> Result<Self> {
        for v in [arrivals, service] {
            if v.len() != self.backlog.len() {
                return Err(Error::Dimension {
                    expected: self.backlog.len(),
                    got: v.len(),
                });
            }
        }
        let backlog = self
            .backlog
            .iter()
            .zip(arrivals)
            .zip(service)
            .map(|((&q, &a), &mu)| (q + a).saturating_sub(mu))
            .collect();
        Ok(Self {
            backlog,
            frame: self.frame + 1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// One value per (link, class, slot).
    #[default]
    PerSlot,
    /// One value per (link, class), replicated over the frame's slots.
    FrameConstant,
}

/// Activation probabilities p^c_{ki}(τ) for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePrior {
    mode: PriorMode,
    frame_slots: usize,
    link_count: usize,
    class_count: usize,
    values: Vec<f64>,
}

impl SchedulePrior {
    pub fn zeros(mode: PriorMode, topo: &NetworkTopology, frame_slots: usize) -> Self {
        let stored = match mode {
            PriorMode::PerSlot => frame_slots,
            PriorMode::FrameConstant => 1,
        };
        Self {
            mode,
            frame_slots,
            link_count: topo.link_count(),
            class_count: topo.class_count(),
            values: vec![0.0; stored * topo.link_count() * topo.class_count()],
        }
    }

    /// Each InP splits its mass evenly over its (client, class) options.
    pub fn uniform(mode: PriorMode, topo: &NetworkTopology, frame_slots: usize) -> Self {
        let mut prior = Self::zeros(mode, topo, frame_slots);
        for k in 0..topo.inp_count() {
            let links = topo.inp_links(k);
            let share = 1.0 / (links.len() * topo.class_count()) as f64;
            for slot in 0..prior.stored_slots() {
                for &l in links {
                    for c in 0..topo.class_count() {
                        prior.set(slot, l, c, share);
                    }
                }
            }
        }
        prior
    }

    /// Wraps raw values (layout `(slot, link, class)`), checking that each InP
    /// spreads unit mass per slot and that the rate caps hold.
    pub fn from_values(
        mode: PriorMode,
        topo: &NetworkTopology,
        frame_slots: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut prior = Self::zeros(mode, topo, frame_slots);
        if values.len() != prior.values.len() {
            return Err(Error::Dimension {
                expected: prior.values.len(),
                got: values.len(),
            });
        }
        prior.values = values;
        prior.validate(topo)?;
        Ok(prior)
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn frame_slots(&self) -> usize {
        self.frame_slots
    }

    /// Number of slots physically stored (1 in frame-constant mode).
    pub fn stored_slots(&self) -> usize {
        match self.mode {
            PriorMode::PerSlot => self.frame_slots,
            PriorMode::FrameConstant => 1,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, slot: usize, link: usize, class: usize) -> usize {
        let slot = match self.mode {
            PriorMode::PerSlot => slot,
            PriorMode::FrameConstant => 0,
        };
        (slot * self.link_count + link) * self.class_count + class
    }

    pub fn get(&self, slot: usize, link: usize, class: usize) -> f64 {
        self.values[self.index(slot, link, class)]
    }

    pub fn set(&mut self, slot: usize, link: usize, class: usize, value: f64) {
        let idx = self.index(slot, link, class);
        self.values[idx] = value;
    }

    fn inp_mass(&self, topo: &NetworkTopology, inp: usize, slot: usize) -> f64 {
        topo.inp_links(inp)
            .iter()
            .flat_map(|&l| (0..self.class_count).map(move |c| (l, c)))
            .map(|(l, c)| self.get(slot, l, c))
            .sum()
    }

    fn client_mass(&self, topo: &NetworkTopology, client: usize, slot: usize) -> f64 {
        topo.client_links(client)
            .iter()
            .flat_map(|&l| (0..self.class_count).map(move |c| (l, c)))
            .map(|(l, c)| self.get(slot, l, c))
            .sum()
    }

    /// Checks entries in [0, 1], the per-InP simplex and the client caps.
    pub fn validate(&self, topo: &NetworkTopology) -> Result<()> {
        if self.link_count != topo.link_count() || self.class_count != topo.class_count() {
            return Err(Error::Prior("prior does not match the topology".into()));
        }
        if let Some(v) = self
            .values
            .iter()
            .find(|v| !(**v >= -PRIOR_TOL && **v <= 1.0 + PRIOR_TOL))
        {
            return Err(Error::Prior(format!("entry {v} outside [0, 1]")));
        }
        for slot in 0..self.stored_slots() {
            for k in 0..topo.inp_count() {
                let mass = self.inp_mass(topo, k, slot);
                if (mass - 1.0).abs() > PRIOR_TOL {
                    return Err(Error::Prior(format!(
                        "InP {k} slot {slot}: activation mass {mass} != 1"
                    )));
                }
            }
            for i in 0..topo.client_count() {
                let mass = self.client_mass(topo, i, slot);
                if mass > topo.rate_cap(i) + PRIOR_TOL {
                    return Err(Error::Prior(format!(
                        "client {i} slot {slot}: transmission mass {mass} exceeds cap {}",
                        topo.rate_cap(i)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Clamps round-off negatives and rescales each InP's mass to exactly 1.
    /// Fails when a prior is off the simplex by more than the tolerance.
    pub fn renormalized(&self, topo: &NetworkTopology) -> Result<Self> {
        self.validate(topo)?;
        let mut out = self.clone();
        for v in &mut out.values {
            *v = v.clamp(0.0, 1.0);
        }
        for slot in 0..out.stored_slots() {
            for k in 0..topo.inp_count() {
                let mass = out.inp_mass(topo, k, slot);
                for &l in topo.inp_links(k) {
                    for c in 0..out.class_count {
                        let v = out.get(slot, l, c) / mass;
                        out.set(slot, l, c, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// E[μ] per pair: Σ_k Σ_τ r_ki p^c_ki(τ).
    pub fn expected_service(&self, topo: &NetworkTopology) -> Vec<f64> {
        let mut out = vec![0.0; topo.pair_count()];
        let replicate = match self.mode {
            PriorMode::PerSlot => 1.0,
            PriorMode::FrameConstant => self.frame_slots as f64,
        };
        for slot in 0..self.stored_slots() {
            for (l, link) in topo.links().iter().enumerate() {
                for c in 0..self.class_count {
                    out[topo.pair_index(link.client, c)] +=
                        replicate * link.success * self.get(slot, l, c);
                }
            }
        }
        out
    }

    /// The |N(i)|·T_s Bernoulli success probabilities r_ki·p^c_ki(τ) whose sum
    /// is the pair's per-frame service, ordered by (link, slot).
    pub fn success_probs(&self, topo: &NetworkTopology, pair: usize) -> Vec<f64> {
        let (client, class) = topo.pair_of(pair);
        let mut out = Vec::with_capacity(topo.client_links(client).len() * self.frame_slots);
        for &l in topo.client_links(client) {
            let r = topo.links()[l].success;
            for slot in 0..self.frame_slots {
                out.push((r * self.get(slot, l, class)).clamp(0.0, 1.0));
            }
        }
        out
    }

    /// Expands a frame-constant prior into the per-slot layout.
    pub fn to_per_slot(&self) -> Self {
        match self.mode {
            PriorMode::PerSlot => self.clone(),
            PriorMode::FrameConstant => {
                let mut values = Vec::with_capacity(self.values.len() * self.frame_slots);
                for _ in 0..self.frame_slots {
                    values.extend_from_slice(&self.values);
                }
                Self {
                    mode: PriorMode::PerSlot,
                    values,
                    ..self.clone()
                }
            }
        }
    }
}
