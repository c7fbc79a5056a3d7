//! Scenario files: TOML schema, required-field pre-pass and compilation into
//! core types.

use std::collections::BTreeSet;
use std::path::Path;

use qoshare::analysis::{stability_membership, PairLoad};
use qoshare::model::Link;
use qoshare::solve::SolveOptions;
use qoshare::{
    ArrivalModel, ArrivalProcess, NetworkTopology, PolicyConfig, PolicyKind, PriorMode, QosSpec, Scenario,
    SchedulePrior, UtilityFunction, VRule,
};
use serde::Deserialize;
use toml::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub topology: TopologySpec,
    pub arrivals: ArrivalsSpec,
    pub utility: UtilitySpec,
    pub flows: Vec<FlowSpec>,
    pub policies: Vec<PolicySpec>,
    pub run: RunSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub inps: usize,
    pub clients: usize,
    pub classes: usize,
    pub frame_slots: usize,
    pub rate_cap: Option<f64>,
    pub rate_caps: Option<Vec<f64>>,
    /// Full mesh: success probability of every link of InP k.
    pub inp_success: Option<Vec<f64>>,
    pub links: Option<Vec<LinkSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub inp: usize,
    pub client: usize,
    pub success: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalsSpec {
    pub a_max: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// Only pairs with an arrival process.
    #[default]
    Flows,
    All,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    AlphaFair {
        weights: Vec<f64>,
        alphas: Vec<f64>,
        #[serde(default)]
        pairs: PairScope,
    },
    /// Per-class linear coefficients.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        pairs: PairScope,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub client: usize,
    pub class: usize,
    pub arrival: ArrivalSpec,
    pub qos: Option<QosEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSpec {
    Constant { rate: u64 },
    Poisson { rate: f64 },
    /// Either `scale` directly or the `mean` after truncation.
    TruncatedPareto {
        shape: f64,
        scale: Option<f64>,
        mean: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derive {
    /// γ = λ/(K·T_s·q).
    Throughput,
    /// γ from the sufficient γq for `delay_target`.
    Delay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosEntry {
    pub q: f64,
    pub gamma: Option<f64>,
    pub derive: Option<Derive>,
    /// W*, in frames.
    pub delay_target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKindSpec {
    Mdp,
    DpNoQos,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryPrior {
    Uniform,
    /// The witness of the stability-region membership LP.
    StabilityWitness,
    /// Spreads every InP over pairs without traffic.
    Idle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: String,
    pub kind: PolicyKindSpec,
    pub v: Option<VRule>,
    pub mode: Option<PriorMode>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub prior: Option<StationaryPrior>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: u64,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub name: String,
    pub scenario: Scenario,
    pub policies: Vec<(String, PolicyConfig)>,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub delay_targets: Vec<Option<f64>>,
    /// The file as read, echoed next to run outputs.
    pub source: String,
}

impl Compiled {
    pub fn policy(&self, name: &str) -> Option<&PolicyConfig> {
        self.policies.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }
}

pub fn load(path: &Path) -> Result<Compiled, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Compiled, CliError> {
    let value: Value = toml::from_str(text).map_err(|e| CliError::Validation(vec![format!("syntax: {e}")]))?;
    let missing = missing_fields(&value);
    if !missing.is_empty() {
        return Err(CliError::Validation(missing));
    }
    let file: ScenarioFile = value
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Validation(vec![e.message().trim().to_string()]))?;
    compile(file, text.to_string())
}

fn req(v: &Value, path: &str, keys: &[&str], out: &mut Vec<String>) {
    let Some(t) = v.as_table() else {
        out.push(format!("{path}: expected a table"));
        return;
    };
    for k in keys {
        if !t.contains_key(*k) {
            out.push(format!("{}: missing", join(path, k)));
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn any_of(v: &Value, path: &str, keys: &[&str], out: &mut Vec<String>) {
    if let Some(t) = v.as_table() {
        if !keys.iter().any(|k| t.contains_key(*k)) {
            out.push(format!("{path}: missing one of {}", keys.join(", ")));
        }
    }
}

fn each<'a>(v: &'a Value, key: &str) -> impl Iterator<Item = (usize, &'a Value)> {
    v.get(key)
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .enumerate()
}

/// Lists every missing required field, with its path.
pub fn missing_fields(root: &Value) -> Vec<String> {
    let mut out = Vec::new();
    req(
        root,
        "",
        &["schema_version", "name", "topology", "arrivals", "utility", "flows", "policies", "run"],
        &mut out,
    );
    if let Some(t) = root.get("topology") {
        req(t, "topology", &["inps", "clients", "classes", "frame_slots"], &mut out);
        any_of(t, "topology", &["inp_success", "links"], &mut out);
        any_of(t, "topology", &["rate_cap", "rate_caps"], &mut out);
        for (i, l) in each(t, "links") {
            req(l, &format!("topology.links[{i}]"), &["inp", "client", "success"], &mut out);
        }
    }
    if let Some(a) = root.get("arrivals") {
        req(a, "arrivals", &["a_max"], &mut out);
    }
    if let Some(u) = root.get("utility") {
        req(u, "utility", &["kind"], &mut out);
        match u.get("kind").and_then(Value::as_str) {
            Some("alpha_fair") => req(u, "utility", &["weights", "alphas"], &mut out),
            Some("linear") => req(u, "utility", &["coeffs"], &mut out),
            _ => {}
        }
    }
    for (i, f) in each(root, "flows") {
        let path = format!("flows[{i}]");
        req(f, &path, &["client", "class", "arrival"], &mut out);
        if let Some(a) = f.get("arrival") {
            let apath = format!("{path}.arrival");
            req(a, &apath, &["kind"], &mut out);
            match a.get("kind").and_then(Value::as_str) {
                Some("constant") | Some("poisson") => req(a, &apath, &["rate"], &mut out),
                Some("truncated_pareto") => {
                    req(a, &apath, &["shape"], &mut out);
                    any_of(a, &apath, &["scale", "mean"], &mut out);
                }
                _ => {}
            }
        }
        if let Some(q) = f.get("qos") {
            let qpath = format!("{path}.qos");
            req(q, &qpath, &["q"], &mut out);
            any_of(q, &qpath, &["gamma", "derive"], &mut out);
            if q.get("derive").and_then(Value::as_str) == Some("delay") {
                req(q, &qpath, &["delay_target"], &mut out);
            }
        }
    }
    for (i, p) in each(root, "policies") {
        req(p, &format!("policies[{i}]"), &["name", "kind"], &mut out);
    }
    if let Some(r) = root.get("run") {
        req(r, "run", &["horizon"], &mut out);
    }
    out
}

fn compile(file: ScenarioFile, source: String) -> Result<Compiled, CliError> {
    let mut errs = Vec::new();
    if file.schema_version != SCHEMA_VERSION {
        errs.push(format!(
            "schema_version: {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        ));
    }
    if file.name.is_empty() || file.name.contains(['/', '\\']) || file.name.starts_with('.') {
        errs.push(format!("name: {:?} is not usable as a directory name", file.name));
    }
    let t = &file.topology;
    if t.rate_cap.is_some() && t.rate_caps.is_some() {
        errs.push("topology: give rate_cap or rate_caps, not both".into());
    }
    if t.inp_success.is_some() && t.links.is_some() {
        errs.push("topology: give inp_success or links, not both".into());
    }
    let topo = match build_topology(t) {
        Ok(topo) => Some(topo),
        Err(e) => {
            errs.push(format!("topology: {e}"));
            None
        }
    };
    let mut policy_names = BTreeSet::new();
    for (i, p) in file.policies.iter().enumerate() {
        if !policy_names.insert(p.name.as_str()) {
            errs.push(format!("policies[{i}].name: duplicate {:?}", p.name));
        }
        if p.name.is_empty() || p.name.contains(['/', '\\']) || p.name.starts_with('.') {
            errs.push(format!("policies[{i}].name: {:?} is not usable as a directory name", p.name));
        }
        if p.prior.is_some() && p.kind != PolicyKindSpec::Stationary {
            errs.push(format!("policies[{i}].prior: only stationary policies take a prior"));
        }
    }
    if file.run.horizon == 0 {
        errs.push("run.horizon: must be at least 1".into());
    }
    let Some(topo) = topo else {
        return Err(CliError::Validation(errs));
    };

    let pairs = topo.pair_count();
    let mut procs: Vec<Option<ArrivalProcess>> = vec![None; pairs];
    let mut gamma = vec![0.0; pairs];
    let mut q = vec![0.0; pairs];
    let mut targets = vec![None; pairs];
    let a_max = file.arrivals.a_max;
    for (i, f) in file.flows.iter().enumerate() {
        let path = format!("flows[{i}]");
        if f.client >= topo.client_count() || f.class >= topo.class_count() {
            errs.push(format!(
                "{path}: (client {}, class {}) is outside the {}x{} topology",
                f.client,
                f.class,
                topo.client_count(),
                topo.class_count()
            ));
            continue;
        }
        let pair = topo.pair_index(f.client, f.class);
        if procs[pair].is_some() {
            errs.push(format!("{path}: duplicate flow for (client {}, class {})", f.client, f.class));
            continue;
        }
        let proc = match arrival_process(&f.arrival, a_max) {
            Ok(p) => p,
            Err(e) => {
                errs.push(format!("{path}.arrival: {e}"));
                continue;
            }
        };
        if let Some(entry) = &f.qos {
            let lambda = proc.mean(a_max);
            let load = PairLoad {
                lambda,
                second_moment: proc.second_moment(a_max),
                rate_cap: topo.rate_cap(f.client),
                frame_slots: t.frame_slots,
                inp_count: topo.inp_count(),
            };
            match qos_gamma(entry, &load) {
                Ok(g) => {
                    gamma[pair] = g;
                    q[pair] = entry.q;
                    targets[pair] = entry.delay_target;
                }
                Err(e) => errs.push(format!("{path}.qos: {e}")),
            }
        }
        procs[pair] = Some(proc);
    }

    let spec = QosSpec::new(&topo, t.frame_slots, gamma, q).map_err(|e| errs.push(format!("qos: {e}"))).ok();
    let arrivals = ArrivalModel::new(procs.clone(), a_max).map_err(|e| errs.push(format!("arrivals: {e}"))).ok();
    let mask: Vec<bool> = match &file.utility {
        UtilitySpec::AlphaFair { pairs: scope, .. } | UtilitySpec::Linear { pairs: scope, .. } => match scope {
            PairScope::Flows => procs.iter().map(Option::is_some).collect(),
            PairScope::All => vec![true; pairs],
        },
    };
    let utility = match &file.utility {
        UtilitySpec::AlphaFair { weights, alphas, .. } => {
            if weights.len() != topo.class_count() {
                errs.push(format!(
                    "utility.weights: {} entries for {} classes",
                    weights.len(),
                    topo.class_count()
                ));
                None
            } else {
                UtilityFunction::alpha_fair(weights.clone(), alphas.clone(), mask)
                    .map_err(|e| errs.push(format!("utility: {e}")))
                    .ok()
            }
        }
        UtilitySpec::Linear { coeffs, .. } => {
            if coeffs.len() != topo.class_count() {
                errs.push(format!(
                    "utility.coeffs: {} entries for {} classes",
                    coeffs.len(),
                    topo.class_count()
                ));
                None
            } else {
                let per_pair = (0..pairs)
                    .map(|p| if mask[p] { coeffs[topo.pair_of(p).1] } else { 0.0 })
                    .collect();
                Some(UtilityFunction::Linear { coeffs: per_pair })
            }
        }
    };
    let (Some(spec), Some(arrivals), Some(utility)) = (spec, arrivals, utility) else {
        return Err(CliError::Validation(errs));
    };

    let mut policies = Vec::new();
    for (i, p) in file.policies.iter().enumerate() {
        match policy_config(p, &topo, &spec, &arrivals) {
            Ok(c) => policies.push((p.name.clone(), c)),
            Err(CliError::Validation(e)) => errs.extend(e.into_iter().map(|m| format!("policies[{i}]: {m}"))),
            Err(other) => return Err(other),
        }
    }
    if !errs.is_empty() {
        return Err(CliError::Validation(errs));
    }
    let scenario = Scenario::new(topo, spec, arrivals, utility).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    Ok(Compiled {
        name: file.name,
        scenario,
        policies,
        horizon: file.run.horizon,
        seeds: file.run.seeds,
        delay_targets: targets,
        source,
    })
}

fn build_topology(t: &TopologySpec) -> qoshare::Result<NetworkTopology> {
    let caps = match (&t.rate_caps, t.rate_cap) {
        (Some(c), _) => c.clone(),
        (None, Some(u)) => vec![u; t.clients],
        (None, None) => Vec::new(),
    };
    match (&t.inp_success, &t.links) {
        (Some(r), _) => {
            if r.len() != t.inps {
                return Err(qoshare::Error::Topology(format!(
                    "inp_success has {} entries for {} InPs",
                    r.len(),
                    t.inps
                )));
            }
            let links = (0..t.inps)
                .flat_map(|k| {
                    (0..t.clients).map(move |i| Link {
                        inp: k,
                        client: i,
                        success: r[k],
                    })
                })
                .collect();
            NetworkTopology::new(t.inps, t.clients, t.classes, links, caps)
        }
        (None, Some(ls)) => {
            let links = ls
                .iter()
                .map(|l| Link {
                    inp: l.inp,
                    client: l.client,
                    success: l.success,
                })
                .collect();
            NetworkTopology::new(t.inps, t.clients, t.classes, links, caps)
        }
        (None, None) => Err(qoshare::Error::Topology("no links".into())),
    }
}

fn arrival_process(a: &ArrivalSpec, a_max: u64) -> qoshare::Result<ArrivalProcess> {
    let p = match *a {
        ArrivalSpec::Constant { rate } => ArrivalProcess::Constant { rate },
        ArrivalSpec::Poisson { rate } => ArrivalProcess::Poisson { rate },
        ArrivalSpec::TruncatedPareto { shape, scale, mean } => match (scale, mean) {
            (Some(scale), None) => ArrivalProcess::TruncatedPareto { shape, scale },
            (None, Some(mean)) => ArrivalProcess::pareto_with_mean(mean, shape, a_max)?,
            _ => {
                return Err(qoshare::Error::Arrival("give exactly one of scale and mean".into()));
            }
        },
    };
    p.validate(a_max)?;
    Ok(p)
}

fn qos_gamma(entry: &QosEntry, load: &PairLoad) -> Result<f64, String> {
    if !(entry.q >= 0.0 && entry.q < 1.0) {
        return Err(format!("q = {} must lie in [0, 1)", entry.q));
    }
    if let Some(w) = entry.delay_target {
        if !(w > 0.0 && w.is_finite()) {
            return Err(format!("delay_target = {w} must be positive"));
        }
    }
    let g = match (entry.gamma, entry.derive) {
        (Some(g), None) => g,
        (None, Some(d)) => {
            if entry.q == 0.0 {
                return Err("cannot derive gamma with q = 0".into());
            }
            let capacity = (load.inp_count * load.frame_slots) as f64;
            let gq = match d {
                Derive::Throughput => load.lambda / capacity,
                Derive::Delay => load
                    .sufficient_gamma_q(entry.delay_target.unwrap_or(f64::NAN))
                    .map_err(|e| e.to_string())?,
            };
            gq / entry.q
        }
        _ => return Err("give exactly one of gamma and derive".into()),
    };
    if !(0.0..=1.0).contains(&g) {
        return Err(format!("gamma = {g} must lie in [0, 1]"));
    }
    Ok(g)
}

fn policy_config(
    p: &PolicySpec,
    topo: &NetworkTopology,
    spec: &QosSpec,
    arrivals: &ArrivalModel,
) -> Result<PolicyConfig, CliError> {
    let mode = p.mode.unwrap_or(PriorMode::FrameConstant);
    let kind = match p.kind {
        PolicyKindSpec::Mdp => PolicyKind::Mdp,
        PolicyKindSpec::DpNoQos => PolicyKind::DpNoQos,
        PolicyKindSpec::Stationary => {
            let prior = match p.prior.unwrap_or(StationaryPrior::Uniform) {
                StationaryPrior::Uniform => SchedulePrior::uniform(mode, topo, spec.frame_slots()),
                StationaryPrior::StabilityWitness => {
                    let m = stability_membership(&arrivals.rates(), topo, spec, mode)
                        .map_err(|e| CliError::Runtime(e.into()))?;
                    m.witness.ok_or_else(|| {
                        CliError::Infeasible("arrival rates lie outside the linearized stability region".into())
                    })?
                }
                StationaryPrior::Idle => idle_prior(topo, spec, arrivals, mode)
                    .ok_or_else(|| CliError::Validation(vec!["prior: idle needs a pair without traffic".into()]))?,
            };
            PolicyKind::Stationary(prior)
        }
    };
    let mut solve = SolveOptions::default();
    if let Some(tol) = p.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(CliError::Validation(vec![format!("tol: {tol} must be positive")]));
        }
        solve.tol = tol;
    }
    if let Some(n) = p.max_iterations {
        solve.max_iterations = n;
    }
    Ok(PolicyConfig {
        kind,
        v: p.v.unwrap_or_default(),
        mode,
        solve,
    })
}

/// Every InP spends every slot on a pair with no traffic, spreading over
/// clients so rate caps hold.
fn idle_prior(topo: &NetworkTopology, spec: &QosSpec, arrivals: &ArrivalModel, mode: PriorMode) -> Option<SchedulePrior> {
    let mut prior = SchedulePrior::zeros(mode, topo, spec.frame_slots());
    let mut load = vec![0.0; topo.client_count()];
    for k in 0..topo.inp_count() {
        let (link, client, class) = topo.inp_links(k).iter().find_map(|&l| {
            let client = topo.links()[l].client;
            if load[client] + 1.0 > topo.rate_cap(client) + 1e-12 {
                return None;
            }
            (0..topo.class_count())
                .find(|&c| !arrivals.has_flow(topo.pair_index(client, c)))
                .map(|c| (l, client, c))
        })?;
        load[client] += 1.0;
        for slot in 0..prior.stored_slots() {
            prior.set(slot, link, class, 1.0);
        }
    }
    Some(prior)
}
