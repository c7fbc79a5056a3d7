//! The subcommands, as library functions returning structured results.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use qoshare::analysis::{guarantee_report, slater_margin, stability_membership, GuaranteeReport, SlaterEstimate};
use qoshare::robust::{protection_levels, theory_constants, TheoryConstants};
use qoshare::sim::{Record, RunSummary};
use qoshare::{build_linearized_polyhedron, run_scenario, Policy, PriorMode, RunConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Compiled;
use crate::output::{self, RunReport};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub scenario: String,
    pub pairs: usize,
    pub active_pairs: usize,
    pub flows: usize,
    /// Slater margin of the linearized QoS domain, ignoring arrival rates.
    pub zeta: f64,
    /// Arrival rates inside the linearized stability region.
    pub rates_supported: bool,
    pub warnings: Vec<String>,
}

/// Checks that the QoS domain is non-empty; everything else is reported as
/// a warning.
pub fn validate(c: &Compiled) -> Result<ValidateReport, CliError> {
    let s = &c.scenario;
    let mode = PriorMode::FrameConstant;
    let margin = slater_margin(&s.topology, &s.qos, &s.arrivals, None, mode)
        .map_err(|e| CliError::from_core(e, "the linearized QoS domain is empty"))?;
    let mut warnings = Vec::new();
    if !margin.assumption_holds {
        warnings.push("QoS rows are feasible but leave no strict margin".to_string());
    }
    let constants = theory_constants(&s.topology, &s.qos, &s.arrivals);
    let mut failing: Vec<(f64, Vec<String>)> = Vec::new();
    for cond in constants.conditions.iter().filter(|c| !c.satisfied) {
        let (client, class) = s.topology.pair_of(cond.pair);
        let label = format!("({client},{class})");
        match failing.iter_mut().find(|(t, _)| *t == cond.threshold) {
            Some((_, pairs)) => pairs.push(label),
            None => failing.push((cond.threshold, vec![label])),
        }
    }
    for (threshold, pairs) in failing {
        let shown = if pairs.len() > 4 {
            format!("{} and {} more", pairs[..3].join(" "), pairs.len() - 3)
        } else {
            pairs.join(" ")
        };
        warnings.push(format!(
            "frame length {} is below the threshold {threshold:.1} of the reliability guarantee for (client,class) {shown}",
            s.qos.frame_slots()
        ));
    }
    let rates = s.arrivals.rates();
    let member = stability_membership(&rates, &s.topology, &s.qos, mode)
        .map_err(|e| CliError::Runtime(e.into()))?
        .member;
    if !member {
        warnings.push("arrival rates lie outside the linearized stability region; backlogs will grow".into());
    }
    Ok(ValidateReport {
        scenario: c.name.clone(),
        pairs: s.topology.pair_count(),
        active_pairs: s.qos.active_pairs().len(),
        flows: rates.iter().filter(|&&l| l > 0.0).count(),
        zeta: margin.zeta,
        rates_supported: member,
        warnings,
    })
}

/// Writes the linearized QoS polyhedron as text triplets.
pub fn dump_polyhedron(c: &Compiled, mode: PriorMode, path: &Path) -> Result<(), CliError> {
    let s = &c.scenario;
    let domain = build_linearized_polyhedron(&s.topology, &s.qos, mode).map_err(|e| CliError::Runtime(e.into()))?;
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::Runtime)?;
    domain
        .polyhedron()
        .write_triplets(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Runtime)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub scenario: String,
    pub protection_levels: Vec<f64>,
    pub guarantees: GuaranteeReport,
    pub constants: TheoryConstants,
    pub slater: SlaterEstimate,
    /// Margin with `Σ r·p ≥ λ` added; absent when the rates are unsupported.
    pub slater_with_rates: Option<SlaterEstimate>,
}

pub fn bounds(c: &Compiled) -> Result<BoundsReport, CliError> {
    let s = &c.scenario;
    let mode = PriorMode::FrameConstant;
    let runtime = |e: qoshare::Error| CliError::Runtime(e.into());
    let slater = slater_margin(&s.topology, &s.qos, &s.arrivals, None, mode)
        .map_err(|e| CliError::from_core(e, "the linearized QoS domain is empty"))?;
    let rates = s.arrivals.rates();
    let slater_with_rates = match slater_margin(&s.topology, &s.qos, &s.arrivals, Some(&rates), mode) {
        Ok(m) => Some(m),
        Err(qoshare::Error::QosUnsupportable) => None,
        Err(e) => return Err(runtime(e)),
    };
    Ok(BoundsReport {
        scenario: c.name.clone(),
        protection_levels: protection_levels(&s.topology, &s.qos).map_err(runtime)?,
        guarantees: guarantee_report(&s.topology, &s.qos, &s.arrivals, &c.delay_targets).map_err(runtime)?,
        constants: theory_constants(&s.topology, &s.qos, &s.arrivals),
        slater,
        slater_with_rates,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides the scenario's seeds when non-empty.
    pub seeds: Vec<u64>,
    /// Overrides the scenario's horizon.
    pub horizon: Option<u64>,
    /// Restricts the run to these policies when non-empty.
    pub policies: Vec<String>,
    pub jobs: Option<usize>,
    pub debug_slack: bool,
    /// Also write the per-frame solver trace.
    pub solver_trace: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub policy: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

/// Runs every (policy, seed) cell and writes its outputs. Policies are built
/// before anything runs, so an unsupportable QoS spec fails without output.
pub fn run(c: &Compiled, opts: &RunOptions) -> Result<Vec<RunOutcome>, CliError> {
    let seeds = if opts.seeds.is_empty() { &c.seeds } else { &opts.seeds };
    if seeds.is_empty() {
        return Err(CliError::Validation(vec!["run.seeds: no seeds given".into()]));
    }
    let horizon = opts.horizon.unwrap_or(c.horizon);
    if horizon == 0 {
        return Err(CliError::Validation(vec!["horizon: must be at least 1".into()]));
    }
    let selected: Vec<&(String, qoshare::PolicyConfig)> = if opts.policies.is_empty() {
        c.policies.iter().collect()
    } else {
        let mut v = Vec::new();
        for name in &opts.policies {
            match c.policies.iter().find(|(n, _)| n == name) {
                Some(p) => v.push(p),
                None => return Err(CliError::Validation(vec![format!("policy {name:?} is not defined")])),
            }
        }
        v
    };
    let s = &c.scenario;
    let mut built = Vec::new();
    for (name, config) in &selected {
        let p = Policy::new(config, &s.topology, &s.qos, &s.utility, horizon)
            .map_err(|e| CliError::from_core(e, &format!("policy {name:?}")))?;
        built.push((name.as_str(), p));
    }
    let cells: Vec<(usize, u64)> = (0..built.len())
        .flat_map(|i| seeds.iter().map(move |&seed| (i, seed)))
        .collect();
    let work = |&(i, seed): &(usize, u64)| -> Result<RunOutcome, CliError> {
        let (name, template) = &built[i];
        let mut policy = template.clone();
        let config = RunConfig {
            horizon,
            seed,
            record: Record::PerFrame,
            debug_slack: opts.debug_slack,
        };
        let result = run_scenario(s, &mut policy, &config)
            .map_err(|e| CliError::from_core(e, &format!("policy {name:?}, seed {seed}")))?;
        let dir = output::run_dir(&opts.out, &c.name, name, seed);
        write_cell(c, name, seed, &dir, &result, opts.solver_trace).map_err(CliError::Runtime)?;
        Ok(RunOutcome {
            policy: name.to_string(),
            seed,
            dir,
            summary: result.summary,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| cells.par_iter().map(work).collect())
}

fn write_cell(
    c: &Compiled,
    policy: &str,
    seed: u64,
    dir: &Path,
    result: &qoshare::RunResult,
    solver_trace: bool,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let header = format!("scenario={} policy={policy} seed={seed} frames={}", c.name, result.summary.frames);
    output::write_frames(
        &dir.join(output::FRAMES_FILE),
        &header,
        &c.scenario.topology,
        &result.frames,
    )?;
    output::write_summary(
        &dir.join(output::SUMMARY_FILE),
        &RunReport {
            scenario: &c.name,
            policy,
            delay_unit: "frames",
            summary: &result.summary,
        },
    )?;
    std::fs::write(dir.join(output::CONFIG_ECHO_FILE), &c.source)?;
    if solver_trace {
        output::write_solver_trace(&dir.join(output::SOLVER_FILE), &result.frames)?;
    }
    Ok(())
}

/// Writes a one-line-per-cell overview of finished runs.
pub fn print_overview<W: Write>(mut w: W, outcomes: &[RunOutcome]) -> std::io::Result<()> {
    writeln!(w, "{:<16} {:>8} {:>12} {:>10} {:>12}", "policy", "seed", "utility", "backlog", "min_rel")?;
    for o in outcomes {
        let min_rel = o
            .summary
            .pairs
            .iter()
            .filter(|p| p.active)
            .map(|p| p.reliability)
            .fold(f64::INFINITY, f64::min);
        let min_rel = if min_rel.is_finite() { format!("{min_rel:.3}") } else { "-".into() };
        writeln!(
            w,
            "{:<16} {:>8} {:>12.4} {:>10} {:>12}",
            o.policy, o.seed, o.summary.time_average_utility, o.summary.final_total_backlog, min_rel
        )?;
    }
    Ok(())
}
