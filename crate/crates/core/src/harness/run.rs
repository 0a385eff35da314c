//! Command pipelines and artifact export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Command, ForceKind, InitialKind, Net2Kind, PotentialConfig, RunConfig};
use super::presets::{build_section6_problem, Section6Preset};
use crate::chaos::{
    critical_exponent_estimate, expectation, sample_realization, white_noise_space,
    white_noise_time, ChaosField, CoefficientNorm,
};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::multiindex::{MultiIndex, TruncationSet};
use crate::pde::{OperatorKind, OperatorSpec};
use crate::propagator::{propagate, ProblemSpec, WeakSolution};
use crate::regularize::{
    linf_bound_star1, moderateness_fit, regularize_potential, MollifierSpec, Scaling,
    SingularPotential,
};
use crate::vws::{
    consistency_check, negligibility_check, very_weak_solve, Net, SmoothPotential, VeryWeakSolution,
};

/// Threshold handed to the critical-exponent estimator.
pub const CRITICAL_EXPONENT_THRESHOLD: f64 = 0.8;
/// Noise modes used to probe critical exponents of the worked example.
pub const CRITICAL_EXPONENT_MODES: usize = 64;

/// Exit status for a failed run: 1 for bad input, 2 for numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_)
        | Error::Parse(_)
        | Error::Grid(_)
        | Error::Shape(_)
        | Error::Domain(_)
        | Error::TruncationTooLarge { .. }
        | Error::WeightOverflow(_) => 1,
        Error::Sequencing { .. }
        | Error::Coefficient { .. }
        | Error::Epsilon { .. }
        | Error::Numerical(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    /// Paths relative to `out_dir`, in write order.
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
}

struct Writer {
    root: PathBuf,
    artifacts: Vec<String>,
    provenance: BTreeMap<String, String>,
}

impl Writer {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("fields"))?;
        fs::create_dir_all(root.join("reports"))?;
        Ok(Writer {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            provenance: BTreeMap::new(),
        })
    }

    fn json(&mut self, rel: &str, source: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.root.join(rel), text)?;
        self.record(rel, source);
        Ok(())
    }

    fn field(&mut self, rel: &str, source: &str, f: &ChaosField, levels: Levels) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join(rel))?;
        w.write_record(["gamma", "time_index", "node_index", "value"])?;
        for (g, c) in f.iter() {
            let name = g.to_string();
            for n in levels.select(c.levels()) {
                for (i, v) in c.row(n).iter().enumerate() {
                    w.serialize((&name, n, i, v))?;
                }
            }
        }
        w.flush()?;
        self.record(rel, source);
        Ok(())
    }

    fn grid_function(&mut self, rel: &str, source: &str, g: &GridFunction) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join(rel))?;
        w.write_record(["time_index", "node_index", "value"])?;
        for ((n, i), v) in g.values().indexed_iter() {
            w.serialize((n, i, v))?;
        }
        w.flush()?;
        self.record(rel, source);
        Ok(())
    }

    fn record(&mut self, rel: &str, source: &str) {
        self.artifacts.push(rel.to_string());
        self.provenance.insert(rel.to_string(), source.to_string());
    }
}

#[derive(Clone, Copy)]
enum Levels {
    All,
    Final,
}

impl Levels {
    fn select(self, levels: usize) -> std::ops::Range<usize> {
        match self {
            Levels::All => 0..levels,
            Levels::Final => levels - 1..levels,
        }
    }
}

/// Execute the pipeline of `config.command` and write its artifacts under
/// `config.out`. A configured thread count runs the pipeline on a private
/// pool.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numerical(format!("cannot build a pool of {n} threads: {e}")))?
            .install(|| run_inner(config)),
        None => run_inner(config),
    }
}

fn run_inner(config: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let mut out = Writer::new(&config.out)?;
    let mut warnings = Vec::new();
    let ledgers = match config.command {
        Command::Solve => cmd_solve(config, &mut out)?,
        Command::Sample => cmd_sample(config, &mut out)?,
        Command::Vws => cmd_vws(config, &mut out, &mut warnings)?,
        Command::Moderate => cmd_moderate(config, &mut out, &mut warnings)?,
        Command::Negligibility => cmd_negligibility(config, &mut out, &mut warnings)?,
        Command::Consistency => cmd_consistency(config, &mut out, &mut warnings)?,
        Command::Section6 => cmd_section6(config, &mut out, &mut warnings)?,
    };
    let manifest = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": config.command,
        "config": config.echo,
        "resolved": config,
        "artifacts": out.provenance,
        "ledgers": ledgers,
        "warnings": warnings,
    });
    out.json("manifest.json", "harness::run", &manifest)?;
    let timings = json!({ "total_seconds": started.elapsed().as_secs_f64() });
    fs::write(
        config.out.join("timings.json"),
        serde_json::to_string_pretty(&timings)? + "\n",
    )?;
    Ok(RunSummary {
        out_dir: config.out.clone(),
        artifacts: out.artifacts,
        warnings,
    })
}

fn operator(config: &RunConfig) -> OperatorSpec {
    OperatorSpec {
        kind: OperatorKind::Laplacian1d,
        m: config.operator_m,
        w: config.operator_w,
    }
}

fn truncation(config: &RunConfig) -> Result<Arc<TruncationSet>> {
    Ok(Arc::new(TruncationSet::enumerate_capped(
        config.truncation_k,
        config.truncation_p,
        config.truncation_cap,
    )?))
}

fn data_fields(
    config: &RunConfig,
    grid: &GridSpec,
    t: &Arc<TruncationSet>,
) -> Result<(ChaosField, ChaosField)> {
    let preset = Section6Preset::default();
    let force = match config.data.force {
        ForceKind::Zero => ChaosField::zeros(*grid, t.clone(), CoefficientNorm::SupTL2InX, true),
        ForceKind::Section6 => {
            let g = GridFunction::from_fn_space(grid, |x| preset.g(x));
            white_noise_time(grid, t.clone(), config.data.modes, &g)?.with(
                MultiIndex::zero(),
                GridFunction::from_fn_space_time(grid, |_, x| preset.f(x)),
            )?
        }
    };
    let initial = match config.data.initial {
        InitialKind::Zero => ChaosField::zeros(*grid, t.clone(), CoefficientNorm::L2InX, false),
        InitialKind::WhiteNoise => white_noise_space(grid, t.clone(), config.data.modes)?,
        InitialKind::Gaussian => ChaosField::zeros(*grid, t.clone(), CoefficientNorm::L2InX, false)
            .with(
                MultiIndex::zero(),
                GridFunction::from_fn_space(grid, |x| (-0.5 * x * x).exp()),
            )?,
    };
    Ok((force, initial))
}

fn base_problem(config: &RunConfig) -> Result<ProblemSpec> {
    let grid = config.grid;
    let t = truncation(config)?;
    let (force, initial) = data_fields(config, &grid, &t)?;
    Ok(ProblemSpec {
        op: operator(config),
        grid,
        force,
        initial,
        potential: ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false),
        truncation: t,
        p_f: config.data.p_f,
        p_g: config.data.p_g,
        m: config.m,
    })
}

fn singular_potential(config: &RunConfig) -> Result<SingularPotential> {
    match &config.potential {
        PotentialConfig::Atoms { s, atoms } => {
            let mut q = SingularPotential::new(*s)?;
            for (g, a) in atoms {
                q.add_atom(g.clone(), *a)?;
            }
            Ok(q)
        }
        _ => Err(Error::Validation(
            "a singular potential needs potential.kind = atoms".into(),
        )),
    }
}

fn smooth_potential(config: &RunConfig) -> Option<SmoothPotential> {
    match &config.potential {
        PotentialConfig::Smooth { bumps } => {
            Some(bumps.iter().fold(SmoothPotential::default(), |p, (g, b)| {
                p.with_bump(g.clone(), *b)
            }))
        }
        _ => None,
    }
}

/// Every ε must give a mollifier at least two grid spacings wide.
fn check_resolution(
    mollifier: &MollifierSpec,
    eps: &[f64],
    grid: &GridSpec,
    warnings: &mut Vec<String>,
) -> Result<()> {
    for &e in eps {
        if !mollifier.resolvable(e, grid)? {
            let w = mollifier.width(e)?;
            let nx = ((grid.x_max - grid.x_min) / (0.5 * w)).ceil() as usize + 1;
            let hint = format!(
                "mollifier width {w:.3e} is below two grid spacings ({:.3e}); raise grid.nx to at least {nx} or drop this eps",
                2.0 * grid.dx()
            );
            return Err(Error::Epsilon {
                eps: e,
                source: Box::new(Error::Numerical(hint)),
            });
        }
        if mollifier.width(e)? < 4.0 * grid.dx() {
            warnings.push(format!(
                "eps = {e}: mollifier spans fewer than four grid spacings per side"
            ));
        }
    }
    Ok(())
}

fn solution_ledgers(sol: &WeakSolution) -> Value {
    json!({
        "coefficient_ledger_passed": sol.ledger_passed(),
        "coefficient_ledger_min_slack": sol.ledger.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min),
        "norm_bound": sol.norm_bound,
    })
}

fn solution_report(sol: &WeakSolution) -> Value {
    json!({
        "envelope": sol.envelope,
        "q_sup": sol.q_sup,
        "p_u": sol.p_u,
        "coefficient_ledger": sol.ledger,
        "norm_bound": sol.norm_bound,
    })
}

fn cmd_solve(config: &RunConfig, out: &mut Writer) -> Result<Value> {
    let mut spec = base_problem(config)?;
    if let Some(sp) = smooth_potential(config) {
        spec.potential = sp.sample(&spec.grid, spec.truncation.clone())?;
    }
    let sol = propagate(&spec)?;
    out.field(
        "fields/solution.csv",
        "propagator::propagate",
        &sol.field,
        Levels::All,
    )?;
    out.json(
        "reports/solution.json",
        "propagator::propagate",
        &solution_report(&sol),
    )?;
    Ok(solution_ledgers(&sol))
}

fn cmd_sample(config: &RunConfig, out: &mut Writer) -> Result<Value> {
    let mut spec = base_problem(config)?;
    if let Some(sp) = smooth_potential(config) {
        spec.potential = sp.sample(&spec.grid, spec.truncation.clone())?;
    }
    let sol = propagate(&spec)?;
    out.field(
        "fields/solution.csv",
        "propagator::propagate",
        &sol.field,
        Levels::All,
    )?;
    out.grid_function(
        "fields/expectation.csv",
        "chaos::expectation",
        &expectation(&sol.field),
    )?;
    for i in 0..config.sample_count {
        let seed = config.seed.wrapping_add(i);
        out.grid_function(
            &format!("fields/sample_{i}.csv"),
            "chaos::sample_realization",
            &sample_realization(&sol.field, seed),
        )?;
    }
    out.json(
        "reports/sample.json",
        "chaos::sample_realization",
        &json!({ "seed": config.seed, "count": config.sample_count, "solution": solution_report(&sol) }),
    )?;
    Ok(solution_ledgers(&sol))
}

fn vws_artifacts(out: &mut Writer, vws: &VeryWeakSolution) -> Result<Value> {
    let mut per_eps = Vec::new();
    for r in &vws.runs {
        let tag = format!("eps{}", r.eps);
        out.field(
            &format!("fields/solution_{tag}.csv"),
            "vws::very_weak_solve",
            &r.solution.field,
            Levels::Final,
        )?;
        out.field(
            &format!("fields/potential_{tag}.csv"),
            "regularize::regularize_potential",
            &r.potential,
            Levels::All,
        )?;
        out.json(
            &format!("reports/ledger_{tag}.json"),
            "propagator::propagate",
            &solution_report(&r.solution),
        )?;
        per_eps.push(json!({ "eps": r.eps, "ledgers": solution_ledgers(&r.solution) }));
    }
    Ok(Value::Array(per_eps))
}

fn cmd_vws(config: &RunConfig, out: &mut Writer, warnings: &mut Vec<String>) -> Result<Value> {
    let base = base_problem(config)?;
    let q = singular_potential(config)?;
    check_resolution(&config.mollifier, &config.eps, &base.grid, warnings)?;
    let vws = very_weak_solve(&q, &base, &config.mollifier, &config.eps)?;
    let per_eps = vws_artifacts(out, &vws)?;
    out.json("reports/vws.json", "vws::very_weak_solve", &vws)?;
    if let Some(m) = &vws.moderation {
        out.json("reports/moderation.json", "regularize::moderateness_fit", m)?;
    }
    Ok(json!({ "per_eps": per_eps }))
}

#[derive(Serialize)]
struct ModerateReport {
    scaling: Scaling,
    widths: Vec<f64>,
    sup_norms: Vec<f64>,
    /// `None` where the closed-form envelope does not apply.
    envelope_bound: Vec<Option<f64>>,
    envelope_holds: bool,
    fit: crate::regularize::ModerationReport,
}

fn cmd_moderate(config: &RunConfig, out: &mut Writer, warnings: &mut Vec<String>) -> Result<Value> {
    let grid = config.grid;
    let q = singular_potential(config)?;
    check_resolution(&config.mollifier, &config.eps, &grid, warnings)?;
    let t = Arc::new(TruncationSet::from_indices(q.atoms().keys().cloned())?);
    let mut widths = Vec::new();
    let mut sup_norms = Vec::new();
    let mut envelope = Vec::new();
    for &e in &config.eps {
        let qe = regularize_potential(&q, &config.mollifier, e, &grid, t.clone())?;
        widths.push(config.mollifier.width(e)?);
        sup_norms.push(qe.sup_coefficient_norm());
        envelope.push(linf_bound_star1(&q, &config.mollifier, e).ok());
    }
    let envelope_holds = sup_norms
        .iter()
        .zip(&envelope)
        .all(|(n, b)| b.is_none_or(|b| *n <= b * (1.0 + 1e-9)));
    let fit = moderateness_fit(&config.eps, &sup_norms)?;
    let report = ModerateReport {
        scaling: config.mollifier.scaling,
        widths,
        sup_norms,
        envelope_bound: envelope,
        envelope_holds,
        fit,
    };
    out.json(
        "reports/moderation.json",
        "regularize::moderateness_fit",
        &report,
    )?;
    Ok(json!({ "envelope_holds": envelope_holds, "verdict": report.fit.verdict }))
}

fn cmd_negligibility(
    config: &RunConfig,
    out: &mut Writer,
    warnings: &mut Vec<String>,
) -> Result<Value> {
    let base = base_problem(config)?;
    let q = singular_potential(config)?;
    let net1 = Net::Mollified {
        mollifier: config.mollifier,
    };
    let net2 = match config.negligibility.net2 {
        Net2Kind::Perturbed => Net::Perturbed {
            mollifier: config.mollifier,
            order: config.negligibility.order,
            center: config.negligibility.center,
        },
        Net2Kind::Standard => Net::Mollified {
            mollifier: MollifierSpec::standard(),
        },
        Net2Kind::Log => Net::Mollified {
            mollifier: MollifierSpec::log(),
        },
    };
    check_resolution(&net1.mollifier(), &config.eps, &base.grid, warnings)?;
    check_resolution(&net2.mollifier(), &config.eps, &base.grid, warnings)?;
    let report = negligibility_check(
        &q,
        &net1,
        &net2,
        &config.eps,
        &base,
        config.negligibility.n_min,
    )?;
    out.json(
        "reports/negligibility.json",
        "vws::negligibility_check",
        &json!({ "net1": net1, "net2": net2, "report": report }),
    )?;
    Ok(json!({
        "premise_violated": report.premise_violated,
        "solution_negligible": report.solution_negligible,
    }))
}

fn cmd_consistency(
    config: &RunConfig,
    out: &mut Writer,
    warnings: &mut Vec<String>,
) -> Result<Value> {
    let base = base_problem(config)?;
    let smooth = smooth_potential(config)
        .ok_or_else(|| Error::Validation("consistency needs potential.kind = smooth".into()))?;
    check_resolution(&config.mollifier, &config.eps, &base.grid, warnings)?;
    let p = match config.p {
        Some(p) => p,
        None => {
            let v = propagate(&ProblemSpec {
                potential: smooth.sample(&base.grid, base.truncation.clone())?,
                ..base.clone()
            })?;
            v.p_u + 2
        }
    };
    let report = consistency_check(&smooth, &config.mollifier, &config.eps, &base, p)?;
    out.json(
        "reports/consistency.json",
        "vws::consistency_check",
        &report,
    )?;
    Ok(json!({ "envelope_holds": report.envelope_holds, "monotone": report.monotone_flag }))
}

#[derive(Serialize)]
struct Discrepancy {
    claim: &'static str,
    eps: Vec<f64>,
    max_second_order_norm: Vec<f64>,
    max: f64,
}

fn cmd_section6(config: &RunConfig, out: &mut Writer, warnings: &mut Vec<String>) -> Result<Value> {
    let preset = Section6Preset {
        modes: config.data.modes,
        grid: config.grid,
        ..Section6Preset::default()
    };
    let grid = config.grid;
    let t = truncation(config)?;
    let prob = build_section6_problem(&preset, &grid, t.clone())?;
    let base = ProblemSpec {
        op: operator(config),
        grid,
        force: prob.force.clone(),
        initial: prob.initial.clone(),
        potential: ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false),
        truncation: t,
        p_f: prob.p_f,
        p_g: prob.p_g,
        m: config.m,
    };
    check_resolution(&config.mollifier, &config.eps, &grid, warnings)?;
    let vws = very_weak_solve(&prob.potential, &base, &config.mollifier, &config.eps)?;
    let per_eps = vws_artifacts(out, &vws)?;

    let probe = Arc::new(TruncationSet::enumerate(CRITICAL_EXPONENT_MODES, 1)?);
    let g_probe = white_noise_space(&grid, probe.clone(), CRITICAL_EXPONENT_MODES)?;
    let env = GridFunction::from_fn_space(&grid, |x| preset.g(x));
    let f_probe = white_noise_time(&grid, probe, CRITICAL_EXPONENT_MODES, &env)?.with(
        MultiIndex::zero(),
        GridFunction::from_fn_space_time(&grid, |_, x| preset.f(x)),
    )?;
    let critical = json!({
        "modes": CRITICAL_EXPONENT_MODES,
        "threshold": CRITICAL_EXPONENT_THRESHOLD,
        "force_estimate": critical_exponent_estimate(&f_probe, CRITICAL_EXPONENT_THRESHOLD),
        "force_declared": prob.p_f,
        "initial_estimate": critical_exponent_estimate(&g_probe, CRITICAL_EXPONENT_THRESHOLD),
        "initial_declared": prob.p_g,
    });

    let discrepancy = Discrepancy {
        claim: "coefficients with |gamma| = 2 vanish",
        eps: vws.eps_values.clone(),
        max_second_order_norm: vws.runs.iter().map(|r| r.second_order_max).collect(),
        max: vws
            .runs
            .iter()
            .map(|r| r.second_order_max)
            .fold(0.0, f64::max),
    };
    let q_eps: Vec<f64> = vws.runs.iter().map(|r| r.q_eps).collect();
    let potential_moderation = if vws.runs.len() >= 3 {
        Some(moderateness_fit(&vws.eps_values, &q_eps)?)
    } else {
        None
    };
    let report = json!({
        "preset": preset,
        "q_ledger": prob.q_ledger,
        "critical_exponents": critical,
        "mollifier": config.mollifier,
        "p_used": vws.p_used,
        "m_used": vws.m_used,
        "runs": vws.runs,
        "solution_moderation": vws.moderation,
        "envelope_moderation": vws.envelope_moderation,
        "potential_moderation": potential_moderation,
        "discrepancy": discrepancy,
    });
    out.json("reports/section6.json", "harness::section6", &report)?;
    if let Some(m) = &vws.moderation {
        out.json("reports/moderation.json", "regularize::moderateness_fit", m)?;
    }
    Ok(json!({
        "per_eps": per_eps,
        "q_ledger": prob.q_ledger,
        "discrepancy_max": discrepancy.max,
    }))
}
