//! Very weak solutions over ε-nets of regularized potentials, with
//! moderateness, negligibility and consistency diagnostics.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{wick_product, ChaosField, CoefficientNorm};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::multiindex::{cp_limit, MultiIndex, TruncationSet};
use crate::propagator::{
    coupling_exponent, norm_bound_ocena, p_u_formula, propagate, ProblemSpec, WeakSolution,
};
use crate::quadrature::GaussLegendre;
use crate::regularize::{
    bump, line_fit, moderateness_fit, regularize_potential, BumpDerivative, ModerationReport,
    MollifierSpec, SingularPotential,
};

/// Default ε grid.
pub const DEFAULT_EPS: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

/// Default decay order above which a net counts as negligible.
pub const DEFAULT_N_MIN: f64 = 3.0;

/// `s_ε = ln((M̃_ε(T) q_ε)²)/ln 2 + 1` if `(M̃_ε(T) q_ε)² > 1`, else 0.
pub fn s_eps(mtilde_t: f64, q_eps: f64) -> f64 {
    coupling_exponent(mtilde_t, q_eps)
}

/// The two readings of the ε-dependent evaluation exponent:
/// `p_U + (m/(m-1))/ε` and `(m/(m-1))(s + 3 + 1/ε)`.
pub fn p_eps_forms(p_u: u32, m: u32, s: f64, eps: f64) -> (f64, f64) {
    let r = f64::from(m) / (f64::from(m) - 1.0);
    (f64::from(p_u) + r / eps, r * (s + 3.0 + 1.0 / eps))
}

fn check_eps(eps_values: &[f64]) -> Result<()> {
    if eps_values.is_empty() {
        return Err(Error::Validation("the eps list is empty".into()));
    }
    if eps_values.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::Domain("every eps must lie in (0, 1]".into()));
    }
    if eps_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation(
            "eps values must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn with_eps<T>(eps: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Epsilon {
        eps,
        source: Box::new(e),
    })
}

/// Bookkeeping of one regularized run.
#[derive(Clone, Debug, Serialize)]
pub struct EpsRun {
    pub eps: f64,
    pub width: f64,
    /// `q_ε = sup_γ ‖q_γ ∗ φ_ε‖_{L∞}`.
    pub q_eps: f64,
    pub q0_inf: f64,
    pub m_t: f64,
    pub mtilde_t: f64,
    pub s_eps: f64,
    pub p_u: u32,
    pub p_eps_shift: f64,
    pub p_eps_alt: f64,
    pub p_eps: f64,
    /// `⫼U_ε⫼_{-p}` at the common evaluation exponent.
    pub norm: f64,
    /// `(3 M_ε(T)² A (1 + 2 C C))^{1/2}` at the common exponent.
    pub envelope: Option<f64>,
    /// `max_{|γ|=2} sup_t ‖u_{ε,γ}(t)‖_{L²}`.
    pub second_order_max: f64,
    pub ledger_passed: bool,
    #[serde(skip)]
    pub solution: WeakSolution,
    #[serde(skip)]
    pub potential: ChaosField,
}

#[derive(Clone, Debug, Serialize)]
pub struct VeryWeakSolution {
    pub eps_values: Vec<f64>,
    pub p_used: u32,
    pub m_used: u32,
    pub runs: Vec<EpsRun>,
    /// Fit of `⫼U_ε⫼_{-p}`; needs at least three ε.
    pub moderation: Option<ModerationReport>,
    /// Fit of the envelope sequence, when every envelope is defined.
    pub envelope_moderation: Option<ModerationReport>,
}

/// `max_{|γ|=2} sup_t ‖u_γ(t)‖`.
pub fn second_order_max(u: &ChaosField) -> f64 {
    u.iter()
        .filter(|(g, _)| g.order() == 2)
        .map(|(g, _)| u.coefficient_norm(g))
        .fold(0.0, f64::max)
}

fn spec_with_potential(base: &ProblemSpec, potential: ChaosField) -> ProblemSpec {
    ProblemSpec {
        potential,
        ..base.clone()
    }
}

/// Solve the regularized problem for every ε of the net and fit the
/// moderateness of `⫼U_ε⫼_{-p}` at `p = max_ε p_{U_ε} + 2`.
pub fn very_weak_solve(
    q: &SingularPotential,
    base: &ProblemSpec,
    mollifier: &MollifierSpec,
    eps_values: &[f64],
) -> Result<VeryWeakSolution> {
    check_eps(eps_values)?;
    base.validate()?;
    let t_final = base.grid.t_final;
    let runs: Vec<(f64, WeakSolution, ChaosField)> = eps_values
        .par_iter()
        .map(|&eps| {
            with_eps(
                eps,
                (|| {
                    let width = mollifier.width(eps)?;
                    let q_eps = regularize_potential(
                        q,
                        mollifier,
                        eps,
                        &base.grid,
                        base.truncation.clone(),
                    )?;
                    let sol = propagate(&spec_with_potential(base, q_eps.clone()))?;
                    Ok((width, sol, q_eps))
                })(),
            )
        })
        .collect::<Result<_>>()?;

    let mut partial = Vec::with_capacity(runs.len());
    for ((width, sol, pot), &eps) in runs.into_iter().zip(eps_values) {
        let mtilde_t = sol.envelope.mtilde_of_t(t_final);
        let s = s_eps(mtilde_t, sol.q_sup);
        let p_u = p_u_formula(base.m, base.p_f, base.p_g, s)?;
        let (shift, alt) = p_eps_forms(p_u, base.m, s, eps);
        partial.push((eps, width, sol, pot, mtilde_t, s, p_u, shift, alt));
    }
    let p_used = partial.iter().map(|r| r.6).max().unwrap_or(0) + 2;
    let pf = f64::from(p_used);
    let a_const =
        crate::propagator::a_constant(&base.initial, &base.force, base.p_g, base.p_f, t_final);

    let runs: Vec<EpsRun> = partial
        .into_iter()
        .map(|(eps, width, sol, pot, mtilde_t, s, p_u, shift, alt)| {
            let m_t = sol.envelope.m_of_t(t_final);
            let envelope = norm_bound_ocena(p_used, base.m, m_t, a_const, s, cp_limit)
                .ok()
                .map(f64::sqrt);
            EpsRun {
                eps,
                width,
                q_eps: sol.q_sup,
                q0_inf: sol.envelope.q_inf,
                m_t,
                mtilde_t,
                s_eps: s,
                p_u,
                p_eps_shift: shift,
                p_eps_alt: alt,
                p_eps: shift.max(alt),
                norm: sol.field.kondratiev_norm(pf),
                envelope,
                second_order_max: second_order_max(&sol.field),
                ledger_passed: sol.ledger_passed(),
                solution: sol,
                potential: pot,
            }
        })
        .collect();

    let (moderation, envelope_moderation) =
        if runs.len() >= 3 && eps_values.iter().all(|&e| e < 1.0) {
            let norms: Vec<f64> = runs.iter().map(|r| r.norm).collect();
            let env: Option<Vec<f64>> = runs.iter().map(|r| r.envelope).collect();
            (
                Some(moderateness_fit(eps_values, &norms)?),
                env.map(|e| moderateness_fit(eps_values, &e)).transpose()?,
            )
        } else {
            (None, None)
        };
    Ok(VeryWeakSolution {
        eps_values: eps_values.to_vec(),
        p_used,
        m_used: base.m,
        runs,
        moderation,
        envelope_moderation,
    })
}

/// A regularizing net of a singular potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Net {
    /// `Q ∗ φ_ε`.
    Mollified { mollifier: MollifierSpec },
    /// `Q ∗ φ_ε + ε^order φ(· - center)` on every index carrying atoms.
    Perturbed {
        mollifier: MollifierSpec,
        order: f64,
        center: f64,
    },
}

impl Net {
    pub fn mollifier(&self) -> MollifierSpec {
        match *self {
            Net::Mollified { mollifier } | Net::Perturbed { mollifier, .. } => mollifier,
        }
    }

    pub fn regularize(
        &self,
        q: &SingularPotential,
        eps: f64,
        grid: &GridSpec,
        truncation: Arc<TruncationSet>,
    ) -> Result<ChaosField> {
        let mut field = regularize_potential(q, &self.mollifier(), eps, grid, truncation.clone())?;
        if let Net::Perturbed { order, center, .. } = *self {
            let amp = eps.powf(order);
            let bump_nodes = GridFunction::from_fn_space(grid, |x| bump(x - center));
            let mut out = ChaosField::zeros(*grid, truncation, CoefficientNorm::LinfInX, false);
            for (gamma, atoms) in q.atoms() {
                if atoms.is_empty() {
                    continue;
                }
                let mut c = field.coefficient_or_zero(gamma);
                c.add_scaled(amp, &bump_nodes)?;
                out.insert(gamma.clone(), c)?;
            }
            field = out;
        }
        Ok(field)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NegligibilityReport {
    pub eps: Vec<f64>,
    pub p: u32,
    /// `⫼Q_ε - Q̃_ε⫼_{-p}`.
    pub potential_diff: Vec<f64>,
    /// `⫼U_ε - V_ε⫼_{-p}`.
    pub solution_diff: Vec<f64>,
    /// Fitted `n` in `potential_diff ≈ c ε^n`; `None` for identically zero nets.
    pub potential_order: Option<f64>,
    pub solution_order: Option<f64>,
    /// Growth order of `max(M_ε(T), M̃_ε(T))` over the net.
    pub m_growth_order: f64,
    /// Growth order of `⫼V_ε⫼_{-p}`.
    pub v_growth_order: f64,
    /// `solution_order >= potential_order - m_growth_order - v_growth_order`.
    pub order_condition_met: bool,
    pub n_min: f64,
    pub potential_negligible: bool,
    pub solution_negligible: bool,
    /// The nets do not differ negligibly, so no uniqueness claim applies.
    pub premise_violated: bool,
}

fn decay_order(eps: &[f64], values: &[f64]) -> Result<Option<f64>> {
    if values.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::Numerical(
            "mixed zero and nonzero differences; decay order undefined".into(),
        ));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    Ok(Some(line_fit(&xs, &ys)?.slope))
}

fn growth_order(eps: &[f64], values: &[f64]) -> Result<f64> {
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = values
        .iter()
        .map(|v| v.max(f64::MIN_POSITIVE).ln())
        .collect();
    Ok(line_fit(&xs, &ys)?.slope.max(0.0))
}

/// Solve with two nets and compare the decay of the potential and solution
/// differences.
pub fn negligibility_check(
    q: &SingularPotential,
    net1: &Net,
    net2: &Net,
    eps_values: &[f64],
    base: &ProblemSpec,
    n_min: f64,
) -> Result<NegligibilityReport> {
    check_eps(eps_values)?;
    if eps_values.len() < 2 {
        return Err(Error::Validation(
            "negligibility needs at least two eps values".into(),
        ));
    }
    base.validate()?;
    let t_final = base.grid.t_final;
    let runs: Vec<(ChaosField, ChaosField, WeakSolution, WeakSolution)> = eps_values
        .par_iter()
        .map(|&eps| {
            with_eps(
                eps,
                (|| {
                    let q1 = net1.regularize(q, eps, &base.grid, base.truncation.clone())?;
                    let q2 = net2.regularize(q, eps, &base.grid, base.truncation.clone())?;
                    let u = propagate(&spec_with_potential(base, q1.clone()))?;
                    let v = if q1.iter().eq(q2.iter()) {
                        u.clone()
                    } else {
                        propagate(&spec_with_potential(base, q2.clone()))?
                    };
                    Ok((q1, q2, u, v))
                })(),
            )
        })
        .collect::<Result<_>>()?;

    let mut p_u_max = 0;
    for (_, _, u, v) in &runs {
        for sol in [u, v] {
            let s = s_eps(sol.envelope.mtilde_of_t(t_final), sol.q_sup);
            p_u_max = p_u_max.max(p_u_formula(base.m, base.p_f, base.p_g, s)?);
        }
    }
    let p = p_u_max + 2;
    let pf = f64::from(p);
    let mut potential_diff = Vec::new();
    let mut solution_diff = Vec::new();
    let mut m_growth = Vec::new();
    let mut v_norm = Vec::new();
    for (q1, q2, u, v) in &runs {
        potential_diff.push(q1.difference(q2)?.kondratiev_norm(pf));
        solution_diff.push(u.field.difference(&v.field)?.kondratiev_norm(pf));
        let m = [u, v]
            .iter()
            .map(|s| {
                s.envelope
                    .m_of_t(t_final)
                    .max(s.envelope.mtilde_of_t(t_final))
            })
            .fold(0.0, f64::max);
        m_growth.push(m);
        v_norm.push(v.field.kondratiev_norm(pf));
    }
    let potential_order = decay_order(eps_values, &potential_diff)?;
    let solution_order = decay_order(eps_values, &solution_diff)?;
    let m_growth_order = growth_order(eps_values, &m_growth)?;
    let v_growth_order = growth_order(eps_values, &v_norm)?;
    let order_condition_met = match (potential_order, solution_order) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(pn), Some(sn)) => sn >= pn - m_growth_order - v_growth_order,
    };
    let potential_negligible = potential_order.is_none_or(|n| n >= n_min);
    let solution_negligible = solution_order.is_none_or(|n| n >= n_min);
    Ok(NegligibilityReport {
        eps: eps_values.to_vec(),
        p,
        potential_diff,
        solution_diff,
        potential_order,
        solution_order,
        m_growth_order,
        v_growth_order,
        order_condition_met,
        n_min,
        potential_negligible,
        solution_negligible,
        premise_violated: !potential_negligible,
    })
}

/// `a · exp(-(x - center)² / (2 σ²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
}

impl GaussianBump {
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.sigma;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

/// Bounded smooth chaos potential: a sum of Gaussian bumps per index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothPotential {
    pub bumps: BTreeMap<MultiIndex, Vec<GaussianBump>>,
}

impl SmoothPotential {
    pub fn with_bump(mut self, gamma: MultiIndex, b: GaussianBump) -> Self {
        self.bumps.entry(gamma).or_default().push(b);
        self
    }

    pub fn eval(&self, gamma: &MultiIndex, x: f64) -> f64 {
        self.bumps
            .get(gamma)
            .map_or(0.0, |bs| bs.iter().map(|b| b.eval(x)).sum())
    }

    /// Nodal values of the potential.
    pub fn sample(&self, grid: &GridSpec, truncation: Arc<TruncationSet>) -> Result<ChaosField> {
        let mut field = ChaosField::zeros(*grid, truncation, CoefficientNorm::LinfInX, false);
        for gamma in self.bumps.keys() {
            field.insert(
                gamma.clone(),
                GridFunction::from_fn_space(grid, |x| self.eval(gamma, x)),
            )?;
        }
        Ok(field)
    }

    /// Nodal values of `q_γ ∗ φ_ε`, by composite Gauss–Legendre over the
    /// mollifier's support.
    pub fn mollify(
        &self,
        mollifier: &MollifierSpec,
        eps: f64,
        grid: &GridSpec,
        truncation: Arc<TruncationSet>,
    ) -> Result<ChaosField> {
        let w = mollifier.width(eps)?;
        let rule = GaussLegendre::new(12);
        let kernel = BumpDerivative::new(0);
        let panels = 24;
        let mut field = ChaosField::zeros(*grid, truncation, CoefficientNorm::LinfInX, false);
        for gamma in self.bumps.keys() {
            let values = GridFunction::from_fn_space(grid, |x| {
                rule.integrate_composite(-w, w, panels, |y| {
                    self.eval(gamma, x - y) * kernel.eval_scaled(y, w)
                })
            });
            field.insert(gamma.clone(), values)?;
        }
        Ok(field)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    pub eps: Vec<f64>,
    pub p: u32,
    /// `⫼U_ε - V⫼_{-p}`.
    pub differences: Vec<f64>,
    /// `max_γ ‖q_γ - q_γ ∗ φ_ε‖_{L∞}`.
    pub potential_error: Vec<f64>,
    /// `(3 M_ε(T)² T² ⫼(Q - Q_ε) ◊ V⫼²_{-p} (1 + 2 C C))^{1/2}`, when the
    /// `C` exponents are admissible.
    pub envelope: Vec<Option<f64>>,
    pub envelope_holds: bool,
    pub monotone_flag: bool,
    /// Aitken extrapolation of the last three differences.
    pub extrapolated_limit: Option<f64>,
}

fn aitken(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let (a, b, c) = (x[x.len() - 3], x[x.len() - 2], x[x.len() - 1]);
    let denom = c - 2.0 * b + a;
    if denom.abs() < 1e-300 {
        Some(c)
    } else {
        Some(c - (c - b).powi(2) / denom)
    }
}

/// Compare the weak solution `V` of the smooth problem with the solutions
/// `U_ε` of the mollified problems.
pub fn consistency_check(
    smooth: &SmoothPotential,
    mollifier: &MollifierSpec,
    eps_values: &[f64],
    base: &ProblemSpec,
    p: u32,
) -> Result<ConsistencyReport> {
    check_eps(eps_values)?;
    base.validate()?;
    let t_final = base.grid.t_final;
    let q = smooth.sample(&base.grid, base.truncation.clone())?;
    let v = propagate(&spec_with_potential(base, q.clone()))?;
    let pf = f64::from(p);
    let per_eps: Vec<(f64, f64, Option<f64>)> = eps_values
        .par_iter()
        .map(|&eps| {
            with_eps(
                eps,
                (|| {
                    let q_eps =
                        smooth.mollify(mollifier, eps, &base.grid, base.truncation.clone())?;
                    let u = propagate(&spec_with_potential(base, q_eps.clone()))?;
                    let diff = u.field.difference(&v.field)?.kondratiev_norm(pf);
                    let dq = q.difference(&q_eps)?;
                    let potential_error = dq.sup_coefficient_norm();
                    let load = wick_product(&dq, &v.field)?.field.kondratiev_norm_sq(pf);
                    let s = s_eps(u.envelope.mtilde_of_t(t_final), u.q_sup);
                    let m_t = u.envelope.m_of_t(t_final);
                    let envelope =
                        norm_bound_ocena(p, base.m, m_t, t_final * t_final * load, s, cp_limit)
                            .ok()
                            .map(f64::sqrt);
                    Ok((diff, potential_error, envelope))
                })(),
            )
        })
        .collect::<Result<_>>()?;
    let differences: Vec<f64> = per_eps.iter().map(|r| r.0).collect();
    let envelope: Vec<Option<f64>> = per_eps.iter().map(|r| r.2).collect();
    let envelope_holds = per_eps.iter().all(|r| r.2.is_none_or(|e| r.0 <= e));
    Ok(ConsistencyReport {
        eps: eps_values.to_vec(),
        p,
        monotone_flag: differences.windows(2).all(|w| w[1] <= w[0]),
        extrapolated_limit: aitken(&differences),
        potential_error: per_eps.iter().map(|r| r.1).collect(),
        differences,
        envelope,
        envelope_holds,
    })
}
