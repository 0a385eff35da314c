//! The chaos-expansion method for `(∂_t - Δ) U + Q ◊ U = F`, `U(0) = G`
//! with a bounded chaos potential: one deterministic solve per multi-index,
//! level by level in `|γ|`, plus the coefficient and norm estimates.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::{ChaosField, CoefficientNorm};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::multiindex::{cp_limit, MultiIndex, TruncationSet};
use crate::pde::{solve_parabolic, BoundEnvelope, OperatorSpec};

/// Data of a problem with a bounded potential.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub op: OperatorSpec,
    pub grid: GridSpec,
    pub force: ChaosField,
    pub initial: ChaosField,
    pub potential: ChaosField,
    pub truncation: Arc<TruncationSet>,
    pub p_f: u32,
    pub p_g: u32,
    /// Splitting exponent `m >= 2` of the norm estimate.
    pub m: u32,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for (name, field) in [
            ("force", &self.force),
            ("initial", &self.initial),
            ("potential", &self.potential),
        ] {
            if field.grid() != &self.grid {
                return Err(Error::Shape(format!("{name} lives on a different grid")));
            }
            if field.truncation().as_ref() != self.truncation.as_ref() {
                return Err(Error::Shape(format!("{name} uses a different truncation")));
            }
        }
        if self.initial.is_time_dependent() {
            return Err(Error::Shape("initial data must be time-independent".into()));
        }
        if self.potential.is_time_dependent() {
            return Err(Error::Shape(
                "potential coefficients must be time-independent".into(),
            ));
        }
        if self.m < 2 {
            return Err(Error::Domain(format!("m = {} must be at least 2", self.m)));
        }
        Ok(())
    }

    /// `‖q_0‖_{L∞}`, the reaction coefficient entering `M(t)`.
    pub fn q0_inf(&self) -> f64 {
        self.potential
            .get(&MultiIndex::zero())
            .map_or(0.0, GridFunction::linf)
    }

    /// `q = sup_γ ‖q_γ‖_{L∞}`.
    pub fn q_sup(&self) -> f64 {
        self.potential
            .iter()
            .map(|(_, c)| c.linf())
            .fold(0.0, f64::max)
    }

    pub fn envelope(&self) -> BoundEnvelope {
        BoundEnvelope::new(&self.op, self.q0_inf())
    }
}

/// `f̃_γ = f_γ - Σ_{α+β=γ, α≠0} q_α u_β`; every proper `β < γ` must be in
/// `solved`.
pub fn tilde_force(
    gamma: &MultiIndex,
    force: &ChaosField,
    potential: &ChaosField,
    solved: &BTreeMap<MultiIndex, GridFunction>,
) -> Result<GridFunction> {
    let mut out = force.coefficient_or_zero(gamma);
    if gamma.is_zero() {
        return Ok(out);
    }
    for (alpha, beta) in gamma.decompositions() {
        if alpha.is_zero() {
            continue;
        }
        let u_beta = solved.get(&beta).ok_or_else(|| Error::Sequencing {
            requested: gamma.clone(),
            missing: beta.clone(),
        })?;
        if let Some(q_alpha) = potential.get(&alpha) {
            let coupling = q_alpha.product(u_beta)?;
            if out.levels() < coupling.levels() {
                out = out.broadcast_levels(coupling.levels());
            }
            out.add_scaled(-1.0, &coupling)?;
        }
    }
    Ok(out)
}

/// One deterministic solve `u_γ` from previously solved coefficients.
pub fn solve_coefficient(
    spec: &ProblemSpec,
    gamma: &MultiIndex,
    solved: &BTreeMap<MultiIndex, GridFunction>,
) -> Result<GridFunction> {
    let q0 = spec.potential.coefficient_or_zero(&MultiIndex::zero());
    let f = tilde_force(gamma, &spec.force, &spec.potential, solved)?;
    let g = spec.initial.coefficient_or_zero(gamma);
    solve_parabolic(&spec.op, &q0, &f, &g, &spec.grid).map_err(|e| Error::Coefficient {
        gamma: gamma.clone(),
        source: Box::new(e),
    })
}

/// Per-coefficient comparison with the coefficient estimate over all time
/// levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub gamma: MultiIndex,
    /// `sup_t ‖u_γ(t)‖_{L²}`.
    pub measured_norm: f64,
    /// The estimate at `t = T`.
    #[serde(rename = "estKoefCE_bound")]
    pub bound: f64,
    /// `min_t (bound(t) - ‖u_γ(t)‖)`.
    pub slack: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Squared-norm estimate at one evaluation exponent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormBoundReport {
    pub p: u32,
    pub m: u32,
    pub s: f64,
    pub a_const: f64,
    pub measured_sq: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct WeakSolution {
    pub field: ChaosField,
    pub ledger: Vec<LedgerEntry>,
    pub envelope: BoundEnvelope,
    pub q_sup: f64,
    pub p_u: u32,
    /// `None` when the estimate's `C_p` exponents do not exceed 1.
    pub norm_bound: Option<NormBoundReport>,
}

impl WeakSolution {
    pub fn ledger_passed(&self) -> bool {
        self.ledger.iter().all(|e| e.passed)
    }
}

/// Solve all coefficients in graded order. Coefficients of one level are
/// independent and solved in parallel; results are assembled in the
/// truncation's order.
pub fn propagate(spec: &ProblemSpec) -> Result<WeakSolution> {
    spec.validate()?;
    let mut solved: BTreeMap<MultiIndex, GridFunction> = BTreeMap::new();
    for order in 0..=spec.truncation.max_order() {
        let level = spec.truncation.level(order);
        let results: Vec<GridFunction> = level
            .par_iter()
            .map(|gamma| solve_coefficient(spec, gamma, &solved))
            .collect::<Result<_>>()?;
        for (gamma, u) in level.iter().zip(results) {
            solved.insert(gamma.clone(), u);
        }
    }
    let mut field = ChaosField::zeros(
        spec.grid,
        spec.truncation.clone(),
        CoefficientNorm::SupTL2InX,
        true,
    );
    for (gamma, u) in solved {
        if !u.is_zero() {
            field.insert(gamma, u)?;
        }
    }

    let envelope = spec.envelope();
    let q = spec.q_sup();
    let ledger = coefficient_ledger(spec, &field, &envelope, q);
    let s = coupling_exponent(envelope.mtilde_of_t(spec.grid.t_final), q);
    let p_u = p_u_formula(spec.m, spec.p_f, spec.p_g, s)?;
    let norm_bound = norm_bound_report(spec, &field, p_u, s).ok();
    Ok(WeakSolution {
        field,
        ledger,
        envelope,
        q_sup: q,
        p_u,
        norm_bound,
    })
}

/// `a_γ(t) = ‖g_γ‖_{L²} + t sup_s ‖f_γ(s)‖_{L²}`.
pub fn a_gamma(gamma: &MultiIndex, initial: &ChaosField, force: &ChaosField, t: f64) -> f64 {
    let grid = initial.grid();
    let g = initial.get(gamma).map_or(0.0, |c| c.sup_l2(grid));
    let f = force.get(gamma).map_or(0.0, |c| c.sup_l2(force.grid()));
    g + t * f
}

/// `M(t)(a_γ + Σ_{k=1}^{|γ|} (M̃(t) q)^k Σ_{β<γ, |β| <= |γ|-k} a_β)`;
/// indices missing from `a` count as zero.
pub fn coefficient_bound(
    gamma: &MultiIndex,
    t: f64,
    envelope: &BoundEnvelope,
    q: f64,
    a: &BTreeMap<MultiIndex, f64>,
) -> f64 {
    let a_of = |g: &MultiIndex| a.get(g).copied().unwrap_or(0.0);
    let order = gamma.order();
    // by_order[j] = Σ_{β<γ, |β| = j} a_β
    let mut by_order = vec![0.0; order as usize + 1];
    for beta in gamma.sub_indices() {
        if &beta != gamma {
            by_order[beta.order() as usize] += a_of(&beta);
        }
    }
    let r = envelope.mtilde_of_t(t) * q;
    let mut acc = a_of(gamma);
    let mut prefix = 0.0;
    let cumulative: Vec<f64> = by_order
        .iter()
        .map(|v| {
            prefix += v;
            prefix
        })
        .collect();
    for k in 1..=order {
        acc += r.powi(k as i32) * cumulative[(order - k) as usize];
    }
    envelope.m_of_t(t) * acc
}

fn coefficient_ledger(
    spec: &ProblemSpec,
    u: &ChaosField,
    envelope: &BoundEnvelope,
    q: f64,
) -> Vec<LedgerEntry> {
    let grid = &spec.grid;
    let members = spec.truncation.members();
    let g_norms: Vec<f64> = members
        .iter()
        .map(|g| spec.initial.coefficient_norm(g))
        .collect();
    let f_norms: Vec<f64> = members
        .iter()
        .map(|g| spec.force.get(g).map_or(0.0, |c| c.sup_l2(grid)))
        .collect();
    let norms: Vec<Vec<f64>> = members
        .iter()
        .map(|g| {
            u.get(g)
                .map_or_else(|| vec![0.0; grid.nt], |c| c.l2_by_level(grid))
        })
        .collect();
    let scale = 10.0 * (grid.dt() * grid.dt() + grid.dx() * grid.dx());
    let mut slack = vec![f64::INFINITY; members.len()];
    let mut bound_t = vec![0.0; members.len()];
    for (n, t) in grid.ts().into_iter().enumerate() {
        let a: BTreeMap<MultiIndex, f64> = members
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), g_norms[i] + t * f_norms[i]))
            .collect();
        for (i, gamma) in members.iter().enumerate() {
            let b = coefficient_bound(gamma, t, envelope, q, &a);
            slack[i] = slack[i].min(b - norms[i][n]);
            bound_t[i] = b;
        }
    }
    members
        .iter()
        .enumerate()
        .map(|(i, gamma)| {
            let tolerance = scale * bound_t[i];
            LedgerEntry {
                gamma: gamma.clone(),
                measured_norm: norms[i].iter().copied().fold(0.0, f64::max),
                bound: bound_t[i],
                slack: slack[i],
                tolerance,
                passed: slack[i] >= -tolerance,
            }
        })
        .collect()
}

/// `s = ln((M̃(T) q)²)/ln 2 + 1` if `(M̃(T) q)² > 1`, else 0.
pub fn coupling_exponent(mtilde_t: f64, q: f64) -> f64 {
    let r2 = (mtilde_t * q).powi(2);
    if r2 > 1.0 {
        r2.ln() / std::f64::consts::LN_2 + 1.0
    } else {
        0.0
    }
}

/// `p_U = ⌊max{2m p_F, 2m p_G, m(3+s)/(m-1)}⌋ + 1`.
pub fn p_u_formula(m: u32, p_f: u32, p_g: u32, s: f64) -> Result<u32> {
    if m < 2 {
        return Err(Error::Domain(format!("m = {m} must be at least 2")));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::Domain(format!(
            "s = {s} must be finite and non-negative"
        )));
    }
    let mf = f64::from(m);
    let v = (2.0 * mf * f64::from(p_f))
        .max(2.0 * mf * f64::from(p_g))
        .max(mf * (3.0 + s) / (mf - 1.0));
    Ok(v.floor() as u32 + 1)
}

/// `A = ⫼G⫼²_{-p_G} + T² ⫼F⫼²_{-p_F}`.
pub fn a_constant(
    initial: &ChaosField,
    force: &ChaosField,
    p_g: u32,
    p_f: u32,
    t_final: f64,
) -> f64 {
    initial.kondratiev_norm_sq(f64::from(p_g))
        + t_final * t_final * force.kondratiev_norm_sq(f64::from(p_f))
}

/// `3 M(T)² A (1 + 2 C_{p/2m} C_{p(m-1)/m - s - 2})` with `C` supplied by `cp`.
pub fn norm_bound_ocena(
    p: u32,
    m: u32,
    m_of_t: f64,
    a_const: f64,
    s: f64,
    cp: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::Domain(format!("m = {m} must be at least 2")));
    }
    let (pf, mf) = (f64::from(p), f64::from(m));
    let e1 = pf / (2.0 * mf);
    let e2 = pf * (mf - 1.0) / mf - s - 2.0;
    if !(e1 > 1.0 && e2 > 1.0) {
        return Err(Error::Domain(format!(
            "C exponents {e1} and {e2} must exceed 1"
        )));
    }
    Ok(3.0 * m_of_t * m_of_t * a_const * (1.0 + 2.0 * cp(e1)? * cp(e2)?))
}

/// Evaluate the squared-norm estimate at `p` with converged `C_p` and
/// compare it with the measured `⫼U⫼²_{-p}`.
pub fn norm_bound_report(
    spec: &ProblemSpec,
    u: &ChaosField,
    p: u32,
    s: f64,
) -> Result<NormBoundReport> {
    let t_final = spec.grid.t_final;
    let a_const = a_constant(&spec.initial, &spec.force, spec.p_g, spec.p_f, t_final);
    let bound = norm_bound_ocena(
        p,
        spec.m,
        spec.envelope().m_of_t(t_final),
        a_const,
        s,
        cp_limit,
    )?;
    let measured_sq = u.kondratiev_norm_sq(f64::from(p));
    Ok(NormBoundReport {
        p,
        m: spec.m,
        s,
        a_const,
        measured_sq,
        bound,
        passed: measured_sq <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::white_noise_space;

    fn setup(nx: usize, nt: usize, k: usize, p: u32) -> (GridSpec, Arc<TruncationSet>) {
        (
            GridSpec::new(-8.0, 8.0, nx, 0.5, nt).unwrap(),
            Arc::new(TruncationSet::enumerate(k, p).unwrap()),
        )
    }

    fn spec_with(
        grid: GridSpec,
        t: Arc<TruncationSet>,
        force: ChaosField,
        initial: ChaosField,
        potential: ChaosField,
    ) -> ProblemSpec {
        ProblemSpec {
            op: OperatorSpec::laplacian(),
            grid,
            force,
            initial,
            potential,
            truncation: t,
            p_f: 1,
            p_g: 2,
            m: 2,
        }
    }

    #[test]
    fn p_u_values() {
        assert_eq!(p_u_formula(2, 1, 2, 0.0).unwrap(), 9);
        assert_eq!(p_u_formula(2, 0, 0, 10.0).unwrap(), 27);
        assert!(p_u_formula(1, 1, 1, 0.0).is_err());
        for s in [0.0, 0.7, 1.9, 2.349, 5.0] {
            let expect = 8f64.max(2.0 * (3.0 + s)).floor() as u32 + 1;
            assert_eq!(p_u_formula(2, 1, 2, s).unwrap(), expect);
        }
    }

    #[test]
    fn coupling_exponent_branches() {
        assert_eq!(coupling_exponent(0.5, 1.0), 0.0);
        assert!((coupling_exponent(2.0, 1.0) - 3.0).abs() < 1e-12);
        assert!(coupling_exponent(1.0 + 1e-9, 1.0) > 1.0);
    }

    #[test]
    fn coefficient_bound_special_cases() {
        let env = BoundEnvelope {
            m: 1.0,
            w: 0.0,
            q_inf: 0.5,
        };
        let mut a = BTreeMap::new();
        a.insert(MultiIndex::zero(), 2.0);
        a.insert(MultiIndex::unit(1), 3.0);
        a.insert(MultiIndex::from_entries(&[2]), 5.0);
        let t = 0.4;
        let mt = env.m_of_t(t);
        assert!(
            (coefficient_bound(&MultiIndex::zero(), t, &env, 1.3, &a) - mt * 2.0).abs() < 1e-14
        );
        assert!(
            (coefficient_bound(&MultiIndex::from_entries(&[2]), t, &env, 0.0, &a) - mt * 5.0).abs()
                < 1e-14
        );
        let r = env.mtilde_of_t(t) * 1.3;
        let expect = mt * (5.0 + r * (2.0 + 3.0) + r * r * 2.0);
        assert!(
            (coefficient_bound(&MultiIndex::from_entries(&[2]), t, &env, 1.3, &a) - expect).abs()
                < 1e-12
        );
    }

    #[test]
    fn norm_bound_domain_and_zero_data() {
        assert!(norm_bound_ocena(4, 2, 1.0, 1.0, 0.0, cp_limit).is_err());
        assert_eq!(
            norm_bound_ocena(9, 2, 1.0, 0.0, 0.0, cp_limit).unwrap(),
            0.0
        );
        let b9 = norm_bound_ocena(9, 2, 1.3, 2.0, 0.5, cp_limit).unwrap();
        let b12 = norm_bound_ocena(12, 2, 1.3, 2.0, 0.5, cp_limit).unwrap();
        assert!(b12 <= b9);
    }

    #[test]
    fn tilde_force_cases() {
        let (grid, t) = setup(41, 5, 2, 2);
        let one = GridFunction::from_fn_space(&grid, |_| 1.0);
        let force = ChaosField::zeros(grid, t.clone(), CoefficientNorm::SupTL2InX, true)
            .with(MultiIndex::zero(), one.clone())
            .unwrap();
        let q = ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false)
            .with(
                MultiIndex::unit(1),
                GridFunction::from_fn_space(&grid, |x| x),
            )
            .unwrap();
        let mut solved = BTreeMap::new();
        let f0 = tilde_force(&MultiIndex::zero(), &force, &q, &solved).unwrap();
        assert_eq!(f0.row(0), force.get(&MultiIndex::zero()).unwrap().row(0));
        let err = tilde_force(&MultiIndex::unit(1), &force, &q, &solved).unwrap_err();
        assert!(matches!(err, Error::Sequencing { .. }));
        solved.insert(
            MultiIndex::zero(),
            GridFunction::from_fn_space_time(&grid, |tt, _| tt),
        );
        let f1 = tilde_force(&MultiIndex::unit(1), &force, &q, &solved).unwrap();
        let xs = grid.xs();
        for n in 0..grid.nt {
            for (i, x) in xs.iter().enumerate() {
                assert!((f1.row(n)[i] + x * grid.t(n)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn white_noise_initial_data_evolves_by_heat_flow() {
        let (grid, t) = setup(161, 41, 3, 2);
        let g = white_noise_space(&grid, t.clone(), 3).unwrap();
        let zero_f = ChaosField::zeros(grid, t.clone(), CoefficientNorm::SupTL2InX, true);
        let zero_q = ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false);
        let spec = spec_with(grid, t.clone(), zero_f.clone(), g.clone(), zero_q.clone());
        let sol = propagate(&spec).unwrap();
        for gamma in t.members() {
            let u = sol.field.get(gamma);
            if gamma.order() == 1 {
                let expect = solve_parabolic(
                    &spec.op,
                    &GridFunction::zeros_space(grid.nx),
                    &GridFunction::zeros_space(grid.nx),
                    g.get(gamma).unwrap(),
                    &grid,
                )
                .unwrap();
                assert_eq!(u.unwrap(), &expect);
            } else {
                assert!(u.is_none(), "{gamma}");
            }
        }
        assert!(sol.ledger_passed());
    }

    #[test]
    fn constant_deterministic_potential_damps() {
        let (grid, t) = setup(161, 41, 2, 2);
        let c = 0.8;
        let g0 = GridFunction::from_fn_space(&grid, |x| (-x * x).exp());
        let initial = ChaosField::zeros(grid, t.clone(), CoefficientNorm::L2InX, false)
            .with(MultiIndex::zero(), g0.clone())
            .unwrap();
        let q = ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false)
            .with(
                MultiIndex::zero(),
                GridFunction::from_fn_space(&grid, |_| c),
            )
            .unwrap();
        let zero_f = ChaosField::zeros(grid, t.clone(), CoefficientNorm::SupTL2InX, true);
        let sol = propagate(&spec_with(grid, t, zero_f.clone(), initial, q)).unwrap();
        assert_eq!(sol.field.len(), 1);
        let z = GridFunction::zeros_space(grid.nx);
        let heat = solve_parabolic(&OperatorSpec::laplacian(), &z, &z, &g0, &grid).unwrap();
        let last = sol
            .field
            .get(&MultiIndex::zero())
            .unwrap()
            .row(grid.nt - 1)
            .to_owned();
        let expect = heat.row(grid.nt - 1).to_owned() * (-c * grid.t_final).exp();
        assert!(grid.l2_norm((&last - &expect).view()) < 1e-4);
    }

    #[test]
    fn zero_data_gives_zero_solution_and_bound() {
        let (grid, t) = setup(41, 5, 2, 2);
        let zf = ChaosField::zeros(grid, t.clone(), CoefficientNorm::SupTL2InX, true);
        let zg = ChaosField::zeros(grid, t.clone(), CoefficientNorm::L2InX, false);
        let q = ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false)
            .with(
                MultiIndex::unit(1),
                GridFunction::from_fn_space(&grid, |x| (-x * x).exp()),
            )
            .unwrap();
        let sol = propagate(&spec_with(grid, t, zf, zg, q)).unwrap();
        assert!(sol.field.is_empty());
        let nb = sol.norm_bound.unwrap();
        assert_eq!((nb.bound, nb.measured_sq), (0.0, 0.0));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (grid, t) = setup(41, 5, 2, 2);
        let (_, t2) = setup(41, 5, 3, 2);
        let zf = ChaosField::zeros(grid, t.clone(), CoefficientNorm::SupTL2InX, true);
        let zg = ChaosField::zeros(grid, t2, CoefficientNorm::L2InX, false);
        let zq = ChaosField::zeros(grid, t.clone(), CoefficientNorm::LinfInX, false);
        assert!(propagate(&spec_with(grid, t, zf, zg, zq)).is_err());
    }
}
