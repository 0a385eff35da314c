//! The worked example: `F = f + g W_t`, `G = W_x`,
//! `Q = δ(x - x₀) + Σ_k δ(x - x_{e_k}) H_{e_k}`.

use std::sync::Arc;

use serde::Serialize;

use crate::chaos::{white_noise_space, white_noise_time, ChaosField, CoefficientNorm};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::multiindex::{MultiIndex, TruncationSet};
use crate::regularize::{hminus_norm_atoms, Atom, SingularPotential};

/// Declared value of `sup_γ ‖δ(· - x_γ)‖_{H^{-1}}` in the worked example.
pub const DECLARED_Q_VALUE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Section6Preset {
    /// Width of the Gaussian force `f(t, x) = e^{-x²/σ}`; `σ = 1` by default.
    pub f_sigma: f64,
    /// Width of the noise envelope `g(x) = e^{-x²/σ}`; `σ = 2` by default.
    pub g_sigma: f64,
    pub x0: f64,
    /// `x_{e_k} = offset + step · k`.
    pub step: f64,
    pub offset: f64,
    pub modes: usize,
    pub grid: GridSpec,
}

impl Default for Section6Preset {
    fn default() -> Self {
        Section6Preset {
            f_sigma: 1.0,
            g_sigma: 2.0,
            x0: 0.0,
            step: 0.1,
            offset: -0.25,
            modes: 4,
            grid: GridSpec {
                x_min: -10.0,
                x_max: 10.0,
                nx: 401,
                t_final: 0.5,
                nt: 201,
            },
        }
    }
}

impl Section6Preset {
    pub fn location(&self, k: usize) -> f64 {
        if k == 0 {
            self.x0
        } else {
            self.offset + self.step * k as f64
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        (-x * x / self.f_sigma).exp()
    }

    pub fn g(&self, x: f64) -> f64 {
        (-x * x / self.g_sigma).exp()
    }

    /// Unit deltas at `x₀` (index 𝟘) and `x_{e_k}` (index `e_k`).
    pub fn atoms(&self) -> Vec<(MultiIndex, Atom)> {
        (0..=self.modes)
            .map(|k| {
                let gamma = if k == 0 {
                    MultiIndex::zero()
                } else {
                    MultiIndex::unit(k)
                };
                (gamma, Atom::delta(self.location(k)))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Section6Problem {
    pub potential: SingularPotential,
    pub force: ChaosField,
    pub initial: ChaosField,
    pub p_f: u32,
    pub p_g: u32,
    pub q_ledger: QLedger,
}

/// `q = sup_γ ‖q_γ‖_{H^{-1}}` computed against the declared value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QLedger {
    pub computed: f64,
    pub declared_value: f64,
}

pub fn build_section6_problem(
    preset: &Section6Preset,
    grid: &GridSpec,
    truncation: Arc<TruncationSet>,
) -> Result<Section6Problem> {
    if preset.modes == 0 || preset.modes > truncation.max_vars() {
        return Err(Error::Validation(format!(
            "{} noise modes exceed the truncation's K = {}",
            preset.modes,
            truncation.max_vars()
        )));
    }
    let mut potential = SingularPotential::new(1.0)?;
    for (gamma, atom) in preset.atoms() {
        if !grid.is_interior(atom.location) {
            return Err(Error::Validation(format!(
                "delta location {} for {gamma} lies outside the grid window",
                atom.location
            )));
        }
        potential.add_atom(gamma, atom)?;
    }
    potential.validate(grid, &truncation)?;

    let g = GridFunction::from_fn_space(grid, |x| preset.g(x));
    let mut force = white_noise_time(grid, truncation.clone(), preset.modes, &g)?;
    force.insert(
        MultiIndex::zero(),
        GridFunction::from_fn_space_time(grid, |_, x| preset.f(x)),
    )?;
    let initial = white_noise_space(grid, truncation, preset.modes)?;
    debug_assert_eq!(initial.norm_kind(), CoefficientNorm::L2InX);

    let computed = potential.hminus_norms()?.into_values().fold(0.0, f64::max);
    Ok(Section6Problem {
        potential,
        force,
        initial,
        p_f: 1,
        p_g: 2,
        q_ledger: QLedger {
            computed,
            declared_value: DECLARED_Q_VALUE,
        },
    })
}

/// `‖δ‖_{H^{-1}}`, the same for every location.
pub fn unit_delta_hminus1() -> Result<f64> {
    hminus_norm_atoms(&[Atom::delta(0.0)], 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::expectation;
    use crate::regularize::{regularize_potential, MollifierSpec};

    fn small() -> (Section6Preset, GridSpec, Arc<TruncationSet>) {
        let preset = Section6Preset::default();
        let grid = GridSpec::new(-4.0, 4.0, 161, 0.5, 21).unwrap();
        (
            preset,
            grid,
            Arc::new(TruncationSet::enumerate(4, 2).unwrap()),
        )
    }

    #[test]
    fn expectations_match_the_data() {
        let (preset, grid, t) = small();
        let prob = build_section6_problem(&preset, &grid, t.clone()).unwrap();
        let ef = expectation(&prob.force);
        assert!(ef.levels() == grid.nt);
        for (i, &x) in grid.xs().iter().enumerate() {
            assert_eq!(ef.values()[[grid.nt - 1, i]], (-x * x).exp());
        }
        assert!(expectation(&prob.initial).is_zero());
        let q =
            regularize_potential(&prob.potential, &MollifierSpec::log(), 0.1, &grid, t).unwrap();
        let w = MollifierSpec::log().width(0.1).unwrap();
        let q0 = q.get(&MultiIndex::zero()).unwrap();
        for (i, &x) in grid.xs().iter().enumerate() {
            let want = crate::regularize::bump(x / w) / w;
            assert!((q0.values()[[0, i]] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn q_ledger_records_both_values() {
        let (preset, grid, t) = small();
        let prob = build_section6_problem(&preset, &grid, t).unwrap();
        assert!((prob.q_ledger.computed - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(prob.q_ledger.declared_value, 1.0);
        assert_eq!((prob.p_f, prob.p_g), (1, 2));
    }

    #[test]
    fn locations_outside_window_fail() {
        let (mut preset, grid, t) = small();
        preset.x0 = 7.0;
        assert!(matches!(
            build_section6_problem(&preset, &grid, t),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn too_many_modes_fail() {
        let (mut preset, grid, _) = small();
        preset.modes = 5;
        let t = Arc::new(TruncationSet::enumerate(4, 2).unwrap());
        assert!(build_section6_problem(&preset, &grid, t).is_err());
    }
}
