#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use chaosvws_core::chaos::{ChaosField, CoefficientNorm};
use chaosvws_core::grid::{GridFunction, GridSpec};
use chaosvws_core::multiindex::{MultiIndex, TruncationSet};
use chaosvws_core::pde::OperatorSpec;
use chaosvws_core::propagator::ProblemSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Heat solution from the Gaussian `e^{-x²/(2σ²)}` at time `t`.
pub fn gaussian_heat(t: f64, x: f64, sigma2: f64) -> f64 {
    let s = sigma2 + 2.0 * t;
    (sigma2 / s).sqrt() * (-x * x / (2.0 * s)).exp()
}

/// Smooth random bump `a e^{-(x-c)²/w}`.
pub fn random_bump(r: &mut ChaCha8Rng) -> (f64, f64, f64) {
    (
        r.random_range(-1.0..1.0),
        r.random_range(-1.5..1.5),
        r.random_range(0.3..1.5),
    )
}

pub fn bump_fn((a, c, w): (f64, f64, f64)) -> impl Fn(f64) -> f64 {
    move |x| a * (-(x - c) * (x - c) / w).exp()
}

/// Random spatial field with every member of `t` populated.
pub fn random_space_field(
    r: &mut ChaCha8Rng,
    grid: &GridSpec,
    t: &Arc<TruncationSet>,
    norm: CoefficientNorm,
) -> ChaosField {
    let mut f = ChaosField::zeros(*grid, t.clone(), norm, false);
    for g in t.members() {
        let b = random_bump(r);
        f.insert(g.clone(), GridFunction::from_fn_space(grid, bump_fn(b)))
            .unwrap();
    }
    f
}

/// Problem with random smooth data and a random bounded potential on
/// every member of `t`.
pub fn random_problem(seed: u64, grid: GridSpec, t: Arc<TruncationSet>) -> ProblemSpec {
    let mut r = rng(seed);
    let initial = random_space_field(&mut r, &grid, &t, CoefficientNorm::L2InX);
    let potential = random_space_field(&mut r, &grid, &t, CoefficientNorm::LinfInX);
    let mut force = ChaosField::zeros(grid, t.clone(), CoefficientNorm::SupTL2InX, true);
    for g in t.members() {
        let b = random_bump(&mut r);
        let omega = r.random_range(0.0..3.0);
        let f = bump_fn(b);
        force
            .insert(
                g.clone(),
                GridFunction::from_fn_space_time(&grid, |t, x| (omega * t).cos() * f(x)),
            )
            .unwrap();
    }
    ProblemSpec {
        op: OperatorSpec::laplacian(),
        grid,
        force,
        initial,
        potential,
        truncation: t,
        p_f: 1,
        p_g: 1,
        m: 2,
    }
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(row);
                for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * y;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// All coefficients of all time levels as one linear system: the
/// Crank–Nicolson equations of every `γ`, coupled through
/// `q_α u_β` (α ≠ 0, α + β = γ) at both ends of each step.
pub fn monolithic_solve(spec: &ProblemSpec) -> BTreeMap<MultiIndex, GridFunction> {
    let grid = spec.grid;
    let (nx, nt) = (grid.nx, grid.nt);
    let m = nx - 2;
    let members = spec.truncation.members().to_vec();
    let per = (nt - 1) * m;
    let n = members.len() * per;
    let idx = |g: usize, level: usize, i: usize| g * per + (level - 1) * m + (i - 1);
    let pos = |g: &MultiIndex| members.iter().position(|x| x == g);

    let dt = grid.dt();
    let r = dt / (grid.dx() * grid.dx());
    let q = |g: &MultiIndex| spec.potential.coefficient_or_zero(g).row(0).to_vec();
    let q0 = q(&MultiIndex::zero());
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];

    for (gi, gamma) in members.iter().enumerate() {
        let f = spec.force.coefficient_or_zero(gamma);
        let g0 = spec.initial.coefficient_or_zero(gamma);
        let couplings: Vec<(usize, Vec<f64>)> = gamma
            .decompositions()
            .into_iter()
            .filter(|(alpha, _)| !alpha.is_zero())
            .map(|(alpha, beta)| (pos(&beta).unwrap(), q(&alpha)))
            .collect();
        let initial_of =
            |bi: usize, i: usize| spec.initial.coefficient_or_zero(&members[bi]).row(0)[i];
        for level in 0..nt - 1 {
            for i in 1..=m {
                let row = idx(gi, level + 1, i);
                // new level
                a[row][idx(gi, level + 1, i)] += 1.0 + r + 0.5 * dt * q0[i];
                if i > 1 {
                    a[row][idx(gi, level + 1, i - 1)] -= 0.5 * r;
                }
                if i < m {
                    a[row][idx(gi, level + 1, i + 1)] -= 0.5 * r;
                }
                for (bi, qa) in &couplings {
                    a[row][idx(*bi, level + 1, i)] += 0.5 * dt * qa[i];
                }
                // old level
                b[row] += 0.5 * dt * (f.at_level(level)[i] + f.at_level(level + 1)[i]);
                if level == 0 {
                    b[row] += (1.0 - r - 0.5 * dt * q0[i]) * g0.row(0)[i]
                        + 0.5 * r * (g0.row(0)[i - 1] + g0.row(0)[i + 1]);
                    for (bi, qa) in &couplings {
                        b[row] -= 0.5 * dt * qa[i] * initial_of(*bi, i);
                    }
                } else {
                    a[row][idx(gi, level, i)] -= 1.0 - r - 0.5 * dt * q0[i];
                    if i > 1 {
                        a[row][idx(gi, level, i - 1)] -= 0.5 * r;
                    }
                    if i < m {
                        a[row][idx(gi, level, i + 1)] -= 0.5 * r;
                    }
                    for (bi, qa) in &couplings {
                        a[row][idx(*bi, level, i)] += 0.5 * dt * qa[i];
                    }
                }
            }
        }
    }
    let x = dense_solve(a, b);
    let mut out = BTreeMap::new();
    for (gi, gamma) in members.iter().enumerate() {
        let mut u = GridFunction::zeros_space_time(nt, nx);
        u.row_mut(0)
            .assign(&spec.initial.coefficient_or_zero(gamma).row(0));
        for level in 1..nt {
            for i in 1..=m {
                u.values_mut()[[level, i]] = x[idx(gi, level, i)];
            }
        }
        out.insert(gamma.clone(), u);
    }
    out
}

/// Truncation `{0, e_1, 2e_1}` of the tiny oracle instance.
pub fn tiny_truncation() -> Arc<TruncationSet> {
    Arc::new(
        TruncationSet::from_indices([
            MultiIndex::zero(),
            MultiIndex::unit(1),
            MultiIndex::from_entries(&[2]),
        ])
        .unwrap(),
    )
}

pub fn max_abs_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
