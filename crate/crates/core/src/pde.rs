//! Deterministic parabolic problems `u_t = u_xx - q(x) u + f`, `u(0) = g`,
//! on a truncated window with homogeneous Dirichlet ends, and the
//! semigroup stability constants `M(t)`, `M̃(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::tridiag::TridiagonalFactor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Laplacian1d,
}

/// Generator `L` with semigroup bound `‖T_t‖ <= M e^{wt}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub m: f64,
    pub w: f64,
}

impl OperatorSpec {
    /// The Dirichlet Laplacian generates a contraction semigroup: `M = 1`, `w = 0`.
    pub fn laplacian() -> Self {
        OperatorSpec {
            kind: OperatorKind::Laplacian1d,
            m: 1.0,
            w: 0.0,
        }
    }
}

/// `M(t) = M exp((w + M q_inf) t)`.
pub fn stability_m(t: f64, m: f64, w: f64, q_inf: f64) -> f64 {
    m * ((w + m * q_inf) * t).exp()
}

/// `M̃(t) = ∫_0^t M(s) ds = (M(t) - M) / (w + M q_inf)`, with the limit
/// `M t` when the rate vanishes.
pub fn stability_mtilde(t: f64, m: f64, w: f64, q_inf: f64) -> f64 {
    let rate = w + m * q_inf;
    if rate.abs() < 1e-14 {
        m * t
    } else {
        m * (rate * t).exp_m1() / rate
    }
}

/// The pair `M(t)`, `M̃(t)` for fixed `M`, `w` and `‖q‖_{L∞}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEnvelope {
    pub m: f64,
    pub w: f64,
    pub q_inf: f64,
}

impl BoundEnvelope {
    pub fn new(op: &OperatorSpec, q_inf: f64) -> Self {
        BoundEnvelope {
            m: op.m,
            w: op.w,
            q_inf,
        }
    }

    pub fn m_of_t(&self, t: f64) -> f64 {
        stability_m(t, self.m, self.w, self.q_inf)
    }

    pub fn mtilde_of_t(&self, t: f64) -> f64 {
        stability_mtilde(t, self.m, self.w, self.q_inf)
    }
}

/// Crank–Nicolson solve of `u_t = u_xx - q u + f` with `u = 0` at both
/// window ends for `t > 0` and `u(0, ·) = g`.
///
/// `q` and `g` are spatial; `f` is spatial (constant in time) or carries
/// one row per time level. Returns all `nt` levels.
pub fn solve_parabolic(
    op: &OperatorSpec,
    q: &GridFunction,
    f: &GridFunction,
    g: &GridFunction,
    grid: &GridSpec,
) -> Result<GridFunction> {
    grid.validate()?;
    let OperatorKind::Laplacian1d = op.kind;
    let nx = grid.nx;
    for (name, data) in [("q", q), ("g", g)] {
        if data.nx() != nx || data.is_time_dependent() {
            return Err(Error::Shape(format!(
                "{name} must be a spatial function on {nx} nodes"
            )));
        }
    }
    if f.nx() != nx || (f.levels() != 1 && f.levels() != grid.nt) {
        return Err(Error::Shape(format!(
            "force has shape {}x{}, expected 1x{nx} or {}x{nx}",
            f.levels(),
            f.nx(),
            grid.nt
        )));
    }
    for (name, data) in [("q", q), ("f", f), ("g", g)] {
        if !data.all_finite() {
            return Err(Error::Validation(format!(
                "{name} contains non-finite values"
            )));
        }
    }

    let dt = grid.dt();
    let r = dt / (grid.dx() * grid.dx());
    let m = nx - 2;
    let qv = q.row(0);

    let lower = vec![-0.5 * r; m];
    let upper = vec![-0.5 * r; m];
    let diag: Vec<f64> = (1..=m).map(|i| 1.0 + r + 0.5 * dt * qv[i]).collect();
    let factor = TridiagonalFactor::new(&lower, &diag, &upper)?;

    let mut out = GridFunction::zeros_space_time(grid.nt, nx);
    out.row_mut(0).assign(&g.row(0));
    let mut rhs = vec![0.0; m];
    for n in 0..grid.nt - 1 {
        let prev = out.row(n).to_owned();
        let f_now = f.at_level(n);
        let f_next = f.at_level(n + 1);
        for (j, v) in rhs.iter_mut().enumerate() {
            let i = j + 1;
            *v = (1.0 - r - 0.5 * dt * qv[i]) * prev[i]
                + 0.5 * r * (prev[i - 1] + prev[i + 1])
                + 0.5 * dt * (f_now[i] + f_next[i]);
        }
        factor.solve_in_place(&mut rhs);
        let mut next = out.row_mut(n + 1);
        for (j, v) in rhs.iter().enumerate() {
            next[j + 1] = *v;
        }
    }
    Ok(out)
}

/// Per-level slack of `‖u(t)‖ <= M(t)(‖g‖ + ∫_0^t ‖f(s)‖ ds)`.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub slack: Vec<f64>,
    pub min_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare a solution against its stability envelope. The time integral is
/// the trapezoid rule on the solution's time grid; the tolerance is
/// `10 (Δt² + Δx²)` times the data scale `‖g‖ + T sup_t ‖f‖`.
pub fn verify_theorem1_bound(
    u: &GridFunction,
    f: &GridFunction,
    g: &GridFunction,
    grid: &GridSpec,
    envelope: &BoundEnvelope,
) -> StabilityReport {
    let dt = grid.dt();
    let g_norm = grid.l2_norm(g.row(0));
    let f_norms: Vec<f64> = (0..grid.nt).map(|n| grid.l2_norm(f.at_level(n))).collect();
    let mut integral = 0.0;
    let mut slack = Vec::with_capacity(grid.nt);
    for n in 0..grid.nt {
        if n > 0 {
            integral += 0.5 * dt * (f_norms[n - 1] + f_norms[n]);
        }
        let rhs = envelope.m_of_t(grid.t(n)) * (g_norm + integral);
        slack.push(rhs - grid.l2_norm(u.row(n)));
    }
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = g_norm + grid.t_final * f_norms.iter().copied().fold(0.0, f64::max);
    let tolerance = 10.0 * (dt * dt + grid.dx() * grid.dx()) * scale;
    StabilityReport {
        passed: min_slack >= -tolerance,
        slack,
        min_slack,
        tolerance,
    }
}
