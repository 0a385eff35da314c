//! Point-atom potentials `Q = Σ_γ q_γ H_γ` with `q_γ ∈ H^{-s}`, their
//! mollification `Q_ε = Q ∗ φ_ε`, Fourier-side `H^{-s}` norms and
//! moderateness fits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::chaos::{ChaosField, CoefficientNorm};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::multiindex::{MultiIndex, TruncationSet};
use crate::quadrature::GaussLegendre;

/// `weight · δ^{(order)}(x - location)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
    pub order: u32,
}

impl Atom {
    pub fn delta(location: f64) -> Self {
        Atom {
            location,
            weight: 1.0,
            order: 0,
        }
    }
}

/// Chaos-indexed atom collections of Sobolev order `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularPotential {
    s: f64,
    atoms: BTreeMap<MultiIndex, Vec<Atom>>,
}

impl SingularPotential {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain(format!(
                "Sobolev order s = {s} must be positive"
            )));
        }
        Ok(SingularPotential {
            s,
            atoms: BTreeMap::new(),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn add_atom(&mut self, gamma: MultiIndex, atom: Atom) -> Result<()> {
        if !(atom.location.is_finite() && atom.weight.is_finite()) {
            return Err(Error::Validation(format!(
                "atom at {gamma} has non-finite data"
            )));
        }
        if f64::from(atom.order) > self.s.floor() {
            return Err(Error::Validation(format!(
                "derivative order {} at {gamma} exceeds floor(s) = {}",
                atom.order,
                self.s.floor()
            )));
        }
        self.atoms.entry(gamma).or_default().push(atom);
        Ok(())
    }

    pub fn with_atom(mut self, gamma: MultiIndex, atom: Atom) -> Result<Self> {
        self.add_atom(gamma, atom)?;
        Ok(self)
    }

    pub fn atoms(&self) -> &BTreeMap<MultiIndex, Vec<Atom>> {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.values().all(Vec::is_empty)
    }

    /// Every location strictly inside the window and every index in the
    /// truncation.
    pub fn validate(&self, grid: &GridSpec, truncation: &TruncationSet) -> Result<()> {
        for (gamma, atoms) in &self.atoms {
            if !truncation.contains(gamma) {
                return Err(Error::Validation(format!(
                    "potential index {gamma} lies outside the truncation"
                )));
            }
            for a in atoms {
                if !grid.is_interior(a.location) {
                    return Err(Error::Validation(format!(
                        "atom location {} at {gamma} is outside ({}, {})",
                        a.location, grid.x_min, grid.x_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// `‖q_γ‖_{H^{-s}}` for every stored index.
    pub fn hminus_norms(&self) -> Result<BTreeMap<MultiIndex, f64>> {
        self.atoms
            .iter()
            .map(|(g, a)| Ok((g.clone(), hminus_norm_atoms(a, self.s)?)))
            .collect()
    }

    /// `q = sup_γ ‖q_γ‖_{H^{-s}}`.
    pub fn q_sup(&self) -> Result<f64> {
        Ok(self.hminus_norms()?.values().copied().fold(0.0, f64::max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Width `ε`.
    Standard,
    /// Width `λ_ε = 1 / log(1/ε)`.
    Log,
}

/// Normalised bump `φ(x) = e^{1/(x²-1)} / Z` on `(-1, 1)` with a scaling law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub scaling: Scaling,
}

impl MollifierSpec {
    pub fn standard() -> Self {
        MollifierSpec {
            scaling: Scaling::Standard,
        }
    }

    pub fn log() -> Self {
        MollifierSpec {
            scaling: Scaling::Log,
        }
    }

    pub fn width(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain(format!("eps = {eps} outside (0, 1]")));
        }
        match self.scaling {
            Scaling::Standard => Ok(eps),
            Scaling::Log if eps < 1.0 => Ok(1.0 / (1.0 / eps).ln()),
            Scaling::Log => Err(Error::Domain("log scaling needs eps < 1".into())),
        }
    }

    /// Width at least two grid spacings.
    pub fn resolvable(&self, eps: f64, grid: &GridSpec) -> Result<bool> {
        Ok(self.width(eps)? >= 2.0 * grid.dx())
    }
}

/// `Z = ∫_{-1}^{1} e^{1/(x²-1)} dx`.
pub fn bump_normalizer() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| {
        let n = 4000;
        let h = 2.0 / n as f64;
        (1..n).map(|i| raw_bump(-1.0 + i as f64 * h)).sum::<f64>() * h
    })
}

fn raw_bump(x: f64) -> f64 {
    let d = x * x - 1.0;
    if d >= 0.0 {
        0.0
    } else {
        (1.0 / d).exp()
    }
}

/// `k`-th derivative of the normalised bump, `φ^{(k)} = P_k(x) e^{1/(x²-1)} / ((x²-1)^{2k} Z)`.
#[derive(Clone, Debug)]
pub struct BumpDerivative {
    k: u32,
    poly: Vec<f64>,
}

impl BumpDerivative {
    pub fn new(k: u32) -> Self {
        // P_{k+1} = P_k' (x²-1)² - 2x P_k - 4k x (x²-1) P_k
        let mut poly = vec![1.0];
        for j in 0..k {
            let deriv: Vec<f64> = poly
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect();
            let mut next = vec![0.0; poly.len() + 3];
            for (i, c) in deriv.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= 2.0 * c;
                next[i + 4] += c;
            }
            let jf = f64::from(j);
            for (i, c) in poly.iter().enumerate() {
                next[i + 1] += (-2.0 + 4.0 * jf) * c;
                next[i + 3] -= 4.0 * jf * c;
            }
            while next.len() > 1 && next.last() == Some(&0.0) {
                next.pop();
            }
            poly = next;
        }
        BumpDerivative { k, poly }
    }

    pub fn order(&self) -> u32 {
        self.k
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = x * x - 1.0;
        if d >= 0.0 {
            return 0.0;
        }
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let log_mag = 1.0 / d - 2.0 * f64::from(self.k) * (-d).ln();
        p * log_mag.exp() / bump_normalizer()
    }

    /// `(d/dx)^k [φ(x/w)/w]`.
    pub fn eval_scaled(&self, x: f64, width: f64) -> f64 {
        self.eval(x / width) / width.powi(self.k as i32 + 1)
    }
}

/// `φ(x)`.
pub fn bump(x: f64) -> f64 {
    raw_bump(x) / bump_normalizer()
}

/// Nodal values of `φ_ε(x - center)`.
pub fn mollifier_values(
    spec: &MollifierSpec,
    eps: f64,
    grid: &GridSpec,
    center: f64,
) -> Result<GridFunction> {
    let w = spec.width(eps)?;
    Ok(GridFunction::from_fn_space(grid, |x| {
        bump((x - center) / w) / w
    }))
}

/// `Q_ε = Σ_γ (q_γ ∗ φ_ε) H_γ`, with `δ^{(k)}(· - x₀) ∗ φ_ε = φ_ε^{(k)}(· - x₀)`
/// evaluated in closed form. Coefficients carry the `L∞` norm.
pub fn regularize_potential(
    q: &SingularPotential,
    spec: &MollifierSpec,
    eps: f64,
    grid: &GridSpec,
    truncation: Arc<TruncationSet>,
) -> Result<ChaosField> {
    let w = spec.width(eps)?;
    q.validate(grid, &truncation)?;
    let max_order = q
        .atoms
        .values()
        .flatten()
        .map(|a| a.order)
        .max()
        .unwrap_or(0);
    let derivs: Vec<BumpDerivative> = (0..=max_order).map(BumpDerivative::new).collect();
    let xs = grid.xs();
    let mut field = ChaosField::zeros(*grid, truncation, CoefficientNorm::LinfInX, false);
    for (gamma, atoms) in &q.atoms {
        if atoms.is_empty() {
            continue;
        }
        let mut values = vec![0.0; grid.nx];
        for a in atoms {
            let d = &derivs[a.order as usize];
            for (v, &x) in values.iter_mut().zip(&xs) {
                *v += a.weight * d.eval_scaled(x - a.location, w);
            }
        }
        field.insert(gamma.clone(), GridFunction::space(values))?;
    }
    Ok(field)
}

/// Relative target for the truncated oscillatory tail in [`hminus_norm_atoms`].
const HMINUS_TAIL_TOL: f64 = 1e-11;
const HMINUS_XI_CAP: f64 = 1e6;

/// `‖Σ w_j δ^{(k_j)}(· - x_j)‖_{H^{-s}}`, i.e.
/// `((1/2π) ∫ |Σ w_j (iξ)^{k_j} e^{-iξx_j}|² (1+ξ²)^{-s} dξ)^{1/2}`.
///
/// Same-location products integrate in closed form through the beta
/// function. Cross terms `2 w_j w_l ∫_0^∞ ξ^n cos(ξd - c)(1+ξ²)^{-s} dξ`
/// are integrated by composite Gauss–Legendre up to a cutoff `Ξ`, with the
/// two-term integration-by-parts tail added back.
pub fn hminus_norm_atoms(atoms: &[Atom], s: f64) -> Result<f64> {
    if let Some(a) = atoms.iter().find(|a| s <= f64::from(a.order) + 0.5) {
        return Err(Error::Domain(format!(
            "s = {s} does not exceed order {} + 1/2; the integral diverges",
            a.order
        )));
    }
    let rule = GaussLegendre::new(10);
    let mut total = 0.0;
    for (j, aj) in atoms.iter().enumerate() {
        for (l, al) in atoms.iter().enumerate().skip(j) {
            let n = aj.order + al.order;
            let c = (f64::from(aj.order) - f64::from(al.order)) * 0.5 * PI;
            let d = aj.location - al.location;
            let mult = if j == l { 1.0 } else { 2.0 };
            let integral = if d.abs() < 1e-12 {
                c.cos() * power_moment(n, s)
            } else {
                oscillatory_moment(n, s, d, c, &rule)
            };
            total += mult * aj.weight * al.weight * integral;
        }
    }
    Ok((total / PI).max(0.0).sqrt())
}

/// `∫_0^∞ ξ^n (1+ξ²)^{-s} dξ = B((n+1)/2, s-(n+1)/2) / 2`.
fn power_moment(n: u32, s: f64) -> f64 {
    let a = (f64::from(n) + 1.0) / 2.0;
    let b = s - a;
    0.5 * (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(s)).exp()
}

/// `∫_0^∞ ξ^n cos(ξd - c) (1+ξ²)^{-s} dξ`.
fn oscillatory_moment(n: u32, s: f64, d: f64, c: f64, rule: &GaussLegendre) -> f64 {
    let nf = f64::from(n);
    let amp = |x: f64| x.powi(n as i32) * (1.0 + x * x).powf(-s);
    let amp_d = |x: f64| amp(x) * (nf / x - 2.0 * s * x / (1.0 + x * x));
    let ad = d.abs();
    // past the turning point of the amplitude, the remainder after two
    // integrations by parts is bounded by 2|A'(Ξ)|/d².
    let turn = if 2.0 * s > nf {
        (nf / (2.0 * s - nf)).sqrt()
    } else {
        1.0
    };
    let scale = power_moment(n, s).max(1e-300);
    let mut xi = (turn * 2.0).max(8.0);
    while xi < HMINUS_XI_CAP && 2.0 * amp_d(xi).abs() / (ad * ad) > HMINUS_TAIL_TOL * scale {
        xi *= 1.5;
    }
    let xi = xi.min(HMINUS_XI_CAP);
    let h = 0.5f64.min(PI / ad);
    let panels = (xi / h).ceil() as usize;
    let body = rule.integrate_composite(0.0, xi, panels, |x| amp(x) * (x * d - c).cos());
    let phase = xi * d - c;
    let tail = -amp(xi) * phase.sin() / d - amp_d(xi) * phase.cos() / (d * d);
    body + tail
}

/// `C_φ = max_{α <= s} ‖φ^{(α)}‖_{L²}`.
pub fn mollifier_sobolev_constant(s: f64) -> f64 {
    let n = 20000;
    let h = 2.0 / n as f64;
    (0..=s.floor() as u32)
        .map(|k| {
            let d = BumpDerivative::new(k);
            ((1..n)
                .map(|i| d.eval(-1.0 + i as f64 * h).powi(2))
                .sum::<f64>()
                * h)
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `C_φ ⌈s⌉^{1/2} ε^{-(s+1/2)} ‖q_γ‖_{H^{-s}}` for one coefficient.
pub fn mollified_coefficient_bound(atoms: &[Atom], s: f64, eps: f64) -> Result<f64> {
    let norm = hminus_norm_atoms(atoms, s)?;
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(mollifier_sobolev_constant(s) * s.ceil().sqrt() * eps.powf(-(s + 0.5)) * norm)
}

/// Sup over `γ` of the `L∞` envelope of `q_γ ∗ φ_ε` for standard scaling.
pub fn linf_bound_star1(q: &SingularPotential, spec: &MollifierSpec, eps: f64) -> Result<f64> {
    if spec.scaling != Scaling::Standard {
        return Err(Error::Domain(
            "the L∞ envelope applies to standard scaling only".into(),
        ));
    }
    spec.width(eps)?;
    let mut sup = 0.0f64;
    for atoms in q.atoms.values() {
        sup = sup.max(mollified_coefficient_bound(atoms, q.s, eps)?);
    }
    Ok(sup)
}

/// Least-squares line `y = intercept + slope·x` with its `r²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn line_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Validation(
            "line fit needs at least two paired points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation(
            "line fit needs distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    Ok(LineFit {
        slope,
        intercept,
        r2: r_squared(ss_res, ss_tot),
    })
}

fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot <= 1e-30 * (1.0 + ss_res) {
        if ss_res <= 1e-24 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Minimum `r²` for a fit to count as valid.
pub const MODERATION_R2_MIN: f64 = 0.98;

/// Largest root-mean-square log residual of a power fit that still counts
/// as a close fit when `r²` is uninformative (nearly flat norms).
pub const MODERATION_RMS_MAX: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Moderate,
    Inconclusive,
}

/// Fit of `norm ≈ C ε^{-N}` over an ε grid, plus the competing
/// `norm ≈ C_log log(1/ε)` model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModerationReport {
    pub eps: Vec<f64>,
    pub norm: Vec<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub slope: f64,
    pub r2: f64,
    /// Root-mean-square residual of the power fit in log space.
    pub rms_residual: f64,
    pub c_log: f64,
    pub r2_log: f64,
    pub log_type_flag: bool,
    pub verdict: Verdict,
}

pub fn moderateness_fit(eps: &[f64], norms: &[f64]) -> Result<ModerationReport> {
    if eps.len() != norms.len() || eps.len() < 3 {
        return Err(Error::Validation(
            "moderateness fit needs at least three (eps, norm) pairs".into(),
        ));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Domain("moderateness fit needs eps in (0, 1)".into()));
    }
    if norms.iter().any(|&v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite norm in moderateness fit".into(),
        ));
    }
    if norms.iter().any(|&v| v <= 0.0) {
        return Ok(ModerationReport {
            eps: eps.to_vec(),
            norm: norms.to_vec(),
            c: 0.0,
            n: 0.0,
            slope: 0.0,
            r2: 1.0,
            rms_residual: 0.0,
            c_log: 0.0,
            r2_log: 1.0,
            log_type_flag: false,
            verdict: Verdict::Moderate,
        });
    }
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let fit = line_fit(&xs, &ys)?;
    let rms_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();

    let c_log = norms.iter().zip(&xs).map(|(v, x)| v * x).sum::<f64>()
        / xs.iter().map(|x| x * x).sum::<f64>();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let ss_res: f64 = norms
        .iter()
        .zip(&xs)
        .map(|(v, x)| (v - c_log * x).powi(2))
        .sum();
    let ss_tot: f64 = norms.iter().map(|v| (v - mean).powi(2)).sum();
    let r2_log = r_squared(ss_res, ss_tot);
    let log_type_flag = r2_log >= MODERATION_R2_MIN && r2_log > fit.r2;

    let verdict = if fit.slope.is_finite()
        && (fit.r2 >= MODERATION_R2_MIN || rms_residual <= MODERATION_RMS_MAX || log_type_flag)
    {
        Verdict::Moderate
    } else {
        Verdict::Inconclusive
    };
    Ok(ModerationReport {
        eps: eps.to_vec(),
        norm: norms.to_vec(),
        c: fit.intercept.exp(),
        n: fit.slope.max(0.0),
        slope: fit.slope,
        r2: fit.r2,
        rms_residual,
        c_log,
        r2_log,
        log_type_flag,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fine_grid() -> GridSpec {
        GridSpec::new(-2.0, 2.0, 4001, 1.0, 2).unwrap()
    }

    #[test]
    fn normaliser_value() {
        assert!((bump_normalizer() - 0.443_993_816).abs() < 1e-8);
        assert!((bump(0.0) - (-1.0f64).exp() / bump_normalizer()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for k in 0..4u32 {
            let d = BumpDerivative::new(k);
            let d1 = BumpDerivative::new(k + 1);
            for &x in &[-0.8, -0.3, 0.0, 0.45, 0.9] {
                let fd = (d.eval(x + h) - d.eval(x - h)) / (2.0 * h);
                assert!(
                    (fd - d1.eval(x)).abs() < 1e-5 * (1.0 + fd.abs()),
                    "k={k} x={x}"
                );
            }
        }
        assert_eq!(BumpDerivative::new(3).eval(1.0), 0.0);
        assert!(BumpDerivative::new(2).eval(0.9999).is_finite());
    }

    #[test]
    fn mollifier_has_unit_mass_and_scaled_peak() {
        let grid = fine_grid();
        for &eps in &[0.4, 0.2, 0.1, 0.05, 0.025] {
            let v = mollifier_values(&MollifierSpec::standard(), eps, &grid, 0.1).unwrap();
            assert!((grid.integrate(v.row(0)) - 1.0).abs() < 1e-6, "eps={eps}");
            assert!((v.linf() - bump(0.0) / eps).abs() < 1e-3 / eps);
        }
        assert!(mollifier_values(&MollifierSpec::standard(), 0.0, &grid, 0.0).is_err());
        assert!(mollifier_values(&MollifierSpec::standard(), 1.5, &grid, 0.0).is_err());
        assert!(MollifierSpec::log().width(1.0).is_err());
    }

    #[test]
    fn log_scaling_peak_grows_like_log() {
        let grid = fine_grid();
        for &eps in &[0.2, 0.1, 0.01] {
            let v = mollifier_values(&MollifierSpec::log(), eps, &grid, 0.0).unwrap();
            let expect = bump(0.0) * (1.0f64 / eps).ln();
            assert!((v.linf() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn hminus_closed_forms() {
        let d = hminus_norm_atoms(&[Atom::delta(0.3)], 1.0).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-10);
        let dp = hminus_norm_atoms(
            &[Atom {
                location: 0.0,
                weight: 1.0,
                order: 1,
            }],
            2.0,
        )
        .unwrap();
        assert!((dp - 0.5).abs() < 1e-10);
        for &(a, b) in &[(0.0, 0.5), (-1.0, 2.0), (0.1, 0.11)] {
            let two = hminus_norm_atoms(&[Atom::delta(a), Atom::delta(b)], 1.0).unwrap();
            let exact = (1.0 + (-f64::abs(a - b)).exp()).sqrt();
            assert!((two - exact).abs() < 1e-6, "a={a} b={b}: {two} vs {exact}");
        }
        assert!(hminus_norm_atoms(&[Atom::delta(0.0)], 0.5).is_err());
        assert_eq!(hminus_norm_atoms(&[], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn regularized_delta_is_shifted_bump() {
        let grid = fine_grid();
        let t = Arc::new(TruncationSet::enumerate(1, 1).unwrap());
        let q = SingularPotential::new(1.0)
            .unwrap()
            .with_atom(MultiIndex::zero(), Atom::delta(0.25))
            .unwrap();
        let f = regularize_potential(&q, &MollifierSpec::standard(), 0.1, &grid, t).unwrap();
        let direct = mollifier_values(&MollifierSpec::standard(), 0.1, &grid, 0.25).unwrap();
        assert_eq!(f.get(&MultiIndex::zero()).unwrap(), &direct);
        assert!(f.get(&MultiIndex::unit(1)).is_none());
    }

    #[test]
    fn pairing_converges_to_point_evaluation() {
        let grid = fine_grid();
        let t = Arc::new(TruncationSet::enumerate(1, 1).unwrap());
        let psi = |x: f64| (2.0 * x).sin() + x * x;
        let dpsi = |x: f64| 2.0 * (2.0 * x).cos() + 2.0 * x;
        let x0 = 0.3;
        let q = SingularPotential::new(2.0)
            .unwrap()
            .with_atom(MultiIndex::zero(), Atom::delta(x0))
            .unwrap()
            .with_atom(
                MultiIndex::unit(1),
                Atom {
                    location: x0,
                    weight: 1.0,
                    order: 1,
                },
            )
            .unwrap();
        let psi_nodes = GridFunction::from_fn_space(&grid, psi);
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for &eps in &[0.4, 0.2, 0.1] {
            let f = regularize_potential(&q, &MollifierSpec::standard(), eps, &grid, t.clone())
                .unwrap();
            let p0 = grid.integrate(
                (&f.get(&MultiIndex::zero()).unwrap().row(0) * &psi_nodes.row(0)).view(),
            );
            let p1 = grid.integrate(
                (&f.get(&MultiIndex::unit(1)).unwrap().row(0) * &psi_nodes.row(0)).view(),
            );
            let e0 = (p0 - psi(x0)).abs();
            // ⟨δ', ψ⟩ = -ψ'(x₀)
            let e1 = (p1 + dpsi(x0)).abs();
            assert!(e0 < prev.0 && e1 < prev.1, "eps={eps}: {e0} {e1}");
            prev = (e0, e1);
        }
        assert!(prev.0 < 0.02 && prev.1 < 0.05);
    }

    #[test]
    fn regularization_is_linear_in_atoms() {
        let grid = fine_grid();
        let t = Arc::new(TruncationSet::enumerate(2, 1).unwrap());
        let a = Atom {
            location: -0.2,
            weight: 1.5,
            order: 0,
        };
        let b = Atom {
            location: 0.4,
            weight: -0.7,
            order: 1,
        };
        let spec = MollifierSpec::standard();
        let g = MultiIndex::unit(2);
        let both = SingularPotential::new(1.5)
            .unwrap()
            .with_atom(g.clone(), a)
            .unwrap()
            .with_atom(g.clone(), b)
            .unwrap();
        let only_a = SingularPotential::new(1.5)
            .unwrap()
            .with_atom(g.clone(), a)
            .unwrap();
        let only_b = SingularPotential::new(1.5)
            .unwrap()
            .with_atom(g.clone(), b)
            .unwrap();
        let fb = regularize_potential(&both, &spec, 0.2, &grid, t.clone()).unwrap();
        let fa = regularize_potential(&only_a, &spec, 0.2, &grid, t.clone()).unwrap();
        let fo = regularize_potential(&only_b, &spec, 0.2, &grid, t).unwrap();
        let sum = fa.get(&g).unwrap().sum(fo.get(&g).unwrap()).unwrap();
        let diff = fb.get(&g).unwrap().difference(&sum).unwrap();
        assert!(diff.linf() < 1e-12);
    }

    #[test]
    fn invalid_potentials_are_rejected() {
        let mut q = SingularPotential::new(1.0).unwrap();
        assert!(q
            .add_atom(
                MultiIndex::zero(),
                Atom {
                    location: 0.0,
                    weight: 1.0,
                    order: 2
                }
            )
            .is_err());
        let grid = fine_grid();
        let t = Arc::new(TruncationSet::enumerate(1, 1).unwrap());
        q.add_atom(MultiIndex::zero(), Atom::delta(5.0)).unwrap();
        assert!(
            regularize_potential(&q, &MollifierSpec::standard(), 0.1, &grid, t.clone()).is_err()
        );
        let q2 = SingularPotential::new(1.0)
            .unwrap()
            .with_atom(MultiIndex::unit(3), Atom::delta(0.0))
            .unwrap();
        assert!(regularize_potential(&q2, &MollifierSpec::standard(), 0.1, &grid, t).is_err());
    }

    #[test]
    fn zero_potential_regularizes_to_zero() {
        let grid = fine_grid();
        let t = Arc::new(TruncationSet::enumerate(2, 2).unwrap());
        let q = SingularPotential::new(1.0).unwrap();
        for &eps in &[0.4, 0.05] {
            let f = regularize_potential(&q, &MollifierSpec::log(), eps, &grid, t.clone()).unwrap();
            assert!(f.is_empty());
        }
        assert_eq!(
            linf_bound_star1(&q, &MollifierSpec::standard(), 0.1).unwrap(),
            0.0
        );
    }

    #[test]
    fn mollified_envelope_holds_and_scales() {
        let grid = fine_grid();
        let t = Arc::new(TruncationSet::enumerate(1, 1).unwrap());
        let q = SingularPotential::new(1.0)
            .unwrap()
            .with_atom(MultiIndex::zero(), Atom::delta(0.0))
            .unwrap();
        let spec = MollifierSpec::standard();
        for &eps in &[0.4, 0.2, 0.1, 0.05] {
            let f = regularize_potential(&q, &spec, eps, &grid, t.clone()).unwrap();
            let bound = linf_bound_star1(&q, &spec, eps).unwrap();
            assert!(f.sup_coefficient_norm() <= bound);
        }
        let r =
            linf_bound_star1(&q, &spec, 0.05).unwrap() / linf_bound_star1(&q, &spec, 0.1).unwrap();
        assert!((r - 2f64.powf(1.5)).abs() < 1e-12);
        assert!(linf_bound_star1(&q, &MollifierSpec::log(), 0.1).is_err());
    }

    #[test]
    fn moderation_fit_recovers_power_law() {
        let eps = [0.4, 0.2, 0.1, 0.05, 0.025];
        let norms: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powi(-2)).collect();
        let r = moderateness_fit(&eps, &norms).unwrap();
        assert!((r.c - 3.0).abs() < 1e-10 && (r.n - 2.0).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Moderate);

        let flat = moderateness_fit(&eps, &[2.0; 5]).unwrap();
        assert!(flat.n.abs() < 1e-12 && (flat.c - 2.0).abs() < 1e-12);
        assert_eq!(flat.verdict, Verdict::Moderate);

        let scattered = moderateness_fit(&eps, &[1.0, 3.0, 1.0, 3.0, 1.0]).unwrap();
        assert_eq!(scattered.verdict, Verdict::Inconclusive);

        let zero = moderateness_fit(&eps, &[0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!((zero.c, zero.n), (0.0, 0.0));

        let logs: Vec<f64> = eps.iter().map(|e: &f64| 1.7 * (1.0 / e).ln()).collect();
        let lr = moderateness_fit(&eps, &logs).unwrap();
        assert!(lr.log_type_flag && (lr.c_log - 1.7).abs() < 1e-12);

        assert!(moderateness_fit(&eps[..2], &norms[..2]).is_err());
        let json = serde_json::to_value(&r).unwrap();
        for key in ["eps", "norm", "C", "N", "r2", "log_type_flag", "verdict"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
