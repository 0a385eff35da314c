//! Truncated chaos expansions `F = Σ_γ f_γ H_γ` with grid-function
//! coefficients: Kondratiev norms, Wick products, expectations, sampling of
//! realizations, white-noise constructors and CSV serialization.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::hermite::{fourier_hermite, hermite_function};
use crate::multiindex::{MultiIndex, TruncationSet};

/// Spatial norm applied to each coefficient. Time-dependent coefficients
/// always take the supremum over stored time levels first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientNorm {
    /// `‖·‖_{L²}` of time-independent data.
    L2InX,
    /// `sup_t ‖·(t)‖_{L²}`.
    SupTL2InX,
    /// `‖·‖_{L∞}`, used for potentials.
    LinfInX,
}

#[derive(Clone, Debug)]
pub struct ChaosField {
    grid: GridSpec,
    truncation: Arc<TruncationSet>,
    norm: CoefficientNorm,
    levels: usize,
    coeffs: BTreeMap<MultiIndex, GridFunction>,
}

impl ChaosField {
    /// Empty (identically zero) field. `time_dependent` fixes whether
    /// coefficients carry `nt` levels or a single spatial row.
    pub fn zeros(
        grid: GridSpec,
        truncation: Arc<TruncationSet>,
        norm: CoefficientNorm,
        time_dependent: bool,
    ) -> Self {
        let levels = if time_dependent { grid.nt } else { 1 };
        ChaosField {
            grid,
            truncation,
            norm,
            levels,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, gamma: MultiIndex, coeff: GridFunction) -> Result<()> {
        if !self.truncation.contains(&gamma) {
            return Err(Error::Validation(format!(
                "coefficient {gamma} lies outside the truncation"
            )));
        }
        let coeff = if coeff.levels() == 1 && self.levels > 1 {
            coeff.broadcast_levels(self.levels)
        } else {
            coeff
        };
        if coeff.levels() != self.levels || coeff.nx() != self.grid.nx {
            return Err(Error::Shape(format!(
                "coefficient {gamma} has shape {}x{}, field expects {}x{}",
                coeff.levels(),
                coeff.nx(),
                self.levels,
                self.grid.nx
            )));
        }
        if !coeff.all_finite() {
            return Err(Error::Validation(format!(
                "coefficient {gamma} has non-finite values"
            )));
        }
        self.coeffs.insert(gamma, coeff);
        Ok(())
    }

    pub fn with(mut self, gamma: MultiIndex, coeff: GridFunction) -> Result<Self> {
        self.insert(gamma, coeff)?;
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn truncation(&self) -> &Arc<TruncationSet> {
        &self.truncation
    }

    pub fn norm_kind(&self) -> CoefficientNorm {
        self.norm
    }

    pub fn is_time_dependent(&self) -> bool {
        self.levels > 1
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, gamma: &MultiIndex) -> Option<&GridFunction> {
        self.coeffs.get(gamma)
    }

    /// Stored coefficients in graded order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &GridFunction)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Zero-valued coefficient with this field's shape.
    pub fn zero_coefficient(&self) -> GridFunction {
        if self.levels > 1 {
            GridFunction::zeros_space_time(self.levels, self.grid.nx)
        } else {
            GridFunction::zeros_space(self.grid.nx)
        }
    }

    pub fn coefficient_or_zero(&self, gamma: &MultiIndex) -> GridFunction {
        self.coeffs
            .get(gamma)
            .cloned()
            .unwrap_or_else(|| self.zero_coefficient())
    }

    /// Norm of one coefficient according to this field's norm kind.
    pub fn coefficient_norm(&self, gamma: &MultiIndex) -> f64 {
        self.coeffs.get(gamma).map_or(0.0, |c| self.norm_of(c))
    }

    fn norm_of(&self, c: &GridFunction) -> f64 {
        match self.norm {
            CoefficientNorm::L2InX | CoefficientNorm::SupTL2InX => c.sup_l2(&self.grid),
            CoefficientNorm::LinfInX => c.linf(),
        }
    }

    /// `⫼F⫼_{-p} = (Σ_γ ‖f_γ‖² (2N)^{-pγ})^{1/2}`.
    pub fn kondratiev_norm(&self, p: f64) -> f64 {
        self.kondratiev_norm_sq(p).sqrt()
    }

    pub fn kondratiev_norm_sq(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(g, c)| {
                let n = self.norm_of(c);
                n * n * g.inverse_weight_pow(p)
            })
            .sum()
    }

    /// Sup over coefficients of their norms, e.g. `q = sup_γ ‖q_γ‖_{L∞}`.
    pub fn sup_coefficient_norm(&self) -> f64 {
        self.coeffs
            .values()
            .map(|c| self.norm_of(c))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> ChaosField {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v = v.scaled(c);
        }
        out
    }

    /// `self - other` on identical grids and truncations.
    pub fn difference(&self, other: &ChaosField) -> Result<ChaosField> {
        self.check_compatible(other)?;
        let mut out = ChaosField::zeros(
            self.grid,
            self.truncation.clone(),
            self.norm,
            self.levels.max(other.levels) > 1,
        );
        for g in self.truncation.members() {
            match (self.coeffs.get(g), other.coeffs.get(g)) {
                (None, None) => {}
                (Some(a), None) => out.insert(g.clone(), a.clone())?,
                (None, Some(b)) => out.insert(g.clone(), b.scaled(-1.0))?,
                (Some(a), Some(b)) => out.insert(g.clone(), a.difference(b)?)?,
            }
        }
        Ok(out)
    }

    pub fn check_compatible(&self, other: &ChaosField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        if !Arc::ptr_eq(&self.truncation, &other.truncation)
            && *self.truncation != *other.truncation
        {
            return Err(Error::Shape("fields use different truncations".into()));
        }
        Ok(())
    }

    /// Restrict to a smaller downward-closed truncation.
    pub fn restrict(&self, truncation: Arc<TruncationSet>) -> Result<ChaosField> {
        let mut out = ChaosField::zeros(self.grid, truncation.clone(), self.norm, self.levels > 1);
        for (g, c) in &self.coeffs {
            if truncation.contains(g) {
                out.insert(g.clone(), c.clone())?;
            }
        }
        Ok(out)
    }

    /// Write the field as CSV with columns `gamma,time_index,node_index,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["gamma", "time_index", "node_index", "value"])?;
        for (g, c) in &self.coeffs {
            let name = g.to_string();
            for ((n, i), v) in c.values().indexed_iter() {
                w.serialize((&name, n, i, v))?;
            }
        }
        Ok(())
    }

    /// Read a field written by [`ChaosField::write_csv`].
    pub fn read_csv(
        path: &Path,
        grid: GridSpec,
        truncation: Arc<TruncationSet>,
        norm: CoefficientNorm,
    ) -> Result<ChaosField> {
        let mut r = csv::Reader::from_path(path)?;
        let mut raw: BTreeMap<MultiIndex, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for rec in r.deserialize() {
            let (g, n, i, v): (String, usize, usize, f64) = rec?;
            raw.entry(g.parse()?).or_default().push((n, i, v));
        }
        let time_dependent = raw.values().any(|rows| rows.iter().any(|&(n, _, _)| n > 0));
        let mut field = ChaosField::zeros(grid, truncation, norm, time_dependent);
        let levels = field.levels;
        for (g, rows) in raw {
            let mut a = Array2::zeros((levels, grid.nx));
            for (n, i, v) in rows {
                if n >= levels || i >= grid.nx {
                    return Err(Error::Shape(format!(
                        "CSV entry ({n},{i}) out of range for {g}"
                    )));
                }
                a[[n, i]] = v;
            }
            field.insert(g, GridFunction::from_array(a))?;
        }
        Ok(field)
    }
}

/// Result of a Wick product: the truncated product and the `X`-norm mass
/// of the convolution terms that fell outside the truncation.
#[derive(Clone, Debug)]
pub struct WickProduct {
    pub field: ChaosField,
    pub dropped_mass: f64,
}

/// `U ◊ V = Σ_γ (Σ_{α+β=γ} u_α v_β) H_γ`, truncated to the common set.
pub fn wick_product(u: &ChaosField, v: &ChaosField) -> Result<WickProduct> {
    u.check_compatible(v)?;
    let truncation = u.truncation.clone();
    let time_dependent = u.is_time_dependent() || v.is_time_dependent();
    let norm = if time_dependent {
        CoefficientNorm::SupTL2InX
    } else {
        u.norm
    };
    let coeffs: Vec<Option<(MultiIndex, GridFunction)>> = truncation
        .members()
        .par_iter()
        .map(|gamma| -> Result<Option<(MultiIndex, GridFunction)>> {
            let mut acc: Option<GridFunction> = None;
            for (a, b) in gamma.decompositions() {
                if let (Some(ua), Some(vb)) = (u.coeffs.get(&a), v.coeffs.get(&b)) {
                    let term = ua.product(vb)?;
                    acc = Some(match acc {
                        None => term,
                        Some(s) => s.sum(&term)?,
                    });
                }
            }
            Ok(acc.map(|c| (gamma.clone(), c)))
        })
        .collect::<Result<_>>()?;
    let mut field = ChaosField::zeros(u.grid, truncation.clone(), norm, time_dependent);
    for (g, c) in coeffs.into_iter().flatten() {
        field.insert(g, c)?;
    }

    let mut dropped: BTreeMap<MultiIndex, GridFunction> = BTreeMap::new();
    for (a, ua) in &u.coeffs {
        for (b, vb) in &v.coeffs {
            let g = a.add(b);
            if truncation.contains(&g) {
                continue;
            }
            let term = ua.product(vb)?;
            match dropped.get_mut(&g) {
                Some(s) => *s = s.sum(&term)?,
                None => {
                    dropped.insert(g, term);
                }
            }
        }
    }
    let dropped_mass = dropped
        .values()
        .map(|c| {
            let n = c.sup_l2(&u.grid);
            n * n
        })
        .sum::<f64>()
        .sqrt();
    Ok(WickProduct {
        field,
        dropped_mass,
    })
}

/// `E(F) = f_0`.
pub fn expectation(f: &ChaosField) -> GridFunction {
    f.coefficient_or_zero(&MultiIndex::zero())
}

/// One realization `Σ_γ f_γ H_γ(θ)` with `θ_1..θ_K` i.i.d. standard normals
/// drawn from a generator seeded with `seed`.
pub fn sample_realization(f: &ChaosField, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..f.truncation.max_vars())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut out = f.zero_coefficient();
    for (g, c) in &f.coeffs {
        let h = fourier_hermite(g.entries(), &theta);
        out.add_scaled(h, c)
            .expect("coefficients share the field shape");
    }
    out
}

/// Truncated space white noise `W_x = Σ_{k<=K} ξ_k(x) H_{e_k}`.
pub fn white_noise_space(
    grid: &GridSpec,
    truncation: Arc<TruncationSet>,
    modes: usize,
) -> Result<ChaosField> {
    check_modes(&truncation, modes)?;
    let mut field = ChaosField::zeros(*grid, truncation, CoefficientNorm::L2InX, false);
    for k in 1..=modes {
        field.insert(
            MultiIndex::unit(k),
            GridFunction::from_fn_space(grid, |x| hermite_function(k, x)),
        )?;
    }
    Ok(field)
}

/// Truncated `g(x) W_t = Σ_{k<=K} g(x) ξ_k(t) H_{e_k}`.
pub fn white_noise_time(
    grid: &GridSpec,
    truncation: Arc<TruncationSet>,
    modes: usize,
    g: &GridFunction,
) -> Result<ChaosField> {
    check_modes(&truncation, modes)?;
    if g.nx() != grid.nx || g.is_time_dependent() {
        return Err(Error::Shape(
            "envelope g must be a spatial grid function".into(),
        ));
    }
    let mut field = ChaosField::zeros(*grid, truncation, CoefficientNorm::SupTL2InX, true);
    let gx = g.row(0);
    for k in 1..=modes {
        let xi: Vec<f64> = grid.ts().iter().map(|&t| hermite_function(k, t)).collect();
        let values = Array2::from_shape_fn((grid.nt, grid.nx), |(n, i)| gx[i] * xi[n]);
        field.insert(MultiIndex::unit(k), GridFunction::from_array(values))?;
    }
    Ok(field)
}

fn check_modes(truncation: &TruncationSet, modes: usize) -> Result<()> {
    if modes == 0 {
        return Err(Error::Domain("white noise needs at least one mode".into()));
    }
    if modes > truncation.max_vars() || truncation.max_order() == 0 {
        return Err(Error::Validation(format!(
            "{modes} noise modes do not fit a truncation with K = {}, P = {}",
            truncation.max_vars(),
            truncation.max_order()
        )));
    }
    Ok(())
}

/// Largest exponent probed by [`critical_exponent_estimate`].
pub const CRITICAL_EXPONENT_MAX: u32 = 64;

/// Diagnostic estimate of the critical exponent: the smallest integer `p`
/// for which the weighted series `Σ ‖f_γ‖² (2N)^{-pγ}` looks summable.
///
/// The tail is probed through two dyadic shells of the noise coordinates:
/// `S_lo` collects multi-indices whose highest active coordinate lies in
/// `(K/4, K/2]`, `S_hi` those in `(K/2, K]`. A convergent series has
/// `S_hi <= threshold · S_lo` (terms decaying like `k^{-a}`, `a > 1`, give a
/// ratio of about `2^{1-a}`), while harmonic-type tails keep the ratio at or
/// above one. A field without tail mass returns 0.
pub fn critical_exponent_estimate(f: &ChaosField, threshold: f64) -> u32 {
    assert!(threshold > 0.0);
    let k = f.truncation.max_vars();
    let (lo, mid) = (k / 4, k / 2);
    let norms: Vec<(usize, f64, f64)> = f
        .coeffs
        .iter()
        .filter(|(g, _)| !g.is_zero())
        .map(|(g, c)| {
            let n = f.norm_of(c);
            (g.support_len(), n * n, g.log_weight())
        })
        .collect();
    for p in 0..=CRITICAL_EXPONENT_MAX {
        let pf = f64::from(p);
        let (mut s_lo, mut s_hi) = (0.0, 0.0);
        for &(top, nsq, lw) in &norms {
            let term = nsq * (-pf * lw).exp();
            if top > mid {
                s_hi += term;
            } else if top > lo {
                s_lo += term;
            }
        }
        if s_hi == 0.0 || (s_lo > 0.0 && s_hi <= threshold * s_lo) {
            return p;
        }
    }
    CRITICAL_EXPONENT_MAX
}
