//! Finitely supported multi-indices, their weights `(2N)^γ = Π (2k)^{γ_k}`,
//! finite truncations of the index set, and the weight sums `C_p` and `D_p`
//! that control every Kondratiev-norm estimate in the crate.
//!
//! Coordinates are 1-based in the mathematical sense: `e_1` is the first
//! unit multi-index and is stored at position 0 of the entry vector.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on the number of members an enumerated truncation may have.
pub const DEFAULT_ENUMERATION_CAP: usize = 200_000;

/// A finitely supported sequence of non-negative integers.
///
/// Stored in canonical form: trailing zeros are dropped, so the zero
/// multi-index is the empty vector.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn zero() -> Self {
        MultiIndex(Vec::new())
    }

    /// The unit multi-index `e_k`, `k >= 1`.
    pub fn unit(k: usize) -> Self {
        assert!(k >= 1, "unit multi-indices are 1-based");
        let mut entries = vec![0; k];
        entries[k - 1] = 1;
        MultiIndex(entries)
    }

    pub fn from_entries(entries: &[u32]) -> Self {
        let mut v = entries.to_vec();
        while v.last() == Some(&0) {
            v.pop();
        }
        MultiIndex(v)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Entry at 1-based coordinate `k`.
    pub fn get(&self, k: usize) -> u32 {
        if k == 0 {
            return 0;
        }
        self.0.get(k - 1).copied().unwrap_or(0)
    }

    /// Number of stored coordinates (index of the last nonzero entry).
    pub fn support_len(&self) -> usize {
        self.0.len()
    }

    /// Length `|γ| = Σ γ_k`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `γ! = Π γ_k!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&g| (1..=g).map(f64::from).product::<f64>())
            .product()
    }

    /// `ln (2N)^γ = Σ γ_k ln(2k)`.
    pub fn log_weight(&self) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &g)| g > 0)
            .map(|(i, &g)| f64::from(g) * (2.0 * (i as f64 + 1.0)).ln())
            .sum()
    }

    /// The weight `(2N)^γ`, computed in log space.
    pub fn weight(&self) -> Result<f64> {
        let w = self.log_weight().exp();
        if w.is_finite() {
            Ok(w)
        } else {
            Err(Error::WeightOverflow(self.clone()))
        }
    }

    /// `weight(γ)^{-p}`; underflows gracefully to zero.
    pub fn inverse_weight_pow(&self, p: f64) -> f64 {
        (-p * self.log_weight()).exp()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        let n = self.0.len().max(other.0.len());
        let entries: Vec<u32> = (0..n)
            .map(|i| self.0.get(i).unwrap_or(&0) + other.0.get(i).unwrap_or(&0))
            .collect();
        MultiIndex::from_entries(&entries)
    }

    /// `self - other`, or `None` unless `other <= self` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if other.0.len() > self.0.len() {
            return None;
        }
        let mut entries = self.0.clone();
        for (e, &o) in entries.iter_mut().zip(other.0.iter()) {
            *e = e.checked_sub(o)?;
        }
        Some(MultiIndex::from_entries(&entries))
    }

    /// Componentwise partial order `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() <= other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Strict partial order: `self <= other` and `self != other`.
    pub fn lt(&self, other: &MultiIndex) -> bool {
        self != other && self.le(other)
    }

    /// All ordered pairs `(α, β)` with `α + β = γ`, in a fixed order
    /// (α runs through the sub-multi-indices of γ in mixed-radix order).
    pub fn decompositions(&self) -> Vec<(MultiIndex, MultiIndex)> {
        let count: usize = self.0.iter().map(|&g| g as usize + 1).product();
        let mut pairs = Vec::with_capacity(count);
        let mut alpha = vec![0u32; self.0.len()];
        loop {
            let a = MultiIndex::from_entries(&alpha);
            let b = self
                .checked_sub(&a)
                .expect("sub-multi-index is always below gamma");
            pairs.push((a, b));
            // mixed-radix increment
            let mut i = 0;
            loop {
                if i == alpha.len() {
                    return pairs;
                }
                if alpha[i] < self.0[i] {
                    alpha[i] += 1;
                    break;
                }
                alpha[i] = 0;
                i += 1;
            }
        }
    }

    /// All `α <= γ` (including 0 and γ itself).
    pub fn sub_indices(&self) -> Vec<MultiIndex> {
        self.decompositions().into_iter().map(|(a, _)| a).collect()
    }
}

/// Graded order: by `|γ|`, then lexicographically with larger leading
/// coordinates first (so `e_1` precedes `e_2`).
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order().cmp(&other.order()).then_with(|| {
            let n = self.0.len().max(other.0.len());
            for i in 0..n {
                let a = self.0.get(i).copied().unwrap_or(0);
                let b = other.0.get(i).copied().unwrap_or(0);
                if a != b {
                    return b.cmp(&a);
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "(0)");
        }
        write!(f, "(")?;
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{g}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("multi-index must be parenthesised: {s:?}")))?;
        if inner.trim().is_empty() {
            return Ok(MultiIndex::zero());
        }
        let entries = inner
            .split(',')
            .map(|e| {
                e.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Parse(format!("bad multi-index entry {e:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiIndex::from_entries(&entries))
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of multi-indices supported in the first `k` coordinates with
/// `|γ| <= p`, i.e. `binomial(k + p, k)`, saturating.
pub fn truncation_count(max_vars: usize, max_order: u32) -> u128 {
    let n = max_vars as u128 + max_order as u128;
    let r = (max_order as u128).min(max_vars as u128);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// A finite, downward-closed set of multi-indices in graded order.
#[derive(Clone, Debug)]
pub struct TruncationSet {
    max_vars: usize,
    max_order: u32,
    members: Vec<MultiIndex>,
    log_weights: Vec<f64>,
    position: HashMap<MultiIndex, usize>,
    level_bounds: Vec<usize>,
}

impl PartialEq for TruncationSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl TruncationSet {
    /// All γ supported in the first `max_vars` coordinates with `|γ| <= max_order`.
    pub fn enumerate(max_vars: usize, max_order: u32) -> Result<Self> {
        Self::enumerate_capped(max_vars, max_order, DEFAULT_ENUMERATION_CAP)
    }

    pub fn enumerate_capped(max_vars: usize, max_order: u32, cap: usize) -> Result<Self> {
        if max_vars == 0 {
            return Err(Error::Domain(
                "truncation needs at least one variable".into(),
            ));
        }
        let count = truncation_count(max_vars, max_order);
        if count > cap as u128 {
            return Err(Error::TruncationTooLarge { count, cap });
        }
        let mut members = Vec::with_capacity(count as usize);
        let mut buf = vec![0u32; max_vars];
        for order in 0..=max_order {
            compositions(order, 0, &mut buf, &mut members);
        }
        Ok(Self::from_sorted(max_vars, max_order, members))
    }

    /// Build from an explicit collection; it must be closed under `α <= γ`.
    pub fn from_indices<I: IntoIterator<Item = MultiIndex>>(indices: I) -> Result<Self> {
        let mut members: Vec<MultiIndex> = indices.into_iter().collect();
        members.sort();
        members.dedup();
        let set: std::collections::HashSet<&MultiIndex> = members.iter().collect();
        for g in &members {
            for a in g.sub_indices() {
                if !set.contains(&a) {
                    return Err(Error::Validation(format!(
                        "truncation is not downward closed: {a} <= {g} is missing"
                    )));
                }
            }
        }
        if members.is_empty() {
            return Err(Error::Validation(
                "truncation must contain the zero multi-index".into(),
            ));
        }
        let max_vars = members
            .iter()
            .map(|g| g.support_len())
            .max()
            .unwrap_or(0)
            .max(1);
        let max_order = members.iter().map(|g| g.order()).max().unwrap_or(0);
        Ok(Self::from_sorted(max_vars, max_order, members))
    }

    fn from_sorted(max_vars: usize, max_order: u32, members: Vec<MultiIndex>) -> Self {
        let log_weights = members.iter().map(|g| g.log_weight()).collect();
        let position = members
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        let mut level_bounds = vec![0];
        for order in 0..=max_order {
            let end = members.partition_point(|g| g.order() <= order);
            level_bounds.push(end);
        }
        TruncationSet {
            max_vars,
            max_order,
            members,
            log_weights,
            position,
            level_bounds,
        }
    }

    pub fn max_vars(&self) -> usize {
        self.max_vars
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn members(&self) -> &[MultiIndex] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, gamma: &MultiIndex) -> bool {
        self.position.contains_key(gamma)
    }

    pub fn position(&self, gamma: &MultiIndex) -> Option<usize> {
        self.position.get(gamma).copied()
    }

    /// Members with `|γ| = order`, in graded order.
    pub fn level(&self, order: u32) -> &[MultiIndex] {
        let o = order as usize;
        if o + 1 >= self.level_bounds.len() {
            return &[];
        }
        &self.members[self.level_bounds[o]..self.level_bounds[o + 1]]
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }
}

fn compositions(remaining: u32, pos: usize, buf: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(MultiIndex::from_entries(buf));
        buf[pos] = 0;
        return;
    }
    for v in (0..=remaining).rev() {
        buf[pos] = v;
        compositions(remaining - v, pos + 1, buf, out);
    }
    buf[pos] = 0;
}

/// The shape `{γ : supp γ ⊆ {1..K}, |γ| <= P}` without enumerating it.
///
/// Weight sums over this set factorise over coordinates, so they are
/// computed by a generating-function recursion in `O(K·P)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncationShape {
    pub max_vars: usize,
    pub max_order: u32,
}

/// Sums of `weight(γ)^{-p}` grouped by `|γ|`; entry `j` covers `|γ| = j`.
pub trait GradedWeightSums {
    fn graded_weight_sums(&self, p: f64) -> Vec<f64>;
}

impl GradedWeightSums for TruncationSet {
    fn graded_weight_sums(&self, p: f64) -> Vec<f64> {
        let mut sums = vec![0.0; self.max_order as usize + 1];
        for (g, lw) in self.members.iter().zip(&self.log_weights) {
            sums[g.order() as usize] += (-p * lw).exp();
        }
        sums
    }
}

impl GradedWeightSums for TruncationShape {
    fn graded_weight_sums(&self, p: f64) -> Vec<f64> {
        let order = self.max_order as usize;
        let mut sums = vec![0.0; order + 1];
        sums[0] = 1.0;
        // multiply by 1/(1 - r z) per coordinate, truncated at z^P
        for k in 1..=self.max_vars {
            let r = (2.0 * k as f64).powf(-p);
            for j in 1..=order {
                sums[j] += r * sums[j - 1];
            }
        }
        sums
    }
}

/// Partial sum `Σ_{γ ∈ set} weight(γ)^{-p}` of the constant `C_p`.
pub fn cp_sum<S: GradedWeightSums + ?Sized>(p: f64, set: &S) -> Result<f64> {
    if p.is_nan() || p <= 1.0 {
        return Err(Error::Domain(format!("C_p diverges for p = {p} <= 1")));
    }
    Ok(set.graded_weight_sums(p).iter().sum())
}

/// The full constant `C_p = Σ_{γ ∈ I} (2N)^{-pγ} = Π_k (1 - (2k)^{-p})^{-1}`.
///
/// The product is summed in log space up to `k = 10^4`; the remaining tail
/// uses the Euler–Maclaurin expansion of `Σ k^{-p}`.
pub fn cp_limit(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 1.0 {
        return Err(Error::Domain(format!("C_p diverges for p = {p} <= 1")));
    }
    const HEAD: usize = 10_000;
    let mut log_c = 0.0;
    for k in 1..=HEAD {
        log_c -= (-(2.0 * k as f64).powf(-p)).ln_1p();
    }
    let n = HEAD as f64;
    let zeta_tail =
        |q: f64| n.powf(1.0 - q) / (q - 1.0) - 0.5 * n.powf(-q) + q * n.powf(-q - 1.0) / 12.0;
    // -ln(1 - x) = x + x²/2 + ..., with x = (2k)^{-p}
    log_c += 2f64.powf(-p) * zeta_tail(p) + 0.5 * 2f64.powf(-2.0 * p) * zeta_tail(2.0 * p);
    Ok(log_c.exp())
}

/// `s(c) = max(0, ln c / ln 2 + 1)`, which guarantees `c^{|γ|} <= (2N)^{sγ}`.
pub fn s_for_constant(c: f64) -> f64 {
    assert!(c > 0.0, "s_for_constant needs c > 0");
    (c.ln() / std::f64::consts::LN_2 + 1.0).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpBound {
    pub partial_sum: f64,
    pub bound: f64,
    /// Exponent `p - m - s·n` at which the bounding `C` is evaluated.
    pub exponent: f64,
}

/// `D_p = Σ |γ|^m d^{n|γ|} weight(γ)^{-p}` over `set`, together with the
/// bound `C_{p-m-sn}` over the same set, `s = s(d^n)`.
pub fn dp_bound<S: GradedWeightSums + ?Sized>(
    p: f64,
    m: u32,
    n: u32,
    d: f64,
    set: &S,
) -> Result<DpBound> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::Domain(format!("D_p needs d > 0, got {d}")));
    }
    let s = s_for_constant(d.powi(n as i32));
    let exponent = p - f64::from(m) - s * f64::from(n);
    if exponent.is_nan() || exponent <= 1.0 {
        return Err(Error::Domain(format!(
            "p - m - s·n = {exponent} must exceed 1 (p = {p}, m = {m}, n = {n}, s = {s})"
        )));
    }
    let partial_sum = set
        .graded_weight_sums(p)
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let jf = j as f64;
            jf.powi(m as i32) * d.powf(f64::from(n) * jf) * c
        })
        .sum();
    let bound = cp_sum(exponent, set)?;
    Ok(DpBound {
        partial_sum,
        bound,
        exponent,
    })
}
