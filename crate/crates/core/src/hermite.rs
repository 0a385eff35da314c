//! Probabilists' Hermite polynomials and the `L²(ℝ)`-orthonormal Hermite
//! functions.

use std::f64::consts::PI;

/// `He_n(x)` via `He_{n+1} = x He_n - n He_{n-1}`.
pub fn hermite_polynomial(n: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    match n {
        0 => return 1.0,
        1 => return x,
        _ => {}
    }
    for k in 1..n {
        let next = x * cur - f64::from(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Hermite function `ξ_k`, `k >= 1`:
/// `ξ_k(x) = π^{-1/4} ((k-1)!)^{-1/2} e^{-x²/2} He_{k-1}(√2 x)`.
///
/// Evaluated with the normalised recurrence
/// `ψ_{n+1} = √(2/(n+1)) x ψ_n - √(n/(n+1)) ψ_{n-1}`, `ξ_k = ψ_{k-1}`,
/// which stays stable for indices in the hundreds.
pub fn hermite_function(k: usize, x: f64) -> f64 {
    assert!(k >= 1, "Hermite functions are indexed from 1");
    let psi0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if k == 1 {
        return psi0;
    }
    let mut prev = psi0;
    let mut cur = 2f64.sqrt() * x * psi0;
    for n in 1..(k - 1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_γ(θ) = Π_k He_{γ_k}(θ_k)`; coordinates beyond `theta` count as zero.
pub fn fourier_hermite(entries: &[u32], theta: &[f64]) -> f64 {
    entries
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 0)
        .map(|(k, &g)| hermite_polynomial(g, theta.get(k).copied().unwrap_or(0.0)))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_values() {
        assert_eq!(hermite_polynomial(0, 1.7), 1.0);
        assert_eq!(hermite_polynomial(2, 2.0), 3.0);
        assert_eq!(hermite_polynomial(3, 2.0), 2.0);
        // He_4 = x^4 - 6x^2 + 3
        assert!((hermite_polynomial(4, 1.5) - (1.5f64.powi(4) - 6.0 * 2.25 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn function_matches_closed_form() {
        assert!((hermite_function(1, 0.0) - PI.powf(-0.25)).abs() < 1e-15);
        for k in 1..8usize {
            for &x in &[-2.3f64, -0.4, 0.0, 0.9, 3.1] {
                let fact: f64 = (1..k).map(|i| i as f64).product();
                let direct = PI.powf(-0.25) / fact.sqrt()
                    * (-0.5 * x * x).exp()
                    * hermite_polynomial(k as u32 - 1, 2f64.sqrt() * x);
                assert!(
                    (hermite_function(k, x) - direct).abs() < 1e-12,
                    "k={k} x={x}"
                );
            }
        }
    }

    fn inner(j: usize, k: usize) -> f64 {
        // trapezoid oracle on a wide window
        let (a, b, n) = (-20.0, 20.0, 8001);
        let h = (b - a) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let x = a + i as f64 * h;
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * hermite_function(j, x) * hermite_function(k, x)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn orthonormality_by_quadrature() {
        assert!((inner(2, 2) - 1.0).abs() < 1e-6);
        assert!(inner(1, 3).abs() < 1e-6);
        assert!((inner(40, 40) - 1.0).abs() < 1e-6);
        assert!(inner(17, 40).abs() < 1e-6);
    }

    #[test]
    fn high_index_is_finite() {
        for &x in &[0.0, 5.0, 14.0, 30.0] {
            assert!(hermite_function(120, x).is_finite());
        }
    }
}
