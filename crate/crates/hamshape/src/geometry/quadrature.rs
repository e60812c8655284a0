//! Quadrature rules: a degree-5 7-point triangle rule (exact for every element
//! integrand produced by P2 stiffness and mass terms) and Gauss–Legendre rules
//! on intervals.

/// 7-point degree-5 triangle rule as (weight, l0, l1, l2); weights sum to one
/// and scale with triangle area.
pub const TRI_7: [(f64, [f64; 3]); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        (0.225, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
        (W1, [A1, B1, B1]),
        (W1, [B1, A1, B1]),
        (W1, [B1, B1, A1]),
        (W2, [A2, B2, B2]),
        (W2, [B2, A2, B2]),
        (W2, [B2, B2, A2]),
    ]
};

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, w * half))
        .collect()
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    // P'_n(x) = n (x P_n - P_{n-1}) / (x² - 1)
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rule_weights_sum_to_one() {
        let sum: f64 = TRI_7.iter().map(|&(w, _)| w).sum();
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_rule_is_degree_five() {
        // On the reference triangle {l1, l2 >= 0, l1 + l2 <= 1} with area 1/2:
        // integral of l1^a l2^b = a! b! / (a + b + 2)!.
        let factorial = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        for a in 0..=5usize {
            for b in 0..=(5 - a) {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let approx: f64 = TRI_7
                    .iter()
                    .map(|&(w, l)| 0.5 * w * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                assert!(
                    (approx - exact).abs() < 1e-15,
                    "monomial l1^{a} l2^{b}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_high_degree_polynomials() {
        for n in [1usize, 2, 3, 5, 8, 16, 24, 32] {
            let rule = gauss_legendre(n);
            assert_eq!(rule.len(), n);
            // Exact through degree 2n-1; check x^(2n-2) against 2/(2n-1).
            let deg = 2 * n - 2;
            let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
            let exact = 2.0 / (deg as f64 + 1.0);
            assert!((got - exact).abs() < 1e-12, "n={n}: {got} vs {exact}");
        }
    }
}
