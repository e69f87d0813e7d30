//! Quadrature rules: triangle rules in barycentric form and Gauss-Legendre
//! line rules.

#![allow(clippy::excessive_precision)]

/// 6-point degree-4 triangle rule. Barycentric points with weights summing
/// to one; integrate as `|T| * sum w_q f(p_q)`.
pub const TRI_6: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.108_103_018_168_070_2;
    const B1: f64 = 0.445_948_490_915_964_9;
    const W1: f64 = 0.223_381_589_678_011_47;
    const A2: f64 = 0.816_847_572_980_458_5;
    const B2: f64 = 0.091_576_213_509_770_74;
    const W2: f64 = 0.109_951_743_655_321_87;
    [
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// 12-point degree-6 triangle rule; used for error integration in
/// convergence studies so the quadrature error stays below the
/// discretization error being measured.
pub const TRI_12: [([f64; 3], f64); 12] = {
    const A1: f64 = 0.501_426_509_658_179_0;
    const B1: f64 = 0.249_286_745_170_910_4;
    const W1: f64 = 0.116_786_275_726_379_37;
    const A2: f64 = 0.873_821_971_016_996_0;
    const B2: f64 = 0.063_089_014_491_502_23;
    const W2: f64 = 0.050_844_906_370_206_82;
    const A3: f64 = 0.053_145_049_844_816_95;
    const B3: f64 = 0.310_352_451_033_784_4;
    const C3: f64 = 0.636_502_499_121_398_6;
    const W3: f64 = 0.082_851_075_618_373_58;
    [
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
        ([A3, B3, C3], W3),
        ([A3, C3, B3], W3),
        ([B3, A3, C3], W3),
        ([B3, C3, A3], W3),
        ([C3, A3, B3], W3),
        ([C3, B3, A3], W3),
    ]
};

/// 3-point Gauss-Legendre rule on [-1, 1].
pub const GAUSS_3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
    (0.0, 0.888_888_888_888_888_9),
    (0.774_596_669_241_483_4, 0.555_555_555_555_555_6),
];

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre polynomial; accurate to machine precision for moderate n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

pub fn gauss_legendre_64() -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(64)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri6_integrates_degree_four() {
        // integral of x^a y^b over the unit right triangle is
        // a! b! / (a + b + 2)!
        let exact = |a: u32, b: u32| {
            let fact = |k: u32| (1..=k).map(f64::from).product::<f64>().max(1.0);
            fact(a) * fact(b) / fact(a + b + 2)
        };
        for (a, b) in [(0, 0), (1, 0), (2, 1), (4, 0), (2, 2), (0, 4)] {
            let mut acc = 0.0;
            for (l, w) in TRI_6 {
                let x = l[1];
                let y = l[2];
                acc += 0.5 * w * x.powi(a as i32) * y.powi(b as i32);
            }
            assert!(
                (acc - exact(a, b)).abs() < 1e-15,
                "monomial x^{a} y^{b}: {acc} vs {}",
                exact(a, b)
            );
        }
    }

    #[test]
    fn tri12_integrates_degree_six() {
        let exact = |a: u32, b: u32| {
            let fact = |k: u32| (1..=k).map(f64::from).product::<f64>().max(1.0);
            fact(a) * fact(b) / fact(a + b + 2)
        };
        for (a, b) in [(6, 0), (3, 3), (0, 6), (4, 2), (5, 1)] {
            let mut acc = 0.0;
            for (l, w) in TRI_12 {
                acc += 0.5 * w * l[1].powi(a as i32) * l[2].powi(b as i32);
            }
            assert!((acc - exact(a, b)).abs() < 1e-15);
        }
    }

    #[test]
    fn gauss_legendre_matches_fixed_rule() {
        let (nodes, weights) = gauss_legendre(3);
        for ((n, w), (rn, rw)) in nodes.iter().zip(&weights).zip(GAUSS_3) {
            assert!((n - rn).abs() < 1e-14);
            assert!((w - rw).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_64_integrates_polynomials() {
        let (nodes, weights) = gauss_legendre(64);
        assert!((weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let int_x2: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x * x).sum();
        assert!((int_x2 - 2.0 / 3.0).abs() < 1e-13);
    }
}
