//! Gauss quadrature node tables, computed by Newton iteration on the
//! orthogonal-polynomial recurrences.

/// Gauss-Legendre nodes and weights on `(a, b)`.
///
/// Exact for polynomials of degree `2n - 1`; weights sum to `b - a`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![(0.0f64, 0.0f64); n];
    let m = n.div_ceil(2);
    let (xm, xl) = (0.5 * (b + a), 0.5 * (b - a));
    for i in 0..m {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        nodes[i] = (xm - xl * z, w);
        nodes[n - 1 - i] = (xm + xl * z, w);
    }
    nodes
}

/// Gauss-Hermite nodes and weights for weight function `exp(-x^2)`.
///
/// Weights sum to `sqrt(pi)`.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "need at least one node");
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut nodes = vec![(0.0f64, 0.0f64); n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0].0,
            3 => 1.91 * z - 0.91 * nodes[1].0,
            _ => 2.0 * z - nodes[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        nodes[i] = (z, 2.0 / (pp * pp));
        nodes[n - 1 - i] = (-z, 2.0 / (pp * pp));
    }
    // store ascending
    nodes.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    nodes
}

/// Quadrature for a standard normal: returns `(xi_i, w_i)` with
/// `sum w_i f(xi_i) ~ E[f(Z)]`, `Z ~ N(0,1)`.  Weights are normalized to sum
/// to one exactly so that constants are preserved.
pub fn standard_normal(n: usize) -> Vec<(f64, f64)> {
    let raw = gauss_hermite(n);
    let total: f64 = raw.iter().map(|p| p.1).sum();
    raw.iter()
        .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / total))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_two_nodes() {
        let q = gauss_legendre(2, -1.0, 1.0);
        let r = 1.0 / 3.0f64.sqrt();
        assert_abs_diff_eq!(q[0].0, -r, epsilon = 1e-14);
        assert_abs_diff_eq!(q[1].0, r, epsilon = 1e-14);
        assert_abs_diff_eq!(q[0].1, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q[1].1, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_exact_for_high_degree() {
        // 5 nodes integrate degree 9 exactly: int_0^1 x^9 dx = 0.1
        let q = gauss_legendre(5, 0.0, 1.0);
        let s: f64 = q.iter().map(|&(x, w)| w * x.powi(9)).sum();
        assert_abs_diff_eq!(s, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn hermite_three_nodes() {
        let q = gauss_hermite(3);
        assert_abs_diff_eq!(q[0].0, -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(q[2].0, 1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(q[0].1, 0.29540897515091935, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1].1, 1.1816359006036774, epsilon = 1e-12);
    }

    #[test]
    fn normal_moments() {
        let q = standard_normal(6);
        let m0: f64 = q.iter().map(|p| p.1).sum();
        let m2: f64 = q.iter().map(|&(x, w)| w * x * x).sum();
        let m4: f64 = q.iter().map(|&(x, w)| w * x.powi(4)).sum();
        assert_abs_diff_eq!(m0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m4, 3.0, epsilon = 1e-12);
    }
}
