//! Moments of `f(w_m)` when `w_m ~ N(w°_m - z_m, σ_m²)`, and the `H`, `Θ`
//! matrices built from them.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::adaptive::Penalty;

/// Error function, accurate to about 1e-16 over the real line.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// `E{w}`, `E{|w|}` and `E{sgn(w)}` for `w ~ N(ν, σ²)`, `ν = w° - z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignMoments {
    pub mean: f64,
    pub abs: f64,
    pub sgn: f64,
}

/// Closed forms for the `sgn` attractor; `σ² = 0` gives point-mass values.
pub fn gaussian_moments_case1(w_opt: f64, z: f64, variance: f64) -> SignMoments {
    let nu = w_opt - z;
    let var = variance.max(0.0);
    if var == 0.0 {
        let sgn = if nu > 0.0 {
            1.0
        } else if nu < 0.0 {
            -1.0
        } else {
            0.0
        };
        return SignMoments {
            mean: nu,
            abs: nu.abs(),
            sgn,
        };
    }
    let sigma = var.sqrt();
    let arg = nu / (2.0 * var).sqrt();
    let e = erf(arg);
    SignMoments {
        mean: nu,
        abs: nu * e + (2.0 / PI).sqrt() * sigma * (-nu * nu / (2.0 * var)).exp(),
        sgn: e,
    }
}

/// Ratio-of-expectations approximations for the reweighted attractor:
/// `E{|w|/(|w|+ε)}`, `E{sgn(w)/(|w|+ε)}` and `E{1/(|w|+ε)²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReweightedMoments {
    pub mean: f64,
    pub ratio: f64,
    pub gradient: f64,
    pub inv_sq: f64,
}

pub fn gaussian_moments_case2(w_opt: f64, z: f64, variance: f64, eps: f64) -> ReweightedMoments {
    let s = gaussian_moments_case1(w_opt, z, variance);
    let second = variance.max(0.0) + s.mean * s.mean;
    ReweightedMoments {
        mean: s.mean,
        ratio: s.abs / (s.abs + eps),
        gradient: s.sgn / (s.abs + eps),
        inv_sq: 1.0 / (second + 2.0 * eps * s.abs + eps * eps),
    }
}

/// Per-coefficient moments needed by the covariance recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorMoments {
    /// `E{f(w_m)}`.
    pub mean_f: Vec<f64>,
    /// `E{w̃_m f(w_m)}` (diagonal of `H`).
    pub h_diag: Vec<f64>,
    /// `E{f(w_m)²}` (diagonal of `Θ`).
    pub theta_diag: Vec<f64>,
}

/// Evaluates the Gaussian closures for every coefficient.
pub fn attractor_moments(w_opt: &[f64], z: &[f64], variance: &[f64], penalty: Penalty) -> AttractorMoments {
    let m = w_opt.len();
    let mut out = AttractorMoments {
        mean_f: Vec::with_capacity(m),
        h_diag: Vec::with_capacity(m),
        theta_diag: Vec::with_capacity(m),
    };
    for k in 0..m {
        match penalty {
            Penalty::L1 => {
                let s = gaussian_moments_case1(w_opt[k], z[k], variance[k]);
                out.mean_f.push(s.sgn);
                out.h_diag.push(w_opt[k] * s.sgn - s.abs);
                out.theta_diag.push(1.0);
            }
            Penalty::Reweighted { eps } => {
                let r = gaussian_moments_case2(w_opt[k], z[k], variance[k], eps);
                out.mean_f.push(r.gradient);
                out.h_diag.push(w_opt[k] * r.gradient - r.ratio);
                out.theta_diag.push(r.inv_sq);
            }
        }
    }
    out
}

/// `H = E{w̃ fᵀ}` and `Θ = E{f fᵀ}` under the separability approximation:
/// off-diagonal entries factor as `z_m E{f_j}` and `E{f_m} E{f_j}`.
pub fn build_h_theta(z: &[f64], moments: &AttractorMoments) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = z.len();
    let f = &moments.mean_f;
    let mut h = DMatrix::from_fn(m, m, |r, c| z[r] * f[c]);
    let mut theta = DMatrix::from_fn(m, m, |r, c| f[r] * f[c]);
    for k in 0..m {
        h[(k, k)] = moments.h_diag[k];
        theta[(k, k)] = moments.theta_diag[k];
    }
    (h, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series, adequate for |x| <= 3 with enough terms.
    fn erf_series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = x;
        let mut n = 0.0;
        loop {
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
            n += 1.0;
            term *= -x * x / n;
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn erf_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-12);
        assert_eq!(erf(f64::INFINITY), 1.0);
        assert_eq!(erf(f64::NEG_INFINITY), -1.0);
        for i in -30..=30 {
            let x = i as f64 * 0.1;
            assert_eq!(erf(-x), -erf(x));
            assert!((erf(x) - erf_series(x)).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn zero_mean_weight() {
        let s = gaussian_moments_case1(0.4, 0.4, 0.09);
        assert_eq!(s.sgn, 0.0);
        assert!((s.abs - (2.0 / PI).sqrt() * 0.3).abs() < 1e-15);
    }

    #[test]
    fn point_mass_limits() {
        let s = gaussian_moments_case1(0.5, 0.2, 0.0);
        assert!((s.abs - 0.3).abs() < 1e-15);
        assert_eq!(s.sgn, 1.0);
        let s = gaussian_moments_case1(0.5, 0.2, 1e-30);
        assert!((s.abs - 0.3).abs() < 1e-12);
        assert_eq!(s.sgn, 1.0);
        let r = gaussian_moments_case2(0.5, 0.0, 0.0, 0.05);
        assert!((r.ratio - 0.5 / 0.55).abs() < 1e-15);
        let r = gaussian_moments_case2(0.0, 0.0, 1e-4, 0.05);
        assert_eq!(r.gradient, 0.0);
    }

    #[test]
    fn zero_error_mean_gives_diagonal_theta() {
        let w = [0.0, 0.7, -0.2];
        let z = w;
        let var = [0.01, 0.04, 0.09];
        let mom = attractor_moments(&w, &z, &var, Penalty::L1);
        let (h, theta) = build_h_theta(&z, &mom);
        for m in 0..3 {
            assert_eq!(theta[(m, m)], 1.0);
            assert!((h[(m, m)] + (2.0 / PI).sqrt() * var[m].sqrt()).abs() < 1e-15);
            for j in 0..3 {
                if j != m {
                    assert_eq!(theta[(m, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn hand_substituted_two_tap_case() {
        // w° = (1, 0), z = (0.2, 0.1), σ² = (0, 0): point masses at 0.8 and -0.1
        let mom = attractor_moments(&[1.0, 0.0], &[0.2, 0.1], &[0.0, 0.0], Penalty::L1);
        let (h, theta) = build_h_theta(&[0.2, 0.1], &mom);
        assert_eq!(mom.mean_f, vec![1.0, -1.0]);
        // H_11 = 1*1 - 0.8, H_22 = 0*(-1) - 0.1, H_12 = z_1 E{sgn w_2}, H_21 = z_2 E{sgn w_1}
        assert!((h[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((h[(1, 1)] + 0.1).abs() < 1e-15);
        assert!((h[(0, 1)] + 0.2).abs() < 1e-15);
        assert!((h[(1, 0)] - 0.1).abs() < 1e-15);
        assert_eq!(theta[(0, 1)], -1.0);
        assert_eq!(theta[(1, 1)], 1.0);
    }
}
