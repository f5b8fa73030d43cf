//! Stability limits and the steady-state fixed point.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::adaptive::Penalty;
use crate::error::{Error, Result};
use crate::signals::SparseSystem;

use super::gaussian::{build_h_theta, AttractorMoments};
use super::linalg::vec;
use super::moments::{check_theory_size, InputMoments};
use super::transient::{AttractorForm, VariantMatrices};

/// Step-size limits for mean and mean-square convergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityBounds {
    /// `2 / λ_max(E{A})`.
    pub mean: f64,
    /// `min(b_L, b_Ξ)`.
    pub mean_square: f64,
    /// `1 / λ_max(L⁻¹Ψ)`: beyond it `F1` has an eigenvalue at or above 1.
    pub from_l_psi: f64,
    /// Smallest `μ` at which `F1` first reaches eigenvalue -1, i.e. the
    /// reciprocal of the largest real positive eigenvalue of the companion
    /// matrix `Ξ` (infinite when none is found below `from_l_psi`).
    pub from_companion: f64,
    /// `L` was singular and its pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

fn is_positive_definite(x: DMatrix<f64>) -> bool {
    Cholesky::new(x).is_some()
}

/// Step-size bounds from the input moments.
///
/// `F1 = I - μL + μ²Ψ` is symmetric, so `ρ(F1) < 1` splits into
/// `L - μΨ ≻ 0` (generalised eigenvalue of `(Ψ, L)`) and
/// `2I - μL + μ²Ψ ≻ 0` (first singular point located by a scan plus
/// bisection of Cholesky tests).
pub fn stability_bounds(moments: &InputMoments) -> Result<StabilityBounds> {
    let m = moments.filter_len();
    check_theory_size(m)?;
    let ea = moments.mean_a();
    let psi = moments.kron_aa();
    let eig = ea.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.max();
    if !(lambda_max > 0.0) {
        return Err(Error::Singular("E{A} has no positive eigenvalue"));
    }
    let mean = 2.0 / lambda_max;

    // In the eigenbasis of E{A}, L is diagonal with entries λ_i + λ_k.
    let u = &eig.eigenvectors;
    let uu = u.kronecker(u);
    let psi_rot = uu.transpose() * psi * &uu;
    let tol = 1e-12 * lambda_max;
    let mut pseudo = false;
    let scale: Vec<f64> = (0..m * m)
        .map(|idx| {
            let (i, k) = (idx / m, idx % m);
            let l = eig.eigenvalues[i] + eig.eigenvalues[k];
            if l > tol {
                1.0 / l.sqrt()
            } else {
                pseudo = true;
                0.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(m * m, m * m, |r, c| psi_rot[(r, c)] * scale[r] * scale[c]);
    let top = scaled.symmetric_eigenvalues().max();
    let from_l_psi = if top > 0.0 { 1.0 / top } else { f64::INFINITY };

    let eye = DMatrix::<f64>::identity(m * m, m * m);
    let mut l_mat = DMatrix::<f64>::zeros(m * m, m * m);
    for i in 0..m {
        for j in 0..m {
            let v = ea[(i, j)];
            for k in 0..m {
                l_mat[(i * m + k, j * m + k)] += v;
                l_mat[(k * m + i, k * m + j)] += v;
            }
        }
    }
    let g = |mu: f64| &eye * 2.0 - &l_mat * mu + psi * (mu * mu);
    let upper = if from_l_psi.is_finite() { from_l_psi } else { 4.0 * mean };
    let probes = 24;
    let mut from_companion = f64::INFINITY;
    let mut lo = 0.0;
    for p in 1..=probes {
        let mu = upper * p as f64 / probes as f64;
        if !is_positive_definite(g(mu)) {
            let mut hi = mu;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if is_positive_definite(g(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            from_companion = hi;
            break;
        }
        lo = mu;
    }
    Ok(StabilityBounds {
        mean,
        mean_square: from_l_psi.min(from_companion),
        from_l_psi,
        from_companion,
        pseudo_inverse: pseudo,
    })
}

/// Spectral radius of `F1` by power iteration on the symmetric matrix.
pub fn spectral_radius_f1(matrices: &VariantMatrices) -> f64 {
    let n = matrices.f1.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let w = &matrices.f1 * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let converged = (norm - lambda).abs() < 1e-13 * norm;
        lambda = norm;
        v = next;
        if converged {
            break;
        }
    }
    lambda
}

/// Steady-state report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub msd: f64,
    pub msd_db: f64,
    /// Common variance of the zero taps.
    pub sigma_z2: f64,
    /// `Φ_mm(∞)` for the nonzero taps, in index order.
    pub sigma_nz2: Vec<f64>,
    /// `E{w̃_m(∞)}` for the nonzero taps.
    pub nz_bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Reusable factorisation of `I - F1` for one `(moments, μ, form)`.
pub struct SteadySolver<'a> {
    moments: &'a InputMoments,
    matrices: &'a VariantMatrices,
    /// `d_m`: diagonal of `unvec((I - F1)⁻¹ vec(D))`.
    noise_terms: Vec<f64>,
    /// `((I - F1)⁻¹ (F2 + F3))_{jj}` with `jj = m(M+1)`.
    cross_terms: Vec<f64>,
    /// `((I - F1)⁻¹ F4)_{jj}`.
    square_terms: Vec<f64>,
    /// `(I - F1)⁻¹ vec(I)`.
    trace_row: DVector<f64>,
    /// `((E{A})⁻¹ E{P})_{mm}`.
    bias_gain: Vec<f64>,
    /// `(E{A})⁻¹ E{P}`.
    bias_matrix: DMatrix<f64>,
}

impl<'a> SteadySolver<'a> {
    pub fn new(moments: &'a InputMoments, matrices: &'a VariantMatrices) -> Result<Self> {
        let m = moments.filter_len();
        let n2 = m * m;
        let i_minus_f1 = DMatrix::<f64>::identity(n2, n2) - &matrices.f1;
        let chol = Cholesky::new(i_minus_f1).ok_or_else(|| {
            Error::ModelInvalid(format!(
                "I - F1 is not positive definite at μ = {}: step size outside the mean-square stability range",
                matrices.step_size
            ))
        })?;
        // columns e_jj of the symmetric inverse give the needed rows
        let mut rhs = DMatrix::<f64>::zeros(n2, m);
        for k in 0..m {
            rhs[(k * (m + 1), k)] = 1.0;
        }
        let rows = chol.solve(&rhs);
        let vec_d = vec(&moments.noise_d());
        let f23 = &matrices.f2 + &matrices.f3;
        let mut noise_terms = Vec::with_capacity(m);
        let mut cross_terms = Vec::with_capacity(m);
        let mut square_terms = Vec::with_capacity(m);
        for k in 0..m {
            let y = rows.column(k);
            let jj = k * (m + 1);
            noise_terms.push(y.dot(&vec_d));
            cross_terms.push(y.dot(&f23.column(jj)));
            square_terms.push(y.dot(&matrices.f4.column(jj)));
        }
        let trace_row = chol.solve(&vec(&DMatrix::identity(m, m)));

        let ea_chol = Cholesky::new(moments.mean_a().clone()).ok_or(Error::Singular("E{A}"))?;
        let bias_matrix = ea_chol.solve(&matrices.mean_p);
        let bias_gain = bias_matrix.diagonal().iter().copied().collect();
        Ok(Self {
            moments,
            matrices,
            noise_terms,
            cross_terms,
            square_terms,
            trace_row,
            bias_gain,
            bias_matrix,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.matrices.step_size
    }

    /// `MSD(∞)` of plain NSAF: `μ² vecᵀ(I)(I - F1)⁻¹ vec(D)`.
    pub fn nsaf_msd(&self) -> f64 {
        let mu = self.matrices.step_size;
        mu * mu * self.trace_row.dot(&vec(&self.moments.noise_d()))
    }

    /// `E{w(∞)} = w° - (β/μ)(E{A})⁻¹ E{P} E{f(w(∞))}`, with `E{f}` equal to
    /// `f(w°)` on the nonzero taps and 0 on the zero taps.
    pub fn steady_state_mean(&self, system: &SparseSystem, beta: f64, penalty: Penalty) -> Vec<f64> {
        let m = system.len();
        let f = DVector::from_iterator(m, system.weights().iter().map(|&w| steady_gradient(w, penalty)));
        let bias = &self.bias_matrix * f * (beta / self.matrices.step_size);
        system.weights().iter().zip(bias.iter()).map(|(w, b)| w - b).collect()
    }

    /// Per-tap `((E{A})⁻¹ E{P})_{mm} f(w°_m)` scaled by `β/μ` for the nonzero taps.
    fn nz_bias(&self, system: &SparseSystem, beta: f64, penalty: Penalty) -> Vec<f64> {
        let scale = beta / self.matrices.step_size;
        system
            .nonzero_indices()
            .iter()
            .map(|&m| scale * self.bias_gain[m] * steady_gradient(system.weights()[m], penalty))
            .collect()
    }

    /// `H(∞)` and `Θ(∞)` from the steady zero-tap spread `σ_z` and the
    /// nonzero-tap biases.
    pub fn steady_h_theta(
        &self,
        system: &SparseSystem,
        sigma_z: f64,
        beta: f64,
        penalty: Penalty,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = system.len();
        let mut z = vec![0.0; m];
        let mut mom = AttractorMoments {
            mean_f: vec![0.0; m],
            h_diag: vec![0.0; m],
            theta_diag: vec![0.0; m],
        };
        let abs_z = (2.0 / PI).sqrt() * sigma_z;
        for &k in system.zero_indices() {
            let (h, t) = zero_tap_terms(abs_z, sigma_z * sigma_z, penalty);
            mom.h_diag[k] = h;
            mom.theta_diag[k] = t;
        }
        for (&k, b) in system.nonzero_indices().iter().zip(self.nz_bias(system, beta, penalty)) {
            let f = steady_gradient(system.weights()[k], penalty);
            z[k] = b;
            mom.mean_f[k] = f;
            mom.h_diag[k] = b * f;
            mom.theta_diag[k] = f * f;
        }
        build_h_theta(&z, &mom)
    }

    /// `β*` and the coefficients of `Δ(β) = aβ + bβ²` at `β*`. `H(∞)` and
    /// `Θ(∞)` depend on `β` through the steady state, so `β*` is the root of
    /// `β = -a(β)/b(β)`, bracketed by the plain NSAF linearisation.
    pub fn beta_star(&self, system: &SparseSystem, penalty: Penalty) -> Result<BetaStar> {
        let at = |beta: f64| -> Result<BetaStar> {
            let s = self.steady_state_msd(system, beta, penalty)?;
            let (h, theta) = self.steady_h_theta(system, s.sigma_z2.sqrt(), beta, penalty);
            self.beta_star_from(&h, &theta)
        };
        let first = at(0.0)?;
        if first.beta_star == 0.0 {
            return Ok(first);
        }
        let (mut lo, mut hi) = (0.0, first.beta_star);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if at(mid)?.beta_star > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        Ok(BetaStar {
            beta_star: root,
            ..at(root)?
        })
    }

    /// `β* = -a/b` for given `H(∞)`, `Θ(∞)`.
    pub fn beta_star_from(&self, h: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<BetaStar> {
        let linear = self
            .trace_row
            .dot(&(&self.matrices.f2 * vec(h) + &self.matrices.f3 * vec(&h.transpose())));
        let quadratic = self.trace_row.dot(&(&self.matrices.f4 * vec(theta)));
        if !(quadratic > 0.0) {
            return Err(Error::ModelInvalid(format!(
                "Δ(β) has non-positive quadratic coefficient {quadratic}: no beneficial β region"
            )));
        }
        Ok(BetaStar {
            beta_star: (-linear / quadratic).max(0.0),
            linear,
            quadratic,
        })
    }

    /// Steady-state MSD under the diagonal (white-subband) approximation.
    pub fn steady_state_msd(&self, system: &SparseSystem, beta: f64, penalty: Penalty) -> Result<SteadyState> {
        let m = self.moments.filter_len();
        if system.len() != m {
            return Err(Error::DimensionMismatch {
                context: "system length",
                expected: m,
                got: system.len(),
            });
        }
        let mu = self.matrices.step_size;
        let zeros = system.zero_indices();
        let nonzeros = system.nonzero_indices();
        let sum = |v: &[f64], idx: &[usize]| idx.iter().map(|&k| v[k]).sum::<f64>();
        let noise = mu * mu * sum(&self.noise_terms, zeros);
        let cross = sum(&self.cross_terms, zeros);
        let square = sum(&self.square_terms, zeros);
        let count = zeros.len() as f64;

        let c = (2.0 / PI).sqrt();
        let mut iterations = 0;
        let mut converged = true;
        let sigma_z2 = if zeros.is_empty() {
            0.0
        } else {
            match penalty {
                Penalty::L1 => {
                    // count σ² + β c G σ - (noise + β² T) = 0
                    iterations = 1;
                    positive_root(count, beta * c * cross, -(noise + beta * beta * square))?
                }
                Penalty::Reweighted { eps } => {
                    let mut s2 = noise / count;
                    let mut last_msd = f64::NAN;
                    converged = false;
                    for it in 1..=500 {
                        iterations = it;
                        let s = s2.sqrt();
                        let abs = c * s;
                        let theta = 1.0 / (s2 + 2.0 * eps * abs + eps * eps);
                        // -E|w|/(E|w|+ε) = -c σ r with r frozen
                        let r = 1.0 / (abs + eps);
                        let fresh = positive_root(count, beta * c * r * cross, -(noise + beta * beta * square * theta))?;
                        let next = 0.5 * s2 + 0.5 * fresh;
                        let msd = count * next;
                        s2 = next;
                        if (msd - last_msd).abs() <= 1e-12 * msd.abs() {
                            converged = true;
                            break;
                        }
                        last_msd = msd;
                    }
                    s2
                }
            }
        };

        let bias = self.nz_bias(system, beta, penalty);
        let mut sigma_nz2 = Vec::with_capacity(nonzeros.len());
        for (&k, &b) in nonzeros.iter().zip(&bias) {
            let f = steady_gradient(system.weights()[k], penalty);
            let phi = mu * mu * self.noise_terms[k] + beta * self.cross_terms[k] * b * f + beta * beta * self.square_terms[k] * f * f;
            sigma_nz2.push(phi);
        }
        let msd = count * sigma_z2 + sigma_nz2.iter().sum::<f64>();
        Ok(SteadyState {
            msd,
            msd_db: crate::to_db(msd),
            sigma_z2,
            sigma_nz2,
            nz_bias: bias,
            iterations,
            converged,
        })
    }
}

/// `β*` together with `Δ(β) = linear·β + quadratic·β²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaStar {
    pub beta_star: f64,
    pub linear: f64,
    pub quadratic: f64,
}

impl BetaStar {
    /// Steady-state MSD change relative to NSAF.
    pub fn delta(&self, beta: f64) -> f64 {
        self.linear * beta + self.quadratic * beta * beta
    }
}

fn steady_gradient(w: f64, penalty: Penalty) -> f64 {
    let s = if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    };
    match penalty {
        Penalty::L1 => s,
        Penalty::Reweighted { eps } => s / (w.abs() + eps),
    }
}

/// `H_mm`, `Θ_mm` of a zero-mean zero tap with `E|w̃| = abs`.
fn zero_tap_terms(abs: f64, var: f64, penalty: Penalty) -> (f64, f64) {
    match penalty {
        Penalty::L1 => (-abs, 1.0),
        Penalty::Reweighted { eps } => (-abs / (abs + eps), 1.0 / (var + 2.0 * eps * abs + eps * eps)),
    }
}

/// Positive root of `a x² + b x + c = 0` with `a > 0`, `c <= 0`.
fn positive_root(a: f64, b: f64, c: f64) -> Result<f64> {
    let disc = b * b - 4.0 * a * c;
    if !(a > 0.0) || disc < 0.0 {
        return Err(Error::ModelInvalid(format!("no real root for {a}x² + {b}x + {c}")));
    }
    // stable form of (-b + sqrt(disc)) / 2a
    let root = if b >= 0.0 {
        -2.0 * c / (b + disc.sqrt())
    } else {
        (-b + disc.sqrt()) / (2.0 * a)
    };
    if !(root >= 0.0) {
        return Err(Error::ModelInvalid(format!("negative variance root {root}")));
    }
    Ok(root * root)
}

/// Convenience wrapper: factor, then solve.
pub fn steady_state_msd(
    moments: &InputMoments,
    matrices: &VariantMatrices,
    system: &SparseSystem,
    beta: f64,
    penalty: Penalty,
) -> Result<SteadyState> {
    SteadySolver::new(moments, matrices)?.steady_state_msd(system, beta, penalty)
}

/// Convenience wrapper for `E{w(∞)}`.
pub fn steady_state_mean(
    moments: &InputMoments,
    matrices: &VariantMatrices,
    system: &SparseSystem,
    beta: f64,
    penalty: Penalty,
) -> Result<Vec<f64>> {
    Ok(SteadySolver::new(moments, matrices)?.steady_state_mean(system, beta, penalty))
}

/// Which attractor form `matrices` were built for.
pub fn form_of(matrices: &VariantMatrices) -> AttractorForm {
    matrices.form
}
