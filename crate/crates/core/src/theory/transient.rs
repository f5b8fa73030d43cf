//! Mean and covariance recursions of the weight-error vector.

use nalgebra::{DMatrix, DVector};

use crate::adaptive::{Penalty, Variant};
use crate::error::{Error, Result};

use super::gaussian::{attractor_moments, build_h_theta};
use super::linalg::{symmetrize, vec};
use super::moments::{check_theory_size, InputMoments};

/// How the attractor enters the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttractorForm {
    /// `P = I`.
    Quasi,
    /// `P = I - Σ u_i u_iᵀ/||u_i||²`.
    Projected,
}

impl AttractorForm {
    pub fn of(variant: Variant) -> Result<Self> {
        if variant.is_fullband() {
            return Err(Error::invalid("variant", format!("no subband theory for {variant}")));
        }
        Ok(if variant.is_projected() {
            AttractorForm::Projected
        } else {
            AttractorForm::Quasi
        })
    }
}

/// `F1..F4` and `E{P}` for one step size and attractor form.
#[derive(Debug, Clone)]
pub struct VariantMatrices {
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub f3: DMatrix<f64>,
    pub f4: DMatrix<f64>,
    pub mean_p: DMatrix<f64>,
    pub step_size: f64,
    pub form: AttractorForm,
}

/// Adds `c (X ⊗ I)` and `d (I ⊗ X)` to `target` without forming the products.
fn add_kron_identity(target: &mut DMatrix<f64>, x: &DMatrix<f64>, c: f64, d: f64) {
    let m = x.nrows();
    for i in 0..m {
        for j in 0..m {
            let v = x[(i, j)];
            for k in 0..m {
                target[(i * m + k, j * m + k)] += c * v;
                target[(k * m + i, k * m + j)] += d * v;
            }
        }
    }
}

/// Builds the recursion matrices for step size `mu`.
pub fn build_variant_matrices(moments: &InputMoments, mu: f64, form: AttractorForm) -> Result<VariantMatrices> {
    let m = moments.filter_len();
    check_theory_size(m)?;
    let ea = moments.mean_a();
    let psi = moments.kron_aa();
    let eye = DMatrix::<f64>::identity(m * m, m * m);

    let mut f1 = &eye + psi * (mu * mu);
    add_kron_identity(&mut f1, ea, -mu, -mu);

    let (f2, f3, f4, mean_p) = match form {
        AttractorForm::Quasi => {
            let mut f2 = eye.clone();
            add_kron_identity(&mut f2, ea, 0.0, -mu);
            let mut f3 = eye.clone();
            add_kron_identity(&mut f3, ea, -mu, 0.0);
            (f2, f3, eye, DMatrix::identity(m, m))
        }
        AttractorForm::Projected => {
            let mut f2 = &eye + psi * mu;
            add_kron_identity(&mut f2, ea, -1.0, -mu);
            let mut f3 = &eye + psi * mu;
            add_kron_identity(&mut f3, ea, -mu, -1.0);
            let mut f4 = &eye + psi;
            add_kron_identity(&mut f4, ea, -1.0, -1.0);
            (f2, f3, f4, DMatrix::identity(m, m) - ea)
        }
    };
    Ok(VariantMatrices {
        f1,
        f2,
        f3,
        f4,
        mean_p,
        step_size: mu,
        form,
    })
}

/// First and second moments of `w̃(k) = w° - w(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientState {
    /// `E{w̃(k)}`.
    pub mean_error: DVector<f64>,
    /// `Φ(k) = E{w̃(k) w̃ᵀ(k)}`; its column-major storage is `vec(Φ)`.
    pub cov: DMatrix<f64>,
    pub frame: u64,
    /// Variance clamps applied so far.
    pub clamp_count: u64,
}

impl TransientState {
    /// Deterministic start `w(0)`: `E{w̃} = w° - w(0)`, `Φ = w̃ w̃ᵀ`.
    pub fn initial(w_opt: &[f64], w0: &[f64]) -> Result<Self> {
        if w_opt.len() != w0.len() {
            return Err(Error::DimensionMismatch {
                context: "initial weights",
                expected: w_opt.len(),
                got: w0.len(),
            });
        }
        let e = DVector::from_iterator(w_opt.len(), w_opt.iter().zip(w0).map(|(a, b)| a - b));
        let cov = &e * e.transpose();
        Ok(Self {
            mean_error: e,
            cov,
            frame: 0,
            clamp_count: 0,
        })
    }

    /// `z_m(k)` and `σ_m²(k) = Φ_mm - z_m²` (floored at 0).
    pub fn per_coeff(&self) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = self.mean_error.iter().copied().collect();
        let var = z
            .iter()
            .enumerate()
            .map(|(m, zm)| (self.cov[(m, m)] - zm * zm).max(0.0))
            .collect();
        (z, var)
    }

    /// Re-centres the moments after the unknown system jumps by `delta`
    /// (`w̃ -> w̃ + δ`, so `Φ -> Φ + z δᵀ + δ zᵀ + δ δᵀ`).
    pub fn shift_optimum(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.mean_error.len() {
            return Err(Error::DimensionMismatch {
                context: "optimum shift",
                expected: self.mean_error.len(),
                got: delta.len(),
            });
        }
        let d = DVector::from_column_slice(delta);
        let zd = &self.mean_error * d.transpose();
        self.cov += &zd + zd.transpose() + &d * d.transpose();
        self.mean_error += d;
        Ok(())
    }

    pub fn vec_cov(&self) -> DVector<f64> {
        vec(&self.cov)
    }
}

/// `MSD(k) = tr Φ(k)`.
pub fn msd(state: &TransientState) -> f64 {
    state.cov.trace()
}

pub fn msd_db(state: &TransientState) -> f64 {
    crate::to_db(msd(state))
}

/// Advances both recursions by one frame.
///
/// Attractor moments are evaluated from state `k` and feed both the mean and
/// the covariance update. `penalty = None` or `beta = 0` runs the plain NSAF
/// model.
pub fn transient_step(
    state: &TransientState,
    matrices: &VariantMatrices,
    noise_d: &DMatrix<f64>,
    mean_a: &DMatrix<f64>,
    beta: f64,
    penalty: Option<Penalty>,
    w_opt: &[f64],
) -> Result<TransientState> {
    let m = w_opt.len();
    if state.mean_error.len() != m || matrices.f1.nrows() != m * m {
        return Err(Error::DimensionMismatch {
            context: "transient state size",
            expected: m,
            got: state.mean_error.len(),
        });
    }
    let mu = matrices.step_size;
    let mut clamps = state.clamp_count;

    let mut mean_next = &state.mean_error - mean_a * &state.mean_error * mu;
    let mut vec_next = &matrices.f1 * state.vec_cov() + vec(noise_d) * (mu * mu);

    if let (Some(p), true) = (penalty, beta != 0.0) {
        let z: Vec<f64> = state.mean_error.iter().copied().collect();
        let mut var = Vec::with_capacity(m);
        for k in 0..m {
            let v = state.cov[(k, k)] - z[k] * z[k];
            if v < -1e-10 {
                clamps += 1;
            }
            var.push(v.max(0.0));
        }
        let mom = attractor_moments(w_opt, &z, &var, p);
        let (h, theta) = build_h_theta(&z, &mom);
        let ef = DVector::from_column_slice(&mom.mean_f);
        mean_next += &matrices.mean_p * ef * beta;
        vec_next += (&matrices.f2 * vec(&h) + &matrices.f3 * vec(&h.transpose())) * beta;
        vec_next += &matrices.f4 * vec(&theta) * (beta * beta);
    }

    let mut cov = DMatrix::from_column_slice(m, m, vec_next.as_slice());
    symmetrize(&mut cov);
    Ok(TransientState {
        mean_error: mean_next,
        cov,
        frame: state.frame + 1,
        clamp_count: clamps,
    })
}

/// Runs `frames` steps from `w(0) = 0`, returning `MSD(k)` for `k = 0..frames`
/// and the final state.
pub fn transient_curve(
    moments: &InputMoments,
    matrices: &VariantMatrices,
    beta: f64,
    penalty: Option<Penalty>,
    w_opt: &[f64],
    frames: usize,
) -> Result<(Vec<f64>, TransientState)> {
    let noise_d = moments.noise_d();
    let mut state = TransientState::initial(w_opt, &vec![0.0; w_opt.len()])?;
    let mut curve = Vec::with_capacity(frames);
    for _ in 0..frames {
        curve.push(msd(&state));
        state = transient_step(&state, matrices, &noise_d, moments.mean_a(), beta, penalty, w_opt)?;
    }
    Ok((curve, state))
}
