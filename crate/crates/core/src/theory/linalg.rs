//! Column-stacking vectorisation and Kronecker products.
//!
//! Index convention: `vec(X)[j·M + i] = X[i, j]` and
//! `(X ⊗ Y)[i·p + k, j·q + l] = X[i, j] · Y[k, l]` for `Y` of size `p × q`,
//! so that `vec(X Σ Y) = (Yᵀ ⊗ X) vec(Σ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stacks the columns of `x`.
pub fn vec(x: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra storage is column-major
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`] for a square matrix.
pub fn unvec(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(Error::DimensionMismatch {
            context: "unvec length (perfect square)",
            expected: n * n,
            got: v.len(),
        });
    }
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}

pub fn kron(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    x.kronecker(y)
}

/// `X ⊗ I_m` for square `X`.
pub fn kron_identity_right(x: &DMatrix<f64>) -> DMatrix<f64> {
    kron(x, &DMatrix::identity(x.nrows(), x.nrows()))
}

/// `I_m ⊗ X` for square `X`.
pub fn kron_identity_left(x: &DMatrix<f64>) -> DMatrix<f64> {
    kron(&DMatrix::identity(x.nrows(), x.nrows()), x)
}

pub(crate) fn symmetrize(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let a = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = a;
            x[(j, i)] = a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Substream};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, Substream::Moments);
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    fn max_abs(v: &DVector<f64>) -> f64 {
        v.iter().fold(0.0, |a: f64, b| a.max(b.abs()))
    }

    #[test]
    fn vec_of_identity() {
        let v = vec(&DMatrix::identity(2, 2));
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(unvec(&v).unwrap(), DMatrix::identity(2, 2));
        assert!(unvec(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn kron_of_identities() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2), DMatrix::identity(4, 4));
    }

    #[test]
    fn kron_index_convention() {
        let x = random(2, 3, 1);
        let y = random(3, 2, 2);
        let k = kron(&x, &y);
        for i in 0..2 {
            for j in 0..3 {
                for a in 0..3 {
                    for b in 0..2 {
                        assert_eq!(k[(i * 3 + a, j * 2 + b)], x[(i, j)] * y[(a, b)]);
                    }
                }
            }
        }
    }

    #[test]
    fn vec_product_identity() {
        for seed in 0..5 {
            let x = random(3, 3, 10 + seed);
            let s = random(3, 3, 20 + seed);
            let y = random(3, 3, 30 + seed);
            let lhs = vec(&(&x * &s * &y));
            let rhs = kron(&y.transpose(), &x) * vec(&s);
            assert!(max_abs(&(lhs - rhs)) < 1e-12);
        }
    }

    #[test]
    fn kron_identity_helpers() {
        let x = random(3, 3, 5);
        assert_eq!(kron_identity_right(&x), kron(&x, &DMatrix::identity(3, 3)));
        assert_eq!(kron_identity_left(&x), kron(&DMatrix::identity(3, 3), &x));
    }
}
