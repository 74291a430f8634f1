//! Dense vector helpers over `f64` slices.

use crate::{Error, Result};

/// Norms below this are treated as zero by the cosine routines.
pub const ZERO_NORM: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, or 0 when either vector has (near) zero norm.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(cosine(a, b))
}

/// Unchecked variant of [`cosine_sim`] for hot loops where dims are known to agree.
#[inline]
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity plus its gradients with respect to both arguments.
///
/// Returns `(sim, d sim/d a, d sim/d b)`. At a zero-norm argument the value
/// and both gradients are zero.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM || nb < ZERO_NORM {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let c = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| y * inv - c * x / (na * na))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x * inv - c * y / (nb * nb))
        .collect();
    (c, ga, gb)
}

/// Arithmetic mean of a non-empty set of equal-length vectors.
pub fn mean<V: AsRef<[f64]>>(vs: &[V]) -> Result<Vec<f64>> {
    let first = vs.first().ok_or(Error::Empty("mean of an empty set"))?;
    let dim = first.as_ref().len();
    let mut out = vec![0.0; dim];
    for v in vs {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        axpy(1.0, v, &mut out);
    }
    let inv = 1.0 / vs.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable `log(sum(exp(xs)))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax of `xs`, computed with the max-shift.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_fixtures() {
        assert!((cosine_sim(&[3.0, -1.0], &[3.0, -1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_dim_mismatch() {
        assert!(matches!(
            cosine_sim(&[1.0], &[1.0, 2.0]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn zero_vector_gives_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        let (s, ga, gb) = cosine_with_grad(&[0.0, 0.0], &[1.0, 2.0]);
        assert_eq!(s, 0.0);
        assert!(ga.iter().chain(&gb).all(|g| *g == 0.0));
    }

    #[test]
    fn cosine_grad_matches_finite_differences() {
        let a = [0.3, -1.2, 0.7];
        let b = [1.1, 0.4, -0.5];
        let (_, ga, gb) = cosine_with_grad(&a, &b);
        let h = 1e-6;
        for i in 0..3 {
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let fd = (cosine(&ap, &b) - cosine(&am, &b)) / (2.0 * h);
            assert!((fd - ga[i]).abs() < 1e-8);
            let mut bp = b;
            let mut bm = b;
            bp[i] += h;
            bm[i] -= h;
            let fd = (cosine(&a, &bp) - cosine(&a, &bm)) / (2.0 * h);
            assert!((fd - gb[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn lse_survives_overflow() {
        let xs = [1000.0, 1000.0];
        assert!((log_sum_exp(&xs) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_bounded_scale_invariant(a in vec3(), b in vec3(), alpha in 0.01f64..100.0) {
            let s = cosine(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((s - cosine(&b, &a)).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * alpha).collect();
            if norm(&a) > 1e-6 {
                prop_assert!((s - cosine(&scaled, &b)).abs() < 1e-9);
            }
        }
    }
}
