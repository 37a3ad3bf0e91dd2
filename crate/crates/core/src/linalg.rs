//! Small dense vector and matrix helpers. Matrices are row-major slices.

use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

pub fn mean_abs<T: Scalar>(a: &[T]) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.iter().map(|x| x.abs()).sum::<T>() / T::from_count(a.len())
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

/// `alpha * a + beta * b`.
pub fn axpby<T: Scalar>(alpha: T, a: &[T], beta: T, b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| alpha * x + beta * y).collect()
}

/// `‖a − b‖₂ / ‖b‖₂`, falling back to the absolute error when `b = 0`.
pub fn relative_l2<T: Scalar>(a: &[T], b: &[T]) -> T {
    let num = norm2(&sub(a, b));
    let den = norm2(b);
    if den > T::zero() {
        num / den
    } else {
        num
    }
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `M x` for an `rows × cols` matrix.
pub fn matvec<T: Scalar>(m: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    (0..rows).map(|r| dot(&m[r * cols..(r + 1) * cols], x)).collect()
}

/// `Mᵀ y` for an `rows × cols` matrix.
pub fn matvec_t<T: Scalar>(m: &[T], rows: usize, cols: usize, y: &[T]) -> Vec<T> {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    let mut out = vec![T::zero(); cols];
    for (r, &yr) in y.iter().enumerate() {
        if yr == T::zero() {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *o += w * yr;
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` where eigenvector `k` is column `k`
/// of the row-major `n × n` matrix, sorted by descending eigenvalue (ties
/// broken by original index so the result is deterministic).
pub fn symmetric_eigen<T: Scalar>(matrix: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    let scale = a.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    let threshold = T::epsilon() * T::epsilon() * scale * scale;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new_col] = v[r * n + old_col];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_reconstructs_matrix() {
        let m = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let (vals, vecs) = symmetric_eigen(&m, 3);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        for r in 0..3 {
            for c in 0..3 {
                let rebuilt: f64 = (0..3).map(|k| vecs[r * 3 + k] * vals[k] * vecs[c * 3 + k]).sum();
                assert!((rebuilt - m[r * 3 + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_input_is_left_alone() {
        let m = [1.0, 0.0, 0.0, 2.0];
        let (vals, vecs) = symmetric_eigen(&m, 2);
        assert_eq!(vals, vec![2.0, 1.0]);
        assert_eq!(vecs, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn relative_l2_of_zero_reference_is_absolute() {
        assert_eq!(relative_l2(&[3.0, 4.0], &[0.0, 0.0]), 5.0);
    }
}
