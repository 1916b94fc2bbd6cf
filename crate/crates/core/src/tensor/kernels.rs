use super::Real;

/// `c += op(a) · op(b)` for row-major matrices.
///
/// `op(a)` is `m×k` and `op(b)` is `k×n`. With `trans_a` the buffer `a` holds
/// a `k×m` matrix; with `trans_b` the buffer `b` holds an `n×k` matrix.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    match (trans_a, trans_b) {
        (false, false) => {
            for i in 0..m {
                let crow = &mut c[i * n..(i + 1) * n];
                let arow = &a[i * k..(i + 1) * k];
                for (p, &aip) in arow.iter().enumerate() {
                    if aip == T::zero() {
                        continue;
                    }
                    let brow = &b[p * n..(p + 1) * n];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv += aip * bv;
                    }
                }
            }
        }
        (false, true) => {
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let crow = &mut c[i * n..(i + 1) * n];
                for (j, cv) in crow.iter_mut().enumerate() {
                    *cv += dot(arow, &b[j * k..(j + 1) * k]);
                }
            }
        }
        (true, false) => {
            for p in 0..k {
                let arow = &a[p * m..(p + 1) * m];
                let brow = &b[p * n..(p + 1) * n];
                for (i, &api) in arow.iter().enumerate() {
                    if api == T::zero() {
                        continue;
                    }
                    let crow = &mut c[i * n..(i + 1) * n];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv += api * bv;
                    }
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut acc = T::zero();
                    for p in 0..k {
                        acc += a[p * m + i] * b[j * k + p];
                    }
                    c[i * n + j] += acc;
                }
            }
        }
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four partial sums keep the loop vectorizable
    let mut s = [T::zero(); 4];
    let chunks = a.len() / 4;
    for q in 0..chunks {
        let o = q * 4;
        s[0] += a[o] * b[o];
        s[1] += a[o + 1] * b[o + 1];
        s[2] += a[o + 2] * b[o + 2];
        s[3] += a[o + 3] * b[o + 3];
    }
    let mut tail = T::zero();
    for o in chunks * 4..a.len() {
        tail += a[o] * b[o];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}
