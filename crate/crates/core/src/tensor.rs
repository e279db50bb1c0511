//! Index conventions: Greek indices run over 0..4, Latin over 1..4 stored as 0..3
//! in spatial arrays. Raising and lowering always uses `ETA`.

use crate::jet::Scalar;

/// Minkowski metric diagonal; it is its own inverse.
pub const ETA: [f64; 4] = [-1.0, 1.0, 1.0, 1.0];

/// `(indices, eps_lower)` for every permutation of (0,1,2,3), with
/// `eps_lower = ε_{abcd}` normalized by `ε_{0123} = 1`.
pub const EPS_PERMS: [([usize; 4], f64); 24] = build_perms();

const fn build_perms() -> [([usize; 4], f64); 24] {
    let mut out = [([0usize; 4], 0.0f64); 24];
    let mut n = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                let d = 6usize.saturating_sub(a + b + c);
                if a + b + c <= 6 && a != b && a != c && b != c && d < 4 && d != a && d != b && d != c {
                    let idx = [a, b, c, d];
                    let mut inv = 0;
                    let mut i = 0;
                    while i < 4 {
                        let mut j = i + 1;
                        while j < 4 {
                            if idx[i] > idx[j] {
                                inv += 1;
                            }
                            j += 1;
                        }
                        i += 1;
                    }
                    out[n] = (idx, if inv % 2 == 0 { 1.0 } else { -1.0 });
                    n += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

const EPS_TABLE: [f64; 256] = build_table();

const fn build_table() -> [f64; 256] {
    let mut t = [0.0; 256];
    let mut k = 0;
    while k < 24 {
        let (p, s) = EPS_PERMS[k];
        t[p[0] * 64 + p[1] * 16 + p[2] * 4 + p[3]] = s;
        k += 1;
    }
    t
}

/// `ε_{abcd}` with `ε_{0123} = 1`.
#[inline]
pub fn eps_lower(a: usize, b: usize, c: usize, d: usize) -> f64 {
    EPS_TABLE[a * 64 + b * 16 + c * 4 + d]
}

/// `ε^{abcd}`; raising all four indices with η flips the sign.
#[inline]
pub fn eps_upper(a: usize, b: usize, c: usize, d: usize) -> f64 {
    -eps_lower(a, b, c, d)
}

/// `Σ ε^{abcd} f(a,b,c,d)` over the 24 nonzero components.
#[inline]
pub fn eps_fold<T: Scalar>(f: impl Fn(usize, usize, usize, usize) -> T) -> T {
    let mut acc = T::zero();
    for (p, s) in EPS_PERMS.iter() {
        acc = acc - f(p[0], p[1], p[2], p[3]) * *s;
    }
    acc
}

/// `W^a = ε^{abcd} f(b,c,d)` for free first index `a`.
#[inline]
pub fn eps_vec<T: Scalar>(f: impl Fn(usize, usize, usize) -> T) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for (p, s) in EPS_PERMS.iter() {
        out[p[0]] = out[p[0]] - f(p[1], p[2], p[3]) * *s;
    }
    out
}

#[inline]
pub fn lower<T: Scalar>(v: &[T; 4]) -> [T; 4] {
    [-v[0], v[1], v[2], v[3]]
}

/// `η^{ab} x_a y_b`, equally `η_{ab} x^a y^b`.
#[inline]
pub fn eta_dot<T: Scalar>(x: &[T; 4], y: &[T; 4]) -> T {
    -(x[0] * y[0]) + x[1] * y[1] + x[2] * y[2] + x[3] * y[3]
}

/// Plain contraction `x^a y_a`.
#[inline]
pub fn dot<T: Scalar>(x: &[T; 4], y: &[T; 4]) -> T {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2] + x[3] * y[3]
}

/// Determinant of a 4x4 matrix by cofactor expansion.
pub fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let sub = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let s0 = sub(0, 1, 0, 1);
    let s1 = sub(0, 1, 0, 2);
    let s2 = sub(0, 1, 0, 3);
    let s3 = sub(0, 1, 1, 2);
    let s4 = sub(0, 1, 1, 3);
    let s5 = sub(0, 1, 2, 3);
    let c5 = sub(2, 3, 2, 3);
    let c4 = sub(2, 3, 1, 3);
    let c3 = sub(2, 3, 1, 2);
    let c2 = sub(2, 3, 0, 3);
    let c1 = sub(2, 3, 0, 2);
    let c0 = sub(2, 3, 0, 1);
    s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
}

/// Solves `A x = b` for a dense matrix by LU with partial pivoting on the
/// zeroth-order coefficients. Returns `None` when a pivot vanishes.
pub fn lu_solve<T: Scalar, const N: usize>(mut a: [[T; N]; N], mut b: [T; N]) -> Option<[T; N]> {
    for k in 0..N {
        let mut piv = k;
        let mut best = a[k][k].value().abs();
        for (r, row) in a.iter().enumerate().skip(k + 1) {
            let v = row[k].value().abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if piv != k {
            a.swap(k, piv);
            b.swap(k, piv);
        }
        for r in k + 1..N {
            let f = a[r][k] / a[k][k];
            for c in k + 1..N {
                a[r][c] = a[r][c] - f * a[k][c];
            }
            a[r][k] = T::zero();
            b[r] = b[r] - f * b[k];
        }
    }
    let mut x = [T::zero(); N];
    for k in (0..N).rev() {
        let mut acc = b[k];
        for c in k + 1..N {
            acc = acc - a[k][c] * x[c];
        }
        x[k] = acc / a[k][k];
    }
    Some(x)
}
