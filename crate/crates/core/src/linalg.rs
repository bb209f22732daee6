//! Fixed-size 2x2 helpers. Matrices are row-major `[[a, b], [c, d]]`.

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

pub fn frobenius(a: &Mat2) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// `max |aᵀa - I|` entrywise.
pub fn orthonormality_defect(a: &Mat2) -> f64 {
    let g = mul(&transpose(a), a);
    sub(&g, &IDENTITY)
        .iter()
        .flatten()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Singular values and the polar factor `U Vᵀ` of a 2x2 matrix.
///
/// Uses the split of `m` into a rotation-like part `(a+d, c-b)` and a
/// reflection-like part `(a-d, c+b)`: the singular values are `(p+q)/2` and
/// `|p-q|/2`, and the nearest orthonormal matrix is the rotation when
/// `p > q`, the reflection when `q > p`.
pub fn polar(m: &Mat2) -> (f64, f64, Mat2) {
    let [[a, b], [c, d]] = *m;
    let (e, f) = (0.5 * (a + d), 0.5 * (c - b));
    let (g, h) = (0.5 * (a - d), 0.5 * (c + b));
    let p = e.hypot(f);
    let q = g.hypot(h);
    let s_max = p + q;
    let s_min = (p - q).abs();
    let q_mat = if p >= q {
        let (cs, sn) = (e / p, f / p);
        [[cs, -sn], [sn, cs]]
    } else {
        let (cs, sn) = (g / q, h / q);
        [[cs, sn], [sn, -cs]]
    };
    (s_max, s_min, q_mat)
}

/// Eigen-decomposition of a symmetric 2x2 matrix: columns of the returned
/// matrix are unit eigenvectors for the returned eigenvalues (descending).
pub fn sym_eigen(m: &Mat2) -> ([f64; 2], Mat2) {
    let (a, b, d) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b);
    let (l1, l2) = (mean + r, mean - r);
    if b.abs() < 1e-300 {
        return if a >= d {
            ([a, d], IDENTITY)
        } else {
            ([d, a], [[0.0, 1.0], [1.0, 0.0]])
        };
    }
    // eigenvector for l1: (b, l1 - a) or (l1 - d, b)
    let (x, y) = if (l1 - a).abs() > (l1 - d).abs() {
        (b, l1 - a)
    } else {
        (l1 - d, b)
    };
    let n = x.hypot(y);
    let (x, y) = (x / n, y / n);
    ([l1, l2], [[x, -y], [y, x]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_of_rotation_is_itself() {
        let th: f64 = 0.7;
        let r = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
        let (s1, s2, q) = polar(&r);
        assert!((s1 - 1.0).abs() < 1e-15 && (s2 - 1.0).abs() < 1e-15);
        assert!(frobenius(&sub(&q, &r)) < 1e-15);
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let m = [[1.3, -0.4], [2.2, 0.9]];
        let (s1, s2, _) = polar(&m);
        let (ev, _) = sym_eigen(&mul(&transpose(&m), &m));
        assert!((s1 * s1 - ev[0]).abs() < 1e-12);
        assert!((s2 * s2 - ev[1]).abs() < 1e-12);
    }

    #[test]
    fn sym_eigen_reconstructs() {
        let m = [[0.008, 0.003], [0.003, 0.011]];
        let (l, v) = sym_eigen(&m);
        let lam = [[l[0], 0.0], [0.0, l[1]]];
        let back = mul(&mul(&v, &lam), &transpose(&v));
        assert!(frobenius(&sub(&back, &m)) < 1e-15);
        assert!(orthonormality_defect(&v) < 1e-15);
    }
}
