//! Closed-form helpers for 2x2 real matrices.

use num_complex::Complex64;

pub type Mat2 = [[f64; 2]; 2];

pub fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `tr^2 - 4 det`; positive means two distinct real eigenvalues.
pub fn discriminant(m: &Mat2) -> f64 {
    let t = trace(m);
    t * t - 4.0 * det(m)
}

/// Roots of `s^2 - tr s + det`. The root with the larger real part (or the
/// positive imaginary part) comes first.
pub fn eigenvalues(m: &Mat2) -> [Complex64; 2] {
    let half = 0.5 * trace(m);
    let disc = 0.25 * discriminant(m);
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller-magnitude root
        let big = if half >= 0.0 { half + r } else { half - r };
        let small = if big != 0.0 { det(m) / big } else { 0.0 };
        let (a, b) = if big >= small {
            (big, small)
        } else {
            (small, big)
        };
        [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
    } else {
        let w = (-disc).sqrt();
        [Complex64::new(half, w), Complex64::new(half, -w)]
    }
}

/// Eigenvalues of a symmetric matrix, smallest first.
pub fn symmetric_eigenvalues(m: &Mat2) -> [f64; 2] {
    let half = 0.5 * (m[0][0] + m[1][1]);
    let d = 0.5 * (m[0][0] - m[1][1]);
    let r = d.hypot(m[0][1]);
    [half - r, half + r]
}

pub fn is_hurwitz(m: &Mat2) -> bool {
    eigenvalues(m).iter().all(|z| z.re < 0.0)
}

/// Central-difference Jacobian of a planar vector field at `x`.
pub fn jacobian_fd(f: impl Fn([f64; 2]) -> [f64; 2], x: [f64; 2], h: f64) -> Mat2 {
    let mut jac = [[0.0; 2]; 2];
    for k in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[k] += h;
        xm[k] -= h;
        let (fp, fm) = (f(xp), f(xm));
        for i in 0..2 {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}
