//! Poincaré disk computations on `(x, y)` coordinates.

use num_complex::Complex64;

fn c(p: &[f64]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// `φ_a(z) = (z − a)/(1 − ā z)`: the disk automorphism sending `a` to 0.
pub fn mobius_to_origin(a: &[f64], z: &[f64]) -> Vec<f64> {
    let (a, z) = (c(a), c(z));
    let w = (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z);
    vec![w.re, w.im]
}

/// `φ_a^{-1}(w) = (w + a)/(1 + ā w)`: sends 0 to `a`.
pub fn mobius_from_origin(a: &[f64], w: &[f64]) -> Vec<f64> {
    let (a, w) = (c(a), c(w));
    let z = (w + a) / (Complex64::new(1.0, 0.0) + a.conj() * w);
    vec![z.re, z.im]
}

/// `2 artanh |φ_u(v)|`, equal to `arccosh(1 + 2|u−v|²/((1−|u|²)(1−|v|²)))`
/// but without cancellation for nearby points.
pub fn dist(u: &[f64], v: &[f64]) -> f64 {
    let (u, v) = (c(u), c(v));
    let num = (u - v).norm();
    if num == 0.0 {
        return 0.0;
    }
    let den = (Complex64::new(1.0, 0.0) - u.conj() * v).norm();
    2.0 * (num / den).min(1.0 - f64::EPSILON).atanh()
}

/// Transport `y` to the origin, walk the radial geodesic, transport back.
pub fn geodesic(y: &[f64], z: &[f64], t: f64) -> Vec<f64> {
    if t == 0.0 {
        return y.to_vec();
    }
    if t == 1.0 {
        return z.to_vec();
    }
    let w = mobius_to_origin(y, z);
    let r = w[0].hypot(w[1]);
    if r == 0.0 {
        return y.to_vec();
    }
    let d = 2.0 * r.atanh();
    let rt = (t * d / 2.0).tanh();
    let u = [w[0] * rt / r, w[1] * rt / r];
    mobius_from_origin(y, &u)
}
