//! Eigenvalues of 3×3 complex matrices through the characteristic polynomial.

use num_complex::Complex64 as C;

use crate::error::{Error, Result};

pub type Mat3 = [[C; 3]; 3];

/// Coefficients `(a, b, c)` of `λ³ + aλ² + bλ + c = det(λI − M)`.
pub fn char_poly(m: &Mat3) -> (C, C, C) {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    (-tr, minors, -det3(m))
}

pub fn det3(m: &Mat3) -> C {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn poly(a: C, b: C, c: C, x: C) -> (C, C) {
    let p = ((x + a) * x + b) * x + c;
    let dp = (3.0 * x + 2.0 * a) * x + b;
    (p, dp)
}

/// Roots of the monic cubic by Cardano's formula, each polished by Newton.
pub fn cubic_roots(a: C, b: C, c: C) -> [C; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let u3a = -q / 2.0 + disc;
    let u3b = -q / 2.0 - disc;
    let u3 = if u3a.norm() >= u3b.norm() { u3a } else { u3b };
    let omega = C::new(-0.5, 3f64.sqrt() / 2.0);
    let mut roots = [C::new(0.0, 0.0); 3];
    if u3.norm() == 0.0 {
        roots = [C::new(0.0, 0.0); 3];
    } else {
        let u = u3.powf(1.0 / 3.0);
        let mut w = C::new(1.0, 0.0);
        for r in roots.iter_mut() {
            let uk = u * w;
            *r = uk - p / (3.0 * uk);
            w *= omega;
        }
    }
    for r in roots.iter_mut() {
        *r -= a / 3.0;
        for _ in 0..3 {
            let (f, df) = poly(a, b, c, *r);
            if df.norm() == 0.0 {
                break;
            }
            let next = *r - f / df;
            if poly(a, b, c, next).0.norm() < f.norm() {
                *r = next;
            } else {
                break;
            }
        }
    }
    roots
}

/// The three eigenvalues of `m`.
pub fn eig3(m: &Mat3) -> Result<[C; 3]> {
    if m.iter()
        .flatten()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::Numeric("eig3: non-finite matrix entry".into()));
    }
    let (a, b, c) = char_poly(m);
    Ok(cubic_roots(a, b, c))
}
