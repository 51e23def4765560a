//! Small complex helpers that need more care than `num_complex` gives by default.

use num_complex::Complex64;

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Principal square root with Re >= 0; on the cut (negative reals) the root with Im >= 0.
pub fn sqrt_principal(z: C64) -> C64 {
    if z.im == 0.0 {
        return if z.re >= 0.0 {
            c(z.re.sqrt(), 0.0)
        } else {
            c(0.0, (-z.re).sqrt())
        };
    }
    let r = z.sqrt();
    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
        -r
    } else {
        r
    }
}

/// exp(z) - 1 without cancellation for small |z|.
pub fn expm1(z: C64) -> C64 {
    if z.im == 0.0 {
        return c(z.re.exp_m1(), 0.0);
    }
    let half = (0.5 * z.im).sin();
    c(
        z.re.exp_m1() * z.im.cos() - 2.0 * half * half,
        z.re.exp() * z.im.sin(),
    )
}

/// (exp(z) - 1) / z, equal to 1 at z = 0.
pub fn phi1(z: C64) -> C64 {
    if z.norm() < 1e-2 {
        // Taylor remainder is below z^6/5040 < 2e-16.
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for n in 2..=7 {
            term = term * z / n as f64;
            sum += term;
        }
        sum
    } else {
        expm1(z) / z
    }
}
