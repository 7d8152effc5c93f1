//! Shared oracle machinery for integration tests.
//!
//! Everything here is deliberately independent of the library's numerical
//! paths: a recursive adaptive Simpson integrator (the library uses
//! Gauss-Kronrod), and a double-double accumulator for extended-precision
//! series summation.

#![allow(dead_code)]

use num_complex::Complex64;

/// Adaptive Simpson quadrature for complex integrands, absolute tolerance.
///
/// Panics if the recursion depth is exhausted; oracles must converge.
pub fn simpson_complex(f: &impl Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    fn rec(
        f: &impl Fn(f64) -> Complex64,
        a: f64,
        fa: Complex64,
        b: f64,
        fb: Complex64,
        m: f64,
        fm: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // The tolerance is deliberately NOT halved per level: the rounding
        // noise of `delta` scales with the interval width, so a fixed bar
        // guarantees termination while the per-leaf errors stay incoherent.
        if delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        assert!(depth > 0, "oracle quadrature depth exhausted on [{a}, {b}]");
        rec(f, a, fa, m, fm, lm, flm, left, tol, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 52)
}

/// Piecewise wrapper: integrate across explicit breakpoints.
pub fn simpson_complex_segments(
    f: &impl Fn(f64) -> Complex64,
    breaks: &[f64],
    tol: f64,
) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for pair in breaks.windows(2) {
        total += simpson_complex(f, pair[0], pair[1], tol);
    }
    total
}

/// Faddeeva oracle: adaptive quadrature of the defining integral
/// `w(z) = (i/pi) int exp(-t^2) / (z - t) dt`, valid for `Im z >= 0`.
///
/// The near-pole part is subtracted analytically:
/// `int (exp(-t^2) - exp(-x^2))/(z-t) dt + exp(-x^2) ln((z+L)/(z-L))`,
/// leaving a smooth integrand even on the real axis (where the singular
/// piece reduces to the principal value plus the half-residue, both carried
/// exactly by the complex logarithm's upper-half-plane branch).
pub fn faddeeva_oracle(z: Complex64) -> Complex64 {
    assert!(z.im >= 0.0);
    let x = z.re;
    let gx = (-x * x).exp();
    let l = 13.0;
    // Anchor irrational-offset breakpoints around the (near-)singular point
    // so no Simpson node ever lands exactly on t = x when Im z = 0.
    let mut breaks = vec![-l, l];
    for d in [-2.113, -0.511, 0.493, 2.077] {
        let p = x + d;
        if p > -l && p < l {
            breaks.push(p);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let f = |t: f64| ((-t * t).exp() - gx) * (z - t).inv();
    let smooth = simpson_complex_segments(&f, &breaks, 1e-15);
    let log_term = gx * ((z + l).ln() - (z - l).ln());
    Complex64::new(0.0, 1.0 / std::f64::consts::PI) * (smooth + log_term)
}

/// Double-double (compensated pair) arithmetic for series oracles.
#[derive(Clone, Copy, Debug)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn mul_f64(self, k: f64) -> Dd {
        let (p, e) = two_prod(self.hi, k);
        let e = e + self.lo * k;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div_f64(self, d: f64) -> Dd {
        let q0 = self.hi / d;
        let (p, e) = two_prod(q0, d);
        let r = (self.hi - p) - e + self.lo;
        let q1 = r / d;
        let (hi, lo) = quick_two_sum(q0, q1);
        Dd { hi, lo }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    (s, (a - (s - v)) + (b - v))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, f64::mul_add(a, b, -p))
}

/// `1F1(a; b; x)` for real arguments by double-double term recursion.
pub fn kummer_series_dd(a: f64, b: f64, x: f64, max_terms: usize) -> f64 {
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for n in 0..max_terms {
        let nf = n as f64;
        term = term
            .mul_f64(a + nf)
            .mul_f64(x)
            .div_f64(b + nf)
            .div_f64(nf + 1.0);
        sum = sum.add(term);
        if term.value().abs() <= 1e-34 * sum.value().abs() {
            return sum.value();
        }
    }
    panic!("dd series did not converge");
}
