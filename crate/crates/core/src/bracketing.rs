//! Brent's method on a sign-changing bracket.

/// Outcome of a bracketed refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refined {
    pub root: f64,
    pub iterations: usize,
}

/// Refines a root of `f` in `[a, b]` given `f(a)` and `f(b)` of opposite sign (or zero).
/// Stops when the bracket is narrower than `rtol * |x| + 4 eps |x|`.
pub fn brent<F>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, rtol: f64, max_iter: usize) -> Refined
where
    F: FnMut(f64) -> f64,
{
    if fa == 0.0 {
        return Refined { root: a, iterations: 0 };
    }
    if fb == 0.0 {
        return Refined { root: b, iterations: 0 };
    }
    debug_assert!(fa.signum() != fb.signum(), "brent needs a sign change");
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * rtol * b.abs();
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Refined { root: b, iterations: iter };
        }
        if e.abs() < tol || fa.abs() <= fb.abs() {
            d = m;
            e = m;
        } else {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Refined { root: b, iterations: max_iter }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let f = |x: f64| x * x - 2.0;
        let r = brent(f, 0.0, 2.0, f(0.0), f(2.0), 1e-15, 100);
        assert!((r.root - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn finds_tan_fixed_point() {
        let f = |x: f64| x.sin() - x * x.cos();
        let r = brent(f, 4.0, 4.6, f(4.0), f(4.6), 1e-15, 100);
        assert!((r.root - 4.493_409_457_909_064).abs() < 1e-13);
    }

    #[test]
    fn handles_non_smooth_indicator() {
        let f = |x: f64| (x - 1.3).signum() * (x - 1.3).abs().powf(0.25);
        let r = brent(f, 0.0, 3.0, f(0.0), f(3.0), 1e-14, 200);
        assert!((r.root - 1.3).abs() < 1e-12);
    }
}
