//! Composite Gauss-Legendre quadrature on `[-1, 1]`, used as an independent oracle for the
//! closed-form integrals.

use gauss_quad::GaussLegendre;

use crate::exppoly::{ExpPoly, C64};

const NODES: usize = 20;
const MAX_PANELS: usize = 4096;

/// Integral of `f` over `[-1, 1]`. Panels are doubled until two successive estimates agree
/// to `rtol` (relative to the sum of absolute values), or the panel budget runs out.
pub fn integrate<F: Fn(f64) -> C64>(f: F, rtol: f64) -> C64 {
    let rule = GaussLegendre::new(NODES).expect("fixed node count is valid");
    let composite = |panels: usize| -> (C64, f64) {
        let h = 2.0 / panels as f64;
        let (mut sum, mut abs) = (C64::new(0.0, 0.0), 0.0);
        for i in 0..panels {
            let (a, b) = (-1.0 + i as f64 * h, -1.0 + (i + 1) as f64 * h);
            let re = rule.integrate(a, b, |x| f(x).re);
            let im = rule.integrate(a, b, |x| f(x).im);
            let mag = rule.integrate(a, b, |x| f(x).norm());
            sum += C64::new(re, im);
            abs += mag;
        }
        (sum, abs)
    };
    let (mut prev, _) = composite(4);
    let mut panels = 8;
    loop {
        let (cur, abs) = composite(panels);
        if (cur - prev).norm() <= rtol * abs.max(f64::MIN_POSITIVE) || panels >= MAX_PANELS {
            return cur;
        }
        prev = cur;
        panels *= 2;
    }
}

/// Numerical `int_{-1}^{1} f` for an exponential polynomial.
pub fn integrate_exppoly(f: &ExpPoly, rtol: f64) -> C64 {
    integrate(|x| f.evaluate(x), rtol)
}
