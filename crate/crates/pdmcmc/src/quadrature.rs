//! Numeric integration: fixed-order Gauss-Legendre panels for smooth path
//! integrals and adaptive Simpson for integrals over mixture indices.

/// 16-point Gauss-Legendre abscissae on (0, 1), symmetric about 1/2.
const GL16_X: [f64; 8] = [
    0.005_299_532_504_175_03,
    0.027_712_488_463_383_7,
    0.067_184_398_806_084_13,
    0.122_297_795_822_498_46,
    0.191_061_877_798_678_12,
    0.270_991_611_171_386_5,
    0.359_198_224_610_370_55,
    0.452_493_745_081_181_3,
];
const GL16_W: [f64; 8] = [
    0.013_576_229_705_877_047,
    0.031_126_761_969_323_946,
    0.047_579_255_841_246_39,
    0.062_314_485_627_766_94,
    0.074_797_994_408_288_37,
    0.084_578_259_697_501_27,
    0.091_301_707_522_461_79,
    0.094_725_305_227_534_25,
];

fn gl16(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = b - a;
    let mut acc = 0.0;
    for i in 0..8 {
        let x0 = a + GL16_X[i] * h;
        let x1 = a + (1.0 - GL16_X[i]) * h;
        acc += GL16_W[i] * (f(x0) + f(x1));
    }
    acc * h
}

/// Integrate a smooth function by 16-point Gauss-Legendre on panels of length
/// at most one. Exact for polynomials up to degree 31 on each panel.
pub fn integrate_smooth(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = (b - a).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        acc += gl16(&mut f, a + k as f64 * h, a + (k + 1) as f64 * h);
    }
    acc
}

fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, fa, m, fm, flm);
    let right = simpson(m, fm, b, fb, frm);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
            + adaptive(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate_adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    adaptive(&mut f, a, fa, b, fb, fm, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let got = integrate_smooth(|t| 3.0 * t * t, 0.0, 2.0);
        assert!((got - 8.0).abs() < 1e-12);
    }

    #[test]
    fn trig_over_long_interval() {
        // integral of cos^2 over [0, 2pi] is pi
        let got = integrate_smooth(|t| t.cos() * t.cos(), 0.0, 2.0 * std::f64::consts::PI);
        assert!((got - std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn adaptive_matches_closed_form() {
        // integral of exp(-t) over [0, 5]
        let got = integrate_adaptive(|t| (-t).exp(), 0.0, 5.0, 1e-10);
        assert!((got - (1.0 - (-5.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(integrate_smooth(|_| 1.0, 1.0, 1.0), 0.0);
        assert_eq!(integrate_adaptive(|_| 1.0, 2.0, 1.0, 1e-8), 0.0);
    }
}
