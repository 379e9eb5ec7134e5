//! Small quadrature and root-finding kernels shared by the numerics modules.

/// 4-point Gauss-Legendre abscissae on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Gauss-Legendre nodes mapped to `[lo, hi]`, as `(abscissa, weight)` pairs.
pub fn gauss_legendre_4(lo: f64, hi: f64) -> [(f64, f64); 4] {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut out = [(0.0, 0.0); 4];
    for (slot, (x, w)) in out.iter_mut().zip(GL4_X.iter().zip(GL4_W.iter())) {
        *slot = (mid + half * x, half * w);
    }
    out
}

/// Composite 4-point Gauss-Legendre over `panels` equal panels.
pub fn composite_gl<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let width = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let b = if p + 1 == panels { hi } else { a + width };
        for (x, w) in gauss_legendre_4(a, b) {
            acc += w * f(x);
        }
    }
    acc
}

/// Exact integral over a cell of length `h` of the exponential interpolating
/// `f0` at the left end and `f1` at the right end (both positive).
///
/// Falls back to the trapezoid value when the two ends agree closely.
pub fn exp_fit_cell(f0: f64, f1: f64, h: f64) -> f64 {
    if f0 <= 0.0 || f1 <= 0.0 {
        return 0.5 * h * (f0 + f1);
    }
    let d = (f1 / f0).ln();
    if d.abs() < 1e-6 {
        // (e^d - 1)/d expanded to third order.
        h * f0 * (1.0 + d / 2.0 + d * d / 6.0 + d * d * d / 24.0)
    } else {
        h * (f1 - f0) / d
    }
}

/// Same as [`exp_fit_cell`] but with both ends given as logarithms, the
/// result returned as a logarithm.
pub fn exp_fit_cell_log(log_f0: f64, log_f1: f64, h: f64) -> f64 {
    let d = log_f1 - log_f0;
    let log_h = h.ln();
    if d.abs() < 1e-6 {
        log_f0 + log_h + (1.0 + d / 2.0 + d * d / 6.0 + d * d * d / 24.0).ln()
    } else if d > 0.0 {
        // h (e^{l1} - e^{l0}) / d = h e^{l1} (1 - e^{-d}) / d
        log_f1 + log_h + (-(-d).exp_m1()).ln() - d.ln()
    } else {
        log_f0 + log_h + (-d.exp_m1()).ln() - (-d).ln()
    }
}

/// Plain bisection for an increasing function with `f(lo) < 0 <= f(hi)`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl4_is_exact_for_degree_seven() {
        let f = |x: f64| 3.0 * x.powi(7) - x.powi(4) + 2.0;
        let exact = |x: f64| 3.0 * x.powi(8) / 8.0 - x.powi(5) / 5.0 + 2.0 * x;
        let got: f64 = gauss_legendre_4(-0.5, 1.5).iter().map(|&(x, w)| w * f(x)).sum();
        assert!((got - (exact(1.5) - exact(-0.5))).abs() < 1e-12);
    }

    #[test]
    fn exp_fit_is_exact_for_exponentials() {
        let (a, h) = (1.7, 0.3);
        let got = exp_fit_cell((a * 0.2f64).exp(), (a * 0.5f64).exp(), h);
        let exact = ((a * 0.5f64).exp() - (a * 0.2f64).exp()) / a;
        assert!((got - exact).abs() < 1e-14);
        let lg = exp_fit_cell_log(a * 0.2, a * 0.5, h);
        assert!((lg.exp() - exact).abs() < 1e-13);
        let lg = exp_fit_cell_log(a * 0.5, a * 0.2, h);
        assert!((lg.exp() - exact).abs() < 1e-13);
        // flat cell
        assert!((exp_fit_cell(2.0, 2.0, 0.1) - 0.2).abs() < 1e-15);
        assert!((exp_fit_cell_log(0.0, 0.0, 0.1).exp() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn bisection_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }
}
