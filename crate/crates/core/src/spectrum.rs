//! Exact expectations for the allelic partition at a fixed time: the
//! frequency spectrum, the law of the ancestral family, age densities,
//! expected extreme counts and the second-moment bounds on branch-0 counts.
//!
//! All integrals run over the log-linear interpolant of the scale grid with
//! 4-point Gauss–Legendre per grid cell, so identities that hold for the
//! continuous integrands (mass conservation, summation over sizes) hold to
//! near machine precision for the tabulated ones.

use std::fmt::Write as _;

use crate::cpp::size_floor;
use crate::error::{Error, Result};
use crate::numfmt::fmt_num;
use crate::quad::{exp_fit_cell_log, gauss_legendre_4};
use crate::scale::ScaleGrid;

/// Expected number of families split into mutant types and the ancestral
/// type (the latter is the point mass at age `t`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CountExpectation {
    pub mutant: f64,
    pub ancestral: f64,
}

impl CountExpectation {
    pub fn total(&self) -> f64 {
        self.mutant + self.ancestral
    }
}

fn check(grid: &ScaleGrid, theta: f64, t: f64) -> Result<()> {
    if (theta - grid.theta()).abs() > 1e-12 * theta.max(1.0) {
        return Err(Error::Inconsistent(format!(
            "grid was built for theta = {}, queried with {theta}",
            grid.theta()
        )));
    }
    if !(t > 0.0) || t > grid.t_max() * (1.0 + 1e-12) {
        return Err(Error::Range(format!("t = {t} outside (0, {}]", grid.t_max())));
    }
    Ok(())
}

/// `(1 − 1/W_θ)^{m}` from `log W_θ`, exact zero/one at the edges.
#[inline]
fn power(log_wt: f64, m: u64) -> f64 {
    if m == 0 {
        1.0
    } else {
        (m as f64 * (-(-log_wt).exp()).ln_1p()).exp()
    }
}

/// Calls `f(y, weight, log W_θ(y))` at Gauss–Legendre nodes covering
/// `[lo, hi]`, one rule per (clipped) grid cell.
fn for_nodes<F: FnMut(f64, f64, f64)>(grid: &ScaleGrid, lo: f64, hi: f64, mut f: F) {
    if !(hi > lo) {
        return;
    }
    let h = grid.step();
    let lw = grid.log_w_theta_nodes();
    let first = (lo / h).floor() as usize;
    let last = ((hi / h).ceil() as usize).min(lw.len() - 1);
    for j in first..last {
        let (c0, c1) = (j as f64 * h, (j + 1) as f64 * h);
        let (a, b) = (c0.max(lo), c1.min(hi));
        if b <= a {
            continue;
        }
        let slope = (lw[j + 1] - lw[j]) / h;
        for (y, w) in gauss_legendre_4(a, b) {
            f(y, w, lw[j] + slope * (y - c0));
        }
    }
}

/// `E A_θ(k, t)`, the expected number of mutant families of size `k`.
pub fn expected_spectrum(grid: &ScaleGrid, theta: f64, k: u64, t: f64) -> Result<f64> {
    check(grid, theta, t)?;
    if k == 0 {
        return Err(Error::Domain("family size must be at least 1".into()));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for_nodes(grid, 0.0, t, |y, w, lw| {
        acc += w * (-theta * y - 2.0 * lw).exp() * power(lw, k - 1);
    });
    Ok(theta * grid.eval_w(t)? * acc)
}

/// `P(Z₀(t) = k)`, the law of the ancestral family's size (0 when it is
/// extinct has the complementary mass).
pub fn ancestral_law(grid: &ScaleGrid, theta: f64, k: u64, t: f64) -> Result<f64> {
    check(grid, theta, t)?;
    if k == 0 {
        return Err(Error::Domain("family size must be at least 1".into()));
    }
    let lw = grid.eval_log_w_theta(t)?;
    Ok((grid.eval_log_w(t)? - theta * t - 2.0 * lw).exp() * power(lw, k - 1))
}

/// Density in age `y` of the expected number of mutant families of size `k`.
pub fn expected_age_density(grid: &ScaleGrid, theta: f64, k: u64, t: f64, y: f64) -> Result<f64> {
    check(grid, theta, t)?;
    if !(y > 0.0 && y < t) {
        return Err(Error::Range(format!("age {y} outside (0, {t})")));
    }
    if k == 0 {
        return Err(Error::Domain("family size must be at least 1".into()));
    }
    let lw = grid.eval_log_w_theta(y)?;
    Ok(theta * (grid.eval_log_w(t)? - theta * y - 2.0 * lw).exp() * power(lw, k - 1))
}

/// Expected number of families of size at least `⌈x⌉` whose age lies in
/// `(s1, s2]`. The ancestral family (age `t`) counts iff `s1 < t <= s2`.
pub fn expected_counts(grid: &ScaleGrid, theta: f64, t: f64, x: f64, s1: f64, s2: f64) -> Result<CountExpectation> {
    check(grid, theta, t)?;
    if !(s1 <= s2) {
        return Err(Error::Range(format!("window ({s1}, {s2}] is reversed")));
    }
    let m = size_floor(x).max(1) - 1;
    let log_w_t = grid.eval_log_w(t)?;
    let mut mutant = 0.0;
    if theta > 0.0 {
        let mut acc = 0.0;
        for_nodes(grid, s1.max(0.0), s2.min(t), |y, w, lw| {
            acc += w * (-theta * y - lw).exp() * power(lw, m);
        });
        mutant = theta * log_w_t.exp() * acc;
    }
    let ancestral = if s1 < t && t <= s2 {
        let lw = grid.eval_log_w_theta(t)?;
        (log_w_t - theta * t - lw).exp() * power(lw, m)
    } else {
        0.0
    };
    Ok(CountExpectation { mutant, ancestral })
}

/// `E L_t(x)`: families of size at least `⌈x⌉`, any age.
pub fn expected_large(grid: &ScaleGrid, theta: f64, t: f64, x: f64) -> Result<CountExpectation> {
    expected_counts(grid, theta, t, x, f64::NEG_INFINITY, t)
}

/// `E O_t(s)`: families older than `s` (none once `s >= t`).
pub fn expected_old(grid: &ScaleGrid, theta: f64, t: f64, s: f64) -> Result<CountExpectation> {
    expected_counts(grid, theta, t, 1.0, s, t.max(s))
}

/// Upper bounds on the expected number of branch-0 families of size at
/// least `⌈x⌉` with age in `(s1, s2]`: the sharp form and the looser one
/// obtained by dropping the inner correction factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBound {
    pub sharp: f64,
    pub loose: f64,
}

pub fn k_bound(
    grid: &ScaleGrid,
    theta: f64,
    t: f64,
    x: f64,
    s1: f64,
    s2: f64,
    birth_rate: f64,
    alpha: f64,
) -> Result<KBound> {
    check(grid, theta, t)?;
    if !(x >= 1.0) || !(0.0 <= s1 && s1 < s2 && s2 <= t) {
        return Err(Error::Range(format!("need x >= 1 and 0 <= s1 < s2 <= t, got x={x}, ({s1}, {s2}], t={t}")));
    }
    let m = size_floor(x) - 1;
    let log_g = CumulativeG::new(grid, theta);
    let inner = |y: f64, lw: f64| -> f64 {
        if theta == 0.0 {
            return 1.0;
        }
        (1.0 - (theta.ln() - theta * y + log_g.eval(y) - lw).exp()).max(0.0)
    };
    let (mut sharp, mut loose) = (0.0, 0.0);
    if theta > 0.0 {
        for_nodes(grid, s1, s2, |y, w, lw| {
            let p = power(lw, m);
            sharp += theta * w * p * inner(y, lw);
            loose += theta * w * p;
        });
    }
    if s2 >= t {
        let lw = grid.eval_log_w_theta(t)?;
        let p = power(lw, m);
        sharp += p * inner(t, lw);
        loose += p;
    }
    let scale = birth_rate / alpha;
    Ok(KBound { sharp: scale * sharp, loose: scale * loose })
}

/// `log G(y)` with `G(y) = ∫₀ʸ e^{θu} W_θ(u) du`, exact for the log-linear
/// interpolant of `W_θ`.
struct CumulativeG<'a> {
    grid: &'a ScaleGrid,
    theta: f64,
    log_nodes: Vec<f64>,
}

impl<'a> CumulativeG<'a> {
    fn new(grid: &'a ScaleGrid, theta: f64) -> Self {
        let h = grid.step();
        let lw = grid.log_w_theta_nodes();
        let mut log_nodes = Vec::with_capacity(lw.len());
        log_nodes.push(f64::NEG_INFINITY);
        let mut acc = f64::NEG_INFINITY;
        for j in 1..lw.len() {
            let l0 = lw[j - 1] + theta * (j - 1) as f64 * h;
            let l1 = lw[j] + theta * j as f64 * h;
            acc = log_add(acc, exp_fit_cell_log(l0, l1, h));
            log_nodes.push(acc);
        }
        Self { grid, theta, log_nodes }
    }

    fn eval(&self, y: f64) -> f64 {
        let h = self.grid.step();
        let lw = self.grid.log_w_theta_nodes();
        let j = ((y / h).floor() as usize).min(lw.len() - 1);
        let delta = y - j as f64 * h;
        if delta <= 0.0 || j + 1 >= lw.len() {
            return self.log_nodes[j];
        }
        let l0 = lw[j] + self.theta * j as f64 * h;
        let slope = (lw[j + 1] - lw[j]) / h + self.theta;
        log_add(self.log_nodes[j], exp_fit_cell_log(l0, l0 + slope * delta, delta))
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Sums `Σ_k f(k)` until the geometric tail bound with ratio
/// `1 − 1/W_θ(t)` falls below `rel_tol` of the accumulated sum.
pub fn sum_over_sizes<F: FnMut(u64) -> Result<f64>>(grid: &ScaleGrid, t: f64, rel_tol: f64, mut f: F) -> Result<f64> {
    let ratio = -(-grid.eval_log_w_theta(t)?).exp_m1();
    let mut total = 0.0;
    let mut k = 1;
    loop {
        let term = f(k)?;
        total += term;
        // bound valid for terms up to a factor k times a geometric sequence
        let q = (1.0 - ratio).max(f64::MIN_POSITIVE);
        let tail = term * ratio / q * (1.0 + 1.0 / (k as f64 * q));
        if (term == 0.0 && k > 1) || tail.abs() <= rel_tol * total.abs() || k > 100_000_000 {
            break;
        }
        k += 1;
    }
    Ok(total)
}

/// CSV `k,expected_mutant,expected_ancestral` for `k = 1..=k_max`.
pub fn spectrum_csv(grid: &ScaleGrid, theta: f64, t: f64, k_max: u64) -> Result<String> {
    let mut out = String::from("k,expected_mutant,expected_ancestral\n");
    for k in 1..=k_max {
        let _ = writeln!(
            out,
            "{k},{},{}",
            fmt_num(expected_spectrum(grid, theta, k, t)?),
            fmt_num(ancestral_law(grid, theta, k, t)?)
        );
    }
    Ok(out)
}

/// CSV `x,s1,s2,expected_M,bound_sharp,bound_loose`; the bounds columns are empty
/// where the window is not admissible for them.
pub fn counts_csv(
    grid: &ScaleGrid,
    theta: f64,
    t: f64,
    windows: &[(f64, f64, f64)],
    birth_rate: f64,
    alpha: f64,
) -> Result<String> {
    let mut out = String::from("x,s1,s2,expected_M,bound_sharp,bound_loose\n");
    for &(x, s1, s2) in windows {
        let m = expected_counts(grid, theta, t, x, s1, s2)?.total();
        let (sharp, loose) = match k_bound(grid, theta, t, x, s1, s2, birth_rate, alpha) {
            Ok(b) => (fmt_num(b.sharp), fmt_num(b.loose)),
            Err(_) => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{},{},{},{sharp},{loose}", fmt_num(x), fmt_num(s1), fmt_num(s2), fmt_num(m));
    }
    Ok(out)
}
