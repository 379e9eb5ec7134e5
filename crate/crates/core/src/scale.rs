//! Scale functions `W` and `W_θ` tabulated on a uniform grid.
//!
//! `W` is the nondecreasing function with `W(0) = 1` and Laplace transform
//! `1/ψ`. Writing `1/ψ(x) = 1/(x(1 − ĝ(x)))` with `ĝ` the transform of the
//! tail `Λ̄` shows that `W` solves the renewal equation
//!
//! ```text
//! W(t) = 1 + ∫₀ᵗ Λ̄(s) W(t − s) ds
//! ```
//!
//! which is solved by product trapezoid integration (piecewise-linear `W`,
//! kernel moments integrated exactly) plus one Richardson step. Everything is stored as `log W` so that
//! large horizons do not overflow, and evaluated by log-linear interpolation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Lifetime, ModelParams, Regime};
use crate::numfmt::fmt_num;
use crate::quad;

/// How `W` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleMethod {
    /// Closed form when one exists (Yule, birth-death), Volterra otherwise.
    #[default]
    Auto,
    /// Always solve the renewal equation numerically.
    Volterra,
}

/// Tabulated `log W` and `log W_θ` on nodes `k·step`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    step: f64,
    log_w: Vec<f64>,
    log_w_theta: Vec<f64>,
    theta: f64,
    alpha: f64,
    psi_prime_alpha: f64,
}

/// Default grid step `min(0.01/α, 0.01)`.
pub fn default_step(alpha: f64) -> f64 {
    (0.01 / alpha).min(1e-2)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl ScaleGrid {
    /// Grid with the default spacing covering `[0, horizon + 1]`.
    pub fn for_horizon(params: &ModelParams, horizon: f64) -> Result<Self> {
        let alpha = params.malthusian_alpha()?;
        let t_max = (horizon + 1.0).max(1.0 / alpha);
        Self::build(params, t_max, default_step(alpha))
    }

    pub fn build(params: &ModelParams, t_max: f64, step: f64) -> Result<Self> {
        Self::build_with(params, t_max, step, ScaleMethod::Auto)
    }

    pub fn build_with(params: &ModelParams, t_max: f64, step: f64, method: ScaleMethod) -> Result<Self> {
        let alpha = params.malthusian_alpha()?;
        if !(step > 0.0) || step >= t_max {
            return Err(Error::Range(format!("grid step {step} must lie in (0, t_max = {t_max})")));
        }
        let max_step = default_step(alpha);
        if step > max_step * (1.0 + 1e-12) {
            return Err(Error::Range(format!("grid step {step} exceeds min(0.01/alpha, 0.01) = {max_step}")));
        }
        if t_max < 1.0 / alpha {
            return Err(Error::Range(format!("t_max {t_max} is below 1/alpha = {}", 1.0 / alpha)));
        }
        let n = (t_max / step - 1e-9).ceil() as usize;
        let psi_prime_alpha = params.psi_prime(alpha)?;
        let b = params.birth_rate();
        let log_w: Vec<f64> = match (method, params.lifespan.lifetime()) {
            (ScaleMethod::Auto, Lifetime::Immortal) => (0..=n).map(|k| b * k as f64 * step).collect(),
            (ScaleMethod::Auto, Lifetime::Exponential { death_rate }) => (0..=n)
                .map(|k| {
                    // W(t) = (b e^{αt} − d)/α
                    let t = k as f64 * step;
                    alpha * t + (b - death_rate * (-alpha * t).exp()).ln() - alpha.ln()
                })
                .collect(),
            _ => solve_renewal(params, alpha, n, step),
        };
        let mut grid = Self {
            step,
            log_w_theta: Vec::new(),
            log_w,
            theta: 0.0,
            alpha,
            psi_prime_alpha,
        };
        grid.set_theta(params.mutation_rate());
        Ok(grid)
    }

    /// Recomputes `W_θ` for another mutation rate, reusing `W`.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!("theta must be nonnegative, got {theta}")));
        }
        let mut g = self.clone();
        g.set_theta(theta);
        Ok(g)
    }

    /// `W_θ(x) = e^{−θx} W(x) + θ ∫₀ˣ W(y) e^{−θy} dy`, the integral
    /// accumulated cell by cell (exact for the log-linear interpolant of W).
    fn set_theta(&mut self, theta: f64) {
        self.theta = theta;
        if theta == 0.0 {
            self.log_w_theta = self.log_w.clone();
            return;
        }
        let h = self.step;
        let log_theta = theta.ln();
        let mut out = Vec::with_capacity(self.log_w.len());
        let mut log_int = f64::NEG_INFINITY;
        let mut prev = self.log_w[0];
        out.push(0.0);
        for k in 1..self.log_w.len() {
            let cur = self.log_w[k] - theta * k as f64 * h;
            log_int = log_add(log_int, quad::exp_fit_cell_log(prev, cur, h));
            out.push(log_add(cur, log_theta + log_int).max(0.0));
            prev = cur;
        }
        // W_θ is nondecreasing; remove rounding-level dips
        for k in 1..out.len() {
            if out[k] < out[k - 1] {
                out[k] = out[k - 1];
            }
        }
        self.log_w_theta = out;
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        self.step * (self.log_w.len() - 1) as f64
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn psi_prime_alpha(&self) -> f64 {
        self.psi_prime_alpha
    }

    pub fn log_w_nodes(&self) -> &[f64] {
        &self.log_w
    }

    pub fn log_w_theta_nodes(&self) -> &[f64] {
        &self.log_w_theta
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || t > self.t_max() * (1.0 + 1e-12) {
            return Err(Error::Range(format!("t = {t} outside [0, {}]", self.t_max())));
        }
        Ok(())
    }

    fn interp(&self, table: &[f64], t: f64) -> f64 {
        let pos = t / self.step;
        let j = (pos.floor() as usize).min(table.len() - 1);
        if j + 1 >= table.len() {
            return table[table.len() - 1];
        }
        let frac = pos - j as f64;
        table[j] + frac * (table[j + 1] - table[j])
    }

    pub fn eval_log_w(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.interp(&self.log_w, t))
    }

    pub fn eval_w(&self, t: f64) -> Result<f64> {
        Ok(self.eval_log_w(t)?.exp())
    }

    pub fn eval_log_w_theta(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.interp(&self.log_w_theta, t))
    }

    pub fn eval_w_theta(&self, t: f64) -> Result<f64> {
        Ok(self.eval_log_w_theta(t)?.exp())
    }

    /// Conditional CDF of a branch length, `P(H <= s | H < horizon)`.
    pub fn conditional_cdf_h(&self, s: f64, horizon: f64) -> Result<f64> {
        let top = -(-self.eval_log_w(horizon)?).exp_m1();
        if top == 0.0 {
            return Ok(1.0);
        }
        let s = s.clamp(0.0, horizon);
        Ok(-(-self.eval_log_w(s)?).exp_m1() / top)
    }

    /// Solves `1 − 1/W(s) = u (1 − 1/W(horizon))` on the interpolant.
    pub fn quantile_h_conditional(&self, u: f64, horizon: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Range(format!("u = {u} outside [0, 1]")));
        }
        if !(horizon > 0.0) {
            return Err(Error::Range(format!("horizon must be positive, got {horizon}")));
        }
        self.check_range(horizon)?;
        Ok(self.branch_sampler(horizon)?.quantile(u))
    }

    /// Inverse-CDF sampler of branch lengths conditioned below `horizon`.
    pub fn branch_sampler(&self, horizon: f64) -> Result<BranchSampler<'_>> {
        self.check_range(horizon)?;
        let log_w_h = self.interp(&self.log_w, horizon);
        let last = ((horizon / self.step).floor() as usize + 1).min(self.log_w.len() - 1);
        Ok(BranchSampler {
            log_w: &self.log_w[..=last],
            step: self.step,
            horizon,
            log_w_h,
            scale: (-log_w_h).exp_m1(),
        })
    }

    /// `∫₀^∞ (ψ'(α) W(y) e^{−αy} − 1) dy`, by composite Simpson on the nodes,
    /// with the remainder beyond `t_max` bounded from an exponential fit of
    /// the last tenth of the integrand. Returns `(value, truncation_bound)`.
    pub fn excess_integral(&self) -> Result<(f64, f64)> {
        let (a, pp, h) = (self.alpha, self.psi_prime_alpha, self.step);
        let g = |k: usize| (pp.ln() + self.log_w[k] - a * k as f64 * h).exp_m1();
        let n = self.log_w.len() - 1;
        if n < 3 {
            return Err(Error::Range("grid too short".into()));
        }
        let simpson = |lo: usize, hi: usize| -> f64 {
            let mut s = g(lo) + g(hi);
            for k in lo + 1..hi {
                s += if (k - lo) % 2 == 1 { 4.0 * g(k) } else { 2.0 * g(k) };
            }
            s * h / 3.0
        };
        let total = if n.is_multiple_of(2) {
            simpson(0, n)
        } else {
            // Simpson's 3/8 rule on the last three cells
            let m = n - 3;
            simpson(0, m) + 3.0 * h / 8.0 * (g(m) + 3.0 * g(m + 1) + 3.0 * g(m + 2) + g(n))
        };
        let g_end = g(n);
        let k0 = ((0.9 * n as f64) as usize).min(n - 1);
        let g0 = g(k0);
        let remainder = if g_end.abs() < 1e-300 {
            0.0
        } else if g0.signum() != g_end.signum() || g0.abs() <= g_end.abs() {
            return Err(Error::Truncation { error: f64::INFINITY, tolerance: 1e-6 });
        } else {
            let gamma = (g0.abs() / g_end.abs()).ln() / ((n - k0) as f64 * h);
            g_end / gamma
        };
        Ok((total + remainder, remainder.abs()))
    }

    /// CSV with header `t,W,W_theta`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,W,W_theta\n");
        for k in 0..self.log_w.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_num(self.node(k)),
                fmt_num(self.log_w[k].exp()),
                fmt_num(self.log_w_theta[k].exp())
            );
        }
        out
    }

    /// Asymptotic diagnostics on a log-spaced time grid.
    pub fn check_asymptotics(&self, params: &ModelParams, regime_tol: f64) -> Result<ScaleDiagnostics> {
        let alpha = self.alpha;
        let theta = params.mutation_rate();
        if (theta - self.theta).abs() > 1e-12 * theta.max(1.0)
            || (params.malthusian_alpha()? - alpha).abs() > 1e-9 * alpha.max(1.0)
        {
            return Err(Error::Regime("grid was built for different parameters".into()));
        }
        if self.t_max() < 5.0 / alpha {
            return Err(Error::Range(format!("diagnostics need t_max >= 5/alpha = {}", 5.0 / alpha)));
        }
        let regime = params.classify_regime(regime_tol)?;
        let t_lo = (0.5 / alpha).min(self.t_max() / 4.0);
        let count = 24;
        let times: Vec<f64> = (0..count)
            .map(|i| t_lo * (self.t_max() / t_lo).powf(i as f64 / (count - 1) as f64))
            .map(|t| (t / self.step).round() * self.step)
            .map(|t| t.min(self.t_max()))
            .collect();
        let pp = self.psi_prime_alpha;
        let mut w_error = Vec::with_capacity(count);
        for &t in &times {
            w_error.push((self.eval_log_w(t)? - alpha * t + pp.ln()).exp_m1());
        }
        let mut clonal = Vec::with_capacity(count);
        match regime {
            Regime::SupercriticalClones => {
                let dpt = params.psi_theta_prime_at_root()?;
                for &t in &times {
                    clonal.push((self.eval_log_w_theta(t)? - (alpha - theta) * t + dpt.ln()).exp_m1());
                }
            }
            Regime::SubcriticalClones => {
                let psi_th = params.psi(theta)?;
                let phi = 1.0 - psi_th / theta;
                let dpt = params.psi_theta_prime_at_root()?.abs();
                let rho_const = psi_th * psi_th / (theta * theta * phi * dpt);
                for &t in &times {
                    let wt = self.eval_w_theta(t)?;
                    let rho = (1.0 / wt - psi_th / theta) / phi;
                    clonal.push(rho * ((theta - alpha) * t).exp() / rho_const - 1.0);
                }
            }
            Regime::CriticalClones => {
                let (excess, _) = self.excess_integral()?;
                let b_const = 1.0 + alpha * excess;
                for &t in &times {
                    let wt = self.eval_w_theta(t)?;
                    clonal.push(wt - (alpha * t + b_const) / pp);
                }
            }
        }
        let decay_rate = fit_decay(&times, &w_error);
        Ok(ScaleDiagnostics { regime, times, w_error, clonal_error: clonal, decay_rate })
    }
}

/// Least-squares slope of `−log|err|` against `t` over points with a
/// resolvable error; `None` when the error is at rounding level throughout.
fn fit_decay(times: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(err)
        .filter(|(_, e)| e.abs() > 1e-12)
        .map(|(&t, &e)| (t, e.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in &pts {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    Some(-num / den)
}

/// Output of [`ScaleGrid::check_asymptotics`].
///
/// `w_error` is `W(t)e^{−αt}ψ'(α) − 1`. `clonal_error` depends on the regime:
/// the relative error of `W_θ(t) ~ e^{(α−θ)t}/ψ'_θ(α−θ)` (supercritical),
/// the relative error of `ρ(t)e^{(θ−α)t}` against its predicted constant
/// (subcritical), or `W_α(t) − (αt + B)/ψ'(α)` (critical).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDiagnostics {
    pub regime: Regime,
    pub times: Vec<f64>,
    pub w_error: Vec<f64>,
    pub clonal_error: Vec<f64>,
    /// Empirical exponential decay rate of `w_error`.
    pub decay_rate: Option<f64>,
}

/// Draws branch lengths `H` conditioned on `H < horizon` by inverting the
/// log-linear interpolant of `log W`.
#[derive(Debug, Clone)]
pub struct BranchSampler<'a> {
    log_w: &'a [f64],
    step: f64,
    horizon: f64,
    log_w_h: f64,
    /// `1/W(horizon) − 1`
    scale: f64,
}

impl BranchSampler<'_> {
    /// Success probability of the geometric population size, `1/W(horizon)`.
    pub fn success_probability(&self) -> f64 {
        (-self.log_w_h).exp()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return self.horizon;
        }
        // log W(s) = −log(1 − u(1 − 1/W(h)))
        let target = -(u * self.scale).ln_1p();
        if target >= self.log_w_h {
            return self.horizon;
        }
        let j = self.log_w.partition_point(|&v| v <= target).max(1) - 1;
        let (l0, l1) = (self.log_w[j], self.log_w[j + 1]);
        let frac = if l1 > l0 { (target - l0) / (l1 - l0) } else { 0.0 };
        ((j as f64 + frac) * self.step).min(self.horizon)
    }
}

/// Solution of `W = 1 + Λ̄ ⋆ W` at nodes `k·h`, returned as `log W`.
///
/// The product trapezoid rule has an `O(h²)` global error with a smooth
/// expansion, so one Richardson step against the half-step solution removes
/// the leading term.
fn solve_renewal(params: &ModelParams, alpha: f64, n: usize, h: f64) -> Vec<f64> {
    let coarse = renewal_trapezoid(params, alpha, n, h);
    let fine = renewal_trapezoid(params, alpha, 2 * n, 0.5 * h);
    coarse
        .iter()
        .enumerate()
        .map(|(k, &vc)| (4.0 * fine[2 * k] - vc) / 3.0)
        .enumerate()
        .map(|(k, v)| v.ln() + alpha * k as f64 * h)
        .collect()
}

/// Product-trapezoid solution, returned as `V_k = W_k e^{−α k h}`, which
/// stays bounded.
fn renewal_trapezoid(params: &ModelParams, alpha: f64, n: usize, h: f64) -> Vec<f64> {
    let life = &params.lifespan;
    // cell j covers s in [(j−1)h, jh]; a_j weights W at s = jh, b_j at s = (j−1)h
    let mut a = vec![0.0; n + 2];
    let mut b = vec![0.0; n + 2];
    for j in 1..=n + 1 {
        let lo = (j - 1) as f64 * h;
        let hi = j as f64 * h;
        let (m0, m1) = life.tail_moments(lo, hi);
        let m1_rel = m1 - lo * m0;
        a[j] = m1_rel / h;
        b[j] = m0 - a[j];
    }
    let decay: Vec<f64> = (0..=n).map(|l| (-alpha * l as f64 * h).exp()).collect();
    // weight on W_{n−ℓ} for 1 <= ℓ <= n−1
    let kernel: Vec<f64> = (0..=n)
        .map(|l| if l == 0 { 0.0 } else { (a[l] + b[l + 1]) * decay[l] })
        .collect();
    let diag = 1.0 - b[1];
    let mut v = Vec::with_capacity(n + 1);
    v.push(1.0);
    for m in 1..=n {
        let mut acc = decay[m] + a[m] * decay[m] * v[0];
        for l in 1..m {
            acc += kernel[l] * v[m - l];
        }
        v.push(acc / diag);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LifespanModel;

    fn yule(theta: f64) -> ModelParams {
        ModelParams::new(LifespanModel::yule(1.0).unwrap(), theta).unwrap()
    }
    fn bd(theta: f64) -> ModelParams {
        ModelParams::new(LifespanModel::birth_death(2.0, 1.0).unwrap(), theta).unwrap()
    }
    fn fixed(theta: f64) -> ModelParams {
        ModelParams::new(LifespanModel::fixed(2.0, 1.0).unwrap(), theta).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let g = ScaleGrid::build(&yule(0.0), 4.0, 1e-3).unwrap();
        assert!((g.eval_w(3.0).unwrap() - 3f64.exp()).abs() < 1e-9 * 20.0);
        let g = ScaleGrid::build(&bd(0.0), 2.0, 1e-3).unwrap();
        assert!((g.eval_w(1.0).unwrap() - (2.0 * 1f64.exp() - 1.0)).abs() < 1e-9);
        let g = ScaleGrid::build(&fixed(0.0), 2.0, 1e-3).unwrap();
        let w1 = g.eval_w(1.0).unwrap();
        assert!((w1 / 2f64.exp() - 1.0).abs() < 1e-6, "{w1}");
    }

    #[test]
    fn interpolation_contract() {
        let g = ScaleGrid::build(&yule(0.0), 2.0, 1e-2).unwrap();
        assert_eq!(g.eval_w(0.0).unwrap(), 1.0);
        assert!((g.eval_w(0.5).unwrap() / 0.5f64.exp() - 1.0).abs() < 1e-6);
        assert!((g.eval_w(0.5031).unwrap() / 0.5031f64.exp() - 1.0).abs() < 1e-12);
        assert!(g.eval_w(2.5).is_err());
        assert!(g.eval_w(-0.1).is_err());
        let mut last = 0.0;
        for i in 0..=200 {
            let w = g.eval_w(i as f64 * 0.01).unwrap();
            assert!(w >= last);
            last = w;
        }
    }

    #[test]
    fn w_theta_examples() {
        let g = ScaleGrid::build(&bd(0.0), 3.0, 1e-3).unwrap();
        assert_eq!(g.log_w_nodes(), g.log_w_theta_nodes());
        let g = ScaleGrid::build(&yule(2.0), 3.0, 1e-3).unwrap();
        assert!((g.eval_w_theta(2f64.ln()).unwrap() - 1.5).abs() < 1e-6);
        let g = ScaleGrid::build(&yule(1.0), 3.0, 1e-3).unwrap();
        assert!((g.eval_w_theta(2.0).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn quantile_examples() {
        let g = ScaleGrid::build(&yule(0.0), 4.0, 1e-3).unwrap();
        assert_eq!(g.quantile_h_conditional(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(g.quantile_h_conditional(1.0, 3.0).unwrap(), 3.0);
        let expect = (1.0 / (1.0 - 0.5 * (1.0 - (-3f64).exp()))).ln();
        assert!((g.quantile_h_conditional(0.5, 3.0).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 0.64456).abs() < 1e-5);
        assert!(g.quantile_h_conditional(1.5, 3.0).is_err());
        assert!(g.quantile_h_conditional(0.5, 5.0).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for p in [yule(0.0), bd(0.0), fixed(0.0)] {
            let g = ScaleGrid::for_horizon(&p, 3.0).unwrap();
            for i in 1..100 {
                let u = i as f64 / 100.0;
                let s = g.quantile_h_conditional(u, 3.0).unwrap();
                let back = g.conditional_cdf_h(s, 3.0).unwrap();
                assert!((back - u).abs() < 1e-10, "u={u} s={s} back={back}");
            }
        }
    }

    #[test]
    fn renewal_solution_matches_closed_forms() {
        let cases: [(ModelParams, f64, fn(f64) -> f64); 3] = [
            (yule(0.0), 10.0, |t| t.exp()),
            (bd(0.0), 10.0, |t| 2.0 * t.exp() - 1.0),
            (fixed(0.0), 1.0, |t| (2.0 * t).exp()),
        ];
        for (p, top, exact) in cases {
            let g = ScaleGrid::build_with(&p, top.max(1.0 / p.malthusian_alpha().unwrap()), 1e-3, ScaleMethod::Volterra).unwrap();
            for k in (0..g.len()).step_by(97) {
                let t = g.node(k);
                if t > top {
                    break;
                }
                let rel = (g.log_w_nodes()[k].exp() / exact(t) - 1.0).abs();
                assert!(rel <= 1e-6, "t={t} rel={rel:e}");
            }
        }
    }

    #[test]
    fn renewal_residual_is_second_order() {
        let p = fixed(0.0);
        let h = 2e-3;
        let g = ScaleGrid::build_with(&p, 4.0, h, ScaleMethod::Volterra).unwrap();
        let w: Vec<f64> = g.log_w_nodes().iter().map(|l| l.exp()).collect();
        for n in (50..w.len()).step_by(211) {
            // plain trapezoid on the nodes, kernel taken as the left/right average at the jump
            let tail = |s: f64| {
                let lo = p.lifespan.tail(s - 1e-12);
                let hi = p.lifespan.tail(s + 1e-12);
                0.5 * (lo + hi)
            };
            let mut conv = 0.5 * (tail(0.0) * w[n] + tail(n as f64 * h) * w[0]);
            for j in 1..n {
                conv += tail(j as f64 * h) * w[n - j];
            }
            conv *= h;
            let resid = (w[n] - 1.0 - conv).abs() / w[n];
            assert!(resid <= 10.0 * h * h, "n={n} resid={resid:e}");
        }
    }

    #[test]
    fn laplace_transform_check() {
        // ∫₀^T e^{−xt}W(t)dt + tail ≈ 1/ψ(x) at x = α + 1
        for p in [bd(0.0), fixed(0.0)] {
            let alpha = p.malthusian_alpha().unwrap();
            let g = ScaleGrid::build_with(&p, 25.0 / alpha, 4e-3 / alpha.max(1.0), ScaleMethod::Volterra).unwrap();
            let x = alpha + 1.0;
            let h = g.step();
            let mut integral = 0.0;
            let lw = g.log_w_nodes();
            for k in 1..lw.len() {
                let l0 = lw[k - 1] - x * (k - 1) as f64 * h;
                let l1 = lw[k] - x * k as f64 * h;
                integral += crate::quad::exp_fit_cell_log(l0, l1, h).exp();
            }
            // beyond T, W ≈ e^{αt}/ψ'(α)
            let top = g.t_max();
            integral += ((alpha - x) * top).exp() / (g.psi_prime_alpha() * (x - alpha));
            let target = 1.0 / p.psi(x).unwrap();
            assert!((integral / target - 1.0).abs() <= 1e-4, "{integral} vs {target}");
        }
    }

    #[test]
    fn subcritical_w_theta_stays_below_limit() {
        for p in [yule(2.0), bd(3.0), fixed(2.5)] {
            let g = ScaleGrid::for_horizon(&p, 12.0).unwrap();
            let theta = p.mutation_rate();
            let limit = theta / p.psi(theta).unwrap();
            for &l in g.log_w_theta_nodes() {
                assert!(l.exp() <= limit * (1.0 + 1e-6));
            }
            let nodes = g.log_w_theta_nodes();
            assert!(nodes.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(nodes[0], 0.0);
        }
    }

    #[test]
    fn asymptotic_diagnostics() {
        let g = ScaleGrid::for_horizon(&yule(0.0), 10.0).unwrap();
        let d = g.check_asymptotics(&yule(0.0), 1e-9).unwrap();
        assert!(d.w_error.iter().all(|e| e.abs() < 1e-12));
        assert!(d.decay_rate.is_none());

        let p = yule(2.0);
        let g = ScaleGrid::for_horizon(&p, 14.0).unwrap();
        let d = g.check_asymptotics(&p, 1e-9).unwrap();
        assert_eq!(d.regime, Regime::SubcriticalClones);
        let last = *d.clonal_error.last().unwrap();
        assert!(last.abs() < 1e-3, "{last}");

        let p = yule(1.0);
        let g = ScaleGrid::for_horizon(&p, 14.0).unwrap();
        let d = g.check_asymptotics(&p, 1e-9).unwrap();
        assert!(d.clonal_error.iter().all(|e| e.abs() < 1e-9));

        // BD: asymptotic error decays exponentially
        let p = bd(0.5);
        let g = ScaleGrid::for_horizon(&p, 14.0).unwrap();
        let d = g.check_asymptotics(&p, 1e-9).unwrap();
        assert!(d.w_error.last().unwrap().abs() < 1e-5);
        assert!(d.decay_rate.unwrap() > 0.5);
        assert!(d.clonal_error.last().unwrap().abs() < 1e-2);

        assert!(g.check_asymptotics(&bd(0.7), 1e-9).is_err());
    }

    #[test]
    fn csv_export() {
        let g = ScaleGrid::build(&yule(2.0), 1.0, 1e-2).unwrap();
        let csv = g.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,W,W_theta"));
        let row: Vec<f64> = lines.nth(100).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!((row[0] - 1.0).abs() < 1e-12);
        assert!((row[1] - 1f64.exp()).abs() < 1e-11);
        assert!((row[2] - (2.0 - (-1f64).exp())).abs() < 1e-4);
        assert_eq!(csv.lines().count(), g.len() + 1);
    }

    #[test]
    fn build_errors() {
        assert!(ScaleGrid::build(&yule(0.0), 1.0, 0.05).is_err());
        assert!(ScaleGrid::build(&yule(0.0), 0.5, 0.01).is_err());
        let sub = ModelParams::new(LifespanModel::birth_death(1.0, 2.0).unwrap(), 0.0).unwrap();
        assert!(ScaleGrid::for_horizon(&sub, 1.0).is_err());
    }
}
