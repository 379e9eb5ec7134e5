//! Splitting-tree parameters: the lifespan measure, the mutation rate, the
//! Laplace exponent and the clonal regime.
//!
//! The lifespan measure is `Λ(dr) = b P(V ∈ dr)` on `(0, ∞]`. Its tail
//! `Λ̄(r) = b P(V > r)` drives everything downstream; the Laplace exponent is
//!
//! ```text
//! ψ(x) = x − ∫ (1 − e^{−rx}) Λ(dr) = x (1 − ∫₀^∞ e^{−rx} Λ̄(r) dr)
//! ```

use rand::Rng;
use rand_distr::{Distribution, Exp, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Default relative tolerance used to call `θ = α` critical.
pub const DEFAULT_REGIME_TOL: f64 = 1e-9;

/// Survival function `P(V > r)` sampled on a uniform grid `r = k·step`,
/// linearly interpolated and zero beyond the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedTail {
    step: f64,
    values: Vec<f64>,
}

impl TabulatedTail {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!("tail step must be positive, got {step}")));
        }
        if values.len() < 2 {
            return Err(Error::Domain("tabulated tail needs at least two nodes".into()));
        }
        if values[0] != 1.0 {
            return Err(Error::Domain(format!(
                "tabulated tail must start at P(V > 0) = 1, got {}",
                values[0]
            )));
        }
        for w in values.windows(2) {
            if !(w[1] <= w[0] && w[1] >= 0.0) {
                return Err(Error::Domain(
                    "tabulated tail must be nonincreasing and nonnegative".into(),
                ));
            }
        }
        Ok(Self { step, values })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Support end: `P(V > r) = 0` for `r >= end()`.
    pub fn end(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    /// `P(V > r)`.
    pub fn survival(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 1.0;
        }
        let pos = r / self.step;
        let j = pos.floor() as usize;
        if j + 1 >= self.values.len() {
            return 0.0;
        }
        let frac = pos - j as f64;
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    fn cells(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.values.windows(2).enumerate().map(move |(j, w)| {
            let a = j as f64 * self.step;
            (a, a + self.step, w[0], w[1])
        })
    }

    /// Inverse-transform draw: solves `P(V > r) = u`. Mass left at the end
    /// of the table sits as an atom at `end()`.
    fn quantile(&self, u: f64) -> f64 {
        let last = *self.values.last().unwrap();
        if u <= last {
            return self.end();
        }
        // first node with value < u
        let j = self.values.partition_point(|&v| v >= u);
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        let a = (j - 1) as f64 * self.step;
        if v0 == v1 {
            return a;
        }
        a + self.step * (v0 - u) / (v0 - v1)
    }
}

/// Law of an individual's lifetime `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Lifetime {
    Exponential { death_rate: f64 },
    Fixed { duration: f64 },
    Immortal,
    Tabulated(TabulatedTail),
}

/// Birth rate and lifetime law, i.e. the lifespan measure `Λ = b P(V ∈ ·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanModel {
    birth_rate: f64,
    lifetime: Lifetime,
}

impl LifespanModel {
    pub fn new(birth_rate: f64, lifetime: Lifetime) -> Result<Self> {
        if !(birth_rate > 0.0 && birth_rate.is_finite()) {
            return Err(Error::Domain(format!("birth rate must be positive, got {birth_rate}")));
        }
        match &lifetime {
            Lifetime::Exponential { death_rate } if !(*death_rate > 0.0 && death_rate.is_finite()) => {
                return Err(Error::Domain(format!("death rate must be positive, got {death_rate}")))
            }
            Lifetime::Fixed { duration } if !(*duration > 0.0 && duration.is_finite()) => {
                return Err(Error::Domain(format!("lifetime must be positive, got {duration}")))
            }
            _ => {}
        }
        Ok(Self { birth_rate, lifetime })
    }

    pub fn yule(birth_rate: f64) -> Result<Self> {
        Self::new(birth_rate, Lifetime::Immortal)
    }

    pub fn birth_death(birth_rate: f64, death_rate: f64) -> Result<Self> {
        Self::new(birth_rate, Lifetime::Exponential { death_rate })
    }

    pub fn fixed(birth_rate: f64, duration: f64) -> Result<Self> {
        Self::new(birth_rate, Lifetime::Fixed { duration })
    }

    pub fn birth_rate(&self) -> f64 {
        self.birth_rate
    }

    pub fn lifetime(&self) -> &Lifetime {
        &self.lifetime
    }

    /// `E[V]`, possibly infinite.
    pub fn mean_lifetime(&self) -> f64 {
        match &self.lifetime {
            Lifetime::Exponential { death_rate } => 1.0 / death_rate,
            Lifetime::Fixed { duration } => *duration,
            Lifetime::Immortal => f64::INFINITY,
            Lifetime::Tabulated(tab) => tab.cells().map(|(a, b, f0, f1)| 0.5 * (b - a) * (f0 + f1)).sum(),
        }
    }

    /// Mean number of children, `b E[V]`.
    pub fn mean_offspring(&self) -> f64 {
        self.birth_rate * self.mean_lifetime()
    }

    pub fn is_supercritical(&self) -> bool {
        self.mean_offspring() > 1.0
    }

    /// Tail of the lifespan measure, `Λ̄(r) = b P(V > r)`.
    pub fn tail(&self, r: f64) -> f64 {
        let b = self.birth_rate;
        if r < 0.0 {
            return b;
        }
        match &self.lifetime {
            Lifetime::Exponential { death_rate } => b * (-death_rate * r).exp(),
            Lifetime::Fixed { duration } => {
                if r < *duration {
                    b
                } else {
                    0.0
                }
            }
            Lifetime::Immortal => b,
            Lifetime::Tabulated(tab) => b * tab.survival(r),
        }
    }

    /// Exact moments `(∫ Λ̄, ∫ s Λ̄(s) ds)` over `[lo, hi]`.
    pub fn tail_moments(&self, lo: f64, hi: f64) -> (f64, f64) {
        debug_assert!(0.0 <= lo && lo <= hi);
        let b = self.birth_rate;
        match &self.lifetime {
            Lifetime::Immortal => (b * (hi - lo), b * 0.5 * (hi * hi - lo * lo)),
            Lifetime::Fixed { duration } => {
                let top = hi.min(*duration);
                if top <= lo {
                    (0.0, 0.0)
                } else {
                    (b * (top - lo), b * 0.5 * (top * top - lo * lo))
                }
            }
            Lifetime::Exponential { death_rate } => {
                let d = *death_rate;
                let (el, eh) = ((-d * lo).exp(), (-d * hi).exp());
                let m0 = b * (el - eh) / d;
                // ∫ s e^{-ds} ds = -(s/d + 1/d²) e^{-ds}
                let m1 = b * ((lo / d + 1.0 / (d * d)) * el - (hi / d + 1.0 / (d * d)) * eh);
                (m0, m1)
            }
            Lifetime::Tabulated(tab) => {
                let mut m0 = 0.0;
                let mut m1 = 0.0;
                for (a, c, f0, f1) in tab.cells() {
                    let (x0, x1) = (a.max(lo), c.min(hi));
                    if x1 <= x0 {
                        continue;
                    }
                    let slope = (f1 - f0) / (c - a);
                    let g = |x: f64| f0 + slope * (x - a);
                    let (g0, g1) = (g(x0), g(x1));
                    let w = x1 - x0;
                    m0 += 0.5 * w * (g0 + g1);
                    // linear integrand times s: Simpson is exact for quadratics
                    let xm = 0.5 * (x0 + x1);
                    m1 += w / 6.0 * (x0 * g0 + 4.0 * xm * g(xm) + x1 * g1);
                }
                (b * m0, b * m1)
            }
        }
    }

    /// Laplace exponent `ψ(x)`; `ψ(0) = 0` exactly.
    pub fn psi(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("psi needs x >= 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let b = self.birth_rate;
        Ok(match &self.lifetime {
            Lifetime::Immortal => x - b,
            Lifetime::Exponential { death_rate } => x * (x + death_rate - b) / (x + death_rate),
            Lifetime::Fixed { duration } => x + b * (-duration * x).exp_m1(),
            Lifetime::Tabulated(tab) => {
                let g: f64 = tab
                    .cells()
                    .map(|(a, c, f0, f1)| {
                        let slope = (f1 - f0) / (c - a);
                        quad::gauss_legendre_4(a, c)
                            .iter()
                            .map(|&(r, w)| w * (-r * x).exp() * (f0 + slope * (r - a)))
                            .sum::<f64>()
                    })
                    .sum();
                x * (1.0 - b * g)
            }
        })
    }

    /// `ψ'(x) = 1 − ∫ r e^{−rx} Λ(dr)` for `x > 0`.
    pub fn psi_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("psi_prime needs x > 0, got {x}")));
        }
        let b = self.birth_rate;
        Ok(match &self.lifetime {
            Lifetime::Immortal => 1.0,
            Lifetime::Exponential { death_rate } => 1.0 - b * death_rate / ((x + death_rate) * (x + death_rate)),
            Lifetime::Fixed { duration } => 1.0 - b * duration * (-duration * x).exp(),
            Lifetime::Tabulated(tab) => {
                // d/dx [x (1 − b g(x))] with g(x) = ∫ e^{-rx} Λ̄(r)/b dr
                let (mut g, mut g1) = (0.0, 0.0);
                for (a, c, f0, f1) in tab.cells() {
                    let slope = (f1 - f0) / (c - a);
                    for (r, w) in quad::gauss_legendre_4(a, c) {
                        let v = w * (-r * x).exp() * (f0 + slope * (r - a));
                        g += v;
                        g1 += r * v;
                    }
                }
                1.0 - b * g + x * b * g1
            }
        })
    }

    /// Draws a lifetime; `f64::INFINITY` for immortal individuals.
    pub fn sample_lifetime<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.lifetime {
            Lifetime::Exponential { death_rate } => Exp::new(*death_rate).unwrap().sample(rng),
            Lifetime::Fixed { duration } => *duration,
            Lifetime::Immortal => f64::INFINITY,
            Lifetime::Tabulated(tab) => {
                let u: f64 = Open01.sample(rng);
                tab.quantile(u)
            }
        }
    }
}

/// Clonal regime, determined by how θ compares with the Malthusian parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    SupercriticalClones,
    CriticalClones,
    SubcriticalClones,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SupercriticalClones => "supercritical",
            Regime::CriticalClones => "critical",
            Regime::SubcriticalClones => "subcritical",
        }
    }
}

/// A lifespan measure together with the mutation rate θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lifespan: LifespanModel,
    mutation_rate: f64,
}

impl ModelParams {
    pub fn new(lifespan: LifespanModel, mutation_rate: f64) -> Result<Self> {
        if !(mutation_rate >= 0.0 && mutation_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "mutation rate must be nonnegative, got {mutation_rate}"
            )));
        }
        Ok(Self { lifespan, mutation_rate })
    }

    pub fn mutation_rate(&self) -> f64 {
        self.mutation_rate
    }

    pub fn with_mutation_rate(&self, mutation_rate: f64) -> Result<Self> {
        Self::new(self.lifespan.clone(), mutation_rate)
    }

    pub fn birth_rate(&self) -> f64 {
        self.lifespan.birth_rate()
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        self.lifespan.psi(x)
    }

    pub fn psi_prime(&self, x: f64) -> Result<f64> {
        self.lifespan.psi_prime(x)
    }

    /// The positive root of ψ.
    ///
    /// Closed forms for the Yule and birth-death cases; otherwise bracket,
    /// bisect to 1e-12 and polish with two Newton steps.
    pub fn malthusian_alpha(&self) -> Result<f64> {
        if !self.lifespan.is_supercritical() {
            return Err(Error::NotSupercritical { mean_offspring: self.lifespan.mean_offspring() });
        }
        let b = self.lifespan.birth_rate();
        match self.lifespan.lifetime() {
            Lifetime::Immortal => Ok(b),
            Lifetime::Exponential { death_rate } => Ok(b - death_rate),
            _ => self.malthusian_alpha_numeric(),
        }
    }

    /// Root finder used for every lifetime law without a closed form.
    pub fn malthusian_alpha_numeric(&self) -> Result<f64> {
        if !self.lifespan.is_supercritical() {
            return Err(Error::NotSupercritical { mean_offspring: self.lifespan.mean_offspring() });
        }
        let psi = |x: f64| self.lifespan.psi(x).unwrap_or(f64::NAN);
        let mut hi = 1.0;
        let mut tries = 0;
        while !(psi(hi) > 0.0) {
            hi *= 2.0;
            tries += 1;
            if tries > 1100 || !hi.is_finite() {
                return Err(Error::RootFinding("could not find x with psi(x) > 0".into()));
            }
        }
        let mut lo = hi;
        tries = 0;
        while !(psi(lo) < 0.0) {
            lo *= 0.5;
            tries += 1;
            if tries > 1100 || lo == 0.0 {
                return Err(Error::RootFinding("could not find x > 0 with psi(x) < 0".into()));
            }
        }
        let mut root = quad::bisect(psi, lo, hi, 1e-12 * hi.max(1.0));
        for _ in 0..2 {
            let d = self.lifespan.psi_prime(root)?;
            let step = psi(root) / d;
            let next = root - step;
            if next > lo && next < hi && next.is_finite() {
                root = next;
            }
        }
        let resid = psi(root).abs();
        if resid > 1e-12 * root.max(1.0) {
            return Err(Error::RootFinding(format!("residual {resid:e} at alpha = {root}")));
        }
        Ok(root)
    }

    /// Exponent of the clonal tree, `ψ_θ(x) = x ψ(x+θ)/(x+θ)`.
    pub fn psi_theta(&self, x: f64) -> Result<f64> {
        let th = self.mutation_rate;
        if !(x + th > 0.0) && !(x == 0.0 && th == 0.0) {
            return Err(Error::Domain(format!("psi_theta needs x + theta > 0, got {}", x + th)));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        Ok(x * self.lifespan.psi(x + th)? / (x + th))
    }

    /// `ψ'_θ(α − θ) = (α − θ) ψ'(α)/α`.
    pub fn psi_theta_prime_at_root(&self) -> Result<f64> {
        let alpha = self.malthusian_alpha()?;
        Ok((alpha - self.mutation_rate) * self.lifespan.psi_prime(alpha)? / alpha)
    }

    /// Critical iff `|θ − α| <= tol·max(1, α)`.
    pub fn classify_regime(&self, tol: f64) -> Result<Regime> {
        let alpha = self.malthusian_alpha()?;
        let diff = self.mutation_rate - alpha;
        Ok(if diff.abs() <= tol * alpha.max(1.0) {
            Regime::CriticalClones
        } else if diff < 0.0 {
            Regime::SupercriticalClones
        } else {
            Regime::SubcriticalClones
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn yule(theta: f64) -> ModelParams {
        ModelParams::new(LifespanModel::yule(1.0).unwrap(), theta).unwrap()
    }
    fn bd() -> ModelParams {
        ModelParams::new(LifespanModel::birth_death(2.0, 1.0).unwrap(), 0.0).unwrap()
    }
    fn fixed() -> ModelParams {
        ModelParams::new(LifespanModel::fixed(2.0, 1.0).unwrap(), 0.0).unwrap()
    }

    /// Fixed lifetime b=2, v=1 written as a tabulated tail (step function
    /// approximated on a fine grid).
    fn tabulated_exponential() -> ModelParams {
        let step = 0.01;
        let values: Vec<f64> = (0..=4000).map(|k| (-(k as f64) * step).exp()).collect();
        let tail = TabulatedTail::new(step, values).unwrap();
        ModelParams::new(LifespanModel::new(2.0, Lifetime::Tabulated(tail)).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(yule(0.0).psi(2.0).unwrap(), 1.0);
        assert_relative_eq!(bd().psi(2.0).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        let expect = 1.0 - 2.0 * (1.0 - (-1f64).exp());
        assert_relative_eq!(fixed().psi(1.0).unwrap(), expect, max_relative = 1e-14);
        assert!((fixed().psi(1.0).unwrap() + 0.26424).abs() < 1e-5);
        assert!(yule(0.0).psi(-1.0).is_err());
    }

    #[test]
    fn psi_prime_examples() {
        assert_eq!(yule(0.0).psi_prime(3.0).unwrap(), 1.0);
        assert_relative_eq!(bd().psi_prime(1.0).unwrap(), 0.5, max_relative = 1e-15);
        let x = 1.59362;
        assert_relative_eq!(fixed().psi_prime(x).unwrap(), 1.0 - 2.0 * (-x).exp(), max_relative = 1e-14);
        assert!((fixed().psi_prime(x).unwrap() - 0.5934).abs() < 3e-4);
        assert!(bd().psi_prime(0.0).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(yule(0.0).malthusian_alpha().unwrap(), 1.0);
        assert_eq!(bd().malthusian_alpha().unwrap(), 1.0);
        // oracle: bisection on α = 2(1 − e^{−α})
        let oracle = quad::bisect(|a| a - 2.0 * (1.0 - (-a).exp()), 0.5, 3.0, 1e-15);
        let alpha = fixed().malthusian_alpha().unwrap();
        assert!((alpha - oracle).abs() < 1e-11);
        assert!((alpha - 1.59362).abs() < 1e-5);
        // generic root finder agrees with closed forms
        assert!((yule(0.0).malthusian_alpha_numeric().unwrap() - 1.0).abs() < 1e-11);
        assert!((bd().malthusian_alpha_numeric().unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn alpha_rejects_subcritical_trees() {
        let sub = ModelParams::new(LifespanModel::birth_death(1.0, 2.0).unwrap(), 0.0).unwrap();
        assert!(matches!(sub.malthusian_alpha(), Err(Error::NotSupercritical { .. })));
        let crit = ModelParams::new(LifespanModel::fixed(1.0, 1.0).unwrap(), 0.0).unwrap();
        assert!(crit.malthusian_alpha().is_err());
    }

    #[test]
    fn psi_theta_examples() {
        let p = bd();
        assert_relative_eq!(p.psi_theta(2.0).unwrap(), p.psi(2.0).unwrap(), max_relative = 1e-15);
        assert!(yule(2.0).psi_theta(-1.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(yule(2.0).psi_theta_prime_at_root().unwrap(), -1.0);
        assert!(yule(2.0).psi_theta(-2.5).is_err());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(yule(0.5).classify_regime(DEFAULT_REGIME_TOL).unwrap(), Regime::SupercriticalClones);
        assert_eq!(yule(1.0).classify_regime(1e-9).unwrap(), Regime::CriticalClones);
        assert_eq!(yule(2.0).classify_regime(DEFAULT_REGIME_TOL).unwrap(), Regime::SubcriticalClones);
        assert_eq!(yule(1.0 + 1e-12).classify_regime(1e-9).unwrap(), Regime::CriticalClones);
    }

    #[test]
    fn tabulated_tail_matches_closed_form() {
        let tab = tabulated_exponential();
        let closed = bd().with_mutation_rate(0.0).unwrap();
        for &x in &[0.3, 1.0, 2.5] {
            let a = tab.psi(x).unwrap();
            let b = closed.psi(x).unwrap();
            // linear interpolation of e^{-r} on step 0.01
            assert!((a - b).abs() < 1e-4, "x={x}: {a} vs {b}");
        }
        let alpha = tab.malthusian_alpha().unwrap();
        assert!((alpha - 1.0).abs() < 1e-4);
        assert!(tab.psi(alpha).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tabulated_tail_validation() {
        assert!(TabulatedTail::new(0.1, vec![1.0, 0.5, 0.6]).is_err());
        assert!(TabulatedTail::new(0.1, vec![0.9, 0.5]).is_err());
        assert!(TabulatedTail::new(-0.1, vec![1.0, 0.5]).is_err());
        let t = TabulatedTail::new(0.5, vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(t.survival(0.25), 0.75);
        assert_eq!(t.survival(2.0), 0.0);
        assert_eq!(t.quantile(0.75), 0.25);
    }

    #[test]
    fn tail_moments_match_quadrature() {
        let models = [yule(0.0), bd(), fixed(), tabulated_exponential()];
        for p in &models {
            let (lo, hi) = (0.37, 1.91);
            let m0 = quad::composite_gl(|s| p.lifespan.tail(s), lo, 1.0, 200)
                + quad::composite_gl(|s| p.lifespan.tail(s), 1.0, hi, 200);
            let m1 = quad::composite_gl(|s| s * p.lifespan.tail(s), lo, 1.0, 200)
                + quad::composite_gl(|s| s * p.lifespan.tail(s), 1.0, hi, 200);
            let (e0, e1) = p.lifespan.tail_moments(lo, hi);
            assert!((m0 - e0).abs() < 1e-9, "{m0} {e0}");
            assert!((m1 - e1).abs() < 1e-9, "{m1} {e1}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn models() -> Vec<ModelParams> {
            vec![yule(0.0), bd(), fixed(), tabulated_exponential(),
                 ModelParams::new(LifespanModel::fixed(3.0, 0.7).unwrap(), 0.0).unwrap()]
        }

        proptest! {
            #[test]
            fn psi_is_convex(x in 0.05f64..9.0, which in 0usize..5) {
                let p = &models()[which];
                let h = 1e-2;
                let d2 = p.psi(x + h).unwrap() - 2.0 * p.psi(x).unwrap() + p.psi(x - h).unwrap();
                prop_assert!(d2 >= -1e-9);
            }

            #[test]
            fn psi_prime_matches_finite_difference(x in 0.1f64..10.0, which in 0usize..5) {
                let p = &models()[which];
                let h = 1e-4;
                let fd = (p.psi(x + h).unwrap() - p.psi(x - h).unwrap()) / (2.0 * h);
                let d = p.psi_prime(x).unwrap();
                prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0));
            }

            #[test]
            fn psi_theta_identity(x in 0.0f64..6.0, theta in 0.0f64..4.0, which in 0usize..5) {
                let p = models()[which].with_mutation_rate(theta).unwrap();
                prop_assume!(x + theta > 0.0);
                let lhs = p.psi_theta(x).unwrap() * (x + theta);
                let rhs = x * p.psi(x + theta).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
            }
        }

        #[test]
        fn root_properties() {
            for p in models() {
                assert_eq!(p.psi(0.0).unwrap(), 0.0);
                let a = p.malthusian_alpha().unwrap();
                assert!(p.psi(a).unwrap().abs() <= 1e-12 * a.max(1.0));
                assert!(p.psi_prime(a).unwrap() > 0.0);
            }
        }
    }
}
