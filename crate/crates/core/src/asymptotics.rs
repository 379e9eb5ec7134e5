//! Limit constants, centering sequences and limit laws for the largest and
//! oldest families in the three clonal regimes.

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime, DEFAULT_REGIME_TOL};
use crate::quad::{bisect, composite_gl};
use crate::scale::ScaleGrid;

/// Which extreme a limit law describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtremeKind {
    LargestSize,
    OldestAge,
}

impl ExtremeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LargestSize => "sizes",
            Self::OldestAge => "ages",
        }
    }
}

/// Largest tolerated bound on the truncated tail of the `B` integral.
pub const B_TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticConstants {
    pub regime: Regime,
    pub alpha: f64,
    pub theta: f64,
    pub psi_prime_alpha: f64,
    /// `ψ(θ)`
    pub psi_theta: f64,
    /// `φ(θ) = 1 − ψ(θ)/θ`
    pub phi_theta: f64,
    /// `ψ'_θ(α − θ) = (α − θ)ψ'(α)/α`
    pub psi_theta_prime_at_root: f64,
    a_theta: Option<f64>,
    b_sub: Option<f64>,
    b_crit: Option<f64>,
    b_crit_truncation: Option<f64>,
}

impl AsymptoticConstants {
    fn only(&self, value: Option<f64>, name: &str, regime: Regime) -> Result<f64> {
        value.ok_or_else(|| Error::Regime(format!("{name} is defined in the {} regime only, not {}", regime.name(), self.regime.name())))
    }

    /// `A(θ)`, subcritical only.
    pub fn a_theta(&self) -> Result<f64> {
        self.only(self.a_theta, "A(theta)", Regime::SubcriticalClones)
    }

    /// `ψ²(θ)/(θ²φ(θ)|ψ'_θ(α−θ)|)`, subcritical only.
    pub fn b_sub(&self) -> Result<f64> {
        self.only(self.b_sub, "B_sub", Regime::SubcriticalClones)
    }

    /// `1 + α∫₀^∞(ψ'(α)W(y)e^{−αy} − 1)dy`, critical only.
    pub fn b_crit(&self) -> Result<f64> {
        self.only(self.b_crit, "B_crit", Regime::CriticalClones)
    }

    pub fn b_crit_truncation(&self) -> Result<f64> {
        self.only(self.b_crit_truncation, "B_crit", Regime::CriticalClones)
    }

    /// `(name, value)` pairs of every constant defined in this regime.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("psi_prime_alpha", self.psi_prime_alpha),
            ("psi_theta", self.psi_theta),
            ("phi_theta", self.phi_theta),
            ("psi_theta_prime_at_root", self.psi_theta_prime_at_root),
        ];
        if let Some(a) = self.a_theta {
            out.push(("A_theta", a));
        }
        if let Some(b) = self.b_sub {
            out.push(("B_sub", b));
        }
        if let Some(b) = self.b_crit {
            out.push(("B_crit", b));
        }
        if let Some(e) = self.b_crit_truncation {
            out.push(("B_crit_truncation", e));
        }
        out
    }
}

pub fn constants(params: &ModelParams, grid: &ScaleGrid) -> Result<AsymptoticConstants> {
    let regime = params.classify_regime(DEFAULT_REGIME_TOL)?;
    let alpha = params.malthusian_alpha()?;
    let theta = params.mutation_rate();
    let psi_prime_alpha = params.psi_prime(alpha)?;
    let psi_theta = params.psi(theta)?;
    let phi_theta = if theta > 0.0 { 1.0 - psi_theta / theta } else { f64::NAN };
    let psi_theta_prime_at_root = params.psi_theta_prime_at_root()?;
    let mut c = AsymptoticConstants {
        regime,
        alpha,
        theta,
        psi_prime_alpha,
        psi_theta,
        phi_theta,
        psi_theta_prime_at_root,
        a_theta: None,
        b_sub: None,
        b_crit: None,
        b_crit_truncation: None,
    };
    match regime {
        Regime::SubcriticalClones => {
            let dpt = psi_theta_prime_at_root.abs();
            let ratio = theta / (theta - alpha);
            let inner = theta * theta * phi_theta * phi_theta.ln().abs() / (alpha * psi_theta * psi_theta);
            let a = gamma(ratio) * (psi_theta / alpha) * dpt.powf(alpha / (theta - alpha)) * inner.powf(ratio);
            c.a_theta = Some(a);
            c.b_sub = Some(psi_theta * psi_theta / (theta * theta * phi_theta * dpt));
        }
        Regime::CriticalClones => {
            if (grid.alpha() - alpha).abs() > 1e-9 * alpha.max(1.0) {
                return Err(Error::Regime("grid was built for a different model".into()));
            }
            let (excess, trunc) = grid.excess_integral()?;
            let bound = alpha * trunc;
            if bound > B_TRUNCATION_TOL {
                return Err(Error::Truncation { error: bound, tolerance: B_TRUNCATION_TOL });
            }
            c.b_crit = Some(1.0 + alpha * excess);
            c.b_crit_truncation = Some(bound);
        }
        Regime::SupercriticalClones => {}
    }
    Ok(c)
}

/// Parametrisation of the critical size threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CriticalSizeConvention {
    /// `(α²/4ψ'(α))(t − log t/(2α) + c)²`
    #[default]
    Squared,
    /// `(α²/4ψ'(α))t² − (α/4ψ'(α))t log t + c t`
    Expanded,
}

/// Offset of the squared convention matching an expanded-convention offset
/// to leading order.
pub fn expanded_to_squared_offset(constants: &AsymptoticConstants, c_expanded: f64) -> f64 {
    2.0 * constants.psi_prime_alpha * c_expanded / (constants.alpha * constants.alpha)
}

pub fn centering(constants: &AsymptoticConstants, kind: ExtremeKind, t: f64, offset: f64) -> Result<f64> {
    centering_with(constants, kind, t, offset, CriticalSizeConvention::Squared)
}

pub fn centering_with(
    constants: &AsymptoticConstants,
    kind: ExtremeKind,
    t: f64,
    offset: f64,
    convention: CriticalSizeConvention,
) -> Result<f64> {
    let (alpha, theta, pp) = (constants.alpha, constants.theta, constants.psi_prime_alpha);
    let needs_log = matches!(
        (constants.regime, kind),
        (Regime::SubcriticalClones, ExtremeKind::LargestSize) | (Regime::CriticalClones, _)
    );
    if needs_log && !(t > 1.0) {
        return Err(Error::Range(format!("centering needs t > 1, got {t}")));
    }
    Ok(match (constants.regime, kind) {
        (Regime::SubcriticalClones, ExtremeKind::LargestSize) => {
            (alpha * t - theta / (theta - alpha) * t.ln()) / constants.phi_theta.ln().abs() + offset
        }
        (Regime::SubcriticalClones, ExtremeKind::OldestAge) => alpha * t / theta + offset,
        (Regime::CriticalClones, ExtremeKind::LargestSize) => match convention {
            CriticalSizeConvention::Squared => {
                let u = t - t.ln() / (2.0 * alpha) + offset;
                alpha * alpha / (4.0 * pp) * u * u
            }
            CriticalSizeConvention::Expanded => {
                alpha * alpha / (4.0 * pp) * t * t - alpha / (4.0 * pp) * t * t.ln() + offset * t
            }
        },
        (Regime::CriticalClones, ExtremeKind::OldestAge) => t - t.ln() / alpha + offset,
        (Regime::SupercriticalClones, ExtremeKind::LargestSize) => offset * ((alpha - theta) * t).exp(),
        (Regime::SupercriticalClones, ExtremeKind::OldestAge) => t - offset,
    })
}

/// Offset at which the critical size threshold sits exactly at the integer
/// `n`, i.e. `x_t(c) = n`.
pub fn critical_size_offset_for(constants: &AsymptoticConstants, t: f64, n: f64) -> f64 {
    let (alpha, pp) = (constants.alpha, constants.psi_prime_alpha);
    2.0 * (n * pp).sqrt() / alpha - (t - t.ln() / (2.0 * alpha))
}

/// Limit of the expected count at the centred threshold (the intensity mass
/// of the limiting point process above the offset).
///
/// The subcritical size limit depends on the fractional part of the
/// threshold, hence on `t`. In the supercritical regime sizes use the window
/// of all ages and ages use all sizes.
pub fn limit_expectation(constants: &AsymptoticConstants, kind: ExtremeKind, offset: f64, t: Option<f64>) -> Result<f64> {
    let (alpha, theta, pp) = (constants.alpha, constants.theta, constants.psi_prime_alpha);
    match (constants.regime, kind) {
        (Regime::SubcriticalClones, ExtremeKind::OldestAge) => {
            Ok(constants.psi_theta * (-theta * offset).exp() / (theta * pp))
        }
        (Regime::SubcriticalClones, ExtremeKind::LargestSize) => {
            let t = t.ok_or_else(|| Error::Domain("subcritical size limits need t for the fractional part".into()))?;
            let x = centering(constants, kind, t, offset)?;
            let frac = x.ceil() - x;
            Ok(constants.a_theta()? * constants.phi_theta.powf(offset - 1.0 + frac))
        }
        (Regime::CriticalClones, ExtremeKind::OldestAge) => Ok((-alpha * offset).exp() / alpha),
        (Regime::CriticalClones, ExtremeKind::LargestSize) => {
            let b = constants.b_crit()?;
            Ok((2.0 * std::f64::consts::PI / alpha).sqrt() * (b - pp / 2.0).exp() * (-alpha * offset).exp())
        }
        (Regime::SupercriticalClones, ExtremeKind::LargestSize) => {
            supercritical_limit(constants, offset, 0.0, f64::INFINITY)
        }
        (Regime::SupercriticalClones, ExtremeKind::OldestAge) => supercritical_limit(constants, 0.0, 0.0, offset),
    }
}

/// `((α−θ)/α)∫_{a0}^{a1} exp(αy − cψ'_θ(α−θ)e^{(α−θ)y})(θdy + δ₀(dy))`, the
/// limit of the expected number of families of size at least `ce^{(α−θ)t}`
/// with age in `[t − a1, t − a0)`. The point mass at 0 (the ancestral
/// family) counts iff `a0 = 0`.
pub fn supercritical_limit(constants: &AsymptoticConstants, c: f64, a0: f64, a1: f64) -> Result<f64> {
    if constants.regime != Regime::SupercriticalClones {
        return Err(Error::Regime(format!("supercritical limit requested in the {} regime", constants.regime.name())));
    }
    if !(a0 >= 0.0 && a0 <= a1) {
        return Err(Error::Range(format!("need 0 <= a0 <= a1, got [{a0}, {a1}]")));
    }
    let (alpha, theta) = (constants.alpha, constants.theta);
    let beta = alpha - theta;
    let k = c * constants.psi_theta_prime_at_root;
    if a1.is_infinite() && k <= 0.0 {
        return Err(Error::Divergent(format!("integral over [{a0}, inf) diverges for c = {c}")));
    }
    let log_f = |y: f64| alpha * y - k * (beta * y).exp();
    let mut top = a1;
    if a1.is_infinite() || k > 0.0 {
        // beyond the peak the integrand decays doubly exponentially; cut
        // once it is e^{-60} below its maximum
        let peak_y = if k > 0.0 { ((alpha / (k * beta)).ln() / beta).max(a0) } else { a0 };
        let peak = log_f(peak_y);
        let mut y = peak_y + 1.0;
        while log_f(y) > peak - 60.0 {
            y = peak_y + 2.0 * (y - peak_y);
        }
        top = top.min(y);
    }
    let mut total = 0.0;
    if theta > 0.0 && top > a0 {
        let panels = (((top - a0) * 200.0).ceil() as usize).clamp(64, 200_000);
        total += theta * composite_gl(|y| log_f(y).exp(), a0, top, panels);
    }
    if a0 == 0.0 {
        total += log_f(0.0).exp();
    }
    Ok(beta / alpha * total)
}

fn check_distributional(constants: &AsymptoticConstants) -> Result<()> {
    if constants.regime == Regime::SupercriticalClones {
        return Err(Error::Regime(
            "no limit law for extremes in the supercritical regime: the method does not apply to the supercritical case".into(),
        ));
    }
    Ok(())
}

/// `lim P(no family beyond the centred threshold) = 1/(1 + τ)`.
pub fn limit_cdf_extreme(constants: &AsymptoticConstants, kind: ExtremeKind, offset: f64, t: Option<f64>) -> Result<f64> {
    check_distributional(constants)?;
    Ok(1.0 / (1.0 + limit_expectation(constants, kind, offset, t)?))
}

/// Joint limit law of the counts in consecutive bands: `counts[0]` families
/// beyond the first (highest) threshold, `counts[i]` between thresholds
/// `i − 1` and `i`. Size offsets need `c_i >= c_{i+1} + 1`, age offsets must
/// be strictly decreasing.
pub fn joint_limit_pmf(
    constants: &AsymptoticConstants,
    kind: ExtremeKind,
    offsets: &[f64],
    counts: &[u64],
    t: Option<f64>,
) -> Result<f64> {
    check_distributional(constants)?;
    if offsets.is_empty() || offsets.len() != counts.len() {
        return Err(Error::Domain("offsets and counts must be nonempty and of equal length".into()));
    }
    for w in offsets.windows(2) {
        let ok = match kind {
            ExtremeKind::LargestSize => w[0] >= w[1] + 1.0,
            ExtremeKind::OldestAge => w[0] > w[1],
        };
        if !ok {
            return Err(Error::Domain(format!("offsets {offsets:?} violate the required ordering")));
        }
    }
    let taus = offsets
        .iter()
        .map(|&o| limit_expectation(constants, kind, o, t))
        .collect::<Result<Vec<_>>>()?;
    let total: u64 = counts.iter().sum();
    let mut log_p = ln_gamma(total as f64 + 1.0) - (total as f64 + 1.0) * taus[taus.len() - 1].ln_1p();
    let mut prev = 0.0;
    for (&tau, &k) in taus.iter().zip(counts) {
        let d = tau - prev;
        if k > 0 {
            if d <= 0.0 {
                return Ok(0.0);
            }
            log_p += k as f64 * d.ln() - ln_gamma(k as f64 + 1.0);
        }
        prev = tau;
    }
    Ok(log_p.exp())
}

/// `λ^k/(1+λ)^{k+1}`: Poisson(λE) with `E` a standard exponential.
pub fn mixed_poisson_pmf(lambda: f64, k: u64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("intensity must be nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    Ok((k as f64 * lambda.ln() - (k as f64 + 1.0) * lambda.ln_1p()).exp())
}

/// Time at which the subcritical size centering with zero offset equals `n`.
pub fn solve_t_n(constants: &AsymptoticConstants, n: f64) -> Result<f64> {
    if constants.regime != Regime::SubcriticalClones {
        return Err(Error::Regime("t_n is defined in the subcritical regime only".into()));
    }
    let (alpha, theta) = (constants.alpha, constants.theta);
    let r = theta / (theta - alpha);
    let scale = constants.phi_theta.ln().abs();
    let f = |t: f64| (alpha * t - r * t.ln()) / scale - n;
    let t_min = r / alpha;
    if f(t_min) >= 0.0 {
        return Err(Error::RootFinding(format!(
            "no time reaches n = {n}: the centering is at least {} for all t",
            f(t_min) + n
        )));
    }
    let mut hi = 2.0 * t_min.max(1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    Ok(bisect(f, t_min, hi, 1e-13 * hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LifespanModel;
    use proptest::prelude::*;

    fn consts(b: f64, d: Option<f64>, theta: f64) -> AsymptoticConstants {
        let life = match d {
            None => LifespanModel::yule(b).unwrap(),
            Some(d) => LifespanModel::birth_death(b, d).unwrap(),
        };
        let p = ModelParams::new(life, theta).unwrap();
        let g = ScaleGrid::for_horizon(&p, 40.0).unwrap();
        constants(&p, &g).unwrap()
    }

    #[test]
    fn constant_examples() {
        let c = consts(1.0, None, 2.0);
        assert_eq!(c.phi_theta, 0.5);
        let expect = (2.0 * 2f64.ln()).powi(2);
        assert!((c.a_theta().unwrap() - expect).abs() < 1e-9);
        assert!((c.a_theta().unwrap() - 1.92181).abs() < 1e-5);
        assert!((c.b_sub().unwrap() - 0.5).abs() < 1e-12);
        assert!(c.b_crit().is_err());

        let c = consts(1.0, None, 1.0);
        assert_eq!(c.regime, Regime::CriticalClones);
        assert!((c.b_crit().unwrap() - 1.0).abs() < 1e-6);
        assert!((c.phi_theta - 1.0).abs() < 1e-12);
        assert!(c.a_theta().is_err());

        let c = consts(2.0, Some(1.0), 1.0);
        assert!((c.phi_theta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_b_for_birth_death() {
        // W(y) = (2e^y − 1), ψ'(1) = 1/2: integrand −e^{−y}/2, so B = 1/2
        let c = consts(2.0, Some(1.0), 1.0);
        assert!((c.b_crit().unwrap() - 0.5).abs() < 1e-6, "{}", c.b_crit().unwrap());
        assert!(c.b_crit_truncation().unwrap() <= B_TRUNCATION_TOL);
    }

    #[test]
    fn centering_examples() {
        let c = consts(1.0, None, 2.0);
        let x = centering(&c, ExtremeKind::LargestSize, 12.0, 0.0).unwrap();
        assert!((x - (12.0 - 2.0 * 12f64.ln()) / 2f64.ln()).abs() < 1e-12);
        assert!((x - 10.1425).abs() < 1e-4);
        assert_eq!(centering(&c, ExtremeKind::OldestAge, 10.0, 0.0).unwrap(), 5.0);
        assert!(centering(&c, ExtremeKind::LargestSize, 0.5, 0.0).is_err());

        let c = consts(1.0, None, 1.0);
        let e = std::f64::consts::E;
        let x = centering(&c, ExtremeKind::LargestSize, e, 0.0).unwrap();
        assert!((x - 0.25 * (e - 0.5).powi(2)).abs() < 1e-12);
        // the commonly quoted 1.23054 is a rounding of this value
        assert!((x - 1.23054).abs() < 1e-3);
        let n = 57.0;
        let off = critical_size_offset_for(&c, 9.0, n);
        assert!((centering(&c, ExtremeKind::LargestSize, 9.0, off).unwrap() - n).abs() < 1e-9);
    }

    #[test]
    fn expanded_convention_agrees_to_leading_order() {
        let c = consts(1.0, None, 1.0);
        let ce = 0.7;
        let cs = expanded_to_squared_offset(&c, ce);
        for t in [1e3, 1e4, 1e5] {
            let a = centering_with(&c, ExtremeKind::LargestSize, t, ce, CriticalSizeConvention::Expanded).unwrap();
            let b = centering(&c, ExtremeKind::LargestSize, t, cs).unwrap();
            // the conventions differ by (α²/4ψ')(c − log t/(2α))²
            assert!((a - b).abs() <= t.ln().powi(2));
        }
    }

    #[test]
    fn limit_examples() {
        let c = consts(1.0, None, 2.0);
        assert!((limit_expectation(&c, ExtremeKind::OldestAge, 0.0, None).unwrap() - 0.5).abs() < 1e-12);
        assert!((limit_cdf_extreme(&c, ExtremeKind::OldestAge, 0.0, None).unwrap() - 1.0 / 1.5).abs() < 1e-12);
        let p = limit_cdf_extreme(&c, ExtremeKind::LargestSize, 0.0, Some(12.0)).unwrap();
        let x = centering(&c, ExtremeKind::LargestSize, 12.0, 0.0).unwrap();
        let frac = x.ceil() - x;
        assert!((frac - 0.8575).abs() < 1e-4);
        let expect = 1.0 / (1.0 + c.a_theta().unwrap() * 0.5f64.powf(frac - 1.0));
        assert!((p - expect).abs() < 1e-12);
        assert!(limit_expectation(&c, ExtremeKind::LargestSize, 0.0, None).is_err());

        let c = consts(1.0, None, 1.0);
        assert!((limit_expectation(&c, ExtremeKind::OldestAge, 0.0, None).unwrap() - 1.0).abs() < 1e-12);
        assert!((limit_cdf_extreme(&c, ExtremeKind::OldestAge, 0.0, None).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn supercritical_limit_example() {
        let c = consts(1.0, None, 0.5);
        let v = limit_expectation(&c, ExtremeKind::LargestSize, 1.0, None).unwrap();
        assert!((v - 3.5 * (-0.5f64).exp()).abs() < 1e-9, "{v}");
        assert!(matches!(supercritical_limit(&c, 0.0, 0.0, f64::INFINITY), Err(Error::Divergent(_))));
        // all sizes, ages up to a: ((α−θ)/α)(θ(e^{αa} − 1)/α + 1)
        let v = supercritical_limit(&c, 0.0, 0.0, 2.0).unwrap();
        assert!((v - 0.5 * (0.5 * (2f64.exp() - 1.0) + 1.0)).abs() < 1e-10);
        let split = supercritical_limit(&c, 1.0, 0.0, 1.0).unwrap() + supercritical_limit(&c, 1.0, 1.0, f64::INFINITY).unwrap();
        assert!((split - 3.5 * (-0.5f64).exp()).abs() < 1e-9);
        assert!(limit_cdf_extreme(&c, ExtremeKind::LargestSize, 1.0, None).is_err());
    }

    #[test]
    fn joint_law_reductions() {
        let c = consts(1.0, None, 2.0);
        for kind in [ExtremeKind::OldestAge, ExtremeKind::LargestSize] {
            let one = joint_limit_pmf(&c, kind, &[0.3], &[0], Some(12.0)).unwrap();
            assert!((one - limit_cdf_extreme(&c, kind, 0.3, Some(12.0)).unwrap()).abs() < 1e-14);
            let total: f64 = (0..400).map(|k| joint_limit_pmf(&c, kind, &[0.3], &[k], Some(12.0)).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(joint_limit_pmf(&c, ExtremeKind::LargestSize, &[1.0, 0.5], &[1, 1], Some(12.0)).is_err());
        assert!(joint_limit_pmf(&c, ExtremeKind::OldestAge, &[1.0, 1.0], &[1, 1], None).is_err());
    }

    #[test]
    fn joint_law_matches_mixture_integral() {
        let c = consts(1.0, None, 2.0);
        let (a1, a2) = (1.0, -0.5);
        let t1 = limit_expectation(&c, ExtremeKind::OldestAge, a1, None).unwrap();
        let t2 = limit_expectation(&c, ExtremeKind::OldestAge, a2, None).unwrap();
        for (k1, k2) in [(0, 0), (1, 2), (3, 1)] {
            let pois = |lam: f64, k: i32| (-lam).exp() * lam.powi(k) / (1..=k).product::<i32>().max(1) as f64;
            let oracle = composite_gl(|x| (-x).exp() * pois(x * t1, k1) * pois(x * (t2 - t1), k2), 0.0, 80.0, 4000);
            let got = joint_limit_pmf(&c, ExtremeKind::OldestAge, &[a1, a2], &[k1 as u64, k2 as u64], None).unwrap();
            assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        }
    }

    #[test]
    fn mixed_poisson() {
        assert_eq!(mixed_poisson_pmf(0.0, 0).unwrap(), 1.0);
        assert_eq!(mixed_poisson_pmf(0.0, 3).unwrap(), 0.0);
        assert!((mixed_poisson_pmf(1.0, 2).unwrap() - 0.125).abs() < 1e-15);
        let oracle = composite_gl(|x| (-x).exp() * (-x).exp() * x * x / 2.0, 0.0, 60.0, 2000);
        assert!((oracle - 0.125).abs() < 1e-10);
        let lam = 2.7;
        let (mut s, mut m) = (0.0, 0.0);
        for k in 0..2000 {
            let p = mixed_poisson_pmf(lam, k).unwrap();
            s += p;
            m += k as f64 * p;
        }
        assert!((s - 1.0).abs() < 1e-12 && (m - lam).abs() < 1e-10);
        assert!(mixed_poisson_pmf(-1.0, 0).is_err());
    }

    #[test]
    fn t_n_examples() {
        let c = consts(1.0, None, 2.0);
        let t = solve_t_n(&c, 10.0).unwrap();
        assert!((t - 2.0 * t.ln() - 10.0 * 2f64.ln()).abs() < 1e-10 * 2f64.ln());
        assert!((t - 11.88).abs() < 0.01, "{t}");
        let mut last = 0.0;
        for n in 3..40 {
            let tn = solve_t_n(&c, n as f64).unwrap();
            assert!(tn > last);
            last = tn;
        }
        assert!(solve_t_n(&c, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn cdf_is_one_over_one_plus_expectation(offset in -3.0f64..3.0, t in 5.0f64..30.0) {
            for c in [consts(1.0, None, 2.0), consts(1.0, None, 1.0)] {
                for kind in [ExtremeKind::LargestSize, ExtremeKind::OldestAge] {
                    let e = limit_expectation(&c, kind, offset, Some(t)).unwrap();
                    let p = limit_cdf_extreme(&c, kind, offset, Some(t)).unwrap();
                    prop_assert!((p - 1.0 / (1.0 + e)).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn fractional_part_covariance(t in 5.0f64..30.0, c1 in -2.0f64..2.0, shift in 0.0f64..1.0) {
            let c = consts(1.0, None, 2.0);
            let x1 = centering(&c, ExtremeKind::LargestSize, t, c1).unwrap();
            // move c while keeping ⌈x_t(c)⌉ fixed
            let room = x1.ceil() - x1;
            let c2 = c1 + shift * room * 0.999;
            let x2 = centering(&c, ExtremeKind::LargestSize, t, c2).unwrap();
            prop_assume!(x1.ceil() == x2.ceil());
            let e1 = limit_expectation(&c, ExtremeKind::LargestSize, c1, Some(t)).unwrap();
            let e2 = limit_expectation(&c, ExtremeKind::LargestSize, c2, Some(t)).unwrap();
            prop_assert!((e1 / e2 - 1.0).abs() < 1e-9);
        }
    }
}
