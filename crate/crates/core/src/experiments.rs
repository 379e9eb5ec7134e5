//! Monte Carlo harness: replicate batches, empirical summaries, comparisons
//! against exact expectations and limit laws, and machine-readable reports.
//!
//! # Random streams
//!
//! Replicate `r` of horizon `i` uses a ChaCha8 generator whose 256-bit key
//! is four successive SplitMix64 outputs started from
//! `seed ^ mix64(i << 8 | domain)` (`domain` 0 for the coalescent point
//! process, 1 for the forward oracle; `mix64` is the SplitMix64 finalizer)
//! and whose stream number is `r`. Streams therefore depend only on
//! `(seed, i, domain, r)`, never on scheduling, and results are reduced in
//! replicate order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asymptotics::{self, AsymptoticConstants, ExtremeKind};
use crate::config::{ExperimentConfig, Suite, Thresholds};
use crate::cpp::{AllelicPartition, CoalescentTree, CppSampler, HaplotypeId, MutationSet, Resolver};
use crate::error::{Error, Result};
use crate::forward::{partition_forward, simulate_forward};
use crate::model::{Lifetime, ModelParams, Regime};
use crate::numfmt::fmt_num;
use crate::scale::{default_step, ScaleGrid};
use crate::spectrum;

/// Which simulator a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Cpp = 0,
    Forward = 1,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    mix64(*state)
}

/// Generator of one replicate; see the module documentation.
pub fn replicate_rng(master_seed: u64, horizon_index: u64, domain: StreamDomain, replicate: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ mix64((horizon_index << 8) | domain as u64);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}

/// Offsets used for automatic thresholds.
pub const AUTO_OFFSETS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Thresholds at one horizon. With automatic thresholds the offsets that
/// produced them are kept alongside (supercritical sizes store the factor
/// `c`, supercritical ages the lag `a` in `t − a`).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ResolvedThresholds {
    pub sizes: Vec<f64>,
    pub ages: Vec<f64>,
    pub windows: Vec<(f64, f64, f64)>,
    pub size_offsets: Option<Vec<f64>>,
    pub age_offsets: Option<Vec<f64>>,
}

pub fn resolve_thresholds(
    thresholds: &Thresholds,
    constants: Option<&AsymptoticConstants>,
    t: f64,
) -> Result<ResolvedThresholds> {
    if let Thresholds::Explicit { sizes, ages, windows } = thresholds {
        return Ok(ResolvedThresholds {
            sizes: sizes.clone(),
            ages: ages.clone(),
            windows: windows.clone(),
            ..Default::default()
        });
    }
    let c = constants.ok_or_else(|| Error::Config("automatic thresholds need the asymptotic constants".into()))?;
    let regime = c.regime;
    if regime != Regime::SupercriticalClones && t <= 1.0 {
        // centerings involve log t; fall back to small fixed grids
        let sizes: Vec<f64> = (1..=5).map(f64::from).collect();
        let ages: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|f| f * t).collect();
        let windows = sizes.iter().map(|&x| (x, 0.0, t)).collect();
        return Ok(ResolvedThresholds { sizes, ages, windows, size_offsets: None, age_offsets: None });
    }
    let (size_offsets, age_offsets): (Vec<f64>, Vec<f64>) = if regime == Regime::SupercriticalClones {
        (AUTO_OFFSETS.iter().map(|o| 2f64.powf(*o)).collect(), AUTO_OFFSETS.iter().map(|o| o + 2.0).collect())
    } else {
        (AUTO_OFFSETS.to_vec(), AUTO_OFFSETS.to_vec())
    };
    let sizes = size_offsets
        .iter()
        .map(|&o| asymptotics::centering(c, ExtremeKind::LargestSize, t, o))
        .collect::<Result<Vec<_>>>()?;
    let ages = age_offsets
        .iter()
        .map(|&o| asymptotics::centering(c, ExtremeKind::OldestAge, t, o))
        .collect::<Result<Vec<_>>>()?;
    let windows = sizes.iter().map(|&x| (x, 0.0, t)).collect();
    Ok(ResolvedThresholds { sizes, ages, windows, size_offsets: Some(size_offsets), age_offsets: Some(age_offsets) })
}

/// Statistics of one simulated population.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicateRecord {
    pub n: u64,
    pub num_families: u64,
    /// Size of the ancestral family (0 if extinct).
    pub z0: u64,
    pub top_sizes: [u64; 2],
    pub top_ages: [f64; 2],
    /// Mutant families of size `k` at index `k − 1`.
    pub spectrum: Vec<u64>,
    pub l: Vec<u64>,
    pub o: Vec<u64>,
    pub m: Vec<u64>,
    pub k: Vec<u64>,
    /// Extinct attempts discarded before this population (forward runs).
    pub rejections: u64,
}

/// Reduces a partition to the tracked statistics with linear passes.
pub fn record_partition(p: &AllelicPartition, th: &ResolvedThresholds, k_max: u64, rejections: u64) -> ReplicateRecord {
    let mut r = ReplicateRecord {
        n: p.population(),
        num_families: p.len() as u64,
        z0: p.ancestral_size(),
        spectrum: vec![0; k_max as usize],
        l: vec![0; th.sizes.len()],
        o: vec![0; th.ages.len()],
        m: vec![0; th.windows.len()],
        k: vec![0; th.windows.len()],
        rejections,
        ..Default::default()
    };
    let need: Vec<u64> = th.sizes.iter().map(|&x| crate::cpp::size_floor(x)).collect();
    let wneed: Vec<u64> = th.windows.iter().map(|w| crate::cpp::size_floor(w.0)).collect();
    // families are in identifier order, so strict comparisons keep the first
    // of equal values, matching the (value desc, identifier asc) tie rule
    let (mut s1, mut s2) = (0u64, 0u64);
    let (mut a1, mut a2) = (0.0f64, 0.0f64);
    for f in p.families() {
        if f.size > s1 {
            s2 = s1;
            s1 = f.size;
        } else if f.size > s2 {
            s2 = f.size;
        }
        if f.age > a1 {
            a2 = a1;
            a1 = f.age;
        } else if f.age > a2 {
            a2 = f.age;
        }
        if f.id != HaplotypeId::Ancestral && f.size <= k_max {
            r.spectrum[f.size as usize - 1] += 1;
        }
        for (c, &nd) in r.l.iter_mut().zip(&need) {
            *c += (f.size >= nd) as u64;
        }
        for (c, &s) in r.o.iter_mut().zip(&th.ages) {
            *c += (f.age > s) as u64;
        }
        for (i, w) in th.windows.iter().enumerate() {
            if f.size >= wneed[i] && f.age > w.1 && f.age <= w.2 {
                r.m[i] += 1;
                if matches!(f.id, HaplotypeId::Mut { branch: 0, .. }) {
                    r.k[i] += 1;
                }
            }
        }
    }
    r.top_sizes = [s1, s2];
    r.top_ages = [a1, a2];
    r
}

/// Scale grid covering every horizon of the configuration.
pub fn build_grid(cfg: &ExperimentConfig) -> Result<ScaleGrid> {
    let alpha = cfg.model.malthusian_alpha()?;
    let top = cfg.horizons.iter().cloned().fold(0.0, f64::max);
    let step = cfg.grid_step.unwrap_or_else(|| default_step(alpha));
    ScaleGrid::build(&cfg.model, (top + 1.0).max(1.0 / alpha), step)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

#[derive(Default)]
struct Scratch {
    tree: CoalescentTree,
    muts: MutationSet,
    resolver: Resolver,
    partition: AllelicPartition,
}

/// Simulates `cfg.replicates` populations at horizon `horizon_index`.
pub fn simulate_records(
    cfg: &ExperimentConfig,
    grid: &ScaleGrid,
    horizon_index: usize,
    th: &ResolvedThresholds,
    domain: StreamDomain,
) -> Result<Vec<ReplicateRecord>> {
    let t = cfg.horizons[horizon_index];
    let pool = thread_pool(cfg.workers)?;
    let seed = cfg.master_seed;
    let k_max = cfg.k_max;
    match domain {
        StreamDomain::Cpp => {
            let sampler = CppSampler::new(grid, t, cfg.model.mutation_rate())?;
            pool.install(|| {
                (0..cfg.replicates)
                    .into_par_iter()
                    .map_init(Scratch::default, |s, r| {
                        let mut rng = replicate_rng(seed, horizon_index as u64, domain, r as u64);
                        sampler.sample_tree_into(&mut rng, &mut s.tree);
                        sampler.overlay_into(&s.tree, &mut rng, &mut s.muts);
                        s.resolver.resolve_into(&s.tree, &s.muts, &mut s.partition)?;
                        Ok(record_partition(&s.partition, th, k_max, 0))
                    })
                    .collect()
            })
        }
        StreamDomain::Forward => pool.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = replicate_rng(seed, horizon_index as u64, domain, r as u64);
                    let run = simulate_forward(&cfg.model, t, &mut rng, cfg.pop_cap)?;
                    Ok(record_partition(&partition_forward(&run), th, k_max, run.rejections))
                })
                .collect()
        }),
    }
}

/// Sample mean, variance (n − 1 denominator), standard error
/// `sqrt(variance/n)` and, for integer statistics, the value histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    pub histogram: Vec<(u64, u64)>,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, variance, se: (variance / n).sqrt(), histogram: Vec::new() }
    }

    pub fn from_counts(values: &[u64]) -> Self {
        let as_f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let mut s = Self::from_values(&as_f);
        let mut h = BTreeMap::new();
        for &v in values {
            *h.entry(v).or_insert(0u64) += 1;
        }
        s.histogram = h.into_iter().collect();
        s
    }

    /// Indicator statistic: proportion with the binomial standard error.
    pub fn from_indicator(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        let variance = if n > 1 { p * (1.0 - p) * n as f64 / (n as f64 - 1.0) } else { 0.0 };
        Self {
            mean: p,
            variance,
            se: (variance / n as f64).sqrt(),
            histogram: vec![(0, (n - hits) as u64), (1, hits as u64)],
        }
    }
}

pub fn key_spectrum(k: u64) -> String {
    format!("A[{k}]")
}
pub fn key_z0(k: u64) -> String {
    format!("P[Z0={k}]")
}
pub fn key_l(x: f64) -> String {
    format!("L[{}]", fmt_num(x))
}
pub fn key_o(s: f64) -> String {
    format!("O[{}]", fmt_num(s))
}
pub fn key_m(w: (f64, f64, f64)) -> String {
    format!("M[{},{},{}]", fmt_num(w.0), fmt_num(w.1), fmt_num(w.2))
}
pub fn key_k(w: (f64, f64, f64)) -> String {
    format!("K[{},{},{}]", fmt_num(w.0), fmt_num(w.1), fmt_num(w.2))
}
/// `P(X^(1) < x)`, i.e. no family of size at least `⌈x⌉`.
pub fn key_size_cdf(x: f64) -> String {
    format!("P[X1<{}]", fmt_num(x))
}
/// `P(A^(1) <= s)`, i.e. no family older than `s`.
pub fn key_age_cdf(s: f64) -> String {
    format!("P[A1<={}]", fmt_num(s))
}

/// Aggregated statistics of one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSummary {
    pub t: f64,
    pub replicates: usize,
    pub thresholds: ResolvedThresholds,
    pub stats: BTreeMap<String, Stat>,
    /// Joint histogram of `(N, Z0, A[1])`.
    pub joint: BTreeMap<String, u64>,
    /// For consecutive size thresholds `i, i+1`: histogram of
    /// `(L(x_{i+1}), L(x_i) − L(x_{i+1}))`.
    pub size_bands: Vec<BTreeMap<(u64, u64), u64>>,
    /// Same for ages with `O`.
    pub age_bands: Vec<BTreeMap<(u64, u64), u64>>,
    /// Accepted fraction of forward attempts (forward runs only).
    pub acceptance_rate: Option<f64>,
}

impl HorizonSummary {
    pub fn stat(&self, key: &str) -> Result<&Stat> {
        self.stats.get(key).ok_or_else(|| Error::KeyMismatch(format!("no statistic '{key}' at t = {}", self.t)))
    }
}

fn bands(records: &[ReplicateRecord], get: impl Fn(&ReplicateRecord) -> &[u64], len: usize) -> Vec<BTreeMap<(u64, u64), u64>> {
    (0..len.saturating_sub(1))
        .map(|i| {
            let mut h = BTreeMap::new();
            for r in records {
                let v = get(r);
                *h.entry((v[i + 1], v[i] - v[i + 1].min(v[i]))).or_insert(0) += 1;
            }
            h
        })
        .collect()
}

/// Deterministic, replicate-ordered reduction.
pub fn summarize(t: f64, th: &ResolvedThresholds, records: &[ReplicateRecord], k_max: u64, forward: bool) -> HorizonSummary {
    let n = records.len();
    let mut stats = BTreeMap::new();
    let col = |f: &dyn Fn(&ReplicateRecord) -> u64| records.iter().map(f).collect::<Vec<u64>>();
    stats.insert("N".to_string(), Stat::from_counts(&col(&|r| r.n)));
    stats.insert("families".to_string(), Stat::from_counts(&col(&|r| r.num_families)));
    stats.insert("Z0".to_string(), Stat::from_counts(&col(&|r| r.z0)));
    stats.insert("P[Z0>0]".to_string(), Stat::from_indicator(records.iter().filter(|r| r.z0 > 0).count(), n));
    stats.insert("X1".to_string(), Stat::from_counts(&col(&|r| r.top_sizes[0])));
    stats.insert("X2".to_string(), Stat::from_counts(&col(&|r| r.top_sizes[1])));
    let ages = |i: usize| records.iter().map(|r| r.top_ages[i]).collect::<Vec<f64>>();
    stats.insert("A1".to_string(), Stat::from_values(&ages(0)));
    stats.insert("A2".to_string(), Stat::from_values(&ages(1)));
    for k in 1..=k_max {
        let i = k as usize - 1;
        stats.insert(key_spectrum(k), Stat::from_counts(&col(&|r| r.spectrum[i])));
        stats.insert(key_z0(k), Stat::from_indicator(records.iter().filter(|r| r.z0 == k).count(), n));
    }
    for (i, &x) in th.sizes.iter().enumerate() {
        stats.insert(key_l(x), Stat::from_counts(&col(&|r| r.l[i])));
        stats.insert(key_size_cdf(x), Stat::from_indicator(records.iter().filter(|r| r.l[i] == 0).count(), n));
    }
    for (i, &s) in th.ages.iter().enumerate() {
        stats.insert(key_o(s), Stat::from_counts(&col(&|r| r.o[i])));
        stats.insert(key_age_cdf(s), Stat::from_indicator(records.iter().filter(|r| r.o[i] == 0).count(), n));
    }
    for (i, &w) in th.windows.iter().enumerate() {
        stats.insert(key_m(w), Stat::from_counts(&col(&|r| r.m[i])));
        if !forward {
            stats.insert(key_k(w), Stat::from_counts(&col(&|r| r.k[i])));
        }
    }
    let mut joint = BTreeMap::new();
    for r in records {
        let a1 = r.spectrum.first().copied().unwrap_or(0);
        *joint.entry(format!("{},{},{}", r.n, r.z0, a1)).or_insert(0) += 1;
    }
    let rejections: u64 = records.iter().map(|r| r.rejections).sum();
    HorizonSummary {
        t,
        replicates: n,
        thresholds: th.clone(),
        stats,
        joint,
        size_bands: bands(records, |r| &r.l, th.sizes.len()),
        age_bands: bands(records, |r| &r.o, th.ages.len()),
        acceptance_rate: forward.then(|| n as f64 / (n as f64 + rejections as f64)),
    }
}

/// Thresholds and coalescent-point-process records of one horizon.
pub fn simulate_horizon(
    cfg: &ExperimentConfig,
    grid: &ScaleGrid,
    constants: Option<&AsymptoticConstants>,
    horizon_index: usize,
) -> Result<(ResolvedThresholds, Vec<ReplicateRecord>)> {
    let th = resolve_thresholds(&cfg.thresholds, constants, cfg.horizons[horizon_index])?;
    let recs = simulate_records(cfg, grid, horizon_index, &th, StreamDomain::Cpp)?;
    Ok((th, recs))
}

/// Summaries for every horizon of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSummary {
    pub seed: u64,
    pub replicates: usize,
    pub horizons: Vec<HorizonSummary>,
    /// Forward-oracle summaries, present when the cross-check suite is on.
    pub forward: Vec<HorizonSummary>,
}

/// Asymptotic constants of the configured model. The critical constant
/// integrates over all times, so the grid is lengthened until its tail
/// truncation is within tolerance.
pub fn config_constants(cfg: &ExperimentConfig, grid: &ScaleGrid) -> Result<AsymptoticConstants> {
    let mut result = asymptotics::constants(&cfg.model, grid);
    let mut t_max = grid.t_max();
    while matches!(result, Err(Error::Truncation { .. })) && t_max < 400.0 / grid.alpha() {
        t_max *= 2.0;
        result = asymptotics::constants(&cfg.model, &ScaleGrid::build(&cfg.model, t_max, grid.step())?);
    }
    result
}

pub fn run_replicates(cfg: &ExperimentConfig) -> Result<EmpiricalSummary> {
    cfg.validate()?;
    let grid = build_grid(cfg)?;
    let consts = match cfg.thresholds {
        Thresholds::Auto => Some(config_constants(cfg, &grid)?),
        Thresholds::Explicit { .. } => None,
    };
    let crosscheck = cfg.suites.contains(&Suite::OracleCrosscheck);
    let mut horizons = Vec::new();
    let mut forward = Vec::new();
    for (i, &t) in cfg.horizons.iter().enumerate() {
        let (th, recs) = simulate_horizon(cfg, &grid, consts.as_ref(), i)?;
        horizons.push(summarize(t, &th, &recs, cfg.k_max, false));
        if crosscheck {
            let recs = simulate_records(cfg, &grid, i, &th, StreamDomain::Forward)?;
            forward.push(summarize(t, &th, &recs, cfg.k_max, true));
        }
    }
    Ok(EmpiricalSummary { seed: cfg.master_seed, replicates: cfg.replicates, horizons, forward })
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub empirical: f64,
    pub target: f64,
    pub se: f64,
    pub z_or_p: f64,
    pub pass: bool,
}

/// Direction of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    TwoSided,
    /// The empirical value must not exceed the target (bounds).
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub key: String,
    pub value: f64,
    pub tail: Tail,
}

impl Target {
    pub fn two_sided(key: String, value: f64) -> Self {
        Self { key, value, tail: Tail::TwoSided }
    }
}

/// z-scores of empirical means against targets. A zero standard error with
/// a mismatch is a hard failure (`z = ±∞`).
pub fn compare_to_exact(summary: &HorizonSummary, targets: &[Target], z_max: f64) -> Result<Vec<Check>> {
    targets
        .iter()
        .map(|tg| {
            let s = summary.stat(&tg.key)?;
            let diff = s.mean - tg.value;
            let z = if s.se > 0.0 {
                diff / s.se
            } else if diff.abs() <= 1e-12 * tg.value.abs().max(1.0) {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            };
            let pass = match tg.tail {
                Tail::TwoSided => z.abs() <= z_max,
                Tail::Upper => z <= z_max,
            };
            Ok(Check { name: tg.key.clone(), empirical: s.mean, target: tg.value, se: s.se, z_or_p: z, pass })
        })
        .collect()
}

/// Exact targets of a suite at one horizon.
pub fn exact_targets(summary: &HorizonSummary, grid: &ScaleGrid, params: &ModelParams, suite: Suite, k_max: u64) -> Result<Vec<Target>> {
    let t = summary.t;
    let theta = params.mutation_rate();
    let th = &summary.thresholds;
    let mut out = Vec::new();
    match suite {
        Suite::Spectrum => {
            out.push(Target::two_sided("N".into(), grid.eval_w(t)?));
            let z0_alive = (grid.eval_log_w(t)? - theta * t - grid.eval_log_w_theta(t)?).exp();
            out.push(Target::two_sided("P[Z0>0]".into(), z0_alive));
            for k in 1..=k_max {
                out.push(Target::two_sided(key_spectrum(k), spectrum::expected_spectrum(grid, theta, k, t)?));
                out.push(Target::two_sided(key_z0(k), spectrum::ancestral_law(grid, theta, k, t)?));
            }
        }
        Suite::ExtremesLargest => {
            for &x in &th.sizes {
                out.push(Target::two_sided(key_l(x), spectrum::expected_large(grid, theta, t, x)?.total()));
            }
            for &w in &th.windows {
                out.push(Target::two_sided(key_m(w), spectrum::expected_counts(grid, theta, t, w.0, w.1, w.2)?.total()));
            }
        }
        Suite::ExtremesOldest => {
            for &s in &th.ages {
                out.push(Target::two_sided(key_o(s), spectrum::expected_old(grid, theta, t, s)?.total()));
            }
        }
        Suite::Bounds => {
            let alpha = params.malthusian_alpha()?;
            for &w in &th.windows {
                if let Ok(b) = spectrum::k_bound(grid, theta, t, w.0, w.1, w.2, params.birth_rate(), alpha) {
                    out.push(Target { key: key_k(w), value: b.sharp, tail: Tail::Upper });
                }
            }
        }
        Suite::Joint | Suite::OracleCrosscheck => {}
    }
    Ok(out)
}

/// Result of a chi-square test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub bins: usize,
}

fn chi_square_p(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
}

/// Goodness of fit of counts `0, 1, 2, …` (`observed[k]` replicates with
/// value `k`) against a pmf; adjacent bins are pooled until each expects at
/// least 5, and the tail beyond the last bin gets the remaining mass.
pub fn chi_square_gof(observed: &[u64], pmf: impl Fn(u64) -> f64) -> Result<ChiSquare> {
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let nf = n as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp, mut mass) = (0.0, 0.0, 0.0);
    let mut k = 0u64;
    loop {
        let p = pmf(k);
        mass += p;
        obs += observed.get(k as usize).copied().unwrap_or(0) as f64;
        exp += nf * p;
        k += 1;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
        let rest_obs: u64 = observed.iter().skip(k as usize).sum();
        if nf * (1.0 - mass) < 5.0 && rest_obs == 0 || k > 1_000_000 {
            break;
        }
    }
    // remaining tail, merged into the last bin if it expects too little
    let rest_obs: u64 = observed.iter().skip(k as usize).sum();
    obs += rest_obs as f64;
    exp += nf * (1.0 - mass).max(0.0);
    if exp >= 5.0 || bins.is_empty() {
        bins.push((obs, exp));
    } else if let Some(last) = bins.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    if bins.len() < 2 {
        return Err(Error::InsufficientData(format!("only {} pooled bin(s) with expected count >= 5", bins.len())));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = bins.len() - 1;
    Ok(ChiSquare { statistic, df, p_value: chi_square_p(statistic, df), bins: bins.len() })
}

/// Two-sample chi-square homogeneity test over categorical bins; categories
/// with fewer than 10 pooled observations are merged.
pub fn chi_square_two_sample<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> Result<ChiSquare> {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut keys: Vec<K> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in keys {
        let (x, y) = (a.get(&k).copied().unwrap_or(0) as f64, b.get(&k).copied().unwrap_or(0) as f64);
        if x + y >= 10.0 {
            cells.push((x, y));
        } else {
            sa += x;
            sb += y;
        }
    }
    if sa + sb > 0.0 {
        cells.push((sa, sb));
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientData("fewer than two populated bins".into()));
    }
    let (ka, kb) = (((nb as f64) / (na as f64)).sqrt(), ((na as f64) / (nb as f64)).sqrt());
    let statistic: f64 = cells.iter().map(|(x, y)| (ka * x - kb * y).powi(2) / (x + y)).sum();
    let df = cells.len() - 1;
    Ok(ChiSquare { statistic, df, p_value: chi_square_p(statistic, df), bins: cells.len() })
}

/// `|empirical CDF − limit CDF|` at one offset and horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfGap {
    pub t: f64,
    pub offset: f64,
    pub threshold: f64,
    pub empirical: f64,
    pub se: f64,
    pub limit: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub kind: &'static str,
    pub gaps: Vec<CdfGap>,
    /// Counts beyond the offset-0 threshold at the largest horizon against
    /// the mixed Poisson law with the limit intensity.
    pub chi_square: ChiSquare,
    /// Offset-0 gap at the largest horizon is within
    /// `max(first gap, 3 SE)`.
    pub trend_pass: bool,
}

/// Index of the offset-0 threshold.
fn zero_offset_index(offsets: &[f64]) -> Option<usize> {
    offsets.iter().position(|&o| o == 0.0)
}

/// Compares the extremes of increasing horizons with a limit law.
pub fn fit_limit_law(summaries: &[HorizonSummary], constants: &AsymptoticConstants, kind: ExtremeKind) -> Result<FitReport> {
    if constants.regime == Regime::SupercriticalClones {
        return Err(Error::Regime(
            "no limit law for extremes in the supercritical regime: the method does not apply to the supercritical case".into(),
        ));
    }
    if summaries.is_empty() {
        return Err(Error::InsufficientData("no horizons".into()));
    }
    let mut gaps = Vec::new();
    for s in summaries {
        if s.replicates < 100 {
            return Err(Error::InsufficientData(format!("{} replicates, need at least 100", s.replicates)));
        }
        let (offsets, thresholds) = match kind {
            ExtremeKind::LargestSize => (&s.thresholds.size_offsets, &s.thresholds.sizes),
            ExtremeKind::OldestAge => (&s.thresholds.age_offsets, &s.thresholds.ages),
        };
        let offsets = offsets
            .as_ref()
            .ok_or_else(|| Error::InsufficientData(format!("no centred thresholds at t = {}", s.t)))?;
        for (&o, &x) in offsets.iter().zip(thresholds) {
            let key = match kind {
                ExtremeKind::LargestSize => key_size_cdf(x),
                ExtremeKind::OldestAge => key_age_cdf(x),
            };
            let st = s.stat(&key)?;
            let limit = asymptotics::limit_cdf_extreme(constants, kind, o, Some(s.t))?;
            gaps.push(CdfGap { t: s.t, offset: o, threshold: x, empirical: st.mean, se: st.se, limit, gap: (st.mean - limit).abs() });
        }
    }
    let last = summaries.last().expect("nonempty");
    let offsets = match kind {
        ExtremeKind::LargestSize => last.thresholds.size_offsets.as_ref(),
        ExtremeKind::OldestAge => last.thresholds.age_offsets.as_ref(),
    }
    .expect("checked above");
    let i0 = zero_offset_index(offsets).ok_or_else(|| Error::InsufficientData("no offset 0".into()))?;
    let key = match kind {
        ExtremeKind::LargestSize => key_l(last.thresholds.sizes[i0]),
        ExtremeKind::OldestAge => key_o(last.thresholds.ages[i0]),
    };
    let hist = &last.stat(&key)?.histogram;
    let top = hist.last().map(|h| h.0).unwrap_or(0) as usize;
    let mut observed = vec![0u64; top + 1];
    for &(v, c) in hist {
        observed[v as usize] = c;
    }
    let tau = asymptotics::limit_expectation(constants, kind, 0.0, Some(last.t))?;
    let chi_square = chi_square_gof(&observed, |k| asymptotics::mixed_poisson_pmf(tau, k).unwrap_or(0.0))?;
    let at_zero: Vec<&CdfGap> = gaps.iter().filter(|g| g.offset == 0.0).collect();
    let (first, final_gap) = (at_zero.first().expect("offset 0 present"), at_zero.last().expect("offset 0 present"));
    let trend_pass = final_gap.gap <= first.gap.max(3.0 * final_gap.se);
    Ok(FitReport { kind: kind.name(), gaps, chi_square, trend_pass })
}

/// Chi-square of the band counts at offsets `(1, 0)` against the joint
/// limit law.
pub fn fit_joint_law(summary: &HorizonSummary, constants: &AsymptoticConstants, kind: ExtremeKind) -> Result<ChiSquare> {
    let (offsets, bands) = match kind {
        ExtremeKind::LargestSize => (&summary.thresholds.size_offsets, &summary.size_bands),
        ExtremeKind::OldestAge => (&summary.thresholds.age_offsets, &summary.age_bands),
    };
    let offsets = offsets.as_ref().ok_or_else(|| Error::InsufficientData("no centred thresholds".into()))?;
    let i0 = zero_offset_index(offsets).ok_or_else(|| Error::InsufficientData("no offset 0".into()))?;
    if i0 + 1 >= offsets.len() {
        return Err(Error::InsufficientData("no offset above 0".into()));
    }
    let hi = offsets[i0 + 1];
    let hist = &bands[i0];
    // linearise (k1, k2) by total then k1 so the pooled pmf is well ordered
    let n: u64 = hist.values().sum();
    let mut cells = Vec::new();
    let max_total = hist.keys().map(|(a, b)| a + b).max().unwrap_or(0) + 1;
    for total in 0..=max_total.max(40) {
        for k1 in 0..=total {
            let p = asymptotics::joint_limit_pmf(constants, kind, &[hi, 0.0], &[k1, total - k1], Some(summary.t))?;
            let o = hist.get(&(k1, total - k1)).copied().unwrap_or(0);
            cells.push((o, p));
        }
    }
    let observed: Vec<u64> = cells.iter().map(|c| c.0).collect();
    let probs: Vec<f64> = cells.iter().map(|c| c.1).collect();
    let missing: u64 = n - observed.iter().sum::<u64>();
    let mut observed = observed;
    if let Some(last) = observed.last_mut() {
        *last += missing;
    }
    chi_square_gof(&observed, |k| probs.get(k as usize).copied().unwrap_or(0.0))
}

/// Report of one suite at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: String,
    pub model: String,
    pub t: f64,
    pub replicates: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn describe_model(params: &ModelParams) -> String {
    let b = params.birth_rate();
    let life = match params.lifespan.lifetime() {
        Lifetime::Exponential { death_rate } => format!("exponential(b={b}, d={death_rate})"),
        Lifetime::Fixed { duration } => format!("fixed(b={b}, v={duration})"),
        Lifetime::Immortal => format!("immortal(b={b})"),
        Lifetime::Tabulated(tail) => format!("tabulated(b={b}, step={}, nodes={})", tail.step(), tail.values().len()),
    };
    format!("{life}, theta={}", params.mutation_rate())
}

/// Chi-square line; `asserted` false makes it informational (limit laws are
/// only approached as t grows, so their fit at one horizon is not a test).
fn p_check(name: String, chi: &ChiSquare, asserted: bool) -> Check {
    let pass = !asserted || chi.p_value > 0.01;
    Check { name, empirical: chi.statistic, target: chi.df as f64, se: 0.0, z_or_p: chi.p_value, pass }
}

/// Expected hits below which a two-sided comparison is skipped: with so few
/// events an all-zero sample (SE = 0) is likely and would be a hard failure.
pub const MIN_EXPECTED_HITS: f64 = 5.0;

/// Runs the configured suites and reports one entry per suite and horizon.
pub fn verify(cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    if cfg.replicates < 100 {
        return Err(Error::InsufficientData(format!("{} replicates, need at least 100", cfg.replicates)));
    }
    let summary = run_replicates(cfg)?;
    let grid = build_grid(cfg)?;
    let consts = config_constants(cfg, &grid).ok();
    let model = describe_model(&cfg.model);
    let mut reports = Vec::new();
    let last_index = summary.horizons.len() - 1;
    for &suite in &cfg.suites {
        for (i, h) in summary.horizons.iter().enumerate() {
            let targets: Vec<Target> = exact_targets(h, &grid, &cfg.model, suite, cfg.k_max)?
                .into_iter()
                .filter(|tg| tg.tail == Tail::Upper || h.replicates as f64 * tg.value >= MIN_EXPECTED_HITS)
                .collect();
            let mut checks = compare_to_exact(h, &targets, cfg.z_max)?;
            match suite {
                Suite::ExtremesLargest | Suite::ExtremesOldest if i == last_index => {
                    let kind = if suite == Suite::ExtremesLargest { ExtremeKind::LargestSize } else { ExtremeKind::OldestAge };
                    if let Some(c) = consts.as_ref().filter(|c| c.regime != Regime::SupercriticalClones) {
                        if let Ok(fit) = fit_limit_law(&summary.horizons, c, kind) {
                            for g in &fit.gaps {
                                checks.push(Check {
                                    name: format!("limit_cdf[t={},offset={}]", fmt_num(g.t), fmt_num(g.offset)),
                                    empirical: g.empirical,
                                    target: g.limit,
                                    se: g.se,
                                    z_or_p: g.gap,
                                    pass: true,
                                });
                            }
                            checks.push(Check {
                                name: "limit_cdf_trend".into(),
                                empirical: fit.gaps.iter().rfind(|g| g.offset == 0.0).map(|g| g.gap).unwrap_or(0.0),
                                target: fit.gaps.iter().find(|g| g.offset == 0.0).map(|g| g.gap).unwrap_or(0.0),
                                se: fit.gaps.iter().rfind(|g| g.offset == 0.0).map(|g| g.se).unwrap_or(0.0),
                                z_or_p: 0.0,
                                pass: fit.trend_pass,
                            });
                            // size counts approach their limit only like log t / t, so their
                            // fit is reported but asserted for ages alone
                            checks.push(p_check("mixed_poisson_counts".into(), &fit.chi_square, kind == ExtremeKind::OldestAge));
                        }
                    }
                }
                Suite::Joint => {
                    if let Some(c) = consts.as_ref().filter(|c| c.regime != Regime::SupercriticalClones) {
                        for kind in [ExtremeKind::LargestSize, ExtremeKind::OldestAge] {
                            if let Ok(chi) = fit_joint_law(h, c, kind) {
                                checks.push(p_check(format!("joint_{}", kind.name()), &chi, false));
                            }
                        }
                    }
                }
                Suite::OracleCrosscheck => {
                    let f = &summary.forward[i];
                    let chi = chi_square_two_sample(&h.joint, &f.joint)?;
                    checks.push(p_check("joint(N,Z0,A1)".into(), &chi, true));
                    for key in ["N", "Z0", "families"] {
                        let (a, b) = (h.stat(key)?, f.stat(key)?);
                        let se = (a.se * a.se + b.se * b.se).sqrt();
                        let z = if se > 0.0 { (a.mean - b.mean) / se } else { 0.0 };
                        checks.push(Check {
                            name: format!("two_sample_mean[{key}]"),
                            empirical: a.mean,
                            target: b.mean,
                            se,
                            z_or_p: z,
                            pass: z.abs() <= cfg.z_max,
                        });
                    }
                }
                _ => {}
            }
            reports.push(Report {
                suite: suite.name().into(),
                model: model.clone(),
                t: h.t,
                replicates: h.replicates,
                seed: cfg.master_seed,
                checks,
            });
        }
    }
    Ok(reports)
}

pub fn reports_json(reports: &[Report]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// CSV `suite,t,name,empirical,target,se,z_or_p,pass`.
pub fn reports_csv(reports: &[Report]) -> String {
    let mut out = String::from("suite,t,name,empirical,target,se,z_or_p,pass\n");
    for r in reports {
        for c in &r.checks {
            let _ = writeln!(
                out,
                "{},{},\"{}\",{},{},{},{},{}",
                r.suite,
                fmt_num(r.t),
                c.name,
                fmt_num(c.empirical),
                fmt_num(c.target),
                fmt_num(c.se),
                fmt_num(c.z_or_p),
                c.pass
            );
        }
    }
    out
}

/// Per-replicate CSV, preceded by a comment line describing the columns.
pub fn replicates_csv(records: &[ReplicateRecord], th: &ResolvedThresholds) -> String {
    let mut out = String::from(
        "# replicate: index; N: population size; num_families: distinct types; X1,X2: two largest family sizes; \
         A1,A2: two oldest family ages; L_<x>: families of size >= ceil(x)\n",
    );
    out.push_str("replicate,N,num_families,X1,X2,A1,A2");
    for &x in &th.sizes {
        let _ = write!(out, ",L_{}", fmt_num(x));
    }
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        let _ = write!(
            out,
            "{i},{},{},{},{},{},{}",
            r.n,
            r.num_families,
            r.top_sizes[0],
            r.top_sizes[1],
            fmt_num(r.top_ages[0]),
            fmt_num(r.top_ages[1])
        );
        for l in &r.l {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
    }
    out
}
