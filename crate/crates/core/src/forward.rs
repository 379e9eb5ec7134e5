//! Forward-in-time simulation of the splitting tree (a binary
//! Crump–Mode–Jagers process), conditioned on survival by rejection.
//!
//! Shares no machinery with the coalescent point process so that it can
//! serve as an independent check of it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::cpp::{AllelicPartition, Family, HaplotypeId};
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const DEFAULT_POP_CAP: usize = 1_000_000;
pub const MAX_REJECTIONS: u64 = 1_000_000;

const ANCESTRAL: usize = usize::MAX;

/// Population alive at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRun {
    pub horizon: f64,
    /// Current type of each living individual: a mutation serial number or
    /// `None` for the ancestral type.
    pub types: Vec<Option<usize>>,
    /// Time at which mutation `s` occurred.
    pub mutation_times: Vec<f64>,
    /// Extinct attempts discarded before this run.
    pub rejections: u64,
}

impl ForwardRun {
    pub fn population(&self) -> usize {
        self.types.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Birth,
    Mutation,
    Death,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: Kind,
    who: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl Ord for Event {
    // min-heap on time, ties by insertion-independent keys
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.who.cmp(&self.who))
            .then_with(|| (other.kind as u8).cmp(&(self.kind as u8)))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Individual {
    death: f64,
    kind: usize,
    alive: bool,
}

fn exp_time<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// One attempt; `None` when the population dies out before the horizon.
fn attempt<R: Rng + ?Sized>(
    params: &ModelParams,
    horizon: f64,
    rng: &mut R,
    pop_cap: usize,
) -> Result<Option<(Vec<Option<usize>>, Vec<f64>)>> {
    let b = params.birth_rate();
    let theta = params.mutation_rate();
    let mut people: Vec<Individual> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut mutation_times = Vec::new();
    let mut alive = 0usize;

    let spawn = |now: f64, kind: usize, people: &mut Vec<Individual>, heap: &mut BinaryHeap<Event>, rng: &mut R| {
        let who = people.len();
        let death = now + params.lifespan.sample_lifetime(rng);
        people.push(Individual { death, kind, alive: true });
        if death < horizon {
            heap.push(Event { time: death, kind: Kind::Death, who });
        }
        let nb = now + exp_time(rng, b);
        if nb < horizon.min(death) {
            heap.push(Event { time: nb, kind: Kind::Birth, who });
        }
        if theta > 0.0 {
            let nm = now + exp_time(rng, theta);
            if nm < horizon.min(death) {
                heap.push(Event { time: nm, kind: Kind::Mutation, who });
            }
        }
    };

    spawn(0.0, ANCESTRAL, &mut people, &mut heap, rng);
    alive += 1;
    while let Some(ev) = heap.pop() {
        let now = ev.time;
        let death = people[ev.who].death;
        match ev.kind {
            Kind::Death => {
                people[ev.who].alive = false;
                alive -= 1;
                if alive == 0 {
                    return Ok(None);
                }
            }
            Kind::Birth => {
                let kind = people[ev.who].kind;
                spawn(now, kind, &mut people, &mut heap, rng);
                alive += 1;
                if alive > pop_cap {
                    return Err(Error::PopulationCap { cap: pop_cap });
                }
                let nb = now + exp_time(rng, b);
                if nb < horizon.min(death) {
                    heap.push(Event { time: nb, kind: Kind::Birth, who: ev.who });
                }
            }
            Kind::Mutation => {
                people[ev.who].kind = mutation_times.len();
                mutation_times.push(now);
                let nm = now + exp_time(rng, theta);
                if nm < horizon.min(death) {
                    heap.push(Event { time: nm, kind: Kind::Mutation, who: ev.who });
                }
            }
        }
    }
    let types = people
        .iter()
        .filter(|p| p.alive && p.death > horizon)
        .map(|p| (p.kind != ANCESTRAL).then_some(p.kind))
        .collect::<Vec<_>>();
    if types.is_empty() {
        return Ok(None);
    }
    Ok(Some((types, mutation_times)))
}

/// Runs the forward process to `horizon`, retrying extinct attempts.
pub fn simulate_forward<R: Rng + ?Sized>(
    params: &ModelParams,
    horizon: f64,
    rng: &mut R,
    pop_cap: usize,
) -> Result<ForwardRun> {
    if !params.lifespan.is_supercritical() {
        return Err(Error::NotSupercritical { mean_offspring: params.lifespan.mean_offspring() });
    }
    if !(horizon > 0.0) {
        return Err(Error::Range(format!("horizon must be positive, got {horizon}")));
    }
    let mut rejections = 0;
    loop {
        if let Some((types, mutation_times)) = attempt(params, horizon, rng, pop_cap)? {
            return Ok(ForwardRun { horizon, types, mutation_times, rejections });
        }
        rejections += 1;
        if rejections >= MAX_REJECTIONS {
            return Err(Error::RetryLimit { attempts: rejections });
        }
    }
}

/// Groups living individuals by type. Mutant identifiers carry the
/// mutation's serial number in the `branch` field.
pub fn partition_forward(run: &ForwardRun) -> AllelicPartition {
    let mut counts: HashMap<Option<usize>, u64> = HashMap::new();
    for t in &run.types {
        *counts.entry(*t).or_default() += 1;
    }
    let families = counts
        .into_iter()
        .map(|(t, size)| match t {
            None => Family { id: HaplotypeId::Ancestral, size, age: run.horizon },
            Some(s) => {
                let age = run.horizon - run.mutation_times[s];
                Family { id: HaplotypeId::Mut { branch: s, age }, size, age }
            }
        })
        .collect();
    AllelicPartition::new(run.horizon, families).expect("forward families are distinct and well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LifespanModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_mutations_single_family() {
        let p = ModelParams::new(LifespanModel::birth_death(2.0, 1.0).unwrap(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let run = simulate_forward(&p, 2.0, &mut rng, DEFAULT_POP_CAP).unwrap();
            let part = partition_forward(&run);
            assert_eq!(part.len(), 1);
            assert_eq!(part.ancestral_size(), run.population() as u64);
        }
    }

    #[test]
    fn sizes_sum_and_ages_bounded() {
        let p = ModelParams::new(LifespanModel::fixed(2.0, 1.0).unwrap(), 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let run = simulate_forward(&p, 2.5, &mut rng, DEFAULT_POP_CAP).unwrap();
            let part = partition_forward(&run);
            assert_eq!(part.population(), run.population() as u64);
            assert!(part.families().iter().all(|f| f.age > 0.0 && f.age <= 2.5));
        }
    }

    #[test]
    fn cap_and_criticality_errors() {
        let p = ModelParams::new(LifespanModel::yule(1.0).unwrap(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(simulate_forward(&p, 12.0, &mut rng, 10), Err(Error::PopulationCap { cap: 10 }));
        let sub = ModelParams::new(LifespanModel::birth_death(1.0, 2.0).unwrap(), 0.0).unwrap();
        assert!(simulate_forward(&sub, 1.0, &mut rng, 10).is_err());
    }
}
