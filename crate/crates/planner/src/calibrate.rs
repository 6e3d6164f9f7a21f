//! Microbenchmark calibration of the primitive costs.

use std::time::{Duration, Instant};

use he_core::rng::stream;
use he_core::{Evaluator, HeContext, HeParams, SlotCipher, SlotPlain};
use rand::Rng;
use rayon::prelude::*;

use crate::cost::{CostProfile, Primitive};
use crate::error::{PlannerError, Result};

pub const MIN_REPETITIONS: usize = 30;

#[derive(Clone, Copy, Debug)]
pub struct CalibrationOptions {
    pub repetitions: usize,
    /// Untimed runs before the timed ones.
    pub warmup: usize,
    pub seed: u64,
    /// Operations issued together per timed run; 1 measures single-op latency.
    pub threads: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { repetitions: MIN_REPETITIONS, warmup: 3, seed: 0, threads: 1 }
    }
}

pub fn machine_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{} ({cpus} cpus)", std::env::consts::OS, std::env::consts::ARCH)
}

struct Operands {
    /// Fresh ciphertexts at the top level, where products are taken.
    top: Vec<SlotCipher>,
    /// Ciphertexts one level down, where accumulation and rotations run after a product.
    lower: Vec<SlotCipher>,
    plains: Vec<SlotPlain>,
}

const POOL: usize = 4;

fn operands(ctx: &HeContext, keys: &he_core::PublicKeys, seed: u64) -> Result<Operands> {
    let slots = ctx.slot_count();
    let scale = ctx.params().scale();
    let lower_level = ctx.depth().saturating_sub(1);
    let mut top = Vec::with_capacity(POOL);
    let mut lower = Vec::with_capacity(POOL);
    let mut plains = Vec::with_capacity(POOL);
    for i in 0..POOL as u64 {
        let mut rng = stream(seed, &[i]);
        let mut value = || SlotPlain { values: (0..slots).map(|_| rng.random_range(-1.0..1.0)).collect(), scale };
        let (a, b, p) = (value(), value(), value());
        top.push(ctx.encrypt(&a, keys, &mut stream(seed, &[i, 1]))?);
        lower.push(ctx.encrypt_at(&b, lower_level, keys, &mut stream(seed, &[i, 2]))?);
        plains.push(p);
    }
    Ok(Operands { top, lower, plains })
}

fn run_once(ev: Evaluator<'_>, ops: &Operands, prepared: &[he_core::PreparedPlain], which: Primitive, i: usize) -> Result<()> {
    let (a, b) = (i % POOL, (i + 1) % POOL);
    let r = match which {
        Primitive::PlainMul => ev.mul_prepared(&ops.top[a], &prepared[b]),
        Primitive::PlainAdd => ev.add_plain(&ops.lower[a], &ops.plains[b]),
        Primitive::EncMul => ev.mul(&ops.top[a], &ops.top[b]),
        Primitive::EncAdd => ev.add(&ops.lower[a], &ops.lower[b]),
        Primitive::Rotation => ev.rotate(&ops.lower[a], 1),
    };
    std::hint::black_box(r?);
    Ok(())
}

fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort_unstable();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

/// Median seconds per primitive. Products are timed on top-level operands, additions and
/// rotations one level lower, matching where the circuit runs them.
pub fn calibrate(params: &HeParams, opts: &CalibrationOptions) -> Result<CostProfile> {
    if opts.repetitions < MIN_REPETITIONS {
        return Err(PlannerError::InvalidRequest(format!(
            "at least {MIN_REPETITIONS} repetitions required (got {})",
            opts.repetitions
        )));
    }
    let ctx = HeContext::new(params.clone())?;
    let keys = ctx.keygen(opts.seed);
    let ev = ctx.evaluator(&keys.public)?;
    let ops = operands(&ctx, &keys.public, opts.seed)?;
    let prepared = ops.plains.iter().map(|p| ev.prepare(p, ctx.depth())).collect::<he_core::Result<Vec<_>>>()?;
    let threads = opts.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PlannerError::Calibration(e.to_string()))?;

    let mut profile = CostProfile::uniform(0.0);
    for which in Primitive::ALL {
        let mut samples = Vec::with_capacity(opts.repetitions);
        for rep in 0..opts.warmup + opts.repetitions {
            let start = Instant::now();
            if threads == 1 {
                run_once(ev, &ops, &prepared, which, rep)?;
            } else {
                pool.install(|| (0..threads).into_par_iter().try_for_each(|t| run_once(ev, &ops, &prepared, which, rep + t)))?;
            }
            let elapsed = start.elapsed() / threads as u32;
            if rep >= opts.warmup {
                samples.push(elapsed);
            }
        }
        let m = median(samples);
        if m.is_zero() {
            return Err(PlannerError::Calibration(format!(
                "{} is below the timer resolution; increase the repetitions",
                which.symbol()
            )));
        }
        profile.set(which, m.as_secs_f64());
    }
    profile.machine = machine_descriptor();
    profile.params = Some(params.clone());
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        let ms = Duration::from_millis;
        assert_eq!(median(vec![ms(3), ms(1), ms(2)]), ms(2));
        assert_eq!(median(vec![ms(4), ms(1), ms(2), ms(3)]), Duration::from_micros(2500));
    }

    #[test]
    fn too_few_repetitions() {
        let opts = CalibrationOptions { repetitions: 10, ..Default::default() };
        assert!(matches!(calibrate(&HeParams::default(), &opts), Err(PlannerError::InvalidRequest(_))));
    }
}
