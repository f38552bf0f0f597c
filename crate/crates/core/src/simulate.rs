//! Monte Carlo side of the toolkit: continuous-time random walks on the
//! truncated ball (killed at the boundary), the depth chain with its
//! tadpole sojourns, and the renewal-unit walk.  Estimators report
//! normal-approximation confidence intervals and are bit-reproducible:
//! every replica runs on its own counter-mode RNG stream, and reductions
//! happen in replica order regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::functionals::{entropy, Rho};
use crate::graphs::{DepthLine, TruncatedTree, UnitGraph};
use crate::prob::stable_sum;
use crate::sojourn::{draw_exp, SojournLaw, SojournSampler};
use crate::Result;

const Z_95: f64 = 1.959_963_984_540_054;

/// Occupation record of one killed walk run to the horizon.
#[derive(Clone, Debug)]
pub struct LocalTimeRecord {
    /// Time spent at each vertex; sums to `min(horizon, kill time)`.
    pub occupation: Vec<f64>,
    pub killed: bool,
    /// Set when the walk stepped outside the ball before the horizon.
    pub kill_time: Option<f64>,
    pub jumps: usize,
}

/// Runs one walk on the ball: exponential holding times of rate `d+1`,
/// uniform jumps over the `d+1` incident tree directions, killed on the
/// directions that leave the ball.
pub fn simulate_killed_walk(
    tree: &TruncatedTree,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LocalTimeRecord> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveParameter { what: "horizon", value: horizon });
    }
    let degree = (tree.d() + 1) as f64;
    let mut occupation = vec![0.0; tree.n()];
    let mut at = 0u32;
    let mut time = 0.0;
    let mut jumps = 0usize;
    loop {
        let hold = draw_exp(rng, degree);
        if time + hold >= horizon {
            occupation[at as usize] += horizon - time;
            return Ok(LocalTimeRecord { occupation, killed: false, kill_time: None, jumps });
        }
        occupation[at as usize] += hold;
        time += hold;
        jumps += 1;
        let slot = rng.gen_range(0..tree.d() + 1);
        let children = tree.children(at);
        let n_children = children.end - children.start;
        let next = match tree.parent(at) {
            Some(p) => {
                if slot == 0 {
                    Some(p)
                } else if slot <= n_children {
                    Some(children.start + slot - 1)
                } else {
                    None
                }
            }
            None => {
                if slot < n_children {
                    Some(children.start + slot)
                } else {
                    None
                }
            }
        };
        match next {
            Some(v) => at = v,
            None => {
                return Ok(LocalTimeRecord {
                    occupation,
                    killed: true,
                    kill_time: Some(time),
                    jumps,
                });
            }
        }
    }
}

/// Survival-probability estimate turned into a decay exponent.
#[derive(Clone, Debug)]
pub struct SurvivalEstimate {
    /// `-ln(survivors/n) / t`.
    pub exponent: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub survivors: u64,
    pub n: u64,
    pub t: f64,
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica + 1);
    rng
}

/// Estimates the annealed survival exponent of the killed walk by
/// independent replicas; the confidence interval is the delta-method
/// normal band for `-ln p / t`.
pub fn estimate_survival_exponent(
    tree: &TruncatedTree,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<SurvivalEstimate> {
    if n == 0 {
        return Err(Error::NonPositiveParameter { what: "replica count", value: 0.0 });
    }
    let flags: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            simulate_killed_walk(tree, t, &mut rng).map(|rec| !rec.killed)
        })
        .collect::<Result<Vec<_>>>()?;
    let survivors = flags.iter().filter(|&&s| s).count() as u64;
    if survivors == 0 {
        return Err(Error::AllRunsKilled { n, exponent_lower_bound: (n as f64).ln() / t });
    }
    let p_hat = survivors as f64 / n as f64;
    let exponent = -p_hat.ln() / t;
    let se = ((1.0 - p_hat) / (n as f64 * p_hat)).sqrt() / t;
    Ok(SurvivalEstimate {
        exponent,
        ci_lo: exponent - Z_95 * se,
        ci_hi: exponent + Z_95 * se,
        survivors,
        n,
        t,
    })
}

/// Weighted-survival estimate for the annealed total mass, where each
/// surviving replica carries `exp(-rho t J(L_t / t))`.
#[derive(Clone, Debug)]
pub struct MassEstimate {
    /// `-(1/t) ln[(1/n) sum of weights]`.
    pub exponent: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub survivors: u64,
    pub n: u64,
    pub t: f64,
    pub rho: f64,
}

pub fn estimate_mass_exponent(
    tree: &TruncatedTree,
    rho: Rho,
    t: f64,
    n: u64,
    seed: u64,
) -> Result<MassEstimate> {
    if n == 0 {
        return Err(Error::NonPositiveParameter { what: "replica count", value: 0.0 });
    }
    let weights: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i);
            let rec = simulate_killed_walk(tree, t, &mut rng)?;
            if rec.killed {
                return Ok(0.0);
            }
            let normalised: Vec<f64> = rec.occupation.iter().map(|&o| o / t).collect();
            let j = entropy(&normalised)?;
            Ok((-rho.get() * t * j).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    let survivors = weights.iter().filter(|&&w| w > 0.0).count() as u64;
    if survivors == 0 {
        return Err(Error::AllRunsKilled { n, exponent_lower_bound: (n as f64).ln() / t });
    }
    let mean = stable_sum(weights.iter().copied()) / n as f64;
    let var = stable_sum(weights.iter().map(|&w| (w - mean) * (w - mean))) / (n as f64 - 1.0);
    let se_mean = (var / n as f64).sqrt();
    let exponent = -mean.ln() / t;
    let se = se_mean / mean / t;
    Ok(MassEstimate {
        exponent,
        ci_lo: exponent - Z_95 * se,
        ci_hi: exponent + Z_95 * se,
        survivors,
        n,
        t,
        rho: rho.get(),
    })
}

/// Long-run occupation fractions of the depth chain, with batch-means
/// standard errors.
#[derive(Clone, Debug)]
pub struct DepthProfile {
    pub d: u32,
    pub radius: u32,
    /// Occupation fraction per depth state `0..=R+1`.
    pub occupation: Vec<f64>,
    /// Batch-means standard error per state.
    pub se: Vec<f64>,
    pub batches: usize,
    pub total_time: f64,
    pub jumps: usize,
}

/// Stationary profile the chain must reproduce: half the time at depth
/// zero, geometric decay below, and the tadpole state carrying
/// `d^{-R} / 2`.
pub fn zero_depth_profile(d: u32, radius: u32) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    if radius < 1 {
        return Err(Error::DepthRadiusTooSmall(radius));
    }
    let df = d as f64;
    let mut p = vec![0.0; radius as usize + 2];
    p[0] = 0.5;
    for k in 1..=radius as usize {
        p[k] = 0.5 * (df - 1.0) * df.powi(-(k as i32));
    }
    p[radius as usize + 1] = 0.5 * df.powi(-(radius as i32));
    Ok(p)
}

/// Simulates the depth chain to the horizon: exponential sojourns of
/// rate `d+1` at depths `0..=R` and full tree-return sojourns at the
/// tadpole state.
pub fn simulate_depth_chain(line: &DepthLine, horizon: f64, seed: u64) -> Result<DepthProfile> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveParameter { what: "horizon", value: horizon });
    }
    let n_states = line.n();
    let batches = 100usize.min((horizon.floor() as usize).max(1));
    let batch_len = horizon / batches as f64;
    let mut occ = vec![0.0; n_states * batches];
    let tadpole = line.tadpole_state();
    let sampler = SojournSampler::new(SojournLaw::tree_return(line.d())?)?;
    let degree = (line.d() + 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = 0u32;
    let mut time = 0.0;
    let mut jumps = 0usize;
    while time < horizon {
        let hold = if state == tadpole { sampler.sample(&mut rng) } else { draw_exp(&mut rng, degree) };
        let end = (time + hold).min(horizon);
        // A sojourn may straddle several batch windows; split it exactly.
        let mut tau = time;
        while tau < end {
            let b = ((tau / batch_len) as usize).min(batches - 1);
            let cut = ((b + 1) as f64 * batch_len).min(end);
            occ[b * n_states + state as usize] += cut - tau;
            tau = cut;
        }
        time += hold;
        if time >= horizon {
            break;
        }
        let row = &line.kernel()[state as usize];
        let roll = rng.gen_range(0..row.weight_sum());
        state = row.pick(roll);
        jumps += 1;
    }

    let mut occupation = vec![0.0; n_states];
    let mut se = vec![0.0; n_states];
    for s in 0..n_states {
        let fracs: Vec<f64> = (0..batches).map(|b| occ[b * n_states + s] / batch_len).collect();
        let mean = stable_sum(fracs.iter().copied()) / batches as f64;
        occupation[s] = mean;
        if batches > 1 {
            let var = stable_sum(fracs.iter().map(|&f| (f - mean) * (f - mean)))
                / (batches as f64 - 1.0);
            se[s] = (var / batches as f64).sqrt();
        }
    }
    Ok(DepthProfile {
        d: line.d(),
        radius: line.radius(),
        occupation,
        se,
        batches,
        total_time: horizon,
        jumps,
    })
}

/// Large-deviation cost of a depth profile `p` on states `0..=R+1`:
/// zero exactly at the stationary profile.
pub fn depth_rate_function(d: u32, radius: u32, p: &[f64]) -> Result<f64> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    if radius < 1 {
        return Err(Error::DepthRadiusTooSmall(radius));
    }
    let n = radius as usize + 2;
    if p.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: p.len() });
    }
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let df = d as f64;
    let r = radius as usize;
    let mut total = {
        let diff = ((df - 1.0) * p[0]).sqrt() - (df * p[1]).sqrt();
        diff * diff
    };
    for k in 1..r {
        let diff = p[k].sqrt() - (df * p[k + 1]).sqrt();
        total += diff * diff;
    }
    let diff = (p[r] + p[r + 1]).sqrt() - (df * p[r + 1]).sqrt();
    total += diff * diff;
    Ok(total)
}

/// Occupation summary of a walk on the renewal unit.
#[derive(Clone, Debug)]
pub struct UnitWalkRecord {
    /// Occupation fraction per unit vertex.
    pub occupation: Vec<f64>,
    /// Fraction of time on the root and the bottom leaves.
    pub boundary_fraction: f64,
    pub jumps: usize,
    pub total_time: f64,
}

/// Simulates the unit walk: kernel transitions with the wrap edges
/// between the root and the star leaf, exponential sojourns on core
/// vertices and tree-return sojourns on tadpoles.
pub fn simulate_unit_walk(unit: &UnitGraph, horizon: f64, seed: u64) -> Result<UnitWalkRecord> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::NonPositiveParameter { what: "horizon", value: horizon });
    }
    let sampler = SojournSampler::new(SojournLaw::tree_return(unit.d())?)?;
    let degree = (unit.d() + 1) as f64;
    let mut occupation = vec![0.0; unit.n()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = 0u32;
    let mut time = 0.0;
    let mut jumps = 0usize;
    while time < horizon {
        let hold = if unit.is_tadpole(at) { sampler.sample(&mut rng) } else { draw_exp(&mut rng, degree) };
        occupation[at as usize] += hold.min(horizon - time);
        time += hold;
        if time >= horizon {
            break;
        }
        let row = &unit.kernel()[at as usize];
        let roll = rng.gen_range(0..row.weight_sum());
        at = row.pick(roll);
        jumps += 1;
    }
    for v in occupation.iter_mut() {
        *v /= horizon;
    }
    let boundary_fraction = stable_sum(
        occupation.iter().zip(unit.boundary_mask()).filter(|(_, &m)| m).map(|(&v, _)| v),
    );
    Ok(UnitWalkRecord { occupation, boundary_fraction, jumps, total_time: horizon })
}
