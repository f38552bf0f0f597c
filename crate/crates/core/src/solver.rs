//! Variational solvers for the Lyapunov-exponent problem
//! `chi = inf_p [I(p) + rho J(p)]`:
//!
//! - entropic mirror descent (exponentiated-gradient updates with
//!   backtracking) over the simplex of a truncated ball, giving the
//!   finite-volume value from below ("chi lower");
//! - the same scheme on a renewal unit with the boundary-mass constraint
//!   `p(boundary) <= 1/R` ("chi upper");
//! - the principal Dirichlet eigenvalue of the ball, the `rho -> 0`
//!   limit, via inverse power iteration with an exact O(n) tree solve;
//! - scans over rho with monotonicity and Lipschitz checks, minimiser
//!   shape diagnostics, and the boundary-term decomposition that relates
//!   the renewal rate function on the unit to the standard Dirichlet
//!   functional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::functionals::{dirichlet_energy, objective, objective_gradient, Rho};
use crate::graphs::{build_truncated_tree, EdgeData, TruncatedTree, UnitGraph};
use crate::prob::{stable_sum, ProbVector};
use crate::Result;

/// Tuning knobs of the mirror-descent solver.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Simplex-projected (KKT) gradient norm required for convergence.
    pub grad_tol: f64,
    /// Relative objective change counted as a stall.
    pub obj_tol: f64,
    /// Number of consecutive stalled iterations required besides the
    /// gradient test.
    pub stall_window: usize,
    pub max_iters: usize,
    /// Number of starting points (at least the built-in ones are used).
    pub restarts: usize,
    pub seed: u64,
    /// Entry floor keeping iterates strictly positive.  Vertices pinned
    /// here still contribute `O(floor * |ln floor|)` to the reported
    /// value, so the floor must sit far below every tolerance of
    /// interest once the graph has ~1e5 vertices.
    pub floor: f64,
    /// Optional externally supplied start, e.g. an embedded minimiser
    /// from a smaller ball.
    pub warm_start: Option<Vec<f64>>,
    /// Above this vertex count only the most promising starts run to
    /// completion after a short warmup tournament.
    pub prune_above: usize,
    pub warmup_iters: usize,
    pub keep_after_prune: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-8,
            obj_tol: 1e-12,
            stall_window: 100,
            max_iters: 60_000,
            restarts: 8,
            seed: 1,
            floor: 1e-18,
            warm_start: None,
            prune_above: 20_000,
            warmup_iters: 300,
            keep_after_prune: 3,
        }
    }
}

/// Outcome of a single mirror-descent run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub minimiser: ProbVector,
}

/// Best run of a multi-start solve, with all finished runs attached.
#[derive(Clone, Debug)]
pub struct OptResult {
    pub value: f64,
    pub minimiser: ProbVector,
    pub grad_norm: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
    pub runs: Vec<RunResult>,
}

struct Constraint<'a> {
    mask: &'a [bool],
    cap: f64,
}

struct Problem<'a> {
    edges: &'a EdgeData,
    rho: f64,
    constraint: Option<Constraint<'a>>,
}

impl Problem<'_> {
    fn project(&self, w: &mut [f64], floor: f64) {
        for v in w.iter_mut() {
            *v = v.max(floor);
        }
        let sum = stable_sum(w.iter().copied());
        for v in w.iter_mut() {
            *v /= sum;
        }
        if let Some(c) = &self.constraint {
            let mass: f64 = stable_sum(w.iter().zip(c.mask).filter(|(_, &m)| m).map(|(&v, _)| v));
            if mass > c.cap {
                // The complement mass is summed directly: `1 - mass` can
                // round to zero when nearly everything sits on the
                // constrained block.
                let rest: f64 =
                    stable_sum(w.iter().zip(c.mask).filter(|(_, &m)| !m).map(|(&v, _)| v));
                let scale_in = c.cap / mass;
                let scale_out = (1.0 - c.cap) / rest;
                for (v, &m) in w.iter_mut().zip(c.mask) {
                    *v *= if m { scale_in } else { scale_out };
                }
            }
        }
    }

    /// Least-squares KKT residual over the simplex (and the boundary-mass
    /// constraint when active): coordinates pinned at the floor only
    /// count when their reduced gradient wants to grow them.
    fn kkt_residual(&self, p: &[f64], g: &[f64], floor: f64) -> f64 {
        let free_cut = 10.0 * floor;
        let (mask_active, in_mask): (bool, &[bool]) = match &self.constraint {
            Some(c) => {
                let mass: f64 =
                    stable_sum(p.iter().zip(c.mask).filter(|(_, &m)| m).map(|(&v, _)| v));
                (mass >= c.cap - 1e-9, c.mask)
            }
            None => (false, &[]),
        };
        let mut sum_out = 0.0;
        let mut cnt_out = 0usize;
        let mut sum_in = 0.0;
        let mut cnt_in = 0usize;
        for i in 0..p.len() {
            if p[i] <= free_cut {
                continue;
            }
            if mask_active && in_mask[i] {
                sum_in += g[i];
                cnt_in += 1;
            } else {
                sum_out += g[i];
                cnt_out += 1;
            }
        }
        let mu = if cnt_out > 0 {
            sum_out / cnt_out as f64
        } else if cnt_in > 0 {
            sum_in / cnt_in as f64
        } else {
            0.0
        };
        let nu = if mask_active && cnt_in > 0 && cnt_out > 0 {
            (mu - sum_in / cnt_in as f64).max(0.0)
        } else {
            0.0
        };
        let mut acc = 0.0;
        for i in 0..p.len() {
            let shift = if mask_active && in_mask[i] { nu } else { 0.0 };
            let red = g[i] + shift - mu;
            if p[i] > free_cut {
                acc += red * red;
            } else {
                let v = red.min(0.0);
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}

const EXP_CLAMP: f64 = 60.0;

/// Second descent phase in `f = sqrt(p)` coordinates: projected
/// Barzilai-Borwein steps with a non-monotone (watchdog) line search.
/// The mirror phase localises the minimiser quickly but its tail
/// convergence is slow; on the sphere the spectral step length collapses
/// the KKT residual by orders of magnitude in a few hundred iterations.
/// Returns `(value, grad_norm, iterations, converged)` and leaves the
/// improved iterate in `p`.
fn polish_run(
    problem: &Problem,
    p: &mut [f64],
    opts: &SolveOptions,
    budget: usize,
) -> Result<(f64, f64, usize, bool)> {
    let n = problem.edges.n;
    let free_cut = 10.0 * opts.floor;
    let mut value = objective(problem.edges, p, problem.rho)?;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut used = 0usize;

    let mut fvec: Vec<f64> = p.iter().map(|&v| v.sqrt()).collect();
    let mut dir = vec![0.0f64; n];
    let mut prev_fvec: Vec<f64> = Vec::new();
    let mut prev_dir: Vec<f64> = Vec::new();
    let mut eta = 1e-3;
    let mut recent = vec![value];
    let mut trial = vec![0.0f64; n];

    for iter in 1..=budget {
        used = iter;
        let g = objective_gradient(problem.edges, p, problem.rho)?;
        grad_norm = problem.kkt_residual(p, &g, opts.floor);
        if grad_norm <= opts.grad_tol {
            converged = true;
            break;
        }

        // Blockwise multipliers keep the step tangent to the simplex, and
        // to the boundary-mass face when the cap is active.
        let (mask_active, in_mask): (bool, &[bool]) = match &problem.constraint {
            Some(c) => {
                let mass: f64 =
                    stable_sum(p.iter().zip(c.mask).filter(|(_, &m)| m).map(|(&v, _)| v));
                (mass >= c.cap - 1e-9, c.mask)
            }
            None => (false, &[]),
        };
        let mut num = [0.0f64; 2];
        let mut den = [0.0f64; 2];
        for i in 0..n {
            if p[i] <= free_cut {
                continue;
            }
            let b = usize::from(mask_active && in_mask[i]);
            num[b] += p[i] * g[i];
            den[b] += p[i];
        }
        let lam = [
            if den[0] > 0.0 { num[0] / den[0] } else { 0.0 },
            if den[1] > 0.0 { num[1] / den[1] } else { 0.0 },
        ];
        let mut dir_sq = 0.0;
        for i in 0..n {
            let b = usize::from(mask_active && in_mask[i]);
            let red = g[i] - lam[b];
            dir[i] = if p[i] > free_cut || red < 0.0 { 2.0 * fvec[i] * red } else { 0.0 };
            dir_sq += dir[i] * dir[i];
        }
        if dir_sq == 0.0 {
            break;
        }

        // Spectral (Barzilai-Borwein) step from the previous move.
        if !prev_fvec.is_empty() {
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let s = fvec[i] - prev_fvec[i];
                let y = dir[i] - prev_dir[i];
                ss += s * s;
                sy += s * y;
            }
            if sy.abs() > 0.0 && ss > 0.0 {
                eta = (ss / sy.abs()).clamp(1e-14, 1e4);
            }
        }
        prev_fvec = fvec.clone();
        prev_dir = dir.clone();

        let fmax = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                let fi = fvec[i] - eta * dir[i];
                trial[i] = fi * fi;
            }
            problem.project(&mut trial, opts.floor);
            let ftrial = objective(problem.edges, &trial, problem.rho)?;
            if ftrial <= fmax - 1e-4 * eta * dir_sq {
                p.copy_from_slice(&trial);
                for i in 0..n {
                    fvec[i] = p[i].sqrt();
                }
                value = ftrial;
                if recent.len() == 8 {
                    recent.remove(0);
                }
                recent.push(value);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // Stationary at line-search precision; re-measure and stop.
            let g = objective_gradient(problem.edges, p, problem.rho)?;
            grad_norm = problem.kkt_residual(p, &g, opts.floor);
            converged = grad_norm <= opts.grad_tol;
            break;
        }
    }
    Ok((value, grad_norm, used, converged))
}

/// Exact minimiser of the one-dimensional Lagrangian slice
/// `t -> A t - 2 S sqrt(t) - rho (-t ln t) - mu t` (up to constants),
/// i.e. the ascending-branch root of `A - S/sqrt(t) - rho(ln t + 1) = mu`.
/// Only coordinates currently sitting below the slice peak are eligible:
/// bulk coordinates live on the descending (entropy-dominated) branch,
/// where the slice minimum is meaningless and the collective phases rule.
/// Returns `None` when the coordinate should be left alone.
fn slice_argmin(a: f64, s: f64, rho: f64, mu: f64, floor: f64, current: f64) -> Option<f64> {
    if s <= 0.0 {
        return Some(floor);
    }
    // The stationarity function rises from -inf to a single peak at
    // t = (S / 2 rho)^2 and falls back to -inf.
    let u_peak = 2.0 * (s / (2.0 * rho)).ln();
    if current.ln() > u_peak {
        return None;
    }
    let h = |u: f64| a - s * (-0.5 * u).exp() - rho * (u + 1.0) - mu;
    if h(u_peak) <= 0.0 {
        return None;
    }
    let mut hi = u_peak;
    let mut lo = u_peak - 2.0;
    let mut width = 2.0;
    while h(lo) > 0.0 {
        width *= 2.0;
        lo -= width;
        if lo < -1400.0 {
            return Some(floor);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp().clamp(floor, 1.0))
}

/// Nonlinear Gauss-Seidel sweeps over the Lagrange conditions: every
/// coordinate jumps to the exact minimiser of its one-dimensional slice at
/// the current multiplier estimate.  Gradient phases move coordinates that
/// sit orders of magnitude below the bulk only logarithmically slowly;
/// one sweep places them directly.
fn balance_sweeps(
    problem: &Problem,
    p: &mut [f64],
    opts: &SolveOptions,
    sweeps: usize,
) -> Result<(f64, f64, bool, usize)> {
    let n = problem.edges.n;
    let edges = problem.edges;
    let free_cut = 10.0 * opts.floor;

    // Adjacency with multiplicity, built once per call.
    let mut counts = vec![0u32; n];
    for &(x, y) in &edges.pairs {
        counts[x as usize] += 1;
        counts[y as usize] += 1;
    }
    let mut offsets = vec![0usize; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + counts[i] as usize;
    }
    let mut adj = vec![0u32; offsets[n]];
    let mut cursor = offsets.clone();
    for &(x, y) in &edges.pairs {
        adj[cursor[x as usize]] = y;
        cursor[x as usize] += 1;
        adj[cursor[y as usize]] = x;
        cursor[y as usize] += 1;
    }

    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut used = 0usize;
    let mut best = f64::INFINITY;
    let mut since_improve = 0usize;
    for _ in 0..sweeps {
        used += 1;
        let (mask_active, in_mask): (bool, &[bool]) = match &problem.constraint {
            Some(c) => {
                let mass: f64 =
                    stable_sum(p.iter().zip(c.mask).filter(|(_, &m)| m).map(|(&v, _)| v));
                (mass >= c.cap - 1e-9, c.mask)
            }
            None => (false, &[]),
        };
        let g = objective_gradient(edges, p, problem.rho)?;
        let mut num = [0.0f64; 2];
        let mut den = [0.0f64; 2];
        for i in 0..n {
            if p[i] <= free_cut {
                continue;
            }
            let b = usize::from(mask_active && in_mask[i]);
            num[b] += p[i] * g[i];
            den[b] += p[i];
        }
        let lam = [
            if den[0] > 0.0 { num[0] / den[0] } else { 0.0 },
            if den[1] > 0.0 { num[1] / den[1] } else { 0.0 },
        ];
        for i in 0..n {
            let b = usize::from(mask_active && in_mask[i]);
            let s: f64 = adj[offsets[i]..offsets[i + 1]].iter().map(|&j| p[j as usize].sqrt()).sum();
            let a = edges.degree[i] as f64 + edges.exit[i];
            if let Some(t) = slice_argmin(a, s, problem.rho, lam[b], opts.floor, p[i]) {
                p[i] = t;
            }
        }
        problem.project(p, opts.floor);
        let g = objective_gradient(edges, p, problem.rho)?;
        grad_norm = problem.kkt_residual(p, &g, opts.floor);
        if grad_norm <= opts.grad_tol {
            converged = true;
            break;
        }
        // Gauss-Seidel contracts geometrically when it works at all; a
        // dozen flat sweeps mean the fixed point has been reached.
        if grad_norm < 0.9 * best {
            best = grad_norm;
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= 12 {
                break;
            }
        }
    }
    let value = objective(edges, p, problem.rho)?;
    Ok((value, grad_norm, converged, used))
}

fn mirror_run(
    problem: &Problem,
    start: &[f64],
    opts: &SolveOptions,
    max_iters: usize,
    polish: bool,
) -> Result<RunResult> {
    let n = problem.edges.n;
    let mut p = start.to_vec();
    problem.project(&mut p, opts.floor);
    let mut f = objective(problem.edges, &p, problem.rho)?;
    let mut eta = 0.1f64;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut q = vec![0.0; n];

    // The two phases complement each other: the multiplicative phase moves
    // coordinates across orders of magnitude in a few steps, the spectral
    // polish collapses the stationarity residual once the support has
    // settled.  Rounds alternate until tolerance or the budget runs out.
    let mut round_f = f64::INFINITY;
    let mut round_g = f64::INFINITY;
    'rounds: for round in 0..64 {
        let mut stall = 0usize;
        // Support discovery happens in the first multiplicative phase;
        // later rounds only need a short burst before handing back to the
        // polish/sweep pair.
        let patience = if round == 0 { 4 * opts.stall_window } else { opts.stall_window / 2 };
        while iterations < max_iters {
            iterations += 1;
            let g = objective_gradient(problem.edges, &p, problem.rho)?;
            grad_norm = problem.kkt_residual(&p, &g, opts.floor);
            if grad_norm <= opts.grad_tol && stall >= opts.stall_window {
                converged = true;
                break 'rounds;
            }
            if polish && stall >= patience {
                // The objective has flatlined well above tolerance; hand
                // the iterate to the spectral polish instead of grinding.
                break;
            }
            let gbar: f64 = p.iter().zip(&g).map(|(&pi, &gi)| pi * gi).sum();
            let mut accepted = false;
            while eta >= 1e-18 {
                // Exponentiated-gradient step in the log domain;
                // subtracting the running maximum keeps the exponentials
                // in range.
                let mut emax = f64::NEG_INFINITY;
                for i in 0..n {
                    let e = p[i].ln() - (eta * (g[i] - gbar)).clamp(-EXP_CLAMP, EXP_CLAMP);
                    q[i] = e;
                    emax = emax.max(e);
                }
                for v in q.iter_mut() {
                    *v = (*v - emax).exp();
                }
                problem.project(&mut q, opts.floor);
                let fq = objective(problem.edges, &q, problem.rho)?;
                if fq <= f + 1e-14 * f.abs().max(1.0) {
                    let drop = (f - fq) / f.abs().max(1.0);
                    if drop < opts.obj_tol {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    std::mem::swap(&mut p, &mut q);
                    f = fq;
                    eta = (eta * 1.3).min(50.0);
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                // No multiplicative descent at machine precision.
                if !polish {
                    converged = grad_norm <= opts.grad_tol;
                    break 'rounds;
                }
                break;
            }
        }
        if !polish {
            break;
        }
        let budget = max_iters.saturating_sub(iterations).clamp(500, 5_000);
        let (pv, pg, pit, pc) = polish_run(problem, &mut p, opts, budget)?;
        f = pv;
        grad_norm = pg;
        iterations += pit;
        converged = pc;
        if !converged {
            // Sweeps against a stale multiplier can regress, so keep the
            // polished iterate as a fallback.
            let saved = p.clone();
            let budget = max_iters.saturating_sub(iterations).clamp(20, 400);
            let (bv, bg, bc, used) = balance_sweeps(problem, &mut p, opts, budget)?;
            // A certified fixed point may sit slightly above the best
            // descent iterate: placing stranded coordinates at their
            // balance points borrows mass from the bulk, which shifts the
            // value by roughly n * floor.  That certificate is worth a
            // bounded concession; anything larger is a regression against
            // a stale multiplier, so restore the fallback.
            let slack = if bc {
                1e-6
            } else if bg <= 0.5 * grad_norm {
                1e-8
            } else {
                1e-12
            };
            if bv <= f + slack * f.abs().max(1.0) {
                f = bv;
                grad_norm = bg;
                converged = bc;
            } else {
                p = saved;
            }
            iterations += used;
        }
        if converged || iterations >= max_iters {
            break;
        }
        // A round that moved neither the value nor the residual will not
        // move the next one either.
        if (round_f - f).abs() <= 1e-13 * f.abs().max(1.0) && grad_norm >= 0.9 * round_g {
            break;
        }
        round_f = f;
        round_g = grad_norm;
        eta = 0.1;
    }

    Ok(RunResult {
        value: f,
        grad_norm,
        iterations,
        converged,
        minimiser: ProbVector::from_weights(p)?,
    })
}

/// Geometric profile `q^depth`, the radial family used for warm starts.
fn geometric_profile(depths: &[u32], q: f64) -> Vec<f64> {
    depths.iter().map(|&dep| q.powi(dep as i32)).collect()
}

fn dirichlet_draw(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| -(1.0f64 - rng.gen::<f64>()).ln().max(1e-300)).collect()
}

/// Builds the list of starting vectors: any warm start, the two best
/// radial (geometric-in-depth) profiles, canonical point masses, the
/// uniform vector, and seeded random draws up to `opts.restarts`.
fn build_starts(
    problem: &Problem,
    depths: &[u32],
    point_masses: &[usize],
    opts: &SolveOptions,
) -> Result<Vec<Vec<f64>>> {
    let n = problem.edges.n;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = &opts.warm_start {
        if w.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: w.len() });
        }
        starts.push(w.clone());
    }

    // Radial warm starts: scan the geometric family for the two best
    // decay rates (never returned as an answer, only as starting points).
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    for i in 0..24 {
        let q = 10f64.powf(-6.0 + 6.0 * i as f64 / 23.0) * 0.9;
        let mut w = geometric_profile(depths, q);
        problem.project(&mut w, opts.floor);
        let f = objective(problem.edges, &w, problem.rho)?;
        scored.push((f, w));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (_, w) in scored.into_iter().take(2) {
        starts.push(w);
    }

    for &at in point_masses {
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        starts.push(w);
    }
    starts.push(vec![1.0 / n as f64; n]);

    let mut idx = 0u64;
    while starts.len() < opts.restarts.max(8) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9E3779B97F4A7C15u64.wrapping_mul(idx + 1)));
        starts.push(dirichlet_draw(n, &mut rng));
        idx += 1;
    }
    Ok(starts)
}

fn multi_start_solve(
    problem: &Problem,
    depths: &[u32],
    point_masses: &[usize],
    opts: &SolveOptions,
) -> Result<OptResult> {
    let starts = build_starts(problem, depths, point_masses, opts)?;
    let restarts_used = starts.len();

    let full: Vec<Vec<f64>> = if problem.edges.n > opts.prune_above {
        // Tournament: a short warmup ranks the starts, the best few
        // continue to the full budget.
        let mut ranked: Vec<(f64, Vec<f64>)> = starts
            .into_par_iter()
            .map(|s| {
                let run = mirror_run(problem, &s, opts, opts.warmup_iters, false)?;
                Ok((run.value, run.minimiser.into_values()))
            })
            .collect::<Result<Vec<_>>>()?;
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        ranked.into_iter().take(opts.keep_after_prune.max(1)).map(|(_, s)| s).collect()
    } else {
        starts
    };

    let runs: Vec<RunResult> = full
        .into_par_iter()
        .map(|s| mirror_run(problem, &s, opts, opts.max_iters, true))
        .collect::<Result<Vec<_>>>()?;

    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.partial_cmp(&b.1.value).unwrap())
        .map(|(i, _)| i)
        .expect("at least one start");
    let b = &runs[best];
    Ok(OptResult {
        value: b.value,
        minimiser: b.minimiser.clone(),
        grad_norm: b.grad_norm,
        iterations: b.iterations,
        restarts_used,
        converged: b.converged,
        runs,
    })
}

/// Finite-volume value on the ball: `inf_p [I(p) + rho J(p)]` over
/// probability vectors on `B_R`.
pub fn solve_chi_lower(tree: &TruncatedTree, rho: Rho, opts: &SolveOptions) -> Result<OptResult> {
    let problem = Problem {
        edges: tree.dirichlet_edges(),
        rho: rho.get(),
        constraint: None,
    };
    multi_start_solve(&problem, tree.depths(), &[0], opts)
}

/// Unit-level value: `inf [I_tilde(p) + rho J(p)]` over probability
/// vectors on the unit subject to `p(root and bottom leaves) <= 1/R`.
pub fn solve_chi_upper(unit: &UnitGraph, rho: Rho, opts: &SolveOptions) -> Result<OptResult> {
    let cap = 1.0 / unit.radius() as f64;
    let problem = Problem {
        edges: unit.tilde_edges(),
        rho: rho.get(),
        constraint: Some(Constraint { mask: unit.boundary_mask(), cap }),
    };
    // Point masses: first tadpole if any, and an interior mid-depth vertex.
    let mut pms = Vec::new();
    if unit.n_tadpoles() > 0 {
        pms.push(unit.n_core());
    }
    let mid = (unit.radius() - 1) / 2;
    if let Some(v) = (0..unit.n_core() as u32).find(|&v| unit.depth(v) == mid && !unit.is_boundary(v)) {
        pms.push(v as usize);
    }
    multi_start_solve(&problem, unit.depths(), &pms, opts)
}

/// Masses per depth shell of the ball.
pub fn shell_masses(tree: &TruncatedTree, p: &[f64]) -> Vec<f64> {
    let mut shells = vec![0.0; tree.radius() as usize + 1];
    for (v, &mass) in p.iter().enumerate() {
        shells[tree.depth(v as u32) as usize] += mass;
    }
    shells
}

/// Masses per depth shell of a unit; tadpoles fall in the last shell.
pub fn unit_shell_masses(unit: &UnitGraph, p: &[f64]) -> Vec<f64> {
    let mut shells = vec![0.0; unit.radius() as usize + 1];
    for (v, &mass) in p.iter().enumerate() {
        shells[unit.depth(v as u32) as usize] += mass;
    }
    shells
}

/// Lifts a minimiser on a smaller ball to a larger one with the same
/// offspring number; breadth-first indexing makes the small ball an
/// index-prefix of the large one.
pub fn embed_ball_vector(small: &TruncatedTree, large: &TruncatedTree, p: &[f64]) -> Result<Vec<f64>> {
    if small.d() != large.d() || small.n() > large.n() {
        return Err(Error::LengthMismatch { expected: large.n(), got: small.n() });
    }
    if p.len() != small.n() {
        return Err(Error::LengthMismatch { expected: small.n(), got: p.len() });
    }
    let mut w = vec![0.0; large.n()];
    w[..p.len()].copy_from_slice(p);
    Ok(w)
}

/// Principal-eigenvalue result for the killed generator on a ball.
#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Smallest eigenvalue of `(d+1) I - A`, the `rho -> 0` limit of the
    /// variational value.
    pub value: f64,
    pub iterations: usize,
    /// Norm of `M f - value f` at the returned eigenvector.
    pub residual: f64,
    /// Unit-norm positive eigenvector; its square is the minimising
    /// probability vector of the pure Dirichlet problem.
    pub eigenvector: Vec<f64>,
}

/// Solves `((d+1) I - A) x = b` exactly in O(n) by eliminating leaves
/// first (reverse breadth-first order has every child before its parent,
/// so elimination causes no fill-in on a tree).
fn tree_solve(tree: &TruncatedTree, b: &[f64]) -> Vec<f64> {
    let n = tree.n();
    let diag = (tree.d() + 1) as f64;
    let mut dsub = vec![0.0; n];
    let mut rsub = b.to_vec();
    let mut dacc = vec![0.0; n];
    let mut racc = vec![0.0; n];
    for v in (1..n).rev() {
        let dv = diag - dacc[v];
        dsub[v] = dv;
        let rv = rsub[v] + racc[v];
        rsub[v] = rv;
        let p = tree.parent(v as u32).expect("non-root vertex") as usize;
        dacc[p] += 1.0 / dv;
        racc[p] += rv / dv;
    }
    let mut x = vec![0.0; n];
    let droot = diag - dacc[0];
    x[0] = (rsub[0] + racc[0]) / droot;
    for v in 1..n {
        let p = tree.parent(v as u32).unwrap() as usize;
        x[v] = (rsub[v] + x[p]) / dsub[v];
    }
    x
}

fn apply_killed_generator(tree: &TruncatedTree, x: &[f64]) -> Vec<f64> {
    let diag = (tree.d() + 1) as f64;
    let mut y: Vec<f64> = x.iter().map(|&v| diag * v).collect();
    for &(a, b) in &tree.dirichlet_edges().pairs {
        y[a as usize] -= x[b as usize];
        y[b as usize] -= x[a as usize];
    }
    y
}

/// Smallest eigenvalue of `(d+1) I - A` on the ball of radius `R`, by
/// inverse power iteration with the exact tree solve; equals
/// `(d+1) - lambda_max(A)` and is the zero-entropy limit of the
/// variational value.
pub fn principal_dirichlet_value(d: u32, radius: u32) -> Result<EigenResult> {
    let tree = build_truncated_tree(d, radius)?;
    principal_dirichlet_value_on(&tree)
}

pub fn principal_dirichlet_value_on(tree: &TruncatedTree) -> Result<EigenResult> {
    let n = tree.n();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut value = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=10_000 {
        iterations = iter;
        let mut y = tree_solve(tree, &x);
        let norm = stable_sum(y.iter().map(|&v| v * v)).sqrt();
        for v in y.iter_mut() {
            *v /= norm;
        }
        let my = apply_killed_generator(tree, &y);
        let lambda = stable_sum(y.iter().zip(&my).map(|(&a, &b)| a * b));
        residual = stable_sum(my.iter().zip(&y).map(|(&m, &v)| {
            let r = m - lambda * v;
            r * r
        }))
        .sqrt();
        let done = residual <= 1e-13 * (tree.d() + 1) as f64 && (lambda - value).abs() <= 1e-15 * lambda.abs();
        value = lambda;
        x = y;
        if done {
            break;
        }
    }
    Ok(EigenResult { value, iterations, residual, eigenvector: x })
}

/// One solved point of a rho scan.
#[derive(Clone, Debug)]
pub struct ChiPoint {
    pub rho: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub shell_masses: Vec<f64>,
}

/// Scan of the finite-volume value over a rho grid with the two sanity
/// checks that come with it: values must increase strictly in rho, and
/// chords may not exceed the entropy bound `(d+1)/rho_left`.
#[derive(Clone, Debug)]
pub struct ChiCurve {
    pub d: u32,
    pub radius: u32,
    pub points: Vec<ChiPoint>,
    pub monotone_ok: bool,
    pub lipschitz_ok: bool,
}

pub fn chi_scan(tree: &TruncatedTree, rhos: &[f64], opts: &SolveOptions) -> Result<ChiCurve> {
    if rhos.is_empty() {
        return Err(Error::BadGrid { spec: "rho grid".into(), detail: "empty grid".into() });
    }
    for w in rhos.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::BadGrid {
                spec: "rho grid".into(),
                detail: format!("not strictly increasing at {} -> {}", w[0], w[1]),
            });
        }
    }
    if !(rhos[0] > 0.0) {
        return Err(Error::NonPositiveRho(rhos[0]));
    }

    // Independent solves with per-point derived seeds...
    let mut results: Vec<OptResult> = rhos
        .par_iter()
        .enumerate()
        .map(|(i, &rho)| {
            let mut o = opts.clone();
            o.seed = opts.seed ^ (i as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15);
            solve_chi_lower(tree, Rho::new(rho)?, &o)
        })
        .collect::<Result<Vec<_>>>()?;

    // ...then a warm sweep along the grid keeps neighbouring minimisers
    // consistent with each other.
    for i in 1..results.len() {
        let mut o = opts.clone();
        o.warm_start = Some(results[i - 1].minimiser.values().to_vec());
        o.restarts = 1;
        let polished = solve_chi_lower(tree, Rho::new(rhos[i])?, &o)?;
        if polished.value < results[i].value {
            results[i] = polished;
        }
    }

    let points: Vec<ChiPoint> = rhos
        .iter()
        .zip(&results)
        .map(|(&rho, r)| ChiPoint {
            rho,
            value: r.value,
            grad_norm: r.grad_norm,
            iterations: r.iterations,
            converged: r.converged,
            shell_masses: shell_masses(tree, r.minimiser.values()),
        })
        .collect();

    let monotone_ok = points.windows(2).all(|w| w[1].value > w[0].value - 1e-12);
    let lipschitz_ok = points.windows(2).all(|w| {
        let slope = (w[1].value - w[0].value) / (w[1].rho - w[0].rho);
        slope <= (tree.d() + 1) as f64 / w[0].rho + 1e-9
    });

    Ok(ChiCurve { d: tree.d(), radius: tree.radius(), points, monotone_ok, lipschitz_ok })
}

/// Shape report for a solved minimiser on the ball.
#[derive(Clone, Debug)]
pub struct MinimiserDiagnostics {
    pub argmax: u32,
    /// Non-increasing along every edge pointing away from the argmax.
    pub monotone_after_recentering: bool,
    pub worst_monotonicity_gap: f64,
    pub strictly_positive: bool,
    pub min_value: f64,
    /// `sum_r mass(r) ln(r+1)` over distance-from-argmax shells.
    pub tail_sum: f64,
    /// Entropy bound `(d+1)/rho` the tail sum must respect.
    pub tail_bound: f64,
    pub tail_ok: bool,
    pub shell_masses: Vec<f64>,
}

pub fn minimiser_diagnostics(
    tree: &TruncatedTree,
    p: &ProbVector,
    rho: Rho,
) -> Result<MinimiserDiagnostics> {
    if p.len() != tree.n() {
        return Err(Error::LengthMismatch { expected: tree.n(), got: p.len() });
    }
    let values = p.values();
    let argmax = (0..values.len())
        .max_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .unwrap() as u32;
    let dist = tree.distances_from(argmax);

    let mut worst: f64 = 0.0;
    for &(a, b) in &tree.dirichlet_edges().pairs {
        let (near, far) = if dist[a as usize] <= dist[b as usize] { (a, b) } else { (b, a) };
        worst = worst.max(values[far as usize] - values[near as usize]);
    }
    let monotone = worst <= 1e-9;

    let max_dist = *dist.iter().max().unwrap() as usize;
    let mut shells = vec![0.0; max_dist + 1];
    for (v, &mass) in values.iter().enumerate() {
        shells[dist[v] as usize] += mass;
    }
    let tail_sum = shells
        .iter()
        .enumerate()
        .map(|(r, &m)| m * ((r + 1) as f64).ln())
        .sum::<f64>();
    let tail_bound = (tree.d() + 1) as f64 / rho.get();
    let min_value = values.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(MinimiserDiagnostics {
        argmax,
        monotone_after_recentering: monotone,
        worst_monotonicity_gap: worst,
        strictly_positive: min_value > 0.0,
        min_value,
        tail_sum,
        tail_bound,
        tail_ok: tail_sum <= tail_bound + 1e-9,
        shell_masses: shells,
    })
}

/// Boundary terms relating the renewal rate function on the unit to the
/// standard Dirichlet functional: the rate function dominates
/// `I_hat + k3`, where `k3` collects the boundary, root-star and
/// leaf-tadpole contributions below.
#[derive(Clone, Debug)]
pub struct UnitBoundTerms {
    /// Dirichlet energy over the core tree edges only.
    pub i_hat: f64,
    /// Dirichlet energy including the leaf-tadpole edges.
    pub i_tilde: f64,
    /// `d * sum of p over non-star bottom leaves`.
    pub s_leaves: f64,
    /// `(sqrt p(O) - sqrt p(star))^2 + (d-1)[p(star) - sqrt(p(O) p(star))]`.
    pub s_root_star: f64,
    /// Mixed leaf-tadpole term (can be negative).
    pub s_leaf_tadpole: f64,
    pub k3: f64,
    /// `i_hat + k3`, the certified lower bound on the renewal rate
    /// function at `p`.
    pub lower_bound: f64,
    /// Mass on the root and the bottom leaves.
    pub boundary_mass: f64,
    /// `(s_leaves + s_root_star) * R` when the boundary constraint
    /// `boundary_mass <= 1/R` holds; bounded by a constant in R.
    pub o1_constant: Option<f64>,
}

pub fn unit_rate_bound_terms(unit: &UnitGraph, p: &[f64]) -> Result<UnitBoundTerms> {
    if p.len() != unit.n() {
        return Err(Error::LengthMismatch { expected: unit.n(), got: p.len() });
    }
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let d = unit.d() as f64;
    let i_hat = dirichlet_energy(unit.hat_edges(), p)?;
    let i_tilde = dirichlet_energy(unit.tilde_edges(), p)?;

    let star = unit.star();
    let mut s_leaves = 0.0;
    let mut s_leaf_tadpole = 0.0;
    for leaf in unit.bottom_leaves() {
        if leaf == star {
            continue;
        }
        let px = p[leaf as usize];
        s_leaves += d * px;
        let pb = p[unit.tadpole_of(leaf).expect("non-star leaf has a tadpole") as usize];
        let denom = d * px + pb;
        if px > 0.0 && denom > 0.0 {
            s_leaf_tadpole -= px * d * (d * pb / denom).sqrt();
        }
        if pb > 0.0 {
            s_leaf_tadpole +=
                pb * (d + 1.0 - d.sqrt() * ((pb / denom).sqrt() + (denom / pb).sqrt()));
        }
    }
    let po = p[0];
    let ps = p[star as usize];
    let s_root_star = {
        let diff = po.sqrt() - ps.sqrt();
        diff * diff + (d - 1.0) * (ps - (po * ps).sqrt())
    };
    let k3 = s_leaves + s_root_star + s_leaf_tadpole;

    let boundary_mass = stable_sum(
        p.iter().zip(unit.boundary_mask()).filter(|(_, &m)| m).map(|(&v, _)| v),
    );
    let o1_constant = (boundary_mass <= 1.0 / unit.radius() as f64 + 1e-12)
        .then(|| (s_leaves + s_root_star) * unit.radius() as f64);

    Ok(UnitBoundTerms {
        i_hat,
        i_tilde,
        s_leaves,
        s_root_star,
        s_leaf_tadpole,
        k3,
        lower_bound: i_hat + k3,
        boundary_mass,
        o1_constant,
    })
}

/// Weight function of the leaf-tadpole comparison:
/// `F(w) = w (d+1 - sqrt(d) [sqrt(w/(d+w)) + sqrt((d+w)/w)])`.
pub fn f_function(d: u32, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let df = d as f64;
    w * (df + 1.0 - df.sqrt() * ((w / (df + w)).sqrt() + ((df + w) / w).sqrt()))
}

/// Grid scan of the inequality `F(w) + C >= coeff (1 - sqrt w)^2` that
/// decides whether tadpole edges carry at least the weight of tree edges.
#[derive(Clone, Debug)]
pub struct FScanReport {
    pub d: u32,
    /// Asymptotic slope of F, `d+1 - 2 sqrt(d)`; exactly 1 at d = 4.
    pub slope_at_infinity: f64,
    pub slope_below_one: bool,
    /// Smallest grid constant making the unit-coefficient bound hold on
    /// the whole w grid, if any does.
    pub minimal_c_unit: Option<f64>,
    /// Same for the weakened coefficient `theta_c`.
    pub minimal_c_theta: Option<f64>,
    /// Largest deficit `(1 - sqrt w)^2 - F(w)` over the grid and where it
    /// happens; the witness is meaningful when no grid constant works.
    pub max_unit_deficit: f64,
    pub witness_w: f64,
    pub max_theta_deficit: f64,
    pub theta_c: f64,
}

pub fn f_inequality_scan(d: u32, w_grid: &[f64], c_grid: &[f64]) -> Result<FScanReport> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    if w_grid.is_empty() || c_grid.is_empty() {
        return Err(Error::BadGrid {
            spec: "w/c grid".into(),
            detail: "grids must be non-empty".into(),
        });
    }
    let df = d as f64;
    let theta_c = df + 1.0 - 2.0 * df.sqrt();
    let mut max_unit = f64::NEG_INFINITY;
    let mut max_theta = f64::NEG_INFINITY;
    let mut witness = w_grid[0];
    for &w in w_grid {
        if !(w >= 0.0) {
            return Err(Error::BadGrid { spec: "w grid".into(), detail: format!("negative w {w}") });
        }
        let target = (1.0 - w.sqrt()) * (1.0 - w.sqrt());
        let f = f_function(d, w);
        let unit_deficit = target - f;
        if unit_deficit > max_unit {
            max_unit = unit_deficit;
            witness = w;
        }
        max_theta = max_theta.max(theta_c * target - f);
    }
    let mut cs = c_grid.to_vec();
    cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let minimal_c_unit = cs.iter().copied().find(|&c| c >= max_unit);
    let minimal_c_theta = cs.iter().copied().find(|&c| c >= max_theta);
    Ok(FScanReport {
        d,
        slope_at_infinity: theta_c,
        slope_below_one: theta_c < 1.0,
        minimal_c_unit,
        minimal_c_theta,
        max_unit_deficit: max_unit,
        witness_w: witness,
        max_theta_deficit: max_theta,
        theta_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::build_unit_graph;
    use approx::assert_abs_diff_eq;

    fn quick_opts() -> SolveOptions {
        SolveOptions { max_iters: 30_000, ..SolveOptions::default() }
    }

    #[test]
    fn eigen_closed_forms() {
        // R = 0: a single killed vertex, value d+1.
        let r0 = principal_dirichlet_value(2, 0).unwrap();
        assert_abs_diff_eq!(r0.value, 3.0, epsilon = 1e-12);
        // Star with three leaves: 3 - sqrt(3).
        let r1 = principal_dirichlet_value(2, 1).unwrap();
        assert_abs_diff_eq!(r1.value, 3.0 - 3.0f64.sqrt(), epsilon = 1e-10);
        // Two shells: adjacency spectrum of the radial chain gives sqrt(5).
        let r2 = principal_dirichlet_value(2, 2).unwrap();
        assert_abs_diff_eq!(r2.value, 3.0 - 5.0f64.sqrt(), epsilon = 1e-10);
        // Star with four leaves: lambda_max = 2, value frozen at 2.
        let r31 = principal_dirichlet_value(3, 1).unwrap();
        assert_abs_diff_eq!(r31.value, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn eigen_vector_is_positive_and_residual_small() {
        let r = principal_dirichlet_value(3, 3).unwrap();
        assert!(r.residual < 1e-10);
        assert!(r.eigenvector.iter().all(|&v| v > 0.0));
        // The squared eigenvector is the pure-Dirichlet minimiser, so the
        // eigenvalue lower-bounds the energy of any probability vector.
        let tree = build_truncated_tree(3, 3).unwrap();
        let p: Vec<f64> = r.eigenvector.iter().map(|&v| v * v).collect();
        let energy = dirichlet_energy(tree.dirichlet_edges(), &p).unwrap();
        assert_abs_diff_eq!(energy, r.value, epsilon = 1e-9);
    }

    #[test]
    fn tree_solve_inverts_generator() {
        let tree = build_truncated_tree(2, 3).unwrap();
        let b: Vec<f64> = (0..tree.n()).map(|i| ((i * 37 + 11) % 17) as f64 / 17.0).collect();
        let x = tree_solve(&tree, &b);
        let back = apply_killed_generator(&tree, &x);
        for (u, v) in back.iter().zip(&b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_vertex_value_is_degree() {
        let tree = build_truncated_tree(4, 0).unwrap();
        let res = solve_chi_lower(&tree, Rho::new(3.0).unwrap(), &quick_opts()).unwrap();
        assert_eq!(res.value, 5.0);
        assert!(res.converged);
    }

    #[test]
    fn chi_lower_basic_properties() {
        let tree = build_truncated_tree(2, 3).unwrap();
        let res = solve_chi_lower(&tree, Rho::new(1.0).unwrap(), &quick_opts()).unwrap();
        assert!(res.converged, "grad_norm {}", res.grad_norm);
        assert!(res.grad_norm <= 1e-8);
        assert!(res.value > 1.0 && res.value <= 3.0, "value {}", res.value);
        // Reported value re-evaluates on the minimiser.
        let check = objective(tree.dirichlet_edges(), res.minimiser.values(), 1.0).unwrap();
        assert_abs_diff_eq!(res.value, check, epsilon = 1e-10);
        assert!(res.restarts_used >= 8);
    }

    #[test]
    fn chi_lower_decreases_with_radius() {
        let rho = Rho::new(1.0).unwrap();
        let mut prev: Option<(TruncatedTree, OptResult)> = None;
        for radius in [1u32, 2, 3] {
            let tree = build_truncated_tree(2, radius).unwrap();
            let mut opts = quick_opts();
            if let Some((small, res)) = &prev {
                opts.warm_start = Some(embed_ball_vector(small, &tree, res.minimiser.values()).unwrap());
            }
            let res = solve_chi_lower(&tree, rho, &opts).unwrap();
            if let Some((_, prev_res)) = &prev {
                assert!(res.value <= prev_res.value + 1e-9);
            }
            prev = Some((tree, res));
        }
    }

    #[test]
    fn chi_lower_approaches_eigenvalue_for_small_rho() {
        let tree = build_truncated_tree(2, 2).unwrap();
        let res = solve_chi_lower(&tree, Rho::new(1e-6).unwrap(), &quick_opts()).unwrap();
        let eig = principal_dirichlet_value(2, 2).unwrap();
        assert!((res.value - eig.value).abs() < 1e-4, "{} vs {}", res.value, eig.value);
    }

    #[test]
    fn chi_upper_respects_constraint() {
        let unit = build_unit_graph(2, 3).unwrap();
        let res = solve_chi_upper(&unit, Rho::new(1.0).unwrap(), &quick_opts()).unwrap();
        let mass: f64 = res
            .minimiser
            .values()
            .iter()
            .zip(unit.boundary_mask())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .sum();
        assert!(mass <= 1.0 / 3.0 + 1e-9, "boundary mass {mass}");
        assert!(res.value > 0.0);
    }

    #[test]
    fn chi_upper_large_rho_selects_cheapest_point_mass() {
        let unit = build_unit_graph(2, 3).unwrap();
        let res = solve_chi_upper(&unit, Rho::new(1e4).unwrap(), &quick_opts()).unwrap();
        // Cheapest feasible point mass: a tadpole, with a single edge.
        let mut best = f64::INFINITY;
        for v in 0..unit.n() {
            if unit.is_boundary(v as u32) {
                continue;
            }
            let mut w = vec![0.0; unit.n()];
            w[v] = 1.0;
            best = best.min(dirichlet_energy(unit.tilde_edges(), &w).unwrap());
        }
        assert_abs_diff_eq!(best, 1.0, epsilon = 1e-12);
        assert!((res.value - best).abs() < 0.05, "value {} vs {}", res.value, best);
    }

    #[test]
    fn chi_scan_checks_pass() {
        let tree = build_truncated_tree(2, 2).unwrap();
        let rhos = [0.5, 1.0, 2.0, 4.0];
        let curve = chi_scan(&tree, &rhos, &quick_opts()).unwrap();
        assert!(curve.monotone_ok);
        assert!(curve.lipschitz_ok);
        assert_eq!(curve.points.len(), 4);
        for p in &curve.points {
            assert!(p.value > 1.0 && p.value <= 3.0);
            let mass: f64 = p.shell_masses.iter().sum();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
        }
        assert!(chi_scan(&tree, &[1.0, 1.0], &quick_opts()).is_err());
        assert!(chi_scan(&tree, &[], &quick_opts()).is_err());
    }

    #[test]
    fn diagnostics_on_solved_minimiser() {
        let tree = build_truncated_tree(2, 4).unwrap();
        let rho = Rho::new(1.0).unwrap();
        let res = solve_chi_lower(&tree, rho, &quick_opts()).unwrap();
        let diag = minimiser_diagnostics(&tree, &res.minimiser, rho).unwrap();
        assert_eq!(diag.argmax, 0);
        assert!(diag.monotone_after_recentering, "gap {}", diag.worst_monotonicity_gap);
        assert!(diag.strictly_positive);
        assert!(diag.tail_ok, "tail {} bound {}", diag.tail_sum, diag.tail_bound);
        assert_eq!(diag.shell_masses.len(), 5);
    }

    #[test]
    fn unit_bound_terms_identities() {
        let unit = build_unit_graph(3, 3).unwrap();
        // A mildly decaying strictly positive vector.
        let w: Vec<f64> = (0..unit.n())
            .map(|v| 0.4f64.powi(unit.depth(v as u32) as i32) + 0.01 * ((v % 5) as f64))
            .collect();
        let p = ProbVector::from_weights(w).unwrap();
        let terms = unit_rate_bound_terms(&unit, p.values()).unwrap();

        // i_tilde equals i_hat plus the tadpole edge contributions.
        let mut tad = 0.0;
        for leaf in unit.bottom_leaves() {
            if let Some(t) = unit.tadpole_of(leaf) {
                let diff = p[leaf as usize].sqrt() - p[t as usize].sqrt();
                tad += diff * diff;
            }
        }
        assert_abs_diff_eq!(terms.i_tilde, terms.i_hat + tad, epsilon = 1e-12);

        // The second piece of the leaf-tadpole term matches p(x) F(w_x).
        let d = unit.d();
        let mut first = 0.0;
        let mut f_sum = 0.0;
        for leaf in unit.bottom_leaves() {
            if leaf == unit.star() {
                continue;
            }
            let px = p[leaf as usize];
            let pb = p[unit.tadpole_of(leaf).unwrap() as usize];
            first -= px * d as f64 * (d as f64 * pb / (d as f64 * px + pb)).sqrt();
            f_sum += px * f_function(d, pb / px);
        }
        assert_abs_diff_eq!(terms.s_leaf_tadpole, first + f_sum, epsilon = 1e-12);
        assert_abs_diff_eq!(
            terms.k3,
            terms.s_leaves + terms.s_root_star + terms.s_leaf_tadpole,
            epsilon = 1e-14
        );
    }

    #[test]
    fn unit_bound_o1_constant() {
        // Concentrate mass away from the boundary so the constraint holds.
        let unit = build_unit_graph(2, 5).unwrap();
        let w: Vec<f64> = (0..unit.n())
            .map(|v| {
                if unit.is_boundary(v as u32) {
                    1e-4
                } else {
                    0.5f64.powi(unit.depth(v as u32) as i32)
                }
            })
            .collect();
        let p = ProbVector::from_weights(w).unwrap();
        let terms = unit_rate_bound_terms(&unit, p.values()).unwrap();
        assert!(terms.boundary_mass <= 1.0 / 5.0);
        let c = terms.o1_constant.expect("feasible vector");
        assert!(c >= 0.0 && c <= unit.d() as f64 + 1e-9, "constant {c}");
    }

    #[test]
    fn f_scan_distinguishes_degrees() {
        let w_grid: Vec<f64> = (0..400).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 399.0)).collect();
        let c_grid: Vec<f64> = (1..=600).map(|i| 0.05 * i as f64).collect();

        let rep4 = f_inequality_scan(4, &w_grid, &c_grid).unwrap();
        assert_eq!(rep4.slope_at_infinity, 1.0);
        assert!(!rep4.slope_below_one);
        let c4 = rep4.minimal_c_unit.expect("bound must hold for d=4");
        assert!(c4 > 1.0, "minimal C {c4}");
        assert!(rep4.minimal_c_theta.is_some());

        for d in [2u32, 3] {
            let rep = f_inequality_scan(d, &w_grid, &c_grid).unwrap();
            assert!(rep.slope_below_one);
            assert!(rep.minimal_c_unit.is_none(), "unit bound should fail for d={d}");
            assert!(rep.witness_w >= 1e4, "witness {}", rep.witness_w);
            assert!(rep.minimal_c_theta.is_some(), "theta_c bound should hold for d={d}");
        }
    }

    #[test]
    fn embed_rejects_mismatched_graphs() {
        let small = build_truncated_tree(2, 1).unwrap();
        let large = build_truncated_tree(3, 2).unwrap();
        assert!(embed_ball_vector(&small, &large, &[0.25; 4]).is_err());
    }
}
