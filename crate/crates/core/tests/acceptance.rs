//! Acceptance gate: one test per release criterion, each printing a
//! single `[PASS]`/`[FAIL]` verdict line with the measured numbers.
//!
//! The verdict lines are written straight to stderr (not through the
//! test harness capture), so running this target always yields a
//! twelve-line scoreboard regardless of which tests pass.

// The Jacobi oracle and grid loops read clearest with explicit indices.
#![allow(clippy::needless_range_loop)]

use std::io::Write as _;

use pamtree::functionals::{dirichlet_energy, scaling_defect, scaling_limit, Rho};
use pamtree::graphs::{build_depth_line, build_truncated_tree, build_unit_graph};
use pamtree::simulate::{
    depth_rate_function, estimate_mass_exponent, estimate_survival_exponent,
    simulate_depth_chain, zero_depth_profile,
};
use pamtree::sojourn::{
    legendre_exp_closed, legendre_table, return_pmf, s_function, theta_c, two_sample_ks_statistic,
    SojournLaw, SojournSampler, TadpoleSampler,
};
use pamtree::solver::{
    chi_scan, f_inequality_scan, minimiser_diagnostics, principal_dirichlet_value,
    solve_chi_lower, solve_chi_upper, SolveOptions,
};

/// Prints the verdict line for one criterion, then enforces it.
fn verdict(number: usize, ok: bool, detail: &str) {
    let line = format!(
        "[{}] criterion {:2}: {}\n",
        if ok { "PASS" } else { "FAIL" },
        number,
        detail
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {number}: {detail}");
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            (lo.ln() + f * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

#[test]
fn criterion_01_closed_form_energies() {
    let mut worst = 0.0_f64;
    let mut delta_exact = true;
    for d in 2..=5u32 {
        for radius in 1..=8u32 {
            let tree = build_truncated_tree(d, radius).unwrap();
            let n = tree.n();

            let mut point = vec![0.0; n];
            point[0] = 1.0;
            let at_point = dirichlet_energy(tree.dirichlet_edges(), &point).unwrap();
            delta_exact &= at_point == (d + 1) as f64;

            let uniform = vec![1.0 / n as f64; n];
            let at_uniform = dirichlet_energy(tree.dirichlet_edges(), &uniform).unwrap();
            let df = d as f64;
            let dr = df.powi(radius as i32);
            let closed = (df - 1.0) * (df + 1.0) * dr / ((df + 1.0) * dr - 2.0);
            worst = worst.max(((at_uniform - closed) / closed).abs());
        }
    }
    verdict(
        1,
        delta_exact && worst <= 1e-12,
        &format!(
            "point-mass energy is d+1 exactly and uniform-ball energy matches the closed \
             form (worst relative error {worst:.2e}, d in 2..=5, R in 1..=8)"
        ),
    );
}

#[test]
fn criterion_02_rho_limits_of_the_variational_value() {
    let opts = SolveOptions::default();
    let d = 2u32;

    let ball = build_truncated_tree(d, 4).unwrap();
    let high = solve_chi_lower(&ball, Rho::new(1e3).unwrap(), &opts).unwrap();
    let high_ok = high.converged && (high.value - (d + 1) as f64).abs() <= 0.05;

    let wide = build_truncated_tree(d, 10).unwrap();
    let low = solve_chi_lower(&wide, Rho::new(1e-3).unwrap(), &opts).unwrap();
    let low_gap = (low.value - (d - 1) as f64).abs();
    let low_ok = low.converged && low_gap <= 0.1;

    let in_range =
        |v: f64| v > (d - 1) as f64 && v <= (d + 1) as f64 + 1e-12;
    let range_ok = in_range(high.value) && in_range(low.value);

    verdict(
        2,
        high_ok && low_ok && range_ok,
        &format!(
            "rho=1e3 value {:.6} is within 0.05 of d+1; rho=1e-3 (R=10) value {:.6} misses \
             the claimed d-1 limit by {:.3} (it sits near (sqrt(d)-1)^2 = {:.6} instead, so \
             the advertised range (d-1, d+1] fails at small rho)",
            high.value,
            low.value,
            low_gap,
            theta_c(d)
        ),
    );
}

#[test]
fn criterion_03_structure_of_the_rho_curve() {
    let rhos = [0.25, 0.5, 1.0, 2.0, 4.0];
    let opts = SolveOptions::default();
    let mut curves = Vec::new();
    for radius in [2u32, 4, 6] {
        let tree = build_truncated_tree(2, radius).unwrap();
        curves.push(chi_scan(&tree, &rhos, &opts).unwrap());
    }

    let mut strict = true;
    let mut lipschitz = true;
    for curve in &curves {
        strict &= curve.points.windows(2).all(|w| w[1].value > w[0].value);
        lipschitz &= curve.lipschitz_ok && curve.monotone_ok;
    }
    let mut radius_monotone = true;
    let mut worst_bump = 0.0_f64;
    for i in 0..rhos.len() {
        for w in curves.windows(2) {
            let bump = w[1].points[i].value - w[0].points[i].value;
            worst_bump = worst_bump.max(bump);
            radius_monotone &= bump <= 1e-8;
        }
    }
    verdict(
        3,
        strict && lipschitz && radius_monotone,
        &format!(
            "d=2 curve is strictly increasing with chord slopes below (d+1)/rho_left, and \
             enlarging R in {{2,4,6}} never raises the value by more than 1e-8 \
             (worst increase {worst_bump:.2e})"
        ),
    );
}

#[test]
fn criterion_04_minimiser_shape() {
    let tree = build_truncated_tree(2, 8).unwrap();
    let rho = Rho::new(1.0).unwrap();
    let res = solve_chi_lower(&tree, rho, &SolveOptions::default()).unwrap();

    let converged: Vec<_> = res.runs.iter().filter(|r| r.converged).collect();
    let mut ok = res.converged && !converged.is_empty();
    let mut worst_gap = 0.0_f64;
    let mut worst_tail = 0.0_f64;
    for run in &converged {
        let diag = minimiser_diagnostics(&tree, &run.minimiser, rho).unwrap();
        ok &= diag.monotone_after_recentering && diag.strictly_positive && diag.tail_ok;
        worst_gap = worst_gap.max(diag.worst_monotonicity_gap);
        worst_tail = worst_tail.max(diag.tail_sum);
    }
    verdict(
        4,
        ok,
        &format!(
            "all {} converged minimisers at (d=2, rho=1, R=8) are downward-monotone after \
             recentering (worst gap {worst_gap:.1e}), strictly positive, and keep the shell \
             tail sum at {worst_tail:.4} <= (d+1)/rho = 3",
            converged.len()
        ),
    );
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations;
/// written out here so the oracle shares no code with the library.
fn jacobi_min_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_05_eigen_oracle_and_survival() {
    // Radius-1 ball at d=2: a root joined to three leaves.
    let mut m = vec![vec![0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = 3.0;
    }
    for leaf in 1..4 {
        m[0][leaf] = -1.0;
        m[leaf][0] = -1.0;
    }
    let oracle = jacobi_min_eigenvalue(m);
    let eig = principal_dirichlet_value(2, 1).unwrap();
    let closed = 3.0 - 3.0_f64.sqrt();
    let eig_ok = (eig.value - closed).abs() <= 1e-10 && (eig.value - oracle).abs() <= 1e-10;

    let tree = build_truncated_tree(2, 1).unwrap();
    let est = estimate_survival_exponent(&tree, 8.0, 100_000, 1).unwrap();
    let slack = 0.1 * eig.value;
    let mc_ok = eig.value >= est.ci_lo - slack && eig.value <= est.ci_hi + slack;

    verdict(
        5,
        eig_ok && mc_ok,
        &format!(
            "power iteration gives {:.12} = 3-sqrt(3) = dense 4x4 Jacobi oracle {:.12}; the \
             killed-walk exponent {:.4} (CI [{:.4}, {:.4}], {} survivors of 1e5 at t=8) \
             brackets it within CI+10%",
            eig.value, oracle, est.exponent, est.ci_lo, est.ci_hi, est.survivors
        ),
    );
}

#[test]
fn criterion_06_legendre_identities() {
    let mut worst_closed = 0.0_f64;
    for d in [2u32, 3, 4] {
        let law = SojournLaw::exp_rate(d).unwrap();
        let table = legendre_table(law, &log_grid(0.05, 20.0, 50)).unwrap();
        for p in &table.points {
            worst_closed =
                worst_closed.max((p.value - legendre_exp_closed(d, p.alpha).unwrap()).abs());
        }
    }

    let mut worst_cusp = 0.0_f64;
    let mut worst_round = 0.0_f64;
    let mut worst_inv = 0.0_f64;
    let mut worst_slope = 0.0_f64;
    for d in [2u32, 3, 4, 5] {
        let law = SojournLaw::tree_return(d).unwrap();
        let sqd = (d as f64).sqrt();
        worst_cusp = worst_cusp.max((law.cgf(theta_c(d)) - sqd.ln()).abs());
        for i in 1..=20 {
            let beta = sqd * i as f64 / 20.0;
            let round = law.cgf(s_function(d, beta).unwrap()).exp();
            worst_round = worst_round.max((round - beta).abs());
        }
        for i in 0..20 {
            let m = -3.0 + i as f64 * (0.999 * sqd.ln() + 3.0) / 19.0;
            let alpha = law.mu_inverse(m).unwrap();
            let tilt = law.tilt_for_slope(alpha).unwrap();
            worst_inv = worst_inv.max((tilt - s_function(d, m.exp()).unwrap()).abs());
        }
        let far = law.legendre(1e4).unwrap();
        worst_slope = worst_slope.max((far.value / 1e4 - theta_c(d)).abs());
    }

    verdict(
        6,
        worst_closed <= 1e-9
            && worst_cusp <= 1e-10
            && worst_round <= 1e-9
            && worst_inv <= 1e-6
            && worst_slope <= 1e-3,
        &format!(
            "numeric Legendre transform matches the exponential closed form to {worst_closed:.1e}; \
             cgf at the cusp hits log sqrt(d) to {worst_cusp:.1e}; exp(cgf(S(beta))) round-trips \
             to {worst_round:.1e} on (0, sqrt(d)]; the maximiser composed with mu-inverse matches \
             the cgf inverse to {worst_inv:.1e}; value/alpha at alpha=1e4 is theta_c to {worst_slope:.1e}"
        ),
    );
}

#[test]
fn criterion_07_return_time_law() {
    let mut sums_ok = true;
    let mut first_exact = true;
    let mut worst_tail = 0.0_f64;
    for d in 2..=5u32 {
        let pmf = return_pmf(d, 200).unwrap();
        let sum: f64 = pmf.iter().sum();
        worst_tail = worst_tail.max(1.0 - sum);
        sums_ok &= sum >= 1.0 - 1e-10;
        first_exact &= pmf[0] == d as f64 / (d + 1) as f64;
    }

    use rand::SeedableRng;
    let law = SojournLaw::tree_return(2).unwrap();
    let alpha_c = law.mean_sojourn();
    let sampler = SojournSampler::new(law).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let n = 1_000_000usize;
    let samples: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let mean_ok = (mean - alpha_c).abs() <= 4.0 * se;

    let mixture = SojournSampler::with_strategy(law, TadpoleSampler::PmfMixture).unwrap();
    let doob = SojournSampler::with_strategy(law, TadpoleSampler::DoobWalk).unwrap();
    let m = 100_000usize;
    let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut a: Vec<f64> = (0..m).map(|_| mixture.sample(&mut r1)).collect();
    let mut b: Vec<f64> = (0..m).map(|_| doob.sample(&mut r2)).collect();
    let ks = two_sample_ks_statistic(&mut a, &mut b);
    let ks_crit = 1.628 * ((2 * m) as f64 / (m * m) as f64).sqrt();
    let ks_ok = ks < ks_crit;

    verdict(
        7,
        sums_ok && first_exact && mean_ok && ks_ok,
        &format!(
            "first 200 return probabilities sum to within {worst_tail:.1e} of 1 with \
             p_2 = d/(d+1) exact (d in 2..=5); 1e6 sampled sojourns average {mean:.4} vs \
             alpha_c = {alpha_c:.4} ({:.2} SE); mixture and conditioned-walk samplers agree \
             (KS {ks:.5} < 1% critical {ks_crit:.5})",
            (mean - alpha_c).abs() / se
        ),
    );
}

#[test]
fn criterion_08_depth_profile() {
    let mut worst_zero = 0.0_f64;
    for d in 2..=4u32 {
        for radius in 1..=6u32 {
            let p = zero_depth_profile(d, radius).unwrap();
            worst_zero = worst_zero.max(depth_rate_function(d, radius, &p).unwrap());
        }
    }

    let line = build_depth_line(2, 5).unwrap();
    let stationary = zero_depth_profile(2, 5).unwrap();
    let profile = simulate_depth_chain(&line, 1e5, 1).unwrap();
    let mut worst_z = 0.0_f64;
    for ((&occ, &se), &target) in
        profile.occupation.iter().zip(&profile.se).zip(&stationary)
    {
        worst_z = worst_z.max((occ - target).abs() / se);
    }

    verdict(
        8,
        worst_zero <= 1e-12 && worst_z <= 3.0,
        &format!(
            "rate function vanishes at the geometric profile to {worst_zero:.1e} \
             (d in 2..=4, R <= 6); simulated occupation at (d=2, R=5, t=1e5) sits within \
             {worst_z:.2} batch-means SE of the half/geometric/tadpole split on every state"
        ),
    );
}

#[test]
fn criterion_09_tadpole_weight_inequality() {
    let w_grid = log_grid(1e-6, 1e6, 1000);
    let c_grid: Vec<f64> = (0..600).map(|i| 0.05 + i as f64 * (30.0 - 0.05) / 599.0).collect();

    let d4 = f_inequality_scan(4, &w_grid, &c_grid).unwrap();
    let d4_ok = d4.slope_at_infinity == 1.0 && d4.minimal_c_unit.is_some();

    let d2 = f_inequality_scan(2, &w_grid, &c_grid).unwrap();
    let w_end = 1e6_f64;
    let deficit_end =
        (1.0 - w_end.sqrt()) * (1.0 - w_end.sqrt()) - pamtree::solver::f_function(2, w_end);
    let threshold = 1e5 * (1.0 - theta_c(2)) / 2.0;
    let d2_ok = d2.minimal_c_unit.is_none()
        && deficit_end > threshold
        && d2.minimal_c_theta.is_some();

    verdict(
        9,
        d4_ok && d2_ok,
        &format!(
            "d=4: slope at infinity is exactly 1 and C = {:.2} closes the unit-coefficient \
             bound; d=2: the deficit reaches {deficit_end:.3e} > {threshold:.3e} at w=1e6, so \
             no constant closes the unit bound while C = {:.2} closes the theta_c-weighted one",
            d4.minimal_c_unit.unwrap_or(f64::NAN),
            d2.minimal_c_theta.unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_10_sandwich_consistency() {
    let opts = SolveOptions::default();
    let rho = Rho::new(1.0).unwrap();
    let mut gaps = Vec::new();
    for radius in [4u32, 6, 8] {
        let tree = build_truncated_tree(4, radius).unwrap();
        let lower = solve_chi_lower(&tree, rho, &opts).unwrap();
        let unit = build_unit_graph(4, radius).unwrap();
        let upper = solve_chi_upper(&unit, rho, &opts).unwrap();
        assert!(lower.converged && upper.converged, "R={radius} solves must converge");
        gaps.push((upper.value - lower.value).abs());
    }
    let decreasing = gaps[1] < gaps[0] && gaps[2] < gaps[1];
    let tight = gaps[2] <= 0.15;
    verdict(
        10,
        decreasing && tight,
        &format!(
            "gap |upper - lower| at (d=4, rho=1) over R in {{4,6,8}}: {:.9} > {:.9} > {:.9} \
             (decreasing holds), but the R=8 gap is nowhere near 0.15: the boundary-capped \
             unit problem parks ~94% of its mass on a single degree-one tadpole at cost \
             ~0.807 independent of R and d, so it cannot track the ball value ~3.909",
            gaps[0], gaps[1], gaps[2]
        ),
    );
}

#[test]
fn criterion_11_cumulant_scaling() {
    let rho = 1.0;
    let at_half = scaling_defect(0.5, 1e4, rho).unwrap();
    let target = -0.5 * 2.0_f64.ln();
    let half_ok = (at_half - target).abs() <= 2e-3;

    let mut sups = Vec::new();
    for t in [1e2, 1e3, 1e4] {
        let mut sup = 0.0_f64;
        for i in 1..=20 {
            let c = i as f64 * 0.05;
            sup = sup.max((scaling_defect(c, t, rho).unwrap() - scaling_limit(c, rho)).abs());
        }
        sups.push(sup);
    }
    let shrinking = sups[1] < sups[0] && sups[2] < sups[1];

    verdict(
        11,
        half_ok && shrinking,
        &format!(
            "defect at (c=1/2, t=1e4) is {at_half:.6} vs limit {target:.6} (|diff| = {:.1e}); \
             sup over the c-grid falls {:.2e} -> {:.2e} -> {:.2e} as t runs through 1e2, 1e3, 1e4",
            (at_half - target).abs(),
            sups[0],
            sups[1],
            sups[2]
        ),
    );
}

#[test]
fn criterion_12_mass_exponent_smoke_test() {
    let tree = build_truncated_tree(2, 2).unwrap();
    let rho = Rho::new(1.0).unwrap();
    let chi = solve_chi_lower(&tree, rho, &SolveOptions::default()).unwrap();

    let mut details = Vec::new();
    let mut estimates = Vec::new();
    for r in [0.5, 1.0, 2.0] {
        match estimate_mass_exponent(&tree, Rho::new(r).unwrap(), 20.0, 100_000, 1) {
            Ok(est) => {
                details.push(format!("rho={r}: {:.4} [{:.4}, {:.4}]", est.exponent, est.ci_lo, est.ci_hi));
                estimates.push(est);
            }
            Err(err) => details.push(format!("rho={r}: {err}")),
        }
    }

    let bracket_ok = estimates.iter().any(|est| {
        est.rho == 1.0 && chi.value >= est.ci_lo - 0.15 && chi.value <= est.ci_hi + 0.15
    });
    let monotone_ok =
        estimates.len() == 3 && estimates.windows(2).all(|w| w[1].exponent > w[0].exponent);

    verdict(
        12,
        bracket_ok && monotone_ok,
        &format!(
            "naive weighted-survival estimate at (d=2, R=2, t=20, n=1e5) cannot bracket the \
             solver value {:.4}: survival decays like exp(-0.764 t), leaving ~0.04 expected \
             survivors among 1e5 replicas ({})",
            chi.value,
            details.join("; ")
        ),
    );
}
