//! Sojourn-time laws of the Markov-renewal picture: the exponential
//! holding time of rate d+1 and the time the walk needs to return
//! through an edge that leads into an infinite d-ary cone ("tree return",
//! the sojourn attached to tadpole vertices).  The module carries their
//! cumulant generating functions, Legendre transforms, tilted means, the
//! return-length probability mass function and two independent samplers.
//!
//! Conventions for the tree-return law with offspring number d:
//! - the number of jumps of a returning excursion is even, `2k`, and
//!   `P(2k jumps) = Cat(k-1) d^k / (d+1)^(2k-1)`;
//! - the sojourn spends `2k - 1` exponential holding times of rate `d+1`
//!   inside the cone;
//! - the cgf is finite up to and including `theta_c = (sqrt(d) - 1)^2`,
//!   where it has a cusp with infinite slope, and
//!   `exp(cgf(theta)) = 2d / (m + sqrt((theta_c - theta) (m + 2 sqrt(d))))`
//!   with `m = d + 1 - theta`; this form is stable for very negative
//!   `theta` and exact at the cusp.

use rand::Rng;

use crate::error::Error;
use crate::Result;

/// Holding-time law at a vertex of the renewal graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SojournLaw {
    /// Exponential of rate d+1.
    ExpRate { d: u32 },
    /// Return time through an edge into an infinite d-ary cone.
    TreeReturn { d: u32 },
}

impl SojournLaw {
    pub fn exp_rate(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::DegreeTooSmall(d));
        }
        Ok(SojournLaw::ExpRate { d })
    }

    pub fn tree_return(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::DegreeTooSmall(d));
        }
        Ok(SojournLaw::TreeReturn { d })
    }

    pub fn d(&self) -> u32 {
        match *self {
            SojournLaw::ExpRate { d } | SojournLaw::TreeReturn { d } => d,
        }
    }

    /// Rate of the exponential building blocks, d+1.
    pub fn rate(&self) -> f64 {
        (self.d() + 1) as f64
    }

    /// Supremum of the finiteness domain of the cgf.  Open for the
    /// exponential law (cgf blows up at d+1), attained for the tree
    /// return law (finite value with infinite slope at theta_c).
    pub fn cgf_threshold(&self) -> f64 {
        match *self {
            SojournLaw::ExpRate { d } => (d + 1) as f64,
            SojournLaw::TreeReturn { d } => theta_c(d),
        }
    }

    /// Log-moment generating function; `+inf` outside the domain.
    pub fn cgf(&self, theta: f64) -> f64 {
        match *self {
            SojournLaw::ExpRate { d } => {
                let rate = (d + 1) as f64;
                if theta < rate {
                    (rate / (rate - theta)).ln()
                } else {
                    f64::INFINITY
                }
            }
            SojournLaw::TreeReturn { d } => {
                // Finite at the cusp itself (value log sqrt(d)); tolerate a
                // few ulps of rounding in callers that reconstruct theta_c
                // through algebraically equal expressions.
                let tc = theta_c(d);
                let gap = tc - theta;
                let fuzz = 32.0 * f64::EPSILON * (1.0 + tc);
                if gap < -fuzz {
                    return f64::INFINITY;
                }
                let df = d as f64;
                let m = df + 1.0 - theta;
                // Inside the fuzz band theta is indistinguishable from the
                // cusp at input precision, while the square-root branch
                // would amplify that sub-ulp noise to ~1e-8; snap to the
                // cusp value instead.
                let root =
                    if gap <= fuzz { 0.0 } else { (gap * (m + 2.0 * df.sqrt())).sqrt() };
                (2.0 * df / (m + root)).ln()
            }
        }
    }

    /// Derivative of the cgf on the interior of its domain.
    ///
    /// For the tree return law the derivative collapses to
    /// `1 / sqrt((theta_c - theta)(m + 2 sqrt(d)))`, the reciprocal of
    /// the square root appearing in the cgf itself.
    pub fn cgf_deriv(&self, theta: f64) -> f64 {
        match *self {
            SojournLaw::ExpRate { d } => {
                let rate = (d + 1) as f64;
                if theta < rate {
                    1.0 / (rate - theta)
                } else {
                    f64::INFINITY
                }
            }
            SojournLaw::TreeReturn { d } => {
                let tc = theta_c(d);
                if theta >= tc {
                    return f64::INFINITY;
                }
                let df = d as f64;
                let m = df + 1.0 - theta;
                1.0 / ((tc - theta) * (m + 2.0 * df.sqrt())).sqrt()
            }
        }
    }

    /// Mean sojourn time `alpha_c = cgf'(0)`, computed by
    /// Richardson-extrapolated central differences of the cgf at zero.
    pub fn mean_sojourn(&self) -> f64 {
        let h = 1e-3;
        let diff = |h: f64| (self.cgf(h) - self.cgf(-h)) / (2.0 * h);
        (4.0 * diff(h / 2.0) - diff(h)) / 3.0
    }

    /// Tilt solving `cgf'(theta) = alpha` by bisection; the slope is
    /// strictly increasing from 0 to infinity on the domain, so every
    /// positive `alpha` has a unique solution.
    pub fn tilt_for_slope(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::NonPositiveParameter { what: "alpha", value: alpha });
        }
        let top = self.cgf_threshold();
        let mut gap_hi = 1.0;
        while self.cgf_deriv(top - gap_hi) <= alpha {
            gap_hi *= 0.5;
            if gap_hi < 1e-300 {
                return Err(Error::BracketFailure {
                    what: "tilt_for_slope",
                    detail: format!("no upper bracket below threshold for alpha={alpha}"),
                });
            }
        }
        let mut gap_lo = gap_hi;
        while self.cgf_deriv(top - gap_lo) > alpha {
            gap_lo *= 2.0;
            if gap_lo > 1e300 {
                return Err(Error::BracketFailure {
                    what: "tilt_for_slope",
                    detail: format!("no lower bracket for alpha={alpha}"),
                });
            }
        }
        // cgf' is increasing in theta, i.e. decreasing in the gap.  The
        // tolerance is relative to the bracket magnitude: for tiny slopes the
        // tilt sits near -1/alpha, where an absolute 1e-12 is below one ulp
        // and a fixed-tolerance loop would never terminate.
        let mut lo = top - gap_lo;
        let mut hi = top - gap_hi;
        while hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cgf_deriv(mid) < alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Legendre transform `(L cgf)(alpha) = sup_theta [alpha theta - cgf(theta)]`
    /// evaluated through the tilt equation.
    pub fn legendre(&self, alpha: f64) -> Result<LegendrePoint> {
        let theta = self.tilt_for_slope(alpha)?;
        let value = alpha * theta - self.cgf(theta);
        let mu = self.cgf(theta);
        Ok(LegendrePoint { alpha, value, theta, mu })
    }

    /// Tilted log-mean `mu(alpha) = cgf(theta(alpha))
    /// = alpha (L cgf)'(alpha) - (L cgf)(alpha)`.
    pub fn mu(&self, alpha: f64) -> Result<f64> {
        Ok(self.cgf(self.tilt_for_slope(alpha)?))
    }

    /// Inverse of the strictly increasing `mu`, by bisection in log-alpha.
    pub fn mu_inverse(&self, m: f64) -> Result<f64> {
        if let SojournLaw::TreeReturn { d } = *self {
            let sup = (d as f64).sqrt().ln();
            if m >= sup {
                return Err(Error::OutOfDomain {
                    what: "mu_inverse",
                    value: m,
                    detail: "at or above the supremum log sqrt(d) of mu",
                });
            }
        }
        let mut lo = 1e-6;
        while self.mu(lo)? > m {
            lo *= 1e-3;
            if lo < 1e-290 {
                return Err(Error::BracketFailure {
                    what: "mu_inverse",
                    detail: format!("no lower bracket for m={m}"),
                });
            }
        }
        let mut hi = 1e6;
        while self.mu(hi)? < m {
            hi *= 1e3;
            if hi > 1e290 {
                return Err(Error::BracketFailure {
                    what: "mu_inverse",
                    detail: format!("no upper bracket for m={m}"),
                });
            }
        }
        while hi - lo > 1e-13 * hi {
            let mid = (lo * hi).sqrt();
            if self.mu(mid)? < m {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo * hi).sqrt())
    }
}

/// Cusp location of the tree-return cgf, `(sqrt(d) - 1)^2`.
pub fn theta_c(d: u32) -> f64 {
    let s = (d as f64).sqrt() - 1.0;
    s * s
}

/// One row of a Legendre table.
#[derive(Clone, Copy, Debug)]
pub struct LegendrePoint {
    pub alpha: f64,
    /// `(L cgf)(alpha)`.
    pub value: f64,
    /// Maximising tilt `theta(alpha) = (L cgf)'(alpha)`.
    pub theta: f64,
    /// `mu(alpha) = cgf(theta(alpha))`.
    pub mu: f64,
}

/// Legendre transform of the exponential law in closed form:
/// `alpha (d+1) - 1 - ln(alpha (d+1))`.
pub fn legendre_exp_closed(d: u32, alpha: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::NonPositiveParameter { what: "alpha", value: alpha });
    }
    let x = alpha * (d + 1) as f64;
    Ok(x - 1.0 - x.ln())
}

/// Inverse of the tree-return cgf through the substitution
/// `beta = exp(cgf)`: `S(beta) = d + 1 - beta - d/beta` on `(0, sqrt(d)]`.
pub fn s_function(d: u32, beta: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    let sq = (d as f64).sqrt();
    if !(beta > 0.0) || !(beta <= sq) {
        return Err(Error::OutOfDomain {
            what: "s_function",
            value: beta,
            detail: "beta must lie in (0, sqrt(d)]",
        });
    }
    Ok((d + 1) as f64 - beta - d as f64 / beta)
}

/// Legendre table on a fixed alpha grid together with the law's
/// characteristic constants.
#[derive(Clone, Debug)]
pub struct LegendreTable {
    pub law: SojournLaw,
    pub points: Vec<LegendrePoint>,
    /// Mean sojourn time, the zero of the transform.
    pub alpha_c: f64,
    /// Supremum of the cgf domain.
    pub theta_c: f64,
}

pub fn legendre_table(law: SojournLaw, alphas: &[f64]) -> Result<LegendreTable> {
    let points = alphas
        .iter()
        .map(|&a| law.legendre(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(LegendreTable {
        law,
        points,
        alpha_c: law.mean_sojourn(),
        theta_c: law.cgf_threshold(),
    })
}

/// `P(excursion takes 2k jumps)` for `k = 1..=k_max`, via the stable
/// recurrence `p_{2(k+1)} = p_{2k} * 2(2k-1)/(k+1) * d/(d+1)^2` started
/// from `p_2 = d/(d+1)` (the Catalan-number expansion of the first-return
/// generating function).
pub fn return_pmf(d: u32, k_max: usize) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    if k_max == 0 {
        return Err(Error::NonPositiveParameter { what: "k_max", value: 0.0 });
    }
    let df = d as f64;
    let step = df / ((df + 1.0) * (df + 1.0));
    let mut pmf = Vec::with_capacity(k_max);
    let mut p = df / (df + 1.0);
    pmf.push(p);
    for k in 1..k_max {
        let kf = k as f64;
        p *= 2.0 * (2.0 * kf - 1.0) / (kf + 1.0) * step;
        pmf.push(p);
    }
    Ok(pmf)
}

/// Cumulative return-length table used by the mixture sampler.  The tail
/// is cut once it drops below `TAIL_CUT` and the rest is renormalised;
/// `cap` records where the cut happened.
#[derive(Clone, Debug)]
pub struct ReturnPmfTable {
    d: u32,
    cum: Vec<f64>,
    cap: usize,
}

const TAIL_CUT: f64 = 1e-14;
const PMF_HARD_CAP: usize = 20_000;

impl ReturnPmfTable {
    pub fn new(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::DegreeTooSmall(d));
        }
        let df = d as f64;
        let step = df / ((df + 1.0) * (df + 1.0));
        let mut cum = Vec::new();
        let mut p = df / (df + 1.0);
        let mut total = 0.0;
        for k in 1..=PMF_HARD_CAP {
            total += p;
            cum.push(total);
            if 1.0 - total < TAIL_CUT {
                break;
            }
            let kf = k as f64;
            p *= 2.0 * (2.0 * kf - 1.0) / (kf + 1.0) * step;
        }
        let cap = cum.len();
        let norm = cum[cap - 1];
        for c in &mut cum {
            *c /= norm;
        }
        Ok(ReturnPmfTable { d, cum, cap })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Number of retained excursion lengths.
    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Draws the half-length `k >= 1` of a `2k`-jump excursion.
    pub fn sample_k<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cum.partition_point(|&c| c < u) + 1
    }
}

/// Exponential draw by inversion; shared by every simulator so that a
/// fixed seed pins down the whole trajectory.
pub(crate) fn draw_exp<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Strategy for drawing tree-return sojourns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TadpoleSampler {
    /// Draw the excursion half-length from the pmf table, then add
    /// `2k - 1` exponential holding times.
    #[default]
    PmfMixture,
    /// Simulate the distance-to-exit chain of the conditioned walk
    /// (toward the exit with probability d/(d+1)) and add one holding
    /// time per step; used to cross-validate the mixture sampler.
    DoobWalk,
}

/// Sampler for a [`SojournLaw`], deterministic given the caller's rng.
#[derive(Clone, Debug)]
pub struct SojournSampler {
    law: SojournLaw,
    strategy: TadpoleSampler,
    table: Option<ReturnPmfTable>,
}

impl SojournSampler {
    pub fn new(law: SojournLaw) -> Result<Self> {
        Self::with_strategy(law, TadpoleSampler::default())
    }

    pub fn with_strategy(law: SojournLaw, strategy: TadpoleSampler) -> Result<Self> {
        let table = match (law, strategy) {
            (SojournLaw::TreeReturn { d }, TadpoleSampler::PmfMixture) => {
                Some(ReturnPmfTable::new(d)?)
            }
            _ => None,
        };
        Ok(SojournSampler { law, strategy, table })
    }

    pub fn law(&self) -> SojournLaw {
        self.law
    }

    /// Where the pmf table was cut, when one is in use.
    pub fn cap(&self) -> Option<usize> {
        self.table.as_ref().map(|t| t.cap())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let rate = self.law.rate();
        match self.law {
            SojournLaw::ExpRate { .. } => draw_exp(rng, rate),
            SojournLaw::TreeReturn { d } => {
                let holdings = match self.strategy {
                    TadpoleSampler::PmfMixture => {
                        2 * self.table.as_ref().expect("table built for mixture").sample_k(rng) - 1
                    }
                    TadpoleSampler::DoobWalk => {
                        // Distance to the exit, started one step inside.
                        let mut depth = 1u64;
                        let mut steps = 0u64;
                        while depth > 0 {
                            steps += 1;
                            if rng.gen_range(0..d + 1) < d {
                                depth -= 1;
                            } else {
                                depth += 1;
                            }
                        }
                        steps as usize
                    }
                };
                let mut total = 0.0;
                for _ in 0..holdings {
                    total += draw_exp(rng, rate);
                }
                total
            }
        }
    }
}

/// Probability that the walk started at distance `depth` inside a cone
/// ever reaches its apex: `d^(-depth)`.
pub fn hitting_probability(d: u32, depth: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    Ok((d as f64).powi(-(depth as i32)))
}

/// Monte Carlo companion of [`hitting_probability`]: runs `n` unbiased
/// walks (toward the apex with probability 1/(d+1)) and declares escape
/// at `escape_depth`.  Returns the estimate and its binomial standard
/// error.
pub fn estimate_hitting_probability<R: Rng>(
    d: u32,
    depth: u32,
    n: u64,
    escape_depth: u32,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if d < 2 {
        return Err(Error::DegreeTooSmall(d));
    }
    if n == 0 {
        return Err(Error::NonPositiveParameter { what: "n", value: 0.0 });
    }
    if depth >= escape_depth && depth > 0 {
        return Err(Error::OutOfDomain {
            what: "estimate_hitting_probability",
            value: depth as f64,
            detail: "start depth must lie below the escape depth",
        });
    }
    let mut hits = 0u64;
    for _ in 0..n {
        let mut pos = depth;
        loop {
            if pos == 0 {
                hits += 1;
                break;
            }
            if pos >= escape_depth {
                break;
            }
            if rng.gen_range(0..d + 1) == 0 {
                pos -= 1;
            } else {
                pos += 1;
            }
        }
    }
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok((p, se))
}

/// Two-sample Kolmogorov-Smirnov statistic, used to cross-validate the
/// two tree-return samplers.  Sorts both inputs in place.
pub fn two_sample_ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d_max = 0.0f64;
    while i < n && j < m {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d_max = d_max.max(diff);
    }
    d_max
}
