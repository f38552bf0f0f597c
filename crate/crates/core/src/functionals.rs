//! The two functionals behind the Lyapunov exponent: the Dirichlet
//! energy of the square-root of a measure with killing at exit edges,
//! and the Shannon entropy, combined into the objective
//! `F(p) = I(p) + rho * J(p)`, together with its coordinate gradient and
//! the double-exponential cumulant used in the scaling check.
//!
//! Functions accept raw non-negative slices rather than [`ProbVector`]s:
//! both quantities are well defined off the simplex, which is exactly
//! what the finite-difference gradient checks and line searches need.

use crate::error::Error;
use crate::graphs::EdgeData;
use crate::prob::stable_sum;
use crate::Result;

/// Strictly positive entropy weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rho(f64);

impl Rho {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveRho(value));
        }
        Ok(Rho(value))
    }

    pub fn get(&self) -> f64 {
        self.0
    }
}

fn check_weights(edges: &EdgeData, w: &[f64]) -> Result<()> {
    if w.len() != edges.n {
        return Err(Error::LengthMismatch { expected: edges.n, got: w.len() });
    }
    for (index, &value) in w.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    Ok(())
}

/// `I(w) = sum_{x~y} (sqrt(w_x) - sqrt(w_y))^2 + sum_x exit(x) w_x`.
///
/// Exit edges connect to vertices carrying no mass, so they contribute
/// `(sqrt(w_x) - 0)^2` apiece.
pub fn dirichlet_energy(edges: &EdgeData, w: &[f64]) -> Result<f64> {
    check_weights(edges, w)?;
    let sqrt: Vec<f64> = w.iter().map(|&v| v.sqrt()).collect();
    let edge_terms = edges.pairs.iter().map(|&(a, b)| {
        let diff = sqrt[a as usize] - sqrt[b as usize];
        diff * diff
    });
    let exit_terms = edges.exit.iter().zip(w).map(|(&e, &v)| e * v);
    Ok(stable_sum(edge_terms.chain(exit_terms)))
}

/// Shannon entropy `J(w) = -sum_x w_x ln w_x`, with `0 ln 0 = 0`.
pub fn entropy(w: &[f64]) -> Result<f64> {
    for (index, &value) in w.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    Ok(stable_sum(w.iter().map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 })))
}

/// `F(w) = I(w) + rho J(w)`; `rho = 0` reduces to the Dirichlet energy.
pub fn objective(edges: &EdgeData, w: &[f64], rho: f64) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::NonPositiveRho(rho));
    }
    Ok(dirichlet_energy(edges, w)? + rho * entropy(w)?)
}

/// Coordinate gradient of [`objective`] at a strictly positive `w`:
///
/// `dF/dw_x = deg(x) + exit(x) - sum_{y~x} sqrt(w_y/w_x) - rho (ln w_x + 1)`.
///
/// On a ball selector `deg + exit = d+1` at every vertex.  The formula
/// follows by differentiating edge terms `w_x + w_y - 2 sqrt(w_x w_y)`
/// and is cross-checked against central finite differences in the tests.
pub fn objective_gradient(edges: &EdgeData, w: &[f64], rho: f64) -> Result<Vec<f64>> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::NonPositiveRho(rho));
    }
    if w.len() != edges.n {
        return Err(Error::LengthMismatch { expected: edges.n, got: w.len() });
    }
    for (index, &value) in w.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveEntry { index, value });
        }
    }
    let sqrt: Vec<f64> = w.iter().map(|&v| v.sqrt()).collect();
    let mut grad: Vec<f64> = (0..edges.n)
        .map(|x| {
            (edges.degree[x] as f64 + edges.exit[x]) - rho * (w[x].ln() + 1.0)
        })
        .collect();
    for &(a, b) in &edges.pairs {
        let (a, b) = (a as usize, b as usize);
        grad[a] -= sqrt[b] / sqrt[a];
        grad[b] -= sqrt[a] / sqrt[b];
    }
    Ok(grad)
}

/// Cumulant of the double-exponential potential: `H(u) = ln Gamma(rho u + 1)`.
pub fn double_exp_cumulant(u: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::NonPositiveRho(rho));
    }
    if !(u >= 0.0) || !u.is_finite() {
        return Err(Error::NonPositiveParameter { what: "u", value: u });
    }
    if u == 0.0 {
        // ln Gamma(1) = 0 identically; the library routine returns a few
        // ulps of noise there.
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::ln_gamma(rho * u + 1.0))
}

/// Finite-time defect `(1/t) [H(c t) - c H(t)]`, which approaches
/// [`scaling_limit`] as `t` grows.
pub fn scaling_defect(c: f64, t: f64, rho: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NonPositiveParameter { what: "t", value: t });
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::NonPositiveParameter { what: "c", value: c });
    }
    Ok((double_exp_cumulant(c * t, rho)? - c * double_exp_cumulant(t, rho)?) / t)
}

/// Limit of the defect: `rho c ln c`, continuously extended by 0 at c = 0.
pub fn scaling_limit(c: f64, rho: f64) -> f64 {
    if c > 0.0 {
        rho * c * c.ln()
    } else {
        0.0
    }
}
