//! Experiment records: every artifact the toolkit writes starts with a
//! `#`-prefixed key=value header carrying the tool version and the full
//! parameter set, so a result file is reproducible from its own first
//! lines.  Headers round-trip exactly, and rendering is deterministic --
//! no timestamps, no locale formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::simulate::{DepthProfile, MassEstimate, SurvivalEstimate, UnitWalkRecord};
use crate::sojourn::LegendreTable;
use crate::solver::{ChiCurve, EigenResult, FScanReport, MinimiserDiagnostics, OptResult};
use crate::Result;

pub const TOOL_NAME: &str = "pamtree";

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Parameters of one invocation, as written into artifact headers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: String,
    pub d: u32,
    pub radius: u32,
    pub rho: Option<f64>,
    pub rho_grid: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub n: Option<u64>,
    pub seed: u64,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(command: &str, d: u32, radius: u32, seed: u64) -> Self {
        ExperimentConfig {
            command: command.to_string(),
            d,
            radius,
            rho: None,
            rho_grid: None,
            t: None,
            n: None,
            seed,
            tol: None,
        }
    }

    /// Renders the header block; key order is fixed so identical configs
    /// produce identical bytes.
    pub fn header(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool={} version={}", TOOL_NAME, tool_version());
        let _ = writeln!(s, "# command={}", self.command);
        let _ = writeln!(s, "# d={}", self.d);
        let _ = writeln!(s, "# radius={}", self.radius);
        if let Some(rho) = self.rho {
            let _ = writeln!(s, "# rho={rho}");
        }
        if let Some(grid) = &self.rho_grid {
            let joined: Vec<String> = grid.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "# rho_grid={}", joined.join(","));
        }
        if let Some(t) = self.t {
            let _ = writeln!(s, "# t={t}");
        }
        if let Some(n) = self.n {
            let _ = writeln!(s, "# n={n}");
        }
        if let Some(tol) = self.tol {
            let _ = writeln!(s, "# tol={tol}");
        }
        let _ = writeln!(s, "# seed={}", self.seed);
        s
    }

    /// Reads an ExperimentConfig back from the leading `#` lines of an
    /// artifact; inverse of [`header`](Self::header).
    pub fn parse_header(text: &str) -> Result<ExperimentConfig> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            for token in rest.split_whitespace() {
                let (key, value) = token.split_once('=').ok_or_else(|| Error::BadHeader {
                    line: line.to_string(),
                    detail: format!("token '{token}' is not key=value"),
                })?;
                map.insert(key.to_string(), value.to_string());
            }
        }
        fn want<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
            map.get(key).map(|s| s.as_str()).ok_or_else(|| Error::BadHeader {
                line: "<header>".to_string(),
                detail: format!("missing key '{key}'"),
            })
        }
        fn num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
            raw.parse().map_err(|_| Error::BadHeader {
                line: format!("{key}={raw}"),
                detail: format!("cannot parse value for '{key}'"),
            })
        }
        let tool = want(&map, "tool")?;
        if tool != TOOL_NAME {
            return Err(Error::BadHeader {
                line: format!("tool={tool}"),
                detail: format!("expected tool={TOOL_NAME}"),
            });
        }
        let rho_grid = match map.get("rho_grid") {
            Some(raw) => Some(
                raw.split(',')
                    .map(|v| num::<f64>("rho_grid", v))
                    .collect::<Result<Vec<f64>>>()?,
            ),
            None => None,
        };
        Ok(ExperimentConfig {
            command: want(&map, "command")?.to_string(),
            d: num("d", want(&map, "d")?)?,
            radius: num("radius", want(&map, "radius")?)?,
            rho: map.get("rho").map(|v| num::<f64>("rho", v)).transpose()?,
            rho_grid,
            t: map.get("t").map(|v| num::<f64>("t", v)).transpose()?,
            n: map.get("n").map(|v| num::<u64>("n", v)).transpose()?,
            seed: num("seed", want(&map, "seed")?)?,
            tol: map.get("tol").map(|v| num::<f64>("tol", v)).transpose()?,
        })
    }
}

/// Parses a numeric grid: a single value, a comma list, or
/// `start:stop:linN` / `start:stop:logN` with both endpoints included.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |detail: String| Error::BadGrid { spec: spec.to_string(), detail };
    let s = spec.trim();
    if s.is_empty() {
        return Err(bad("empty grid spec".into()));
    }
    let parse_num = |raw: &str| -> Result<f64> {
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| bad(format!("'{raw}' is not a number")))?;
        if !v.is_finite() {
            return Err(bad(format!("'{raw}' is not finite")));
        }
        Ok(v)
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => {
            if s.contains(',') {
                s.split(',').map(parse_num).collect()
            } else {
                Ok(vec![parse_num(s)?])
            }
        }
        3 => {
            let start = parse_num(parts[0])?;
            let stop = parse_num(parts[1])?;
            if !(stop > start) {
                return Err(bad(format!("stop {stop} must exceed start {start}")));
            }
            let (log, count_raw) = if let Some(c) = parts[2].strip_prefix("lin") {
                (false, c)
            } else if let Some(c) = parts[2].strip_prefix("log") {
                (true, c)
            } else {
                return Err(bad("third field must be linN or logN".into()));
            };
            let count: usize = count_raw
                .parse()
                .map_err(|_| bad(format!("'{count_raw}' is not a point count")))?;
            if count < 2 {
                return Err(bad("need at least two grid points".into()));
            }
            if log && !(start > 0.0) {
                return Err(bad("log grids need a positive start".into()));
            }
            let mut grid = Vec::with_capacity(count);
            for i in 0..count {
                let f = i as f64 / (count - 1) as f64;
                let v = if i == 0 {
                    start
                } else if i == count - 1 {
                    stop
                } else if log {
                    (start.ln() + f * (stop.ln() - start.ln())).exp()
                } else {
                    start + f * (stop - start)
                };
                grid.push(v);
            }
            Ok(grid)
        }
        _ => Err(bad("expected VALUE, V1,V2,..., or start:stop:linN|logN".into())),
    }
}

fn bool_cell(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// `rho,value,grad_norm,iterations,converged,shell_0..shell_R` rows.
pub fn render_chi_scan(config: &ExperimentConfig, curve: &ChiCurve) -> String {
    let mut s = config.header();
    let shells = curve.points.first().map_or(0, |p| p.shell_masses.len());
    let _ = write!(s, "rho,value,grad_norm,iterations,converged");
    for r in 0..shells {
        let _ = write!(s, ",shell_{r}");
    }
    let _ = writeln!(s, ",monotone_ok,lipschitz_ok");
    for p in &curve.points {
        let _ = write!(
            s,
            "{},{},{},{},{}",
            p.rho, p.value, p.grad_norm, p.iterations,
            bool_cell(p.converged)
        );
        for m in &p.shell_masses {
            let _ = write!(s, ",{m}");
        }
        let _ = writeln!(s, ",{},{}", bool_cell(curve.monotone_ok), bool_cell(curve.lipschitz_ok));
    }
    s
}

/// Single-point solve summary followed by shell masses.
pub fn render_solve(config: &ExperimentConfig, result: &OptResult, shells: &[f64]) -> String {
    let mut s = config.header();
    let _ = write!(s, "value,grad_norm,iterations,restarts,converged");
    for r in 0..shells.len() {
        let _ = write!(s, ",shell_{r}");
    }
    let _ = writeln!(s);
    let _ = write!(
        s,
        "{},{},{},{},{}",
        result.value, result.grad_norm, result.iterations, result.restarts_used,
        bool_cell(result.converged)
    );
    for m in shells {
        let _ = write!(s, ",{m}");
    }
    let _ = writeln!(s);
    s
}

pub fn render_eigen(config: &ExperimentConfig, eig: &EigenResult) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "value,iterations,residual");
    let _ = writeln!(s, "{},{},{}", eig.value, eig.iterations, eig.residual);
    s
}

pub fn render_legendre(config: &ExperimentConfig, table: &LegendreTable) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "# alpha_c={} theta_c={}", table.alpha_c, table.theta_c);
    let _ = writeln!(s, "alpha,value,theta,mu");
    for p in &table.points {
        let _ = writeln!(s, "{},{},{},{}", p.alpha, p.value, p.theta, p.mu);
    }
    s
}

/// `k,p2k,cumulative` rows for the first-return distribution.
pub fn render_pmf(config: &ExperimentConfig, pmf: &[f64]) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "k,p2k,cumulative");
    let mut cum = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        cum += p;
        let _ = writeln!(s, "{},{},{}", i + 1, p, cum);
    }
    s
}

pub fn render_samples(config: &ExperimentConfig, samples: &[f64]) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "sample");
    for v in samples {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn render_survival(config: &ExperimentConfig, est: &SurvivalEstimate) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "exponent,ci_lo,ci_hi,survivors,n,t");
    let _ = writeln!(
        s,
        "{},{},{},{},{},{}",
        est.exponent, est.ci_lo, est.ci_hi, est.survivors, est.n, est.t
    );
    s
}

pub fn render_mass(config: &ExperimentConfig, est: &MassEstimate) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "exponent,ci_lo,ci_hi,survivors,n,t,rho");
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{}",
        est.exponent, est.ci_lo, est.ci_hi, est.survivors, est.n, est.t, est.rho
    );
    s
}

/// `state,occupation,se,stationary` rows comparing the simulated depth
/// profile with the stationary law.
pub fn render_depth_profile(
    config: &ExperimentConfig,
    profile: &DepthProfile,
    stationary: &[f64],
) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "# batches={} jumps={}", profile.batches, profile.jumps);
    let _ = writeln!(s, "state,occupation,se,stationary");
    for i in 0..profile.occupation.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            i,
            profile.occupation[i],
            profile.se[i],
            stationary.get(i).copied().unwrap_or(f64::NAN)
        );
    }
    s
}

pub fn render_unit_walk(config: &ExperimentConfig, rec: &UnitWalkRecord, boundary: &[bool]) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "# boundary_fraction={} jumps={}", rec.boundary_fraction, rec.jumps);
    let _ = writeln!(s, "vertex,occupation,is_boundary");
    for (v, &occ) in rec.occupation.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", v, occ, bool_cell(boundary[v]));
    }
    s
}

pub fn render_diagnostics(config: &ExperimentConfig, diag: &MinimiserDiagnostics) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "metric,value");
    let _ = writeln!(s, "argmax,{}", diag.argmax);
    let _ = writeln!(s, "monotone_after_recentering,{}", bool_cell(diag.monotone_after_recentering));
    let _ = writeln!(s, "worst_monotonicity_gap,{}", diag.worst_monotonicity_gap);
    let _ = writeln!(s, "strictly_positive,{}", bool_cell(diag.strictly_positive));
    let _ = writeln!(s, "min_value,{}", diag.min_value);
    let _ = writeln!(s, "tail_sum,{}", diag.tail_sum);
    let _ = writeln!(s, "tail_bound,{}", diag.tail_bound);
    let _ = writeln!(s, "tail_ok,{}", bool_cell(diag.tail_ok));
    for (r, m) in diag.shell_masses.iter().enumerate() {
        let _ = writeln!(s, "shell_{r},{m}");
    }
    s
}

pub fn render_f_scan(config: &ExperimentConfig, rep: &FScanReport) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "metric,value");
    let _ = writeln!(s, "slope_at_infinity,{}", rep.slope_at_infinity);
    let _ = writeln!(s, "slope_below_one,{}", bool_cell(rep.slope_below_one));
    let _ = writeln!(s, "theta_c,{}", rep.theta_c);
    let _ = writeln!(
        s,
        "minimal_c_unit,{}",
        rep.minimal_c_unit.map_or("none".to_string(), |c| c.to_string())
    );
    let _ = writeln!(
        s,
        "minimal_c_theta,{}",
        rep.minimal_c_theta.map_or("none".to_string(), |c| c.to_string())
    );
    let _ = writeln!(s, "max_unit_deficit,{}", rep.max_unit_deficit);
    let _ = writeln!(s, "max_theta_deficit,{}", rep.max_theta_deficit);
    let _ = writeln!(s, "witness_w,{}", rep.witness_w);
    s
}

/// `c,defect,limit,abs_error` rows for the double-exponential scaling
/// property at a fixed time.
pub fn render_scaling(config: &ExperimentConfig, rows: &[(f64, f64, f64)]) -> String {
    let mut s = config.header();
    let _ = writeln!(s, "c,defect,limit,abs_error");
    for &(c, defect, limit) in rows {
        let _ = writeln!(s, "{},{},{},{}", c, defect, limit, (defect - limit).abs());
    }
    s
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, content)?;
    Ok(())
}
