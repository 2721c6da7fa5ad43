//! Monte-Carlo sweeps over the solvers, written out as CSV rows plus a JSON
//! manifest of per-cell summaries.
//!
//! Powers in a config are in dBm and converted to mW here; nothing past this
//! module sees dBm.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate_channels, rate, sinr_pr, ChannelSet, Geometry, SystemParams, UncertainChannelSet};
use crate::{optimal, robust, subopt};

pub const DEFAULT_TRIALS: usize = 50;
pub const FULL_SCALE_TRIALS: usize = 500;

pub const CSV_HEADER: [&str; 11] = [
    "scheme",
    "sweep_name",
    "sweep_value",
    "trial",
    "seed",
    "R_s",
    "R_p",
    "rho",
    "feasible",
    "status",
    "ms",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RateRegion,
    PowerSweep,
    AntennaSweep,
    LocationSweep,
    Outage,
    RobustPowerSweep,
    RobustLocationSweep,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Optimal,
    Subopt,
    /// One column per entry of `robust_radii`, with `eps_p = eps_s`.
    Robust,
    /// The optimal design without energy transfer from the destinations.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// `P_PR = P_SR` in dBm.
    DestinationPowerDbm,
    /// `P_PR = P_SR` in mW, for sweeps that include zero.
    DestinationPowerMw,
    Antennas,
    /// Horizontal relay-to-destination distance over the primary
    /// transmitter-to-destination distance; the relay moves along `y = 0`.
    DistanceRatio,
    /// Primary rate demand in bps/Hz.
    RateDemand,
    /// Single cell; the value is only a label.
    None,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::DestinationPowerDbm => "destination_power_dbm",
            Self::DestinationPowerMw => "destination_power_mw",
            Self::Antennas => "antennas",
            Self::DistanceRatio => "distance_ratio",
            Self::RateDemand => "rate_demand",
            Self::None => "none",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub m: Option<usize>,
    pub p_pt_dbm: Option<f64>,
    pub p_pr_dbm: Option<f64>,
    pub p_sr_dbm: Option<f64>,
    /// All four noise variances.
    pub noise_dbm: Option<f64>,
    pub xi: Option<f64>,
    pub r_p_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub params: ParamOverrides,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub robust_radii: Vec<f64>,
    /// Fixed channels used for every trial instead of random draws.
    #[serde(default)]
    pub channels: Option<ChannelSet>,
    /// Record wall time per row; off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed of a trial: the splitmix64 output at state
/// `master + (trial + 1) * 0x9E3779B97F4A7C15`. Independent of scheme and
/// sweep value, so every cell sees the same draws.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    mix(master.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind as K;
        use SweepVariable as V;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep.values.is_empty() || self.sweep.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be a nonempty list of finite numbers".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        let allowed: &[V] = match self.kind {
            K::RateRegion => &[V::RateDemand],
            K::PowerSweep | K::Outage | K::RobustPowerSweep => &[V::DestinationPowerDbm, V::DestinationPowerMw],
            K::AntennaSweep => &[V::Antennas],
            K::LocationSweep | K::RobustLocationSweep => &[V::DistanceRatio],
            K::Single => &[V::None],
        };
        if !allowed.contains(&self.sweep.variable) {
            return bad(format!("{:?} cannot sweep {}", self.kind, self.sweep.variable.name()));
        }
        if self.schemes.contains(&Scheme::Robust)
            && (self.robust_radii.is_empty() || self.robust_radii.iter().any(|e| !(*e >= 0.0 && e.is_finite())))
        {
            return bad("robust scheme needs a list of nonnegative radii".into());
        }
        if self.sweep.variable == V::Antennas && self.sweep.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return bad("antenna counts must be positive integers".into());
        }
        if self.sweep.variable == V::DestinationPowerMw && self.sweep.values.iter().any(|v| *v < 0.0) {
            return bad("powers must be nonnegative".into());
        }
        if self.sweep.variable == V::DistanceRatio && self.geometry.pr[0] != self.geometry.sr[0] {
            return bad("distance sweeps need both destinations at the same x".into());
        }
        self.geometry.validate()?;
        for v in &self.sweep.values {
            let (p, g) = self.cell(*v);
            p.validate()?;
            g.validate()?;
            if let Some(ch) = &self.channels {
                ch.validate(p.m)?;
            }
        }
        Ok(())
    }

    pub fn base_params(&self) -> SystemParams {
        let o = &self.params;
        let d = SystemParams::default();
        let noise = o.noise_dbm.map(dbm_to_mw);
        SystemParams {
            m: o.m.unwrap_or(d.m),
            p_pt: o.p_pt_dbm.map_or(d.p_pt, dbm_to_mw),
            p_pr: o.p_pr_dbm.map_or(d.p_pr, dbm_to_mw),
            p_sr: o.p_sr_dbm.map_or(d.p_sr, dbm_to_mw),
            sigma_r2: noise.unwrap_or(d.sigma_r2),
            sigma_c2: noise.unwrap_or(d.sigma_c2),
            sigma_p2: noise.unwrap_or(d.sigma_p2),
            sigma_s2: noise.unwrap_or(d.sigma_s2),
            xi: o.xi.unwrap_or(d.xi),
            r_p_min: o.r_p_min.unwrap_or(d.r_p_min),
        }
    }

    /// Parameters and geometry of one sweep cell.
    pub fn cell(&self, value: f64) -> (SystemParams, Geometry) {
        let mut p = self.base_params();
        let mut g = self.geometry.clone();
        match self.sweep.variable {
            SweepVariable::DestinationPowerDbm => {
                p.p_pr = dbm_to_mw(value);
                p.p_sr = p.p_pr;
            }
            SweepVariable::DestinationPowerMw => {
                p.p_pr = value;
                p.p_sr = value;
            }
            SweepVariable::Antennas => p.m = value as usize,
            SweepVariable::DistanceRatio => {
                let xd = g.pr[0];
                g.st = [xd - value * (xd - g.pt[0]), 0.0];
            }
            SweepVariable::RateDemand => p.r_p_min = value,
            SweepVariable::None => {}
        }
        (p, g)
    }

    /// Scheme labels in output order.
    pub fn scheme_labels(&self) -> Vec<(String, Scheme, f64)> {
        let mut out = Vec::new();
        for &s in &self.schemes {
            match s {
                Scheme::Optimal => out.push(("optimal".to_string(), s, 0.0)),
                Scheme::Subopt => out.push(("subopt".to_string(), s, 0.0)),
                Scheme::Baseline => out.push(("baseline".to_string(), s, 0.0)),
                Scheme::Robust => {
                    for &e in &self.robust_radii {
                        out.push((format!("robust-{e}"), s, e));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub scheme: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub rate_s: f64,
    pub rate_p: f64,
    pub rho: f64,
    pub feasible: bool,
    pub status: String,
    pub ms: u64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
}

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::Infeasible => "infeasible",
        Error::ZfInfeasible(_) => "zf_infeasible",
        Error::TrivialZeroRate => "zero_rate",
        Error::DegenerateChannels(_) | Error::NearlyCollinearChannels => "degenerate",
        Error::NumericalFailure(_) => "numerical_failure",
        _ => "error",
    }
}

/// `(R_s, R_p, rho, status)` of one scheme on one channel draw.
fn run_scheme(scheme: Scheme, eps: f64, p: &SystemParams, ch: &ChannelSet) -> Result<(f64, f64, f64, &'static str)> {
    let from_opt = |r: optimal::OptimalResult| {
        let status = if r.sdp_rank_report.repaired { "repaired" } else { "ok" };
        (r.rate_s, r.rate_p_achieved, r.rho_star, status)
    };
    match scheme {
        Scheme::Optimal => optimal::solve(p, ch).map(from_opt),
        Scheme::Subopt => subopt::solve(p, ch).map(from_opt),
        Scheme::Baseline => {
            let b = SystemParams {
                p_pr: 0.0,
                p_sr: 0.0,
                ..p.clone()
            };
            optimal::solve(&b, ch).map(from_opt)
        }
        Scheme::Robust => {
            let r = robust::solve(p, &UncertainChannelSet::new(ch, eps, eps))?;
            let status = if r.rank_one { "ok" } else { "randomized" };
            Ok((r.worst_case_rate_s, rate(sinr_pr(p, ch, &r.design)), r.rho_star, status))
        }
    }
}

/// Runs every (scheme, sweep value, trial) cell. Solver failures become rows
/// with `feasible = false`; only an invalid config is an error.
pub fn run(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let labels = config.scheme_labels();
    let name = config.sweep.variable.name().to_string();
    let mut rows = Vec::new();
    for (li, (label, scheme, eps)) in labels.iter().enumerate() {
        for (vi, &value) in config.sweep.values.iter().enumerate() {
            let (p, geom) = config.cell(value);
            for trial in 0..config.trials {
                let seed = trial_seed(config.master_seed, trial);
                let ch = match &config.channels {
                    Some(ch) => ch.clone(),
                    None => generate_channels(&geom, &p, seed),
                };
                let start = Instant::now();
                let out = run_scheme(*scheme, *eps, &p, &ch);
                let ms = if config.record_timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                };
                let (rate_s, rate_p, rho, feasible, status) = match out {
                    Ok((s, r, rho, st)) => (s, r, rho, true, st),
                    Err(e) => (0.0, 0.0, 0.0, false, status_of(&e)),
                };
                rows.push((
                    (li, vi, trial),
                    Row {
                        scheme: label.clone(),
                        sweep_name: name.clone(),
                        sweep_value: value,
                        trial,
                        seed,
                        rate_s,
                        rate_p,
                        rho,
                        feasible,
                        status: status.to_string(),
                        ms,
                    },
                ));
            }
        }
    }
    rows.sort_by_key(|(k, _)| *k);
    Ok(SweepResult {
        config: config.clone(),
        rows: rows.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Nine significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

fn round9(x: f64) -> f64 {
    fmt_num(x).parse().unwrap_or(x)
}

/// Summary of one (scheme, sweep value) cell. Infeasible trials count as
/// rate 0 in `mean_rate_s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub scheme: String,
    pub sweep_value: f64,
    pub trials: usize,
    pub feasible: usize,
    pub outage: f64,
    pub mean_rate_s: f64,
    pub stderr_rate_s: f64,
    pub mean_rate_s_feasible: Option<f64>,
    pub mean_rate_p: f64,
}

impl SweepResult {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        let mut start = 0;
        while start < self.rows.len() {
            let first = &self.rows[start];
            let end = start
                + self.rows[start..]
                    .iter()
                    .take_while(|r| r.scheme == first.scheme && r.sweep_value == first.sweep_value)
                    .count();
            let group = &self.rows[start..end];
            let n = group.len() as f64;
            let mean = group.iter().map(|r| r.rate_s).sum::<f64>() / n;
            let var = if group.len() > 1 {
                group.iter().map(|r| (r.rate_s - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let feas: Vec<&Row> = group.iter().filter(|r| r.feasible).collect();
            out.push(Cell {
                scheme: first.scheme.clone(),
                sweep_value: first.sweep_value,
                trials: group.len(),
                feasible: feas.len(),
                outage: round9(1.0 - feas.len() as f64 / n),
                mean_rate_s: round9(mean),
                stderr_rate_s: round9((var / n).sqrt()),
                mean_rate_s_feasible: (!feas.is_empty())
                    .then(|| round9(feas.iter().map(|r| r.rate_s).sum::<f64>() / feas.len() as f64)),
                mean_rate_p: round9(group.iter().map(|r| r.rate_p).sum::<f64>() / n),
            });
            start = end;
        }
        out
    }

    /// Mean `R_s` of schemes `a` and `b` at one sweep value over the trials
    /// both solved, with the number of such trials.
    pub fn mutual_means(&self, a: &str, b: &str, value: f64) -> (f64, f64, usize) {
        let pick = |s: &str| -> Vec<&Row> {
            self.rows
                .iter()
                .filter(|r| r.scheme == s && r.sweep_value == value)
                .collect()
        };
        let (ra, rb) = (pick(a), pick(b));
        let (mut sa, mut sb, mut n) = (0.0, 0.0, 0);
        for x in &ra {
            if let Some(y) = rb.iter().find(|y| y.trial == x.trial) {
                if x.feasible && y.feasible {
                    sa += x.rate_s;
                    sb += y.rate_s;
                    n += 1;
                }
            }
        }
        if n == 0 {
            return (0.0, 0.0, 0);
        }
        (sa / n as f64, sb / n as f64, n)
    }

    pub fn csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.scheme.clone(),
                r.sweep_name.clone(),
                fmt_num(r.sweep_value),
                r.trial.to_string(),
                r.seed.to_string(),
                fmt_num(r.rate_s),
                fmt_num(r.rate_p),
                fmt_num(r.rho),
                r.feasible.to_string(),
                r.status.clone(),
                r.ms.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn manifest_json(&self) -> String {
        let m = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "csv_columns": CSV_HEADER,
            "seed_derivation": "splitmix64(master_seed + (trial + 1) * 0x9E3779B97F4A7C15)",
            "config": self.config,
            "cells": self.cells(),
        });
        serde_json::to_string_pretty(&m).expect("manifest serialization")
    }

    /// Writes `results.csv` and `manifest.json` into `dir`, creating it.
    pub fn emit(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let csv_path = dir.join("results.csv");
        let man_path = dir.join("manifest.json");
        std::fs::write(&csv_path, self.csv_string()).map_err(|e| io_error(&csv_path, e))?;
        std::fs::write(&man_path, self.manifest_json()).map_err(|e| io_error(&man_path, e))?;
        Ok((csv_path, man_path))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(text)
    }

    #[test]
    fn seeds_differ_per_trial_and_ignore_schemes() {
        let a: Vec<u64> = (0..100).map(|t| trial_seed(7, t)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e =
            config(r#"{"kind":"single","sweep":{"variable":"none","values":[0]},"schemes":["optimal"],"colour":1}"#);
        assert!(matches!(e, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kind_and_variable_must_agree() {
        let e = config(r#"{"kind":"power_sweep","sweep":{"variable":"antennas","values":[3]},"schemes":["optimal"]}"#);
        assert!(matches!(e, Err(Error::InvalidInput(_))));
        let e = config(
            r#"{"kind":"robust_power_sweep","sweep":{"variable":"destination_power_dbm","values":[30]},"schemes":["robust"]}"#,
        );
        assert!(matches!(e, Err(Error::InvalidInput(_))), "robust without radii");
    }

    #[test]
    fn dbm_converts_at_the_boundary() {
        let c = config(r#"{"kind":"power_sweep","params":{"p_pt_dbm":20,"noise_dbm":0},"sweep":{"variable":"destination_power_dbm","values":[40]},"schemes":["optimal"]}"#).unwrap();
        assert_eq!(c.trials, DEFAULT_TRIALS);
        let (p, _) = c.cell(40.0);
        assert!((p.p_pt - 100.0).abs() < 1e-12 && (p.p_pr - 1e4).abs() < 1e-9 && p.p_pr == p.p_sr);
        assert!((p.sigma_s2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_ratio_places_relay_on_axis() {
        let c = config(
            r#"{"kind":"location_sweep","sweep":{"variable":"distance_ratio","values":[0.5]},"schemes":["optimal"]}"#,
        )
        .unwrap();
        assert_eq!(c.cell(0.5).1.st, [0.0, 0.0]);
        assert_eq!(c.cell(0.2).1.st, [3.0, 0.0]);
    }

    #[test]
    fn robust_radii_expand_into_labels() {
        let c = config(r#"{"kind":"robust_power_sweep","sweep":{"variable":"destination_power_dbm","values":[30]},"schemes":["optimal","robust"],"robust_radii":[0.01,0.05]}"#).unwrap();
        let l: Vec<String> = c.scheme_labels().into_iter().map(|x| x.0).collect();
        assert_eq!(l, ["optimal", "robust-0.01", "robust-0.05"]);
    }

    #[test]
    fn cells_summarize_groups() {
        let c =
            config(r#"{"kind":"single","sweep":{"variable":"none","values":[0]},"schemes":["optimal"],"trials":2}"#)
                .unwrap();
        let row = |t: usize, s: f64, f: bool| Row {
            scheme: "optimal".into(),
            sweep_name: "none".into(),
            sweep_value: 0.0,
            trial: t,
            seed: 0,
            rate_s: s,
            rate_p: 3.0,
            rho: 0.5,
            feasible: f,
            status: "ok".into(),
            ms: 0,
        };
        let r = SweepResult {
            config: c,
            rows: vec![row(0, 2.0, true), row(1, 0.0, false)],
        };
        let cells = r.cells();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].mean_rate_s, 1.0);
        assert_eq!(cells[0].mean_rate_s_feasible, Some(2.0));
        assert_eq!(cells[0].outage, 0.5);
        assert_eq!(cells[0].stderr_rate_s, 1.0);
    }

    #[test]
    fn empty_result_writes_header_only() {
        let c = config(r#"{"kind":"single","sweep":{"variable":"none","values":[0]},"schemes":["optimal"]}"#).unwrap();
        let r = SweepResult {
            config: c,
            rows: vec![],
        };
        assert_eq!(r.csv_string(), format!("{}\n", CSV_HEADER.join(",")));
        assert!(r.cells().is_empty());
    }
}
