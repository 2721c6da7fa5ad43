//! Quick self-checks behind `dwpt verify`. Each suite runs in seconds on
//! release builds and reports one line per check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::experiment::{self, ExperimentConfig};
use crate::mathcore::{c, commutation_matrix, outer, vec_of, CMatrix, CVector};
use crate::model::{
    generate_channels, harvested_power, power_margin, sinr_pr, sinr_sr, st_transmit_power, ChannelSet, Geometry,
    SystemParams, UncertainChannelSet,
};
use crate::oracle::{self, OracleConfig};
use crate::subopt::{constants, zf_receive_filter};
use crate::{optimal, robust, subopt};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Invariants,
    Oracle,
    Robust,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

pub fn run(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Invariants => vec![
            operator_identities(),
            subopt_closed_form(),
            optimal_constraints(),
            sweep_determinism(),
            zero_power_baseline(),
        ],
        Suite::Oracle => vec![oracle_agreement(), gradient_agreement()],
        Suite::Robust => robust_checks(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn cn_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMatrix {
    CMatrix::from_fn(r, k, |_, _| {
        let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        c(a, b)
    })
}

fn feasible(p: &SystemParams, n: usize) -> Vec<(u64, ChannelSet, optimal::OptimalResult)> {
    (0..200u64)
        .filter_map(|seed| {
            let ch = generate_channels(&Geometry::default(), p, seed);
            optimal::solve(p, &ch).ok().map(|r| (seed, ch, r))
        })
        .take(n)
        .collect()
}

fn operator_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let m = 2 + trial % 4;
        let a = cn_matrix(&mut rng, m, m);
        let k = commutation_matrix(m, m);
        worst = worst.max((&k * vec_of(&a) - vec_of(&a.transpose())).norm());
        let g: CVector = cn_matrix(&mut rng, m, 1).column(0).into_owned();
        let h: CVector = cn_matrix(&mut rng, m, 1).column(0).into_owned();
        let ops = robust::relay_operators(m, &g, &h);
        let v = vec_of(&a);
        worst = worst.max((&ops.left_mul * &v - &a * &g).norm());
        worst = worst.max((&ops.right_mul * &v - a.transpose() * &h).norm());
        worst = worst.max((ops.gram_left(&outer(&v)) - &a * a.adjoint()).norm());
    }
    Check::new(
        "operator_identities",
        worst <= 1e-12,
        format!("max residual {worst:.2e}"),
    )
}

fn subopt_closed_form() -> Check {
    let p = SystemParams::default();
    let mut n = 0;
    let mut bad = Vec::new();
    for seed in 0..30u64 {
        let ch = generate_channels(&Geometry::default(), &p, seed);
        let Ok(r) = subopt::solve(&p, &ch) else { continue };
        n += 1;
        let f_r = zf_receive_filter(&ch).expect("solved instances have a filter");
        let Ok((d, dp)) = subopt::solve_at(&p, &ch, &f_r, r.rho_star) else {
            bad.push(seed);
            continue;
        };
        let k = constants(&p, &ch, &f_r, r.rho_star);
        let dual = p.sigma_p2 * dp.lambda1 + p.sigma_s2 * dp.lambda2;
        let ok = rel(dual, k.p_eh) < 1e-8
            && rel(sinr_pr(&p, &ch, &d), p.gamma_p_min()) < 1e-7
            && rel(st_transmit_power(&p, &ch, &d), harvested_power(&p, &ch, d.rho)) < 1e-7
            && rel(dp.gamma_st, sinr_sr(&p, &ch, &d)) < 1e-6;
        if !ok {
            bad.push(seed);
        }
    }
    Check::new(
        "subopt_closed_form",
        n > 0 && bad.is_empty(),
        format!("{n} instances, failing seeds {bad:?}"),
    )
}

fn optimal_constraints() -> Check {
    let p = SystemParams::default();
    let mut bad = Vec::new();
    let found = feasible(&p, 5);
    for (seed, ch, r) in &found {
        let d = &r.design;
        let ok = sinr_pr(&p, ch, d) >= p.gamma_p_min() * (1.0 - 1e-6)
            && power_margin(&p, ch, d) <= 1e-6 * harvested_power(&p, ch, d.rho)
            && (r.rate_s - crate::model::rate(sinr_sr(&p, ch, d))).abs() <= 1e-9;
        if !ok {
            bad.push(*seed);
        }
    }
    Check::new(
        "optimal_constraints",
        found.len() == 5 && bad.is_empty(),
        format!("failing seeds {bad:?}"),
    )
}

fn tiny_config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).expect("built-in config is valid")
}

fn sweep_determinism() -> Check {
    let cfg = tiny_config(
        r#"{"kind":"power_sweep","sweep":{"variable":"destination_power_dbm","values":[20,30]},"schemes":["optimal","subopt"],"trials":3,"master_seed":5}"#,
    );
    let a = experiment::run(&cfg).map(|r| r.csv_string());
    let b = experiment::run(&cfg).map(|r| r.csv_string());
    let ok = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);
    Check::new("sweep_determinism", ok, "two runs of the same config")
}

fn zero_power_baseline() -> Check {
    let cfg = tiny_config(
        r#"{"kind":"power_sweep","sweep":{"variable":"destination_power_mw","values":[0]},"schemes":["optimal","baseline"],"trials":4}"#,
    );
    let Ok(res) = experiment::run(&cfg) else {
        return Check::new("zero_power_baseline", false, "run failed");
    };
    let (opt, base) = res.rows.split_at(4);
    let ok = opt
        .iter()
        .zip(base)
        .all(|(a, b)| a.feasible == b.feasible && a.rate_s == b.rate_s && a.rate_p == b.rate_p);
    Check::new("zero_power_baseline", ok, "no destination power equals the baseline")
}

fn oracle_agreement() -> Check {
    let p = SystemParams {
        m: 2,
        ..SystemParams::default()
    };
    let cfg = OracleConfig {
        samples: 10_000,
        polish_steps: 50,
        ..OracleConfig::default()
    };
    let mut lines = Vec::new();
    let mut ok = true;
    let found = feasible(&p, 3);
    for (seed, ch, r) in &found {
        let (_, o) = oracle::random_search_design(&p, ch, &cfg);
        // The oracle is a lower bound; it should come close but never beat the solver.
        let pass = o <= r.rate_s * 1.01 + 1e-9 && o >= r.rate_s * 0.99;
        ok &= pass;
        lines.push(format!("seed {seed}: {:.4} vs {:.4}", r.rate_s, o));
    }
    Check::new("oracle_agreement", ok && found.len() == 3, lines.join("; "))
}

fn gradient_agreement() -> Check {
    let p = SystemParams::default();
    let delta = 1e-4;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (_, ch, _) in feasible(&p, 3) {
        let Ok(rb) = optimal::reduce_basis(&ch) else {
            return Check::new("gradient_agreement", false, "basis");
        };
        let Ok((lo, hi)) = optimal::feasible_rho_interval(&p, &ch, &rb) else {
            return Check::new("gradient_agreement", false, "interval");
        };
        let rho = lo + 0.3 * (hi - lo);
        let (Ok(s), Ok(_)) = (
            optimal::solve_fixed_rho(&p, &rb, rho),
            optimal::objective_at(&p, &rb, rho),
        ) else {
            return Check::new("gradient_agreement", false, "fixed-rho solve");
        };
        let g = optimal::rho_gradient(&s.coeffs, &s.a_hat, s.q, s.theta, p.gamma_p_min());
        let fd = oracle::finite_diff(|x| optimal::objective_at(&p, &rb, x).unwrap_or(f64::NAN), rho, delta);
        let err = (g - fd).abs();
        ok &= err <= 1e-3f64.max(0.01 * fd.abs());
        worst = worst.max(err);
    }
    Check::new("gradient_agreement", ok, format!("max abs error {worst:.2e}"))
}

fn robust_checks() -> Vec<Check> {
    let p = SystemParams {
        m: 3,
        ..SystemParams::default()
    };
    let probe = OracleConfig {
        samples: 2_000,
        polish_steps: 0,
        ..OracleConfig::default()
    };
    let mut sound = true;
    let mut monotone = true;
    let mut detail = Vec::new();
    for seed in [2u64, 10] {
        let ch = generate_channels(&Geometry::default(), &p, seed);
        let mut last = f64::INFINITY;
        for eps in [0.0, 0.005, 0.01] {
            let uc = UncertainChannelSet::new(&ch, eps, eps);
            let r = match robust::solve(&p, &uc) {
                Ok(r) => r,
                Err(_) => {
                    last = 0.0;
                    continue;
                }
            };
            monotone &= r.worst_case_rate_s <= last + 1e-6;
            last = r.worst_case_rate_s;
            if eps > 0.0 {
                let w = oracle::worst_case_probe(&p, &uc, &r.design, &probe);
                let pass = w.min_sinr_sr >= r.t_star * 0.98 && w.min_sinr_pr >= p.gamma_p_min() * 0.98;
                sound &= pass;
                detail.push(format!(
                    "seed {seed} eps {eps}: sr {:.3}/{:.3}",
                    w.min_sinr_sr, r.t_star
                ));
            }
        }
    }
    vec![
        Check::new("robust_soundness", sound && !detail.is_empty(), detail.join("; ")),
        Check::new("robust_monotone", monotone, "worst-case rate over growing radii"),
    ]
}
