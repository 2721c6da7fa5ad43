//! Brute-force and sampling validators. They optimize through the model
//! evaluators only and share no code with the solvers they check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::mathcore::{c, CMatrix, CVector};
use crate::model::{
    harvested_power, rate, robust_power_margin, robust_sinrs, sample_uncertainty_rng, sinr_pr, sinr_sr, BallSampling,
    ChannelSet, Design, SystemParams, UncertainChannelSet,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub samples: usize,
    /// Polish rounds (one round perturbs every coordinate once).
    pub polish_steps: usize,
    pub seed: u64,
    /// Relative slack on the primary SINR demand.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            polish_steps: 200,
            seed: 0,
            tolerance: 1e-6,
        }
    }
}

pub const RHO_GRID: usize = 32;

pub fn rho_grid() -> Vec<f64> {
    (0..RHO_GRID)
        .map(|k| 1e-4 + (1.0 - 2e-4) * k as f64 / (RHO_GRID - 1) as f64)
        .collect()
}

/// Unit-norm directions and a ratio; powers are chosen by [`power_split`].
#[derive(Clone, Debug)]
struct Candidate {
    f: CMatrix,
    w: CVector,
    rho: f64,
}

fn cn(rng: &mut ChaCha8Rng) -> crate::mathcore::C64 {
    c(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

fn normalize_m(m: &mut CMatrix) {
    let n = m.norm();
    if n > 0.0 {
        *m /= c(n, 0.0);
    }
}

fn normalize_v(v: &mut CVector) {
    let n = v.norm();
    if n > 0.0 {
        *v /= c(n, 0.0);
    }
}

/// Best powers `(p_f, p_w)` on the budget boundary for fixed directions: the
/// smallest relay power meeting the primary demand, the rest to `w`.
fn power_split(p: &SystemParams, ch: &ChannelSet, cand: &Candidate) -> Option<Design> {
    let rho = cand.rho;
    let budget = harvested_power(p, ch, rho);
    let noise = rho * p.sigma_r2 + p.sigma_c2;
    let f = &cand.f;
    let kappa = rho
        * (p.p_pt * (f * &ch.g).norm_squared()
            + p.p_pr * (f * &ch.h_p).norm_squared()
            + p.p_sr * (f * &ch.h_s).norm_squared())
        + noise * f.norm_squared();
    let hpf = ch.h_p.adjoint() * f;
    let a = rho * p.p_pt * (&hpf * &ch.g)[0].norm_sqr();
    let b = rho * p.p_sr * (&hpf * &ch.h_s)[0].norm_sqr() + noise * hpf.norm_squared();
    let cw = ch.h_p.dotc(&cand.w).norm_sqr();
    let gamma = p.gamma_p_min();
    let p_f = if gamma == 0.0 {
        0.0
    } else {
        let den = a - gamma * b + gamma * kappa * cw;
        if !(den > 0.0) {
            return None;
        }
        gamma * (budget * cw + p.sigma_p2) / den
    };
    if !(p_f.is_finite() && p_f * kappa <= budget) {
        return None;
    }
    let p_w = (budget - kappa * p_f).max(0.0);
    Some(Design {
        f: f * c(p_f.sqrt(), 0.0),
        w: &cand.w * c(p_w.sqrt(), 0.0),
        rho,
    })
}

/// Feasible candidates rank by secondary rate; infeasible ones rank below all
/// feasible ones by the primary SINR they reach with the whole budget on `F`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
enum Merit {
    Infeasible(f64),
    Feasible(f64),
}

fn score(p: &SystemParams, ch: &ChannelSet, cand: &Candidate, tol: f64) -> (Merit, Option<Design>) {
    if let Some(d) = power_split(p, ch, cand) {
        if sinr_pr(p, ch, &d) >= p.gamma_p_min() * (1.0 - tol) {
            return (Merit::Feasible(rate(sinr_sr(p, ch, &d))), Some(d));
        }
    }
    let budget = harvested_power(p, ch, cand.rho);
    let probe = Design {
        f: cand.f.clone(),
        w: CVector::zeros(cand.w.len()),
        rho: cand.rho,
    };
    let unit = crate::model::st_transmit_power(p, ch, &probe);
    let reach = if unit > 0.0 {
        let scaled = Design {
            f: &cand.f * c((budget / unit).sqrt(), 0.0),
            ..probe
        };
        sinr_pr(p, ch, &scaled)
    } else {
        0.0
    };
    (Merit::Infeasible(reach), None)
}

/// Random directions for every ratio on a 32-point grid (sample `i` uses grid
/// point `i mod 32`), exact power split, then coordinate polish of the best.
/// Returns the zero design with rate 0 when nothing feasible is found.
pub fn random_search_design(p: &SystemParams, ch: &ChannelSet, cfg: &OracleConfig) -> (Design, f64) {
    let m = ch.m();
    let grid = rho_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Merit, Candidate, Option<Design>)> = None;
    for i in 0..cfg.samples.max(1) {
        let mut f = CMatrix::from_fn(m, m, |_, _| cn(&mut rng));
        let mut w = CVector::from_fn(m, |_, _| cn(&mut rng));
        normalize_m(&mut f);
        normalize_v(&mut w);
        let cand = Candidate {
            f,
            w,
            rho: grid[i % RHO_GRID],
        };
        let (merit, d) = score(p, ch, &cand, cfg.tolerance);
        if best.as_ref().map_or(true, |b| merit > b.0) {
            best = Some((merit, cand, d));
        }
    }
    let (mut best_merit, mut cand, mut design) = best.expect("at least one sample");

    // Coordinates: re/im of every F and w entry, then rho.
    let n_coord = 2 * m * m + 2 * m + 1;
    let mut step = 0.1;
    let mut failed_rounds = 0;
    for _ in 0..cfg.polish_steps {
        let mut improved = false;
        for k in 0..n_coord {
            for sign in [1.0, -1.0] {
                let mut trial = cand.clone();
                if k < 2 * m * m {
                    let (idx, im) = (k / 2, k % 2 == 1);
                    let delta = sign * step / (m as f64);
                    let z = &mut trial.f[idx];
                    if im {
                        z.im += delta;
                    } else {
                        z.re += delta;
                    }
                    normalize_m(&mut trial.f);
                } else if k < n_coord - 1 {
                    let (idx, im) = ((k - 2 * m * m) / 2, k % 2 == 1);
                    let delta = sign * step / (m as f64).sqrt();
                    let z = &mut trial.w[idx];
                    if im {
                        z.im += delta;
                    } else {
                        z.re += delta;
                    }
                    normalize_v(&mut trial.w);
                } else {
                    trial.rho = (trial.rho * (1.0 + sign * step)).clamp(1e-4, 1.0 - 1e-4);
                }
                let (merit, d) = score(p, ch, &trial, cfg.tolerance);
                if merit > best_merit {
                    best_merit = merit;
                    cand = trial;
                    design = d;
                    improved = true;
                    break;
                }
            }
        }
        if improved {
            failed_rounds = 0;
        } else {
            failed_rounds += 1;
            if failed_rounds >= 5 {
                step *= 0.5;
                failed_rounds = 0;
            }
        }
    }
    match (best_merit, design) {
        (Merit::Feasible(r), Some(d)) => (d, r),
        _ => (Design::zero(m, grid[0]), 0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorstCase {
    pub min_sinr_sr: f64,
    pub min_sinr_pr: f64,
    /// Largest `P_ST - P_EH` seen; positive means the budget was broken.
    pub max_power_violation: f64,
}

const DESCENTS: usize = 50;
const DESCENT_ITERS: usize = 60;

fn project(v: CVector, eps: f64) -> CVector {
    let n = v.norm();
    if n > eps && n > 0.0 {
        v * c(eps / n, 0.0)
    } else {
        v
    }
}

fn perturb(rng: &mut ChaCha8Rng, v: &CVector, eps: f64, step: f64) -> CVector {
    if eps == 0.0 {
        return v.clone();
    }
    let m = v.len();
    let mut dir = CVector::from_fn(m, |_, _| cn(rng));
    normalize_v(&mut dir);
    project(v + dir * c(step * eps, 0.0), eps)
}

/// Empirical worst case of the robust SINRs and the power budget over the
/// error balls: `cfg.samples` draws (alternating boundary and in-ball), then
/// local descents from the worst draws of each quantity.
pub fn worst_case_probe(p: &SystemParams, uc: &UncertainChannelSet, d: &Design, cfg: &OracleConfig) -> WorstCase {
    let m = uc.g.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eval = |dp: &CVector, ds: &CVector| -> [f64; 3] {
        let (gp, gs) = robust_sinrs(p, uc, d, dp, ds).expect("draw inside its ball");
        let pm = robust_power_margin(p, uc, d, dp, ds).expect("draw inside its ball");
        // All three as quantities to minimize.
        [gs, gp, -pm]
    };
    let zero = CVector::zeros(m);
    let mut draws: Vec<(CVector, CVector, [f64; 3])> = vec![(zero.clone(), zero.clone(), eval(&zero, &zero))];
    for i in 0..cfg.samples {
        let mode = if i % 2 == 0 {
            BallSampling::Boundary
        } else {
            BallSampling::Uniform
        };
        let (dp, ds) = sample_uncertainty_rng(uc, &mut rng, mode);
        let v = eval(&dp, &ds);
        draws.push((dp, ds, v));
    }
    let mut worst = [f64::INFINITY; 3];
    for (_, _, v) in &draws {
        for k in 0..3 {
            worst[k] = worst[k].min(v[k]);
        }
    }
    if uc.eps_p > 0.0 || uc.eps_s > 0.0 {
        for k in 0..3 {
            let mut order: Vec<usize> = (0..draws.len()).collect();
            order.sort_by(|&a, &b| draws[a].2[k].total_cmp(&draws[b].2[k]));
            for &start in order.iter().take(DESCENTS) {
                let (mut dp, mut ds, v) = draws[start].clone();
                let mut cur = v[k];
                let mut step = 0.3;
                let mut fails = 0;
                for _ in 0..DESCENT_ITERS {
                    let np = perturb(&mut rng, &dp, uc.eps_p, step);
                    let ns = perturb(&mut rng, &ds, uc.eps_s, step);
                    let nv = eval(&np, &ns);
                    if nv[k] < cur {
                        cur = nv[k];
                        dp = np;
                        ds = ns;
                        fails = 0;
                        for j in 0..3 {
                            worst[j] = worst[j].min(nv[j]);
                        }
                    } else {
                        fails += 1;
                        if fails >= 10 {
                            step *= 0.5;
                            fails = 0;
                        }
                    }
                }
            }
        }
    }
    WorstCase {
        min_sinr_sr: worst[0],
        min_sinr_pr: worst[1],
        max_power_violation: -worst[2],
    }
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn finite_diff(f: impl Fn(f64) -> f64, x: f64, delta: f64) -> f64 {
    (f(x + delta) - f(x - delta)) / (2.0 * delta)
}
