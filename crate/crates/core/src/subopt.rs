//! Low-complexity design: zero-forcing receive filter at the relay, a
//! closed-form dual solution for the transmit side, and a search over the
//! splitting ratio.

use crate::error::{Error, Result};
use crate::mathcore::{c, null_space_basis, CMatrix, CVector};
use crate::model::{harvested_power, rate, sinr_pr, sinr_sr, ChannelSet, Design, SystemParams};
use crate::optimal::{OptimalResult, RankReport, RHO_MAX, RHO_MIN, RHO_TOL};

const GRID_POINTS: usize = 32;
const DET_TOL: f64 = 1e-12;

/// Per-ratio scalars of the rank-one relay problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SuboptConstants {
    /// Gain of relay-path interference at the secondary receiver.
    pub b: f64,
    /// Self-noise factor of the relayed primary signal.
    pub c: f64,
    /// Relay power per unit transmit-beam power.
    pub d: f64,
    /// `(1 - c * gamma_pt) / (d * gamma_pt)`; positive on feasible ratios.
    pub e: f64,
    /// Primary SINR demand normalized by the relayed signal gain.
    pub gamma_pt: f64,
    pub p_eh: f64,
    pub f_r: CVector,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelNorms {
    pub hs2: f64,
    pub hp2: f64,
    /// `|h_s^H h_p|^2`.
    pub cross2: f64,
}

impl ChannelNorms {
    pub fn of(ch: &ChannelSet) -> Self {
        Self {
            hs2: ch.h_s.norm_squared(),
            hp2: ch.h_p.norm_squared(),
            cross2: ch.h_s.dotc(&ch.h_p).norm_sqr(),
        }
    }

    /// `‖h_s‖²‖h_p‖² - |h_s^H h_p|²`, zero for collinear channels.
    pub fn gram_det(&self) -> f64 {
        self.hs2 * self.hp2 - self.cross2
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualPair {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Achieved secondary SINR.
    pub gamma_st: f64,
}

/// Quadratic in `lambda2` whose positive root fixes the dual pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualQuadratic {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl DualQuadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.alpha * x + self.beta) * x + self.gamma
    }

    /// Positive root when `alpha > 0 > gamma`, by the cancellation-free formula.
    pub fn positive_root(&self) -> Result<f64> {
        if !(self.alpha > 0.0) {
            return Err(Error::DegenerateChannels("leading coefficient is not positive".into()));
        }
        if !(self.gamma < 0.0) {
            return Err(Error::TrivialZeroRate);
        }
        let disc = self.beta * self.beta - 4.0 * self.alpha * self.gamma;
        let q = -0.5 * (self.beta + self.beta.signum() * disc.sqrt());
        Ok(if self.beta >= 0.0 {
            self.gamma / q
        } else {
            q / self.alpha
        })
    }
}

/// Unit receive filter in the null space of `[h_s, h_p]^H` best aligned with `g`.
pub fn zf_receive_filter(ch: &ChannelSet) -> Result<CVector> {
    let m = ch.m();
    if m < 3 {
        return Err(Error::ZfInfeasible(m));
    }
    let hh = CMatrix::from_rows(&[ch.h_s.adjoint(), ch.h_p.adjoint()]);
    let v = null_space_basis(&hh)?;
    let proj = &v * (v.adjoint() * &ch.g);
    let n = proj.norm();
    if !(n > 1e-12 * ch.g.norm()) {
        return Err(Error::DegenerateChannels(
            "primary channel has no component in the null space".into(),
        ));
    }
    Ok(proj / c(n, 0.0))
}

/// Scalars at one ratio for a given receive filter.
pub fn constants(p: &SystemParams, ch: &ChannelSet, f_r: &CVector, rho: f64) -> SuboptConstants {
    let fg = f_r.dotc(&ch.g).norm_sqr();
    let fp = f_r.dotc(&ch.h_p).norm_sqr();
    let fs = f_r.dotc(&ch.h_s).norm_sqr();
    let noise = rho * p.sigma_r2 + p.sigma_c2;
    let b = rho * (p.p_pt * fg + p.p_pr * fp) + noise;
    let cc = rho * p.p_sr * fs + noise;
    let d = rho * (p.p_pt * fg + p.p_pr * fp + p.p_sr * fs) + noise;
    let gamma_pt = p.gamma_p_min() / (rho * p.p_pt * fg);
    let e = (1.0 - cc * gamma_pt) / (d * gamma_pt);
    SuboptConstants {
        b,
        c: cc,
        d,
        e,
        gamma_pt,
        p_eh: harvested_power(p, ch, rho),
        f_r: f_r.clone(),
    }
}

pub fn dual_coefficients(p: &SystemParams, k: &SuboptConstants, n: &ChannelNorms, p_eh: f64) -> DualQuadratic {
    let bd = k.b / k.d;
    let det = n.gram_det();
    DualQuadratic {
        alpha: bd * p.sigma_s2 * det,
        beta: p.sigma_s2 * n.hp2 - p_eh * bd * det + bd * p.sigma_p2 * n.hs2 / k.e,
        gamma: p.sigma_p2 / k.e - p_eh * n.hp2,
    }
}

/// Dual pair and secondary SINR from the power identity and both stationarity
/// conditions.
pub fn dual_quadratic(p: &SystemParams, k: &SuboptConstants, n: &ChannelNorms, p_eh: f64) -> Result<DualPair> {
    if !(k.e > 0.0) {
        return Err(Error::TrivialZeroRate);
    }
    if !(n.gram_det() > 1e-12 * n.hs2 * n.hp2) {
        return Err(Error::DegenerateChannels(
            "secondary and primary channels are collinear".into(),
        ));
    }
    let lambda2 = dual_coefficients(p, k, n, p_eh).positive_root()?;
    let bd = k.b / k.d;
    let det = n.gram_det();
    let lambda1 = (1.0 / k.e + bd * lambda2 * n.hs2 / k.e) / (n.hp2 + bd * lambda2 * det);
    let gamma_st = lambda2 * (n.hs2 + lambda1 * det) / (1.0 + lambda1 * n.hp2);
    Ok(DualPair {
        lambda1,
        lambda2,
        gamma_st,
    })
}

/// `(I + kappa u u^H)^{-1} v` by the rank-one inversion lemma.
fn rank_one_solve(kappa: f64, u: &CVector, v: &CVector) -> CVector {
    let s = u.dotc(v) * c(kappa / (1.0 + kappa * u.norm_squared()), 0.0);
    v - u * s
}

fn unit(v: CVector) -> Result<CVector> {
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateChannels("zero beam direction".into()));
    }
    Ok(v / c(n, 0.0))
}

/// Beams from the dual pair, with powers fixed by meeting the primary demand
/// and the power budget with equality.
pub fn closed_form_design(
    p: &SystemParams,
    ch: &ChannelSet,
    k: &SuboptConstants,
    dp: &DualPair,
    rho: f64,
) -> Result<Design> {
    let ft = unit(rank_one_solve(k.b * dp.lambda2 / k.d, &ch.h_s, &ch.h_p))?;
    let w = unit(rank_one_solve(dp.lambda1, &ch.h_p, &ch.h_s))?;
    let a = ch.h_p.dotc(&ft).norm_sqr();
    let bw = ch.h_p.dotc(&w).norm_sqr();
    // [a(1 - c gpt), -gpt bw; d, 1] [p_f; p_w] = [gpt sigma_p2; P_EH]
    let m11 = a * (1.0 - k.c * k.gamma_pt);
    let m12 = -k.gamma_pt * bw;
    let det = m11 - m12 * k.d;
    if det.abs() < DET_TOL {
        return Err(Error::DegenerateChannels("power system is singular".into()));
    }
    let r1 = k.gamma_pt * p.sigma_p2;
    let p_f = (r1 - m12 * k.p_eh) / det;
    let p_w = (m11 * k.p_eh - k.d * r1) / det;
    if p_f < 0.0 || p_w < 0.0 {
        return Err(Error::TrivialZeroRate);
    }
    let f_t = ft * c(p_f.sqrt(), 0.0);
    Ok(Design {
        f: &f_t * k.f_r.adjoint(),
        w: w * c(p_w.sqrt(), 0.0),
        rho,
    })
}

/// Closed-form design and its secondary SINR at one ratio.
pub fn solve_at(p: &SystemParams, ch: &ChannelSet, f_r: &CVector, rho: f64) -> Result<(Design, DualPair)> {
    let k = constants(p, ch, f_r, rho);
    if !(k.gamma_pt.is_finite() && k.c * k.gamma_pt < 1.0) {
        return Err(Error::Infeasible);
    }
    let dp = dual_quadratic(p, &k, &ChannelNorms::of(ch), k.p_eh)?;
    let d = closed_form_design(p, ch, &k, &dp, rho)?;
    Ok((d, dp))
}

fn value_at(p: &SystemParams, ch: &ChannelSet, f_r: &CVector, rho: f64) -> f64 {
    solve_at(p, ch, f_r, rho).map_or(f64::NEG_INFINITY, |(_, dp)| dp.gamma_st)
}

/// Grid scan then golden-section refinement between the neighbours of the
/// best grid point.
pub fn solve(p: &SystemParams, ch: &ChannelSet) -> Result<OptimalResult> {
    p.validate()?;
    ch.validate(p.m)?;
    let f_r = zf_receive_filter(ch)?;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| RHO_MIN + (RHO_MAX - RHO_MIN) * k as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&r| value_at(p, ch, &f_r, r)).collect();
    let best = (0..GRID_POINTS)
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("nonempty grid");
    if vals[best] == f64::NEG_INFINITY {
        return Err(Error::Infeasible);
    }
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = value_at(p, ch, &f_r, x1);
    let mut f2 = value_at(p, ch, &f_r, x2);
    let (mut rho_best, mut v_best) = (grid[best], vals[best]);
    while hi - lo > RHO_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = value_at(p, ch, &f_r, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = value_at(p, ch, &f_r, x2);
        }
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f > v_best {
                rho_best = x;
                v_best = f;
            }
        }
    }
    let (design, dp) = solve_at(p, ch, &f_r, rho_best)?;
    Ok(OptimalResult {
        rate_s: rate(sinr_sr(p, ch, &design)),
        rate_p_achieved: rate(sinr_pr(p, ch, &design)),
        rho_star: rho_best,
        feasible: true,
        sdp_rank_report: RankReport::default(),
        objective: dp.gamma_st,
        design,
    })
}
