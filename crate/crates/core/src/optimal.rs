//! Globally optimal design: subspace reduction, a Charnes-Cooper SDP per
//! splitting ratio and a gradient bisection over the ratio.
//!
//! For a fixed `rho` the relay matrix is `F = V1 A U2^H` and the beamformer is
//! `w = V1 b`, with `a = vec(A)`. The lifted problem over `(Â, B̂, q)` is
//!
//! ```text
//! max  Tr(Ĥs B̂)
//! s.t. Tr(B Â) + σs² q = 1
//!      Tr(C Â) - Γ (Tr(D Â) + Tr(Ĥp B̂)) - Γ σp² q >= 0
//!      Tr(E Â) + Tr(B̂) - P_EH q <= 0
//! ```
//!
//! and its optimum `h(rho)` is the best secondary SINR at that ratio.

use crate::conic::{ConicBackend, ConicProblem, Goal, InteriorPoint, LinearForm, SdpOptions, Sense, Status};
use crate::error::{Error, Result};
use crate::mathcore::{c, generalized_eig_max, herm_eig, identity, kron, outer, qr_thin, unvec, CMatrix, CVector};
use crate::model::{harvested_power, rate, sinr_pr, sinr_sr, st_transmit_power, ChannelSet, Design, SystemParams};

pub const RHO_MIN: f64 = 1e-4;
pub const RHO_MAX: f64 = 1.0 - 1e-4;
/// Bisection tolerance on the splitting ratio.
pub const RHO_TOL: f64 = 1e-4;
/// Eigenvalue ratio below which a lifted block counts as rank one.
pub const RANK_RATIO_TOL: f64 = 1e-6;
const SCAN_POINTS: usize = 16;

/// Orthonormal bases of `span{h_s, h_p}` and `span{h_s, h_p, g}` with the
/// channels expressed in them. With `reduced == false` both bases are the
/// identity and the design is optimized at full size.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub v1: CMatrix,
    pub u2: CMatrix,
    pub hhat_s: CVector,
    pub hhat_p: CVector,
    pub hbar_s: CVector,
    pub hbar_p: CVector,
    pub gbar: CVector,
    pub reduced: bool,
}

impl ReducedBasis {
    fn from_bases(ch: &ChannelSet, v1: CMatrix, u2: CMatrix, reduced: bool) -> Self {
        Self {
            hhat_s: v1.adjoint() * &ch.h_s,
            hhat_p: v1.adjoint() * &ch.h_p,
            hbar_s: u2.adjoint() * &ch.h_s,
            hbar_p: u2.adjoint() * &ch.h_p,
            gbar: u2.adjoint() * &ch.g,
            v1,
            u2,
            reduced,
        }
    }

    /// Full-size pass-through basis.
    pub fn identity(ch: &ChannelSet) -> Self {
        let m = ch.m();
        Self::from_bases(ch, identity(m), identity(m), false)
    }

    /// Rows of the reduced relay matrix.
    pub fn r1(&self) -> usize {
        self.v1.ncols()
    }

    /// Columns of the reduced relay matrix.
    pub fn r2(&self) -> usize {
        self.u2.ncols()
    }

    /// Maps reduced variables back to `(F, w)`.
    pub fn expand(&self, a: &CMatrix, b: &CVector) -> (CMatrix, CVector) {
        (&self.v1 * a * self.u2.adjoint(), &self.v1 * b)
    }
}

/// Subspace reduction for `M >= 3`; identity pass-through for `M <= 2`.
pub fn reduce_basis(ch: &ChannelSet) -> Result<ReducedBasis> {
    let m = ch.m();
    if m <= 2 {
        return Ok(ReducedBasis::identity(ch));
    }
    let two = CMatrix::from_columns(&[ch.h_s.clone(), ch.h_p.clone()]);
    let three = CMatrix::from_columns(&[ch.h_s.clone(), ch.h_p.clone(), ch.g.clone()]);
    let (v1, _) = qr_thin(&two).map_err(|_| Error::NearlyCollinearChannels)?;
    let (u2, _) = qr_thin(&three).map_err(|_| Error::NearlyCollinearChannels)?;
    Ok(ReducedBasis::from_bases(ch, v1, u2, true))
}

/// Coefficients of the vectorized problem at one splitting ratio. The `*_rho1`
/// matrices are the derivatives with respect to `rho`.
#[derive(Clone, Debug)]
pub struct CoefficientMatrices {
    pub rho: f64,
    pub b_rho: CMatrix,
    pub c_rho: CMatrix,
    pub d_rho: CMatrix,
    pub e_rho: CMatrix,
    pub hhat_s: CMatrix,
    pub hhat_p: CMatrix,
    pub b_rho1: CMatrix,
    pub c_rho1: CMatrix,
    pub d_rho1: CMatrix,
    pub e_rho1: CMatrix,
    /// Harvested power per unit of `1 - rho`.
    pub p_r1_eh: f64,
}

impl CoefficientMatrices {
    pub fn p_eh(&self) -> f64 {
        (1.0 - self.rho) * self.p_r1_eh
    }
}

fn transpose_outer(v: &CVector) -> CMatrix {
    outer(v).transpose()
}

pub fn build_coefficients(p: &SystemParams, rb: &ReducedBasis, rho: f64) -> CoefficientMatrices {
    let r1 = rb.r1();
    let r2 = rb.r2();
    let cr = |x: f64| c(x, 0.0);
    let hs = outer(&rb.hhat_s);
    let hp = outer(&rb.hhat_p);
    let gt = transpose_outer(&rb.gbar);
    let hpt = transpose_outer(&rb.hbar_p);
    let hst = transpose_outer(&rb.hbar_s);
    let i2 = identity(r2);
    let i1 = identity(r1);
    let inn = identity(r1 * r2);

    let b1 = kron(&(&i2 * cr(p.sigma_r2) + &gt * cr(p.p_pt) + &hpt * cr(p.p_pr)), &hs);
    let b0 = kron(&i2, &hs) * cr(p.sigma_c2);
    let c1 = kron(&(&gt * cr(p.p_pt)), &hp);
    let d1 = kron(&(&i2 * cr(p.sigma_r2) + &hst * cr(p.p_sr)), &hp);
    let d0 = kron(&i2, &hp) * cr(p.sigma_c2);
    let e1 = kron(&(&gt * cr(p.p_pt) + &hpt * cr(p.p_pr) + &hst * cr(p.p_sr)), &i1) + &inn * cr(p.sigma_r2);
    let e0 = &inn * cr(p.sigma_c2);

    let p_r1_eh = p.xi
        * (p.p_pt * rb.gbar.norm_squared()
            + p.p_pr * rb.hbar_p.norm_squared()
            + p.p_sr * rb.hbar_s.norm_squared()
            + p.sigma_r2);
    CoefficientMatrices {
        rho,
        b_rho: &b0 + &b1 * cr(rho),
        c_rho: &c1 * cr(rho),
        d_rho: &d0 + &d1 * cr(rho),
        e_rho: &e0 + &e1 * cr(rho),
        hhat_s: hs,
        hhat_p: hp,
        b_rho1: b1,
        c_rho1: c1,
        d_rho1: d1,
        e_rho1: e1,
        p_r1_eh,
    }
}

/// Largest primary SINR reachable at `rho` with no secondary beam, using all
/// of `p_eh` on relaying.
pub fn feasibility_gamma_max(p: &SystemParams, rb: &ReducedBasis, rho: f64, p_eh: f64) -> Result<f64> {
    if !(p_eh > 0.0) {
        return Ok(0.0);
    }
    let k = build_coefficients(p, rb, rho);
    let rhs = &k.d_rho + &k.e_rho * c(p.sigma_p2 / p_eh, 0.0);
    Ok(generalized_eig_max(&k.c_rho, &rhs)?.0.max(0.0))
}

/// Solution of the lifted problem at one ratio.
#[derive(Clone, Debug)]
pub struct FixedRhoSolution {
    pub coeffs: CoefficientMatrices,
    pub a_hat: CMatrix,
    pub b_hat: CMatrix,
    pub q: f64,
    /// Nonnegative multipliers of the normalization, primary and power rows.
    pub theta: [f64; 3],
    /// Optimal secondary SINR `h(rho)`.
    pub objective: f64,
}

pub fn fixed_rho_problem(p: &SystemParams, k: &CoefficientMatrices) -> ConicProblem {
    let n_a = k.b_rho.nrows();
    let n_b = k.hhat_s.nrows();
    let gamma = p.gamma_p_min();
    let mut prob = ConicProblem::new(vec![n_a, n_b], 1, Goal::Maximize);
    prob.objective = LinearForm::new().block(1, k.hhat_s.clone());
    prob.constrain(
        LinearForm::new().block(0, k.b_rho.clone()).scalar(0, p.sigma_s2),
        Sense::Eq,
        1.0,
    );
    if gamma > 0.0 {
        prob.constrain(
            LinearForm::new()
                .block(0, &k.c_rho - &k.d_rho * c(gamma, 0.0))
                .block(1, &k.hhat_p * c(-gamma, 0.0))
                .scalar(0, -gamma * p.sigma_p2),
            Sense::Ge,
            0.0,
        );
    }
    prob.constrain(
        LinearForm::new()
            .block(0, k.e_rho.clone())
            .block(1, identity(n_b))
            .scalar(0, -k.p_eh()),
        Sense::Le,
        0.0,
    );
    prob
}

pub fn solve_fixed_rho(p: &SystemParams, rb: &ReducedBasis, rho: f64) -> Result<FixedRhoSolution> {
    solve_fixed_rho_with(p, rb, rho, &InteriorPoint::new(SdpOptions::precise()))
}

pub fn solve_fixed_rho_with(
    p: &SystemParams,
    rb: &ReducedBasis,
    rho: f64,
    backend: &dyn ConicBackend,
) -> Result<FixedRhoSolution> {
    let k = build_coefficients(p, rb, rho);
    let gamma = p.gamma_p_min();
    if feasibility_gamma_max(p, rb, rho, k.p_eh())? < gamma {
        return Err(Error::Infeasible);
    }
    let prob = fixed_rho_problem(p, &k);
    let sol = backend.solve(&prob);
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible),
        s => return Err(Error::NumericalFailure(format!("lifted problem at rho={rho}: {s:?}"))),
    }
    let y = &sol.duals;
    let theta = if gamma > 0.0 {
        [y[0], -y[1], y[2]]
    } else {
        [y[0], 0.0, y[1]]
    };
    Ok(FixedRhoSolution {
        a_hat: sol.primal.blocks[0].clone(),
        b_hat: sol.primal.blocks[1].clone(),
        q: sol.primal.scalars[0],
        theta,
        objective: sol.objective_value,
        coeffs: k,
    })
}

/// Derivative of `h(rho)` from the Lagrangian at a solved ratio.
pub fn rho_gradient(k: &CoefficientMatrices, a_hat: &CMatrix, q: f64, theta: [f64; 3], gamma_p_min: f64) -> f64 {
    let [t1, t2, t3] = theta;
    let m = &k.b_rho1 * c(-t1, 0.0) + &k.c_rho1 * c(t2, 0.0)
        - &k.d_rho1 * c(t2 * gamma_p_min, 0.0)
        - &k.e_rho1 * c(t3, 0.0);
    crate::mathcore::trace_prod(&m, a_hat) - t3 * q * k.p_r1_eh
}

/// Second-to-first eigenvalue ratios of the lifted blocks and whether the
/// extracted design needed a feasibility repair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RankReport {
    pub ratio_a: f64,
    pub ratio_b: f64,
    pub repaired: bool,
}

impl RankReport {
    pub fn rank_one(&self) -> bool {
        self.ratio_a <= RANK_RATIO_TOL && self.ratio_b <= RANK_RATIO_TOL
    }
}

#[derive(Clone, Debug)]
pub struct OptimalResult {
    pub design: Design,
    pub rate_s: f64,
    pub rate_p_achieved: f64,
    pub rho_star: f64,
    pub feasible: bool,
    pub sdp_rank_report: RankReport,
    /// `h(rho_star)` from the lifted problem.
    pub objective: f64,
}

fn eig_ratio(m: &CMatrix) -> Result<(f64, f64, CVector)> {
    let (vals, vecs) = herm_eig(m)?;
    let n = vals.len();
    let top = vals[n - 1];
    let second = if n > 1 { vals[n - 2].max(0.0) } else { 0.0 };
    let ratio = if top > 0.0 { second / top } else { 0.0 };
    Ok((top.max(0.0), ratio, vecs.column(n - 1).into_owned()))
}

/// Dominant-eigenvector design from a lifted solution, followed by a
/// feasibility repair when the blocks are not exactly rank one.
pub fn extract_design(
    p: &SystemParams,
    ch: &ChannelSet,
    rb: &ReducedBasis,
    sol: &FixedRhoSolution,
) -> Result<(Design, RankReport)> {
    if !(sol.q > 0.0) {
        return Err(Error::NumericalFailure("normalization variable is not positive".into()));
    }
    let scale = c(1.0 / sol.q, 0.0);
    let (la, ratio_a, va) = eig_ratio(&(&sol.a_hat * scale))?;
    let (lb, ratio_b, vb) = eig_ratio(&(&sol.b_hat * scale))?;
    let a = unvec(&(va * c(la.sqrt(), 0.0)), rb.r1(), rb.r2())?;
    let b = vb * c(lb.sqrt(), 0.0);
    let (f, w) = rb.expand(&a, &b);
    let design = Design {
        f,
        w,
        rho: sol.coeffs.rho,
    };
    let (design, repaired) = repair_design(p, ch, design).ok_or(Error::Infeasible)?;
    Ok((
        design,
        RankReport {
            ratio_a,
            ratio_b,
            repaired,
        },
    ))
}

const REPAIR_SLACK: f64 = 1e-9;

/// Pulls a design back into the feasible set: shrink `w` until the primary
/// SINR demand holds, then shrink `(F, w)` together until the power budget
/// holds, and repeat. Returns the design and whether it changed, or `None`
/// when the demand cannot be met even with `w = 0`.
pub fn repair_design(p: &SystemParams, ch: &ChannelSet, mut d: Design) -> Option<(Design, bool)> {
    let gamma = p.gamma_p_min();
    let mut changed = false;
    for _ in 0..200 {
        let g = sinr_pr(p, ch, &d);
        let pst = st_transmit_power(p, ch, &d);
        let peh = harvested_power(p, ch, d.rho);
        let sinr_ok = g >= gamma * (1.0 - REPAIR_SLACK);
        let power_ok = pst <= peh * (1.0 + REPAIR_SLACK);
        if sinr_ok && power_ok {
            return Some((d, changed));
        }
        changed = true;
        if !sinr_ok {
            // sinr = signal / (rest + |hp^H w|^2), so shrink w until it fits.
            let hpf = ch.h_p.adjoint() * &d.f;
            let signal = d.rho * p.p_pt * (&hpf * &ch.g)[0].norm_sqr();
            let rest = d.rho * p.p_sr * (&hpf * &ch.h_s)[0].norm_sqr()
                + (d.rho * p.sigma_r2 + p.sigma_c2) * hpf.norm_squared()
                + p.sigma_p2;
            if signal < gamma * rest * (1.0 - REPAIR_SLACK) {
                return None;
            }
            let hw = ch.h_p.dotc(&d.w).norm_sqr();
            let allowed = (signal / (gamma * (1.0 + REPAIR_SLACK)) - rest).max(0.0);
            let s = if hw > 0.0 { (allowed / hw).sqrt().min(1.0) } else { 0.0 };
            d.w *= c(s, 0.0);
        } else {
            let t = (peh * (1.0 - REPAIR_SLACK) / pst).sqrt();
            d.f *= c(t, 0.0);
            d.w *= c(t, 0.0);
        }
    }
    None
}

/// Objective, design and rank data at one ratio.
struct Evaluated {
    sol: FixedRhoSolution,
    design: Design,
    report: RankReport,
    rate_s: f64,
}

fn evaluate(p: &SystemParams, ch: &ChannelSet, rb: &ReducedBasis, rho: f64) -> Result<Evaluated> {
    let sol = solve_fixed_rho(p, rb, rho)?;
    let (design, report) = extract_design(p, ch, rb, &sol)?;
    let rate_s = rate(sinr_sr(p, ch, &design));
    Ok(Evaluated {
        sol,
        design,
        report,
        rate_s,
    })
}

/// Largest feasible interval of splitting ratios, from a coarse scan of the
/// reachable primary SINR refined by bisection at both ends.
pub fn feasible_rho_interval(p: &SystemParams, ch: &ChannelSet, rb: &ReducedBasis) -> Result<(f64, f64)> {
    let gamma = p.gamma_p_min();
    let g_at = |rho: f64| -> Result<f64> { feasibility_gamma_max(p, rb, rho, harvested_power(p, ch, rho)) };
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| RHO_MIN + (RHO_MAX - RHO_MIN) * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&r| g_at(r)).collect::<Result<_>>()?;
    let best = (0..SCAN_POINTS)
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("nonempty grid");
    if vals[best] < gamma {
        return Err(Error::Infeasible);
    }
    let mut first = best;
    while first > 0 && vals[first - 1] >= gamma {
        first -= 1;
    }
    let mut last = best;
    while last + 1 < SCAN_POINTS && vals[last + 1] >= gamma {
        last += 1;
    }
    let refine = |mut good: f64, mut bad: f64| -> Result<f64> {
        for _ in 0..40 {
            let mid = 0.5 * (good + bad);
            if g_at(mid)? >= gamma {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    };
    let mut lo = if first > 0 {
        refine(grid[first], grid[first - 1])?
    } else {
        grid[first]
    };
    let mut hi = if last + 1 < SCAN_POINTS {
        refine(grid[last], grid[last + 1])?
    } else {
        grid[last]
    };
    // Keep away from ratios where the primary demand is met only with equality.
    let shrink = (0.01 * (hi - lo)).min(1e-5);
    if first > 0 {
        lo += shrink;
    }
    if last + 1 < SCAN_POINTS {
        hi -= shrink;
    }
    if hi < lo {
        let mid = 0.5 * (lo + hi);
        lo = mid;
        hi = mid;
    }
    Ok((lo, hi))
}

/// Optimal design for perfect channel knowledge.
pub fn solve(p: &SystemParams, ch: &ChannelSet) -> Result<OptimalResult> {
    p.validate()?;
    ch.validate(p.m)?;
    let rb = match reduce_basis(ch) {
        Ok(rb) => rb,
        Err(Error::NearlyCollinearChannels) => ReducedBasis::identity(ch),
        Err(e) => return Err(e),
    };
    solve_with_basis(p, ch, &rb)
}

pub fn solve_with_basis(p: &SystemParams, ch: &ChannelSet, rb: &ReducedBasis) -> Result<OptimalResult> {
    let gamma = p.gamma_p_min();
    let (mut lo, mut hi) = feasible_rho_interval(p, ch, rb)?;
    let mut best: Option<Evaluated> = None;
    let keep = |e: Evaluated, best: &mut Option<Evaluated>| {
        if best.as_ref().map_or(true, |b| e.rate_s > b.rate_s) {
            *best = Some(e);
        }
    };
    while hi - lo > RHO_TOL {
        let mid = 0.5 * (lo + hi);
        match evaluate(p, ch, rb, mid) {
            Ok(e) => {
                let grad = rho_gradient(&e.sol.coeffs, &e.sol.a_hat, e.sol.q, e.sol.theta, gamma);
                if grad < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                keep(e, &mut best);
            }
            Err(_) => hi = mid,
        }
    }
    if let Ok(e) = evaluate(p, ch, rb, 0.5 * (lo + hi)) {
        keep(e, &mut best);
    }
    let e = best.ok_or_else(|| Error::NumericalFailure("no splitting ratio could be solved".into()))?;
    Ok(OptimalResult {
        rate_p_achieved: rate(sinr_pr(p, ch, &e.design)),
        rate_s: e.rate_s,
        rho_star: e.design.rho,
        feasible: true,
        sdp_rank_report: e.report,
        objective: e.sol.objective,
        design: e.design,
    })
}

/// `h(rho)` alone, for finite-difference and concavity checks.
pub fn objective_at(p: &SystemParams, rb: &ReducedBasis, rho: f64) -> Result<f64> {
    Ok(solve_fixed_rho(p, rb, rho)?.objective)
}
