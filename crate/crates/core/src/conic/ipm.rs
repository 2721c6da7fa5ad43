//! Primal-dual path-following method (HKM direction, Mehrotra
//! predictor-corrector) for real standard-form problems
//!
//! ```text
//! min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0
//! max b'y     s.t.  sum_i y_i A_i + Z = C,  Z >= 0
//! ```
//!
//! where `X` is block diagonal with symmetric PSD blocks and one diagonal
//! (linear-programming) block.

use nalgebra::{DMatrix, DVector};

use super::{ConicPrimal, ConicProblem, ConicSolution, Feasibility, Goal, SdpOptions, Sense, Status};
use crate::mathcore::{real_embed, real_unembed};

type RM = DMatrix<f64>;
type RV = DVector<f64>;

#[derive(Clone, Debug)]
struct SymCoef {
    dense: RM,
    nz: Vec<(usize, usize, f64)>,
}

impl SymCoef {
    fn new(dense: RM) -> Self {
        let mut nz = Vec::new();
        for c in 0..dense.ncols() {
            for r in 0..dense.nrows() {
                let v = dense[(r, c)];
                if v != 0.0 {
                    nz.push((r, c, v));
                }
            }
        }
        Self { dense, nz }
    }

    fn sparse(&self) -> bool {
        self.nz.len() < 2 * self.dense.nrows()
    }

    /// `Tr(A G)` for symmetric `A` and arbitrary `G`.
    fn dot(&self, g: &RM) -> f64 {
        if self.sparse() {
            self.nz.iter().map(|&(r, c, v)| v * g[(r, c)]).sum()
        } else {
            self.dense.dot(g)
        }
    }

    fn norm_sq(&self) -> f64 {
        self.nz.iter().map(|&(_, _, v)| v * v).sum()
    }

    fn trace(&self) -> f64 {
        self.dense.trace()
    }

    fn scale(&mut self, s: f64) {
        self.dense *= s;
        for e in &mut self.nz {
            e.2 *= s;
        }
    }

    fn add_scaled_to(&self, target: &mut RM, s: f64) {
        for &(r, c, v) in &self.nz {
            target[(r, c)] += s * v;
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Row {
    sdp: Vec<(usize, SymCoef)>,
    lp: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
struct StdProblem {
    dims: Vec<usize>,
    n_lp: usize,
    rows: Vec<Row>,
    b: RV,
    c_sdp: Vec<RM>,
    c_lp: RV,
}

impl StdProblem {
    /// Real standard form of a conic problem. Complex blocks are embedded, and
    /// every inequality gets a slack appended after the problem's own scalars.
    fn from_conic(p: &ConicProblem) -> Self {
        let dims: Vec<usize> = p.blocks.iter().map(|&n| 2 * n).collect();
        let n_ineq = p.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
        let n_lp = p.scalars + n_ineq;
        let sign = match p.goal {
            Goal::Minimize => 1.0,
            Goal::Maximize => -1.0,
        };
        let mut c_sdp: Vec<RM> = dims.iter().map(|&n| RM::zeros(n, n)).collect();
        for (b, m) in &p.objective.blocks {
            c_sdp[*b] += real_embed(m) * (0.5 * sign);
        }
        let mut c_lp = RV::zeros(n_lp);
        for &(k, a) in &p.objective.scalars {
            c_lp[k] += sign * a;
        }
        let mut rows = Vec::with_capacity(p.constraints.len());
        let mut b = RV::zeros(p.constraints.len());
        let mut slack = p.scalars;
        for (i, con) in p.constraints.iter().enumerate() {
            let mut row = Row::default();
            let mut merged: Vec<(usize, RM)> = Vec::new();
            for (blk, m) in &con.form.blocks {
                let e = real_embed(m) * 0.5;
                match merged.iter_mut().find(|(j, _)| j == blk) {
                    Some((_, acc)) => *acc += e,
                    None => merged.push((*blk, e)),
                }
            }
            merged.sort_by_key(|(j, _)| *j);
            for (j, m) in merged {
                let coef = SymCoef::new((&m + m.transpose()) * 0.5);
                if !coef.nz.is_empty() {
                    row.sdp.push((j, coef));
                }
            }
            let mut lp: Vec<(usize, f64)> = Vec::new();
            for &(k, a) in &con.form.scalars {
                match lp.iter_mut().find(|(j, _)| *j == k) {
                    Some((_, acc)) => *acc += a,
                    None => lp.push((k, a)),
                }
            }
            match con.sense {
                Sense::Eq => {}
                Sense::Le => {
                    lp.push((slack, 1.0));
                    slack += 1;
                }
                Sense::Ge => {
                    lp.push((slack, -1.0));
                    slack += 1;
                }
            }
            lp.retain(|&(_, a)| a != 0.0);
            row.lp = lp;
            b[i] = con.rhs;
            rows.push(row);
        }
        Self {
            dims,
            n_lp,
            rows,
            b,
            c_sdp,
            c_lp,
        }
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    /// `A(X)` where each block may be non-symmetric.
    fn apply(&self, xs: &[RM], x: &RV) -> RV {
        RV::from_iterator(
            self.m(),
            self.rows.iter().map(|row| {
                row.sdp.iter().map(|(j, a)| a.dot(&xs[*j])).sum::<f64>()
                    + row.lp.iter().map(|&(k, a)| a * x[k]).sum::<f64>()
            }),
        )
    }

    /// `A*(y)`.
    fn adjoint(&self, y: &RV) -> (Vec<RM>, RV) {
        let mut out: Vec<RM> = self.dims.iter().map(|&n| RM::zeros(n, n)).collect();
        let mut lp = RV::zeros(self.n_lp);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, a) in &row.sdp {
                a.add_scaled_to(&mut out[*j], y[i]);
            }
            for &(k, a) in &row.lp {
                lp[k] += a * y[i];
            }
        }
        (out, lp)
    }

    fn block_index(&self) -> Vec<Vec<(usize, usize)>> {
        let mut idx = vec![Vec::new(); self.dims.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for (pos, (j, _)) in row.sdp.iter().enumerate() {
                idx[*j].push((i, pos));
            }
        }
        idx
    }

    fn lp_index(&self) -> Vec<Vec<(usize, f64)>> {
        let mut idx = vec![Vec::new(); self.n_lp];
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, a) in &row.lp {
                idx[k].push((i, a));
            }
        }
        idx
    }

    fn c_norm(&self) -> f64 {
        (self.c_sdp.iter().map(|c| c.norm_squared()).sum::<f64>() + self.c_lp.norm_squared()).sqrt()
    }
}

#[derive(Clone, Debug)]
struct Iterate {
    xs: Vec<RM>,
    zs: Vec<RM>,
    x: RV,
    z: RV,
    y: RV,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RunStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failure,
    Stopped(Feasibility),
}

struct Progress {
    pinf: f64,
    dinf: f64,
    dobj: f64,
    lp: Vec<f64>,
}

struct RunResult {
    status: RunStatus,
    it: Iterate,
    pobj: f64,
    dobj: f64,
    rel_gap: f64,
    iterations: usize,
}

fn sym(m: RM) -> RM {
    (&m + m.transpose()) * 0.5
}

fn inv_spd(m: &RM) -> Option<RM> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Largest `a` with `x + a dx` PSD (infinity if unbounded).
fn max_step_psd(x: &RM, dx: &RM) -> f64 {
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let w = sym(w);
    let lmin = w.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(x: &RV, dx: &RV) -> f64 {
    let mut a = f64::INFINITY;
    for k in 0..x.len() {
        if dx[k] < 0.0 {
            a = a.min(-x[k] / dx[k]);
        }
    }
    a
}

struct Solver<'a> {
    p: &'a StdProblem,
    by_block: Vec<Vec<(usize, usize)>>,
    by_lp: Vec<Vec<(usize, f64)>>,
}

struct Direction {
    xs: Vec<RM>,
    x: RV,
    y: RV,
    zs: Vec<RM>,
    z: RV,
}

impl<'a> Solver<'a> {
    fn new(p: &'a StdProblem) -> Self {
        Self {
            p,
            by_block: p.block_index(),
            by_lp: p.lp_index(),
        }
    }

    fn schur(&self, it: &Iterate, zinv: &[RM]) -> RM {
        let m = self.p.m();
        let mut mat = RM::zeros(m, m);
        for (j, list) in self.by_block.iter().enumerate() {
            let n = self.p.dims[j];
            let x = &it.xs[j];
            let zi = &zinv[j];
            for (a, &(i, pi)) in list.iter().enumerate() {
                let ai = &self.p.rows[i].sdp[pi].1;
                let g = if ai.sparse() {
                    let mut g = RM::zeros(n, n);
                    for &(r, c, v) in &ai.nz {
                        for col in 0..n {
                            let s = v * zi[(c, col)];
                            if s != 0.0 {
                                let xr = x.column(r);
                                let mut gc = g.column_mut(col);
                                gc.axpy(s, &xr, 1.0);
                            }
                        }
                    }
                    g
                } else {
                    x * &ai.dense * zi
                };
                for &(k, pk) in &list[a..] {
                    let ak = &self.p.rows[k].sdp[pk].1;
                    mat[(i, k)] += ak.dot(&g);
                }
            }
        }
        for (k, list) in self.by_lp.iter().enumerate() {
            let d = it.x[k] / it.z[k];
            for (a, &(i, ai)) in list.iter().enumerate() {
                for &(l, al) in &list[a..] {
                    mat[(i.min(l), i.max(l))] += ai * al * d;
                }
            }
        }
        for i in 0..m {
            for k in 0..i {
                mat[(i, k)] = mat[(k, i)];
            }
        }
        mat
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        zinv: &[RM],
        factor: &SchurFactor,
        rp: &RV,
        rd: &[RM],
        rd_lp: &RV,
        h: &[RM],
        h_lp: &RV,
    ) -> Option<Direction> {
        let nb = self.p.dims.len();
        let mut t = Vec::with_capacity(nb);
        for j in 0..nb {
            t.push(&h[j] - &it.xs[j] * &rd[j] * &zinv[j]);
        }
        let t_lp = RV::from_iterator(
            self.p.n_lp,
            (0..self.p.n_lp).map(|k| h_lp[k] - it.x[k] * rd_lp[k] / it.z[k]),
        );
        let rhs = rp - self.p.apply(&t, &t_lp);
        let dy = factor.solve(&rhs)?;
        let (aty, aty_lp) = self.p.adjoint(&dy);
        let mut dzs = Vec::with_capacity(nb);
        let mut dxs = Vec::with_capacity(nb);
        for j in 0..nb {
            let dz = &rd[j] - &aty[j];
            let dx = sym(&h[j] - &it.xs[j] * &dz * &zinv[j]);
            dzs.push(dz);
            dxs.push(dx);
        }
        let dz_lp = rd_lp - aty_lp;
        let dx_lp = RV::from_iterator(
            self.p.n_lp,
            (0..self.p.n_lp).map(|k| h_lp[k] - it.x[k] * dz_lp[k] / it.z[k]),
        );
        Some(Direction {
            xs: dxs,
            x: dx_lp,
            y: dy,
            zs: dzs,
            z: dz_lp,
        })
    }

    fn steps(&self, it: &Iterate, d: &Direction) -> (f64, f64) {
        let mut ap = max_step_lp(&it.x, &d.x);
        let mut ad = max_step_lp(&it.z, &d.z);
        for j in 0..self.p.dims.len() {
            ap = ap.min(max_step_psd(&it.xs[j], &d.xs[j]));
            ad = ad.min(max_step_psd(&it.zs[j], &d.zs[j]));
        }
        (ap, ad)
    }
}

enum SchurFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Empty,
}

impl SchurFactor {
    fn new(m: RM) -> Option<Self> {
        if m.nrows() == 0 {
            return Some(SchurFactor::Empty);
        }
        if let Some(c) = m.clone().cholesky() {
            return Some(SchurFactor::Chol(c));
        }
        let scale = m.diagonal().iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += 1e-13 * scale;
        }
        if let Some(c) = reg.cholesky() {
            return Some(SchurFactor::Chol(c));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(SchurFactor::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, rhs: &RV) -> Option<RV> {
        let out = match self {
            SchurFactor::Chol(c) => c.solve(rhs),
            SchurFactor::Lu(l) => l.solve(rhs)?,
            SchurFactor::Empty => RV::zeros(0),
        };
        if out.iter().all(|v| v.is_finite()) {
            Some(out)
        } else {
            None
        }
    }
}

fn inner(xs: &[RM], x: &RV, zs: &[RM], z: &RV) -> f64 {
    xs.iter().zip(zs).map(|(a, b)| a.dot(b)).sum::<f64>() + x.dot(z)
}

/// Runs the method on a copy of `orig` scaled for conditioning; results are
/// returned in the original units.
fn run(orig: &StdProblem, o: &SdpOptions, hook: &mut dyn FnMut(&Progress) -> Option<Feasibility>) -> RunResult {
    let mut p = orig.clone();
    let m = p.m();
    // Row scaling.
    let mut row_scale = RV::from_element(m, 1.0);
    for i in 0..m {
        let nsq: f64 = p.rows[i].sdp.iter().map(|(_, a)| a.norm_sq()).sum::<f64>()
            + p.rows[i].lp.iter().map(|&(_, a)| a * a).sum::<f64>();
        let s = nsq.sqrt();
        if s > 0.0 {
            row_scale[i] = s;
            for (_, a) in &mut p.rows[i].sdp {
                a.scale(1.0 / s);
            }
            for e in &mut p.rows[i].lp {
                e.1 /= s;
            }
            p.b[i] /= s;
        }
    }
    let s_b = p.b.norm().max(1.0);
    p.b /= s_b;
    let s_c = p.c_norm().max(1.0);
    for c in &mut p.c_sdp {
        *c /= s_c;
    }
    p.c_lp /= s_c;

    let solver = Solver::new(&p);
    let nb = p.dims.len();
    let n_total: f64 = p.dims.iter().sum::<usize>() as f64 + p.n_lp as f64;
    let b_norm = p.b.norm();
    let c_norm = p.c_norm();

    let start = |n: usize| (n as f64).sqrt().max(10.0);
    let mut it = Iterate {
        xs: p.dims.iter().map(|&n| RM::identity(n, n) * start(n)).collect(),
        zs: p.dims.iter().map(|&n| RM::identity(n, n) * start(n)).collect(),
        x: RV::from_element(p.n_lp, 10.0),
        z: RV::from_element(p.n_lp, 10.0),
        y: RV::zeros(m),
    };

    let unscale = |it: &Iterate| -> Iterate {
        Iterate {
            xs: it.xs.iter().map(|x| x * s_b).collect(),
            zs: it.zs.iter().map(|z| z * s_c).collect(),
            x: &it.x * s_b,
            z: &it.z * s_c,
            y: RV::from_iterator(m, (0..m).map(|i| it.y[i] * s_c / row_scale[i])),
        }
    };

    let mut status = RunStatus::Failure;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut last = (f64::NAN, f64::NAN, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for iter in 0..o.max_iter {
        iterations = iter;
        let ax = p.apply(&it.xs, &it.x);
        let rp = &p.b - &ax;
        let (aty, aty_lp) = p.adjoint(&it.y);
        let rd: Vec<RM> = (0..nb).map(|j| &p.c_sdp[j] - &it.zs[j] - &aty[j]).collect();
        let rd_lp = &p.c_lp - &it.z - &aty_lp;
        let xz = inner(&it.xs, &it.x, &it.zs, &it.z);
        let mu = xz / n_total;
        let pobj = inner(&p.c_sdp, &p.c_lp, &it.xs, &it.x);
        let dobj = p.b.dot(&it.y);
        let pinf = rp.norm() / (1.0 + b_norm);
        let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_lp.norm_squared()).sqrt();
        let dinf = rd_norm / (1.0 + c_norm);
        let gap = xz.max((pobj - dobj).abs());
        let rel_gap = gap / (1.0 + pobj.abs() + dobj.abs());
        last = (pobj, dobj, rel_gap, pinf, dinf);

        if pinf <= o.feas_tol && dinf <= o.feas_tol && (gap * s_b * s_c <= o.gap_abs || rel_gap <= o.gap_rel) {
            status = RunStatus::Optimal;
            break;
        }
        let progress = Progress {
            pinf,
            dinf,
            dobj: dobj * s_b * s_c,
            lp: it.x.iter().map(|v| v * s_b).collect(),
        };
        if let Some(f) = hook(&progress) {
            status = RunStatus::Stopped(f);
            break;
        }
        // Farkas-type rays.
        if dobj > 0.0 {
            let ray: f64 = ((0..nb).map(|j| (&aty[j] + &it.zs[j]).norm_squared()).sum::<f64>()
                + (&aty_lp + &it.z).norm_squared())
            .sqrt();
            if ray <= 1e-8 * dobj {
                status = RunStatus::Infeasible;
                break;
            }
        }
        if pobj < 0.0 && ax.norm() <= 1e-8 * (-pobj) {
            status = RunStatus::Unbounded;
            break;
        }
        let size = it
            .xs
            .iter()
            .map(|x| x.norm())
            .fold(it.x.norm(), f64::max)
            .max(it.y.norm());
        if !size.is_finite() || size > 1e13 {
            break;
        }

        let mut zinv = Vec::with_capacity(nb);
        let mut ok = true;
        for z in &it.zs {
            match inv_spd(z) {
                Some(zi) => zinv.push(zi),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || it.z.iter().any(|&v| v <= 0.0) {
            break;
        }
        let Some(factor) = SchurFactor::new(solver.schur(&it, &zinv)) else {
            break;
        };

        let h_pred: Vec<RM> = it.xs.iter().map(|x| -x).collect();
        let h_pred_lp = -&it.x;
        let Some(pred) = solver.direction(&it, &zinv, &factor, &rp, &rd, &rd_lp, &h_pred, &h_pred_lp) else {
            break;
        };
        let dir = if o.predictor_corrector {
            let (ap, ad) = solver.steps(&it, &pred);
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mu_aff = (xz
                + ad * inner(&it.xs, &it.x, &pred.zs, &pred.z)
                + ap * inner(&pred.xs, &pred.x, &it.zs, &it.z)
                + ap * ad * inner(&pred.xs, &pred.x, &pred.zs, &pred.z))
                / n_total;
            let sigma = (mu_aff.max(0.0) / mu).powi(3).clamp(0.0, 1.0);
            let h: Vec<RM> = (0..nb)
                .map(|j| (&zinv[j] * (sigma * mu)) - &it.xs[j] - &pred.xs[j] * &pred.zs[j] * &zinv[j])
                .collect();
            let h_lp = RV::from_iterator(
                p.n_lp,
                (0..p.n_lp).map(|k| sigma * mu / it.z[k] - it.x[k] - pred.x[k] * pred.z[k] / it.z[k]),
            );
            match solver.direction(&it, &zinv, &factor, &rp, &rd, &rd_lp, &h, &h_lp) {
                Some(d) => d,
                None => break,
            }
        } else {
            let h: Vec<RM> = (0..nb).map(|j| (&zinv[j] * (o.sigma * mu)) - &it.xs[j]).collect();
            let h_lp = RV::from_iterator(p.n_lp, (0..p.n_lp).map(|k| o.sigma * mu / it.z[k] - it.x[k]));
            match solver.direction(&it, &zinv, &factor, &rp, &rd, &rd_lp, &h, &h_lp) {
                Some(d) => d,
                None => break,
            }
        };
        let (ap, ad) = solver.steps(&it, &dir);
        let ap = (o.step_fraction * ap).min(1.0);
        let ad = (o.step_fraction * ad).min(1.0);
        for j in 0..nb {
            it.xs[j] += &dir.xs[j] * ap;
            it.zs[j] += &dir.zs[j] * ad;
            it.xs[j] = sym(std::mem::replace(&mut it.xs[j], RM::zeros(0, 0)));
            it.zs[j] = sym(std::mem::replace(&mut it.zs[j], RM::zeros(0, 0)));
        }
        it.x += &dir.x * ap;
        it.z += &dir.z * ad;
        it.y += &dir.y * ad;
        if ap < 1e-9 && ad < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        iterations = iter + 1;
    }
    let (pobj, dobj, rel_gap, pinf, dinf) = last;
    if status == RunStatus::Failure && pinf <= 1e-6 && dinf <= 1e-6 && rel_gap <= 1e-6 {
        status = RunStatus::Optimal;
    }
    RunResult {
        status,
        it: unscale(&it),
        pobj: pobj * s_b * s_c,
        dobj: dobj * s_b * s_c,
        rel_gap,
        iterations,
    }
}

fn to_primal(p: &ConicProblem, xs: &[RM], x: &RV) -> ConicPrimal {
    ConicPrimal {
        blocks: xs.iter().map(real_unembed).collect(),
        scalars: (0..p.scalars).map(|k| x[k]).collect(),
    }
}

pub(super) fn solve(p: &ConicProblem, o: &SdpOptions) -> ConicSolution {
    let std = StdProblem::from_conic(p);
    let res = run(&std, o, &mut |_| None);
    let primal = to_primal(p, &res.it.xs, &res.it.x);
    let status = match res.status {
        RunStatus::Optimal => Status::Optimal,
        RunStatus::Infeasible => Status::Infeasible,
        RunStatus::Unbounded => Status::Unbounded,
        _ => Status::NumericalFailure,
    };
    let objective_value = match status {
        Status::Optimal => p.objective.evaluate(&primal),
        Status::Infeasible => match p.goal {
            Goal::Maximize => f64::NEG_INFINITY,
            Goal::Minimize => f64::INFINITY,
        },
        Status::Unbounded => match p.goal {
            Goal::Maximize => f64::INFINITY,
            Goal::Minimize => f64::NEG_INFINITY,
        },
        Status::NumericalFailure => f64::NAN,
    };
    let _ = (res.pobj, res.dobj);
    ConicSolution {
        status,
        primal,
        duals: res.it.y.iter().map(|v| -v).collect(),
        objective_value,
        gap: res.rel_gap,
        iterations: res.iterations,
    }
}

/// Phase-1: with `X = X' + (1 - u) I` on every block and scalar, minimize
/// `u >= 0` subject to the original equalities. The original problem is
/// strictly feasible with margin `1 - u*`.
pub(super) fn phase_one(p: &ConicProblem, o: &SdpOptions) -> (Feasibility, Option<ConicPrimal>) {
    let base = StdProblem::from_conic(p);
    let mut ph = base.clone();
    let u = base.n_lp;
    ph.n_lp += 1;
    for (i, row) in ph.rows.iter_mut().enumerate() {
        let a_id: f64 =
            row.sdp.iter().map(|(_, a)| a.trace()).sum::<f64>() + row.lp.iter().map(|&(_, a)| a).sum::<f64>();
        if a_id != 0.0 {
            row.lp.push((u, -a_id));
        }
        ph.b[i] -= a_id;
    }
    ph.c_sdp = ph.dims.iter().map(|&n| RM::zeros(n, n)).collect();
    ph.c_lp = RV::zeros(ph.n_lp);
    ph.c_lp[u] = 1.0;

    let margin = o.feasible_margin;
    let mut hook = |pr: &Progress| -> Option<Feasibility> {
        if pr.pinf <= 1e-9 && 1.0 - pr.lp[u] > margin {
            return Some(Feasibility::Feasible);
        }
        if pr.dinf <= 1e-9 && pr.dobj > 1.0 + margin {
            return Some(Feasibility::Infeasible);
        }
        None
    };
    let res = run(&ph, o, &mut hook);
    let t = 1.0 - res.it.x[u];
    let verdict = match res.status {
        RunStatus::Stopped(f) => f,
        RunStatus::Optimal => {
            if t > margin {
                Feasibility::Feasible
            } else {
                Feasibility::Infeasible
            }
        }
        RunStatus::Infeasible => Feasibility::Infeasible,
        RunStatus::Unbounded | RunStatus::Failure => Feasibility::Unknown,
    };
    if verdict != Feasibility::Feasible {
        return (verdict, None);
    }
    let shift = t.min(1.0);
    let xs: Vec<RM> = res
        .it
        .xs
        .iter()
        .map(|x| x + RM::identity(x.nrows(), x.ncols()) * shift)
        .collect();
    let x = RV::from_iterator(base.n_lp, (0..base.n_lp).map(|k| res.it.x[k] + shift));
    (verdict, Some(to_primal(p, &xs, &x)))
}
