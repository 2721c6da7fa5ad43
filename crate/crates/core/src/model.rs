//! Network parameters, channel data and exact evaluators.
//!
//! Powers and noise variances are in mW. Rates are `log2(1 + sinr)` in
//! bps/Hz without a two-phase pre-log factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{c, CMatrix, CVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Antennas at the secondary transmitter.
    pub m: usize,
    /// Primary transmitter power.
    pub p_pt: f64,
    /// Energy-transfer power of the primary receiver.
    pub p_pr: f64,
    /// Energy-transfer power of the secondary receiver.
    pub p_sr: f64,
    /// Antenna noise at the relay.
    pub sigma_r2: f64,
    /// Conversion (circuit) noise at the relay.
    pub sigma_c2: f64,
    pub sigma_p2: f64,
    pub sigma_s2: f64,
    /// Energy conversion efficiency.
    pub xi: f64,
    /// Primary rate demand in bps/Hz.
    pub r_p_min: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m: 4,
            p_pt: 1000.0,
            p_pr: 1000.0,
            p_sr: 1000.0,
            sigma_r2: 1.0,
            sigma_c2: 1.0,
            sigma_p2: 1.0,
            sigma_s2: 1.0,
            xi: 0.5,
            r_p_min: 2.5,
        }
    }
}

impl SystemParams {
    /// Primary SINR demand `2^R - 1`.
    pub fn gamma_p_min(&self) -> f64 {
        self.r_p_min.exp2() - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let powers = [self.p_pt, self.p_pr, self.p_sr];
        let noises = [self.sigma_r2, self.sigma_c2, self.sigma_p2, self.sigma_s2];
        if self.m == 0 {
            return Err(Error::InvalidInput("antenna count must be at least 1".into()));
        }
        if powers.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput("powers must be finite and nonnegative".into()));
        }
        if noises.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("noise variances must be positive".into()));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::InvalidInput("conversion efficiency must lie in (0, 1]".into()));
        }
        if !(self.r_p_min >= 0.0 && self.r_p_min.is_finite()) {
            return Err(Error::InvalidInput("rate demand must be nonnegative".into()));
        }
        Ok(())
    }

    /// Total received power at the relay before splitting.
    pub fn received_power(&self, ch: &ChannelSet) -> f64 {
        self.p_pt * ch.g.norm_squared()
            + self.p_pr * ch.h_p.norm_squared()
            + self.p_sr * ch.h_s.norm_squared()
            + self.sigma_r2
    }
}

/// Channels between the relay and the primary transmitter (`g`), the primary
/// receiver (`h_p`) and the secondary receiver (`h_s`).
///
/// Serialized as `g`, `h_p`, `h_s` arrays of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct ChannelSet {
    pub g: CVector,
    pub h_p: CVector,
    pub h_s: CVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    g: Vec<[f64; 2]>,
    h_p: Vec<[f64; 2]>,
    h_s: Vec<[f64; 2]>,
}

fn to_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(v: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|p| c(p[0], p[1])))
}

impl From<ChannelSet> for ChannelJson {
    fn from(ch: ChannelSet) -> Self {
        Self {
            g: to_pairs(&ch.g),
            h_p: to_pairs(&ch.h_p),
            h_s: to_pairs(&ch.h_s),
        }
    }
}

impl TryFrom<ChannelJson> for ChannelSet {
    type Error = Error;

    fn try_from(j: ChannelJson) -> Result<Self> {
        let ch = Self {
            g: from_pairs(&j.g),
            h_p: from_pairs(&j.h_p),
            h_s: from_pairs(&j.h_s),
        };
        ch.validate(ch.m())?;
        Ok(ch)
    }
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        for (name, v) in [("g", &self.g), ("h_p", &self.h_p), ("h_s", &self.h_s)] {
            if v.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {}, expected {m}",
                    v.len()
                )));
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("channel json: {e}")))
    }
}

/// Estimated channels with spherical error regions around `h_p` and `h_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertainChannelSet {
    pub g: CVector,
    pub h_p_est: CVector,
    pub h_s_est: CVector,
    pub eps_p: f64,
    pub eps_s: f64,
}

impl UncertainChannelSet {
    pub fn new(nominal: &ChannelSet, eps_p: f64, eps_s: f64) -> Self {
        Self {
            g: nominal.g.clone(),
            h_p_est: nominal.h_p.clone(),
            h_s_est: nominal.h_s.clone(),
            eps_p,
            eps_s,
        }
    }

    pub fn nominal(&self) -> ChannelSet {
        ChannelSet {
            g: self.g.clone(),
            h_p: self.h_p_est.clone(),
            h_s: self.h_s_est.clone(),
        }
    }

    pub fn actual(&self, dh_p: &CVector, dh_s: &CVector) -> ChannelSet {
        ChannelSet {
            g: self.g.clone(),
            h_p: &self.h_p_est + dh_p,
            h_s: &self.h_s_est + dh_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_p >= 0.0 && self.eps_s >= 0.0) {
            return Err(Error::InvalidInput("uncertainty radii must be nonnegative".into()));
        }
        self.nominal().validate(self.g.len())
    }

    fn check_ball(&self, dh_p: &CVector, dh_s: &CVector) -> Result<()> {
        for (v, r) in [(dh_p, self.eps_p), (dh_s, self.eps_s)] {
            if v.len() != self.g.len() {
                return Err(Error::DimensionMismatch("error vector length".into()));
            }
            let n = v.norm();
            if n > r * (1.0 + 1e-9) + 1e-15 {
                return Err(Error::OutOfUncertaintyBall { norm: n, radius: r });
            }
        }
        Ok(())
    }
}

/// Relay matrix `f`, secondary beamformer `w` and splitting ratio `rho`
/// (the share of received power sent to information decoding).
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub f: CMatrix,
    pub w: CVector,
    pub rho: f64,
}

impl Design {
    pub fn zero(m: usize, rho: f64) -> Self {
        Self {
            f: CMatrix::zeros(m, m),
            w: CVector::zeros(m),
            rho,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.f.shape() != (m, m) || self.w.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "design is not sized for {m} antennas"
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidInput(format!(
                "splitting ratio {} outside [0, 1]",
                self.rho
            )));
        }
        if !crate::mathcore::is_finite(&self.f) || self.w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("design has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Planar node positions in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub pt: [f64; 2],
    pub st: [f64; 2],
    pub pr: [f64; 2],
    pub sr: [f64; 2],
    pub pathloss_exponent: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            pt: [-5.0, 0.0],
            st: [0.0, 0.0],
            pr: [5.0, -1.0],
            sr: [5.0, 1.0],
            pathloss_exponent: 2.0,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let nodes = [self.pt, self.st, self.pr, self.sr];
        for i in 0..4 {
            for j in i + 1..4 {
                if dist(nodes[i], nodes[j]) == 0.0 {
                    return Err(Error::InvalidInput("two nodes share a position".into()));
                }
            }
        }
        if !self.pathloss_exponent.is_finite() {
            return Err(Error::InvalidInput("path-loss exponent must be finite".into()));
        }
        Ok(())
    }

    /// Per-entry variances of `g`, `h_p`, `h_s`.
    pub fn variances(&self) -> (f64, f64, f64) {
        let v = |a| dist(a, self.st).powf(-self.pathloss_exponent);
        (v(self.pt), v(self.pr), v(self.sr))
    }
}

pub fn harvested_power(p: &SystemParams, ch: &ChannelSet, rho: f64) -> f64 {
    p.xi * (1.0 - rho) * p.received_power(ch)
}

pub fn st_transmit_power(p: &SystemParams, ch: &ChannelSet, d: &Design) -> f64 {
    let f2 = d.f.norm_squared();
    d.rho
        * (p.p_pt * (&d.f * &ch.g).norm_squared()
            + p.p_pr * (&d.f * &ch.h_p).norm_squared()
            + p.p_sr * (&d.f * &ch.h_s).norm_squared()
            + p.sigma_r2 * f2)
        + p.sigma_c2 * f2
        + d.w.norm_squared()
}

/// Relay transmit power minus harvested power; a design meets energy
/// causality when this is `<= 0`.
pub fn power_margin(p: &SystemParams, ch: &ChannelSet, d: &Design) -> f64 {
    st_transmit_power(p, ch, d) - harvested_power(p, ch, d.rho)
}

fn abs2(z: crate::mathcore::C64) -> f64 {
    z.norm_sqr()
}

/// `x^H F` as a row (stored as a column of conjugates is avoided on purpose).
fn row_times(x: &CVector, f: &CMatrix) -> nalgebra::RowDVector<crate::mathcore::C64> {
    x.adjoint() * f
}

/// SINR at the primary receiver when the true channels are `est + err` and
/// only the `est` part of the self-interference is cancelled.
fn pr_terms(p: &SystemParams, g: &CVector, hp_est: &CVector, dhp: &CVector, hs: &CVector, d: &Design) -> (f64, f64) {
    let hp = hp_est + dhp;
    let hpf = row_times(&hp, &d.f);
    let mu1 = d.rho * p.p_pt * abs2((&hpf * g)[0]);
    let resid = (row_times(dhp, &d.f) * &hp)[0] + (row_times(hp_est, &d.f) * dhp)[0];
    let mu2 = d.rho * p.p_pr * abs2(resid);
    let mu3 = d.rho * p.p_sr * abs2((&hpf * hs)[0]) + abs2(hp.dotc(&d.w));
    let mu4 = (d.rho * p.sigma_r2 + p.sigma_c2) * hpf.norm_squared() + p.sigma_p2;
    (mu1, mu2 + mu3 + mu4)
}

fn sr_terms(p: &SystemParams, g: &CVector, hs_est: &CVector, dhs: &CVector, hp: &CVector, d: &Design) -> (f64, f64) {
    let hs = hs_est + dhs;
    let hsf = row_times(&hs, &d.f);
    let eta1 = abs2(hs.dotc(&d.w));
    let resid = (row_times(dhs, &d.f) * &hs)[0] + (row_times(hs_est, &d.f) * dhs)[0];
    let eta2 = d.rho * p.p_sr * abs2(resid);
    let eta3 = d.rho * p.p_pr * abs2((&hsf * hp)[0]) + d.rho * p.p_pt * abs2((&hsf * g)[0]);
    let eta4 = (d.rho * p.sigma_r2 + p.sigma_c2) * hsf.norm_squared() + p.sigma_s2;
    (eta1, eta2 + eta3 + eta4)
}

pub fn sinr_pr(p: &SystemParams, ch: &ChannelSet, d: &Design) -> f64 {
    let zero = CVector::zeros(ch.m());
    let (num, den) = pr_terms(p, &ch.g, &ch.h_p, &zero, &ch.h_s, d);
    num / den
}

pub fn sinr_sr(p: &SystemParams, ch: &ChannelSet, d: &Design) -> f64 {
    let zero = CVector::zeros(ch.m());
    let (num, den) = sr_terms(p, &ch.g, &ch.h_s, &zero, &ch.h_p, d);
    num / den
}

pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// `(R_p, R_s)` in bps/Hz.
pub fn rates(p: &SystemParams, ch: &ChannelSet, d: &Design) -> (f64, f64) {
    (rate(sinr_pr(p, ch, d)), rate(sinr_sr(p, ch, d)))
}

/// `(sinr_pr, sinr_sr)` under channel errors `dh_p`, `dh_s`, with residual
/// self-interference from the uncancelled error part.
pub fn robust_sinrs(
    p: &SystemParams,
    uc: &UncertainChannelSet,
    d: &Design,
    dh_p: &CVector,
    dh_s: &CVector,
) -> Result<(f64, f64)> {
    uc.check_ball(dh_p, dh_s)?;
    let hp = &uc.h_p_est + dh_p;
    let hs = &uc.h_s_est + dh_s;
    let (n1, d1) = pr_terms(p, &uc.g, &uc.h_p_est, dh_p, &hs, d);
    let (n2, d2) = sr_terms(p, &uc.g, &uc.h_s_est, dh_s, &hp, d);
    Ok((n1 / d1, n2 / d2))
}

/// Relay transmit power minus harvested power under channel errors.
pub fn robust_power_margin(
    p: &SystemParams,
    uc: &UncertainChannelSet,
    d: &Design,
    dh_p: &CVector,
    dh_s: &CVector,
) -> Result<f64> {
    uc.check_ball(dh_p, dh_s)?;
    Ok(power_margin(p, &uc.actual(dh_p, dh_s), d))
}

fn cn_vector(rng: &mut ChaCha8Rng, m: usize, var: f64) -> CVector {
    let n = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite variance");
    CVector::from_iterator(m, (0..m).map(|_| c(n.sample(rng), n.sample(rng))))
}

/// Rayleigh channels with per-entry variance `d^-alpha`; `g`, then `h_p`, then
/// `h_s` are drawn from one ChaCha8 stream seeded by `seed`.
pub fn generate_channels(geom: &Geometry, p: &SystemParams, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (vg, vp, vs) = geom.variances();
    let g = cn_vector(&mut rng, p.m, vg);
    let h_p = cn_vector(&mut rng, p.m, vp);
    let h_s = cn_vector(&mut rng, p.m, vs);
    ChannelSet { g, h_p, h_s }
}

fn unit_direction(rng: &mut ChaCha8Rng, m: usize) -> CVector {
    loop {
        let v = CVector::from_iterator(
            m,
            (0..m).map(|_| c(StandardNormal.sample(rng), StandardNormal.sample(rng))),
        );
        let n = v.norm();
        if n > 1e-300 {
            return v / c(n, 0.0);
        }
    }
}

/// Where in the ball error vectors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BallSampling {
    /// Uniform in the ball.
    Uniform,
    /// Uniform on the sphere `||dh|| = eps`.
    Boundary,
}

fn ball_draw(rng: &mut ChaCha8Rng, m: usize, eps: f64, mode: BallSampling) -> CVector {
    let dir = unit_direction(rng, m);
    let r = match mode {
        BallSampling::Boundary => eps,
        BallSampling::Uniform => eps * rng.gen::<f64>().powf(1.0 / (2 * m) as f64),
    };
    dir * c(r, 0.0)
}

/// Uniform draws `(dh_p, dh_s)` from the two error balls.
pub fn sample_uncertainty(uc: &UncertainChannelSet, seed: u64) -> (CVector, CVector) {
    sample_uncertainty_with(uc, seed, BallSampling::Uniform)
}

pub fn sample_uncertainty_with(uc: &UncertainChannelSet, seed: u64, mode: BallSampling) -> (CVector, CVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_uncertainty_rng(uc, &mut rng, mode)
}

/// Draws from an existing stream, for callers that need many samples.
pub fn sample_uncertainty_rng(
    uc: &UncertainChannelSet,
    rng: &mut ChaCha8Rng,
    mode: BallSampling,
) -> (CVector, CVector) {
    let m = uc.g.len();
    let dp = ball_draw(rng, m, uc.eps_p, mode);
    let ds = ball_draw(rng, m, uc.eps_s, mode);
    (dp, ds)
}
