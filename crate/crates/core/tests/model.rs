use dwpt::mathcore::{c, CMatrix, CVector, C64};
use dwpt::model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn cn(rng: &mut ChaCha8Rng, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(s * re, s * im)
}

fn random_design(rng: &mut ChaCha8Rng, m: usize, rho: f64, scale: f64) -> Design {
    Design {
        f: CMatrix::from_fn(m, m, |_, _| cn(rng, scale)),
        w: CVector::from_fn(m, |_, _| cn(rng, scale)),
        rho,
    }
}

fn small_params(m: usize) -> SystemParams {
    SystemParams {
        m,
        p_pt: 2.0,
        p_pr: 1.5,
        p_sr: 0.7,
        sigma_r2: 0.5,
        sigma_c2: 0.3,
        sigma_p2: 0.2,
        sigma_s2: 0.4,
        ..SystemParams::default()
    }
}

#[test]
fn transmit_power_matches_signal_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = 3;
    let p = small_params(m);
    let ch = generate_channels(&Geometry::default(), &p, 5);
    let ch = ChannelSet {
        g: ch.g * c(3.0, 0.0),
        h_p: ch.h_p * c(3.0, 0.0),
        h_s: ch.h_s * c(3.0, 0.0),
    };
    let d = random_design(&mut rng, m, 0.6, 1.0);
    let n = 100_000;
    let mut acc = 0.0;
    let sr = d.rho.sqrt();
    for _ in 0..n {
        let xp = cn(&mut rng, p.p_pt);
        let xpp = cn(&mut rng, p.p_pr);
        let xsp = cn(&mut rng, p.p_sr);
        let xs = cn(&mut rng, 1.0);
        let nr = CVector::from_fn(m, |_, _| cn(&mut rng, p.sigma_r2));
        let nc = CVector::from_fn(m, |_, _| cn(&mut rng, p.sigma_c2));
        let y = (&ch.g * xp + &ch.h_p * xpp + &ch.h_s * xsp + nr) * c(sr, 0.0) + nc;
        let x = &d.f * y + &d.w * xs;
        acc += x.norm_squared();
    }
    let mc = acc / n as f64;
    let exact = st_transmit_power(&p, &ch, &d);
    assert!((mc - exact).abs() < 0.01 * exact, "mc {mc} exact {exact}");
}

#[test]
fn sinrs_match_signal_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let m = 2;
    let p = small_params(m);
    let ch = ChannelSet {
        g: CVector::from_fn(m, |_, _| cn(&mut rng, 1.0)),
        h_p: CVector::from_fn(m, |_, _| cn(&mut rng, 1.0)),
        h_s: CVector::from_fn(m, |_, _| cn(&mut rng, 1.0)),
    };
    let d = random_design(&mut rng, m, 0.5, 1.0);
    let n = 1_000_000;
    let sr = d.rho.sqrt();
    let (mut sp, mut ip, mut ss, mut is) = (0.0, 0.0, 0.0, 0.0);
    let hpf = ch.h_p.adjoint() * &d.f;
    let hsf = ch.h_s.adjoint() * &d.f;
    for _ in 0..n {
        let xp = cn(&mut rng, p.p_pt);
        let xpp = cn(&mut rng, p.p_pr);
        let xsp = cn(&mut rng, p.p_sr);
        let xs = cn(&mut rng, 1.0);
        let nr = CVector::from_fn(m, |_, _| cn(&mut rng, p.sigma_r2));
        let nc = CVector::from_fn(m, |_, _| cn(&mut rng, p.sigma_c2));
        let np = cn(&mut rng, p.sigma_p2);
        let ns = cn(&mut rng, p.sigma_s2);
        // PR cancels its own energy signal, SR likewise.
        let want_p = (&hpf * &ch.g)[0] * xp * sr;
        let rest_p =
            (&hpf * &ch.h_s)[0] * xsp * sr + ch.h_p.dotc(&d.w) * xs + (&hpf * (nr.clone() * c(sr, 0.0) + &nc))[0] + np;
        let want_s = ch.h_s.dotc(&d.w) * xs;
        let rest_s =
            ((&hsf * &ch.g)[0] * xp + (&hsf * &ch.h_p)[0] * xpp) * sr + (&hsf * (nr * c(sr, 0.0) + nc))[0] + ns;
        sp += want_p.norm_sqr();
        ip += rest_p.norm_sqr();
        ss += want_s.norm_sqr();
        is += rest_s.norm_sqr();
    }
    let mc_p = sp / ip;
    let mc_s = ss / is;
    let ex_p = sinr_pr(&p, &ch, &d);
    let ex_s = sinr_sr(&p, &ch, &d);
    assert!((mc_p - ex_p).abs() < 0.02 * ex_p, "{mc_p} vs {ex_p}");
    assert!((mc_s - ex_s).abs() < 0.02 * ex_s, "{mc_s} vs {ex_s}");
}

/// Second implementation: list every independent source's coefficient in the
/// received signal after cancelling the estimated self-interference.
fn sinr_by_sources(p: &SystemParams, uc: &UncertainChannelSet, d: &Design, dp: &CVector, ds: &CVector) -> (f64, f64) {
    let hp = &uc.h_p_est + dp;
    let hs = &uc.h_s_est + ds;
    let q = |a: &CVector, b: &CVector| (a.adjoint() * &d.f * b)[0];
    let r = d.rho;
    let noise = |h: &CVector| (r * p.sigma_r2 + p.sigma_c2) * (h.adjoint() * &d.f).norm_squared();
    // Primary receiver: sources x_p, x_p', x_s', x_s, noises.
    let want = r * p.p_pt * q(&hp, &uc.g).norm_sqr();
    let self_i = r * p.p_pr * (q(&hp, &hp) - q(&uc.h_p_est, &uc.h_p_est)).norm_sqr();
    let other = r * p.p_sr * q(&hp, &hs).norm_sqr() + hp.dotc(&d.w).norm_sqr();
    let gp = want / (self_i + other + noise(&hp) + p.sigma_p2);
    let want = hs.dotc(&d.w).norm_sqr();
    let self_i = r * p.p_sr * (q(&hs, &hs) - q(&uc.h_s_est, &uc.h_s_est)).norm_sqr();
    let other = r * p.p_pr * q(&hs, &hp).norm_sqr() + r * p.p_pt * q(&hs, &uc.g).norm_sqr();
    let gs = want / (self_i + other + noise(&hs) + p.sigma_s2);
    (gp, gs)
}

#[test]
fn robust_sinrs_match_source_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let p = small_params(4);
    for trial in 0..50 {
        let ch = generate_channels(&Geometry::default(), &p, trial);
        let uc = UncertainChannelSet::new(&ch, 0.05, 0.08);
        let rho: f64 = rng.gen();
        let d = random_design(&mut rng, 4, rho, 1.0);
        let (dp, ds) = sample_uncertainty(&uc, trial + 100);
        let (a, b) = robust_sinrs(&p, &uc, &d, &dp, &ds).unwrap();
        let (a2, b2) = sinr_by_sources(&p, &uc, &d, &dp, &ds);
        assert!((a - a2).abs() <= 1e-10 * a2.max(1.0));
        assert!((b - b2).abs() <= 1e-10 * b2.max(1.0));
    }
}

#[test]
fn robust_sr_sinr_zero_without_beam() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let p = SystemParams::default();
    let ch = generate_channels(&Geometry::default(), &p, 1);
    let uc = UncertainChannelSet::new(&ch, 0.1, 0.1);
    let mut d = random_design(&mut rng, 4, 0.3, 1.0);
    d.w = CVector::zeros(4);
    for s in 0..20 {
        let (dp, ds) = sample_uncertainty(&uc, s);
        assert_eq!(robust_sinrs(&p, &uc, &d, &dp, &ds).unwrap().1, 0.0);
    }
}

#[test]
fn sinrs_invariant_under_common_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let p = SystemParams::default();
    for seed in 0..20 {
        let ch = generate_channels(&Geometry::default(), &p, seed);
        let d = random_design(&mut rng, 4, 0.5, 0.1);
        // Per-antenna phases D: h -> D h, F -> D F D^H, w -> D w.
        let dm = CMatrix::from_diagonal(&CVector::from_fn(4, |_, _| {
            C64::from_polar(1.0, rng.gen_range(0.0..6.28))
        }));
        let ch2 = ChannelSet {
            g: &dm * &ch.g * C64::from_polar(1.0, 0.7),
            h_p: &dm * &ch.h_p,
            h_s: &dm * &ch.h_s,
        };
        let d2 = Design {
            f: &dm * &d.f * dm.adjoint(),
            w: &dm * &d.w * C64::from_polar(1.0, -1.1),
            rho: d.rho,
        };
        for (a, b) in [
            (sinr_pr(&p, &ch, &d), sinr_pr(&p, &ch2, &d2)),
            (sinr_sr(&p, &ch, &d), sinr_sr(&p, &ch2, &d2)),
        ] {
            assert!((a - b).abs() <= 1e-10 * a.max(1e-12));
        }
    }
}

#[test]
fn channel_statistics() {
    let p = SystemParams::default();
    let geom = Geometry::default();
    let n = 100_000;
    let mean: f64 = (0..n)
        .map(|s| generate_channels(&geom, &p, s).g.norm_squared())
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.16).abs() < 0.02 * 0.16, "mean {mean}");
}

#[test]
fn ball_radius_law() {
    let m = 4;
    let ch = ChannelSet {
        g: CVector::zeros(m),
        h_p: CVector::zeros(m),
        h_s: CVector::zeros(m),
    };
    let eps = 0.3;
    let uc = UncertainChannelSet::new(&ch, eps, eps);
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut u: Vec<f64> = (0..n)
        .map(|_| {
            sample_uncertainty_rng(&uc, &mut rng, BallSampling::Uniform)
                .0
                .norm_squared()
                / (eps * eps)
        })
        .collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // CDF of ||dh||^2 / eps^2 is x^M.
    let mut ks: f64 = 0.0;
    for (i, &x) in u.iter().enumerate() {
        let f = x.powi(m as i32);
        ks = ks
            .max((f - i as f64 / n as f64).abs())
            .max((f - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks < 0.01, "ks {ks}");
}
