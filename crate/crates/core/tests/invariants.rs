//! Seeded randomized invariants that tie the layers together: state-space
//! algebra vs polynomial arithmetic, multiplier stacking vs λ-linearity,
//! augmented realizations vs transfer-function cascades, certificates vs
//! exhaustive linear-slope closed loops, and report self-consistency.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rhocert_core::kyp::VarLabel;
use rhocert_core::lti::example_plant_tight;
use rhocert_core::*;

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn random_plant(rng: &mut StdRng, n: usize, target_sr: f64) -> StateSpace {
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let raw = spectral_radius(&a);
        if raw < 1e-3 {
            continue;
        }
        let a = a * (target_sr / raw);
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        return StateSpace::new(a, b, c, DMatrix::zeros(1, 1)).expect("consistent dims");
    }
}

/// The companion realization evaluates to the same rational function as
/// direct polynomial arithmetic, at random points off the poles.
#[test]
fn transfer_evaluations_match_polynomial_ratio() {
    let mut rng = StdRng::seed_from_u64(101);
    let mut checked = 0;
    while checked < 40 {
        let n = rng.random_range(1..=4usize);
        let den: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
        if den[0].abs() < 0.5 {
            continue;
        }
        let num: Vec<f64> = (0..=rng.random_range(0..n))
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let tf = TransferFunction::new(num.clone(), den.clone()).expect("proper by construction");
        let g = ss_from_tf(&tf).expect("companion form");
        let z = Complex64::from_polar(1.3, rng.random_range(0.0..std::f64::consts::TAU));
        let dz = horner(&den, z);
        if dz.norm() < 1e-3 {
            continue;
        }
        let direct = horner(&num, z) / dz;
        let via_ss = ss_eval(&g, z).expect("off the poles")[(0, 0)];
        let err = (direct - via_ss).norm();
        assert!(
            err <= 1e-8 * (1.0 + direct.norm()),
            "mismatch {err:.3e} at z = {z} for den {den:?}"
        );
        checked += 1;
    }
}

/// A stacked family evaluates to the λ-weighted sum of its parts.
#[test]
fn stacked_multiplier_is_lambda_linear() {
    let mut rng = StdRng::seed_from_u64(202);
    for _ in 0..25 {
        let beta = rng.random_range(0.4..1.5);
        let rho = rng.random_range(0.75..1.0);
        let parts = vec![
            make_sector(0.0, beta).expect("sector"),
            make_off_by_k(0.0, beta, rng.random_range(1..=3), rho).expect("delay"),
            make_zames_falb_fir(0.0, beta, &[0.1, 0.2, 0.1], rho).expect("taps admissible"),
        ];
        let singles: Vec<_> = parts.clone();
        let stacked = stack(parts).expect("stacks");
        let lambdas: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0)).collect();
        let z = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let combined = pi_eval(&stacked, z, &lambdas).expect("evaluates");
        let mut expected = DMatrix::<Complex64>::zeros(2, 2);
        for (part, &l) in singles.iter().zip(&lambdas) {
            expected += part.pi_at(z).expect("evaluates") * Complex64::new(l, 0.0);
        }
        let err = (&combined - &expected).norm();
        assert!(
            err <= 1e-10 * (1.0 + expected.norm()),
            "λ-linearity violated by {err:.3e}"
        );
    }
}

/// The augmented realization used for the KYP reduction has the transfer
/// function Ψ(z)·[G(z); 1].
#[test]
fn augmented_realization_matches_cascade() {
    let mut rng = StdRng::seed_from_u64(303);
    for _ in 0..20 {
        let n = rng.random_range(1..=3usize);
        let target = rng.random_range(0.2..0.7);
        let g = random_plant(&mut rng, n, target);
        let rho = 0.95;
        let stacked = stack(vec![
            make_sector(0.0, 1.0).expect("sector"),
            make_off_by_k(0.0, 1.0, 1, rho).expect("delay 1"),
            make_off_by_k(0.0, 1.0, 2, rho).expect("delay 2"),
        ])
        .expect("stacks");
        let aug = build_augmented_stacked(&g, &stacked).expect("augments");
        let z = Complex64::from_polar(1.05, rng.random_range(0.0..std::f64::consts::TAU));
        let lhs = ss_eval(&aug.as_state_space(), z).expect("off poles");
        let gz = ss_eval(&g, z).expect("off poles")[(0, 0)];
        let psi_z = ss_eval(stacked.psi(), z).expect("filter is FIR");
        let mut stacked_io = DMatrix::<Complex64>::zeros(2, 1);
        stacked_io[(0, 0)] = gz;
        stacked_io[(1, 0)] = Complex64::new(1.0, 0.0);
        let rhs = psi_z * stacked_io;
        let err = (&lhs - &rhs).norm();
        assert!(
            err <= 1e-8 * (1.0 + rhs.norm()),
            "cascade mismatch {err:.3e} at z = {z}"
        );
    }
}

/// Soundness against the linear corner cases: a rate certified for the
/// whole sector family must dominate the spectral radius of every linear
/// closed loop with slope inside the sector.
#[test]
fn certified_rate_bounds_all_linear_sector_slopes() {
    let mut rng = StdRng::seed_from_u64(404);
    let opts = CertifyOptions::default();
    let mut certified_count = 0;
    for _ in 0..10 {
        let n = rng.random_range(1..=3usize);
        let target = rng.random_range(0.2..0.6);
        let g = random_plant(&mut rng, n, target);
        let beta = rng.random_range(0.3..1.2);
        let delta = NonlinearityModel::sector_only(0.0, beta).expect("valid sector");
        let family = vec![
            FamilySpec::Sector {
                alpha: None,
                beta: None,
            },
            FamilySpec::OffByK { k: 1 },
        ];
        let cert = match minimize_rho(&g, &delta, &family, 1e-3, &opts) {
            Ok(c) => c,
            Err(Error::BiboUncertifiable { .. }) => continue,
            Err(e) => panic!("unexpected failure: {e}"),
        };
        certified_count += 1;
        assert!(cert.rho_certified > cert.rho_lower_limit);
        for j in 0..=10 {
            let s = beta * j as f64 / 10.0;
            let cl = linearized_closed_loop(&g, s).expect("well posed, D = 0");
            let sr = spectral_radius(cl.a());
            assert!(
                sr <= cert.rho_certified + 1e-9,
                "slope {s:.3} gives closed-loop radius {sr:.6} above certified {:.6}",
                cert.rho_certified
            );
        }
    }
    assert!(
        certified_count >= 5,
        "too few certifiable random instances ({certified_count}/10) for the check to bite"
    );
}

/// A certificate can be replayed: reassembling the decision vector from the
/// reported (P, λ) and evaluating the LMI reproduces the reported margin.
#[test]
fn certificate_replays_through_the_lmi() {
    let g = example_plant_tight();
    let delta = NonlinearityModel::b_arctan(1.0);
    let family = vec![
        FamilySpec::Sector {
            alpha: None,
            beta: None,
        },
        FamilySpec::OffByK { k: 1 },
    ];
    let rho = 0.75;
    let opts = CertifyOptions::default();
    let outcome = certify_at(&g, &delta, &family, rho, &opts).expect("runs");
    let cert = outcome.certificate().expect("0.75 is certifiable").clone();
    assert!(cert.margin > 0.0);
    assert!(cert.lambdas.iter().all(|&l| l >= 0.0));
    assert_eq!(cert.p, cert.p.transpose(), "P must be symmetric");
    assert!(cert.grid_check.passes);

    // Rebuild the same LMI and the decision vector x from (P, λ).
    let stacked = stack(
        family
            .iter()
            .map(|s| s.build(&delta, rho).expect("builds"))
            .collect(),
    )
    .expect("stacks");
    let aug = build_augmented_stacked(&g, &stacked).expect("augments");
    let eps = default_eps(&aug);
    let ami = build_lmi(&aug, &stacked.m_blocks(), rho, eps).expect("assembles");
    let x = DVector::from_iterator(
        ami.nvars(),
        ami.labels.iter().map(|label| match *label {
            VarLabel::P(i, j) => cert.p[(i, j)],
            VarLabel::Lambda(i) => cert.lambdas[i],
        }),
    );
    let (lmax, _) = max_eig_sym(&ami.eval(&x));
    let replayed_margin = -lmax;
    assert!(
        (replayed_margin - cert.margin).abs() <= 1e-6 * (1.0 + cert.margin.abs()),
        "replayed margin {replayed_margin:.6e} vs reported {:.6e}",
        cert.margin
    );
}

/// The bisection's probe log actually brackets the answer: every feasible
/// probe sits at or above the certified rate, every infeasible probe below.
#[test]
fn bisection_probe_log_brackets_the_answer() {
    let g = example_plant_tight();
    let delta = NonlinearityModel::b_arctan(1.0);
    let family = vec![FamilySpec::Sector {
        alpha: None,
        beta: None,
    }];
    let cert = minimize_rho(&g, &delta, &family, 1e-3, &CertifyOptions::default())
        .expect("sector family certifies");
    assert!(cert.rho_certified <= 1.0 && cert.rho_certified > cert.rho_lower_limit);
    assert!(cert.margin > 0.0);
    assert!(cert.warnings.is_empty(), "α = 0 and D = 0: no caveats");
    assert!(cert.feasible_at.iter().any(|&(_, f)| f));
    for &(rho, feasible) in &cert.feasible_at {
        if feasible {
            assert!(rho >= cert.rho_certified - 1e-12, "feasible probe {rho} below answer");
        } else {
            assert!(rho < cert.rho_certified, "infeasible probe {rho} above answer");
        }
    }
}

/// Tap validation and the FIR constructor accept exactly the same inputs.
#[test]
fn fir_tap_validation_consistent_with_constructor() {
    let mut rng = StdRng::seed_from_u64(505);
    for _ in 0..60 {
        let len = rng.random_range(1..=4usize);
        let mut h: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..0.5)).collect();
        if rng.random_range(0..3) == 0 {
            // Occasionally push the weighted sum past 1 or a tap below 0.
            if rng.random_range(0..2) == 0 {
                h.iter_mut().for_each(|t| *t *= 4.0);
            } else {
                h[rng.random_range(0..len)] = -0.1;
            }
        }
        let rho = rng.random_range(0.7..1.0);
        let verdict = validate_rho_zf(&h, rho);
        let built = make_zames_falb_fir(0.0, 1.0, &h, rho);
        assert_eq!(
            verdict.ok,
            built.is_ok(),
            "validator (weighted sum {}, negative index {:?}) disagrees with the \
             constructor on h = {h:?}, rho = {rho}",
            verdict.weighted_sum,
            verdict.negative_index
        );
    }
}
