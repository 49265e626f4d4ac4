//! Embedded invariant suite behind the `selftest` CLI command: cheap,
//! deterministic cross-checks of the factorizations, the LMI reduction, and
//! the solver, runnable in an installed binary without the test harness.

use crate::certify::{certify_at, CertifyOptions, FamilySpec};
use crate::iqc::{make_off_by_k, make_sector, time_domain_check, NonlinearityModel};
use crate::kyp::{build_augmented_stacked, build_lmi, default_eps};
use crate::lti::{example_plant_tight, linearized_closed_loop, poly_roots, spectral_radius, ss_eval};
use crate::solver::{solve_feasibility, SolverOptions, Status};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Outcome of the embedded suite.
#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub passed: usize,
    pub failed: usize,
    /// One message per failed check.
    pub failures: Vec<String>,
}

impl SelftestReport {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

struct Runner {
    passed: usize,
    failures: Vec<String>,
    verbose: bool,
}

impl Runner {
    fn check(&mut self, name: &str, body: impl FnOnce() -> std::result::Result<(), String>) {
        match body() {
            Ok(()) => {
                self.passed += 1;
                if self.verbose {
                    println!("selftest: PASS  {name}");
                }
            }
            Err(msg) => {
                self.failures.push(format!("{name}: {msg}"));
                if self.verbose {
                    println!("selftest: FAIL  {name}: {msg}");
                }
            }
        }
    }
}

fn expect(cond: bool, msg: impl Fn() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Deterministic pseudo-random stream (xorshift64*), used instead of an RNG
/// dependency so the suite runs identically everywhere.
struct Stream(u64);

impl Stream {
    fn next_unit(&mut self) -> f64 {
        // xorshift64* — adequate for generating test signals.
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        let bits = x.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11;
        bits as f64 / (1u64 << 53) as f64
    }
    fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }
}

/// Runs the suite; `verbose` prints one line per check.
pub fn run(verbose: bool) -> SelftestReport {
    let mut r = Runner {
        passed: 0,
        failures: Vec::new(),
        verbose,
    };

    r.check("delay-multiplier factorization matches closed form", || {
        let (beta, k, rho) = (1.0, 1usize, 0.8f64);
        let iqc = make_off_by_k(0.0, beta, k, rho).map_err(|e| e.to_string())?;
        for j in 0..32 {
            let th = 0.1 + 0.196 * j as f64;
            let z = Complex64::new(th.cos(), th.sin());
            let pi = iqc.pi_at(z).map_err(|e| e.to_string())?;
            let h = Complex64::new(rho.powi(2 * k as i32), 0.0) * z.powi(-(k as i32));
            let g = Complex64::new(1.0, 0.0) - h;
            // α = 0 closed form: [[0, β·ḡ], [β·g, −(g + ḡ)]].
            let expect_01 = Complex64::new(beta, 0.0) * g.conj();
            let expect_11 = -(g + g.conj());
            expect(
                (pi[(0, 0)].norm() < 1e-12)
                    && ((pi[(0, 1)] - expect_01).norm() < 1e-10)
                    && ((pi[(1, 1)] - expect_11).norm() < 1e-10),
                || format!("mismatch at theta = {th}"),
            )?;
        }
        Ok(())
    });

    r.check("augmented realization reproduces the filtered loop signals", || {
        let g = example_plant_tight();
        let stacked = crate::iqc::stack(vec![
            make_sector(0.0, 1.0).map_err(|e| e.to_string())?,
            make_off_by_k(0.0, 1.0, 1, 0.9).map_err(|e| e.to_string())?,
        ])
        .map_err(|e| e.to_string())?;
        let aug = build_augmented_stacked(&g, &stacked).map_err(|e| e.to_string())?;
        let aug_ss = aug.as_state_space();
        for j in 0..32 {
            let th = 0.21 + 0.19 * j as f64;
            let z = Complex64::new(th.cos(), th.sin());
            let lhs = ss_eval(&aug_ss, z).map_err(|e| e.to_string())?;
            let gv = ss_eval(&g, z).map_err(|e| e.to_string())?[(0, 0)];
            let psi = ss_eval(stacked.psi(), z).map_err(|e| e.to_string())?;
            for i in 0..aug.noutputs() {
                let rhs = psi[(i, 0)] * gv + psi[(i, 1)];
                expect((lhs[(i, 0)] - rhs).norm() <= 1e-9, || {
                    format!("row {i} mismatch at theta = {th}")
                })?;
            }
        }
        Ok(())
    });

    r.check("sector increments nonnegative on arctan signals", || {
        let iqc = make_sector(0.0, 1.0).map_err(|e| e.to_string())?;
        let mut s = Stream(0x9E3779B97F4A7C15);
        for _ in 0..20 {
            let y: Vec<f64> = (0..40).map(|_| s.next_range(-3.0, 3.0)).collect();
            let u: Vec<f64> = y.iter().map(|&v: &f64| v.atan()).collect();
            let sums = time_domain_check(&iqc, 0.9, &y, &u).map_err(|e| e.to_string())?;
            let mut prev = 0.0;
            for &v in &sums {
                expect(v >= prev - 1e-12, || format!("increment {v} < {prev}"))?;
                prev = v;
            }
        }
        Ok(())
    });

    r.check("delay-multiplier partial sums nonnegative", || {
        let mut s = Stream(0xD1B54A32D192ED03);
        for &rho in &[0.8f64, 1.0] {
            for k in 1..=2usize {
                let iqc = make_off_by_k(0.0, 1.0, k, rho).map_err(|e| e.to_string())?;
                for _ in 0..10 {
                    let y: Vec<f64> = (0..40).map(|_| s.next_range(-2.0, 2.0)).collect();
                    let u: Vec<f64> = y.iter().map(|&v: &f64| v.atan()).collect();
                    let sums =
                        time_domain_check(&iqc, rho, &y, &u).map_err(|e| e.to_string())?;
                    for (t, &v) in sums.iter().enumerate() {
                        expect(v >= -1e-9, || {
                            format!("S_{t} = {v} at rho = {rho}, k = {k}")
                        })?;
                    }
                }
            }
        }
        Ok(())
    });

    r.check("feasibility solver resolves the bracketing toys", || {
        use crate::kyp::{AffineMatrixInequality, VarLabel};
        let toy = |f0: DMatrix<f64>, fis: Vec<DMatrix<f64>>| AffineMatrixInequality {
            labels: (0..fis.len()).map(|_| VarLabel::P(0, 0)).collect(),
            nonneg: vec![],
            p_dim: 1,
            f0,
            fis,
        };
        let d2 = |a: f64, b: f64| DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]));
        let feas = solve_feasibility(
            &toy(d2(-1.0, -1.0), vec![d2(1.0, -1.0)]),
            &SolverOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        expect(feas.status == Status::Feasible, || {
            format!("interval toy: {:?}", feas.status)
        })?;
        let infeas = solve_feasibility(
            &toy(d2(0.0, 0.0), vec![d2(1.0, -1.0)]),
            &SolverOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        expect(infeas.status == Status::Infeasible, || {
            format!("opposed toy: {:?}", infeas.status)
        })
    });

    r.check("LMI verdict agrees with the frequency grid on the example loop", || {
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(1.0);
        let family = [
            FamilySpec::Sector {
                alpha: None,
                beta: None,
            },
            FamilySpec::OffByK { k: 1 },
        ];
        // certify_at itself runs the grid cross-check and errors on mismatch.
        let yes = certify_at(&g, &delta, &family, 0.75, &CertifyOptions::default())
            .map_err(|e| e.to_string())?;
        expect(yes.is_certified(), || "0.75 should certify".into())?;
        let no = certify_at(&g, &delta, &family, 0.66, &CertifyOptions::default())
            .map_err(|e| e.to_string())?;
        expect(!no.is_certified(), || "0.66 should not certify".into())
    });

    r.check("linearized loop rate matches the closed-loop polynomial roots", || {
        let g = example_plant_tight();
        let cl = linearized_closed_loop(&g, 1.0).map_err(|e| e.to_string())?;
        let sr = spectral_radius(cl.a());
        let roots = poly_roots(&[100.0, -70.0, 36.0, 8.0]);
        let max_root = roots.iter().map(|r| r.norm()).fold(0.0f64, f64::max);
        expect((sr - max_root).abs() <= 1e-9, || {
            format!("spectral radius {sr} vs root bound {max_root}")
        })
    });

    r.check("direct LMI solve stays consistent under rho scaling of lambdas", || {
        // Feasibility at a fixed rho is invariant under scaling all
        // coefficient matrices; spot-check through the full pipeline.
        let g = example_plant_tight();
        let stacked = crate::iqc::stack(vec![make_sector(0.0, 1.0).map_err(|e| e.to_string())?])
            .map_err(|e| e.to_string())?;
        let aug = build_augmented_stacked(&g, &stacked).map_err(|e| e.to_string())?;
        let rho = 0.9;
        let ami =
            build_lmi(&aug, &stacked.m_blocks(), rho, default_eps(&aug)).map_err(|e| e.to_string())?;
        let base = solve_feasibility(&ami, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let mut scaled = ami.clone();
        scaled.f0 *= 37.0;
        for fi in &mut scaled.fis {
            *fi *= 37.0;
        }
        let other =
            solve_feasibility(&scaled, &SolverOptions::default()).map_err(|e| e.to_string())?;
        expect(base.status == other.status, || {
            format!("{:?} vs {:?}", base.status, other.status)
        })
    });

    SelftestReport {
        passed: r.passed,
        failed: r.failures.len(),
        failures: r.failures,
    }
}
