//! Strict-feasibility solver for affine matrix inequalities `F(x) ≺ 0`.
//!
//! Feasibility is decided through the epigraph form of `min_x λmax(F(x))`
//! with a log-det barrier:
//!
//! ```text
//! minimize over (x, t):   t + μ·( −log det(tI − F(x)) − ln(t + 2) − ln(R² − ‖x‖²) )
//! ```
//!
//! driving μ through a geometric schedule with damped-Newton centering at
//! each stage. All coefficients are pre-normalized by their largest
//! magnitude, making verdicts invariant under uniform scaling of the
//! problem data.
//!
//! KYP-type inequalities are positively homogeneous in their decision
//! variables, so strict feasibility implies `inf λmax = −∞`. The `ln(t + 2)`
//! floor and the trust region `‖x‖ < R` keep the barrier bounded in that
//! case, and the solver short-circuits once the (normalized) objective
//! drops below −1.5 — far beyond any reasonable strictness threshold.
//!
//! Verdicts:
//! - [`Status::Feasible`] as soon as any iterate satisfies `λmax < −tol`
//!   in normalized units (an explicit witness, also valid if the iteration
//!   cap is hit afterwards);
//! - [`Status::Infeasible`] when the full μ schedule completes without a
//!   witness: the final μ is small enough that the best centered iterate is
//!   within `tol/4` of the optimum over the trust region;
//! - [`Status::Indeterminate`] when the iteration cap interrupts the
//!   schedule before either applies.
//!
//! The λ-sign constraints of rate LMIs are already embedded in the matrices
//! (trailing `−λᵢ` diagonal entries), so this solver looks only at
//! `F0`/`Fᵢ` and ignores the variable labels. It uses no randomization and
//! a fixed iteration order, hence is bitwise deterministic.

use crate::error::{Error, Result};
use crate::kyp::AffineMatrixInequality;
use nalgebra::{Cholesky, DMatrix, DVector};

/// Dense-path size cap for the s×s LMI block.
pub const MAX_LMI_SIZE: usize = 64;

/// Squared trust-region radius for the decision vector (`R = 1e6`).
const TRUST_RADIUS_SQ: f64 = 1e12;
/// Normalized objective below which the problem is declared deeply feasible.
const DEEP_FEASIBLE: f64 = -1.5;
/// Geometric factor of the μ schedule.
const STAGE_SHRINK: f64 = 0.2;
/// Newton iterations allowed per barrier stage.
const NEWTON_CAP_PER_STAGE: usize = 80;
/// Armijo sufficient-decrease constant and backtracking step factor.
const ARMIJO_C: f64 = 0.25;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_MAX_BACKTRACKS: usize = 60;

/// Feasibility verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// An iterate with `λmax(F(x)) < −tol` (normalized) was found.
    Feasible,
    /// The barrier schedule completed without such an iterate.
    Infeasible,
    /// The iteration cap was reached before either conclusion.
    Indeterminate,
}

/// Solver knobs. `tol` is the strictness threshold applied to the
/// normalized problem; `max_iter` caps the total accepted Newton steps.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

/// Outcome of a feasibility solve.
#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: Status,
    /// The best decision vector found (original scale).
    pub x: DVector<f64>,
    /// `−λmax(F(x))` at the returned `x`, on the original scale; positive
    /// iff the returned point strictly satisfies the inequality.
    pub margin: f64,
    /// Total accepted Newton steps.
    pub iterations: usize,
    /// Smallest `λmax(F(x))` over all iterates, on the original scale.
    pub best_objective: f64,
}

/// Largest eigenvalue and a corresponding unit eigenvector of the
/// symmetric part of `f`. Panics if `f` is not square.
pub fn max_eig_sym(f: &DMatrix<f64>) -> (f64, DVector<f64>) {
    assert!(f.is_square(), "max_eig_sym needs a square matrix");
    let sym = (f + f.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut imax = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    (
        eig.eigenvalues[imax],
        eig.eigenvectors.column(imax).clone_owned(),
    )
}

fn coefficient_scale(ami: &AffineMatrixInequality) -> f64 {
    let mut scale = ami.f0.amax();
    for fi in &ami.fis {
        scale = scale.max(fi.amax());
    }
    scale
}

fn validate(ami: &AffineMatrixInequality, opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0) {
        return Err(Error::SolverInput(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let s = ami.size();
    if s == 0 {
        return Err(Error::SolverInput("empty LMI (0x0 block)".into()));
    }
    if !ami.f0.is_square() {
        return Err(Error::SolverInput(format!(
            "F0 is {}x{}, expected square",
            ami.f0.nrows(),
            ami.f0.ncols()
        )));
    }
    if s > MAX_LMI_SIZE {
        return Err(Error::SolverInput(format!(
            "LMI block size {s} exceeds the dense-solver cap {MAX_LMI_SIZE}"
        )));
    }
    let scale = coefficient_scale(ami);
    let sym_tol = 1e-12 * scale;
    let check = |m: &DMatrix<f64>, name: String| -> Result<()> {
        if m.nrows() != s || m.ncols() != s {
            return Err(Error::SolverInput(format!(
                "{name} is {}x{}, expected {s}x{s}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::SolverInput(format!("{name} has non-finite entries")));
        }
        let asym = (m - m.transpose()).amax();
        if asym > sym_tol {
            return Err(Error::SolverInput(format!(
                "{name} is not symmetric (asymmetry {asym:.3e} vs scale {scale:.3e})"
            )));
        }
        Ok(())
    };
    check(&ami.f0, "F0".into())?;
    for (i, fi) in ami.fis.iter().enumerate() {
        check(fi, format!("F{}", i + 1))?;
    }
    Ok(())
}

fn eval_affine(f0: &DMatrix<f64>, fis: &[DMatrix<f64>], x: &DVector<f64>) -> DMatrix<f64> {
    let mut f = f0.clone();
    for (fi, &xi) in fis.iter().zip(x.iter()) {
        f.zip_apply(fi, |a, b| *a += xi * b);
    }
    f
}

/// Barrier value at `(x, t)` together with the Cholesky factor of
/// `S = tI − F(x)`. `None` means the point is outside the barrier domain.
fn barrier_value(
    f0: &DMatrix<f64>,
    fis: &[DMatrix<f64>],
    x: &DVector<f64>,
    t: f64,
    mu: f64,
) -> Option<(f64, Cholesky<f64, nalgebra::Dyn>)> {
    if t + 2.0 <= 0.0 {
        return None;
    }
    let xn2 = x.norm_squared();
    if xn2 >= TRUST_RADIUS_SQ {
        return None;
    }
    let s = f0.nrows();
    let mut slack = eval_affine(f0, fis, x);
    slack.neg_mut();
    for i in 0..s {
        slack[(i, i)] += t;
    }
    let chol = Cholesky::new(slack)?;
    let mut logdet = 0.0;
    for i in 0..s {
        logdet += chol.l_dirty()[(i, i)].ln();
    }
    logdet *= 2.0;
    let phi = t + mu * (-logdet - (t + 2.0).ln() - (TRUST_RADIUS_SQ - xn2).ln());
    Some((phi, chol))
}

/// Gradient and Hessian of the barrier at the current point, over the
/// stacked variables `(x₁…x_nv, t)`.
///
/// With `S = LLᵀ` and `D_a = ∂S/∂v_a` (`−Fᵢ` for x-variables, `I` for t),
/// the log-det part contributes `−μ·tr(Ĝ_a)` to the gradient and
/// `μ·⟨Ĝ_a, Ĝ_b⟩` to the Hessian, where `Ĝ_a = L⁻¹ D_a L⁻ᵀ`.
fn derivatives(
    fis: &[DMatrix<f64>],
    x: &DVector<f64>,
    t: f64,
    mu: f64,
    chol: &Cholesky<f64, nalgebra::Dyn>,
) -> (DVector<f64>, DMatrix<f64>) {
    let nv = fis.len();
    let s = fis.first().map_or(chol.l_dirty().nrows(), |f| f.nrows());
    let l = chol.l();
    let mut ghs: Vec<DMatrix<f64>> = Vec::with_capacity(nv + 1);
    for fi in fis {
        let y = l
            .solve_lower_triangular(&(-fi))
            .expect("Cholesky factor has positive diagonal");
        let gh = l
            .solve_lower_triangular(&y.transpose())
            .expect("Cholesky factor has positive diagonal");
        ghs.push(gh);
    }
    {
        let y = l
            .solve_lower_triangular(&DMatrix::<f64>::identity(s, s))
            .expect("Cholesky factor has positive diagonal");
        let gh = l
            .solve_lower_triangular(&y.transpose())
            .expect("Cholesky factor has positive diagonal");
        ghs.push(gh);
    }

    let n1 = nv + 1;
    let mut g = DVector::<f64>::zeros(n1);
    let mut h = DMatrix::<f64>::zeros(n1, n1);
    for a in 0..n1 {
        g[a] = -mu * ghs[a].trace();
        for b in a..n1 {
            let dot = mu * ghs[a].dot(&ghs[b]);
            h[(a, b)] = dot;
            h[(b, a)] = dot;
        }
    }
    // Objective and t-floor terms.
    g[nv] += 1.0 - mu / (t + 2.0);
    h[(nv, nv)] += mu / ((t + 2.0) * (t + 2.0));
    // Trust-region terms on x.
    let r2mx = TRUST_RADIUS_SQ - x.norm_squared();
    for a in 0..nv {
        g[a] += mu * 2.0 * x[a] / r2mx;
        for b in 0..nv {
            h[(a, b)] += mu * 4.0 * x[a] * x[b] / (r2mx * r2mx);
        }
        h[(a, a)] += mu * 2.0 / r2mx;
    }
    (g, h)
}

/// Decides strict feasibility of `F(x) = F0 + Σ xᵢFᵢ ≺ 0`.
pub fn solve_feasibility(
    ami: &AffineMatrixInequality,
    opts: &SolverOptions,
) -> Result<FeasibilityResult> {
    validate(ami, opts)?;
    let s = ami.size();
    let nv = ami.nvars();

    let scale = coefficient_scale(ami);
    if scale == 0.0 {
        // F(x) ≡ 0: λmax = 0, never strictly negative.
        return Ok(FeasibilityResult {
            status: Status::Infeasible,
            x: DVector::zeros(nv),
            margin: 0.0,
            iterations: 0,
            best_objective: 0.0,
        });
    }
    let f0n = &ami.f0 / scale;
    let fin: Vec<DMatrix<f64>> = ami.fis.iter().map(|f| f / scale).collect();

    if nv == 0 {
        let (l, _) = max_eig_sym(&f0n);
        let status = if l < -opts.tol {
            Status::Feasible
        } else {
            Status::Infeasible
        };
        return Ok(FeasibilityResult {
            status,
            x: DVector::zeros(0),
            margin: -l * scale,
            iterations: 0,
            best_objective: l * scale,
        });
    }

    // Normalized diagonal entries are ≥ −1, so t0 = λmax + 1 ≥ 0 keeps the
    // `t + 2` floor and `tI − F(0) ⪰ I` both strictly inside the domain.
    let (l0, _) = max_eig_sym(&f0n);
    let mut x = DVector::<f64>::zeros(nv);
    let mut t = l0 + 1.0;
    let mut best_obj = l0;
    let mut best_x = x.clone();
    let mut mu = l0.abs().max(1.0);
    let mu_min = opts.tol / (4.0 * (s as f64 + 2.0));
    let mut iterations = 0usize;
    let mut schedule_complete = false;

    'stages: loop {
        for _ in 0..NEWTON_CAP_PER_STAGE {
            if iterations >= opts.max_iter {
                break 'stages;
            }
            let (phi0, chol) = barrier_value(&f0n, &fin, &x, t, mu)
                .expect("accepted iterates stay strictly inside the barrier domain");
            let (g, h) = derivatives(&fin, &x, t, mu, &chol);
            let delta = 1e-12 * h.amax().max(1.0);
            let mut hd = h;
            for i in 0..nv + 1 {
                hd[(i, i)] += delta;
            }
            let mut d = match Cholesky::new(hd) {
                Some(c) => c.solve(&(-&g)),
                None => -&g,
            };
            if g.dot(&d) >= 0.0 {
                d = -&g;
            }
            let dec = -g.dot(&d);
            if !dec.is_finite() {
                break 'stages;
            }

            let mut step = 1.0f64;
            let mut accepted = false;
            for _ in 0..ARMIJO_MAX_BACKTRACKS {
                let xt: DVector<f64> = &x + d.rows(0, nv) * step;
                let tt = t + step * d[nv];
                if let Some((phi1, _)) = barrier_value(&f0n, &fin, &xt, tt, mu) {
                    if phi1 <= phi0 - ARMIJO_C * step * dec {
                        x = xt;
                        t = tt;
                        accepted = true;
                        break;
                    }
                }
                step *= ARMIJO_SHRINK;
            }
            if !accepted {
                // No acceptable step at this μ: treat the stage as centered.
                break;
            }
            iterations += 1;
            let (obj, _) = max_eig_sym(&eval_affine(&f0n, &fin, &x));
            if obj < best_obj {
                best_obj = obj;
                best_x = x.clone();
            }
            if best_obj < DEEP_FEASIBLE {
                break 'stages;
            }
            if dec / 2.0 <= (0.05 * mu).max(1e-15) {
                break;
            }
        }
        if mu <= mu_min {
            schedule_complete = true;
            break;
        }
        mu = (mu * STAGE_SHRINK).max(mu_min);
    }

    let status = if best_obj < -opts.tol {
        Status::Feasible
    } else if schedule_complete {
        Status::Infeasible
    } else {
        Status::Indeterminate
    };
    // Report on the original scale, recomputed at the best point.
    let (lmax, _) = max_eig_sym(&ami.eval(&best_x));
    Ok(FeasibilityResult {
        status,
        x: best_x,
        margin: -lmax,
        iterations,
        best_objective: lmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kyp::VarLabel;

    /// Wraps raw coefficient matrices for the solver; the labels are
    /// placeholders (the solver never reads them).
    fn toy(f0: DMatrix<f64>, fis: Vec<DMatrix<f64>>) -> AffineMatrixInequality {
        let labels = (0..fis.len()).map(|_| VarLabel::P(0, 0)).collect();
        AffineMatrixInequality {
            f0,
            fis,
            labels,
            nonneg: vec![],
            p_dim: 1,
        }
    }

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    #[test]
    fn feasible_interval_toy() {
        // F(x) = diag(x − 1, −x − 1): λmax = |x| − 1, optimum −1 at x = 0.
        let ami = toy(diag2(-1.0, -1.0), vec![diag2(1.0, -1.0)]);
        let res = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Feasible);
        assert!((res.best_objective + 1.0).abs() <= 5e-3, "{}", res.best_objective);
        assert!((res.margin - 1.0).abs() <= 5e-3);
        assert!(res.x[0].abs() <= 5e-3);
    }

    #[test]
    fn infeasible_opposed_toy() {
        // F(x) = diag(x, −x): λmax = |x| ≥ 0, never strictly negative.
        let ami = toy(diag2(0.0, 0.0), vec![diag2(1.0, -1.0)]);
        let res = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Infeasible);
        assert!(res.best_objective.abs() <= 1e-4, "{}", res.best_objective);
    }

    #[test]
    fn two_var_toy_matches_grid_oracle() {
        // F(x, y) = [[x − 1, y], [y, −x − 1]]: λmax = √(x² + y²) − 1.
        let f1 = diag2(1.0, -1.0);
        let f2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ami = toy(diag2(-1.0, -1.0), vec![f1, f2]);
        let res = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Feasible);
        // Brute-force oracle over a grid of the decision space.
        let mut grid_min = f64::INFINITY;
        for i in 0..=120 {
            for j in 0..=120 {
                let x = -3.0 + 0.05 * i as f64;
                let y = -3.0 + 0.05 * j as f64;
                let v = DVector::from_vec(vec![x, y]);
                let (l, _) = max_eig_sym(&ami.eval(&v));
                grid_min = grid_min.min(l);
            }
        }
        assert!((grid_min + 1.0).abs() < 1e-12);
        assert!((res.best_objective - grid_min).abs() <= 5e-3);
    }

    #[test]
    fn deep_feasibility_short_circuits() {
        // F(x) = (x − 10)·I − 5·I: wildly feasible; the early exit keeps the
        // iteration count small.
        let ami = toy(
            DMatrix::from_diagonal_element(3, 3, -5.0),
            vec![DMatrix::identity(3, 3)],
        );
        let res = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Feasible);
        assert!(res.iterations < 100);
        assert!(res.margin > 5.0);
    }

    #[test]
    fn constant_problem_paths() {
        let neg = toy(diag2(-2.0, -1.0), vec![]);
        let res = solve_feasibility(&neg, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Feasible);
        assert_eq!(res.iterations, 0);
        assert!((res.margin - 1.0).abs() < 1e-12);
        let pos = toy(diag2(-1.0, 0.5), vec![]);
        let res = solve_feasibility(&pos, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Infeasible);
        assert!((res.best_objective - 0.5).abs() < 1e-12);
        // All-zero coefficients: λmax ≡ 0.
        let zero = toy(DMatrix::zeros(2, 2), vec![DMatrix::zeros(2, 2)]);
        let res = solve_feasibility(&zero, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, Status::Infeasible);
        assert_eq!(res.margin, 0.0);
    }

    #[test]
    fn bitwise_determinism() {
        let f1 = DMatrix::from_row_slice(3, 3, &[0.3, 1.1, 0.0, 1.1, -0.7, 0.2, 0.0, 0.2, 0.5]);
        let f2 = DMatrix::from_row_slice(3, 3, &[-1.0, 0.4, 0.9, 0.4, 0.0, 0.0, 0.9, 0.0, 1.3]);
        let f0 = DMatrix::from_row_slice(3, 3, &[-0.2, 0.1, 0.0, 0.1, -0.9, 0.3, 0.0, 0.3, -0.4]);
        let ami = toy(f0, vec![f1, f2]);
        let a = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
        let b = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.margin.to_bits(), b.margin.to_bits());
        assert_eq!(a.best_objective.to_bits(), b.best_objective.to_bits());
        for (xa, xb) in a.x.iter().zip(b.x.iter()) {
            assert_eq!(xa.to_bits(), xb.to_bits());
        }
    }

    #[test]
    fn verdicts_invariant_under_uniform_scaling() {
        let f1 = diag2(1.0, -1.0);
        let f2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let base = toy(diag2(-1.0, -1.0), vec![f1.clone(), f2.clone()]);
        let scaled = toy(diag2(-1.0, -1.0) * 37.0, vec![f1 * 37.0, f2 * 37.0]);
        let a = solve_feasibility(&base, &SolverOptions::default()).unwrap();
        let b = solve_feasibility(&scaled, &SolverOptions::default()).unwrap();
        assert_eq!(a.status, b.status);
        let ratio = b.margin / a.margin;
        assert!((ratio - 37.0).abs() / 37.0 <= 1e-6, "ratio {ratio}");
    }

    #[test]
    fn input_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(solve_feasibility(&toy(asym, vec![]), &SolverOptions::default()).is_err());
        let nan = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 0.0]);
        assert!(solve_feasibility(&toy(nan, vec![]), &SolverOptions::default()).is_err());
        let big = DMatrix::<f64>::zeros(65, 65);
        assert!(solve_feasibility(&toy(big, vec![]), &SolverOptions::default()).is_err());
        let ok = diag2(-1.0, -1.0);
        let bad_tol = SolverOptions {
            tol: 0.0,
            max_iter: 100,
        };
        assert!(solve_feasibility(&toy(ok.clone(), vec![]), &bad_tol).is_err());
        let wrong_dim = vec![DMatrix::<f64>::zeros(3, 3)];
        assert!(solve_feasibility(&toy(ok, wrong_dim), &SolverOptions::default()).is_err());
    }

    #[test]
    fn max_eig_sym_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, -2.0]));
        let (l, v) = max_eig_sym(&d);
        assert!((l - 3.0).abs() < 1e-14);
        assert!((v[0].abs() - 1.0).abs() < 1e-12);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (l, v) = max_eig_sym(&swap);
        assert!((l - 1.0).abs() < 1e-14);
        assert!((v[0] - v[1]).abs() < 1e-12, "eigenvector of λ = 1 is ∝ (1, 1)");
        // Residual check on a fixed 8x8 symmetric matrix.
        let mut m = DMatrix::<f64>::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let v = ((i * 8 + j) as f64 * 0.37).sin();
                m[(i, j)] += v;
                m[(j, i)] += v;
            }
        }
        let (l, v) = max_eig_sym(&m);
        let resid = (&m * &v - &v * l).norm();
        assert!(resid <= 1e-10 * m.norm().max(1.0));
    }

    #[test]
    fn rate_lmi_verdicts_bracket_known_rate() {
        // Sector-bounded loop around the lightly damped third-order plant:
        // certifiable at ρ = 0.9, not at ρ = 0.6 (the linearized loop alone
        // already decays no faster than ≈ 0.706).
        use crate::iqc::{make_sector, stack};
        use crate::kyp::{build_augmented_stacked, build_lmi, default_eps};
        use crate::lti::example_plant_tight;
        let g = example_plant_tight();
        let stacked = stack(vec![make_sector(0.0, 1.0).unwrap()]).unwrap();
        let ms = stacked.m_blocks();
        for (rho, expect_feasible) in [(0.9, true), (0.6, false)] {
            let aug = build_augmented_stacked(&g, &stacked).unwrap();
            let ami = build_lmi(&aug, &ms, rho, default_eps(&aug)).unwrap();
            let res = solve_feasibility(&ami, &SolverOptions::default()).unwrap();
            let feas = res.status == Status::Feasible;
            assert_eq!(feas, expect_feasible, "rho = {rho}: {:?}", res.status);
            if expect_feasible {
                assert!(res.margin > 0.0);
                // λ weights are strictly positive at a strictly feasible point.
                for lam in ami.extract_lambdas(&res.x) {
                    assert!(lam > 0.0);
                }
            }
        }
    }
}
