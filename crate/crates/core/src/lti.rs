//! Discrete-time state-space and transfer-function algebra: construction,
//! evaluation, ρ-scaling, stability/minimality tests, and linearized
//! closed-loop analysis.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Relative singular-value threshold for rank decisions in [`is_minimal`].
const RANK_TOL: f64 = 1e-9;

/// A discrete-time LTI system `x⁺ = Ax + Bu`, `y = Cx + Du`.
///
/// The transfer function is `C(zI − A)⁻¹B + D`, defined for any `z` that is
/// not an eigenvalue of `A`. `n = 0` (static gain) is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    /// Builds a realization, checking dimension consistency.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows, expected {} to match A",
                b.nrows(),
                n
            )));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!(
                "C has {} columns, expected {} to match A",
                c.ncols(),
                n
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{} to match C and B",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// A static (state-free) system `y = Du`.
    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let p = d.nrows();
        let m = d.ncols();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// State dimension n.
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension m.
    pub fn ninputs(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension p.
    pub fn noutputs(&self) -> usize {
        self.c.nrows()
    }
}

/// A proper SISO rational transfer function with real coefficients, stored as
/// `num(z)/den(z)` in descending powers of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TransferFunction {
    /// Builds a transfer function; requires a nonzero leading denominator
    /// coefficient and `deg(num) ≤ deg(den)` (properness).
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.is_empty() || den[0] == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        if num.is_empty() {
            return Err(Error::Parameter("numerator is empty".into()));
        }
        // Degrees count from the stored leading entries; callers are expected
        // to strip leading zeros from num if they want a tight degree.
        let num_deg = num.len() - 1;
        let den_deg = den.len() - 1;
        if num_deg > den_deg && num[..num_deg - den_deg].iter().any(|&x| x != 0.0) {
            return Err(Error::Improper { num_deg, den_deg });
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }
    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// Evaluates `num(z)/den(z)` directly by Horner's scheme.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        poly_eval(&self.num, z) / poly_eval(&self.den, z)
    }
}

fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Roots of a real polynomial (descending coefficients) via the eigenvalues of
/// its companion matrix. Leading zeros are stripped; a constant polynomial has
/// no roots.
///
/// Trailing zero coefficients are factored out first: `p(z) = zᵐ·q(z)`
/// contributes `m` exact zero roots, and the companion matrix of `q` is then
/// invertible. (Feeding the QR iteration a nilpotent companion — as a pure
/// `zᵐ` factor would — can stall its convergence.)
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let first = coeffs.iter().position(|&c| c != 0.0);
    let Some(first) = first else {
        return Vec::new();
    };
    let mut c = &coeffs[first..];
    let mut roots = Vec::new();
    while c.len() > 1 && *c.last().expect("nonempty") == 0.0 {
        roots.push(Complex64::new(0.0, 0.0));
        c = &c[..c.len() - 1];
    }
    let n = c.len() - 1;
    if n == 0 {
        return roots;
    }
    let lead = c[0];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    roots.extend(matrix_eigenvalues(&comp));
    roots
}

/// Eigenvalues of a real square matrix.
///
/// Triangular matrices — including the strictly triangular state matrices of
/// FIR delay chains, on which the QR iteration behind
/// `complex_eigenvalues` can fail to terminate — are read directly off the
/// diagonal. Everything else goes through the Schur-based routine.
pub fn matrix_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    assert_eq!(a.nrows(), a.ncols(), "eigenvalues need a square matrix");
    let n = a.nrows();
    let lower = (0..n).all(|i| (i + 1..n).all(|j| a[(i, j)] == 0.0));
    let upper = (0..n).all(|j| (j + 1..n).all(|i| a[(i, j)] == 0.0));
    if lower || upper {
        return (0..n).map(|i| Complex64::new(a[(i, i)], 0.0)).collect();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Controllable-canonical realization of a proper SISO transfer function.
///
/// For monic denominator `zⁿ + a₁zⁿ⁻¹ + … + aₙ` and padded numerator
/// `b₀zⁿ + b₁zⁿ⁻¹ + … + bₙ`, the realization is the top-row companion form
/// with `B = e₁`, `Cᵢ = bᵢ − aᵢb₀`, `D = b₀`; it is controllable by
/// construction.
pub fn ss_from_tf(tf: &TransferFunction) -> Result<StateSpace> {
    let den0 = tf.den()[0];
    let den: Vec<f64> = tf.den().iter().map(|&x| x / den0).collect();
    let n = den.len() - 1;
    // Pad the numerator to length n+1 (same implicit degree as den); any
    // extra leading entries were checked to be zero at construction.
    let mut num = vec![0.0; n + 1];
    for (i, &x) in tf.num().iter().rev().enumerate() {
        if i <= n {
            num[n - i] = x / den0;
        }
    }
    let d0 = num[0];
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = -den[j + 1];
    }
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DMatrix::<f64>::zeros(n, 1);
    if n > 0 {
        b[(0, 0)] = 1.0;
    }
    let mut c = DMatrix::<f64>::zeros(1, n);
    for j in 0..n {
        c[(0, j)] = num[j + 1] - den[j + 1] * d0;
    }
    let d = DMatrix::from_element(1, 1, d0);
    StateSpace::new(a, b, c, d)
}

/// Evaluates the transfer function `C(zI − A)⁻¹B + D` at a complex point.
///
/// Fails with [`Error::PoleAtEvaluation`] when the resolvent is numerically
/// singular (the solve residual is checked, not just LU success).
pub fn ss_eval(g: &StateSpace, z: Complex64) -> Result<DMatrix<Complex64>> {
    let n = g.nx();
    let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    if n == 0 {
        return Ok(to_c(g.d()));
    }
    let a = to_c(g.a());
    let b = to_c(g.b());
    let mut zi_a = -a;
    for i in 0..n {
        zi_a[(i, i)] += z;
    }
    let scale = zi_a.norm().max(1e-300);
    let lu = zi_a.clone().lu();
    let x = lu.solve(&b).ok_or(Error::PoleAtEvaluation { z })?;
    // LU solves are backward stable, so even at an exact pole the residual
    // stays tiny; the pole shows up as blow-up of the solution instead
    // (‖x‖ ≈ ‖b‖/σ_min, i.e. an effective condition number beyond 1e10).
    let resid = (&zi_a * &x - &b).norm();
    let blowup = x.norm() * scale > 1e10 * b.norm().max(1e-300);
    if !resid.is_finite() || resid > 1e-6 * scale * x.norm().max(1.0) || blowup {
        return Err(Error::PoleAtEvaluation { z });
    }
    Ok(to_c(g.c()) * x + to_c(g.d()))
}

/// Realization of `z ↦ G(ρz)`: scales `A` and `B` by `1/ρ`.
pub fn ss_scale_rho(g: &StateSpace, rho: f64) -> Result<StateSpace> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRho(rho));
    }
    StateSpace::new(
        g.a() / rho,
        g.b() / rho,
        g.c().clone(),
        g.d().clone(),
    )
}

/// Maximum eigenvalue magnitude of a square matrix (0 for the empty matrix).
///
/// # Panics
/// Panics if the matrix is not square.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    assert_eq!(a.nrows(), a.ncols(), "spectral_radius needs a square matrix");
    if a.nrows() == 0 {
        return 0.0;
    }
    matrix_eigenvalues(a)
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

/// Rank report for the controllability/observability test in [`is_minimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub minimal: bool,
    pub controllable_rank: usize,
    pub observable_rank: usize,
    pub n: usize,
}

/// Tests minimality: both the controllability matrix `[B AB … Aⁿ⁻¹B]` and the
/// observability matrix must have full rank `n`. Singular values below
/// `1e-9 × σ_max` count as zero.
pub fn is_minimal(g: &StateSpace) -> MinimalityReport {
    let n = g.nx();
    if n == 0 {
        return MinimalityReport {
            minimal: true,
            controllable_rank: 0,
            observable_rank: 0,
            n,
        };
    }
    let m = g.ninputs();
    let p = g.noutputs();
    let mut ctrb = DMatrix::<f64>::zeros(n, n * m);
    let mut obsv = DMatrix::<f64>::zeros(n * p, n);
    let mut akb = g.b().clone();
    let mut cak = g.c().clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&akb);
        obsv.view_mut((k * p, 0), (p, n)).copy_from(&cak);
        if k + 1 < n {
            akb = g.a() * &akb;
            cak = &cak * g.a();
        }
    }
    let rank = |mat: DMatrix<f64>| -> usize {
        let sv = mat.singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        if smax == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
    };
    let cr = rank(ctrb);
    let or = rank(obsv);
    MinimalityReport {
        minimal: cr == n && or == n,
        controllable_rank: cr,
        observable_rank: or,
        n,
    }
}

/// Closes the loop `y = G(u)`, `u = slope·y + v` (positive feedback) with a
/// constant gain, returning a realization of the closed-loop map `v ↦ y`:
/// `A_cl = A + B·slope·(I − slope·D)⁻¹·C`.
///
/// Fails when the algebraic loop `I − slope·D` is singular.
pub fn linearized_closed_loop(g: &StateSpace, slope: f64) -> Result<StateSpace> {
    let p = g.noutputs();
    let m = g.ninputs();
    if p != m {
        return Err(Error::Dimension(format!(
            "closed loop needs square feedthrough, got {p} outputs and {m} inputs"
        )));
    }
    // S = (I − slope·D)⁻¹, computed once and reused in every block.
    let mut i_sd = -slope * g.d();
    for i in 0..p {
        i_sd[(i, i)] += 1.0;
    }
    let det = i_sd.determinant();
    let s_inv = i_sd
        .clone()
        .try_inverse()
        .ok_or(Error::SingularLoop(det))?;
    if det.abs() < 1e-12 {
        return Err(Error::SingularLoop(det));
    }
    let sc = &s_inv * g.c();
    let a_cl = g.a() + g.b() * slope * &sc;
    let b_cl = g.b() * &s_inv;
    let c_cl = sc;
    let d_cl = &s_inv * g.d();
    StateSpace::new(a_cl, b_cl, c_cl, d_cl)
}

/// Checks two complex matrices for elementwise closeness (test helper used
/// across the crate's suites).
pub fn max_abs_diff(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> f64 {
    assert_eq!(x.shape(), y.shape());
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// The first worked example plant: `−(z+1)(10z+9) / ((2z−1)(5z−1)(10z−1))`.
pub fn example_plant_tight() -> StateSpace {
    let tf = TransferFunction::new(
        vec![-10.0, -19.0, -9.0],
        vec![100.0, -80.0, 17.0, -1.0],
    )
    .expect("static example coefficients are valid");
    ss_from_tf(&tf).expect("static example realizes")
}

/// The second worked example plant: `(2z−1) / (10(2z²−z+1))`.
pub fn example_plant_loose() -> StateSpace {
    let tf = TransferFunction::new(vec![2.0, -1.0], vec![20.0, -10.0, 10.0])
        .expect("static example coefficients are valid");
    ss_from_tf(&tf).expect("static example realizes")
}
