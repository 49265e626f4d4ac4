//! Factorized multipliers for sector/slope-restricted nonlinearities.
//!
//! Every multiplier is carried as a pair `(Ψ, M)` with `Π(z) = Ψ(z)*MΨ(z)`,
//! where `Ψ` is a stable 2-input filter acting on the signal pair `(y, u)`
//! and `M` is a constant symmetric matrix. The families:
//!
//! - norm-bounded `‖Δ‖ ≤ γ`: static `Ψ = I₂`, `M = diag(γ², −1)`;
//! - sector `[α, β]`: static `Ψ = [[β, −1], [−α, 1]]`, `M = [[0,1],[1,0]]`,
//!   so `Π = [[−2αβ, α+β], [α+β, −2]]`;
//! - Zames-Falb with FIR `H(z) = Σ h_k z^{−k}`, for slope-restricted Δ:
//!   `Ψ = [β(1−H), −(1−H); −α, 1]`, same `M`; the ρ-weighted variant is
//!   admissible when `h_k ≥ 0` and `Σ ρ^{−2k} h_k ≤ 1`;
//! - "off-by-k": the special case `H(z) = ρ^{2k} z^{−k}`, which meets the
//!   weighted-sum constraint with equality.
//!
//! FIR filters keep `A_Ψ` nilpotent, so `Ψ(ρz)` is stable for every ρ > 0.

use crate::error::{Error, Result};
use crate::lti::{ss_eval, StateSpace};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::fmt;
use std::sync::Arc;

/// Tolerance on the ρ-weighted tap-sum constraint `Σ ρ^{−2k} h_k ≤ 1`.
const ZF_SUM_TOL: f64 = 1e-12;

/// Multiplier family tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqcKind {
    NormBounded,
    Sector,
    OffByK,
    ZamesFalbFir,
}

/// The set of ρ for which the built multiplier is claimed valid.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoValidity {
    /// Pointwise-in-time multipliers: valid for every ρ ∈ (0, 1].
    UpToOne,
    /// FIR Zames-Falb multipliers are built *at* a specific ρ and valid
    /// exactly there (the taps satisfy the weighted-sum constraint at it).
    AtRho(f64),
}

/// One factorized multiplier: `Π(z) = Ψ(z)*MΨ(z)`.
#[derive(Debug, Clone)]
pub struct IqcFactorization {
    /// Stable filter with 2 inputs `(y, u)` and `q` outputs.
    pub psi: StateSpace,
    /// Constant symmetric `q×q` matrix.
    pub m: DMatrix<f64>,
    pub kind: IqcKind,
    pub rho_validity: RhoValidity,
    /// Short human-readable tag used in reports and CSV rows.
    pub label: String,
}

impl IqcFactorization {
    /// Output dimension q of the filter.
    pub fn q(&self) -> usize {
        self.psi.noutputs()
    }

    /// Whether this multiplier may be used at the given ρ.
    pub fn admits_rho(&self, rho: f64) -> bool {
        if !(rho > 0.0 && rho <= 1.0) {
            return false;
        }
        match self.rho_validity {
            RhoValidity::UpToOne => true,
            RhoValidity::AtRho(r) => (r - rho).abs() <= 1e-12,
        }
    }

    /// Evaluates `Π(z) = Ψ(z)*MΨ(z)` for this single multiplier.
    pub fn pi_at(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        let psi = ss_eval(&self.psi, z)?;
        let mc = self.m.map(|x| Complex64::new(x, 0.0));
        let pi = psi.adjoint() * mc * psi;
        Ok(hermitianize(pi))
    }
}

fn hermitianize(mut m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let adj = m.adjoint();
    m += adj;
    m * Complex64::new(0.5, 0.0)
}

/// Norm-bounded multiplier `‖Δ‖ ≤ γ`: `Π = diag(γ², −1)` at every frequency.
pub fn make_norm_bounded(gamma: f64) -> Result<IqcFactorization> {
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!(
            "norm bound gamma must be positive, got {gamma}"
        )));
    }
    Ok(IqcFactorization {
        psi: StateSpace::static_gain(DMatrix::identity(2, 2)),
        m: DMatrix::from_diagonal(&DVector::from_vec(vec![gamma * gamma, -1.0])),
        kind: IqcKind::NormBounded,
        rho_validity: RhoValidity::UpToOne,
        label: format!("norm[{gamma}]"),
    })
}

/// Sector multiplier for `α y² ≤ y·Δ(y) ≤ β y²`:
/// `Π = [[−2αβ, α+β], [α+β, −2]]` at every frequency.
pub fn make_sector(alpha: f64, beta: f64) -> Result<IqcFactorization> {
    if alpha > beta {
        return Err(Error::Parameter(format!(
            "sector bounds out of order: alpha = {alpha} > beta = {beta}"
        )));
    }
    let d = DMatrix::from_row_slice(2, 2, &[beta, -1.0, -alpha, 1.0]);
    let mut psi = StateSpace::static_gain(d);
    // Static system with explicit empty state blocks of input width 2.
    psi = StateSpace::new(
        DMatrix::zeros(0, 0),
        DMatrix::zeros(0, 2),
        DMatrix::zeros(2, 0),
        psi.d().clone(),
    )?;
    Ok(IqcFactorization {
        psi,
        m: swap_m(),
        kind: IqcKind::Sector,
        rho_validity: RhoValidity::UpToOne,
        label: format!("sector[{alpha},{beta}]"),
    })
}

fn swap_m() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

/// Builds the FIR filter chain shared by the Zames-Falb variants: the scalar
/// signal `s = βy − u` enters a length-`L` delay line, and the first output
/// row realizes `(1 − H)(βy − u)` with `H(z) = Σ_{k=0}^{L} h_k z^{−k}`.
fn zf_psi(alpha: f64, beta: f64, h: &[f64]) -> Result<StateSpace> {
    let l = h.len().saturating_sub(1);
    let mut a = DMatrix::<f64>::zeros(l, l);
    for i in 1..l {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DMatrix::<f64>::zeros(l, 2);
    if l > 0 {
        b[(0, 0)] = beta;
        b[(0, 1)] = -1.0;
    }
    let mut c = DMatrix::<f64>::zeros(2, l);
    for (j, &hj) in h.iter().skip(1).enumerate() {
        c[(0, j)] = -hj;
    }
    let h0 = h.first().copied().unwrap_or(0.0);
    let d = DMatrix::from_row_slice(
        2,
        2,
        &[(1.0 - h0) * beta, -(1.0 - h0), -alpha, 1.0],
    );
    StateSpace::new(a, b, c, d)
}

/// "Off-by-k" multiplier: the Zames-Falb factorization with
/// `H(z) = ρ^{2k} z^{−k}`, realized by a k-state delay chain on `βy − u`.
/// The taps meet the ρ-weighted sum constraint with equality
/// (`ρ^{−2k}·ρ^{2k} = 1`), so the multiplier is admissible at exactly this ρ.
pub fn make_off_by_k(alpha: f64, beta: f64, k: usize, rho: f64) -> Result<IqcFactorization> {
    if k < 1 {
        return Err(Error::Parameter("off-by-k needs k >= 1".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::RhoValidity(format!(
            "off-by-k multipliers require rho in (0, 1], got {rho}"
        )));
    }
    if !(0.0 <= alpha && alpha <= beta) {
        return Err(Error::Parameter(format!(
            "slope bounds must satisfy 0 <= alpha <= beta, got [{alpha}, {beta}]"
        )));
    }
    let mut h = vec![0.0; k + 1];
    h[k] = rho.powi(2 * k as i32);
    let psi = zf_psi(alpha, beta, &h)?;
    Ok(IqcFactorization {
        psi,
        m: swap_m(),
        kind: IqcKind::OffByK,
        rho_validity: RhoValidity::AtRho(rho),
        label: format!("off_by_{k}"),
    })
}

/// General FIR Zames-Falb multiplier with explicit taps `h`.
///
/// Requires `h_k ≥ 0` for every tap and `Σ ρ^{−2k} h_k ≤ 1`; the error
/// reports the violated sum. `h[0]` is permitted and handled as feedthrough.
pub fn make_zames_falb_fir(
    alpha: f64,
    beta: f64,
    h: &[f64],
    rho: f64,
) -> Result<IqcFactorization> {
    if !(0.0 <= alpha && alpha <= beta) {
        return Err(Error::Parameter(format!(
            "slope bounds must satisfy 0 <= alpha <= beta, got [{alpha}, {beta}]"
        )));
    }
    if h.is_empty() {
        return Err(Error::Parameter("tap list h is empty".into()));
    }
    let report = validate_rho_zf(h, rho);
    if !report.ok {
        return Err(Error::RhoValidity(report.describe(h, rho)));
    }
    let psi = zf_psi(alpha, beta, h)?;
    Ok(IqcFactorization {
        psi,
        m: swap_m(),
        kind: IqcKind::ZamesFalbFir,
        rho_validity: RhoValidity::AtRho(rho),
        label: format!("zf_fir[{}]", h.len()),
    })
}

/// Outcome of the ρ-weighted Zames-Falb admissibility test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZfReport {
    pub ok: bool,
    /// The weighted sum `Σ ρ^{−2k} h_k`.
    pub weighted_sum: f64,
    /// Index of the first negative tap, if any.
    pub negative_index: Option<usize>,
}

impl ZfReport {
    fn describe(&self, h: &[f64], rho: f64) -> String {
        if let Some(i) = self.negative_index {
            format!("tap h[{i}] = {} is negative", h[i])
        } else {
            format!(
                "weighted tap sum {} exceeds 1 at rho = {rho}",
                self.weighted_sum
            )
        }
    }
}

/// Pure predicate: `true` iff `h_k ≥ 0` for all k and
/// `Σ ρ^{−2k} h_k ≤ 1 + 1e−12`.
pub fn validate_rho_zf(h: &[f64], rho: f64) -> ZfReport {
    let negative_index = h.iter().position(|&x| x < 0.0);
    let mut weighted_sum = 0.0;
    let w = rho.powi(-2);
    let mut wk = 1.0;
    for &hk in h {
        weighted_sum += wk * hk;
        wk *= w;
    }
    ZfReport {
        ok: negative_index.is_none() && weighted_sum <= 1.0 + ZF_SUM_TOL,
        weighted_sum,
        negative_index,
    }
}

/// Several multipliers stacked into one filter: states are block-diagonal,
/// outputs are concatenated, and the two inputs `(y, u)` are shared. Each
/// part keeps its own `M` block so LMI assembly can weight them with
/// independent λ ≥ 0.
#[derive(Debug, Clone)]
pub struct StackedIqc {
    parts: Vec<IqcFactorization>,
    psi_stacked: StateSpace,
    block_sizes: Vec<usize>,
}

impl StackedIqc {
    pub fn parts(&self) -> &[IqcFactorization] {
        &self.parts
    }
    pub fn psi(&self) -> &StateSpace {
        &self.psi_stacked
    }
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }
    /// Number of stacked parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }
    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
    /// The constant `M` blocks of the parts, in order.
    pub fn m_blocks(&self) -> Vec<DMatrix<f64>> {
        self.parts.iter().map(|p| p.m.clone()).collect()
    }
    /// Joint label like `"sector[0,1]+off_by_1"`.
    pub fn label(&self) -> String {
        self.parts
            .iter()
            .map(|p| p.label.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Stacks multipliers by block-diagonal state concatenation.
pub fn stack(parts: Vec<IqcFactorization>) -> Result<StackedIqc> {
    if parts.is_empty() {
        return Err(Error::Parameter("cannot stack an empty multiplier list".into()));
    }
    for p in &parts {
        if p.psi.ninputs() != 2 {
            return Err(Error::Dimension(format!(
                "multiplier '{}' has {} inputs, expected 2",
                p.label,
                p.psi.ninputs()
            )));
        }
    }
    let n: usize = parts.iter().map(|p| p.psi.nx()).sum();
    let q: usize = parts.iter().map(|p| p.q()).sum();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, 2);
    let mut c = DMatrix::<f64>::zeros(q, n);
    let mut d = DMatrix::<f64>::zeros(q, 2);
    let mut block_sizes = Vec::with_capacity(parts.len());
    let (mut i, mut j) = (0usize, 0usize);
    for p in &parts {
        let ni = p.psi.nx();
        let qi = p.q();
        a.view_mut((i, i), (ni, ni)).copy_from(p.psi.a());
        b.view_mut((i, 0), (ni, 2)).copy_from(p.psi.b());
        c.view_mut((j, i), (qi, ni)).copy_from(p.psi.c());
        d.view_mut((j, 0), (qi, 2)).copy_from(p.psi.d());
        block_sizes.push(qi);
        i += ni;
        j += qi;
    }
    let psi_stacked = StateSpace::new(a, b, c, d)?;
    Ok(StackedIqc {
        parts,
        psi_stacked,
        block_sizes,
    })
}

/// Evaluates `Π(z; λ) = Σ λᵢ Ψᵢ(z)*MᵢΨᵢ(z)`, symmetrized to Hermitian.
pub fn pi_eval(iqc: &StackedIqc, z: Complex64, lambdas: &[f64]) -> Result<DMatrix<Complex64>> {
    if lambdas.len() != iqc.len() {
        return Err(Error::Dimension(format!(
            "{} lambda weights for {} stacked parts",
            lambdas.len(),
            iqc.len()
        )));
    }
    if let Some(l) = lambdas.iter().find(|&&l| l < 0.0) {
        return Err(Error::Parameter(format!(
            "lambda weights must be nonnegative, got {l}"
        )));
    }
    let mut pi = DMatrix::<Complex64>::zeros(2, 2);
    for (p, &lam) in iqc.parts.iter().zip(lambdas.iter()) {
        if lam != 0.0 {
            pi += p.pi_at(z)? * Complex64::new(lam, 0.0);
        }
    }
    Ok(hermitianize(pi))
}

/// Scalar nonlinearity description: sector/slope bounds plus an optional
/// concrete map for simulation.
#[derive(Clone)]
pub struct NonlinearityModel {
    pub alpha: f64,
    pub beta: f64,
    func: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    /// Static (memoryless) nonlinearity flag; always true for the built-ins.
    pub static_map: bool,
    pub label: String,
}

impl fmt::Debug for NonlinearityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearityModel")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("has_func", &self.func.is_some())
            .field("static_map", &self.static_map)
            .finish()
    }
}

impl NonlinearityModel {
    /// Bounds-only model (no simulatable map).
    pub fn sector_only(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > beta {
            return Err(Error::Parameter(format!(
                "bounds out of order: alpha = {alpha} > beta = {beta}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            func: None,
            static_map: true,
            label: format!("sector[{alpha},{beta}]"),
        })
    }

    /// `Δ(y) = b·arctan(y)`: slope-restricted (and sector-bounded) on `[0, b]`.
    pub fn b_arctan(b: f64) -> Self {
        let bb = b;
        Self {
            alpha: 0.0,
            beta: b,
            func: Some(Arc::new(move |y: f64| bb * y.atan())),
            static_map: true,
            label: format!("{b}*arctan"),
        }
    }

    /// The zero map (open loop), sector `[0, 0]`.
    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            func: Some(Arc::new(|_| 0.0)),
            static_map: true,
            label: "zero".into(),
        }
    }

    /// Attaches a concrete map, verifying on a chord grid over `[−10, 10]`
    /// that sampled difference quotients stay inside `[α − tol, β + tol]`.
    pub fn with_func(
        alpha: f64,
        beta: f64,
        label: &str,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        if alpha > beta {
            return Err(Error::Parameter(format!(
                "bounds out of order: alpha = {alpha} > beta = {beta}"
            )));
        }
        let tol = 1e-9;
        let grid: Vec<f64> = (0..81).map(|i| -10.0 + 0.25 * i as f64).collect();
        for (i, &x) in grid.iter().enumerate() {
            for &y in &grid[i + 1..] {
                let chord = (f(x) - f(y)) / (x - y);
                if chord < alpha - tol || chord > beta + tol {
                    return Err(Error::Parameter(format!(
                        "chord slope {chord:.6} between x = {x} and y = {y} \
                         leaves [{alpha}, {beta}]"
                    )));
                }
            }
        }
        Ok(Self {
            alpha,
            beta,
            func: Some(f),
            static_map: true,
            label: label.to_string(),
        })
    }

    /// Evaluates the concrete map, if one is attached.
    pub fn eval(&self, y: f64) -> Option<f64> {
        self.func.as_ref().map(|f| f(y))
    }

    pub fn has_func(&self) -> bool {
        self.func.is_some()
    }
}

/// Running ρ-weighted partial sums of the multiplier's time-domain form:
/// `S_T = Σ_{k≤T} ρ^{−2k} z_kᵀ M z_k` with `z = Ψ(y, u)` filtered from zero
/// initial state.
///
/// The weights grow like `ρ^{−2k}`, so the accumulation uses compensated
/// (Neumaier) summation to keep rounding error relative to the true sums.
pub fn time_domain_check(
    iqc: &IqcFactorization,
    rho: f64,
    y: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    if y.len() != u.len() {
        return Err(Error::SignalLength {
            y_len: y.len(),
            u_len: u.len(),
        });
    }
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRho(rho));
    }
    let psi = &iqc.psi;
    let n = psi.nx();
    let q = psi.noutputs();
    let mut state = DVector::<f64>::zeros(n);
    let mut sums = Vec::with_capacity(y.len());
    let mut weight = 1.0;
    let w_step = rho.powi(-2);
    // Neumaier compensated accumulator.
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    let mut z = DVector::<f64>::zeros(q);
    for (&yk, &uk) in y.iter().zip(u.iter()) {
        let input = DVector::from_vec(vec![yk, uk]);
        z.copy_from(&(psi.c() * &state + psi.d() * &input));
        let term = weight * (z.transpose() * &iqc.m * &z)[(0, 0)];
        let t = acc + term;
        if acc.abs() >= term.abs() {
            comp += (acc - t) + term;
        } else {
            comp += (term - t) + acc;
        }
        acc = t;
        sums.push(acc + comp);
        state = psi.a() * &state + psi.b() * &input;
        weight *= w_step;
    }
    Ok(sums)
}
