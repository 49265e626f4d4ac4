//! Augmented-system assembly and the exponential-rate LMI.
//!
//! Given a plant `G` and a stacked multiplier filter `Ψ` (inputs `(y, u)`),
//! the series system `Ψ·[G; I]` has the block realization
//!
//! ```text
//! Â = [A      0  ]    B̂ = [B           ]    Ĉ = [D_Ψ1·C  C_Ψ]    D̂ = D_Ψ2 + D_Ψ1·D
//!     [B_Ψ1·C A_Ψ]        [B_Ψ2 + B_Ψ1·D]
//! ```
//!
//! where `B_Ψ = [B_Ψ1 B_Ψ2]`, `D_Ψ = [D_Ψ1 D_Ψ2]` split the two Ψ inputs.
//! Feasibility of
//!
//! ```text
//! [ÂᵀPÂ − ρ²P   ÂᵀPB̂ ]  +  Σᵢ λᵢ [Ĉᵢ D̂ᵢ]ᵀ Mᵢ [Ĉᵢ D̂ᵢ]  ⪯  −εI,    λᵢ ≥ 0
//! [B̂ᵀPÂ        B̂ᵀPB̂ ]
//! ```
//!
//! in `P = Pᵀ` is equivalent (discrete KYP lemma, ρ-circle pole-free) to the
//! frequency-domain inequality `[G(ρz); I]* Π(ρz) [G(ρz); I] ⪯ −εI` on the
//! unit circle with `Π = Σ λᵢ Ψᵢ*MᵢΨᵢ`. [`grid_fdi_check`] evaluates the
//! right-hand side directly on a frequency grid as an independent oracle.

use crate::error::{Error, Result};
use crate::iqc::{pi_eval, StackedIqc};
use crate::lti::{ss_eval, StateSpace};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Series realization of `Ψ·[G; I]` with block bookkeeping for the stacked
/// multiplier parts.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub ahat: DMatrix<f64>,
    pub bhat: DMatrix<f64>,
    pub chat: DMatrix<f64>,
    pub dhat: DMatrix<f64>,
    /// State dimension of the plant inside `ahat` (leading block).
    pub n_plant: usize,
    /// Output row counts of the stacked Ψ parts, in order; sums to `chat.nrows()`.
    pub block_sizes: Vec<usize>,
}

impl AugmentedSystem {
    /// Total state dimension n̂.
    pub fn nx(&self) -> usize {
        self.ahat.nrows()
    }
    /// Input dimension m (the plant's input width).
    pub fn ninputs(&self) -> usize {
        self.bhat.ncols()
    }
    /// Total multiplier output dimension q.
    pub fn noutputs(&self) -> usize {
        self.chat.nrows()
    }

    /// View as a plain state-space system (for evaluation / diagnostics).
    pub fn as_state_space(&self) -> StateSpace {
        StateSpace::new(
            self.ahat.clone(),
            self.bhat.clone(),
            self.chat.clone(),
            self.dhat.clone(),
        )
        .expect("augmented blocks are dimensionally consistent by construction")
    }
}

/// Assembles the augmented realization of `Ψ·[G; I]` from a plant and a
/// 2-input multiplier filter. The single Ψ is treated as one block; use
/// [`build_augmented_stacked`] to carry per-part block sizes.
pub fn build_augmented(g: &StateSpace, psi: &StateSpace) -> Result<AugmentedSystem> {
    if psi.ninputs() != 2 {
        return Err(Error::Dimension(format!(
            "multiplier filter must have 2 inputs (y, u), got {}",
            psi.ninputs()
        )));
    }
    if g.noutputs() != 1 || g.ninputs() != 1 {
        return Err(Error::Dimension(format!(
            "plant must be SISO for the scalar-loop analysis, got {}x{}",
            g.noutputs(),
            g.ninputs()
        )));
    }
    let n = g.nx();
    let npsi = psi.nx();
    let q = psi.noutputs();
    // Split the two Ψ inputs: column 0 receives y = G(u), column 1 receives u.
    let b_psi1 = psi.b().column(0).clone_owned();
    let b_psi2 = psi.b().column(1).clone_owned();
    let d_psi1 = psi.d().column(0).clone_owned();
    let d_psi2 = psi.d().column(1).clone_owned();

    let mut ahat = DMatrix::<f64>::zeros(n + npsi, n + npsi);
    ahat.view_mut((0, 0), (n, n)).copy_from(g.a());
    ahat.view_mut((n, 0), (npsi, n))
        .copy_from(&(&b_psi1 * g.c()));
    ahat.view_mut((n, n), (npsi, npsi)).copy_from(psi.a());

    let mut bhat = DMatrix::<f64>::zeros(n + npsi, 1);
    bhat.view_mut((0, 0), (n, 1)).copy_from(g.b());
    bhat.view_mut((n, 0), (npsi, 1))
        .copy_from(&(&b_psi2 + &b_psi1 * g.d()[(0, 0)]));

    let mut chat = DMatrix::<f64>::zeros(q, n + npsi);
    chat.view_mut((0, 0), (q, n)).copy_from(&(&d_psi1 * g.c()));
    chat.view_mut((0, n), (q, npsi)).copy_from(psi.c());

    let dhat_col = &d_psi2 + &d_psi1 * g.d()[(0, 0)];
    let dhat = DMatrix::from_column_slice(q, 1, dhat_col.as_slice());

    Ok(AugmentedSystem {
        ahat,
        bhat,
        chat,
        dhat,
        n_plant: n,
        block_sizes: vec![q],
    })
}

/// [`build_augmented`] with the stacked multiplier's per-part block sizes
/// recorded for λ-weighted LMI assembly.
pub fn build_augmented_stacked(g: &StateSpace, iqc: &StackedIqc) -> Result<AugmentedSystem> {
    let mut aug = build_augmented(g, iqc.psi())?;
    aug.block_sizes = iqc.block_sizes().to_vec();
    Ok(aug)
}

/// Label of one scalar decision variable in the LMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarLabel {
    /// Entry `(i, j)`, `i ≤ j`, of the symmetric matrix `P`.
    P(usize, usize),
    /// The nonnegative weight of stacked multiplier part `i`.
    Lambda(usize),
}

/// A symmetric matrix-valued affine map `F(x) = F0 + Σ xᵢ Fᵢ` together with
/// the labels of its decision variables. Strict feasibility of the original
/// problem is `F(x) ≺ 0`; the λ-sign constraints are embedded as trailing
/// diagonal entries `−λᵢ`, so a single negative-definiteness query covers
/// both the matrix inequality and `λᵢ ≥ 0` (in fact `λᵢ > 0`, harmless since
/// the feasible set is open).
#[derive(Debug, Clone)]
pub struct AffineMatrixInequality {
    pub f0: DMatrix<f64>,
    pub fis: Vec<DMatrix<f64>>,
    pub labels: Vec<VarLabel>,
    /// Indices into `labels`/`x` that are λ weights (required ≥ 0).
    pub nonneg: Vec<usize>,
    /// Dimension of `P` (the augmented state dimension n̂).
    pub p_dim: usize,
}

impl AffineMatrixInequality {
    /// Block size s of the symmetric matrices.
    pub fn size(&self) -> usize {
        self.f0.nrows()
    }
    /// Number of scalar decision variables.
    pub fn nvars(&self) -> usize {
        self.fis.len()
    }

    /// Evaluates `F(x)`.
    pub fn eval(&self, x: &nalgebra::DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.fis.len(), "decision vector length");
        let mut f = self.f0.clone();
        for (xi, fi) in x.iter().zip(self.fis.iter()) {
            f += fi * *xi;
        }
        f
    }

    /// Reassembles the symmetric `P` from a solution vector.
    pub fn extract_p(&self, x: &nalgebra::DVector<f64>) -> DMatrix<f64> {
        let n = self.p_dim;
        let mut p = DMatrix::<f64>::zeros(n, n);
        for (idx, label) in self.labels.iter().enumerate() {
            if let VarLabel::P(i, j) = *label {
                p[(i, j)] = x[idx];
                p[(j, i)] = x[idx];
            }
        }
        p
    }

    /// Extracts the λ weights from a solution vector, in part order.
    pub fn extract_lambdas(&self, x: &nalgebra::DVector<f64>) -> Vec<f64> {
        self.nonneg.iter().map(|&idx| x[idx]).collect()
    }
}

/// Scale-aware default strictness constant: `1e-8·(1 + ‖Â‖_F² + ‖B̂‖_F²)`.
pub fn default_eps(aug: &AugmentedSystem) -> f64 {
    1e-8 * (1.0 + aug.ahat.norm_squared() + aug.bhat.norm_squared())
}

/// Builds the exponential-rate LMI as an affine map over
/// `vech(P) ∪ {λ₁, …, λ_r}`.
///
/// The main block has size `n̂ + m`; strictness `≺ 0` is encoded as
/// `⪯ −eps·I` by an `eps`-shift in `F0` (main block only). Each λᵢ also
/// appears as a trailing diagonal entry `−λᵢ`, forcing λᵢ > 0 at any strictly
/// feasible point.
pub fn build_lmi(
    aug: &AugmentedSystem,
    ms: &[DMatrix<f64>],
    rho: f64,
    eps: f64,
) -> Result<AffineMatrixInequality> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRho(rho));
    }
    if eps < 0.0 {
        return Err(Error::Parameter(format!("eps must be >= 0, got {eps}")));
    }
    let nh = aug.nx();
    let m = aug.ninputs();
    let q = aug.noutputs();
    let r = ms.len();
    if r != aug.block_sizes.len() {
        return Err(Error::Dimension(format!(
            "{} multiplier blocks vs {} recorded block sizes",
            r,
            aug.block_sizes.len()
        )));
    }
    let total: usize = aug.block_sizes.iter().sum();
    if total != q {
        return Err(Error::Dimension(format!(
            "block sizes sum to {total} but the stacked filter has {q} outputs"
        )));
    }
    for (i, (mi, &qi)) in ms.iter().zip(aug.block_sizes.iter()).enumerate() {
        if mi.nrows() != qi || mi.ncols() != qi {
            return Err(Error::Dimension(format!(
                "M block {i} is {}x{}, expected {qi}x{qi}",
                mi.nrows(),
                mi.ncols()
            )));
        }
    }
    let s = nh + m + r;

    let mut f0 = DMatrix::<f64>::zeros(s, s);
    for i in 0..nh + m {
        f0[(i, i)] = eps;
    }

    let mut fis = Vec::with_capacity(nh * (nh + 1) / 2 + r);
    let mut labels = Vec::with_capacity(fis.capacity());

    // One basis matrix per upper-triangular entry of P: substitute
    // E_ij = eᵢeⱼᵀ + eⱼeᵢᵀ (i<j) or eᵢeᵢᵀ (i=j) for P in the KYP block.
    for i in 0..nh {
        for j in i..nh {
            let mut e = DMatrix::<f64>::zeros(nh, nh);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            let ate = aug.ahat.transpose() * &e;
            let mut k = DMatrix::<f64>::zeros(s, s);
            let tl = &ate * &aug.ahat - rho * rho * &e;
            let tr = &ate * &aug.bhat;
            let br = aug.bhat.transpose() * &e * &aug.bhat;
            k.view_mut((0, 0), (nh, nh)).copy_from(&tl);
            k.view_mut((0, nh), (nh, m)).copy_from(&tr);
            k.view_mut((nh, 0), (m, nh)).copy_from(&tr.transpose());
            k.view_mut((nh, nh), (m, m)).copy_from(&br);
            fis.push(k);
            labels.push(VarLabel::P(i, j));
        }
    }

    // One basis matrix per λ: the weighted outer product of that part's rows
    // of [Ĉ D̂], plus the sign entry −λ on the trailing diagonal.
    let mut cd = DMatrix::<f64>::zeros(q, nh + m);
    cd.view_mut((0, 0), (q, nh)).copy_from(&aug.chat);
    cd.view_mut((0, nh), (q, m)).copy_from(&aug.dhat);
    let mut row = 0usize;
    for (i, (&qi, mi)) in aug.block_sizes.iter().zip(ms.iter()).enumerate() {
        let cdi = cd.view((row, 0), (qi, nh + m)).clone_owned();
        let mut k = DMatrix::<f64>::zeros(s, s);
        let quad = cdi.transpose() * mi * &cdi;
        k.view_mut((0, 0), (nh + m, nh + m)).copy_from(&quad);
        k[(nh + m + i, nh + m + i)] = -1.0;
        fis.push(k);
        labels.push(VarLabel::Lambda(i));
        row += qi;
    }

    let nonneg = (0..labels.len())
        .filter(|&idx| matches!(labels[idx], VarLabel::Lambda(_)))
        .collect();

    Ok(AffineMatrixInequality {
        f0,
        fis,
        labels,
        nonneg,
        p_dim: nh,
    })
}

/// Result of sampling the frequency-domain inequality on a uniform angular
/// grid of the ρ-circle.
#[derive(Debug, Clone, Copy)]
pub struct GridCheck {
    /// Largest sampled value of the quadratic form (should be < 0).
    pub max_eig: f64,
    /// Angle θ where the maximum occurred.
    pub argmax_theta: f64,
    /// Number of grid points used.
    pub n: usize,
    /// Whether the sampled maximum clears `−eps` with half-`eps` grid slack.
    pub passes: bool,
}

/// Samples `[G(ρe^{iθ}); 1]* Π(ρe^{iθ}) [G(ρe^{iθ}); 1]` over `θⱼ = 2πj/N`
/// with `Π = Σ λᵢ Ψᵢ*MᵢΨᵢ`, entirely independently of the KYP reduction.
///
/// Requires every pole of the plant and of the multiplier filter to lie
/// strictly inside the ρ-circle; the error names the offending eigenvalue.
pub fn grid_fdi_check(
    g: &StateSpace,
    iqc: &StackedIqc,
    lambdas: &[f64],
    rho: f64,
    n: usize,
    eps: f64,
) -> Result<GridCheck> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveRho(rho));
    }
    if n < 16 {
        return Err(Error::Parameter(format!("grid size {n} < 16")));
    }
    check_poles_inside(g.a(), rho, "the plant")?;
    check_poles_inside(iqc.psi().a(), rho, "the multiplier filter")?;
    let mut max_eig = f64::NEG_INFINITY;
    let mut argmax_theta = 0.0;
    for j in 0..n {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let z = rho * Complex64::new(theta.cos(), theta.sin());
        let gv = ss_eval(g, z)?[(0, 0)];
        let pi = pi_eval(iqc, z, lambdas)?;
        // v = [G; 1]; w = v* Π v is real after the Hermitian symmetrization
        // inside pi_eval.
        let v0 = gv;
        let w = (v0.conj() * pi[(0, 0)] * v0
            + v0.conj() * pi[(0, 1)]
            + pi[(1, 0)] * v0
            + pi[(1, 1)])
            .re;
        if w > max_eig {
            max_eig = w;
            argmax_theta = theta;
        }
    }
    Ok(GridCheck {
        max_eig,
        argmax_theta,
        n,
        passes: max_eig <= -eps / 2.0,
    })
}

fn check_poles_inside(a: &DMatrix<f64>, rho: f64, which: &'static str) -> Result<()> {
    if a.nrows() == 0 {
        return Ok(());
    }
    for eig in crate::lti::matrix_eigenvalues(a).iter() {
        let magnitude = eig.norm();
        if magnitude >= rho {
            return Err(Error::PoleOnOrOutsideCircle {
                which,
                eigenvalue: *eig,
                magnitude,
                rho,
            });
        }
    }
    Ok(())
}
