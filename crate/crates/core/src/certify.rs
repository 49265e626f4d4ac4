//! Top-level rate certification: feasibility at a fixed ρ, bisection to the
//! smallest certifiable ρ, and gain sweeps.
//!
//! A certificate for rate ρ consists of the LMI witness `(P, λ)` together
//! with an independent frequency-grid evaluation of the underlying
//! inequality. Bisection assumes feasibility is monotone in ρ only for
//! bracketing; the returned certificate is always re-verified at its own ρ,
//! so a non-monotone family can make the bound conservative but never
//! invalid.

use crate::error::{Error, Result};
use crate::iqc::{
    make_norm_bounded, make_off_by_k, make_sector, make_zames_falb_fir, stack, IqcFactorization,
    NonlinearityModel, StackedIqc,
};
use crate::kyp::{build_augmented_stacked, build_lmi, default_eps, grid_fdi_check, GridCheck};
use crate::lti::{linearized_closed_loop, spectral_radius, StateSpace};
use crate::solver::{solve_feasibility, SolverOptions, Status};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Margin (beyond the spectral radius) below which no ρ is probed.
const RHO_FLOOR_MARGIN: f64 = 1e-4;
/// Strictness slack for the `ρ > spectral radius` precondition.
const RHO_STRICTNESS: f64 = 1e-12;

/// Declarative description of one multiplier in a family. Parameters left
/// unset are filled from the nonlinearity's bounds when the multiplier is
/// built (at each probed ρ, since the ρ-weighted taps depend on it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    /// Norm-bounded gain; `gamma` defaults to `max(|α|, |β|)`.
    Norm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    /// Static sector bound; defaults to the nonlinearity's `[α, β]`.
    Sector {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    /// Delay-k slope multiplier (built fresh at each ρ).
    OffByK { k: usize },
    /// General FIR slope multiplier with explicit taps.
    ZfFir { h: Vec<f64> },
}

impl FamilySpec {
    /// Builds the multiplier for this spec at the given ρ.
    pub fn build(&self, delta: &NonlinearityModel, rho: f64) -> Result<IqcFactorization> {
        match self {
            FamilySpec::Norm { gamma } => {
                let g = gamma.unwrap_or_else(|| delta.alpha.abs().max(delta.beta.abs()));
                make_norm_bounded(g)
            }
            FamilySpec::Sector { alpha, beta } => {
                make_sector(alpha.unwrap_or(delta.alpha), beta.unwrap_or(delta.beta))
            }
            FamilySpec::OffByK { k } => make_off_by_k(delta.alpha, delta.beta, *k, rho),
            FamilySpec::ZfFir { h } => make_zames_falb_fir(delta.alpha, delta.beta, h, rho),
        }
    }

    /// ρ-independent display name used in reports and CSV rows.
    pub fn describe(&self, delta: &NonlinearityModel) -> String {
        match self {
            FamilySpec::Norm { gamma } => {
                let g = gamma.unwrap_or_else(|| delta.alpha.abs().max(delta.beta.abs()));
                format!("norm[{g}]")
            }
            FamilySpec::Sector { alpha, beta } => format!(
                "sector[{},{}]",
                alpha.unwrap_or(delta.alpha),
                beta.unwrap_or(delta.beta)
            ),
            FamilySpec::OffByK { k } => format!("off_by_{k}"),
            FamilySpec::ZfFir { h } => format!("zf_fir[{}]", h.len()),
        }
    }
}

/// Joint '+': separated label of a family.
pub fn family_label(specs: &[FamilySpec], delta: &NonlinearityModel) -> String {
    specs
        .iter()
        .map(|s| s.describe(delta))
        .collect::<Vec<_>>()
        .join("+")
}

/// Knobs shared by all certification entry points.
#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Frequency-grid resolution for the independent cross-check.
    pub grid_n: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            solver_tol: 1e-7,
            solver_max_iter: 500,
            grid_n: 512,
        }
    }
}

impl CertifyOptions {
    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
        }
    }
}

/// A complete rate certificate.
#[derive(Debug, Clone)]
pub struct CertificateResult {
    /// The certified decay rate.
    pub rho_certified: f64,
    /// Probe log `(ρ, feasible)` accumulated on the way here.
    pub feasible_at: Vec<(f64, bool)>,
    /// Symmetric (sign-indefinite) LMI witness.
    pub p: DMatrix<f64>,
    /// Nonnegative multiplier weights, one per family member.
    pub lambdas: Vec<f64>,
    /// Strict-feasibility margin of the LMI at the witness.
    pub margin: f64,
    /// Independent frequency-grid evaluation at the witness λ.
    pub grid_check: GridCheck,
    /// Family display label.
    pub family: String,
    /// Spectral radius of the plant: no rate below this is certifiable.
    pub rho_lower_limit: f64,
    /// Soundness caveats (e.g. α > 0 families) and recorded assertions.
    pub warnings: Vec<String>,
}

/// Diagnostic returned when a fixed-ρ certification does not go through.
#[derive(Debug, Clone)]
pub struct InfeasibleReport {
    pub rho: f64,
    pub solver_status: Status,
    /// Best `λmax` reached by the solver (positive ⇒ genuinely infeasible).
    pub best_objective: f64,
    pub family: String,
    pub rho_lower_limit: f64,
}

/// Outcome of [`certify_at`].
#[derive(Debug, Clone)]
pub enum CertifyOutcome {
    Certified(Box<CertificateResult>),
    Infeasible(InfeasibleReport),
}

impl CertifyOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, CertifyOutcome::Certified(_))
    }
    pub fn certificate(&self) -> Option<&CertificateResult> {
        match self {
            CertifyOutcome::Certified(c) => Some(c),
            CertifyOutcome::Infeasible(_) => None,
        }
    }
}

fn collect_warnings(delta: &NonlinearityModel, d: f64) -> Vec<String> {
    let mut warnings = Vec::new();
    if delta.alpha > 0.0 {
        warnings.push(format!(
            "lower slope bound alpha = {} > 0: the loop-scaling premise behind \
             the certificate is established only for alpha = 0 classes; treat \
             this certificate as unverified for the full nonlinear class",
            delta.alpha
        ));
    }
    if d != 0.0 {
        warnings.push(format!(
            "plant has direct feedthrough D = {d}: well-posedness asserted via \
             the contraction bound |slope·D| = {} < 1, not certified",
            delta.alpha.abs().max(delta.beta.abs()) * d.abs()
        ));
    }
    warnings
}

/// Preconditions shared by the certification entry points; returns the
/// plant's spectral radius.
fn check_problem(
    g: &StateSpace,
    delta: &NonlinearityModel,
    family: &[FamilySpec],
    rho: f64,
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::Parameter("multiplier family is empty".into()));
    }
    if g.ninputs() != 1 || g.noutputs() != 1 {
        return Err(Error::Dimension(format!(
            "certification needs a SISO plant, got {}x{}",
            g.noutputs(),
            g.ninputs()
        )));
    }
    let sr = spectral_radius(g.a());
    if !(rho > sr + RHO_STRICTNESS) {
        return Err(Error::RhoBelowSpectralRadius { rho, sr });
    }
    if rho > 1.0 {
        return Err(Error::RhoValidity(format!(
            "certification targets rho in (spectral radius, 1], got {rho}"
        )));
    }
    let d = g.d()[(0, 0)];
    let slope_cap = delta.alpha.abs().max(delta.beta.abs());
    if d != 0.0 && slope_cap * d.abs() >= 1.0 {
        return Err(Error::SingularLoop(slope_cap * d.abs()));
    }
    Ok(sr)
}

fn build_stacked(
    family: &[FamilySpec],
    delta: &NonlinearityModel,
    rho: f64,
) -> Result<StackedIqc> {
    let mut parts = Vec::with_capacity(family.len());
    for spec in family {
        let part = spec.build(delta, rho)?;
        if !part.admits_rho(rho) {
            return Err(Error::RhoValidity(format!(
                "multiplier '{}' does not admit rho = {rho}",
                part.label
            )));
        }
        parts.push(part);
    }
    stack(parts)
}

/// Decides certifiability of rate `rho` for the loop `(G, Δ)` with the given
/// multiplier family. On feasibility the witness is cross-checked on a
/// frequency grid; a grid failure is reported as an internal inconsistency
/// rather than a certificate.
pub fn certify_at(
    g: &StateSpace,
    delta: &NonlinearityModel,
    family: &[FamilySpec],
    rho: f64,
    opts: &CertifyOptions,
) -> Result<CertifyOutcome> {
    let sr = check_problem(g, delta, family, rho)?;
    let label = family_label(family, delta);
    let stacked = build_stacked(family, delta, rho)?;
    let aug = build_augmented_stacked(g, &stacked)?;
    let eps = default_eps(&aug);
    let ami = build_lmi(&aug, &stacked.m_blocks(), rho, eps)?;
    let res = solve_feasibility(&ami, &opts.solver())?;

    if res.status != Status::Feasible {
        return Ok(CertifyOutcome::Infeasible(InfeasibleReport {
            rho,
            solver_status: res.status,
            best_objective: res.best_objective,
            family: label,
            rho_lower_limit: sr,
        }));
    }

    let lambdas = ami.extract_lambdas(&res.x);
    let p = ami.extract_p(&res.x);
    let grid = grid_fdi_check(g, &stacked, &lambdas, rho, opts.grid_n, eps)?;
    if !grid.passes {
        return Err(Error::Inconsistency(format!(
            "LMI feasible at rho = {rho} (margin {:.3e}) but the frequency \
             grid found max value {:.3e} at theta = {:.4}",
            res.margin, grid.max_eig, grid.argmax_theta
        )));
    }
    Ok(CertifyOutcome::Certified(Box::new(CertificateResult {
        rho_certified: rho,
        feasible_at: vec![(rho, true)],
        p,
        lambdas,
        margin: res.margin,
        grid_check: grid,
        family: label,
        rho_lower_limit: sr,
        warnings: collect_warnings(delta, g.d()[(0, 0)]),
    })))
}

/// Bisects ρ down to the smallest certifiable rate (within `rho_tol`).
///
/// Starts by probing ρ = 1; failure there means the family cannot even
/// certify bounded-gain stability and is reported as an error carrying the
/// solver's best objective. The search floor sits `1e−4` above the plant's
/// spectral radius; collapsing onto it adds a warning (the true infimum may
/// be below the floor).
pub fn minimize_rho(
    g: &StateSpace,
    delta: &NonlinearityModel,
    family: &[FamilySpec],
    rho_tol: f64,
    opts: &CertifyOptions,
) -> Result<CertificateResult> {
    if !(rho_tol > 0.0) {
        return Err(Error::Parameter(format!(
            "bisection tolerance must be positive, got {rho_tol}"
        )));
    }
    let sr = check_problem(g, delta, family, 1.0)?;
    let floor = (sr + RHO_FLOOR_MARGIN).min(1.0);
    let mut probes: Vec<(f64, bool)> = Vec::new();

    let top = certify_at(g, delta, family, 1.0, opts)?;
    probes.push((1.0, top.is_certified()));
    let mut best = match top {
        CertifyOutcome::Certified(c) => *c,
        CertifyOutcome::Infeasible(report) => {
            return Err(Error::BiboUncertifiable {
                family: report.family,
                best_objective: report.best_objective,
            });
        }
    };

    let mut lo = floor;
    let mut hi = 1.0;
    let mut lo_probed_infeasible = false;
    while hi - lo > rho_tol {
        let mid = 0.5 * (lo + hi);
        match certify_at(g, delta, family, mid, opts)? {
            CertifyOutcome::Certified(c) => {
                hi = mid;
                best = *c;
                probes.push((mid, true));
            }
            CertifyOutcome::Infeasible(_) => {
                lo = mid;
                lo_probed_infeasible = true;
                probes.push((mid, false));
            }
        }
    }

    best.feasible_at = probes;
    if !lo_probed_infeasible && hi <= floor + rho_tol {
        best.warnings.push(format!(
            "bisection collapsed onto the spectral-radius floor {floor:.6}; \
             every probed rate was feasible, so the true infimum may be lower"
        ));
    }
    Ok(best)
}

/// One cell of a gain sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub b: f64,
    pub family: String,
    /// `None` when the cell could not be certified at any ρ ≤ 1.
    pub rho_certified: Option<f64>,
    /// Spectral radius of the loop linearized at the origin (slope b).
    pub rho_linearized: f64,
    pub margin: Option<f64>,
    /// `"certified"`, `"infeasible"`, or `"error: …"`.
    pub status: String,
}

/// Runs [`minimize_rho`] over the grid `b_values × families`.
///
/// `delta_for_b` maps each gain to its nonlinearity model (e.g.
/// `b·arctan`). Rows come out b-major, family-minor; per-cell failures are
/// recorded in the row instead of aborting the sweep. `jobs > 1` distributes
/// cells across threads with the output order (and every number in it)
/// independent of the schedule.
pub fn sweep_gain(
    g: &StateSpace,
    b_values: &[f64],
    families: &[Vec<FamilySpec>],
    rho_tol: f64,
    delta_for_b: &(dyn Fn(f64) -> NonlinearityModel + Sync),
    opts: &CertifyOptions,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if b_values.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Parameter("gain values must be positive".into()));
    }
    if families.is_empty() {
        return Err(Error::Parameter("no families given for the sweep".into()));
    }
    let mut cells = Vec::with_capacity(b_values.len() * families.len());
    for &b in b_values {
        for family in families {
            cells.push((b, family));
        }
    }

    let run_cell = |&(b, family): &(f64, &Vec<FamilySpec>)| -> SweepRow {
        let delta = delta_for_b(b);
        let rho_linearized = linearized_closed_loop(g, b)
            .map(|cl| spectral_radius(cl.a()))
            .unwrap_or(f64::NAN);
        match minimize_rho(g, &delta, family, rho_tol, opts) {
            Ok(cert) => SweepRow {
                b,
                family: cert.family.clone(),
                rho_certified: Some(cert.rho_certified),
                rho_linearized,
                margin: Some(cert.margin),
                status: "certified".into(),
            },
            Err(Error::BiboUncertifiable { family, .. }) => SweepRow {
                b,
                family,
                rho_certified: None,
                rho_linearized,
                margin: None,
                status: "infeasible".into(),
            },
            Err(e) => SweepRow {
                b,
                family: family_label(family, &delta),
                rho_certified: None,
                rho_linearized,
                margin: None,
                status: format!("error: {e}"),
            },
        }
    };

    if jobs <= 1 {
        return Ok(cells.iter().map(run_cell).collect());
    }

    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut indexed: Vec<(usize, SweepRow)> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..jobs.min(cells.len()))
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= cells.len() {
                            break;
                        }
                        out.push((i, run_cell(&cells[i])));
                    }
                    out
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("sweep worker panicked"))
            .collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, row)| row).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{example_plant_tight, spectral_radius};

    fn sector_family() -> Vec<FamilySpec> {
        vec![FamilySpec::Sector {
            alpha: None,
            beta: None,
        }]
    }

    fn tight_family() -> Vec<FamilySpec> {
        vec![
            FamilySpec::Sector {
                alpha: None,
                beta: None,
            },
            FamilySpec::OffByK { k: 1 },
        ]
    }

    #[test]
    fn open_loop_certifies_above_spectral_radius() {
        let g = example_plant_tight(); // spectral radius 0.5
        let delta = NonlinearityModel::zero();
        let out = certify_at(
            &g,
            &delta,
            &[FamilySpec::Sector {
                alpha: Some(0.0),
                beta: Some(0.0),
            }],
            0.6,
            &CertifyOptions::default(),
        )
        .unwrap();
        let cert = out.certificate().expect("open loop must certify");
        assert!(cert.margin > 0.0);
        assert!(cert.grid_check.max_eig < 0.0);
        assert!(cert.warnings.is_empty());
        assert!((cert.rho_lower_limit - 0.5).abs() < 1e-9);
    }

    #[test]
    fn known_rate_bracketing_probes() {
        // The true critical rate of this loop is ≈ 0.7058: 0.72 must be
        // certifiable with the two-multiplier family and 0.69 must not.
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(1.0);
        let opts = CertifyOptions::default();
        let yes = certify_at(&g, &delta, &tight_family(), 0.72, &opts).unwrap();
        assert!(yes.is_certified(), "0.72 should certify");
        let cert = yes.certificate().unwrap();
        assert!(cert.margin > 0.0);
        assert!(cert.grid_check.max_eig < 0.0);
        assert_eq!(cert.lambdas.len(), 2);
        assert!(cert.lambdas.iter().all(|&l| l > 0.0));
        let no = certify_at(&g, &delta, &tight_family(), 0.69, &opts).unwrap();
        assert!(!no.is_certified(), "0.69 must not certify");
    }

    #[test]
    fn minimized_rate_hits_published_window() {
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(1.0);
        let cert = minimize_rho(&g, &delta, &tight_family(), 1e-3, &CertifyOptions::default())
            .unwrap();
        assert!(
            (0.7048..=0.7168).contains(&cert.rho_certified),
            "rho = {}",
            cert.rho_certified
        );
        // Probe log brackets the returned rate.
        assert!(cert.feasible_at.iter().any(|&(_, f)| f));
        assert!(cert.feasible_at.iter().any(|&(_, f)| !f));
        for &(rho, feasible) in &cert.feasible_at {
            if feasible {
                assert!(rho >= cert.rho_certified - 1e-12);
            }
        }
    }

    #[test]
    fn preconditions_and_guards() {
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(1.0);
        let opts = CertifyOptions::default();
        // At or below the spectral radius: refused.
        assert!(matches!(
            certify_at(&g, &delta, &sector_family(), 0.5, &opts),
            Err(Error::RhoBelowSpectralRadius { .. })
        ));
        assert!(certify_at(&g, &delta, &sector_family(), 0.3, &opts).is_err());
        // Above one: refused.
        assert!(certify_at(&g, &delta, &sector_family(), 1.1, &opts).is_err());
        // Empty family: refused.
        assert!(certify_at(&g, &delta, &[], 0.9, &opts).is_err());
        // Bad bisection tolerance.
        assert!(minimize_rho(&g, &delta, &sector_family(), 0.0, &opts).is_err());
    }

    #[test]
    fn norm_family_fails_at_full_gain() {
        // The pure gain bound cannot certify the b = 1 loop even at ρ = 1.
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(1.0);
        let err = minimize_rho(
            &g,
            &delta,
            &[FamilySpec::Norm { gamma: None }],
            1e-3,
            &CertifyOptions::default(),
        );
        assert!(matches!(err, Err(Error::BiboUncertifiable { .. })), "{err:?}");
    }

    #[test]
    fn vanishing_gain_collapses_to_floor_with_warning() {
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(0.01);
        let cert = minimize_rho(&g, &delta, &sector_family(), 1e-3, &CertifyOptions::default())
            .unwrap();
        let sr = spectral_radius(g.a());
        assert!(cert.rho_certified <= sr + 1e-4 + 1e-3 + 1e-9);
        assert!(
            cert.warnings.iter().any(|w| w.contains("floor")),
            "{:?}",
            cert.warnings
        );
    }

    #[test]
    fn positive_lower_slope_emits_warning() {
        let g = example_plant_tight();
        let delta = NonlinearityModel::sector_only(1.0, 1.0).unwrap();
        let out = certify_at(
            &g,
            &delta,
            &sector_family(),
            0.9,
            &CertifyOptions::default(),
        )
        .unwrap();
        let cert = out.certificate().expect("linear loop feasible at 0.9");
        assert!(
            cert.warnings.iter().any(|w| w.contains("alpha")),
            "{:?}",
            cert.warnings
        );
    }

    #[test]
    fn appending_multiplier_never_hurts() {
        let g = example_plant_tight();
        let delta = NonlinearityModel::b_arctan(0.5);
        let opts = CertifyOptions::default();
        let one = minimize_rho(&g, &delta, &sector_family(), 1e-3, &opts).unwrap();
        let two = minimize_rho(&g, &delta, &tight_family(), 1e-3, &opts).unwrap();
        assert!(
            two.rho_certified <= one.rho_certified + 1e-3,
            "{} vs {}",
            two.rho_certified,
            one.rho_certified
        );
    }

    #[test]
    fn sweep_rows_ordered_and_deterministic() {
        let g = example_plant_tight();
        let families = vec![sector_family(), tight_family()];
        let bs = [0.25, 1.0];
        let delta_for_b = |b: f64| NonlinearityModel::b_arctan(b);
        let opts = CertifyOptions::default();
        let seq = sweep_gain(&g, &bs, &families, 1e-3, &delta_for_b, &opts, 1).unwrap();
        assert_eq!(seq.len(), 4);
        // b-major, family-minor ordering.
        assert_eq!(seq[0].b, 0.25);
        assert_eq!(seq[1].b, 0.25);
        assert_eq!(seq[2].b, 1.0);
        assert!(seq[0].family.starts_with("sector"));
        assert!(seq[1].family.contains("off_by_1"));
        // Larger family certifies at least as small a rate at each b.
        for pair in seq.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if let (Some(ra), Some(rb)) = (a.rho_certified, b.rho_certified) {
                assert!(rb <= ra + 1e-3);
            }
            assert!(a.rho_linearized.is_finite());
        }
        // Parallel run reproduces the sequential rows bit-for-bit.
        let par = sweep_gain(&g, &bs, &families, 1e-3, &delta_for_b, &opts, 3).unwrap();
        assert_eq!(par.len(), seq.len());
        for (a, b) in seq.iter().zip(par.iter()) {
            assert_eq!(a.b.to_bits(), b.b.to_bits());
            assert_eq!(a.family, b.family);
            assert_eq!(a.status, b.status);
            match (a.rho_certified, b.rho_certified) {
                (Some(x), Some(y)) => assert_eq!(x.to_bits(), y.to_bits()),
                (None, None) => {}
                _ => panic!("parallel sweep diverged"),
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let g = example_plant_tight();
        let delta_for_b = |b: f64| NonlinearityModel::b_arctan(b);
        let opts = CertifyOptions::default();
        assert!(sweep_gain(&g, &[0.0], &[sector_family()], 1e-3, &delta_for_b, &opts, 1).is_err());
        assert!(sweep_gain(&g, &[1.0], &[], 1e-3, &delta_for_b, &opts, 1).is_err());
    }
}
