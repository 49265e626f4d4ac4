//! Problem-description JSON (plant + nonlinearity + multiplier families)
//! and the JSON views of certification results.
//!
//! Schema:
//!
//! ```json
//! {
//!   "plant": {"num": [2.0, -1.0], "den": [20.0, -10.0, 10.0]},
//!   "nonlinearity": {"kind": "arctan", "b": 1.0},
//!   "families": [
//!     [{"kind": "sector"}],
//!     [{"kind": "sector"}, {"kind": "off_by_k", "k": 1}]
//!   ]
//! }
//! ```
//!
//! The plant may instead be given as state-space matrices
//! `{"A": [[...]], "B": [[...]], "C": [[...]], "D": [[...]]}`; the
//! nonlinearity alternatively as `{"kind": "sector", "alpha": a, "beta": b}`.

use crate::certify::{CertificateResult, FamilySpec, InfeasibleReport};
use crate::error::{Error, Result};
use crate::iqc::NonlinearityModel;
use crate::lti::{ss_from_tf, StateSpace, TransferFunction};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Plant description: transfer-function coefficients (descending powers of
/// z) or explicit state-space matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantConfig {
    Tf {
        num: Vec<f64>,
        den: Vec<f64>,
    },
    Ss {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(rename = "D")]
        d: Vec<Vec<f64>>,
    },
}

/// Nonlinearity description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinConfig {
    /// `Δ(y) = b·arctan(y)` — slope- and sector-restricted on `[0, b]`.
    Arctan { b: f64 },
    /// Bounds-only description (not simulatable).
    Sector { alpha: f64, beta: f64 },
}

/// A complete problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub plant: PlantConfig,
    pub nonlinearity: NonlinConfig,
    /// Multiplier families to try; may be empty if supplied on the command
    /// line instead.
    #[serde(default)]
    pub families: Vec<Vec<FamilySpec>>,
}

/// Loads and validates a problem config from a JSON file.
pub fn load(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses a problem config from a JSON string.
pub fn parse(text: &str) -> Result<ProblemConfig> {
    let cfg: ProblemConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    // Eagerly validate the parts so malformed configs fail at load time
    // with a message naming the offending field.
    cfg.plant_ss()
        .map_err(|e| Error::Config(format!("plant: {e}")))?;
    cfg.delta()
        .map_err(|e| Error::Config(format!("nonlinearity: {e}")))?;
    Ok(cfg)
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Config(format!("{name} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nr, nc, &flat))
}

impl ProblemConfig {
    /// Realizes the plant as a state-space system.
    pub fn plant_ss(&self) -> Result<StateSpace> {
        match &self.plant {
            PlantConfig::Tf { num, den } => {
                ss_from_tf(&TransferFunction::new(num.clone(), den.clone())?)
            }
            PlantConfig::Ss { a, b, c, d } => StateSpace::new(
                matrix_from_rows(a, "A")?,
                matrix_from_rows(b, "B")?,
                matrix_from_rows(c, "C")?,
                matrix_from_rows(d, "D")?,
            ),
        }
    }

    /// The configured nonlinearity model.
    pub fn delta(&self) -> Result<NonlinearityModel> {
        match &self.nonlinearity {
            NonlinConfig::Arctan { b } => {
                if !(*b >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "arctan gain b must be nonnegative, got {b}"
                    )));
                }
                Ok(NonlinearityModel::b_arctan(*b))
            }
            NonlinConfig::Sector { alpha, beta } => NonlinearityModel::sector_only(*alpha, *beta),
        }
    }

    /// Gain-parametrized nonlinearity for sweeps: `b·arctan` for arctan
    /// configs; sector bounds scaled proportionally for sector configs.
    pub fn delta_at_gain(&self, b: f64) -> Result<NonlinearityModel> {
        match &self.nonlinearity {
            NonlinConfig::Arctan { .. } => Ok(NonlinearityModel::b_arctan(b)),
            NonlinConfig::Sector { alpha, beta } => {
                let scale = if *beta != 0.0 { b / beta } else { b };
                NonlinearityModel::sector_only(alpha * scale, beta * scale)
            }
        }
    }
}

/// JSON view of a certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateJson {
    pub rho: f64,
    pub margin: f64,
    pub lambdas: Vec<f64>,
    /// Row-major entries of the symmetric witness `P`.
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub p_dim: usize,
    pub probes: Vec<ProbeJson>,
    pub grid: GridJson,
    pub family: String,
    pub rho_lower_limit: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeJson {
    pub rho: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridJson {
    #[serde(rename = "N")]
    pub n: usize,
    pub max_eig: f64,
}

impl From<&CertificateResult> for CertificateJson {
    fn from(c: &CertificateResult) -> Self {
        CertificateJson {
            rho: c.rho_certified,
            margin: c.margin,
            lambdas: c.lambdas.clone(),
            p: c.p.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect(),
            p_dim: c.p.nrows(),
            probes: c
                .feasible_at
                .iter()
                .map(|&(rho, feasible)| ProbeJson { rho, feasible })
                .collect(),
            grid: GridJson {
                n: c.grid_check.n,
                max_eig: c.grid_check.max_eig,
            },
            family: c.family.clone(),
            rho_lower_limit: c.rho_lower_limit,
            warnings: c.warnings.clone(),
        }
    }
}

/// JSON view of a failed fixed-ρ certification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibleJson {
    pub status: String,
    pub rho: f64,
    pub best_objective: f64,
    pub family: String,
    pub rho_lower_limit: f64,
}

impl From<&InfeasibleReport> for InfeasibleJson {
    fn from(r: &InfeasibleReport) -> Self {
        InfeasibleJson {
            status: format!("{:?}", r.solver_status).to_lowercase(),
            rho: r.rho,
            best_objective: r.best_objective,
            family: r.family.clone(),
            rho_lower_limit: r.rho_lower_limit,
        }
    }
}
