//! Reference solutions, synthetic sensor data, and CSV ingestion.

pub mod burgers;
pub mod taylor_green;

pub use burgers::{burgers_exact, BurgersExact, GaussHermite};
pub use taylor_green::{taylor_green_analytic_jet, taylor_green_exact};

use crate::error::{Error, Result};
use crate::pde::{PdeKind, PdeProblem};
use crate::rng::{rng, Stream};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::path::Path;

/// One noisy state reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

/// Noisy spatiotemporal observations of the state plus the collocation
/// points where the PDE residual is penalized toward zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorDataset {
    pub state_obs: Vec<Observation>,
    pub residual_points: Vec<Vec<f64>>,
    pub noise_sigma_u: f64,
    pub noise_sigma_f: f64,
    pub seed: u64,
}

impl SensorDataset {
    pub fn validate(&self, problem: &PdeProblem) -> Result<()> {
        if self.state_obs.is_empty() {
            return Err(Error::Empty("dataset has no state observations".into()));
        }
        let cd = problem.coord_dim();
        let od = problem.observed_dim();
        for o in &self.state_obs {
            if o.coords.len() != cd || o.values.len() != od {
                return Err(Error::Dimension(format!(
                    "observation shape ({}, {}) does not match problem ({cd}, {od})",
                    o.coords.len(),
                    o.values.len()
                )));
            }
        }
        for c in &self.residual_points {
            if c.len() != cd {
                return Err(Error::Dimension("residual point dimension mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Exact reference field: deterministic, defined on the whole domain.
#[derive(Debug, Clone)]
pub enum ExactField {
    /// Cole-Hopf Burgers solution (u only).
    ColeHopf,
    /// Taylor-Green vortex (u, v, p).
    TaylorGreen { nu: f64 },
    /// Values imported from an external dataset; defined only at its own
    /// sample coordinates.
    ExternalGrid { obs: Vec<Observation> },
}

impl ExactField {
    /// Exact state at `coords`; errors outside the field's definition.
    pub fn eval(&self, coords: &[f64]) -> Result<Vec<f64>> {
        match self {
            ExactField::ColeHopf => Ok(vec![burgers_exact(coords[0], coords[1])?]),
            ExactField::TaylorGreen { nu } => {
                let (u, v, p) = taylor_green_exact(coords[0], coords[1], coords[2], *nu);
                Ok(vec![u, v, p])
            }
            ExactField::ExternalGrid { .. } => Err(Error::Usage(
                "an external dataset defines no exact field off its sample points".into(),
            )),
        }
    }
}

/// Uniform random sensors over the space-time domain with i.i.d. Gaussian
/// noise; reproducible from `seed`.
pub fn generate_sensor_dataset(
    problem: &PdeProblem,
    exact: &ExactField,
    n_state: usize,
    n_residual: usize,
    sigma_u: f64,
    sigma_f: f64,
    seed: u64,
) -> Result<SensorDataset> {
    if n_state == 0 {
        return Err(Error::Empty("n_state must be positive".into()));
    }
    if sigma_u < 0.0 || sigma_f < 0.0 {
        return Err(Error::Usage("noise scales must be nonnegative".into()));
    }
    let mut coord_rng = rng(seed, Stream::DatasetCoords);
    let mut noise_rng = rng(seed, Stream::DatasetNoise);
    let dim = problem.coord_dim();
    let observed = problem.observed_dim();
    let draw_point = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|d| {
                let u: f64 = r.random();
                problem.lo[d] + u * (problem.hi[d] - problem.lo[d])
            })
            .collect()
    };
    let mut state_obs = Vec::with_capacity(n_state);
    for _ in 0..n_state {
        let coords = draw_point(&mut coord_rng);
        let exact_vals = exact.eval(&coords)?;
        let values = exact_vals
            .iter()
            .take(observed)
            .map(|v| {
                let z: f64 = noise_rng.sample(StandardNormal);
                v + sigma_u * z
            })
            .collect();
        state_obs.push(Observation { coords, values });
    }
    let residual_points = (0..n_residual).map(|_| draw_point(&mut coord_rng)).collect();
    Ok(SensorDataset {
        state_obs,
        residual_points,
        noise_sigma_u: sigma_u,
        noise_sigma_f: sigma_f,
        seed,
    })
}

// -- CSV schemas ------------------------------------------------------------
//
// State observations: header `x,t,u` (Burgers) or `x,y,t,u,v` (NS).
// Residual points: header `x,t` or `x,y,t`.
// Comma-separated decimal floats, UTF-8, LF line endings.

const HEADERS: [(&str, usize, usize); 4] = [
    ("x,t,u", 2, 1),
    ("x,y,t,u,v", 3, 2),
    ("x,t", 2, 0),
    ("x,y,t", 3, 0),
];

fn parse_rows(path: &Path, text: &str) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::CsvSchema {
            path: path.to_path_buf(),
            header: String::new(),
            expected: HEADERS.map(|h| h.0).join(" | "),
        })?;
    let header = header.trim_end_matches('\r');
    let (coord_dim, value_dim) = HEADERS
        .iter()
        .find(|(h, _, _)| *h == header)
        .map(|(_, c, v)| (*c, *v))
        .ok_or_else(|| Error::CsvSchema {
            path: path.to_path_buf(),
            header: header.to_string(),
            expected: HEADERS.map(|h| h.0).join(" | "),
        })?;
    let n_cols = coord_dim + value_dim;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::CsvParse {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: format!("expected {n_cols} columns, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(n_cols);
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| Error::CsvParse {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: format!("non-numeric field {f:?}"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((coord_dim, value_dim, rows))
}

/// Loads state observations from a CSV file. Residual points, if any, live
/// in their own file (see [`load_residual_points_csv`]). Noise scales are
/// unknown for external data and default to 0.1.
pub fn load_dataset_csv(path: &Path) -> Result<SensorDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (coord_dim, value_dim, rows) = parse_rows(path, &text)?;
    if value_dim == 0 {
        return Err(Error::CsvSchema {
            path: path.to_path_buf(),
            header: "coordinate-only".into(),
            expected: "x,t,u | x,y,t,u,v".into(),
        });
    }
    let state_obs = rows
        .into_iter()
        .map(|r| Observation {
            coords: r[..coord_dim].to_vec(),
            values: r[coord_dim..].to_vec(),
        })
        .collect();
    Ok(SensorDataset {
        state_obs,
        residual_points: Vec::new(),
        noise_sigma_u: 0.1,
        noise_sigma_f: 0.1,
        seed: 0,
    })
}

/// Loads residual collocation points (`x,t` or `x,y,t`).
pub fn load_residual_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (_, value_dim, rows) = parse_rows(path, &text)?;
    if value_dim != 0 {
        return Err(Error::CsvSchema {
            path: path.to_path_buf(),
            header: "state schema".into(),
            expected: "x,t | x,y,t".into(),
        });
    }
    Ok(rows)
}

fn format_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

/// Writes state observations in the schema matching the problem kind.
pub fn save_dataset_csv(dataset: &SensorDataset, kind: PdeKind, path: &Path) -> Result<()> {
    let header = match kind {
        PdeKind::Burgers1D => "x,t,u",
        PdeKind::NavierStokes2D => "x,y,t,u,v",
    };
    let mut out = String::from(header);
    out.push('\n');
    for o in &dataset.state_obs {
        format_row(
            &mut out,
            o.coords.iter().chain(o.values.iter()).copied(),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes residual points (`x,t` / `x,y,t`).
pub fn save_residual_points_csv(
    points: &[Vec<f64>],
    kind: PdeKind,
    path: &Path,
) -> Result<()> {
    let header = match kind {
        PdeKind::Burgers1D => "x,t",
        PdeKind::NavierStokes2D => "x,y,t",
    };
    let mut out = String::from(header);
    out.push('\n');
    for p in points {
        format_row(&mut out, p.iter().copied());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
