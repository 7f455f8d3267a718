//! File formats: RFC-4180-style CSVs with one-line headers, JSON summaries,
//! and round-trips for the solution bundle and occupation measures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pekar_core::coulomb::OccupationMeasure;
use pekar_core::grid::{RadialFunction, RadialGrid};
use pekar_core::report::SolverSummary;
use pekar_core::sampler::ChainOutput;
use pekar_core::solver::PekarSolution;
use pekar_core::stats::RadialHistogram;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Two-column CSV (r, value) with a one-line header.
pub fn write_radial_csv(path: &Path, f: &RadialFunction, value_name: &str) -> Result<()> {
    let mut out = String::with_capacity(f.grid().n() * 24);
    out.push_str(&format!("r,{value_name}\n"));
    for i in 0..f.grid().n() {
        out.push_str(&format!("{},{}\n", f.grid().node(i), f.value(i)));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub summary: SolverSummary,
    pub drift_farfield_nodes: usize,
}

/// Writes solution.json (scalars and grid metadata) plus solution.csv with
/// columns (r, psi0, potential, drift).
pub fn write_solution(dir: &Path, sol: &PekarSolution) -> Result<(PathBuf, PathBuf)> {
    ensure_dir(dir)?;
    let json_path = dir.join("solution.json");
    write_json(
        &json_path,
        &SolutionMeta {
            summary: SolverSummary::from_solution(sol),
            drift_farfield_nodes: sol.drift_farfield_nodes,
        },
    )?;
    let csv_path = dir.join("solution.csv");
    let grid = sol.psi0.grid();
    let mut out = String::with_capacity(grid.n() * 64);
    out.push_str("r,psi0,potential,drift\n");
    for i in 0..grid.n() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            grid.node(i),
            sol.psi0.value(i),
            sol.potential.value(i),
            sol.drift.value(i)
        ));
    }
    fs::write(&csv_path, out).with_context(|| format!("writing {}", csv_path.display()))?;
    Ok((json_path, csv_path))
}

/// Rebuilds the solution bundle from solution.json + solution.csv.
pub fn read_solution(dir: &Path) -> Result<PekarSolution> {
    let meta: SolutionMeta =
        serde_json::from_str(&fs::read_to_string(dir.join("solution.json"))?)
            .context("parsing solution.json")?;
    let text = fs::read_to_string(dir.join("solution.csv")).context("reading solution.csv")?;
    let mut psi = Vec::new();
    let mut pot = Vec::new();
    let mut drift = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("solution.csv line {} has {} columns", ln + 1, cols.len());
        }
        psi.push(cols[1].parse::<f64>()?);
        pot.push(cols[2].parse::<f64>()?);
        drift.push(cols[3].parse::<f64>()?);
    }
    let grid = RadialGrid::new(meta.summary.r_max, meta.summary.n)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    if psi.len() != meta.summary.n {
        bail!("solution.csv row count {} does not match n = {}", psi.len(), meta.summary.n);
    }
    Ok(PekarSolution {
        psi0: RadialFunction::new(grid.clone(), psi).map_err(|e| anyhow::anyhow!("{e}"))?,
        lambda: meta.summary.lambda,
        lambda_eig: meta.summary.lambda_eig,
        rho: meta.summary.rho,
        coulomb_energy: meta.summary.coulomb_energy,
        dirichlet: meta.summary.dirichlet,
        potential: RadialFunction::new(grid.clone(), pot).map_err(|e| anyhow::anyhow!("{e}"))?,
        drift: RadialFunction::new(grid, drift).map_err(|e| anyhow::anyhow!("{e}"))?,
        residual: meta.summary.el_residual,
        drift_farfield_nodes: meta.drift_farfield_nodes,
        objective_history: Vec::new(),
        change_history: Vec::new(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeasureSidecar {
    pub softening: f64,
}

/// CSV (x,y,z,w) plus the JSON sidecar carrying the softening length.
pub fn write_measure(path_csv: &Path, mu: &OccupationMeasure) -> Result<()> {
    let mut out = String::from("x,y,z,w\n");
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        out.push_str(&format!("{},{},{},{}\n", p[0], p[1], p[2], w));
    }
    fs::write(path_csv, out).with_context(|| format!("writing {}", path_csv.display()))?;
    write_json(&sidecar_path(path_csv), &MeasureSidecar { softening: mu.softening() })
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn read_measure(path_csv: &Path) -> Result<OccupationMeasure> {
    let sidecar: MeasureSidecar =
        serde_json::from_str(&fs::read_to_string(sidecar_path(path_csv)).with_context(|| {
            format!("reading sidecar {}", sidecar_path(path_csv).display())
        })?)?;
    let text = fs::read_to_string(path_csv)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("measure CSV line {} has {} columns", ln + 1, cols.len());
        }
        points.push([cols[0].parse()?, cols[1].parse()?, cols[2].parse()?]);
        weights.push(cols[3].parse()?);
    }
    OccupationMeasure::new(points, weights, sidecar.softening).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Sample table: step, H, best-shift components, endpoint, orbit distance.
pub fn write_samples_csv(path: &Path, out: &ChainOutput) -> Result<()> {
    let mut text = String::from("step,H,Yx,Yy,Yz,Wx,Wy,Wz,orbit_dist\n");
    for s in &out.samples {
        let (yx, yy, yz) = match s.shift {
            Some(w) => (w[0].to_string(), w[1].to_string(), w[2].to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let od = s.orbit_distance.map(|d| d.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.step, s.h_value, yx, yy, yz, s.endpoint[0], s.endpoint[1], s.endpoint[2], od
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Default)]
pub struct SampleRow {
    pub h_value: f64,
    pub shift: Option<[f64; 3]>,
    pub endpoint: [f64; 3],
    pub orbit_distance: Option<f64>,
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            bail!("samples CSV line {} has {} columns", ln + 1, cols.len());
        }
        let shift = if cols[2].is_empty() {
            None
        } else {
            Some([cols[2].parse()?, cols[3].parse()?, cols[4].parse()?])
        };
        let orbit = if cols[8].is_empty() { None } else { Some(cols[8].parse()?) };
        rows.push(SampleRow {
            h_value: cols[1].parse()?,
            shift,
            endpoint: [cols[5].parse()?, cols[6].parse()?, cols[7].parse()?],
            orbit_distance: orbit,
        });
    }
    Ok(rows)
}

/// Histogram CSV with the reference radial density per bin center.
pub fn write_histogram_csv(
    path: &Path,
    hist: &RadialHistogram,
    reference_density: &[f64],
) -> Result<()> {
    let mut text = String::from("r_bin_center,count,reference_density\n");
    for (k, &c) in hist.counts().iter().enumerate() {
        text.push_str(&format!("{},{},{}\n", hist.bin_center(k), c, reference_density[k]));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
