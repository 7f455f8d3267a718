//! Versioned JSON configuration for the experiment runs. Every field is
//! echoed into the outputs.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pekar_core::sampler::{ChainConfig, LadderConfig};
use pekar_core::ScfConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub free_energy: FreeEnergySection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub r_max: f64,
    pub n: usize,
    pub tol: f64,
    pub mixing: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = ScfConfig::default();
        SolverSection { r_max: d.r_max, n: d.n, tol: d.tol, mixing: d.mixing, max_iter: d.max_iter }
    }
}

impl SolverSection {
    pub fn to_scf(&self) -> ScfConfig {
        ScfConfig {
            r_max: self.r_max,
            n: self.n,
            tol: self.tol,
            mixing: self.mixing,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    /// Horizons for the trend studies; each uses m = segments steps.
    pub t_grid: Vec<f64>,
    pub segments: usize,
    pub betas: Vec<f64>,
    pub burn_in: u64,
    pub draws: usize,
    pub thinning: u64,
    pub swap_interval: u64,
    pub exchange: bool,
    pub eta_factor: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            t_grid: vec![4.0, 8.0, 16.0],
            segments: 512,
            betas: LadderConfig::default_betas(),
            burn_in: 20_000,
            draws: 1200,
            thinning: 100,
            swap_interval: 100,
            exchange: true,
            eta_factor: 0.1,
        }
    }
}

impl SamplerSection {
    pub fn ladder_config(&self, t: f64, track_shift: bool) -> LadderConfig {
        LadderConfig {
            betas: self.betas.clone(),
            base: ChainConfig {
                t,
                h: t / self.segments as f64,
                burn_in: self.burn_in,
                draws: self.draws,
                thinning: self.thinning,
                eta_factor: self.eta_factor,
                track_shift,
                ..ChainConfig::default()
            },
            swap_interval: self.swap_interval,
            exchange: self.exchange,
        }
    }

    pub fn chain_config(&self, t: f64, beta: f64, track_shift: bool) -> ChainConfig {
        ChainConfig {
            t,
            h: t / self.segments as f64,
            beta,
            burn_in: self.burn_in,
            draws: self.draws,
            thinning: self.thinning,
            eta_factor: self.eta_factor,
            track_shift,
            ..ChainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    pub horizon: f64,
    pub step: f64,
    pub record_stride: usize,
    pub bins: usize,
    pub hist_r_max: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        SdeSection { horizon: 10_000.0, step: 1e-3, record_stride: 10, bins: 20, hist_r_max: 6.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergySection {
    /// Horizons at which (1/t) log Z_t is estimated; must be members of the
    /// sampler t_grid so the tempering ladders are shared.
    pub t_values: Vec<f64>,
}

impl Default for FreeEnergySection {
    fn default() -> Self {
        FreeEnergySection { t_values: vec![4.0, 8.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Tube exceedance threshold as a fraction of Lambda psi0^2 (0).
    pub tube_epsilon_factor: f64,
    pub min_effective_samples: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { tube_epsilon_factor: 0.5, min_effective_samples: 500.0 }
    }
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig {
            schema_version: SCHEMA_VERSION,
            solver: SolverSection::default(),
            sampler: SamplerSection::default(),
            sde: SdeSection::default(),
            free_energy: FreeEnergySection::default(),
            verify: VerifySection::default(),
        }
    }
}

impl MasterConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: MasterConfig = serde_json::from_str(&text).context("parsing config JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version);
        }
        if self.sampler.t_grid.is_empty()
            || self.sampler.t_grid.windows(2).any(|w| w[1] <= w[0])
        {
            bail!("sampler.t_grid must be a nonempty increasing sequence");
        }
        let betas = &self.sampler.betas;
        if betas.is_empty() || betas.windows(2).any(|w| w[1] <= w[0]) {
            bail!("sampler.betas must increase");
        }
        if betas[0] != 0.0 {
            bail!("sampler.betas must start at 0.0");
        }
        if (betas[betas.len() - 1] - 1.0).abs() > 1e-12 {
            bail!("sampler.betas must end at 1.0");
        }
        for t in &self.free_energy.t_values {
            if !self.sampler.t_grid.iter().any(|g| (g - t).abs() < 1e-12) {
                bail!("free_energy.t_values entry {t} is not in sampler.t_grid");
            }
        }
        if self.sde.step <= 0.0 || self.sde.horizon < 0.0 {
            bail!("sde.step must be positive and sde.horizon nonnegative");
        }
        Ok(())
    }
}
