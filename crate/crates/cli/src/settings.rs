//! Typed access to a [`RunConfig`], with the defaults of each command.

use std::fs;

use perturbed_heights::analysis::{boundary_data, BoundaryMode, ConcentrationConfig, Estimator};
use perturbed_heights::formats::{parse_heights, parse_model, parse_region, RunConfig};
use perturbed_heights::gibbs::Annealing;
use perturbed_heights::sampler::BurnIn;
use perturbed_heights::{HeightFunction, ModelKind, PotentialModel, Region};

use crate::Failure;

/// Model used by the concentration experiment when none is configured:
/// weak enough that coupled chains coalesce on boxes up to 25 x 25.
pub const DEFAULT_CONCENTRATION_MODEL: &str = "twopoint:a=0.01";

pub struct Settings {
    cfg: RunConfig,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn read(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{path}: {e}")))
}

pub fn read_heights(path: &str) -> Result<HeightFunction, Failure> {
    parse_heights(&read(path)?).map_err(|e| Failure::Usage(format!("{path}: {e}")))
}

impl Settings {
    pub fn new(cfg: RunConfig) -> Self {
        Settings { cfg }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.cfg.get_parsed(key).map_err(usage)
    }

    pub fn out(&self) -> Option<&str> {
        self.cfg.get("out")
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        Ok(self.parsed("seed")?.unwrap_or(0))
    }

    pub fn steps(&self) -> Result<Option<u64>, Failure> {
        self.parsed("steps")
    }

    pub fn samples(&self) -> Result<Option<u64>, Failure> {
        self.parsed("samples")
    }

    pub fn draws(&self, default: usize) -> Result<usize, Failure> {
        Ok(self.parsed("draws")?.unwrap_or(default))
    }

    pub fn pairs(&self, default: usize) -> Result<usize, Failure> {
        Ok(self.parsed("pairs")?.unwrap_or(default))
    }

    pub fn c_grid(&self, default: &[f64]) -> Result<Vec<f64>, Failure> {
        Ok(self.cfg.get_list("c").map_err(usage)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn model(&self, default: &str) -> Result<ModelKind, Failure> {
        parse_model(self.cfg.get("model").unwrap_or(default)).map_err(usage)
    }

    pub fn region(&self) -> Result<Option<Region>, Failure> {
        self.cfg.get("region_file").map(|path| parse_region(&read(path)?).map_err(|e| Failure::Usage(format!("{path}: {e}")))).transpose()
    }

    pub fn boundary_file_data(&self) -> Result<Option<HeightFunction>, Failure> {
        self.cfg.get("boundary_file").map(read_heights).transpose()
    }

    fn boundary_mode(&self, default: BoundaryMode) -> Result<BoundaryMode, Failure> {
        Ok(self.parsed("boundary")?.unwrap_or(default))
    }

    /// The boundary file if one is configured, else generated data.
    pub fn boundary_data(&self, region: &Region, default: BoundaryMode) -> Result<HeightFunction, Failure> {
        match self.boundary_file_data()? {
            Some(h) => Ok(h),
            None => Ok(boundary_data(region, self.boundary_mode(default)?)?),
        }
    }

    /// Exact annealing for finite-support models (the default), Monte Carlo
    /// with `draws` potentials otherwise or when `mode = mc`.
    pub fn annealing(&self, kind: &ModelKind, draws: usize) -> Result<Annealing, Failure> {
        let draws = self.draws(draws)?;
        match self.cfg.get("mode").unwrap_or("exact") {
            "exact" if kind.is_finite_support() => Ok(Annealing::Exact),
            "exact" | "mc" => Ok(Annealing::MonteCarlo { draws }),
            other => Err(Failure::Usage(format!("unknown mode `{other}` (expected exact or mc)"))),
        }
    }

    fn burn_in(&self) -> Result<BurnIn, Failure> {
        if let Some(spec) = self.cfg.get("burn_in") {
            let parsed = match spec.split_once(':') {
                Some(("steps", v)) => v.parse().ok().map(BurnIn::Steps),
                Some(("coalescence", v)) => v.parse().ok().map(|max_sweeps| BurnIn::Coalescence { max_sweeps }),
                _ => None,
            };
            return parsed.ok_or_else(|| Failure::Usage(format!("burn_in `{spec}`: expected steps:<u64> or coalescence:<max sweeps>")));
        }
        Ok(match self.steps()? {
            Some(steps) => BurnIn::Steps(steps),
            None => BurnIn::Coalescence { max_sweeps: 20_000 },
        })
    }

    /// The concentration experiment. `mode = exact` enumerates supports;
    /// `mode = mc` (the default) runs Glauber chains.
    pub fn concentration(&self) -> Result<ConcentrationConfig, Failure> {
        let sizes = self.cfg.get_list("sizes").map_err(usage)?.unwrap_or_else(|| vec![9, 15, 25]);
        let seed = self.seed()?;
        let model = PotentialModel::new(self.model(DEFAULT_CONCENTRATION_MODEL)?, seed)?;
        let estimator = match self.cfg.get("mode").unwrap_or("mc") {
            "exact" => {
                let kind = &model.kind;
                let draws = self.draws(200)?;
                Estimator::Exact(if kind.is_finite_support() { Annealing::Exact } else { Annealing::MonteCarlo { draws } })
            }
            "mc" => Estimator::Chain { burn_in: self.burn_in()?, thin_sweeps: self.parsed("thin_sweeps")?.unwrap_or(10) },
            other => return Err(Failure::Usage(format!("unknown mode `{other}` (expected exact or mc)"))),
        };
        let mut cfg = ConcentrationConfig::new(sizes, model, estimator);
        cfg.seed = seed;
        cfg.boundary = self.boundary_mode(BoundaryMode::Extremal)?;
        cfg.c_grid = self.c_grid(&cfg.c_grid)?;
        cfg.a = self.parsed("A")?.unwrap_or(cfg.a);
        cfg.mean_draws = self.parsed("mean_draws")?.unwrap_or(cfg.mean_draws);
        cfg.mean_samples = self.parsed("mean_samples")?.unwrap_or(cfg.mean_samples);
        cfg.tail_samples = self.parsed("tail_samples")?.unwrap_or(cfg.tail_samples).max(1);
        let total = self.samples()?.unwrap_or(1000) as usize;
        cfg.tail_draws = match self.parsed::<usize>("tail_draws")? {
            Some(d) => d,
            None => total.div_ceil(cfg.tail_samples),
        };
        Ok(cfg)
    }
}
