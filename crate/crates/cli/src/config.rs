//! Experiment configuration: a TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use maxdual_core::duallab::{ConstantOverrides, DualityOptions};
use maxdual_core::lattice::{max_resolution, Lattice};
use maxdual_core::presets::{ExponentPreset, FunctionPreset, SpacePreset, WeightPreset};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub m: Option<u32>,
    pub preset: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub function: Option<String>,
    pub exponent: Option<String>,
    pub weight: Option<String>,
    pub trials: TrialCounts,
    pub constants: ConstantOverrides,
    pub duality: DualitySection,
    pub maximal: MaximalSection,
    pub sparse: SparseSection,
    pub apconst: ApSection,
    pub rdf: RdfSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialCounts {
    /// Multiplier on the selftest trial counts.
    pub scale: f64,
    pub families: usize,
    pub samples: usize,
    pub rh_trials: usize,
    pub t_sweep: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        TrialCounts { scale: 1.0, families: 100, samples: 1000, rh_trials: 200, t_sweep: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualitySection {
    pub resolutions: Vec<u32>,
    pub random_candidates: usize,
    pub stability: f64,
    pub density_trials: usize,
    pub families: usize,
    pub probe_m: u32,
}

impl Default for DualitySection {
    fn default() -> Self {
        let d = DualityOptions::default();
        DualitySection {
            resolutions: vec![6, 8, 10, 12],
            random_candidates: 8,
            stability: d.stability,
            density_trials: d.density_trials,
            families: d.families,
            probe_m: d.probe_m,
        }
    }
}

impl DualitySection {
    pub fn options(&self, seed: u64) -> DualityOptions {
        DualityOptions {
            stability: self.stability,
            density_trials: self.density_trials,
            families: self.families,
            seed,
            probe_m: self.probe_m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximalSection {
    /// `full`, `grid:<a>` or `grid:<a>,<b>` with shifts in {0,1,2}, or `local`.
    pub kind: String,
}

impl Default for MaximalSection {
    fn default() -> Self {
        MaximalSection { kind: "full".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseSection {
    pub gamma: Option<f64>,
    pub eta: f64,
    pub grid: Vec<u8>,
}

impl Default for SparseSection {
    fn default() -> Self {
        SparseSection { gamma: None, eta: 0.5, grid: vec![0, 0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApSection {
    pub p: f64,
    pub r_grid: Vec<f64>,
    pub samples: usize,
}

impl Default for ApSection {
    fn default() -> Self {
        ApSection { p: 2.0, r_grid: vec![1.0, 1.25, 1.5, 2.0, 3.0, 4.0], samples: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdfSection {
    pub a: f64,
    pub terms: usize,
    pub kind: String,
}

impl Default for RdfSection {
    fn default() -> Self {
        RdfSection { a: 2.0, terms: 12, kind: "grid:0".into() }
    }
}

/// Flags that override file values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub m: Option<u32>,
    pub preset: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub function: Option<String>,
    pub exponent: Option<String>,
    pub weight: Option<String>,
}

/// The validated configuration a command runs with.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub n: usize,
    pub m: u32,
    pub lattice: Lattice,
    pub space: SpacePreset,
    pub function: FunctionPreset,
    pub out_dir: PathBuf,
    pub file: FileConfig,
}

pub fn load_file(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

impl ExperimentConfig {
    pub fn resolve(command: &str, mut file: FileConfig, ov: Overrides) -> anyhow::Result<Self> {
        let seed = ov.seed.or(file.seed).unwrap_or(0);
        let n = ov.dim.or(file.dim).unwrap_or(1);
        if n != 1 && n != 2 {
            bail!("dimension must be 1 or 2, got {n}");
        }
        let m = ov.m.or(file.m).unwrap_or(8);
        let ceiling = max_resolution(n);
        if m > ceiling {
            bail!("m = {m} exceeds the ceiling {ceiling} for dimension {n}");
        }
        let lattice = Lattice::new(n, m)?;
        let preset_name = ov.preset.or_else(|| file.preset.clone()).unwrap_or_else(|| "calibration".into());
        let mut space = SpacePreset::named(&preset_name)?;
        if let Some(e) = ov.exponent.or_else(|| file.exponent.clone()) {
            space.exponent = ExponentPreset::parse(&e)?;
            space.name = format!("{}+custom", space.name);
        }
        if let Some(w) = ov.weight.or_else(|| file.weight.clone()) {
            space.weight = WeightPreset::parse(&w)?;
            if !space.name.ends_with("+custom") {
                space.name = format!("{}+custom", space.name);
            }
        }
        // fail early on exponents outside (1, inf)
        space.build(lattice)?;
        let function =
            FunctionPreset::parse(&ov.function.or_else(|| file.function.clone()).unwrap_or_else(|| "const:1".into()))?;
        let out_dir = ov.out_dir.or_else(|| file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("maxdual-out"));
        if file.trials.scale <= 0.0 {
            bail!("trials.scale must be positive");
        }
        if n == 2 && file.duality.resolutions == DualitySection::default().resolutions {
            file.duality.resolutions = vec![3, 4, 5, 6];
        }
        let dres = &file.duality.resolutions;
        if command == "duality" && dres.len() < 2 || dres.iter().any(|&r| r > ceiling) {
            bail!("duality.resolutions needs at least two values, each <= {ceiling}");
        }
        Ok(ExperimentConfig { command: command.to_string(), seed, n, m, lattice, space, function, out_dir, file })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let f: FileConfig =
            toml::from_str("seed = 3\nm = 6\n[constants]\nr = 1.5\n[duality]\nresolutions = [4, 6]\nstability = 2.0\n")
                .unwrap();
        assert_eq!(f.constants.r, Some(1.5));
        assert_eq!(f.duality.stability, 2.0);
        let c = ExperimentConfig::resolve("norm", f, Overrides { m: Some(5), ..Default::default() }).unwrap();
        assert_eq!((c.seed, c.m), (3, 5));
    }

    #[test]
    fn rejects_unknown_keys_and_ceilings() {
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
        let ov = Overrides { dim: Some(2), m: Some(7), ..Default::default() };
        assert!(ExperimentConfig::resolve("norm", FileConfig::default(), ov).is_err());
        let f: FileConfig = toml::from_str("[duality]\nresolutions = [8]").unwrap();
        assert!(ExperimentConfig::resolve("duality", f, Overrides::default()).is_err());
        let ov = Overrides { preset: Some("nope".into()), ..Default::default() };
        assert!(ExperimentConfig::resolve("norm", FileConfig::default(), ov).is_err());
    }
}
