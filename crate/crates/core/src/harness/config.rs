//! Method variants and run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coevolution::{MutationConfig, DEFAULT_LEARNING_RATE};
use crate::data::{make_grid, make_ring, BatchSource, LatentSpec, SyntheticDataset, DEFAULT_BATCH_SIZE, DEFAULT_LATENT_DIM};
use crate::error::{Error, Result};
use crate::grid::{ExecutionMode, GridConfig};
use crate::harness::log::{format_float, KeyValueFile};
use crate::mixture::{EsConfig, DEFAULT_EVAL_SAMPLES, DEFAULT_MIXTURE_MUTATION_SCALE};
use crate::nn::{Activation, MlpSpec};
use crate::objectives::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodVariant {
    Mustangs,
    LipBce,
    LipMse,
    LipHeu,
    Egan,
    GanBce,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 6] = [
        Self::Mustangs,
        Self::LipBce,
        Self::LipMse,
        Self::LipHeu,
        Self::Egan,
        Self::GanBce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mustangs => "mustangs",
            Self::LipBce => "lip-bce",
            Self::LipMse => "lip-mse",
            Self::LipHeu => "lip-heu",
            Self::Egan => "e-gan",
            Self::GanBce => "gan-bce",
        }
    }

    /// Spatial grid variants; the others train a single generator/discriminator pair.
    pub fn is_grid(self) -> bool {
        matches!(self, Self::Mustangs | Self::LipBce | Self::LipMse | Self::LipHeu)
    }

    /// Default generator loss menu.
    pub fn loss_menu(self) -> Vec<LossKind> {
        match self {
            Self::Mustangs | Self::Egan => LossKind::ALL.to_vec(),
            Self::LipBce | Self::GanBce => vec![LossKind::Minmax],
            Self::LipMse => vec![LossKind::LeastSquare],
            Self::LipHeu => vec![LossKind::Heuristic],
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "mustangs" => Ok(Self::Mustangs),
            "lipbce" => Ok(Self::LipBce),
            "lipmse" => Ok(Self::LipMse),
            "lipheu" => Ok(Self::LipHeu),
            "egan" => Ok(Self::Egan),
            "ganbce" => Ok(Self::GanBce),
            _ => Err(Error::Parse(format!("unknown method variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetShape {
    Ring,
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: MethodVariant,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub epochs: u64,
    pub seed: u64,
    pub mode: ExecutionMode,
    pub latent_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub gen_output: Activation,
    pub learning_rate: f64,
    pub steps_per_mutation: usize,
    pub hyperparam_mutation_probability: f64,
    pub hyperparam_mutation_scale: f64,
    pub tournament_size: usize,
    /// Replaces the Mustangs menu (uniform probabilities); rejected for other variants.
    pub loss_menu: Option<Vec<LossKind>>,
    pub mixture_mutation_scale: f64,
    pub es_eval_samples: usize,
    pub dataset: DatasetShape,
    pub modes: usize,
    pub radius: f64,
    pub lattice_side: usize,
    pub lattice_spacing: f64,
    pub mode_std: f64,
    pub data_seed: u64,
    pub batch_size: usize,
    /// Samples per mixture when scoring each epoch.
    pub metric_samples: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: MethodVariant::Mustangs,
            grid_rows: 3,
            grid_cols: 3,
            epochs: 100,
            seed: 0,
            mode: ExecutionMode::Sequential,
            latent_dim: DEFAULT_LATENT_DIM,
            gen_hidden: vec![32, 32],
            disc_hidden: vec![32, 32],
            gen_output: Activation::Identity,
            learning_rate: DEFAULT_LEARNING_RATE,
            steps_per_mutation: crate::coevolution::DEFAULT_STEPS_PER_MUTATION,
            hyperparam_mutation_probability: crate::coevolution::DEFAULT_HYPERPARAM_PROBABILITY,
            hyperparam_mutation_scale: crate::coevolution::DEFAULT_HYPERPARAM_SCALE,
            tournament_size: crate::coevolution::DEFAULT_TOURNAMENT_SIZE,
            loss_menu: None,
            mixture_mutation_scale: DEFAULT_MIXTURE_MUTATION_SCALE,
            es_eval_samples: DEFAULT_EVAL_SAMPLES,
            dataset: DatasetShape::Ring,
            modes: 8,
            radius: 2.0,
            lattice_side: 5,
            lattice_spacing: 2.0,
            mode_std: 0.05,
            data_seed: 0,
            batch_size: DEFAULT_BATCH_SIZE,
            metric_samples: 2048,
            out: None,
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad list item `{t}`"))))
        .collect()
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value `{s}` for `{key}`")))
}

/// Parses `MxN` (e.g. `3x3`).
pub fn parse_grid_dims(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .trim()
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Parse(format!("grid must look like 3x3, got `{s}`")))?;
    Ok((parse_num("grid", a)?, parse_num("grid", b)?))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn for_variant(variant: MethodVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "variant" => self.variant = v.parse()?,
            "grid" => (self.grid_rows, self.grid_cols) = parse_grid_dims(v)?,
            "grid_rows" => self.grid_rows = parse_num(key, v)?,
            "grid_cols" => self.grid_cols = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "mode" => self.mode = v.parse()?,
            "latent_dim" => self.latent_dim = parse_num(key, v)?,
            "gen_hidden" => self.gen_hidden = parse_list(v)?,
            "disc_hidden" => self.disc_hidden = parse_list(v)?,
            "gen_output" => self.gen_output = v.parse()?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "steps_per_mutation" => self.steps_per_mutation = parse_num(key, v)?,
            "hyperparam_mutation_probability" => self.hyperparam_mutation_probability = parse_num(key, v)?,
            "hyperparam_mutation_scale" => self.hyperparam_mutation_scale = parse_num(key, v)?,
            "tournament_size" => self.tournament_size = parse_num(key, v)?,
            "loss_menu" => self.loss_menu = if v.is_empty() { None } else { Some(parse_list(v)?) },
            "mixture_mutation_scale" => self.mixture_mutation_scale = parse_num(key, v)?,
            "es_eval_samples" => self.es_eval_samples = parse_num(key, v)?,
            "dataset" => {
                self.dataset = match v.to_ascii_lowercase().as_str() {
                    "ring" => DatasetShape::Ring,
                    "grid" | "lattice" => DatasetShape::Grid,
                    _ => return Err(Error::Parse(format!("unknown dataset `{v}`"))),
                }
            }
            "modes" => self.modes = parse_num(key, v)?,
            "radius" => self.radius = parse_num(key, v)?,
            "lattice_side" => self.lattice_side = parse_num(key, v)?,
            "lattice_spacing" => self.lattice_spacing = parse_num(key, v)?,
            "mode_std" => self.mode_std = parse_num(key, v)?,
            "data_seed" => self.data_seed = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "metric_samples" => self.metric_samples = parse_num(key, v)?,
            "out" => self.out = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KeyValueFile) -> Result<()> {
        kv.entries.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&KeyValueFile::read(path)?)?;
        Ok(cfg)
    }

    /// Every field as `key = value`, in a form [`RunConfig::set`] accepts.
    pub fn to_key_values(&self) -> KeyValueFile {
        let mut kv = KeyValueFile::default();
        kv.push("variant", self.variant);
        kv.push("grid", format!("{}x{}", self.grid_rows, self.grid_cols));
        kv.push("epochs", self.epochs);
        kv.push("seed", self.seed);
        kv.push("mode", self.mode.name());
        kv.push("latent_dim", self.latent_dim);
        kv.push("gen_hidden", join(&self.gen_hidden));
        kv.push("disc_hidden", join(&self.disc_hidden));
        kv.push("gen_output", self.gen_output.name());
        kv.push("learning_rate", format_float(self.learning_rate));
        kv.push("steps_per_mutation", self.steps_per_mutation);
        kv.push("hyperparam_mutation_probability", format_float(self.hyperparam_mutation_probability));
        kv.push("hyperparam_mutation_scale", format_float(self.hyperparam_mutation_scale));
        kv.push("tournament_size", self.tournament_size);
        kv.push("loss_menu", self.loss_menu.as_deref().map(join).unwrap_or_default());
        kv.push("mixture_mutation_scale", format_float(self.mixture_mutation_scale));
        kv.push("es_eval_samples", self.es_eval_samples);
        kv.push(
            "dataset",
            match self.dataset {
                DatasetShape::Ring => "ring",
                DatasetShape::Grid => "grid",
            },
        );
        kv.push("modes", self.modes);
        kv.push("radius", format_float(self.radius));
        kv.push("lattice_side", self.lattice_side);
        kv.push("lattice_spacing", format_float(self.lattice_spacing));
        kv.push("mode_std", format_float(self.mode_std));
        kv.push("data_seed", self.data_seed);
        kv.push("batch_size", self.batch_size);
        kv.push("metric_samples", self.metric_samples);
        kv.push("out", self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv
    }

    /// Grid used by the variant; single-pair variants always run on 1x1.
    pub fn grid_config(&self) -> Result<GridConfig> {
        if self.variant.is_grid() {
            GridConfig::new(self.grid_rows, self.grid_cols)
        } else {
            GridConfig::new(1, 1)
        }
    }

    pub fn mutation_config(&self) -> Result<MutationConfig> {
        let menu = match &self.loss_menu {
            Some(m) if self.variant == MethodVariant::Mustangs => m.clone(),
            Some(_) => {
                return Err(Error::Config(format!(
                    "loss_menu can only be overridden for mustangs, not {}",
                    self.variant
                )))
            }
            None => self.variant.loss_menu(),
        };
        let mut dedup = menu.clone();
        dedup.sort_by_key(|k| k.index());
        dedup.dedup();
        if dedup.len() != menu.len() {
            return Err(Error::Config("loss_menu lists a loss twice".into()));
        }
        let cfg = MutationConfig {
            steps_per_mutation: self.steps_per_mutation,
            // learning rates only evolve on the grid
            hyperparam_mutation_probability: if self.variant.is_grid() {
                self.hyperparam_mutation_probability
            } else {
                0.0
            },
            hyperparam_mutation_scale: self.hyperparam_mutation_scale,
            tournament_size: self.tournament_size,
            ..MutationConfig::uniform(menu)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn es_config(&self) -> Result<EsConfig> {
        if !(self.mixture_mutation_scale >= 0.0 && self.mixture_mutation_scale.is_finite()) {
            return Err(Error::Config("mixture_mutation_scale must be >= 0".into()));
        }
        if self.es_eval_samples < 3 {
            return Err(Error::Config("es_eval_samples must be at least 3".into()));
        }
        Ok(EsConfig {
            mutation_scale: self.mixture_mutation_scale,
            eval_samples: self.es_eval_samples,
        })
    }

    pub fn generator_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![self.latent_dim];
        sizes.extend(&self.gen_hidden);
        sizes.push(2);
        MlpSpec::new(sizes, self.gen_output)
    }

    pub fn discriminator_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![2];
        sizes.extend(&self.disc_hidden);
        sizes.push(1);
        MlpSpec::new(sizes, Activation::Sigmoid)
    }

    pub fn dataset(&self) -> Result<SyntheticDataset> {
        match self.dataset {
            DatasetShape::Ring => make_ring(self.modes, self.radius, self.mode_std, self.data_seed),
            DatasetShape::Grid => make_grid(self.lattice_side, self.lattice_spacing, self.mode_std, self.data_seed),
        }
    }

    pub fn batch_source(&self) -> Result<BatchSource> {
        BatchSource::new(self.dataset()?, LatentSpec::new(self.latent_dim)?, self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if self.metric_samples < 3 {
            return Err(Error::Config("metric_samples must be at least 3".into()));
        }
        self.grid_config()?;
        self.mutation_config()?;
        self.es_config()?;
        self.generator_spec()?;
        self.discriminator_spec()?;
        self.batch_source()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in MethodVariant::ALL {
            assert_eq!(v.name().parse::<MethodVariant>().unwrap(), v);
        }
        assert_eq!("LipBCE".parse::<MethodVariant>().unwrap(), MethodVariant::LipBce);
        assert_eq!("GAN_BCE".parse::<MethodVariant>().unwrap(), MethodVariant::GanBce);
        assert!("wgan".parse::<MethodVariant>().is_err());
    }

    #[test]
    fn variant_matrix() {
        let menu = |v| RunConfig::for_variant(v).mutation_config().unwrap();
        let m = menu(MethodVariant::Mustangs);
        assert_eq!(m.loss_menu, LossKind::ALL.to_vec());
        assert!(m.selection_probabilities.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(menu(MethodVariant::LipBce).loss_menu, vec![LossKind::Minmax]);
        assert_eq!(menu(MethodVariant::LipMse).loss_menu, vec![LossKind::LeastSquare]);
        assert_eq!(menu(MethodVariant::LipHeu).loss_menu, vec![LossKind::Heuristic]);
        assert_eq!(menu(MethodVariant::GanBce).loss_menu, vec![LossKind::Minmax]);
        let egan = RunConfig::for_variant(MethodVariant::Egan);
        assert_eq!(egan.grid_config().unwrap().num_cells(), 1);
        assert_eq!(RunConfig::default().grid_config().unwrap().num_cells(), 9);
    }

    #[test]
    fn loss_menu_override() {
        let mut c = RunConfig::default();
        c.set("loss_menu", "minmax").unwrap();
        assert_eq!(c.mutation_config().unwrap().loss_menu, vec![LossKind::Minmax]);
        c.set("variant", "lip-mse").unwrap();
        assert!(c.mutation_config().is_err());
        let mut c = RunConfig::default();
        c.set("loss_menu", "minmax,minmax").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let mut c = RunConfig::for_variant(MethodVariant::LipHeu);
        c.set("grid", "2x4").unwrap();
        c.set("gen_hidden", "16, 8").unwrap();
        c.set("mode", "async").unwrap();
        c.set("out", "/tmp/x").unwrap();
        c.set("learning_rate", "0.001").unwrap();
        let mut d = RunConfig::default();
        d.apply(&c.to_key_values()).unwrap();
        assert_eq!(c, d);
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("grid", "3by3").is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut c = RunConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.grid_rows = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::for_variant(MethodVariant::GanBce);
        c.grid_rows = 0;
        assert!(c.validate().is_ok());
    }
}
