//! Synthetic 2-D target distributions and latent noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::Batch;

pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_LATENT_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Ring,
    Grid,
}

/// Isotropic Gaussian mixture with equally weighted modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub kind: DatasetKind,
    pub mode_centers: Vec<[f64; 2]>,
    pub mode_std: f64,
    pub seed: u64,
}

/// `modes` centers equally spaced on a circle of `radius`, starting on the positive x axis.
pub fn make_ring(modes: usize, radius: f64, std: f64, seed: u64) -> Result<SyntheticDataset> {
    if modes == 0 {
        return Err(Error::Config("ring needs at least one mode".into()));
    }
    check_std(std)?;
    let mode_centers = (0..modes)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / modes as f64;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect();
    Ok(SyntheticDataset {
        kind: DatasetKind::Ring,
        mode_centers,
        mode_std: std,
        seed,
    })
}

/// `side x side` lattice with the given spacing, centered on the origin.
pub fn make_grid(side: usize, spacing: f64, std: f64, seed: u64) -> Result<SyntheticDataset> {
    if side == 0 {
        return Err(Error::Config("grid needs at least one mode per side".into()));
    }
    check_std(std)?;
    let half = (side as f64 - 1.0) / 2.0;
    let mut mode_centers = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            mode_centers.push([(i as f64 - half) * spacing, (j as f64 - half) * spacing]);
        }
    }
    Ok(SyntheticDataset {
        kind: DatasetKind::Grid,
        mode_centers,
        mode_std: std,
        seed,
    })
}

fn check_std(std: f64) -> Result<()> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::Config(format!("mode std must be finite and >= 0, got {std}")));
    }
    Ok(())
}

impl SyntheticDataset {
    pub fn num_modes(&self) -> usize {
        self.mode_centers.len()
    }

    /// Mixture proportions of the modes (uniform).
    pub fn mode_weights(&self) -> Vec<f64> {
        vec![1.0 / self.num_modes() as f64; self.num_modes()]
    }

    /// Samples plus the index of the mode each one was drawn from.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Batch, Vec<usize>) {
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.random_range(0..self.num_modes());
            let c = self.mode_centers[k];
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            data.push(c[0] + self.mode_std * dx);
            data.push(c[1] + self.mode_std * dy);
            labels.push(k);
        }
        (Batch::new(n, 2, data).expect("2n values"), labels)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Batch {
        self.sample_labeled(n, rng).0
    }

    /// A fixed sample drawn from the dataset's own seed, independent of any caller RNG.
    pub fn reference_sample(&self, n: usize) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.sample(n, &mut rng)
    }
}

pub fn sample_real<R: Rng + ?Sized>(ds: &SyntheticDataset, n: usize, rng: &mut R) -> Batch {
    ds.sample(n, rng)
}

/// Standard-normal latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentSpec {
    pub dimension: usize,
}

impl LatentSpec {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("latent dimension must be >= 1".into()));
        }
        Ok(Self { dimension })
    }
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_LATENT_DIM,
        }
    }
}

pub fn sample_latent<R: Rng + ?Sized>(spec: &LatentSpec, n: usize, rng: &mut R) -> Batch {
    let data = (0..n * spec.dimension)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Batch::new(n, spec.dimension, data).expect("n*dim values")
}

/// Everything a training step needs to draw fresh minibatches.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSource {
    pub dataset: SyntheticDataset,
    pub latent: LatentSpec,
    pub batch_size: usize,
}

impl BatchSource {
    pub fn new(dataset: SyntheticDataset, latent: LatentSpec, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(Self {
            dataset,
            latent,
            batch_size,
        })
    }

    pub fn real<R: Rng + ?Sized>(&self, rng: &mut R) -> Batch {
        self.dataset.sample(self.batch_size, rng)
    }

    pub fn latent<R: Rng + ?Sized>(&self, rng: &mut R) -> Batch {
        sample_latent(&self.latent, self.batch_size, rng)
    }
}
