//! Mixtures of generators: sampling, (1+1)-ES weight tuning and picking the
//! best neighborhood mixture.
//!
//! All scores follow one convention: lower is better. Selecting the "best"
//! mixture therefore means taking the minimum score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{sample_latent, LatentSpec};
use crate::error::{Error, Result};
use crate::metrics::{frechet_from_summaries, GaussianSummary};
use crate::nn::{Batch, Network};

pub const DEFAULT_MIXTURE_MUTATION_SCALE: f64 = 0.01;
pub const DEFAULT_EVAL_SAMPLES: usize = 512;

/// Probability vector over a neighborhood's generators.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    weights: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("mixture needs at least one weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights are not on the simplex: {weights:?}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Clamps to `[0, 1]` and renormalizes; an all-zero vector becomes uniform.
    fn repaired(raw: Vec<f64>) -> Self {
        let mut w: Vec<f64> = raw.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Self::uniform(w.len());
        }
        w.iter_mut().for_each(|x| *x /= sum);
        Self { weights: w }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCandidate {
    pub generators: Vec<Network>,
    pub weights: MixtureWeights,
    /// Score from the last ES step or selection; `INFINITY` until first scored.
    pub score: f64,
}

impl MixtureCandidate {
    pub fn new(generators: Vec<Network>, weights: MixtureWeights) -> Result<Self> {
        if generators.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} generators but {} weights",
                generators.len(),
                weights.len()
            )));
        }
        Ok(Self {
            generators,
            weights,
            score: f64::INFINITY,
        })
    }
}

/// Scores a batch of generated samples; lower is better.
pub trait MixtureMetric {
    fn score(&self, samples: &Batch) -> Result<f64>;
}

/// Fréchet distance to a fixed Gaussian summary of the target distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetScore {
    pub reference: GaussianSummary,
}

impl FrechetScore {
    pub fn from_reference(real: &Batch) -> Result<Self> {
        Ok(Self {
            reference: GaussianSummary::from_batch(real)?,
        })
    }
}

impl MixtureMetric for FrechetScore {
    fn score(&self, samples: &Batch) -> Result<f64> {
        if samples.rows() < 3 {
            return Err(Error::TooFewSamples {
                needed: 3,
                got: samples.rows(),
            });
        }
        Ok(frechet_from_summaries(
            &self.reference,
            &GaussianSummary::from_batch(samples)?,
        ))
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding can leave acc slightly below 1; fall back to the last non-zero weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// The randomness behind `n` mixture samples: one uniform per sample for the
/// component choice and one latent row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraws {
    pub uniforms: Vec<f64>,
    pub latent: Batch,
}

impl MixtureDraws {
    pub fn new<R: Rng + ?Sized>(n: usize, latent: &LatentSpec, rng: &mut R) -> Self {
        let uniforms = (0..n).map(|_| rng.random()).collect();
        Self {
            uniforms,
            latent: sample_latent(latent, n, rng),
        }
    }
}

/// Maps fixed draws through a mixture. Two candidates fed the same draws
/// differ only where their weights send a sample to different generators.
pub fn sample_mixture_from(cand: &MixtureCandidate, draws: &MixtureDraws) -> Result<(Batch, Vec<usize>)> {
    let n = draws.uniforms.len();
    if draws.latent.rows() != n {
        return Err(Error::Shape(format!("{n} uniforms but {} latent rows", draws.latent.rows())));
    }
    let weights = cand.weights.as_slice();
    let components: Vec<usize> = draws.uniforms.iter().map(|&u| pick_component(weights, u)).collect();
    let z = &draws.latent;
    let out_dim = cand
        .generators
        .first()
        .map(|g| g.spec.output_dim())
        .ok_or_else(|| Error::Config("mixture without generators".into()))?;
    let mut data = vec![0.0; n * out_dim];
    for (g, gen) in cand.generators.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| components[i] == g).collect();
        if rows.is_empty() {
            continue;
        }
        let zs = Batch::from_rows(&rows.iter().map(|&i| z.row(i)).collect::<Vec<_>>())?;
        let out = gen.forward(&zs)?;
        for (k, &i) in rows.iter().enumerate() {
            data[i * out_dim..(i + 1) * out_dim].copy_from_slice(out.row(k));
        }
    }
    Ok((Batch::new(n, out_dim, data)?, components))
}

/// Draws `n` samples together with the generator index each one came from.
pub fn sample_mixture_labeled<R: Rng + ?Sized>(
    cand: &MixtureCandidate,
    n: usize,
    latent: &LatentSpec,
    rng: &mut R,
) -> Result<(Batch, Vec<usize>)> {
    sample_mixture_from(cand, &MixtureDraws::new(n, latent, rng))
}

pub fn sample_mixture<R: Rng + ?Sized>(
    cand: &MixtureCandidate,
    n: usize,
    latent: &LatentSpec,
    rng: &mut R,
) -> Result<Batch> {
    Ok(sample_mixture_labeled(cand, n, latent, rng)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsConfig {
    pub mutation_scale: f64,
    pub eval_samples: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            mutation_scale: DEFAULT_MIXTURE_MUTATION_SCALE,
            eval_samples: DEFAULT_EVAL_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsOutcome {
    pub candidate: MixtureCandidate,
    pub accepted: bool,
    /// Scores of parent and offspring on the step's shared draws.
    pub parent_score: f64,
    pub offspring_score: f64,
}

/// One elitist (1+1)-ES step on the mixture weights.
///
/// The offspring perturbs every weight with `N(0, scale)` and is repaired
/// back onto the simplex. Parent and offspring are then scored on the same
/// fresh draws, and the offspring replaces the parent iff its score is no
/// worse. The kept candidate carries its score on those draws.
pub fn es_1plus1_step<M: MixtureMetric, R: Rng + ?Sized>(
    cand: &MixtureCandidate,
    metric: &M,
    cfg: &EsConfig,
    latent: &LatentSpec,
    rng: &mut R,
) -> Result<EsOutcome> {
    let weights = if cfg.mutation_scale > 0.0 {
        let raw = cand
            .weights
            .as_slice()
            .iter()
            .map(|w| w + cfg.mutation_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        MixtureWeights::repaired(raw)
    } else {
        cand.weights.clone()
    };
    let draws = MixtureDraws::new(cfg.eval_samples, latent, rng);
    let parent_score = metric.score(&sample_mixture_from(cand, &draws)?.0)?;
    let offspring = MixtureCandidate {
        generators: cand.generators.clone(),
        weights,
        score: f64::INFINITY,
    };
    let offspring_score = metric.score(&sample_mixture_from(&offspring, &draws)?.0)?;
    let accepted = offspring_score <= parent_score;
    let mut candidate = if accepted { offspring } else { cand.clone() };
    candidate.score = offspring_score.min(parent_score);
    Ok(EsOutcome {
        candidate,
        accepted,
        parent_score,
        offspring_score,
    })
}

/// Deterministic per-candidate stream used when comparing mixtures.
pub fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Scores every candidate with its stored weights on `n_eval` fresh samples
/// and returns `(index, scored candidate)` of the lowest score. Ties go to
/// the lowest index. Candidate `k` samples from [`candidate_rng`]`(seed, k)`.
pub fn select_best_mixture<M: MixtureMetric>(
    candidates: &[MixtureCandidate],
    metric: &M,
    n_eval: usize,
    latent: &LatentSpec,
    seed: u64,
) -> Result<(usize, MixtureCandidate)> {
    if candidates.is_empty() {
        return Err(Error::Config("no mixture candidates".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, cand) in candidates.iter().enumerate() {
        let samples = sample_mixture(cand, n_eval, latent, &mut candidate_rng(seed, k))?;
        let s = metric.score(&samples)?;
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((k, s));
        }
    }
    let (k, score) = best.expect("non-empty");
    let mut chosen = candidates[k].clone();
    chosen.score = score;
    Ok((k, chosen))
}
