//! Competitive coevolution of a generator and a discriminator population.
//!
//! One generation evaluates every generator against every discriminator,
//! sorts both populations by fitness, draws parents by tournament, produces
//! offspring by a burst of gradient descent under a randomly chosen loss,
//! and keeps each offspring only if it scores at least as well as its
//! parent against the same opponents on a shared batch.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::BatchSource;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Batch, MlpSpec, Network, ParamVector};
use crate::objectives::{discriminator_grad, gan_value_from_outputs, generator_grad, LossKind};

pub const MIN_LEARNING_RATE: f64 = 1e-6;
pub const MAX_LEARNING_RATE: f64 = 1.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.0002;
pub const DEFAULT_STEPS_PER_MUTATION: usize = 20;
pub const DEFAULT_HYPERPARAM_PROBABILITY: f64 = 0.5;
pub const DEFAULT_HYPERPARAM_SCALE: f64 = 0.0001;
pub const DEFAULT_TOURNAMENT_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub net: Network,
    pub learning_rate: f64,
    pub adam: AdamState,
    /// Accumulated fitness from the latest evaluation; higher is better.
    pub fitness: f64,
    pub role: Role,
}

impl Individual {
    pub fn new(net: Network, learning_rate: f64, role: Role) -> Self {
        let adam = AdamState::new(net.params.len());
        Self {
            net,
            learning_rate: learning_rate.clamp(MIN_LEARNING_RATE, MAX_LEARNING_RATE),
            adam,
            fitness: 0.0,
            role,
        }
    }

    pub fn random<R: Rng + ?Sized>(spec: MlpSpec, learning_rate: f64, role: Role, rng: &mut R) -> Self {
        Self::new(Network::random(spec, rng), learning_rate, role)
    }

    pub fn params(&self) -> &ParamVector {
        &self.net.params
    }
}

/// Generators and discriminators of equal population size.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationPair {
    pub generators: Vec<Individual>,
    pub discriminators: Vec<Individual>,
}

impl PopulationPair {
    pub fn new(generators: Vec<Individual>, discriminators: Vec<Individual>) -> Result<Self> {
        if generators.is_empty() || generators.len() != discriminators.len() {
            return Err(Error::Config(format!(
                "populations must be non-empty and equal in size, got {} and {}",
                generators.len(),
                discriminators.len()
            )));
        }
        if generators.iter().any(|g| g.role != Role::Generator)
            || discriminators.iter().any(|d| d.role != Role::Discriminator)
        {
            return Err(Error::Config("individual placed in the wrong population".into()));
        }
        Ok(Self {
            generators,
            discriminators,
        })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationConfig {
    pub loss_menu: Vec<LossKind>,
    pub selection_probabilities: Vec<f64>,
    /// Adam steps (one fresh minibatch each) per mutation event.
    pub steps_per_mutation: usize,
    pub hyperparam_mutation_probability: f64,
    pub hyperparam_mutation_scale: f64,
    pub tournament_size: usize,
}

impl MutationConfig {
    /// Equal selection probability over `menu`.
    pub fn uniform(menu: Vec<LossKind>) -> Self {
        let p = 1.0 / menu.len().max(1) as f64;
        let probs = vec![p; menu.len()];
        Self {
            loss_menu: menu,
            selection_probabilities: probs,
            ..Self::default()
        }
    }

    pub fn single(kind: LossKind) -> Self {
        Self::uniform(vec![kind])
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss_menu.is_empty() {
            return Err(Error::Config("loss menu must not be empty".into()));
        }
        if self.selection_probabilities.len() != self.loss_menu.len() {
            return Err(Error::Config(format!(
                "{} selection probabilities for {} losses",
                self.selection_probabilities.len(),
                self.loss_menu.len()
            )));
        }
        let sum: f64 = self.selection_probabilities.iter().sum();
        if self.selection_probabilities.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (sum - 1.0).abs() > 1e-12
        {
            return Err(Error::Config(format!(
                "selection probabilities must form a distribution, got {:?}",
                self.selection_probabilities
            )));
        }
        if self.steps_per_mutation == 0 {
            return Err(Error::Config("steps_per_mutation must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.hyperparam_mutation_probability) {
            return Err(Error::Config("hyperparameter mutation probability outside [0, 1]".into()));
        }
        if !(self.hyperparam_mutation_scale >= 0.0 && self.hyperparam_mutation_scale.is_finite()) {
            return Err(Error::Config("hyperparameter mutation scale must be >= 0".into()));
        }
        if self.tournament_size == 0 {
            return Err(Error::Config("tournament size must be positive".into()));
        }
        Ok(())
    }

    /// Draws one loss from the menu (always consumes exactly one uniform).
    pub fn sample_loss<R: Rng + ?Sized>(&self, rng: &mut R) -> LossKind {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (kind, p) in self.loss_menu.iter().zip(&self.selection_probabilities) {
            acc += p;
            if u < acc {
                return *kind;
            }
        }
        *self.loss_menu.last().expect("validated non-empty")
    }
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            loss_menu: LossKind::ALL.to_vec(),
            selection_probabilities: vec![1.0 / 3.0; 3],
            steps_per_mutation: DEFAULT_STEPS_PER_MUTATION,
            hyperparam_mutation_probability: DEFAULT_HYPERPARAM_PROBABILITY,
            hyperparam_mutation_scale: DEFAULT_HYPERPARAM_SCALE,
            tournament_size: DEFAULT_TOURNAMENT_SIZE,
        }
    }
}

/// Every `L(u_i, v_j)` on shared batches; `matrix[i][j]` pairs generator `i`
/// with discriminator `j`.
pub fn interaction_matrix(
    generators: &[Individual],
    discriminators: &[Individual],
    real: &Batch,
    latent: &Batch,
) -> Result<Vec<Vec<f64>>> {
    if real.is_empty() || latent.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d_real: Vec<Vec<f64>> = discriminators
        .iter()
        .map(|d| d.net.forward(real).map(Batch::into_vec))
        .collect::<Result<_>>()?;
    let fakes: Vec<Batch> = generators
        .iter()
        .map(|g| g.net.forward(latent))
        .collect::<Result<_>>()?;
    fakes
        .iter()
        .map(|fake| {
            discriminators
                .iter()
                .zip(&d_real)
                .map(|(d, dr)| {
                    let df = d.net.forward(fake)?.into_vec();
                    Ok(gan_value_from_outputs(dr, &df))
                })
                .collect()
        })
        .collect()
}

/// Sets `f_u = -sum_j L(u, v_j)` and `f_v = +sum_i L(u_i, v)` for every
/// individual and returns the interaction matrix.
pub fn evaluate_all(pop: &mut PopulationPair, real: &Batch, latent: &Batch) -> Result<Vec<Vec<f64>>> {
    let m = interaction_matrix(&pop.generators, &pop.discriminators, real, latent)?;
    for (i, g) in pop.generators.iter_mut().enumerate() {
        g.fitness = -m[i].iter().sum::<f64>();
    }
    for (j, d) in pop.discriminators.iter_mut().enumerate() {
        d.fitness = m.iter().map(|row| row[j]).sum();
    }
    Ok(m)
}

fn sort_desc(pop: &mut [Individual]) {
    // stable: equal fitness keeps original order
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
}

/// Orders both populations by descending fitness, stably.
pub fn sort_by_fitness(pop: &mut PopulationPair) {
    sort_desc(&mut pop.generators);
    sort_desc(&mut pop.discriminators);
}

/// Index of the fittest individual; ties go to the lowest index.
pub fn best_index(pop: &[Individual]) -> usize {
    let mut best = 0;
    for (i, ind) in pop.iter().enumerate().skip(1) {
        if ind.fitness > pop[best].fitness {
            best = i;
        }
    }
    best
}

/// Draws `k` distinct individuals (clamped to the population size) and
/// returns a copy of the fittest; ties go to the lowest index.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], k: usize, rng: &mut R) -> Individual {
    assert!(!pop.is_empty(), "tournament over an empty population");
    let k = k.clamp(1, pop.len());
    let mut drawn = index::sample(rng, pop.len(), k).into_vec();
    drawn.sort_unstable();
    let mut best = drawn[0];
    for &i in &drawn[1..] {
        if pop[i].fitness > pop[best].fitness {
            best = i;
        }
    }
    pop[best].clone()
}

/// With probability `hyperparam_mutation_probability` adds `N(0, scale)` to
/// the learning rate, clamped to `[1e-6, 1]`.
pub fn mutate_hyperparams<R: Rng + ?Sized>(ind: &Individual, cfg: &MutationConfig, rng: &mut R) -> Individual {
    let mut child = ind.clone();
    let u: f64 = rng.random();
    if u < cfg.hyperparam_mutation_probability {
        let noise: f64 = rng.sample(StandardNormal);
        child.learning_rate = (child.learning_rate + cfg.hyperparam_mutation_scale * noise)
            .clamp(MIN_LEARNING_RATE, MAX_LEARNING_RATE);
    }
    child
}

/// Result of one mutation event.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationOutcome {
    pub offspring: Individual,
    /// Loss used for a generator mutation; `None` for discriminators.
    pub loss: Option<LossKind>,
    /// The update went non-finite and the parent was returned instead.
    pub diverged: bool,
}

fn descend<R, F>(parent: &Individual, mut child: Individual, steps: usize, rng: &mut R, mut grad: F) -> Result<(Individual, bool)>
where
    R: Rng + ?Sized,
    F: FnMut(&Network, &mut R) -> Result<ParamVector>,
{
    for _ in 0..steps {
        let g = grad(&child.net, rng)?;
        match adam_step(&mut child.net.params, &g, &mut child.adam, child.learning_rate) {
            Ok(()) => {}
            Err(Error::Diverged) => return Ok((parent.clone(), true)),
            Err(e) => return Err(e),
        }
    }
    Ok((child, false))
}

/// Gradient-based generator mutation: picks one loss from the menu, possibly
/// perturbs the learning rate, then runs `steps_per_mutation` Adam steps
/// against the frozen `disc`. The parent is never modified.
pub fn mutate_generator<R: Rng + ?Sized>(
    gen: &Individual,
    disc: &Individual,
    cfg: &MutationConfig,
    source: &BatchSource,
    rng: &mut R,
) -> Result<MutationOutcome> {
    cfg.validate()?;
    let kind = cfg.sample_loss(rng);
    let child = mutate_hyperparams(gen, cfg, rng);
    let (offspring, diverged) = descend(gen, child, cfg.steps_per_mutation, rng, |net, rng| {
        let z = source.latent(rng);
        Ok(generator_grad(kind, net, &disc.net, &z)?.1)
    })?;
    Ok(MutationOutcome {
        offspring,
        loss: Some(kind),
        diverged,
    })
}

/// Discriminator mutation: same schedule, always trained on the BCE loss
/// against samples from the frozen `gen`.
pub fn mutate_discriminator<R: Rng + ?Sized>(
    disc: &Individual,
    gen: &Individual,
    cfg: &MutationConfig,
    source: &BatchSource,
    rng: &mut R,
) -> Result<MutationOutcome> {
    cfg.validate()?;
    let child = mutate_hyperparams(disc, cfg, rng);
    let (offspring, diverged) = descend(disc, child, cfg.steps_per_mutation, rng, |net, rng| {
        let real = source.real(rng);
        let fake = gen.net.forward(&source.latent(rng))?;
        Ok(discriminator_grad(net, &real, &fake)?.1)
    })?;
    Ok(MutationOutcome {
        offspring,
        loss: None,
        diverged,
    })
}

/// Fitness of `ind` against a set of opponents on shared batches.
pub fn fitness_against(ind: &Individual, opponents: &[Individual], real: &Batch, latent: &Batch) -> Result<f64> {
    let one = std::slice::from_ref(ind);
    match ind.role {
        Role::Generator => {
            let m = interaction_matrix(one, opponents, real, latent)?;
            Ok(-m[0].iter().sum::<f64>())
        }
        Role::Discriminator => {
            let m = interaction_matrix(opponents, one, real, latent)?;
            Ok(m.iter().map(|row| row[0]).sum())
        }
    }
}

/// Keeps whichever of `parent` and `offspring` is fitter against
/// `opponents` on the same batches; ties keep the offspring. The survivor's
/// fitness field is set to the score it was judged by.
pub fn replace_if_better(
    parent: &Individual,
    offspring: &Individual,
    opponents: &[Individual],
    real: &Batch,
    latent: &Batch,
) -> Result<Individual> {
    if parent.role != offspring.role {
        return Err(Error::Config("replacement across roles".into()));
    }
    let fp = fitness_against(parent, opponents, real, latent)?;
    let fo = fitness_against(offspring, opponents, real, latent)?;
    let mut survivor = if fo >= fp { offspring.clone() } else { parent.clone() };
    survivor.fitness = fo.max(fp);
    Ok(survivor)
}

/// Bookkeeping from one generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerationStats {
    /// Generator mutations per loss, indexed by [`LossKind::index`].
    pub loss_counts: [usize; 3],
    pub divergences: usize,
    /// Generator/discriminator pairs evaluated in the all-vs-all pass.
    pub interactions: usize,
    pub replacements: usize,
}

impl GenerationStats {
    pub fn absorb(&mut self, other: &GenerationStats) {
        for (a, b) in self.loss_counts.iter_mut().zip(other.loss_counts) {
            *a += b;
        }
        self.divergences += other.divergences;
        self.interactions += other.interactions;
        self.replacements += other.replacements;
    }
}

/// One full generation: evaluate, sort, select, then mutate and replace the
/// generators before the discriminators, which train against the survivors.
///
/// A generator offspring trains against a discriminator drawn uniformly from
/// the selected parents and is judged against all of them. A discriminator
/// offspring trains against a surviving generator and is judged against all
/// survivors. Each side's replacement decisions share one fresh batch pair.
pub fn coev_generation<R: Rng + ?Sized>(
    pop: &PopulationPair,
    cfg: &MutationConfig,
    source: &BatchSource,
    rng: &mut R,
) -> Result<(PopulationPair, GenerationStats)> {
    cfg.validate()?;
    let t = pop.len();
    let mut stats = GenerationStats::default();
    let mut current = pop.clone();

    let real = source.real(rng);
    let latent = source.latent(rng);
    evaluate_all(&mut current, &real, &latent)?;
    stats.interactions += t * t;

    sort_by_fitness(&mut current);

    let parents_g: Vec<Individual> = (0..t)
        .map(|_| tournament_select(&current.generators, cfg.tournament_size, rng))
        .collect();
    let parents_d: Vec<Individual> = (0..t)
        .map(|_| tournament_select(&current.discriminators, cfg.tournament_size, rng))
        .collect();

    let mut children_g = Vec::with_capacity(t);
    for parent in &parents_g {
        let opponent = &parents_d[rng.random_range(0..t)];
        let out = mutate_generator(parent, opponent, cfg, source, rng)?;
        if let Some(kind) = out.loss {
            stats.loss_counts[kind.index()] += 1;
        }
        stats.divergences += usize::from(out.diverged);
        children_g.push(out.offspring);
    }
    let real = source.real(rng);
    let latent = source.latent(rng);
    let mut next_g = Vec::with_capacity(t);
    for (parent, child) in parents_g.iter().zip(&children_g) {
        let s = replace_if_better(parent, child, &parents_d, &real, &latent)?;
        stats.replacements += usize::from(s.net != parent.net);
        next_g.push(s);
    }

    // discriminators answer the generators that just survived
    let mut children_d = Vec::with_capacity(t);
    for parent in &parents_d {
        let opponent = &next_g[rng.random_range(0..t)];
        let out = mutate_discriminator(parent, opponent, cfg, source, rng)?;
        stats.divergences += usize::from(out.diverged);
        children_d.push(out.offspring);
    }
    let real = source.real(rng);
    let latent = source.latent(rng);
    let mut next_d = Vec::with_capacity(t);
    for (parent, child) in parents_d.iter().zip(&children_d) {
        let s = replace_if_better(parent, child, &next_g, &real, &latent)?;
        stats.replacements += usize::from(s.net != parent.net);
        next_d.push(s);
    }
    Ok((PopulationPair::new(next_g, next_d)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_ring, LatentSpec};
    use crate::nn::Activation;
    use crate::objectives::gan_value;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gen_spec() -> MlpSpec {
        MlpSpec::new(vec![4, 8, 2], Activation::Identity).unwrap()
    }

    fn disc_spec() -> MlpSpec {
        MlpSpec::new(vec![2, 8, 1], Activation::Sigmoid).unwrap()
    }

    fn source() -> BatchSource {
        BatchSource::new(make_ring(8, 2.0, 0.05, 0).unwrap(), LatentSpec::new(4).unwrap(), 32).unwrap()
    }

    fn population(t: usize, seed: u64) -> PopulationPair {
        let mut r = rng(seed);
        let g = (0..t).map(|_| Individual::random(gen_spec(), 1e-3, Role::Generator, &mut r)).collect();
        let d = (0..t).map(|_| Individual::random(disc_spec(), 1e-3, Role::Discriminator, &mut r)).collect();
        PopulationPair::new(g, d).unwrap()
    }

    fn with_fitness(values: &[f64]) -> Vec<Individual> {
        let mut r = rng(1);
        values
            .iter()
            .map(|&f| {
                let mut ind = Individual::random(gen_spec(), 1e-3, Role::Generator, &mut r);
                ind.fitness = f;
                ind
            })
            .collect()
    }

    #[test]
    fn population_validation() {
        let p = population(2, 0);
        assert!(PopulationPair::new(p.generators.clone(), vec![]).is_err());
        assert!(PopulationPair::new(p.discriminators.clone(), p.generators.clone()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = MutationConfig::default();
        assert!(c.validate().is_ok());
        c.steps_per_mutation = 0;
        assert!(c.validate().is_err());
        let mut c = MutationConfig::default();
        c.selection_probabilities = vec![0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
        let mut c = MutationConfig::default();
        c.loss_menu.clear();
        c.selection_probabilities.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_interaction_fitness() {
        let mut p = population(1, 3);
        let s = source();
        let (real, z) = (s.real(&mut rng(1)), s.latent(&mut rng(2)));
        let c = gan_value(&p.generators[0].net, &p.discriminators[0].net, &real, &z).unwrap();
        evaluate_all(&mut p, &real, &z).unwrap();
        assert_eq!(p.generators[0].fitness, -c);
        assert_eq!(p.discriminators[0].fitness, c);
    }

    #[test]
    fn row_and_column_sums() {
        let mut p = population(2, 4);
        let s = source();
        let (real, z) = (s.real(&mut rng(1)), s.latent(&mut rng(2)));
        let l = |i: usize, j: usize| gan_value(&p.generators[i].net, &p.discriminators[j].net, &real, &z).unwrap();
        let (a, b, c) = (l(0, 0), l(0, 1), l(1, 0));
        evaluate_all(&mut p, &real, &z).unwrap();
        assert!((p.generators[0].fitness + (a + b)).abs() < 1e-12);
        assert!((p.discriminators[0].fitness - (a + c)).abs() < 1e-12);
    }

    #[test]
    fn evaluation_order_does_not_matter() {
        let mut p = population(4, 5);
        let s = source();
        let (real, z) = (s.real(&mut rng(1)), s.latent(&mut rng(2)));
        let mut q = p.clone();
        q.generators.reverse();
        q.discriminators.rotate_left(1);
        evaluate_all(&mut p, &real, &z).unwrap();
        evaluate_all(&mut q, &real, &z).unwrap();
        for g in &p.generators {
            let twin = q.generators.iter().find(|h| h.net == g.net).unwrap();
            assert!((twin.fitness - g.fitness).abs() < 1e-12);
        }
        for d in &p.discriminators {
            let twin = q.discriminators.iter().find(|h| h.net == d.net).unwrap();
            assert!((twin.fitness - d.fitness).abs() < 1e-12);
        }
    }

    #[test]
    fn sorting() {
        let mut pop = with_fitness(&[1.0, 3.0, 2.0]);
        sort_desc(&mut pop);
        assert_eq!(pop.iter().map(|i| i.fitness).collect::<Vec<_>>(), vec![3.0, 2.0, 1.0]);
        let orig = with_fitness(&[0.0; 4]);
        let mut same = orig.clone();
        sort_desc(&mut same);
        assert_eq!(same, orig);
    }

    #[test]
    fn sorting_matches_naive_sort() {
        let mut r = rng(12);
        let vals: Vec<f64> = (0..20).map(|_| r.random_range(-5.0..5.0)).collect();
        let mut pop = with_fitness(&vals);
        sort_desc(&mut pop);
        // selection sort oracle
        let mut naive = vals.clone();
        for i in 0..naive.len() {
            let mut m = i;
            for j in i + 1..naive.len() {
                if naive[j] > naive[m] {
                    m = j;
                }
            }
            naive.swap(i, m);
        }
        assert_eq!(pop.iter().map(|i| i.fitness).collect::<Vec<_>>(), naive);
    }

    #[test]
    fn tournament_cases() {
        let one = with_fitness(&[7.0]);
        assert_eq!(tournament_select(&one, 2, &mut rng(0)), one[0]);
        let pop = with_fitness(&[1.0, 9.0, 4.0, 2.0]);
        let mut r = rng(2);
        for _ in 0..50 {
            assert_eq!(tournament_select(&pop, 4, &mut r).fitness, 9.0);
            assert_eq!(tournament_select(&pop, 10, &mut r).fitness, 9.0);
        }
        let pair = with_fitness(&[0.5, -0.5]);
        let wins = (0..1000).filter(|_| tournament_select(&pair, 2, &mut r).fitness == 0.5).count();
        assert_eq!(wins, 1000);
    }

    #[test]
    fn hyperparam_mutation() {
        let ind = &with_fitness(&[0.0])[0];
        let mut c = MutationConfig::default();
        c.hyperparam_mutation_probability = 0.0;
        assert_eq!(mutate_hyperparams(ind, &c, &mut rng(0)).learning_rate, ind.learning_rate);
        c.hyperparam_mutation_probability = 1.0;
        c.hyperparam_mutation_scale = 0.0;
        assert_eq!(mutate_hyperparams(ind, &c, &mut rng(0)).learning_rate, ind.learning_rate);
    }

    #[test]
    fn hyperparam_spread_matches_scale() {
        // sample sd of 1e4 normals with sigma 1e-4 lies within +-20% with overwhelming probability
        let mut ind = with_fitness(&[0.0])[0].clone();
        ind.learning_rate = 0.0002;
        let mut c = MutationConfig::default();
        c.hyperparam_mutation_probability = 1.0;
        let mut r = rng(42);
        let lrs: Vec<f64> = (0..10_000).map(|_| mutate_hyperparams(&ind, &c, &mut r).learning_rate).collect();
        let mean = lrs.iter().sum::<f64>() / lrs.len() as f64;
        let sd = (lrs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (lrs.len() - 1) as f64).sqrt();
        assert!((0.00008..=0.00012).contains(&sd), "{sd}");
        assert!(lrs.iter().all(|&x| (MIN_LEARNING_RATE..=MAX_LEARNING_RATE).contains(&x)));
    }

    #[test]
    fn mutation_leaves_parent_and_is_deterministic() {
        let p = population(1, 9);
        let s = source();
        let c = MutationConfig { steps_per_mutation: 5, ..Default::default() };
        let g0 = p.generators[0].clone();
        let a = mutate_generator(&p.generators[0], &p.discriminators[0], &c, &s, &mut rng(3)).unwrap();
        let b = mutate_generator(&p.generators[0], &p.discriminators[0], &c, &s, &mut rng(3)).unwrap();
        assert_eq!(p.generators[0], g0);
        assert_eq!(a, b);
        assert_ne!(a.offspring.net, g0.net);
        assert_eq!(a.offspring.adam.step_count, 5);

        let d0 = p.discriminators[0].clone();
        let a = mutate_discriminator(&p.discriminators[0], &p.generators[0], &c, &s, &mut rng(4)).unwrap();
        let b = mutate_discriminator(&p.discriminators[0], &p.generators[0], &c, &s, &mut rng(4)).unwrap();
        assert_eq!(p.discriminators[0], d0);
        assert_eq!(a, b);
        assert!(a.loss.is_none());
    }

    #[test]
    fn degenerate_menu_always_picks_its_loss() {
        let c = MutationConfig::single(LossKind::Minmax);
        let mut r = rng(0);
        assert!((0..500).all(|_| c.sample_loss(&mut r) == LossKind::Minmax));
    }

    #[test]
    fn discriminator_learns_against_constant_generator() {
        let s = source();
        let gen = Individual::new(Network::zeros(gen_spec()), 1e-3, Role::Generator);
        let disc = Individual::random(disc_spec(), 0.01, Role::Discriminator, &mut rng(8));
        let c = MutationConfig {
            steps_per_mutation: 10,
            hyperparam_mutation_probability: 0.0,
            ..Default::default()
        };
        let mut r = rng(1);
        let (real, z) = (s.real(&mut rng(100)), s.latent(&mut rng(101)));
        let fake = gen.net.forward(&z).unwrap();
        let loss = |d: &Individual| discriminator_grad(&d.net, &real, &fake).unwrap().0;
        let mut current = disc;
        let first = loss(&current);
        let mut best = first;
        for _ in 0..5 {
            current = mutate_discriminator(&current, &gen, &c, &s, &mut r).unwrap().offspring;
            best = best.min(loss(&current));
        }
        assert!(best < 0.9 * first, "{first} -> {best}");
    }

    #[test]
    fn divergence_returns_parent() {
        let s = source();
        let mut gen = Individual::random(gen_spec(), 1e-3, Role::Generator, &mut rng(1));
        gen.net.params.values[0] = f64::NAN;
        let disc = Individual::random(disc_spec(), 1e-3, Role::Discriminator, &mut rng(2));
        let c = MutationConfig { steps_per_mutation: 2, ..Default::default() };
        let out = mutate_generator(&gen, &disc, &c, &s, &mut rng(3)).unwrap();
        assert!(out.diverged);
        assert_eq!(out.offspring.net.params.values.len(), gen.net.params.values.len());
        assert!(out.offspring.net.params.values[0].is_nan());
    }

    #[test]
    fn replacement_rules() {
        let p = population(3, 21);
        let s = source();
        let (real, z) = (s.real(&mut rng(1)), s.latent(&mut rng(2)));
        let g = &p.generators[0];
        // tie keeps offspring: distinguish via learning rate
        let mut twin = g.clone();
        twin.learning_rate = 0.5;
        assert_eq!(replace_if_better(g, &twin, &p.discriminators, &real, &z).unwrap().learning_rate, 0.5);

        let (a, b) = (&p.generators[1], &p.generators[2]);
        let survivor = replace_if_better(a, b, &p.discriminators, &real, &z).unwrap();
        // independent path: per-pair gan_value
        let score = |u: &Individual| -> f64 {
            -p.discriminators.iter().map(|v| gan_value(&u.net, &v.net, &real, &z).unwrap()).sum::<f64>()
        };
        let expected = if score(b) >= score(a) { b } else { a };
        assert_eq!(survivor.net, expected.net);
        assert!((survivor.fitness - score(a).max(score(b))).abs() < 1e-12);

        let d = &p.discriminators[0];
        assert!(replace_if_better(d, g, &p.generators, &real, &z).is_err());
    }

    #[test]
    fn generation_preserves_sizes_and_is_reproducible() {
        let p = population(3, 31);
        let s = source();
        let c = MutationConfig { steps_per_mutation: 3, ..Default::default() };
        let (a, stats) = coev_generation(&p, &c, &s, &mut rng(5)).unwrap();
        let (b, _) = coev_generation(&p, &c, &s, &mut rng(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(stats.interactions, 9);
        assert_eq!(stats.loss_counts.iter().sum::<usize>(), 3);
    }

    #[test]
    fn frozen_generators_survive_generation() {
        // zero-weight discriminators are constant, so generator gradients vanish and
        // every generator offspring is bit-identical to its parent
        let mut p = population(1, 40);
        p.discriminators[0] = Individual::new(Network::zeros(disc_spec()), 1e-3, Role::Discriminator);
        let c = MutationConfig {
            steps_per_mutation: 4,
            hyperparam_mutation_probability: 0.0,
            ..Default::default()
        };
        let (next, _) = coev_generation(&p, &c, &source(), &mut rng(2)).unwrap();
        assert_eq!(next.generators[0].net, p.generators[0].net);
        assert_eq!(next.generators[0].learning_rate, p.generators[0].learning_rate);
    }
}
