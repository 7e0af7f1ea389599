//! Running one experiment end to end.

use std::fs;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::coevolution::{mutate_discriminator, mutate_generator, GenerationStats, Individual, MutationConfig};
use crate::data::{BatchSource, LatentSpec, SyntheticDataset};
use crate::error::{Error, Result};
use crate::grid::{cell_rng, param_digest, run_grid, CellContext, EpochView, Grid, RunGridOptions};
use crate::harness::config::{MethodVariant, RunConfig};
use crate::harness::log::{format_float, KeyValueFile, RunCsvWriter, RunRecord};
use crate::metrics::{assign_modes, default_min_fraction, mode_coverage, tvd};
use crate::mixture::{candidate_rng, sample_mixture, select_best_mixture, FrechetScore, MixtureCandidate};
use crate::nn::{adam_step, Batch};
use crate::objectives::{discriminator_grad, generator_grad, LossKind};

/// Samples drawn from the target to fit the Fréchet reference.
pub const REFERENCE_SAMPLES: usize = 10_000;

pub const EGAN_FITNESS_NOTE: &str =
    "e-gan fitness is the surrogate mean D(G(z)) over a shared latent batch (quality term only, no diversity term)";

/// Metrics of the best mixture in a grid state.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub best_cell: usize,
    pub best_fd: f64,
    pub tvd: f64,
    pub coverage: usize,
    pub best: MixtureCandidate,
}

/// Fixed scoring context shared by every epoch of a run.
pub struct Evaluator {
    pub dataset: SyntheticDataset,
    pub latent: LatentSpec,
    pub metric: FrechetScore,
    pub samples: usize,
    pub seed: u64,
}

impl Evaluator {
    pub fn new(dataset: SyntheticDataset, latent: LatentSpec, samples: usize, seed: u64) -> Result<Self> {
        let metric = FrechetScore::from_reference(&dataset.reference_sample(REFERENCE_SAMPLES))?;
        Ok(Self {
            dataset,
            latent,
            metric,
            samples,
            seed,
        })
    }

    /// Seed for scoring epoch `epoch`; distinct from every training stream.
    pub fn epoch_seed(&self, epoch: u64) -> u64 {
        self.seed ^ 0x6d65_7472_6963_7321 ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }

    /// Picks the best neighborhood mixture by Fréchet distance, then measures
    /// TVD and mode coverage on the same samples it was scored with.
    pub fn evaluate(&self, grid: &Grid, epoch: u64) -> Result<MetricReport> {
        let candidates = grid.mixtures()?;
        let seed = self.epoch_seed(epoch);
        let (best_cell, best) = select_best_mixture(&candidates, &self.metric, self.samples, &self.latent, seed)?;
        let samples = sample_mixture(&best, self.samples, &self.latent, &mut candidate_rng(seed, best_cell))?;
        let hist = assign_modes(&samples, &self.dataset.mode_centers, self.dataset.mode_std);
        let mut target = self.dataset.mode_weights();
        target.push(0.0);
        let tvd = tvd(&hist.proportions_with_unassigned(), &target)?;
        let coverage = mode_coverage(&hist, default_min_fraction(self.dataset.num_modes()));
        Ok(MetricReport {
            best_cell,
            best_fd: best.score,
            tvd,
            coverage,
            best,
        })
    }
}

/// Result of one E-GAN generation.
#[derive(Debug, Clone, PartialEq)]
pub struct EganOutcome {
    pub generator: Individual,
    pub discriminator: Individual,
    /// Loss of the kept clone; `None` when every clone diverged.
    pub chosen: Option<LossKind>,
    /// Surrogate fitness per clone in [`LossKind::ALL`] order (`-inf` if diverged).
    pub fitness: [f64; 3],
    pub stats: GenerationStats,
}

/// Mean discriminator output on generated samples.
pub fn egan_fitness(gen: &Individual, disc: &Individual, latent: &Batch) -> Result<f64> {
    let out = disc.net.forward(&gen.net.forward(latent)?)?;
    Ok(out.as_slice().iter().sum::<f64>() / out.rows() as f64)
}

/// Index of the largest finite fitness, lowest index on ties.
pub fn egan_select(fitness: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &f) in fitness.iter().enumerate() {
        if f.is_finite() && best.is_none_or(|b| f > fitness[b]) {
            best = Some(i);
        }
    }
    best
}

/// Trains one clone per loss for one mutation event, keeps the clone the
/// current discriminator rates highest on a shared latent batch, then trains
/// the discriminator one mutation event against it.
pub fn egan_generation<R: Rng + ?Sized>(
    gen: &Individual,
    disc: &Individual,
    cfg: &MutationConfig,
    source: &BatchSource,
    rng: &mut R,
) -> Result<EganOutcome> {
    let mut stats = GenerationStats::default();
    let mut clones = Vec::with_capacity(3);
    for kind in LossKind::ALL {
        let single = MutationConfig {
            loss_menu: vec![kind],
            selection_probabilities: vec![1.0],
            ..cfg.clone()
        };
        let out = mutate_generator(gen, disc, &single, source, rng)?;
        stats.loss_counts[kind.index()] += 1;
        stats.divergences += usize::from(out.diverged);
        clones.push(out);
    }
    let z = source.latent(rng);
    let mut fitness = [f64::NEG_INFINITY; 3];
    for (f, c) in fitness.iter_mut().zip(&clones) {
        if !c.diverged {
            *f = egan_fitness(&c.offspring, disc, &z)?;
        }
    }
    let (generator, chosen) = match egan_select(&fitness) {
        Some(i) => (clones.swap_remove(i).offspring, Some(LossKind::ALL[i])),
        None => (gen.clone(), None),
    };
    let d = mutate_discriminator(disc, &generator, cfg, source, rng)?;
    stats.divergences += usize::from(d.diverged);
    stats.interactions += 3;
    Ok(EganOutcome {
        generator,
        discriminator: d.offspring,
        chosen,
        fitness,
        stats,
    })
}

/// `steps` alternating discriminator and minmax generator Adam steps.
/// Non-finite updates are skipped and counted.
pub fn ganbce_epoch<R: Rng + ?Sized>(
    gen: &mut Individual,
    disc: &mut Individual,
    steps: usize,
    source: &BatchSource,
    rng: &mut R,
) -> Result<GenerationStats> {
    let mut stats = GenerationStats::default();
    for _ in 0..steps {
        let real = source.real(rng);
        let fake = gen.net.forward(&source.latent(rng))?;
        let (_, g) = discriminator_grad(&disc.net, &real, &fake)?;
        let mut params = disc.net.params.clone();
        let mut adam = disc.adam.clone();
        match adam_step(&mut params, &g, &mut adam, disc.learning_rate) {
            Ok(()) => (disc.net.params, disc.adam) = (params, adam),
            Err(Error::Diverged) => stats.divergences += 1,
            Err(e) => return Err(e),
        }

        let z = source.latent(rng);
        let (_, g) = generator_grad(LossKind::Minmax, &gen.net, &disc.net, &z)?;
        let mut params = gen.net.params.clone();
        let mut adam = gen.adam.clone();
        match adam_step(&mut params, &g, &mut adam, gen.learning_rate) {
            Ok(()) => (gen.net.params, gen.adam) = (params, adam),
            Err(Error::Diverged) => stats.divergences += 1,
            Err(e) => return Err(e),
        }
        stats.loss_counts[LossKind::Minmax.index()] += 1;
        stats.interactions += 1;
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Failed(String),
}

/// Final state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub variant: MethodVariant,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs_completed: u64,
    pub best_cell: usize,
    pub best_fd: f64,
    pub tvd: f64,
    pub coverage: usize,
    pub best_weights: Vec<f64>,
    /// Hex SHA-256 over the parameters of the best mixture's generators.
    pub generator_digest: String,
    pub failed_cells: Vec<usize>,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn to_key_values(&self, cfg: &RunConfig) -> KeyValueFile {
        let mut kv = KeyValueFile::default();
        kv.comments.push("mustangs run summary".into());
        if self.variant == MethodVariant::Egan {
            kv.comments.push(EGAN_FITNESS_NOTE.into());
        }
        kv.push("variant", self.variant);
        kv.push("seed", self.seed);
        if let Ok(g) = cfg.grid_config() {
            kv.push("grid", format!("{}x{}", g.rows(), g.cols()));
        }
        kv.push("mode", cfg.mode.name());
        kv.push(
            "status",
            match &self.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::Failed(r) => format!("failed: {r}"),
            },
        );
        kv.push("epochs_completed", self.epochs_completed);
        kv.push("best_cell", self.best_cell);
        kv.push("best_fd", format_float(self.best_fd));
        kv.push("tvd", format_float(self.tvd));
        kv.push("coverage", self.coverage);
        kv.push("best_weights", self.best_weights.iter().map(|&w| format_float(w)).collect::<Vec<_>>().join(";"));
        kv.push("generator_digest", &self.generator_digest);
        kv.push("failed_cells", self.failed_cells.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"));
        kv.push("wall_seconds", format!("{:.3}", self.wall_seconds));
        kv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
}

fn record_for(grid: &Grid, report: &MetricReport, epoch: u64, stats: &GenerationStats, single: bool) -> RunRecord {
    RunRecord {
        epoch,
        best_cell: report.best_cell,
        best_fd: report.best_fd,
        tvd: report.tvd,
        coverage: report.coverage,
        loss_counts: stats.loss_counts,
        divergences: stats.divergences,
        interactions: stats.interactions,
        failed_cells: grid.cells.iter().filter(|c| c.failed.is_some()).count(),
        cell_scores: if single {
            vec![report.best_fd]
        } else {
            grid.cells.iter().map(|c| c.mixture_score).collect()
        },
        generator_lrs: grid.cells.iter().map(|c| c.generator.learning_rate).collect(),
        discriminator_lrs: grid.cells.iter().map(|c| c.discriminator.learning_rate).collect(),
    }
}

struct Sink {
    csv: Option<RunCsvWriter<fs::File>>,
    timing: Option<fs::File>,
    records: Vec<RunRecord>,
    last: Option<MetricReport>,
    start: Instant,
}

impl Sink {
    fn push(&mut self, record: RunRecord, report: MetricReport) -> Result<()> {
        if let Some(w) = &mut self.csv {
            w.append(&record)?;
        }
        if let Some(t) = &mut self.timing {
            writeln!(t, "{},{:.3}", record.epoch, self.start.elapsed().as_secs_f64())?;
            t.flush()?;
        }
        self.records.push(record);
        self.last = Some(report);
        Ok(())
    }
}

/// Runs the configured variant, calling `observe` with the state after each
/// epoch. Grid variants end on the best mixture of the last epoch.
pub fn run_experiment_observed<F>(cfg: &RunConfig, mut observe: F) -> Result<RunLog>
where
    F: FnMut(&EpochView<'_>) + Send,
{
    cfg.validate()?;
    let source = cfg.batch_source()?;
    let mutation = cfg.mutation_config()?;
    let es = cfg.es_config()?;
    let evaluator = Evaluator::new(source.dataset.clone(), source.latent, cfg.metric_samples, cfg.seed)?;
    let grid = Grid::new(
        cfg.grid_config()?,
        &cfg.generator_spec()?,
        &cfg.discriminator_spec()?,
        cfg.learning_rate,
        cfg.seed,
    )?;

    let mut sink = Sink {
        csv: None,
        timing: None,
        records: Vec::new(),
        last: None,
        start: Instant::now(),
    };
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        cfg.to_key_values().write(&dir.join("config.txt"))?;
        sink.csv = Some(RunCsvWriter::create(&dir.join("run.csv"))?);
        let mut t = fs::File::create(dir.join("timing.csv"))?;
        writeln!(t, "epoch,wall_seconds")?;
        sink.timing = Some(t);
    }

    let single = !cfg.variant.is_grid();
    let mut on_epoch = |view: &EpochView<'_>| -> Result<()> {
        observe(view);
        let report = evaluator.evaluate(view.grid, view.epoch)?;
        let record = record_for(view.grid, &report, view.epoch, &view.stats, single);
        sink.push(record, report)
    };

    let outcome: Result<(Grid, Vec<usize>)> = if cfg.variant.is_grid() {
        let ctx = CellContext {
            mutation: &mutation,
            source: &source,
            es: &es,
            metric: &evaluator.metric,
        };
        let opts = RunGridOptions::new(cfg.epochs, cfg.mode, cfg.seed);
        run_grid(grid, &ctx, &opts, &mut on_epoch).map(|o| (o.grid, o.failures.into_iter().map(|f| f.0).collect()))
    } else {
        run_single(grid, cfg, &mutation, &source, &mut on_epoch).map(|g| (g, Vec::new()))
    };

    let wall_seconds = sink.start.elapsed().as_secs_f64();
    let epochs_completed = sink.records.last().map_or(0, |r| r.epoch);
    let (status, failed_cells) = match outcome {
        Ok((_, failed)) => (RunStatus::Completed, failed),
        Err(e) => (RunStatus::Failed(e.to_string()), Vec::new()),
    };
    let summary = match &sink.last {
        Some(rep) => RunSummary {
            variant: cfg.variant,
            seed: cfg.seed,
            status,
            epochs_completed,
            best_cell: rep.best_cell,
            best_fd: rep.best_fd,
            tvd: rep.tvd,
            coverage: rep.coverage,
            best_weights: rep.best.weights.as_slice().to_vec(),
            generator_digest: param_digest(&rep.best.generators),
            failed_cells,
            wall_seconds,
        },
        None => RunSummary {
            variant: cfg.variant,
            seed: cfg.seed,
            status,
            epochs_completed: 0,
            best_cell: 0,
            best_fd: f64::NAN,
            tvd: f64::NAN,
            coverage: 0,
            best_weights: Vec::new(),
            generator_digest: String::new(),
            failed_cells,
            wall_seconds,
        },
    };
    if let Some(dir) = &cfg.out {
        summary.to_key_values(cfg).write(&dir.join("summary.txt"))?;
        let weights: String = summary.best_weights.iter().map(|&w| format_float(w) + "\n").collect();
        fs::write(dir.join("weights.txt"), weights)?;
    }
    Ok(RunLog {
        records: sink.records,
        summary,
    })
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunLog> {
    run_experiment_observed(cfg, |_| {})
}

fn run_single<F>(mut grid: Grid, cfg: &RunConfig, mutation: &MutationConfig, source: &BatchSource, on_epoch: &mut F) -> Result<Grid>
where
    F: FnMut(&EpochView<'_>) -> Result<()>,
{
    let mut rng: ChaCha8Rng = cell_rng(cfg.seed, 0);
    for epoch in 1..=cfg.epochs {
        let cell = &mut grid.cells[0];
        let stats = match cfg.variant {
            MethodVariant::Egan => {
                let out = egan_generation(&cell.generator, &cell.discriminator, mutation, source, &mut rng)?;
                cell.generator = out.generator;
                cell.discriminator = out.discriminator;
                out.stats
            }
            MethodVariant::GanBce => ganbce_epoch(
                &mut cell.generator,
                &mut cell.discriminator,
                mutation.steps_per_mutation,
                source,
                &mut rng,
            )?,
            v => return Err(Error::Config(format!("{v} is a grid variant"))),
        };
        cell.epoch_counter += 1;
        on_epoch(&EpochView {
            epoch,
            grid: &grid,
            stats,
        })?;
    }
    Ok(grid)
}
