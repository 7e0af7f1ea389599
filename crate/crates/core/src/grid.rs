//! Toroidal grid of cells, each running one coevolution instance over its
//! five-cell neighborhood.
//!
//! Cells only ever write their own center. Neighbors are read as copies, so
//! the asynchronous runner needs no locking beyond one `RwLock` per cell.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Mutex, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::coevolution::{best_index, coev_generation, GenerationStats, Individual, MutationConfig, PopulationPair, Role};
use crate::data::BatchSource;
use crate::error::{Error, Result};
use crate::mixture::{es_1plus1_step, EsConfig, MixtureCandidate, MixtureMetric, MixtureWeights};
use crate::nn::{MlpSpec, Network};

pub type Coord = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    rows: usize,
    cols: usize,
}

impl GridConfig {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("grid must be at least 1x1, got {rows}x{cols}")));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major index of `coord`.
    pub fn index(&self, coord: Coord) -> Result<usize> {
        self.check(coord)?;
        Ok(coord.0 * self.cols + coord.1)
    }

    pub fn coord(&self, index: usize) -> Coord {
        (index / self.cols, index % self.cols)
    }

    fn check(&self, (row, col): Coord) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::OutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

/// Center, then north, south, west, east with wraparound. Repeats are
/// dropped, keeping the first occurrence, so small grids stay well defined.
pub fn neighborhood_coords(cfg: &GridConfig, k: Coord) -> Result<Vec<Coord>> {
    cfg.check(k)?;
    let (r, c) = k;
    let (rows, cols) = (cfg.rows, cfg.cols);
    let all = [
        (r, c),
        ((r + rows - 1) % rows, c),
        ((r + 1) % rows, c),
        (r, (c + cols - 1) % cols),
        (r, (c + 1) % cols),
    ];
    let mut out: Vec<Coord> = Vec::with_capacity(5);
    for x in all {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub coord: Coord,
    pub generator: Individual,
    pub discriminator: Individual,
    pub weights: MixtureWeights,
    /// Score of the kept mixture weights in the latest ES step (lower is better).
    pub mixture_score: f64,
    /// Score of the incoming weights on that same step's draws.
    pub es_parent_score: f64,
    pub epoch_counter: u64,
    /// Set once the cell stops updating after a worker failure.
    pub failed: Option<String>,
}

impl Cell {
    /// Hex SHA-256 of the center generator and discriminator parameters.
    pub fn digest(&self) -> String {
        param_digest([&self.generator.net, &self.discriminator.net])
    }
}

/// Hex SHA-256 over the little-endian bytes of every parameter.
pub fn param_digest<'a, I: IntoIterator<Item = &'a Network>>(nets: I) -> String {
    let mut h = Sha256::new();
    for net in nets {
        for v in &net.params.values {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Copies of a neighborhood's center individuals, ordered as
/// [`neighborhood_coords`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodPopulations {
    pub coords: Vec<Coord>,
    pub populations: PopulationPair,
    /// Epoch counters of the gathered cells at read time.
    pub epochs: Vec<u64>,
}

/// Everything a cell update reads besides the grid itself.
pub struct CellContext<'a, M: MixtureMetric> {
    pub mutation: &'a MutationConfig,
    pub source: &'a BatchSource,
    pub es: &'a EsConfig,
    pub metric: &'a M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub config: GridConfig,
    pub cells: Vec<Cell>,
}

impl Grid {
    /// Random centers drawn row-major (generator then discriminator) from
    /// stream 0 of `seed`; uniform mixture weights.
    pub fn new(config: GridConfig, gen_spec: &MlpSpec, disc_spec: &MlpSpec, learning_rate: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells = Vec::with_capacity(config.num_cells());
        for idx in 0..config.num_cells() {
            let coord = config.coord(idx);
            let generator = Individual::random(gen_spec.clone(), learning_rate, Role::Generator, &mut rng);
            let discriminator = Individual::random(disc_spec.clone(), learning_rate, Role::Discriminator, &mut rng);
            let n = neighborhood_coords(&config, coord)?.len();
            cells.push(Cell {
                coord,
                generator,
                discriminator,
                weights: MixtureWeights::uniform(n),
                mixture_score: f64::INFINITY,
                es_parent_score: f64::INFINITY,
                epoch_counter: 0,
                failed: None,
            });
        }
        Ok(Self { config, cells })
    }

    pub fn cell(&self, k: Coord) -> Result<&Cell> {
        Ok(&self.cells[self.config.index(k)?])
    }

    /// Current mixture of cell `k`: its neighborhood generators with its stored weights.
    pub fn mixture(&self, k: Coord) -> Result<MixtureCandidate> {
        let coords = neighborhood_coords(&self.config, k)?;
        let cell = self.cell(k)?;
        let gens = coords
            .iter()
            .map(|&c| Ok(self.cell(c)?.generator.net.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut cand = MixtureCandidate::new(gens, cell.weights.clone())?;
        cand.score = cell.mixture_score;
        Ok(cand)
    }

    pub fn mixtures(&self) -> Result<Vec<MixtureCandidate>> {
        (0..self.cells.len()).map(|i| self.mixture(self.config.coord(i))).collect()
    }
}

fn gather_from(coords: Vec<Coord>, cells: &[Cell]) -> Result<NeighborhoodPopulations> {
    let gens = cells.iter().map(|c| c.generator.clone()).collect();
    let discs = cells.iter().map(|c| c.discriminator.clone()).collect();
    Ok(NeighborhoodPopulations {
        coords,
        populations: PopulationPair::new(gens, discs)?,
        epochs: cells.iter().map(|c| c.epoch_counter).collect(),
    })
}

/// Deep copies of the neighborhood of `k`.
pub fn gather_neighborhood(grid: &Grid, k: Coord) -> Result<NeighborhoodPopulations> {
    let coords = neighborhood_coords(&grid.config, k)?;
    let cells = coords.iter().map(|&c| grid.cell(c).cloned()).collect::<Result<Vec<_>>>()?;
    gather_from(coords, &cells)
}

/// New state of the center of `hood` (whose first cell is the center): one
/// coevolution generation, best survivors written to the center, one ES step
/// on the mixture weights, and the epoch counter advanced.
pub fn update_center<M: MixtureMetric>(
    hood: &[Cell],
    ctx: &CellContext<'_, M>,
    rng: &mut ChaCha8Rng,
) -> Result<(Cell, GenerationStats)> {
    let center = hood.first().ok_or_else(|| Error::Config("empty neighborhood".into()))?;
    if center.weights.len() != hood.len() {
        return Err(Error::Shape(format!(
            "{} mixture weights for a neighborhood of {}",
            center.weights.len(),
            hood.len()
        )));
    }
    let gathered = gather_from(hood.iter().map(|c| c.coord).collect(), hood)?;
    let (next, stats) = coev_generation(&gathered.populations, ctx.mutation, ctx.source, rng)?;
    let generator = next.generators[best_index(&next.generators)].clone();
    let discriminator = next.discriminators[best_index(&next.discriminators)].clone();

    let mut gens: Vec<Network> = hood.iter().map(|c| c.generator.net.clone()).collect();
    gens[0] = generator.net.clone();
    let cand = MixtureCandidate::new(gens, center.weights.clone())?;
    let es = es_1plus1_step(&cand, ctx.metric, ctx.es, &ctx.source.latent, rng)?;

    Ok((
        Cell {
            coord: center.coord,
            generator,
            discriminator,
            weights: es.candidate.weights,
            mixture_score: es.candidate.score,
            es_parent_score: es.parent_score,
            epoch_counter: center.epoch_counter + 1,
            failed: None,
        },
        stats,
    ))
}

/// Updates cell `k` in place from the grid's current state.
pub fn cell_update<M: MixtureMetric>(
    grid: &mut Grid,
    k: Coord,
    ctx: &CellContext<'_, M>,
    rng: &mut ChaCha8Rng,
) -> Result<GenerationStats> {
    let idx = grid.config.index(k)?;
    let coords = neighborhood_coords(&grid.config, k)?;
    let hood: Vec<Cell> = coords.iter().map(|&c| grid.cell(c).cloned()).collect::<Result<_>>()?;
    let (cell, stats) = update_center(&hood, ctx, rng)?;
    grid.cells[idx] = cell;
    Ok(stats)
}

/// Per-cell random stream: stream `1 + index` of the run seed.
pub fn cell_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Sequential,
    Asynchronous,
}

impl std::str::FromStr for ExecutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(Self::Sequential),
            "async" | "asynchronous" => Ok(Self::Asynchronous),
            other => Err(Error::Parse(format!("unknown execution mode `{other}`"))),
        }
    }
}

impl ExecutionMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sequential => "sequential",
            Self::Asynchronous => "async",
        }
    }
}

/// Makes one cell fail at a given epoch; used to exercise failure handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultInjection {
    pub cell: usize,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunGridOptions {
    pub epochs: u64,
    pub mode: ExecutionMode,
    pub seed: u64,
    /// Restricts updates to these row-major indices; `None` updates every cell.
    pub active_cells: Option<Vec<usize>>,
    pub fault: Option<FaultInjection>,
}

impl RunGridOptions {
    pub fn new(epochs: u64, mode: ExecutionMode, seed: u64) -> Self {
        Self {
            epochs,
            mode,
            seed,
            active_cells: None,
            fault: None,
        }
    }
}

/// Grid state once every active cell has finished `epoch`.
pub struct EpochView<'a> {
    pub epoch: u64,
    pub grid: &'a Grid,
    /// Summed over the cell updates belonging to this epoch.
    pub stats: GenerationStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub grid: Grid,
    /// `(index, reason)` for every cell that stopped early.
    pub failures: Vec<(usize, String)>,
    /// Per cell, the neighbor epoch counters seen at each of its own updates.
    pub observed_epochs: Vec<Vec<Vec<u64>>>,
}

fn run_one<M: MixtureMetric>(
    hood: &[Cell],
    ctx: &CellContext<'_, M>,
    rng: &mut ChaCha8Rng,
    inject: bool,
) -> std::result::Result<(Cell, GenerationStats), String> {
    if inject {
        return Err("injected fault".into());
    }
    match catch_unwind(AssertUnwindSafe(|| update_center(hood, ctx, rng))) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "worker panicked".into())),
    }
}

/// Trains the grid for `opts.epochs` epochs, calling `on_epoch` once per
/// completed epoch in order.
///
/// Sequential mode sweeps cells row-major and is deterministic. Asynchronous
/// mode runs one thread per active cell; each reads its neighbors' latest
/// committed state, which may be any number of epochs behind. A failed cell
/// keeps its last good state and the others continue.
pub fn run_grid<M, F>(grid: Grid, ctx: &CellContext<'_, M>, opts: &RunGridOptions, mut on_epoch: F) -> Result<GridOutcome>
where
    M: MixtureMetric + Sync,
    F: FnMut(&EpochView<'_>) -> Result<()> + Send,
{
    ctx.mutation.validate()?;
    let n = grid.cells.len();
    let active: Vec<usize> = match &opts.active_cells {
        Some(list) => {
            if let Some(&bad) = list.iter().find(|&&i| i >= n) {
                return Err(Error::Config(format!("active cell {bad} outside a grid of {n} cells")));
            }
            let mut l = list.clone();
            l.sort_unstable();
            l.dedup();
            l
        }
        None => (0..n).collect(),
    };
    let hoods: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            neighborhood_coords(&grid.config, grid.config.coord(i))
                .map(|cs| cs.into_iter().map(|c| c.0 * grid.config.cols + c.1).collect())
        })
        .collect::<Result<_>>()?;
    let injects = |idx: usize, epoch: u64| opts.fault.is_some_and(|f| f.cell == idx && f.epoch == epoch);

    match opts.mode {
        ExecutionMode::Sequential => {
            let mut grid = grid;
            let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| cell_rng(opts.seed, i)).collect();
            let mut failures = Vec::new();
            let mut observed = vec![Vec::new(); n];
            for epoch in 1..=opts.epochs {
                let mut stats = GenerationStats::default();
                for &idx in &active {
                    if grid.cells[idx].failed.is_some() {
                        continue;
                    }
                    let hood: Vec<Cell> = hoods[idx].iter().map(|&j| grid.cells[j].clone()).collect();
                    observed[idx].push(hood.iter().map(|c| c.epoch_counter).collect());
                    match run_one(&hood, ctx, &mut rngs[idx], injects(idx, epoch)) {
                        Ok((cell, s)) => {
                            grid.cells[idx] = cell;
                            stats.absorb(&s);
                        }
                        Err(reason) => {
                            grid.cells[idx].failed = Some(reason.clone());
                            failures.push((idx, reason));
                        }
                    }
                }
                if active.iter().all(|&i| grid.cells[i].failed.is_some()) {
                    return Err(Error::Config(format!("every cell failed by epoch {epoch}")));
                }
                on_epoch(&EpochView { epoch, grid: &grid, stats })?;
            }
            Ok(GridOutcome {
                grid,
                failures,
                observed_epochs: observed,
            })
        }
        ExecutionMode::Asynchronous => run_async(grid, ctx, opts, &active, &hoods, &injects, on_epoch),
    }
}

struct Progress {
    epoch_stats: Vec<GenerationStats>,
    reported: u64,
    error: Option<Error>,
}

fn run_async<M, F>(
    grid: Grid,
    ctx: &CellContext<'_, M>,
    opts: &RunGridOptions,
    active: &[usize],
    hoods: &[Vec<usize>],
    injects: &(dyn Fn(usize, u64) -> bool + Sync),
    on_epoch: F,
) -> Result<GridOutcome>
where
    M: MixtureMetric + Sync,
    F: FnMut(&EpochView<'_>) -> Result<()> + Send,
{
    let config = grid.config;
    let cells: Vec<RwLock<Cell>> = grid.cells.into_iter().map(RwLock::new).collect();
    let read = |j: usize| cells[j].read().unwrap_or_else(|e| e.into_inner()).clone();
    let progress = Mutex::new((
        Progress {
            epoch_stats: vec![GenerationStats::default(); opts.epochs as usize],
            reported: 0,
            error: None,
        },
        on_epoch,
    ));

    // called after every commit; emits every epoch all live active cells have reached
    let report = |progress: &Mutex<(Progress, F)>| {
        let mut guard = progress.lock().unwrap_or_else(|e| e.into_inner());
        let (p, callback) = &mut *guard;
        loop {
            let next = p.reported + 1;
            if next > opts.epochs || p.error.is_some() {
                break;
            }
            let snapshot: Vec<Cell> = (0..cells.len()).map(read).collect();
            let live: Vec<&Cell> = active.iter().map(|&i| &snapshot[i]).filter(|c| c.failed.is_none()).collect();
            if live.is_empty() || live.iter().any(|c| c.epoch_counter < next) {
                break;
            }
            let view_grid = Grid { config, cells: snapshot };
            let view = EpochView {
                epoch: next,
                grid: &view_grid,
                stats: p.epoch_stats[next as usize - 1],
            };
            if let Err(e) = callback(&view) {
                p.error = Some(e);
                break;
            }
            p.reported = next;
        }
    };

    let results: Vec<(usize, Vec<Vec<u64>>, Option<String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = active
            .iter()
            .map(|&idx| {
                let (read, report, progress) = (&read, &report, &progress);
                let cells = &cells;
                scope.spawn(move || {
                    let mut rng = cell_rng(opts.seed, idx);
                    let mut observed: Vec<Vec<u64>> = Vec::new();
                    let mut failure = None;
                    for epoch in 1..=opts.epochs {
                        if progress.lock().map(|g| g.0.error.is_some()).unwrap_or(true) {
                            break;
                        }
                        let hood: Vec<Cell> = hoods[idx].iter().map(|&j| read(j)).collect();
                        observed.push(hood.iter().map(|c| c.epoch_counter).collect());
                        match run_one(&hood, ctx, &mut rng, injects(idx, epoch)) {
                            Ok((cell, s)) => {
                                // stats first, so a report triggered by this commit already includes them
                                progress.lock().unwrap_or_else(|e| e.into_inner()).0.epoch_stats[epoch as usize - 1]
                                    .absorb(&s);
                                *cells[idx].write().unwrap_or_else(|e| e.into_inner()) = cell;
                            }
                            Err(reason) => {
                                cells[idx].write().unwrap_or_else(|e| e.into_inner()).failed = Some(reason.clone());
                                failure = Some(reason);
                            }
                        }
                        report(progress);
                        if failure.is_some() {
                            break;
                        }
                    }
                    (idx, observed, failure)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker bookkeeping panicked"))
            .collect()
    });

    let (progress, _) = progress.into_inner().unwrap_or_else(|e| e.into_inner());
    if let Some(e) = progress.error {
        return Err(e);
    }
    let cells: Vec<Cell> = cells.into_iter().map(|c| c.into_inner().unwrap_or_else(|e| e.into_inner())).collect();
    if !active.is_empty() && active.iter().all(|&i| cells[i].failed.is_some()) {
        return Err(Error::Config("every cell failed".into()));
    }
    let mut observed = vec![Vec::new(); cells.len()];
    let mut failures = Vec::new();
    for (idx, obs, failure) in results {
        observed[idx] = obs;
        if let Some(reason) = failure {
            failures.push((idx, reason));
        }
    }
    failures.sort();
    Ok(GridOutcome {
        grid: Grid { config, cells },
        failures,
        observed_epochs: observed,
    })
}
