//! Simulation of the evolving processes: runs of 1's as cells fill in random
//! order (discrete steps or randomized arrival times, linear or cyclic),
//! general pattern functionals, priority queues and hashing with lazy
//! deletion.
//!
//! Every kernel updates its statistic in O(1) (O(l) for patterns) per event,
//! so a trajectory of size `n` costs O(n) beyond the sort where one is needed.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::pattern::PatternFunctional;
use crate::rng::{mix64, CounterRng};
use crate::stats::{CovarianceAccumulator, MomentAccumulator};

/// How cells beyond `1..n` are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Runs: cells outside are permanently empty. Patterns: windows that
    /// stick out are dropped.
    Linear,
    /// Indices wrap modulo `n`.
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelTag {
    RunsLinear,
    RunsCyclic,
    RunsTime,
    Pattern,
    PriorityQueue,
    LazyHash,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            ModelTag::RunsLinear => "runs-linear",
            ModelTag::RunsCyclic => "runs-cyclic",
            ModelTag::RunsTime => "runs-time",
            ModelTag::Pattern => "pattern",
            ModelTag::PriorityQueue => "priority-queue",
            ModelTag::LazyHash => "lazy-hash",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "runs" | "runs-linear" => ModelTag::RunsLinear,
            "runs-cyclic" => ModelTag::RunsCyclic,
            "runs-time" => ModelTag::RunsTime,
            "pattern" => ModelTag::Pattern,
            "pq" | "priority-queue" => ModelTag::PriorityQueue,
            "lazy-hash" | "hash" => ModelTag::LazyHash,
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }
}

/// One realized evolution, summarized.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub model: ModelTag,
    pub max_value: f64,
    /// Smallest step (insertions, or events for the queue models) at which
    /// the maximum is attained.
    pub argmax: usize,
    /// Arrival time of that step, for models with a time axis.
    pub argmax_time: Option<f64>,
    /// Value at step `ceil(n/2)` for runs and patterns, at event `n` for the
    /// queue models.
    pub mid_value: f64,
    /// Values at the requested grid points, in grid order.
    pub samples: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    match grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        Some(&t) => Err(Error::TimeOutOfRange(t)),
        None => Ok(()),
    }
}

/// Records max/argmax, the value at one reference step, and values at a set
/// of target steps while a path is walked step by step.
struct PathTracker {
    max: f64,
    argmax: usize,
    mid_step: usize,
    mid: f64,
    // (step, grid slot), sorted by step
    targets: Vec<(usize, usize)>,
    next_target: usize,
    samples: Vec<f64>,
}

impl PathTracker {
    fn new(mid_step: usize, grid_steps: &[usize], initial: f64) -> Self {
        let mut targets: Vec<(usize, usize)> =
            grid_steps.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        targets.sort_unstable();
        let mut tracker = Self {
            max: f64::NEG_INFINITY,
            argmax: 0,
            mid_step,
            mid: 0.0,
            targets,
            next_target: 0,
            samples: vec![0.0; grid_steps.len()],
        };
        tracker.observe(0, initial);
        tracker
    }

    #[inline]
    fn observe(&mut self, step: usize, value: f64) {
        if value > self.max {
            self.max = value;
            self.argmax = step;
        }
        if step == self.mid_step {
            self.mid = value;
        }
        while let Some(&(s, slot)) = self.targets.get(self.next_target) {
            if s != step {
                break;
            }
            self.samples[slot] = value;
            self.next_target += 1;
        }
    }

    fn finish(self, n: usize, model: ModelTag, argmax_time: Option<f64>) -> Trajectory {
        Trajectory {
            n,
            model,
            max_value: self.max,
            argmax: self.argmax,
            argmax_time,
            mid_value: self.mid,
            samples: self.samples,
        }
    }
}

/// `m = floor(n t)` for each grid time.
fn discrete_steps(total: usize, grid: &[f64]) -> Vec<usize> {
    grid.iter()
        .map(|&t| ((total as f64 * t).floor() as usize).min(total))
        .collect()
}

/// Number of sorted times `<= t`, for each grid time.
fn steps_at_times(sorted_times: &[f64], grid: &[f64]) -> Vec<usize> {
    grid.iter()
        .map(|&t| sorted_times.partition_point(|&x| x <= t))
        .collect()
}

/// Occupancy of `n` cells with the run count kept up to date.
#[derive(Debug, Clone)]
pub struct RunsState {
    // one padding cell on each side, always empty in linear mode
    cells: Vec<u8>,
    n: usize,
    boundary: Boundary,
    runs: i64,
    filled: usize,
}

impl RunsState {
    pub fn new(n: usize, boundary: Boundary) -> Self {
        Self {
            cells: vec![0; n + 2],
            n,
            boundary,
            runs: 0,
            filled: 0,
        }
    }

    pub fn runs(&self) -> i64 {
        self.runs
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn is_occupied(&self, k: usize) -> bool {
        self.cells[k + 1] != 0
    }

    /// Fills cell `k` (0-based) and returns the change in the run count.
    #[inline]
    pub fn insert(&mut self, k: usize) -> i64 {
        debug_assert!(self.cells[k + 1] == 0, "cell {k} already filled");
        let delta = match self.boundary {
            Boundary::Linear => 1 - self.cells[k] as i64 - self.cells[k + 2] as i64,
            Boundary::Cyclic if self.n == 1 => 0,
            Boundary::Cyclic => {
                let left = if k == 0 { self.n - 1 } else { k - 1 };
                let right = if k + 1 == self.n { 0 } else { k + 1 };
                1 - self.cells[left + 1] as i64 - self.cells[right + 1] as i64
            }
        };
        self.cells[k + 1] = 1;
        self.runs += delta;
        self.filled += 1;
        delta
    }
}

fn drive_runs(
    n: usize,
    boundary: Boundary,
    order: impl Iterator<Item = usize>,
    grid_steps: &[usize],
) -> PathTracker {
    let mut state = RunsState::new(n, boundary);
    let mut tracker = PathTracker::new(n.div_ceil(2), grid_steps, 0.0);
    for (i, k) in order.enumerate() {
        state.insert(k);
        tracker.observe(i + 1, state.runs() as f64);
    }
    tracker
}

fn runs_tag(boundary: Boundary) -> ModelTag {
    match boundary {
        Boundary::Linear => ModelTag::RunsLinear,
        Boundary::Cyclic => ModelTag::RunsCyclic,
    }
}

/// Yields a uniform random order of `0..n` lazily, one Fisher–Yates step at
/// a time.
struct LazyShuffle<'a> {
    perm: Vec<u32>,
    pos: usize,
    rng: &'a mut CounterRng,
}

impl Iterator for LazyShuffle<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        let n = self.perm.len();
        if self.pos == n {
            return None;
        }
        let j = self.pos + self.rng.below((n - self.pos) as u64) as usize;
        self.perm.swap(self.pos, j);
        let k = self.perm[self.pos];
        self.pos += 1;
        Some(k as usize)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("n must be at least 1"))
    } else {
        Ok(())
    }
}

/// Runs of 1's as the cells fill in a uniformly random order; grid times
/// are sampled at step `floor(n t)`.
pub fn simulate_runs(n: usize, seed: u64, boundary: Boundary, grid: &[f64]) -> Result<Trajectory> {
    check_n(n)?;
    check_grid(grid)?;
    let mut rng = CounterRng::from_key(seed);
    let order = LazyShuffle {
        perm: (0..n as u32).collect(),
        pos: 0,
        rng: &mut rng,
    };
    let tracker = drive_runs(n, boundary, order, &discrete_steps(n, grid));
    Ok(tracker.finish(n, runs_tag(boundary), None))
}

/// Same process for an explicit insertion order (0-based cells).
pub fn simulate_runs_with_order(order: &[u32], boundary: Boundary, grid: &[f64]) -> Result<Trajectory> {
    let n = order.len();
    check_n(n)?;
    check_grid(grid)?;
    let mut seen = vec![false; n];
    for &k in order {
        let k = k as usize;
        if k >= n || std::mem::replace(&mut seen[k], true) {
            return Err(invalid("order is not a permutation of 0..n"));
        }
    }
    let tracker = drive_runs(n, boundary, order.iter().map(|&k| k as usize), &discrete_steps(n, grid));
    Ok(tracker.finish(n, runs_tag(boundary), None))
}

/// Run count after every step of a given order, starting with the empty
/// string at step 0.
pub fn runs_path(order: &[u32], boundary: Boundary) -> Vec<i64> {
    let mut state = RunsState::new(order.len(), boundary);
    std::iter::once(0)
        .chain(order.iter().map(|&k| {
            state.insert(k as usize);
            state.runs()
        }))
        .collect()
}

/// Iid uniform arrival times for cells `0..n`, and the arrival order they
/// induce together with the sorted times.
pub fn arrival_times(n: usize, seed: u64) -> (Vec<u32>, Vec<f64>) {
    let mut rng = CounterRng::from_key(seed);
    let mut keyed: Vec<(u64, u32)> = (0..n as u32)
        .map(|k| (rng.uniform_open0().to_bits(), k))
        .collect();
    // positive doubles order like their bit patterns
    keyed.sort_unstable();
    let order = keyed.iter().map(|&(_, k)| k).collect();
    let times = keyed.iter().map(|&(b, _)| f64::from_bits(b)).collect();
    (order, times)
}

/// Runs with randomized arrival times; grid points are real times `t` and
/// sample the run count among the cells that arrived by `t`.
pub fn simulate_runs_randomized_time(n: usize, seed: u64, grid: &[f64]) -> Result<Trajectory> {
    check_n(n)?;
    check_grid(grid)?;
    let (order, times) = arrival_times(n, seed);
    let tracker = drive_runs(
        n,
        Boundary::Linear,
        order.iter().map(|&k| k as usize),
        &steps_at_times(&times, grid),
    );
    let argmax_time = if tracker.argmax == 0 { 0.0 } else { times[tracker.argmax - 1] };
    Ok(tracker.finish(n, ModelTag::RunsTime, Some(argmax_time)))
}

/// Occupancy of `n` cells with the windowed sum of a pattern functional kept
/// up to date.
#[derive(Debug, Clone)]
pub struct PatternState<'a> {
    psi: &'a PatternFunctional,
    cells: Vec<u8>,
    boundary: Boundary,
    value: f64,
}

impl<'a> PatternState<'a> {
    pub fn new(psi: &'a PatternFunctional, n: usize, boundary: Boundary) -> Result<Self> {
        let len = psi.window_len();
        if n < len {
            return Err(invalid(format!("n = {n} is shorter than the window length {len}")));
        }
        let empty_windows = match boundary {
            Boundary::Cyclic => n,
            Boundary::Linear => n + 1 - len,
        };
        Ok(Self {
            psi,
            cells: vec![0; n],
            boundary,
            value: psi.value(0) * empty_windows as f64,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    fn cell(&self, k: i64) -> u8 {
        let n = self.cells.len() as i64;
        match self.boundary {
            Boundary::Cyclic => self.cells[k.rem_euclid(n) as usize],
            Boundary::Linear if (0..n).contains(&k) => self.cells[k as usize],
            Boundary::Linear => 0,
        }
    }

    /// Fills cell `k`, returning the jump in the windowed sum.
    pub fn insert(&mut self, k: usize) -> f64 {
        let len = self.psi.window_len() as i64;
        let n = self.cells.len() as i64;
        let k = k as i64;
        // bit i of `hood` is cell k - len + 1 + i
        let mut hood = 0usize;
        for i in 0..2 * len - 1 {
            hood |= (self.cell(k - len + 1 + i) as usize) << i;
        }
        let mask = (1usize << len) - 1;
        let mut delta = 0.0;
        for i in 0..len {
            let start = k - len + 1 + i;
            if self.boundary == Boundary::Linear && (start < 0 || start + len > n) {
                continue;
            }
            let before = (hood >> i) & mask;
            let after = before | 1 << (len - 1 - i);
            delta += self.psi.value(after) - self.psi.value(before);
        }
        self.cells[k as usize] = 1;
        self.value += delta;
        delta
    }
}

/// From-scratch windowed sum over an occupancy string.
pub fn pattern_value(psi: &PatternFunctional, cells: &[bool], boundary: Boundary) -> f64 {
    let len = psi.window_len();
    let n = cells.len();
    let starts = match boundary {
        Boundary::Cyclic => n,
        Boundary::Linear => (n + 1).saturating_sub(len),
    };
    (0..starts)
        .map(|s| {
            let idx = (0..len).fold(0usize, |acc, j| acc | (cells[(s + j) % n] as usize) << j);
            psi.value(idx)
        })
        .sum()
}

/// Pattern functional evolving as the cells fill in uniformly random order;
/// grid times are sampled at step `floor(n t)`.
pub fn simulate_pattern(
    psi: &PatternFunctional,
    n: usize,
    seed: u64,
    boundary: Boundary,
    grid: &[f64],
) -> Result<Trajectory> {
    check_n(n)?;
    check_grid(grid)?;
    let mut state = PatternState::new(psi, n, boundary)?;
    let mut rng = CounterRng::from_key(seed);
    let order = LazyShuffle {
        perm: (0..n as u32).collect(),
        pos: 0,
        rng: &mut rng,
    };
    let mut tracker = PathTracker::new(n.div_ceil(2), &discrete_steps(n, grid), state.value());
    for (i, k) in order.enumerate() {
        state.insert(k);
        tracker.observe(i + 1, state.value());
    }
    Ok(tracker.finish(n, ModelTag::Pattern, None))
}

/// The windowed sum after every step of a given order.
pub fn pattern_path(psi: &PatternFunctional, order: &[u32], boundary: Boundary) -> Result<Vec<f64>> {
    let mut state = PatternState::new(psi, order.len(), boundary)?;
    let mut out = Vec::with_capacity(order.len() + 1);
    out.push(state.value());
    for &k in order {
        state.insert(k as usize);
        out.push(state.value());
    }
    Ok(out)
}

/// Event sequence of a priority queue under the combinatorial model: the
/// `2n` insert/delete events are a uniformly random arrangement of the
/// multiset `{0, 0, 1, 1, ..., n-1, n-1}` where the first copy of each label
/// is its insertion. Returns `+1`/`-1` per event.
pub fn priority_queue_events(n: usize, rng: &mut CounterRng) -> Vec<i8> {
    let mut labels: Vec<u32> = (0..2 * n as u32).map(|i| i / 2).collect();
    rng.shuffle(&mut labels);
    let mut seen = vec![false; n];
    labels
        .into_iter()
        .map(|l| {
            if std::mem::replace(&mut seen[l as usize], true) {
                -1
            } else {
                1
            }
        })
        .collect()
}

fn drive_events(events: &[i8], grid_steps: &[usize], mid_step: usize) -> PathTracker {
    let mut tracker = PathTracker::new(mid_step, grid_steps, 0.0);
    let mut y = 0i64;
    for (i, &e) in events.iter().enumerate() {
        y += e as i64;
        tracker.observe(i + 1, y as f64);
    }
    tracker
}

/// Sorts interval endpoints into an event sequence with event times.
/// Each key is `time bits << 1 | tag` with tag 0 for an arrival and 1 for a
/// departure; times lie in `[0, 1)` so the shift cannot overflow.
fn sweep_keys(mut keys: Vec<u64>) -> (Vec<i8>, Vec<f64>) {
    keys.sort_unstable();
    let events = keys.iter().map(|k| if k & 1 == 0 { 1 } else { -1 }).collect();
    let times = keys.iter().map(|k| f64::from_bits(k >> 1)).collect();
    (events, times)
}

/// Time-ordered events of a priority queue with `n` items, item `i`
/// inserted at `min(U_i, U'_i)` and deleted at `max(U_i, U'_i)`.
pub fn priority_queue_sweep(n: usize, rng: &mut CounterRng) -> (Vec<i8>, Vec<f64>) {
    let mut keys = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (u, v) = (rng.uniform(), rng.uniform());
        keys.push(u.min(v).to_bits() << 1);
        keys.push(u.max(v).to_bits() << 1 | 1);
    }
    sweep_keys(keys)
}

fn finish_queue(events: &[i8], times: &[f64], grid: &[f64], n: usize, model: ModelTag) -> Trajectory {
    let tracker = drive_events(events, &steps_at_times(times, grid), n);
    let argmax_time = if tracker.argmax == 0 { 0.0 } else { times[tracker.argmax - 1] };
    tracker.finish(n, model, Some(argmax_time))
}

/// Priority queue with `n` items under randomized time; grid points are
/// real times.
pub fn simulate_priority_queue(n: usize, seed: u64, grid: &[f64]) -> Result<Trajectory> {
    check_n(n)?;
    check_grid(grid)?;
    let mut rng = CounterRng::from_key(seed);
    let (events, times) = priority_queue_sweep(n, &mut rng);
    Ok(finish_queue(&events, &times, grid, n, ModelTag::PriorityQueue))
}

/// Hashing with lazy deletion: item `i` is present on `[A_i, D_i)`. `A` is
/// drawn from its density `2(1 - a)` and `D` uniformly on `(A, 1)`.
pub fn simulate_lazy_hash(n: usize, seed: u64, grid: &[f64]) -> Result<Trajectory> {
    check_n(n)?;
    check_grid(grid)?;
    let mut rng = CounterRng::from_key(seed);
    let mut keys = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let a = 1.0 - rng.uniform_open0().sqrt();
        let d = a + (1.0 - a) * rng.uniform();
        keys.push(a.to_bits() << 1);
        keys.push(d.to_bits() << 1 | 1);
    }
    let (events, times) = sweep_keys(keys);
    Ok(finish_queue(&events, &times, grid, n, ModelTag::LazyHash))
}

/// A fully specified model for sweeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Runs(Boundary),
    RunsTime,
    Pattern {
        psi: PatternFunctional,
        boundary: Boundary,
    },
    PriorityQueue,
    LazyHash,
}

impl Model {
    pub fn tag(&self) -> ModelTag {
        match self {
            Model::Runs(b) => runs_tag(*b),
            Model::RunsTime => ModelTag::RunsTime,
            Model::Pattern { .. } => ModelTag::Pattern,
            Model::PriorityQueue => ModelTag::PriorityQueue,
            Model::LazyHash => ModelTag::LazyHash,
        }
    }

    pub fn simulate(&self, n: usize, seed: u64, grid: &[f64]) -> Result<Trajectory> {
        match self {
            Model::Runs(b) => simulate_runs(n, seed, *b, grid),
            Model::RunsTime => simulate_runs_randomized_time(n, seed, grid),
            Model::Pattern { psi, boundary } => simulate_pattern(psi, n, seed, *boundary, grid),
            Model::PriorityQueue => simulate_priority_queue(n, seed, grid),
            Model::LazyHash => simulate_lazy_hash(n, seed, grid),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub reps: u64,
    pub base_seed: u64,
    pub model: Model,
    pub grid: Vec<f64>,
    /// Worker cap; `None` uses every core. Results do not depend on it.
    pub jobs: Option<usize>,
}

impl SimConfig {
    pub fn new(model: Model, n: usize, reps: u64, base_seed: u64) -> Self {
        Self {
            n,
            reps,
            base_seed,
            model,
            grid: Vec::new(),
            jobs: None,
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_jobs(mut self, jobs: Option<usize>) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_n(self.n)?;
        check_grid(&self.grid)?;
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if let Model::Pattern { psi, .. } = &self.model {
            if self.n < psi.window_len() {
                return Err(invalid("n is shorter than the pattern window"));
            }
        }
        Ok(())
    }
}

/// Seed of repetition `rep` in a sweep.
pub fn rep_seed(base_seed: u64, rep: u64) -> u64 {
    mix64(mix64(base_seed ^ 0xa076_1d64_78bd_642f).wrapping_add(rep.wrapping_mul(0xe703_7ed1_a0b4_28db)))
}

/// Sweep statistics over a set of repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    pub max: MomentAccumulator,
    pub mid: MomentAccumulator,
    /// `max - mid` per repetition.
    pub excess: MomentAccumulator,
    /// Argmax as a fraction of the path length.
    pub argmax: MomentAccumulator,
    /// Joint moments of the grid samples.
    pub grid: CovarianceAccumulator,
}

impl SweepStats {
    pub fn empty(grid_len: usize) -> Self {
        Self {
            max: MomentAccumulator::new(),
            mid: MomentAccumulator::new(),
            excess: MomentAccumulator::new(),
            argmax: MomentAccumulator::new(),
            grid: CovarianceAccumulator::new(grid_len),
        }
    }

    pub fn push(&mut self, traj: &Trajectory, path_len: usize) {
        self.max.push(traj.max_value);
        self.mid.push(traj.mid_value);
        self.excess.push(traj.max_value - traj.mid_value);
        self.argmax.push(traj.argmax as f64 / path_len as f64);
        self.grid.push(&traj.samples);
    }

    pub fn merge(&mut self, other: &SweepStats) {
        self.max.merge(&other.max);
        self.mid.merge(&other.mid);
        self.excess.merge(&other.excess);
        self.argmax.merge(&other.argmax);
        self.grid.merge(&other.grid);
    }

    pub fn count(&self) -> u64 {
        self.max.count()
    }
}

/// Repetitions per block. Blocks are accumulated sequentially and merged in
/// index order, which fixes the floating-point result independent of the
/// worker count.
pub const BLOCK_REPS: u64 = 128;

fn path_len(model: &Model, n: usize) -> usize {
    match model {
        Model::PriorityQueue | Model::LazyHash => 2 * n,
        _ => n,
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        },
        None => work(),
    }
}

/// Per-block statistics for repetitions `reps.start .. reps.end`.
pub fn sweep_blocks_range(config: &SimConfig, reps: std::ops::Range<u64>) -> Result<Vec<SweepStats>> {
    config.validate()?;
    let len = path_len(&config.model, config.n);
    let first = reps.start;
    let blocks: Vec<std::ops::Range<u64>> = (0..(reps.end.saturating_sub(first)).div_ceil(BLOCK_REPS))
        .map(|b| {
            let lo = first + b * BLOCK_REPS;
            lo..(lo + BLOCK_REPS).min(reps.end)
        })
        .collect();
    with_pool(config.jobs, || {
        blocks
            .into_par_iter()
            .map(|block| {
                let mut stats = SweepStats::empty(config.grid.len());
                for rep in block {
                    let seed = rep_seed(config.base_seed, rep);
                    let traj = config.model.simulate(config.n, seed, &config.grid)?;
                    stats.push(&traj, len);
                }
                Ok(stats)
            })
            .collect()
    })
}

pub fn sweep_blocks(config: &SimConfig) -> Result<Vec<SweepStats>> {
    sweep_blocks_range(config, 0..config.reps)
}

/// Runs every repetition and merges the statistics.
pub fn run_sweep(config: &SimConfig) -> Result<SweepStats> {
    let blocks = sweep_blocks(config)?;
    Ok(merge_blocks(&blocks, config.grid.len()))
}

pub fn merge_blocks(blocks: &[SweepStats], grid_len: usize) -> SweepStats {
    blocks.iter().fold(SweepStats::empty(grid_len), |mut acc, b| {
        acc.merge(b);
        acc
    })
}

/// Maximum of every repetition, in repetition order.
pub fn collect_maxima(config: &SimConfig) -> Result<Vec<f64>> {
    config.validate()?;
    with_pool(config.jobs, || {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                config
                    .model
                    .simulate(config.n, rep_seed(config.base_seed, rep), &config.grid)
                    .map(|t| t.max_value)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_permutation;
    use std::collections::BTreeMap;

    #[test]
    fn single_cell() {
        let t = simulate_runs(1, 3, Boundary::Linear, &[]).unwrap();
        assert_eq!((t.max_value, t.argmax), (1.0, 1));
        assert!(simulate_runs(0, 3, Boundary::Linear, &[]).is_err());
    }

    #[test]
    fn identity_order_is_one_growing_run() {
        let order: Vec<u32> = (0..50).collect();
        let path = runs_path(&order, Boundary::Linear);
        assert_eq!(path[0], 0);
        assert!(path[1..].iter().all(|&x| x == 1));
        let t = simulate_runs_with_order(&order, Boundary::Linear, &[0.5]).unwrap();
        assert_eq!(t.max_value, 1.0);
        assert_eq!(t.argmax, 1);
        assert!(simulate_runs_with_order(&[0, 0], Boundary::Linear, &[]).is_err());
    }

    #[test]
    fn all_orders_of_three() {
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut hist = BTreeMap::new();
        for o in orders {
            let t = simulate_runs_with_order(&o, Boundary::Linear, &[]).unwrap();
            *hist.entry(t.max_value as u32).or_insert(0) += 1;
        }
        assert_eq!(hist, BTreeMap::from([(1, 4), (2, 2)]));
    }

    #[test]
    fn runs_path_invariants() {
        let mut rng = CounterRng::from_key(1);
        for n in [1usize, 2, 5, 40, 333] {
            for _ in 0..20 {
                let order = random_permutation(&mut rng, n);
                let lin = runs_path(&order, Boundary::Linear);
                let cyc = runs_path(&order, Boundary::Cyclic);
                assert_eq!(lin.len(), n + 1);
                assert_eq!((lin[0], lin[n]), (0, 1));
                assert_eq!(lin.windows(2).map(|w| w[1] - w[0]).sum::<i64>(), 1);
                for m in 1..=n {
                    assert!((lin[m] - lin[m - 1]).abs() <= 1);
                    assert!(lin[m] >= 1 && lin[m] <= m.min(n - m + 1) as i64);
                    assert!((lin[m] - cyc[m]).abs() <= 1, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn trajectory_fields_consistent_with_path() {
        let mut rng = CounterRng::from_key(8);
        let order = random_permutation(&mut rng, 101);
        let path = runs_path(&order, Boundary::Linear);
        let grid = [0.0, 0.25, 0.5, 1.0];
        let t = simulate_runs_with_order(&order, Boundary::Linear, &grid).unwrap();
        let max = *path.iter().max().unwrap();
        assert_eq!(t.max_value, max as f64);
        assert_eq!(t.argmax, path.iter().position(|&x| x == max).unwrap());
        assert_eq!(t.mid_value, path[51] as f64);
        assert_eq!(t.samples, vec![0.0, path[25] as f64, path[50] as f64, 1.0]);
        assert!(t.max_value >= t.mid_value);
    }

    #[test]
    fn randomized_time_matches_discrete_on_same_order() {
        for seed in 0..50u64 {
            let n = 1 + (seed as usize * 7) % 200;
            let (order, times) = arrival_times(n, seed);
            assert!(times.windows(2).all(|w| w[0] <= w[1]));
            let timed = simulate_runs_randomized_time(n, seed, &[0.0, 1.0]).unwrap();
            let discrete = simulate_runs_with_order(&order, Boundary::Linear, &[]).unwrap();
            assert_eq!(timed.max_value, discrete.max_value);
            assert_eq!(timed.argmax, discrete.argmax);
            assert_eq!(timed.samples, vec![0.0, 1.0]);
            assert_eq!(timed.argmax_time, Some(times[timed.argmax - 1]));
        }
    }

    #[test]
    fn pattern_isolated_ones_full_fill_is_zero() {
        let psi = PatternFunctional::run_length(1).unwrap();
        let t = simulate_pattern(&psi, 3, 5, Boundary::Cyclic, &[1.0]).unwrap();
        assert_eq!(t.samples, vec![0.0]);
        assert!(simulate_pattern(&psi, 2, 5, Boundary::Cyclic, &[]).is_err());
    }

    fn scratch(psi: &PatternFunctional, set: &[bool], boundary: Boundary) -> f64 {
        // independent oracle: explicit windows
        let n = set.len();
        let l = psi.window_len();
        let mut total = 0.0;
        for s in 0..n {
            if boundary == Boundary::Linear && s + l > n {
                continue;
            }
            let bits: Vec<bool> = (0..l).map(|j| set[(s + j) % n]).collect();
            total += psi.eval_bits(&bits);
        }
        total
    }

    #[test]
    fn pattern_incremental_matches_scratch() {
        let mut rng = CounterRng::from_key(4);
        for trial in 0..30 {
            let len = 1 + trial % 5;
            let values = (0..1 << len).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let psi = PatternFunctional::new(len, values).unwrap();
            let n = len + (trial * 13) % 200;
            for boundary in [Boundary::Cyclic, Boundary::Linear] {
                let order = random_permutation(&mut rng, n);
                let path = pattern_path(&psi, &order, boundary).unwrap();
                let mut set = vec![false; n];
                assert!((path[0] - scratch(&psi, &set, boundary)).abs() < 1e-9);
                for (m, &k) in order.iter().enumerate() {
                    set[k as usize] = true;
                    let want = scratch(&psi, &set, boundary);
                    assert!((path[m + 1] - want).abs() < 1e-9, "trial {trial} m={m}");
                    assert!((pattern_value(&psi, &set, boundary) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn runs_pattern_linear_counts_interior_run_starts() {
        // dropping windows that stick out loses only a run starting at cell 0
        let psi = PatternFunctional::runs();
        let mut rng = CounterRng::from_key(12);
        let order = random_permutation(&mut rng, 64);
        let pat = pattern_path(&psi, &order, Boundary::Linear).unwrap();
        let mut first = false;
        let runs = runs_path(&order, Boundary::Linear);
        for (m, &k) in order.iter().enumerate() {
            first |= k == 0;
            assert_eq!(pat[m + 1], (runs[m + 1] - first as i64) as f64);
        }
    }

    #[test]
    fn priority_queue_paths_are_dyck() {
        for seed in 0..100 {
            let n = 1 + seed as usize % 30;
            let mut rng = CounterRng::from_key(seed);
            let events = priority_queue_events(n, &mut rng);
            let mut y = 0i64;
            for &e in &events {
                y += e as i64;
                assert!(y >= 0);
            }
            assert_eq!(y, 0);
            assert_eq!(events.len(), 2 * n);
        }
        let one = simulate_priority_queue(1, 9, &[]).unwrap();
        assert_eq!(one.max_value, 1.0);
        assert_eq!(simulate_lazy_hash(1, 9, &[]).unwrap().max_value, 1.0);
    }

    #[test]
    fn queue_grid_sampling() {
        let t = simulate_lazy_hash(50, 3, &[0.0, 1.0]).unwrap();
        assert_eq!(t.samples, vec![0.0, 0.0]);
        let p = simulate_priority_queue(50, 3, &[0.0, 1.0]).unwrap();
        assert_eq!(p.samples, vec![0.0, 0.0]);
        assert!(p.max_value >= p.mid_value && t.max_value >= t.mid_value);
    }

    fn double_factorial(n: usize) -> u64 {
        (1..=n as u64).map(|k| 2 * k - 1).product()
    }

    #[test]
    fn dyck_path_weights() {
        // Empirical up/down pattern frequencies against weight / (2n-1)!!,
        // the weight being the product of heights just after each up-step.
        // Weights are computed by enumerating all pairings.
        for n in 1..=4usize {
            let mut exact: BTreeMap<Vec<i8>, u64> = BTreeMap::new();
            enumerate_pairings(&mut vec![None; 2 * n], &mut exact);
            let total = double_factorial(n);
            assert_eq!(exact.values().sum::<u64>(), total);
            for (path, &w) in &exact {
                let mut y = 0i64;
                let mut weight = 1u64;
                for &e in path {
                    y += e as i64;
                    if e > 0 {
                        weight *= y as u64;
                    }
                }
                assert_eq!(weight, w, "{path:?}");
            }
            let reps = 200_000;
            let mut shuffled: BTreeMap<Vec<i8>, u64> = BTreeMap::new();
            let mut timed: BTreeMap<Vec<i8>, u64> = BTreeMap::new();
            let mut rng = CounterRng::from_key(n as u64);
            for _ in 0..reps {
                *shuffled.entry(priority_queue_events(n, &mut rng)).or_default() += 1;
                *timed.entry(priority_queue_sweep(n, &mut rng).0).or_default() += 1;
            }
            for seen in [&shuffled, &timed] {
                assert!(seen.keys().all(|p| exact.contains_key(p)));
                for (path, &w) in &exact {
                    let p = w as f64 / total as f64;
                    let got = *seen.get(path).unwrap_or(&0) as f64 / reps as f64;
                    let se = (p * (1.0 - p) / reps as f64).sqrt();
                    assert!((got - p).abs() < 5.0 * se + 1e-12, "n={n} {path:?}: {got} vs {p}");
                }
            }
        }
    }

    fn enumerate_pairings(slots: &mut [Option<i8>], out: &mut BTreeMap<Vec<i8>, u64>) {
        let Some(first) = slots.iter().position(|s| s.is_none()) else {
            let path = slots.iter().map(|s| s.unwrap()).collect();
            *out.entry(path).or_default() += 1;
            return;
        };
        for partner in first + 1..slots.len() {
            if slots[partner].is_none() {
                slots[first] = Some(1);
                slots[partner] = Some(-1);
                enumerate_pairings(slots, out);
                slots[partner] = None;
            }
        }
        slots[first] = None;
    }

    #[test]
    fn sweep_is_deterministic_across_jobs() {
        let config = SimConfig::new(Model::Runs(Boundary::Linear), 40, 500, 17).with_grid(vec![0.3, 0.6]);
        let a = run_sweep(&config.clone().with_jobs(Some(1))).unwrap();
        let b = run_sweep(&config.clone().with_jobs(Some(3))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(), 500);
    }

    #[test]
    fn single_rep_sweep_is_single_simulation() {
        let config = SimConfig::new(Model::PriorityQueue, 30, 1, 5);
        let s = run_sweep(&config).unwrap();
        let t = simulate_priority_queue(30, rep_seed(5, 0), &[]).unwrap();
        assert_eq!(s.max.mean(), t.max_value);
        assert_eq!(s.mid.mean(), t.mid_value);
    }

    #[test]
    fn half_sweeps_merge_to_full() {
        let config = SimConfig::new(Model::RunsTime, 25, 1000, 99).with_grid(vec![0.5]);
        let full = run_sweep(&config).unwrap();
        let lo = merge_blocks(&sweep_blocks_range(&config, 0..437).unwrap(), 1);
        let hi = merge_blocks(&sweep_blocks_range(&config, 437..1000).unwrap(), 1);
        let mut merged = lo.clone();
        merged.merge(&hi);
        assert_eq!(merged.count(), full.count());
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(merged.max.mean(), full.max.mean()) < 1e-12);
        assert!(rel(merged.max.variance(), full.max.variance()) < 1e-12);
        assert!(rel(merged.grid.covariance(0, 0), full.grid.covariance(0, 0)) < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig::new(Model::LazyHash, 10, 0, 1);
        assert!(run_sweep(&bad).is_err());
        let bad_grid = SimConfig::new(Model::LazyHash, 10, 1, 1).with_grid(vec![1.5]);
        assert_eq!(run_sweep(&bad_grid), Err(Error::TimeOutOfRange(1.5)));
        assert_eq!("runs".parse::<ModelTag>().unwrap(), ModelTag::RunsLinear);
        assert!("heap".parse::<ModelTag>().is_err());
    }

    #[test]
    fn max_of_three_distribution() {
        let config = SimConfig::new(Model::Runs(Boundary::Linear), 3, 60_000, 1);
        let maxima = collect_maxima(&config).unwrap();
        let twos = maxima.iter().filter(|&&m| m == 2.0).count() as f64 / 60_000.0;
        // P(max = 2) = 1/3, sd ~ 0.0019
        assert!((twos - 1.0 / 3.0).abs() < 0.01);
    }
}
