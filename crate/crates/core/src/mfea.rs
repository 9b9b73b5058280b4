//! Multi-factorial evolutionary engine.
//!
//! A single population lives in the unified space. Every individual carries a
//! skill factor (the one task it is evaluated on); evaluation decodes the
//! genotype for that task and runs the greedy allocator. Offspring come from
//! assortative mating with exon-shuffling crossover and swap mutation, and the
//! next generation keeps the best `n` individuals of every task.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::allocation::{greedy_allocate, Item};
use crate::consolidation::remigrate_and_merge;
use crate::decomposition::{build_unified_space, decode, split, TaskSpec, UnifiedSpace};
use crate::domain::{ActivatedPs, Cost, Instance, Placement};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct MfeaConfig {
    /// Random mating probability for parents with different skill factors.
    pub rmp: f64,
    /// VMs per task before remainder handling.
    pub n_per_task: usize,
    /// Survivors kept per task; population size is this times the task count.
    pub individuals_per_task: usize,
    pub max_iterations: usize,
    /// Probability of a swap mutation on crossover children.
    pub mutation_prob: f64,
    pub seed: u64,
    /// Record the merged-solution cost in the trace after every generation.
    pub track_merged: bool,
}

impl Default for MfeaConfig {
    fn default() -> Self {
        Self {
            rmp: 0.3,
            n_per_task: 200,
            individuals_per_task: 5,
            max_iterations: 50,
            mutation_prob: 0.1,
            seed: 0,
            track_merged: false,
        }
    }
}

impl MfeaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rmp) {
            return Err(Error::InvalidConfig(format!(
                "rmp {} outside [0, 1]",
                self.rmp
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::InvalidConfig(format!(
                "mutation probability {} outside [0, 1]",
                self.mutation_prob
            )));
        }
        if self.n_per_task == 0 {
            return Err(Error::InvalidConfig("task size must be positive".into()));
        }
        if self.individuals_per_task == 0 {
            return Err(Error::InvalidConfig(
                "individuals per task must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A permutation of unified slot ids plus the task it is evaluated on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genotype {
    pub order: Vec<u32>,
    /// 0-based task index.
    pub skill_factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedIndividual {
    pub genotype: Genotype,
    /// Placement over unified slot ids for the skill-factor task.
    pub phenotype: Placement,
    pub factorial_cost: Cost,
    /// 1-based rank among individuals of the same task; 0 until ranked.
    pub factorial_rank: u32,
    pub scalar_fitness: f64,
}

impl EvaluatedIndividual {
    pub fn skill_factor(&self) -> usize {
        self.genotype.skill_factor
    }
}

/// Everything the engine needs to evaluate individuals.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub instance: &'a Instance,
    pub tasks: Vec<TaskSpec>,
    pub space: UnifiedSpace,
}

impl<'a> Problem<'a> {
    pub fn new(instance: &'a Instance, tasks: Vec<TaskSpec>) -> Self {
        let space = build_unified_space(&tasks);
        Self {
            instance,
            tasks,
            space,
        }
    }

    /// Random decomposition of `instance` into tasks of about `n_per_task` VMs.
    pub fn decompose(instance: &'a Instance, n_per_task: usize, seed: u64) -> Result<Self> {
        Ok(Self::new(instance, split(instance, n_per_task, seed)?))
    }

    /// One task holding every VM with the full server availability.
    pub fn single_task(instance: &'a Instance) -> Self {
        let task = TaskSpec::from_vms(
            1,
            instance,
            (0..instance.num_vms()).collect(),
            instance.ps_availability.clone(),
        );
        Self::new(instance, vec![task])
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Maps a slot-level phenotype of task `task` to instance VM indices.
    pub fn realize(&self, task: usize, phenotype: &Placement) -> Result<Placement> {
        self.tasks[task].realize(self.instance, &self.space, phenotype)
    }
}

/// Decodes the genotype for its task, allocates it greedily and records the cost.
pub fn evaluate(genotype: Genotype, problem: &Problem) -> Result<EvaluatedIndividual> {
    let task = genotype.skill_factor;
    let slots = decode(&problem.space, &genotype.order, task)?;
    let items: Vec<Item> = slots
        .iter()
        .map(|&s| Item::new(s as usize, problem.space.slot_demand(s as usize)))
        .collect();
    let mut budget = problem.tasks[task].ps_budget.clone();
    let phenotype = greedy_allocate(&items, &problem.instance.ps_types, &mut budget)?;
    let factorial_cost = phenotype.cost();
    Ok(EvaluatedIndividual {
        genotype,
        phenotype,
        factorial_cost,
        factorial_rank: 0,
        scalar_fitness: 0.0,
    })
}

fn evaluate_all(genotypes: Vec<Genotype>, problem: &Problem) -> Result<Vec<EvaluatedIndividual>> {
    genotypes
        .into_par_iter()
        .map(|g| evaluate(g, problem))
        .collect()
}

/// Random permutations, `individuals_per_task` per task, evaluated.
pub fn initialize_population(
    problem: &Problem,
    cfg: &MfeaConfig,
) -> Result<Vec<EvaluatedIndividual>> {
    let mut rng = rng::stream(cfg.seed, Stream::Init);
    let n = cfg.individuals_per_task;
    let mut genotypes = Vec::with_capacity(n * problem.num_tasks());
    for task in 0..problem.num_tasks() {
        for _ in 0..n {
            let mut order = problem.space.identity_order();
            order.shuffle(&mut rng);
            genotypes.push(Genotype {
                order,
                skill_factor: task,
            });
        }
    }
    evaluate_all(genotypes, problem)
}

/// Exon-shuffling crossover over unified slot ids.
///
/// Servers of both parents are pooled and sorted by utilization, fullest first.
/// A server is kept whole if none of its slots is already claimed, otherwise it
/// is dropped. The child lists the kept servers' slots, then every unclaimed
/// slot in shuffled order.
pub fn crossover<R: Rng + ?Sized>(
    parent_a: &EvaluatedIndividual,
    parent_b: &EvaluatedIndividual,
    num_slots: usize,
    rng: &mut R,
) -> Vec<u32> {
    let mut pool: Vec<(&ActivatedPs, f64)> = parent_a
        .phenotype
        .servers
        .iter()
        .chain(&parent_b.phenotype.servers)
        .map(|s| (s, s.utilization()))
        .collect();
    pool.sort_by(|x, y| y.1.total_cmp(&x.1));

    let mut claimed = vec![false; num_slots];
    let mut child = Vec::with_capacity(num_slots);
    for (server, _) in pool {
        if server.vms.iter().any(|&v| claimed[v]) {
            continue;
        }
        for &v in &server.vms {
            claimed[v] = true;
            child.push(v as u32);
        }
    }
    let mut tail: Vec<u32> = (0..num_slots)
        .filter(|&s| !claimed[s])
        .map(|s| s as u32)
        .collect();
    tail.shuffle(rng);
    child.extend(tail);
    child
}

/// Swaps two distinct random positions.
pub fn swap_mutation<R: Rng + ?Sized>(order: &mut [u32], rng: &mut R) {
    let len = order.len();
    if len < 2 {
        return;
    }
    let i = rng.gen_range(0..len);
    let mut j = rng.gen_range(0..len - 1);
    if j >= i {
        j += 1;
    }
    order.swap(i, j);
}

/// Applies [`swap_mutation`] with probability `mutation_prob`.
pub fn mutate<R: Rng + ?Sized>(order: &mut [u32], rng: &mut R, mutation_prob: f64) {
    if order.len() >= 2 && mutation_prob > 0.0 && rng.gen::<f64>() < mutation_prob {
        swap_mutation(order, rng);
    }
}

/// Vertical cultural transmission: the child imitates one parent at random.
pub fn inherit_skill_factor<R: Rng + ?Sized>(a: usize, b: usize, rng: &mut R) -> usize {
    if rng.gen::<bool>() {
        a
    } else {
        b
    }
}

/// Assortative mating. Produces exactly `population.len()` offspring genotypes.
///
/// Parents sharing a skill factor always cross over; otherwise they cross
/// with probability `rmp`. A crossing pair yields two children that are
/// mutated with `mutation_prob` and imitate a random parent. A non-crossing
/// pair yields one swap-mutant of each parent that keeps the parent's task.
pub fn reproduce<R: Rng + ?Sized, M: Rng + ?Sized>(
    population: &[EvaluatedIndividual],
    num_slots: usize,
    cfg: &MfeaConfig,
    mating_rng: &mut R,
    mutation_rng: &mut M,
) -> Vec<Genotype> {
    let size = population.len();
    let mut offspring = Vec::with_capacity(size + 1);
    if size == 0 {
        return offspring;
    }
    while offspring.len() < size {
        let i = mating_rng.gen_range(0..size);
        let j = if size == 1 {
            i
        } else {
            let j = mating_rng.gen_range(0..size - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        };
        let (a, b) = (&population[i], &population[j]);
        if a.skill_factor() == b.skill_factor() || mating_rng.gen::<f64>() < cfg.rmp {
            for _ in 0..2 {
                let mut order = crossover(a, b, num_slots, mating_rng);
                mutate(&mut order, mutation_rng, cfg.mutation_prob);
                let skill_factor =
                    inherit_skill_factor(a.skill_factor(), b.skill_factor(), mating_rng);
                offspring.push(Genotype {
                    order,
                    skill_factor,
                });
            }
        } else {
            for parent in [a, b] {
                let mut order = parent.genotype.order.clone();
                swap_mutation(&mut order, mutation_rng);
                offspring.push(Genotype {
                    order,
                    skill_factor: parent.skill_factor(),
                });
            }
        }
    }
    offspring.truncate(size);
    offspring
}

/// Ranks each task's individuals by factorial cost and keeps the best
/// `individuals_per_task` of every task, grouped by task in ascending order.
///
/// Equal costs keep their input order, so parents placed before offspring win
/// ties. A task with too few candidates is topped up with swap-mutated clones of
/// its best individual.
pub fn select_survivors<M: Rng + ?Sized>(
    candidates: Vec<EvaluatedIndividual>,
    problem: &Problem,
    cfg: &MfeaConfig,
    mutation_rng: &mut M,
) -> Result<Vec<EvaluatedIndividual>> {
    let n = cfg.individuals_per_task;
    let mut by_task: Vec<Vec<EvaluatedIndividual>> =
        (0..problem.num_tasks()).map(|_| Vec::new()).collect();
    for ind in candidates {
        let task = ind.skill_factor();
        by_task
            .get_mut(task)
            .ok_or_else(|| Error::Internal(format!("skill factor {task} out of range")))?
            .push(ind);
    }
    let mut next = Vec::with_capacity(n * problem.num_tasks());
    for (task, mut group) in by_task.into_iter().enumerate() {
        group.sort_by_key(|ind| ind.factorial_cost);
        for (r, ind) in group.iter_mut().enumerate() {
            ind.factorial_rank = r as u32 + 1;
            ind.scalar_fitness = 1.0 / ind.factorial_rank as f64;
        }
        group.truncate(n);
        if group.len() < n {
            if group.is_empty() {
                return Err(Error::Internal(format!(
                    "task {} has no individuals left",
                    task + 1
                )));
            }
            log::warn!(
                "task {} has {} of {n} survivors; refilling with mutated clones",
                task + 1,
                group.len()
            );
            let mut fill = Vec::new();
            while group.len() + fill.len() < n {
                let mut g = group[0].genotype.clone();
                swap_mutation(&mut g.order, mutation_rng);
                fill.push(g);
            }
            group.extend(evaluate_all(fill, problem)?);
            group.sort_by_key(|ind| ind.factorial_cost);
            for (r, ind) in group.iter_mut().enumerate() {
                ind.factorial_rank = r as u32 + 1;
                ind.scalar_fitness = 1.0 / ind.factorial_rank as f64;
            }
        }
        next.extend(group);
    }
    Ok(next)
}

/// One row of the convergence trace. `task` 0 stands for the merged solution.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub task: usize,
    pub best_cost: Cost,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    /// Best cost of `task` (1-based, 0 for merged) at each recorded iteration.
    pub fn series(&self, task: usize) -> Vec<(usize, Cost)> {
        self.records
            .iter()
            .filter(|r| r.task == task)
            .map(|r| (r.iteration, r.best_cost))
            .collect()
    }

    pub const CSV_HEADER: &'static str = "iteration,task_index,best_cost,elapsed_ms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.iteration, r.task, r.best_cost, r.elapsed_ms
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Final population and trace of an evolutionary run.
#[derive(Debug, Clone)]
pub struct Evolution {
    /// Grouped by task; the first individual of each group is that task's best.
    pub population: Vec<EvaluatedIndividual>,
    pub trace: RunTrace,
}

impl Evolution {
    pub fn best_of(&self, task: usize, individuals_per_task: usize) -> &EvaluatedIndividual {
        &self.population[task * individuals_per_task]
    }
}

/// Best phenotype of every task, mapped to instance VM indices.
pub fn best_placements(
    problem: &Problem,
    population: &[EvaluatedIndividual],
    n: usize,
) -> Result<Vec<Placement>> {
    (0..problem.num_tasks())
        .map(|t| problem.realize(t, &population[t * n].phenotype))
        .collect()
}

/// The evolutionary loop shared by the multi-factorial and single-factorial solvers.
pub fn evolve(problem: &Problem, cfg: &MfeaConfig) -> Result<Evolution> {
    cfg.validate()?;
    let start = Instant::now();
    let mut mating_rng = rng::stream(cfg.seed, Stream::Mating);
    let mut mutation_rng = rng::stream(cfg.seed, Stream::Mutation);
    let mut trace = RunTrace::default();

    let initial = initialize_population(problem, cfg)?;
    let mut population = select_survivors(initial, problem, cfg, &mut mutation_rng)?;
    record(problem, &population, cfg, 0, start, &mut trace)?;

    for iteration in 1..=cfg.max_iterations {
        let offspring = reproduce(
            &population,
            problem.space.len(),
            cfg,
            &mut mating_rng,
            &mut mutation_rng,
        );
        let offspring = evaluate_all(offspring, problem)?;
        let mut candidates = population;
        candidates.extend(offspring);
        population = select_survivors(candidates, problem, cfg, &mut mutation_rng)?;
        record(problem, &population, cfg, iteration, start, &mut trace)?;
    }
    Ok(Evolution { population, trace })
}

fn record(
    problem: &Problem,
    population: &[EvaluatedIndividual],
    cfg: &MfeaConfig,
    iteration: usize,
    start: Instant,
    trace: &mut RunTrace,
) -> Result<()> {
    let n = cfg.individuals_per_task;
    if cfg.track_merged {
        let bests = best_placements(problem, population, n)?;
        let merged =
            remigrate_and_merge(problem.instance, &bests, &problem.instance.ps_availability)?;
        trace.records.push(TraceRecord {
            iteration,
            task: 0,
            best_cost: merged.cost(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    for task in 0..problem.num_tasks() {
        trace.records.push(TraceRecord {
            iteration,
            task: task + 1,
            best_cost: population[task * n].factorial_cost,
            elapsed_ms,
        });
    }
    Ok(())
}

/// Result of [`run`]: the decomposition, the best placement of each task
/// (instance VM indices) and the convergence trace.
#[derive(Debug, Clone)]
pub struct MfeaOutcome {
    pub tasks: Vec<TaskSpec>,
    pub space: UnifiedSpace,
    pub best_per_task: Vec<Placement>,
    pub best_costs: Vec<Cost>,
    pub trace: RunTrace,
}

/// Decomposes the instance, evolves all tasks together and returns each task's best placement.
pub fn run(instance: &Instance, cfg: &MfeaConfig) -> Result<MfeaOutcome> {
    cfg.validate()?;
    let problem = Problem::decompose(instance, cfg.n_per_task, cfg.seed)?;
    let evo = evolve(&problem, cfg)?;
    let n = cfg.individuals_per_task;
    let best_per_task = best_placements(&problem, &evo.population, n)?;
    let best_costs = (0..problem.num_tasks())
        .map(|t| evo.best_of(t, n).factorial_cost)
        .collect();
    Ok(MfeaOutcome {
        tasks: problem.tasks,
        space: problem.space,
        best_per_task,
        best_costs,
        trace: evo.trace,
    })
}

/// [`run`] followed by re-migration and merge into one placement of the whole instance.
pub fn solve(instance: &Instance, cfg: &MfeaConfig) -> Result<(Placement, RunTrace)> {
    let outcome = run(instance, cfg)?;
    let merged = remigrate_and_merge(instance, &outcome.best_per_task, &instance.ps_availability)?;
    Ok((merged, outcome.trace))
}
