//! Reference solvers: first-fit decreasing, the single-factorial ablation of the
//! evolutionary engine, plain greedy allocation, an exact branch-and-bound for
//! tiny instances and a fractional lower bound.

use crate::allocation::{greedy_allocate, Item};
use crate::domain::{ActivatedPs, Cost, Instance, Placement, Resources};
use crate::error::{Error, Result};
use crate::mfea::{best_placements, evolve, MfeaConfig, Problem, RunTrace};

/// First-fit decreasing.
///
/// VMs are sorted by `(cpu, ram, disk)` descending and each goes to the first
/// open server with room. When none fits, the cheapest server type that can hold
/// the VM (and still has availability) is opened at the end of the list.
pub fn ffd_solve(instance: &Instance) -> Result<Placement> {
    let mut order: Vec<usize> = (0..instance.num_vms()).collect();
    order.sort_by(|a, b| {
        instance.vms[*b]
            .demand
            .cmp(&instance.vms[*a].demand)
            .then(a.cmp(b))
    });

    let mut by_cost: Vec<usize> = (0..instance.ps_types.len()).collect();
    by_cost.sort_by_key(|&t| (instance.ps_types[t].cost, t));

    let mut remaining = instance.ps_availability.clone();
    let mut servers: Vec<ActivatedPs> = Vec::new();
    for v in order {
        let demand = instance.vms[v].demand;
        if let Some(s) = servers.iter_mut().find(|s| demand.fits_in(&s.residual())) {
            s.push(v, demand);
            continue;
        }
        let fits: Vec<usize> = by_cost
            .iter()
            .copied()
            .filter(|&t| demand.fits_in(&instance.ps_types[t].capacity))
            .collect();
        let Some(&t) = fits.iter().find(|&&t| remaining[t] > 0) else {
            return Err(if fits.is_empty() {
                Error::UnplaceableVm { id: v }
            } else {
                Error::BudgetExhausted {
                    remaining: instance.num_vms()
                        - servers.iter().map(|s| s.vms.len()).sum::<usize>(),
                }
            });
        };
        remaining[t] -= 1;
        let mut s = ActivatedPs::empty(t, &instance.ps_types[t]);
        s.push(v, demand);
        servers.push(s);
    }
    Ok(Placement::new(servers))
}

/// The greedy allocator applied once to all VMs in index order.
pub fn greedy_solve(instance: &Instance) -> Result<Placement> {
    let items: Vec<Item> = instance
        .vms
        .iter()
        .enumerate()
        .map(|(i, vm)| Item::new(i, vm.demand))
        .collect();
    greedy_allocate(
        &items,
        &instance.ps_types,
        &mut instance.ps_availability.clone(),
    )
}

/// Single-factorial ablation: the same evolutionary loop on one task holding
/// every VM, so there is no decomposition, no knowledge transfer and no merge.
pub fn sfea_solve(instance: &Instance, cfg: &MfeaConfig) -> Result<(Placement, RunTrace)> {
    cfg.validate()?;
    let problem = Problem::single_task(instance);
    let evo = evolve(&problem, cfg)?;
    let mut best = best_placements(&problem, &evo.population, cfg.individuals_per_task)?;
    Ok((best.remove(0), evo.trace))
}

/// Per-resource minimum cost per unit of capacity, in cost units.
fn unit_prices(instance: &Instance) -> [f64; 3] {
    let mut out = [f64::INFINITY; 3];
    for t in &instance.ps_types {
        let cap = t.capacity.as_array();
        for r in 0..3 {
            out[r] = out[r].min(t.cost.as_f64() / cap[r] as f64);
        }
    }
    out
}

/// Fractional lower bound on the deployment cost of any complete placement.
pub fn lower_bound(instance: &Instance) -> f64 {
    let prices = unit_prices(instance);
    let demand = instance.total_demand().as_array();
    (0..3)
        .map(|r| demand[r] as f64 * prices[r])
        .fold(0.0, f64::max)
}

pub const EXACT_MAX_VMS: usize = 10;
const EXACT_NODE_LIMIT: u64 = 50_000_000;

#[allow(clippy::type_complexity)]
struct Search<'a> {
    instance: &'a Instance,
    order: Vec<usize>,
    /// Demand still to place after position k, per resource.
    suffix_demand: Vec<[u64; 3]>,
    /// Unit prices in hundredths.
    prices: [f64; 3],
    servers: Vec<(usize, Resources)>,
    assignment: Vec<usize>,
    used: Vec<u32>,
    best_cost: u64,
    /// Servers as `(type, load)` and the server chosen for each VM in search order.
    best: Option<(Vec<(usize, Resources)>, Vec<usize>)>,
    nodes: u64,
}

impl Search<'_> {
    fn bound(&self, k: usize) -> f64 {
        let mut residual = [0u64; 3];
        for (t, load) in &self.servers {
            let free = (self.instance.ps_types[*t].capacity - *load).as_array();
            for r in 0..3 {
                residual[r] += free[r];
            }
        }
        (0..3)
            .map(|r| self.suffix_demand[k][r].saturating_sub(residual[r]) as f64 * self.prices[r])
            .fold(0.0, f64::max)
    }

    fn dfs(&mut self, k: usize, cost: u64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > EXACT_NODE_LIMIT {
            return Err(Error::TooLargeForExact(format!(
                "more than {EXACT_NODE_LIMIT} search nodes"
            )));
        }
        if k == self.order.len() {
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best = Some((self.servers.clone(), self.assignment.clone()));
            }
            return Ok(());
        }
        // costs are whole hundredths, so a branch can only improve if its bound is
        // at least one hundredth below the incumbent
        if self.best_cost != u64::MAX
            && cost as f64 + self.bound(k) > self.best_cost as f64 - 1.0 + 1e-6
        {
            return Ok(());
        }
        let demand = self.instance.vms[self.order[k]].demand;
        for s in 0..self.servers.len() {
            let (t, load) = self.servers[s];
            if (load + demand).fits_in(&self.instance.ps_types[t].capacity) {
                self.servers[s].1 = load + demand;
                self.assignment.push(s);
                self.dfs(k + 1, cost)?;
                self.assignment.pop();
                self.servers[s].1 = load;
            }
        }
        for t in 0..self.instance.ps_types.len() {
            let ps = &self.instance.ps_types[t];
            if self.used[t] >= self.instance.ps_availability[t] || !demand.fits_in(&ps.capacity) {
                continue;
            }
            let next = cost + ps.cost.hundredths();
            if next >= self.best_cost {
                continue;
            }
            self.used[t] += 1;
            self.servers.push((t, demand));
            self.assignment.push(self.servers.len() - 1);
            self.dfs(k + 1, next)?;
            self.assignment.pop();
            self.servers.pop();
            self.used[t] -= 1;
        }
        Ok(())
    }
}

/// Exhaustive branch-and-bound over assignments of VMs to servers.
///
/// VMs are placed largest first; each may join any open server with room or
/// open a new server of any available type. New servers only ever start with
/// the VM being placed, so servers are implicitly ordered by their first VM.
pub fn exact_solve(instance: &Instance) -> Result<(Cost, Placement)> {
    let v = instance.num_vms();
    if v > EXACT_MAX_VMS {
        return Err(Error::TooLargeForExact(format!(
            "{v} VMs, limit is {EXACT_MAX_VMS}"
        )));
    }
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|a, b| {
        instance.vms[*b]
            .demand
            .cmp(&instance.vms[*a].demand)
            .then(a.cmp(b))
    });
    let mut suffix_demand = vec![[0u64; 3]; v + 1];
    for k in (0..v).rev() {
        let d = instance.vms[order[k]].demand.as_array();
        for r in 0..3 {
            suffix_demand[k][r] = suffix_demand[k + 1][r] + d[r];
        }
    }
    let prices = unit_prices(instance).map(|p| p * 100.0);
    let mut search = Search {
        instance,
        order,
        suffix_demand,
        prices,
        servers: Vec::new(),
        assignment: Vec::new(),
        used: vec![0; instance.ps_types.len()],
        best_cost: u64::MAX,
        best: None,
        nodes: 0,
    };
    search.dfs(0, 0)?;
    let Some((servers, assignment)) = search.best else {
        return Err(Error::Infeasible("no feasible placement exists".into()));
    };
    let mut placed: Vec<ActivatedPs> = servers
        .iter()
        .map(|(t, _)| ActivatedPs::empty(*t, &instance.ps_types[*t]))
        .collect();
    for (k, &s) in assignment.iter().enumerate() {
        let vm = search.order[k];
        placed[s].push(vm, instance.vms[vm].demand);
    }
    let placement = Placement::new(placed);
    Ok((placement.cost(), placement))
}
