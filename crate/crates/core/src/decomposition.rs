//! Task decomposition: split an instance into small placement tasks, build the
//! unified space shared by all tasks, and decode unified genotypes back into
//! task-specific VM lists.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::domain::{Instance, Placement, Resources, VmType};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// One small placement task carved out of the full instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    /// 1-based task number.
    pub index: usize,
    /// Instance VM indices owned by this task, in assignment order.
    pub vms: Vec<usize>,
    pub vm_multiset: BTreeMap<VmType, u32>,
    /// Servers granted to this task, aligned with the instance's `ps_types`.
    pub ps_budget: Vec<u32>,
}

impl TaskSpec {
    pub fn from_vms(
        index: usize,
        instance: &Instance,
        vms: Vec<usize>,
        ps_budget: Vec<u32>,
    ) -> Self {
        let mut vm_multiset = BTreeMap::new();
        for &v in &vms {
            *vm_multiset.entry(instance.vms[v]).or_insert(0) += 1;
        }
        Self {
            index,
            vms,
            vm_multiset,
            ps_budget,
        }
    }

    pub fn len(&self) -> usize {
        self.vms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vms.is_empty()
    }

    /// Rewrites a placement over unified slot ids into one over instance VM
    /// indices. Slots of a given type are matched, in server order, to this
    /// task's VMs of that type.
    pub fn realize(
        &self,
        instance: &Instance,
        space: &UnifiedSpace,
        slot_placement: &Placement,
    ) -> Result<Placement> {
        let mut by_type: Vec<Vec<usize>> = vec![Vec::new(); space.types.len()];
        for &v in &self.vms {
            let t = space.type_index(&instance.vms[v]).ok_or_else(|| {
                Error::Internal(format!("vm {v} has a type missing from the unified space"))
            })?;
            by_type[t].push(v);
        }
        let mut cursor = vec![0usize; space.types.len()];
        let mut out = slot_placement.clone();
        for server in &mut out.servers {
            for id in &mut server.vms {
                let t = space.slots[*id] as usize;
                let vm = by_type[t].get(cursor[t]).ok_or_else(|| {
                    Error::Internal(format!("task {} over-allocated a type", self.index))
                })?;
                cursor[t] += 1;
                *id = *vm;
            }
        }
        Ok(out)
    }
}

/// Splits `instance` into `H = max(1, V / n_per_task)` tasks.
///
/// VMs are shuffled with the split stream of `seed` and sliced contiguously.
/// Tasks `1..H` get `V / H` VMs each, the last task also takes the remainder `V % H`.
/// Server budgets follow the same rule per server type.
pub fn split(instance: &Instance, n_per_task: usize, seed: u64) -> Result<Vec<TaskSpec>> {
    let v = instance.num_vms();
    if n_per_task == 0 {
        return Err(Error::InvalidConfig("task size must be positive".into()));
    }
    if n_per_task > v {
        return Err(Error::TaskSizeExceedsInstance {
            task_size: n_per_task,
            num_vms: v,
        });
    }
    let h = (v / n_per_task).max(1);
    let base = v / h;

    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(&mut rng::stream(seed, Stream::Split));

    let mut tasks = Vec::with_capacity(h);
    let mut start = 0;
    for i in 0..h {
        let last = i + 1 == h;
        let size = if last { base + v % h } else { base };
        let budget = instance
            .ps_availability
            .iter()
            .map(|&ps| {
                let ps = ps as usize;
                (if last { ps / h + ps % h } else { ps / h }) as u32
            })
            .collect();
        tasks.push(TaskSpec::from_vms(
            i + 1,
            instance,
            order[start..start + size].to_vec(),
            budget,
        ));
        start += size;
    }
    debug_assert_eq!(start, v);
    Ok(tasks)
}

/// The genotype space shared by all tasks: per VM type, the maximum count
/// found in any single task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifiedSpace {
    /// Distinct VM types in ascending order; a type's position is its dense index.
    pub types: Vec<VmType>,
    /// Per dense type, the maximum count over tasks.
    pub type_counts: Vec<u32>,
    /// Dense type of each slot, grouped by ascending type.
    pub slots: Vec<u16>,
    /// Per task, the required count of each dense type.
    pub task_demands: Vec<Vec<u32>>,
}

impl UnifiedSpace {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_demands.len()
    }

    pub fn type_index(&self, vm: &VmType) -> Option<usize> {
        self.types.binary_search(vm).ok()
    }

    #[inline]
    pub fn slot_type(&self, slot: usize) -> VmType {
        self.types[self.slots[slot] as usize]
    }

    #[inline]
    pub fn slot_demand(&self, slot: usize) -> Resources {
        self.types[self.slots[slot] as usize].demand
    }

    /// Unified multiset as a map, for comparisons in tests and reports.
    pub fn multiset(&self) -> BTreeMap<VmType, u32> {
        self.types
            .iter()
            .copied()
            .zip(self.type_counts.iter().copied())
            .filter(|(_, c)| *c > 0)
            .collect()
    }

    /// The canonical genotype: slot ids in ascending order.
    pub fn identity_order(&self) -> Vec<u32> {
        (0..self.slots.len() as u32).collect()
    }

    /// True when `order` is a permutation of all slot ids.
    pub fn is_permutation(&self, order: &[u32]) -> bool {
        if order.len() != self.slots.len() {
            return false;
        }
        let mut seen = vec![false; order.len()];
        for &s in order {
            match seen.get_mut(s as usize) {
                Some(flag) if !*flag => *flag = true,
                _ => return false,
            }
        }
        true
    }
}

pub fn build_unified_space(tasks: &[TaskSpec]) -> UnifiedSpace {
    let mut max_counts: BTreeMap<VmType, u32> = BTreeMap::new();
    for task in tasks {
        for (vm, &c) in &task.vm_multiset {
            let e = max_counts.entry(*vm).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let types: Vec<VmType> = max_counts.keys().copied().collect();
    let type_counts: Vec<u32> = max_counts.values().copied().collect();
    let slots = type_counts
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat_n(t as u16, c as usize))
        .collect();
    let task_demands = tasks
        .iter()
        .map(|task| {
            types
                .iter()
                .map(|vm| task.vm_multiset.get(vm).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    UnifiedSpace {
        types,
        type_counts,
        slots,
        task_demands,
    }
}

/// Keeps, in scan order, the first slots of each type until the task's
/// per-type demand is met. Returns the selected slot ids.
pub fn decode(space: &UnifiedSpace, order: &[u32], task: usize) -> Result<Vec<u32>> {
    let mut need = space
        .task_demands
        .get(task)
        .ok_or_else(|| Error::Internal(format!("no task {task} in unified space")))?
        .clone();
    let mut remaining: u64 = need.iter().map(|&c| c as u64).sum();
    let mut out = Vec::with_capacity(remaining as usize);
    for &slot in order {
        if remaining == 0 {
            break;
        }
        let t = space.slots[slot as usize] as usize;
        if need[t] > 0 {
            need[t] -= 1;
            remaining -= 1;
            out.push(slot);
        }
    }
    if remaining > 0 {
        return Err(Error::Internal(format!(
            "unified genotype cannot satisfy task {task}: {remaining} VMs missing"
        )));
    }
    Ok(out)
}
