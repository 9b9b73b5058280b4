//! Re-migration and merge: turn the best placement of every task into one
//! placement of the whole instance.

use crate::allocation::{greedy_allocate, server_has_surplus, Item};
use crate::domain::{Instance, Placement};
use crate::error::{Error, Result};

/// Keeps every server that is exhausted in at least one resource, releases the
/// rest, and backfills the released VMs onto fresh servers with the greedy
/// allocator.
///
/// `availability` is the total server pool per type; servers kept from the
/// inputs are charged against it before backfilling. Released VMs keep the
/// order they were popped in: task, then server, then position on the server.
pub fn remigrate_and_merge(
    instance: &Instance,
    best_per_task: &[Placement],
    availability: &[u32],
) -> Result<Placement> {
    let mut kept = Vec::new();
    let mut released: Vec<usize> = Vec::new();
    for placement in best_per_task {
        for server in &placement.servers {
            if server_has_surplus(server) {
                released.extend_from_slice(&server.vms);
            } else {
                kept.push(server.clone());
            }
        }
    }

    let mut remaining = availability.to_vec();
    for server in &kept {
        let slot = &mut remaining[server.ps_index];
        *slot = slot.checked_sub(1).ok_or(Error::BudgetExhausted {
            remaining: released.len(),
        })?;
    }

    let items: Vec<Item> = released
        .iter()
        .map(|&v| Item::new(v, instance.vms[v].demand))
        .collect();
    let backfill = greedy_allocate(&items, &instance.ps_types, &mut remaining)?;
    kept.extend(backfill.servers);
    Ok(Placement::new(kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        builtin_ps_types, generate_instance, vm_catalog, ActivatedPs, PsAvailability,
    };
    use crate::mfea::{self, MfeaConfig};
    use proptest::prelude::*;

    #[test]
    fn full_servers_pass_through() {
        let cat = vm_catalog();
        // 12 x (1,1,100) exactly fill General's disk
        let inst = Instance::new(vec![cat[0]; 24], builtin_ps_types(), vec![24; 3]).unwrap();
        let types = &inst.ps_types;
        let mk = |ids: std::ops::Range<usize>| {
            let mut s = ActivatedPs::empty(0, &types[0]);
            for i in ids {
                s.push(i, cat[0].demand);
            }
            Placement::new(vec![s])
        };
        let input = vec![mk(0..12), mk(12..24)];
        let merged = remigrate_and_merge(&inst, &input, &inst.ps_availability).unwrap();
        assert_eq!(
            merged.servers,
            input
                .iter()
                .flat_map(|p| p.servers.clone())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn two_surplus_servers_collapse_into_one() {
        let cat = vm_catalog();
        let inst = Instance::new(vec![cat[0]; 2], builtin_ps_types(), vec![2; 3]).unwrap();
        let mk = |i: usize| {
            let mut s = ActivatedPs::empty(0, &inst.ps_types[0]);
            s.push(i, cat[0].demand);
            Placement::new(vec![s])
        };
        let merged = remigrate_and_merge(&inst, &[mk(0), mk(1)], &inst.ps_availability).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.servers[0].vms, vec![0, 1]);
        assert_eq!(merged.cost().to_string(), "3.49");
    }

    #[test]
    fn kept_servers_charge_the_pool() {
        let cat = vm_catalog();
        let inst = Instance::new(vec![cat[0]; 13], builtin_ps_types(), vec![1, 0, 0]).unwrap();
        let mut full = ActivatedPs::empty(0, &inst.ps_types[0]);
        for i in 0..12 {
            full.push(i, cat[0].demand);
        }
        let mut lone = ActivatedPs::empty(0, &inst.ps_types[0]);
        lone.push(12, cat[0].demand);
        let r = remigrate_and_merge(
            &inst,
            &[Placement::new(vec![full]), Placement::new(vec![lone])],
            &[1, 0, 0],
        );
        assert!(matches!(r, Err(Error::BudgetExhausted { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn merge_conserves_vms(seed: u64, v in 20usize..300) {
            let inst = generate_instance(v, seed, PsAvailability::Unbounded).unwrap();
            let cfg = MfeaConfig { n_per_task: 20, individuals_per_task: 2, max_iterations: 2, seed, ..Default::default() };
            let out = mfea::run(&inst, &cfg).unwrap();
            let merged = remigrate_and_merge(&inst, &out.best_per_task, &inst.ps_availability).unwrap();
            merged.check(&inst, true).unwrap();
            // every exhausted input server survives verbatim
            for o in out.best_per_task.iter().flat_map(|p| p.servers.iter()).filter(|o| !server_has_surplus(o)) {
                prop_assert!(merged.servers.contains(o));
            }
        }
    }
}
