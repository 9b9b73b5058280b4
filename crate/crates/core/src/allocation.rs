//! Greedy allocation operator.
//!
//! Each round opens one trial server per server type that still has budget,
//! fills it first-fit in list order, and commits the trial with the highest
//! comprehensive utilization. Committed VMs leave the list; the loop runs until
//! the list is empty.

use crate::domain::{utilization_of, ActivatedPs, Placement, PsType, Resources};
use crate::error::{Error, Result};

/// A VM to be placed: an opaque identifier plus its demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Item {
    pub id: usize,
    pub demand: Resources,
}

impl Item {
    pub fn new(id: usize, demand: Resources) -> Self {
        Self { id, demand }
    }
}

/// A candidate server filled during one greedy round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFill {
    pub ps_index: usize,
    /// Positions in the current VM list, ascending.
    pub loaded: Vec<usize>,
    pub load: Resources,
    pub utilization: f64,
}

/// First-fit scan of `list` into an empty server with `capacity`.
///
/// `suffix_min[j]` is the component-wise minimum demand over `list[j..]`; the
/// scan stops as soon as that minimum no longer fits the residual capacity,
/// which gives the same result as scanning to the end.
fn trial_fill(
    ps_index: usize,
    capacity: Resources,
    list: &[Item],
    suffix_min: &[Resources],
) -> TrialFill {
    let mut residual = capacity;
    let mut loaded = Vec::new();
    for (j, item) in list.iter().enumerate() {
        if !suffix_min[j].fits_in(&residual) {
            break;
        }
        if item.demand.fits_in(&residual) {
            residual -= item.demand;
            loaded.push(j);
        }
    }
    let load = capacity - residual;
    TrialFill {
        ps_index,
        loaded,
        load,
        utilization: utilization_of(&load, &capacity),
    }
}

/// Places every item of `items` onto newly activated servers.
///
/// `budget[t]` is the number of servers of `ps_types[t]` still available and
/// is decremented for every committed server. Ties in utilization go to the
/// cheaper server type, then to the lower type index.
pub fn greedy_allocate(
    items: &[Item],
    ps_types: &[PsType],
    budget: &mut [u32],
) -> Result<Placement> {
    assert_eq!(
        ps_types.len(),
        budget.len(),
        "budget must cover every server type"
    );
    for item in items {
        let fits_any = ps_types
            .iter()
            .zip(budget.iter())
            .any(|(t, &b)| b > 0 && item.demand.fits_in(&t.capacity));
        if !fits_any {
            let fits_capacity = ps_types.iter().any(|t| item.demand.fits_in(&t.capacity));
            return Err(if fits_capacity && budget.iter().all(|&b| b == 0) {
                Error::BudgetExhausted {
                    remaining: items.len(),
                }
            } else {
                Error::UnplaceableVm { id: item.id }
            });
        }
    }

    let mut list: Vec<Item> = items.to_vec();
    let mut suffix_min: Vec<Resources> = Vec::with_capacity(list.len() + 1);
    let mut servers = Vec::new();
    let mut taken: Vec<bool> = Vec::with_capacity(list.len());

    while !list.is_empty() {
        suffix_min.clear();
        suffix_min.resize(list.len() + 1, Resources::new(u32::MAX, u32::MAX, u32::MAX));
        for j in (0..list.len()).rev() {
            suffix_min[j] = suffix_min[j + 1].elementwise_min(&list[j].demand);
        }

        let mut best: Option<TrialFill> = None;
        for (t, ps) in ps_types.iter().enumerate() {
            if budget[t] == 0 {
                continue;
            }
            let fill = trial_fill(t, ps.capacity, &list, &suffix_min);
            if fill.loaded.is_empty() {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    fill.utilization > b.utilization
                        || (fill.utilization == b.utilization
                            && ps.cost < ps_types[b.ps_index].cost)
                }
            };
            if better {
                best = Some(fill);
            }
        }

        let Some(fill) = best else {
            return Err(Error::BudgetExhausted {
                remaining: list.len(),
            });
        };

        let ps = &ps_types[fill.ps_index];
        let mut server = ActivatedPs::empty(fill.ps_index, ps);
        taken.clear();
        taken.resize(list.len(), false);
        for &j in &fill.loaded {
            server.push(list[j].id, list[j].demand);
            taken[j] = true;
        }
        debug_assert_eq!(server.load, fill.load);
        let mut k = 0;
        list.retain(|_| {
            let keep = !taken[k];
            k += 1;
            keep
        });
        budget[fill.ps_index] -= 1;
        servers.push(server);
    }
    Ok(Placement::new(servers))
}

/// True iff the server has spare CPU, RAM and disk.
pub fn server_has_surplus(server: &ActivatedPs) -> bool {
    server.residual().all_positive()
}
