//! Value types for virtual machines, physical servers, problem instances and
//! placements, plus the synthetic instance generator.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A CPU / RAM / disk triple. CPU in cores, RAM and disk in GB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Resources {
    pub cpu: u32,
    pub ram: u32,
    pub disk: u32,
}

impl Resources {
    pub const ZERO: Resources = Resources {
        cpu: 0,
        ram: 0,
        disk: 0,
    };

    pub const fn new(cpu: u32, ram: u32, disk: u32) -> Self {
        Self { cpu, ram, disk }
    }

    /// True when `self` fits inside `available` in every resource.
    #[inline]
    pub fn fits_in(&self, available: &Resources) -> bool {
        self.cpu <= available.cpu && self.ram <= available.ram && self.disk <= available.disk
    }

    /// True when every component is strictly positive.
    #[inline]
    pub fn all_positive(&self) -> bool {
        self.cpu > 0 && self.ram > 0 && self.disk > 0
    }

    /// Component-wise minimum.
    #[inline]
    pub fn elementwise_min(&self, other: &Resources) -> Resources {
        Resources {
            cpu: self.cpu.min(other.cpu),
            ram: self.ram.min(other.ram),
            disk: self.disk.min(other.disk),
        }
    }

    pub fn as_array(&self) -> [u64; 3] {
        [self.cpu as u64, self.ram as u64, self.disk as u64]
    }
}

impl Add for Resources {
    type Output = Resources;
    fn add(self, rhs: Resources) -> Resources {
        Resources::new(self.cpu + rhs.cpu, self.ram + rhs.ram, self.disk + rhs.disk)
    }
}

impl AddAssign for Resources {
    fn add_assign(&mut self, rhs: Resources) {
        *self = *self + rhs;
    }
}

impl Sub for Resources {
    type Output = Resources;
    fn sub(self, rhs: Resources) -> Resources {
        Resources::new(self.cpu - rhs.cpu, self.ram - rhs.ram, self.disk - rhs.disk)
    }
}

impl SubAssign for Resources {
    fn sub_assign(&mut self, rhs: Resources) {
        *self = *self - rhs;
    }
}

/// Deployment cost held as integer hundredths so that sums and comparisons are exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cost(pub u64);

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub const fn from_hundredths(h: u64) -> Self {
        Cost(h)
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for Cost {
    type Err = Error;

    /// Parses a non-negative decimal with at most two fractional digits.
    fn from_str(s: &str) -> Result<Cost> {
        let bad = || Error::Parse(format!("invalid cost `{s}`"));
        let s = s.trim();
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() || frac.len() > 2 || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: u64 = int.parse().map_err(|_| bad())?;
        let mut cents: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        if frac.len() == 1 {
            cents *= 10;
        }
        Ok(Cost(whole * 100 + cents))
    }
}

/// A VM configuration. Two VMs with the same `type_id` are interchangeable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VmType {
    pub type_id: u16,
    pub demand: Resources,
}

/// A physical server configuration with its activation cost.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PsType {
    pub type_id: u16,
    pub name: String,
    pub capacity: Resources,
    pub cost: Cost,
}

impl PsType {
    pub fn new(type_id: u16, name: &str, capacity: Resources, cost: Cost) -> Result<Self> {
        if !capacity.all_positive() {
            return Err(Error::InvalidInstance(format!(
                "server type {type_id} must have positive capacity in every resource"
            )));
        }
        if cost == Cost::ZERO {
            return Err(Error::InvalidInstance(format!(
                "server type {type_id} must have positive cost"
            )));
        }
        if !valid_name(name) {
            return Err(Error::InvalidInstance(format!(
                "server type name {name:?} must be non-empty without commas, '#' or surrounding whitespace"
            )));
        }
        Ok(Self {
            type_id,
            name: name.to_string(),
            capacity,
            cost,
        })
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.trim() == name && !name.contains([',', '#', '\n', '\r'])
}

const VM_CPU_STEPS: [u32; 5] = [1, 2, 4, 8, 16];
const VM_DISK_STEPS: [u32; 5] = [100, 200, 300, 400, 500];

/// The 100 VM configurations used for synthetic data sets, in type-id order.
///
/// Every CPU size is offered with 1, 2, 4 and 8 GB of RAM per core, each with
/// disks of 100 to 500 GB in 100 GB steps.
pub fn vm_catalog() -> &'static [VmType] {
    static CATALOG: OnceLock<Vec<VmType>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let mut out = Vec::with_capacity(100);
        for &cpu in &VM_CPU_STEPS {
            for ram_mult in [1u32, 2, 4, 8] {
                for &disk in &VM_DISK_STEPS {
                    out.push(VmType {
                        type_id: out.len() as u16 + 1,
                        demand: Resources::new(cpu, cpu * ram_mult, disk),
                    });
                }
            }
        }
        out
    })
}

/// The three heterogeneous server types: General, LargeRAM and HighPerformance.
pub fn builtin_ps_types() -> Vec<PsType> {
    vec![
        PsType {
            type_id: 1,
            name: "General".into(),
            capacity: Resources::new(56, 128, 1200),
            cost: Cost(349),
        },
        PsType {
            type_id: 2,
            name: "LargeRAM".into(),
            capacity: Resources::new(84, 256, 2400),
            cost: Cost(436),
        },
        PsType {
            type_id: 3,
            name: "HighPerformance".into(),
            capacity: Resources::new(112, 192, 3600),
            cost: Cost(545),
        },
    ]
}

/// How many servers of each type the generator makes available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsAvailability {
    /// One server per VM for every type, enough for any placement.
    Unbounded,
    PerType(u32),
}

/// A static placement problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    /// VM requests; a VM's index in this list is its identity.
    pub vms: Vec<VmType>,
    pub ps_types: Vec<PsType>,
    /// Number of available servers, aligned with `ps_types`.
    pub ps_availability: Vec<u32>,
}

impl Instance {
    pub fn new(vms: Vec<VmType>, ps_types: Vec<PsType>, ps_availability: Vec<u32>) -> Result<Self> {
        let inst = Self {
            vms,
            ps_types,
            ps_availability,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ps_types.is_empty() {
            return Err(Error::InvalidInstance(
                "at least one server type is required".into(),
            ));
        }
        if self.ps_availability.len() != self.ps_types.len() {
            return Err(Error::InvalidInstance(format!(
                "{} availability counts for {} server types",
                self.ps_availability.len(),
                self.ps_types.len()
            )));
        }
        let mut seen = BTreeMap::new();
        for t in &self.ps_types {
            if seen.insert(t.type_id, ()).is_some() {
                return Err(Error::InvalidInstance(format!(
                    "duplicate server type id {}",
                    t.type_id
                )));
            }
            if !t.capacity.all_positive() || t.cost == Cost::ZERO {
                return Err(Error::InvalidInstance(format!(
                    "server type {} is degenerate",
                    t.type_id
                )));
            }
            if !valid_name(&t.name) {
                return Err(Error::InvalidInstance(format!(
                    "server type {} has an unusable name",
                    t.type_id
                )));
            }
        }
        let mut demands: BTreeMap<u16, Resources> = BTreeMap::new();
        for vm in &self.vms {
            match demands.insert(vm.type_id, vm.demand) {
                Some(prev) if prev != vm.demand => {
                    return Err(Error::InvalidInstance(format!(
                        "vm type {} appears with two different demands",
                        vm.type_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn num_vms(&self) -> usize {
        self.vms.len()
    }

    pub fn total_demand(&self) -> Resources {
        self.vms
            .iter()
            .fold(Resources::ZERO, |acc, vm| acc + vm.demand)
    }

    /// Index of the server type with the given id.
    pub fn ps_index(&self, type_id: u16) -> Option<usize> {
        self.ps_types.iter().position(|t| t.type_id == type_id)
    }
}

/// Draws `num_vms` VMs uniformly from [`vm_catalog`] and pairs them with
/// [`builtin_ps_types`]. The output is a pure function of `(num_vms, seed, availability)`.
pub fn generate_instance(
    num_vms: usize,
    seed: u64,
    availability: PsAvailability,
) -> Result<Instance> {
    if num_vms == 0 {
        return Err(Error::InvalidInstance(
            "an instance needs at least one VM".into(),
        ));
    }
    let catalog = vm_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vms = (0..num_vms)
        .map(|_| catalog[rng.gen_range(0..catalog.len())])
        .collect();
    let ps_types = builtin_ps_types();
    let count = match availability {
        PsAvailability::Unbounded => u32::try_from(num_vms).unwrap_or(u32::MAX),
        PsAvailability::PerType(c) => c,
    };
    let ps_availability = vec![count; ps_types.len()];
    Instance::new(vms, ps_types, ps_availability)
}

/// One activated server. `vms` holds identifiers whose meaning depends on the
/// context: VM indices into [`Instance::vms`] for final placements, unified-space
/// slot ids for the phenotypes produced inside the evolutionary engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivatedPs {
    /// Index into the owning instance's `ps_types`.
    pub ps_index: usize,
    pub capacity: Resources,
    pub cost: Cost,
    pub load: Resources,
    pub vms: Vec<usize>,
}

impl ActivatedPs {
    pub fn empty(ps_index: usize, ps: &PsType) -> Self {
        Self {
            ps_index,
            capacity: ps.capacity,
            cost: ps.cost,
            load: Resources::ZERO,
            vms: Vec::new(),
        }
    }

    pub fn residual(&self) -> Resources {
        self.capacity - self.load
    }

    pub fn push(&mut self, id: usize, demand: Resources) {
        self.load += demand;
        self.vms.push(id);
    }

    /// Comprehensive utilization with equal weights on CPU, RAM and disk.
    pub fn utilization(&self) -> f64 {
        utilization_of(&self.load, &self.capacity)
    }
}

#[inline]
pub(crate) fn utilization_of(load: &Resources, capacity: &Resources) -> f64 {
    (load.cpu as f64 / capacity.cpu as f64
        + load.ram as f64 / capacity.ram as f64
        + load.disk as f64 / capacity.disk as f64)
        / 3.0
}

/// A set of activated servers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Placement {
    pub servers: Vec<ActivatedPs>,
}

/// Cluster-level utilization: aggregate load over aggregate capacity per resource.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterUtilization {
    pub cpu: f64,
    pub ram: f64,
    pub disk: f64,
    pub comprehensive: f64,
    /// Set when the placement has no servers; all values are then zero.
    pub empty: bool,
}

impl Placement {
    pub fn new(servers: Vec<ActivatedPs>) -> Self {
        Self { servers }
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }

    pub fn cost(&self) -> Cost {
        self.servers.iter().map(|s| s.cost).sum()
    }

    pub fn utilization(&self) -> ClusterUtilization {
        if self.servers.is_empty() {
            return ClusterUtilization {
                cpu: 0.0,
                ram: 0.0,
                disk: 0.0,
                comprehensive: 0.0,
                empty: true,
            };
        }
        let (load, cap) =
            self.servers
                .iter()
                .fold((Resources::ZERO, [0u64; 3]), |(l, mut c), s| {
                    c[0] += s.capacity.cpu as u64;
                    c[1] += s.capacity.ram as u64;
                    c[2] += s.capacity.disk as u64;
                    (l + s.load, c)
                });
        let cpu = load.cpu as f64 / cap[0] as f64;
        let ram = load.ram as f64 / cap[1] as f64;
        let disk = load.disk as f64 / cap[2] as f64;
        ClusterUtilization {
            cpu,
            ram,
            disk,
            comprehensive: (cpu + ram + disk) / 3.0,
            empty: false,
        }
    }

    /// Number of activated servers per server-type index.
    pub fn servers_per_type(&self, num_types: usize) -> Vec<u32> {
        let mut counts = vec![0u32; num_types];
        for s in &self.servers {
            counts[s.ps_index] += 1;
        }
        counts
    }

    pub fn vm_count(&self) -> usize {
        self.servers.iter().map(|s| s.vms.len()).sum()
    }

    /// Checks the placement against `instance`: loads match the VMs, capacities
    /// hold, no server is empty, no VM is placed twice, per-type counts stay within
    /// availability, and (when `complete`) every VM is placed.
    pub fn check(&self, instance: &Instance, complete: bool) -> Result<()> {
        let mut seen = vec![false; instance.vms.len()];
        for (k, s) in self.servers.iter().enumerate() {
            let ps = instance.ps_types.get(s.ps_index).ok_or_else(|| {
                Error::Infeasible(format!("server {k} has unknown type index {}", s.ps_index))
            })?;
            if ps.capacity != s.capacity || ps.cost != s.cost {
                return Err(Error::Infeasible(format!(
                    "server {k} disagrees with its type definition"
                )));
            }
            if s.vms.is_empty() {
                return Err(Error::Infeasible(format!(
                    "server {k} is activated but empty"
                )));
            }
            let mut load = Resources::ZERO;
            for &vm in &s.vms {
                let slot = seen.get_mut(vm).ok_or_else(|| {
                    Error::Infeasible(format!("server {k} holds unknown vm {vm}"))
                })?;
                if *slot {
                    return Err(Error::Infeasible(format!(
                        "vm {vm} is placed more than once"
                    )));
                }
                *slot = true;
                load += instance.vms[vm].demand;
            }
            if load != s.load {
                return Err(Error::Infeasible(format!(
                    "server {k} load bookkeeping is wrong"
                )));
            }
            if !load.fits_in(&s.capacity) {
                return Err(Error::Infeasible(format!(
                    "server {k} exceeds its capacity"
                )));
            }
        }
        for (idx, (&used, &avail)) in self
            .servers_per_type(instance.ps_types.len())
            .iter()
            .zip(&instance.ps_availability)
            .enumerate()
        {
            if used > avail {
                return Err(Error::Infeasible(format!(
                    "{used} servers of type {} activated but only {avail} available",
                    instance.ps_types[idx].type_id
                )));
            }
        }
        if complete {
            if let Some(vm) = seen.iter().position(|s| !s) {
                return Err(Error::Infeasible(format!("vm {vm} is not placed")));
            }
        }
        Ok(())
    }
}
