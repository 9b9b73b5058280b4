//! Deployment-cost virtual machine placement for large data centres.
//!
//! The main solver splits the VM list into small tasks, evolves all tasks in
//! one population over a shared genotype space ([`mfea`]), places VMs with a
//! utilization-greedy allocator ([`allocation`]) and merges the per-task
//! answers ([`consolidation`]). [`baselines`] holds comparison solvers and
//! oracles, [`bench`] the experiment harness behind the `mfvmp` binary.

pub mod allocation;
pub mod baselines;
pub mod bench;
pub mod consolidation;
pub mod decomposition;
pub mod domain;
pub mod error;
pub mod format;
pub mod mfea;
pub mod rng;

pub use domain::{
    builtin_ps_types, generate_instance, vm_catalog, ActivatedPs, ClusterUtilization, Cost,
    Instance, Placement, PsAvailability, PsType, Resources, VmType,
};
pub use error::{Error, Result};
pub use mfea::MfeaConfig;
