use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("task size {task_size} exceeds instance of {num_vms} VMs")]
    TaskSizeExceedsInstance { task_size: usize, num_vms: usize },

    #[error("unplaceable VM {id}: it fits no available server type")]
    UnplaceableVm { id: usize },

    #[error("PS budget exhausted with {remaining} VMs left to place")]
    BudgetExhausted { remaining: usize },

    #[error("instance too large for exact solver: {0}")]
    TooLargeForExact(String),

    #[error("infeasible placement: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
