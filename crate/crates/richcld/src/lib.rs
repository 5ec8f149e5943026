pub mod bcrl;
pub mod cover;
pub mod criee;
pub mod decoder;
pub mod env;
pub mod error;
pub mod golf;
pub mod harness;
pub mod lipschitz;
pub mod offline;
pub mod pseudobackup;
pub mod rng;
pub mod tabular;
