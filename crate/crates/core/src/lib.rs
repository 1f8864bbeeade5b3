pub mod pmem;
pub mod logalg;
pub mod stps;
pub mod harness;
