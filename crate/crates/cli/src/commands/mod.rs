pub mod device;
pub mod energy;
pub mod eval;
pub mod train;
