pub mod acceptance;
pub mod analysis;
pub mod energy;
pub mod exec;
pub mod grid;
pub mod solver;
pub mod specfun;
