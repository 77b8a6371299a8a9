pub mod oracles;
pub mod setup;
