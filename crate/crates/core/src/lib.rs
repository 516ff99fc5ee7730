pub mod gp;
pub mod lang;
pub mod model;
pub mod monitor;
pub mod search;
pub mod sim;
pub mod smc;
