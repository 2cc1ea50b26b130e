pub mod diag;
pub mod filters;
pub mod linalg;
pub mod models;
pub mod pipeline;
pub mod sim;
pub mod state;
