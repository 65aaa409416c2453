pub mod barycenter;
pub mod decomp_embed;
pub mod error;
pub mod fixed_point;
pub mod graph;
pub mod markov;
pub mod poincare;
pub mod random_group;
pub mod seed;
pub mod spaces;

pub use error::{Error, Result};
