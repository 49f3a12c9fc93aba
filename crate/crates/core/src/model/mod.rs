//! Hierarchical models for observed (P, T, CC, D) counts.

mod large_p;
mod single_group;
mod small_p;
mod types;

pub use large_p::{log_density_large_p, odds_ratio_approx, LargeModel};
pub use single_group::{single_group_ifr, SingleGroupFit, SingleGroupModel};
pub use small_p::{log_density_small_p, SmallModel};
pub use types::{covariate_dims, GlobalParameters, GroupObservation, LatentState, PriorConfig};
