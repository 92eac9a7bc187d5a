//! Activity priors and interference-power moments.

pub mod moments;
pub mod mvb;

pub use moments::{
    interference_moments, interference_moments_coop, interference_moments_disk, interference_moments_noncoop,
    ApMoments, InterferenceMoments,
};
pub use mvb::{MvbPrior, PriorKind};
