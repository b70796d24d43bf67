//! Power prior and normalized power prior analysis for historical-data
//! borrowing, with simulation-based sample size determination.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod glm;
pub mod mcmc;
pub mod model;
pub mod normconst;
pub mod quadrature;
pub mod rng;
pub mod routing;
pub mod special;
pub mod two_group;

pub use error::{PpdError, Result};
pub use model::{EndpointSpec, Family, Link};
pub use rng::RngStream;
