#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod case1;
pub mod case2;
pub mod error;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod output;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use model::*;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/case1.md")]
    mod case1 {}
    #[doc = include_str!("../../../book/src/case2.md")]
    mod case2 {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
