//! Guide chapters compiled as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/search-space.md")]
pub mod search_space {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/net2net.md")]
pub mod net2net {}

#[doc = include_str!("../../../book/src/nsga2.md")]
pub mod nsga2 {}

#[doc = include_str!("../../../book/src/controller.md")]
pub mod controller {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
