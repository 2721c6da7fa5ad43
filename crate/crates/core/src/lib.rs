pub mod conic;
pub mod error;
pub mod experiment;
pub mod mathcore;
pub mod model;
pub mod optimal;
pub mod oracle;
pub mod robust;
pub mod subopt;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/robust.md")]
    mod robust {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
