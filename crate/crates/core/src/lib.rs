//! Numerical machinery for Schrödinger propagation on step-2 nilpotent Lie groups.

pub mod error;
pub mod fourier;
pub mod hardy;
pub mod kernels;
pub mod lie;
pub mod linalg;
pub mod propagate;
pub mod symplectic;
pub mod twisted;

pub use error::{Error, Result};

/// The guide in `book/`, compiled here so that its examples run as doc-tests.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/ch1-algebras.md")]
    pub mod ch1 {}
    #[doc = include_str!("../../../book/src/ch2-frames.md")]
    pub mod ch2 {}
    #[doc = include_str!("../../../book/src/ch3-kernels.md")]
    pub mod ch3 {}
    #[doc = include_str!("../../../book/src/ch4-twisted.md")]
    pub mod ch4 {}
    #[doc = include_str!("../../../book/src/ch5-propagation.md")]
    pub mod ch5 {}
    #[doc = include_str!("../../../book/src/ch6-hardy.md")]
    pub mod ch6 {}
    #[doc = include_str!("../../../book/src/ch7-cli.md")]
    pub mod ch7 {}
}
