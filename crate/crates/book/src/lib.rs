//! Compiles every code listing of the guide in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/field.md")]
pub mod field {}
#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}
#[doc = include_str!("../../../book/src/correlation.md")]
pub mod correlation {}
#[doc = include_str!("../../../book/src/smearing.md")]
pub mod smearing {}
#[doc = include_str!("../../../book/src/multiphoton.md")]
pub mod multiphoton {}
#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
