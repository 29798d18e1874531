//! Floating-point summation error laboratory.
//!
//! Summation algorithms run on emulated binary formats with every roundoff
//! recorded against a wide-precision oracle. The recorded roundoffs feed exact
//! error expressions, a priori bounds and the experiment drivers.

pub mod algorithms;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod expressions;
pub mod fpmodel;
pub mod sumtree;
pub mod wide;

pub use algorithms::{compensated_sum, exact_sum, general_sum, shifted_sum, Algorithm, RunTrace};
pub use error::{Error, RangeError, Result};
pub use fpmodel::{Emulator, FpFormat, Label, Roundoff, RoundoffKind, RoundoffLog, RoundingMode, StreamId};
pub use sumtree::{pairwise_tree, random_tree, sequential_tree, Child, SumTree, TreeKind};
pub use wide::WideReal;
