// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

pub mod amq;
pub mod analysis;
pub mod attacks;
pub mod bloom;
pub mod cuckoo;
pub mod error;
pub mod games;
pub mod prf;

pub use error::{Error, Result};
