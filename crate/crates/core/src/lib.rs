pub mod bench;
pub mod bits;
pub mod dictionary;
pub mod error;
pub mod gadget;
pub mod hashing;
pub mod io_model;
pub mod reference;

pub use dictionary::{DictParams, Dictionary};
pub use error::{Error, Result};
pub use reference::{BaselineBufferTree, OracleMap};
