mod baseline;
mod oracle;

pub use baseline::{BaselineBufferTree, BaselineStats};
pub use oracle::OracleMap;
