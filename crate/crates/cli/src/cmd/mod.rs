pub mod analyze;
pub mod bench;
pub mod checkpoint;
pub mod consume;
pub mod serve;
pub mod simulate;
