pub mod anchors;
pub mod balance;
pub mod crop;
pub mod evaluate;
pub mod merge;
pub mod split;
pub mod stats;
pub mod synth;
pub mod tile;
