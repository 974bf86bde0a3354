pub mod eval;
pub mod gen;
pub mod render;
pub mod report;
pub mod train;
pub mod warp;
