pub mod cli;
pub mod dataset;
pub mod linalg;
pub mod metric;
pub mod regress;
pub mod resample;
pub mod simulate;
pub mod spline;
pub mod vimp;
