pub mod bench;
pub mod certificates;
pub mod data;
pub mod geometry;
pub mod lasso;
pub mod pipeline;
pub mod random_model;
pub mod rng;
