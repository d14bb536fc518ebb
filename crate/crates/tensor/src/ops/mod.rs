pub mod activation;
pub mod conv;
pub mod deform;
pub mod dynamic;
pub mod elementwise;
pub mod loss;
pub mod norm;
pub mod pool;
