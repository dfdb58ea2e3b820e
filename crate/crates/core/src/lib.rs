pub mod error;
pub mod head;
pub mod losses;
pub mod special_math;
pub mod uncertainty;
pub mod network;
pub mod rng;
pub mod data;
pub mod codebook;
pub mod io;
pub mod trainer;
