//! Discrete superposition model of Gaussian relay networks and the lifting of
//! superposition-network codes to the Gaussian network.

pub mod channel;
pub mod dsn;
pub mod estimate;
pub mod gaussian;
pub mod lifting;
pub mod seed;
pub mod topology;
pub mod typicality;

#[cfg(test)]
mod fixtures;
