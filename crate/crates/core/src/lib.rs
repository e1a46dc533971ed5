pub mod bessel;
pub mod config;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod floquet;
pub mod model;
pub mod rwa;
pub mod sweep;
pub mod verify;
