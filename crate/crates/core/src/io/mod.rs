pub mod config;
pub mod trajectory;
