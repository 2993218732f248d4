pub mod resources;
pub mod schema;
pub mod consensus;
pub mod eval;
pub mod gateway;
pub mod inventory;
pub mod index;
pub mod pipeline;
pub mod verifier;
