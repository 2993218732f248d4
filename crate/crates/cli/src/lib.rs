pub mod api;
pub mod query_args;

pub use api::{router, AppState};
