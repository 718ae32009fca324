//! Multi-user service around the famrisk engine: accounts and sessions,
//! durable pedigree storage, a FIFO run queue with completion estimates,
//! report bundles and the HTTP API.

pub mod api;
pub mod auth;
pub mod bench;
pub mod bundle;
mod error;
pub mod service;
pub mod store;

pub use auth::{Role, UserAccount, UserView};
pub use error::{ServiceError, ServiceResult};
pub use service::{Caller, JobStatus, LoginGrant, Notification, Notifier, RunJob, Service, ServiceConfig};
pub use store::{Collection, FileStore, MemoryStore, Store};
