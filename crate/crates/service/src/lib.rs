//! Collection service: runs the participant protocol over HTTP and persists
//! sessions and uploads to a directory store.

pub mod api;
pub mod export;
pub mod service;
pub mod store;
pub mod synthetic;

pub use api::{router, serve};
pub use export::{export_views, ExportFilter, ExportSummary};
pub use service::{Catalog, CaptchaItem, Clock, Service, ServiceConfig, ServiceError};
pub use store::{FileStore, SessionRecord, StoreError};
