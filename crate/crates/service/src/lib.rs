// SPDX-License-Identifier: MIT OR Apache-2.0

//! Annotation collection service: annotator registration, a scored
//! introduction on synthetic series, fair task assignment and an export
//! of the collected annotations.

pub mod error;
pub mod http;
pub mod service;
pub mod state;
pub mod store;

pub use error::ServiceError;
pub use http::{router, serve};
pub use service::{Service, ServiceConfig, RUBRIC};
pub use state::{Event, IntroStatus, State};
