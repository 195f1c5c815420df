//! Registration, login, card distribution, messaging and the secret
//! information request flows.
//!
//! The [`Server`] and each [`Client`] are single-writer state machines fed
//! one [`Envelope`] at a time. Neither reads a clock: every handler takes
//! the current [`Timestamp`](crate::kdf::Timestamp) as an argument.

mod client;
mod envelope;
mod messaging;
mod server;

pub use client::{Client, ReceivedMessage, RejectionNotice};
pub use envelope::{
    AcceptFlags, AcceptRecord, Channel, DeviceDescriptor, Envelope, MsgType, Rejection,
    SERVER_EMAIL, SERVER_ENDPOINT, SERVER_SMS,
};
pub use messaging::{
    client_register_complete, receive_user_message, send_user_message, validate_email,
    validate_mobile, validate_name,
};
pub use server::{render_time, Server, ServerConfig, ServerState, TimedCode, UserRecord};
