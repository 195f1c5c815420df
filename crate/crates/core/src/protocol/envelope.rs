use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cards::CardError;
use crate::frame::FrameError;
use crate::kdf::{AuthRejection, Timestamp, UnreadableSignature};
use crate::rsa::RsaError;

/// Network endpoint of the authentication server.
pub const SERVER_ENDPOINT: &str = "server";
/// Sender address on server-originated email.
pub const SERVER_EMAIL: &str = "auth-server@mail.sim";
/// Sender id on server-originated SMS.
pub const SERVER_SMS: &str = "AUTHSRV";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Network,
    Email,
    Sms,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Network => "network",
            Channel::Email => "email",
            Channel::Sms => "sms",
        })
    }
}

impl FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "network" => Ok(Channel::Network),
            "email" => Ok(Channel::Email),
            "sms" => Ok(Channel::Sms),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

macro_rules! msg_types {
    ($($variant:ident => $channel:ident),* $(,)?) => {
        /// Every payload kind carried by the transport.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum MsgType {
            $($variant),*
        }

        impl MsgType {
            pub const ALL: &'static [MsgType] = &[$(MsgType::$variant),*];

            pub fn channel(self) -> Channel {
                match self {
                    $(MsgType::$variant => Channel::$channel),*
                }
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $(MsgType::$variant => stringify!($variant)),*
                }
            }
        }

        impl FromStr for MsgType {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $(stringify!($variant) => Ok(MsgType::$variant),)*
                    other => Err(format!("unknown message type {other:?}")),
                }
            }
        }
    };
}

msg_types! {
    RegisterRequest => Network,
    RegisterComplete => Network,
    LoginRequest => Network,
    LoginPrompt => Network,
    LoginAuth => Network,
    OtpSubmit => Network,
    LoginOk => Network,
    ActivateAccount => Network,
    AccountActivated => Network,
    CardRequest => Network,
    ServerKeyRequest => Network,
    PinResendRequest => Network,
    PinChangeRequest => Network,
    CardResendRequest => Network,
    ContactChangeRequest => Network,
    Rejected => Network,
    RegistrationEmail => Email,
    PrivateCardEmail => Email,
    PublicCardEmail => Email,
    PinChangeEmail => Email,
    BlockNotice => Email,
    RejectionEmail => Email,
    UserMessage => Email,
    MessageRejection => Email,
    ServerKeySms => Sms,
    OtpSms => Sms,
    ActivationSms => Sms,
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One transported message. The payload is always a framed envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub channel: Channel,
    pub msg_type: MsgType,
    pub sender: String,
    pub recipient: String,
    pub payload: Vec<u8>,
    pub sent_at: Timestamp,
}

impl Envelope {
    pub fn new(
        msg_type: MsgType,
        sender: impl Into<String>,
        recipient: impl Into<String>,
        payload: Vec<u8>,
        sent_at: Timestamp,
    ) -> Self {
        Self {
            channel: msg_type.channel(),
            msg_type,
            sender: sender.into(),
            recipient: recipient.into(),
            payload,
            sent_at,
        }
    }
}

/// Simulated metadata of the device an endpoint runs on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceDescriptor {
    pub name: String,
    pub address: String,
    pub provider: String,
}

impl DeviceDescriptor {
    pub fn unknown() -> Self {
        Self {
            name: "unknown".into(),
            address: "0.0.0.0".into(),
            provider: "unknown".into(),
        }
    }
}

/// Why a protocol step was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("unknown user id {0}")]
    UnknownUid(String),
    #[error("unknown recipient {0}")]
    UnknownRecipient(String),
    #[error("account is blocked")]
    Blacklisted,
    #[error("stale timestamp (delay {delay_ms} ms)")]
    Stale { delay_ms: i128 },
    #[error("digest mismatch")]
    DigestMismatch,
    #[error("wrong auth code")]
    WrongAuthCode,
    #[error("wrong OTP code")]
    WrongOtp,
    #[error("OTP code expired")]
    OtpExpired,
    #[error("wrong PIN")]
    WrongPin,
    #[error("wrong activation code")]
    WrongActivationCode,
    #[error("activation code expired; a new code was sent")]
    ActivationExpired,
    #[error("account is not blocked")]
    NotBlocked,
    #[error("email address already registered")]
    DuplicateEmail,
    #[error("invalid contact details: {0}")]
    InvalidContact(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("{0}")]
    UnreadableSignature(UnreadableSignature),
    #[error("no public card saved for {0}")]
    MissingCard(String),
    #[error("not logged in")]
    NotLoggedIn,
    #[error("no server public key known for {0}")]
    NoServerKey(String),
    #[error("no login in progress")]
    NoLoginPending,
    #[error("unexpected {0} message")]
    Unexpected(MsgType),
}

impl Rejection {
    /// Stable short code used in notices, logs and scenario expectations.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::UnknownUid(_) => "unknown-uid",
            Rejection::UnknownRecipient(_) => "unknown-recipient",
            Rejection::Blacklisted => "blacklisted",
            Rejection::Stale { .. } => "stale",
            Rejection::DigestMismatch => "digest-mismatch",
            Rejection::WrongAuthCode => "wrong-outh-code",
            Rejection::WrongOtp => "wrong-otp",
            Rejection::OtpExpired => "otp-expired",
            Rejection::WrongPin => "wrong-pin",
            Rejection::WrongActivationCode => "wrong-activation-code",
            Rejection::ActivationExpired => "activation-expired",
            Rejection::NotBlocked => "not-blocked",
            Rejection::DuplicateEmail => "duplicate-email",
            Rejection::InvalidContact(_) => "invalid-contact",
            Rejection::Malformed(_) => "malformed",
            Rejection::UnreadableSignature(_) => "unreadable-signature",
            Rejection::MissingCard(_) => "missing-card",
            Rejection::NotLoggedIn => "not-logged-in",
            Rejection::NoServerKey(_) => "no-server-key",
            Rejection::NoLoginPending => "no-login-pending",
            Rejection::Unexpected(_) => "unexpected-message",
        }
    }
}

impl From<AuthRejection> for Rejection {
    fn from(r: AuthRejection) -> Self {
        match r {
            AuthRejection::Malformed(s) => Rejection::Malformed(s),
            AuthRejection::DigestMismatch => Rejection::DigestMismatch,
            AuthRejection::Stale { delay_ms } => Rejection::Stale { delay_ms },
            AuthRejection::WrongAuthCode => Rejection::WrongAuthCode,
        }
    }
}

impl From<FrameError> for Rejection {
    fn from(e: FrameError) -> Self {
        Rejection::Malformed(e.to_string())
    }
}

impl From<RsaError> for Rejection {
    fn from(e: RsaError) -> Self {
        Rejection::Malformed(e.to_string())
    }
}

impl From<CardError> for Rejection {
    fn from(e: CardError) -> Self {
        Rejection::Malformed(e.to_string())
    }
}

impl From<UnreadableSignature> for Rejection {
    fn from(e: UnreadableSignature) -> Self {
        Rejection::UnreadableSignature(e)
    }
}

/// Recorded on every accept path that checks an authenticated message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptRecord {
    pub at: Timestamp,
    pub msg_type: MsgType,
    pub uid: String,
    pub digest_ok: bool,
    pub fresh_ok: bool,
}

/// Which checks an accepted message passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptFlags {
    pub digest_ok: bool,
    pub fresh_ok: bool,
}
