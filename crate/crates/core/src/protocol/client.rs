//! A user's device: holds the encrypted private card and saved public
//! cards, reacts to email and SMS, and issues requests to the server.

use std::collections::BTreeMap;

use crate::cards::{decrypt_private_card, PrivateCard, PublicCard};
use crate::frame;
use crate::kdf::{
    build_auth_message, compute_outh_code, derive_secret_key, AuthCode, FreshnessWindow, Timestamp,
};
use crate::rsa::{decrypt_bytes, encrypt_bytes, RsaPublicKey};

use super::envelope::{AcceptRecord, Envelope, MsgType, Rejection, SERVER_ENDPOINT};
use super::messaging::{client_register_complete, receive_user_message, send_user_message};

/// A message that passed every receive check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedMessage {
    pub from_uid: String,
    pub body: Vec<u8>,
    pub at: Timestamp,
}

/// A refusal notice received from the server or a correspondent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectionNotice {
    pub code: String,
    pub context: String,
}

#[derive(Debug, Clone)]
pub struct Client {
    pub actor: String,
    pub name: String,
    pub email: String,
    pub mobile: String,
    pub endpoint: String,
    pub window: FreshnessWindow,
    uid: Option<String>,
    pin: Option<String>,
    registration_blob: Option<Vec<u8>>,
    server_pub: Option<RsaPublicKey>,
    /// Server keys for other uids, learned out of band.
    known_server_keys: BTreeMap<String, RsaPublicKey>,
    private_card_blob: Option<Vec<u8>>,
    saved_public_cards: BTreeMap<String, PublicCard>,
    session: bool,
    pending_login: Option<(String, String)>,
    pending_contact: Option<(String, String)>,
    last_otp: Option<String>,
    last_activation_code: Option<String>,
    messages: Vec<ReceivedMessage>,
    rejections: Vec<RejectionNotice>,
    outbox: Vec<Envelope>,
    accept_log: Vec<AcceptRecord>,
}

impl Client {
    pub fn new(
        actor: &str,
        name: &str,
        email: &str,
        mobile: &str,
        window: FreshnessWindow,
    ) -> Self {
        Self {
            actor: actor.to_string(),
            name: name.to_string(),
            email: email.to_string(),
            mobile: mobile.to_string(),
            endpoint: format!("dev-{actor}"),
            window,
            uid: None,
            pin: None,
            registration_blob: None,
            server_pub: None,
            known_server_keys: BTreeMap::new(),
            private_card_blob: None,
            saved_public_cards: BTreeMap::new(),
            session: false,
            pending_login: None,
            pending_contact: None,
            last_otp: None,
            last_activation_code: None,
            messages: Vec::new(),
            rejections: Vec::new(),
            outbox: Vec::new(),
            accept_log: Vec::new(),
        }
    }

    pub fn uid(&self) -> Option<&str> {
        self.uid.as_deref()
    }

    pub fn pin(&self) -> Option<&str> {
        self.pin.as_deref()
    }

    pub fn server_pub(&self) -> Option<RsaPublicKey> {
        self.server_pub
    }

    pub fn is_logged_in(&self) -> bool {
        self.session
    }

    pub fn last_otp(&self) -> Option<&str> {
        self.last_otp.as_deref()
    }

    pub fn last_activation_code(&self) -> Option<&str> {
        self.last_activation_code.as_deref()
    }

    pub fn private_card_blob(&self) -> Option<&[u8]> {
        self.private_card_blob.as_deref()
    }

    pub fn saved_public_cards(&self) -> &BTreeMap<String, PublicCard> {
        &self.saved_public_cards
    }

    pub fn messages(&self) -> &[ReceivedMessage] {
        &self.messages
    }

    pub fn rejections(&self) -> &[RejectionNotice] {
        &self.rejections
    }

    pub fn accept_log(&self) -> &[AcceptRecord] {
        &self.accept_log
    }

    pub fn pending_contact(&self) -> Option<&(String, String)> {
        self.pending_contact.as_ref()
    }

    /// Whether mail or SMS addressed to `addr` belongs to this device.
    pub fn owns_address(&self, addr: &str) -> bool {
        addr == self.email
            || addr == self.mobile
            || addr == self.endpoint
            || self
                .pending_contact
                .as_ref()
                .is_some_and(|(e, m)| addr == e || addr == m)
    }

    pub fn drain_outbox(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    pub fn learn_server_key(&mut self, uid: &str, key: RsaPublicKey) {
        self.known_server_keys.insert(uid.to_string(), key);
    }

    fn send(&mut self, msg_type: MsgType, payload: Vec<u8>, now: Timestamp) {
        let env = Envelope::new(
            msg_type,
            self.endpoint.clone(),
            SERVER_ENDPOINT,
            payload,
            now,
        );
        self.outbox.push(env);
    }

    fn own_uid(&self) -> Result<String, Rejection> {
        self.uid.clone().ok_or(Rejection::NotLoggedIn)
    }

    fn server_key_for(&self, uid: &str) -> Result<RsaPublicKey, Rejection> {
        if self.uid.as_deref() == Some(uid) {
            if let Some(key) = self.server_pub {
                return Ok(key);
            }
        }
        self.known_server_keys
            .get(uid)
            .copied()
            .ok_or_else(|| Rejection::NoServerKey(uid.to_string()))
    }

    /// Decrypts the private card with `K` recomputed from the remembered
    /// uid and PIN.
    pub fn open_private_card(&self) -> Result<PrivateCard, Rejection> {
        let blob = self
            .private_card_blob
            .as_ref()
            .ok_or_else(|| Rejection::MissingCard("own private card".into()))?;
        let (uid, pin) = (
            self.own_uid()?,
            self.pin.clone().ok_or(Rejection::NotLoggedIn)?,
        );
        let k = derive_secret_key(&uid, &pin).map_err(|e| Rejection::Malformed(e.to_string()))?;
        Ok(decrypt_private_card(blob, &k)?)
    }

    fn outh_for(&self, uid: &str, pin: &str) -> Result<AuthCode, Rejection> {
        compute_outh_code(uid, pin, &self.email, &self.mobile)
            .map_err(|e| Rejection::Malformed(e.to_string()))
    }

    fn sealed_request(
        &mut self,
        msg_type: MsgType,
        uid: &str,
        body: Vec<u8>,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let key = self.server_key_for(uid)?;
        let blob = encrypt_bytes(&body, &key)?;
        self.send(msg_type, frame::encode(&[uid.as_bytes(), &blob]), now);
        Ok(())
    }

    pub fn register(&mut self, now: Timestamp) {
        let payload = frame::encode(&[
            self.email.as_bytes(),
            self.mobile.as_bytes(),
            self.name.as_bytes(),
            &now.to_be_bytes(),
        ]);
        self.send(MsgType::RegisterRequest, payload, now);
    }

    /// Starts a login. The credentials are held until the server prompts.
    pub fn login(&mut self, uid: &str, pin: &str, now: Timestamp) {
        self.session = false;
        self.pending_login = Some((uid.to_string(), pin.to_string()));
        let payload = frame::encode(&[uid.as_bytes(), &now.to_be_bytes()]);
        self.send(MsgType::LoginRequest, payload, now);
    }

    /// Answers the prompt with `Auth_Msg = E(M || h(M), server public key)`.
    fn send_login_auth(&mut self, now: Timestamp) -> Result<(), Rejection> {
        let (uid, pin) = self
            .pending_login
            .clone()
            .ok_or(Rejection::NoLoginPending)?;
        let outh = self.outh_for(&uid, &pin)?;
        let m = build_auth_message(&uid, outh, now);
        self.sealed_request(MsgType::LoginAuth, &uid, m.encode(), now)
    }

    pub fn submit_otp(&mut self, code: &str, now: Timestamp) -> Result<(), Rejection> {
        let (uid, _) = self
            .pending_login
            .clone()
            .ok_or(Rejection::NoLoginPending)?;
        let body = frame::encode(&[uid.as_bytes(), code.as_bytes(), &now.to_be_bytes()]);
        self.sealed_request(MsgType::OtpSubmit, &uid, body, now)
    }

    pub fn activate(&mut self, code: &str, now: Timestamp) -> Result<(), Rejection> {
        let uid = match &self.pending_login {
            Some((uid, _)) => uid.clone(),
            None => self.own_uid()?,
        };
        let payload = frame::encode(&[uid.as_bytes(), code.as_bytes(), &now.to_be_bytes()]);
        self.send(MsgType::ActivateAccount, payload, now);
        Ok(())
    }

    /// Asks the server to email this user's public card to `recipient_uid`.
    pub fn send_card(&mut self, recipient_uid: &str, now: Timestamp) -> Result<(), Rejection> {
        let card = self.open_private_card()?;
        let body = frame::encode(&[
            card.user_id.as_bytes(),
            &card.outh_code.0.to_be_bytes(),
            recipient_uid.as_bytes(),
            &now.to_be_bytes(),
        ]);
        self.sealed_request(MsgType::CardRequest, &card.user_id, body, now)
    }

    /// Requires a session and the recipient's saved public card.
    pub fn send_message(
        &mut self,
        recipient_uid: &str,
        msg: &[u8],
        now: Timestamp,
    ) -> Result<(), Rejection> {
        if !self.session {
            return Err(Rejection::NotLoggedIn);
        }
        let recipient = self
            .saved_public_cards
            .get(recipient_uid)
            .cloned()
            .ok_or_else(|| Rejection::MissingCard(recipient_uid.to_string()))?;
        let card = self.open_private_card()?;
        let env = send_user_message(&card, &recipient, msg, now)?;
        self.outbox.push(env);
        Ok(())
    }

    pub fn request_server_key(&mut self, now: Timestamp) -> Result<(), Rejection> {
        let uid = self.own_uid()?;
        self.send(
            MsgType::ServerKeyRequest,
            frame::encode(&[uid.as_bytes(), &now.to_be_bytes()]),
            now,
        );
        Ok(())
    }

    pub fn request_pin_resend(&mut self, now: Timestamp) -> Result<(), Rejection> {
        let uid = self.own_uid()?;
        self.send(
            MsgType::PinResendRequest,
            frame::encode(&[uid.as_bytes(), &now.to_be_bytes()]),
            now,
        );
        Ok(())
    }

    pub fn request_pin_change(&mut self, now: Timestamp) -> Result<(), Rejection> {
        let uid = self.own_uid()?;
        let outh = self.outh_for(&uid, self.pin.as_deref().unwrap_or_default())?;
        let body = frame::encode(&[uid.as_bytes(), &outh.0.to_be_bytes(), &now.to_be_bytes()]);
        self.sealed_request(MsgType::PinChangeRequest, &uid, body, now)
    }

    pub fn request_card_resend(&mut self, pin: &str, now: Timestamp) -> Result<(), Rejection> {
        let uid = self.own_uid()?;
        let body = frame::encode(&[uid.as_bytes(), pin.as_bytes(), &now.to_be_bytes()]);
        self.sealed_request(MsgType::CardResendRequest, &uid, body, now)
    }

    /// The new addresses take effect once the new registration email
    /// arrives at them.
    pub fn request_contact_change(
        &mut self,
        new_email: &str,
        new_mobile: &str,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let uid = self.own_uid()?;
        let outh = self.outh_for(&uid, self.pin.as_deref().unwrap_or_default())?;
        let body = frame::encode(&[
            uid.as_bytes(),
            &outh.0.to_be_bytes(),
            new_email.as_bytes(),
            new_mobile.as_bytes(),
            &now.to_be_bytes(),
        ]);
        self.sealed_request(MsgType::ContactChangeRequest, &uid, body, now)?;
        self.pending_contact = Some((new_email.to_string(), new_mobile.to_string()));
        Ok(())
    }

    /// Once both the email and the SMS are in, recover
    /// uid and PIN and answer with the sealed authentication message. A
    /// blob that does not open under the current key is kept until a key
    /// that opens it arrives.
    fn try_complete_registration(&mut self, now: Timestamp) -> Result<Option<String>, Rejection> {
        let (Some(blob), Some(key)) = (&self.registration_blob, self.server_pub) else {
            return Ok(None);
        };
        let Ok(plain) = decrypt_bytes(blob, &key) else {
            return Ok(None);
        };
        let Ok(fields) = frame::decode(&plain, 2) else {
            return Ok(None);
        };
        let (uid, pin) = (fields.text(0)?.to_string(), fields.text(1)?.to_string());
        self.registration_blob = None;
        let unchanged = self.uid.as_deref() == Some(uid.as_str())
            && self.pin.as_deref() == Some(pin.as_str())
            && self.private_card_blob.is_some();
        self.uid = Some(uid.clone());
        self.pin = Some(pin.clone());
        if unchanged {
            return Ok(Some(format!("PIN for {uid} recovered")));
        }
        let env =
            client_register_complete(&self.endpoint, &uid, &pin, &self.email, &self.mobile, now)?;
        self.outbox.push(env);
        Ok(Some(format!("registered as {uid}; confirmation sent")))
    }

    fn commit_contact(&mut self, addr: &str) {
        if let Some((email, mobile)) = self.pending_contact.clone() {
            if addr == email || addr == mobile {
                self.email = email;
                self.mobile = mobile;
                self.pending_contact = None;
                self.private_card_blob = None;
                self.session = false;
            }
        }
    }

    /// Processes one delivery. Returns a one-line human summary; a refusal
    /// is reported as the rejection that was raised or received.
    pub fn handle(&mut self, env: &Envelope, now: Timestamp) -> Result<String, Rejection> {
        let p = &env.payload;
        match env.msg_type {
            MsgType::RegistrationEmail => {
                let f = frame::decode(p, 1)?;
                self.commit_contact(&env.recipient);
                self.registration_blob = Some(f.bytes(0).to_vec());
                Ok(self
                    .try_complete_registration(now)?
                    .unwrap_or_else(|| "registration email received".into()))
            }
            MsgType::ServerKeySms => {
                let f = frame::decode(p, 1)?;
                let key: RsaPublicKey = f
                    .text(0)?
                    .parse()
                    .map_err(|e: crate::rsa::RsaError| Rejection::Malformed(e.to_string()))?;
                self.commit_contact(&env.recipient);
                self.server_pub = Some(key);
                Ok(self
                    .try_complete_registration(now)?
                    .unwrap_or_else(|| format!("server public key {key} received")))
            }
            MsgType::PrivateCardEmail => {
                let f = frame::decode(p, 2)?;
                self.private_card_blob = Some(f.bytes(1).to_vec());
                let card = self.open_private_card()?;
                Ok(format!("private card for {} received", card.user_id))
            }
            MsgType::PinChangeEmail => {
                let f = frame::decode(p, 2)?;
                let key = self
                    .server_pub
                    .ok_or_else(|| Rejection::NoServerKey(self.uid.clone().unwrap_or_default()))?;
                let plain = decrypt_bytes(f.bytes(0), &key)?;
                let reg = frame::decode(&plain, 2)?;
                let pin = reg.text(1)?.to_string();
                self.pin = Some(pin);
                self.private_card_blob = Some(f.bytes(1).to_vec());
                self.open_private_card()?;
                Ok("new PIN and private card received".into())
            }
            MsgType::PublicCardEmail => {
                let f = frame::decode(p, 1)?;
                let card = PublicCard::parse(f.text(0)?)?;
                let uid = card.user_id.clone();
                self.saved_public_cards.insert(uid.clone(), card);
                Ok(format!("public card of {uid} saved"))
            }
            MsgType::UserMessage => self.receive_message(env, now),
            MsgType::LoginPrompt => {
                self.send_login_auth(now)?;
                Ok("credentials sent".into())
            }
            MsgType::OtpSms => {
                let f = frame::decode(p, 1)?;
                self.last_otp = Some(f.text(0)?.to_string());
                Ok(format!("OTP code {}", f.text(0)?))
            }
            MsgType::LoginOk => {
                let f = frame::decode(p, 1)?;
                self.session = true;
                if let Some((uid, pin)) = self.pending_login.take() {
                    if self.uid.is_none() {
                        self.uid = Some(uid);
                        self.pin = Some(pin);
                    }
                }
                Ok(format!("logged in as {}", f.text(0)?))
            }
            MsgType::BlockNotice => {
                let f = frame::decode(p, 5)?;
                Ok(format!(
                    "account {} blocked after failed attempts from device {} ({}, {}) at {}; enter the activation code sent by SMS",
                    f.text(0)?,
                    f.text(1)?,
                    f.text(2)?,
                    f.text(4)?,
                    f.text(3)?
                ))
            }
            MsgType::ActivationSms => {
                let f = frame::decode(p, 1)?;
                self.last_activation_code = Some(f.text(0)?.to_string());
                Ok(format!("activation code {}", f.text(0)?))
            }
            MsgType::AccountActivated => {
                let f = frame::decode(p, 1)?;
                Ok(format!("account {} activated", f.text(0)?))
            }
            MsgType::RejectionEmail | MsgType::Rejected => {
                let f = frame::decode(p, 2)?;
                let notice = RejectionNotice {
                    code: f.text(0)?.to_string(),
                    context: f.text(1)?.to_string(),
                };
                let line = format!("request {} rejected: {}", notice.context, notice.code);
                self.rejections.push(notice);
                Ok(line)
            }
            MsgType::MessageRejection => {
                let f = frame::decode(p, 1)?;
                let notice = RejectionNotice {
                    code: f.text(0)?.to_string(),
                    context: MsgType::UserMessage.to_string(),
                };
                let line = format!("message rejected by recipient: {}", notice.code);
                self.rejections.push(notice);
                Ok(line)
            }
            other => Err(Rejection::Unexpected(other)),
        }
    }

    /// Decrypts and verifies a user message. A refusal is reported back to the sender.
    fn receive_message(&mut self, env: &Envelope, now: Timestamp) -> Result<String, Rejection> {
        let result = self.check_message(env, now);
        match result {
            Ok((from_uid, body)) => {
                let line = format!(
                    "message from {from_uid}: {}",
                    String::from_utf8_lossy(&body)
                );
                self.messages.push(ReceivedMessage {
                    from_uid,
                    body,
                    at: now,
                });
                Ok(line)
            }
            Err(rejection) => {
                let reply = Envelope::new(
                    MsgType::MessageRejection,
                    self.email.clone(),
                    env.sender.clone(),
                    frame::encode(&[rejection.code()]),
                    now,
                );
                self.outbox.push(reply);
                Err(rejection)
            }
        }
    }

    fn check_message(
        &mut self,
        env: &Envelope,
        now: Timestamp,
    ) -> Result<(String, Vec<u8>), Rejection> {
        let sender_card = self
            .saved_public_cards
            .values()
            .find(|c| c.user_email == env.sender)
            .cloned()
            .ok_or_else(|| Rejection::MissingCard(env.sender.clone()))?;
        let own = self.open_private_card()?;
        let (body, flags) = receive_user_message(&own, env, &sender_card, now, self.window)?;
        self.accept_log.push(AcceptRecord {
            at: now,
            msg_type: MsgType::UserMessage,
            uid: sender_card.user_id.clone(),
            digest_ok: flags.digest_ok,
            fresh_ok: flags.fresh_ok,
        });
        Ok((sender_card.user_id, body))
    }
}
