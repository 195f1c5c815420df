//! The authentication server: registry, blacklist, OTP store and the
//! handlers for every client request.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cards::{encrypt_private_card, Pin, PrivateCard, PublicCard};
use crate::frame::{self, Fields};
use crate::kdf::{
    check_auth_message, compute_outh_code, derive_secret_key, verify_auth_message,
    verify_freshness, AuthCode, AuthMessage, FreshnessWindow, SecretKey, Timestamp,
};
use crate::rsa::{decrypt_bytes, encrypt_bytes, generate_keypair_with_rng, RsaKeyBundle};

use super::envelope::{
    AcceptRecord, DeviceDescriptor, Envelope, MsgType, Rejection, SERVER_EMAIL, SERVER_ENDPOINT,
    SERVER_SMS,
};
use super::messaging::{validate_email, validate_mobile, validate_name};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    pub window: FreshnessWindow,
    pub otp_ttl_ms: u64,
    pub activation_ttl_ms: u64,
    /// Bit length of each RSA prime for per-user key pairs.
    pub rsa_prime_bits: u32,
    pub max_failures: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            window: FreshnessWindow::default(),
            otp_ttl_ms: 300_000,
            activation_ttl_ms: 600_000,
            rsa_prime_bits: 16,
            max_failures: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub uid: String,
    pub email: String,
    pub mobile: String,
    pub name: String,
    pub pin: Pin,
    /// The user's own RSA pair; the server issues it on the private card.
    pub user_keys: RsaKeyBundle,
    /// The server's pair reserved for this user.
    pub server_keys: RsaKeyBundle,
    /// RSA ciphertext of `(uid, PIN)` under the server private key.
    pub stored_reg_message: Vec<u8>,
    pub public_card: PublicCard,
    pub card_issued: bool,
}

impl UserRecord {
    pub fn outh_code(&self) -> AuthCode {
        compute_outh_code(&self.uid, self.pin.as_str(), &self.email, &self.mobile)
            .expect("registry fields are validated")
    }

    pub fn secret_key(&self) -> SecretKey {
        derive_secret_key(&self.uid, self.pin.as_str()).expect("registry fields are validated")
    }

    pub fn private_card(&self) -> PrivateCard {
        PrivateCard {
            user_id: self.uid.clone(),
            user_mobile_number: self.mobile.clone(),
            user_email: self.email.clone(),
            outh_code: self.outh_code(),
            pin_code: self.pin.clone(),
            s_key: self.secret_key(),
            server_pub: self.server_keys.public_key(),
            pr_key: self.user_keys.private_key(),
            pub_key: self.user_keys.public_key(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedCode {
    pub code: String,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, Default)]
pub struct ServerState {
    pub registry: BTreeMap<String, UserRecord>,
    pub blacklist: BTreeSet<String>,
    pub fail_counts: BTreeMap<String, u32>,
    pub otp_store: BTreeMap<String, TimedCode>,
    pub activation_codes: BTreeMap<String, TimedCode>,
    pub sessions: BTreeSet<String>,
    pub next_uid: u64,
}

pub struct Server {
    config: ServerConfig,
    state: ServerState,
    rng: ChaCha8Rng,
    outbox: Vec<Envelope>,
    accept_log: Vec<AcceptRecord>,
}

fn random_digits<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n)
        .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
        .collect()
}

impl Server {
    pub fn new(config: ServerConfig, seed: u64) -> Self {
        Self {
            config,
            state: ServerState {
                next_uid: 1,
                ..ServerState::default()
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            outbox: Vec::new(),
            accept_log: Vec::new(),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn record(&self, uid: &str) -> Option<&UserRecord> {
        self.state.registry.get(uid)
    }

    pub fn accept_log(&self) -> &[AcceptRecord] {
        &self.accept_log
    }

    pub fn drain_outbox(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    fn send(&mut self, msg_type: MsgType, to: &str, payload: Vec<u8>, now: Timestamp) {
        let from = match msg_type.channel() {
            super::Channel::Network => SERVER_ENDPOINT,
            super::Channel::Email => SERVER_EMAIL,
            super::Channel::Sms => SERVER_SMS,
        };
        self.outbox
            .push(Envelope::new(msg_type, from, to, payload, now));
    }

    /// Entry point for every network envelope addressed to the server. On
    /// refusal a rejection notice is queued: by email to a known user,
    /// otherwise back to the requesting endpoint.
    pub fn handle(
        &mut self,
        env: &Envelope,
        origin: &DeviceDescriptor,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let result = self.dispatch(env, origin, now);
        if let Err(rejection) = &result {
            let uid = frame_uid(&env.payload);
            self.send_rejection(uid.as_deref(), &env.sender, env.msg_type, rejection, now);
        }
        result
    }

    fn dispatch(
        &mut self,
        env: &Envelope,
        origin: &DeviceDescriptor,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let p = &env.payload;
        match env.msg_type {
            MsgType::RegisterRequest => {
                let f = frame::decode(p, 4)?;
                self.check_clear_time(&f, 3, now)?;
                self.register_begin(f.text(0)?, f.text(1)?, f.text(2)?, now)
                    .map(|_| ())
            }
            MsgType::RegisterComplete => {
                let f = frame::decode(p, 2)?;
                self.server_register_complete(f.text(0)?, f.bytes(1), now)
            }
            MsgType::LoginRequest => {
                let f = frame::decode(p, 2)?;
                self.check_clear_time(&f, 1, now)?;
                self.login_request(f.text(0)?, &env.sender, now)
            }
            MsgType::LoginAuth => {
                let f = frame::decode(p, 2)?;
                self.login_auth(f.text(0)?, f.bytes(1), origin, now)
            }
            MsgType::OtpSubmit => {
                let f = frame::decode(p, 2)?;
                self.submit_otp(f.text(0)?, f.bytes(1), &env.sender, origin, now)
            }
            MsgType::ActivateAccount => {
                let f = frame::decode(p, 3)?;
                self.check_clear_time(&f, 2, now)?;
                self.activate_account(f.text(0)?, f.text(1)?, &env.sender, now)
            }
            MsgType::CardRequest => {
                let f = frame::decode(p, 2)?;
                self.distribute_public_card(f.text(0)?, f.bytes(1), now)
            }
            MsgType::ServerKeyRequest => {
                let f = frame::decode(p, 2)?;
                self.check_clear_time(&f, 1, now)?;
                self.request_server_pubkey(f.text(0)?, now)
            }
            MsgType::PinResendRequest => {
                let f = frame::decode(p, 2)?;
                self.check_clear_time(&f, 1, now)?;
                self.resend_pin(f.text(0)?, now)
            }
            MsgType::PinChangeRequest => {
                let f = frame::decode(p, 2)?;
                self.change_pin(f.text(0)?, f.bytes(1), now)
            }
            MsgType::CardResendRequest => {
                let f = frame::decode(p, 2)?;
                self.resend_private_card(f.text(0)?, f.bytes(1), origin, now)
            }
            MsgType::ContactChangeRequest => {
                let f = frame::decode(p, 2)?;
                self.change_contact(f.text(0)?, f.bytes(1), now)
            }
            other => Err(Rejection::Unexpected(other)),
        }
    }

    fn send_rejection(
        &mut self,
        uid: Option<&str>,
        reply_to: &str,
        context: MsgType,
        rejection: &Rejection,
        now: Timestamp,
    ) {
        let payload = frame::encode(&[rejection.code(), context.as_str()]);
        match uid.and_then(|u| self.state.registry.get(u)) {
            Some(record) => {
                let email = record.email.clone();
                self.send(MsgType::RejectionEmail, &email, payload, now);
            }
            None => self.send(MsgType::Rejected, reply_to, payload, now),
        }
    }

    fn check_fresh(&self, t1: Timestamp, now: Timestamp) -> Result<(), Rejection> {
        if verify_freshness(t1, now, self.config.window) {
            Ok(())
        } else {
            Err(Rejection::Stale {
                delay_ms: now.0 as i128 - t1.0 as i128,
            })
        }
    }

    fn check_clear_time(
        &self,
        f: &Fields<'_>,
        index: usize,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        self.check_fresh(Timestamp(f.u64(index)?), now)
    }

    fn known(&self, uid: &str) -> Result<&UserRecord, Rejection> {
        self.state
            .registry
            .get(uid)
            .ok_or_else(|| Rejection::UnknownUid(uid.to_string()))
    }

    /// Known and not blacklisted.
    fn active(&self, uid: &str) -> Result<&UserRecord, Rejection> {
        let record = self.known(uid)?;
        if self.state.blacklist.contains(uid) {
            return Err(Rejection::Blacklisted);
        }
        Ok(record)
    }

    /// Decrypts a request body sent under this user's server public key and
    /// checks that it names the same uid.
    fn open_request(&self, uid: &str, blob: &[u8], fields: usize) -> Result<Vec<u8>, Rejection> {
        let record = self.known(uid)?;
        let plain = decrypt_bytes(blob, &record.server_keys.private_key())?;
        let f = frame::decode(&plain, fields)?;
        if f.text(0)? != uid {
            return Err(Rejection::Malformed("request names a different uid".into()));
        }
        Ok(plain)
    }

    fn fresh_keypair(&mut self) -> RsaKeyBundle {
        let bits = self.config.rsa_prime_bits;
        loop {
            let bundle = generate_keypair_with_rng(bits, &mut self.rng).expect("valid prime size");
            let clash = self
                .state
                .registry
                .values()
                .any(|r| r.server_keys.n == bundle.n || r.user_keys.n == bundle.n);
            if !clash {
                return bundle;
            }
        }
    }

    fn registration_message(uid: &str, pin: &Pin, server_keys: &RsaKeyBundle) -> Vec<u8> {
        encrypt_bytes(
            &frame::encode(&[uid, pin.as_str()]),
            &server_keys.private_key(),
        )
        .expect("per-user modulus is large enough")
    }

    /// Issues fresh PIN and key pairs, stores the encrypted registration
    /// message and sends it by email with the server public key by SMS.
    fn issue_registration(&mut self, uid: &str, now: Timestamp) {
        let pin = Pin::random(&mut self.rng);
        let server_keys = self.fresh_keypair();
        let user_keys = self.fresh_keypair();
        let reg = Self::registration_message(uid, &pin, &server_keys);
        let record = self.state.registry.get_mut(uid).expect("record exists");
        record.pin = pin;
        record.server_keys = server_keys;
        record.user_keys = user_keys;
        record.stored_reg_message = reg.clone();
        record.card_issued = false;
        record.public_card.pub_key = user_keys.public_key();
        record.public_card.user_email = record.email.clone();
        record.public_card.user_mobile_number = record.mobile.clone();
        let (email, mobile) = (record.email.clone(), record.mobile.clone());
        self.send(
            MsgType::RegistrationEmail,
            &email,
            frame::encode(&[&reg]),
            now,
        );
        self.send(
            MsgType::ServerKeySms,
            &mobile,
            frame::encode(&[server_keys.public_key().to_string()]),
            now,
        );
    }

    /// Accepts a registration request and issues credentials.
    pub fn register_begin(
        &mut self,
        email: &str,
        mobile: &str,
        name: &str,
        now: Timestamp,
    ) -> Result<String, Rejection> {
        validate_email(email)?;
        validate_mobile(mobile)?;
        validate_name(name)?;
        if self.state.registry.values().any(|r| r.email == email) {
            return Err(Rejection::DuplicateEmail);
        }
        let uid = format!("user{}", self.state.next_uid);
        self.state.next_uid += 1;
        let placeholder = RsaKeyBundle {
            p: 0,
            q: 0,
            n: 0,
            phi: 0,
            e: 0,
            d: 0,
        };
        let record = UserRecord {
            uid: uid.clone(),
            email: email.to_string(),
            mobile: mobile.to_string(),
            name: name.to_string(),
            pin: Pin::new("AAAAAA").expect("valid"),
            user_keys: placeholder,
            server_keys: placeholder,
            stored_reg_message: Vec::new(),
            public_card: PublicCard {
                user_id: uid.clone(),
                user_name: name.to_string(),
                user_mobile_number: mobile.to_string(),
                user_email: email.to_string(),
                pub_key: crate::rsa::RsaPublicKey { n: 0, e: 0 },
            },
            card_issued: false,
        };
        self.state.registry.insert(uid.clone(), record);
        self.issue_registration(&uid, now);
        Ok(uid)
    }

    fn email_private_card(&mut self, uid: &str, now: Timestamp) {
        let record = self.state.registry.get_mut(uid).expect("record exists");
        record.card_issued = true;
        let blob = encrypt_private_card(&record.private_card(), &record.secret_key());
        let email = record.email.clone();
        self.send(
            MsgType::PrivateCardEmail,
            &email,
            frame::encode(&[uid.as_bytes(), &blob]),
            now,
        );
    }

    /// Verifies the registration confirmation and emails the private card. Nothing changes on refusal.
    pub fn server_register_complete(
        &mut self,
        uid: &str,
        sealed: &[u8],
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let record = self.active(uid)?;
        let m = verify_auth_message(
            sealed,
            &record.secret_key(),
            now,
            self.config.window,
            record.outh_code(),
        )?;
        if m.uid != uid {
            return Err(Rejection::Malformed("message names a different uid".into()));
        }
        self.accept_log.push(AcceptRecord {
            at: now,
            msg_type: MsgType::RegisterComplete,
            uid: uid.to_string(),
            digest_ok: true,
            fresh_ok: true,
        });
        self.email_private_card(uid, now);
        Ok(())
    }

    /// Blacklist check, then prompt for credentials.
    pub fn login_request(
        &mut self,
        uid: &str,
        reply_to: &str,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        self.active(uid)?;
        self.send(MsgType::LoginPrompt, reply_to, frame::encode(&[uid]), now);
        Ok(())
    }

    fn verify_login(&self, uid: &str, blob: &[u8], now: Timestamp) -> Result<(), Rejection> {
        let record = self.known(uid)?;
        let plain = decrypt_bytes(blob, &record.server_keys.private_key())?;
        let m = AuthMessage::decode(&plain)?;
        if m.uid != uid {
            return Err(Rejection::Malformed("message names a different uid".into()));
        }
        check_auth_message(&m, now, self.config.window, record.outh_code())?;
        Ok(())
    }

    /// Decrypts with the per-user server key, checks delay,
    /// digest and outh-code, then sends an OTP by SMS.
    pub fn login_auth(
        &mut self,
        uid: &str,
        blob: &[u8],
        origin: &DeviceDescriptor,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        self.active(uid)?;
        if let Err(rejection) = self.verify_login(uid, blob, now) {
            self.record_failure_and_block(uid, origin, now);
            return Err(rejection);
        }
        self.accept_log.push(AcceptRecord {
            at: now,
            msg_type: MsgType::LoginAuth,
            uid: uid.to_string(),
            digest_ok: true,
            fresh_ok: true,
        });
        let code = random_digits(&mut self.rng, 6);
        self.state.otp_store.insert(
            uid.to_string(),
            TimedCode {
                code: code.clone(),
                expires_at: Timestamp(now.0 + self.config.otp_ttl_ms),
            },
        );
        let mobile = self.state.registry[uid].mobile.clone();
        self.send(MsgType::OtpSms, &mobile, frame::encode(&[code]), now);
        Ok(())
    }

    fn check_otp(&mut self, uid: &str, blob: &[u8], now: Timestamp) -> Result<(), Rejection> {
        let plain = self.open_request(uid, blob, 3)?;
        let f = frame::decode(&plain, 3)?;
        let submitted = f.text(1)?;
        // Consumed on first check, whatever the outcome.
        let stored = self
            .state
            .otp_store
            .remove(uid)
            .ok_or(Rejection::WrongOtp)?;
        if stored.code != submitted {
            return Err(Rejection::WrongOtp);
        }
        if now > stored.expires_at {
            return Err(Rejection::OtpExpired);
        }
        self.check_fresh(Timestamp(f.u64(2)?), now)
    }

    /// Checks the OTP and opens the session.
    pub fn submit_otp(
        &mut self,
        uid: &str,
        blob: &[u8],
        reply_to: &str,
        origin: &DeviceDescriptor,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        self.active(uid)?;
        if let Err(rejection) = self.check_otp(uid, blob, now) {
            self.record_failure_and_block(uid, origin, now);
            return Err(rejection);
        }
        self.state.fail_counts.insert(uid.to_string(), 0);
        self.state.sessions.insert(uid.to_string());
        self.send(MsgType::LoginOk, reply_to, frame::encode(&[uid]), now);
        Ok(())
    }

    /// Counts a failure. On reaching the limit the uid is blacklisted, the
    /// user is emailed the attempting device's details and an activation code
    /// goes out by SMS.
    pub fn record_failure_and_block(
        &mut self,
        uid: &str,
        origin: &DeviceDescriptor,
        now: Timestamp,
    ) -> Option<(Envelope, Envelope)> {
        if !self.state.registry.contains_key(uid) || self.state.blacklist.contains(uid) {
            return None;
        }
        let count = self.state.fail_counts.entry(uid.to_string()).or_insert(0);
        *count += 1;
        if *count < self.config.max_failures {
            return None;
        }
        self.state.blacklist.insert(uid.to_string());
        self.state.sessions.remove(uid);
        self.state.otp_store.remove(uid);
        let record = &self.state.registry[uid];
        let (email, mobile) = (record.email.clone(), record.mobile.clone());
        let when = render_time(now);
        let notice = frame::encode(&[
            uid,
            origin.name.as_str(),
            origin.address.as_str(),
            when.as_str(),
            origin.provider.as_str(),
        ]);
        self.send(MsgType::BlockNotice, &email, notice, now);
        let block_mail = self.outbox.last().cloned().expect("just queued");
        let sms = self.issue_activation_code(uid, &mobile, now);
        Some((block_mail, sms))
    }

    fn issue_activation_code(&mut self, uid: &str, mobile: &str, now: Timestamp) -> Envelope {
        let code = random_digits(&mut self.rng, 6);
        self.state.activation_codes.insert(
            uid.to_string(),
            TimedCode {
                code: code.clone(),
                expires_at: Timestamp(now.0 + self.config.activation_ttl_ms),
            },
        );
        self.send(MsgType::ActivationSms, mobile, frame::encode(&[code]), now);
        self.outbox.last().cloned().expect("just queued")
    }

    pub fn activate_account(
        &mut self,
        uid: &str,
        code: &str,
        reply_to: &str,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let mobile = self.known(uid)?.mobile.clone();
        if !self.state.blacklist.contains(uid) {
            return Err(Rejection::NotBlocked);
        }
        let stored = self
            .state
            .activation_codes
            .get(uid)
            .cloned()
            .ok_or(Rejection::WrongActivationCode)?;
        if stored.code != code {
            return Err(Rejection::WrongActivationCode);
        }
        if now > stored.expires_at {
            self.issue_activation_code(uid, &mobile, now);
            return Err(Rejection::ActivationExpired);
        }
        self.state.activation_codes.remove(uid);
        self.state.blacklist.remove(uid);
        self.state.fail_counts.insert(uid.to_string(), 0);
        self.send(
            MsgType::AccountActivated,
            reply_to,
            frame::encode(&[uid]),
            now,
        );
        Ok(())
    }

    /// Verifies a card request and emails the sender's public card to the recipient.
    pub fn distribute_public_card(
        &mut self,
        sender_uid: &str,
        blob: &[u8],
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let record = self.active(sender_uid)?;
        let expected = record.outh_code();
        let card_text = record.public_card.serialize();
        let plain = self.open_request(sender_uid, blob, 4)?;
        let f = frame::decode(&plain, 4)?;
        self.check_fresh(Timestamp(f.u64(3)?), now)?;
        if AuthCode(f.u64(1)?) != expected {
            return Err(Rejection::WrongAuthCode);
        }
        let recipient_uid = f.text(2)?;
        let recipient_email = self
            .state
            .registry
            .get(recipient_uid)
            .ok_or_else(|| Rejection::UnknownRecipient(recipient_uid.to_string()))?
            .email
            .clone();
        self.send(
            MsgType::PublicCardEmail,
            &recipient_email,
            frame::encode(&[card_text]),
            now,
        );
        Ok(())
    }

    pub fn request_server_pubkey(&mut self, uid: &str, now: Timestamp) -> Result<(), Rejection> {
        let record = self.known(uid)?;
        let (mobile, key) = (record.mobile.clone(), record.server_keys.public_key());
        self.send(
            MsgType::ServerKeySms,
            &mobile,
            frame::encode(&[key.to_string()]),
            now,
        );
        Ok(())
    }

    /// Re-sends the stored registration message verbatim.
    pub fn resend_pin(&mut self, uid: &str, now: Timestamp) -> Result<(), Rejection> {
        let record = self.known(uid)?;
        let (email, reg) = (record.email.clone(), record.stored_reg_message.clone());
        self.send(
            MsgType::RegistrationEmail,
            &email,
            frame::encode(&[&reg]),
            now,
        );
        Ok(())
    }

    /// New PIN, new outh-code, new secret key; the card is re-encrypted
    /// under the new key.
    pub fn change_pin(&mut self, uid: &str, blob: &[u8], now: Timestamp) -> Result<(), Rejection> {
        let expected = self.active(uid)?.outh_code();
        let plain = self.open_request(uid, blob, 3)?;
        let f = frame::decode(&plain, 3)?;
        self.check_fresh(Timestamp(f.u64(2)?), now)?;
        if AuthCode(f.u64(1)?) != expected {
            return Err(Rejection::WrongAuthCode);
        }
        let pin = Pin::random(&mut self.rng);
        let record = self.state.registry.get_mut(uid).expect("checked");
        let reg = Self::registration_message(uid, &pin, &record.server_keys);
        record.pin = pin;
        record.stored_reg_message = reg.clone();
        record.card_issued = true;
        let blob = encrypt_private_card(&record.private_card(), &record.secret_key());
        let email = record.email.clone();
        self.send(
            MsgType::PinChangeEmail,
            &email,
            frame::encode(&[&reg, &blob]),
            now,
        );
        Ok(())
    }

    /// PIN-checked card re-send. A wrong PIN counts toward the lockout.
    pub fn resend_private_card(
        &mut self,
        uid: &str,
        blob: &[u8],
        origin: &DeviceDescriptor,
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let pin = self.active(uid)?.pin.clone();
        let plain = self.open_request(uid, blob, 3)?;
        let f = frame::decode(&plain, 3)?;
        self.check_fresh(Timestamp(f.u64(2)?), now)?;
        if f.text(1)? != pin.as_str() {
            self.record_failure_and_block(uid, origin, now);
            return Err(Rejection::WrongPin);
        }
        self.state.fail_counts.insert(uid.to_string(), 0);
        self.email_private_card(uid, now);
        Ok(())
    }

    /// Re-registers under the same uid with the new contact details: new
    /// key pairs, new PIN, registration mail and SMS to the new addresses.
    pub fn change_contact(
        &mut self,
        uid: &str,
        blob: &[u8],
        now: Timestamp,
    ) -> Result<(), Rejection> {
        let expected = self.active(uid)?.outh_code();
        let plain = self.open_request(uid, blob, 5)?;
        let f = frame::decode(&plain, 5)?;
        self.check_fresh(Timestamp(f.u64(4)?), now)?;
        if AuthCode(f.u64(1)?) != expected {
            return Err(Rejection::WrongAuthCode);
        }
        let (email, mobile) = (f.text(2)?, f.text(3)?);
        validate_email(email)?;
        validate_mobile(mobile)?;
        if self
            .state
            .registry
            .values()
            .any(|r| r.uid != uid && r.email == email)
        {
            return Err(Rejection::DuplicateEmail);
        }
        let record = self.state.registry.get_mut(uid).expect("checked");
        record.email = email.to_string();
        record.mobile = mobile.to_string();
        self.state.sessions.remove(uid);
        self.issue_registration(uid, now);
        Ok(())
    }
}

/// First field of a request frame, when it is text (every request leads
/// with the uid except registration).
fn frame_uid(payload: &[u8]) -> Option<String> {
    if !frame::has_magic(payload) {
        return None;
    }
    let rest = &payload[frame::HEADER_LEN..];
    let len = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?) as usize;
    let field = rest.get(4..4 + len)?;
    std::str::from_utf8(field).ok().map(str::to_string)
}

pub fn render_time(t: Timestamp) -> String {
    chrono::DateTime::from_timestamp_millis(t.0 as i64)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string())
        .unwrap_or_else(|| format!("{}ms", t.0))
}
