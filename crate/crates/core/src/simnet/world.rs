use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::frame;
use crate::kdf::FreshnessWindow;
use crate::protocol::{
    Channel, Client, DeviceDescriptor, Envelope, MsgType, Rejection, Server, ServerConfig,
    SERVER_ENDPOINT,
};
use crate::rsa::{decrypt_bytes, RsaPublicKey};

use super::scanner::{scan, Finding, SecretSet};
use super::{DeliveryOutcome, EventLog, SimClock, SimError};

/// Result of one scripted action: every delivery it caused and the first
/// refusal among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionOutcome {
    pub deliveries: Vec<u64>,
    pub rejection: Option<Rejection>,
    /// Summaries returned by clients, in delivery order.
    pub notes: Vec<(String, String)>,
}

impl ActionOutcome {
    fn empty() -> Self {
        Self {
            deliveries: Vec::new(),
            rejection: None,
            notes: Vec::new(),
        }
    }

    fn local(r: Rejection) -> Self {
        Self {
            rejection: Some(r),
            ..Self::empty()
        }
    }

    pub fn code(&self) -> &str {
        self.rejection.as_ref().map_or("ok", Rejection::code)
    }

    pub fn is_ok(&self) -> bool {
        self.rejection.is_none()
    }

    fn absorb(&mut self, other: ActionOutcome) {
        self.deliveries.extend(other.deliveries);
        self.notes.extend(other.notes);
        if self.rejection.is_none() {
            self.rejection = other.rejection;
        }
    }
}

pub struct World {
    clock: SimClock,
    log: EventLog,
    server: Server,
    actors: BTreeMap<String, Client>,
    devices: BTreeMap<String, DeviceDescriptor>,
    window: FreshnessWindow,
    queue: VecDeque<Envelope>,
    holds: Vec<MsgType>,
    held: VecDeque<Envelope>,
    eavesdrop: BTreeSet<Channel>,
    captured: Vec<Envelope>,
    secrets: SecretSet,
    adversary_accepted: Vec<u64>,
}

impl World {
    pub fn new(seed: u64, window: FreshnessWindow) -> Self {
        let config = ServerConfig {
            window,
            ..ServerConfig::default()
        };
        Self::with_config(seed, config)
    }

    pub fn with_config(seed: u64, config: ServerConfig) -> Self {
        Self {
            clock: SimClock::default(),
            log: EventLog::default(),
            server: Server::new(config, seed),
            actors: BTreeMap::new(),
            devices: BTreeMap::new(),
            window: config.window,
            queue: VecDeque::new(),
            holds: Vec::new(),
            held: VecDeque::new(),
            eavesdrop: BTreeSet::new(),
            captured: Vec::new(),
            secrets: SecretSet::default(),
            adversary_accepted: Vec::new(),
        }
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn advance(&mut self, ms: u64) {
        self.clock.advance(ms);
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn window(&self) -> FreshnessWindow {
        self.window
    }

    pub fn actors(&self) -> impl Iterator<Item = (&String, &Client)> {
        self.actors.iter()
    }

    pub fn client(&self, actor: &str) -> Result<&Client, SimError> {
        self.actors
            .get(actor)
            .ok_or_else(|| SimError::UnknownActor(actor.to_string()))
    }

    fn client_mut(&mut self, actor: &str) -> Result<&mut Client, SimError> {
        self.actors
            .get_mut(actor)
            .ok_or_else(|| SimError::UnknownActor(actor.to_string()))
    }

    pub fn uid_of(&self, actor: &str) -> Result<String, SimError> {
        self.client(actor)?
            .uid()
            .map(str::to_string)
            .ok_or_else(|| SimError::NoUid(actor.to_string()))
    }

    pub fn add_actor(
        &mut self,
        actor: &str,
        name: &str,
        email: &str,
        mobile: &str,
    ) -> Result<(), SimError> {
        if self.actors.contains_key(actor) {
            return Err(SimError::DuplicateActor(actor.to_string()));
        }
        let index = self.actors.len() + 2;
        self.devices.insert(
            actor.to_string(),
            DeviceDescriptor {
                name: format!("{actor}-device"),
                address: format!("10.0.0.{index}"),
                provider: "SimTel".into(),
            },
        );
        self.actors.insert(
            actor.to_string(),
            Client::new(actor, name, email, mobile, self.window),
        );
        Ok(())
    }

    pub fn set_device(&mut self, actor: &str, device: DeviceDescriptor) -> Result<(), SimError> {
        self.client(actor)?;
        self.devices.insert(actor.to_string(), device);
        Ok(())
    }

    pub fn secrets(&self) -> &SecretSet {
        &self.secrets
    }

    /// Secrets found verbatim in any logged payload.
    pub fn confidentiality_findings(&self) -> Vec<Finding> {
        scan(&self.log, &self.secrets)
    }

    /// Sequence numbers of adversary deliveries that were accepted.
    pub fn adversary_accepted(&self) -> &[u64] {
        &self.adversary_accepted
    }

    pub fn captured(&self) -> &[Envelope] {
        &self.captured
    }

    pub fn eavesdrop(&mut self, channel: Channel) {
        self.eavesdrop.insert(channel);
    }

    /// The next envelope of this type is intercepted instead of delivered.
    pub fn hold(&mut self, msg_type: MsgType) {
        self.holds.push(msg_type);
    }

    pub fn held_count(&self) -> usize {
        self.held.len()
    }

    fn origin_of(&self, endpoint: &str) -> DeviceDescriptor {
        self.actors
            .iter()
            .find(|(_, c)| c.endpoint == endpoint)
            .and_then(|(name, _)| self.devices.get(name).cloned())
            .unwrap_or_else(DeviceDescriptor::unknown)
    }

    fn owner_of(&self, env: &Envelope) -> Option<String> {
        self.actors
            .iter()
            .find(|(_, c)| c.owns_address(&env.recipient))
            .map(|(name, _)| name.clone())
    }

    /// Delivers one envelope synchronously, logs it and records the outcome.
    pub fn deliver(&mut self, env: Envelope, tag: Option<String>) -> ActionOutcome {
        let now = self.clock.now();
        if self.eavesdrop.contains(&env.channel) {
            self.captured.push(env.clone());
        }
        let mut out = ActionOutcome::empty();
        let result: Option<Result<Option<(String, String)>, Rejection>> =
            if env.channel == Channel::Network && env.recipient == SERVER_ENDPOINT {
                let origin = self.origin_of(&env.sender);
                Some(self.server.handle(&env, &origin, now).map(|_| None))
            } else {
                match self.owner_of(&env) {
                    Some(actor) => {
                        let client = self.actors.get_mut(&actor).expect("owner exists");
                        Some(client.handle(&env, now).map(|note| Some((actor, note))))
                    }
                    None => None,
                }
            };
        let outcome = match &result {
            None => DeliveryOutcome::Undeliverable,
            Some(Ok(_)) => DeliveryOutcome::Accepted,
            Some(Err(r)) => DeliveryOutcome::Rejected(r.code().to_string()),
        };
        let adversarial = tag.is_some();
        let seq = self.log.append(now, env, tag, outcome.clone());
        if adversarial && outcome == DeliveryOutcome::Accepted {
            self.adversary_accepted.push(seq);
        }
        out.deliveries.push(seq);
        match result {
            Some(Ok(Some(note))) => out.notes.push(note),
            Some(Err(r)) => out.rejection = Some(r),
            _ => {}
        }
        self.secrets.record_server(&self.server);
        out
    }

    fn collect_outboxes(&mut self) {
        self.queue.extend(self.server.drain_outbox());
        for client in self.actors.values_mut() {
            self.queue.extend(client.drain_outbox());
        }
    }

    /// Delivers everything queued and everything those deliveries cause,
    /// first in first out.
    pub fn pump(&mut self) -> ActionOutcome {
        let mut out = ActionOutcome::empty();
        loop {
            self.collect_outboxes();
            let Some(env) = self.queue.pop_front() else {
                break;
            };
            if let Some(i) = self.holds.iter().position(|t| *t == env.msg_type) {
                self.holds.remove(i);
                self.held.push_back(env);
                continue;
            }
            let step = self.deliver(env, None);
            out.absorb(step);
        }
        out
    }

    fn act(
        &mut self,
        actor: &str,
        f: impl FnOnce(&mut Client, crate::kdf::Timestamp) -> Result<(), Rejection>,
    ) -> Result<ActionOutcome, SimError> {
        let now = self.clock.now();
        let client = self.client_mut(actor)?;
        match f(client, now) {
            Ok(()) => Ok(self.pump()),
            Err(r) => Ok(ActionOutcome::local(r)),
        }
    }

    pub fn register(&mut self, actor: &str) -> Result<ActionOutcome, SimError> {
        self.act(actor, |c, now| {
            c.register(now);
            Ok(())
        })
    }

    /// Logs in with explicit credentials, or the actor's own by default.
    pub fn login(
        &mut self,
        actor: &str,
        uid: Option<&str>,
        pin: Option<&str>,
    ) -> Result<ActionOutcome, SimError> {
        let client = self.client(actor)?;
        let uid = match uid {
            Some(u) => u.to_string(),
            None => self.uid_of(actor)?,
        };
        let pin = pin
            .map(str::to_string)
            .or_else(|| client.pin().map(str::to_string))
            .unwrap_or_default();
        self.act(actor, |c, now| {
            c.login(&uid, &pin, now);
            Ok(())
        })
    }

    /// Submits the given OTP, or the last one the actor received by SMS.
    pub fn otp(&mut self, actor: &str, code: Option<&str>) -> Result<ActionOutcome, SimError> {
        let code = match code {
            Some(c) => c.to_string(),
            None => self
                .client(actor)?
                .last_otp()
                .unwrap_or("000000")
                .to_string(),
        };
        self.act(actor, |c, now| c.submit_otp(&code, now))
    }

    pub fn activate(&mut self, actor: &str, code: Option<&str>) -> Result<ActionOutcome, SimError> {
        let code = match code {
            Some(c) => c.to_string(),
            None => self
                .client(actor)?
                .last_activation_code()
                .unwrap_or("000000")
                .to_string(),
        };
        self.act(actor, |c, now| c.activate(&code, now))
    }

    pub fn send_card(
        &mut self,
        actor: &str,
        recipient_uid: &str,
    ) -> Result<ActionOutcome, SimError> {
        let to = recipient_uid.to_string();
        self.act(actor, |c, now| c.send_card(&to, now))
    }

    pub fn message(
        &mut self,
        actor: &str,
        recipient_uid: &str,
        text: &[u8],
    ) -> Result<ActionOutcome, SimError> {
        let to = recipient_uid.to_string();
        let text = text.to_vec();
        self.act(actor, |c, now| c.send_message(&to, &text, now))
    }

    pub fn request_server_key(&mut self, actor: &str) -> Result<ActionOutcome, SimError> {
        self.act(actor, |c, now| c.request_server_key(now))
    }

    pub fn resend_pin(&mut self, actor: &str) -> Result<ActionOutcome, SimError> {
        self.act(actor, |c, now| c.request_pin_resend(now))
    }

    pub fn change_pin(&mut self, actor: &str) -> Result<ActionOutcome, SimError> {
        self.act(actor, |c, now| c.request_pin_change(now))
    }

    pub fn resend_card(
        &mut self,
        actor: &str,
        pin: Option<&str>,
    ) -> Result<ActionOutcome, SimError> {
        let pin = match pin {
            Some(p) => p.to_string(),
            None => self.client(actor)?.pin().unwrap_or_default().to_string(),
        };
        self.act(actor, |c, now| c.request_card_resend(&pin, now))
    }

    pub fn change_contact(
        &mut self,
        actor: &str,
        email: &str,
        mobile: &str,
    ) -> Result<ActionOutcome, SimError> {
        let (email, mobile) = (email.to_string(), mobile.to_string());
        self.act(actor, |c, now| {
            c.request_contact_change(&email, &mobile, now)
        })
    }

    /// Hands `victim`'s per-user server public key to `actor`, as if read
    /// off an intercepted SMS.
    pub fn learn_key(&mut self, actor: &str, victim: &str) -> Result<(), SimError> {
        let uid = self.uid_of(victim)?;
        let key = self
            .server
            .record(&uid)
            .map(|r| r.server_keys.public_key())
            .ok_or_else(|| SimError::NoUid(victim.to_string()))?;
        self.client_mut(actor)?.learn_server_key(&uid, key);
        Ok(())
    }

    fn entry_envelope(&self, seq: u64) -> Result<Envelope, SimError> {
        self.log
            .get(seq)
            .map(|e| e.envelope.clone())
            .ok_or_else(|| SimError::NoSuchEntry(format!("#{seq}")))
    }

    /// Redelivers a logged payload unchanged at the current clock.
    pub fn replay(&mut self, seq: u64) -> Result<ActionOutcome, SimError> {
        let env = self.entry_envelope(seq)?;
        let mut out = self.deliver(env, Some(format!("replay:#{seq}")));
        out.absorb(self.pump());
        Ok(out)
    }

    fn resolve_index(index: i64, len: usize) -> Result<usize, SimError> {
        let resolved = if index < 0 { len as i64 + index } else { index };
        if resolved < 0 || resolved as usize >= len {
            return Err(SimError::IndexOutOfRange { index, len });
        }
        Ok(resolved as usize)
    }

    /// Redelivers a logged payload with one byte replaced. Negative indices
    /// count from the end.
    pub fn tamper(
        &mut self,
        seq: u64,
        index: i64,
        new_byte: u8,
    ) -> Result<ActionOutcome, SimError> {
        let mut env = self.entry_envelope(seq)?;
        let at = Self::resolve_index(index, env.payload.len())?;
        env.payload[at] = new_byte;
        let mut out = self.deliver(env, Some(format!("tamper:#{seq}[{at}]={new_byte:#04x}")));
        out.absorb(self.pump());
        Ok(out)
    }

    /// Flips one payload bit; bit 0 is the most significant bit of byte 0.
    pub fn flip_bit(&mut self, seq: u64, bit: i64) -> Result<ActionOutcome, SimError> {
        let len = self.entry_envelope(seq)?.payload.len();
        let at = Self::resolve_index(bit, len * 8)?;
        let byte = self.entry_envelope(seq)?.payload[at / 8] ^ (0x80 >> (at % 8));
        self.tamper(seq, (at / 8) as i64, byte)
    }

    /// Advances the clock by `ms`, then delivers the oldest held envelope.
    pub fn release(&mut self, ms: u64) -> Result<ActionOutcome, SimError> {
        let env = self.held.pop_front().ok_or(SimError::NothingHeld)?;
        self.clock.advance(ms);
        let mut out = self.deliver(env, Some(format!("delay:{ms}ms")));
        out.absorb(self.pump());
        Ok(out)
    }

    /// Whether the eavesdropped traffic alone reveals `actor`'s PIN: the
    /// registration email opens under any captured server key SMS.
    pub fn eavesdropper_recovers_pin(&self, actor: &str) -> Result<bool, SimError> {
        let client = self.client(actor)?;
        let Some(pin) = client.pin() else {
            return Ok(false);
        };
        let keys: Vec<RsaPublicKey> = self
            .captured
            .iter()
            .filter(|e| e.msg_type == MsgType::ServerKeySms)
            .filter_map(|e| {
                frame::decode(&e.payload, 1)
                    .ok()?
                    .text(0)
                    .ok()?
                    .parse()
                    .ok()
            })
            .collect();
        for mail in self
            .captured
            .iter()
            .filter(|e| e.msg_type == MsgType::RegistrationEmail)
        {
            let Ok(f) = frame::decode(&mail.payload, 1) else {
                continue;
            };
            for key in &keys {
                let Ok(plain) = decrypt_bytes(f.bytes(0), key) else {
                    continue;
                };
                if let Ok(reg) = frame::decode(&plain, 2) {
                    if reg.text(1).ok() == Some(pin) {
                        return Ok(true);
                    }
                }
            }
        }
        Ok(false)
    }
}
