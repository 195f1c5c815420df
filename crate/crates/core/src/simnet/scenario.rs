//! Scenario scripts: one action per line, `#` comments, shell-style quoting.
//!
//! ```text
//! seed 42
//! actor alice "Alice Adams" alice@mail.sim 0790000001
//! register alice
//! expect ok
//! login alice @alice WRONG1
//! expect wrong-outh-code
//! assert not logged-in alice
//! ```
//!
//! `@name` stands for that actor's uid. `expect` checks the action on the
//! line before it.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::kdf::FreshnessWindow;
use crate::protocol::{
    Channel, DeviceDescriptor, MsgType, SERVER_EMAIL, SERVER_ENDPOINT, SERVER_SMS,
};

use super::{EventLog, SimError, World};

const BUNDLED: &[(&str, &str)] = &[
    ("happy-path", include_str!("../../scenarios/happy-path.scn")),
    (
        "three-strikes",
        include_str!("../../scenarios/three-strikes.scn"),
    ),
    (
        "mitm-replay",
        include_str!("../../scenarios/mitm-replay.scn"),
    ),
    (
        "secret-requests",
        include_str!("../../scenarios/secret-requests.scn"),
    ),
    ("known-gaps", include_str!("../../scenarios/known-gaps.scn")),
];

/// The scenarios shipped with the crate, as `(name, script)`.
pub fn bundled() -> &'static [(&'static str, &'static str)] {
    BUNDLED
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UidRef {
    Actor(String),
    Literal(String),
}

impl UidRef {
    fn parse(token: &str) -> Self {
        match token.strip_prefix('@') {
            Some(actor) => UidRef::Actor(actor.to_string()),
            None => UidRef::Literal(token.to_string()),
        }
    }

    fn resolve(&self, world: &World) -> Result<String, SimError> {
        match self {
            UidRef::Actor(a) => world.uid_of(a),
            UidRef::Literal(u) => Ok(u.clone()),
        }
    }
}

/// Picks a log entry: `#12` or `last:<MsgType>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Seq(u64),
    Last(MsgType),
}

impl FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(n) = s.strip_prefix('#') {
            return n
                .parse()
                .map(Selector::Seq)
                .map_err(|e| format!("{s:?}: {e}"));
        }
        if let Some(t) = s.strip_prefix("last:") {
            return t.parse().map(Selector::Last);
        }
        Err(format!("bad selector {s:?}; use #<seq> or last:<MsgType>"))
    }
}

impl Selector {
    fn resolve(&self, log: &EventLog) -> Result<u64, SimError> {
        match self {
            Selector::Seq(n) => log
                .get(*n)
                .map(|e| e.seq)
                .ok_or_else(|| SimError::NoSuchEntry(format!("#{n}"))),
            Selector::Last(t) => log
                .last_of(*t)
                .map(|e| e.seq)
                .ok_or_else(|| SimError::NoSuchEntry(format!("last:{t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assertion {
    LoggedIn(String),
    Blacklisted(String),
    HasCard {
        actor: String,
        of: String,
    },
    Received {
        actor: String,
        text: String,
    },
    InboxCount {
        actor: String,
        count: usize,
    },
    FailCount {
        actor: String,
        count: u32,
    },
    Confidential,
    EavesdroppedPin(String),
    /// No delivery to or from the server since the last `mark`.
    ServerQuiet,
    AdversaryAccepted(usize),
    Not(Box<Assertion>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Actor {
        name: String,
        display: String,
        email: String,
        mobile: String,
    },
    Device {
        actor: String,
        device: DeviceDescriptor,
    },
    Register(String),
    Login {
        actor: String,
        uid: Option<UidRef>,
        pin: Option<String>,
    },
    Otp {
        actor: String,
        code: Option<String>,
    },
    Activate {
        actor: String,
        code: Option<String>,
    },
    SendCard {
        actor: String,
        to: UidRef,
    },
    Msg {
        actor: String,
        to: UidRef,
        text: String,
    },
    RequestKey(String),
    ResendPin(String),
    ChangePin(String),
    ResendCard {
        actor: String,
        pin: Option<String>,
    },
    ChangeContact {
        actor: String,
        email: String,
        mobile: String,
    },
    LearnKey {
        actor: String,
        victim: String,
    },
    Advance(u64),
    Replay(Selector),
    Tamper {
        target: Selector,
        index: i64,
        byte: u8,
    },
    FlipBit {
        target: Selector,
        bit: i64,
    },
    Hold(MsgType),
    Release(u64),
    Eavesdrop(Channel),
    Mark,
    Assert(Assertion),
}

/// `ok` or a rejection code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLine {
    pub line: usize,
    pub source: String,
    pub action: Action,
    pub expect: Option<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub seed: u64,
    pub window: FreshnessWindow,
    pub lines: Vec<ScriptLine>,
}

fn parse_u64(token: &str) -> Result<u64, String> {
    token.parse().map_err(|e| format!("{token:?}: {e}"))
}

fn parse_i64(token: &str) -> Result<i64, String> {
    token.parse().map_err(|e| format!("{token:?}: {e}"))
}

fn parse_byte(token: &str) -> Result<u8, String> {
    match token.strip_prefix("0x") {
        Some(h) => u8::from_str_radix(h, 16),
        None => token.parse(),
    }
    .map_err(|e| format!("{token:?}: {e}"))
}

fn parse_assertion(args: &[String]) -> Result<Assertion, String> {
    let arg = |i: usize| {
        args.get(i)
            .cloned()
            .ok_or_else(|| format!("assert {} needs more arguments", args.join(" ")))
    };
    let head = arg(0)?;
    Ok(match head.as_str() {
        "not" => Assertion::Not(Box::new(parse_assertion(&args[1..])?)),
        "logged-in" => Assertion::LoggedIn(arg(1)?),
        "blacklisted" => Assertion::Blacklisted(arg(1)?),
        "has-card" => Assertion::HasCard {
            actor: arg(1)?,
            of: arg(2)?,
        },
        "received" => Assertion::Received {
            actor: arg(1)?,
            text: arg(2)?,
        },
        "inbox-count" => Assertion::InboxCount {
            actor: arg(1)?,
            count: parse_u64(&arg(2)?)? as usize,
        },
        "fail-count" => Assertion::FailCount {
            actor: arg(1)?,
            count: parse_u64(&arg(2)?)? as u32,
        },
        "confidential" => Assertion::Confidential,
        "eavesdropped-pin" => Assertion::EavesdroppedPin(arg(1)?),
        "server-quiet" => Assertion::ServerQuiet,
        "adversary-accepted" => Assertion::AdversaryAccepted(parse_u64(&arg(1)?)? as usize),
        other => return Err(format!("unknown assertion {other:?}")),
    })
}

fn parse_action(tokens: &[String]) -> Result<Action, String> {
    let arg = |i: usize| {
        tokens
            .get(i)
            .cloned()
            .ok_or_else(|| format!("{} needs more arguments", tokens[0]))
    };
    let opt = |i: usize| tokens.get(i).cloned();
    let arity = |max: usize| {
        if tokens.len() > max + 1 {
            Err(format!("{} takes at most {max} arguments", tokens[0]))
        } else {
            Ok(())
        }
    };
    let verb = tokens[0].as_str();
    if verb != "assert" {
        arity(match verb {
            "actor" | "device" => 4,
            "login" => 3,
            "change-contact" | "tamper" | "msg" => 3,
            "send-card" | "flipbit" | "otp" | "activate" | "resend-card" | "learn-key" => 2,
            "mark" => 0,
            _ => 1,
        })?;
    }
    Ok(match verb {
        "actor" => Action::Actor {
            name: arg(1)?,
            display: arg(2)?,
            email: arg(3)?,
            mobile: arg(4)?,
        },
        "device" => Action::Device {
            actor: arg(1)?,
            device: DeviceDescriptor {
                name: arg(2)?,
                address: arg(3)?,
                provider: arg(4)?,
            },
        },
        "register" => Action::Register(arg(1)?),
        "login" => Action::Login {
            actor: arg(1)?,
            uid: opt(2).map(|t| UidRef::parse(&t)),
            pin: opt(3),
        },
        "otp" => Action::Otp {
            actor: arg(1)?,
            code: opt(2),
        },
        "activate" => Action::Activate {
            actor: arg(1)?,
            code: opt(2),
        },
        "send-card" => Action::SendCard {
            actor: arg(1)?,
            to: UidRef::parse(&arg(2)?),
        },
        "msg" => Action::Msg {
            actor: arg(1)?,
            to: UidRef::parse(&arg(2)?),
            text: arg(3)?,
        },
        "request-key" => Action::RequestKey(arg(1)?),
        "resend-pin" => Action::ResendPin(arg(1)?),
        "change-pin" => Action::ChangePin(arg(1)?),
        "resend-card" => Action::ResendCard {
            actor: arg(1)?,
            pin: opt(2),
        },
        "change-contact" => Action::ChangeContact {
            actor: arg(1)?,
            email: arg(2)?,
            mobile: arg(3)?,
        },
        "learn-key" => Action::LearnKey {
            actor: arg(1)?,
            victim: arg(2)?,
        },
        "advance" => Action::Advance(parse_u64(&arg(1)?)?),
        "replay" => Action::Replay(arg(1)?.parse()?),
        "tamper" => Action::Tamper {
            target: arg(1)?.parse()?,
            index: parse_i64(&arg(2)?)?,
            byte: parse_byte(&arg(3)?)?,
        },
        "flipbit" => Action::FlipBit {
            target: arg(1)?.parse()?,
            bit: parse_i64(&arg(2)?)?,
        },
        "hold" => Action::Hold(arg(1)?.parse()?),
        "release" => Action::Release(parse_u64(&arg(1)?)?),
        "eavesdrop" => Action::Eavesdrop(arg(1)?.parse()?),
        "mark" => Action::Mark,
        "assert" => Action::Assert(parse_assertion(&tokens[1..])?),
        other => return Err(format!("unknown action {other:?}")),
    })
}

/// Escapes a word-initial `#` followed by a digit so the tokenizer keeps
/// `#12` selectors instead of reading them as a comment.
fn protect_selectors(line: &str) -> String {
    let mut out = String::with_capacity(line.len() + 4);
    let mut prev_space = true;
    let mut quote: Option<char> = None;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (quote, c) {
            (None, '\'' | '"') => quote = Some(c),
            (Some(q), _) if c == q => quote = None,
            (None, '#') if prev_space && chars.peek().is_some_and(char::is_ascii_digit) => {
                out.push('\\')
            }
            _ => {}
        }
        prev_space = c.is_whitespace();
        out.push(c);
    }
    out
}

pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let mut scenario = Scenario {
        seed: 0,
        window: FreshnessWindow::default(),
        lines: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| SimError::Parse { line, reason };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens = shlex::split(&protect_selectors(trimmed))
            .ok_or_else(|| err("unbalanced quotes".into()))?;
        match tokens[0].as_str() {
            "seed" if tokens.len() == 2 => scenario.seed = parse_u64(&tokens[1]).map_err(err)?,
            "window" if tokens.len() == 2 => {
                let ms = parse_u64(&tokens[1]).map_err(err)?;
                if ms == 0 {
                    return Err(err("window must be positive".into()));
                }
                scenario.window = FreshnessWindow::new(ms);
            }
            "expect" if tokens.len() == 2 => {
                let last = scenario
                    .lines
                    .last_mut()
                    .ok_or_else(|| err("expect before any action".into()))?;
                if matches!(last.action, Action::Assert(_)) || last.expect.is_some() {
                    return Err(err("expect must follow an action".into()));
                }
                last.expect = Some(Expectation(tokens[1].clone()));
            }
            "seed" | "window" | "expect" => {
                return Err(err(format!("{} takes one argument", tokens[0])))
            }
            _ => scenario.lines.push(ScriptLine {
                line,
                source: trimmed.to_string(),
                action: parse_action(&tokens).map_err(err)?,
                expect: None,
            }),
        }
    }
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    pub line: usize,
    pub source: String,
    /// `ok`, a rejection code, or `pass`/`fail` for assertions.
    pub outcome: String,
    pub expected: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub log: EventLog,
    pub passed: bool,
}

impl ScenarioReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let expected = s
                .expected
                .as_deref()
                .map(|e| format!(" (expected {e})"))
                .unwrap_or_default();
            let mark = if s.passed { "PASS" } else { "FAIL" };
            writeln!(
                out,
                "{mark} line {}: {} -> {}{expected}",
                s.line, s.source, s.outcome
            )
            .expect("write to String");
        }
        let failed = self.steps.iter().filter(|s| !s.passed).count();
        writeln!(
            out,
            "{} steps, {} failed, seed {}: {}",
            self.steps.len(),
            failed,
            self.seed,
            if self.passed { "PASSED" } else { "FAILED" }
        )
        .expect("write to String");
        out
    }
}

fn check(world: &World, a: &Assertion, mark: usize) -> Result<bool, SimError> {
    Ok(match a {
        Assertion::Not(inner) => !check(world, inner, mark)?,
        Assertion::LoggedIn(actor) => world.client(actor)?.is_logged_in(),
        Assertion::Blacklisted(actor) => {
            let uid = world.uid_of(actor)?;
            world.server().state().blacklist.contains(&uid)
        }
        Assertion::HasCard { actor, of } => {
            let uid = world.uid_of(of)?;
            world.client(actor)?.saved_public_cards().contains_key(&uid)
        }
        Assertion::Received { actor, text } => world
            .client(actor)?
            .messages()
            .last()
            .is_some_and(|m| m.body == text.as_bytes()),
        Assertion::InboxCount { actor, count } => world.client(actor)?.messages().len() == *count,
        Assertion::FailCount { actor, count } => {
            let uid = world.uid_of(actor)?;
            world
                .server()
                .state()
                .fail_counts
                .get(&uid)
                .copied()
                .unwrap_or(0)
                == *count
        }
        Assertion::Confidential => world.confidentiality_findings().is_empty(),
        Assertion::EavesdroppedPin(actor) => world.eavesdropper_recovers_pin(actor)?,
        Assertion::ServerQuiet => world.log().entries()[mark..].iter().all(|e| {
            let server = [SERVER_ENDPOINT, SERVER_EMAIL, SERVER_SMS];
            !server.contains(&e.envelope.sender.as_str())
                && !server.contains(&e.envelope.recipient.as_str())
        }),
        Assertion::AdversaryAccepted(n) => world.adversary_accepted().len() == *n,
    })
}

fn step(world: &mut World, action: &Action) -> Result<Option<String>, SimError> {
    let outcome = match action {
        Action::Actor {
            name,
            display,
            email,
            mobile,
        } => {
            world.add_actor(name, display, email, mobile)?;
            return Ok(Some("ok".into()));
        }
        Action::Device { actor, device } => {
            world.set_device(actor, device.clone())?;
            return Ok(Some("ok".into()));
        }
        Action::Register(a) => world.register(a)?,
        Action::Login { actor, uid, pin } => {
            let uid = uid.as_ref().map(|u| u.resolve(world)).transpose()?;
            world.login(actor, uid.as_deref(), pin.as_deref())?
        }
        Action::Otp { actor, code } => world.otp(actor, code.as_deref())?,
        Action::Activate { actor, code } => world.activate(actor, code.as_deref())?,
        Action::SendCard { actor, to } => {
            let to = to.resolve(world)?;
            world.send_card(actor, &to)?
        }
        Action::Msg { actor, to, text } => {
            let to = to.resolve(world)?;
            world.message(actor, &to, text.as_bytes())?
        }
        Action::RequestKey(a) => world.request_server_key(a)?,
        Action::ResendPin(a) => world.resend_pin(a)?,
        Action::ChangePin(a) => world.change_pin(a)?,
        Action::ResendCard { actor, pin } => world.resend_card(actor, pin.as_deref())?,
        Action::ChangeContact {
            actor,
            email,
            mobile,
        } => world.change_contact(actor, email, mobile)?,
        Action::LearnKey { actor, victim } => {
            world.learn_key(actor, victim)?;
            return Ok(Some("ok".into()));
        }
        Action::Advance(ms) => {
            world.advance(*ms);
            return Ok(Some("ok".into()));
        }
        Action::Replay(sel) => {
            let seq = sel.resolve(world.log())?;
            world.replay(seq)?
        }
        Action::Tamper {
            target,
            index,
            byte,
        } => {
            let seq = target.resolve(world.log())?;
            world.tamper(seq, *index, *byte)?
        }
        Action::FlipBit { target, bit } => {
            let seq = target.resolve(world.log())?;
            world.flip_bit(seq, *bit)?
        }
        Action::Hold(t) => {
            world.hold(*t);
            return Ok(Some("ok".into()));
        }
        Action::Release(ms) => world.release(*ms)?,
        Action::Eavesdrop(c) => {
            world.eavesdrop(*c);
            return Ok(Some("ok".into()));
        }
        Action::Mark | Action::Assert(_) => return Ok(None),
    };
    Ok(Some(outcome.code().to_string()))
}

/// Runs a script against a fresh world. `seed` overrides the script's own.
/// Errors are script faults (unknown actor, bad selector); unmet
/// expectations are reported as failed steps.
pub fn run_scenario(scenario: &Scenario, seed: Option<u64>) -> Result<ScenarioReport, SimError> {
    let seed = seed.unwrap_or(scenario.seed);
    let mut world = World::new(seed, scenario.window);
    let mut steps = Vec::new();
    let mut mark = 0;
    for line in &scenario.lines {
        let (outcome, passed) = match &line.action {
            Action::Mark => {
                mark = world.log().len();
                ("ok".to_string(), true)
            }
            Action::Assert(a) => {
                let ok = check(&world, a, mark).map_err(|e| SimError::Script {
                    line: line.line,
                    reason: e.to_string(),
                })?;
                ((if ok { "pass" } else { "fail" }).to_string(), ok)
            }
            action => {
                let code = step(&mut world, action)
                    .map_err(|e| SimError::Script {
                        line: line.line,
                        reason: e.to_string(),
                    })?
                    .expect("actions report an outcome");
                let passed = line.expect.as_ref().is_none_or(|e| e.0 == code);
                (code, passed)
            }
        };
        steps.push(StepReport {
            line: line.line,
            source: line.source.clone(),
            outcome,
            expected: line.expect.as_ref().map(|e| e.0.clone()),
            passed,
        });
    }
    let passed = steps.iter().all(|s| s.passed);
    Ok(ScenarioReport {
        seed,
        steps,
        log: world.log().clone(),
        passed,
    })
}
