//! Interactive client. One human actor shares a simulated network with an
//! echo bot that returns public cards and repeats messages back.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use cardauth_core::cards::serialize_card;
use cardauth_core::cards::Card;
use cardauth_core::kdf::FreshnessWindow;
use cardauth_core::protocol::{MsgType, SERVER_ENDPOINT};
use cardauth_core::simnet::{ActionOutcome, DeliveryOutcome, SimError, World};

use crate::EXIT_OK;

pub const HUMAN: &str = "me";
pub const BOT: &str = "bot";

/// Simulated time that passes before each command.
const STEP_MS: u64 = 1000;

const DEFAULT_NAME: &str = "Demo User";
const DEFAULT_EMAIL: &str = "me@mail.sim";
const DEFAULT_MOBILE: &str = "0790000100";

const HELP: &str = "\
commands:
  register [NAME EMAIL MOBILE]   create an account (defaults to a demo identity)
  login UID PIN                  start a login; the OTP arrives by SMS
  otp [CODE]                     submit the OTP (default: the last one received)
  activate [CODE]                unlock a blocked account
  card view                      show your private card
  card send RECIPIENT            send your public card to a user id (or \"bot\")
  card resend PIN                ask for your private card again
  cards list                     list the public cards you have saved
  msg RECIPIENT TEXT...          send a signed message
  inbox                          list received messages
  key                            ask for the server public key by SMS
  pin resend | pin change        PIN recovery and rotation
  contact EMAIL MOBILE           change your contact details
  wait MS                        let simulated time pass
  help                           this text
  quit                           leave
";

pub struct Session {
    world: World,
    answered_cards: BTreeSet<String>,
    seen_messages: usize,
}

fn sim(e: SimError) -> String {
    e.to_string()
}

impl Session {
    /// A world with the bot registered and logged in.
    pub fn new(seed: u64) -> Result<Self, String> {
        let mut world = World::new(seed, FreshnessWindow::default());
        world
            .add_actor(BOT, "Echo Bot", "bot@mail.sim", "0790000099")
            .map_err(sim)?;
        let steps = [
            world.register(BOT).map_err(sim)?,
            world.login(BOT, None, None).map_err(sim)?,
            world.otp(BOT, None).map_err(sim)?,
        ];
        if let Some(r) = steps.iter().find_map(|o| o.rejection.as_ref()) {
            return Err(format!("bot setup failed: {r}"));
        }
        Ok(Self {
            world,
            answered_cards: BTreeSet::new(),
            seen_messages: 0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    fn bot_uid(&self) -> String {
        self.world.uid_of(BOT).unwrap_or_default()
    }

    fn has_human(&self) -> bool {
        self.world.client(HUMAN).is_ok()
    }

    fn resolve(&self, recipient: &str) -> String {
        if recipient == BOT {
            self.bot_uid()
        } else {
            recipient.to_string()
        }
    }

    /// Lines for deliveries addressed to the human, then the refusal if any.
    fn render(&self, outcome: &ActionOutcome, show_rejection: bool, lines: &mut Vec<String>) {
        let mut notes = outcome.notes.iter();
        let human = self.world.client(HUMAN).ok();
        let mut locked = false;
        for seq in &outcome.deliveries {
            let Some(entry) = self.world.log().get(*seq) else {
                continue;
            };
            let env = &entry.envelope;
            if env.recipient == SERVER_ENDPOINT {
                continue;
            }
            let note = match entry.outcome {
                DeliveryOutcome::Accepted => {
                    notes.next().map(|(actor, n)| (actor.as_str(), n.clone()))
                }
                _ => None,
            };
            let mine = human.is_some_and(|c| c.owns_address(&env.recipient));
            if !mine {
                continue;
            }
            let text = match (&entry.outcome, note) {
                (DeliveryOutcome::Accepted, Some((_, n))) => n,
                (other, _) => format!("{} {other}", env.msg_type),
            };
            lines.push(format!("  [{} from {}] {text}", env.channel, env.sender));
            locked |= env.msg_type == MsgType::BlockNotice;
        }
        if locked {
            lines.push("  account locked; type: activate CODE".into());
        }
        if show_rejection {
            if let Some(r) = &outcome.rejection {
                lines.push(format!("  ! {}: {r}", r.code()));
            }
        }
    }

    /// Bot reactions: return every newly saved card and echo every new message.
    fn bot_turn(&mut self, lines: &mut Vec<String>) {
        loop {
            let Ok(bot) = self.world.client(BOT) else {
                return;
            };
            let own = bot.uid().map(str::to_string);
            let new_card = bot
                .saved_public_cards()
                .keys()
                .find(|uid| !self.answered_cards.contains(*uid) && Some(*uid) != own.as_ref())
                .cloned();
            let new_message = bot.messages().get(self.seen_messages).cloned();
            if let Some(uid) = new_card {
                self.answered_cards.insert(uid.clone());
                if let Ok(o) = self.world.send_card(BOT, &uid) {
                    self.render(&o, false, lines);
                }
            } else if let Some(m) = new_message {
                self.seen_messages += 1;
                let reply = format!("echo: {}", String::from_utf8_lossy(&m.body));
                if let Ok(o) = self.world.message(BOT, &m.from_uid, reply.as_bytes()) {
                    self.render(&o, false, lines);
                }
            } else {
                return;
            }
        }
    }

    fn need_human(&self) -> Result<(), String> {
        if self.has_human() {
            Ok(())
        } else {
            Err("not registered yet; type: register".into())
        }
    }

    /// Runs one command line and returns the lines to print.
    pub fn execute(&mut self, line: &str) -> Vec<String> {
        let mut lines = Vec::new();
        let Some(words) = shlex::split(line) else {
            lines.push("  unbalanced quotes".into());
            return lines;
        };
        let words: Vec<&str> = words.iter().map(String::as_str).collect();
        if words.is_empty() {
            return lines;
        }
        self.world.advance(STEP_MS);
        match self.dispatch(&words, &mut lines) {
            Ok(Some(outcome)) => {
                self.render(&outcome, true, &mut lines);
                if words[0] == "register" {
                    if let Ok(c) = self.world.client(HUMAN) {
                        if let (Some(uid), Some(pin)) = (c.uid(), c.pin()) {
                            lines.push(format!("  your user id is {uid} and your PIN is {pin}"));
                        }
                    }
                }
                self.bot_turn(&mut lines);
            }
            Ok(None) => {}
            Err(msg) => lines.push(format!("  {msg}")),
        }
        lines
    }

    fn dispatch(
        &mut self,
        words: &[&str],
        lines: &mut Vec<String>,
    ) -> Result<Option<ActionOutcome>, String> {
        let outcome = match words {
            ["help"] => {
                lines.extend(HELP.lines().map(str::to_string));
                return Ok(None);
            }
            ["register"] => self.register(DEFAULT_NAME, DEFAULT_EMAIL, DEFAULT_MOBILE)?,
            ["register", name, email, mobile] => self.register(name, email, mobile)?,
            ["login", uid, pin] => {
                self.ensure_human()?;
                self.world.login(HUMAN, Some(uid), Some(pin)).map_err(sim)?
            }
            ["otp"] => {
                self.need_human()?;
                self.world.otp(HUMAN, None).map_err(sim)?
            }
            ["otp", code] => {
                self.need_human()?;
                self.world.otp(HUMAN, Some(code)).map_err(sim)?
            }
            ["activate"] => {
                self.need_human()?;
                self.world.activate(HUMAN, None).map_err(sim)?
            }
            ["activate", code] => {
                self.need_human()?;
                self.world.activate(HUMAN, Some(code)).map_err(sim)?
            }
            ["card", "view"] => {
                self.need_human()?;
                let client = self.world.client(HUMAN).map_err(sim)?;
                let card = client
                    .open_private_card()
                    .map_err(|r| format!("{}: {r}", r.code()))?;
                lines.extend(
                    serialize_card(&Card::Private(card))
                        .lines()
                        .map(|l| format!("  {l}")),
                );
                return Ok(None);
            }
            ["card", "send", recipient] => {
                self.need_human()?;
                let uid = self.resolve(recipient);
                self.world.send_card(HUMAN, &uid).map_err(sim)?
            }
            ["card", "resend", pin] => {
                self.need_human()?;
                self.world.resend_card(HUMAN, Some(pin)).map_err(sim)?
            }
            ["cards", "list"] => {
                self.need_human()?;
                let client = self.world.client(HUMAN).map_err(sim)?;
                if client.saved_public_cards().is_empty() {
                    lines.push("  no public cards saved".into());
                }
                for c in client.saved_public_cards().values() {
                    lines.push(format!(
                        "  {} {} <{}> {} key {}",
                        c.user_id, c.user_name, c.user_email, c.user_mobile_number, c.pub_key
                    ));
                }
                return Ok(None);
            }
            ["msg", recipient, words @ ..] if !words.is_empty() => {
                self.need_human()?;
                let uid = self.resolve(recipient);
                let text = words.join(" ");
                self.world
                    .message(HUMAN, &uid, text.as_bytes())
                    .map_err(sim)?
            }
            ["inbox"] => {
                self.need_human()?;
                let client = self.world.client(HUMAN).map_err(sim)?;
                if client.messages().is_empty() {
                    lines.push("  inbox is empty".into());
                }
                for m in client.messages() {
                    lines.push(format!(
                        "  {}: {}",
                        m.from_uid,
                        String::from_utf8_lossy(&m.body)
                    ));
                }
                return Ok(None);
            }
            ["key"] => {
                self.need_human()?;
                self.world.request_server_key(HUMAN).map_err(sim)?
            }
            ["pin", "resend"] => {
                self.need_human()?;
                self.world.resend_pin(HUMAN).map_err(sim)?
            }
            ["pin", "change"] => {
                self.need_human()?;
                self.world.change_pin(HUMAN).map_err(sim)?
            }
            ["contact", email, mobile] => {
                self.need_human()?;
                self.world
                    .change_contact(HUMAN, email, mobile)
                    .map_err(sim)?
            }
            ["wait", ms] => {
                let ms: u64 = ms
                    .parse()
                    .map_err(|_| format!("not a number of milliseconds: {ms}"))?;
                self.world.advance(ms);
                lines.push(format!(
                    "  clock is now t+{}ms",
                    self.world.clock().elapsed_ms()
                ));
                return Ok(None);
            }
            _ => {
                lines.push(format!("  unknown command: {}", words.join(" ")));
                lines.extend(HELP.lines().map(str::to_string));
                return Ok(None);
            }
        };
        Ok(Some(outcome))
    }

    /// Adds the human with default details if `login` comes first.
    fn ensure_human(&mut self) -> Result<(), String> {
        if !self.has_human() {
            self.world
                .add_actor(HUMAN, DEFAULT_NAME, DEFAULT_EMAIL, DEFAULT_MOBILE)
                .map_err(sim)?;
        }
        Ok(())
    }

    fn register(&mut self, name: &str, email: &str, mobile: &str) -> Result<ActionOutcome, String> {
        if self.world.client(HUMAN).is_ok_and(|c| c.uid().is_some()) {
            return Err("already registered".into());
        }
        if !self.has_human() {
            self.world
                .add_actor(HUMAN, name, email, mobile)
                .map_err(sim)?;
        }
        self.world.register(HUMAN).map_err(sim)
    }
}

/// Reads commands until EOF or `quit`. With `echo`, each command is
/// repeated after the prompt so piped sessions read like typed ones.
pub fn run(seed: u64, echo: bool, input: &mut dyn BufRead, out: &mut dyn Write) -> io::Result<i32> {
    let mut session = match Session::new(seed) {
        Ok(s) => s,
        Err(e) => {
            writeln!(out, "error: {e}")?;
            return Ok(crate::EXIT_FAILURE);
        }
    };
    writeln!(
        out,
        "cardauth client, seed {seed}. Type \"help\" for commands."
    )?;
    writeln!(
        out,
        "Echo Bot is online as {}; it returns public cards and echoes messages.",
        session.bot_uid()
    )?;
    let mut line = String::new();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            break;
        }
        let command = line.trim();
        if echo {
            writeln!(out, "{command}")?;
        }
        if matches!(command, "quit" | "exit") {
            break;
        }
        for l in session.execute(command) {
            writeln!(out, "{l}")?;
        }
    }
    Ok(EXIT_OK)
}
