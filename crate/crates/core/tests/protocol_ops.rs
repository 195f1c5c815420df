mod common;

use cardauth_core::cards::decrypt_private_card;
use cardauth_core::frame;
use cardauth_core::kdf::{
    build_auth_message, compute_outh_code, derive_secret_key, seal_auth_message, AuthCode,
    Timestamp,
};
use cardauth_core::protocol::{
    client_register_complete, Envelope, MsgType, Rejection, SERVER_ENDPOINT,
};
use cardauth_core::rsa::{decrypt_bytes, encrypt_bytes, RsaPublicKey};
use cardauth_core::simnet::World;
use common::{connected, login, registered, world, WINDOW_MS};

fn last_payload(w: &World, t: MsgType) -> Vec<u8> {
    w.log().last_of(t).unwrap().payload().to_vec()
}

fn rejection(w: &mut World, env: Envelope) -> Option<Rejection> {
    let mut out = w.deliver(env, None);
    out.deliveries.extend(w.pump().deliveries);
    out.rejection
}

/// A request sealed under `uid`'s server public key, sent from `actor`.
fn sealed_request(w: &World, actor: &str, t: MsgType, uid: &str, body: &[&[u8]]) -> Envelope {
    let key = w.server().record(uid).unwrap().server_keys.public_key();
    let blob = encrypt_bytes(&frame::encode(body), &key).unwrap();
    Envelope::new(
        t,
        w.client(actor).unwrap().endpoint.clone(),
        SERVER_ENDPOINT,
        frame::encode(&[uid.as_bytes(), &blob]),
        w.clock().now(),
    )
}

#[test]
fn registrations_get_distinct_uids_and_server_keys() {
    let w = registered(1);
    let (a, b) = (w.uid_of("alice").unwrap(), w.uid_of("bob").unwrap());
    assert_eq!((a.as_str(), b.as_str()), ("user1", "user2"));
    let (ra, rb) = (
        w.server().record(&a).unwrap(),
        w.server().record(&b).unwrap(),
    );
    assert_ne!(ra.server_keys.n, rb.server_keys.n);
    assert_ne!(ra.user_keys.n, ra.server_keys.n);
}

#[test]
fn registration_email_opens_under_sms_key() {
    let w = registered(2);
    let uid = w.uid_of("alice").unwrap();
    let email = w
        .log()
        .entries()
        .iter()
        .find(|e| {
            e.msg_type() == MsgType::RegistrationEmail && e.envelope.recipient == "alice@mail.sim"
        })
        .unwrap();
    let sms = w
        .log()
        .entries()
        .iter()
        .find(|e| e.msg_type() == MsgType::ServerKeySms && e.envelope.recipient == "0790000001")
        .unwrap();
    let key: RsaPublicKey = frame::decode(sms.payload(), 1)
        .unwrap()
        .text(0)
        .unwrap()
        .parse()
        .unwrap();
    let blob = frame::decode(email.payload(), 1).unwrap().bytes(0).to_vec();
    let plain = decrypt_bytes(&blob, &key).unwrap();
    let fields = frame::decode(&plain, 2).unwrap();
    let record = w.server().record(&uid).unwrap();
    assert_eq!(fields.text(0).unwrap(), uid);
    assert_eq!(fields.text(1).unwrap(), record.pin.as_str());
    assert_eq!(blob, record.stored_reg_message);
}

#[test]
fn both_sides_agree_on_the_outh_code() {
    let w = registered(3);
    let uid = w.uid_of("alice").unwrap();
    let client = w.client("alice").unwrap();
    let card = client.open_private_card().unwrap();
    let own =
        compute_outh_code(&uid, client.pin().unwrap(), "alice@mail.sim", "0790000001").unwrap();
    assert_eq!(card.outh_code, own);
    assert_eq!(w.server().record(&uid).unwrap().outh_code(), own);
}

#[test]
fn register_complete_is_deterministic_and_hides_secrets() {
    let t = Timestamp(1_600_000_000_000);
    let a = client_register_complete("dev-x", "user9", "Ab12Cd", "x@mail.sim", "0790000009", t)
        .unwrap();
    let b = client_register_complete("dev-x", "user9", "Ab12Cd", "x@mail.sim", "0790000009", t)
        .unwrap();
    assert_eq!(a, b);
    let k = derive_secret_key("user9", "Ab12Cd").unwrap();
    let contains = |needle: &[u8]| a.payload.windows(needle.len()).any(|w| w == needle);
    assert!(!contains(b"Ab12Cd"));
    assert!(!contains(k.as_bytes()));
}

#[test]
fn register_complete_rejections_leave_state_alone() {
    let mut w = world(4);
    w.hold(MsgType::RegisterComplete);
    assert!(w.register("alice").unwrap().is_ok());
    let uid = w.uid_of("alice").unwrap();
    let before = w.server().record(&uid).unwrap().clone();

    let genuine = w.release(WINDOW_MS + 1).unwrap();
    assert!(
        matches!(genuine.rejection, Some(Rejection::Stale { delay_ms }) if delay_ms == 120_001)
    );
    assert_eq!(w.server().record(&uid).unwrap(), &before);
    assert!(w
        .log()
        .entries()
        .iter()
        .all(|e| e.msg_type() != MsgType::PrivateCardEmail));

    let pin = before.pin.as_str().to_string();
    let k = derive_secret_key(&uid, &pin).unwrap();
    let now = w.clock().now();
    let wrong = seal_auth_message(&build_auth_message(&uid, AuthCode(1), now), &k);
    let env = Envelope::new(
        MsgType::RegisterComplete,
        "dev-alice",
        SERVER_ENDPOINT,
        frame::encode(&[uid.as_bytes(), &wrong]),
        now,
    );
    assert_eq!(
        rejection(&mut w, env.clone()),
        Some(Rejection::WrongAuthCode)
    );

    let mut unknown = env;
    unknown.payload = frame::encode(&[b"user77".as_slice(), &wrong]);
    assert!(matches!(
        rejection(&mut w, unknown),
        Some(Rejection::UnknownUid(_))
    ));
    assert_eq!(w.server().record(&uid).unwrap(), &before);
    assert_eq!(
        w.log()
            .last_of(MsgType::Rejected)
            .unwrap()
            .envelope
            .recipient,
        "dev-alice"
    );
}

#[test]
fn login_and_otp_rules() {
    let mut w = registered(5);
    login(&mut w, "alice");
    let seq = w.log().last_of(MsgType::OtpSubmit).unwrap().seq;
    assert_eq!(w.replay(seq).unwrap().rejection, Some(Rejection::WrongOtp));

    // A consumed code does not work for the next login either.
    let old = w.client("alice").unwrap().last_otp().unwrap().to_string();
    assert!(w.login("alice", None, None).unwrap().is_ok());
    let fresh = w.client("alice").unwrap().last_otp().unwrap().to_string();
    if fresh != old {
        assert_eq!(
            w.otp("alice", Some(&old)).unwrap().rejection,
            Some(Rejection::WrongOtp)
        );
        assert!(w.login("alice", None, None).unwrap().is_ok());
    }
    w.advance(300_001);
    assert_eq!(
        w.otp("alice", None).unwrap().rejection,
        Some(Rejection::OtpExpired)
    );
}

#[test]
fn blacklisted_login_stops_before_crypto() {
    let mut w = registered(6);
    let uid = w.uid_of("alice").unwrap();
    for attempt in 1..=3 {
        let out = w.login("alice", None, Some("WRONG1")).unwrap();
        assert_eq!(out.rejection, Some(Rejection::WrongAuthCode));
        let blocked = w.server().state().blacklist.contains(&uid);
        assert_eq!(blocked, attempt == 3, "attempt {attempt}");
    }
    let notice = w.log().last_of(MsgType::BlockNotice).unwrap();
    assert_eq!(notice.envelope.recipient, "alice@mail.sim");
    let f = frame::decode(notice.payload(), 5).unwrap();
    assert_eq!(f.text(1).unwrap(), "alice-device");
    assert_eq!(f.text(2).unwrap(), "10.0.0.2");
    assert!(f.text(3).unwrap().starts_with("2020-01-01T"));
    assert_eq!(f.text(4).unwrap(), "SimTel");
    assert!(w.log().last_of(MsgType::ActivationSms).is_some());

    let before = w.log().len();
    let out = w.login("alice", None, None).unwrap();
    assert_eq!(out.rejection, Some(Rejection::Blacklisted));
    let types: Vec<MsgType> = w.log().entries()[before..]
        .iter()
        .map(|e| e.msg_type())
        .collect();
    assert_eq!(types, [MsgType::LoginRequest, MsgType::RejectionEmail]);
}

#[test]
fn activation_codes() {
    let mut w = registered(7);
    let uid = w.uid_of("alice").unwrap();
    for _ in 0..3 {
        w.login("alice", None, Some("WRONG1")).unwrap();
    }
    assert_eq!(
        w.activate("alice", Some("999999x")).unwrap().rejection,
        Some(Rejection::WrongActivationCode)
    );
    assert!(w.server().state().blacklist.contains(&uid));
    let code = w
        .client("alice")
        .unwrap()
        .last_activation_code()
        .unwrap()
        .to_string();
    w.advance(600_001);
    assert_eq!(
        w.activate("alice", Some(&code)).unwrap().rejection,
        Some(Rejection::ActivationExpired)
    );
    assert!(w.activate("alice", None).unwrap().is_ok());
    assert!(!w.server().state().blacklist.contains(&uid));
    assert_eq!(w.server().state().fail_counts[&uid], 0);
    assert_eq!(
        w.activate("alice", None).unwrap().rejection,
        Some(Rejection::NotBlocked)
    );
    login(&mut w, "alice");
}

#[test]
fn public_card_distribution() {
    let mut w = registered(8);
    login(&mut w, "alice");
    let (a, b) = (w.uid_of("alice").unwrap(), w.uid_of("bob").unwrap());
    let now = w.clock().now().to_be_bytes();
    let env = sealed_request(
        &w,
        "alice",
        MsgType::CardRequest,
        &a,
        &[a.as_bytes(), &1u64.to_be_bytes(), b.as_bytes(), &now],
    );
    assert_eq!(rejection(&mut w, env), Some(Rejection::WrongAuthCode));
    assert!(w.client("bob").unwrap().saved_public_cards().is_empty());
    assert_eq!(
        w.log()
            .last_of(MsgType::RejectionEmail)
            .unwrap()
            .envelope
            .recipient,
        "alice@mail.sim"
    );

    assert!(matches!(
        w.send_card("alice", "user99").unwrap().rejection,
        Some(Rejection::UnknownRecipient(_))
    ));
    assert!(w.send_card("alice", &b).unwrap().is_ok());
    let saved = &w.client("bob").unwrap().saved_public_cards()[&a];
    assert_eq!(saved.user_name, "Alice Adams");
    assert_eq!(saved, &w.server().record(&a).unwrap().public_card);
}

#[test]
fn messaging_after_card_exchange_skips_the_server() {
    let mut w = connected(9);
    let b = w.uid_of("bob").unwrap();
    let before = w.log().len();
    let out = w.message("alice", &b, b"see you at noon").unwrap();
    assert!(out.is_ok());
    let entries = &w.log().entries()[before..];
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].msg_type(), MsgType::UserMessage);
    assert_eq!(
        w.client("bob").unwrap().messages().last().unwrap().body,
        b"see you at noon"
    );
    let payload = entries[0].payload();
    assert!(!payload.windows(15).any(|x| x == b"see you at noon"));

    assert!(w.message("alice", &b, b"").unwrap().is_ok());
    assert!(w
        .client("bob")
        .unwrap()
        .messages()
        .last()
        .unwrap()
        .body
        .is_empty());
    assert!(w
        .client("bob")
        .unwrap()
        .accept_log()
        .iter()
        .all(|r| r.digest_ok && r.fresh_ok));
}

#[test]
fn message_refusals() {
    let mut w = connected(10);
    let b = w.uid_of("bob").unwrap();
    assert!(matches!(
        w.message("alice", "user42", b"x").unwrap().rejection,
        Some(Rejection::MissingCard(_))
    ));
    w.hold(MsgType::UserMessage);
    w.message("alice", &b, b"late").unwrap();
    assert!(matches!(
        w.release(WINDOW_MS + 1).unwrap().rejection,
        Some(Rejection::Stale { .. })
    ));
    w.hold(MsgType::UserMessage);
    w.message("alice", &b, b"on time").unwrap();
    assert!(w.release(WINDOW_MS).unwrap().is_ok());
    assert_eq!(
        w.client("alice").unwrap().rejections().last().unwrap().code,
        "stale"
    );
}

#[test]
fn server_key_requests() {
    let mut w = registered(11);
    let uid = w.uid_of("alice").unwrap();
    assert!(w.request_server_key("alice").unwrap().is_ok());
    let sms = w.log().last_of(MsgType::ServerKeySms).unwrap();
    let text = frame::decode(sms.payload(), 1)
        .unwrap()
        .text(0)
        .unwrap()
        .to_string();
    assert_eq!(
        text,
        w.server()
            .record(&uid)
            .unwrap()
            .server_keys
            .public_key()
            .to_string()
    );
    assert!(text.contains('-'));

    let env = Envelope::new(
        MsgType::ServerKeyRequest,
        "dev-mallory",
        SERVER_ENDPOINT,
        frame::encode(&[b"user50".as_slice(), &w.clock().now().to_be_bytes()]),
        w.clock().now(),
    );
    assert!(matches!(
        rejection(&mut w, env),
        Some(Rejection::UnknownUid(_))
    ));
}

#[test]
fn pin_resend_repeats_the_stored_message() {
    let mut w = registered(12);
    let uid = w.uid_of("alice").unwrap();
    let pin = w.client("alice").unwrap().pin().unwrap().to_string();
    assert!(w.resend_pin("alice").unwrap().is_ok());
    let resent = frame::decode(&last_payload(&w, MsgType::RegistrationEmail), 1)
        .unwrap()
        .bytes(0)
        .to_vec();
    assert_eq!(resent, w.server().record(&uid).unwrap().stored_reg_message);
    assert_eq!(w.client("alice").unwrap().pin().unwrap(), pin);
}

#[test]
fn pin_change() {
    let mut w = registered(13);
    let uid = w.uid_of("alice").unwrap();
    let old_pin = w.client("alice").unwrap().pin().unwrap().to_string();
    let old_k = derive_secret_key(&uid, &old_pin).unwrap();

    let now = w.clock().now().to_be_bytes();
    let before = w.server().record(&uid).unwrap().clone();
    let env = sealed_request(
        &w,
        "alice",
        MsgType::PinChangeRequest,
        &uid,
        &[uid.as_bytes(), &7u64.to_be_bytes(), &now],
    );
    assert_eq!(rejection(&mut w, env), Some(Rejection::WrongAuthCode));
    assert_eq!(w.server().record(&uid).unwrap(), &before);

    assert!(w.change_pin("alice").unwrap().is_ok());
    let new_pin = w.client("alice").unwrap().pin().unwrap().to_string();
    assert_ne!(new_pin, old_pin);
    assert_eq!(w.server().record(&uid).unwrap().pin.as_str(), new_pin);
    let blob = frame::decode(&last_payload(&w, MsgType::PinChangeEmail), 2)
        .unwrap()
        .bytes(1)
        .to_vec();
    assert!(decrypt_private_card(&blob, &old_k).is_err());
    let new_k = derive_secret_key(&uid, &new_pin).unwrap();
    assert_eq!(
        decrypt_private_card(&blob, &new_k)
            .unwrap()
            .pin_code
            .as_str(),
        new_pin
    );

    assert_eq!(
        w.login("alice", None, Some(&old_pin)).unwrap().rejection,
        Some(Rejection::WrongAuthCode)
    );
    login(&mut w, "alice");
}

#[test]
fn card_resend_counts_wrong_pins() {
    let mut w = registered(14);
    let uid = w.uid_of("alice").unwrap();
    assert!(w.resend_card("alice", None).unwrap().is_ok());
    assert!(w.client("alice").unwrap().open_private_card().is_ok());
    for i in 1..=3 {
        assert_eq!(
            w.resend_card("alice", Some("NOPE00")).unwrap().rejection,
            Some(Rejection::WrongPin)
        );
        assert_eq!(w.server().state().blacklist.contains(&uid), i == 3);
    }
    assert_eq!(
        w.resend_card("alice", None).unwrap().rejection,
        Some(Rejection::Blacklisted)
    );
}

#[test]
fn contact_change_reregisters_under_the_same_uid() {
    let mut w = registered(15);
    let uid = w.uid_of("alice").unwrap();
    let before = w.server().record(&uid).unwrap().clone();
    assert!(w
        .change_contact("alice", "alice2@mail.sim", "0790000021")
        .unwrap()
        .is_ok());
    let after = w.server().record(&uid).unwrap().clone();
    assert_eq!(after.uid, uid);
    assert_eq!(w.uid_of("alice").unwrap(), uid);
    assert_ne!(after.outh_code(), before.outh_code());
    assert_ne!(after.server_keys, before.server_keys);
    let client = w.client("alice").unwrap();
    assert_eq!(client.email, "alice2@mail.sim");
    assert_eq!(
        client.open_private_card().unwrap().user_mobile_number,
        "0790000021"
    );
    let mail = w.log().last_of(MsgType::RegistrationEmail).unwrap();
    assert_eq!(mail.envelope.recipient, "alice2@mail.sim");
    let blob = frame::decode(mail.payload(), 1).unwrap().bytes(0).to_vec();
    let old_key = before.server_keys.public_key();
    let opened = decrypt_bytes(&blob, &old_key).ok().and_then(|p| {
        frame::decode(&p, 2)
            .ok()
            .map(|f| f.text(1).unwrap_or("").to_string())
    });
    assert_ne!(opened.as_deref(), Some(after.pin.as_str()));
    login(&mut w, "alice");
}

#[test]
fn blacklisted_users_cannot_mutate_their_record() {
    let mut w = registered(16);
    let uid = w.uid_of("alice").unwrap();
    for _ in 0..3 {
        w.login("alice", None, Some("WRONG1")).unwrap();
    }
    let frozen = w.server().record(&uid).unwrap().clone();
    let b = w.uid_of("bob").unwrap();
    let attempts = [
        w.change_pin("alice").unwrap(),
        w.change_contact("alice", "evil@mail.sim", "0790000099")
            .unwrap(),
        w.resend_card("alice", None).unwrap(),
        w.send_card("alice", &b).unwrap(),
        w.otp("alice", Some("123456")).unwrap(),
    ];
    for out in attempts {
        assert_eq!(out.rejection, Some(Rejection::Blacklisted));
    }
    assert_eq!(w.server().record(&uid).unwrap(), &frozen);
}

#[test]
fn duplicate_email_is_refused() {
    let mut w = registered(17);
    w.add_actor("alice2", "Alice Again", "alice@mail.sim", "0790000003")
        .unwrap();
    assert_eq!(
        w.register("alice2").unwrap().rejection,
        Some(Rejection::DuplicateEmail)
    );
    w.add_actor("bad", "Bad", "not-an-email", "0790000004")
        .unwrap();
    assert!(matches!(
        w.register("bad").unwrap().rejection,
        Some(Rejection::InvalidContact(_))
    ));
}

#[test]
fn server_accepts_only_checked_messages() {
    let w = connected(18);
    let log = w.server().accept_log();
    assert!(!log.is_empty());
    assert!(log.iter().all(|r| r.digest_ok && r.fresh_ok));
}
