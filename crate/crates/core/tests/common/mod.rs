#![allow(dead_code)]

use cardauth_core::kdf::FreshnessWindow;
use cardauth_core::simnet::World;

pub const WINDOW_MS: u64 = 120_000;

pub fn world(seed: u64) -> World {
    let mut w = World::new(seed, FreshnessWindow::new(WINDOW_MS));
    w.add_actor("alice", "Alice Adams", "alice@mail.sim", "0790000001")
        .unwrap();
    w.add_actor("bob", "Bob Brown", "bob@mail.sim", "0790000002")
        .unwrap();
    w.add_actor("mallory", "Mallory", "mallory@mail.sim", "0790000666")
        .unwrap();
    w
}

pub fn registered(seed: u64) -> World {
    let mut w = world(seed);
    for actor in ["alice", "bob"] {
        assert!(w.register(actor).unwrap().is_ok());
    }
    w
}

pub fn login(w: &mut World, actor: &str) {
    assert!(w.login(actor, None, None).unwrap().is_ok());
    assert!(w.otp(actor, None).unwrap().is_ok());
    assert!(w.client(actor).unwrap().is_logged_in());
}

/// Both users registered, logged in and holding each other's public card.
pub fn connected(seed: u64) -> World {
    let mut w = registered(seed);
    login(&mut w, "alice");
    login(&mut w, "bob");
    let (a, b) = (w.uid_of("alice").unwrap(), w.uid_of("bob").unwrap());
    assert!(w.send_card("alice", &b).unwrap().is_ok());
    assert!(w.send_card("bob", &a).unwrap().is_ok());
    w
}
