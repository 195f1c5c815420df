use cardauth_core::cards::{
    decrypt_private_card, encrypt_private_card, parse_card, render_key_bytes, Card, CardError,
    PrivateCard,
};
use cardauth_core::kdf::{derive_secret_key, hash_h, AuthCode};
use cardauth_core::rsa::{generate_keypair, RsaPrivateKey, RsaPublicKey};

const SAMPLE_CARD: &str = include_str!("fixtures/sample_card.txt");

fn sample_card() -> PrivateCard {
    PrivateCard::parse(SAMPLE_CARD).unwrap()
}

#[test]
fn printed_card_parses() {
    let card = sample_card();
    assert_eq!(card.user_id, "user13");
    assert_eq!(card.outh_code, AuthCode(3_076_315_706_752_804_757));
    assert_eq!(card.pin_code.as_str(), "ZTMw9G");
    assert_eq!(
        card.s_key.as_bytes(),
        &[48, 102, 192, 245, 224, 165, 19, 50, 81, 78, 15, 225, 56, 140, 76, 105]
    );
    assert_eq!(card.server_pub, RsaPublicKey { n: 21883, e: 5 });
    assert_eq!(card.pr_key, RsaPrivateKey { n: 75137, d: 31963 });
    assert_eq!(card.pub_key, RsaPublicKey { n: 75137, e: 7 });
    assert!(card.user_email.is_empty() && card.user_mobile_number.is_empty());
}

#[test]
fn printed_card_keys_are_consistent() {
    let card = sample_card();
    let user = generate_keypair(227, 331, 7).unwrap();
    assert_eq!(
        (user.public_key(), user.private_key()),
        (card.pub_key, card.pr_key)
    );
    let server = generate_keypair(79, 277, 5).unwrap();
    assert_eq!(server.public_key(), card.server_pub);
}

/// The printed key is MD5 over the bare concatenation of uid and PIN.
/// Key derivation here inserts a separator, so it intentionally differs.
#[test]
fn printed_key_is_md5_of_bare_concatenation() {
    let card = sample_card();
    let bare = hash_h(b"user13ZTMw9G");
    assert_eq!(&bare, card.s_key.as_bytes());
    assert_eq!(
        render_key_bytes(&bare),
        "48_102_192_245_224_165_19_50_81_78_15_225_56_140_76_105"
    );
    assert_ne!(derive_secret_key("user13", "ZTMw9G").unwrap(), card.s_key);
}

#[test]
fn serialized_layout() {
    let card = sample_card();
    let text = card.serialize();
    let names: Vec<&str> = text
        .lines()
        .map(|l| l.split(" =====> ").next().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "User_Id",
            "outh_code",
            "pin_code",
            "S_Key",
            "server_pub_key",
            "private_key",
            "public_key"
        ]
    );
    assert!(text.contains("S_Key =====> 48_102_192_245_224_165_19_50_81_78_15_225_56_140_76_105\n"));
    assert_eq!(PrivateCard::parse(&text).unwrap(), card);

    let mut full = card.clone();
    full.user_email = "user13@mail.sim".into();
    full.user_mobile_number = "0790000013".into();
    let text = full.serialize();
    assert!(text.starts_with(
        "User_Id =====> user13\nUser_Mobile_Number =====> 0790000013\nUser_Email =====> user13@mail.sim\n"
    ));
    assert_eq!(PrivateCard::parse(&text).unwrap(), full);
}

#[test]
fn public_card_layout() {
    let mut card = sample_card();
    card.user_email = "user13@mail.sim".into();
    card.user_mobile_number = "0790000013".into();
    let public = card.public_card("Rula");
    assert_eq!(
        public.serialize(),
        "User_Id =====> user13\nUser_Name =====> Rula\nUser_Mobile_Number =====> 0790000013\n\
         User_Email =====> user13@mail.sim\npublic_key =====> 75137-7\n"
    );
}

#[test]
fn parse_errors() {
    let swapped = SAMPLE_CARD.replace("pin_code =====> ZTMw9G\n", "").replace(
        "public_key =====> 75137-7\n",
        "public_key =====> 75137-7\npin_code =====> ZTMw9G\n",
    );
    assert!(matches!(
        parse_card(&swapped),
        Err(CardError::OutOfOrder { .. })
    ));
    let short_pin = SAMPLE_CARD.replace("ZTMw9G", "ZTM");
    assert!(matches!(
        parse_card(&short_pin),
        Err(CardError::Malformed {
            field: "pin_code",
            ..
        })
    ));
    let bad_modulus = SAMPLE_CARD.replace(
        "private_key =====> 75137-31963",
        "private_key =====> 75139-31963",
    );
    assert!(matches!(
        parse_card(&bad_modulus),
        Err(CardError::Malformed {
            field: "private_key",
            ..
        })
    ));
    let extra = format!("{SAMPLE_CARD}Note =====> hi\n");
    assert!(matches!(
        parse_card(&extra),
        Err(CardError::UnexpectedField(_))
    ));
    let missing = SAMPLE_CARD.replace("public_key =====> 75137-7\n", "");
    assert_eq!(
        parse_card(&missing).unwrap_err(),
        CardError::MissingField("public_key")
    );
}

#[test]
fn encrypted_card_needs_the_right_key() {
    let card = sample_card();
    let k = derive_secret_key("user13", "ZTMw9G").unwrap();
    let blob = encrypt_private_card(&card, &k);
    assert_eq!(decrypt_private_card(&blob, &k).unwrap(), card);
    let other = derive_secret_key("user13", "ZTMw9H").unwrap();
    assert!(matches!(
        decrypt_private_card(&blob, &other),
        Err(CardError::Frame(_))
    ));
    assert!(matches!(parse_card(SAMPLE_CARD).unwrap(), Card::Private(_)));
}
