//! Stateless message builders shared by the client and server sides.

use crate::cards::{PrivateCard, PublicCard};
use crate::frame;
use crate::kdf::{
    build_auth_message, compute_outh_code, derive_message_key, derive_secret_key, hash_h,
    open_signature, seal_auth_message, sign_message, verify_freshness, FreshnessWindow,
    SignatureLayer, Timestamp, UnreadableSignature,
};
use crate::rc4pr::rc4pr_apply;

use super::envelope::{AcceptFlags, Envelope, MsgType, Rejection, SERVER_ENDPOINT};

/// Client side of registration: outh-code, secret key, sealed authentication
/// message. `uid` also travels in clear so the server can find the record.
pub fn client_register_complete(
    from: &str,
    uid: &str,
    pin: &str,
    email: &str,
    mobile: &str,
    now: Timestamp,
) -> Result<Envelope, Rejection> {
    let invalid = |e: crate::kdf::KdfError| Rejection::Malformed(e.to_string());
    let outh = compute_outh_code(uid, pin, email, mobile).map_err(invalid)?;
    let k = derive_secret_key(uid, pin).map_err(invalid)?;
    let sealed = seal_auth_message(&build_auth_message(uid, outh, now), &k);
    Ok(Envelope::new(
        MsgType::RegisterComplete,
        from,
        SERVER_ENDPOINT,
        frame::encode(&[uid.as_bytes(), &sealed]),
        now,
    ))
}

/// Builds `Cmsg` under `K' = h(recipient || K)` and appends the double-RSA
/// signature block.
pub fn send_user_message(
    sender: &PrivateCard,
    recipient: &PublicCard,
    msg: &[u8],
    now: Timestamp,
) -> Result<Envelope, Rejection> {
    let kprime = derive_message_key(&recipient.user_id, &sender.s_key);
    let cmsg = rc4pr_apply(&kprime.round_key(), msg);
    let auth_dtl = sign_message(
        &sender.user_id,
        msg,
        &kprime,
        now,
        &sender.pr_key,
        &recipient.pub_key,
    )?;
    Ok(Envelope::new(
        MsgType::UserMessage,
        sender.user_email.clone(),
        recipient.user_email.clone(),
        frame::encode(&[&cmsg, &auth_dtl]),
        now,
    ))
}

/// Opens the signature with the recipient's private key then the sender's
/// public key, decrypts `Cmsg` with the extracted `K'` and checks the digest
/// and the delay.
pub fn receive_user_message(
    recipient: &PrivateCard,
    envelope: &Envelope,
    sender_card: &PublicCard,
    now: Timestamp,
    window: FreshnessWindow,
) -> Result<(Vec<u8>, AcceptFlags), Rejection> {
    let fields = frame::decode(&envelope.payload, 2)?;
    let (cmsg, auth_dtl) = (fields.bytes(0), fields.bytes(1));
    let block = open_signature(auth_dtl, &recipient.pr_key, &sender_card.pub_key)?;
    if block.sender_uid != sender_card.user_id {
        return Err(Rejection::UnreadableSignature(UnreadableSignature {
            layer: SignatureLayer::Inner,
            detail: format!(
                "signature names {} but the card is {}",
                block.sender_uid, sender_card.user_id
            ),
        }));
    }
    let msg = rc4pr_apply(&block.message_key.round_key(), cmsg);
    if hash_h(&msg) != block.msg_digest {
        return Err(Rejection::DigestMismatch);
    }
    if !verify_freshness(block.t1, now, window) {
        return Err(Rejection::Stale {
            delay_ms: now.0 as i128 - block.t1.0 as i128,
        });
    }
    Ok((
        msg,
        AcceptFlags {
            digest_ok: true,
            fresh_ok: true,
        },
    ))
}

/// Loose syntax check: one `@`, a non-empty local part, a dotted domain.
pub fn validate_email(email: &str) -> Result<(), Rejection> {
    let bad = || Rejection::InvalidContact(format!("email {email:?}"));
    let (local, domain) = email.split_once('@').ok_or_else(bad)?;
    let ok = !local.is_empty()
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && email.bytes().all(|b| b.is_ascii_graphic());
    if ok {
        Ok(())
    } else {
        Err(bad())
    }
}

/// Optional leading `+` and 7 to 15 digits.
pub fn validate_mobile(mobile: &str) -> Result<(), Rejection> {
    let digits = mobile.strip_prefix('+').unwrap_or(mobile);
    if (7..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err(Rejection::InvalidContact(format!("mobile {mobile:?}")))
    }
}

/// Printable, single-line, no separator byte.
pub fn validate_name(name: &str) -> Result<(), Rejection> {
    if name.trim().is_empty() || name.chars().any(|c| c.is_control()) || name.contains("=====>") {
        Err(Rejection::InvalidContact(format!("name {name:?}")))
    } else {
        Ok(())
    }
}
