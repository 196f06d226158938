//! Frozen token values. Recomputed independently with Python's `hmac` and a
//! textbook HKDF-SHA256; a change here breaks every stored experiment.

use sseleak_core::{keygen, trapdoor, Keyword};

#[test]
fn invoice_token_under_seed_7() {
    let t = trapdoor(&keygen(7), &Keyword::new("invoice").unwrap());
    assert_eq!(t.to_hex(), "d6689163cf1099a356360a253b178d1f");
}

#[test]
fn invoice_label_under_seed_7() {
    let t = trapdoor(&keygen(7), &Keyword::new("invoice").unwrap());
    assert_eq!(hex::encode(t.label().as_bytes()), "edd1fb854d363915bde98d46fa720427");
}
