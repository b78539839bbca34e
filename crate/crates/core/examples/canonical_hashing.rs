//! The hash-domain encoding of an event, its digest, a signature over the
//! digest, and a wire record round trip.

use aca::codec::{canonical_encode, decode_event_record, encode_event_record};
use aca::crypto::{hash_event, sign_event, verify_event, CryptoSuite, Sha256Ed25519};
use aca::model::{Digest, Event, EventSignature, InternalTag, InternalTx, LamportTime, ParentLink, TransactionPayload};
use aca::sim::sim_network;

fn main() -> aca::Result<()> {
    let suite = Sha256Ed25519::new();
    let (keys, peers) = sim_network(&suite, 3, 1)?;
    let key = &keys[0];

    let parent = ParentLink { id: Digest([0x11; 32]), hash: Digest([0x11; 32]) };
    let other = ParentLink { id: Digest([0x22; 32]), hash: Digest([0x22; 32]) };
    let mut e = Event::unsigned(
        key.peer_id(),
        1,
        parent,
        other,
        LamportTime(5),
        TransactionPayload {
            user_transactions: vec![b"pay 10".to_vec()],
            internal_transactions: vec![InternalTx { tag: InternalTag(300), body: b"app data".to_vec() }],
        },
    );

    let bytes = canonical_encode(&e);
    println!("hash-domain encoding ({} bytes):\n{}", bytes.len(), hex::encode(&bytes));
    e.hash = hash_event(&e, &suite);
    println!("{} digest: {}", suite.hash_name(), e.hash.to_hex());

    let signature = sign_event(&e, key, &suite)?;
    e.signatures.push(EventSignature { signer: key.peer_id(), signature });
    println!("accepted: {}", verify_event(&e, &peers, &suite).accepted());

    // Signatures sit outside the hash domain.
    assert_eq!(canonical_encode(&e), bytes);

    let record = encode_event_record(&e);
    let back = decode_event_record(&record).expect("own record decodes");
    println!("wire record: {} bytes, round trip equal: {}", record.len(), back == e);
    Ok(())
}
