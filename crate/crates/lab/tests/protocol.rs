//! The CSP over a real socket.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sseleak_core::{keygen, DataOwner, Document, Frame, Keyword, Normalizer, SearchToken};
use sseleak_lab::server::{self, MAX_REQUEST_LEN};
use sseleak_lab::{Csp, CspClient, Store};

fn start(dir: &std::path::Path) -> (DataOwner, Arc<Csp>, server::ServerHandle) {
    let docs: Vec<Document> = [
        ("doc1", "invoice"),
        ("doc2", "contract"),
        ("doc3", "invoice budget"),
        ("doc4", "contract"),
        ("doc7", "invoice"),
    ]
    .iter()
    .map(|(n, b)| Document::new(*n, *b).unwrap())
    .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (owner, enc, cts) = DataOwner::outsource(keygen(11), Normalizer::default(), &docs, &mut rng).unwrap();
    let csp = Arc::new(Csp::open(Store::create(dir, &enc, &cts).unwrap()).unwrap());
    let handle = server::spawn(Arc::clone(&csp), "127.0.0.1:0").unwrap();
    (owner, csp, handle)
}

fn kw(s: &str) -> Keyword {
    Keyword::new(s).unwrap()
}

#[test]
fn known_and_unknown_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let (owner, _, h) = start(dir.path());
    let mut c = CspClient::connect(h.local_addr()).unwrap();
    let r = c.search(&owner.token(&kw("invoice"))).unwrap();
    assert_eq!(r.result_size(), 3);
    assert_eq!(r.filenames().collect::<Vec<_>>(), ["doc1", "doc3", "doc7"]);
    for ct in &r.ciphertexts {
        sseleak_core::decrypt_document(owner.keys(), ct).unwrap();
    }
    let none = c.search(&SearchToken::from_bytes([0x5A; 16])).unwrap();
    assert_eq!(none.result_size(), 0);
    assert!(none.query_id > r.query_id);
}

#[test]
fn garbage_frame_keeps_connection_alive() {
    let dir = tempfile::tempdir().unwrap();
    let (owner, _, h) = start(dir.path());
    let mut c = CspClient::connect(h.local_addr()).unwrap();
    for garbage in
        [vec![0x99, 3, 0, 0, 0, 1, 2, 3], vec![0x01, 4, 0, 0, 0, 1, 2, 3, 4], Frame::Error("hi".into()).encode()]
    {
        assert!(matches!(c.send_raw(&garbage).unwrap(), Frame::Error(_)));
    }
    assert_eq!(c.search(&owner.token(&kw("contract"))).unwrap().result_size(), 2);
}

#[test]
fn oversized_frame_closes_connection() {
    let dir = tempfile::tempdir().unwrap();
    let (owner, _, h) = start(dir.path());
    let mut s = TcpStream::connect(h.local_addr()).unwrap();
    let mut header = vec![0x01];
    header.extend_from_slice(&(MAX_REQUEST_LEN + 1).to_le_bytes());
    s.write_all(&header).unwrap();
    let mut reply = Vec::new();
    s.read_to_end(&mut reply).unwrap();
    assert!(matches!(Frame::decode(&reply), Ok((Frame::Error(_), _))));
    // the server itself is unaffected
    let mut c = CspClient::connect(h.local_addr()).unwrap();
    assert_eq!(c.search(&owner.token(&kw("budget"))).unwrap().result_size(), 1);
}

#[test]
fn client_side_frame_types_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, h) = start(dir.path());
    let mut c = CspClient::connect(h.local_addr()).unwrap();
    for raw in [[0x02, 0, 0, 0, 0], [0x7F, 0, 0, 0, 0]] {
        assert!(matches!(c.send_raw(&raw).unwrap(), Frame::Error(_)));
    }
}

#[test]
fn concurrent_clients_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let (owner, csp, h) = start(dir.path());
    let addr = h.local_addr();
    let tokens: Vec<SearchToken> = ["invoice", "contract", "budget"].iter().map(|w| owner.token(&kw(w))).collect();
    let threads: Vec<_> = (0..6)
        .map(|i| {
            let t = tokens[i % 3];
            std::thread::spawn(move || {
                let mut c = CspClient::connect(addr).unwrap();
                (0..10).map(|_| c.search(&t).unwrap().result_size()).collect::<Vec<_>>()
            })
        })
        .collect();
    for (i, t) in threads.into_iter().enumerate() {
        assert!(t.join().unwrap().iter().all(|&n| n == [3, 2, 1][i % 3]));
    }
    let mut log = csp.query_log();
    assert_eq!(log.len(), 60);
    log.sort_by_key(|r| r.window.begin_ns);
    for pair in log.windows(2) {
        assert!(pair[0].window.end_ns < pair[1].window.begin_ns);
        assert!(pair[0].query_id < pair[1].query_id);
    }
}

#[test]
fn identical_queries_touch_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (owner, _, h) = start(dir.path());
    let mut c = CspClient::connect(h.local_addr()).unwrap();
    let t = owner.token(&kw("invoice"));
    let a: Vec<String> = c.search(&t).unwrap().filenames().map(String::from).collect();
    let b: Vec<String> = c.search(&t).unwrap().filenames().map(String::from).collect();
    assert_eq!(a, b);
}
