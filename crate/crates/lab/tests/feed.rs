//! Replaying kernel-probe feeds through the syscall provider.

use std::path::Path;

use sseleak_core::{AccessOp, StoreScope, DEFAULT_REORDER_TOLERANCE_NS};
use sseleak_lab::ingest_feed;
use sseleak_lab::providers::ingest_feed_file;

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/probe_feed_1000.jsonl")
}

#[test]
fn thousand_line_fixture_with_five_malformed() {
    let scope = StoreScope::new("/srv/sseleak/store/docs").with_pid(4242);
    let r = ingest_feed_file(&fixture(), &scope, DEFAULT_REORDER_TOLERANCE_NS).unwrap();
    assert_eq!(r.events.len(), 995);
    assert_eq!(r.malformed, 5);
    assert_eq!(r.out_of_scope, 0);
    assert!(r.is_correlatable());
    assert!(r.events.windows(2).all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
    assert!(r.events.iter().all(|e| e.path.starts_with("doc") && !e.path.contains('/')));
}

#[test]
fn other_pid_sees_nothing() {
    let scope = StoreScope::new("/srv/sseleak/store/docs").with_pid(1);
    let r = ingest_feed_file(&fixture(), &scope, DEFAULT_REORDER_TOLERANCE_NS).unwrap();
    assert!(r.events.is_empty());
    assert_eq!(r.out_of_scope, 995);
}

#[test]
fn container_mount_alias() {
    let feed = concat!(
        r#"{"ts_ns":1,"pid":9,"op":"open","path":"/var/lib/docker/overlay/abc/merged/data/store/docs/doc3"}"#,
        "\n",
        r#"{"ts_ns":2,"pid":9,"op":"open","path":"/data/store/docs/./doc4"}"#,
        "\n",
        r#"{"ts_ns":3,"pid":9,"op":"open","path":"/data/store/docs/../index.bin"}"#,
        "\n",
        r#"{"ts_ns":4,"pid":9,"op":"read","path":"/data/store/index.bin"}"#,
        "\n",
    );
    let scope = StoreScope::new("/var/lib/docker/overlay/abc/merged/data/store/docs").with_alias("/data/store/docs");
    let r = ingest_feed(feed.as_bytes(), &scope, DEFAULT_REORDER_TOLERANCE_NS).unwrap();
    let got: Vec<_> = r.events.iter().map(|e| (e.path.as_str(), e.op)).collect();
    assert_eq!(got, [("doc3", AccessOp::Open), ("doc4", AccessOp::Open)]);
    assert_eq!(r.out_of_scope, 2);
}

mod accounting {
    use proptest::prelude::*;
    use sseleak_core::StoreScope;
    use sseleak_lab::ingest_feed;

    fn arb_line() -> impl Strategy<Value = String> {
        prop_oneof![
            (0u64..50_000_000, prop_oneof![Just(7u32), Just(8u32)], prop_oneof![Just("open"), Just("read")], 0..5usize)
                .prop_map(|(ts, pid, op, f)| {
                    let path = if f == 4 { "/tmp/other".to_owned() } else { format!("/s/docs/doc{f}") };
                    format!(r#"{{"ts_ns":{ts},"pid":{pid},"op":"{op}","path":"{path}"}}"#)
                }),
            "[ -~]{0,30}",
        ]
    }

    proptest! {
        /// Every non-blank line is accounted for exactly once, and what is
        /// emitted is in scope and ordered.
        #[test]
        fn every_line_accounted(lines in prop::collection::vec(arb_line(), 0..200), tol in 0u64..20_000_000) {
            let feed = lines.join("\n");
            let scope = StoreScope::new("/s/docs").with_pid(7);
            let r = ingest_feed(feed.as_bytes(), &scope, tol).unwrap();
            let nonblank = lines.iter().filter(|l| !l.trim().is_empty()).count();
            prop_assert_eq!(r.events.len() + r.late.len() + r.malformed + r.out_of_scope, nonblank);
            prop_assert!(r.events.windows(2).all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
            prop_assert!(r.events.iter().all(|e| e.pid == 7 && e.path.starts_with("doc")));
        }
    }
}
