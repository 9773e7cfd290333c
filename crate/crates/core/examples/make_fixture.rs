//! Regenerates the bundled synthetic fixture.
//!
//! cargo run -p lcg-core --example make_fixture -- crates/core/tests/fixtures/synthetic_2000.jsonl

use std::collections::BTreeSet;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_2000.jsonl".into());
    let ds = lcg_core::synth::topic_corpus(2000, 12, 0.25, 2024).expect("fixture generation");
    let all: BTreeSet<usize> = (0..ds.len()).collect();
    let n = lcg_core::corpus::write_subset(&ds, &all, &out).expect("write fixture");
    println!("wrote {n} records to {out}");
}
