//! Writes the demo corpus used by the CLI tests:
//! `cargo run -p skelforge-testkit --bin gen-demo -- crates/cli/demo`

use std::fs;
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::SeedableRng;
use skelforge_core::corpus::{cluster, Corpus, Deployment};
use skelforge_core::findings::SwcMappingTable;
use skelforge_core::skeleton::Skeletonizer;
use skelforge_testkit::{gen_records, gen_runs, records_jsonl};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).expect("usage: gen-demo <dir>"));
    fs::create_dir_all(&dir).unwrap();
    let mut rng = StdRng::seed_from_u64(2022);
    let records = gen_records(&mut rng, 400, 45, 14_000_000);

    let mut corpus = Corpus::new();
    for r in &records {
        let code = hex::decode(&r.code_ref[2..]).unwrap();
        let deployment = Deployment {
            block: r.block,
            address: None,
            has_source: r.has_source,
            compiler_version: None,
        };
        corpus.insert(r.code_id.clone(), code, deployment);
    }
    let digests: Vec<String> = cluster(&corpus, &Skeletonizer::default())
        .into_iter()
        .map(|f| f.skeleton_digest)
        .collect();
    let runs = gen_runs(&mut rng, SwcMappingTable::bundled(), &digests, 1500);

    fs::write(dir.join("records.jsonl"), records_jsonl(&records)).unwrap();
    let runs: String = runs
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    fs::write(dir.join("runs.jsonl"), runs).unwrap();
}
