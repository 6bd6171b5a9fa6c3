use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use skelforge_core::corpus::{
    cluster, compiler_timeline, dedup_stats, first_blocks, ingest, ingest_reader, ops_timeline, Corpus, CorpusStore,
    Deployment, IngestOptions, VersionRange, VersionRanges,
};
use skelforge_core::disasm::ops_present;
use skelforge_core::metadata::SolcVersion;
use skelforge_core::opcodes::OpcodeTable;
use skelforge_core::skeleton::Skeletonizer;
use skelforge_core::CorpusError;
use skelforge_testkit::{gen_records, pairwise_partition, record_for, records_jsonl, sha256_hex, stagewise_counts};

fn load(jsonl: &str) -> Corpus {
    let report = ingest_reader(jsonl.as_bytes(), Path::new("."), IngestOptions::default()).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    report.corpus
}

fn code_bytes(code_ref: &str) -> Vec<u8> {
    hex::decode(code_ref.trim_start_matches("0x")).unwrap()
}

#[test]
fn identical_codes_dedup() {
    let code = [0x60, 0x01, 0x01];
    let text = records_jsonl(&[record_for(&code, 10, false), record_for(&code, 20, true)]);
    let corpus = load(&text);
    assert_eq!(corpus.distinct_codes(), 1);
    assert_eq!(corpus.deployment_count(), 2);
}

#[test]
fn empty_file() {
    let corpus = load("");
    assert!(corpus.is_empty());
    assert!(cluster(&corpus, &Skeletonizer::default()).is_empty());
}

#[test]
fn distinct_codes_match_hash_set() {
    let mut rng = StdRng::seed_from_u64(1);
    let records = gen_records(&mut rng, 1000, 40, 3_000_000);
    let corpus = load(&records_jsonl(&records));
    let oracle: HashSet<String> = records.iter().map(|r| sha256_hex(&code_bytes(&r.code_ref))).collect();
    assert_eq!(corpus.distinct_codes(), oracle.len());
    assert_eq!(corpus.deployment_count(), 1000);
}

#[test]
fn malformed_lines_are_reported() {
    let good = records_jsonl(&[record_for(&[0x01], 1, false)]);
    let mut bad_id = record_for(&[0x02], 1, false);
    bad_id.code_id = "00".repeat(32);
    let late = record_for(&[0x03], 20_000_000, false);
    let text = format!("{good}not json\n{}{}", records_jsonl(&[bad_id]), records_jsonl(&[late]));

    let report = ingest_reader(text.as_bytes(), Path::new("."), IngestOptions::default()).unwrap();
    assert_eq!(report.corpus.distinct_codes(), 1);
    let lines: Vec<usize> = report
        .errors
        .iter()
        .map(|e| match e {
            CorpusError::Line { line, .. } => *line,
            other => panic!("{other}"),
        })
        .collect();
    assert_eq!(lines, [2, 3, 4]);

    let strict = IngestOptions {
        strict: true,
        ..IngestOptions::default()
    };
    assert!(matches!(
        ingest_reader(text.as_bytes(), Path::new("."), strict),
        Err(CorpusError::Line { line: 2, .. })
    ));
}

#[test]
fn code_files_resolve_relative_to_records() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("codes")).unwrap();
    let code = [0x60, 0x01, 0x00];
    std::fs::write(dir.path().join("codes/a.hex"), "0x600100\n").unwrap();
    let mut r = record_for(&code, 5, false);
    r.code_ref = "codes/a.hex".into();
    let records = dir.path().join("records.jsonl");
    std::fs::write(&records, records_jsonl(&[r])).unwrap();
    let report = ingest(&records, IngestOptions::default()).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    assert_eq!(report.corpus.get(&sha256_hex(&code)).unwrap().code, code);
}

#[test]
fn store_round_trip_and_lock() {
    let mut rng = StdRng::seed_from_u64(2);
    let corpus = load(&records_jsonl(&gen_records(&mut rng, 50, 5, 1_000_000)));
    let dir = tempfile::tempdir().unwrap();
    let store = CorpusStore::new(dir.path().join("store"));
    store.save(&corpus).unwrap();
    assert_eq!(store.load().unwrap(), corpus);

    std::fs::write(store.root().join("LOCK"), "").unwrap();
    assert!(matches!(store.save(&corpus), Err(CorpusError::Locked(_))));
}

#[test]
fn cluster_matches_pairwise_oracle() {
    let mut rng = StdRng::seed_from_u64(3);
    let corpus = load(&records_jsonl(&gen_records(&mut rng, 300, 30, 5_000_000)));
    let families = cluster(&corpus, &Skeletonizer::default());
    let got: BTreeSet<BTreeSet<String>> = families.iter().map(|f| f.member_code_ids.clone()).collect();
    assert_eq!(got, pairwise_partition(&corpus, &Skeletonizer::default()));

    let members: usize = families.iter().map(|f| f.member_code_ids.len()).sum();
    assert_eq!(members, corpus.distinct_codes());
    for f in &families {
        assert!(f.member_code_ids.contains(&f.representative));
        assert!(f.deployment_count >= f.member_code_ids.len());
        let rep = corpus.get(&f.representative).unwrap();
        if f.member_code_ids.iter().any(|id| corpus.get(id).unwrap().has_source()) {
            assert!(rep.has_source());
        }
    }
}

#[test]
fn first_block_matches_flat_scan() {
    let mut rng = StdRng::seed_from_u64(4);
    let records = gen_records(&mut rng, 400, 50, 9_000_000);
    let corpus = load(&records_jsonl(&records));
    let families = cluster(&corpus, &Skeletonizer::default());
    assert!(families.len() >= 50);
    for f in &families {
        let min = records
            .iter()
            .filter(|r| f.member_code_ids.contains(&r.code_id))
            .map(|r| r.block)
            .min()
            .unwrap();
        assert_eq!(f.first_block, min);
        let n = records.iter().filter(|r| f.member_code_ids.contains(&r.code_id)).count();
        assert_eq!(f.deployment_count, n);
    }
}

#[test]
fn dedup_stats_match_stagewise_recount() {
    let mut rng = StdRng::seed_from_u64(5);
    let records = gen_records(&mut rng, 1000, 60, 14_000_000);
    let corpus = load(&records_jsonl(&records));
    let counts = dedup_stats(&corpus, &Skeletonizer::default());

    let oracle = stagewise_counts(&records, &Skeletonizer::default());
    let got = [
        counts.deployments,
        counts.distinct_runtime_codes,
        counts.without_metadata,
        counts.without_push_args,
        counts.skeletons,
    ];
    assert_eq!(got, oracle);
    assert!(counts.is_monotone());
    assert!(counts.distinct_runtime_codes > counts.skeletons);
}

#[test]
fn record_order_does_not_matter() {
    let mut rng = StdRng::seed_from_u64(6);
    let mut records = gen_records(&mut rng, 300, 20, 2_000_000);
    let base = cluster(&load(&records_jsonl(&records)), &Skeletonizer::default());
    for _ in 0..3 {
        records.shuffle(&mut rng);
        assert_eq!(cluster(&load(&records_jsonl(&records)), &Skeletonizer::default()), base);
    }
}

#[test]
fn ops_timeline_matches_flat_scan() {
    let mut rng = StdRng::seed_from_u64(7);
    let corpus = load(&records_jsonl(&gen_records(&mut rng, 400, 60, 1_000_000)));
    let families = cluster(&corpus, &Skeletonizer::default());
    let table = OpcodeTable::bundled();
    let names = ["SHL", "CALL", "DELEGATECALL", "CREATE2"];
    let width = 100_000;
    let t = ops_timeline(&corpus, &families, &names, table, width).unwrap();

    for name in names {
        let series = &t[name];
        let last = families.iter().map(|f| f.first_block / width).max().unwrap();
        assert_eq!(series.bins.len() as u64, last + 1);
        for bin in &series.bins {
            let in_bin: Vec<_> = families
                .iter()
                .filter(|f| f.first_block / width == bin.index)
                .collect();
            let hits = in_bin
                .iter()
                .filter(|f| ops_present(&corpus.get(&f.representative).unwrap().code, table).contains(name))
                .count();
            assert_eq!((bin.numerator, bin.denominator), (hits as u64, in_bin.len() as u64));
            assert!(bin.numerator <= bin.denominator);
            if let Some(p) = bin.percentage {
                assert!((0.0..=100.0).contains(&p));
                assert!((p - 100.0 * hits as f64 / in_bin.len() as f64).abs() < 1e-12);
            }
        }
    }
    let fb = first_blocks(&families);
    assert_eq!(fb.len(), families.len());
}

#[test]
fn compiler_shares_extend_known_versions() {
    // Ten codes in bin 0, seven with a known version.
    let mut corpus = Corpus::new();
    let versions = [
        Some((0, 4, 24)),
        Some((0, 4, 25)),
        Some((0, 5, 1)),
        Some((0, 5, 2)),
        Some((0, 5, 3)),
        Some((0, 8, 4)),
        Some((0, 8, 10)),
        None,
        None,
        None,
    ];
    for (i, v) in versions.iter().enumerate() {
        let code = vec![0x01; i + 1];
        let version = v.map(|(a, b, c)| SolcVersion::new(a, b, c));
        corpus.insert(
            sha256_hex(&code),
            code,
            Deployment {
                block: 1000 * i as u64,
                address: None,
                has_source: version.is_some(),
                compiler_version: version,
            },
        );
    }
    let families = cluster(&corpus, &Skeletonizer::default());
    let ranges = VersionRanges {
        ranges: ["0.4.0", "0.5.0", "0.8.0"]
            .iter()
            .map(|v| VersionRange {
                label: format!("{v}+"),
                from: v.parse().unwrap(),
            })
            .collect(),
    };
    let t = compiler_timeline(&corpus, &families, &ranges, 100_000);
    let bin = &t.bins[0];
    assert_eq!((bin.total, bin.known), (10, 7));
    assert_eq!(bin.counts, [2, 3, 2]);
    // 2/7, 3/7, 2/7 of the known codes, as a percentage.
    let expect = [28.571428571428573, 42.857142857142854, 28.571428571428573];
    for (got, want) in bin.shares.as_ref().unwrap().iter().zip(expect) {
        assert!((got - want).abs() < 1e-9);
    }

    let mut csv = Vec::new();
    t.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().nth(1), Some("0,10,7,0.4.0+,2,28.6"));
}

#[test]
fn metadata_version_is_a_fallback() {
    let mut rng = StdRng::seed_from_u64(8);
    let records = gen_records(&mut rng, 200, 20, 500_000);
    let corpus = load(&records_jsonl(&records));
    let families = cluster(&corpus, &Skeletonizer::default());
    let t = compiler_timeline(&corpus, &families, &VersionRanges::default(), 100_000);
    for bin in &t.bins {
        assert!(bin.known <= bin.total);
        if let Some(s) = &bin.shares {
            assert!((s.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }
    let mut per_bin: BTreeMap<u64, u64> = BTreeMap::new();
    for f in &families {
        *per_bin.entry(f.first_block / 100_000).or_default() += 1;
    }
    for bin in &t.bins {
        assert_eq!(bin.total, per_bin.get(&bin.index).copied().unwrap_or(0));
    }
}
