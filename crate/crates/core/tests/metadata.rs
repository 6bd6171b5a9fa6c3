use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use skelforge_core::metadata::{
    constructor_args_start, extract_solc_version, find_metadata, strip_metadata, SolcVersion, StripMode,
};
use skelforge_testkit::{gen_code, metadata_trailer, CodeGenOptions, HashKey, SolcEntry};

const BODY: [u8; 5] = [0x60, 0x01, 0x60, 0x02, 0x01];

fn bzzr0_fixture(fill: u8) -> Vec<u8> {
    let t = metadata_trailer(HashKey::Bzzr0, &[fill; 32], None, false);
    let mut code = BODY.to_vec();
    code.extend_from_slice(&t.bytes);
    code
}

#[test]
fn bzzr0_trailer_is_found() {
    let code = bzzr0_fixture(0x11);
    assert_eq!(code.len(), 5 + 43);
    // Bytes produced by ciborium; written out for the reader.
    assert_eq!(&code[5..12], &[0xa1, 0x65, b'b', b'z', b'z', b'r', b'0']);
    assert_eq!(&code[code.len() - 2..], &[0x00, 0x29]);

    let sections = find_metadata(&code);
    assert_eq!(sections.len(), 1);
    let s = &sections[0];
    assert_eq!((s.start, s.end), (5, code.len()));
    assert_eq!(s.cbor_keys, ["bzzr0"]);
    assert_eq!(s.solc_version, None);
    assert_eq!(extract_solc_version(s), Ok(None));
}

#[test]
fn no_trailer() {
    assert!(find_metadata(&BODY).is_empty());
    let r = strip_metadata(&BODY, StripMode::Remove);
    assert_eq!(r.stripped, BODY);
    assert!(r.sections.is_empty());
}

#[test]
fn strip_modes_on_fixture() {
    let code = bzzr0_fixture(0x22);
    assert_eq!(strip_metadata(&code, StripMode::Remove).stripped, BODY);
    let z = strip_metadata(&code, StripMode::ZeroFill);
    assert_eq!(z.stripped.len(), code.len());
    assert_eq!(&z.stripped[..5], &BODY);
    assert!(z.stripped[5..].iter().all(|&b| b == 0));
}

#[test]
fn concatenated_codes_give_two_sections() {
    let a = bzzr0_fixture(0x01);
    let b = bzzr0_fixture(0x02);
    let mut both = a.clone();
    both.extend_from_slice(&b);

    let sections = find_metadata(&both);
    let halves: Vec<(usize, usize)> = find_metadata(&a)
        .iter()
        .map(|s| (s.start, s.end))
        .chain(find_metadata(&b).iter().map(|s| (s.start + a.len(), s.end + a.len())))
        .collect();
    assert_eq!(sections.iter().map(|s| (s.start, s.end)).collect::<Vec<_>>(), halves);
    assert!(sections[0].end <= sections[1].start);
    assert_eq!(constructor_args_start(&sections), Some(both.len()));
}

#[test]
fn solc_bytes_entry() {
    let t = metadata_trailer(HashKey::Ipfs, &[7; 34], Some(SolcEntry::Bytes(vec![0, 6, 8])), false);
    let sections = find_metadata(&t.bytes);
    assert_eq!(sections.len(), 1);
    assert_eq!(sections[0].cbor_keys, ["ipfs", "solc"]);
    assert_eq!(extract_solc_version(&sections[0]), Ok(Some(SolcVersion::new(0, 6, 8))));
}

#[test]
fn solc_text_entry() {
    let t = metadata_trailer(
        HashKey::Bzzr1,
        &[3; 32],
        Some(SolcEntry::Text("0.5.17+commit.d19bba13".into())),
        true,
    );
    let s = &find_metadata(&t.bytes)[0];
    assert_eq!(s.cbor_keys, ["bzzr1", "experimental", "solc"]);
    assert_eq!(s.solc_version, Some(SolcVersion::new(0, 5, 17)));
}

#[test]
fn malformed_solc_is_absent() {
    let t = metadata_trailer(HashKey::Ipfs, &[9; 34], Some(SolcEntry::Bytes(vec![0, 8])), false);
    let s = &find_metadata(&t.bytes)[0];
    assert_eq!(s.solc_version, None);
    assert!(extract_solc_version(s).is_err());
}

#[test]
fn solc_alone_is_not_metadata() {
    // {"solc": h'000608'} followed by its length.
    let mut code = vec![0xa1, 0x64, b's', b'o', b'l', b'c', 0x43, 0, 6, 8];
    code.extend_from_slice(&(code.len() as u16).to_be_bytes());
    assert!(find_metadata(&code).is_empty());
}

#[test]
fn unknown_key_is_rejected() {
    let mut cbor = Vec::new();
    let map = ciborium::value::Value::Map(vec![
        ("bzzr0".into(), ciborium::value::Value::Bytes(vec![1; 32])),
        ("other".into(), ciborium::value::Value::Bool(true)),
    ]);
    ciborium::ser::into_writer(&map, &mut cbor).unwrap();
    let len = cbor.len() as u16;
    cbor.extend_from_slice(&len.to_be_bytes());
    assert!(find_metadata(&cbor).is_empty());
}

#[test]
fn generated_corpus_laws() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..500 {
        let g = gen_code(&mut rng, &CodeGenOptions::default());
        let sections = find_metadata(&g.bytes);
        let ranges: Vec<_> = sections.iter().map(|s| s.start..s.end).collect();
        assert_eq!(ranges, g.metadata, "trailers placed by the generator are recovered");

        let once = strip_metadata(&g.bytes, StripMode::Remove);
        assert_eq!(strip_metadata(&once.stripped, StripMode::Remove).stripped, once.stripped);
        assert!(find_metadata(&once.stripped).is_empty());

        let zero = strip_metadata(&g.bytes, StripMode::ZeroFill);
        assert_eq!(zero.sections, once.sections);
    }
}

proptest! {
    #[test]
    fn sections_are_ordered_and_in_bounds(bytes in proptest::collection::vec(any::<u8>(), 0..600), seed: u64) {
        // Plant a trailer somewhere in random data half of the time.
        let mut code = bytes;
        let mut rng = StdRng::seed_from_u64(seed);
        if rng.gen_bool(0.5) {
            let t = skelforge_testkit::random_trailer(&mut rng);
            let at = rng.gen_range(0..=code.len());
            code.splice(at..at, t.bytes);
        }
        let sections = find_metadata(&code);
        for s in &sections {
            prop_assert!(s.start < s.end && s.end <= code.len());
            prop_assert_eq!(&code[s.start..s.end], &s.raw[..]);
        }
        for w in sections.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        let removed = strip_metadata(&code, StripMode::Remove);
        prop_assert_eq!(strip_metadata(&removed.stripped, StripMode::Remove).stripped, removed.stripped.clone());
        prop_assert_eq!(strip_metadata(&code, StripMode::ZeroFill).sections, removed.sections);
    }
}
