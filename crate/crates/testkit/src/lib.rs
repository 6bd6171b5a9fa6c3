//! Fixture generators and reference oracles for skelforge tests.
//!
//! Everything here is written against the EVM encoding rules and the CBOR
//! format directly (metadata maps are produced by `ciborium`), not against
//! the library code under test.

use std::collections::BTreeSet;
use std::ops::Range;

use ciborium::value::Value;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};
use skelforge_core::corpus::{Corpus, DeploymentRecord};
use skelforge_core::skeleton::{Skeletonizer, Stages};
use skelforge_core::findings::{Classification, Fails, FlaggedMatrix, SwcClass, SwcMappingTable, ToolRunRecord};

/// Assigned opcode bytes of the London instruction set that carry no
/// immediate, excluding STOP (0x00).
pub fn plain_opcodes() -> Vec<u8> {
    let mut ops = Vec::new();
    ops.extend(0x01..=0x0b);
    ops.extend(0x10..=0x1d);
    ops.push(0x20);
    ops.extend(0x30..=0x48);
    ops.extend(0x50..=0x5b);
    ops.extend(0x80..=0xa4);
    ops.extend(0xf0..=0xf5);
    ops.extend([0xfa, 0xfd, 0xff]);
    ops
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Instruction starts of a linear sweep as `(offset, opcode, operand_len)`.
/// Only the PUSH rule matters for alignment: 0x60..=0x7f carry 1..=32 bytes.
pub fn reference_decode(code: &[u8]) -> Vec<(usize, u8, usize)> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let op = code[pc];
        let want = if (0x60..=0x7f).contains(&op) { usize::from(op - 0x5f) } else { 0 };
        let have = want.min(code.len() - pc - 1);
        out.push((pc, op, have));
        pc += 1 + have;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashKey {
    Bzzr0,
    Bzzr1,
    Ipfs,
}

impl HashKey {
    pub fn name(self) -> &'static str {
        match self {
            HashKey::Bzzr0 => "bzzr0",
            HashKey::Bzzr1 => "bzzr1",
            HashKey::Ipfs => "ipfs",
        }
    }

    fn hash_len(self) -> usize {
        match self {
            HashKey::Ipfs => 34,
            _ => 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolcEntry {
    Bytes(Vec<u8>),
    Text(String),
}

/// CBOR map followed by its big-endian length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trailer {
    pub bytes: Vec<u8>,
    /// Position of the source hash within `bytes`.
    pub hash: Range<usize>,
}

pub fn metadata_trailer(key: HashKey, hash: &[u8], solc: Option<SolcEntry>, experimental: bool) -> Trailer {
    let mut entries = vec![(Value::Text(key.name().into()), Value::Bytes(hash.to_vec()))];
    if experimental {
        entries.push((Value::Text("experimental".into()), Value::Bool(true)));
    }
    if let Some(s) = solc {
        let v = match s {
            SolcEntry::Bytes(b) => Value::Bytes(b),
            SolcEntry::Text(t) => Value::Text(t),
        };
        entries.push((Value::Text("solc".into()), v));
    }
    let mut bytes = Vec::new();
    ciborium::ser::into_writer(&Value::Map(entries), &mut bytes).expect("cbor encoding");
    let len = u16::try_from(bytes.len()).expect("short map");
    let start = bytes
        .windows(hash.len())
        .position(|w| w == hash)
        .expect("hash bytes present");
    bytes.extend_from_slice(&len.to_be_bytes());
    Trailer {
        bytes,
        hash: start..start + hash.len(),
    }
}

pub fn random_trailer<R: Rng>(rng: &mut R) -> Trailer {
    let key = *[HashKey::Bzzr0, HashKey::Bzzr1, HashKey::Ipfs].choose(rng).unwrap();
    let mut hash = vec![0u8; key.hash_len()];
    rng.fill(&mut hash[..]);
    let solc = match rng.gen_range(0..3) {
        0 => None,
        1 => Some(SolcEntry::Bytes(vec![0, rng.gen_range(4..=8), rng.gen_range(0..=26)])),
        _ => Some(SolcEntry::Text(format!("0.{}.{}", rng.gen_range(4..=8), rng.gen_range(0..=26)))),
    };
    metadata_trailer(key, &hash, solc, rng.gen_bool(0.1))
}

/// A generated code together with where each kind of byte sits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenCode {
    pub bytes: Vec<u8>,
    pub push_operands: Vec<Range<usize>>,
    /// Offsets of non-PUSH, non-STOP opcodes outside metadata.
    pub plain_opcodes: Vec<usize>,
    pub metadata: Vec<Range<usize>>,
    pub hashes: Vec<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct CodeGenOptions {
    pub instructions: Range<usize>,
    pub push_ratio: f64,
    pub trailer_prob: f64,
    /// Number of concatenated code segments, each with its own trailer.
    pub segments: Range<usize>,
}

impl Default for CodeGenOptions {
    fn default() -> Self {
        CodeGenOptions {
            instructions: 4..40,
            push_ratio: 0.35,
            trailer_prob: 0.8,
            segments: 1..3,
        }
    }
}

pub fn gen_code<R: Rng>(rng: &mut R, opts: &CodeGenOptions) -> GenCode {
    let plain = plain_opcodes();
    let mut g = GenCode::default();
    for _ in 0..rng.gen_range(opts.segments.clone()) {
        for _ in 0..rng.gen_range(opts.instructions.clone()) {
            if rng.gen_bool(opts.push_ratio) {
                let width = rng.gen_range(1..=32usize);
                g.bytes.push(0x5f + width as u8);
                let start = g.bytes.len();
                for _ in 0..width {
                    g.bytes.push(rng.gen());
                }
                g.push_operands.push(start..g.bytes.len());
            } else {
                g.plain_opcodes.push(g.bytes.len());
                g.bytes.push(*plain.choose(rng).unwrap());
            }
        }
        if rng.gen_bool(opts.trailer_prob) {
            let t = random_trailer(rng);
            let base = g.bytes.len();
            g.hashes.push(base + t.hash.start..base + t.hash.end);
            g.bytes.extend_from_slice(&t.bytes);
            g.metadata.push(base..g.bytes.len());
        }
    }
    g
}

/// Rewrites one PUSH operand byte. Returns `None` if the code has none.
pub fn mutate_push_operand<R: Rng>(rng: &mut R, g: &GenCode) -> Option<Vec<u8>> {
    let range = g.push_operands.choose(rng)?;
    let pos = rng.gen_range(range.clone());
    let mut out = g.bytes.clone();
    out[pos] = out[pos].wrapping_add(rng.gen_range(1..=255));
    Some(out)
}

/// Rewrites one byte of a metadata source hash.
pub fn mutate_metadata_hash<R: Rng>(rng: &mut R, g: &GenCode) -> Option<Vec<u8>> {
    let range = g.hashes.choose(rng)?;
    let pos = rng.gen_range(range.clone());
    let mut out = g.bytes.clone();
    out[pos] = out[pos].wrapping_add(rng.gen_range(1..=255));
    Some(out)
}

/// Replaces one plain opcode by a different plain opcode.
pub fn mutate_plain_opcode<R: Rng>(rng: &mut R, g: &GenCode) -> Option<Vec<u8>> {
    let &pos = g.plain_opcodes.choose(rng)?;
    let plain = plain_opcodes();
    let mut out = g.bytes.clone();
    let old = out[pos];
    let others: Vec<u8> = plain.into_iter().filter(|&b| b != old).collect();
    out[pos] = *others.choose(rng).unwrap();
    Some(out)
}

/// Code variants that collide at different pipeline stages: new metadata
/// hashes, new PUSH constants, or extra STOP bytes before the trailer.
pub fn variant<R: Rng>(rng: &mut R, g: &GenCode) -> Vec<u8> {
    match rng.gen_range(0..4) {
        0 => mutate_metadata_hash(rng, g).unwrap_or_else(|| g.bytes.clone()),
        1 => mutate_push_operand(rng, g).unwrap_or_else(|| g.bytes.clone()),
        2 => {
            let mut out = g.bytes.clone();
            let at = g.metadata.last().map_or(out.len(), |m| m.start);
            for _ in 0..rng.gen_range(1..=3) {
                out.insert(at, 0x00);
            }
            out
        }
        _ => g.bytes.clone(),
    }
}

pub fn record_for(code: &[u8], block: u64, has_source: bool) -> DeploymentRecord {
    DeploymentRecord {
        code_id: sha256_hex(code),
        block,
        address: None,
        has_source,
        code_ref: format!("0x{}", hex::encode(code)),
        compiler_version: None,
    }
}

/// `n` deployment records drawn from a pool of `bases` code templates and
/// their variants, spread over `0..max_block`.
pub fn gen_records<R: Rng>(rng: &mut R, n: usize, bases: usize, max_block: u64) -> Vec<DeploymentRecord> {
    let opts = CodeGenOptions {
        instructions: 2..12,
        ..CodeGenOptions::default()
    };
    let templates: Vec<GenCode> = (0..bases).map(|_| gen_code(rng, &opts)).collect();
    let mut pool: Vec<Vec<u8>> = Vec::new();
    (0..n)
        .map(|_| {
            let code = if !pool.is_empty() && rng.gen_bool(0.3) {
                pool.choose(rng).unwrap().clone()
            } else {
                let template = templates.choose(rng).unwrap();
                let code = variant(rng, template);
                pool.push(code.clone());
                code
            };
            record_for(&code, rng.gen_range(0..max_block), rng.gen_bool(0.4))
        })
        .collect()
}

pub fn records_jsonl(records: &[DeploymentRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect()
}

/// Random matrix over `tools` tools. Each tool covers a random nonempty
/// subset of `classes` and flags each code with probability `density`.
pub fn random_matrix<R: Rng>(rng: &mut R, tools: usize, classes: &[SwcClass], codes: usize, density: f64) -> FlaggedMatrix {
    let mut m = FlaggedMatrix::new();
    for t in 0..tools {
        let name = format!("tool{t}");
        let mut covered: Vec<SwcClass> = classes.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if covered.is_empty() {
            covered.push(*classes.choose(rng).unwrap());
        }
        m = m.with_tool(&name, covered.iter().copied());
        for &s in &covered {
            for c in 0..codes {
                if rng.gen_bool(density) {
                    m.flag(&name, s, &format!("c{c}"));
                }
            }
        }
    }
    m
}

/// Random tool runs over the bundled table's tools and findings.
pub fn gen_runs<R: Rng>(rng: &mut R, table: &SwcMappingTable, code_ids: &[String], n: usize) -> Vec<ToolRunRecord> {
    let tools: Vec<&str> = table.tools().into_iter().collect();
    (0..n)
        .map(|_| {
            let tool = *tools.choose(rng).unwrap();
            let mut findings: Vec<&str> = Vec::new();
            for (_, f, _) in table.rows().filter(|(t, _, _)| *t == tool) {
                if rng.gen_bool(0.25) {
                    findings.push(f);
                }
            }
            let code = code_ids.choose(rng).unwrap().clone();
            let mut r = ToolRunRecord::new(tool, code).with_findings(findings);
            if rng.gen_bool(0.2) {
                r.errors.push("analysis error".into());
            }
            r.fails = Fails {
                timeout: rng.gen_bool(0.1),
                oom: rng.gen_bool(0.05),
                program_issue: rng.gen_bool(0.05),
            };
            r.duration_s = rng.gen_range(0.0..100.0);
            r
        })
        .collect()
}

/// Classes a finding list maps to, looked up row by row.
pub fn reference_classes(table: &SwcMappingTable, tool: &str, findings: &[String]) -> BTreeSet<SwcClass> {
    let tool = tool.to_ascii_lowercase();
    let mut out = BTreeSet::new();
    for (t, f, c) in table.rows() {
        if t == tool && findings.iter().any(|x| x == f) {
            if let Classification::Swc(s) = c {
                out.insert(s);
            }
        }
    }
    out
}

/// Overlap by enumerating every (class, code) pair flagged by `t1`.
pub fn reference_overlap(m: &FlaggedMatrix, t1: &str, t2: &str) -> Option<f64> {
    let (s1, s2) = (m.swc(t1)?, m.swc(t2)?);
    let mut num = 0usize;
    let mut den = 0usize;
    for s in s1.iter().filter(|s| s2.contains(s)) {
        for code in m.flagged(t1, *s) {
            den += 1;
            if m.flagged(t2, *s).iter().any(|c| c == code) {
                num += 1;
            }
        }
    }
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Per tool covering `class`: how many of its flagged codes are flagged by
/// exactly 1, 2, 3 or at least 4 of `tools`.
pub fn reference_breakdown(m: &FlaggedMatrix, class: SwcClass, tools: &[String]) -> Vec<(String, [usize; 4])> {
    let covering: Vec<&String> = tools
        .iter()
        .filter(|t| m.swc(t).is_some_and(|s| s.contains(&class)))
        .collect();
    covering
        .iter()
        .map(|t| {
            let mut counts = [0; 4];
            for code in m.flagged(t, class) {
                let n = covering.iter().filter(|u| m.flagged(u, class).contains(code)).count();
                counts[n.min(4) - 1] += 1;
            }
            (t.to_string(), counts)
        })
        .collect()
}

/// Jaccard of two code sets, in percent.
pub fn reference_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Option<f64> {
    let union: BTreeSet<&String> = a.iter().chain(b).collect();
    let both = a.iter().filter(|x| b.contains(*x)).count();
    (!union.is_empty()).then(|| 100.0 * both as f64 / union.len() as f64)
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        (None, None) => true,
        _ => false,
    }
}

/// Checks the overlap, breakdown and Jaccard laws on one matrix and returns
/// a description of every violation.
pub fn overlap_law_violations<R: Rng>(rng: &mut R, m: &FlaggedMatrix) -> Vec<String> {
    use skelforge_core::overlap::{agreement_breakdown, jaccard, overlap, overlap_matrix};

    let mut bad = Vec::new();
    let tools: Vec<String> = m.tools().map(str::to_string).collect();
    let matrix = overlap_matrix(m);

    for t1 in &tools {
        let own: usize = m.swc(t1).unwrap().iter().map(|s| m.flagged(t1, *s).len()).sum();
        let self_overlap = overlap(t1, t1, m).unwrap();
        if own > 0 && self_overlap != Some(100.0) {
            bad.push(format!("self overlap of {t1} is {self_overlap:?}"));
        }
        for t2 in &tools {
            let got = overlap(t1, t2, m).unwrap();
            if !close(got, reference_overlap(m, t1, t2)) || matrix.get(t1, t2) != Some(got) {
                bad.push(format!("overlap({t1},{t2}) = {got:?}"));
            }
            if let Some(v) = got {
                if !(0.0..=100.0).contains(&v) {
                    bad.push(format!("overlap({t1},{t2}) out of range"));
                }
            }
            let shared: Vec<SwcClass> = m.swc(t1).unwrap().intersection(m.swc(t2).unwrap()).copied().collect();
            let subset = shared.iter().all(|s| m.flagged(t1, *s).is_subset(m.flagged(t2, *s)));
            if subset && got.is_some() && got != Some(100.0) {
                bad.push(format!("subset law fails for ({t1},{t2})"));
            }
            let equal = shared.iter().all(|s| m.flagged(t1, *s) == m.flagged(t2, *s));
            let nonempty = shared.iter().any(|s| !m.flagged(t1, *s).is_empty());
            let mutual = got == Some(100.0) && overlap(t2, t1, m).unwrap() == Some(100.0);
            if mutual != (equal && nonempty) {
                bad.push(format!("mutual-100 law fails for ({t1},{t2})"));
            }

            if !shared.is_empty() {
                let union = |t: &str| -> BTreeSet<String> {
                    shared.iter().flat_map(|s| m.flagged(t, *s).iter().cloned()).collect()
                };
                let j = jaccard(t1, t2, m, None).unwrap();
                if !close(j, reference_jaccard(&union(t1), &union(t2))) || j.is_some_and(|v| !(0.0..=100.0).contains(&v)) {
                    bad.push(format!("jaccard({t1},{t2}) = {j:?}"));
                }
                let s = shared[rng.gen_range(0..shared.len())];
                let js = jaccard(t1, t2, m, Some(s)).unwrap();
                if !close(js, reference_jaccard(m.flagged(t1, s), m.flagged(t2, s))) {
                    bad.push(format!("jaccard({t1},{t2},{s}) = {js:?}"));
                }

                // Adding one code to both tools under a shared class.
                let mut grown = m.clone();
                grown.flag(t1, s, "fresh-code");
                grown.flag(t2, s, "fresh-code");
                for (a, b) in [(t1, t2), (t2, t1)] {
                    let before = overlap(a, b, m).unwrap().unwrap_or(0.0);
                    let after = overlap(a, b, &grown).unwrap().unwrap_or(0.0);
                    if after + 1e-9 < before {
                        bad.push(format!("overlap({a},{b}) decreased from {before} to {after}"));
                    }
                }
            }
        }
    }

    for class in m.classes() {
        let Ok(rows) = agreement_breakdown(m, class, &tools) else {
            bad.push(format!("breakdown failed for {class}"));
            continue;
        };
        let reference = reference_breakdown(m, class, &tools);
        if rows.len() != reference.len() {
            bad.push(format!("breakdown rows for {class}"));
        }
        for (row, (tool, counts)) in rows.iter().zip(&reference) {
            if row.tool != *tool || row.counts != *counts || row.counts.iter().sum::<usize>() != row.flagged {
                bad.push(format!("breakdown counts for {tool} {class}"));
            }
            match row.shares {
                Some(s) if (s.iter().sum::<f64>() - 100.0).abs() > 1e-9 => {
                    bad.push(format!("breakdown shares for {tool} {class} sum to {}", s.iter().sum::<f64>()))
                }
                None if row.flagged > 0 => bad.push(format!("breakdown shares missing for {tool} {class}")),
                _ => {}
            }
        }
    }
    bad
}

/// Adds a tool whose flags contain those of `base` on every class of `base`,
/// plus optional extra codes. Returns the grown matrix.
pub fn with_superset_tool<R: Rng>(rng: &mut R, m: &FlaggedMatrix, base: &str, name: &str, extra: bool) -> FlaggedMatrix {
    let classes: Vec<SwcClass> = m.swc(base).unwrap().iter().copied().collect();
    let mut out = m.clone().with_tool(name, classes.iter().copied());
    for &s in &classes {
        for code in m.flagged(base, s).clone() {
            out.flag(name, s, &code);
        }
        if extra && rng.gen_bool(0.5) {
            out.flag(name, s, &format!("extra{}", rng.gen_range(0..1000)));
        }
    }
    out
}

/// Code families by pairwise comparison of canonical bytes.
pub fn pairwise_partition(corpus: &Corpus, sk: &Skeletonizer<'_>) -> BTreeSet<BTreeSet<String>> {
    let items: Vec<(&String, Vec<u8>)> = corpus
        .codes()
        .iter()
        .map(|(id, e)| (id, sk.skeletonize(&e.code).canonical_bytes))
        .collect();
    let mut assigned = vec![false; items.len()];
    let mut out = BTreeSet::new();
    for i in 0..items.len() {
        if assigned[i] {
            continue;
        }
        let mut group = BTreeSet::new();
        for j in i..items.len() {
            if items[i].1 == items[j].1 {
                assigned[j] = true;
                group.insert(items[j].0.clone());
            }
        }
        out.insert(group);
    }
    out
}

/// Pipeline counts recomputed from the raw records: distinct byte strings
/// after each stage of the skeleton pipeline.
pub fn stagewise_counts(records: &[DeploymentRecord], sk: &Skeletonizer<'_>) -> [usize; 5] {
    let raw: BTreeSet<Vec<u8>> = records
        .iter()
        .map(|r| hex::decode(r.code_ref.trim_start_matches("0x")).expect("inline code"))
        .collect();
    let stages: Vec<_> = raw.iter().map(|c| sk.stages(c)).collect();
    let distinct = |f: fn(&Stages) -> &Vec<u8>| stages.iter().map(f).collect::<BTreeSet<_>>().len();
    [
        records.len(),
        raw.len(),
        distinct(|s| &s.without_metadata),
        distinct(|s| &s.without_push_args),
        distinct(|s| &s.skeleton.canonical_bytes),
    ]
}
