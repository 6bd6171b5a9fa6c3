use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Corpus;
use crate::skeleton::Skeletonizer;

/// Runtime codes sharing one skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFamily {
    pub skeleton_digest: String,
    pub representative: String,
    #[serde(rename = "members")]
    pub member_code_ids: BTreeSet<String>,
    pub first_block: u64,
    pub deployment_count: usize,
}

/// Earliest deployment block over the given member codes.
pub fn assign_first_block<'a>(corpus: &Corpus, members: impl IntoIterator<Item = &'a str>) -> Option<u64> {
    members
        .into_iter()
        .filter_map(|id| corpus.get(id)?.first_block())
        .min()
}

/// Groups the corpus by skeleton digest. Families come out sorted by digest.
///
/// The representative prefers members with verified source, then the earliest
/// first deployment, then the smallest code id; the result does not depend on
/// record order.
pub fn cluster(corpus: &Corpus, skeletonizer: &Skeletonizer<'_>) -> Vec<CodeFamily> {
    let keyed: Vec<(String, &str)> = corpus
        .codes()
        .par_iter()
        .map(|(id, entry)| (skeletonizer.skeletonize(&entry.code).digest, id.as_str()))
        .collect();

    let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (digest, id) in keyed {
        groups.entry(digest).or_default().insert(id.to_string());
    }

    groups
        .into_iter()
        .map(|(skeleton_digest, members)| {
            let representative = members
                .iter()
                .min_by_key(|id| {
                    let entry = &corpus.codes()[id.as_str()];
                    (!entry.has_source(), entry.first_block().unwrap_or(u64::MAX), id.as_str())
                })
                .cloned()
                .expect("families are nonempty");
            let first_block = assign_first_block(corpus, members.iter().map(String::as_str)).unwrap_or(0);
            let deployment_count = members.iter().map(|id| corpus.codes()[id].deployments.len()).sum();
            CodeFamily {
                skeleton_digest,
                representative,
                member_code_ids: members,
                first_block,
                deployment_count,
            }
        })
        .collect()
}

/// Distinct-code counts at each stage of the skeleton pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineCounts {
    pub deployments: usize,
    pub distinct_runtime_codes: usize,
    pub without_metadata: usize,
    pub without_push_args: usize,
    pub skeletons: usize,
}

impl PipelineCounts {
    /// Rows after the deployment count never increase.
    pub fn is_monotone(&self) -> bool {
        self.distinct_runtime_codes >= self.without_metadata
            && self.without_metadata >= self.without_push_args
            && self.without_push_args >= self.skeletons
    }
}

pub fn dedup_stats(corpus: &Corpus, skeletonizer: &Skeletonizer<'_>) -> PipelineCounts {
    type Key = [u8; 32];
    let keys: Vec<(Key, Key, String)> = corpus
        .codes()
        .par_iter()
        .map(|(_, entry)| {
            let stages = skeletonizer.stages(&entry.code);
            (
                Sha256::digest(&stages.without_metadata).into(),
                Sha256::digest(&stages.without_push_args).into(),
                stages.skeleton.digest,
            )
        })
        .collect();

    let without_metadata: HashSet<&Key> = keys.iter().map(|k| &k.0).collect();
    let without_push_args: HashSet<&Key> = keys.iter().map(|k| &k.1).collect();
    let skeletons: HashSet<&String> = keys.iter().map(|k| &k.2).collect();
    PipelineCounts {
        deployments: corpus.deployment_count(),
        distinct_runtime_codes: corpus.distinct_codes(),
        without_metadata: without_metadata.len(),
        without_push_args: without_push_args.len(),
        skeletons: skeletons.len(),
    }
}
