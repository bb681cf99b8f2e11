use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl Fold {
    pub fn is_disjoint(&self) -> bool {
        self.train.is_disjoint(&self.validation)
            && self.train.is_disjoint(&self.test)
            && self.validation.is_disjoint(&self.test)
    }
}

/// Speaker-independent cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Speaker groups; fold `i` tests group `i`.
    pub groups: Vec<BTreeSet<String>>,
    pub folds: Vec<Fold>,
}

/// Splits speakers into `k` groups balanced by segment count and rotates
/// them: fold `i` tests group `i`, validates on group `(i+1) % k` and trains
/// on the rest.
///
/// Speakers are shuffled with the seed, stably sorted by segment count
/// (descending) and each is placed in the currently lightest group (lowest
/// index on ties).
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 3 {
        return Err(Error::Config(format!("need at least 3 folds, got {k}")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, s) in corpus.segments() {
        *counts.entry(s.speaker_id.as_str()).or_default() += 1;
    }
    if counts.len() < k {
        return Err(Error::Config(format!(
            "{} speakers cannot fill {k} folds",
            counts.len()
        )));
    }
    let mut speakers: Vec<(&str, usize)> = counts.into_iter().collect();
    speakers.shuffle(&mut rng::substream(seed, Stream::Folds));
    speakers.sort_by(|a, b| b.1.cmp(&a.1));
    let mut groups = vec![BTreeSet::new(); k];
    let mut load = vec![0usize; k];
    for (spk, n) in speakers {
        let g = (0..k).min_by_key(|&g| (load[g], groups[g].len(), g)).unwrap();
        load[g] += n;
        groups[g].insert(spk.to_string());
    }
    let folds = (0..k)
        .map(|i| {
            let v = (i + 1) % k;
            let train = (0..k)
                .filter(|&g| g != i && g != v)
                .flat_map(|g| groups[g].iter().cloned())
                .collect();
            Fold {
                index: i,
                train,
                validation: groups[v].clone(),
                test: groups[i].clone(),
            }
        })
        .collect();
    Ok(FoldPlan { k, seed, groups, folds })
}
