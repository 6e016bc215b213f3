//! Fixed-width question features for the router.
//!
//! Layout: `[bias | topic one-hot | hop one-hot | hashed words | attempt]`.
//! The topic and hop blocks are filled only for questions with scripted
//! attributes. The attempt block describes the previous executed call of the
//! episode and is zero on the first turn.

use sha2::{Digest, Sha256};

use crate::backends::Tier;
use crate::harness::QuestionRecord;

pub const TOPIC_BUCKETS: usize = 5;
pub const HOP_BUCKETS: usize = 3;
pub const TEXT_BUCKETS: usize = 8;
/// Retry flag, the previous call's tier, and that tier crossed with the hop bucket.
pub const ATTEMPT_BUCKETS: usize = 4 + 3 * HOP_BUCKETS;
pub const FEATURE_DIM: usize = 1 + TOPIC_BUCKETS + HOP_BUCKETS + TEXT_BUCKETS + ATTEMPT_BUCKETS;

pub const TOPIC_OFFSET: usize = 1;
pub const HOP_OFFSET: usize = TOPIC_OFFSET + TOPIC_BUCKETS;
pub const TEXT_OFFSET: usize = HOP_OFFSET + HOP_BUCKETS;
pub const ATTEMPT_OFFSET: usize = TEXT_OFFSET + TEXT_BUCKETS;

fn word_bucket(word: &str) -> usize {
    let digest = Sha256::digest(word.as_bytes());
    digest[0] as usize % TEXT_BUCKETS
}

pub fn featurize(q: &QuestionRecord) -> Vec<f64> {
    let mut x = vec![0.0; FEATURE_DIM];
    x[0] = 1.0;
    if let Some(attr) = q.attributes {
        x[TOPIC_OFFSET + attr.topic % TOPIC_BUCKETS] = 1.0;
        x[HOP_OFFSET + attr.hops.clamp(1, HOP_BUCKETS) - 1] = 1.0;
    }
    let lowered = q.question.to_lowercase();
    for word in lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        x[TEXT_OFFSET + word_bucket(word)] += 1.0;
    }
    let norm = x[TEXT_OFFSET..ATTEMPT_OFFSET].iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x[TEXT_OFFSET..ATTEMPT_OFFSET].iter_mut().for_each(|v| *v /= norm);
    }
    x
}

/// Question features with the attempt block set for a turn that follows a
/// call on `previous`. Inputs narrower than [`FEATURE_DIM`] are returned as is.
pub fn turn_features(base: &[f64], previous: Option<Tier>) -> Vec<f64> {
    let mut x = base.to_vec();
    if x.len() < FEATURE_DIM {
        return x;
    }
    x[ATTEMPT_OFFSET..ATTEMPT_OFFSET + ATTEMPT_BUCKETS].iter_mut().for_each(|v| *v = 0.0);
    if let Some(tier) = previous {
        x[ATTEMPT_OFFSET] = 1.0;
        let slot = match tier {
            Tier::Small => 0,
            Tier::Medium => 1,
            Tier::Large => 2,
        };
        x[ATTEMPT_OFFSET + 1 + slot] = 1.0;
        if let Some(hop) = (0..HOP_BUCKETS).find(|&h| x[HOP_OFFSET + h] > 0.0) {
            x[ATTEMPT_OFFSET + 4 + 3 * hop + slot] = 1.0;
        }
    }
    x
}
