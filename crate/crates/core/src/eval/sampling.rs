use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{ConsultationRecord, Department, LengthBand, ScoredRecord};
use crate::util::derive_seed;

fn group<K: Ord + Copy>(keys: impl IntoIterator<Item = K>) -> BTreeMap<K, Vec<usize>> {
    let mut map: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.into_iter().enumerate() {
        map.entry(k).or_default().push(i);
    }
    map
}

/// Index-level matched sampling: for each of `repeats` samples, draw from
/// `pool` exactly as many items per department as `model` has. Indices within
/// a sample are sorted.
pub fn matched_sample_indices(
    model: &[Department],
    pool: &[Department],
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, EvalError> {
    let need = group(model.iter().copied());
    let have = group(pool.iter().copied());
    for (dept, wanted) in &need {
        let avail = have.get(dept).map_or(0, Vec::len);
        if avail < wanted.len() {
            return Err(EvalError::InsufficientPool { department: *dept, need: wanted.len(), have: avail });
        }
    }
    let samples = (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("bench-sample-{r}")));
            let mut picked: Vec<usize> = need
                .iter()
                .flat_map(|(dept, wanted)| {
                    let candidates = &have[dept];
                    index::sample(&mut rng, candidates.len(), wanted.len())
                        .into_iter()
                        .map(|i| candidates[i])
                        .collect::<Vec<_>>()
                })
                .collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    Ok(samples)
}

/// One department-matched human benchmark drawn from the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub index: usize,
    pub records: Vec<ConsultationRecord>,
}

pub fn matched_sample(
    model_records: &[ConsultationRecord],
    human_pool: &[ConsultationRecord],
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchmarkSample>, EvalError> {
    let model: Vec<Department> = model_records.iter().map(|r| r.department).collect();
    let pool: Vec<Department> = human_pool.iter().map(|r| r.department).collect();
    Ok(matched_sample_indices(&model, &pool, repeats, seed)?
        .into_iter()
        .enumerate()
        .map(|(index, idx)| BenchmarkSample {
            index,
            records: idx.into_iter().map(|i| human_pool[i].clone()).collect(),
        })
        .collect())
}

/// A model record and the human record it is compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub model_record_id: String,
    pub human_record_id: String,
    pub department: Department,
    pub length_band: LengthBand,
}

/// Pair every model record with a distinct human record of the same
/// department and conversation-length band. Ties within a bucket are broken
/// by a seeded uniform draw.
pub fn match_pairs(
    model_records: &[ConsultationRecord],
    human_pool: &[ConsultationRecord],
    seed: u64,
) -> Result<Vec<MatchedPair>, EvalError> {
    let key = |r: &ConsultationRecord| (r.department, r.length_band());
    let need = group(model_records.iter().map(key));
    let have = group(human_pool.iter().map(key));
    for ((dept, band), wanted) in &need {
        let avail = have.get(&(*dept, *band)).map_or(0, Vec::len);
        if avail < wanted.len() {
            return Err(EvalError::InsufficientBucket {
                department: *dept,
                band: band.label().to_string(),
                need: wanted.len(),
                have: avail,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "match-pairs"));
    let mut assigned: Vec<Option<usize>> = vec![None; model_records.len()];
    for (k, wanted) in &need {
        let candidates = &have[k];
        let draw = index::sample(&mut rng, candidates.len(), wanted.len());
        for (m, c) in wanted.iter().zip(draw) {
            assigned[*m] = Some(candidates[c]);
        }
    }
    Ok(model_records
        .iter()
        .zip(assigned)
        .map(|(m, h)| {
            let h = &human_pool[h.expect("every model record assigned")];
            MatchedPair {
                model_record_id: m.id.clone(),
                human_record_id: h.id.clone(),
                department: m.department,
                length_band: m.length_band(),
            }
        })
        .collect())
}

/// Human-side record lookup for pairs built over scored corpora.
pub fn index_by_id(records: &[ScoredRecord]) -> BTreeMap<&str, &ScoredRecord> {
    records.iter().map(|r| (r.record.id.as_str(), r)).collect()
}
