//! Data generators shared by the retrieval benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rapid_core::{EmbeddingIndex, EmbeddingStore, EmbeddingVector};

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Random unit-norm index of `m` rows.
pub fn random_index(seed: u64, m: usize, d: usize) -> EmbeddingIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat: Vec<f32> = (0..m).flat_map(|_| unit(&mut rng, d)).collect();
    EmbeddingIndex::from_store(EmbeddingStore::new(d, flat).expect("unit rows"))
}

pub fn random_queries(seed: u64, n: usize, d: usize) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| EmbeddingVector::from_unit(unit(&mut rng, d))).collect()
}

pub fn random_scores(seed: u64, m: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}
