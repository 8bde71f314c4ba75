use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BaselineError;
use crate::corpus::{CognateSet, Word};

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Returns one attested daughter form, chosen uniformly. The choice depends
/// only on `seed` and the set id.
pub fn random_daughter(cs: &CognateSet, seed: u64) -> Result<Word, BaselineError> {
    if cs.daughters.is_empty() {
        return Err(BaselineError::NoDaughters(cs.set_id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&cs.set_id));
    let k = rng.gen_range(0..cs.daughters.len());
    Ok(cs.daughters.values().nth(k).expect("index in range").clone())
}
