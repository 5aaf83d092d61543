//! Deterministic random workload generation for the attack matrix, the
//! benchmark harness, and tests.

use rand::Rng as _;
use rand_chacha::ChaCha20Rng;

/// `n` distinct random strings over the first `alphabet` lowercase
/// letters, lengths `0..=max_len`, in dictionary order.
pub(crate) fn random_corpus(
    rng: &mut ChaCha20Rng,
    n: usize,
    alphabet: u8,
    max_len: usize,
) -> Vec<String> {
    let mut set = std::collections::BTreeSet::new();
    while set.len() < n {
        set.insert(random_word(rng, alphabet, max_len));
    }
    set.into_iter().collect()
}

/// A random string over the first `alphabet` lowercase letters, length
/// `0..=max_len`.
pub(crate) fn random_word(rng: &mut ChaCha20Rng, alphabet: u8, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..alphabet)) as char)
        .collect()
}
