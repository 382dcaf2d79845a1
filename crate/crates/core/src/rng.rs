//! Deterministic random substreams.
//!
//! Every simulation stage draws from its own ChaCha8 stream keyed by the run
//! seed. Within a stream, each item (a laser repetition, a photon) owns a
//! fixed window of words, so the numbers an item sees depend only on the
//! seed and the item index, never on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage identifiers used as ChaCha stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Emission = 1,
    Detector0 = 2,
    Detector1 = 3,
    Dark0 = 4,
    Dark1 = 5,
    Aux = 6,
}

impl Stage {
    pub fn detector(channel: u8) -> Self {
        if channel == 0 {
            Stage::Detector0
        } else {
            Stage::Detector1
        }
    }

    pub fn dark(channel: u8) -> Self {
        if channel == 0 {
            Stage::Dark0
        } else {
            Stage::Dark1
        }
    }
}

/// Base generator for a stage.
pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Generator positioned at the start of item `index`'s window of
/// `words_per_item` 32-bit words.
pub struct ItemRng {
    rng: ChaCha8Rng,
    words_per_item: u128,
}

impl ItemRng {
    pub fn new(seed: u64, stage: Stage, words_per_item: u32) -> Self {
        Self { rng: stage_rng(seed, stage), words_per_item: words_per_item as u128 }
    }

    /// Seeks to `index` and returns the generator together with the word
    /// position where that item's window ends.
    pub fn seek(&mut self, index: u64) -> (&mut ChaCha8Rng, u128) {
        let start = index as u128 * self.words_per_item;
        self.rng.set_word_pos(start);
        (&mut self.rng, start + self.words_per_item)
    }
}

/// Panics if an item read past its window; that would silently correlate
/// neighbouring items.
pub fn check_budget(rng: &ChaCha8Rng, end: u128) {
    assert!(rng.get_word_pos() <= end, "random word budget exceeded for item");
}
