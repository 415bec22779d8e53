//! Fixed-length two-channel inputs: a pre-padded BPE sequence next to a
//! post-padded unigram sequence, so truncation keeps the end of the text in
//! one channel and the start in the other.

use crate::bpe::{encode_bpe, BpeModel, PAD_ID};
use crate::unigram::{viterbi_encode, UnigramModel};

/// Padding/truncation side. `Pre` acts at the front (keeps the sequence
/// end), `Post` at the back (keeps the sequence start).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Pre,
    Post,
}

/// The two fixed-length id sequences for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub bpe_ids: Vec<u32>,
    pub uni_ids: Vec<u32>,
    pub label: Option<u8>,
}

impl EncodedPair {
    pub fn max_len(&self) -> usize {
        debug_assert_eq!(self.bpe_ids.len(), self.uni_ids.len());
        self.bpe_ids.len()
    }
}

/// Force `ids` to exactly `max_len` entries by padding or truncating on the
/// side selected by `mode`.
pub fn pad_or_truncate(ids: &[u32], max_len: usize, mode: PadMode, pad_id: u32) -> Vec<u32> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let n = ids.len();
    match mode {
        PadMode::Pre => {
            if n >= max_len {
                ids[n - max_len..].to_vec()
            } else {
                let mut out = vec![pad_id; max_len - n];
                out.extend_from_slice(ids);
                out
            }
        }
        PadMode::Post => {
            if n >= max_len {
                ids[..max_len].to_vec()
            } else {
                let mut out = ids.to_vec();
                out.resize(max_len, pad_id);
                out
            }
        }
    }
}

/// Encode one preprocessed text through both tokenizers: pre-padded BPE ids
/// and post-padded unigram ids, each exactly `max_len` long.
pub fn encode_dual(
    text: &str,
    bpe: &BpeModel,
    uni: &UnigramModel,
    max_len: usize,
    label: Option<u8>,
) -> EncodedPair {
    let bpe_ids = pad_or_truncate(&encode_bpe(text, bpe), max_len, PadMode::Pre, PAD_ID);
    let uni_ids = pad_or_truncate(&viterbi_encode(text, uni), max_len, PadMode::Post, PAD_ID);
    EncodedPair {
        bpe_ids,
        uni_ids,
        label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::train_bpe;
    use crate::unigram::{train_unigram, UnigramTrainOptions};
    use std::collections::HashMap;

    #[test]
    fn pad_or_truncate_definition() {
        assert_eq!(pad_or_truncate(&[5, 6], 4, PadMode::Pre, 0), vec![0, 0, 5, 6]);
        assert_eq!(pad_or_truncate(&[5, 6], 4, PadMode::Post, 0), vec![5, 6, 0, 0]);
        assert_eq!(
            pad_or_truncate(&[1, 2, 3, 4, 5], 3, PadMode::Pre, 0),
            vec![3, 4, 5]
        );
        assert_eq!(
            pad_or_truncate(&[1, 2, 3, 4, 5], 3, PadMode::Post, 0),
            vec![1, 2, 3]
        );
        // identity when lengths already agree
        let ids = [7u32, 8, 9];
        assert_eq!(pad_or_truncate(&ids, 3, PadMode::Pre, 0), ids.to_vec());
        assert_eq!(pad_or_truncate(&ids, 3, PadMode::Post, 0), ids.to_vec());
    }

    #[test]
    fn pad_or_truncate_is_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let ids: Vec<u32> = (0..rng.gen_range(0..20)).map(|_| rng.gen_range(1..99)).collect();
            let max_len = rng.gen_range(1..12);
            for mode in [PadMode::Pre, PadMode::Post] {
                let once = pad_or_truncate(&ids, max_len, mode, 0);
                assert_eq!(pad_or_truncate(&once, max_len, mode, 0), once);
                assert_eq!(once.len(), max_len);
            }
        }
    }

    fn toy_models() -> (BpeModel, UnigramModel) {
        let words = ["gussa", "mat", "kar", "dost", "bura", "bhai"];
        let wc: HashMap<String, u64> = words.iter().map(|w| (w.to_string(), 5)).collect();
        let bpe = train_bpe(&wc, 60).unwrap();
        let uni = train_unigram(
            &wc,
            &UnigramTrainOptions {
                target_vocab_size: 60,
                ..Default::default()
            },
        )
        .unwrap();
        (bpe, uni)
    }

    #[test]
    fn dual_channels_keep_opposite_ends() {
        let (bpe, uni) = toy_models();
        // long enough to overflow max_len in both encodings
        let text = "gussa mat kar dost bura bhai gussa mat kar dost bura bhai";
        let max_len = 6;
        let pair = encode_dual(text, &bpe, &uni, max_len, Some(1));

        let raw_bpe = crate::bpe::encode_bpe(text, &bpe);
        let raw_uni = crate::unigram::viterbi_encode(text, &uni);
        assert!(raw_bpe.len() > max_len && raw_uni.len() > max_len);

        // BPE channel ends with the text's final tokens
        assert_eq!(pair.bpe_ids, raw_bpe[raw_bpe.len() - max_len..].to_vec());
        assert_eq!(*pair.bpe_ids.last().unwrap(), *raw_bpe.last().unwrap());
        // unigram channel starts with the text's first tokens
        assert_eq!(pair.uni_ids, raw_uni[..max_len].to_vec());
        assert_eq!(pair.uni_ids[0], raw_uni[0]);
        assert_eq!(pair.label, Some(1));
    }

    #[test]
    fn empty_text_is_all_padding() {
        let (bpe, uni) = toy_models();
        let pair = encode_dual("", &bpe, &uni, 8, None);
        assert_eq!(pair.bpe_ids, vec![PAD_ID; 8]);
        assert_eq!(pair.uni_ids, vec![PAD_ID; 8]);
    }

    #[test]
    fn trailing_profanity_survives_in_the_bpe_channel() {
        let (bpe, uni) = toy_models();
        // "bura" sits at the very end of an over-length sample
        let mut text = "dost ".repeat(20);
        text.push_str("bura");
        let max_len = 8;
        let pair = encode_dual(text.trim(), &bpe, &uni, max_len, None);

        let bura_bpe = crate::bpe::encode_bpe("bura", &bpe);
        let tail = &pair.bpe_ids[max_len - bura_bpe.len()..];
        assert_eq!(tail, &bura_bpe[..]);

        let bura_uni = crate::unigram::viterbi_encode("bura", &uni);
        // and it is truncated away from the unigram channel
        assert!(!pair
            .uni_ids
            .windows(bura_uni.len())
            .any(|w| w == &bura_uni[..]));
    }
}
