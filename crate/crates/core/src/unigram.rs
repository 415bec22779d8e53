//! Unigram language-model tokenizer: seeded vocabulary, EM refinement,
//! loss-based pruning, and Viterbi encoding, plus the `UNIGRAM v1` vocab
//! file format.
//!
//! Token probabilities form a proper distribution (they sum to 1). Every
//! single character seen in training stays in the vocabulary so any input
//! over the training alphabet remains segmentable; characters outside it
//! encode as UNK.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

pub use crate::bpe::{PAD_ID, UNK_ID};

#[derive(Error, Debug)]
pub enum UnigramError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("target vocab size {target} below minimum {minimum} (specials + characters)")]
    TargetTooSmall { target: usize, minimum: usize },
    #[error("drop fraction must be in (0, 1), got {0}")]
    BadDropFraction(f64),
    #[error("word {0:?} has no segmentation under the current vocabulary")]
    UnsegmentableWord(String),
    #[error("vocab file line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Token set with log probabilities. Ids: PAD=0, UNK=1, then tokens in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
    logprob: HashMap<String, f64>,
    max_token_chars: usize,
}

impl UnigramModel {
    /// Build a model from (token, probability) pairs. Probabilities are
    /// normalized here; tokens get ids in lexicographic order after the
    /// specials.
    pub fn from_probs(pairs: impl IntoIterator<Item = (String, f64)>) -> Self {
        let sorted: BTreeMap<String, f64> = pairs.into_iter().collect();
        let total: f64 = sorted.values().sum();
        let mut id_to_token: Vec<String> = vec!["<pad>".into(), "<unk>".into()];
        let mut logprob = HashMap::new();
        let mut max_token_chars = 1;
        for (token, prob) in &sorted {
            id_to_token.push(token.clone());
            logprob.insert(token.clone(), (prob / total).ln());
            max_token_chars = max_token_chars.max(token.chars().count());
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, t)| (t.clone(), id as u32))
            .collect();
        Self {
            id_to_token,
            token_to_id,
            logprob,
            max_token_chars,
        }
    }

    /// Id-space size, counting the two specials.
    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn logprob(&self, token: &str) -> Option<f64> {
        self.logprob.get(token).copied()
    }

    /// Scored tokens (specials excluded), in id order.
    pub fn tokens(&self) -> impl Iterator<Item = (&str, f64)> {
        self.id_to_token
            .iter()
            .skip(2)
            .map(|t| (t.as_str(), self.logprob[t]))
    }

    /// Total probability mass; 1 within 1e-6 for any trained model.
    pub fn total_mass(&self) -> f64 {
        self.logprob.values().map(|lp| lp.exp()).sum()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Char-boundary byte offsets: positions[k] is the byte index of char k.
fn char_boundaries(word: &str) -> Vec<usize> {
    let mut bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).collect();
    bounds.push(word.len());
    bounds
}

/// Corpus log-likelihood with per-edge adjustment: `exclude` removes one
/// token and `log_renorm` rescales the remaining probabilities.
fn lattice_loglik(
    word: &str,
    logprob: &HashMap<String, f64>,
    max_token_chars: usize,
    exclude: Option<&str>,
    log_renorm: f64,
) -> f64 {
    let bounds = char_boundaries(word);
    let n = bounds.len() - 1;
    let mut alpha = vec![f64::NEG_INFINITY; n + 1];
    alpha[0] = 0.0;
    for end in 1..=n {
        let lo = end.saturating_sub(max_token_chars);
        for start in lo..end {
            if alpha[start] == f64::NEG_INFINITY {
                continue;
            }
            let piece = &word[bounds[start]..bounds[end]];
            if exclude == Some(piece) {
                continue;
            }
            if let Some(&lp) = logprob.get(piece) {
                alpha[end] = log_add(alpha[end], alpha[start] + lp - log_renorm);
            }
        }
    }
    alpha[n]
}

/// Seed the vocabulary: substrings of length <= `max_token_chars` occurring
/// at least twice, ranked by frequency x length and truncated to
/// `seed_size`, then unioned with every single character. Initial
/// probabilities are proportional to corpus frequency.
pub fn seed_vocab(
    word_counts: &HashMap<String, u64>,
    seed_size: usize,
    max_token_chars: usize,
) -> Result<UnigramModel, UnigramError> {
    if word_counts.is_empty() || word_counts.values().all(|&c| c == 0) {
        return Err(UnigramError::EmptyCorpus);
    }
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    let mut char_freq: BTreeMap<String, u64> = BTreeMap::new();
    for (word, &count) in word_counts {
        if count == 0 {
            continue;
        }
        let bounds = char_boundaries(word);
        let n = bounds.len() - 1;
        for start in 0..n {
            for end in (start + 1)..=n.min(start + max_token_chars) {
                let piece = word[bounds[start]..bounds[end]].to_string();
                if end - start == 1 {
                    *char_freq.entry(piece.clone()).or_insert(0) += count;
                }
                *freq.entry(piece).or_insert(0) += count;
            }
        }
    }

    let mut candidates: Vec<(&String, u64)> = freq
        .iter()
        .filter(|&(_, &f)| f >= 2)
        .map(|(piece, &f)| (piece, f))
        .collect();
    candidates.sort_by(|a, b| {
        let score = |(piece, f): &(&String, u64)| f * piece.chars().count() as u64;
        score(b).cmp(&score(a)).then_with(|| a.0.cmp(b.0))
    });
    candidates.truncate(seed_size);

    let mut kept: BTreeMap<String, u64> = candidates
        .into_iter()
        .map(|(piece, f)| (piece.clone(), f))
        .collect();
    for (c, &f) in &char_freq {
        kept.entry(c.clone()).or_insert(f);
    }

    Ok(UnigramModel::from_probs(
        kept.into_iter().map(|(t, f)| (t, f as f64)),
    ))
}

/// One soft EM step: expected token counts from forward-backward over each
/// word's segmentation lattice, then renormalization. Returns the updated
/// model and the pre-update corpus log-likelihood.
pub fn em_step(
    model: &UnigramModel,
    word_counts: &HashMap<String, u64>,
) -> Result<(UnigramModel, f64), UnigramError> {
    let max_len = model.max_token_chars;
    // every current token keeps an entry: the M-step renormalizes, it never
    // drops (pruning is a separate operation)
    let mut expected: BTreeMap<String, f64> =
        model.tokens().map(|(t, _)| (t.to_string(), 0.0)).collect();
    let mut corpus_ll = 0.0;

    let mut words: Vec<(&String, u64)> = word_counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(w, &c)| (w, c))
        .collect();
    words.sort_unstable();

    for (word, count) in words {
        let bounds = char_boundaries(word);
        let n = bounds.len() - 1;
        if n == 0 {
            continue;
        }
        let mut alpha = vec![f64::NEG_INFINITY; n + 1];
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        alpha[0] = 0.0;
        beta[n] = 0.0;
        for end in 1..=n {
            for start in end.saturating_sub(max_len)..end {
                if alpha[start] == f64::NEG_INFINITY {
                    continue;
                }
                if let Some(&lp) = model.logprob.get(&word[bounds[start]..bounds[end]]) {
                    alpha[end] = log_add(alpha[end], alpha[start] + lp);
                }
            }
        }
        let word_ll = alpha[n];
        if word_ll == f64::NEG_INFINITY {
            return Err(UnigramError::UnsegmentableWord(word.clone()));
        }
        for start in (0..n).rev() {
            for end in (start + 1)..=n.min(start + max_len) {
                if beta[end] == f64::NEG_INFINITY {
                    continue;
                }
                if let Some(&lp) = model.logprob.get(&word[bounds[start]..bounds[end]]) {
                    beta[start] = log_add(beta[start], lp + beta[end]);
                }
            }
        }
        corpus_ll += count as f64 * word_ll;
        for start in 0..n {
            if alpha[start] == f64::NEG_INFINITY {
                continue;
            }
            for end in (start + 1)..=n.min(start + max_len) {
                let piece = &word[bounds[start]..bounds[end]];
                if let Some(&lp) = model.logprob.get(piece) {
                    if beta[end] == f64::NEG_INFINITY {
                        continue;
                    }
                    let occupancy = (alpha[start] + lp + beta[end] - word_ll).exp();
                    *expected.entry(piece.to_string()).or_insert(0.0) +=
                        count as f64 * occupancy;
                }
            }
        }
    }

    // a relative floor keeps rare tokens at a finite log probability even
    // when their occupancy underflows; healthy counts pass through exactly
    let total: f64 = expected.values().sum();
    let floor = total * 1e-15;
    let updated =
        UnigramModel::from_probs(expected.into_iter().map(|(t, c)| (t, c.max(floor))));
    Ok((updated, corpus_ll))
}

fn corpus_loglik(
    model: &UnigramModel,
    word_counts: &HashMap<String, u64>,
    exclude: Option<&str>,
    log_renorm: f64,
) -> Result<f64, UnigramError> {
    let mut total = 0.0;
    for (word, &count) in word_counts {
        if count == 0 {
            continue;
        }
        let ll = lattice_loglik(
            word,
            &model.logprob,
            model.max_token_chars,
            exclude,
            log_renorm,
        );
        if ll == f64::NEG_INFINITY {
            return Err(UnigramError::UnsegmentableWord(word.clone()));
        }
        total += count as f64 * ll;
    }
    Ok(total)
}

fn prune_capped(
    model: &UnigramModel,
    word_counts: &HashMap<String, u64>,
    drop_fraction: f64,
    min_drop: usize,
    max_drop: usize,
) -> Result<UnigramModel, UnigramError> {
    if !(drop_fraction > 0.0 && drop_fraction < 1.0) {
        return Err(UnigramError::BadDropFraction(drop_fraction));
    }
    let multi: Vec<&str> = model
        .tokens()
        .map(|(t, _)| t)
        .filter(|t| t.chars().count() > 1)
        .collect();
    let n_drop = ((drop_fraction * multi.len() as f64).floor() as usize)
        .max(min_drop)
        .min(max_drop)
        .min(multi.len());
    if n_drop == 0 {
        return Ok(model.clone());
    }

    let full_ll = corpus_loglik(model, word_counts, None, 0.0)?;
    let mut losses: Vec<(f64, &str)> = Vec::with_capacity(multi.len());
    for token in multi {
        let prob = model.logprob[token].exp();
        if prob >= 1.0 {
            losses.push((f64::INFINITY, token));
            continue;
        }
        let log_renorm = (-prob).ln_1p();
        let without = corpus_loglik(model, word_counts, Some(token), log_renorm)?;
        losses.push((full_ll - without, token));
    }
    losses.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    let dropped: Vec<&str> = losses.iter().take(n_drop).map(|&(_, t)| t).collect();

    let remaining: Vec<(String, f64)> = model
        .tokens()
        .filter(|(t, _)| !dropped.contains(t))
        .map(|(t, lp)| (t.to_string(), lp.exp()))
        .collect();
    Ok(UnigramModel::from_probs(remaining))
}

/// Drop the `drop_fraction` of multi-character tokens whose removal costs
/// the corpus log-likelihood least (single characters are never dropped),
/// then renormalize.
pub fn prune(
    model: &UnigramModel,
    word_counts: &HashMap<String, u64>,
    drop_fraction: f64,
) -> Result<UnigramModel, UnigramError> {
    prune_capped(model, word_counts, drop_fraction, 0, usize::MAX)
}

/// Knobs for [`train_unigram`].
#[derive(Debug, Clone)]
pub struct UnigramTrainOptions {
    pub target_vocab_size: usize,
    pub em_rounds_per_prune: usize,
    pub drop_fraction: f64,
    pub seed_size: usize,
    pub max_token_chars: usize,
}

impl Default for UnigramTrainOptions {
    fn default() -> Self {
        Self {
            target_vocab_size: 8000,
            em_rounds_per_prune: 2,
            drop_fraction: 0.2,
            seed_size: 10_000,
            max_token_chars: 8,
        }
    }
}

/// Seed, then alternate EM rounds with pruning until the vocabulary fits
/// the target (or no token can be dropped), then a final EM pass.
pub fn train_unigram(
    word_counts: &HashMap<String, u64>,
    options: &UnigramTrainOptions,
) -> Result<UnigramModel, UnigramError> {
    let charset: std::collections::BTreeSet<String> = word_counts
        .keys()
        .flat_map(|w| w.chars())
        .map(|c| c.to_string())
        .collect();
    if word_counts.is_empty() || word_counts.values().all(|&c| c == 0) {
        return Err(UnigramError::EmptyCorpus);
    }
    let minimum = charset.len() + 2;
    if options.target_vocab_size < minimum {
        return Err(UnigramError::TargetTooSmall {
            target: options.target_vocab_size,
            minimum,
        });
    }

    let mut model = seed_vocab(word_counts, options.seed_size, options.max_token_chars)?;
    while model.vocab_size() > options.target_vocab_size {
        for _ in 0..options.em_rounds_per_prune {
            model = em_step(&model, word_counts)?.0;
        }
        let max_drop = model.vocab_size() - options.target_vocab_size;
        // drop at least one token per round so the loop makes progress
        // toward the target even when the fractional share rounds to zero
        let pruned = prune_capped(&model, word_counts, options.drop_fraction, 1, max_drop)?;
        if pruned.vocab_size() == model.vocab_size() {
            break; // no droppable token left
        }
        model = pruned;
    }
    for _ in 0..options.em_rounds_per_prune {
        model = em_step(&model, word_counts)?.0;
    }
    Ok(model)
}

/// Maximum-likelihood segmentation per word via dynamic programming.
/// Characters with no covering token emit UNK. Ties break toward fewer
/// tokens, then leftmost-longest.
pub fn viterbi_encode(text: &str, model: &UnigramModel) -> Vec<u32> {
    let mut ids = Vec::new();
    for word in text.split_whitespace() {
        viterbi_word(word, model, &mut ids);
    }
    ids
}

#[derive(Clone, Copy)]
struct SuffixBest {
    unk: usize,
    score: f64,
    tokens: usize,
    // char length of the edge chosen at this position (0 = unset)
    edge: usize,
}

fn viterbi_word(word: &str, model: &UnigramModel, out: &mut Vec<u32>) {
    let bounds = char_boundaries(word);
    let n = bounds.len() - 1;
    if n == 0 {
        return;
    }
    let mut best = vec![
        SuffixBest {
            unk: usize::MAX,
            score: f64::NEG_INFINITY,
            tokens: usize::MAX,
            edge: 0,
        };
        n + 1
    ];
    best[n] = SuffixBest {
        unk: 0,
        score: 0.0,
        tokens: 0,
        edge: 0,
    };
    for start in (0..n).rev() {
        // longest edges first so exact ties keep the longer first token
        let hi = n.min(start + model.max_token_chars);
        for end in (start + 1..=hi).rev() {
            let next = best[end];
            if next.tokens == usize::MAX {
                continue; // suffix state unreachable
            }
            let piece = &word[bounds[start]..bounds[end]];
            let (unk_cost, lp) = match model.logprob.get(piece) {
                Some(&lp) => (0, lp),
                None if end == start + 1 => (1, 0.0), // single-char UNK edge
                None => continue,
            };
            let cand = SuffixBest {
                unk: next.unk + unk_cost,
                score: next.score + lp,
                tokens: next.tokens + 1,
                edge: end - start,
            };
            let cur = best[start];
            let better = cand.unk < cur.unk
                || (cand.unk == cur.unk
                    && (cand.score > cur.score
                        || (cand.score == cur.score && cand.tokens < cur.tokens)));
            if better {
                best[start] = cand;
            }
        }
    }
    let mut pos = 0;
    while pos < n {
        let edge = best[pos].edge;
        debug_assert!(edge > 0, "viterbi left an uncovered position");
        let piece = &word[bounds[pos]..bounds[pos + edge]];
        out.push(model.token_id(piece).unwrap_or(UNK_ID));
        pos += edge;
    }
}

impl UnigramModel {
    /// Render the `UNIGRAM v1` vocab file. Log probabilities are printed
    /// with 17 significant digits so reloads are bit-faithful.
    pub fn to_file_string(&self) -> String {
        let mut output = String::from("UNIGRAM v1\n");
        for (id, token) in self.id_to_token.iter().enumerate().skip(2) {
            let lp = self.logprob[token];
            output.push_str(&format!("{token}\t{id}\t{lp:.16e}\n"));
        }
        output
    }

    pub fn from_file_str(source: &str) -> Result<Self, UnigramError> {
        let bad = |line: usize, reason: &str| UnigramError::BadVocabFile {
            line,
            reason: reason.to_string(),
        };
        let mut lines = source.lines().enumerate();
        match lines.next() {
            Some((_, "UNIGRAM v1")) => {}
            _ => return Err(bad(1, "expected header `UNIGRAM v1`")),
        }
        let mut id_to_token: Vec<String> = vec!["<pad>".into(), "<unk>".into()];
        let mut logprob = HashMap::new();
        let mut max_token_chars = 1;
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(idx + 1, "expected `token<TAB>id<TAB>logprob`"));
            }
            let id: usize = fields[1].parse().map_err(|_| bad(idx + 1, "bad id"))?;
            if id != id_to_token.len() {
                return Err(bad(idx + 1, "ids must be contiguous from 2"));
            }
            let lp: f64 = fields[2]
                .parse()
                .map_err(|_| bad(idx + 1, "bad logprob"))?;
            if !lp.is_finite() {
                return Err(bad(idx + 1, "logprob must be finite"));
            }
            id_to_token.push(fields[0].to_string());
            logprob.insert(fields[0].to_string(), lp);
            max_token_chars = max_token_chars.max(fields[0].chars().count());
        }
        let token_to_id: HashMap<String, u32> = id_to_token
            .iter()
            .enumerate()
            .map(|(id, t)| (t.clone(), id as u32))
            .collect();
        if token_to_id.len() != id_to_token.len() {
            return Err(bad(0, "duplicate token strings"));
        }
        Ok(Self {
            id_to_token,
            token_to_id,
            logprob,
            max_token_chars,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), UnigramError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|source| UnigramError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, UnigramError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|source| UnigramError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_file_str(&source)
    }
}
