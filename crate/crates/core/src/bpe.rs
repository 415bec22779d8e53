//! Byte pair encoding over characters: training, encoding, decoding, and
//! the `BPE v1` vocab file format.
//!
//! Words are symbolized as their characters plus a `</w>` word-end marker.
//! Training repeatedly merges the most frequent adjacent symbol pair,
//! weighted by word count, until the vocabulary budget is reached or the
//! best pair occurs fewer than twice. Ties break toward the
//! lexicographically smallest pair (first element, then second), with the
//! bare marker ordered after every other symbol.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use thiserror::Error;

/// Padding id, shared with the unigram vocabulary.
pub const PAD_ID: u32 = 0;
/// Out-of-vocabulary id, shared with the unigram vocabulary.
pub const UNK_ID: u32 = 1;
/// Word-end marker appended to every symbolized word.
pub const WORD_END: &str = "</w>";
/// What UNK renders as when decoding.
pub const UNK_GLYPH: &str = "·";

#[derive(Error, Debug)]
pub enum BpeError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("target vocab size {target} below minimum {minimum} (specials + characters)")]
    TargetTooSmall { target: usize, minimum: usize },
    #[error("id {0} is outside the vocabulary")]
    UnknownId(u32),
    #[error("vocab file line {line}: {reason}")]
    BadVocabFile { line: usize, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Ordered merge rules plus the token/id vocabulary they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl BpeModel {
    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }
}

/// Count whitespace-separated words across preprocessed lines.
pub fn word_counts<'a>(texts: impl IntoIterator<Item = &'a str>) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for text in texts {
        for word in text.split_whitespace() {
            *counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

// Interned symbol index used during training.
type Sym = usize;

struct SymbolTable {
    strings: Vec<String>,
    lookup: HashMap<String, Sym>,
}

impl SymbolTable {
    fn new() -> Self {
        Self {
            strings: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn intern(&mut self, s: &str) -> Sym {
        if let Some(&id) = self.lookup.get(s) {
            return id;
        }
        let id = self.strings.len();
        self.strings.push(s.to_string());
        self.lookup.insert(s.to_string(), id);
        id
    }
}

/// Tie-break key: the bare word-end marker sorts after every other symbol,
/// otherwise plain string order.
fn sym_key<'a>(strings: &'a [String], marker: Sym, sym: Sym) -> (bool, &'a str) {
    (sym == marker, strings[sym].as_str())
}

fn add_pair_counts(counts: &mut HashMap<(Sym, Sym), i64>, symbols: &[Sym], weight: i64) {
    for window in symbols.windows(2) {
        *counts.entry((window[0], window[1])).or_insert(0) += weight;
    }
}

/// Merge every non-overlapping adjacent `(a, b)` left to right.
fn apply_merge_syms(symbols: &[Sym], a: Sym, b: Sym, merged: Sym) -> Vec<Sym> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
            out.push(merged);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

/// Train a BPE model. Pair counts are maintained incrementally: a merge
/// touches only the words that contain the chosen pair.
pub fn train_bpe(
    word_counts: &HashMap<String, u64>,
    target_vocab_size: usize,
) -> Result<BpeModel, BpeError> {
    if word_counts.is_empty() || word_counts.values().all(|&c| c == 0) {
        return Err(BpeError::EmptyCorpus);
    }
    let alphabet: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    let minimum = alphabet.len() + 2;
    if target_vocab_size < minimum {
        return Err(BpeError::TargetTooSmall {
            target: target_vocab_size,
            minimum,
        });
    }

    let mut symbols = SymbolTable::new();
    let marker = symbols.intern(WORD_END);
    for &c in &alphabet {
        symbols.intern(&c.to_string());
    }

    // ids 0/1 are specials; the marker and alphabet are the initial tokens
    let mut vocab_order: Vec<Sym> = (0..symbols.strings.len()).collect();
    let mut in_vocab: BTreeSet<Sym> = vocab_order.iter().copied().collect();

    let mut words: Vec<(Vec<Sym>, i64)> = {
        let mut sorted: Vec<(&String, &u64)> = word_counts.iter().collect();
        sorted.sort_unstable_by(|a, b| a.0.cmp(b.0));
        sorted
            .into_iter()
            .filter(|(_, &count)| count > 0)
            .map(|(word, &count)| {
                let mut syms: Vec<Sym> =
                    word.chars().map(|c| symbols.intern(&c.to_string())).collect();
                syms.push(marker);
                (syms, count as i64)
            })
            .collect()
    };

    let mut pair_counts: HashMap<(Sym, Sym), i64> = HashMap::new();
    for (syms, count) in &words {
        add_pair_counts(&mut pair_counts, syms, *count);
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    while in_vocab.len() + 2 < target_vocab_size {
        let mut best: Option<((Sym, Sym), i64)> = None;
        for (&pair, &count) in &pair_counts {
            if count < 2 {
                continue;
            }
            let better = match best {
                None => true,
                Some((best_pair, best_count)) => {
                    let key = |p: (Sym, Sym)| {
                        (
                            sym_key(&symbols.strings, marker, p.0),
                            sym_key(&symbols.strings, marker, p.1),
                        )
                    };
                    count > best_count || (count == best_count && key(pair) < key(best_pair))
                }
            };
            if better {
                best = Some((pair, count));
            }
        }
        let Some(((a, b), _)) = best else { break };

        let merged_string = format!("{}{}", symbols.strings[a], symbols.strings[b]);
        let merged = symbols.intern(&merged_string);
        for (syms, count) in &mut words {
            let has_pair = syms.windows(2).any(|w| w[0] == a && w[1] == b);
            if !has_pair {
                continue;
            }
            add_pair_counts(&mut pair_counts, syms, -*count);
            *syms = apply_merge_syms(syms, a, b, merged);
            add_pair_counts(&mut pair_counts, syms, *count);
        }
        pair_counts.retain(|_, c| *c > 0);

        merges.push((symbols.strings[a].clone(), symbols.strings[b].clone()));
        if in_vocab.insert(merged) {
            vocab_order.push(merged);
        }
    }

    // id layout: PAD, UNK, marker, characters in codepoint order, merges in
    // merge order
    let mut id_to_token: Vec<String> = vec!["<pad>".into(), "<unk>".into()];
    id_to_token.extend(vocab_order.iter().map(|&s| symbols.strings[s].clone()));
    let token_to_id = id_to_token
        .iter()
        .enumerate()
        .map(|(id, token)| (token.clone(), id as u32))
        .collect();

    Ok(BpeModel {
        merges,
        token_to_id,
        id_to_token,
    })
}

fn symbolize(word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    syms.push(WORD_END.to_string());
    syms
}

fn apply_merges(mut syms: Vec<String>, merges: &[(String, String)]) -> Vec<String> {
    for (a, b) in merges {
        if syms.len() < 2 {
            break;
        }
        let mut out = Vec::with_capacity(syms.len());
        let mut i = 0;
        while i < syms.len() {
            if i + 1 < syms.len() && &syms[i] == a && &syms[i + 1] == b {
                out.push(format!("{a}{b}"));
                i += 2;
            } else {
                out.push(std::mem::take(&mut syms[i]));
                i += 1;
            }
        }
        syms = out;
    }
    syms
}

/// Encode preprocessed text: split on spaces, replay the merge rules per
/// word, map symbols to ids. Symbols outside the vocabulary become UNK.
pub fn encode_bpe(text: &str, model: &BpeModel) -> Vec<u32> {
    let mut ids = Vec::new();
    for word in text.split_whitespace() {
        let syms = apply_merges(symbolize(word), &model.merges);
        for sym in syms {
            ids.push(model.token_id(&sym).unwrap_or(UNK_ID));
        }
    }
    ids
}

/// Inverse of [`encode_bpe`] for in-vocabulary ids: word-end markers become
/// spaces, UNK becomes [`UNK_GLYPH`], PAD disappears.
pub fn decode_bpe(ids: &[u32], model: &BpeModel) -> Result<String, BpeError> {
    let mut buffer = String::new();
    for &id in ids {
        match id {
            PAD_ID => {}
            UNK_ID => buffer.push_str(UNK_GLYPH),
            _ => {
                let token = model.token(id).ok_or(BpeError::UnknownId(id))?;
                buffer.push_str(token);
            }
        }
    }
    let spaced = buffer.replace(WORD_END, " ");
    let mut out = String::with_capacity(spaced.len());
    for word in spaced.split(' ') {
        if word.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    Ok(out)
}

impl BpeModel {
    /// Render the `BPE v1` vocab file.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("BPE v1\n");
        out.push_str(&format!("#merges {}\n", self.merges.len()));
        for (a, b) in &self.merges {
            out.push_str(&format!("{a}\t{b}\n"));
        }
        out.push_str(&format!("#vocab {}\n", self.id_to_token.len()));
        for (id, token) in self.id_to_token.iter().enumerate() {
            out.push_str(&format!("{token}\t{id}\n"));
        }
        out
    }

    pub fn from_file_str(source: &str) -> Result<Self, BpeError> {
        let bad = |line: usize, reason: &str| BpeError::BadVocabFile {
            line,
            reason: reason.to_string(),
        };
        let mut lines = source.lines().enumerate();
        match lines.next() {
            Some((_, "BPE v1")) => {}
            _ => return Err(bad(1, "expected header `BPE v1`")),
        }
        let n_merges: usize = match lines.next() {
            Some((_, line)) if line.starts_with("#merges ") => line[8..]
                .parse()
                .map_err(|_| bad(2, "bad merge count"))?,
            _ => return Err(bad(2, "expected `#merges N`")),
        };
        let mut merges = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of merges"))?;
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| bad(idx + 1, "expected `left<TAB>right`"))?;
            merges.push((a.to_string(), b.to_string()));
        }
        let n_vocab: usize = match lines.next() {
            Some((_, line)) if line.starts_with("#vocab ") => line[7..]
                .parse()
                .map_err(|_| bad(0, "bad vocab count"))?,
            _ => return Err(bad(0, "expected `#vocab M`")),
        };
        let mut id_to_token = vec![String::new(); n_vocab];
        let mut seen = vec![false; n_vocab];
        for _ in 0..n_vocab {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of vocab"))?;
            let (token, id) = line
                .split_once('\t')
                .ok_or_else(|| bad(idx + 1, "expected `token<TAB>id`"))?;
            let id: usize = id.parse().map_err(|_| bad(idx + 1, "bad id"))?;
            if id >= n_vocab || seen[id] {
                return Err(bad(idx + 1, "id out of range or duplicated"));
            }
            seen[id] = true;
            id_to_token[id] = token.to_string();
        }
        let token_to_id: HashMap<String, u32> = id_to_token
            .iter()
            .enumerate()
            .map(|(id, token)| (token.clone(), id as u32))
            .collect();
        if token_to_id.len() != id_to_token.len() {
            return Err(bad(0, "duplicate token strings"));
        }
        Ok(Self {
            merges,
            token_to_id,
            id_to_token,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BpeError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|source| BpeError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BpeError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|source| BpeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_file_str(&source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u64)]) -> HashMap<String, u64> {
        pairs.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    /// Reference trainer that rebuilds all pair counts from scratch on every
    /// iteration. Deliberately brute force; keep independent of `train_bpe`.
    pub(crate) fn naive_merge_list(
        word_counts: &HashMap<String, u64>,
        target_vocab_size: usize,
    ) -> Vec<(String, String)> {
        let mut words: Vec<(Vec<String>, u64)> = {
            let mut sorted: Vec<_> = word_counts.iter().filter(|(_, &c)| c > 0).collect();
            sorted.sort();
            sorted
                .into_iter()
                .map(|(w, &c)| (symbolize(w), c))
                .collect()
        };
        let mut vocab: BTreeSet<String> = words
            .iter()
            .flat_map(|(syms, _)| syms.iter().cloned())
            .collect();
        let mut merges = Vec::new();
        let rank = |s: &str| (s == WORD_END, s.to_string());
        while vocab.len() + 2 < target_vocab_size {
            let mut freqs: HashMap<(String, String), u64> = HashMap::new();
            for (syms, count) in &words {
                for w in syms.windows(2) {
                    *freqs.entry((w[0].clone(), w[1].clone())).or_insert(0) += count;
                }
            }
            let best = freqs
                .into_iter()
                .filter(|&(_, c)| c >= 2)
                .min_by_key(|((a, b), c)| (std::cmp::Reverse(*c), rank(a), rank(b)));
            let Some(((a, b), _)) = best else { break };
            for (syms, _) in &mut words {
                let mut out = Vec::new();
                let mut i = 0;
                while i < syms.len() {
                    if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                        out.push(format!("{a}{b}"));
                        i += 2;
                    } else {
                        out.push(syms[i].clone());
                        i += 1;
                    }
                }
                *syms = out;
            }
            vocab.insert(format!("{a}{b}"));
            merges.push((a, b));
        }
        merges
    }

    #[test]
    fn single_pair_corpus_merges_it() {
        let model = train_bpe(&counts(&[("aa", 5)]), 5).unwrap();
        assert_eq!(model.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(model.vocab_size(), 5);
    }

    #[test]
    fn classic_corpus_first_merge_breaks_tie_lexicographically() {
        let wc = counts(&[("low", 5), ("lower", 2), ("newest", 6), ("widest", 3)]);
        let model = train_bpe(&wc, 14).unwrap();
        // (e,s), (s,t), (t,</w>) all occur 9 times
        assert_eq!(model.merges()[0], ("e".to_string(), "s".to_string()));
    }

    #[test]
    fn tight_budget_means_no_merges() {
        let wc = counts(&[("low", 5), ("lower", 2)]);
        let chars: BTreeSet<char> = "lowlower".chars().collect(); // e,l,o,r,w
        assert_eq!(chars.len(), 5);
        let model = train_bpe(&wc, chars.len() + 2).unwrap();
        assert!(model.merges().is_empty());
        // specials + marker + characters
        assert_eq!(model.vocab_size(), chars.len() + 3);
    }

    #[test]
    fn target_below_floor_is_rejected() {
        let wc = counts(&[("abc", 3)]);
        assert!(matches!(
            train_bpe(&wc, 4),
            Err(BpeError::TargetTooSmall { minimum: 5, .. })
        ));
        assert!(matches!(
            train_bpe(&HashMap::new(), 10),
            Err(BpeError::EmptyCorpus)
        ));
    }

    #[test]
    fn frequent_word_collapses_to_single_token() {
        let model = train_bpe(&counts(&[("aaaa", 9)]), 12).unwrap();
        let ids = encode_bpe("aaaa", &model);
        assert_eq!(ids.len(), 1);
        assert_eq!(model.token(ids[0]), Some("aaaa</w>"));
    }

    #[test]
    fn unknown_characters_become_unk() {
        let model = train_bpe(&counts(&[("ab", 3)]), 8).unwrap();
        let marker_id = model.token_id(WORD_END).unwrap();
        assert_eq!(encode_bpe("éé", &model), vec![UNK_ID, UNK_ID, marker_id]);
        assert_eq!(encode_bpe("", &model), Vec::<u32>::new());
    }

    #[test]
    fn decode_round_trips() {
        let wc = counts(&[("do", 4), ("not", 4), ("stop", 2)]);
        let model = train_bpe(&wc, 30).unwrap();
        for text in ["do not", "not do stop", "do", ""] {
            let ids = encode_bpe(text, &model);
            assert_eq!(decode_bpe(&ids, &model).unwrap(), text);
        }
        assert_eq!(decode_bpe(&[], &model).unwrap(), "");
        let bad = model.vocab_size() as u32;
        assert!(matches!(
            decode_bpe(&[bad], &model),
            Err(BpeError::UnknownId(_))
        ));
    }

    #[test]
    fn merges_replay_to_the_training_vocabulary() {
        let wc = counts(&[("banana", 4), ("bandana", 3), ("cabana", 2)]);
        let model = train_bpe(&wc, 20).unwrap();
        // replaying the merge list over the corpus must reproduce exactly
        // the token set of the trained vocabulary
        let mut reproduced: BTreeSet<String> = BTreeSet::new();
        reproduced.insert(WORD_END.to_string());
        for word in wc.keys() {
            for c in word.chars() {
                reproduced.insert(c.to_string());
            }
            for sym in apply_merges(symbolize(word), model.merges()) {
                reproduced.insert(sym);
            }
        }
        for (a, b) in model.merges() {
            reproduced.insert(format!("{a}{b}"));
        }
        let vocab: BTreeSet<String> = model
            .id_to_token
            .iter()
            .skip(2) // specials
            .cloned()
            .collect();
        assert_eq!(reproduced, vocab);
    }

    #[test]
    fn matches_naive_recount_reference_on_random_corpora() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let letters = ['a', 'b', 'c', 'd'];
        for _ in 0..8 {
            let n_words = rng.gen_range(3..=30);
            let mut wc = HashMap::new();
            for _ in 0..n_words {
                let len = rng.gen_range(1..=7);
                let word: String = (0..len)
                    .map(|_| letters[rng.gen_range(0..letters.len())])
                    .collect();
                *wc.entry(word).or_insert(0) += rng.gen_range(1..=9) as u64;
            }
            let chars: BTreeSet<char> = wc.keys().flat_map(|w| w.chars()).collect();
            let target = chars.len() + 2 + rng.gen_range(0..=50);
            let model = train_bpe(&wc, target).unwrap();
            let reference = naive_merge_list(&wc, target);
            assert_eq!(model.merges(), &reference[..], "corpus {wc:?} target {target}");
        }
    }

    #[test]
    fn vocab_file_round_trip_preserves_encodings() {
        let wc = counts(&[("hello", 5), ("help", 3), ("yelp", 2)]);
        let model = train_bpe(&wc, 24).unwrap();
        let rendered = model.to_file_string();
        assert!(rendered.starts_with("BPE v1\n"));
        let reloaded = BpeModel::from_file_str(&rendered).unwrap();
        assert_eq!(reloaded, model);
        for text in ["hello help", "yelp hel"] {
            assert_eq!(encode_bpe(text, &reloaded), encode_bpe(text, &model));
        }
        // file save/load path
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bpe.vocab");
        model.save(&path).unwrap();
        assert_eq!(BpeModel::load(&path).unwrap(), model);
    }

    #[test]
    fn rejects_corrupt_vocab_files() {
        assert!(matches!(
            BpeModel::from_file_str("WRONG v9\n"),
            Err(BpeError::BadVocabFile { line: 1, .. })
        ));
        let model = train_bpe(&counts(&[("ab", 2)]), 8).unwrap();
        let mut text = model.to_file_string();
        text.truncate(text.len() / 2);
        assert!(BpeModel::from_file_str(&text).is_err());
    }
}
