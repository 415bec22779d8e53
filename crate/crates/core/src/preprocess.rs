//! Six-step text normalization pipeline for code-switched social-media text.
//!
//! Steps, in fixed order: (1) NFC + lowercase, (2) emoji replacement,
//! (3) social-token stripping, (4) contraction expansion, (5) special
//! character removal, (6) Devanagari-to-Latin transliteration. The emoji,
//! contraction, and transliteration mappings live in editable TSV tables;
//! the defaults ship with the crate.

use std::collections::HashMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

const DEFAULT_EMOJI_TABLE: &str = include_str!("../tables/emoji.tsv");
const DEFAULT_CONTRACTION_TABLE: &str = include_str!("../tables/contractions.tsv");
const DEFAULT_TRANSLIT_TABLE: &str = include_str!("../tables/translit.tsv");

#[derive(Error, Debug)]
pub enum PreprocessError {
    #[error("table file not found: {0}")]
    MissingTable(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{table} line {line}: expected `key<TAB>value`")]
    MalformedTableRow { table: String, line: usize },
    #[error("{table} line {line}: replacement {value:?} must be lowercase ascii words")]
    BadReplacement {
        table: String,
        line: usize,
        value: String,
    },
}

/// Which pipeline steps run. All on by default.
#[derive(Debug, Clone, Copy)]
pub struct StepToggles {
    pub lowercase: bool,
    pub emoji: bool,
    pub social: bool,
    pub contractions: bool,
    pub special_chars: bool,
    pub transliterate: bool,
}

impl Default for StepToggles {
    fn default() -> Self {
        Self {
            lowercase: true,
            emoji: true,
            social: true,
            contractions: true,
            special_chars: true,
            transliterate: true,
        }
    }
}

/// Replacement tables plus step toggles. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Emoji sequences grouped by first codepoint, longest key first.
    emoji: HashMap<char, Vec<(String, String)>>,
    /// Contraction keys grouped by first codepoint, longest key first.
    contractions: HashMap<char, Vec<(String, String)>>,
    translit: HashMap<char, String>,
    pub steps: StepToggles,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::from_table_sources(
            DEFAULT_EMOJI_TABLE,
            DEFAULT_CONTRACTION_TABLE,
            DEFAULT_TRANSLIT_TABLE,
            "<builtin>",
        )
        .expect("builtin tables are well-formed")
    }
}

impl PreprocessConfig {
    /// Load `emoji.tsv`, `contractions.tsv`, and `translit.tsv` from a directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(PreprocessError::MissingTable(dir.display().to_string()));
        }
        let read = |name: &str| -> Result<String, PreprocessError> {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(PreprocessError::MissingTable(path.display().to_string()));
            }
            std::fs::read_to_string(&path).map_err(|source| PreprocessError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let emoji = read("emoji.tsv")?;
        let contractions = read("contractions.tsv")?;
        let translit = read("translit.tsv")?;
        Self::from_table_sources(&emoji, &contractions, &translit, &dir.display().to_string())
    }

    fn from_table_sources(
        emoji: &str,
        contractions: &str,
        translit: &str,
        origin: &str,
    ) -> Result<Self, PreprocessError> {
        let emoji_pairs = parse_table(emoji, &format!("{origin}/emoji.tsv"), true)?;
        let contraction_pairs =
            parse_table(contractions, &format!("{origin}/contractions.tsv"), false)?;
        let translit_pairs = parse_table(translit, &format!("{origin}/translit.tsv"), false)?;

        let mut translit_map = HashMap::new();
        for (key, value) in translit_pairs {
            let mut chars = key.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                translit_map.insert(c, value);
            }
        }

        Ok(Self {
            emoji: group_by_first_char(emoji_pairs),
            contractions: group_by_first_char(contraction_pairs),
            translit: translit_map,
            steps: StepToggles::default(),
        })
    }

    pub fn with_steps(mut self, steps: StepToggles) -> Self {
        self.steps = steps;
        self
    }
}

/// Parse a `key<TAB>value` table. Lines starting with `#` and blank lines
/// are ignored. Values may be empty (the key is deleted from text).
fn parse_table(
    source: &str,
    table: &str,
    require_ascii_words: bool,
) -> Result<Vec<(String, String)>, PreprocessError> {
    let mut pairs = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('\t') else {
            return Err(PreprocessError::MalformedTableRow {
                table: table.to_string(),
                line: idx + 1,
            });
        };
        if require_ascii_words
            && !value
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' ')
        {
            return Err(PreprocessError::BadReplacement {
                table: table.to_string(),
                line: idx + 1,
                value: value.to_string(),
            });
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn group_by_first_char(pairs: Vec<(String, String)>) -> HashMap<char, Vec<(String, String)>> {
    let mut grouped: HashMap<char, Vec<(String, String)>> = HashMap::new();
    for (key, value) in pairs {
        if let Some(first) = key.chars().next() {
            grouped.entry(first).or_default().push((key, value));
        }
    }
    for bucket in grouped.values_mut() {
        bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    }
    grouped
}

/// Run the full pipeline. Total function: unknown emoji are dropped by the
/// special-character step, unmapped Devanagari is dropped by the
/// transliterator.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> String {
    let steps = &config.steps;
    let mut out: String = if steps.lowercase {
        text.nfc().collect::<String>().to_lowercase()
    } else {
        text.to_string()
    };
    if steps.emoji {
        out = replace_by_table(&out, &config.emoji, true);
    }
    if steps.social {
        out = strip_social_tokens(&out);
    }
    if steps.contractions {
        out = replace_by_table(&out, &config.contractions, false);
    }
    if steps.special_chars {
        out = remove_special_chars(&out);
    }
    if steps.transliterate {
        out = transliterate_with(&out, &config.translit);
    }
    collapse_spaces(&out)
}

/// Longest-match table replacement. With `pad`, replacements are emitted
/// with surrounding spaces so adjacent words stay separated; without it,
/// keys must sit on non-letter boundaries (contraction semantics).
fn replace_by_table(text: &str, table: &HashMap<char, Vec<(String, String)>>, pad: bool) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut prev: Option<char> = None;
    'outer: while i < chars.len() {
        let c = chars[i];
        let at_boundary = pad || !prev.is_some_and(|p| p.is_alphabetic());
        if at_boundary {
            if let Some(candidates) = table.get(&c) {
                for (key, value) in candidates {
                    let key_chars: Vec<char> = key.chars().collect();
                    let end = i + key_chars.len();
                    if end <= chars.len() && chars[i..end] == key_chars[..] {
                        let next_is_letter =
                            chars.get(end).is_some_and(|n| n.is_alphabetic());
                        if pad || !next_is_letter {
                            if pad {
                                out.push(' ');
                            }
                            out.push_str(value);
                            if pad {
                                out.push(' ');
                            }
                            prev = value.chars().last().or(prev);
                            i = end;
                            continue 'outer;
                        }
                    }
                }
            }
        }
        out.push(c);
        prev = Some(c);
        i += 1;
    }
    out
}

/// Expand apostrophe contractions using a table, longest match first,
/// bounded by non-letter context. Expects lowercased input.
pub fn expand_contractions(text: &str, table: &[(String, String)]) -> String {
    replace_by_table(text, &group_by_first_char(table.to_vec()), false)
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(https?://\S+|www\.\S+)").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\S+").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#(\w+)").unwrap());

/// Replace mentions with `username`, links with `link`, hashtags with their
/// bare text; drop HTML tags.
pub fn strip_social_tokens(text: &str) -> String {
    let text = HTML_TAG.replace_all(text, "");
    let text = URL.replace_all(&text, " link ");
    let text = MENTION.replace_all(&text, " username ");
    let text = HASHTAG.replace_all(&text, " $1 ");
    collapse_spaces(&text)
}

/// Keep `[a-z0-9 ]` and the Devanagari block (transliterated later);
/// other whitespace becomes a space, everything else is dropped.
fn remove_special_chars(text: &str) -> String {
    text.chars()
        .filter_map(|c| match c {
            'a'..='z' | '0'..='9' | ' ' => Some(c),
            '\u{0900}'..='\u{097F}' => Some(c),
            c if c.is_whitespace() => Some(' '),
            _ => None,
        })
        .collect()
}

fn is_devanagari_consonant(c: char) -> bool {
    matches!(c, '\u{0915}'..='\u{0939}' | '\u{0958}'..='\u{095F}')
}

fn is_dependent_vowel_sign(c: char) -> bool {
    matches!(c, '\u{093E}'..='\u{094C}' | '\u{0962}' | '\u{0963}')
}

const VIRAMA: char = '\u{094D}';
const NUKTA: char = '\u{093C}';

/// Per-codepoint Devanagari romanization. Consonants not followed by a
/// dependent vowel sign or virama get the implicit "a"; everything outside
/// the table's script passes through unchanged, unmapped Devanagari is
/// dropped.
pub fn transliterate_with(text: &str, table: &HashMap<char, String>) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if ('\u{0900}'..='\u{097F}').contains(&c) {
            if let Some(latin) = table.get(&c) {
                out.push_str(latin);
            }
            if is_devanagari_consonant(c) {
                // skip a nukta when looking ahead for the vowel sign
                let mut next = chars.get(i + 1);
                if next == Some(&NUKTA) {
                    next = chars.get(i + 2);
                }
                let suppressed =
                    next.is_some_and(|&n| is_dependent_vowel_sign(n) || n == VIRAMA);
                if !suppressed {
                    out.push('a');
                }
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn collapse_spaces(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = true; // leading spaces are dropped
    for c in text.chars() {
        if c == ' ' {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}
