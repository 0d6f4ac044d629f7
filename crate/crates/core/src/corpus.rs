//! Caption corpus handling: tokenization, vocabulary, encoding/padding,
//! description/explanation splitting, part-of-speech tagging and
//! special-token accounting.
//!
//! Captions follow a fixed syntax: `<START> description <sep> explanation
//! <END>`, padded with `<NULL>` up to a maximum length. The four special
//! tokens own the reserved ids 0-3 so that loss penalties and masks stay
//! index-stable across runs.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

pub const NULL_TOKEN: &str = "<NULL>";
pub const START_TOKEN: &str = "<START>";
pub const END_TOKEN: &str = "<END>";
pub const SEP_TOKEN: &str = "<sep>";

pub const NULL_ID: usize = 0;
pub const START_ID: usize = 1;
pub const END_ID: usize = 2;
pub const SEP_ID: usize = 3;

/// The four reserved structural tokens, in id order.
pub const SPECIAL_TOKENS: [&str; 4] = [NULL_TOKEN, START_TOKEN, END_TOKEN, SEP_TOKEN];

pub fn is_special(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token)
}

/// Occurrence counts of the special tokens in a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpecialCounts {
    pub null: usize,
    pub start: usize,
    pub end: usize,
    pub sep: usize,
}

/// Exact occurrence counts of the four special tokens.
pub fn count_special<S: AsRef<str>>(tokens: &[S]) -> SpecialCounts {
    let mut counts = SpecialCounts::default();
    for tok in tokens {
        match tok.as_ref() {
            NULL_TOKEN => counts.null += 1,
            START_TOKEN => counts.start += 1,
            END_TOKEN => counts.end += 1,
            SEP_TOKEN => counts.sep += 1,
            _ => {}
        }
    }
    counts
}

/// Lowercased whitespace tokens; special tokens are matched case-sensitively
/// before lowering and preserved verbatim.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            if is_special(w) {
                w.to_string()
            } else {
                w.to_lowercase()
            }
        })
        .collect()
}

/// Token/id bijection with the four special tokens pinned to ids 0-3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    /// Builds a vocabulary over caption token sequences. Words are assigned
    /// ids 4.. in first-occurrence order, which makes the result
    /// deterministic for a fixed corpus order.
    pub fn build<S: AsRef<str>>(corpus: impl IntoIterator<Item = impl AsRef<[S]>>) -> Result<Self> {
        let mut vocab = Self::empty();
        let mut saw_any = false;
        for caption in corpus {
            saw_any = true;
            for token in caption.as_ref() {
                let token = token.as_ref();
                if !vocab.ids.contains_key(token) {
                    vocab.ids.insert(token.to_string(), vocab.tokens.len());
                    vocab.tokens.push(token.to_string());
                }
            }
        }
        if !saw_any {
            return Err(Error::EmptyCorpus);
        }
        Ok(vocab)
    }

    fn empty() -> Self {
        let mut ids = HashMap::new();
        let mut tokens = Vec::new();
        for (id, tok) in SPECIAL_TOKENS.iter().enumerate() {
            ids.insert(tok.to_string(), id);
            tokens.push(tok.to_string());
        }
        Self { ids, tokens }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }
}

/// Encodes tokens to ids and pads with `<NULL>` up to `max_len`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocab, max_len: usize) -> Result<Vec<usize>> {
    if tokens.len() > max_len {
        return Err(Error::CaptionTooLong {
            len: tokens.len(),
            max_len,
        });
    }
    let mut ids = Vec::with_capacity(max_len);
    for token in tokens {
        let token = token.as_ref();
        let id = vocab
            .id(token)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))?;
        ids.push(id);
    }
    ids.resize(max_len, NULL_ID);
    Ok(ids)
}

/// Inverse of [`encode`]: maps ids back to tokens and strips the trailing
/// `<NULL>` padding.
pub fn decode(ids: &[usize], vocab: &Vocab) -> Result<Vec<String>> {
    let last = ids.iter().rposition(|&id| id != NULL_ID);
    let interior = match last {
        Some(i) => &ids[..=i],
        None => &ids[..0],
    };
    interior
        .iter()
        .map(|&id| {
            vocab
                .token(id)
                .map(str::to_string)
                .ok_or_else(|| Error::UnknownToken(format!("#{id}")))
        })
        .collect()
}

/// A well-formed caption: `<START> ... <sep> ... <END>`, unpadded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption {
    pub tokens: Vec<String>,
    pub max_len: usize,
}

impl Caption {
    /// Validates bracketing and the exactly-one rule for the structural
    /// tokens. `tokens` must fit within `max_len` once padded.
    pub fn new(tokens: Vec<String>, max_len: usize) -> Result<Self> {
        let counts = count_special(&tokens);
        if counts.start != 1 || counts.sep != 1 || counts.end != 1 {
            return Err(Error::BadCaption(format!(
                "expected exactly one each of {START_TOKEN}/{SEP_TOKEN}/{END_TOKEN}, \
                 got {}/{}/{}",
                counts.start, counts.sep, counts.end
            )));
        }
        if tokens.first().map(String::as_str) != Some(START_TOKEN)
            || tokens.last().map(String::as_str) != Some(END_TOKEN)
        {
            return Err(Error::BadCaption(format!(
                "caption must be bracketed by {START_TOKEN} and {END_TOKEN}"
            )));
        }
        if tokens.len() > max_len {
            return Err(Error::CaptionTooLong {
                len: tokens.len(),
                max_len,
            });
        }
        Ok(Self { tokens, max_len })
    }

    pub fn parse(text: &str, max_len: usize) -> Result<Self> {
        Self::new(tokenize(text), max_len)
    }

    pub fn padded_ids(&self, vocab: &Vocab) -> Result<Vec<usize>> {
        encode(&self.tokens, vocab, self.max_len)
    }

    /// Padded token sequence of length `max_len`.
    pub fn padded_tokens(&self) -> Vec<String> {
        let mut tokens = self.tokens.clone();
        tokens.resize(self.max_len, NULL_TOKEN.to_string());
        tokens
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tokens.join(" "))
    }
}

/// Structure defects observed while splitting a caption. Generated captions
/// routinely violate structure and must still be scorable, so these are
/// flags rather than errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StructureFlags {
    pub missing_start: bool,
    pub missing_sep: bool,
    pub missing_end: bool,
}

impl StructureFlags {
    pub fn any(&self) -> bool {
        self.missing_start || self.missing_sep || self.missing_end
    }
}

/// Description and explanation parts of a (possibly malformed) caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionParts {
    pub description: Vec<String>,
    pub explanation: Vec<String>,
    pub flags: StructureFlags,
}

/// Splits tokens into the description (between `<START>` and the first
/// `<sep>`) and the explanation (between that `<sep>` and the first
/// `<END>`). Missing markers degrade gracefully: the affected span extends
/// to the next available boundary and a flag is raised.
pub fn split_parts<S: AsRef<str>>(tokens: &[S]) -> CaptionParts {
    let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let mut flags = StructureFlags::default();

    let start = match tokens.iter().position(|&t| t == START_TOKEN) {
        Some(i) => i + 1,
        None => {
            flags.missing_start = true;
            0
        }
    };
    let end = match tokens[start..].iter().position(|&t| t == END_TOKEN) {
        Some(i) => start + i,
        None => {
            flags.missing_end = true;
            tokens.len()
        }
    };
    let sep = tokens[start..end].iter().position(|&t| t == SEP_TOKEN);

    let (description, explanation) = match sep {
        Some(i) => {
            let sep = start + i;
            (&tokens[start..sep], &tokens[sep + 1..end])
        }
        None => {
            flags.missing_sep = true;
            (&tokens[start..end], &tokens[end..end])
        }
    };

    CaptionParts {
        description: description.iter().map(|t| t.to_string()).collect(),
        explanation: explanation.iter().map(|t| t.to_string()).collect(),
        flags,
    }
}

/// The 12-tag universal part-of-speech inventory, in fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Adj,
    Adp,
    Adv,
    Conj,
    Det,
    Noun,
    Num,
    Prt,
    Pron,
    Verb,
    Punct,
    X,
}

impl PosTag {
    pub const ALL: [PosTag; 12] = [
        PosTag::Adj,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Conj,
        PosTag::Det,
        PosTag::Noun,
        PosTag::Num,
        PosTag::Prt,
        PosTag::Pron,
        PosTag::Verb,
        PosTag::Punct,
        PosTag::X,
    ];

    pub const COUNT: usize = 12;

    /// Position in the fixed tag order; indexes one-hot tag vectors.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            PosTag::Adj => "ADJ",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Conj => "CONJ",
            PosTag::Det => "DET",
            PosTag::Noun => "NOUN",
            PosTag::Num => "NUM",
            PosTag::Prt => "PRT",
            PosTag::Pron => "PRON",
            PosTag::Verb => "VERB",
            PosTag::Punct => ".",
            PosTag::X => "X",
        }
    }
}

/// Assigns a universal tag to each token.
///
/// Implementations must be deterministic; the tagger is an interface so a
/// corpus-specific lexicon can be swapped in.
pub trait PosTagger {
    fn tag_token(&self, token: &str) -> PosTag;

    fn tag<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag_token(t.as_ref())).collect()
    }
}

/// Deterministic closed-class lexicon plus suffix rules.
///
/// Special tokens are substituted by ";" and tagged uniformly as
/// punctuation. Unlexiconed words fall back to VERB/ADV by suffix, then
/// NOUN; tokens without any alphanumeric content become X.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<&'static str, PosTag>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        let mut lexicon = HashMap::new();
        let entries: &[(&[&str], PosTag)] = &[
            (
                &[
                    "the", "a", "an", "this", "that", "these", "those", "some", "any", "no",
                    "every", "each",
                ],
                PosTag::Det,
            ),
            (
                &[
                    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
                    "my", "your", "his", "its", "our", "their",
                ],
                PosTag::Pron,
            ),
            (
                &[
                    "on", "in", "at", "to", "from", "of", "with", "by", "for", "into", "onto",
                    "over", "under", "near", "behind", "before", "after", "towards", "toward",
                ],
                PosTag::Adp,
            ),
            (
                &[
                    "and", "or", "but", "because", "so", "if", "while", "when", "as", "since",
                    "although",
                ],
                PosTag::Conj,
            ),
            (
                &[
                    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
                    "ten",
                ],
                PosTag::Num,
            ),
            (
                &["is", "are", "was", "were", "be", "been", "has", "have", "had"],
                PosTag::Verb,
            ),
            (
                &["not", "very", "too", "also", "then", "now", "here", "there"],
                PosTag::Adv,
            ),
            (
                &["green", "red", "safe", "clear", "constant", "slow", "left", "right"],
                PosTag::Adj,
            ),
        ];
        for (words, tag) in entries {
            for word in *words {
                lexicon.insert(*word, *tag);
            }
        }
        Self { lexicon }
    }
}

impl PosTagger for LexiconTagger {
    fn tag_token(&self, token: &str) -> PosTag {
        // Specials are replaced by ";" so they land on the punctuation tag.
        let token = if is_special(token) { ";" } else { token };
        if token.chars().all(|c| ";.,:!?\"'".contains(c)) {
            return PosTag::Punct;
        }
        if let Some(&tag) = self.lexicon.get(token) {
            return tag;
        }
        if token.chars().all(|c| c.is_ascii_digit()) {
            return PosTag::Num;
        }
        if !token.chars().any(|c| c.is_alphanumeric()) {
            return PosTag::X;
        }
        if token.ends_with("ly") {
            PosTag::Adv
        } else if token.ends_with("ing") || token.ends_with("ed") || token.ends_with('s') {
            PosTag::Verb
        } else {
            PosTag::Noun
        }
    }
}

/// Convenience wrapper over the default [`LexiconTagger`].
pub fn pos_tag<S: AsRef<str>>(tokens: &[S]) -> Vec<PosTag> {
    LexiconTagger::default().tag(tokens)
}

/// A caption together with per-position tags over the padded sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedCaption {
    pub caption: Caption,
    /// One tag per padded position; padding and structural tokens are PUNCT.
    pub tags: Vec<PosTag>,
}

impl TaggedCaption {
    pub fn new(caption: Caption, tagger: &impl PosTagger) -> Self {
        let tags = tagger.tag(&caption.padded_tokens());
        Self { caption, tags }
    }
}

/// Reads a caption corpus file: one caption per line, tokens
/// space-separated, specials spelled exactly as emitted.
pub fn read_corpus_file(path: &std::path::Path, max_len: usize) -> Result<Vec<Caption>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| Caption::parse(line, max_len))
        .collect()
}
