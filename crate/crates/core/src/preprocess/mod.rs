//! Tweet text normalisation.
//!
//! [`clean`] strips URLs, mentions and emoji, [`tokenize`] splits the cleaned
//! text into offset-carrying tokens (expanding hashtags by camel case), and
//! [`stem`] is the Porter stemmer used by the keyword pipeline.

mod porter;

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::corpus::Token;

pub use porter::stem;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("not a hashtag: {0:?}")]
    NotAHashtag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleanConfig {
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub strip_emoticons: bool,
    pub keep_hashtag_mark: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            strip_urls: true,
            strip_mentions: true,
            strip_emoticons: true,
            keep_hashtag_mark: false,
        }
    }
}

/// Inclusive codepoint ranges treated as emoji.
pub const EMOJI_RANGES: &[(u32, u32)] = &[
    (0x1F300, 0x1F5FF),
    (0x1F600, 0x1F64F),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
    (0x2600, 0x26FF),
    (0x2700, 0x27BF),
    (0xFE0F, 0xFE0F),
    (0x200D, 0x200D),
];

pub fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"https?://\S*").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

fn clean_once(text: &str, cfg: &CleanConfig) -> String {
    let mut s: String = if cfg.strip_emoticons {
        text.chars().filter(|&c| !is_emoji(c)).collect()
    } else {
        text.to_owned()
    };
    if cfg.strip_urls {
        s = url_re().replace_all(&s, " ").into_owned();
    }
    if cfg.strip_mentions {
        s = mention_re().replace_all(&s, " ").into_owned();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes URLs, `@mentions` and emoji, collapses whitespace and trims.
///
/// Dropping an emoji can splice two fragments into a new match, so
/// the rules are reapplied until the text stops changing. Each pass either
/// shortens the text or leaves it as is, which makes the result idempotent.
pub fn clean(text: &str, cfg: &CleanConfig) -> String {
    let mut current = clean_once(text, cfg);
    loop {
        let next = clean_once(&current, cfg);
        if next == current {
            return current;
        }
        current = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Upper,
    Lower,
    Digit,
    Other,
}

fn classify(c: char) -> CharClass {
    if c.is_uppercase() {
        CharClass::Upper
    } else if c.is_alphabetic() {
        CharClass::Lower
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

/// Splits a hashtag body into lowercase segments at case and letter/digit
/// boundaries. Any non-alphanumeric character acts as a dropped separator.
fn segment_body(body: &str) -> Vec<String> {
    use CharClass::*;
    let chars: Vec<char> = body.chars().collect();
    let mut segments = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let class = classify(c);
        if class == Other {
            if !cur.is_empty() {
                segments.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if !cur.is_empty() {
            let prev = classify(chars[i - 1]);
            let next = chars.get(i + 1).map(|&n| classify(n));
            let boundary = match (prev, class) {
                (Lower, Upper) => true,
                (Upper | Lower, Digit) | (Digit, Upper | Lower) => true,
                // last capital of an acronym run starts the next word: "WHOReport"
                (Upper, Upper) => next == Some(Lower),
                _ => false,
            };
            if boundary {
                segments.push(std::mem::take(&mut cur));
            }
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        segments.push(cur);
    }
    segments
}

/// Camel-case hashtag segmentation: `"#BreastCancerAwareness"` becomes
/// `["breast", "cancer", "awareness"]`. With `keep_mark` the first segment
/// keeps its leading `#`.
pub fn segment_hashtag(token: &str, keep_mark: bool) -> Result<Vec<String>, PreprocessError> {
    let body = token
        .strip_prefix('#')
        .ok_or_else(|| PreprocessError::NotAHashtag(token.to_owned()))?;
    let mut segments = segment_body(body);
    if keep_mark {
        if let Some(first) = segments.first_mut() {
            first.insert(0, '#');
        }
    }
    Ok(segments)
}

fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Tokenizes cleaned text with the default configuration.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, &CleanConfig::default())
}

/// Whitespace tokenization with edge punctuation split off as one-character
/// tokens. A hashtag expands into its segments, each carrying the byte span
/// of the whole hashtag.
pub fn tokenize_with(text: &str, cfg: &CleanConfig) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut piece_start = None;
    let sentinel = std::iter::once((text.len(), ' '));
    for (i, c) in text.char_indices().chain(sentinel) {
        if c.is_whitespace() {
            if let Some(s) = piece_start.take() {
                tokenize_piece(&text[s..i], s, cfg, &mut tokens);
            }
        } else if piece_start.is_none() {
            piece_start = Some(i);
        }
    }
    tokens
}

fn tokenize_piece(piece: &str, base: usize, cfg: &CleanConfig, out: &mut Vec<Token>) {
    let core_end = piece.trim_end_matches(is_edge_punct).len();
    let head = &piece[..core_end];

    let mut core_start = 0;
    let mut hashtag = false;
    for (i, c) in head.char_indices() {
        let opens_hashtag =
            c == '#' && head[i + 1..].chars().next().is_some_and(char::is_alphanumeric);
        if opens_hashtag || !is_edge_punct(c) {
            hashtag = opens_hashtag;
            core_start = i;
            break;
        }
        let e = i + c.len_utf8();
        out.push(Token::new(&piece[i..e], base + i, base + e));
        core_start = e;
    }

    if core_start < core_end {
        let core = &piece[core_start..core_end];
        let (s, e) = (base + core_start, base + core_end);
        if hashtag {
            let segments =
                segment_hashtag(core, cfg.keep_hashtag_mark).expect("core starts with '#'");
            for seg in segments {
                out.push(Token::new(&seg, s, e));
            }
        } else {
            out.push(Token::new(core, s, e));
        }
    }

    for (i, c) in piece[core_end..].char_indices() {
        let s = core_end + i;
        let e = s + c.len_utf8();
        out.push(Token::new(&piece[s..e], base + s, base + e));
    }
}
