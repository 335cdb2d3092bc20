//! Vocabulary generation: caption parsing, tag validation, and nearest-tag
//! decoding of pooled mask features.
//!
//! Captions arrive as plain text (image captions from outside, point captions
//! decoded from pooled features). A rule-based lexicon stands in for a POS
//! tagger and dictionary: it classifies tokens, lemmatizes plurals, and keeps
//! generic filler nouns out of the vocabulary.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::embedding::SyntheticSpace;
use crate::error::{Error, Result};

/// Part of speech as far as tag extraction cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pos {
    Noun,
    Other,
}

/// One lexicon entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub pos: Pos,
    /// Singular form; for canonical entries the lemma is the word itself.
    pub lemma: String,
    /// Whether the (noun) entry may appear in a vocabulary.
    pub valid: bool,
}

/// Word list driving tokenized caption parsing.
///
/// Loaded from a TSV with one `word<TAB>pos<TAB>lemma<TAB>valid(0|1)` entry
/// per line; `#` lines are comments. Every lemma must itself be an entry
/// whose lemma is itself, so lemmatization terminates in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, LexEntry>,
}

impl Lexicon {
    /// Parses lexicon TSV text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| Error::LexiconParse {
                line: ln + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(&format!(
                    "expected 4 tab-separated fields, got {}",
                    fields.len()
                )));
            }
            let word = fields[0];
            if word.is_empty() || word.chars().any(|c| c.is_whitespace()) {
                return Err(err("word must be non-empty without whitespace"));
            }
            if word.to_lowercase() != word {
                return Err(err("word must be lowercase"));
            }
            let pos = match fields[1] {
                "noun" => Pos::Noun,
                "other" => Pos::Other,
                other => return Err(err(&format!("unknown pos {other:?}"))),
            };
            let lemma = fields[2];
            if lemma.is_empty() || lemma.to_lowercase() != lemma {
                return Err(err("lemma must be non-empty lowercase"));
            }
            let valid = match fields[3] {
                "0" => false,
                "1" => true,
                other => return Err(err(&format!("valid flag must be 0 or 1, got {other:?}"))),
            };
            if entries
                .insert(
                    word.to_string(),
                    LexEntry {
                        pos,
                        lemma: lemma.to_string(),
                        valid,
                    },
                )
                .is_some()
            {
                return Err(err(&format!("duplicate entry for {word:?}")));
            }
        }
        // Lemmas must resolve to canonical entries in a single step.
        for (word, entry) in &entries {
            match entries.get(&entry.lemma) {
                None => {
                    return Err(Error::Schema {
                        reason: format!("lemma {:?} of {word:?} is not an entry", entry.lemma),
                    })
                }
                Some(target) if target.lemma != entry.lemma => {
                    return Err(Error::Schema {
                        reason: format!("lemma {:?} of {word:?} is not canonical", entry.lemma),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(Self { entries })
    }

    /// Loads a lexicon TSV from disk.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The lexicon compiled into the library (about 300 scene nouns plus
    /// common function words).
    pub fn bundled() -> &'static Lexicon {
        static BUNDLED: OnceLock<Lexicon> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            Lexicon::parse(include_str!("../assets/lexicon.tsv"))
                .expect("bundled lexicon is well-formed")
        })
    }

    /// Direct entry lookup by exact word.
    pub fn entry(&self, word: &str) -> Option<&LexEntry> {
        self.entries.get(word)
    }

    /// Resolves a lowercase token to its entry, trying the exact word first
    /// and then the trailing `s` / `es` plural strips.
    pub fn resolve(&self, token: &str) -> Option<&LexEntry> {
        if let Some(e) = self.entries.get(token) {
            return Some(e);
        }
        if let Some(stem) = token.strip_suffix('s') {
            if let Some(e) = self.entries.get(stem) {
                return Some(e);
            }
        }
        if let Some(stem) = token.strip_suffix("es") {
            if let Some(e) = self.entries.get(stem) {
                return Some(e);
            }
        }
        None
    }

    /// Canonical tag candidates: valid nouns that are their own lemma,
    /// in sorted order.
    pub fn canonical_nouns(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(w, e)| e.pos == Pos::Noun && e.valid && e.lemma == **w)
            .map(|(w, _)| w.as_str())
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when the lexicon has no entries.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Where a caption came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    /// Produced by an image captioner for camera `source_index`.
    Image,
    /// Decoded from the pooled feature of mask `source_index`.
    Point,
}

/// One natural-language caption attached to a camera or a mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub source: CaptionSource,
    #[serde(rename = "index")]
    pub source_index: usize,
}

impl Caption {
    /// Builds a caption, rejecting text that is empty after trimming.
    pub fn new(
        text: impl Into<String>,
        source: CaptionSource,
        source_index: usize,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyCaption);
        }
        Ok(Self {
            text,
            source,
            source_index,
        })
    }
}

/// An ordered, duplicate-free list of lowercase tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    tags: Vec<String>,
}

impl Vocabulary {
    /// Canonicalizes (trim + lowercase), drops duplicates keeping first
    /// occurrence, and rejects tags that are empty after trimming.
    pub fn new<S: Into<String>>(tags: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut out: Vec<String> = Vec::new();
        for tag in tags {
            let tag = tag.into().trim().to_lowercase();
            if tag.is_empty() {
                return Err(Error::EmptyLabel);
            }
            if !out.contains(&tag) {
                out.push(tag);
            }
        }
        Ok(Self { tags: out })
    }

    /// An empty vocabulary.
    pub fn empty() -> Self {
        Self { tags: Vec::new() }
    }

    /// Tags in order.
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Number of tags.
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    /// True when there are no tags.
    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Index of a tag, if present.
    pub fn position(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }
}

/// Ordered union of several vocabularies, first occurrence wins.
pub fn merge_vocabularies<'a>(vs: impl IntoIterator<Item = &'a Vocabulary>) -> Vocabulary {
    let mut out = Vocabulary::empty();
    for v in vs {
        for tag in &v.tags {
            if !out.tags.contains(tag) {
                out.tags.push(tag.clone());
            }
        }
    }
    out
}

/// A lowercase caption token plus whether only whitespace separated it from
/// the previous token (punctuation of any kind breaks adjacency).
struct Token {
    text: String,
    adjacent: bool,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut punct_since_last = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            tokens.push(Token {
                text: current.to_lowercase(),
                adjacent: !punct_since_last && !tokens.is_empty(),
            });
            current = String::new();
            punct_since_last = false;
        }
        if !ch.is_whitespace() {
            punct_since_last = true;
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            text: current.to_lowercase(),
            adjacent: !punct_since_last && !tokens.is_empty(),
        });
    }
    tokens
}

/// Extracts validated tags from one caption.
///
/// Tokens resolve through the lexicon (with plural stripping); anything that
/// does not resolve to a valid noun is dropped and interrupts noun adjacency.
/// With `allow_compound`, every maximal run of two or more valid nouns joined
/// by plain whitespace emits the space-joined lemma compound first, followed
/// by the individual lemmas; punctuation between nouns keeps them separate
/// tags. The result is deduplicated in first-occurrence order, which also
/// makes parsing idempotent over a comma-joined tag list.
pub fn caption_to_tags(caption: &Caption, lex: &Lexicon, allow_compound: bool) -> Vocabulary {
    let tokens = tokenize(&caption.text);
    let mut tags: Vec<String> = Vec::new();
    let mut push = |tag: &str| {
        if !tags.iter().any(|t| t == tag) {
            tags.push(tag.to_string());
        }
    };

    let mut run: Vec<&str> = Vec::new();
    let mut flush = |run: &mut Vec<&str>| {
        if allow_compound && run.len() >= 2 {
            push(&run.join(" "));
        }
        for lemma in run.drain(..) {
            push(lemma);
        }
    };
    for token in &tokens {
        let lemma = lex
            .resolve(&token.text)
            .filter(|e| e.pos == Pos::Noun && e.valid)
            .map(|e| e.lemma.as_str());
        match lemma {
            Some(lemma) => {
                if !token.adjacent {
                    flush(&mut run);
                }
                run.push(lemma);
            }
            None => flush(&mut run),
        }
    }
    flush(&mut run);
    Vocabulary { tags }
}

/// Decodes a pooled mask feature into its `k` nearest lexicon tags.
///
/// Candidates are the lexicon's canonical valid nouns; ranking is by anchor
/// similarity, descending, with exact ties broken lexicographically. An
/// empty-flagged feature decodes to the empty vocabulary.
pub fn decode_point_caption(
    pooled: ArrayView1<f64>,
    is_empty_mask: bool,
    space: &SyntheticSpace,
    lex: &Lexicon,
    k: usize,
) -> Result<Vocabulary> {
    if k == 0 {
        return Err(Error::ZeroDecodeCount);
    }
    if is_empty_mask {
        return Ok(Vocabulary::empty());
    }
    let mut scored: Vec<(f64, &str)> = Vec::new();
    for noun in lex.canonical_nouns() {
        let anchor = space.encode_text(noun)?;
        let sim = crate::embedding::similarity(pooled, anchor.view())?;
        scored.push((sim, noun));
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("similarities are finite")
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(Vocabulary {
        tags: scored
            .into_iter()
            .take(k)
            .map(|(_, w)| w.to_string())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn cap(text: &str) -> Caption {
        Caption::new(text, CaptionSource::Image, 0).unwrap()
    }

    fn parse(text: &str) -> Vec<String> {
        caption_to_tags(&cap(text), Lexicon::bundled(), true)
            .tags()
            .to_vec()
    }

    #[test]
    fn bundled_lexicon_is_well_formed() {
        let lex = Lexicon::bundled();
        assert!(
            lex.len() > 350,
            "expected a sizable lexicon, got {}",
            lex.len()
        );
        let nouns = lex.canonical_nouns().count();
        assert!(nouns > 250, "expected >250 canonical nouns, got {nouns}");
        // Classes the synthetic scenes rely on must be present and valid.
        for word in ["car", "road", "building", "vegetation", "chair", "table"] {
            let e = lex.entry(word).unwrap();
            assert_eq!(e.pos, Pos::Noun);
            assert!(e.valid);
            assert_eq!(e.lemma, word);
        }
    }

    #[test]
    fn parser_rejects_malformed_lines() {
        assert!(matches!(
            Lexicon::parse("car\tnoun\tcar"),
            Err(Error::LexiconParse { line: 1, .. })
        ));
        assert!(matches!(
            Lexicon::parse("car\tverb\tcar\t1"),
            Err(Error::LexiconParse { .. })
        ));
        assert!(matches!(
            Lexicon::parse("car\tnoun\tcar\t2"),
            Err(Error::LexiconParse { .. })
        ));
        assert!(matches!(
            Lexicon::parse("car\tnoun\tcar\t1\ncar\tnoun\tcar\t1"),
            Err(Error::LexiconParse { line: 2, .. })
        ));
        // Lemma pointing at a missing or non-canonical entry.
        assert!(Lexicon::parse("cars\tnoun\tcar\t1").is_err());
        assert!(
            Lexicon::parse("cars\tnoun\tcar\t1\ncar\tnoun\tauto\t1\nauto\tnoun\tauto\t1").is_err()
        );
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let lex = Lexicon::parse("# heading\n\ncar\tnoun\tcar\t1\n").unwrap();
        assert_eq!(lex.len(), 1);
    }

    #[test]
    fn resolve_strips_plurals() {
        let lex = Lexicon::bundled();
        assert_eq!(lex.resolve("cars").unwrap().lemma, "car");
        assert_eq!(lex.resolve("buses").unwrap().lemma, "bus");
        assert_eq!(lex.resolve("glasses").unwrap().lemma, "glass");
        assert_eq!(lex.resolve("people").unwrap().lemma, "person");
        assert_eq!(lex.resolve("children").unwrap().lemma, "child");
        assert_eq!(lex.resolve("leaves").unwrap().lemma, "leaf");
        assert!(lex.resolve("zzyzx").is_none());
    }

    #[test]
    fn caption_requires_text() {
        assert!(matches!(
            Caption::new("   ", CaptionSource::Point, 1),
            Err(Error::EmptyCaption)
        ));
    }

    #[test]
    fn caption_serde_round_trip() {
        let c = Caption::new("a car", CaptionSource::Point, 4).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"source\":\"point\""));
        assert!(json.contains("\"index\":4"));
        assert_eq!(serde_json::from_str::<Caption>(&json).unwrap(), c);
    }

    #[test]
    fn simple_captions_parse_to_lemmas() {
        assert_eq!(parse("cars parked on the road"), ["car", "road"]);
        assert_eq!(
            parse("a building with a signboard"),
            ["building", "signboard"]
        );
        assert!(parse("the the the").is_empty());
    }

    #[test]
    fn unknown_and_invalid_tokens_drop_silently() {
        assert_eq!(parse("a frobnicated car in the background"), ["car"]);
        // "view" and "night" are lexicon nouns marked invalid.
        assert_eq!(parse("a night view of the road"), ["road"]);
    }

    #[test]
    fn compound_runs_emit_compound_then_constituents() {
        assert_eq!(
            parse("a traffic light above the road"),
            ["traffic light", "traffic", "light", "road"]
        );
        // Plural compound members lemmatize inside the compound.
        assert_eq!(
            parse("two traffic lights"),
            ["traffic light", "traffic", "light"]
        );
        // Three-noun run stays one compound.
        assert_eq!(
            parse("the city traffic light"),
            ["city traffic light", "city", "traffic", "light"]
        );
    }

    #[test]
    fn compound_flag_off_keeps_constituents_only() {
        let v = caption_to_tags(
            &cap("a traffic light above the road"),
            Lexicon::bundled(),
            false,
        );
        assert_eq!(v.tags(), ["traffic", "light", "road"]);
    }

    #[test]
    fn punctuation_breaks_noun_adjacency() {
        assert_eq!(parse("traffic, light"), ["traffic", "light"]);
        assert_eq!(parse("a car; a road"), ["car", "road"]);
        // An invalid noun between two valid ones also breaks the run.
        assert_eq!(parse("a car side road"), ["car", "road"]);
    }

    #[test]
    fn parsing_is_idempotent_over_joined_tags() {
        for text in [
            "a traffic light above the road",
            "cars parked near a dining table",
            "a building with a signboard",
        ] {
            let first = parse(text);
            let rejoined = first.join(", ");
            assert_eq!(parse(&rejoined), first, "caption: {text}");
        }
    }

    #[test]
    fn duplicates_keep_first_occurrence_order() {
        assert_eq!(parse("a car and a car on a road, road"), ["car", "road"]);
    }

    #[test]
    fn vocabulary_canonicalizes_and_dedupes() {
        let v = Vocabulary::new([" Car ", "road", "CAR"]).unwrap();
        assert_eq!(v.tags(), ["car", "road"]);
        assert_eq!(v.position("road"), Some(1));
        assert!(Vocabulary::new(["ok", "  "]).is_err());
    }

    #[test]
    fn merge_is_an_ordered_union() {
        let a = Vocabulary::new(["car"]).unwrap();
        let b = Vocabulary::new(["car", "road"]).unwrap();
        let c = Vocabulary::empty();
        assert_eq!(merge_vocabularies([&a, &b, &c]).tags(), ["car", "road"]);
        assert!(merge_vocabularies([&c]).is_empty());

        // Against brute force set union on several random slices.
        let pool = ["car", "road", "tree", "wall", "lamp"];
        let vs: Vec<Vocabulary> = (0..5)
            .map(|i| Vocabulary::new(pool.iter().skip(i % 3).copied()).unwrap())
            .collect();
        let merged = merge_vocabularies(vs.iter());
        let mut expect: Vec<&str> = Vec::new();
        for v in &vs {
            for t in v.tags() {
                if !expect.contains(&t.as_str()) {
                    expect.push(t);
                }
            }
        }
        assert_eq!(merged.tags(), expect.as_slice());
    }

    #[test]
    fn decode_returns_nearest_tags() {
        let space = SyntheticSpace::new(32, 17, 0.0).unwrap();
        let lex = Lexicon::bundled();
        let car = space.encode_text("car").unwrap();
        let v = decode_point_caption(car.view(), false, &space, lex, 1).unwrap();
        assert_eq!(v.tags(), ["car"]);

        let road = space.encode_text("road").unwrap();
        let mean = (&car + &road) / 2.0;
        let norm = mean.dot(&mean).sqrt();
        let v = decode_point_caption((mean / norm).view(), false, &space, lex, 2).unwrap();
        let mut tags = v.tags().to_vec();
        tags.sort();
        assert_eq!(tags, ["car", "road"]);
    }

    #[test]
    fn decode_handles_empty_flag_and_bad_k() {
        let space = SyntheticSpace::new(16, 1, 0.0).unwrap();
        let lex = Lexicon::bundled();
        let zero = Array1::zeros(16);
        assert!(decode_point_caption(zero.view(), false, &space, lex, 0).is_err());
        let v = decode_point_caption(zero.view(), true, &space, lex, 3).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn decode_breaks_exact_ties_lexicographically() {
        let space = SyntheticSpace::new(16, 2, 0.0).unwrap();
        let lex = Lexicon::bundled();
        // A zero query ties every candidate at similarity 0.
        let zero = Array1::zeros(16);
        let v = decode_point_caption(zero.view(), false, &space, lex, 3).unwrap();
        let expect: Vec<&str> = lex.canonical_nouns().take(3).collect();
        assert_eq!(v.tags(), expect.as_slice());
    }
}
