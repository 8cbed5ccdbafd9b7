//! Query to sub-database routing.

use std::collections::BTreeMap;
use std::fmt;

use crate::class::ElementClass;

/// Weight multiplier for a match sitting in a prepositional phrase.
pub const PP_FACTOR: f64 = 0.25;
/// Bonus for the earliest match outside a prepositional phrase.
pub const HEAD_BOOST: f64 = 2.0;
/// How many determiners, numbers or ordinals may sit between a
/// preposition and the noun it governs.
const PP_LOOKBACK: usize = 3;

const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "to", "from", "with", "within", "inside", "near", "between", "into", "for",
    "by", "above", "below", "under", "over", "beside", "behind", "across", "onto", "per",
];

const SKIPPABLE: &[&str] = &[
    "the", "a", "an", "each", "every", "all", "any", "this", "that", "these", "those", "its",
    "their", "our", "my", "same", "first", "second", "third", "fourth", "fifth", "sixth",
    "seventh", "eighth", "ninth", "tenth", "top", "upper", "lower", "ground", "last",
];

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntentError {
    #[error("empty query")]
    EmptyQuery,
    #[error("no label matches the query")]
    NoMatch,
    #[error("ambiguous query, candidates: {}", join(.0))]
    Ambiguous(Vec<ElementClass>),
    #[error("backend returned an unknown label {0:?}")]
    InvalidLabel(String),
    #[error("backend: {0}")]
    Backend(String),
}

fn join(labels: &[ElementClass]) -> String {
    labels
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("lexicon line {line}: {message}")]
pub struct LexiconError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub surface: Vec<String>,
    pub label: ElementClass,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_skippable(token: &str) -> bool {
    SKIPPABLE.contains(&token)
        || token.chars().all(|c| c.is_ascii_digit())
        || ["st", "nd", "rd", "th"].iter().any(|s| {
            token
                .strip_suffix(s)
                .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
        })
}

/// One lexicon hit in a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub start: usize,
    pub len: usize,
    pub label: ElementClass,
    pub weight: f64,
    pub in_pp: bool,
}

impl Lexicon {
    /// Parse `surface<TAB>label<TAB>weight` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| LexiconError {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [surface, label, weight] = fields[..] else {
                return Err(err(format!(
                    "expected 3 tab-separated fields, got {}",
                    fields.len()
                )));
            };
            if surface.chars().any(char::is_uppercase) {
                return Err(err(format!("surface {surface:?} is not lowercase")));
            }
            let label: ElementClass = label.trim().parse().map_err(|e| err(format!("{e}")))?;
            let weight: f64 = weight
                .trim()
                .parse()
                .ok()
                .filter(|w: &f64| w.is_finite() && *w > 0.0)
                .ok_or_else(|| err(format!("bad weight {weight:?}")))?;
            let surface = tokenize(surface);
            if surface.is_empty() {
                return Err(err("empty surface".into()));
            }
            entries.push(LexiconEntry {
                surface,
                label,
                weight,
            });
        }
        for label in ElementClass::ALL {
            if !entries.iter().any(|e| e.label == label) {
                return Err(LexiconError {
                    line: 0,
                    message: format!("no entry for label {label}"),
                });
            }
        }
        // longest surfaces first so multi-word forms win
        entries.sort_by(|a, b| b.surface.len().cmp(&a.surface.len()));
        Ok(Lexicon { entries })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    /// Greedy, non-overlapping, longest-first matches in token order.
    pub fn matches(&self, tokens: &[String]) -> Vec<Match> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.entries.iter().find(|e| {
                tokens.len() - i >= e.surface.len()
                    && e.surface.iter().zip(&tokens[i..]).all(|(a, b)| a == b)
            });
            match hit {
                Some(e) => {
                    out.push(Match {
                        start: i,
                        len: e.surface.len(),
                        label: e.label,
                        weight: e.weight,
                        in_pp: in_prepositional_phrase(tokens, i),
                    });
                    i += e.surface.len();
                }
                None => i += 1,
            }
        }
        out
    }

    /// Per-label scores.
    pub fn scores(&self, query: &str) -> BTreeMap<ElementClass, f64> {
        let tokens = tokenize(query);
        let matches = self.matches(&tokens);
        let head = matches.iter().position(|m| !m.in_pp);
        if let Some(container) =
            head.and_then(|h| counted_in_container(&tokens, &matches, matches[h].label))
        {
            return BTreeMap::from([(container, HEAD_BOOST)]);
        }
        let mut scores = BTreeMap::new();
        for (i, m) in matches.iter().enumerate() {
            let mut s = if m.in_pp {
                m.weight * PP_FACTOR
            } else {
                m.weight
            };
            if Some(i) == head {
                s += HEAD_BOOST;
            }
            *scores.entry(m.label).or_insert(0.0) += s;
        }
        scores
    }

    pub fn classify(&self, query: &str) -> Result<ElementClass, IntentError> {
        if query.trim().is_empty() {
            return Err(IntentError::EmptyQuery);
        }
        let scores = self.scores(query);
        let mut ranked: Vec<(ElementClass, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        match ranked.as_slice() {
            [] => Err(IntentError::NoMatch),
            [(label, _)] => Ok(*label),
            [(first, top), rest @ ..] => {
                let tied: Vec<ElementClass> = rest
                    .iter()
                    .take_while(|(_, s)| (s - top).abs() < 1e-9)
                    .map(|(l, _)| *l)
                    .collect();
                if tied.is_empty() {
                    Ok(*first)
                } else {
                    let mut all = vec![*first];
                    all.extend(tied);
                    all.sort();
                    Err(IntentError::Ambiguous(all))
                }
            }
        }
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }
}

const STOREY_NAMES: &[&str] = &[
    "verdieping",
    "geschoss",
    "dachgeschoss",
    "erdgeschoss",
    "obergeschoss",
];

const COUNT_CUES: &[&[&str]] = &[&["how", "many"], &["number", "of"], &["count", "of"]];

/// Whether `container`'s table carries a per-row count of `counted`.
fn counts(container: ElementClass, counted: ElementClass) -> bool {
    use ElementClass::*;
    match container {
        Floor => counted != Floor,
        Space => matches!(counted, Window | Door),
        _ => false,
    }
}

/// Storey codes such as `f4` or `b1`.
fn is_storey_code(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && (2..=3).contains(&token.len())
        && chars.all(|c| c.is_ascii_digit())
}

/// "How many windows are in space 321" asks for a count column of one
/// identified container row, so the container's table answers it.
fn counted_in_container(
    tokens: &[String],
    matches: &[Match],
    counted: ElementClass,
) -> Option<ElementClass> {
    let is_count = COUNT_CUES.iter().any(|cue| {
        tokens
            .windows(cue.len())
            .any(|w| w.iter().zip(cue.iter()).all(|(a, b)| a == b))
    });
    if !is_count {
        return None;
    }
    // a space followed by its id, or a storey by its proper name; "level 2"
    // stays with the counted class
    let named = matches.iter().find(|m| {
        m.in_pp
            && counts(m.label, counted)
            && match m.label {
                ElementClass::Space => tokens
                    .get(m.start + m.len)
                    .is_some_and(|t| t.chars().any(|c| c.is_ascii_digit())),
                _ => m.len == 1 && STOREY_NAMES.contains(&tokens[m.start].as_str()),
            }
    });
    if let Some(m) = named {
        return Some(m.label);
    }
    let code = tokens
        .iter()
        .enumerate()
        .any(|(i, t)| i > 0 && PREPOSITIONS.contains(&tokens[i - 1].as_str()) && is_storey_code(t));
    (code && counts(ElementClass::Floor, counted)).then_some(ElementClass::Floor)
}

fn in_prepositional_phrase(tokens: &[String], start: usize) -> bool {
    let mut j = start;
    let mut skipped = 0;
    while j > 0 {
        j -= 1;
        let t = tokens[j].as_str();
        if PREPOSITIONS.contains(&t) {
            return true;
        }
        if is_skippable(t) && skipped < PP_LOOKBACK {
            skipped += 1;
            continue;
        }
        return false;
    }
    false
}

/// Deterministic lexicon routing.
pub fn classify_lexicon(query: &str, lex: &Lexicon) -> Result<ElementClass, IntentError> {
    lex.classify(query)
}

/// Anything that can route a query to a label.
pub trait IntentBackend {
    fn classify(&self, query: &str) -> Result<ElementClass, IntentError>;
}

impl IntentBackend for Lexicon {
    fn classify(&self, query: &str) -> Result<ElementClass, IntentError> {
        Lexicon::classify(self, query)
    }
}

impl<F> IntentBackend for F
where
    F: Fn(&str) -> Result<ElementClass, IntentError>,
{
    fn classify(&self, query: &str) -> Result<ElementClass, IntentError> {
        self(query)
    }
}

pub fn classify(query: &str, backend: &dyn IntentBackend) -> Result<ElementClass, IntentError> {
    if query.trim().is_empty() {
        return Err(IntentError::EmptyQuery);
    }
    backend.classify(query)
}

/// Normalise a label returned by a language model: trimmed, lowercased and
/// stripped of surrounding quotes and punctuation.
pub fn parse_label(raw: &str) -> Result<ElementClass, IntentError> {
    let cleaned = raw
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    cleaned
        .parse()
        .map_err(|_| IntentError::InvalidLabel(raw.trim().to_string()))
}

impl fmt::Display for Match {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@{}{}",
            self.label,
            self.start,
            if self.in_pp { " (pp)" } else { "" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn route(q: &str) -> Result<ElementClass, IntentError> {
        classify_lexicon(q, &Lexicon::default())
    }

    #[test]
    fn example_queries() {
        assert_eq!(
            route("How many doors are there on Level 2?"),
            Ok(ElementClass::Door)
        );
        assert_eq!(
            route("How many bathrooms are there in the building?"),
            Ok(ElementClass::Space)
        );
        assert_eq!(
            route("Which door is Space 40156 connected to?"),
            Ok(ElementClass::Door)
        );
        assert_eq!(
            route("What is the elevation of F2?"),
            Ok(ElementClass::Floor)
        );
    }

    #[test]
    fn counts_of_an_identified_container() {
        assert_eq!(
            route("How many windows are there in space 211242?"),
            Ok(ElementClass::Space)
        );
        assert_eq!(route("How many beams in F4?"), Ok(ElementClass::Floor));
        assert_eq!(
            route("How many spaces are there in 02 verdieping?"),
            Ok(ElementClass::Floor)
        );
        assert_eq!(
            route("How many chairs are there in the office?"),
            Ok(ElementClass::Furniture)
        );
        assert_eq!(
            route("How many rooms are on the first floor?"),
            Ok(ElementClass::Space)
        );
        assert_eq!(
            route("Which space is window 17435 located in?"),
            Ok(ElementClass::Space)
        );
        assert!(is_storey_code("f4") && is_storey_code("b12"));
        assert!(!is_storey_code("f") && !is_storey_code("4f") && !is_storey_code("room"));
    }

    #[test]
    fn multi_word_surface_wins() {
        assert_eq!(
            route("Which room on Level 2 has the largest floor area?"),
            Ok(ElementClass::Space)
        );
    }

    #[test]
    fn no_match_and_ties() {
        assert_eq!(route("What colour is the roof?"), Err(IntentError::NoMatch));
        assert_eq!(route("   "), Err(IntentError::EmptyQuery));
        let lex = Lexicon::parse("door\tdoor\t1\nwindow\twindow\t1\nfloor\tfloor\t1\nspace\tspace\t1\nbeam\tbeam\t1\ncolumn\tcolumn\t1\nstair\tstair\t1\nfurniture\tfurniture\t1\n").unwrap();
        // both in prepositional phrases, equal weight
        assert_eq!(
            lex.classify("near door and near window"),
            Err(IntentError::Ambiguous(vec![
                ElementClass::Window,
                ElementClass::Door
            ]))
        );
    }

    #[test]
    fn lexicon_validation() {
        assert_eq!(Lexicon::parse("Door\tdoor\t1").unwrap_err().line, 1);
        assert!(Lexicon::parse("door\tdoor\tx").is_err());
        assert!(Lexicon::parse("door\tdoor\t1\n")
            .unwrap_err()
            .message
            .contains("no entry"));
    }

    #[test]
    fn label_normalisation() {
        assert_eq!(parse_label(" Space.\n"), Ok(ElementClass::Space));
        assert_eq!(parse_label("\"door\""), Ok(ElementClass::Door));
        assert_eq!(
            parse_label("wall"),
            Err(IntentError::InvalidLabel("wall".into()))
        );
    }

    #[test]
    fn closure_backend() {
        let fixed = |_: &str| Ok(ElementClass::Beam);
        assert_eq!(classify("anything", &fixed), Ok(ElementClass::Beam));
    }
}
