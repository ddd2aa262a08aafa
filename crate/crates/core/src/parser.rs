//! Rule-based caption parsing into spatial triplets.
//!
//! The grammar is closed: a clause is a list of noun phrases, the verb `is`
//! or `are`, the relation `on` or `on top of`, and one supporting noun
//! phrase. Clauses are joined by `and`, `,`, `;` or sentence punctuation.
//! Matching is case-insensitive. Noun phrases resolve against the scene's
//! object registry by label (longest label suffix wins) or by literal id.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::model::{ObjectId, ObjectInstance, SpatialPredicate, SpatialTriplet};

const DETERMINERS: &[&str] = &["the", "a", "an"];
const ORDINAL_WORDS: &[&str] = &[
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

/// Words with grammatical meaning; labels containing them cannot be
/// rendered back into parseable captions.
pub const RESERVED_WORDS: &[&str] = &["is", "are", "on", "top", "of", "and", "the", "a", "an"];

const PRODUCTIONS: &[&str] = &[
    "<NP> is on <NP>",
    "<NP> is on top of <NP>",
    "<NP> and <NP> are on <NP>",
    "<NP> and <NP> are on top of <NP>",
    "<clause> and <clause>",
    "<clause>; <clause>",
    "<clause>. <clause>",
];

/// The closed set of accepted sentence patterns.
pub fn grammar_productions() -> &'static [&'static str] {
    PRODUCTIONS
}

/// Non-empty caption text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption(String);

impl Caption {
    pub fn new(text: impl Into<String>) -> Result<Self, ParseError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ParseError::EmptyCaption);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A message tied to a character range of the caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub span: Range<usize>,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag} [{}..{}]: {}", self.span.start, self.span.end, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("caption is empty")]
    EmptyCaption,
    #[error("no object matches {phrase:?}")]
    UnknownObject { phrase: String, span: Range<usize> },
    #[error("{phrase:?} matches several objects ({})", join_ids(.candidates))]
    AmbiguousReference { phrase: String, candidates: Vec<ObjectId>, span: Range<usize> },
    #[error("malformed sentence: {reason}")]
    MalformedSentence { reason: String, span: Range<usize> },
}

fn join_ids(ids: &[ObjectId]) -> String {
    ids.iter().map(ObjectId::as_str).collect::<Vec<_>>().join(", ")
}

impl ParseError {
    pub fn span(&self) -> Range<usize> {
        match self {
            ParseError::EmptyCaption => 0..0,
            ParseError::UnknownObject { span, .. }
            | ParseError::AmbiguousReference { span, .. }
            | ParseError::MalformedSentence { span, .. } => span.clone(),
        }
    }

    pub fn diagnostic(&self) -> ParseDiagnostic {
        ParseDiagnostic { severity: Severity::Error, span: self.span(), message: self.to_string() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutput {
    pub triplets: Vec<SpatialTriplet>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Word,
    Comma,
    Stop,
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    kind: TokenKind,
    span: Range<usize>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\''
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(String, usize)> = None;
    let mut end = 0;
    for (pos, c) in text.chars().enumerate() {
        end = pos + 1;
        if is_word_char(c) {
            match current.as_mut() {
                Some((word, _)) => word.extend(c.to_lowercase()),
                None => current = Some((c.to_lowercase().collect(), pos)),
            }
            continue;
        }
        if let Some((word, start)) = current.take() {
            tokens.push(Token { text: word, kind: TokenKind::Word, span: start..pos });
        }
        let kind = match c {
            ',' => TokenKind::Comma,
            '.' | ';' | '!' | '?' => TokenKind::Stop,
            _ => continue,
        };
        tokens.push(Token { text: c.to_string(), kind, span: pos..pos + 1 });
    }
    if let Some((word, start)) = current.take() {
        tokens.push(Token { text: word, kind: TokenKind::Word, span: start..end });
    }
    tokens
}

fn span_of(tokens: &[Token]) -> Range<usize> {
    match (tokens.first(), tokens.last()) {
        (Some(a), Some(b)) => a.span.start..b.span.end,
        _ => 0..0,
    }
}

/// Extracts every asserted relation, in textual order.
///
/// Repeated identical relations are kept once and reported as warnings.
pub fn parse_caption(caption: &Caption, registry: &[ObjectInstance]) -> Result<ParseOutput, ParseError> {
    let tokens = tokenize(caption.as_str());
    let mut output = ParseOutput::default();
    let mut seen: HashSet<SpatialTriplet> = HashSet::new();

    for sentence in tokens.split(|t| t.kind == TokenKind::Stop).filter(|s| !s.is_empty()) {
        for (triplet, span) in parse_sentence(sentence, registry)? {
            if seen.insert(triplet.clone()) {
                output.triplets.push(triplet);
            } else {
                output.diagnostics.push(ParseDiagnostic {
                    severity: Severity::Warning,
                    span,
                    message: format!("duplicate relation {triplet} ignored"),
                });
            }
        }
    }
    Ok(output)
}

fn parse_sentence(
    sentence: &[Token],
    registry: &[ObjectInstance],
) -> Result<Vec<(SpatialTriplet, Range<usize>)>, ParseError> {
    let is_separator = |t: &Token| t.kind == TokenKind::Comma || t.text == "and";
    let mut out = Vec::new();
    let mut pending: Vec<&[Token]> = Vec::new();

    for segment in sentence.split(is_separator).filter(|s| !s.is_empty()) {
        let Some(verb) = segment.iter().position(|t| t.text == "is" || t.text == "are") else {
            pending.push(segment);
            continue;
        };
        let head = &segment[..verb];
        if !head.is_empty() {
            pending.push(head);
        }
        if pending.is_empty() {
            return Err(malformed("clause has no subject", segment));
        }
        let rest = &segment[verb + 1..];
        let (predicate, support) = match rest {
            [on, top, of, support @ ..] if on.text == "on" && top.text == "top" && of.text == "of" => {
                (SpatialPredicate::OnTopOf, support)
            }
            [on, support @ ..] if on.text == "on" => (SpatialPredicate::On, support),
            _ => return Err(malformed("expected \"on\" or \"on top of\" after the verb", segment)),
        };
        if support.is_empty() {
            return Err(malformed("clause has no supporting object", segment));
        }
        let subjects = pending
            .drain(..)
            .map(|np| resolve_tokens(np, registry).map(|id| (id, np)))
            .collect::<Result<Vec<_>, _>>()?;
        let support_id = resolve_tokens(support, registry)?;
        for (subject_id, subject) in subjects {
            let clause_span = subject[0].span.start..segment.last().unwrap().span.end;
            let triplet = SpatialTriplet::new(subject_id, predicate, support_id.clone()).map_err(|e| {
                ParseError::MalformedSentence { reason: e.to_string(), span: clause_span.clone() }
            })?;
            out.push((triplet, clause_span));
        }
    }
    if let Some(first) = pending.first() {
        let stray_span = first[0].span.start..pending.last().unwrap().last().unwrap().span.end;
        return Err(ParseError::MalformedSentence {
            reason: "no \"is on\" / \"are on\" relation".to_string(),
            span: stray_span,
        });
    }
    Ok(out)
}

fn malformed(reason: &str, tokens: &[Token]) -> ParseError {
    ParseError::MalformedSentence { reason: reason.to_string(), span: span_of(tokens) }
}

/// Resolves a noun phrase such as "the second cup" to a registry id.
pub fn resolve_reference(phrase: &str, registry: &[ObjectInstance]) -> Result<ObjectId, ParseError> {
    let tokens: Vec<Token> = tokenize(phrase).into_iter().filter(|t| t.kind == TokenKind::Word).collect();
    if tokens.is_empty() {
        return Err(ParseError::MalformedSentence {
            reason: "empty noun phrase".to_string(),
            span: 0..phrase.chars().count(),
        });
    }
    resolve_tokens(&tokens, registry)
}

fn label_words(label: &str) -> Vec<String> {
    label
        .split(|c: char| !is_word_char(c) || c == '_')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn parse_ordinal(word: &str) -> Option<u32> {
    if let Some(pos) = ORDINAL_WORDS.iter().position(|w| *w == word) {
        return Some(pos as u32 + 1);
    }
    let digits = word
        .strip_suffix("st")
        .or_else(|| word.strip_suffix("nd"))
        .or_else(|| word.strip_suffix("rd"))
        .or_else(|| word.strip_suffix("th"))
        .unwrap_or(word);
    digits.parse().ok().filter(|n| *n > 0)
}

fn resolve_tokens(tokens: &[Token], registry: &[ObjectInstance]) -> Result<ObjectId, ParseError> {
    let span = span_of(tokens);
    let words: Vec<&str> = tokens
        .iter()
        .map(|t| t.text.as_str())
        .skip_while(|w| DETERMINERS.contains(w))
        .collect();
    let Some(&head) = words.last() else {
        return Err(ParseError::MalformedSentence { reason: "noun phrase has no noun".to_string(), span });
    };

    if let Some(obj) = registry.iter().find(|o| o.id.as_str() == head) {
        return Ok(obj.id.clone());
    }

    // Longest label that is a suffix of the phrase; fall back to labels
    // whose own head noun is the phrase head.
    let mut best_len = 0;
    let mut candidates: Vec<&ObjectInstance> = Vec::new();
    for obj in registry {
        let label = label_words(&obj.label);
        if label.is_empty() || label.len() > words.len() {
            continue;
        }
        if words[words.len() - label.len()..].iter().zip(&label).all(|(w, l)| *w == l) {
            if label.len() > best_len {
                best_len = label.len();
                candidates.clear();
            }
            if label.len() == best_len {
                candidates.push(obj);
            }
        }
    }
    if candidates.is_empty() {
        best_len = 1;
        candidates = registry
            .iter()
            .filter(|o| label_words(&o.label).last().is_some_and(|l| l == head))
            .collect();
    }
    if candidates.is_empty() {
        return Err(ParseError::UnknownObject { phrase: head.to_string(), span });
    }

    let modifiers = &words[..words.len() - best_len];
    if let Some(n) = modifiers.iter().find_map(|w| parse_ordinal(w)) {
        return candidates
            .iter()
            .find(|o| o.id.ordinal() == Some(n))
            .map(|o| o.id.clone())
            .ok_or_else(|| ParseError::UnknownObject { phrase: words.join(" "), span });
    }

    match candidates.as_slice() {
        [only] => Ok(only.id.clone()),
        many => {
            let mut ids: Vec<ObjectId> = many.iter().map(|o| o.id.clone()).collect();
            ids.sort();
            Err(ParseError::AmbiguousReference { phrase: words.join(" "), candidates: ids, span })
        }
    }
}
