//! Rule-based utterance grammar.
//!
//! Each rule compiles to one case-insensitive regular expression anchored
//! at both ends. Captured spans are resolved through the ontology (concept
//! placeholders) or the time-phrase resolver (`{time}`).

use std::str::FromStr;

use chrono::NaiveDate;
use regex::Regex;

use super::act::{Intent, InterpretedAct, ReferentKind};
use super::DialogueError;
use crate::ontology::{ConceptRef, Ontology};
use crate::search::{self, Dimension};

/// Between pattern words.
const SEP: &str = r"[\s,:;]+";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotName {
    /// Concept list split into dimensions by ontology source.
    Concepts,
    Anatomy,
    Visual,
    Disease,
    /// One concept of any source.
    Concept,
    Time,
    Referent(ReferentKind),
}

impl FromStr for SlotName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "concepts" => SlotName::Concepts,
            "anatomy" => SlotName::Anatomy,
            "visual" => SlotName::Visual,
            "disease" => SlotName::Disease,
            "concept" => SlotName::Concept,
            "time" => SlotName::Time,
            other => SlotName::Referent(other.parse().map_err(|_| format!("unknown slot {other:?}"))?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Capture {
    Concept,
    Concepts,
    Time,
}

#[derive(Clone, Debug)]
enum Binding {
    Span(SlotName, usize),
    Implicit(ReferentKind),
}

#[derive(Clone, Debug)]
struct Rule {
    regex: Regex,
    intent: Intent,
    captures: Vec<Capture>,
    deictics: Vec<ReferentKind>,
    bindings: Vec<Binding>,
}

#[derive(Clone, Debug)]
pub struct Grammar {
    rules: Vec<Rule>,
}

fn deictic_regex(kind: ReferentKind) -> &'static str {
    match kind {
        ReferentKind::Patient => r"(?:this|that)\s+(?:patient|person|one)|him|her",
        ReferentKind::Image => r"(?:this|that)\s+(?:image|picture|slice|one)|here|there",
        ReferentKind::Region => r"(?:this|that)\s+(?:region|lesion|area|spot|one)|here|there",
    }
}

#[derive(Default)]
struct Compiled {
    captures: Vec<Capture>,
    deictics: Vec<ReferentKind>,
}

fn grammar_error(line: usize, reason: impl Into<String>) -> DialogueError {
    DialogueError::Grammar {
        line,
        reason: reason.into(),
    }
}

/// Splits a pattern into words, placeholders and `[...]` groups.
fn tokenize(pattern: &str, line: usize) -> Result<Vec<String>, DialogueError> {
    let mut tokens = Vec::new();
    let mut chars = pattern.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() || c == ',' || c == ':' || c == ';' => {
                chars.next();
            }
            '{' | '[' => {
                let close = if c == '{' { '}' } else { ']' };
                let mut token = String::new();
                let mut depth = 0;
                for ch in chars.by_ref() {
                    token.push(ch);
                    if ch == c {
                        depth += 1;
                    } else if ch == close {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                }
                if depth != 0 {
                    return Err(grammar_error(line, format!("unclosed {c}")));
                }
                tokens.push(token);
            }
            _ => {
                let mut word = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || matches!(ch, ',' | ':' | ';' | '{' | '[') {
                        break;
                    }
                    word.push(ch);
                    chars.next();
                }
                tokens.push(word);
            }
        }
    }
    Ok(tokens)
}

fn compile_tokens(tokens: &[String], line: usize, out: &mut Compiled) -> Result<Vec<(String, bool)>, DialogueError> {
    let mut parts = Vec::new();
    for token in tokens {
        if let Some(inner) = token.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            let inner_parts = compile_tokens(&tokenize(inner, line)?, line, out)?;
            if inner_parts.iter().any(|(_, optional)| *optional) {
                return Err(grammar_error(line, "nested optional groups"));
            }
            let joined: Vec<String> = inner_parts.into_iter().map(|(p, _)| p).collect();
            if joined.is_empty() {
                return Err(grammar_error(line, "empty optional group"));
            }
            parts.push((joined.join(SEP), true));
        } else if let Some(inner) = token.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            let fragment = match inner {
                "concept" | "concepts" | "time" => {
                    out.captures.push(match inner {
                        "concept" => Capture::Concept,
                        "concepts" => Capture::Concepts,
                        _ => Capture::Time,
                    });
                    format!("(?P<c{}>.+?)", out.captures.len())
                }
                other => {
                    let kind = other
                        .strip_prefix("deictic:")
                        .ok_or_else(|| grammar_error(line, format!("unknown placeholder {{{other}}}")))?
                        .parse::<ReferentKind>()
                        .map_err(|e| grammar_error(line, e))?;
                    out.deictics.push(kind);
                    format!("(?P<d{}>{})", out.deictics.len(), deictic_regex(kind))
                }
            };
            parts.push((fragment, false));
        } else {
            parts.push((regex::escape(token), false));
        }
    }
    Ok(parts)
}

fn compile_pattern(pattern: &str, line: usize) -> Result<(Regex, Compiled), DialogueError> {
    let mut compiled = Compiled::default();
    let parts = compile_tokens(&tokenize(pattern, line)?, line, &mut compiled)?;
    if parts.is_empty() {
        return Err(grammar_error(line, "empty pattern"));
    }
    let mut body = String::new();
    let mut open_start = true;
    for (fragment, optional) in parts {
        // separators lead each element so an absent optional part takes
        // its separator with it
        let sep = if open_start { "" } else { SEP };
        match (optional, open_start) {
            (true, true) => body.push_str(&format!("(?:{fragment}{SEP})?")),
            (true, false) => body.push_str(&format!("(?:{sep}{fragment})?")),
            (false, _) => {
                body.push_str(sep);
                body.push_str(&fragment);
                open_start = false;
            }
        }
    }
    let text = format!(r"(?i)^\s*{body}[\s,:;]*[.!?]*\s*$");
    let regex = Regex::new(&text).map_err(|e| grammar_error(line, e.to_string()))?;
    Ok((regex, compiled))
}

fn parse_bindings(text: &str, line: usize, captures: &[Capture]) -> Result<Vec<Binding>, DialogueError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| grammar_error(line, format!("binding {part:?} lacks '='")))?;
        let slot: SlotName = name.trim().parse().map_err(|e: String| grammar_error(line, e))?;
        let value = value.trim();
        if value == "?" {
            match slot {
                SlotName::Referent(kind) => out.push(Binding::Implicit(kind)),
                _ => return Err(grammar_error(line, format!("only referent slots take '?', not {name}"))),
            }
            continue;
        }
        let index: usize = value
            .strip_prefix('$')
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| grammar_error(line, format!("expected $n or ?, found {value:?}")))?;
        let capture = index
            .checked_sub(1)
            .and_then(|i| captures.get(i))
            .ok_or_else(|| grammar_error(line, format!("${index} has no capture")))?;
        let fits = match slot {
            SlotName::Time => *capture == Capture::Time,
            SlotName::Referent(_) => false,
            _ => *capture != Capture::Time,
        };
        if !fits {
            return Err(grammar_error(line, format!("slot {name} cannot take capture ${index}")));
        }
        out.push(Binding::Span(slot, index));
    }
    Ok(out)
}

/// Splits a concept list: commas, then the joiners "and/or", "and", "or",
/// "then".
fn split_list(span: &str) -> Vec<String> {
    let joiners = Regex::new(r"(?i)(?:^|\s+)(?:and/or|and|or|then)\s+").expect("static regex");
    span.split([',', ';'])
        .flat_map(|piece| joiners.split(piece.trim()).map(str::to_string).collect::<Vec<_>>())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn lookup_phrase(ontology: &Ontology, phrase: &str) -> Vec<ConceptRef> {
    let trimmed = phrase.trim().trim_end_matches(['.', '!', '?']);
    let found = ontology.lookup(trimmed);
    if !found.is_empty() {
        return found;
    }
    let articles = Regex::new(r"(?i)^(?:the|a|an|my|some)\s+").expect("static regex");
    ontology.lookup(&articles.replace(trimmed, ""))
}

fn unknown_term(term: &str) -> InterpretedAct {
    InterpretedAct::clarify(format!("I do not know the term \"{term}\". Could you rephrase it?"))
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self, DialogueError> {
        let mut rules = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (pattern, action) = trimmed
                .split_once("=>")
                .ok_or_else(|| grammar_error(line, "expected `pattern => intent(...)`"))?;
            let action = action.trim();
            let (intent, args) = action
                .strip_suffix(')')
                .and_then(|a| a.split_once('('))
                .ok_or_else(|| grammar_error(line, format!("malformed action {action:?}")))?;
            let intent: Intent = intent.trim().parse().map_err(|e: String| grammar_error(line, e))?;
            if intent == Intent::Clarify {
                return Err(grammar_error(line, "clarify is the fallback, not a rule target"));
            }
            let (regex, compiled) = compile_pattern(pattern.trim(), line)?;
            let bindings = parse_bindings(args, line, &compiled.captures)?;
            rules.push(Rule {
                regex,
                intent,
                captures: compiled.captures,
                deictics: compiled.deictics,
                bindings,
            });
        }
        if rules.is_empty() {
            return Err(grammar_error(0, "no rules"));
        }
        Ok(Grammar { rules })
    }

    pub fn bundled() -> Self {
        Grammar::parse(super::GRAMMAR).expect("bundled grammar is valid")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Interpretations of `text` from every matching rule, in rule order.
    /// A rule whose spans do not resolve yields a clarification act in its
    /// place. No match at all yields a single clarification.
    pub fn parse_utterance(&self, text: &str, ontology: &Ontology, today: NaiveDate) -> Vec<InterpretedAct> {
        let mut acts = Vec::new();
        for rule in &self.rules {
            let Some(caps) = rule.regex.captures(text) else { continue };
            let act = interpret(rule, &caps, ontology, today);
            if !acts.contains(&act) {
                acts.push(act);
            }
        }
        if acts.is_empty() {
            acts.push(InterpretedAct::clarify(
                "Sorry, I did not understand that. You can ask for patient records, images, annotations or findings.",
            ));
        }
        // resolved interpretations first
        acts.sort_by_key(|a| a.intent == super::Intent::Clarify);
        acts
    }
}

fn interpret(rule: &Rule, caps: &regex::Captures<'_>, ontology: &Ontology, today: NaiveDate) -> InterpretedAct {
    let mut act = InterpretedAct::new(rule.intent);
    for (i, kind) in rule.deictics.iter().enumerate() {
        if caps.name(&format!("d{}", i + 1)).is_some() {
            act.add_deictic(*kind);
        }
    }
    for binding in &rule.bindings {
        let (slot, index) = match binding {
            Binding::Implicit(kind) => {
                act.add_deictic(*kind);
                continue;
            }
            Binding::Span(slot, index) => (*slot, *index),
        };
        let Some(span) = caps.name(&format!("c{index}")).map(|m| m.as_str().trim()) else {
            continue;
        };
        let capture = rule.captures[index - 1];
        match slot {
            SlotName::Time => match search::resolve_time_phrase(span, today) {
                Ok(range) => act.set_time(&range),
                Err(_) => return InterpretedAct::clarify(format!("Which period do you mean by \"{span}\"?")),
            },
            SlotName::Concept => match lookup_phrase(ontology, span).into_iter().next() {
                Some(c) => act.set_concept(&c.iri, c.source),
                None => return unknown_term(span),
            },
            SlotName::Referent(_) => unreachable!("validated at load"),
            SlotName::Concepts | SlotName::Anatomy | SlotName::Visual | SlotName::Disease => {
                let forced = match slot {
                    SlotName::Anatomy => Some(Dimension::Anatomy),
                    SlotName::Visual => Some(Dimension::Imaging),
                    SlotName::Disease => Some(Dimension::Disease),
                    _ => None,
                };
                // a whole-span match wins over splitting, so labels that
                // contain "and" stay intact
                let whole = lookup_phrase(ontology, span);
                let items = if capture == Capture::Concept || !whole.is_empty() {
                    vec![span.to_string()]
                } else {
                    split_list(span)
                };
                for item in items {
                    let found = lookup_phrase(ontology, &item).into_iter().find_map(|c| {
                        let dimension = Dimension::of(c.source)?;
                        (forced.is_none() || forced == Some(dimension)).then_some((dimension, c.iri))
                    });
                    match found {
                        Some((dimension, iri)) => act.add_concepts(dimension, &[iri]),
                        None => return unknown_term(&item),
                    }
                }
            }
        }
    }
    act
}
