//! Line-oriented triple format: one `<s> <p> <o> .` statement per line,
//! `#` comments and `@prefix name: <base> .` directives.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Iri, StoreError, Term, Triple};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Iri(String),
    Prefixed(String),
    Literal { value: String, datatype: Option<Box<Token>> },
    Dot,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    queued_dot: bool,
}

impl<'a> Lexer<'a> {
    fn new(line: &'a str) -> Self {
        Lexer {
            chars: line.char_indices().peekable(),
            queued_dot: false,
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.next_if(|(_, c)| c.is_whitespace()).is_some() {}
    }

    /// `None` at end of line or at a trailing comment.
    fn next_token(&mut self) -> Result<Option<Token>, String> {
        if std::mem::take(&mut self.queued_dot) {
            return Ok(Some(Token::Dot));
        }
        self.skip_ws();
        let Some(&(_, c)) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '#' => Ok(None),
            '<' => {
                self.chars.next();
                let mut iri = String::new();
                loop {
                    match self.chars.next() {
                        Some((_, '>')) => return Ok(Some(Token::Iri(iri))),
                        Some((_, ch)) => iri.push(ch),
                        None => return Err("unterminated IRI".into()),
                    }
                }
            }
            '"' => {
                self.chars.next();
                let value = self.string_body()?;
                let datatype = if self.chars.next_if(|(_, c)| *c == '^').is_some() {
                    if self.chars.next_if(|(_, c)| *c == '^').is_none() {
                        return Err("expected '^^' before datatype".into());
                    }
                    match self.next_token()? {
                        Some(t @ (Token::Iri(_) | Token::Prefixed(_))) => Some(Box::new(t)),
                        _ => return Err("expected datatype IRI after '^^'".into()),
                    }
                } else {
                    None
                };
                Ok(Some(Token::Literal { value, datatype }))
            }
            '.' => {
                self.chars.next();
                Ok(Some(Token::Dot))
            }
            _ => {
                let mut name = String::new();
                while let Some((_, ch)) = self.chars.next_if(|(_, c)| !c.is_whitespace()) {
                    name.push(ch);
                }
                if name.len() > 1 && name.ends_with('.') && self.rest_is_blank() {
                    // `ex:a.` at end of statement: the dot terminates it
                    name.pop();
                    self.queued_dot = true;
                }
                Ok(Some(Token::Prefixed(name)))
            }
        }
    }

    fn rest_is_blank(&self) -> bool {
        let rest: String = self.chars.clone().map(|(_, c)| c).collect();
        let rest = rest.trim();
        rest.is_empty() || rest.starts_with('#')
    }

    fn string_body(&mut self) -> Result<String, String> {
        let mut out = String::new();
        loop {
            match self.chars.next() {
                None => return Err("unterminated string literal".into()),
                Some((_, '"')) => return Ok(out),
                Some((_, '\\')) => match self.chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 'r')) => out.push('\r'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'u')) => {
                        let hex: String = (0..4).filter_map(|_| self.chars.next().map(|(_, c)| c)).collect();
                        let code = u32::from_str_radix(&hex, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| format!("invalid \\u escape {hex:?}"))?;
                        out.push(code);
                    }
                    other => return Err(format!("invalid escape {:?}", other.map(|(_, c)| c))),
                },
                Some((_, ch)) => out.push(ch),
            }
        }
    }
}

fn tokenize(line: &str) -> Result<Vec<Token>, String> {
    let mut lexer = Lexer::new(line);
    let mut tokens = Vec::new();
    while let Some(token) = lexer.next_token()? {
        tokens.push(token);
    }
    Ok(tokens)
}

fn resolve(token: &Token, prefixes: &BTreeMap<String, String>) -> Result<Iri, String> {
    let raw = match token {
        Token::Iri(iri) => iri.clone(),
        Token::Prefixed(name) => {
            let (prefix, local) = name
                .split_once(':')
                .ok_or_else(|| format!("expected IRI or prefixed name, found {name:?}"))?;
            let base = prefixes
                .get(prefix)
                .ok_or_else(|| format!("undeclared prefix {prefix:?}"))?;
            format!("{base}{local}")
        }
        Token::Literal { .. } => return Err("literal not allowed here".into()),
        Token::Dot => return Err("unexpected '.'".into()),
    };
    Iri::new(&raw).map_err(|_| format!("invalid IRI {raw:?}"))
}

fn parse_line(
    line: &str,
    prefixes: &mut BTreeMap<String, String>,
) -> Result<Option<Triple>, String> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    if let Some(rest) = trimmed.strip_prefix("@prefix") {
        let tokens = tokenize(rest)?;
        return match tokens.as_slice() {
            [Token::Prefixed(name), Token::Iri(base), Token::Dot] if name.ends_with(':') => {
                Iri::new(base).map_err(|_| format!("invalid IRI {base:?}"))?;
                prefixes.insert(name.trim_end_matches(':').to_string(), base.clone());
                Ok(None)
            }
            _ => Err("malformed @prefix directive (expected `@prefix name: <IRI> .`)".into()),
        };
    }
    let tokens = tokenize(trimmed)?;
    match tokens.as_slice() {
        [s, p, o, Token::Dot] => {
            let subject = resolve(s, prefixes)?;
            let predicate = resolve(p, prefixes)?;
            let object = match o {
                Token::Literal { value, datatype } => Term::Literal {
                    value: value.clone(),
                    datatype: datatype.as_deref().map(|d| resolve(d, prefixes)).transpose()?,
                },
                other => Term::Iri(resolve(other, prefixes)?),
            };
            Ok(Some(Triple {
                subject,
                predicate,
                object,
            }))
        }
        [_, _, _] => Err("missing terminating '.'".into()),
        tokens if tokens.len() < 3 => Err(format!(
            "incomplete statement: expected subject, predicate, object and '.', found {} term(s)",
            tokens.len()
        )),
        _ => Err("trailing content after statement".into()),
    }
}

/// Parses a document, returning its statements and declared prefixes.
pub fn parse_triples_with_prefixes(
    text: &str,
) -> Result<(Vec<Triple>, BTreeMap<String, String>), StoreError> {
    let mut prefixes = BTreeMap::new();
    let mut triples = Vec::new();
    for (index, line) in text.lines().enumerate() {
        match parse_line(line, &mut prefixes) {
            Ok(Some(triple)) => triples.push(triple),
            Ok(None) => {}
            Err(reason) => {
                return Err(StoreError::Parse {
                    line: index + 1,
                    reason,
                })
            }
        }
    }
    Ok((triples, prefixes))
}

pub fn parse_triples(text: &str) -> Result<Vec<Triple>, StoreError> {
    parse_triples_with_prefixes(text).map(|(triples, _)| triples)
}

pub(crate) fn write_term(out: &mut String, term: &Term) {
    match term {
        Term::Iri(iri) => {
            let _ = write!(out, "<{iri}>");
        }
        Term::Literal { value, datatype } => {
            out.push('"');
            for ch in value.chars() {
                match ch {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
            if let Some(dt) = datatype {
                let _ = write!(out, "^^<{dt}>");
            }
        }
    }
}

/// Appends one statement line, newline included.
pub fn write_triple_line(out: &mut String, triple: &Triple) {
    let _ = write!(out, "<{}> <{}> ", triple.subject, triple.predicate);
    write_term(out, &triple.object);
    out.push_str(" .\n");
}

pub fn serialize_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> String {
    let mut out = String::new();
    for triple in triples {
        write_triple_line(&mut out, triple);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iri(s: &str) -> Iri {
        Iri::new(s).unwrap()
    }

    #[test]
    fn plain_statement() {
        let triples = parse_triples("<urn:a> <urn:p> <urn:b> .").unwrap();
        assert_eq!(triples, vec![Triple::new(iri("urn:a"), iri("urn:p"), iri("urn:b"))]);
    }

    #[test]
    fn prefix_expansion() {
        let doc = "@prefix fma: <urn:fma:> .\nfma:Liver fma:partOf fma:Abdomen .\n";
        let triples = parse_triples(doc).unwrap();
        assert_eq!(
            triples,
            vec![Triple::new(iri("urn:fma:Liver"), iri("urn:fma:partOf"), iri("urn:fma:Abdomen"))]
        );
    }

    #[test]
    fn missing_object_reports_line() {
        let err = parse_triples("# header\n\n<urn:a> <urn:p>\n").unwrap_err();
        match err {
            StoreError::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("incomplete"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn literals_and_comments() {
        let doc = r#"
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
<urn:a> <urn:label> "Hodgkin \"lymphoma\"" . # trailing comment
<urn:a> <urn:conf> "0.9"^^xsd:double .
<urn:a> <urn:ex> ex:b .
"#;
        let err = parse_triples(doc).unwrap_err();
        assert!(matches!(err, StoreError::Parse { line: 5, .. }));
        let triples = parse_triples(&doc.replace("<urn:a> <urn:ex> ex:b .\n", "")).unwrap();
        assert_eq!(triples[0].object, Term::literal("Hodgkin \"lymphoma\""));
        assert_eq!(
            triples[1].object,
            Term::typed("0.9", iri("http://www.w3.org/2001/XMLSchema#double"))
        );
    }

    #[test]
    fn prefixed_name_with_attached_dot() {
        let doc = "@prefix icd10: <urn:icd10:> .\nicd10:C81.1 icd10:isA icd10:C81.\n";
        let triples = parse_triples(doc).unwrap();
        assert_eq!(triples[0].subject, iri("urn:icd10:C81.1"));
        assert_eq!(triples[0].object, Term::Iri(iri("urn:icd10:C81")));
    }

    #[test]
    fn rejects_literal_subject_and_trailing_tokens() {
        assert!(parse_triples("\"x\" <urn:p> <urn:o> .").is_err());
        assert!(parse_triples("<urn:s> <urn:p> <urn:o> . <urn:x>").is_err());
        assert!(parse_triples("<urn:s> <urn:p> <urn:o>").is_err());
        assert!(parse_triples("<urn:s> <urn:p> \"open .").is_err());
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![
            "[a-z]{1,6}".prop_map(|s| Term::Iri(Iri::new(format!("urn:x:{s}")).unwrap())),
            "\\PC{0,12}".prop_map(Term::literal),
            ("[0-9]{1,4}", "[a-z]{1,5}").prop_map(|(v, d)| Term::typed(v, Iri::new(format!("urn:dt:{d}")).unwrap())),
        ]
    }

    fn arb_triple() -> impl Strategy<Value = Triple> {
        ("[a-z]{1,6}", "[a-z]{1,4}", arb_term()).prop_map(|(s, p, o)| {
            Triple::new(
                Iri::new(format!("urn:s:{s}")).unwrap(),
                Iri::new(format!("urn:p:{p}")).unwrap(),
                o,
            )
        })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(triples in proptest::collection::vec(arb_triple(), 0..30)) {
            let text = serialize_triples(&triples);
            prop_assert_eq!(parse_triples(&text).unwrap(), triples);
        }
    }
}
