//! Parser for the supported SPARQL fragment: `PREFIX`, `SELECT` (variable
//! list or `*`, optional `DISTINCT`), a `WHERE` block of conjunctive triple
//! patterns with equality `FILTER`s, and `LIMIT`.
//!
//! Anything outside that fragment that is still recognizable SPARQL is
//! rejected with [`StoreError::UnsupportedFeature`] naming the construct.

use std::collections::BTreeMap;

use super::{Iri, StoreError, Term};
use crate::vocab;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternTerm {
    Var(String),
    Term(Term),
}

impl PatternTerm {
    pub fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Term(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn positions(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

/// `FILTER(?var = term)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterEq {
    pub var: String,
    pub value: Term,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    Vars(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub selection: Selection,
    pub patterns: Vec<TriplePattern>,
    pub filters: Vec<FilterEq>,
    pub limit: Option<usize>,
}

impl Query {
    /// Variables in projection order. `SELECT *` yields pattern variables
    /// in order of first occurrence.
    pub fn projected(&self) -> Vec<String> {
        match &self.selection {
            Selection::Vars(vars) => vars.clone(),
            Selection::All => {
                let mut vars: Vec<String> = Vec::new();
                for var in self.patterns.iter().flat_map(|p| p.positions()).filter_map(|t| t.var()) {
                    if !vars.iter().any(|v| v == var) {
                        vars.push(var.to_string());
                    }
                }
                vars
            }
        }
    }

    fn mentions(&self, var: &str) -> bool {
        self.patterns
            .iter()
            .flat_map(|p| p.positions())
            .any(|t| t.var() == Some(var))
    }
}

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "CONSTRUCT", "ASK",
    "DESCRIBE", "ORDER", "GROUP", "HAVING", "OFFSET", "FROM", "NAMED", "REDUCED", "INSERT",
    "DELETE", "BASE", "EXISTS", "NOT", "LOAD", "CLEAR", "DROP", "CREATE", "WITH", "USING",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    PName(String),
    Str { value: String, datatype: Option<Box<Tok>>, lang: Option<String> },
    Int(String),
    BlankNode,
    Punct(&'static str),
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn syntax(pos: usize, reason: impl Into<String>) -> StoreError {
    StoreError::QuerySyntax {
        position: pos,
        reason: reason.into(),
    }
}

fn unsupported(keyword: impl Into<String>) -> StoreError {
    StoreError::UnsupportedFeature {
        keyword: keyword.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, StoreError> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let is_name = |c: char| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '%');
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        let two: String = bytes[i..].iter().take(2).map(|(_, c)| *c).collect();
        if matches!(two.as_str(), "!=" | "<=" | ">=" | "&&" | "||") {
            return Err(unsupported(format!("operator {two}")));
        }
        match c {
            '<' => {
                let mut j = i + 1;
                let mut iri = String::new();
                while j < bytes.len() && bytes[j].1 != '>' {
                    if bytes[j].1.is_whitespace() {
                        // `<` used as a comparison operator
                        return Err(unsupported("operator <"));
                    }
                    iri.push(bytes[j].1);
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(syntax(pos, "unterminated IRI"));
                }
                out.push(Spanned { tok: Tok::Iri(iri), pos });
                i = j + 1;
            }
            '?' | '$' => {
                let mut j = i + 1;
                let mut name = String::new();
                while j < bytes.len() && (bytes[j].1.is_alphanumeric() || bytes[j].1 == '_') {
                    name.push(bytes[j].1);
                    j += 1;
                }
                if name.is_empty() {
                    return Err(syntax(pos, "empty variable name"));
                }
                out.push(Spanned { tok: Tok::Var(name), pos });
                i = j;
            }
            '"' | '\'' => {
                let quote = c;
                let mut j = i + 1;
                let mut value = String::new();
                loop {
                    let Some(&(_, ch)) = bytes.get(j) else {
                        return Err(syntax(pos, "unterminated string"));
                    };
                    j += 1;
                    if ch == quote {
                        break;
                    }
                    if ch == '\\' {
                        let Some(&(_, esc)) = bytes.get(j) else {
                            return Err(syntax(pos, "unterminated escape"));
                        };
                        j += 1;
                        value.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            'r' => '\r',
                            other => other,
                        });
                    } else {
                        value.push(ch);
                    }
                }
                let mut datatype = None;
                let mut lang = None;
                if bytes.get(j).map(|b| b.1) == Some('^') && bytes.get(j + 1).map(|b| b.1) == Some('^') {
                    let rest = lex_one(&bytes, j + 2)?;
                    match rest {
                        Some((tok @ (Tok::Iri(_) | Tok::PName(_)), next)) => {
                            datatype = Some(Box::new(tok));
                            j = next;
                        }
                        _ => return Err(syntax(pos, "expected datatype after '^^'")),
                    }
                } else if bytes.get(j).map(|b| b.1) == Some('@') {
                    let mut tag = String::new();
                    j += 1;
                    while j < bytes.len() && (bytes[j].1.is_alphanumeric() || bytes[j].1 == '-') {
                        tag.push(bytes[j].1);
                        j += 1;
                    }
                    lang = Some(tag);
                }
                out.push(Spanned {
                    tok: Tok::Str { value, datatype, lang },
                    pos,
                });
                i = j;
            }
            '{' | '}' | '(' | ')' | '=' | '*' | '.' | ',' | ';' | '/' | '|' | '^' | '+' | '!' | '>' | '[' | ']' => {
                let p: &'static str = match c {
                    '{' => "{",
                    '}' => "}",
                    '(' => "(",
                    ')' => ")",
                    '=' => "=",
                    '*' => "*",
                    '.' => ".",
                    ',' => ",",
                    ';' => ";",
                    '/' => "/",
                    '|' => "|",
                    '^' => "^",
                    '+' => "+",
                    '!' => "!",
                    '>' => ">",
                    '[' => "[",
                    _ => "]",
                };
                out.push(Spanned { tok: Tok::Punct(p), pos });
                i += 1;
            }
            _ if c.is_ascii_digit() => {
                let mut j = i;
                let mut digits = String::new();
                while j < bytes.len() && bytes[j].1.is_ascii_digit() {
                    digits.push(bytes[j].1);
                    j += 1;
                }
                out.push(Spanned { tok: Tok::Int(digits), pos });
                i = j;
            }
            '_' if bytes.get(i + 1).map(|b| b.1) == Some(':') => {
                out.push(Spanned { tok: Tok::BlankNode, pos });
                i += 2;
                while i < bytes.len() && is_name(bytes[i].1) {
                    i += 1;
                }
            }
            _ if c.is_alphabetic() || c == ':' => {
                let mut j = i;
                let mut name = String::new();
                while j < bytes.len() && is_name(bytes[j].1) {
                    name.push(bytes[j].1);
                    j += 1;
                }
                // a trailing '.' ends the triple pattern, not the name
                while name.ends_with('.') {
                    name.pop();
                    j -= 1;
                }
                let tok = if name.contains(':') {
                    Tok::PName(name)
                } else {
                    Tok::Word(name)
                };
                out.push(Spanned { tok, pos });
                i = j;
            }
            other => return Err(syntax(pos, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

/// Lexes a single IRI or prefixed name starting at `start` (datatype position).
fn lex_one(bytes: &[(usize, char)], start: usize) -> Result<Option<(Tok, usize)>, StoreError> {
    let Some(&(pos, c)) = bytes.get(start) else {
        return Ok(None);
    };
    if c == '<' {
        let mut j = start + 1;
        let mut iri = String::new();
        while j < bytes.len() && bytes[j].1 != '>' {
            iri.push(bytes[j].1);
            j += 1;
        }
        if j >= bytes.len() {
            return Err(syntax(pos, "unterminated IRI"));
        }
        return Ok(Some((Tok::Iri(iri), j + 1)));
    }
    let mut j = start;
    let mut name = String::new();
    while j < bytes.len() && (bytes[j].1.is_alphanumeric() || matches!(bytes[j].1, '_' | '-' | ':')) {
        name.push(bytes[j].1);
        j += 1;
    }
    if name.contains(':') {
        Ok(Some((Tok::PName(name), j)))
    } else {
        Ok(None)
    }
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
    end: usize,
    prefixes: BTreeMap<String, String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|s| &s.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |s| s.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.at).map(|s| s.tok.clone());
        self.at += 1;
        tok
    }

    fn peek_keyword(&self) -> Option<String> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w.to_ascii_uppercase()),
            _ => None,
        }
    }

    fn check_unsupported(&self) -> Result<(), StoreError> {
        if let Some(word) = self.peek_keyword() {
            if UNSUPPORTED_KEYWORDS.contains(&word.as_str()) {
                return Err(unsupported(word));
            }
        }
        Ok(())
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), StoreError> {
        self.check_unsupported()?;
        if self.peek_keyword().as_deref() == Some(keyword) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {keyword}")))
        }
    }

    fn expect_punct(&mut self, punct: &'static str) -> Result<(), StoreError> {
        if self.peek() == Some(&Tok::Punct(punct)) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected '{punct}'")))
        }
    }

    fn expand(&self, pname: &str, pos: usize) -> Result<Iri, StoreError> {
        let (prefix, local) = pname.split_once(':').expect("prefixed name contains ':'");
        let base = self
            .prefixes
            .get(prefix)
            .ok_or_else(|| syntax(pos, format!("undeclared prefix {prefix:?}")))?;
        Iri::new(format!("{base}{local}")).map_err(|_| syntax(pos, "invalid IRI"))
    }

    fn iri_of(&self, tok: &Tok, pos: usize) -> Result<Iri, StoreError> {
        match tok {
            Tok::Iri(raw) => Iri::new(raw).map_err(|_| syntax(pos, format!("invalid IRI {raw:?}"))),
            Tok::PName(name) => self.expand(name, pos),
            _ => Err(syntax(pos, "expected IRI")),
        }
    }

    fn term(&mut self, predicate_position: bool) -> Result<PatternTerm, StoreError> {
        self.check_unsupported()?;
        let pos = self.pos();
        let tok = self.bump().ok_or_else(|| syntax(pos, "unexpected end of query"))?;
        let term = match &tok {
            Tok::Var(name) => PatternTerm::Var(name.clone()),
            Tok::Iri(_) | Tok::PName(_) => PatternTerm::Term(Term::Iri(self.iri_of(&tok, pos)?)),
            Tok::Word(w) if w == "a" && predicate_position => PatternTerm::Term(Term::Iri(vocab::rdf_type())),
            Tok::Str { value, datatype, lang } => {
                if lang.is_some() {
                    return Err(unsupported("language tag"));
                }
                let datatype = match datatype {
                    Some(dt) => Some(self.iri_of(dt, pos)?),
                    None => None,
                };
                PatternTerm::Term(Term::Literal {
                    value: value.clone(),
                    datatype,
                })
            }
            Tok::Int(digits) => PatternTerm::Term(Term::typed(digits.clone(), vocab::xsd_integer())),
            Tok::BlankNode | Tok::Punct("[") => return Err(unsupported("blank node")),
            Tok::Word(w) => {
                return Err(match w.to_ascii_uppercase().as_str() {
                    "TRUE" | "FALSE" => unsupported("boolean literal"),
                    _ => syntax(pos, format!("unexpected word {w:?}")),
                })
            }
            Tok::Punct("^" | "!") if predicate_position => return Err(unsupported("property path")),
            Tok::Punct(p) => return Err(syntax(pos, format!("unexpected '{p}'"))),
        };
        if predicate_position
            && matches!(self.peek(), Some(Tok::Punct("/" | "|" | "^" | "*" | "+" | "!")))
        {
            return Err(unsupported("property path"));
        }
        Ok(term)
    }

    fn filter(&mut self) -> Result<FilterEq, StoreError> {
        let pos = self.pos();
        self.expect_punct("(")?;
        if let Some(Tok::Word(w)) = self.peek() {
            return Err(unsupported(format!("function {}", w.to_ascii_uppercase())));
        }
        let lhs = self.term(false)?;
        match self.peek() {
            Some(Tok::Punct("=")) => {
                self.bump();
            }
            Some(Tok::Punct(op)) if *op != ")" => return Err(unsupported(format!("operator {op}"))),
            _ => return Err(syntax(self.pos(), "expected '=' in FILTER")),
        }
        let rhs = self.term(false)?;
        self.expect_punct(")")?;
        match (lhs, rhs) {
            (PatternTerm::Var(var), PatternTerm::Term(value)) | (PatternTerm::Term(value), PatternTerm::Var(var)) => {
                Ok(FilterEq { var, value })
            }
            (PatternTerm::Var(_), PatternTerm::Var(_)) => Err(unsupported("variable-to-variable comparison")),
            _ => Err(syntax(pos, "FILTER must compare a variable with a term")),
        }
    }

    fn parse(mut self) -> Result<Query, StoreError> {
        while self.peek_keyword().as_deref() == Some("PREFIX") {
            self.bump();
            let pos = self.pos();
            let name = match self.bump() {
                Some(Tok::PName(n)) if n.ends_with(':') && n.matches(':').count() == 1 => n,
                _ => return Err(syntax(pos, "expected prefix name ending in ':'")),
            };
            let pos = self.pos();
            let base = match self.bump() {
                Some(Tok::Iri(iri)) => iri,
                _ => return Err(syntax(pos, "expected <IRI> after prefix name")),
            };
            Iri::new(&base).map_err(|_| syntax(pos, "invalid IRI"))?;
            self.prefixes.insert(name.trim_end_matches(':').to_string(), base);
        }
        self.expect_keyword("SELECT")?;
        if self.peek_keyword().as_deref() == Some("DISTINCT") {
            self.bump();
        }
        self.check_unsupported()?;
        let selection = if self.peek() == Some(&Tok::Punct("*")) {
            self.bump();
            Selection::All
        } else {
            let mut vars = Vec::new();
            let mut positions = Vec::new();
            while let Some(Tok::Var(v)) = self.peek() {
                positions.push(self.pos());
                vars.push(v.clone());
                self.bump();
            }
            if let Some(Tok::Punct("(")) = self.peek() {
                return Err(unsupported("projection expression"));
            }
            if vars.is_empty() {
                return Err(syntax(self.pos(), "expected '*' or at least one variable after SELECT"));
            }
            Selection::Vars(vars)
        };
        self.check_unsupported()?;
        if self.peek_keyword().as_deref() == Some("WHERE") {
            self.bump();
        }
        self.expect_punct("{")?;
        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        loop {
            self.check_unsupported()?;
            match self.peek() {
                Some(Tok::Punct("}")) => {
                    self.bump();
                    break;
                }
                Some(Tok::Punct("{")) => return Err(unsupported("nested group")),
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {
                    self.bump();
                    filters.push(self.filter()?);
                    if self.peek() == Some(&Tok::Punct(".")) {
                        self.bump();
                    }
                }
                None => return Err(syntax(self.end, "unterminated WHERE block")),
                _ => {
                    let subject = self.term(false)?;
                    let predicate = self.term(true)?;
                    let object = self.term(false)?;
                    let pos = self.pos();
                    if matches!(subject, PatternTerm::Term(Term::Literal { .. }))
                        || matches!(predicate, PatternTerm::Term(Term::Literal { .. }))
                    {
                        return Err(syntax(pos, "literal in subject or predicate position"));
                    }
                    patterns.push(TriplePattern {
                        subject,
                        predicate,
                        object,
                    });
                    match self.peek() {
                        Some(Tok::Punct(".")) => {
                            self.bump();
                        }
                        Some(Tok::Punct("}")) => {}
                        Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {}
                        Some(Tok::Punct(";")) | Some(Tok::Punct(",")) => {
                            return Err(unsupported("predicate-object list"))
                        }
                        _ => {
                            self.check_unsupported()?;
                            return Err(syntax(pos, "expected '.' or '}' after triple pattern"));
                        }
                    }
                }
            }
        }
        let mut limit = None;
        self.check_unsupported()?;
        if self.peek_keyword().as_deref() == Some("LIMIT") {
            self.bump();
            let pos = self.pos();
            match self.bump() {
                Some(Tok::Int(digits)) => {
                    let n: usize = digits.parse().map_err(|_| syntax(pos, "LIMIT out of range"))?;
                    if n == 0 {
                        return Err(syntax(pos, "LIMIT must be a positive integer"));
                    }
                    limit = Some(n);
                }
                _ => return Err(syntax(pos, "expected positive integer after LIMIT")),
            }
        }
        self.check_unsupported()?;
        if self.at < self.toks.len() {
            return Err(syntax(self.pos(), "unexpected trailing input"));
        }
        if patterns.is_empty() {
            return Err(syntax(self.end, "WHERE block needs at least one triple pattern"));
        }
        let query = Query {
            selection,
            patterns,
            filters,
            limit,
        };
        if let Selection::Vars(vars) = &query.selection {
            if let Some(v) = vars.iter().find(|v| !query.mentions(v)) {
                return Err(syntax(0, format!("selected variable ?{v} does not occur in any pattern")));
            }
        }
        if let Some(f) = query.filters.iter().find(|f| !query.mentions(&f.var)) {
            return Err(syntax(0, format!("filter variable ?{} does not occur in any pattern", f.var)));
        }
        Ok(query)
    }
}

/// Parses a query in the supported SPARQL fragment.
pub fn parse_query(text: &str) -> Result<Query, StoreError> {
    let toks = lex(text)?;
    Parser {
        toks,
        at: 0,
        end: text.len(),
        prefixes: BTreeMap::new(),
    }
    .parse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_select() {
        let q = parse_query("SELECT ?x WHERE { ?x <urn:p> <urn:b> . }").unwrap();
        assert_eq!(q.selection, Selection::Vars(vec!["x".into()]));
        assert_eq!(q.patterns.len(), 1);
        assert_eq!(q.patterns[0].predicate, PatternTerm::Term(Term::Iri(Iri::new("urn:p").unwrap())));
    }

    #[test]
    fn prefix_filter_limit() {
        let q = parse_query("PREFIX m: <urn:m:> SELECT ?s ?o WHERE { ?s m:p ?o . FILTER(?o = m:v) } LIMIT 5")
            .unwrap();
        assert_eq!(q.selection, Selection::Vars(vec!["s".into(), "o".into()]));
        assert_eq!(
            q.filters,
            vec![FilterEq {
                var: "o".into(),
                value: Term::Iri(Iri::new("urn:m:v").unwrap())
            }]
        );
        assert_eq!(q.limit, Some(5));
        assert_eq!(
            q.patterns[0].predicate,
            PatternTerm::Term(Term::Iri(Iri::new("urn:m:p").unwrap()))
        );
    }

    #[test]
    fn optional_is_unsupported() {
        let err = parse_query("SELECT ?x WHERE { ?x <urn:p> ?y . OPTIONAL { ?y <urn:q> ?z } }").unwrap_err();
        match err {
            StoreError::UnsupportedFeature { keyword } => assert_eq!(keyword, "OPTIONAL"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_unsupported_constructs() {
        let cases = [
            ("SELECT ?x WHERE { { ?x <urn:p> ?y } UNION { ?x <urn:q> ?y } }", "nested group"),
            ("SELECT ?x WHERE { ?x <urn:p> ?y } ORDER BY ?x", "ORDER"),
            ("SELECT ?x WHERE { ?x <urn:p>/<urn:q> ?y }", "property path"),
            ("SELECT ?x WHERE { ?x <urn:p> ?y . FILTER(?y != <urn:a>) }", "operator !="),
            ("SELECT ?x WHERE { ?x <urn:p> ?y . FILTER(regex(?y, \"a\")) }", "function REGEX"),
            ("ASK { ?x <urn:p> ?y }", "ASK"),
            ("SELECT ?x WHERE { ?x <urn:p> _:b }", "blank node"),
            ("SELECT ?x WHERE { ?x <urn:p> ?y ; <urn:q> ?z }", "predicate-object list"),
        ];
        for (text, keyword) in cases {
            match parse_query(text) {
                Err(StoreError::UnsupportedFeature { keyword: k }) => assert_eq!(k, keyword, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_query("SELECT ?x WHERE { ?x <urn:p> }") {
            Err(StoreError::QuerySyntax { position, .. }) => assert_eq!(position, 29),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_query("SELECT ?z WHERE { ?x <urn:p> ?y }"),
            Err(StoreError::QuerySyntax { .. })
        ));
        assert!(matches!(
            parse_query("SELECT ?x WHERE { }"),
            Err(StoreError::QuerySyntax { .. })
        ));
        assert!(matches!(
            parse_query("SELECT ?x WHERE { ?x u:p ?y }"),
            Err(StoreError::QuerySyntax { .. })
        ));
        assert!(matches!(
            parse_query("SELECT ?x WHERE { ?x <urn:p> ?y } LIMIT 0"),
            Err(StoreError::QuerySyntax { .. })
        ));
    }

    #[test]
    fn star_and_keyword_case() {
        let q = parse_query("select distinct * where { ?a a ?b . ?b <urn:p> \"x\" }").unwrap();
        assert_eq!(q.projected(), vec!["a".to_string(), "b".to_string()]);
        assert_eq!(q.patterns[0].predicate, PatternTerm::Term(Term::Iri(vocab::rdf_type())));
        assert_eq!(q.patterns[1].object, PatternTerm::Term(Term::literal("x")));
    }
}
