use super::{Alternative, Grammar, GrammarError, Item, ItemKind, Production, Repetition, Spec};
use crate::constraints::{self, StaticConstraint};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    NonTerminal(String),
    Literal(String),
    Define,
    Bar,
    LParen,
    RParen,
    Star,
    Plus,
    Ellipsis,
}

/// A `where` clause: raw constraint text and the line it starts on.
struct WhereClause {
    text: String,
    line: usize,
}

/// Parses grammar DSL source into a grammar plus its static constraints.
pub fn parse_spec(text: &str) -> Result<Spec, GrammarError> {
    if text.trim().is_empty() {
        return Err(GrammarError::Empty);
    }
    let (grammar_part, clauses) = split_where(text);
    let tokens = lex(grammar_part)?;
    let productions = Parser { tokens: &tokens, pos: 0 }.productions()?;
    if productions.is_empty() {
        return Err(GrammarError::Empty);
    }
    let start = if productions.iter().any(|p| p.name == "start") {
        "start".to_string()
    } else {
        productions[0].name.clone()
    };
    let grammar = Grammar::new(productions, &start)?;

    let mut statics: Vec<StaticConstraint> = Vec::new();
    for clause in clauses {
        let parsed = constraints::parse_where_clause(&clause.text, clause.line)
            .map_err(|e| GrammarError::Syntax { line: e.line, message: e.message })?;
        for c in parsed {
            if let Some(name) = c.references().into_iter().find(|r| !grammar.contains(r)) {
                return Err(GrammarError::UndefinedNonterminal { name, line: clause.line });
            }
            statics.push(c);
        }
    }
    Ok(Spec { grammar, constraints: statics })
}

/// Splits off `where` clauses. A clause begins at a line whose first word
/// is `where` and runs until the next such line.
fn split_where(text: &str) -> (&str, Vec<WhereClause>) {
    let mut offset = 0;
    let mut grammar_end = None;
    let mut clauses: Vec<WhereClause> = Vec::new();
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim_start();
        let starts_where = trimmed.starts_with("where")
            && trimmed[5..].chars().next().is_none_or(|c| c.is_whitespace() || c == '(');
        if starts_where {
            grammar_end.get_or_insert(offset);
            let body = &trimmed[5..];
            clauses.push(WhereClause { text: body.to_string(), line: lineno + 1 });
        } else if let Some(last) = clauses.last_mut() {
            last.text.push_str(line);
        }
        offset += line.len();
    }
    (&text[..grammar_end.unwrap_or(text.len())], clauses)
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, GrammarError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let syntax = |line: usize, message: String| GrammarError::Syntax { line, message };
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '<' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '-') {
                    j += 1;
                }
                if j == i + 1 || j >= chars.len() || chars[j] != '>' {
                    return Err(syntax(line, "malformed nonterminal; expected <name>".into()));
                }
                tokens.push((Token::NonTerminal(chars[i + 1..j].iter().collect()), line));
                i = j + 1;
            }
            ':' => {
                if chars.get(i + 1) == Some(&':') && chars.get(i + 2) == Some(&'=') {
                    tokens.push((Token::Define, line));
                    i += 3;
                } else {
                    return Err(syntax(line, "expected `::=`".into()));
                }
            }
            '\'' | '"' => {
                let quote = c;
                let mut value = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => return Err(syntax(line, "unterminated string literal".into())),
                        Some(&q) if q == quote => break,
                        Some('\\') => {
                            let escaped = match chars.get(j + 1) {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('r') => '\r',
                                Some('\\') => '\\',
                                Some('\'') => '\'',
                                Some('"') => '"',
                                Some('0') => '\0',
                                other => {
                                    return Err(syntax(line, format!("unknown escape sequence \\{}", other.copied().unwrap_or(' '))))
                                }
                            };
                            value.push(escaped);
                            j += 2;
                        }
                        Some(&ch) => {
                            value.push(ch);
                            j += 1;
                        }
                    }
                }
                if value.is_empty() {
                    return Err(syntax(line, "empty string literal".into()));
                }
                tokens.push((Token::Literal(value), line));
                i = j + 1;
            }
            '|' => {
                tokens.push((Token::Bar, line));
                i += 1;
            }
            '(' => {
                tokens.push((Token::LParen, line));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, line));
                i += 1;
            }
            '*' => {
                tokens.push((Token::Star, line));
                i += 1;
            }
            '+' => {
                tokens.push((Token::Plus, line));
                i += 1;
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                tokens.push((Token::Ellipsis, line));
                i += 3;
            }
            other => return Err(syntax(line, format!("unexpected character {other:?}"))),
        }
    }
    Ok(tokens)
}

struct Parser<'t> {
    tokens: &'t [(Token, usize)],
    pos: usize,
}

/// An alternative before `...` expansion.
enum RawAlternative {
    Items(Alternative),
    Ellipsis(usize),
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |(_, l)| *l)
    }

    fn at_production_head(&self) -> bool {
        matches!(self.tokens.get(self.pos), Some((Token::NonTerminal(_), _)))
            && matches!(self.tokens.get(self.pos + 1), Some((Token::Define, _)))
    }

    fn error(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax { line: self.line(), message: message.into() }
    }

    fn productions(mut self) -> Result<Vec<Production>, GrammarError> {
        let mut out: Vec<Production> = Vec::new();
        while self.pos < self.tokens.len() {
            let line = self.line();
            let name = match self.peek() {
                Some(Token::NonTerminal(n)) => n.clone(),
                _ => return Err(self.error("expected production head `<name> ::=`")),
            };
            self.pos += 1;
            if self.peek() != Some(&Token::Define) {
                return Err(self.error(format!("expected `::=` after <{name}>")));
            }
            self.pos += 1;
            if out.iter().any(|p| p.name == name) {
                return Err(GrammarError::DuplicateProduction { name, line });
            }
            let alternatives = self.alternatives(false)?;
            out.push(Production { name, alternatives, line });
        }
        Ok(out)
    }

    fn alternatives(&mut self, nested: bool) -> Result<Vec<Alternative>, GrammarError> {
        let mut raw = Vec::new();
        loop {
            if self.peek() == Some(&Token::Ellipsis) {
                raw.push(RawAlternative::Ellipsis(self.line()));
                self.pos += 1;
            } else {
                raw.push(RawAlternative::Items(self.sequence()?));
            }
            if self.peek() == Some(&Token::Bar) {
                self.pos += 1;
                continue;
            }
            break;
        }
        match self.peek() {
            None => {}
            Some(Token::RParen) if nested => {}
            Some(Token::NonTerminal(_)) if !nested && self.at_production_head() => {}
            Some(other) => return Err(self.error(format!("unexpected {other:?}"))),
        }
        expand_ellipses(raw)
    }

    fn sequence(&mut self) -> Result<Alternative, GrammarError> {
        let mut items = Vec::new();
        loop {
            let kind = match self.peek() {
                Some(Token::NonTerminal(n)) if !self.at_production_head() => {
                    let k = ItemKind::NonTerminal(n.clone());
                    self.pos += 1;
                    k
                }
                Some(Token::Literal(s)) => {
                    let k = ItemKind::Terminal(s.clone());
                    self.pos += 1;
                    k
                }
                Some(Token::LParen) => {
                    self.pos += 1;
                    let alts = self.alternatives(true)?;
                    if self.peek() != Some(&Token::RParen) {
                        return Err(self.error("expected `)`"));
                    }
                    self.pos += 1;
                    ItemKind::Group(alts)
                }
                _ => break,
            };
            let repetition = match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    Repetition::Star
                }
                Some(Token::Plus) => {
                    self.pos += 1;
                    Repetition::Plus
                }
                _ => Repetition::None,
            };
            items.push(Item { kind, repetition });
        }
        if items.is_empty() {
            return Err(self.error("empty alternative"));
        }
        Ok(items)
    }
}

fn single_char(alt: &RawAlternative) -> Option<char> {
    match alt {
        RawAlternative::Items(items) if items.len() == 1 && items[0].repetition == Repetition::None => {
            match &items[0].kind {
                ItemKind::Terminal(t) if t.chars().count() == 1 => t.chars().next(),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Expands `'0' | '1' | ... | '9'` into the full character range.
fn expand_ellipses(raw: Vec<RawAlternative>) -> Result<Vec<Alternative>, GrammarError> {
    let mut out = Vec::new();
    for i in 0..raw.len() {
        match &raw[i] {
            RawAlternative::Items(items) => out.push(items.clone()),
            RawAlternative::Ellipsis(line) => {
                let err = |m: &str| GrammarError::Syntax { line: *line, message: m.to_string() };
                let lo = i.checked_sub(1).and_then(|j| single_char(&raw[j]));
                let hi = raw.get(i + 1).and_then(single_char);
                let (Some(lo), Some(hi)) = (lo, hi) else {
                    return Err(err("`...` must sit between single-character literals"));
                };
                if lo >= hi {
                    return Err(err("`...` range bounds out of order"));
                }
                let (start, end) = (lo as u32 + 1, hi as u32);
                for code in start..end {
                    if let Some(c) = char::from_u32(code) {
                        out.push(vec![Item::terminal(c.to_string())]);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG1: &str = "<start>  ::= <header> '\\n' <rows>
<header> ::= 'age' ', ' 'job' ', ' 'income'
<rows>   ::= (<row> '\\n')*
<row>    ::= <age> ', ' <job> ', ' <income>
<age>    ::= <digit>+
<job>    ::= 'librarian' | 'neurosurgeon' | 'president'
<income> ::= <digit>+
<digit>  ::= '0' | '1' | ... | '9'

where int(<age>) > 18 & int(<age>) < 70
";

    #[test]
    fn parses_example_spec() {
        let spec = parse_spec(FIG1).unwrap();
        let g = &spec.grammar;
        let names: Vec<&str> = g.nonterminals().collect();
        assert_eq!(names, ["start", "header", "rows", "row", "age", "job", "income", "digit"]);
        assert_eq!(g.start_symbol(), "start");
        let digits = g.alternatives("digit").unwrap();
        assert_eq!(digits.len(), 10);
        assert_eq!(digits[5], vec![Item::terminal("5")]);
        assert_eq!(spec.constraints.len(), 2);
        let jobs = g.finite_language("job", 100).unwrap();
        assert_eq!(jobs, ["librarian", "neurosurgeon", "president"]);
    }

    #[test]
    fn minimal_grammar() {
        let spec = parse_spec("<start> ::= 'a'").unwrap();
        assert_eq!(spec.grammar.nonterminals().count(), 1);
        assert_eq!(spec.grammar.terminals().len(), 1);
        assert!(spec.constraints.is_empty());
    }

    #[test]
    fn missing_nonterminal_is_reported() {
        let text: String = FIG1.lines().filter(|l| !l.starts_with("<job>")).collect::<Vec<_>>().join("\n");
        let err = parse_spec(&text).unwrap_err();
        assert_eq!(err.to_string(), "line 4: undefined nonterminal <job>");
    }

    #[test]
    fn duplicate_production() {
        let err = parse_spec("<a> ::= 'x'\n<a> ::= 'y'\n").unwrap_err();
        assert!(matches!(err, GrammarError::DuplicateProduction { ref name, line: 2 } if name == "a"));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_spec("<a> ::= 'x'\n<b> ::= 'y' ]\n").unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { line: 2, .. }), "{err}");
        let err = parse_spec("<a> ::= 'x\n").unwrap_err();
        assert!(matches!(err, GrammarError::Syntax { line: 1, .. }));
    }

    #[test]
    fn constraint_with_unknown_reference() {
        let err = parse_spec("<a> ::= 'x'\nwhere int(<b>) > 3\n").unwrap_err();
        assert!(matches!(err, GrammarError::UndefinedNonterminal { ref name, .. } if name == "b"));
    }

    #[test]
    fn comments_and_multiline_productions() {
        let spec = parse_spec("# header\n<a> ::= 'x' # trailing\n   | 'y'\n<b> ::= <a>+\n").unwrap();
        assert_eq!(spec.grammar.alternatives("a").unwrap().len(), 2);
        assert_eq!(spec.grammar.start_symbol(), "a");
    }

    #[test]
    fn bad_ellipsis() {
        assert!(parse_spec("<d> ::= 'ab' | ... | 'z'").is_err());
        assert!(parse_spec("<d> ::= 'z' | ... | 'a'").is_err());
    }
}
