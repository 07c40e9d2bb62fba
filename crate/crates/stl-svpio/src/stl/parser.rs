//! Recursive-descent parser for the formula grammar.

use crate::{Error, Result};

use super::{Formula, Interval};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    True,
    Not,
    And,
    Or,
    Implies,
    Until,
    Eventually,
    Always,
    Ident(String),
    Int(usize),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Minus,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::True => "`TRUE`".into(),
            Tok::Not => "`not`".into(),
            Tok::And => "`and`".into(),
            Tok::Or => "`or`".into(),
            Tok::Implies => "`implies`".into(),
            Tok::Until => "`U`".into(),
            Tok::Eventually => "`F`".into(),
            Tok::Always => "`G`".into(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            chars: src.char_indices().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let item = self.chars.next();
        if let Some((_, c)) = item {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        item
    }

    fn tokens(mut self) -> Result<Vec<(Tok, Pos)>> {
        let mut out = Vec::new();
        loop {
            while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
                self.bump();
            }
            let pos = Pos {
                line: self.line,
                col: self.col,
            };
            let Some(&(start, c)) = self.chars.peek() else {
                out.push((Tok::Eof, pos));
                return Ok(out);
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                '[' => {
                    self.bump();
                    Tok::LBracket
                }
                ']' => {
                    self.bump();
                    Tok::RBracket
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '-' => {
                    self.bump();
                    Tok::Minus
                }
                c if c.is_ascii_digit() => {
                    let mut end = start;
                    while matches!(self.chars.peek(), Some((_, c)) if c.is_ascii_digit()) {
                        end = self.bump().unwrap().0;
                    }
                    let text = &self.src[start..=end];
                    let value = text.parse::<usize>().map_err(|_| Error::Syntax {
                        line: pos.line,
                        col: pos.col,
                        msg: format!("integer `{text}` out of range"),
                    })?;
                    Tok::Int(value)
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut end = start;
                    while matches!(self.chars.peek(), Some((_, c))
                        if c.is_ascii_alphanumeric() || *c == '_')
                    {
                        end = self.bump().unwrap().0;
                    }
                    match &self.src[start..=end] {
                        "TRUE" => Tok::True,
                        "not" => Tok::Not,
                        "and" => Tok::And,
                        "or" => Tok::Or,
                        "implies" => Tok::Implies,
                        "U" => Tok::Until,
                        "F" => Tok::Eventually,
                        "G" => Tok::Always,
                        ident => Tok::Ident(ident.to_string()),
                    }
                }
                other => {
                    return Err(Error::Syntax {
                        line: pos.line,
                        col: pos.col,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            };
            out.push((tok, pos));
        }
    }
}

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.idx].0
    }

    fn pos(&self) -> Pos {
        self.tokens[self.idx].1
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.idx].0.clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        tok
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        let pos = self.pos();
        Error::Syntax {
            line: pos.line,
            col: pos.col,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    // implies: right-associative, loosest.
    fn parse_implies(&mut self) -> Result<Formula> {
        let lhs = self.parse_or()?;
        if *self.peek() == Tok::Implies {
            self.advance();
            let rhs = self.parse_implies()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    // or: left-associative, flattened into one n-ary node.
    fn parse_or(&mut self) -> Result<Formula> {
        let first = self.parse_and()?;
        if *self.peek() != Tok::Or {
            return Ok(first);
        }
        let mut children = vec![first];
        while *self.peek() == Tok::Or {
            self.advance();
            children.push(self.parse_and()?);
        }
        Ok(Formula::Or(children))
    }

    fn parse_and(&mut self) -> Result<Formula> {
        let first = self.parse_until()?;
        if *self.peek() != Tok::And {
            return Ok(first);
        }
        let mut children = vec![first];
        while *self.peek() == Tok::And {
            self.advance();
            children.push(self.parse_until()?);
        }
        Ok(Formula::And(children))
    }

    // U binds tighter than `and`, right-associative.
    fn parse_until(&mut self) -> Result<Formula> {
        let lhs = self.parse_unary()?;
        if *self.peek() == Tok::Until {
            self.advance();
            let interval = self.parse_interval()?;
            let rhs = self.parse_until()?;
            Ok(Formula::until(interval, lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_unary(&mut self) -> Result<Formula> {
        match self.peek() {
            Tok::Not => {
                self.advance();
                Ok(Formula::not(self.parse_unary()?))
            }
            Tok::Eventually => {
                self.advance();
                let interval = self.parse_interval()?;
                Ok(Formula::eventually(interval, self.parse_unary()?))
            }
            Tok::Always => {
                self.advance();
                let interval = self.parse_interval()?;
                Ok(Formula::always(interval, self.parse_unary()?))
            }
            _ => self.parse_atom(),
        }
    }

    fn parse_atom(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::True => {
                self.advance();
                Ok(Formula::True)
            }
            Tok::Ident(name) => {
                self.advance();
                Ok(Formula::Pred(name))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.parse_implies()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(self.error(format!("expected formula, found {}", other.describe()))),
        }
    }

    fn parse_interval(&mut self) -> Result<Interval> {
        let open = self.pos();
        self.expect(Tok::LBracket)?;
        let lo = self.parse_bound()?;
        self.expect(Tok::Comma)?;
        let hi = self.parse_bound()?;
        self.expect(Tok::RBracket)?;
        if lo > hi {
            return Err(Error::IntervalOrder {
                lo,
                hi,
                line: open.line,
                col: open.col,
            });
        }
        Ok(Interval { lo, hi })
    }

    fn parse_bound(&mut self) -> Result<usize> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(n)
            }
            Tok::Minus => Err(self.error("interval bounds must be nonnegative")),
            other => Err(self.error(format!(
                "expected interval bound, found {}",
                other.describe()
            ))),
        }
    }
}

/// Parses formula text into an AST.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let tokens = Lexer::new(text).tokens()?;
    let mut parser = Parser { tokens, idx: 0 };
    let formula = parser.parse_implies()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.error(format!(
            "expected end of input, found {}",
            parser.peek().describe()
        )));
    }
    Ok(formula)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::pretty_print;

    fn iv(lo: usize, hi: usize) -> Interval {
        Interval { lo, hi }
    }

    #[test]
    fn parses_reach_avoid_shape() {
        let f = parse_formula("G[0,50] avoid1 and F[0,50] in_goal").unwrap();
        let expected = Formula::and(vec![
            Formula::always(iv(0, 50), Formula::pred("avoid1")),
            Formula::eventually(iv(0, 50), Formula::pred("in_goal")),
        ]);
        assert_eq!(f, expected);
    }

    #[test]
    fn parses_true_atom() {
        assert_eq!(parse_formula("TRUE").unwrap(), Formula::True);
    }

    #[test]
    fn parses_gated_until() {
        let f = parse_formula("(not in_c) U[0,100] in_b").unwrap();
        let expected = Formula::until(
            iv(0, 100),
            Formula::not(Formula::pred("in_c")),
            Formula::pred("in_b"),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn until_binds_tighter_than_and() {
        let f = parse_formula("a U[0,1] b and c").unwrap();
        let expected = Formula::and(vec![
            Formula::until(iv(0, 1), Formula::pred("a"), Formula::pred("b")),
            Formula::pred("c"),
        ]);
        assert_eq!(f, expected);
    }

    #[test]
    fn until_is_right_associative() {
        let f = parse_formula("a U[0,1] b U[1,2] c").unwrap();
        let expected = Formula::until(
            iv(0, 1),
            Formula::pred("a"),
            Formula::until(iv(1, 2), Formula::pred("b"), Formula::pred("c")),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn implies_is_right_associative() {
        let f = parse_formula("a implies b implies c").unwrap();
        let expected = Formula::implies(
            Formula::pred("a"),
            Formula::implies(Formula::pred("b"), Formula::pred("c")),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn nary_conjunction_is_flat() {
        let f = parse_formula("a and b and c").unwrap();
        assert_eq!(
            f,
            Formula::And(vec![
                Formula::pred("a"),
                Formula::pred("b"),
                Formula::pred("c")
            ])
        );
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_formula("G[0,5] and p").unwrap_err();
        match err {
            crate::Error::Syntax { line, col, .. } => {
                assert_eq!(line, 1);
                assert_eq!(col, 8);
            }
            other => panic!("unexpected error: {other}"),
        }
        let err = parse_formula("a and\n  (b or)").unwrap_err();
        match err {
            crate::Error::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 8);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn interval_order_rejected() {
        let err = parse_formula("G[5,2] p").unwrap_err();
        match err {
            crate::Error::IntervalOrder { lo, hi, .. } => {
                assert_eq!((lo, hi), (5, 2));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn negative_interval_bound_rejected() {
        let err = parse_formula("F[-1,3] p").unwrap_err();
        match err {
            crate::Error::Syntax { msg, .. } => {
                assert!(msg.contains("nonnegative"), "got: {msg}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn keywords_are_not_identifiers() {
        assert!(parse_formula("not").is_err());
        assert!(parse_formula("G[0,1] U").is_err());
    }

    #[test]
    fn print_examples() {
        assert_eq!(pretty_print(&Formula::True), "TRUE");
        assert_eq!(pretty_print(&Formula::not(Formula::pred("p"))), "not p");
        assert_eq!(
            pretty_print(&Formula::eventually(iv(0, 5), Formula::pred("g"))),
            "F[0,5] g"
        );
    }
}
