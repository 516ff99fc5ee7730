use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Colon,
    Comma,
    Assign,
    Arrow,
    At,
    Tilde,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Gt,
    Ge,
    Bang,
    Amp,
    Pipe,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Number(n) => return write!(f, "number `{n}`"),
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::Semi => "`;`",
            Tok::Colon => "`:`",
            Tok::Comma => "`,`",
            Tok::Assign => "`=`",
            Tok::Arrow => "`->`",
            Tok::At => "`@`",
            Tok::Tilde => "`~`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Star => "`*`",
            Tok::Slash => "`/`",
            Tok::Caret => "`^`",
            Tok::Lt => "`<`",
            Tok::Le => "`<=`",
            Tok::Gt => "`>`",
            Tok::Ge => "`>=`",
            Tok::Bang => "`!`",
            Tok::Amp => "`&`",
            Tok::Pipe => "`|`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
    /// Byte offset of the token start; used to rebuild source spans.
    pub offset: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let at = |i: usize| chars.get(i).map(|p| p.1);
    let offset = |i: usize| chars.get(i).map(|p| p.0).unwrap_or(src.len());
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while let Some(c) = at(i) {
        let start = i;
        let (tl, tc) = (line, col);
        if c == '#' {
            while at(i).is_some_and(|ch| ch != '\n') {
                i += 1;
            }
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && at(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while at(i).is_some_and(|d| d.is_ascii_digit() || d == '.') {
                i += 1;
            }
            if matches!(at(i), Some('e' | 'E')) {
                let sign = usize::from(matches!(at(i + 1), Some('+' | '-')));
                if at(i + 1 + sign).is_some_and(|d| d.is_ascii_digit()) {
                    i += 1 + sign;
                    while at(i).is_some_and(|d| d.is_ascii_digit()) {
                        i += 1;
                    }
                }
            }
            let text = &src[offset(start)..offset(i)];
            let value: f64 = text.parse().map_err(|_| ParseError {
                line: tl,
                col: tc,
                expected: "a number".into(),
                found: format!("`{text}`"),
            })?;
            out.push(Token { tok: Tok::Number(value), line: tl, col: tc, offset: offset(start) });
        } else if c.is_alphabetic() || c == '_' {
            while at(i).is_some_and(|ch| ch.is_alphanumeric() || ch == '_') {
                i += 1;
            }
            let text = &src[offset(start)..offset(i)];
            out.push(Token { tok: Tok::Ident(text.to_string()), line: tl, col: tc, offset: offset(start) });
        } else {
            let two = |second: char, tok: Tok| if at(i + 1) == Some(second) { Some(tok) } else { None };
            let (tok, width) = match c {
                '-' => two('>', Tok::Arrow).map(|t| (t, 2)).unwrap_or((Tok::Minus, 1)),
                '<' => two('=', Tok::Le).map(|t| (t, 2)).unwrap_or((Tok::Lt, 1)),
                '>' => two('=', Tok::Ge).map(|t| (t, 2)).unwrap_or((Tok::Gt, 1)),
                '=' => two('=', Tok::Assign).map(|t| (t, 2)).unwrap_or((Tok::Assign, 1)),
                '{' => (Tok::LBrace, 1),
                '}' => (Tok::RBrace, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '[' => (Tok::LBracket, 1),
                ']' => (Tok::RBracket, 1),
                ';' => (Tok::Semi, 1),
                ':' => (Tok::Colon, 1),
                ',' => (Tok::Comma, 1),
                '@' => (Tok::At, 1),
                '~' => (Tok::Tilde, 1),
                '+' => (Tok::Plus, 1),
                '*' => (Tok::Star, 1),
                '/' => (Tok::Slash, 1),
                '^' => (Tok::Caret, 1),
                '!' | '¬' => (Tok::Bang, 1),
                '&' | '∧' => (Tok::Amp, 1),
                '|' | '∨' => (Tok::Pipe, 1),
                '≤' => (Tok::Le, 1),
                '≥' => (Tok::Ge, 1),
                _ => {
                    return Err(ParseError {
                        line: tl,
                        col: tc,
                        expected: "a token".into(),
                        found: format!("`{c}`"),
                    })
                }
            };
            out.push(Token { tok, line: tl, col: tc, offset: offset(start) });
            i += width;
        }
        for &(_, ch) in &chars[start..i] {
            if ch == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col, offset: src.len() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            toks("x<=1.5e-3 -> 2e2 # trailing"),
            vec![Tok::Ident("x".into()), Tok::Le, Tok::Number(1.5e-3), Tok::Arrow, Tok::Number(200.0), Tok::Eof]
        );
        assert_eq!(toks("2*exp"), vec![Tok::Number(2.0), Tok::Star, Tok::Ident("exp".into()), Tok::Eof]);
        assert_eq!(toks("3e"), vec![Tok::Number(3.0), Tok::Ident("e".into()), Tok::Eof]);
    }

    #[test]
    fn positions_are_one_based() {
        let t = tokenize("a\n  $").unwrap_err();
        assert_eq!((t.line, t.col), (2, 3));
        let ok = tokenize("a\n  b").unwrap();
        assert_eq!((ok[1].line, ok[1].col), (2, 3));
    }
}
