//! Tokenizer. Never fails: unknown input becomes [`TokenKind::Error`] tokens
//! that the parser reports.

use super::ast::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    KwRule,
    KwTrigger,
    KwCondition,
    KwThen,
    KwUntil,
    KwEnd,
    Ident(String),
    Number(f64),
    Str(String),
    Bang,
    LParen,
    RParen,
    Comma,
    Semi,
    Error(String),
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::KwRule => "`rule`".into(),
            TokenKind::KwTrigger => "`trigger`".into(),
            TokenKind::KwCondition => "`condition`".into(),
            TokenKind::KwThen => "`then`".into(),
            TokenKind::KwUntil => "`until`".into(),
            TokenKind::KwEnd => "`end`".into(),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::Str(_) => "string".into(),
            TokenKind::Bang => "`!`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::Error(m) => format!("invalid input ({m})"),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tokenize `text`. The result always ends with an `Eof` token; comments
/// (`#` to end of line) and whitespace are dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, col) = (cur.line, cur.col);
        let kind = match c {
            c if c.is_whitespace() => {
                cur.bump();
                continue;
            }
            '#' => {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
                continue;
            }
            '!' => {
                cur.bump();
                TokenKind::Bang
            }
            '(' => {
                cur.bump();
                TokenKind::LParen
            }
            ')' => {
                cur.bump();
                TokenKind::RParen
            }
            ',' => {
                cur.bump();
                TokenKind::Comma
            }
            ';' => {
                cur.bump();
                TokenKind::Semi
            }
            '"' => lex_string(&mut cur),
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => lex_number(&mut cur),
            c if is_ident_start(c) => {
                let mut s = String::new();
                while let Some(c) = cur.peek() {
                    if is_ident_continue(c) {
                        s.push(c);
                        cur.bump();
                    } else if c == '-' && !s.is_empty() {
                        // `re-planning` style names: a hyphen joins two words.
                        let mut look = cur.chars.clone();
                        look.next();
                        match look.next() {
                            Some(n) if n.is_ascii_alphabetic() => {
                                s.push('-');
                                cur.bump();
                            }
                            _ => break,
                        }
                    } else {
                        break;
                    }
                }
                keyword(&s).unwrap_or(TokenKind::Ident(s))
            }
            other => {
                cur.bump();
                TokenKind::Error(format!("unexpected character `{other}`"))
            }
        };
        out.push(Token {
            kind,
            span: Span::new(line, col, cur.line, cur.col),
        });
    }
    out.push(Token {
        kind: TokenKind::Eof,
        span: Span::new(cur.line, cur.col, cur.line, cur.col),
    });
    out
}

fn keyword(s: &str) -> Option<TokenKind> {
    Some(match s {
        "rule" => TokenKind::KwRule,
        "trigger" => TokenKind::KwTrigger,
        "condition" => TokenKind::KwCondition,
        "then" => TokenKind::KwThen,
        "until" => TokenKind::KwUntil,
        "end" => TokenKind::KwEnd,
        _ => return None,
    })
}

fn lex_string(cur: &mut Cursor<'_>) -> TokenKind {
    cur.bump();
    let mut s = String::new();
    loop {
        match cur.bump() {
            None | Some('\n') => return TokenKind::Error("unterminated string".into()),
            Some('"') => return TokenKind::Str(s),
            Some('\\') => match cur.bump() {
                Some('n') => s.push('\n'),
                Some('t') => s.push('\t'),
                Some(c @ ('"' | '\\')) => s.push(c),
                Some(c) => {
                    s.push('\\');
                    s.push(c);
                }
                None => return TokenKind::Error("unterminated string".into()),
            },
            Some(c) => s.push(c),
        }
    }
}

fn lex_number(cur: &mut Cursor<'_>) -> TokenKind {
    let mut s = String::new();
    if let Some(c @ ('-' | '+')) = cur.peek() {
        s.push(c);
        cur.bump();
    }
    let mut seen_dot = false;
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            s.push(c);
        } else if c == '.' && !seen_dot {
            seen_dot = true;
            s.push(c);
        } else {
            break;
        }
        cur.bump();
    }
    // swallow trailing identifier characters so `12abc` is one bad token
    let mut junk = false;
    while let Some(c) = cur.peek() {
        if is_ident_continue(c) || c == '.' {
            junk = true;
            s.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if junk {
        return TokenKind::Error(format!("malformed number `{s}`"));
    }
    match s.parse::<f64>() {
        Ok(n) if n.is_finite() => TokenKind::Number(n),
        _ => TokenKind::Error(format!("malformed number `{s}`")),
    }
}
