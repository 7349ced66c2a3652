use super::parser::ParseError;
use super::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(u64),
    Punct(char),
    Hash,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Hash => "`#`".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }
}

const PUNCT: &[char] = &[
    '{', '}', '(', ')', '[', ']', ';', ',', '*', ':', '=', '&', '.',
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        let span = cur.span();
        let Some(c) = cur.peek() else {
            out.push(Token {
                tok: Tok::Eof,
                span,
            });
            return Ok(out);
        };
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' {
            cur.bump();
            match cur.peek() {
                Some('/') => {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                }
                Some('*') => {
                    cur.bump();
                    let mut prev = '\0';
                    loop {
                        match cur.bump() {
                            Some('/') if prev == '*' => break,
                            Some(c) => prev = c,
                            None => {
                                return Err(ParseError::Syntax {
                                    span,
                                    expected: vec!["`*/`".into()],
                                    found: "unterminated comment".into(),
                                })
                            }
                        }
                    }
                }
                _ => {
                    return Err(ParseError::Syntax {
                        span,
                        expected: vec!["declaration".into()],
                        found: "`/`".into(),
                    })
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    ident.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            out.push(Token {
                tok: Tok::Ident(ident),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() {
                    digits.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            let value = parse_int(&digits).ok_or_else(|| ParseError::Syntax {
                span,
                expected: vec!["integer literal".into()],
                found: format!("`{digits}`"),
            })?;
            out.push(Token {
                tok: Tok::Int(value),
                span,
            });
            continue;
        }
        cur.bump();
        let tok = if c == '#' {
            // only `#pragma` is part of the grammar; reject other directives
            // before their operands trip up tokenization
            let rest: String = cur
                .chars
                .clone()
                .skip_while(|c| *c == ' ' || *c == '\t')
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            if rest != "pragma" {
                return Err(ParseError::UnsupportedFeature {
                    feature: format!("preprocessor directive `#{rest}`"),
                    span,
                });
            }
            Tok::Hash
        } else if PUNCT.contains(&c) {
            Tok::Punct(c)
        } else {
            return Err(ParseError::Syntax {
                span,
                expected: vec!["declaration".into()],
                found: format!("`{c}`"),
            });
        };
        out.push(Token { tok, span });
    }
}

fn parse_int(digits: &str) -> Option<u64> {
    if let Some(hex) = digits
        .strip_prefix("0x")
        .or_else(|| digits.strip_prefix("0X"))
    {
        u64::from_str_radix(hex, 16).ok()
    } else {
        digits.parse().ok()
    }
}
