//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-2^2`
//! is `-(2^2)` and `2^3^2` is `2^(3^2)`.

use super::{BinOp, Expr, ExprKind, Func, ParseError, Span, Var, VarContext};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, start, end: i + 1 });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                position: start + 1,
                found: format!("malformed number '{text}'"),
                expected: vec!["number".into()],
            })?;
            out.push(Token { tok: Tok::Num(value), start, end: i });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(src[start..i].to_string()), start, end: i });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(ParseError::Syntax {
            position: start + 1,
            found: format!("character '{ch}'"),
            expected: vec!["expression".into()],
        });
    }
    out.push(Token { tok: Tok::End, start: src.len(), end: src.len() });
    Ok(out)
}

fn lookup_variable(name: &str, ctx: &VarContext) -> Option<Result<Var, usize>> {
    let (family, digits): (fn(usize) -> Var, &str) = if let Some(rest) = name.strip_prefix("phi") {
        (Var::Phi, rest)
    } else if let Some(rest) = name.strip_prefix('x') {
        (Var::X, rest)
    } else if let Some(rest) = name.strip_prefix('y') {
        (Var::Y, rest)
    } else if let Some(rest) = name.strip_prefix('t') {
        (Var::T, rest)
    } else {
        (Var::I, name.strip_prefix('I')?)
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    let var = family(index - 1);
    let declared = ctx.declared(var);
    Some(if index <= declared { Ok(var) } else { Err(declared) })
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    ctx: &'a VarContext,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            position: t.start + 1,
            found: t.tok.describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&[name]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Minus {
            let start = self.bump().start;
            let inner = self.unary()?;
            let span = Span { start, end: inner.span.end };
            return Ok(Expr { kind: ExprKind::Neg(Box::new(inner)), span });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let token = self.peek().clone();
        match token.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Num(v), span: Span { start: token.start, end: token.end } })
            }
            Tok::LParen => {
                self.bump();
                let mut inner = self.expr()?;
                let close = self.expect(Tok::RParen, "')'")?;
                inner.span = Span { start: token.start, end: close.end };
                Ok(inner)
            }
            Tok::Ident(ref name) => {
                self.bump();
                if let Some(func) = Func::from_name(name) {
                    return self.call(func, token.start);
                }
                match lookup_variable(name, self.ctx) {
                    Some(Ok(var)) => Ok(Expr {
                        kind: ExprKind::Var(var),
                        span: Span { start: token.start, end: token.end },
                    }),
                    Some(Err(declared)) => Err(ParseError::VariableOutOfRange {
                        name: name.clone(),
                        position: token.start + 1,
                        declared,
                    }),
                    None => Err(ParseError::UnknownIdentifier { name: name.clone(), position: token.start + 1 }),
                }
            }
            _ => Err(self.error(&["number", "variable", "function", "'('", "'-'"])),
        }
    }

    fn call(&mut self, func: Func, start: usize) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = vec![self.expr()?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        let close = self.expect(Tok::RParen, "')'")?;
        if args.len() != func.arity() {
            return Err(ParseError::Arity {
                function: func.name().to_string(),
                expected: func.arity(),
                got: args.len(),
                position: start + 1,
            });
        }
        Ok(Expr { kind: ExprKind::Call(func, args), span: Span { start, end: close.end } })
    }
}

pub(super) fn parse(src: &str, ctx: &VarContext) -> Result<Expr, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0, ctx };
    let e = p.expr()?;
    if p.peek().tok != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}
