//! Architecture strings such as `c(16,4,2).c(32,4,2).f(100).f(10)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::PoolKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    /// `c(channels, kernel, stride)`
    Conv { channels: usize, kernel: usize, stride: usize },
    /// `p(av|max, window, stride)`
    Pool { kind: PoolKind, window: usize, stride: usize },
    /// `f(units)`
    Fc { units: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub tokens: Vec<Token>,
}

impl ArchSpec {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        let spec = ArchSpec { tokens };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Shape("architecture has no layers".into()));
        }
        let mut seen_fc = false;
        for (i, tok) in self.tokens.iter().enumerate() {
            match *tok {
                Token::Conv { channels, kernel, stride } => {
                    if seen_fc {
                        return Err(Error::Shape(format!("layer {i}: convolution after a fully connected layer")));
                    }
                    if channels == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::Shape(format!("layer {i}: zero size in convolution")));
                    }
                }
                Token::Pool { window, stride, .. } => {
                    if !matches!(i.checked_sub(1).map(|j| self.tokens[j]), Some(Token::Conv { .. })) {
                        return Err(Error::Shape(format!("layer {i}: pooling must follow a convolution")));
                    }
                    if stride == 0 || window < stride {
                        return Err(Error::Shape(format!("layer {i}: pooling window {window} below stride {stride}")));
                    }
                }
                Token::Fc { units } => {
                    if units == 0 {
                        return Err(Error::Shape(format!("layer {i}: zero units")));
                    }
                    seen_fc = true;
                }
            }
        }
        Ok(())
    }

    /// Index of the first fully connected token, where the implicit flatten sits.
    pub fn flatten_at(&self) -> Option<usize> {
        self.tokens.iter().position(|t| matches!(t, Token::Fc { .. }))
    }

    pub fn has_spatial(&self) -> bool {
        self.tokens.iter().any(|t| !matches!(t, Token::Fc { .. }))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Conv { channels, kernel, stride } => write!(f, "c({channels},{kernel},{stride})"),
            Token::Pool { kind, window, stride } => {
                let k = match kind {
                    PoolKind::Average => "av",
                    PoolKind::Max => "max",
                };
                write!(f, "p({k},{window},{stride})")
            }
            Token::Fc { units } => write!(f, "f({units})"),
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

pub fn render(spec: &ArchSpec) -> String {
    format!("{spec}")
}

struct Lexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Lexer<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn word(&mut self) -> &str {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn int(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        let txt = core::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        txt.parse().map_err(|_| Error::Syntax { pos: start, msg: format!("integer '{txt}' out of range") })
    }

    /// Comma-separated integers up to the closing parenthesis.
    fn args(&mut self, n: usize, name: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.skip_ws();
                if self.s.get(self.pos) == Some(&b')') {
                    return Err(self.err(format!("{name}(...) takes {n} arguments, got {i}")));
                }
                self.expect(b',')?;
            }
            out.push(self.int()?);
        }
        self.skip_ws();
        if self.s.get(self.pos) == Some(&b',') {
            return Err(self.err(format!("{name}(...) takes {n} arguments")));
        }
        self.expect(b')')?;
        Ok(out)
    }
}

/// Parses a dot-separated architecture string.
pub fn parse_arch(s: &str) -> Result<ArchSpec> {
    let mut lx = Lexer { s: s.as_bytes(), pos: 0 };
    let mut tokens = Vec::new();
    loop {
        let start = lx.pos;
        let name = String::from(lx.word());
        let tok = match name.as_str() {
            "c" => {
                lx.expect(b'(')?;
                let a = lx.args(3, "c")?;
                Token::Conv { channels: a[0], kernel: a[1], stride: a[2] }
            }
            "f" => {
                lx.expect(b'(')?;
                let a = lx.args(1, "f")?;
                Token::Fc { units: a[0] }
            }
            "p" => {
                lx.expect(b'(')?;
                let kpos = lx.pos;
                let kind = match lx.word() {
                    "av" => PoolKind::Average,
                    "max" => PoolKind::Max,
                    other => {
                        let msg = format!("unknown pooling kind '{other}'");
                        return Err(Error::Syntax { pos: kpos, msg });
                    }
                };
                lx.expect(b',')?;
                let window = lx.int()?;
                lx.expect(b',')?;
                let stride = lx.int()?;
                lx.expect(b')')?;
                Token::Pool { kind, window, stride }
            }
            "" => return Err(Error::Syntax { pos: start, msg: "expected a layer token".into() }),
            other => return Err(Error::Syntax { pos: start, msg: format!("unknown layer '{other}'") }),
        };
        tokens.push(tok);
        lx.skip_ws();
        match lx.s.get(lx.pos) {
            None => break,
            Some(b'.') => lx.pos += 1,
            Some(_) => return Err(lx.err("expected '.' between layers")),
        }
    }
    ArchSpec::new(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_conv_two_fc() {
        let a = parse_arch("c(16,4,2).c(32,4,2).f(100).f(10)").unwrap();
        assert_eq!(a.tokens.len(), 4);
        assert_eq!(a.tokens[1], Token::Conv { channels: 32, kernel: 4, stride: 2 });
        assert_eq!(a.flatten_at(), Some(2));
    }

    #[test]
    fn with_pooling() {
        let s = "c(16,4,1).p(av,2,2).c(32,4,1).p(av,2,2).f(100).f(10)";
        let a = parse_arch(s).unwrap();
        assert_eq!(a.tokens[1], Token::Pool { kind: PoolKind::Average, window: 2, stride: 2 });
        assert_eq!(render(&a), s);
        assert_eq!(parse_arch(&render(&a)).unwrap(), a);
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_arch("c(16,4)"), Err(Error::Syntax { pos: 6, .. })));
        assert!(matches!(parse_arch("c(16,4,2,1)"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_arch("x(3)"), Err(Error::Syntax { pos: 0, .. })));
        assert!(matches!(parse_arch("f(3)..f(2)"), Err(Error::Syntax { pos: 5, .. })));
        assert!(matches!(parse_arch("p(mean,2,2)"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_arch(""), Err(Error::Syntax { .. })));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(parse_arch("f(10).c(3,3,1)"), Err(Error::Shape(_))));
        assert!(matches!(parse_arch("p(max,2,2).f(10)"), Err(Error::Shape(_))));
        assert!(matches!(parse_arch("c(3,3,1).p(max,1,2).f(2)"), Err(Error::Shape(_))));
    }

    #[test]
    fn whitespace_is_tolerated() {
        assert_eq!(parse_arch(" f( 2 ) . f(1) ").unwrap(), parse_arch("f(2).f(1)").unwrap());
    }
}
