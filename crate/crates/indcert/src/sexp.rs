//! Minimal s-expression reader shared by the input parser, the solver reply
//! parser, and the certificate format.

use std::fmt;

/// Source position, 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items, _) => Some(items),
            Sexp::Atom(..) => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(s, _) => write!(f, "{s}"),
            Sexp::List(items, _) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {msg}")]
pub struct SexpError {
    pub pos: Pos,
    pub msg: String,
}

struct Reader<'a> {
    input: &'a [u8],
    idx: usize,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(input: &'a str) -> Self {
        Reader { input: input.as_bytes(), idx: 0, line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.idx).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.idx += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b';' => {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn read(&mut self) -> Result<Sexp, SexpError> {
        self.skip_trivia();
        let pos = self.pos();
        match self.peek() {
            None => Err(SexpError { pos, msg: "unexpected end of input".into() }),
            Some(b'(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.peek() {
                        None => {
                            return Err(SexpError { pos: self.pos(), msg: "unclosed '('".into() })
                        }
                        Some(b')') => {
                            self.bump();
                            return Ok(Sexp::List(items, pos));
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
            }
            Some(b')') => Err(SexpError { pos, msg: "unexpected ')'".into() }),
            Some(b'"') => {
                self.bump();
                let mut s = String::from("\"");
                loop {
                    match self.bump() {
                        None => {
                            return Err(SexpError { pos: self.pos(), msg: "unclosed string".into() })
                        }
                        Some(b'"') => {
                            s.push('"');
                            return Ok(Sexp::Atom(s, pos));
                        }
                        Some(c) => s.push(c as char),
                    }
                }
            }
            Some(_) => {
                let mut s = String::new();
                while let Some(c) = self.peek() {
                    if matches!(c, b' ' | b'\t' | b'\r' | b'\n' | b'(' | b')' | b';') {
                        break;
                    }
                    s.push(c as char);
                    self.bump();
                }
                Ok(Sexp::Atom(s, pos))
            }
        }
    }
}

/// Reads every s-expression in `input`.
pub fn parse_all(input: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut r = Reader::new(input);
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.peek().is_none() {
            return Ok(out);
        }
        out.push(r.read()?);
    }
}

/// Reads exactly one s-expression, rejecting trailing content.
pub fn parse_one(input: &str) -> Result<Sexp, SexpError> {
    let mut r = Reader::new(input);
    let sexp = r.read()?;
    r.skip_trivia();
    if r.peek().is_some() {
        return Err(SexpError { pos: r.pos(), msg: "trailing content after s-expression".into() });
    }
    Ok(sexp)
}
