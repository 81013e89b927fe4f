//! Permissive, line-aware Python lexer.
//!
//! The lexer does not validate grammar. It produces a plausible token stream
//! where every lexeme keeps its source position, comments included, so that
//! context windows can be cut out of it by line number.
//!
//! Handles:
//! - names, keywords, numeric literals (ints, floats, imaginary, hex/oct/bin)
//! - every string form (prefixes, single/triple quotes) as one token
//! - comments as tokens
//! - NEWLINE at the end of each logical line, INDENT/DEDENT via a stack
//! - implicit continuation inside brackets and explicit `\` continuation
//!
//! Columns are byte offsets into the line. A token spanning several physical
//! lines (a triple-quoted string) is positioned at its starting line.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("source is not valid UTF-8 (first bad byte at offset {offset})")]
    Encoding { offset: usize },
    #[error("unterminated string literal starting on line {line}")]
    UnterminatedString { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Name,
    Number,
    String,
    Operator,
    Punctuation,
    Keyword,
    Comment,
    Newline,
    Indent,
    Dedent,
}

impl TokenKind {
    /// Newline, indent and dedent tokens carry no lexical content.
    pub fn is_synthetic(self) -> bool {
        matches!(self, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Name => "name",
            TokenKind::Number => "number",
            TokenKind::String => "string",
            TokenKind::Operator => "operator",
            TokenKind::Punctuation => "punctuation",
            TokenKind::Keyword => "keyword",
            TokenKind::Comment => "comment",
            TokenKind::Newline => "newline",
            TokenKind::Indent => "indent",
            TokenKind::Dedent => "dedent",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based line number.
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Token {
    pub fn is_synthetic(&self) -> bool {
        self.kind.is_synthetic()
    }

    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const OPERATORS_3: &[&str] = &["**=", "//=", ">>=", "<<=", "..."];
const OPERATORS_2: &[&str] = &[
    "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "->", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "@=", ":=",
];

/// Tokenize raw bytes, rejecting malformed UTF-8.
pub fn tokenize_bytes(source: &[u8]) -> Result<Vec<Token>, LexError> {
    let text = std::str::from_utf8(source).map_err(|e| LexError::Encoding {
        offset: e.valid_up_to(),
    })?;
    tokenize(text)
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    Lexer::new(source).run()
}

/// The contiguous run of tokens starting on `line`.
pub fn tokens_on_line(tokens: &[Token], line: usize) -> &[Token] {
    let start = tokens.partition_point(|t| t.line < line);
    let end = start + tokens[start..].partition_point(|t| t.line == line);
    &tokens[start..end]
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    line_start: usize,
    depth: usize,
    indents: Vec<usize>,
    at_line_start: bool,
    line_has_tokens: bool,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            line: 1,
            line_start: 0,
            depth: 0,
            indents: vec![0],
            at_line_start: true,
            line_has_tokens: false,
            out: Vec::new(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn col(&self, pos: usize) -> usize {
        pos - self.line_start
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize, line: usize, line_start: usize) {
        self.out.push(Token {
            text: self.src[start..end].to_string(),
            kind,
            line,
            col_start: start - line_start,
            col_end: end - line_start,
        });
        if !kind.is_synthetic() && kind != TokenKind::Comment {
            self.line_has_tokens = true;
        }
    }

    fn push_synthetic(&mut self, kind: TokenKind, text: &str, col: usize) {
        let width = text.len();
        self.out.push(Token {
            text: text.to_string(),
            kind,
            line: self.line,
            col_start: col,
            col_end: col + width,
        });
    }

    fn newline(&mut self) {
        self.pos += 1;
        self.line += 1;
        self.line_start = self.pos;
        if self.depth == 0 {
            self.at_line_start = true;
        }
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        while self.pos < self.src.len() {
            if self.at_line_start {
                self.at_line_start = false;
                self.handle_indentation();
                continue;
            }
            let c = self.peek().expect("pos < len");
            match c {
                '\n' => {
                    if self.depth == 0 && self.line_has_tokens {
                        let col = self.col(self.pos);
                        self.push_synthetic(TokenKind::Newline, "\n", col);
                        self.line_has_tokens = false;
                    }
                    self.newline();
                }
                '\r' | ' ' | '\t' | '\x0c' => self.pos += 1,
                '\\' if self.rest()[1..].starts_with('\n') => {
                    self.pos += 1;
                    self.line += 1;
                    self.pos += 1;
                    self.line_start = self.pos;
                }
                '\\' if self.rest()[1..].starts_with("\r\n") => {
                    self.pos += 2;
                    self.line += 1;
                    self.pos += 1;
                    self.line_start = self.pos;
                }
                '#' => {
                    let start = self.pos;
                    let end = self.rest().find('\n').map_or(self.src.len(), |i| self.pos + i);
                    let end = if self.src[..end].ends_with('\r') { end - 1 } else { end };
                    self.pos = end;
                    self.push(TokenKind::Comment, start, end, self.line, self.line_start);
                }
                '"' | '\'' => self.lex_string(self.pos)?,
                c if c.is_ascii_digit() => self.lex_number(),
                '.' if self.rest()[1..].starts_with(|d: char| d.is_ascii_digit()) => self.lex_number(),
                c if c == '_' || c.is_alphabetic() => self.lex_name()?,
                _ => self.lex_operator(),
            }
        }
        if self.line_has_tokens {
            let col = self.col(self.pos);
            self.push_synthetic(TokenKind::Newline, "", col);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            let col = self.col(self.pos);
            self.push_synthetic(TokenKind::Dedent, "", col);
        }
        Ok(self.out)
    }

    /// Measure leading whitespace of a logical line and emit indent/dedent.
    /// Blank and comment-only lines do not affect indentation.
    fn handle_indentation(&mut self) {
        let mut width = 0;
        let mut end = self.pos;
        for c in self.rest().chars() {
            match c {
                ' ' => width += 1,
                '\t' => width = (width / 8 + 1) * 8,
                '\x0c' => width = 0,
                _ => break,
            }
            end += c.len_utf8();
        }
        let next = self.src[end..].chars().next();
        let blank = matches!(next, None | Some('\n') | Some('\r') | Some('#'));
        let start = self.pos;
        self.pos = end;
        if blank {
            return;
        }
        let current = *self.indents.last().expect("indent stack never empty");
        if width > current {
            self.indents.push(width);
            let line_start = self.line_start;
            self.out.push(Token {
                text: self.src[start..end].to_string(),
                kind: TokenKind::Indent,
                line: self.line,
                col_start: start - line_start,
                col_end: end - line_start,
            });
        } else {
            let col = self.col(end);
            while width < *self.indents.last().expect("indent stack never empty") {
                // Inconsistent dedent (between two open levels): stay in the
                // current block at the new width.
                if width > self.indents[self.indents.len() - 2] {
                    *self.indents.last_mut().expect("indent stack never empty") = width;
                    break;
                }
                self.indents.pop();
                self.push_synthetic(TokenKind::Dedent, "", col);
            }
        }
    }

    fn lex_name(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let mut end = self.pos;
        for c in self.rest().chars() {
            if c == '_' || c.is_alphanumeric() {
                end += c.len_utf8();
            } else {
                break;
            }
        }
        let word = &self.src[start..end];
        if word.len() <= 2
            && word.chars().all(|c| "rRbBuUfF".contains(c))
            && self.src[end..].starts_with(['"', '\''])
        {
            return self.lex_string(start);
        }
        self.pos = end;
        let kind = if KEYWORDS.contains(&word) { TokenKind::Keyword } else { TokenKind::Name };
        self.push(kind, start, end, self.line, self.line_start);
        Ok(())
    }

    fn lex_number(&mut self) {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        let radix_prefixed = bytes[i] == b'0'
            && i + 1 < bytes.len()
            && matches!(bytes[i + 1], b'x' | b'X' | b'o' | b'O' | b'b' | b'B');
        if radix_prefixed {
            i += 2;
            while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
                i += 1;
            }
        } else {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                    i += 1;
                }
            }
            if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
                let mut j = i + 1;
                if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                        i += 1;
                    }
                }
            }
            if i < bytes.len() && matches!(bytes[i], b'j' | b'J') {
                i += 1;
            }
        }
        self.pos = i;
        self.push(TokenKind::Number, start, i, self.line, self.line_start);
    }

    /// `start` points at the prefix (if any); `self.pos` may still be before it.
    fn lex_string(&mut self, start: usize) -> Result<(), LexError> {
        let line = self.line;
        let line_start = self.line_start;
        let quote_at = start + self.src[start..].find(['"', '\'']).expect("caller saw a quote");
        let quote = self.src.as_bytes()[quote_at];
        let triple = self.src.as_bytes()[quote_at..].starts_with(&[quote; 3]);
        let bytes = self.src.as_bytes();
        let mut i = quote_at + if triple { 3 } else { 1 };
        loop {
            if i >= bytes.len() {
                return Err(LexError::UnterminatedString { line });
            }
            match bytes[i] {
                b'\\' => {
                    if bytes.get(i + 1) == Some(&b'\n') {
                        self.line += 1;
                        self.line_start = i + 2;
                    }
                    i += 2;
                }
                b'\n' if !triple => return Err(LexError::UnterminatedString { line }),
                b'\n' => {
                    self.line += 1;
                    self.line_start = i + 1;
                    i += 1;
                }
                b if b == quote => {
                    if !triple {
                        i += 1;
                        break;
                    }
                    if bytes[i..].starts_with(&[quote; 3]) {
                        i += 3;
                        break;
                    }
                    i += 1;
                }
                _ => i += 1,
            }
        }
        let end = i.min(bytes.len());
        self.pos = end;
        self.push(TokenKind::String, start, end, line, line_start);
        Ok(())
    }

    fn lex_operator(&mut self) {
        let start = self.pos;
        let rest = self.rest();
        let len = OPERATORS_3
            .iter()
            .chain(OPERATORS_2)
            .find(|op| rest.starts_with(**op))
            .map(|op| op.len())
            .unwrap_or_else(|| rest.chars().next().map_or(1, char::len_utf8));
        let end = start + len;
        let text = &self.src[start..end];
        let kind = match text {
            "(" | "[" | "{" => {
                self.depth += 1;
                TokenKind::Punctuation
            }
            ")" | "]" | "}" => {
                self.depth = self.depth.saturating_sub(1);
                TokenKind::Punctuation
            }
            "," | ":" | ";" | "." => TokenKind::Punctuation,
            _ => TokenKind::Operator,
        };
        self.pos = end;
        self.push(kind, start, end, self.line, self.line_start);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    fn kinds(tokens: &[Token]) -> Vec<TokenKind> {
        tokens.iter().map(|t| t.kind).collect()
    }

    #[test]
    fn single_assignment() {
        let toks = tokenize("x = 5\n").unwrap();
        assert_eq!(texts(&toks), ["x", "=", "5", "\n"]);
        assert_eq!(
            kinds(&toks),
            [TokenKind::Name, TokenKind::Operator, TokenKind::Number, TokenKind::Newline]
        );
        assert_eq!((toks[2].col_start, toks[2].col_end), (4, 5));
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
    }

    #[test]
    fn trailing_comment_is_a_token() {
        let toks = tokenize("a = [1, 2]  # pair\n").unwrap();
        assert_eq!(toks.len(), 9);
        assert_eq!(texts(&toks), ["a", "=", "[", "1", ",", "2", "]", "# pair", "\n"]);
        assert_eq!(toks[7].kind, TokenKind::Comment);
        assert_eq!(toks[8].kind, TokenKind::Newline);
    }

    #[test]
    fn line_queries() {
        let toks = tokenize("x = 5\n").unwrap();
        assert_eq!(tokens_on_line(&toks, 1).len(), 4);
        assert!(tokens_on_line(&toks, 7).is_empty());

        let toks = tokenize("a = 1\nbb = a\n").unwrap();
        let second = tokens_on_line(&toks, 2);
        assert_eq!(texts(second), ["bb", "=", "a", "\n"]);
        assert!(second.iter().all(|t| t.line == 2));
    }

    #[test]
    fn indentation() {
        let src = "def f(x):\n    y = x\n\n    # note\n    return y\nz = 1\n";
        let toks = tokenize(src).unwrap();
        let indents = toks.iter().filter(|t| t.kind == TokenKind::Indent).count();
        let dedents = toks.iter().filter(|t| t.kind == TokenKind::Dedent).count();
        assert_eq!((indents, dedents), (1, 1));
        let dedent = toks.iter().find(|t| t.kind == TokenKind::Dedent).unwrap();
        assert_eq!(dedent.line, 6);
    }

    #[test]
    fn inconsistent_dedent_stays_balanced() {
        let toks = tokenize("if a:\n        b\n    c\nd\n").unwrap();
        let kinds: Vec<_> = toks.iter().filter(|t| t.is_synthetic() && t.kind != TokenKind::Newline).map(|t| (t.kind, t.line)).collect();
        assert_eq!(kinds, [(TokenKind::Indent, 2), (TokenKind::Dedent, 4)]);
    }

    #[test]
    fn dedent_at_eof_without_newline() {
        let toks = tokenize("if a:\n    b = 1").unwrap();
        let tail: Vec<_> = kinds(&toks).into_iter().rev().take(2).collect();
        assert_eq!(tail, [TokenKind::Dedent, TokenKind::Newline]);
    }

    #[test]
    fn strings_are_single_tokens() {
        let toks = tokenize("s = f'a {b}' + rb\"x\\\"y\"\n").unwrap();
        assert_eq!(texts(&toks), ["s", "=", "f'a {b}'", "+", "rb\"x\\\"y\"", "\n"]);
        assert_eq!(toks[2].kind, TokenKind::String);
    }

    #[test]
    fn triple_quoted_spans_lines() {
        let toks = tokenize("d = \"\"\"one\ntwo\"\"\"\ne = 2\n").unwrap();
        assert_eq!(toks[2].kind, TokenKind::String);
        assert_eq!(toks[2].line, 1);
        let e = toks.iter().find(|t| t.text == "e").unwrap();
        assert_eq!((e.line, e.col_start), (3, 0));
    }

    #[test]
    fn unterminated_string_names_line() {
        assert_eq!(
            tokenize("a = 1\nb = 'oops\n"),
            Err(LexError::UnterminatedString { line: 2 })
        );
        assert_eq!(
            tokenize("x = '''never closed\n\n"),
            Err(LexError::UnterminatedString { line: 1 })
        );
    }

    #[test]
    fn bad_encoding() {
        assert_eq!(
            tokenize_bytes(b"x = 1\n\xff\n"),
            Err(LexError::Encoding { offset: 6 })
        );
    }

    #[test]
    fn no_newline_inside_brackets() {
        let toks = tokenize("v = [\n  1,\n  2,\n]\n").unwrap();
        let newlines = toks.iter().filter(|t| t.kind == TokenKind::Newline).count();
        assert_eq!(newlines, 1);
        assert_eq!(toks.iter().find(|t| t.text == "2").unwrap().line, 3);
    }

    #[test]
    fn numbers() {
        let toks = tokenize("a = 0x1F + 1_000 + 3.5e-2 + .5 + 2j\n").unwrap();
        let nums: Vec<_> = toks
            .iter()
            .filter(|t| t.kind == TokenKind::Number)
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(nums, ["0x1F", "1_000", "3.5e-2", ".5", "2j"]);
    }

    #[test]
    fn operators_longest_match() {
        let toks = tokenize("x **= y // z -> w != q\n").unwrap();
        assert_eq!(texts(&toks), ["x", "**=", "y", "//", "z", "->", "w", "!=", "q", "\n"]);
    }

    #[test]
    fn keywords_and_unicode_names() {
        let toks = tokenize("for größe in None:\n    pass\n").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Keyword);
        assert_eq!(toks[1].kind, TokenKind::Name);
        assert_eq!(toks[1].text, "größe");
        assert_eq!(toks[3].kind, TokenKind::Keyword);
    }

    #[test]
    fn backslash_continuation() {
        let toks = tokenize("x = 1 + \\\n    2\n").unwrap();
        assert_eq!(texts(&toks), ["x", "=", "1", "+", "2", "\n"]);
        assert_eq!(toks[4].line, 2);
    }
}
