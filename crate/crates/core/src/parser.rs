//! Textual specification language: lexer, recursive-descent parser and the
//! canonical pretty printer.
//!
//! ```text
//! spec     := item* ;
//! item     := "diagram" ID "{" dstmt* "}" | "data" ID "{" (entity|relation)* "}"
//!           | "chart" ID "{" module* "}" | "action" ID "{" assign* "}" ;
//! dstmt    := "entry" ID ";" | "exit" ID ";" | "node" ID "output" STRING ";"
//!           | "arc" ID "->" target "on" pattern guard? ("do" ID)? ";" ;
//! target   := ID | "call" ID "return" ID ;
//! pattern  := STRING | "otherwise" ;
//! guard    := "when" ID ("=="|"!=") STRING ;
//! assign   := ID "=" term ("+" term)* ";" ;
//! term     := STRING | ID | "$input" ;
//! entity   := "entity" ID "{" (ID ":" type "key"? ";")* "}" ;
//! type     := "int" | "string" | "bool" | "date" ;
//! relation := "relation" ID "(" ID ("1"|"N") "," ID ("1"|"N") ")" ";" ;
//! module   := "module" ID "root"? "{" ("invokes" ID ("with" ID ("," ID)*)? ";")* "}" ;
//! ```
//!
//! Comments run from `//` to end of line. Strings accept the escapes `\"`,
//! `\\` and `\n`; a raw line break inside a string is an unterminated string.
//! After a syntax error the parser skips to the next `diagram`, `data`,
//! `chart` or `action` keyword, so one run can report several errors.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::model::{
    ActionDef, ArcTarget, Assignment, AttrType, Attribute, Cardinality, DesignModel, ElementKey, ElementKind, Entity,
    ErSchema,
    Guard, GuardOp, Invocation, ModelBuilder, ModelError, Pattern, Relation, RelationEnd, ScChart, ScModule,
    SourceSpan, StdArc, StdDiagram, StdNode, Template, Term, RESERVED_WORDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    /// Bad character.
    Lex001,
    /// Unterminated string.
    Lex002,
    /// Bad escape.
    Lex003,
    /// Unexpected token.
    Syn001,
    /// Unexpected end of input.
    Syn002,
    /// Model invariant violation, carrying the model error code.
    Model(&'static str),
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::Lex001 => "LEX001",
            ErrorCode::Lex002 => "LEX002",
            ErrorCode::Lex003 => "LEX003",
            ErrorCode::Syn001 => "SYN001",
            ErrorCode::Syn002 => "SYN002",
            ErrorCode::Model(c) => c,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub code: ErrorCode,
    pub span: SourceSpan,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} {}", self.span, self.code, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(String),
    Input,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Comma,
    Arrow,
    Assign,
    EqEq,
    NotEq,
    Plus,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Number(n) => format!("`{n}`"),
            Tok::Input => "`$input`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Assign => "`=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Plus => "`+`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
    file: &'a str,
    tokens: Vec<Token>,
    errors: Vec<ParseError>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, file: &'a str) -> Self {
        Self { chars: src.chars().peekable(), line: 1, col: 1, file, tokens: Vec::new(), errors: Vec::new() }
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

    fn error(&mut self, code: ErrorCode, line: u32, col: u32, message: String) {
        self.errors.push(ParseError { code, span: SourceSpan::new(self.file, line, col), message });
    }

    fn run(mut self) -> (Vec<Token>, Vec<ParseError>) {
        while let Some(&c) = self.chars.peek() {
            let (line, col) = (self.line, self.col);
            let push = |me: &mut Self, tok| me.tokens.push(Token { tok, line, col });
            match c {
                c if c.is_whitespace() => {
                    self.bump();
                }
                '/' => {
                    self.bump();
                    if self.chars.peek() == Some(&'/') {
                        while let Some(&c) = self.chars.peek() {
                            if c == '\n' {
                                break;
                            }
                            self.bump();
                        }
                    } else {
                        self.error(ErrorCode::Lex001, line, col, "unexpected character `/`".into());
                    }
                }
                '"' => {
                    self.bump();
                    if let Some(s) = self.string(line, col) {
                        push(&mut self, Tok::Str(s));
                    }
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut s = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    push(&mut self, Tok::Ident(s));
                }
                c if c.is_ascii_digit() => {
                    let mut s = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    push(&mut self, Tok::Number(s));
                }
                '$' => {
                    self.bump();
                    let mut s = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if s == "input" {
                        push(&mut self, Tok::Input);
                    } else {
                        self.error(ErrorCode::Lex001, line, col, format!("unexpected `${s}`; only `$input` is allowed"));
                    }
                }
                '-' | '=' | '!' => {
                    self.bump();
                    let next = self.chars.peek().copied();
                    let tok = match (c, next) {
                        ('-', Some('>')) => Some(Tok::Arrow),
                        ('=', Some('=')) => Some(Tok::EqEq),
                        ('!', Some('=')) => Some(Tok::NotEq),
                        ('=', _) => {
                            push(&mut self, Tok::Assign);
                            continue;
                        }
                        _ => None,
                    };
                    match tok {
                        Some(t) => {
                            self.bump();
                            push(&mut self, t);
                        }
                        None => self.error(ErrorCode::Lex001, line, col, format!("unexpected character `{c}`")),
                    }
                }
                _ => {
                    self.bump();
                    let tok = match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ';' => Tok::Semi,
                        ':' => Tok::Colon,
                        ',' => Tok::Comma,
                        '+' => Tok::Plus,
                        other => {
                            self.error(ErrorCode::Lex001, line, col, format!("unexpected character {other:?}"));
                            continue;
                        }
                    };
                    push(&mut self, tok);
                }
            }
        }
        (self.tokens, self.errors)
    }

    /// Reads the rest of a string literal after the opening quote.
    fn string(&mut self, line: u32, col: u32) -> Option<String> {
        let mut out = String::new();
        loop {
            let (el, ec) = (self.line, self.col);
            match self.chars.peek().copied() {
                None | Some('\n') => {
                    self.error(ErrorCode::Lex002, line, col, "unterminated string literal".into());
                    return None;
                }
                Some('"') => {
                    self.bump();
                    return Some(out);
                }
                Some('\\') => {
                    self.bump();
                    match self.chars.peek().copied() {
                        Some('"') => out.push('"'),
                        Some('\\') => out.push('\\'),
                        Some('n') => out.push('\n'),
                        Some('\n') | None => {
                            self.error(ErrorCode::Lex002, line, col, "unterminated string literal".into());
                            return None;
                        }
                        Some(other) => {
                            self.error(ErrorCode::Lex003, el, ec, format!("unknown escape `\\{other}`"));
                        }
                    }
                    self.bump();
                }
                Some(c) => {
                    out.push(c);
                    self.bump();
                }
            }
        }
    }
}

const ITEM_KEYWORDS: &[&str] = &["diagram", "data", "chart", "action"];

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    file: &'a str,
    builder: ModelBuilder,
    declared: HashMap<(ElementKind, String), SourceSpan>,
    duplicates: Vec<ParseError>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn new(tokens: Vec<Token>, file: &'a str) -> Self {
        Self {
            tokens,
            pos: 0,
            file,
            builder: ModelBuilder::new(file),
            declared: HashMap::new(),
            duplicates: Vec::new(),
        }
    }

    /// Records a declaration; a repeat yields DUP_NAME naming both locations.
    fn declare(&mut self, kind: ElementKind, qualified: String, span: SourceSpan) {
        match self.declared.get(&(kind, qualified.clone())) {
            Some(first) => {
                let err = ModelError::DuplicateName {
                    kind,
                    name: qualified,
                    first: Some(first.clone()),
                    second: Some(span.clone()),
                };
                self.duplicates.push(ParseError { code: ErrorCode::Model(err.code()), span, message: err.to_string() });
            }
            None => {
                self.declared.insert((kind, qualified), span);
            }
        }
    }

    fn span_at(&self, t: &Token) -> SourceSpan {
        SourceSpan::new(self.file, t.line, t.col)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == kw)
    }

    fn eof_error(&self, expected: &str) -> ParseError {
        let span = self.tokens.last().map(|t| self.span_at(t)).unwrap_or_else(|| SourceSpan::new(self.file, 1, 1));
        ParseError { code: ErrorCode::Syn002, span, message: format!("unexpected end of input, expected {expected}") }
    }

    fn unexpected(&self, t: &Token, expected: &str) -> ParseError {
        ParseError {
            code: ErrorCode::Syn001,
            span: self.span_at(t),
            message: format!("unexpected {}, expected {expected}", t.tok.describe()),
        }
    }

    fn next(&mut self, expected: &str) -> PResult<Token> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.eof_error(expected)),
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        let what = tok.describe();
        let t = self.next(&what)?;
        if t.tok == tok {
            Ok(t)
        } else {
            self.pos -= 1;
            Err(self.unexpected(&t, &what))
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Token> {
        let what = format!("`{kw}`");
        let t = self.next(&what)?;
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(t),
            _ => {
                self.pos -= 1;
                Err(self.unexpected(&t, &what))
            }
        }
    }

    fn ident(&mut self) -> PResult<(String, Token)> {
        let t = self.next("identifier")?;
        match &t.tok {
            Tok::Ident(s) if !RESERVED_WORDS.contains(&s.as_str()) => Ok((s.clone(), t)),
            _ => {
                self.pos -= 1;
                Err(self.unexpected(&t, "identifier"))
            }
        }
    }

    fn string(&mut self) -> PResult<(String, Token)> {
        let t = self.next("string literal")?;
        match &t.tok {
            Tok::Str(s) => Ok((s.clone(), t)),
            _ => {
                self.pos -= 1;
                Err(self.unexpected(&t, "string literal"))
            }
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Skips to the next item keyword. Always makes progress.
    fn recover(&mut self) {
        self.pos += 1;
        while let Some(t) = self.peek() {
            if matches!(&t.tok, Tok::Ident(s) if ITEM_KEYWORDS.contains(&s.as_str())) {
                return;
            }
            self.pos += 1;
        }
    }

    fn spec(&mut self) -> Vec<ParseError> {
        let mut errors = Vec::new();
        while let Some(t) = self.peek().cloned() {
            let res = match &t.tok {
                Tok::Ident(kw) if kw == "diagram" => self.diagram(),
                Tok::Ident(kw) if kw == "data" => self.data(),
                Tok::Ident(kw) if kw == "chart" => self.chart(),
                Tok::Ident(kw) if kw == "action" => self.action(),
                _ => Err(self.unexpected(&t, "`diagram`, `data`, `chart` or `action`")),
            };
            if let Err(e) = res {
                errors.push(e);
                self.recover();
            }
        }
        errors
    }

    fn block_open(&mut self) -> PResult<()> {
        self.expect(Tok::LBrace).map(|_| ())
    }

    fn diagram(&mut self) -> PResult<()> {
        self.keyword("diagram")?;
        let (name, name_tok) = self.ident()?;
        self.block_open()?;
        let mut d = StdDiagram { name: name.clone(), entry: None, exits: BTreeSet::new(), nodes: vec![], arcs: vec![] };
        self.declare(ElementKind::Diagram, name.clone(), self.span_at(&name_tok));
        let mut spans = vec![(ElementKey::Diagram(name.clone()), self.span_at(&name_tok))];
        let mut extra_entry: Option<SourceSpan> = None;
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            let t = self.next("diagram statement or `}`")?;
            let kw = match &t.tok {
                Tok::Ident(s) => s.clone(),
                _ => return Err(self.unexpected(&t, "`entry`, `exit`, `node`, `arc` or `}`")),
            };
            match kw.as_str() {
                "entry" => {
                    let (n, _) = self.ident()?;
                    self.expect(Tok::Semi)?;
                    if d.entry.is_some() && extra_entry.is_none() {
                        extra_entry = Some(self.span_at(&t));
                    }
                    d.entry = Some(n);
                }
                "exit" => {
                    let (n, _) = self.ident()?;
                    self.expect(Tok::Semi)?;
                    d.exits.insert(n);
                }
                "node" => {
                    let (n, _) = self.ident()?;
                    self.keyword("output")?;
                    let (text, stok) = self.string()?;
                    self.expect(Tok::Semi)?;
                    let output = Template::new(text).map_err(|m| ParseError {
                        code: ErrorCode::Model("BAD_PLACEHOLDER"),
                        span: self.span_at(&stok),
                        message: m,
                    })?;
                    self.declare(ElementKind::Node, format!("{name}.{n}"), self.span_at(&t));
                    spans.push((ElementKey::Node { diagram: name.clone(), node: n.clone() }, self.span_at(&t)));
                    d.nodes.push(StdNode { name: n, output });
                }
                "arc" => {
                    let arc = self.arc(d.arcs.len())?;
                    spans.push((ElementKey::Arc { diagram: name.clone(), decl_index: arc.decl_index }, self.span_at(&t)));
                    d.arcs.push(arc);
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.unexpected(&t, "`entry`, `exit`, `node`, `arc` or `}`"));
                }
            }
        }
        if let Some(span) = extra_entry {
            return Err(ParseError {
                code: ErrorCode::Model("DUP_ENTRY"),
                span,
                message: format!("diagram `{name}` declares more than one entry"),
            });
        }
        // Keep the first span for duplicated nodes so DUP_NAME can name both.
        for (k, s) in spans {
            self.builder.spans.entry(k).or_insert(s);
        }
        self.builder.diagrams.push(d);
        Ok(())
    }

    fn arc(&mut self, decl_index: usize) -> PResult<StdArc> {
        let (from, _) = self.ident()?;
        self.expect(Tok::Arrow)?;
        let target = if self.eat_kw("call") {
            let (diagram, _) = self.ident()?;
            self.keyword("return")?;
            let (return_to, _) = self.ident()?;
            ArcTarget::Call { diagram, return_to }
        } else {
            ArcTarget::Node(self.ident()?.0)
        };
        self.keyword("on")?;
        let pattern = if self.eat_kw("otherwise") {
            Pattern::Otherwise
        } else {
            Pattern::Literal(self.string()?.0)
        };
        let guard = if self.eat_kw("when") {
            let (var, _) = self.ident()?;
            let op = if self.eat(&Tok::EqEq) {
                GuardOp::Eq
            } else if self.eat(&Tok::NotEq) {
                GuardOp::Neq
            } else {
                let t = self.next("`==` or `!=`")?;
                self.pos -= 1;
                return Err(self.unexpected(&t, "`==` or `!=`"));
            };
            let (value, _) = self.string()?;
            Some(Guard { var, op, value })
        } else {
            None
        };
        let action = if self.eat_kw("do") { Some(self.ident()?.0) } else { None };
        self.expect(Tok::Semi)?;
        Ok(StdArc { from, target, pattern, guard, action, decl_index })
    }

    fn data(&mut self) -> PResult<()> {
        self.keyword("data")?;
        let (name, name_tok) = self.ident()?;
        self.block_open()?;
        let mut schema = ErSchema { name: name.clone(), entities: vec![], relations: vec![] };
        self.declare(ElementKind::Schema, name.clone(), self.span_at(&name_tok));
        let mut spans = vec![(ElementKey::Schema(name.clone()), self.span_at(&name_tok))];
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            let t = self.next("`entity`, `relation` or `}`")?;
            match &t.tok {
                Tok::Ident(s) if s == "entity" => {
                    let (ename, _) = self.ident()?;
                    self.block_open()?;
                    let mut attributes = Vec::new();
                    while !self.eat(&Tok::RBrace) {
                        let (aname, atok) = self.ident()?;
                        let ordinal = schema.entities.len();
                        self.declare(
                            ElementKind::Attribute,
                            format!("{name}.{ordinal}.{aname}"),
                            self.span_at(&atok),
                        );
                        self.expect(Tok::Colon)?;
                        let tt = self.next("attribute type")?;
                        let ty = match &tt.tok {
                            Tok::Ident(s) => AttrType::from_keyword(s),
                            _ => None,
                        };
                        let Some(ty) = ty else {
                            self.pos -= 1;
                            return Err(self.unexpected(&tt, "`int`, `string`, `bool` or `date`"));
                        };
                        let is_key = self.eat_kw("key");
                        self.expect(Tok::Semi)?;
                        attributes.push(Attribute { name: aname, ty, is_key });
                    }
                    spans.push((
                        ElementKey::Entity { schema: name.clone(), ordinal: schema.entities.len() },
                        self.span_at(&t),
                    ));
                    schema.entities.push(Entity { name: ename, attributes });
                }
                Tok::Ident(s) if s == "relation" => {
                    let (rname, _) = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let left = self.relation_end()?;
                    self.expect(Tok::Comma)?;
                    let right = self.relation_end()?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Semi)?;
                    spans.push((
                        ElementKey::Relation { schema: name.clone(), ordinal: schema.relations.len() },
                        self.span_at(&t),
                    ));
                    schema.relations.push(Relation { name: rname, left, right });
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.unexpected(&t, "`entity`, `relation` or `}`"));
                }
            }
        }
        for (k, s) in spans {
            self.builder.spans.entry(k).or_insert(s);
        }
        self.builder.schemas.push(schema);
        Ok(())
    }

    fn relation_end(&mut self) -> PResult<RelationEnd> {
        let (entity, _) = self.ident()?;
        let t = self.next("`1` or `N`")?;
        let card = match &t.tok {
            Tok::Number(n) if n == "1" => Cardinality::One,
            Tok::Ident(n) if n == "N" => Cardinality::Many,
            _ => {
                self.pos -= 1;
                return Err(self.unexpected(&t, "`1` or `N`"));
            }
        };
        Ok(RelationEnd { entity, card })
    }

    fn chart(&mut self) -> PResult<()> {
        self.keyword("chart")?;
        let (name, name_tok) = self.ident()?;
        self.block_open()?;
        let mut chart = ScChart { name: name.clone(), modules: vec![] };
        self.declare(ElementKind::Chart, name.clone(), self.span_at(&name_tok));
        let mut spans = vec![(ElementKey::Chart(name.clone()), self.span_at(&name_tok))];
        while !self.eat(&Tok::RBrace) {
            let t = self.keyword("module")?;
            let (mname, _) = self.ident()?;
            self.declare(ElementKind::Module, format!("{name}.{mname}"), self.span_at(&t));
            let is_root = self.eat_kw("root");
            self.block_open()?;
            let mut invocations = Vec::new();
            while !self.eat(&Tok::RBrace) {
                self.keyword("invokes")?;
                let (callee, _) = self.ident()?;
                let mut couples = Vec::new();
                if self.eat_kw("with") {
                    couples.push(self.ident()?.0);
                    while self.eat(&Tok::Comma) {
                        couples.push(self.ident()?.0);
                    }
                }
                self.expect(Tok::Semi)?;
                invocations.push(Invocation { callee, couples });
            }
            spans.push((ElementKey::Module { chart: name.clone(), module: mname.clone() }, self.span_at(&t)));
            chart.modules.push(ScModule { name: mname, is_root, invocations });
        }
        for (k, s) in spans {
            self.builder.spans.entry(k).or_insert(s);
        }
        self.builder.charts.push(chart);
        Ok(())
    }

    fn action(&mut self) -> PResult<()> {
        self.keyword("action")?;
        let (name, name_tok) = self.ident()?;
        self.declare(ElementKind::Action, name.clone(), self.span_at(&name_tok));
        self.block_open()?;
        let mut assignments = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let (var, _) = self.ident()?;
            self.expect(Tok::Assign)?;
            let mut expr = vec![self.term()?];
            while self.eat(&Tok::Plus) {
                expr.push(self.term()?);
            }
            self.expect(Tok::Semi)?;
            assignments.push(Assignment { var, expr });
        }
        let span = self.span_at(&name_tok);
        self.builder.spans.entry(ElementKey::Action(name.clone())).or_insert(span);
        self.builder.actions.push(ActionDef { name, assignments });
        Ok(())
    }

    fn term(&mut self) -> PResult<Term> {
        let t = self.next("term")?;
        match &t.tok {
            Tok::Str(s) => Ok(Term::Literal(s.clone())),
            Tok::Input => Ok(Term::Input),
            Tok::Ident(s) if !RESERVED_WORDS.contains(&s.as_str()) => Ok(Term::Var(s.clone())),
            _ => {
                self.pos -= 1;
                Err(self.unexpected(&t, "string, identifier or `$input`"))
            }
        }
    }
}

fn model_error_to_parse(e: ModelError, file: &str) -> ParseError {
    let span = e.span().cloned().unwrap_or_else(|| SourceSpan::new(file, 1, 1));
    ParseError { code: ErrorCode::Model(e.code()), span, message: e.to_string() }
}

/// Parses a specification corpus into a [`DesignModel`].
pub fn parse(source: &str, source_name: &str) -> Result<DesignModel, Vec<ParseError>> {
    let (tokens, lex_errors) = Lexer::new(source, source_name).run();
    if !lex_errors.is_empty() {
        return Err(lex_errors);
    }
    let mut p = Parser::new(tokens, source_name);
    let mut errors = p.spec();
    errors.append(&mut p.duplicates);
    if !errors.is_empty() {
        errors.sort_by_key(|e| (e.span.line, e.span.col));
        return Err(errors);
    }
    let model_errors = p.builder.validate();
    if !model_errors.is_empty() {
        return Err(model_errors.into_iter().map(|e| model_error_to_parse(e, source_name)).collect());
    }
    Ok(p.builder.build().expect("validated above"))
}

/// Parses a single action expression (`term ("+" term)*`).
pub fn parse_expr(text: &str) -> Result<Vec<Term>, ParseError> {
    let (tokens, mut errs) = Lexer::new(text, "<expr>").run();
    if !errs.is_empty() {
        return Err(errs.remove(0));
    }
    let mut p = Parser::new(tokens, "<expr>");
    let mut expr = vec![p.term()?];
    while p.eat(&Tok::Plus) {
        expr.push(p.term()?);
    }
    if let Some(t) = p.peek().cloned() {
        return Err(p.unexpected(&t, "`+` or end of expression"));
    }
    Ok(expr)
}

/// Quotes text as a string literal of the language.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn format_expr(expr: &[Term]) -> String {
    expr.iter()
        .map(|t| match t {
            Term::Literal(s) => quote(s),
            Term::Var(v) => v.clone(),
            Term::Input => "$input".to_string(),
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn format_arc(a: &StdArc) -> String {
    let mut s = format!("arc {} -> ", a.from);
    match &a.target {
        ArcTarget::Node(n) => s.push_str(n),
        ArcTarget::Call { diagram, return_to } => {
            let _ = write!(s, "call {diagram} return {return_to}");
        }
    }
    s.push_str(" on ");
    match &a.pattern {
        Pattern::Literal(p) => s.push_str(&quote(p)),
        Pattern::Otherwise => s.push_str("otherwise"),
    }
    if let Some(g) = &a.guard {
        let _ = write!(s, " when {} {} {}", g.var, g.op.symbol(), quote(&g.value));
    }
    if let Some(act) = &a.action {
        let _ = write!(s, " do {act}");
    }
    s.push(';');
    s
}

pub fn print_diagram(out: &mut String, d: &StdDiagram) {
    let _ = writeln!(out, "diagram {} {{", d.name);
    if let Some(e) = &d.entry {
        let _ = writeln!(out, "  entry {e};");
    }
    for e in &d.exits {
        let _ = writeln!(out, "  exit {e};");
    }
    for n in &d.nodes {
        let _ = writeln!(out, "  node {} output {};", n.name, quote(n.output.as_str()));
    }
    for a in &d.arcs {
        let _ = writeln!(out, "  {}", format_arc(a));
    }
    out.push_str("}\n");
}

pub fn print_schema(out: &mut String, s: &ErSchema) {
    let _ = writeln!(out, "data {} {{", s.name);
    for e in &s.entities {
        let _ = writeln!(out, "  entity {} {{", e.name);
        for a in &e.attributes {
            let key = if a.is_key { " key" } else { "" };
            let _ = writeln!(out, "    {} : {}{};", a.name, a.ty.keyword(), key);
        }
        out.push_str("  }\n");
    }
    for r in &s.relations {
        let _ = writeln!(
            out,
            "  relation {} ({} {}, {} {});",
            r.name,
            r.left.entity,
            r.left.card.symbol(),
            r.right.entity,
            r.right.card.symbol()
        );
    }
    out.push_str("}\n");
}

pub fn print_chart(out: &mut String, c: &ScChart) {
    let _ = writeln!(out, "chart {} {{", c.name);
    for m in &c.modules {
        let root = if m.is_root { " root" } else { "" };
        let _ = writeln!(out, "  module {}{} {{", m.name, root);
        for inv in &m.invocations {
            if inv.couples.is_empty() {
                let _ = writeln!(out, "    invokes {};", inv.callee);
            } else {
                let _ = writeln!(out, "    invokes {} with {};", inv.callee, inv.couples.join(", "));
            }
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
}

pub fn print_action(out: &mut String, a: &ActionDef) {
    let _ = writeln!(out, "action {} {{", a.name);
    for asg in &a.assignments {
        let _ = writeln!(out, "  {} = {};", asg.var, format_expr(&asg.expr));
    }
    out.push_str("}\n");
}

/// Canonical text: diagrams, then data schemas, charts and actions, items
/// separated by one blank line, two-space indentation.
pub fn pretty_print(model: &DesignModel) -> String {
    let mut items = Vec::new();
    for d in model.diagrams() {
        let mut s = String::new();
        print_diagram(&mut s, d);
        items.push(s);
    }
    for sc in model.schemas() {
        let mut s = String::new();
        print_schema(&mut s, sc);
        items.push(s);
    }
    for c in model.charts() {
        let mut s = String::new();
        print_chart(&mut s, c);
        items.push(s);
    }
    for a in model.actions() {
        let mut s = String::new();
        print_action(&mut s, a);
        items.push(s);
    }
    items.join("\n")
}
