//! The instance DSL: lexer, recursive-descent parser, elaboration of machine
//! blocks, and a pretty-printer that round-trips.
//!
//! Grammar sketch:
//! ```text
//! file      := "atoms" ("order" | "equality") section*
//! section   := domain | relation | varset | family | machine | edgesdecl
//! domain    := "domain" "{" ident+ "}"
//! relation  := "relation" ident "/" int "=" "{" tuple* "}"
//! tuple     := "(" ident ("," ident)* ")"
//! varset    := "vars" ident "(" int ")" "where" formula        -- tuple named x
//! family    := "constraint" ident "on" binding ("," binding)* "where" formula
//! binding   := ident ":" ident
//! machine   := "machine" ident "{" "states" ident+
//!              "registers" ident* transition* "}"
//! transition:= "from" ident "to" ident "when" mguard ("do" asg ("," asg)*)?
//! mguard    := "true" | mlit ("&" mlit)*
//! mlit      := "x" ("=" | "!=") ident
//! asg       := ident ":=" ("x" | "bot")
//! edgesdecl := "edges" ident "with" ident
//! ```
//! Formulas: comparisons `a.1 != b.2`, `a.1 < #2`, `a.1 < 3/2`, connectives
//! `&`, `|`, `!`, parentheses, `true`, `false`. Rational literals become the
//! instance parameters (sorted, deduplicated); `#k` names the k-th smallest
//! literal. In equality mode only `=` and `!=` are accepted. `//` starts a
//! line comment.

use std::collections::BTreeSet;
use std::fmt;

use crate::atoms::{Atom, ParameterContext};
use crate::csp_model::{ConstraintFamily, DefinableInstance, FiniteDomain, Signature};
use crate::defsets::{DefinableSet, SetBuilder};
use crate::formulas::{CmpOp, Formula, Operand};
use crate::machines::{compile, AssignRhs, RegLiteral, RegisterMachine, Transition};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

fn diag(line: usize, col: usize, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        line,
        col,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomsMode {
    Order,
    Equality,
}

/// A parsed instance file, pre-solving: user declarations plus machine
/// blocks. [`InstanceFile::instance`] elaborates machines into builders and
/// constraint families.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceFile {
    pub atoms_mode: AtomsMode,
    pub signature: Signature,
    pub domain: FiniteDomain,
    pub varsets: Vec<SetBuilder>,
    pub families: Vec<ConstraintFamily>,
    pub machines: Vec<RegisterMachine>,
    /// (machine name, relation name): impose the relation along every edge
    /// of the compiled configuration graph.
    pub edge_decls: Vec<(String, String)>,
    pub ctx: ParameterContext,
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(String),
    Hash,
    Dot,
    Comma,
    Colon,
    ColonEq,
    Slash,
    Minus,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Amp,
    Pipe,
    Bang,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(s) => write!(f, "`{s}`"),
            Tok::Hash => write!(f, "`#`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::ColonEq => write!(f, "`:=`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::Eof => write!(f, "end of file"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    macro_rules! push {
        ($tok:expr, $len:expr) => {{
            out.push(Token {
                tok: $tok,
                line,
                col,
            });
            i += $len;
            col += $len;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '/' if next == Some('/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let len = i - start;
                i = start;
                push!(Tok::Ident(word), len);
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let len = i - start;
                i = start;
                push!(Tok::Int(word), len);
            }
            '#' => push!(Tok::Hash, 1),
            '.' => push!(Tok::Dot, 1),
            ',' => push!(Tok::Comma, 1),
            ':' if next == Some('=') => push!(Tok::ColonEq, 2),
            ':' => push!(Tok::Colon, 1),
            '/' => push!(Tok::Slash, 1),
            '-' => push!(Tok::Minus, 1),
            '=' => push!(Tok::Eq, 1),
            '!' if next == Some('=') => push!(Tok::Ne, 2),
            '!' => push!(Tok::Bang, 1),
            '<' if next == Some('=') => push!(Tok::Le, 2),
            '<' => push!(Tok::Lt, 1),
            '>' if next == Some('=') => push!(Tok::Ge, 2),
            '>' => push!(Tok::Gt, 1),
            '&' => push!(Tok::Amp, 1),
            '|' => push!(Tok::Pipe, 1),
            '(' => push!(Tok::LParen, 1),
            ')' => push!(Tok::RParen, 1),
            '{' => push!(Tok::LBrace, 1),
            '}' => push!(Tok::RBrace, 1),
            other => return Err(diag(line, col, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// raw (unresolved) formulas

#[derive(Clone, Debug)]
enum RawOperand {
    Field {
        binding: String,
        index: usize,
        line: usize,
        col: usize,
    },
    ParamRef {
        index: usize,
        line: usize,
        col: usize,
    },
    Literal(Atom),
}

#[derive(Clone, Debug)]
enum RawFormula {
    True,
    False,
    Cmp(RawOperand, CmpOp, RawOperand),
    Not(Box<RawFormula>),
    And(Box<RawFormula>, Box<RawFormula>),
    Or(Box<RawFormula>, Box<RawFormula>),
}

fn collect_literals(f: &RawFormula, out: &mut BTreeSet<Atom>) {
    match f {
        RawFormula::True | RawFormula::False => {}
        RawFormula::Cmp(a, _, b) => {
            for o in [a, b] {
                if let RawOperand::Literal(atom) = o {
                    out.insert(atom.clone());
                }
            }
        }
        RawFormula::Not(g) => collect_literals(g, out),
        RawFormula::And(a, b) | RawFormula::Or(a, b) => {
            collect_literals(a, out);
            collect_literals(b, out);
        }
    }
}

/// Binding environment for resolving `name.i` into concatenated positions.
struct Env<'a> {
    bindings: Vec<(&'a str, usize, usize)>, // (name, dimension, offset)
}

fn resolve(
    f: &RawFormula,
    env: &Env<'_>,
    ctx: &ParameterContext,
) -> Result<Formula, Diagnostic> {
    let operand = |o: &RawOperand| -> Result<Operand, Diagnostic> {
        match o {
            RawOperand::Field {
                binding,
                index,
                line,
                col,
            } => {
                let (_, dim, offset) = env
                    .bindings
                    .iter()
                    .find(|(n, _, _)| n == binding)
                    .ok_or_else(|| diag(*line, *col, format!("unknown binding `{binding}`")))?;
                if *index == 0 || index > dim {
                    return Err(diag(
                        *line,
                        *col,
                        format!("position {index} out of range for `{binding}` of dimension {dim}"),
                    ));
                }
                Ok(Operand::Pos(offset + index - 1))
            }
            RawOperand::ParamRef { index, line, col } => {
                if *index == 0 || *index > ctx.len() {
                    return Err(diag(
                        *line,
                        *col,
                        format!("parameter #{index} out of range ({} parameters)", ctx.len()),
                    ));
                }
                Ok(Operand::Param(index - 1))
            }
            RawOperand::Literal(atom) => {
                let idx = ctx
                    .params()
                    .iter()
                    .position(|p| p == atom)
                    .expect("literal collected into context");
                Ok(Operand::Param(idx))
            }
        }
    };
    Ok(match f {
        RawFormula::True => Formula::True,
        RawFormula::False => Formula::False,
        RawFormula::Cmp(a, op, b) => Formula::Cmp(operand(a)?, *op, operand(b)?),
        RawFormula::Not(g) => Formula::not(resolve(g, env, ctx)?),
        RawFormula::And(a, b) => Formula::and(resolve(a, env, ctx)?, resolve(b, env, ctx)?),
        RawFormula::Or(a, b) => Formula::or(resolve(a, env, ctx)?, resolve(b, env, ctx)?),
    })
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    mode: AtomsMode,
}

struct RawVarset {
    name: String,
    dimension: usize,
    guard: RawFormula,
}

struct RawFamily {
    relation: String,
    bindings: Vec<(String, String)>, // (binding name, varset name)
    guard: RawFormula,
    line: usize,
    col: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, Diagnostic> {
        let t = self.advance();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(diag(t.line, t.col, format!("expected {tok}, found {}", t.tok)))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, usize, usize), Diagnostic> {
        let t = self.advance();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            other => Err(diag(t.line, t.col, format!("expected identifier, found {other}"))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), Diagnostic> {
        let (s, line, col) = self.expect_ident()?;
        if s == kw {
            Ok(())
        } else {
            Err(diag(line, col, format!("expected `{kw}`, found `{s}`")))
        }
    }

    fn expect_int(&mut self) -> Result<usize, Diagnostic> {
        let t = self.advance();
        match t.tok {
            Tok::Int(s) => s
                .parse()
                .map_err(|_| diag(t.line, t.col, format!("integer `{s}` out of range"))),
            other => Err(diag(t.line, t.col, format!("expected integer, found {other}"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    // formula := or_term
    // or_term := and_term ("|" and_term)*
    // and_term := not_term ("&" not_term)*
    // not_term := "!" not_term | "(" formula ")" | "true" | "false" | cmp
    fn formula(&mut self) -> Result<RawFormula, Diagnostic> {
        let mut f = self.and_term()?;
        while self.peek().tok == Tok::Pipe {
            self.advance();
            f = RawFormula::Or(Box::new(f), Box::new(self.and_term()?));
        }
        Ok(f)
    }

    fn and_term(&mut self) -> Result<RawFormula, Diagnostic> {
        let mut f = self.not_term()?;
        while self.peek().tok == Tok::Amp {
            self.advance();
            f = RawFormula::And(Box::new(f), Box::new(self.not_term()?));
        }
        Ok(f)
    }

    fn not_term(&mut self) -> Result<RawFormula, Diagnostic> {
        match &self.peek().tok {
            Tok::Bang => {
                self.advance();
                Ok(RawFormula::Not(Box::new(self.not_term()?)))
            }
            Tok::LParen => {
                self.advance();
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(s) if s == "true" => {
                self.advance();
                Ok(RawFormula::True)
            }
            Tok::Ident(s) if s == "false" => {
                self.advance();
                Ok(RawFormula::False)
            }
            _ => {
                let a = self.operand()?;
                let op = self.comparator()?;
                let b = self.operand()?;
                Ok(RawFormula::Cmp(a, op, b))
            }
        }
    }

    fn comparator(&mut self) -> Result<CmpOp, Diagnostic> {
        let t = self.advance();
        let op = match t.tok {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            other => return Err(diag(t.line, t.col, format!("expected comparator, found {other}"))),
        };
        if self.mode == AtomsMode::Equality && !op.is_equality_op() {
            return Err(diag(
                t.line,
                t.col,
                format!("comparator `{op}` not available over equality atoms (only `=` and `!=`)"),
            ));
        }
        Ok(op)
    }

    fn operand(&mut self) -> Result<RawOperand, Diagnostic> {
        let t = self.advance();
        match t.tok {
            Tok::Ident(binding) => {
                self.expect(Tok::Dot)?;
                let index = self.expect_int()?;
                Ok(RawOperand::Field {
                    binding,
                    index,
                    line: t.line,
                    col: t.col,
                })
            }
            Tok::Hash => {
                let index = self.expect_int()?;
                Ok(RawOperand::ParamRef {
                    index,
                    line: t.line,
                    col: t.col,
                })
            }
            Tok::Int(_) | Tok::Minus => {
                self.pos -= 1;
                Ok(RawOperand::Literal(self.rational()?))
            }
            other => Err(diag(
                t.line,
                t.col,
                format!("expected operand (binding.position, #param or rational), found {other}"),
            )),
        }
    }

    fn rational(&mut self) -> Result<Atom, Diagnostic> {
        let negative = if self.peek().tok == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        let t = self.advance();
        let (numer, line, col) = match t.tok {
            Tok::Int(s) => (s, t.line, t.col),
            other => return Err(diag(t.line, t.col, format!("expected number, found {other}"))),
        };
        let denom = if self.peek().tok == Tok::Slash {
            self.advance();
            let t = self.advance();
            match t.tok {
                Tok::Int(s) => s,
                other => {
                    return Err(diag(t.line, t.col, format!("expected denominator, found {other}")))
                }
            }
        } else {
            "1".to_string()
        };
        let text = if negative {
            format!("-{numer}/{denom}")
        } else {
            format!("{numer}/{denom}")
        };
        Atom::parse(&text).ok_or_else(|| diag(line, col, format!("invalid rational `{text}`")))
    }

    fn machine(&mut self) -> Result<RegisterMachine, Diagnostic> {
        let (name, _, _) = self.expect_ident()?;
        self.expect(Tok::LBrace)?;
        self.expect_keyword("states")?;
        let mut states = Vec::new();
        while matches!(&self.peek().tok, Tok::Ident(s) if s != "registers") {
            states.push(self.expect_ident()?.0);
        }
        self.expect_keyword("registers")?;
        let mut registers = Vec::new();
        while matches!(&self.peek().tok, Tok::Ident(s) if s != "from") {
            if self.peek().tok == Tok::RBrace {
                break;
            }
            registers.push(self.expect_ident()?.0);
        }
        let mut transitions = Vec::new();
        while self.at_keyword("from") {
            self.advance();
            let (from, _, _) = self.expect_ident()?;
            self.expect_keyword("to")?;
            let (to, _, _) = self.expect_ident()?;
            self.expect_keyword("when")?;
            let guard = self.machine_guard()?;
            let mut assigns = Vec::new();
            if self.at_keyword("do") {
                self.advance();
                loop {
                    let (reg, _, _) = self.expect_ident()?;
                    self.expect(Tok::ColonEq)?;
                    let t = self.advance();
                    let rhs = match &t.tok {
                        Tok::Ident(s) if s == "x" => AssignRhs::Input,
                        Tok::Ident(s) if s == "bot" => AssignRhs::Erase,
                        other => {
                            return Err(diag(
                                t.line,
                                t.col,
                                format!("expected `x` or `bot`, found {other}"),
                            ))
                        }
                    };
                    assigns.push((reg, rhs));
                    if self.peek().tok == Tok::Comma {
                        self.advance();
                    } else {
                        break;
                    }
                }
            }
            transitions.push(Transition {
                from,
                to,
                guard,
                assigns,
            });
        }
        self.expect(Tok::RBrace)?;
        Ok(RegisterMachine {
            name,
            states,
            registers,
            transitions,
        })
    }

    fn machine_guard(&mut self) -> Result<Vec<RegLiteral>, Diagnostic> {
        if self.at_keyword("true") {
            self.advance();
            return Ok(Vec::new());
        }
        let mut lits = Vec::new();
        loop {
            let (x, line, col) = self.expect_ident()?;
            if x != "x" {
                return Err(diag(line, col, format!("machine guards compare the input `x`, found `{x}`")));
            }
            let t = self.advance();
            let equal = match t.tok {
                Tok::Eq => true,
                Tok::Ne => false,
                other => {
                    return Err(diag(t.line, t.col, format!("expected `=` or `!=`, found {other}")))
                }
            };
            let (register, _, _) = self.expect_ident()?;
            lits.push(RegLiteral { register, equal });
            if self.peek().tok == Tok::Amp {
                self.advance();
            } else {
                break;
            }
        }
        Ok(lits)
    }
}

/// Parses an instance file. Syntax errors fail fast with one diagnostic;
/// semantic problems are gathered into a list.
pub fn parse(text: &str) -> Result<InstanceFile, Vec<Diagnostic>> {
    let tokens = lex(text).map_err(|d| vec![d])?;
    let mut p = Parser {
        tokens,
        pos: 0,
        mode: AtomsMode::Order,
    };
    let inner = |p: &mut Parser| -> Result<
        (
            AtomsMode,
            Option<FiniteDomain>,
            Signature,
            Vec<RawVarset>,
            Vec<RawFamily>,
            Vec<RegisterMachine>,
            Vec<(String, String)>,
        ),
        Diagnostic,
    > {
        p.expect_keyword("atoms")?;
        let (mode_word, line, col) = p.expect_ident()?;
        let mode = match mode_word.as_str() {
            "order" => AtomsMode::Order,
            "equality" => AtomsMode::Equality,
            other => return Err(diag(line, col, format!("expected `order` or `equality`, found `{other}`"))),
        };
        p.mode = mode;
        let mut domain: Option<FiniteDomain> = None;
        let mut signature = Signature::default();
        let mut varsets = Vec::new();
        let mut families = Vec::new();
        let mut machines = Vec::new();
        let mut edge_decls = Vec::new();
        loop {
            let t = p.peek().clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "domain" => {
                        p.advance();
                        p.expect(Tok::LBrace)?;
                        let mut elements = Vec::new();
                        while p.peek().tok != Tok::RBrace {
                            elements.push(p.expect_ident()?.0);
                        }
                        p.expect(Tok::RBrace)?;
                        if domain.is_some() {
                            return Err(diag(t.line, t.col, "duplicate domain declaration"));
                        }
                        domain = Some(FiniteDomain {
                            elements,
                            relations: Default::default(),
                        });
                    }
                    "relation" => {
                        p.advance();
                        let (name, _, _) = p.expect_ident()?;
                        p.expect(Tok::Slash)?;
                        let arity = p.expect_int()?;
                        p.expect(Tok::Eq)?;
                        p.expect(Tok::LBrace)?;
                        let dom = domain
                            .as_ref()
                            .ok_or_else(|| diag(t.line, t.col, "relation declared before domain"))?;
                        let mut tuples = BTreeSet::new();
                        while p.peek().tok == Tok::LParen {
                            p.advance();
                            let mut tuple = Vec::new();
                            loop {
                                let (e, eline, ecol) = p.expect_ident()?;
                                let idx = dom.element_index(&e).ok_or_else(|| {
                                    diag(eline, ecol, format!("unknown domain element `{e}`"))
                                })?;
                                tuple.push(idx);
                                if p.peek().tok == Tok::Comma {
                                    p.advance();
                                } else {
                                    break;
                                }
                            }
                            p.expect(Tok::RParen)?;
                            if tuple.len() != arity {
                                return Err(diag(
                                    t.line,
                                    t.col,
                                    format!("relation `{name}` tuple of length {} (arity {arity})", tuple.len()),
                                ));
                            }
                            tuples.insert(tuple);
                        }
                        p.expect(Tok::RBrace)?;
                        signature.relations.push((name.clone(), arity));
                        domain.as_mut().unwrap().relations.insert(name, tuples);
                    }
                    "vars" => {
                        p.advance();
                        let (name, _, _) = p.expect_ident()?;
                        p.expect(Tok::LParen)?;
                        let dimension = p.expect_int()?;
                        p.expect(Tok::RParen)?;
                        p.expect_keyword("where")?;
                        let guard = p.formula()?;
                        varsets.push(RawVarset {
                            name,
                            dimension,
                            guard,
                        });
                    }
                    "constraint" => {
                        p.advance();
                        let (relation, rline, rcol) = p.expect_ident()?;
                        p.expect_keyword("on")?;
                        let mut bindings = Vec::new();
                        loop {
                            let (bname, _, _) = p.expect_ident()?;
                            p.expect(Tok::Colon)?;
                            let (vname, _, _) = p.expect_ident()?;
                            bindings.push((bname, vname));
                            if p.peek().tok == Tok::Comma {
                                p.advance();
                            } else {
                                break;
                            }
                        }
                        p.expect_keyword("where")?;
                        let guard = p.formula()?;
                        families.push(RawFamily {
                            relation,
                            bindings,
                            guard,
                            line: rline,
                            col: rcol,
                        });
                    }
                    "machine" => {
                        p.advance();
                        machines.push(p.machine()?);
                    }
                    "edges" => {
                        p.advance();
                        let (mname, _, _) = p.expect_ident()?;
                        p.expect_keyword("with")?;
                        let (rname, _, _) = p.expect_ident()?;
                        edge_decls.push((mname, rname));
                    }
                    other => {
                        return Err(diag(
                            t.line,
                            t.col,
                            format!("expected a declaration (domain, relation, vars, constraint, machine, edges), found `{other}`"),
                        ))
                    }
                },
                other => {
                    return Err(diag(t.line, t.col, format!("expected a declaration, found {other}")))
                }
            }
        }
        Ok((mode, domain, signature, varsets, families, machines, edge_decls))
    };
    let (mode, domain, signature, raw_varsets, raw_families, machines, edge_decls) =
        inner(&mut p).map_err(|d| vec![d])?;

    let mut diags = Vec::new();
    let domain = match domain {
        Some(d) => d,
        None => {
            diags.push(diag(1, 1, "missing domain declaration"));
            return Err(diags);
        }
    };

    // parameters: all rational literals, sorted and deduplicated
    let mut literals = BTreeSet::new();
    for v in &raw_varsets {
        collect_literals(&v.guard, &mut literals);
    }
    for f in &raw_families {
        collect_literals(&f.guard, &mut literals);
    }
    let ctx = ParameterContext::from_atoms(literals);

    let mut varsets = Vec::new();
    for v in &raw_varsets {
        let env = Env {
            bindings: vec![("x", v.dimension, 0)],
        };
        match resolve(&v.guard, &env, &ctx) {
            Ok(guard) => varsets.push(SetBuilder {
                name: v.name.clone(),
                dimension: v.dimension,
                guard,
            }),
            Err(d) => diags.push(d),
        }
    }
    let mut families = Vec::new();
    for f in &raw_families {
        let mut bindings: Vec<(&str, usize, usize)> = Vec::new();
        let mut offset = 0;
        let mut scope_ok = true;
        for (bname, vname) in &f.bindings {
            match raw_varsets.iter().find(|v| &v.name == vname) {
                Some(v) => {
                    bindings.push((bname, v.dimension, offset));
                    offset += v.dimension;
                }
                None => {
                    diags.push(diag(f.line, f.col, format!("unknown builder `{vname}`")));
                    scope_ok = false;
                }
            }
        }
        if !scope_ok {
            continue;
        }
        let env = Env { bindings };
        match resolve(&f.guard, &env, &ctx) {
            Ok(guard) => families.push(ConstraintFamily {
                relation: f.relation.clone(),
                scope: f.bindings.iter().map(|(_, v)| v.clone()).collect(),
                guard,
            }),
            Err(d) => diags.push(d),
        }
    }

    for m in &machines {
        if let Err(e) = m.validate() {
            diags.push(diag(1, 1, format!("machine `{}`: {e}", m.name)));
        }
    }
    for (mname, rname) in &edge_decls {
        if !machines.iter().any(|m| &m.name == mname) {
            diags.push(diag(1, 1, format!("edges declaration names unknown machine `{mname}`")));
        }
        match signature.arity_of(rname) {
            None => diags.push(diag(1, 1, format!("edges declaration names unknown relation `{rname}`"))),
            Some(2) => {}
            Some(k) => diags.push(diag(
                1,
                1,
                format!("edges declaration needs a binary relation, `{rname}` has arity {k}"),
            )),
        }
    }

    if !diags.is_empty() {
        return Err(diags);
    }
    let file = InstanceFile {
        atoms_mode: mode,
        signature,
        domain,
        varsets,
        families,
        machines,
        edge_decls,
        ctx,
    };
    // surface the structural diagnostics of the elaborated instance too
    let instance = file.instance().map_err(|ds| ds)?;
    let structural = instance.validate();
    if !structural.is_empty() {
        return Err(structural.into_iter().map(|m| diag(1, 1, m)).collect());
    }
    Ok(file)
}

impl InstanceFile {
    /// Elaborates the file into a solvable instance: compiles every machine
    /// block, appends the configuration builders to the variable set, and
    /// turns every `edges` declaration into constraint families along the
    /// compiled edge formulas.
    pub fn instance(&self) -> Result<DefinableInstance, Vec<Diagnostic>> {
        let mut builders = self.varsets.clone();
        let mut families = self.families.clone();
        let mut compiled = Vec::new();
        for m in &self.machines {
            match compile(m) {
                Ok(graph) => compiled.push(graph),
                Err(e) => {
                    return Err(vec![diag(1, 1, format!("machine `{}`: {e}", m.name))]);
                }
            }
        }
        for graph in &compiled {
            for b in &graph.vertices.builders {
                if builders.iter().any(|x| x.name == b.name) {
                    return Err(vec![diag(
                        1,
                        1,
                        format!("compiled builder `{}` clashes with an existing builder", b.name),
                    )]);
                }
                builders.push(b.clone());
            }
        }
        for (mname, rname) in &self.edge_decls {
            let graph = compiled
                .iter()
                .find(|g| &g.machine == mname)
                .ok_or_else(|| vec![diag(1, 1, format!("unknown machine `{mname}`"))])?;
            for e in &graph.edges {
                families.push(ConstraintFamily {
                    relation: rname.clone(),
                    scope: vec![e.pre.clone(), e.post.clone()],
                    guard: e.guard.clone(),
                });
            }
        }
        Ok(DefinableInstance {
            signature: self.signature.clone(),
            domain: self.domain.clone(),
            variables: DefinableSet { builders },
            families,
            ctx: self.ctx.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// pretty-printer

fn pretty_operand(o: &Operand, env: &[(String, usize, usize)], ctx: &ParameterContext) -> String {
    match o {
        Operand::Pos(i) => {
            let (name, _, offset) = env
                .iter()
                .rev()
                .find(|(_, dim, offset)| *offset <= *i && *i < offset + dim)
                .expect("position covered by a binding");
            format!("{name}.{}", i - offset + 1)
        }
        Operand::Param(k) => ctx.get(*k).expect("parameter in range").to_string(),
    }
}

/// Precedence: 0 for `|`, 1 for `&`, 2 for `!`, 3 for atoms.
fn pretty_formula(
    f: &Formula,
    env: &[(String, usize, usize)],
    ctx: &ParameterContext,
    min_prec: u8,
) -> String {
    let (text, prec) = match f {
        Formula::True => ("true".to_string(), 3),
        Formula::False => ("false".to_string(), 3),
        Formula::Cmp(a, op, b) => (
            format!(
                "{} {op} {}",
                pretty_operand(a, env, ctx),
                pretty_operand(b, env, ctx)
            ),
            3,
        ),
        Formula::Not(g) => (format!("!{}", pretty_formula(g, env, ctx, 2)), 2),
        Formula::And(a, b) => (
            format!(
                "{} & {}",
                pretty_formula(a, env, ctx, 1),
                pretty_formula(b, env, ctx, 1)
            ),
            1,
        ),
        Formula::Or(a, b) => (
            format!(
                "{} | {}",
                pretty_formula(a, env, ctx, 0),
                pretty_formula(b, env, ctx, 0)
            ),
            0,
        ),
    };
    if prec < min_prec {
        format!("({text})")
    } else {
        text
    }
}

impl InstanceFile {
    /// Canonical source text. `parse(pretty(f)) == f` for every parsed `f`
    /// (binding names are canonicalized, everything else is preserved).
    pub fn pretty(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let mode = match self.atoms_mode {
            AtomsMode::Order => "order",
            AtomsMode::Equality => "equality",
        };
        let _ = writeln!(s, "atoms {mode}");
        let _ = writeln!(s, "domain {{ {} }}", self.domain.elements.join(" "));
        for (name, arity) in &self.signature.relations {
            let tuples = self
                .domain
                .relations
                .get(name)
                .map(|set| {
                    set.iter()
                        .map(|t| {
                            let names: Vec<&str> =
                                t.iter().map(|&e| self.domain.elements[e].as_str()).collect();
                            format!("({})", names.join(", "))
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .unwrap_or_default();
            let _ = writeln!(s, "relation {name}/{arity} = {{ {tuples} }}");
        }
        for v in &self.varsets {
            let env = vec![("x".to_string(), v.dimension, 0)];
            let _ = writeln!(
                s,
                "vars {}({}) where {}",
                v.name,
                v.dimension,
                pretty_formula(&v.guard, &env, &self.ctx, 0)
            );
        }
        for f in &self.families {
            let mut env = Vec::new();
            let mut offset = 0;
            let mut parts = Vec::new();
            for (i, vname) in f.scope.iter().enumerate() {
                let dim = self
                    .varsets
                    .iter()
                    .find(|v| &v.name == vname)
                    .map(|v| v.dimension)
                    .unwrap_or(0);
                let bname = format!("t{}", i + 1);
                parts.push(format!("{bname}: {vname}"));
                env.push((bname, dim, offset));
                offset += dim;
            }
            let _ = writeln!(
                s,
                "constraint {} on {} where {}",
                f.relation,
                parts.join(", "),
                pretty_formula(&f.guard, &env, &self.ctx, 0)
            );
        }
        for m in &self.machines {
            let _ = writeln!(s, "machine {} {{", m.name);
            let _ = writeln!(s, "  states {}", m.states.join(" "));
            let _ = writeln!(s, "  registers {}", m.registers.join(" "));
            for t in &m.transitions {
                let guard = if t.guard.is_empty() {
                    "true".to_string()
                } else {
                    t.guard
                        .iter()
                        .map(|l| {
                            format!("x {} {}", if l.equal { "=" } else { "!=" }, l.register)
                        })
                        .collect::<Vec<_>>()
                        .join(" & ")
                };
                let _ = write!(s, "  from {} to {} when {}", t.from, t.to, guard);
                if !t.assigns.is_empty() {
                    let asgs: Vec<String> = t
                        .assigns
                        .iter()
                        .map(|(r, rhs)| {
                            let rhs = match rhs {
                                AssignRhs::Input => "x",
                                AssignRhs::Erase => "bot",
                            };
                            format!("{r} := {rhs}")
                        })
                        .collect();
                    let _ = write!(s, " do {}", asgs.join(", "));
                }
                let _ = writeln!(s);
            }
            let _ = writeln!(s, "}}");
        }
        for (m, r) in &self.edge_decls {
            let _ = writeln!(s, "edges {m} with {r}");
        }
        s
    }
}
