use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use super::lexer::{lex, Tok, Token};
use super::{ParseError, SourceText, SystemSpec};
use crate::operator::OperatorSpec;
use crate::poly::{MultiIndex, Polynomial};
use crate::rational::Q;

/// Parses a rows section (`rows: ...`, the `rows:` prefix being optional)
/// for an operator on `R^n` acting on `R^source_dim`. The target dimension is
/// the number of rows.
pub fn parse_operator(
    text: &SourceText,
    n: usize,
    source_dim: usize,
) -> Result<OperatorSpec, ParseError> {
    let toks = lex(&text.content)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: toks.len(),
        n,
        source_dim,
    };
    p.skip_separators();
    if p.peek_ident() == Some("rows") {
        p.pos += 1;
        p.expect(&Tok::Colon, "':' after 'rows'")?;
    }
    let rows = p.parse_rows()?;
    if rows.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(build_operator(n, source_dim, &rows))
}

/// Parses a whole system file: a `dim` declaration, one `operator` block and
/// at most one `constraint` block, in any order.
pub fn parse_system(text: &SourceText) -> Result<SystemSpec, ParseError> {
    let toks = lex(&text.content)?;
    if toks.iter().all(|t| t.tok == Tok::Newline) {
        return Err(ParseError::Empty);
    }
    let mut dim: Option<(usize, usize)> = None;
    let mut blocks: Vec<Block> = Vec::new();
    let mut pos = 0;
    while pos < toks.len() {
        let t = &toks[pos];
        match &t.tok {
            Tok::Newline | Tok::Semi => pos += 1,
            Tok::Ident(kw) if kw == "dim" => {
                if dim.is_some() {
                    return Err(ParseError::DuplicateBlock {
                        line: t.line,
                        what: "dim".into(),
                    });
                }
                let v = match toks.get(pos + 1) {
                    Some(Token { tok: Tok::Int(v), .. }) => small_int(v, t)?,
                    _ => return Err(syntax(t, "expected an integer after 'dim'")),
                };
                if v == 0 {
                    return Err(syntax(t, "dimension must be positive"));
                }
                dim = Some((v, t.line));
                pos += 2;
            }
            Tok::Ident(kw) if kw == "operator" || kw == "constraint" => {
                let name = match toks.get(pos + 1) {
                    Some(Token { tok: Tok::Ident(name), .. }) => name.clone(),
                    _ => return Err(syntax(t, &format!("expected a name after '{kw}'"))),
                };
                let mut open = pos + 2;
                while toks.get(open).is_some_and(|x| x.tok == Tok::Newline) {
                    open += 1;
                }
                if toks.get(open).map(|x| &x.tok) != Some(&Tok::LBrace) {
                    return Err(syntax(toks.get(open).unwrap_or(t), "expected '{'"));
                }
                let close = (open + 1..toks.len())
                    .find(|&i| toks[i].tok == Tok::RBrace)
                    .ok_or_else(|| syntax(t, "unterminated block, expected '}'"))?;
                if let Some(inner) = (open + 1..close).find(|&i| toks[i].tok == Tok::LBrace) {
                    return Err(syntax(&toks[inner], "nested '{' inside a block"));
                }
                let is_constraint = kw == "constraint";
                if blocks.iter().any(|b| b.is_constraint == is_constraint) {
                    return Err(ParseError::DuplicateBlock {
                        line: t.line,
                        what: kw.clone(),
                    });
                }
                blocks.push(Block {
                    is_constraint,
                    name,
                    line: t.line,
                    start: open + 1,
                    end: close,
                });
                pos = close + 1;
            }
            _ => return Err(syntax(t, "expected 'dim', 'operator' or 'constraint'")),
        }
    }
    let (n, _) = dim.ok_or_else(|| ParseError::Missing("'dim' declaration".into()))?;
    let a_block = blocks
        .iter()
        .find(|b| !b.is_constraint)
        .ok_or_else(|| ParseError::Missing("'operator' block".into()))?;
    let (a, a_line) = parse_block(&toks, a_block, n)?;
    let c = match blocks.iter().find(|b| b.is_constraint) {
        None => None,
        Some(b) => {
            let (c, c_line) = parse_block(&toks, b, n)?;
            if c.source_dim() != a.target_dim() {
                return Err(ParseError::DimensionMismatch {
                    line: c_line.max(a_line),
                    msg: format!(
                        "operator {} maps into R^{} but constraint {} acts on R^{}",
                        a_block.name,
                        a.target_dim(),
                        b.name,
                        c.source_dim()
                    ),
                });
            }
            Some((b.name.clone(), c))
        }
    };
    let (c_name, c) = match c {
        Some((name, c)) => (Some(name), Some(c)),
        None => (None, None),
    };
    Ok(SystemSpec {
        n,
        a_name: a_block.name.clone(),
        a,
        c_name,
        c,
    })
}

struct Block {
    is_constraint: bool,
    name: String,
    line: usize,
    start: usize,
    end: usize,
}

fn parse_block(toks: &[Token], b: &Block, n: usize) -> Result<(OperatorSpec, usize), ParseError> {
    let mut p = Parser {
        toks,
        pos: b.start,
        end: b.end,
        n,
        source_dim: 0,
    };
    p.skip_separators();
    p.expect_keyword("from")?;
    let from = p.expect_int()?;
    p.expect_keyword("to")?;
    let to = p.expect_int()?;
    if from == 0 || to == 0 {
        return Err(ParseError::DimensionMismatch {
            line: b.line,
            msg: "block dimensions must be positive".into(),
        });
    }
    p.source_dim = from;
    p.skip_separators();
    p.expect_keyword("rows")?;
    p.expect(&Tok::Colon, "':' after 'rows'")?;
    let rows = p.parse_rows()?;
    if rows.len() != to {
        return Err(ParseError::DimensionMismatch {
            line: b.line,
            msg: format!(
                "block {} declares {} rows but lists {}",
                b.name,
                to,
                rows.len()
            ),
        });
    }
    Ok((build_operator(n, from, &rows), b.line))
}

/// One parsed row: a polynomial per source component.
struct Row {
    entries: Vec<Polynomial>,
}

fn build_operator(n: usize, source_dim: usize, rows: &[Row]) -> OperatorSpec {
    let mut op = OperatorSpec::zero(n, source_dim, rows.len());
    for (i, row) in rows.iter().enumerate() {
        for (j, p) in row.entries.iter().enumerate() {
            for (a, c) in p.terms() {
                op.add_term(i, j, a.clone(), c.clone());
            }
        }
    }
    op
}

fn syntax(t: &Token, msg: &str) -> ParseError {
    ParseError::Syntax {
        line: t.line,
        col: t.col,
        msg: msg.into(),
    }
}

fn small_int(v: &BigInt, t: &Token) -> Result<usize, ParseError> {
    v.to_usize()
        .filter(|&x| x <= 1 << 16)
        .ok_or_else(|| syntax(t, "integer out of range"))
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    end: usize,
    n: usize,
    source_dim: usize,
}

enum Atom {
    Derivatives(Vec<usize>),
    Component(usize),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        (self.pos < self.end).then(|| &self.toks[self.pos])
    }

    fn peek_tok(&self) -> Option<&'a Tok> {
        self.peek().map(|t| &t.tok)
    }

    fn peek_ident(&self) -> Option<&'a str> {
        match self.peek_tok() {
            Some(Tok::Ident(s)) => Some(s.as_str()),
            _ => None,
        }
    }

    fn here(&self) -> Token {
        self.peek().cloned().unwrap_or_else(|| {
            let last = self
                .toks
                .get(self.end.saturating_sub(1))
                .or(self.toks.last());
            Token {
                tok: Tok::Newline,
                line: last.map_or(1, |t| t.line),
                col: last.map_or(1, |t| t.col),
            }
        })
    }

    fn err(&self, msg: &str) -> ParseError {
        syntax(&self.here(), msg)
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek_tok(), Some(Tok::Newline | Tok::Semi)) {
            self.pos += 1;
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek_tok(), Some(Tok::Newline)) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), ParseError> {
        if self.peek_tok() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {what}")))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        self.skip_newlines();
        if self.peek_ident() == Some(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{kw}'")))
        }
    }

    fn expect_int(&mut self) -> Result<usize, ParseError> {
        self.skip_newlines();
        match self.peek() {
            Some(t @ Token { tok: Tok::Int(v), .. }) => {
                self.pos += 1;
                small_int(v, t)
            }
            _ => Err(self.err("expected an integer")),
        }
    }

    fn parse_rows(&mut self) -> Result<Vec<Row>, ParseError> {
        let mut rows = Vec::new();
        loop {
            self.skip_separators();
            if self.peek().is_none() {
                break;
            }
            rows.push(self.parse_row(rows.len() + 1)?);
            if self.peek().is_some() && !matches!(self.peek_tok(), Some(Tok::Newline | Tok::Semi)) {
                return Err(self.err("expected ';' or a line break between rows"));
            }
        }
        Ok(rows)
    }

    /// A row is a signed sum of terms. A line that begins with `+` or `-`
    /// continues the previous row.
    fn parse_row(&mut self, row_no: usize) -> Result<Row, ParseError> {
        let line = self.here().line;
        let mut entries = vec![Polynomial::zero(self.n); self.source_dim];
        let mut sign = Q::one();
        if let Some(Tok::Plus | Tok::Minus) = self.peek_tok() {
            if self.peek_tok() == Some(&Tok::Minus) {
                sign = -sign;
            }
            self.pos += 1;
        }
        loop {
            if let Some((comp, p)) = self.parse_term(sign.clone())? {
                entries[comp] = &entries[comp] + &p;
            }
            let save = self.pos;
            self.skip_newlines();
            match self.peek_tok() {
                Some(Tok::Plus) => sign = Q::one(),
                Some(Tok::Minus) => sign = -Q::one(),
                _ => {
                    self.pos = save;
                    break;
                }
            }
            self.pos += 1;
            self.skip_newlines();
        }
        let mut degrees: Vec<u32> = entries
            .iter()
            .flat_map(|p| p.terms().map(|(a, _)| a.degree()).collect::<Vec<_>>())
            .collect();
        degrees.sort_unstable();
        degrees.dedup();
        if degrees.len() > 1 {
            return Err(ParseError::NonHomogeneousRow {
                line,
                row: row_no,
                orders: degrees,
            });
        }
        Ok(Row { entries })
    }

    /// `[RATIONAL] factor* COMP`, or a bare `0`. Returns `None` for a zero term.
    fn parse_term(&mut self, sign: Q) -> Result<Option<(usize, Polynomial)>, ParseError> {
        let mut coef = sign;
        let mut saw_literal = false;
        if let Some(Tok::Int(_)) = self.peek_tok() {
            coef *= self.parse_rational()?;
            saw_literal = true;
            self.skip_star();
        }
        let mut poly = Polynomial::constant(self.n, coef.clone());
        let mut saw_factor = false;
        loop {
            match self.peek_tok() {
                Some(Tok::LParen) => {
                    self.pos += 1;
                    let inner = self.parse_poly_expr()?;
                    self.expect(&Tok::RParen, "')'")?;
                    poly = &poly * &inner;
                    saw_factor = true;
                    self.skip_star();
                }
                Some(Tok::Ident(_)) => match self.parse_atom()? {
                    Atom::Derivatives(idx) => {
                        poly = poly.mul_monomial(&self.monomial_of(&idx));
                        saw_factor = true;
                        self.skip_star();
                    }
                    Atom::Component(c) => return Ok(Some((c, poly))),
                },
                _ => {
                    if saw_literal && !saw_factor && coef.is_zero() {
                        return Ok(None);
                    }
                    return Err(self.err("expected a component such as u1 or f1"));
                }
            }
        }
    }

    /// Signed sum of `[RATIONAL] monomial` terms inside parentheses.
    fn parse_poly_expr(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = Polynomial::zero(self.n);
        let mut sign = Q::one();
        self.skip_newlines();
        if let Some(Tok::Plus | Tok::Minus) = self.peek_tok() {
            if self.peek_tok() == Some(&Tok::Minus) {
                sign = -sign;
            }
            self.pos += 1;
        }
        loop {
            self.skip_newlines();
            let mut coef = sign.clone();
            let mut saw_any = false;
            if let Some(Tok::Int(_)) = self.peek_tok() {
                coef *= self.parse_rational()?;
                saw_any = true;
                self.skip_star();
            }
            let mut mono = MultiIndex::zero(self.n);
            while let Some(Tok::Ident(_)) = self.peek_tok() {
                match self.parse_atom()? {
                    Atom::Derivatives(idx) => {
                        mono = mono.add(&self.monomial_of(&idx));
                        saw_any = true;
                        self.skip_star();
                    }
                    Atom::Component(_) => {
                        return Err(self.err("components are not allowed inside parentheses"))
                    }
                }
            }
            if !saw_any {
                return Err(self.err("expected a coefficient or derivative"));
            }
            acc.add_term(mono, coef);
            self.skip_newlines();
            match self.peek_tok() {
                Some(Tok::Plus) => sign = Q::one(),
                Some(Tok::Minus) => sign = -Q::one(),
                _ => break,
            }
            self.pos += 1;
        }
        Ok(acc)
    }

    fn skip_star(&mut self) {
        if self.peek_tok() == Some(&Tok::Star) {
            self.pos += 1;
        }
    }

    fn parse_rational(&mut self) -> Result<Q, ParseError> {
        let Some(Tok::Int(num)) = self.peek_tok() else {
            return Err(self.err("expected a number"));
        };
        self.pos += 1;
        if self.peek_tok() == Some(&Tok::Slash) {
            self.pos += 1;
            match self.peek_tok() {
                Some(Tok::Int(den)) if !den.is_zero() => {
                    self.pos += 1;
                    Ok(Q::new(num.clone(), den.clone()))
                }
                Some(Tok::Int(_)) => Err(self.err("zero denominator")),
                _ => Err(self.err("expected a denominator after '/'")),
            }
        } else {
            Ok(Q::from_integer(num.clone()))
        }
    }

    /// Consumes one identifier: either a run of derivatives `d1`, `d1d2`
    /// (the last one may carry `^k`) or a component `u3` / `f3`.
    fn parse_atom(&mut self) -> Result<Atom, ParseError> {
        let t = self.here();
        let Tok::Ident(name) = &t.tok else {
            return Err(self.err("expected an identifier"));
        };
        self.pos += 1;
        if let Some(rest) = name.strip_prefix(['u', 'f']) {
            let idx: usize = rest
                .parse()
                .map_err(|_| syntax(&t, &format!("unknown identifier '{name}'")))?;
            if idx == 0 || idx > self.source_dim {
                return Err(ParseError::UnknownComponent {
                    line: t.line,
                    name: name.clone(),
                    dim: self.source_dim,
                });
            }
            return Ok(Atom::Component(idx - 1));
        }
        let parts = split_derivatives(name)
            .ok_or_else(|| syntax(&t, &format!("unknown identifier '{name}'")))?;
        let mut idx = Vec::new();
        for (k, &d) in parts.iter().enumerate() {
            if d == 0 || d > self.n {
                return Err(ParseError::UnknownDerivative {
                    line: t.line,
                    index: d,
                    dim: self.n,
                });
            }
            let mut power = 1;
            if k + 1 == parts.len() && self.peek_tok() == Some(&Tok::Caret) {
                self.pos += 1;
                let pt = self.here();
                match &pt.tok {
                    Tok::Int(v) => {
                        power = small_int(v, &pt)?;
                        self.pos += 1;
                    }
                    _ => return Err(self.err("expected an exponent after '^'")),
                }
            }
            idx.extend(std::iter::repeat_n(d - 1, power));
        }
        Ok(Atom::Derivatives(idx))
    }

    fn monomial_of(&self, idx: &[usize]) -> MultiIndex {
        let mut e = vec![0u32; self.n];
        for &i in idx {
            e[i] += 1;
        }
        MultiIndex::new(e)
    }
}

fn split_derivatives(name: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    let mut rest = name;
    while !rest.is_empty() {
        rest = rest.strip_prefix('d')?;
        let digits = rest.chars().take_while(char::is_ascii_digit).count();
        if digits == 0 {
            return None;
        }
        out.push(rest[..digits].parse().ok()?);
        rest = &rest[digits..];
    }
    (!out.is_empty()).then_some(out)
}
