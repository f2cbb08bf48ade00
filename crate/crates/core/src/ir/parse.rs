use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::expr::{BinOp, Expr, Var, VarName};
use crate::geometry::CacheGeometry;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unexpected character `{ch}` at {at}")]
    Char { ch: char, at: usize },
    #[error("expected {expected} at {at}, found `{found}`")]
    Expected { expected: String, found: String, at: usize },
    #[error("unknown identifier `{0}`")]
    Unknown(String),
    #[error("bad number `{0}`")]
    Number(String),
    #[error("`{0}` needs a cache geometry")]
    NoGeometry(&'static str),
    #[error("`sline` needs a partition boundary")]
    NoPartition,
    #[error("addr({k}) out of range: the path performs {n} accesses")]
    AddrIndex { k: usize, n: usize },
}

/// Names the parser can resolve beyond plain variables.
#[derive(Clone, Debug, Default)]
pub struct ParseCtx {
    pub geometry: Option<CacheGeometry>,
    /// First visible set index for `sline`.
    pub visible_from: Option<u64>,
    /// Address expressions bound to `addr(0)`, `addr(1)`, ...
    pub addrs: Vec<Expr>,
}

impl ParseCtx {
    pub fn with_geometry(g: CacheGeometry) -> Self {
        ParseCtx { geometry: Some(g), ..ParseCtx::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(&'static str),
}

const SYMBOLS: [&str; 22] = [
    "==>", "<=u", ">=u", "<<", ">>", "==", "!=", "&&", "||", "<u", ">u", "+", "-", "*", "&", "|", "!", "(",
    ")", ",", ":", "=",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((Tok::Num(src[start..i].to_string()), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        for s in SYMBOLS {
            if src[i..].starts_with(s) {
                out.push((Tok::Sym(s), i));
                i += s.len();
                continue 'outer;
            }
        }
        return Err(ParseError::Char { ch: c, at: i });
    }
    Ok(out)
}

/// Parses the textual expression syntax printed by `Expr`'s `Display`
/// (and `display_shared`), plus the cache helpers `tag`, `index`,
/// `offset`, `sline` and the access-address selector `addr(k)`.
pub fn parse_expr(src: &str, ctx: &ParseCtx) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, ctx, lets: BTreeMap::new() };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.expected("end of input"));
    }
    Ok(e)
}

struct Parser<'c> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    ctx: &'c ParseCtx,
    lets: BTreeMap<String, Expr>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn expected(&self, what: &str) -> ParseError {
        let (found, at) = match self.toks.get(self.pos) {
            Some((Tok::Num(s) | Tok::Ident(s), at)) => (s.clone(), *at),
            Some((Tok::Sym(s), at)) => (s.to_string(), *at),
            None => ("end of input".into(), usize::MAX),
        };
        ParseError::Expected { expected: what.into(), found, at }
    }

    fn eat(&mut self, s: &'static str) -> bool {
        if self.peek() == Some(&Tok::Sym(s)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.expected(s))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.expected("identifier")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Ident("let".into())) {
            self.pos += 1;
            let name = self.ident()?;
            self.expect("=")?;
            let bound = self.expr()?;
            match self.peek() {
                Some(Tok::Ident(s)) if s == "in" => self.pos += 1,
                _ => return Err(self.expected("in")),
            }
            let shadowed = self.lets.insert(name.clone(), bound);
            let body = self.expr();
            match shadowed {
                Some(old) => self.lets.insert(name, old),
                None => self.lets.remove(&name),
            };
            return body;
        }
        self.implies()
    }

    fn implies(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.lor()?;
        if self.eat("==>") {
            let rhs = self.implies()?;
            return Ok(Expr::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn lor(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.land()?;
        while self.eat("||") {
            e = Expr::lor(e, self.land()?);
        }
        Ok(e)
    }

    fn land(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.cmp()?;
        while self.eat("&&") {
            e = Expr::land(e, self.cmp()?);
        }
        Ok(e)
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let a = self.bor()?;
        let ops: [(&'static str, fn(Expr, Expr) -> Expr); 6] = [
            ("==", Expr::eq),
            ("!=", Expr::ne),
            ("<u", Expr::ult),
            ("<=u", Expr::ule),
            (">u", |a, b| Expr::ult(b, a)),
            (">=u", |a, b| Expr::ule(b, a)),
        ];
        for (sym, mk) in ops {
            if self.eat(sym) {
                let b = self.bor()?;
                return Ok(mk(a, b));
            }
        }
        Ok(a)
    }

    fn left_assoc(
        &mut self,
        ops: &[(&'static str, BinOp)],
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut e = next(self)?;
        'again: loop {
            for (sym, op) in ops {
                if self.eat(sym) {
                    e = Expr::mk_binary(*op, e, next(self)?);
                    continue 'again;
                }
            }
            return Ok(e);
        }
    }

    fn bor(&mut self) -> Result<Expr, ParseError> {
        self.left_assoc(&[("|", BinOp::Or)], Self::band)
    }

    fn band(&mut self) -> Result<Expr, ParseError> {
        self.left_assoc(&[("&", BinOp::And)], Self::shift)
    }

    fn shift(&mut self) -> Result<Expr, ParseError> {
        self.left_assoc(&[("<<", BinOp::Shl), (">>", BinOp::Lshr)], Self::sum)
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        self.left_assoc(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::product)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        self.left_assoc(&[("*", BinOp::Mul)], Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat("!") {
            return Ok(Expr::not(self.unary()?));
        }
        self.atom()
    }

    fn number(&mut self, text: &str) -> Result<Expr, ParseError> {
        let value = if let Some(hex) = text.strip_prefix("0x") {
            u64::from_str_radix(hex, 16)
        } else {
            text.parse()
        }
        .map_err(|_| ParseError::Number(text.into()))?;
        let width = if self.eat(":") {
            match self.peek() {
                Some(Tok::Num(w)) => {
                    let w: u8 = w.parse().map_err(|_| ParseError::Number(w.clone()))?;
                    self.pos += 1;
                    if w == 0 || w > 64 {
                        return Err(ParseError::Number(alloc::format!("{text}:{w}")));
                    }
                    w
                }
                _ => return Err(self.expected("width")),
            }
        } else {
            64
        };
        Ok(Expr::bv(value, width))
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn arity(&self, name: &str, args: &[Expr], n: usize) -> Result<(), ParseError> {
        if args.len() != n {
            return Err(ParseError::Expected {
                expected: alloc::format!("{n} arguments to {name}"),
                found: alloc::format!("{}", args.len()),
                at: self.toks.get(self.pos.saturating_sub(1)).map_or(0, |t| t.1),
            });
        }
        Ok(())
    }

    fn width_arg(e: &Expr) -> Result<u8, ParseError> {
        match e.as_const() {
            Some((w @ (1 | 2 | 4 | 8), _)) => Ok(w as u8),
            _ => Err(ParseError::Number(alloc::format!("{e}"))),
        }
    }

    fn geometry(&self, name: &'static str) -> Result<CacheGeometry, ParseError> {
        self.ctx.geometry.ok_or(ParseError::NoGeometry(name))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.expected("expression")),
        };
        self.pos += 1;
        let name = match tok {
            Tok::Num(text) => return self.number(&text),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                return Ok(e);
            }
            Tok::Sym(_) => {
                self.pos -= 1;
                return Err(self.expected("expression"));
            }
            Tok::Ident(name) => name,
        };
        if let Some(e) = self.lets.get(&name) {
            return Ok(e.clone());
        }
        let call = self.peek() == Some(&Tok::Sym("("));
        if call {
            let args = self.args()?;
            return match name.as_str() {
                "ite" => {
                    self.arity("ite", &args, 3)?;
                    Ok(Expr::ite(args[0].clone(), args[1].clone(), args[2].clone()))
                }
                "LOAD" => {
                    self.arity("LOAD", &args, 3)?;
                    Ok(Expr::load(args[0].clone(), args[1].clone(), Self::width_arg(&args[2])?))
                }
                "STORE" => {
                    self.arity("STORE", &args, 4)?;
                    let w = Self::width_arg(&args[3])?;
                    Ok(Expr::store(args[0].clone(), args[1].clone(), args[2].clone(), w))
                }
                "MEM" => {
                    self.arity("MEM", &args, 1)?;
                    match args[0].as_const() {
                        Some((b, _)) if b <= 0xff => Ok(Expr::mem_const(b as u8)),
                        _ => Err(ParseError::Number(alloc::format!("{}", args[0]))),
                    }
                }
                "tag" => {
                    self.arity("tag", &args, 1)?;
                    Ok(self.geometry("tag")?.tag_expr(args[0].clone()))
                }
                "index" => {
                    self.arity("index", &args, 1)?;
                    Ok(self.geometry("index")?.index_expr(args[0].clone()))
                }
                "offset" => {
                    self.arity("offset", &args, 1)?;
                    Ok(self.geometry("offset")?.offset_expr(args[0].clone()))
                }
                "sline" => {
                    self.arity("sline", &args, 1)?;
                    let g = self.geometry("sline")?;
                    let from = self.ctx.visible_from.ok_or(ParseError::NoPartition)?;
                    Ok(Expr::ule(Expr::c64(from), g.index_expr(args[0].clone())))
                }
                "addr" => {
                    self.arity("addr", &args, 1)?;
                    let k = match args[0].as_const() {
                        Some((k, _)) => k as usize,
                        None => return Err(ParseError::Number(alloc::format!("{}", args[0]))),
                    };
                    self.ctx
                        .addrs
                        .get(k)
                        .cloned()
                        .ok_or(ParseError::AddrIndex { k, n: self.ctx.addrs.len() })
                }
                _ => Err(ParseError::Unknown(name)),
            };
        }
        match name.as_str() {
            "true" => return Ok(Expr::tt()),
            "false" => return Ok(Expr::ff()),
            _ => {}
        }
        parse_var(&name).map(Expr::var).ok_or(ParseError::Unknown(name))
    }
}

/// `X0`..`X30` (either case), `Z`, `N`, `M`, `_`, each optionally primed.
pub fn parse_var(s: &str) -> Option<Var> {
    let (base, primed) = match s.strip_suffix('\'') {
        Some(b) => (b, true),
        None => (s, false),
    };
    let name = match base {
        "Z" => VarName::Z,
        "N" => VarName::N,
        "M" => VarName::M,
        "_" => VarName::Discard,
        _ => {
            let digits = base.strip_prefix('X').or_else(|| base.strip_prefix('x'))?;
            if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
                return None;
            }
            let n: u8 = digits.parse().ok()?;
            if n >= 31 {
                return None;
            }
            VarName::X(n)
        }
    };
    Some(Var { name, primed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s, &ParseCtx::with_geometry(CacheGeometry::default())).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(p("X1 + X2 * X3"), Expr::add(p("X1"), p("(X2 * X3)")));
        assert_eq!(p("X1 == 0 && Z || N"), Expr::lor(Expr::land(p("(X1 == 0)"), p("Z")), p("N")));
        assert_eq!(p("Z ==> N ==> Z'"), Expr::implies(p("Z"), Expr::implies(p("N"), p("Z'"))));
    }

    #[test]
    fn printer_output_parses_back() {
        let e = p("ite(!(X1 == X2'), LOAD(STORE(M, X3, X4, 8), X3 + 8, 8), 0x80000000) <u 7:64 && (3:8 == 3:8)");
        assert_eq!(p(&alloc::format!("{e}")), e);
        assert_eq!(p(&alloc::format!("{}", e.display_shared())), e);
    }

    #[test]
    fn shared_display_uses_lets() {
        let a = Expr::add(p("X1"), Expr::c64(8));
        let e = Expr::eq(Expr::mul(a.clone(), a.clone()), a);
        let text = alloc::format!("{}", e.display_shared());
        assert!(text.starts_with("let t0 = (X1 + 8) in "), "{text}");
        assert_eq!(p(&text), e);
    }

    #[test]
    fn cache_helpers_expand() {
        let g = CacheGeometry::default();
        assert_eq!(p("index(X1)"), g.index_expr(p("X1")));
        let ctx = ParseCtx { geometry: Some(g), visible_from: Some(61), addrs: alloc::vec![p("X10 + 128")] };
        let s = parse_expr("sline(addr(0))", &ctx).unwrap();
        assert_eq!(s, Expr::ule(Expr::c64(61), g.index_expr(p("X10 + 128"))));
        assert!(matches!(parse_expr("addr(1)", &ctx), Err(ParseError::AddrIndex { k: 1, n: 1 })));
        assert_eq!(parse_expr("sline(X1)", &ParseCtx::with_geometry(g)), Err(ParseError::NoPartition));
    }

    #[test]
    fn variables() {
        assert_eq!(parse_var("X30'"), Some(Var::x(30).primed()));
        assert_eq!(parse_var("x0"), Some(Var::x(0)));
        assert_eq!(parse_var("X31"), None);
        assert_eq!(parse_var("X01"), None);
        assert_eq!(parse_var("_"), Some(Var::DISCARD));
    }

    #[test]
    fn errors() {
        let ctx = ParseCtx::default();
        assert!(matches!(parse_expr("X1 +", &ctx), Err(ParseError::Expected { .. })));
        assert!(matches!(parse_expr("foo", &ctx), Err(ParseError::Unknown(_))));
        assert!(matches!(parse_expr("tag(X1)", &ctx), Err(ParseError::NoGeometry("tag"))));
        assert!(matches!(parse_expr("X1 # 2", &ctx), Err(ParseError::Char { ch: '#', .. })));
    }
}
