//! Text grammar: `u1_3` even jets, `s1_0_2` odd jets (`th1_2` for level 0),
//! bare parameter names, `+ - * ^ /`, rational literals `p/q`, parentheses.

use crate::coeff::Rf;
use crate::diffpoly::{Ctx, DiffPoly, Generator, Mono};
use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn lex(src: &str) -> Result<Lexer> {
    let mut toks = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let ch = chars[i];
        if ch == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (l0, c0) = (line, col);
        if ch.is_ascii_digit() {
            let st = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[st..i].iter().collect();
            col += i - st;
            toks.push((Tok::Int(s.parse().unwrap()), l0, c0));
        } else if ch.is_ascii_alphabetic() {
            let st = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - st;
            toks.push((Tok::Ident(chars[st..i].iter().collect()), l0, c0));
        } else if "+-*^/()".contains(ch) {
            toks.push((Tok::Sym(ch), l0, c0));
            i += 1;
            col += 1;
        } else {
            return Err(Error::Syntax { line: l0, col: c0, msg: format!("unexpected character `{ch}`") });
        }
    }
    toks.push((Tok::End, line, col));
    Ok(Lexer { toks })
}

struct Parser<'a> {
    ctx: &'a Ctx,
    lx: Lexer,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.lx.toks[self.pos].0
    }

    fn err(&self, msg: &str) -> Error {
        let (_, line, col) = &self.lx.toks[self.pos];
        Error::Syntax { line: *line, col: *col, msg: msg.into() }
    }

    fn bump(&mut self) -> Tok {
        let t = self.lx.toks[self.pos].0.clone();
        if self.pos + 1 < self.lx.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<DiffPoly> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Sym('+') => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Tok::Sym('-') => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<DiffPoly> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Sym('*') => {
                    self.bump();
                    acc = acc.mul(&self.unary()?);
                }
                Tok::Sym('/') => {
                    self.bump();
                    let d = self.unary()?;
                    let c = constant_of(&d).ok_or_else(|| self.err("division by a non-constant"))?;
                    if c.is_zero() {
                        return Err(self.err("division by zero"));
                    }
                    acc = acc.scale(&c.inv());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<DiffPoly> {
        match self.peek() {
            Tok::Sym('-') => {
                self.bump();
                Ok(self.unary()?.neg())
            }
            Tok::Sym('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<DiffPoly> {
        let base = self.atom()?;
        if let Tok::Sym('^') = self.peek() {
            self.bump();
            match self.bump() {
                Tok::Int(n) => {
                    let n: u32 = n.try_into().map_err(|_| self.err("exponent too large"))?;
                    return Ok(base.pow(n));
                }
                _ => return Err(self.err("expected integer exponent")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<DiffPoly> {
        let here = self.pos;
        match self.bump() {
            Tok::Int(n) => Ok(DiffPoly::rational(self.ctx, BigRational::from_integer(n))),
            Tok::Ident(s) => {
                self.pos = here;
                let g = self.ident(&s)?;
                self.bump();
                Ok(g)
            }
            Tok::Sym('(') => {
                let e = self.expr()?;
                match self.bump() {
                    Tok::Sym(')') => Ok(e),
                    _ => {
                        self.pos -= 1;
                        Err(self.err("expected `)`"))
                    }
                }
            }
            Tok::End => Err(self.err("unexpected end of input")),
            t => {
                self.pos = here;
                Err(self.err(&format!("unexpected token {t:?}")))
            }
        }
    }

    fn ident(&self, s: &str) -> Result<DiffPoly> {
        if let Some(i) = self.ctx.param_index(s) {
            return Ok(DiffPoly::constant(self.ctx, Rf::var(i)));
        }
        let (head, rest) = if let Some(r) = s.strip_prefix("th") {
            ("th", r)
        } else if let Some(r) = s.strip_prefix('u') {
            ("u", r)
        } else if let Some(r) = s.strip_prefix('s') {
            ("s", r)
        } else {
            return Err(Error::UnknownGenerator(s.into()));
        };
        if !rest.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(Error::UnknownGenerator(s.into()));
        }
        let parts: Vec<&str> = rest.split('_').collect();
        let nums: Option<Vec<usize>> = parts.iter().map(|p| if p.is_empty() { None } else { p.parse().ok() }).collect();
        let want = match head {
            "u" | "th" => 2,
            _ => 3,
        };
        let nums = match nums {
            Some(n) if n.len() == want => n,
            _ => return Err(self.err(&format!("malformed generator `{s}`"))),
        };
        let field = nums[0];
        if field == 0 || field > self.ctx.n_fields() {
            return Err(Error::UnknownGenerator(s.into()));
        }
        let g = match head {
            "u" => Generator::u(field - 1, nums[1]),
            "th" => Generator::sigma(field - 1, 0, nums[1]),
            _ => {
                if nums[1] > self.ctx.max_odd_level {
                    return Err(Error::LevelOutOfRange(nums[1]));
                }
                Generator::sigma(field - 1, nums[1], nums[2])
            }
        };
        Ok(DiffPoly::gen(self.ctx, g))
    }
}

fn constant_of(p: &DiffPoly) -> Option<Rf> {
    if p.is_zero() {
        return Some(Rf::zero());
    }
    if p.num_terms() == 1 {
        let (m, c) = p.terms().next().unwrap();
        if *m == Mono::one() {
            return Some(c.clone());
        }
    }
    None
}

pub fn parse_poly(ctx: &Ctx, src: &str) -> Result<DiffPoly> {
    let lx = lex(src)?;
    let mut p = Parser { ctx, lx, pos: 0 };
    if *p.peek() == Tok::End {
        return Err(p.err("empty expression"));
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffpoly::JetContext;

    fn ctx() -> Ctx {
        JetContext::new(&["u"], 3, &[("eps", -1), ("c", 0)]).unwrap()
    }

    #[test]
    fn kdv_density() {
        let c = ctx();
        let p = parse_poly(&c, "u1_0 * u1_1 + 1/12 * eps^2 * u1_3").unwrap();
        assert_eq!(p.num_terms(), 2);
        assert_eq!(p.diff_degree().unwrap(), 1);
    }

    #[test]
    fn odd_square_vanishes() {
        assert!(parse_poly(&ctx(), "th1_0 * th1_0").unwrap().is_zero());
    }

    #[test]
    fn malformed_generator() {
        assert!(matches!(parse_poly(&ctx(), "u1_"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_poly(&ctx(), "u1_2 +"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_poly(&ctx(), "w"), Err(Error::UnknownGenerator(_))));
    }

    #[test]
    fn round_trip() {
        let c = ctx();
        for src in [
            "-3/4*c*eps^2*u1_0^2*s1_0_1 + s1_2_0*th1_3 - 7",
            "(c + 1)/(2) * u1_2 * s1_0_0 * s1_1_0",
            "(u1_0 - eps*u1_1)^3",
        ] {
            let p = parse_poly(&c, src).unwrap();
            let q = parse_poly(&c, &p.to_text()).unwrap();
            assert_eq!(p, q, "{src}");
        }
    }

    #[test]
    fn error_position() {
        match parse_poly(&ctx(), "u1_0 *\n  ) ") {
            Err(Error::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 3)),
            e => panic!("{e:?}"),
        }
    }
}
