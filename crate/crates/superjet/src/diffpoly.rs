//! The graded commutative ring of differential polynomials in even jets
//! `u^{α,s}` and square-zero odd jets `σ_{α,m}^s`.

use crate::coeff::{Poly, Rf, Q};
use crate::error::{Error, Result};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    /// Contribution to the differential degree (ε carries −1).
    pub weight: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetContext {
    pub field_names: Vec<String>,
    pub max_odd_level: usize,
    pub params: Vec<Param>,
}

pub type Ctx = Arc<JetContext>;

impl JetContext {
    pub fn new(field_names: &[&str], max_odd_level: usize, params: &[(&str, i32)]) -> Result<Ctx> {
        if field_names.is_empty() {
            return Err(Error::InvalidContext("no fields".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in field_names.iter().chain(params.iter().map(|(n, _)| n)) {
            if !seen.insert(*n) {
                return Err(Error::InvalidContext(format!("duplicate name `{n}`")));
            }
        }
        Ok(Arc::new(JetContext {
            field_names: field_names.iter().map(|s| s.to_string()).collect(),
            max_odd_level,
            params: params.iter().map(|(n, w)| Param { name: n.to_string(), weight: *w }).collect(),
        }))
    }

    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Same context with a different odd-level bound.
    pub fn with_max_level(&self, m: usize) -> Ctx {
        let mut c = self.clone();
        c.max_odd_level = m;
        Arc::new(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvenJet {
    pub field: u16,
    pub s: u16,
}

/// Field order follows the fixed odd ordering: level, then field, then jet order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OddJet {
    pub level: u16,
    pub field: u16,
    pub s: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Generator {
    Even(EvenJet),
    Odd(OddJet),
}

impl Generator {
    pub fn u(field: usize, s: usize) -> Self {
        Generator::Even(EvenJet { field: field as u16, s: s as u16 })
    }

    pub fn sigma(field: usize, level: usize, s: usize) -> Self {
        Generator::Odd(OddJet { level: level as u16, field: field as u16, s: s as u16 })
    }

    pub fn is_odd(&self) -> bool {
        matches!(self, Generator::Odd(_))
    }

    pub fn jet(&self) -> usize {
        match self {
            Generator::Even(e) => e.s as usize,
            Generator::Odd(o) => o.s as usize,
        }
    }

    pub fn base(&self) -> Base {
        match *self {
            Generator::Even(e) => Base::Even(e.field),
            Generator::Odd(o) => Base::Odd(o.field, o.level),
        }
    }

    pub fn with_jet(&self, s: usize) -> Self {
        match *self {
            Generator::Even(e) => Generator::Even(EvenJet { s: s as u16, ..e }),
            Generator::Odd(o) => Generator::Odd(OddJet { s: s as u16, ..o }),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Generator::Even(e) => format!("u{}_{}", e.field + 1, e.s),
            Generator::Odd(o) => format!("s{}_{}_{}", o.field + 1, o.level, o.s),
        }
    }
}

/// A jet-free generator: `u^α` or `σ_{α,m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Base {
    Even(u16),
    Odd(u16, u16),
}

impl Base {
    pub fn jet(&self, s: usize) -> Generator {
        match *self {
            Base::Even(f) => Generator::u(f as usize, s),
            Base::Odd(f, m) => Generator::sigma(f as usize, m as usize, s),
        }
    }

    pub fn is_odd(&self) -> bool {
        matches!(self, Base::Odd(..))
    }

    pub fn name(&self) -> String {
        match self {
            Base::Even(f) => format!("u{}", f + 1),
            Base::Odd(f, m) => format!("s{}_{}", f + 1, m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Mono {
    pub even: Vec<(EvenJet, u32)>,
    pub odd: Vec<OddJet>,
}

impl Mono {
    pub fn one() -> Self {
        Mono::default()
    }

    pub fn of(g: Generator) -> Self {
        match g {
            Generator::Even(e) => Mono { even: vec![(e, 1)], odd: vec![] },
            Generator::Odd(o) => Mono { even: vec![], odd: vec![o] },
        }
    }

    pub fn super_degree(&self) -> usize {
        self.odd.len()
    }

    pub fn jet_order(&self) -> usize {
        self.even.iter().map(|(e, k)| e.s as usize * *k as usize).sum::<usize>()
            + self.odd.iter().map(|o| o.s as usize).sum::<usize>()
    }

    /// Sorted odd list from an arbitrary ordering: sign of the permutation, or `None` if a factor repeats.
    pub fn sort_odd(mut odd: Vec<OddJet>) -> Option<(bool, Vec<OddJet>)> {
        let mut neg = false;
        for i in 1..odd.len() {
            let mut j = i;
            while j > 0 && odd[j - 1] > odd[j] {
                odd.swap(j - 1, j);
                neg = !neg;
                j -= 1;
            }
            if j > 0 && odd[j - 1] == odd[j] {
                return None;
            }
        }
        Some((neg, odd))
    }

    pub fn mul(&self, o: &Mono) -> Option<(bool, Mono)> {
        let mut odd = self.odd.clone();
        odd.extend_from_slice(&o.odd);
        let (neg, odd) = Mono::sort_odd(odd)?;
        Some((neg, Mono { even: merge_even(&self.even, &o.even), odd }))
    }

    /// All generators with multiplicity data, even first.
    pub fn generators(&self) -> Vec<Generator> {
        let mut v: Vec<Generator> = self.even.iter().map(|(e, _)| Generator::Even(*e)).collect();
        v.extend(self.odd.iter().map(|o| Generator::Odd(*o)));
        v
    }

    pub fn exponent(&self, g: Generator) -> u32 {
        match g {
            Generator::Even(e) => self.even.iter().find(|(x, _)| *x == e).map(|(_, k)| *k).unwrap_or(0),
            Generator::Odd(o) => self.odd.contains(&o) as u32,
        }
    }

    pub fn even_only(&self) -> Mono {
        Mono { even: self.even.clone(), odd: vec![] }
    }
}

fn merge_even(a: &[(EvenJet, u32)], b: &[(EvenJet, u32)]) -> Vec<(EvenJet, u32)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[derive(Clone)]
pub struct DiffPoly {
    ctx: Ctx,
    terms: BTreeMap<Mono, Rf>,
}

impl PartialEq for DiffPoly {
    fn eq(&self, o: &Self) -> bool {
        self.terms == o.terms && same_ctx(&self.ctx, &o.ctx)
    }
}

impl Eq for DiffPoly {}

pub fn same_ctx(a: &Ctx, b: &Ctx) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl DiffPoly {
    pub fn zero(ctx: &Ctx) -> Self {
        DiffPoly { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &Ctx, c: Rf) -> Self {
        let mut p = Self::zero(ctx);
        p.add_term(Mono::one(), c);
        p
    }

    pub fn one(ctx: &Ctx) -> Self {
        Self::constant(ctx, Rf::one())
    }

    pub fn rational(ctx: &Ctx, c: Q) -> Self {
        Self::constant(ctx, Rf::from_q(c))
    }

    pub fn int(ctx: &Ctx, n: i64) -> Self {
        Self::constant(ctx, Rf::int(n))
    }

    pub fn gen(ctx: &Ctx, g: Generator) -> Self {
        let mut p = Self::zero(ctx);
        p.add_term(Mono::of(g), Rf::one());
        p
    }

    /// Even jet `u^{α,s}` with 0-based field index.
    pub fn u(ctx: &Ctx, field: usize, s: usize) -> Self {
        Self::gen(ctx, Generator::u(field, s))
    }

    /// Odd jet `σ_{α,m}^s` with 0-based field index.
    pub fn sigma(ctx: &Ctx, field: usize, level: usize, s: usize) -> Self {
        Self::gen(ctx, Generator::sigma(field, level, s))
    }

    pub fn param(ctx: &Ctx, name: &str) -> Result<Self> {
        let i = ctx.param_index(name).ok_or_else(|| Error::UnknownGenerator(name.into()))?;
        Ok(Self::constant(ctx, Rf::var(i)))
    }

    pub fn from_terms(ctx: &Ctx, terms: impl IntoIterator<Item = (Mono, Rf)>) -> Self {
        let mut p = Self::zero(ctx);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Rf)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> BTreeMap<Mono, Rf> {
        self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Mono) -> Rf {
        self.terms.get(m).cloned().unwrap_or_else(Rf::zero)
    }

    pub fn add_term(&mut self, m: Mono, c: Rf) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(x) => {
                let s = x.add(&c);
                if s.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *x = s;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    fn check(&self, o: &DiffPoly) -> Result<()> {
        if same_ctx(&self.ctx, &o.ctx) {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    pub fn try_add(&self, o: &DiffPoly) -> Result<DiffPoly> {
        self.check(o)?;
        let (mut big, small) = if self.terms.len() >= o.terms.len() { (self.clone(), o) } else { (o.clone(), self) };
        for (m, c) in &small.terms {
            big.add_term(m.clone(), c.clone());
        }
        Ok(big)
    }

    pub fn try_mul(&self, o: &DiffPoly) -> Result<DiffPoly> {
        self.check(o)?;
        let mut r = DiffPoly::zero(&self.ctx);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                if let Some((neg, m)) = m1.mul(m2) {
                    let c = c1.mul(c2);
                    r.add_term(m, if neg { c.neg() } else { c });
                }
            }
        }
        Ok(r)
    }

    pub fn add(&self, o: &DiffPoly) -> DiffPoly {
        self.try_add(o).expect("context mismatch")
    }

    pub fn sub(&self, o: &DiffPoly) -> DiffPoly {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &DiffPoly) -> DiffPoly {
        self.try_mul(o).expect("context mismatch")
    }

    pub fn neg(&self) -> DiffPoly {
        DiffPoly { ctx: self.ctx.clone(), terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg())).collect() }
    }

    pub fn scale(&self, s: &Rf) -> DiffPoly {
        if s.is_zero() {
            return DiffPoly::zero(&self.ctx);
        }
        DiffPoly { ctx: self.ctx.clone(), terms: self.terms.iter().map(|(m, c)| (m.clone(), c.mul(s))).collect() }
    }

    pub fn scale_q(&self, s: &Q) -> DiffPoly {
        if s.is_zero() {
            return DiffPoly::zero(&self.ctx);
        }
        DiffPoly { ctx: self.ctx.clone(), terms: self.terms.iter().map(|(m, c)| (m.clone(), c.scale_q(s))).collect() }
    }

    pub fn pow(&self, n: u32) -> DiffPoly {
        let mut r = DiffPoly::one(&self.ctx);
        for _ in 0..n {
            r = r.mul(self);
        }
        r
    }

    /// Multiply a single monomial (with coefficient) on the right of a polynomial.
    pub fn mul_mono(&self, m: &Mono, c: &Rf) -> DiffPoly {
        let mut r = DiffPoly::zero(&self.ctx);
        for (m1, c1) in &self.terms {
            if let Some((neg, mm)) = m1.mul(m) {
                let cc = c1.mul(c);
                r.add_term(mm, if neg { cc.neg() } else { cc });
            }
        }
        r
    }

    pub fn mono_poly(ctx: &Ctx, m: Mono, c: Rf) -> DiffPoly {
        let mut p = DiffPoly::zero(ctx);
        p.add_term(m, c);
        p
    }

    /// Total x-derivative.
    pub fn dx(&self) -> DiffPoly {
        let mut r = DiffPoly::zero(&self.ctx);
        for (m, c) in &self.terms {
            for (i, (e, k)) in m.even.iter().enumerate() {
                let mut even = m.even.clone();
                if *k == 1 {
                    even.remove(i);
                } else {
                    even[i].1 -= 1;
                }
                let up = [(EvenJet { field: e.field, s: e.s + 1 }, 1)];
                let even = merge_even(&even, &up);
                let mm = Mono { even, odd: m.odd.clone() };
                r.add_term(mm, c.scale_q(&Q::from_integer((*k).into())));
            }
            for i in 0..m.odd.len() {
                let mut odd = m.odd.clone();
                odd[i].s += 1;
                if let Some((neg, odd)) = Mono::sort_odd(odd) {
                    let mm = Mono { even: m.even.clone(), odd };
                    r.add_term(mm, if neg { c.neg() } else { c.clone() });
                }
            }
        }
        r
    }

    pub fn dx_n(&self, n: usize) -> DiffPoly {
        let mut r = self.clone();
        for _ in 0..n {
            r = r.dx();
        }
        r
    }

    /// Graded partial derivative; odd derivatives act from the left.
    pub fn partial(&self, g: Generator) -> DiffPoly {
        let mut r = DiffPoly::zero(&self.ctx);
        for (m, c) in &self.terms {
            match g {
                Generator::Even(e) => {
                    if let Some(i) = m.even.iter().position(|(x, _)| *x == e) {
                        let k = m.even[i].1;
                        let mut even = m.even.clone();
                        if k == 1 {
                            even.remove(i);
                        } else {
                            even[i].1 -= 1;
                        }
                        r.add_term(Mono { even, odd: m.odd.clone() }, c.scale_q(&Q::from_integer(k.into())));
                    }
                }
                Generator::Odd(o) => {
                    if let Some(i) = m.odd.iter().position(|x| *x == o) {
                        let mut odd = m.odd.clone();
                        odd.remove(i);
                        let cc = if i % 2 == 1 { c.neg() } else { c.clone() };
                        r.add_term(Mono { even: m.even.clone(), odd }, cc);
                    }
                }
            }
        }
        r
    }

    /// Super degree; the zero polynomial reports 0.
    pub fn super_degree(&self) -> Result<usize> {
        let mut it = self.terms.keys().map(|m| m.super_degree());
        let first = match it.next() {
            Some(d) => d,
            None => return Ok(0),
        };
        if it.all(|d| d == first) {
            Ok(first)
        } else {
            Err(Error::NotHomogeneous("super"))
        }
    }

    fn term_diff_degrees(&self, m: &Mono, c: &Rf) -> Vec<i64> {
        let w: Vec<i64> = self.ctx.params.iter().map(|p| p.weight as i64).collect();
        let wt = |e: &Vec<u32>| -> i64 { e.iter().enumerate().map(|(i, k)| w.get(i).copied().unwrap_or(0) * *k as i64).sum() };
        let dw: Vec<i64> = c.den().terms().map(|(e, _)| wt(e)).collect();
        let d0 = dw.first().copied().unwrap_or(0);
        c.num().terms().map(|(e, _)| m.jet_order() as i64 + wt(e) - d0).collect()
    }

    /// ε-weighted differential degree; the zero polynomial reports 0.
    pub fn diff_degree(&self) -> Result<i64> {
        let mut first = None;
        for (m, c) in &self.terms {
            for d in self.term_diff_degrees(m, c) {
                match first {
                    None => first = Some(d),
                    Some(f) if f != d => return Err(Error::NotHomogeneous("differential")),
                    _ => {}
                }
            }
        }
        Ok(first.unwrap_or(0))
    }

    /// Split into pieces of fixed ε-weighted differential degree.
    pub fn by_diff_degree(&self) -> BTreeMap<i64, DiffPoly> {
        let mut out: BTreeMap<i64, DiffPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let w: Vec<i64> = self.ctx.params.iter().map(|p| p.weight as i64).collect();
            for (e, x) in c.num().terms() {
                let d = m.jet_order() as i64
                    + e.iter().enumerate().map(|(i, k)| w.get(i).copied().unwrap_or(0) * *k as i64).sum::<i64>();
                let cc = Rf::new(Poly::monomial(e.clone(), x.clone()), c.den().clone());
                out.entry(d).or_insert_with(|| DiffPoly::zero(&self.ctx)).add_term(m.clone(), cc);
            }
        }
        out
    }

    pub fn max_level(&self) -> Option<usize> {
        self.terms.keys().flat_map(|m| m.odd.iter().map(|o| o.level as usize)).max()
    }

    pub fn max_jet(&self) -> usize {
        self.terms.keys().flat_map(|m| m.generators().into_iter().map(|g| g.jet())).max().unwrap_or(0)
    }

    /// Substitute a rational value for a parameter.
    pub fn eval_param(&self, name: &str, val: &Q) -> Result<DiffPoly> {
        let i = self.ctx.param_index(name).ok_or_else(|| Error::UnknownGenerator(name.into()))?;
        let mut r = DiffPoly::zero(&self.ctx);
        for (m, c) in &self.terms {
            let v = c.eval_var(i, val).ok_or_else(|| Error::InvalidInput(format!("pole at {name} = {val}")))?;
            r.add_term(m.clone(), v);
        }
        Ok(r)
    }

    /// Move into another context with the same generator layout.
    pub fn rebase(&self, ctx: &Ctx) -> DiffPoly {
        DiffPoly { ctx: ctx.clone(), terms: self.terms.clone() }
    }

    /// Drop every term of ε-power above `n` (ε = parameter `p`).
    pub fn truncate_param(&self, p: usize, n: u32) -> DiffPoly {
        let mut r = DiffPoly::zero(&self.ctx);
        for (m, c) in &self.terms {
            if let Some(cs) = c.coeffs_in(p) {
                for (k, x) in cs {
                    if k <= n {
                        r.add_term(m.clone(), x.mul(&Rf::var(p).pow(k)));
                    }
                }
            } else {
                r.add_term(m.clone(), c.clone());
            }
        }
        r
    }

    /// Canonical text in the input grammar.
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let names = self.ctx.param_names();
        let mut out = String::new();
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let mut factors: Vec<String> = Vec::new();
            for (e, k) in &m.even {
                let g = Generator::Even(*e).name();
                factors.push(if *k == 1 { g } else { format!("{g}^{k}") });
            }
            for o in &m.odd {
                factors.push(Generator::Odd(*o).name());
            }
            let (neg, cs) = coeff_text(c, &names);
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            match (cs, factors.is_empty()) {
                (None, true) => out.push('1'),
                (None, false) => out.push_str(&factors.join("*")),
                (Some(s), true) => out.push_str(&s),
                (Some(s), false) => {
                    out.push_str(&s);
                    out.push('*');
                    out.push_str(&factors.join("*"));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|(m, c)| {
                serde_json::json!({
                    "coeff": rf_json(c),
                    "even": m.even.iter().map(|(e, k)| serde_json::json!([e.field + 1, e.s, k])).collect::<Vec<_>>(),
                    "odd": m.odd.iter().map(|o| serde_json::json!([o.field + 1, o.level, o.s])).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "schema": 1,
            "fields": self.ctx.field_names,
            "params": self.ctx.param_names(),
            "text": self.to_text(),
            "terms": terms,
        })
    }
}

fn q_text(c: &Q) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn poly_json(p: &Poly) -> serde_json::Value {
    serde_json::Value::Array(
        p.terms()
            .map(|(e, c)| serde_json::json!({"exp": e, "num": c.numer().to_string(), "den": c.denom().to_string()}))
            .collect(),
    )
}

pub fn rf_json(c: &Rf) -> serde_json::Value {
    serde_json::json!({"num": poly_json(c.num()), "den": poly_json(c.den())})
}

/// Coefficient text with separated sign; `None` for a unit coefficient.
fn coeff_text(c: &Rf, names: &[String]) -> (bool, Option<String>) {
    if let Some(x) = c.as_q() {
        let neg = x < Q::zero();
        let a = if neg { -x } else { x };
        if a.is_one() {
            return (neg, None);
        }
        return (neg, Some(q_text(&a)));
    }
    if c.is_polynomial() && c.num().num_terms() == 1 {
        let neg = c.is_negative_lead();
        let body = if neg { c.neg() } else { c.clone() };
        return (neg, Some(body.render(names)));
    }
    (false, Some(format!("({})", c.render(names))))
}

impl fmt::Debug for DiffPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

impl fmt::Display for DiffPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

impl std::ops::Add for &DiffPoly {
    type Output = DiffPoly;
    fn add(self, o: &DiffPoly) -> DiffPoly {
        DiffPoly::add(self, o)
    }
}

impl std::ops::Sub for &DiffPoly {
    type Output = DiffPoly;
    fn sub(self, o: &DiffPoly) -> DiffPoly {
        DiffPoly::sub(self, o)
    }
}

impl std::ops::Mul for &DiffPoly {
    type Output = DiffPoly;
    fn mul(self, o: &DiffPoly) -> DiffPoly {
        DiffPoly::mul(self, o)
    }
}

impl std::ops::Neg for &DiffPoly {
    type Output = DiffPoly;
    fn neg(self) -> DiffPoly {
        DiffPoly::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::q;

    fn ctx() -> Ctx {
        JetContext::new(&["u"], 3, &[("eps", -1), ("c", 0)]).unwrap()
    }

    #[test]
    fn add_and_cancel() {
        let c = ctx();
        let u = DiffPoly::u(&c, 0, 0);
        let th = DiffPoly::sigma(&c, 0, 0, 0);
        assert_eq!(&u + &DiffPoly::zero(&c), u);
        assert_eq!((&th + &th).to_text(), "2*s1_0_0");
        let ut = &u * &th;
        assert!((&ut + &(-&ut)).is_zero());
    }

    #[test]
    fn grassmann_products() {
        let c = ctx();
        let t0 = DiffPoly::sigma(&c, 0, 0, 0);
        let t1 = DiffPoly::sigma(&c, 0, 0, 1);
        assert!((&t0 * &t0).is_zero());
        assert_eq!(&t1 * &t0, -&(&t0 * &t1));
        let u = DiffPoly::u(&c, 0, 0);
        assert_eq!(&u * &(&u * &t0), &(&u * &u) * &t0);
    }

    #[test]
    fn total_derivative() {
        let c = ctx();
        let u = DiffPoly::u(&c, 0, 0);
        let u1 = DiffPoly::u(&c, 0, 1);
        let th = DiffPoly::sigma(&c, 0, 0, 0);
        assert_eq!(u.dx(), u1);
        let ut = &u * &th;
        assert_eq!(ut.dx(), &(&u1 * &th) + &(&u * &DiffPoly::sigma(&c, 0, 0, 1)));
        let e = (&u * &u1).dx();
        assert_eq!(e, &(&u1 * &u1) + &(&u * &DiffPoly::u(&c, 0, 2)));
    }

    #[test]
    fn partials() {
        let c = ctx();
        let u = DiffPoly::u(&c, 0, 0);
        assert_eq!((&u * &u).partial(Generator::u(0, 0)), u.scale_q(&q(2, 1)));
        let t0 = DiffPoly::sigma(&c, 0, 0, 0);
        let t1 = DiffPoly::sigma(&c, 0, 0, 1);
        assert_eq!((&t0 * &t1).partial(Generator::sigma(0, 0, 1)), -&t0);
        assert!(u.partial(Generator::sigma(0, 0, 0)).is_zero());
    }

    #[test]
    fn degrees() {
        let c = ctx();
        let t0 = DiffPoly::sigma(&c, 0, 0, 0);
        let t1 = DiffPoly::sigma(&c, 0, 0, 1);
        assert_eq!((&t0 * &t1).super_degree().unwrap(), 2);
        let u = DiffPoly::u(&c, 0, 0);
        assert_eq!((&u * &DiffPoly::u(&c, 0, 1)).diff_degree().unwrap(), 1);
        let e2 = DiffPoly::param(&c, "eps").unwrap().pow(2);
        assert_eq!((&e2 * &DiffPoly::u(&c, 0, 3)).diff_degree().unwrap(), 1);
        assert!((&u + &t0).super_degree().is_err());
    }

    #[test]
    fn context_mismatch_is_reported() {
        let a = ctx();
        let b = JetContext::new(&["v", "w"], 1, &[]).unwrap();
        let x = DiffPoly::u(&a, 0, 0);
        let y = DiffPoly::u(&b, 0, 0);
        assert_eq!(x.try_add(&y), Err(Error::ContextMismatch));
    }
}
