//! Exact coefficients: sparse multivariate polynomials over ℚ in the declared
//! parameters and the field of rational functions built from them.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

/// Exponent vector with trailing zeros trimmed; lexicographic with parameter 0 most significant.
pub type Exps = Vec<u32>;

fn trim(mut e: Exps) -> Exps {
    while e.last() == Some(&0) {
        e.pop();
    }
    e
}

fn exp_add(a: &[u32], b: &[u32]) -> Exps {
    let n = a.len().max(b.len());
    let v = (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0) + b.get(i).copied().unwrap_or(0))
        .collect();
    trim(v)
}

fn exp_sub(a: &[u32], b: &[u32]) -> Option<Exps> {
    let n = a.len().max(b.len());
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        if y > x {
            return None;
        }
        v.push(x - y);
    }
    Some(trim(v))
}

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    terms: BTreeMap<Exps, Q>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: BTreeMap::new() }
    }

    pub fn constant(c: Q) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Vec::new(), c);
        }
        Poly { terms }
    }

    pub fn one() -> Self {
        Self::constant(Q::one())
    }

    pub fn var(i: usize) -> Self {
        let mut e = vec![0; i + 1];
        e[i] = 1;
        Self::monomial(e, Q::one())
    }

    pub fn monomial(e: Exps, c: Q) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(trim(e), c);
        }
        Poly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.is_empty())
    }

    pub fn constant_value(&self) -> Option<Q> {
        if self.is_zero() {
            return Some(Q::zero());
        }
        if self.is_constant() {
            return self.terms.get(&Vec::new()).cloned();
        }
        None
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &Q)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn lead(&self) -> Option<(&Exps, &Q)> {
        self.terms.iter().next_back()
    }

    pub fn lc(&self) -> Q {
        self.lead().map(|(_, c)| c.clone()).unwrap_or_else(Q::zero)
    }

    fn add_term(&mut self, e: Exps, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&e) {
            Some(x) => {
                *x += c;
                if x.is_zero() {
                    self.terms.remove(&e);
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(e.clone(), c.clone());
        }
        r
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(e.clone(), -c.clone());
        }
        r
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect() }
    }

    pub fn scale(&self, s: &Q) -> Poly {
        if s.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        if let Some(c) = self.constant_value() {
            return o.scale(&c);
        }
        if let Some(c) = o.constant_value() {
            return self.scale(&c);
        }
        let mut r = Poly::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                r.add_term(exp_add(e1, e2), c1 * c2);
            }
        }
        r
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut r = Poly::one();
        for _ in 0..n {
            r = r.mul(self);
        }
        r
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.keys().filter(|e| !e.is_empty()).map(|e| e.len() - 1).max()
    }

    pub fn degree_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|e| e.get(v).copied().unwrap_or(0)).max().unwrap_or(0)
    }

    /// Exact division; `None` if `o` does not divide `self`.
    pub fn div_exact(&self, o: &Poly) -> Option<Poly> {
        assert!(!o.is_zero(), "division by zero polynomial");
        if let Some(c) = o.constant_value() {
            return Some(self.scale(&(Q::one() / c)));
        }
        let (le, lc) = o.lead().map(|(e, c)| (e.clone(), c.clone())).unwrap();
        let mut r = self.clone();
        let mut quo = Poly::zero();
        while let Some((re, rc)) = r.lead().map(|(e, c)| (e.clone(), c.clone())) {
            let e = exp_sub(&re, &le)?;
            let t = Poly::monomial(e, rc / &lc);
            r = r.sub(&t.mul(o));
            quo = quo.add(&t);
        }
        Some(quo)
    }

    /// Substitute a rational value for parameter `v`.
    pub fn eval_var(&self, v: usize, val: &Q) -> Poly {
        let mut r = Poly::zero();
        for (e, c) in &self.terms {
            let k = e.get(v).copied().unwrap_or(0);
            let mut e2 = e.clone();
            if v < e2.len() {
                e2[v] = 0;
            }
            let mut cc = c.clone();
            for _ in 0..k {
                cc *= val;
            }
            r.add_term(trim(e2), cc);
        }
        r
    }

    /// Coefficients of the expansion in parameter `v`, indexed by power.
    pub fn coeffs_in(&self, v: usize) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (e, c) in &self.terms {
            let k = e.get(v).copied().unwrap_or(0);
            let mut e2 = e.clone();
            if v < e2.len() {
                e2[v] = 0;
            }
            out.entry(k).or_default().add_term(trim(e2), c.clone());
        }
        out
    }

    fn to_univ(&self, v: usize) -> Vec<Poly> {
        let d = self.degree_in(v) as usize;
        let mut out = vec![Poly::zero(); d + 1];
        for (k, p) in self.coeffs_in(v) {
            out[k as usize] = p;
        }
        out
    }

    fn from_univ(u: &[Poly], v: usize) -> Poly {
        let mut r = Poly::zero();
        for (k, p) in u.iter().enumerate() {
            let mut e = vec![0; v + 1];
            e[v] = k as u32;
            r = r.add(&p.mul(&Poly::monomial(e, Q::one())));
        }
        r
    }

    /// Scale so that the lexicographically leading coefficient is 1.
    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        self.scale(&(Q::one() / self.lc()))
    }

    pub fn gcd(a: &Poly, b: &Poly) -> Poly {
        if a.is_zero() {
            return b.monic();
        }
        if b.is_zero() {
            return a.monic();
        }
        if a.is_constant() || b.is_constant() {
            return Poly::one();
        }
        let v = a.max_var().max(b.max_var()).unwrap();
        let ua = a.to_univ(v);
        let ub = b.to_univ(v);
        let ca = univ_content(&ua);
        let cb = univ_content(&ub);
        let gc = Poly::gcd(&ca, &cb);
        let mut pa = univ_div(&ua, &ca);
        let mut pb = univ_div(&ub, &cb);
        if pa.len() < pb.len() {
            std::mem::swap(&mut pa, &mut pb);
        }
        loop {
            if pb.len() == 1 {
                pb = vec![Poly::one()];
                break;
            }
            let r = univ_prem(&pa, &pb);
            if r.is_empty() {
                break;
            }
            let cr = univ_content(&r);
            pa = pb;
            pb = univ_div(&r, &cr);
        }
        Poly::from_univ(&pb, v).mul(&gc).monic()
    }
}

fn univ_trim(mut u: Vec<Poly>) -> Vec<Poly> {
    while u.last().map(|p| p.is_zero()).unwrap_or(false) {
        u.pop();
    }
    u
}

fn univ_content(u: &[Poly]) -> Poly {
    let mut g = Poly::zero();
    for p in u {
        g = Poly::gcd(&g, p);
        if g.is_constant() && !g.is_zero() {
            return Poly::one();
        }
    }
    g
}

fn univ_div(u: &[Poly], c: &Poly) -> Vec<Poly> {
    u.iter().map(|p| p.div_exact(c).expect("content divides")).collect()
}

fn univ_prem(a: &[Poly], b: &[Poly]) -> Vec<Poly> {
    let db = b.len() - 1;
    let lb = b[db].clone();
    let mut r = a.to_vec();
    while r.len() > db && !r.is_empty() {
        let dr = r.len() - 1;
        let lr = r[dr].clone();
        let shift = dr - db;
        let mut nr: Vec<Poly> = r.iter().map(|p| p.mul(&lb)).collect();
        for (i, bi) in b.iter().enumerate() {
            nr[i + shift] = nr[i + shift].sub(&bi.mul(&lr));
        }
        r = univ_trim(nr);
    }
    r
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..8).map(|i| format!("p{i}")).collect();
        write!(f, "{}", self.render(&names))
    }
}

fn render_q(c: &Q) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl Poly {
    /// Render with parameter names, highest terms first.
    pub fn render(&self, names: &[String]) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, (e, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if i == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let mut factors = Vec::new();
            for (v, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let n = names.get(v).cloned().unwrap_or_else(|| format!("p{v}"));
                factors.push(if k == 1 { n } else { format!("{n}^{k}") });
            }
            if factors.is_empty() {
                s.push_str(&render_q(&a));
            } else {
                if !a.is_one() {
                    s.push_str(&render_q(&a));
                    s.push('*');
                }
                s.push_str(&factors.join("*"));
            }
        }
        s
    }
}

/// Element of ℚ(params): reduced fraction with monic denominator.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Rf {
    num: Poly,
    den: Poly,
}

impl Default for Rf {
    fn default() -> Self {
        Rf::zero()
    }
}

impl Rf {
    pub fn zero() -> Self {
        Rf { num: Poly::zero(), den: Poly::one() }
    }

    pub fn one() -> Self {
        Rf { num: Poly::one(), den: Poly::one() }
    }

    pub fn from_q(c: Q) -> Self {
        Rf { num: Poly::constant(c), den: Poly::one() }
    }

    pub fn int(n: i64) -> Self {
        Self::from_q(qi(n))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Self::from_q(q(n, d))
    }

    pub fn from_poly(p: Poly) -> Self {
        Rf { num: p, den: Poly::one() }
    }

    pub fn var(i: usize) -> Self {
        Self::from_poly(Poly::var(i))
    }

    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return Rf::zero();
        }
        if let Some(c) = den.constant_value() {
            return Rf { num: num.scale(&(Q::one() / c)), den: Poly::one() };
        }
        let g = Poly::gcd(&num, &den);
        let (mut n, mut d) = if g.is_constant() {
            (num, den)
        } else {
            (num.div_exact(&g).unwrap(), den.div_exact(&g).unwrap())
        };
        let l = d.lc();
        if !l.is_one() {
            let inv = Q::one() / l;
            n = n.scale(&inv);
            d = d.scale(&inv);
        }
        if let Some(c) = d.constant_value() {
            return Rf { num: n.scale(&(Q::one() / c)), den: Poly::one() };
        }
        Rf { num: n, den: d }
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.den.is_constant() && self.num.constant_value().map(|c| c.is_one()).unwrap_or(false)
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_constant()
    }

    pub fn as_q(&self) -> Option<Q> {
        if self.den.is_constant() {
            self.num.constant_value()
        } else {
            None
        }
    }

    pub fn add(&self, o: &Rf) -> Rf {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        if self.den == o.den {
            return Rf::new(self.num.add(&o.num), self.den.clone());
        }
        Rf::new(self.num.mul(&o.den).add(&o.num.mul(&self.den)), self.den.mul(&o.den))
    }

    pub fn sub(&self, o: &Rf) -> Rf {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Rf {
        Rf { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn mul(&self, o: &Rf) -> Rf {
        if self.is_zero() || o.is_zero() {
            return Rf::zero();
        }
        if self.den.is_constant() && o.den.is_constant() {
            return Rf { num: self.num.mul(&o.num), den: Poly::one() };
        }
        Rf::new(self.num.mul(&o.num), self.den.mul(&o.den))
    }

    pub fn scale_q(&self, s: &Q) -> Rf {
        if s.is_zero() {
            return Rf::zero();
        }
        Rf { num: self.num.scale(s), den: self.den.clone() }
    }

    pub fn inv(&self) -> Rf {
        assert!(!self.is_zero(), "inverse of zero");
        Rf::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, o: &Rf) -> Rf {
        self.mul(&o.inv())
    }

    pub fn pow(&self, n: u32) -> Rf {
        let mut r = Rf::one();
        for _ in 0..n {
            r = r.mul(self);
        }
        r
    }

    pub fn eval_var(&self, v: usize, val: &Q) -> Option<Rf> {
        let d = self.den.eval_var(v, val);
        if d.is_zero() {
            return None;
        }
        Some(Rf::new(self.num.eval_var(v, val), d))
    }

    /// Expansion in a parameter the denominator does not involve.
    pub fn coeffs_in(&self, v: usize) -> Option<BTreeMap<u32, Rf>> {
        if self.den.degree_in(v) > 0 {
            return None;
        }
        Some(
            self.num
                .coeffs_in(v)
                .into_iter()
                .map(|(k, p)| (k, Rf::new(p, self.den.clone())))
                .collect(),
        )
    }

    pub fn degree_in(&self, v: usize) -> u32 {
        self.num.degree_in(v)
    }

    /// True when the leading numeric coefficient is negative (used for printing signs).
    pub fn is_negative_lead(&self) -> bool {
        self.num.lc().is_negative()
    }

    pub fn render(&self, names: &[String]) -> String {
        let n = self.num.render(names);
        if self.den.is_constant() {
            return n;
        }
        let d = self.den.render(names);
        format!("({n})/({d})")
    }
}

impl fmt::Debug for Rf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..8).map(|i| format!("p{i}")).collect();
        write!(f, "{}", self.render(&names))
    }
}
