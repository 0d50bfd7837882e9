//! Graded monomial ansätze and the linear solves built on them.

use crate::coeff::{Rf, Q};
use crate::diffpoly::{Base, Ctx, DiffPoly, EvenJet, Mono, OddJet};
use crate::error::{Error, Result};
use crate::linsolve::{self, Row, Solution};
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;

/// Additive weight: each base generator has a weight, each x-derivative adds `dx`,
/// each power of a parameter adds its weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Grading {
    pub base: BTreeMap<Base, Q>,
    pub dx: Q,
    pub params: Vec<Q>,
}

impl Grading {
    pub fn mono_weight(&self, m: &Mono) -> Option<Q> {
        let mut w = Q::zero();
        for (e, k) in &m.even {
            let b = self.base.get(&Base::Even(e.field))?;
            w += (b + &self.dx * Q::from_integer(e.s.into())) * Q::from_integer((*k).into());
        }
        for o in &m.odd {
            let b = self.base.get(&Base::Odd(o.field, o.level))?;
            w += b + &self.dx * Q::from_integer(o.s.into());
        }
        Some(w)
    }

    /// Weight of every term `c·m`, with `c` expanded in the parameter `eps`.
    pub fn weights(&self, p: &DiffPoly, eps: usize) -> Option<Vec<Q>> {
        let mut out = Vec::new();
        for (m, c) in p.terms() {
            let w = self.mono_weight(m)?;
            match c.coeffs_in(eps) {
                Some(cs) => {
                    for k in cs.keys() {
                        out.push(&w + &self.params[eps] * Q::from_integer((*k).into()));
                    }
                }
                None => out.push(w),
            }
        }
        Some(out)
    }

    /// The common weight of a homogeneous polynomial (`None` for zero).
    pub fn weight(&self, p: &DiffPoly, eps: usize) -> Result<Option<Q>> {
        let ws = self.weights(p, eps).ok_or_else(|| Error::InvalidInput("generator without weight".into()))?;
        let mut it = ws.into_iter();
        let Some(first) = it.next() else { return Ok(None) };
        if it.any(|w| w != first) {
            return Err(Error::NotHomogeneous("weight"));
        }
        Ok(Some(first))
    }
}

/// Slice of monomials `ε^e m` with fixed super degree, ε-graded differential
/// degree `jet_order(m) − e` and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzSpec {
    pub super_degree: usize,
    pub diff_degree: i64,
    pub weight: Q,
    pub eps: usize,
    pub eps_powers: Vec<u32>,
    /// Admit odd generators of level ≥ 1 only without derivatives.
    pub normal_form: bool,
}

#[derive(Clone, Debug)]
pub struct Ansatz {
    pub ctx: Ctx,
    pub eps: usize,
    pub basis: Vec<(u32, Mono)>,
}

struct Cand {
    even: Option<EvenJet>,
    odd: Option<OddJet>,
    jet: usize,
    w: Q,
}

fn enumerate(cands: &[Cand], i: usize, jet: usize, w: &Q, odd_left: usize, cur: &mut Mono, out: &mut Vec<Mono>) {
    if jet == 0 && w.is_zero() && odd_left == 0 {
        out.push(cur.clone());
    }
    if i == cands.len() || (w.is_zero() && odd_left == 0) {
        return;
    }
    let c = &cands[i];
    if let Some(o) = c.odd {
        if odd_left > 0 && c.jet <= jet && &c.w <= w {
            cur.odd.push(o);
            enumerate(cands, i + 1, jet - c.jet, &(w - &c.w), odd_left - 1, cur, out);
            cur.odd.pop();
        }
    } else if let Some(e) = c.even {
        let mut k = 1u32;
        loop {
            let kj = c.jet * k as usize;
            let kw = &c.w * Q::from_integer(k.into());
            if kj > jet || &kw > w {
                break;
            }
            cur.even.push((e, k));
            enumerate(cands, i + 1, jet - kj, &(w - &kw), odd_left, cur, out);
            cur.even.pop();
            k += 1;
        }
    }
    enumerate(cands, i + 1, jet, w, odd_left, cur, out);
}

impl Ansatz {
    pub fn new(ctx: &Ctx, grading: &Grading, spec: &AnsatzSpec) -> Result<Ansatz> {
        let mut basis = Vec::new();
        for &e in &spec.eps_powers {
            let jet = spec.diff_degree + e as i64;
            if jet < 0 {
                continue;
            }
            let jet = jet as usize;
            let w = &spec.weight - &grading.params[spec.eps] * Q::from_integer(e.into());
            let mut cands = Vec::new();
            for (b, bw) in &grading.base {
                if !bw.is_positive() {
                    return Err(Error::InvalidInput(format!("weight of {} must be positive", b.name())));
                }
                let top = match b {
                    Base::Odd(_, m) if *m > 0 && spec.normal_form => 0,
                    _ => jet,
                };
                if let Base::Odd(_, m) = b {
                    if *m as usize > ctx.max_odd_level {
                        continue;
                    }
                }
                for s in 0..=top {
                    let gw = bw + &grading.dx * Q::from_integer((s as i64).into());
                    match *b {
                        Base::Even(f) => cands.push(Cand { even: Some(EvenJet { field: f, s: s as u16 }), odd: None, jet: s, w: gw }),
                        Base::Odd(f, m) => cands.push(Cand {
                            even: None,
                            odd: Some(OddJet { level: m, field: f, s: s as u16 }),
                            jet: s,
                            w: gw,
                        }),
                    }
                }
            }
            let mut out = Vec::new();
            if w.is_negative() {
                continue;
            }
            enumerate(&cands, 0, jet, &w, spec.super_degree, &mut Mono::one(), &mut out);
            for mut m in out {
                m.even.sort();
                m.odd.sort();
                basis.push((e, m));
            }
        }
        basis.sort();
        basis.dedup();
        Ok(Ansatz { ctx: ctx.clone(), eps: spec.eps, basis })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn element(&self, i: usize) -> DiffPoly {
        let (e, m) = &self.basis[i];
        DiffPoly::mono_poly(&self.ctx, m.clone(), Rf::var(self.eps).pow(*e))
    }

    pub fn assemble(&self, x: &[Rf]) -> DiffPoly {
        let mut p = DiffPoly::zero(&self.ctx);
        for (i, c) in x.iter().enumerate() {
            if !c.is_zero() {
                p = p.add(&self.element(i).scale(c));
            }
        }
        p
    }
}

/// Key of one scalar equation: output slot, monomial, ε-power.
type EqKey = (usize, Mono, u32);

fn split(p: &DiffPoly, slot: usize, eps: Option<usize>, out: &mut BTreeMap<EqKey, Rf>) -> Result<()> {
    for (m, c) in p.terms() {
        let Some(eps) = eps else {
            out.insert((slot, m.clone(), 0), c.clone());
            continue;
        };
        let cs = c
            .coeffs_in(eps)
            .ok_or_else(|| Error::InvalidInput("coefficient not polynomial in the expansion parameter".into()))?;
        for (k, x) in cs {
            out.insert((slot, m.clone(), k), x);
        }
    }
    Ok(())
}

/// Solve `Σ x_i images[i] = target` componentwise, splitting by monomial and ε-power.
/// Each image and the target are vectors of polynomials (one per output slot).
pub fn solve_images(
    n: usize,
    eps: Option<usize>,
    images: &[Vec<DiffPoly>],
    target: &[DiffPoly],
) -> Result<std::result::Result<Solution, linsolve::Inconsistent>> {
    let mut rows: BTreeMap<EqKey, Row> = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        for (slot, p) in img.iter().enumerate() {
            let mut eqs = BTreeMap::new();
            split(p, slot, eps, &mut eqs)?;
            for (k, c) in eqs {
                rows.entry(k).or_default().insert(i, c);
            }
        }
    }
    let mut rhs: BTreeMap<EqKey, Rf> = BTreeMap::new();
    for (slot, p) in target.iter().enumerate() {
        split(p, slot, eps, &mut rhs)?;
    }
    let mut system = Vec::new();
    for (k, r) in rows {
        let b = rhs.remove(&k).unwrap_or_else(Rf::zero);
        system.push((r, b));
    }
    for (_, b) in rhs {
        system.push((Row::new(), b));
    }
    Ok(linsolve::solve(n, system))
}
