//! Local functionals, variational derivatives, the Schouten–Nijenhuis bracket,
//! evolutionary derivations, Hamiltonian operators and Miura maps.

use crate::coeff::{Rf, Q};
use crate::diffpoly::{Base, Ctx, DiffPoly, EvenJet, Generator, Mono, OddJet};
use crate::error::{Error, Result};
use num_traits::{One, Zero};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

// ---------------------------------------------------------------------------
// canonical forms modulo total derivatives

type SliceKey = (Vec<(Base, u32)>, usize);

fn slice_of(m: &Mono) -> SliceKey {
    let mut counts: BTreeMap<Base, u32> = BTreeMap::new();
    for (e, k) in &m.even {
        *counts.entry(Base::Even(e.field)).or_default() += k;
    }
    for o in &m.odd {
        *counts.entry(Base::Odd(o.field, o.level)).or_default() += 1;
    }
    (counts.into_iter().collect(), m.jet_order())
}

/// Integration-by-parts priority: larger keys are eliminated first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct IbpKey(Vec<u16>, Mono);

fn ibp_key(m: &Mono) -> IbpKey {
    let mut v: Vec<u16> = Vec::new();
    for (e, k) in &m.even {
        for _ in 0..*k {
            v.push(e.s);
        }
    }
    v.extend(m.odd.iter().map(|o| o.s));
    v.sort_unstable_by(|a, b| b.cmp(a));
    IbpKey(v, m.clone())
}

/// Non-decreasing (even) or strictly increasing (odd) order tuples of given length and sum.
fn order_tuples(len: u32, sum: usize, strict: bool, min: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if len == 0 {
        if sum == 0 {
            out.push(cur.clone());
        }
        return;
    }
    let mut s = min;
    while s * (len as usize) <= sum {
        cur.push(s);
        order_tuples(len - 1, sum - s, strict, if strict { s + 1 } else { s }, out, cur);
        cur.pop();
        s += 1;
    }
}

/// Every monomial with the given base content and total jet order.
pub fn slice_basis(content: &[(Base, u32)], order: usize) -> Vec<Mono> {
    fn rec(content: &[(Base, u32)], left: usize, acc: Mono, out: &mut Vec<Mono>) {
        if content.is_empty() {
            if left == 0 {
                out.push(acc);
            }
            return;
        }
        let (b, c) = content[0];
        for used in 0..=left {
            let mut tuples = Vec::new();
            order_tuples(c, used, b.is_odd(), 0, &mut tuples, &mut Vec::new());
            for t in tuples {
                let mut m = acc.clone();
                match b {
                    Base::Even(f) => {
                        let mut even: BTreeMap<EvenJet, u32> = m.even.iter().cloned().collect();
                        for s in &t {
                            *even.entry(EvenJet { field: f, s: *s as u16 }).or_default() += 1;
                        }
                        m.even = even.into_iter().collect();
                    }
                    Base::Odd(f, l) => {
                        let mut odd = m.odd.clone();
                        odd.extend(t.iter().map(|s| OddJet { level: l, field: f, s: *s as u16 }));
                        odd.sort();
                        m.odd = odd;
                    }
                }
                rec(&content[1..], left - used, m, out);
            }
        }
    }
    let mut out = Vec::new();
    rec(content, order, Mono::one(), &mut out);
    out
}

type QRow = BTreeMap<Mono, Q>;

fn mono_dx(m: &Mono) -> QRow {
    let mut out: QRow = BTreeMap::new();
    let mut add = |mm: Mono, c: Q| {
        let e = out.entry(mm.clone()).or_insert_with(Q::zero);
        *e += c;
        if e.is_zero() {
            out.remove(&mm);
        }
    };
    for (i, (e, k)) in m.even.iter().enumerate() {
        let mut even: BTreeMap<EvenJet, u32> = m.even.iter().cloned().collect();
        if *k == 1 {
            even.remove(&m.even[i].0);
        } else {
            *even.get_mut(e).unwrap() -= 1;
        }
        *even.entry(EvenJet { field: e.field, s: e.s + 1 }).or_default() += 1;
        add(Mono { even: even.into_iter().collect(), odd: m.odd.clone() }, Q::from_integer((*k).into()));
    }
    for i in 0..m.odd.len() {
        let mut odd = m.odd.clone();
        odd[i].s += 1;
        if let Some((neg, odd)) = Mono::sort_odd(odd) {
            add(Mono { even: m.even.clone(), odd }, if neg { -Q::one() } else { Q::one() });
        }
    }
    out
}

struct SliceEchelon {
    pivots: BTreeMap<IbpKey, QRow>,
}

fn echelon_for(key: &SliceKey) -> Arc<SliceEchelon> {
    static CACHE: OnceLock<Mutex<HashMap<SliceKey, Arc<SliceEchelon>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(e) = cache.lock().unwrap().get(key) {
        return e.clone();
    }
    let mut pivots: BTreeMap<IbpKey, QRow> = BTreeMap::new();
    if key.1 > 0 {
        for b in slice_basis(&key.0, key.1 - 1) {
            let mut row = mono_dx(&b);
            loop {
                let lead = row.keys().map(ibp_key).max();
                let Some(lk) = lead else { break };
                if let Some(pr) = pivots.get(&lk) {
                    let k = row[&lk.1].clone();
                    for (m, c) in pr {
                        let e = row.entry(m.clone()).or_insert_with(Q::zero);
                        *e -= &k * c;
                        if e.is_zero() {
                            row.remove(m);
                        }
                    }
                } else {
                    let inv = Q::one() / &row[&lk.1];
                    let row: QRow = row.into_iter().map(|(m, c)| (m, c * &inv)).collect();
                    pivots.insert(lk, row);
                    break;
                }
            }
        }
    }
    let e = Arc::new(SliceEchelon { pivots });
    cache.lock().unwrap().insert(key.clone(), e.clone());
    e
}

/// Canonical representative of `∫f`.
pub fn reduce_mod_dx(f: &DiffPoly) -> DiffPoly {
    let mut groups: BTreeMap<SliceKey, BTreeMap<IbpKey, Rf>> = BTreeMap::new();
    for (m, c) in f.terms() {
        groups.entry(slice_of(m)).or_default().insert(ibp_key(m), c.clone());
    }
    let mut out = DiffPoly::zero(f.ctx());
    for (key, mut work) in groups {
        let ech = echelon_for(&key);
        while let Some((k, c)) = work.pop_last() {
            if let Some(row) = ech.pivots.get(&k) {
                for (m, x) in row {
                    if *m == k.1 {
                        continue;
                    }
                    let kk = ibp_key(m);
                    let e = work.entry(kk.clone()).or_insert_with(Rf::zero);
                    *e = e.sub(&c.scale_q(x));
                    if e.is_zero() {
                        work.remove(&kk);
                    }
                }
            } else {
                out.add_term(k.1, c);
            }
        }
    }
    out
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LocalFunctional {
    rep: DiffPoly,
}

pub fn functional(f: &DiffPoly) -> LocalFunctional {
    LocalFunctional { rep: reduce_mod_dx(f) }
}

impl LocalFunctional {
    pub fn zero(ctx: &Ctx) -> Self {
        LocalFunctional { rep: DiffPoly::zero(ctx) }
    }

    pub fn rep(&self) -> &DiffPoly {
        &self.rep
    }

    pub fn ctx(&self) -> &Ctx {
        self.rep.ctx()
    }

    pub fn is_zero(&self) -> bool {
        self.rep.is_zero()
    }

    pub fn add(&self, o: &LocalFunctional) -> LocalFunctional {
        functional(&self.rep.add(&o.rep))
    }

    pub fn sub(&self, o: &LocalFunctional) -> LocalFunctional {
        functional(&self.rep.sub(&o.rep))
    }

    pub fn scale(&self, c: &Rf) -> LocalFunctional {
        LocalFunctional { rep: self.rep.scale(c) }
    }

    pub fn super_degree(&self) -> Result<usize> {
        self.rep.super_degree()
    }

    pub fn var_derivative(&self, b: Base) -> DiffPoly {
        var_derivative(&self.rep, b)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.rep.to_json();
        v["functional"] = serde_json::Value::Bool(true);
        v
    }
}

// ---------------------------------------------------------------------------
// variational calculus

/// `δf/δb = Σ_s (−∂_x)^s ∂f/∂b^{(s)}`; odd partials act from the left.
pub fn var_derivative(f: &DiffPoly, b: Base) -> DiffPoly {
    let top = f.max_jet();
    let mut acc = DiffPoly::zero(f.ctx());
    for s in (0..=top).rev() {
        // Horner: acc = ∂f/∂b^{(s)} − ∂_x acc
        acc = f.partial(b.jet(s)).sub(&acc.dx());
    }
    acc
}

fn check_level0(f: &DiffPoly) -> Result<()> {
    if f.max_level().unwrap_or(0) > 0 {
        return Err(Error::OddLevelTooHigh);
    }
    Ok(())
}

/// `[P,Q] = ∫(δP/δθ_α δQ/δu^α + (−1)^p δP/δu^α δQ/δθ_α)`.
pub fn schouten(p: &LocalFunctional, q: &LocalFunctional) -> Result<LocalFunctional> {
    check_level0(p.rep())?;
    check_level0(q.rep())?;
    let pd = p.super_degree()?;
    q.super_degree()?;
    let ctx = p.ctx().clone();
    let mut acc = DiffPoly::zero(&ctx);
    for a in 0..ctx.n_fields() {
        let u = Base::Even(a as u16);
        let th = Base::Odd(a as u16, 0);
        let t1 = p.var_derivative(th).mul(&q.var_derivative(u));
        let t2 = p.var_derivative(u).mul(&q.var_derivative(th));
        acc = acc.add(&t1);
        acc = if pd % 2 == 0 { acc.add(&t2) } else { acc.sub(&t2) };
    }
    Ok(functional(&acc))
}

// ---------------------------------------------------------------------------
// evolutionary derivations

/// Normal-form map applied after every differentiation (identity on the plain ring).
pub type Norm<'a> = &'a dyn Fn(&DiffPoly) -> DiffPoly;

pub fn plain(p: &DiffPoly) -> DiffPoly {
    p.clone()
}

/// Apply a graded derivation of the given parity given its action on each jet generator.
pub fn apply_jetwise(
    f: &DiffPoly,
    odd: bool,
    image: &mut dyn FnMut(Generator) -> Result<DiffPoly>,
) -> Result<DiffPoly> {
    let ctx = f.ctx();
    let mut out = DiffPoly::zero(ctx);
    let mut cache: HashMap<Generator, DiffPoly> = HashMap::new();
    let mut img = |g: Generator| -> Result<DiffPoly> {
        if let Some(p) = cache.get(&g) {
            return Ok(p.clone());
        }
        let p = image(g)?;
        cache.insert(g, p.clone());
        Ok(p)
    };
    for (m, c) in f.terms() {
        let odd_tail = Mono { even: vec![], odd: m.odd.clone() };
        for (i, (e, k)) in m.even.iter().enumerate() {
            let d = img(Generator::Even(*e))?;
            if d.is_zero() {
                continue;
            }
            let mut even = m.even.clone();
            if *k == 1 {
                even.remove(i);
            } else {
                even[i].1 -= 1;
            }
            let head = DiffPoly::mono_poly(ctx, Mono { even, odd: vec![] }, c.scale_q(&Q::from_integer((*k).into())));
            out = out.add(&head.mul(&d).mul_mono(&odd_tail, &Rf::one()));
        }
        for i in 0..m.odd.len() {
            let d = img(Generator::Odd(m.odd[i]))?;
            if d.is_zero() {
                continue;
            }
            let sign_neg = odd && i % 2 == 1;
            let cc = if sign_neg { c.neg() } else { c.clone() };
            let head = DiffPoly::mono_poly(ctx, Mono { even: m.even.clone(), odd: m.odd[..i].to_vec() }, cc);
            let tail = Mono { even: vec![], odd: m.odd[i + 1..].to_vec() };
            out = out.add(&head.mul(&d).mul_mono(&tail, &Rf::one()));
        }
    }
    Ok(out)
}

/// Evolutionary derivation, stored by its images of jet-free generators.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolDerivation {
    pub ctx: Ctx,
    /// Shift of the super degree; its parity is the parity of the derivation.
    pub degree: i32,
    pub images: BTreeMap<Base, DiffPoly>,
}

impl EvolDerivation {
    pub fn new(ctx: &Ctx, degree: i32) -> Self {
        EvolDerivation { ctx: ctx.clone(), degree, images: BTreeMap::new() }
    }

    pub fn with(mut self, b: Base, p: DiffPoly) -> Self {
        self.images.insert(b, p);
        self
    }

    pub fn is_odd(&self) -> bool {
        self.degree.rem_euclid(2) == 1
    }

    pub fn image(&self, b: Base) -> Option<&DiffPoly> {
        self.images.get(&b)
    }

    pub fn jet_image(&self, g: Generator, norm: Norm) -> Result<DiffPoly> {
        let base = self.images.get(&g.base()).ok_or_else(|| Error::MissingImage(g.name()))?;
        let mut p = base.clone();
        for _ in 0..g.jet() {
            p = norm(&p.dx());
        }
        Ok(p)
    }

    pub fn apply(&self, f: &DiffPoly, norm: Norm) -> Result<DiffPoly> {
        let mut jets: HashMap<(Base, usize), DiffPoly> = HashMap::new();
        let r = apply_jetwise(f, self.is_odd(), &mut |g| {
            let b = g.base();
            let s = g.jet();
            let mut start = s;
            while start > 0 && !jets.contains_key(&(b, start)) {
                start -= 1;
            }
            let mut p = match jets.get(&(b, start)) {
                Some(p) => p.clone(),
                None => self.images.get(&b).cloned().ok_or_else(|| Error::MissingImage(g.name()))?,
            };
            for k in start..s {
                p = norm(&p.dx());
                jets.insert((b, k + 1), p.clone());
            }
            jets.insert((b, s), p.clone());
            Ok(p)
        })?;
        Ok(norm(&r))
    }

    pub fn add(&self, o: &EvolDerivation) -> EvolDerivation {
        let mut r = self.clone();
        for (b, p) in &o.images {
            let e = r.images.entry(*b).or_insert_with(|| DiffPoly::zero(&self.ctx));
            *e = e.add(p);
        }
        r
    }

    pub fn scale(&self, c: &Rf) -> EvolDerivation {
        let mut r = self.clone();
        for p in r.images.values_mut() {
            *p = p.scale(c);
        }
        r
    }

    pub fn neg(&self) -> EvolDerivation {
        self.scale(&Rf::int(-1))
    }

    pub fn sub(&self, o: &EvolDerivation) -> EvolDerivation {
        self.add(&o.neg())
    }

    pub fn is_zero(&self) -> bool {
        self.images.values().all(|p| p.is_zero())
    }

    /// Keep only the listed generators.
    pub fn restrict(&self, bases: &[Base]) -> EvolDerivation {
        let mut r = EvolDerivation::new(&self.ctx, self.degree);
        for b in bases {
            if let Some(p) = self.images.get(b) {
                r.images.insert(*b, p.clone());
            }
        }
        r
    }

    pub fn to_json(&self) -> serde_json::Value {
        let m: serde_json::Map<String, serde_json::Value> =
            self.images.iter().map(|(b, p)| (b.name(), serde_json::Value::String(p.to_text()))).collect();
        serde_json::json!({"degree": self.degree, "images": m})
    }
}

/// `[D1, D2] = D1∘D2 − (−1)^{kl} D2∘D1` on the generators both define.
pub fn commutator(d1: &EvolDerivation, d2: &EvolDerivation, norm: Norm) -> Result<EvolDerivation> {
    let sign_neg = !(d1.is_odd() && d2.is_odd());
    let mut r = EvolDerivation::new(&d1.ctx, d1.degree + d2.degree);
    for (b, p2) in &d2.images {
        let Some(p1) = d1.images.get(b) else { continue };
        let a = d1.apply(p2, norm)?;
        let c = d2.apply(p1, norm)?;
        r.images.insert(*b, if sign_neg { a.sub(&c) } else { a.add(&c) });
    }
    Ok(r)
}

/// `D_P`: `u^α ↦ δP/δθ_α`, `θ_α ↦ (−1)^p δP/δu^α`.
pub fn dp_derivation(p: &LocalFunctional) -> Result<EvolDerivation> {
    check_level0(p.rep())?;
    let pd = p.super_degree()?;
    let ctx = p.ctx().clone();
    let mut d = EvolDerivation::new(&ctx, pd as i32 - 1);
    for a in 0..ctx.n_fields() {
        let u = Base::Even(a as u16);
        let th = Base::Odd(a as u16, 0);
        d.images.insert(u, p.var_derivative(th));
        let w = p.var_derivative(u);
        d.images.insert(th, if pd % 2 == 0 { w } else { w.neg() });
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Hamiltonian operators

/// Matrix of differential operators `Σ_s P^{αβ}_s ∂_x^s`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamOperator {
    pub ctx: Ctx,
    pub entries: Vec<Vec<BTreeMap<usize, DiffPoly>>>,
}

pub fn ham_operator(p: &LocalFunctional) -> Result<HamOperator> {
    check_level0(p.rep())?;
    if p.super_degree()? != 2 && !p.is_zero() {
        return Err(Error::NotHydrodynamic("super degree must be 2".into()));
    }
    let ctx = p.ctx().clone();
    let n = ctx.n_fields();
    let mut entries = vec![vec![BTreeMap::new(); n]; n];
    for (a, row) in entries.iter_mut().enumerate() {
        let d = p.var_derivative(Base::Odd(a as u16, 0));
        for (m, c) in d.terms() {
            let o = m.odd[0];
            let coeff = DiffPoly::mono_poly(&ctx, m.even_only(), c.clone());
            let e: &mut DiffPoly = row[o.field as usize].entry(o.s as usize).or_insert_with(|| DiffPoly::zero(&ctx));
            *e = e.add(&coeff);
        }
    }
    for row in entries.iter_mut() {
        for e in row.iter_mut() {
            e.retain(|_, p| !p.is_zero());
        }
    }
    Ok(HamOperator { ctx, entries })
}

impl HamOperator {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    /// `(𝒫 σ_m)^α = Σ_{β,s} P^{αβ}_s σ_{β,m}^{(s)}`.
    pub fn apply_to_level(&self, m: usize) -> Vec<DiffPoly> {
        self.entries
            .iter()
            .map(|row| {
                let mut acc = DiffPoly::zero(&self.ctx);
                for (b, ops) in row.iter().enumerate() {
                    for (s, c) in ops {
                        acc = acc.add(&c.mul(&DiffPoly::sigma(&self.ctx, b, m, *s)));
                    }
                }
                acc
            })
            .collect()
    }

    /// Apply to a vector of arbitrary expressions.
    pub fn apply(&self, v: &[DiffPoly]) -> Vec<DiffPoly> {
        self.entries
            .iter()
            .map(|row| {
                let mut acc = DiffPoly::zero(&self.ctx);
                for (b, ops) in row.iter().enumerate() {
                    for (s, c) in ops {
                        acc = acc.add(&c.mul(&v[b].dx_n(*s)));
                    }
                }
                acc
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.entries
                .iter()
                .map(|row| {
                    serde_json::Value::Array(
                        row.iter()
                            .map(|ops| {
                                let m: serde_json::Map<String, serde_json::Value> = ops
                                    .iter()
                                    .map(|(s, c)| (format!("dx^{s}"), serde_json::Value::String(c.to_text())))
                                    .collect();
                                serde_json::Value::Object(m)
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

/// Metric `g^{αβ}` and Christoffel coefficients `Γ^{αβ}_γ` of a hydrodynamic bivector.
#[derive(Clone, Debug)]
pub struct HydroData {
    pub g: Vec<Vec<DiffPoly>>,
    /// `gamma[α][β][γ]`
    pub gamma: Vec<Vec<Vec<DiffPoly>>>,
}

pub fn hydro_metric(p: &LocalFunctional) -> Result<HydroData> {
    let h = ham_operator(p)?;
    let ctx = p.ctx().clone();
    let n = h.n();
    let z = DiffPoly::zero(&ctx);
    let mut g = vec![vec![z.clone(); n]; n];
    let mut gamma = vec![vec![vec![z.clone(); n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for (s, c) in &h.entries[a][b] {
                match s {
                    1 => {
                        if c.max_jet() > 0 {
                            return Err(Error::NotHydrodynamic("metric depends on derivatives".into()));
                        }
                        g[a][b] = c.clone();
                    }
                    0 => {
                        for (m, x) in c.terms() {
                            let jets: Vec<&(EvenJet, u32)> = m.even.iter().filter(|(e, _)| e.s > 0).collect();
                            if jets.len() != 1 || jets[0].0.s != 1 || jets[0].1 != 1 {
                                return Err(Error::NotHydrodynamic("zeroth-order term not linear in u_x".into()));
                            }
                            let gidx = jets[0].0.field as usize;
                            let even: Vec<(EvenJet, u32)> = m.even.iter().filter(|(e, _)| e.s == 0).cloned().collect();
                            let t = DiffPoly::mono_poly(&ctx, Mono { even, odd: vec![] }, x.clone());
                            gamma[a][b][gidx] = gamma[a][b][gidx].add(&t);
                        }
                    }
                    _ => return Err(Error::NotHydrodynamic(format!("operator has order {s}"))),
                }
            }
        }
    }
    if determinant(&g).is_zero() {
        return Err(Error::DegenerateMetric);
    }
    Ok(HydroData { g, gamma })
}

/// Determinant by cofactor expansion (small matrices only).
pub fn determinant(m: &[Vec<DiffPoly>]) -> DiffPoly {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let ctx = m[0][0].ctx().clone();
    let mut acc = DiffPoly::zero(&ctx);
    for j in 0..n {
        let minor: Vec<Vec<DiffPoly>> =
            (1..n).map(|i| (0..n).filter(|&k| k != j).map(|k| m[i][k].clone()).collect()).collect();
        let t = m[0][j].mul(&determinant(&minor));
        acc = if j % 2 == 0 { acc.add(&t) } else { acc.sub(&t) };
    }
    acc
}

// ---------------------------------------------------------------------------
// Miura transformations

/// Substitute every jet generator by the given image (an algebra homomorphism).
pub fn substitute(f: &DiffPoly, image: &mut dyn FnMut(Generator) -> DiffPoly) -> DiffPoly {
    let ctx = f.ctx();
    let mut cache: HashMap<Generator, DiffPoly> = HashMap::new();
    let mut out = DiffPoly::zero(ctx);
    for (m, c) in f.terms() {
        let mut t = DiffPoly::constant(ctx, c.clone());
        for (e, k) in &m.even {
            let g = Generator::Even(*e);
            let p = cache.entry(g).or_insert_with(|| image(g)).clone();
            t = t.mul(&p.pow(*k));
        }
        for o in &m.odd {
            let g = Generator::Odd(*o);
            let p = cache.entry(g).or_insert_with(|| image(g)).clone();
            t = t.mul(&p);
        }
        out = out.add(&t);
    }
    out
}

/// Rewrite `expr`, given in the old coordinates `(w, φ)`, in the coordinates
/// `(w̃, φ̃)` of the Miura map `w̃^α = map[α](w)`.
///
/// The part of the map free of `ε` must be affine with constant invertible
/// Jacobian; the inverse is built as a series in `ε` truncated at `eps_order`.
/// Odd variables transform by `φ_α^s = ∂^s Σ_t (−∂)^t (∂w̃^β/∂w^{α,t} φ̃_β)` at every level.
pub fn miura(expr: &DiffPoly, map: &[DiffPoly], eps: usize, eps_order: u32) -> Result<DiffPoly> {
    let ctx = expr.ctx().clone();
    let n = ctx.n_fields();
    if map.len() != n {
        return Err(Error::InvalidInput("map length differs from field count".into()));
    }
    // leading linear part A and shift b
    let mut a = vec![vec![Rf::zero(); n]; n];
    let mut shift = vec![Rf::zero(); n];
    let mut rest = Vec::with_capacity(n);
    for (i, w) in map.iter().enumerate() {
        let lead = w.truncate_param(eps, 0);
        let r = w.sub(&lead);
        for (m, c) in lead.terms() {
            if *m == Mono::one() {
                shift[i] = c.clone();
            } else if m.odd.is_empty() && m.even.len() == 1 && m.even[0].1 == 1 && m.even[0].0.s == 0 {
                a[i][m.even[0].0.field as usize] = c.clone();
            } else {
                return Err(Error::NonInvertibleLeadingJacobian);
            }
        }
        rest.push(r);
    }
    let ainv = invert_matrix(&a).ok_or(Error::NonInvertibleLeadingJacobian)?;
    // w = A^{-1}(w̃ − b − rest(w)), iterated in powers of ε
    let mut winv: Vec<DiffPoly> = (0..n)
        .map(|i| {
            let mut acc = DiffPoly::zero(&ctx);
            for (j, aij) in ainv[i].iter().enumerate() {
                let t = DiffPoly::u(&ctx, j, 0).sub(&DiffPoly::constant(&ctx, shift[j].clone()));
                acc = acc.add(&t.scale(aij));
            }
            acc
        })
        .collect();
    for _ in 0..eps_order {
        let cur = winv.clone();
        let sub = |f: &DiffPoly| -> DiffPoly {
            substitute(f, &mut |g| match g {
                Generator::Even(e) => cur[e.field as usize].dx_n(e.s as usize),
                _ => DiffPoly::gen(&ctx, g),
            })
            .truncate_param(eps, eps_order)
        };
        let rs: Vec<DiffPoly> = rest.iter().map(&sub).collect();
        winv = (0..n)
            .map(|i| {
                let mut acc = DiffPoly::zero(&ctx);
                for (j, aij) in ainv[i].iter().enumerate() {
                    let t = DiffPoly::u(&ctx, j, 0)
                        .sub(&DiffPoly::constant(&ctx, shift[j].clone()))
                        .sub(&rs[j]);
                    acc = acc.add(&t.scale(aij));
                }
                acc.truncate_param(eps, eps_order)
            })
            .collect();
    }
    // φ_{α,m} in terms of φ̃ with coefficients in the old w, then w ↦ winv
    let odd_image = |f: usize, level: usize| -> DiffPoly {
        let mut acc = DiffPoly::zero(&ctx);
        for (b, wb) in map.iter().enumerate() {
            let top = wb.max_jet();
            for t in 0..=top {
                let d = wb.partial(Generator::u(f, t));
                if d.is_zero() {
                    continue;
                }
                let mut term = d.mul(&DiffPoly::sigma(&ctx, b, level, 0)).dx_n(t);
                if t % 2 == 1 {
                    term = term.neg();
                }
                acc = acc.add(&term);
            }
        }
        acc
    };
    let mut odd_cache: HashMap<(usize, usize), DiffPoly> = HashMap::new();
    let pass1 = substitute(expr, &mut |g| match g {
        Generator::Odd(o) => odd_cache
            .entry((o.field as usize, o.level as usize))
            .or_insert_with(|| odd_image(o.field as usize, o.level as usize))
            .dx_n(o.s as usize),
        _ => DiffPoly::gen(&ctx, g),
    });
    let out = substitute(&pass1, &mut |g| match g {
        Generator::Even(e) => winv[e.field as usize].dx_n(e.s as usize),
        _ => DiffPoly::gen(&ctx, g),
    });
    Ok(out.truncate_param(eps, eps_order))
}

pub fn invert_matrix(a: &[Vec<Rf>]) -> Option<Vec<Vec<Rf>>> {
    let n = a.len();
    let mut m: Vec<Vec<Rf>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.extend((0..n).map(|j| if i == j { Rf::one() } else { Rf::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, p);
        let inv = m[col][col].inv();
        for x in m[col].iter_mut() {
            *x = x.mul(&inv);
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let k = m[r][col].clone();
                let pivot = m[col].clone();
                for (x, y) in m[r].iter_mut().zip(pivot.iter()) {
                    *x = x.sub(&k.mul(y));
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::q;
    use crate::diffpoly::JetContext;
    use crate::parse::parse_poly;

    fn ctx() -> Ctx {
        JetContext::new(&["u"], 0, &[("eps", -1), ("c", 0)]).unwrap()
    }

    fn p(c: &Ctx, s: &str) -> DiffPoly {
        parse_poly(c, s).unwrap()
    }

    #[test]
    fn integration_by_parts() {
        let c = ctx();
        assert!(functional(&p(&c, "u1_0^2").dx()).is_zero());
        assert_eq!(functional(&p(&c, "u1_0*u1_2")), functional(&p(&c, "-u1_1^2")));
        let t = functional(&p(&c, "th1_0*th1_1"));
        assert_eq!(t.rep(), &p(&c, "th1_0*th1_1"));
    }

    #[test]
    fn euler_operator() {
        let c = ctx();
        let h = p(&c, "u1_0^3/6 - eps^2/24*u1_1^2");
        assert_eq!(var_derivative(&h, Base::Even(0)), p(&c, "u1_0^2/2 + eps^2/12*u1_2"));
        let t = p(&c, "1/2*th1_0*th1_1");
        assert_eq!(var_derivative(&t, Base::Odd(0, 0)), p(&c, "th1_1"));
        let any = p(&c, "u1_0^2*u1_3*th1_1*th1_2");
        assert!(var_derivative(&any.dx(), Base::Even(0)).is_zero());
        assert!(var_derivative(&any.dx(), Base::Odd(0, 0)).is_zero());
    }

    fn kdv(c: &Ctx) -> (LocalFunctional, LocalFunctional) {
        (
            functional(&p(c, "1/2*th1_0*th1_1")),
            functional(&p(c, "1/2*u1_0*th1_0*th1_1 + eps^2/16*th1_0*th1_3")),
        )
    }

    #[test]
    fn kdv_pair_brackets() {
        let c = ctx();
        let (p0, p1) = kdv(&c);
        assert!(schouten(&p0, &p0).unwrap().is_zero());
        assert!(schouten(&p0, &p1).unwrap().is_zero());
        assert!(schouten(&p1, &p1).unwrap().is_zero());
    }

    #[test]
    fn exactness_of_deformed_pair() {
        let c = ctx();
        let z = functional(&p(&c, "th1_0"));
        let p1 = functional(&p(&c, "1/2*u1_0*th1_0*th1_1 + c*eps^2/2*th1_0*th1_3"));
        assert_eq!(schouten(&z, &p1).unwrap(), functional(&p(&c, "1/2*th1_0*th1_1")));
    }

    #[test]
    fn derivations_of_kdv() {
        let c = ctx();
        let (p0, _) = kdv(&c);
        let d0 = dp_derivation(&p0).unwrap();
        assert_eq!(d0.image(Base::Even(0)).unwrap(), &p(&c, "th1_1"));
        assert!(d0.image(Base::Odd(0, 0)).unwrap().is_zero());
        let p1 = functional(&p(&c, "1/2*u1_0*th1_0*th1_1"));
        let d1 = dp_derivation(&p1).unwrap();
        assert_eq!(d1.image(Base::Odd(0, 0)).unwrap(), &p(&c, "1/2*th1_0*th1_1"));
        let sq = commutator(&d0, &d0, &plain).unwrap();
        assert!(sq.is_zero());
    }

    #[test]
    fn hamiltonian_operators() {
        let c = ctx();
        let (p0, p1) = kdv(&c);
        let h0 = ham_operator(&p0).unwrap();
        assert_eq!(h0.entries[0][0].len(), 1);
        assert_eq!(h0.entries[0][0][&1], DiffPoly::one(&c));
        let h1 = ham_operator(&p1).unwrap();
        assert_eq!(h1.entries[0][0][&1], p(&c, "u1_0"));
        assert_eq!(h1.entries[0][0][&0], p(&c, "1/2*u1_1"));
        assert_eq!(h1.entries[0][0][&3], p(&c, "eps^2/8"));
        assert_eq!(h1.apply_to_level(0)[0], p1.var_derivative(Base::Odd(0, 0)));
    }

    #[test]
    fn hydrodynamic_data() {
        let c = ctx();
        let p1 = functional(&p(&c, "1/2*u1_0*th1_0*th1_1"));
        let h = hydro_metric(&p1).unwrap();
        assert_eq!(h.g[0][0], p(&c, "u1_0"));
        assert_eq!(h.gamma[0][0][0], DiffPoly::rational(&c, q(1, 2)));
        let flat = functional(&p(&c, "th1_0*th1_1"));
        assert!(matches!(hydro_metric(&flat.scale(&Rf::zero())), Err(Error::DegenerateMetric)));
    }

    #[test]
    fn miura_maps() {
        let c = ctx();
        let e = c.param_index("eps").unwrap();
        let th = p(&c, "th1_0");
        let id = miura(&th, &[p(&c, "u1_0")], e, 4).unwrap();
        assert_eq!(id, th);
        let m = miura(&th, &[p(&c, "u1_0 + eps*u1_1")], e, 4).unwrap();
        assert_eq!(m, p(&c, "th1_0 - eps*th1_1"));
        let x = p(&c, "u1_0^2*th1_1");
        let there = miura(&x, &[p(&c, "2*u1_0")], e, 4).unwrap();
        assert_eq!(there, p(&c, "1/2*u1_0^2*th1_1"));
        let back = miura(&there, &[p(&c, "1/2*u1_0")], e, 4).unwrap();
        assert_eq!(back, x);
        let w = miura(&p(&c, "u1_0"), &[p(&c, "u1_0 + eps*u1_1")], e, 2).unwrap();
        assert_eq!(w, p(&c, "u1_0 - eps*u1_1 + eps^2*u1_2"));
    }
}
