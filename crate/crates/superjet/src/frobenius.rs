//! Frobenius manifolds: WDVV, calibration, the Principal Hierarchy with its super
//! extension, the hydrodynamic bihamiltonian pair, two-point functions and the
//! quadratic operators representing Virasoro symmetries on tau-cover times.

use crate::ansatz::solve_images;
use crate::coeff::{Rf, Q};
use crate::diffpoly::{Base, Ctx, DiffPoly, EvenJet, Generator, Mono};
use crate::error::{Error, Result};
use crate::parse::parse_poly;
use crate::superext::{BihamPair, shift_tkl};
use crate::variational::{functional, EvolDerivation, LocalFunctional};
use num_traits::{One, Signed, Zero};
use serde::Deserialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::sync::Arc;

fn qparse(s: &str) -> Result<Q> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: num_bigint::BigInt = n.parse().map_err(|_| Error::InvalidInput(format!("bad rational `{s}`")))?;
    let d: num_bigint::BigInt = d.parse().map_err(|_| Error::InvalidInput(format!("bad rational `{s}`")))?;
    if d.is_zero() {
        return Err(Error::InvalidInput(format!("zero denominator in `{s}`")));
    }
    Ok(Q::new(n, d))
}

pub fn parse_rational(s: &str) -> Result<Q> {
    qparse(s)
}

/// Render a rational as `p/q` (or `p`).
pub fn qtext(q: &Q) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn constant_of(p: &DiffPoly) -> Option<Q> {
    if p.is_zero() {
        return Some(Q::zero());
    }
    if p.num_terms() != 1 {
        return None;
    }
    let (m, c) = p.terms().next().unwrap();
    if *m != Mono::one() {
        return None;
    }
    c.as_q()
}

fn dv(p: &DiffPoly, a: usize) -> DiffPoly {
    p.partial(Generator::u(a, 0))
}

fn qpoly(ctx: &Ctx, q: &Q) -> DiffPoly {
    DiffPoly::rational(ctx, q.clone())
}

fn qmat_inv(m: &[Vec<Q>]) -> Option<Vec<Vec<Q>>> {
    let rf: Vec<Vec<Rf>> = m.iter().map(|r| r.iter().map(|x| Rf::from_q(x.clone())).collect()).collect();
    let inv = crate::variational::invert_matrix(&rf)?;
    Some(inv.into_iter().map(|r| r.into_iter().map(|x| x.as_q().unwrap()).collect()).collect())
}

/// `η_{αβ} = ∂_1∂_α∂_β F` and its inverse.
pub fn metric_of(f: &DiffPoly) -> Result<(Vec<Vec<Q>>, Vec<Vec<Q>>)> {
    let n = f.ctx().n_fields();
    let mut eta = vec![vec![Q::zero(); n]; n];
    for a in 0..n {
        for b in 0..n {
            eta[a][b] = constant_of(&dv(&dv(&dv(f, 0), a), b)).ok_or(Error::EtaNotConstant)?;
        }
    }
    let inv = qmat_inv(&eta).ok_or(Error::EtaSingular)?;
    Ok((eta, inv))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WdvvReport {
    pub ok: bool,
    /// First `(α, β, γ, δ)` violating the equation.
    pub failing: Option<[usize; 4]>,
}

/// Check `c_{αβλ}η^{λμ}c_{μγδ} = c_{δβλ}η^{λμ}c_{μγα}` for every index tuple.
pub fn wdvv_check(f: &DiffPoly) -> Result<WdvvReport> {
    let n = f.ctx().n_fields();
    let (_, eta_inv) = metric_of(f)?;
    let c3 = third_derivatives(f);
    let ctx = f.ctx();
    let contract = |a: usize, b: usize, g: usize, d: usize| -> DiffPoly {
        let mut acc = DiffPoly::zero(ctx);
        for l in 0..n {
            for m in 0..n {
                if !eta_inv[l][m].is_zero() {
                    acc = acc.add(&c3[a][b][l].mul(&c3[m][g][d]).scale_q(&eta_inv[l][m]));
                }
            }
        }
        acc
    };
    for a in 0..n {
        for b in 0..n {
            for g in 0..n {
                for d in 0..n {
                    if contract(a, b, g, d) != contract(d, b, g, a) {
                        return Ok(WdvvReport { ok: false, failing: Some([a, b, g, d]) });
                    }
                }
            }
        }
    }
    Ok(WdvvReport { ok: true, failing: None })
}

fn third_derivatives(f: &DiffPoly) -> Vec<Vec<Vec<DiffPoly>>> {
    let n = f.ctx().n_fields();
    (0..n).map(|a| (0..n).map(|b| (0..n).map(|g| dv(&dv(&dv(f, a), b), g)).collect()).collect()).collect()
}

/// Frobenius manifold input file (TOML).
#[derive(Debug, Clone, Deserialize)]
pub struct FrobeniusFile {
    pub fields: Vec<String>,
    /// Potential in the `u1_0` generator grammar.
    pub potential: String,
    /// Coefficients `e_α` of the linear part of `E = Σ(e_α v^α + r_α)∂_α`.
    pub euler: Vec<String>,
    #[serde(default)]
    pub r: Vec<String>,
    /// Matrices `R_1, R_2, …` as rows of rationals.
    #[serde(default, rename = "R")]
    pub rmats: Vec<Vec<Vec<String>>>,
}

#[derive(Debug, Clone)]
pub struct FrobeniusData {
    pub ctx: Ctx,
    pub f: DiffPoly,
    pub eta: Vec<Vec<Q>>,
    pub eta_inv: Vec<Vec<Q>>,
    /// `c_{αβγ}`
    pub c3: Vec<Vec<Vec<DiffPoly>>>,
    pub euler: Vec<Q>,
    pub r: Vec<Q>,
    pub rmats: Vec<Vec<Vec<Q>>>,
    pub d: Q,
    pub mu: Vec<Q>,
}

impl FrobeniusData {
    pub fn from_file(ctx: &Ctx, file: &FrobeniusFile) -> Result<FrobeniusData> {
        if file.fields.len() != ctx.n_fields() {
            return Err(Error::InvalidInput("field count differs from the context".into()));
        }
        let f = parse_poly(ctx, &file.potential)?;
        let euler = file.euler.iter().map(|s| qparse(s)).collect::<Result<Vec<_>>>()?;
        let r = if file.r.is_empty() {
            vec![Q::zero(); ctx.n_fields()]
        } else {
            file.r.iter().map(|s| qparse(s)).collect::<Result<Vec<_>>>()?
        };
        let rmats = file
            .rmats
            .iter()
            .map(|m| m.iter().map(|row| row.iter().map(|s| qparse(s)).collect::<Result<Vec<_>>>()).collect())
            .collect::<Result<Vec<_>>>()?;
        FrobeniusData::new(f, euler, r, rmats)
    }

    pub fn parse(ctx: &Ctx, toml_text: &str) -> Result<FrobeniusData> {
        let file: FrobeniusFile = toml::from_str(toml_text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        FrobeniusData::from_file(ctx, &file)
    }

    pub fn new(f: DiffPoly, euler: Vec<Q>, r: Vec<Q>, rmats: Vec<Vec<Vec<Q>>>) -> Result<FrobeniusData> {
        let ctx = f.ctx().clone();
        let n = ctx.n_fields();
        if euler.len() != n || r.len() != n {
            return Err(Error::InvalidInput("Euler data has the wrong length".into()));
        }
        if f.max_jet() > 0 || f.terms().any(|(m, _)| !m.odd.is_empty()) {
            return Err(Error::InvalidInput("potential must depend on v only".into()));
        }
        let (eta, eta_inv) = metric_of(&f)?;
        let c3 = third_derivatives(&f);
        // E(F) = (3 − d)F + quadratic
        let ef = euler_apply(&euler, &r, &f);
        let cubic = f.terms().find(|(m, _)| mono_degree(m) >= 3).ok_or_else(|| {
            Error::InvalidInput("potential has no cubic or higher terms".into())
        })?;
        let lambda = mono_weight(&euler, cubic.0);
        let rest = ef.sub(&f.scale_q(&lambda));
        if rest.terms().any(|(m, _)| mono_degree(m) > 2) {
            return Err(Error::InvalidInput("potential is not quasi-homogeneous".into()));
        }
        let d = Q::from_integer(3.into()) - lambda;
        let half_d = &d / Q::from_integer(2.into());
        let mu: Vec<Q> = euler.iter().map(|e| Q::one() - &half_d - e).collect();
        if mu[0] != -half_d.clone() || !r[0].is_zero() {
            return Err(Error::InvalidInput("μ_1 = −d/2 and r_1 = 0 are required".into()));
        }
        for a in 0..n {
            for b in 0..n {
                if !((&mu[a] + &mu[b]) * &eta[a][b]).is_zero() {
                    return Err(Error::InvalidInput("(μ_α + μ_β)η_{αβ} ≠ 0".into()));
                }
            }
        }
        Ok(FrobeniusData { ctx, f, eta, eta_inv, c3, euler, r, rmats, d, mu })
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }

    /// `c^γ_{αβ}`
    pub fn c_up(&self, g: usize, a: usize, b: usize) -> DiffPoly {
        let mut acc = DiffPoly::zero(&self.ctx);
        for l in 0..self.n() {
            if !self.eta_inv[g][l].is_zero() {
                acc = acc.add(&self.c3[l][a][b].scale_q(&self.eta_inv[g][l]));
            }
        }
        acc
    }

    /// `c^{αβ}_γ = η^{αλ}c^β_{λγ}`
    pub fn c_upup(&self, a: usize, b: usize, g: usize) -> DiffPoly {
        let mut acc = DiffPoly::zero(&self.ctx);
        for l in 0..self.n() {
            if !self.eta_inv[a][l].is_zero() {
                acc = acc.add(&self.c_up(b, l, g).scale_q(&self.eta_inv[a][l]));
            }
        }
        acc
    }

    /// `E^ε` as a polynomial.
    pub fn euler_component(&self, e: usize) -> DiffPoly {
        DiffPoly::u(&self.ctx, e, 0).scale_q(&self.euler[e]).add(&qpoly(&self.ctx, &self.r[e]))
    }

    pub fn g_up(&self, a: usize, b: usize) -> DiffPoly {
        let mut acc = DiffPoly::zero(&self.ctx);
        for e in 0..self.n() {
            acc = acc.add(&self.euler_component(e).mul(&self.c_upup(a, b, e)));
        }
        acc
    }

    pub fn gamma_up(&self, a: usize, b: usize, g: usize) -> DiffPoly {
        self.c_upup(a, b, g).scale_q(&(Q::new(1.into(), 2.into()) - &self.mu[b]))
    }

    pub fn has_r(&self) -> bool {
        self.rmats.iter().any(|m| m.iter().any(|r| r.iter().any(|x| !x.is_zero())))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mat = |m: &Vec<Vec<Q>>| -> serde_json::Value {
            m.iter().map(|r| r.iter().map(qtext).collect::<Vec<_>>()).collect::<Vec<_>>().into()
        };
        json!({
            "potential": self.f.to_text(),
            "eta": mat(&self.eta),
            "mu": self.mu.iter().map(qtext).collect::<Vec<_>>(),
            "d": qtext(&self.d),
        })
    }
}

fn mono_degree(m: &Mono) -> u32 {
    m.even.iter().map(|(_, k)| *k).sum()
}

fn mono_weight(euler: &[Q], m: &Mono) -> Q {
    let mut w = Q::zero();
    for (e, k) in &m.even {
        w += &euler[e.field as usize] * Q::from_integer((*k).into());
    }
    w
}

fn euler_apply(euler: &[Q], r: &[Q], f: &DiffPoly) -> DiffPoly {
    let ctx = f.ctx();
    let mut acc = DiffPoly::zero(ctx);
    for a in 0..euler.len() {
        let ea = DiffPoly::u(ctx, a, 0).scale_q(&euler[a]).add(&qpoly(ctx, &r[a]));
        acc = acc.add(&ea.mul(&dv(f, a)));
    }
    acc
}

/// Monomials in `v^α` (no jets) of the given weight and degree ≥ 1.
fn weighted_monomials(n: usize, weights: &[Q], w: &Q) -> Result<Vec<Mono>> {
    if weights.iter().any(|x| !x.is_positive()) {
        return Err(Error::Unsupported("calibration needs positive Euler weights".into()));
    }
    fn rec(i: usize, n: usize, weights: &[Q], w: &Q, cur: &mut Vec<(EvenJet, u32)>, out: &mut Vec<Mono>) {
        if w.is_zero() {
            if !cur.is_empty() {
                out.push(Mono { even: cur.clone(), odd: vec![] });
            }
            return;
        }
        if i == n {
            return;
        }
        let mut k = 0u32;
        loop {
            let used = &weights[i] * Q::from_integer(k.into());
            if &used > w {
                break;
            }
            if k > 0 {
                cur.push((EvenJet { field: i as u16, s: 0 }, k));
            }
            rec(i + 1, n, weights, &(w - &used), cur, out);
            if k > 0 {
                cur.pop();
            }
            k += 1;
        }
    }
    let mut out = Vec::new();
    rec(0, n, weights, w, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Calibration table `h[α][p]`.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub h: Vec<Vec<DiffPoly>>,
}

impl Calibration {
    pub fn depth(&self) -> usize {
        self.h[0].len() - 1
    }

    pub fn get(&self, a: usize, p: usize) -> Result<&DiffPoly> {
        self.h[a].get(p).ok_or_else(|| Error::InvalidInput(format!("calibration computed only to level {}", self.depth())))
    }

    pub fn to_json(&self) -> serde_json::Value {
        self.h.iter().map(|row| row.iter().map(|p| p.to_text()).collect::<Vec<_>>()).collect::<Vec<_>>().into()
    }
}

/// `⟨∇a, ∇b⟩ = η^{λμ}∂_λa ∂_μb`.
pub fn pairing(data: &FrobeniusData, a: &DiffPoly, b: &DiffPoly) -> DiffPoly {
    let n = data.n();
    let mut acc = DiffPoly::zero(&data.ctx);
    for l in 0..n {
        for m in 0..n {
            if !data.eta_inv[l][m].is_zero() {
                acc = acc.add(&dv(a, l).mul(&dv(b, m)).scale_q(&data.eta_inv[l][m]));
            }
        }
    }
    acc
}

pub fn calibrate(data: &FrobeniusData, depth: usize) -> Result<Calibration> {
    if data.has_r() {
        return Err(Error::UnsupportedResonance("calibration with R ≠ 0".into()));
    }
    if data.r.iter().any(|x| !x.is_zero()) {
        return Err(Error::Unsupported("calibration with r ≠ 0".into()));
    }
    let n = data.n();
    let ctx = &data.ctx;
    let mut h: Vec<Vec<DiffPoly>> = (0..n)
        .map(|a| {
            let mut h0 = DiffPoly::zero(ctx);
            for b in 0..n {
                h0 = h0.add(&DiffPoly::u(ctx, b, 0).scale_q(&data.eta[a][b]));
            }
            vec![h0]
        })
        .collect();
    let half_d = &data.d / Q::from_integer(2.into());
    for lvl in 1..=depth {
        // unknowns: monomials of each h_{α,lvl}
        let mut unknowns: Vec<(usize, Mono)> = Vec::new();
        for a in 0..n {
            let w = Q::from_integer((lvl as i64 + 1).into()) + &data.mu[a] - &half_d;
            for m in weighted_monomials(n, &data.euler, &w)? {
                unknowns.push((a, m));
            }
        }
        // slots: recursion (α,β,γ) then normalization (α,β)
        let slot_rec = |a: usize, b: usize, g: usize| (a * n + b) * n + g;
        let slot_norm = |a: usize, b: usize| n * n * n + a * n + b;
        let nslots = n * n * n + n * n;
        let sign = if lvl % 2 == 0 { Q::one() } else { -Q::one() };
        let mut images = Vec::with_capacity(unknowns.len());
        for (a, m) in &unknowns {
            let e = DiffPoly::mono_poly(ctx, m.clone(), Rf::one());
            let mut img = vec![DiffPoly::zero(ctx); nslots];
            for b in 0..n {
                for g in 0..n {
                    img[slot_rec(*a, b, g)] = dv(&dv(&e, b), g);
                }
            }
            for b in 0..n {
                // ∂_β h_{α,N} + (−1)^N ∂_α h_{β,N}
                let s1 = slot_norm(*a, b);
                img[s1] = img[s1].add(&dv(&e, b));
                let s2 = slot_norm(b, *a);
                img[s2] = img[s2].add(&dv(&e, b).scale_q(&sign));
            }
            images.push(img);
        }
        let mut target = vec![DiffPoly::zero(ctx); nslots];
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    let mut t = DiffPoly::zero(ctx);
                    for l in 0..n {
                        t = t.add(&data.c_up(l, b, g).mul(&dv(&h[a][lvl - 1], l)));
                    }
                    target[slot_rec(a, b, g)] = t;
                }
                let mut t = DiffPoly::zero(ctx);
                for p in 1..lvl {
                    let s = if (lvl - p) % 2 == 0 { Q::one() } else { -Q::one() };
                    t = t.add(&pairing(data, &h[a][p], &h[b][lvl - p]).scale_q(&s));
                }
                target[slot_norm(a, b)] = t.neg();
            }
        }
        let sol = solve_images(unknowns.len(), None, &images, &target)?
            .map_err(|_| Error::NoSolution(format!("calibration at level {lvl}")))?;
        if !sol.kernel.is_empty() {
            return Err(Error::ResonantCalibration { level: lvl, dim: sol.kernel.len() });
        }
        let mut next = vec![DiffPoly::zero(ctx); n];
        for ((a, m), x) in unknowns.iter().zip(sol.particular.iter()) {
            next[*a].add_term(m.clone(), x.clone());
        }
        for (a, p) in next.into_iter().enumerate() {
            h[a].push(p);
        }
    }
    Ok(Calibration { h })
}

/// `X_{α,p} = ∫η^{λγ}∂_x(∂_γh_{α,p+1})σ_λ`.
pub fn principal_flow(data: &FrobeniusData, cal: &Calibration, a: usize, p: usize) -> Result<LocalFunctional> {
    let ctx = &data.ctx;
    let h = cal.get(a, p + 1)?;
    let mut acc = DiffPoly::zero(ctx);
    for l in 0..data.n() {
        for g in 0..data.n() {
            if !data.eta_inv[l][g].is_zero() {
                acc = acc.add(&dv(h, g).dx().mul(&DiffPoly::sigma(ctx, l, 0, 0)).scale_q(&data.eta_inv[l][g]));
            }
        }
    }
    Ok(functional(&acc))
}

pub fn principal_flows(data: &FrobeniusData, cal: &Calibration) -> Result<Vec<Vec<LocalFunctional>>> {
    let top = cal.depth();
    (0..data.n()).map(|a| (0..top).map(|p| principal_flow(data, cal, a, p)).collect()).collect()
}

/// `P0 = ½∫η^{αβ}σ_ασ_β^1`.
pub fn flat_p0(ctx: &Ctx, eta_inv: &[Vec<Q>]) -> LocalFunctional {
    let mut acc = DiffPoly::zero(ctx);
    for (a, row) in eta_inv.iter().enumerate() {
        for (b, x) in row.iter().enumerate() {
            if !x.is_zero() {
                let t = DiffPoly::sigma(ctx, a, 0, 0).mul(&DiffPoly::sigma(ctx, b, 0, 1));
                acc = acc.add(&t.scale_q(&(x / Q::from_integer(2.into()))));
            }
        }
    }
    functional(&acc)
}

/// The hydrodynamic pair; exactness `[∫σ_1, P1] = P0` is verified.
pub fn biham_from_frobenius(data: &FrobeniusData) -> Result<Arc<BihamPair>> {
    let ctx = &data.ctx;
    let n = data.n();
    let p0 = flat_p0(ctx, &data.eta_inv);
    let mut acc = DiffPoly::zero(ctx);
    for a in 0..n {
        for b in 0..n {
            let sab1 = DiffPoly::sigma(ctx, a, 0, 0).mul(&DiffPoly::sigma(ctx, b, 0, 1));
            acc = acc.add(&data.g_up(a, b).mul(&sab1));
            let sab = DiffPoly::sigma(ctx, a, 0, 0).mul(&DiffPoly::sigma(ctx, b, 0, 0));
            if sab.is_zero() {
                continue;
            }
            for g in 0..n {
                acc = acc.add(&data.gamma_up(a, b, g).mul(&DiffPoly::u(ctx, g, 1)).mul(&sab));
            }
        }
    }
    let p1 = functional(&acc.scale_q(&Q::new(1.into(), 2.into())));
    let z = functional(&DiffPoly::sigma(ctx, 0, 0, 0));
    if crate::variational::schouten(&z, &p1)? != p0 {
        return Err(Error::ExactnessFailed);
    }
    BihamPair::new(p0, p1)
}

/// Two-point function `Ω_{α,p;β,q}` from the generating function.
pub fn omega(data: &FrobeniusData, cal: &Calibration, a: usize, p: usize, b: usize, q: usize) -> Result<DiffPoly> {
    // N(z1,z2) = (z1+z2)Ω ⇒ Ω_{p,q} = Σ_j (−1)^j N_{p+1+j, q−j}
    let mut acc = DiffPoly::zero(&data.ctx);
    for j in 0..=q {
        let t = pairing(data, cal.get(a, p + 1 + j)?, cal.get(b, q - j)?);
        acc = if j % 2 == 0 { acc.add(&t) } else { acc.sub(&t) };
    }
    Ok(acc)
}

/// Super extended Principal Hierarchy flow `∂/∂t^{β,p}`.
pub fn super_principal_t(data: &FrobeniusData, cal: &Calibration, pair: &BihamPair, b: usize, p: usize) -> Result<EvolDerivation> {
    let ctx = &data.ctx;
    let n = data.n();
    let h = cal.get(b, p + 1)?;
    let mut d = EvolDerivation::new(ctx, 0);
    for a in 0..n {
        let mut img = DiffPoly::zero(ctx);
        for g in 0..n {
            if data.eta_inv[a][g].is_zero() {
                continue;
            }
            for l in 0..n {
                img = img.add(&dv(&dv(h, l), g).mul(&DiffPoly::u(ctx, l, 1)).scale_q(&data.eta_inv[a][g]));
            }
        }
        d.images.insert(Base::Even(a as u16), img);
        for k in 0..=ctx.max_odd_level {
            let mut img = DiffPoly::zero(ctx);
            for g in 0..n {
                for e in 0..n {
                    if !data.eta_inv[g][e].is_zero() {
                        let t = dv(&dv(h, a), e).mul(&DiffPoly::sigma(ctx, g, k, 1)).scale_q(&data.eta_inv[g][e]);
                        img = img.add(&t);
                    }
                }
            }
            d.images.insert(Base::Odd(a as u16, k as u16), pair.reduce(&img));
        }
    }
    Ok(d)
}

/// `Δ^{k,m}_{α,p}`.
pub fn delta(data: &FrobeniusData, cal: &Calibration, a: usize, p: usize, k: usize, m: usize) -> Result<DiffPoly> {
    if k < m {
        return Ok(delta(data, cal, a, p, m, k)?.neg());
    }
    let ctx = &data.ctx;
    let n = data.n();
    let h = cal.get(a, p)?;
    let mut acc = DiffPoly::zero(ctx);
    for g in 0..n {
        let mut pre = DiffPoly::zero(ctx);
        for l in 0..n {
            if !data.eta_inv[g][l].is_zero() {
                pre = pre.add(&dv(h, l).scale_q(&data.eta_inv[g][l]));
            }
        }
        if pre.is_zero() {
            continue;
        }
        for dl in 0..n {
            for mu in 0..n {
                let gm = data.gamma_up(dl, mu, g);
                if gm.is_zero() {
                    continue;
                }
                let mut s = DiffPoly::zero(ctx);
                for i in 0..(k - m) {
                    s = s.add(&DiffPoly::sigma(ctx, mu, m + i, 0).mul(&DiffPoly::sigma(ctx, dl, k - i - 1, 1)));
                }
                acc = acc.add(&pre.mul(&gm).mul(&s));
            }
        }
    }
    Ok(acc)
}

/// `Φ^m_{α,p}` of the undeformed super tau-cover.
pub fn phi_undeformed(data: &FrobeniusData, cal: &Calibration, a: usize, p: usize, m: usize) -> Result<DiffPoly> {
    let ctx = &data.ctx;
    if m + p > ctx.max_odd_level {
        return Err(Error::LevelOutOfRange(m + p));
    }
    if p == 0 {
        return Ok(DiffPoly::sigma(ctx, a, m, 0));
    }
    if data.has_r() {
        return Err(Error::UnsupportedResonance("Φ recursion with R ≠ 0".into()));
    }
    let half = Q::new(1.into(), 2.into());
    let k = Q::from_integer((p as i64).into()) - &half + &data.mu[a];
    if k.is_zero() {
        return Err(Error::ResonantSpectrum(format!("p − ½ + μ_{} = 0 at p = {p}", a + 1)));
    }
    let n = data.n();
    let h = cal.get(a, p)?;
    let mut rhs = DiffPoly::zero(ctx);
    for l in 0..n {
        for e in 0..n {
            if !data.eta_inv[l][e].is_zero() {
                let c = (&half + &data.mu[l]) * &data.eta_inv[l][e];
                rhs = rhs.add(&dv(h, l).mul(&DiffPoly::sigma(ctx, e, m, 0)).scale_q(&c));
            }
        }
    }
    rhs = rhs.sub(&phi_undeformed(data, cal, a, p - 1, m + 1)?);
    Ok(rhs.scale_q(&(-Q::one() / k)))
}

/// The odd flows of the super extension, `∂σ_{α,k}/∂τ_m = T_{k,m}δP1/δv^α`.
pub fn super_principal_tau(pair: &BihamPair, m: usize) -> Result<EvolDerivation> {
    pair.odd_flow(m)
}

/// `Γ^{γβ}_αΣσ_{β,k+i}σ_{γ,m−i−1}^1`, the closed form of the odd flows.
pub fn tau_formula(data: &FrobeniusData, a: usize, k: usize, m: usize) -> DiffPoly {
    let ctx = &data.ctx;
    if k > m {
        return tau_formula(data, a, m, k).neg();
    }
    let n = data.n();
    let mut acc = DiffPoly::zero(ctx);
    for g in 0..n {
        for b in 0..n {
            let gm = data.gamma_up(g, b, a);
            if gm.is_zero() {
                continue;
            }
            for i in 0..(m - k) {
                acc = acc.add(&gm.mul(&DiffPoly::sigma(ctx, b, k + i, 0)).mul(&DiffPoly::sigma(ctx, g, m - i - 1, 1)));
            }
        }
    }
    acc
}

/// Convenience for `T_{k,m}` applied to `δP1/δv^α` without normal form.
pub fn tau_shift_raw(pair: &BihamPair, a: usize, k: usize, m: usize) -> Result<DiffPoly> {
    let w = crate::variational::var_derivative(pair.p1.rep(), Base::Even(a as u16));
    shift_tkl(k, m, &w)
}

// ---------------------------------------------------------------------------
// quadratic operators on tau-cover times

/// Time index `(α, p)`.
pub type TIdx = (usize, usize);
type Sparse = BTreeMap<(TIdx, TIdx), Q>;

/// `Σ A_ij ∂_i∂_j + Σ B_ij t_i∂_j + Σ C_ij t_it_j + k` with sums over ordered
/// pairs and `A`, `C` symmetric; indices with `p > cutoff` are dropped.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct QuadraticTauOperator {
    pub a: Sparse,
    pub b: Sparse,
    pub c: Sparse,
    pub scalar: Q,
    pub cutoff: usize,
}

fn sp_add(m: &mut Sparse, k: (TIdx, TIdx), v: Q) {
    if v.is_zero() {
        return;
    }
    let e = m.entry(k).or_insert_with(Q::zero);
    *e += v;
    if e.is_zero() {
        m.remove(&k);
    }
}

fn sp_mul(x: &Sparse, y: &Sparse) -> Sparse {
    let mut rows: BTreeMap<TIdx, Vec<(TIdx, &Q)>> = BTreeMap::new();
    for ((i, j), v) in y {
        rows.entry(*i).or_default().push((*j, v));
    }
    let mut out = Sparse::new();
    for ((i, k), v) in x {
        if let Some(r) = rows.get(k) {
            for (j, w) in r {
                sp_add(&mut out, (*i, *j), v * *w);
            }
        }
    }
    out
}

fn sp_t(x: &Sparse) -> Sparse {
    x.iter().map(|((i, j), v)| ((*j, *i), v.clone())).collect()
}

fn sp_lin(terms: &[(&Sparse, Q)]) -> Sparse {
    let mut out = Sparse::new();
    for (m, s) in terms {
        for (k, v) in m.iter() {
            sp_add(&mut out, *k, v * s);
        }
    }
    out
}

fn sp_trace(x: &Sparse) -> Q {
    x.iter().filter(|((i, j), _)| i == j).map(|(_, v)| v.clone()).sum()
}

fn sp_trim(x: Sparse, cutoff: usize) -> Sparse {
    x.into_iter().filter(|((i, j), _)| i.1 <= cutoff && j.1 <= cutoff).collect()
}

impl QuadraticTauOperator {
    pub fn zero(cutoff: usize) -> Self {
        QuadraticTauOperator { cutoff, ..Default::default() }
    }

    pub fn scale(&self, s: &Q) -> Self {
        let f = |m: &Sparse| sp_lin(&[(m, s.clone())]);
        QuadraticTauOperator { a: f(&self.a), b: f(&self.b), c: f(&self.c), scalar: &self.scalar * s, cutoff: self.cutoff }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let one = Q::one;
        let f = |x: &Sparse, y: &Sparse| sp_lin(&[(x, one()), (y, -one())]);
        QuadraticTauOperator {
            a: f(&self.a, &o.a),
            b: f(&self.b, &o.b),
            c: f(&self.c, &o.c),
            scalar: &self.scalar - &o.scalar,
            cutoff: self.cutoff.min(o.cutoff),
        }
    }

    /// Coefficient of the monomial `∂_i∂_j`.
    pub fn dd_coefficient(&self, i: TIdx, j: TIdx) -> Q {
        let v = self.a.get(&(i, j)).cloned().unwrap_or_else(Q::zero);
        if i == j {
            v
        } else {
            v * Q::from_integer(2.into())
        }
    }

    pub fn td_coefficient(&self, i: TIdx, j: TIdx) -> Q {
        self.b.get(&(i, j)).cloned().unwrap_or_else(Q::zero)
    }

    pub fn tt_coefficient(&self, i: TIdx, j: TIdx) -> Q {
        let v = self.c.get(&(i, j)).cloned().unwrap_or_else(Q::zero);
        if i == j {
            v
        } else {
            v * Q::from_integer(2.into())
        }
    }

    /// True when every coefficient with all time levels `≤ window` vanishes.
    pub fn vanishes_on(&self, window: usize) -> bool {
        let inside = |(i, j): &(TIdx, TIdx)| i.1 <= window && j.1 <= window;
        self.a.keys().all(|k| !inside(k)) && self.b.keys().all(|k| !inside(k)) && self.c.keys().all(|k| !inside(k))
            && self.scalar.is_zero()
    }

    pub fn to_json(&self, window: usize) -> serde_json::Value {
        let key = |(i, j): &(TIdx, TIdx)| format!("{},{};{},{}", i.0 + 1, i.1, j.0 + 1, j.1);
        let dump = |m: &Sparse| -> serde_json::Map<String, serde_json::Value> {
            m.iter()
                .filter(|((i, j), _)| i.1 <= window && j.1 <= window)
                .map(|(k, v)| (key(k), serde_json::Value::String(qtext(v))))
                .collect()
        };
        json!({"a": dump(&self.a), "b": dump(&self.b), "c": dump(&self.c), "scalar": qtext(&self.scalar)})
    }
}

/// Exact commutator of two quadratic operators.
pub fn tau_op_commutator(x: &QuadraticTauOperator, y: &QuadraticTauOperator) -> QuadraticTauOperator {
    let one = Q::one();
    let four = Q::from_integer(4.into());
    let cutoff = x.cutoff.min(y.cutoff);
    let a = sp_lin(&[
        (&sp_mul(&x.a, &y.b), one.clone()),
        (&sp_mul(&sp_t(&y.b), &x.a), one.clone()),
        (&sp_mul(&y.a, &x.b), -one.clone()),
        (&sp_mul(&sp_t(&x.b), &y.a), -one.clone()),
    ]);
    let b = sp_lin(&[
        (&sp_mul(&x.b, &y.b), one.clone()),
        (&sp_mul(&y.b, &x.b), -one.clone()),
        (&sp_mul(&y.c, &x.a), four.clone()),
        (&sp_mul(&x.c, &y.a), -four),
    ]);
    let c = sp_lin(&[
        (&sp_mul(&x.b, &y.c), one.clone()),
        (&sp_mul(&y.c, &sp_t(&x.b)), one.clone()),
        (&sp_mul(&y.b, &x.c), -one.clone()),
        (&sp_mul(&x.c, &sp_t(&y.b)), -one),
    ]);
    let two = Q::from_integer(2.into());
    let scalar = &two * sp_trace(&sp_mul(&x.a, &y.c)) - &two * sp_trace(&sp_mul(&y.a, &x.c));
    QuadraticTauOperator { a: sp_trim(a, cutoff), b: sp_trim(b, cutoff), c: sp_trim(c, cutoff), scalar, cutoff }
}

/// `L_{-1}` or `L_2` (the latter for `R = 0` only).
pub fn virasoro_l(data: &FrobeniusData, m: i32, cutoff: usize) -> Result<QuadraticTauOperator> {
    let n = data.n();
    let half = Q::new(1.into(), 2.into());
    let mut op = QuadraticTauOperator::zero(cutoff);
    match m {
        -1 => {
            for a in 0..n {
                for b in 0..n {
                    sp_add(&mut op.c, ((a, 0), (b, 0)), &half * &data.eta[a][b]);
                }
                for p in 1..=cutoff {
                    sp_add(&mut op.b, ((a, p), (a, p - 1)), Q::one());
                }
            }
        }
        2 => {
            if data.has_r() {
                return Err(Error::UnsupportedResonance("L_2 with R ≠ 0".into()));
            }
            let three_half = Q::new(3.into(), 2.into());
            for a in 0..n {
                for b in 0..n {
                    let ab = &data.eta_inv[a][b] * (&half + &data.mu[b]) * (&half + &data.mu[a]) * (&three_half + &data.mu[a]);
                    let h = &ab * &half;
                    sp_add(&mut op.a, ((a, 1), (b, 0)), h.clone());
                    sp_add(&mut op.a, ((b, 0), (a, 1)), h);
                }
                for p in 0..=cutoff.saturating_sub(2) {
                    let x = Q::from_integer((p as i64).into()) + &half + &data.mu[a];
                    let coeff = &x * (&x + Q::one()) * (&x + Q::from_integer(2.into()));
                    sp_add(&mut op.b, ((a, p), (a, p + 2)), coeff);
                }
            }
        }
        _ => return Err(Error::InvalidInput(format!("L_{m} has no closed form here; use the commutator bootstrap"))),
    }
    Ok(op)
}

/// `L_{-1}, L_0, L_1, L_2` with `L_1 = −⅓[L_{-1},L_2]` and `L_0 = −½[L_{-1},L_1]`.
#[derive(Clone, Debug)]
pub struct VirasoroFamily {
    pub ops: BTreeMap<i32, QuadraticTauOperator>,
    pub window: usize,
}

pub fn virasoro_family(data: &FrobeniusData, window: usize) -> Result<VirasoroFamily> {
    let internal = window + 8;
    let lm1 = virasoro_l(data, -1, internal)?;
    let l2 = virasoro_l(data, 2, internal)?;
    let l1 = tau_op_commutator(&lm1, &l2).scale(&Q::new((-1).into(), 3.into()));
    let l0 = tau_op_commutator(&lm1, &l1).scale(&Q::new((-1).into(), 2.into()));
    let ops = [(-1, lm1), (0, l0), (1, l1), (2, l2)].into_iter().collect();
    Ok(VirasoroFamily { ops, window })
}

impl VirasoroFamily {
    /// `[L_i, L_j] − (i−j)L_{i+j}` vanishes on the window for every constructed pair.
    pub fn closure(&self) -> Vec<(i32, i32, bool)> {
        let mut out = Vec::new();
        for (&i, li) in &self.ops {
            for (&j, lj) in &self.ops {
                if i >= j {
                    continue;
                }
                let Some(lk) = self.ops.get(&(i + j)) else { continue };
                let lhs = tau_op_commutator(li, lj);
                let res = lhs.sub(&lk.scale(&Q::from_integer(((i - j) as i64).into())));
                out.push((i, j, res.vanishes_on(self.window)));
            }
        }
        out
    }

    pub fn get(&self, m: i32) -> &QuadraticTauOperator {
        &self.ops[&m]
    }

    /// `¼tr(¼ − μ²)`
    pub fn expected_l0_constant(data: &FrobeniusData) -> Q {
        let quarter = Q::new(1.into(), 4.into());
        let tr: Q = data.mu.iter().map(|m| &quarter - m * m).sum();
        tr * quarter
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::q;
    use crate::diffpoly::JetContext;
    use crate::variational::schouten;

    fn one_dim() -> FrobeniusData {
        let ctx = JetContext::new(&["v"], 3, &[]).unwrap();
        let f = parse_poly(&ctx, "1/6*u1_0^3").unwrap();
        FrobeniusData::new(f, vec![Q::one()], vec![Q::zero()], vec![]).unwrap()
    }

    fn b2() -> FrobeniusData {
        let ctx = JetContext::new(&["v", "u"], 3, &[]).unwrap();
        let f = parse_poly(&ctx, "1/2*u1_0^2*u2_0 + 4/15*u2_0^5").unwrap();
        FrobeniusData::new(f, vec![Q::one(), q(1, 2)], vec![Q::zero(); 2], vec![]).unwrap()
    }

    #[test]
    fn wdvv() {
        assert!(wdvv_check(&one_dim().f).unwrap().ok);
        assert!(wdvv_check(&b2().f).unwrap().ok);
        let ctx = JetContext::new(&["a", "b"], 0, &[]).unwrap();
        let bad = parse_poly(&ctx, "u1_0^2*u2_0^2").unwrap();
        assert!(matches!(wdvv_check(&bad), Err(Error::EtaNotConstant)));
    }

    #[test]
    fn b2_data() {
        let d = b2();
        assert_eq!(d.eta, vec![vec![Q::zero(), Q::one()], vec![Q::one(), Q::zero()]]);
        assert_eq!(d.mu, vec![q(-1, 4), q(1, 4)]);
        assert_eq!(d.d, q(1, 2));
    }

    #[test]
    fn one_dim_calibration_and_flows() {
        let d = one_dim();
        let cal = calibrate(&d, 4).unwrap();
        let ctx = &d.ctx;
        assert_eq!(cal.h[0][2], parse_poly(ctx, "1/6*u1_0^3").unwrap());
        let pair = biham_from_frobenius(&d).unwrap();
        assert_eq!(pair.p1, functional(&parse_poly(ctx, "1/2*u1_0*th1_0*th1_1").unwrap()));
        for x in principal_flows(&d, &cal).unwrap().into_iter().flatten() {
            assert!(schouten(&x, &pair.p0).unwrap().is_zero());
            assert!(schouten(&x, &pair.p1).unwrap().is_zero());
        }
        assert_eq!(omega(&d, &cal, 0, 0, 0, 0).unwrap(), parse_poly(ctx, "u1_0").unwrap());
        assert_eq!(omega(&d, &cal, 0, 2, 0, 0).unwrap(), cal.h[0][2]);
        assert_eq!(omega(&d, &cal, 0, 1, 0, 2).unwrap(), omega(&d, &cal, 0, 2, 0, 1).unwrap());
        assert_eq!(phi_undeformed(&d, &cal, 0, 1, 0).unwrap(), parse_poly(ctx, "2*s1_1_0 - u1_0*th1_0").unwrap());
    }

    #[test]
    fn b2_pair_and_hierarchy() {
        let d = b2();
        let pair = biham_from_frobenius(&d).unwrap();
        let ctx = &d.ctx;
        let reference = parse_poly(
            ctx,
            "1/2*(8*u2_0^3*th1_0*th1_1 + 1/2*u2_0*th2_0*th2_1 + 2*u1_0*th1_0*th2_1 + 1/2*u1_1*th1_0*th2_0)",
        )
        .unwrap();
        assert_eq!(pair.p1, functional(&reference));
        let cal = calibrate(&d, 3).unwrap();
        for a in 0..2 {
            for p in 0..2 {
                let x = principal_flow(&d, &cal, a, p).unwrap();
                assert!(schouten(&x, &pair.p0).unwrap().is_zero());
                assert!(schouten(&x, &pair.p1).unwrap().is_zero());
            }
        }
        for a in 0..2 {
            assert_eq!(omega(&d, &cal, a, 1, 0, 0).unwrap(), cal.h[a][1]);
        }
    }

    #[test]
    fn operator_algebra() {
        let d = one_dim();
        let l2 = virasoro_l(&d, 2, 10).unwrap();
        assert_eq!(l2.dd_coefficient((0, 1), (0, 0)), q(3, 8));
        assert_eq!(l2.td_coefficient((0, 0), (0, 2)), q(15, 8));
        let fam = virasoro_family(&b2(), 6).unwrap();
        let l1 = fam.get(1);
        assert_eq!(l1.dd_coefficient((0, 0), (1, 0)), q(3, 16));
        for p in 0..=4usize {
            let x = Q::from_integer((p as i64).into());
            assert_eq!(l1.td_coefficient((0, p), (0, p + 1)), (&x + q(1, 4)) * (&x + q(5, 4)));
            assert_eq!(l1.td_coefficient((1, p), (1, p + 1)), (&x + q(3, 4)) * (&x + q(7, 4)));
        }
        assert!(fam.closure().iter().all(|(_, _, ok)| *ok), "{:?}", fam.closure());
        assert_eq!(fam.get(0).scalar, VirasoroFamily::expected_l0_constant(&b2()));
        let z = tau_op_commutator(l1, l1);
        assert!(z.vanishes_on(6));
    }
}
