//! Deformed Virasoro symmetry `∂/∂s_2` for the one-dimensional family
//! `P_0 = ½∫σσ^1`, `P_1 = ½∫vσσ^1 + ε²cσσ^3`.
//!
//! The tau-cover is modelled by the actions of the flows on the generators `v`, `σ_m`
//! and the formal potentials `F_p = εf_p` (`∂_xF_p = h_p`); the time `t_0` is
//! identified with `x`. Every bracket of `∂/∂s_2` with a flow is written as an
//! explicit local expression, so all checks are exact identities in `Â⁺`.

use crate::ansatz::{solve_images, Ansatz, AnsatzSpec, Grading};
use crate::coeff::{Rf, Q};
use crate::diffpoly::{Base, Ctx, DiffPoly, Generator, JetContext, Mono};
use crate::error::{Error, Result};
use crate::frobenius::{virasoro_l, FrobeniusData};
use crate::parse::parse_poly;
use crate::superext::{invert_dx, is_local, BihamPair};
use crate::variational::{apply_jetwise, commutator, functional, ham_operator, var_derivative, EvolDerivation};
use num_traits::{One, Zero};
use serde_json::json;
use std::collections::BTreeMap;
use std::sync::Arc;

const V: Base = Base::Even(0);
const S0: Base = Base::Odd(0, 0);

fn binom(n: usize, k: usize) -> Q {
    let mut r = Q::one();
    for i in 0..k {
        r = r * Q::from_integer(((n - i) as i64).into()) / Q::from_integer(((i + 1) as i64).into());
    }
    r
}

/// The one-dimensional family with symbolic `c` and `c_0`.
pub struct KdvFamily {
    pub ctx: Ctx,
    pub pair: Arc<BihamPair>,
    pub grading: Grading,
    pub eps: usize,
}

impl KdvFamily {
    /// `max_level` bounds the odd levels `σ_m` of the extended ring.
    pub fn new(max_level: usize) -> Result<KdvFamily> {
        let ctx = JetContext::new(&["v"], max_level, &[("eps", -1), ("c", 0), ("c0", 0)])?;
        let p0 = functional(&parse_poly(&ctx, "1/2*th1_0*th1_1")?);
        let p1 = functional(&parse_poly(&ctx, "1/2*u1_0*th1_0*th1_1 + 1/2*c*eps^2*th1_0*th1_3")?);
        let pair = BihamPair::new(p0, p1)?;
        let mut base = BTreeMap::new();
        base.insert(V, Q::one());
        for m in 0..=max_level {
            base.insert(Base::Odd(0, m as u16), Q::from_integer((m as i64 + 1).into()));
        }
        let grading = Grading { base, dx: Q::one(), params: vec![Q::new((-1).into(), 2.into()), Q::zero(), Q::zero()] };
        Ok(KdvFamily { eps: 0, ctx, pair, grading })
    }

    pub fn param(&self, name: &str) -> DiffPoly {
        DiffPoly::param(&self.ctx, name).expect("declared parameter")
    }
}

/// Hamiltonian densities, flows and tau-cover data of the deformed hierarchy.
pub struct DeformedHierarchy {
    pub fam: KdvFamily,
    /// `h_p`, `p = 0..=depth`
    pub h: Vec<DiffPoly>,
    /// `∂/∂t_q` on the extended ring, `q = 0..=depth−1`.
    pub t_flows: Vec<EvolDerivation>,
    /// `∂/∂τ_m`, `m = 0..=max level`.
    pub tau_flows: Vec<EvolDerivation>,
}

impl DeformedHierarchy {
    pub fn new(fam: KdvFamily, depth: usize) -> Result<DeformedHierarchy> {
        let mut dh = DeformedHierarchy { h: vec![DiffPoly::u(&fam.ctx, 0, 0)], t_flows: vec![], tau_flows: vec![], fam };
        for p in 0..depth {
            let next = dh.deform_h_next(p)?;
            dh.h.push(next);
        }
        for q in 0..depth {
            let x = functional(&dh.h[q].dx().mul(&DiffPoly::sigma(&dh.fam.ctx, 0, 0, 0)));
            dh.t_flows.push(dh.fam.pair.super_flow(&x)?);
        }
        for m in 0..=dh.fam.ctx.max_odd_level {
            dh.tau_flows.push(dh.fam.pair.odd_flow(m)?);
        }
        Ok(dh)
    }

    /// `h_{p+1}` from `(p+3/2)∂_xh_{p+1} = 𝒫_1h_p`.
    pub fn deform_h_next(&self, p: usize) -> Result<DiffPoly> {
        let k = Q::from_integer((p as i64).into()) + Q::new(3.into(), 2.into());
        if k.is_zero() {
            return Err(Error::ResonantLevel(p + 1));
        }
        let op = ham_operator(&self.fam.pair.p1)?;
        let rhs = op.apply(&[self.h[p].clone()]).remove(0);
        let g = invert_dx(&rhs, Some(&self.fam.pair), Some((&self.fam.grading, self.fam.eps)))
            .map_err(|_| Error::NoSolution(format!("h_{}", p + 1)))?;
        Ok(g.scale_q(&(Q::one() / k)))
    }

    pub fn ctx(&self) -> &Ctx {
        &self.fam.ctx
    }

    pub fn pair(&self) -> &BihamPair {
        &self.fam.pair
    }

    fn norm_apply(&self, d: &EvolDerivation, f: &DiffPoly) -> Result<DiffPoly> {
        let pair = self.pair();
        d.apply(f, &|p| pair.reduce(p))
    }

    /// `εΦ^m_p = ∂_x^{−1}(∂h_p/∂τ_m)`.
    pub fn phi(&self, m: usize, p: usize) -> Result<DiffPoly> {
        let f = self.norm_apply(&self.tau_flows[m], &self.h[p])?;
        invert_dx(&f, Some(self.pair()), Some((&self.fam.grading, self.fam.eps)))
    }

    /// `Ω_{p;q} = ∂_x^{−1}(∂h_p/∂t_q)`, with `Ω_{p;0} = h_p`.
    pub fn omega(&self, p: usize, q: usize) -> Result<DiffPoly> {
        if q == 0 {
            return Ok(self.h[p].clone());
        }
        let f = self.norm_apply(&self.t_flows[q], &self.h[p])?;
        invert_dx(&f, Some(self.pair()), Some((&self.fam.grading, self.fam.eps)))
    }
}

/// A flow of the tau-cover with the data entering its bracket with `∂/∂s_2`.
struct Flow {
    name: String,
    d: EvolDerivation,
    /// `D(F_0)`, `D(F_1)`
    df: [DiffPoly; 2],
    /// `[D, ℒ_2] = λD' − (15/8)K∘D`
    lambda: Rf,
    shifted: EvolDerivation,
}

/// Result of the homological solve.
#[derive(Clone, Debug)]
pub struct HomologicalSolution {
    pub particular: EvolDerivation,
    pub kernel: Vec<EvolDerivation>,
}

/// Everything produced by the pipeline.
pub struct S2Report {
    pub i0: EvolDerivation,
    pub i1: EvolDerivation,
    pub x0: EvolDerivation,
    pub x0_kernel_dim: usize,
    pub c: EvolDerivation,
    pub x: EvolDerivation,
    /// Bracket residuals `[∂/∂s_2, D]` on `v`, `σ_0` for `D = τ_0, τ_1, t_1, t_2`.
    pub residuals: Vec<(String, BTreeMap<Base, DiffPoly>)>,
    pub o2: DiffPoly,
    pub closed: Vec<(String, bool)>,
}

impl S2Report {
    pub fn verified(&self) -> bool {
        self.residuals.iter().all(|(_, r)| r.values().all(|p| p.is_zero())) && self.closed.iter().all(|(_, ok)| *ok)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let res: serde_json::Map<String, serde_json::Value> = self
            .residuals
            .iter()
            .map(|(n, r)| {
                let m: serde_json::Map<String, serde_json::Value> =
                    r.iter().map(|(b, p)| (b.name(), serde_json::Value::String(p.to_text()))).collect();
                (n.clone(), serde_json::Value::Object(m))
            })
            .collect();
        json!({
            "I0": self.i0.to_json(),
            "I1": self.i1.to_json(),
            "X0": self.x0.to_json(),
            "X0_kernel_dim": self.x0_kernel_dim,
            "C": self.c.to_json(),
            "X": self.x.to_json(),
            "ds2_v_local": self.x.image(V).map(|p| p.to_text()),
            "O2": self.o2.to_text(),
            "closedness": self.closed.iter().map(|(n, ok)| json!({"check": n, "ok": ok})).collect::<Vec<_>>(),
            "residuals": res,
            "verified": self.verified(),
        })
    }
}

/// The five-step pipeline for `∂/∂s_2`.
pub struct S2Pipeline {
    pub dh: DeformedHierarchy,
    /// `a = 3/8`
    pub a: Q,
    /// diagonal coefficients of `ℒ_2^{even}`
    pub coeff: Vec<Q>,
    modd: EvolDerivation,
    pub max_eps: u32,
}

fn rf(q: Q) -> Rf {
    Rf::from_q(q)
}

impl S2Pipeline {
    pub fn new(max_eps: u32) -> Result<S2Pipeline> {
        let fam = KdvFamily::new(4)?;
        // h up to h_4: t_3, t_4 enter the brackets with t_1, t_2
        let dh = DeformedHierarchy::new(fam, 5)?;
        let fctx = JetContext::new(&["v"], 0, &[])?;
        let fd = FrobeniusData::new(parse_poly(&fctx, "1/6*u1_0^3")?, vec![Q::one()], vec![Q::zero()], vec![])?;
        let l2 = virasoro_l(&fd, 2, 8)?;
        let a = l2.dd_coefficient((0, 1), (0, 0));
        let coeff: Vec<Q> = (0..=4).map(|p| l2.td_coefficient((0, p), (0, p + 2))).collect();
        let ctx = dh.ctx().clone();
        let c0 = dh.fam.param("c0");
        let m = &fd.mu[0];
        let five_half = Q::new(5.into(), 2.into()) + m;
        // ∂_xN = ½(μ−μ−1)∂v/∂t^{1,0} ⇒ N = −v/2
        let modd = EvolDerivation::new(&ctx, 0).with(V, DiffPoly::zero(&ctx)).with(
            S0,
            c0.add(&DiffPoly::rational(&ctx, five_half))
                .mul(&DiffPoly::sigma(&ctx, 0, 2, 0))
                .sub(&DiffPoly::u(&ctx, 0, 0).mul(&DiffPoly::sigma(&ctx, 0, 1, 0)).scale_q(&Q::new(1.into(), 2.into()))),
        );
        Ok(S2Pipeline { dh, a, coeff, modd, max_eps })
    }

    fn ctx(&self) -> &Ctx {
        self.dh.ctx()
    }

    fn reduce(&self, p: &DiffPoly) -> DiffPoly {
        self.dh.pair().reduce(p)
    }

    fn apply(&self, d: &EvolDerivation, f: &DiffPoly) -> Result<DiffPoly> {
        self.dh.norm_apply(d, f)
    }

    fn tau(&self, i: usize) -> Result<Flow> {
        let c0 = Rf::var(self.ctx().param_index("c0").unwrap());
        Ok(Flow {
            name: format!("tau{i}"),
            d: self.dh.tau_flows[i].clone(),
            df: [self.dh.phi(i, 0)?, self.dh.phi(i, 1)?],
            lambda: c0.add(&Rf::int(i as i64)),
            shifted: self.dh.tau_flows.get(i + 2).cloned().ok_or(Error::LevelOutOfRange(i + 2))?,
        })
    }

    fn t(&self, q: usize) -> Result<Flow> {
        Ok(Flow {
            name: format!("t{q}"),
            d: self.dh.t_flows[q].clone(),
            df: [self.dh.omega(0, q)?, self.dh.omega(1, q)?],
            lambda: rf(self.coeff[q].clone()),
            shifted: self.dh.t_flows.get(q + 2).cloned().ok_or(Error::LevelOutOfRange(q + 2))?,
        })
    }

    /// `∂^s(∂J/∂t_1)` for the base of `g`.
    fn t1_jet(&self, g: Generator, s: usize) -> Result<DiffPoly> {
        let mut p = self.dh.t_flows[1].image(g.base()).cloned().ok_or_else(|| Error::MissingImage(g.name()))?;
        for _ in 0..s {
            p = self.dh.pair().dx(&p);
        }
        Ok(p)
    }

    /// Local part of `A = a(F_1∂_x + F_0∂_{t_1})` on the jet of `E`.
    fn corr_a(&self, e: &DiffPoly) -> Result<DiffPoly> {
        let ctx = self.ctx().clone();
        let h0 = &self.dh.h[0];
        let h1 = &self.dh.h[1];
        let a = self.a.clone();
        let r = apply_jetwise(e, false, &mut |g| {
            let s = g.jet();
            let mut acc = DiffPoly::zero(&ctx);
            let mut dh0 = h0.clone();
            let mut dh1 = h1.clone();
            for j in 1..=s {
                let c = binom(s, j) * &a;
                let jet = self.reduce(&DiffPoly::gen(&ctx, g.with_jet(s + 1 - j)));
                acc = acc.add(&dh1.mul(&jet).scale_q(&c));
                acc = acc.add(&dh0.mul(&self.t1_jet(g, s - j)?).scale_q(&c));
                dh0 = dh0.dx();
                dh1 = dh1.dx();
            }
            Ok(acc)
        })?;
        Ok(self.reduce(&r))
    }

    /// `K(J^{(s)}) = s∂^{s−1}(∂J/∂t_2)`, from `∂_xt_0 = 1`.
    fn k_op(&self, e: &DiffPoly) -> Result<DiffPoly> {
        let ctx = self.ctx().clone();
        let t2 = &self.dh.t_flows[2];
        let r = apply_jetwise(e, false, &mut |g| {
            let s = g.jet();
            if s == 0 {
                return Ok(DiffPoly::zero(&ctx));
            }
            let mut p = t2.image(g.base()).cloned().ok_or_else(|| Error::MissingImage(g.name()))?;
            for _ in 0..s - 1 {
                p = self.dh.pair().dx(&p);
            }
            Ok(p.scale_q(&Q::from_integer((s as i64).into())))
        })?;
        Ok(self.reduce(&r))
    }

    /// `[D, A + M_odd + ℒ_2]` on the base generator `b`.
    fn bracket_known(&self, fl: &Flow, b: Base) -> Result<DiffPoly> {
        let ctx = self.ctx();
        let g = DiffPoly::gen(ctx, b.jet(0));
        let gx = self.dh.pair().dx(&g);
        let gt1 = self.dh.t_flows[1].image(b).cloned().ok_or_else(|| Error::MissingImage(b.name()))?;
        let dg = fl.d.image(b).cloned().ok_or_else(|| Error::MissingImage(b.name()))?;
        // [D, A]
        let mut r = fl.df[1].mul(&gx).add(&fl.df[0].mul(&gt1)).scale_q(&self.a);
        r = r.sub(&self.corr_a(&dg)?);
        // [D, M_odd]
        let mg = self.modd.image(b).cloned().unwrap_or_else(|| DiffPoly::zero(ctx));
        r = r.add(&self.apply(&fl.d, &mg)?).sub(&self.apply(&self.modd, &dg)?);
        // [D, ℒ_2]
        let shifted = fl.shifted.image(b).cloned().ok_or_else(|| Error::MissingImage(b.name()))?;
        r = r.add(&shifted.scale(&fl.lambda));
        r = r.sub(&self.k_op(&dg)?.scale_q(&self.coeff[0]));
        Ok(self.reduce(&r))
    }

    fn bracket_with(&self, d: &EvolDerivation, x: &EvolDerivation, b: Base) -> Result<DiffPoly> {
        let xi = x.image(b).cloned().ok_or_else(|| Error::MissingImage(b.name()))?;
        let di = d.image(b).cloned().ok_or_else(|| Error::MissingImage(b.name()))?;
        Ok(self.reduce(&self.apply(d, &xi)?.sub(&self.apply(x, &di)?)))
    }

    /// `I_i = −[∂/∂τ_i, A + M_odd + ℒ_2]`, required local.
    pub fn derive_i(&self, i: usize) -> Result<EvolDerivation> {
        let fl = self.tau(i)?;
        let mut d = EvolDerivation::new(self.ctx(), 1);
        for b in [V, S0] {
            let p = self.bracket_known(&fl, b)?.neg();
            if !is_local(&p) {
                return Err(Error::NonLocalObstruction(format!("I_{i} on {}", b.name())));
            }
            d.images.insert(b, p);
        }
        Ok(d)
    }

    /// `[D, I] = 0` on `v`, `σ_0`.
    pub fn check_closed(&self, flow: &EvolDerivation, i: &EvolDerivation) -> Result<bool> {
        let pair = self.dh.pair();
        let c = commutator(flow, i, &|p| pair.reduce(p))?;
        Ok(c.images.values().all(|p| p.is_zero()))
    }

    /// The explicit solution of `[∂/∂τ_0, X°] = I_0` built from `h_p` and `εΦ^0_p`.
    pub fn x_circ(&self) -> Result<EvolDerivation> {
        let ctx = self.ctx();
        let h = &self.dh.h;
        let two = Q::from_integer(2.into());
        let xv = h[0].mul(&h[1]).scale_q(&(&two * &self.a)).add(&h[2].scale_q(&(&two * &self.coeff[0])));
        let (p0, p1, p2) = (self.dh.phi(0, 0)?, self.dh.phi(0, 1)?, self.dh.phi(0, 2)?);
        let mut xs = p1.mul(&h[0]).add(&p0.mul(&h[1])).scale_q(&self.a);
        xs = xs.add(&p2.scale_q(&self.coeff[0]));
        // cancel the M_odd terms
        let m = self.modd.image(S0).unwrap().eval_param("c0", &Q::zero())?;
        xs = self.reduce(&xs.sub(&m));
        if !is_local(&xs) {
            return Err(Error::NonLocalObstruction("X° on σ_0".into()));
        }
        Ok(EvolDerivation::new(ctx, 0).with(V, self.reduce(&xv)).with(S0, xs))
    }

    fn ansatz_pair(&self, eps_powers: Vec<u32>) -> Result<(Ansatz, Ansatz)> {
        let ctx = self.ctx();
        let g = Grading {
            base: [(V, Q::one()), (S0, Q::one())].into_iter().collect(),
            dx: Q::one(),
            params: self.dh.fam.grading.params.clone(),
        };
        let three = Q::from_integer(3.into());
        let mk = |sd| AnsatzSpec {
            super_degree: sd,
            diff_degree: 0,
            weight: three.clone(),
            eps: self.dh.fam.eps,
            eps_powers: eps_powers.clone(),
            normal_form: true,
        };
        Ok((Ansatz::new(ctx, &g, &mk(0))?, Ansatz::new(ctx, &g, &mk(1))?))
    }

    /// Solve `[lhs_k, Y] = target_k` (`k` over the given odd flows) for an even
    /// weight-2 derivation `Y` of ε-graded degree 0 with the listed ε-powers.
    pub fn solve_homological(
        &self,
        lhs: &[EvolDerivation],
        targets: &[EvolDerivation],
        eps_powers: Vec<u32>,
    ) -> Result<HomologicalSolution> {
        for (l, t) in lhs.iter().zip(targets) {
            if !self.check_closed(l, t)? {
                return Err(Error::NoSolution("target is not a cocycle".into()));
            }
        }
        let ctx = self.ctx();
        let (av, asg) = self.ansatz_pair(eps_powers)?;
        let mut unknowns: Vec<EvolDerivation> = Vec::new();
        for i in 0..av.len() {
            unknowns.push(EvolDerivation::new(ctx, 0).with(V, av.element(i)).with(S0, DiffPoly::zero(ctx)));
        }
        for i in 0..asg.len() {
            unknowns.push(EvolDerivation::new(ctx, 0).with(V, DiffPoly::zero(ctx)).with(S0, asg.element(i)));
        }
        let mut images = Vec::with_capacity(unknowns.len());
        for u in &unknowns {
            let mut img = Vec::new();
            for l in lhs {
                for b in [V, S0] {
                    img.push(self.bracket_with(l, u, b)?);
                }
            }
            images.push(img);
        }
        let mut target = Vec::new();
        for t in targets {
            for b in [V, S0] {
                target.push(t.image(b).cloned().unwrap_or_else(|| DiffPoly::zero(ctx)));
            }
        }
        let sol = solve_images(unknowns.len(), Some(self.dh.fam.eps), &images, &target)?
            .map_err(|_| Error::NoSolution("homological equation has no solution in the graded slice".into()))?;
        let build = |x: &[Rf]| -> EvolDerivation {
            let mut d = EvolDerivation::new(ctx, 0).with(V, DiffPoly::zero(ctx)).with(S0, DiffPoly::zero(ctx));
            for (u, c) in unknowns.iter().zip(x) {
                if !c.is_zero() {
                    d = d.add(&u.scale(c));
                }
            }
            d
        };
        Ok(HomologicalSolution { particular: build(&sol.particular), kernel: sol.kernel.iter().map(|k| build(k)).collect() })
    }

    /// `[∂/∂s_2, D]` on `v`, `σ_0` for the full flow with `X`.
    fn residual(&self, fl: &Flow, x: &EvolDerivation) -> Result<BTreeMap<Base, DiffPoly>> {
        let mut out = BTreeMap::new();
        for b in [V, S0] {
            let r = self.bracket_known(fl, b)?.add(&self.bracket_with(&fl.d, x, b)?);
            out.insert(b, self.reduce(&r));
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<S2Report> {
        let ctx = self.ctx().clone();
        let i0 = self.derive_i(0)?;
        let i1 = self.derive_i(1)?;
        let tau0 = &self.dh.tau_flows[0];
        let tau1 = &self.dh.tau_flows[1];
        let mut closed = vec![
            ("[tau0, I0] = 0".to_string(), self.check_closed(tau0, &i0)?),
            ("[tau1, I1] = 0".to_string(), self.check_closed(tau1, &i1)?),
        ];
        let x0 = self.x_circ()?;
        let mut ok0 = true;
        for b in [V, S0] {
            ok0 &= self.bracket_with(tau0, &x0, b)? == *i0.image(b).unwrap();
        }
        if !ok0 {
            return Err(Error::VerificationFailed("[τ_0, X°] ≠ I_0".into()));
        }
        let x0_family = self.solve_homological(std::slice::from_ref(tau0), std::slice::from_ref(&i0), (0..=self.max_eps).collect())?;
        // I_1 − [τ_1, X°]
        let mut j1 = EvolDerivation::new(&ctx, 1);
        for b in [V, S0] {
            j1.images.insert(b, self.reduce(&i1.image(b).unwrap().sub(&self.bracket_with(tau1, &x0, b)?)));
        }
        closed.push(("[tau0, I1 - [tau1, X0]] = 0".into(), self.check_closed(tau0, &j1)?));
        let zero = EvolDerivation::new(&ctx, 1).with(V, DiffPoly::zero(&ctx)).with(S0, DiffPoly::zero(&ctx));
        let sol = self.solve_homological(&[tau0.clone(), tau1.clone()], &[zero, j1], (2..=self.max_eps).collect())?;
        if !sol.kernel.is_empty() {
            return Err(Error::UnderdeterminedReported { what: "C".into(), dim: sol.kernel.len() });
        }
        let c = sol.particular;
        let x = x0.add(&c);
        let mut residuals = Vec::new();
        for fl in [self.tau(0)?, self.tau(1)?, self.t(1)?, self.t(2)?] {
            residuals.push((fl.name.clone(), self.residual(&fl, &x)?));
        }
        let o2 = self.extract_o2(&x)?;
        Ok(S2Report { i0, i1, x0, x0_kernel_dim: x0_family.kernel.len(), c, x, residuals, o2, closed })
    }

    /// `O_2` with `Xv = 2ah_0h_1 + 2·(15/8)h_2 + ε²∂_x²(ah_1 + O_2)`.
    pub fn extract_o2(&self, x: &EvolDerivation) -> Result<DiffPoly> {
        let h = &self.dh.h;
        let two = Q::from_integer(2.into());
        let xv = x.image(V).ok_or_else(|| Error::MissingImage("v".into()))?;
        let base = h[0].mul(&h[1]).scale_q(&(&two * &self.a)).add(&h[2].scale_q(&(&two * &self.coeff[0])));
        let rest = xv.sub(&base);
        let g = invert_dx(&invert_dx(&rest, None, None).map_err(|_| Error::NotATauSymmetry("Xv − X°v not a second derivative".into()))?, None, None)
            .map_err(|_| Error::NotATauSymmetry("Xv − X°v not a second derivative".into()))?;
        let eps2 = Rf::var(self.dh.fam.eps).pow(2).inv();
        let o2 = g.scale(&eps2).sub(&h[1].scale_q(&self.a));
        if o2.terms().any(|(_, c)| !c.is_polynomial()) {
            return Err(Error::NotATauSymmetry("correction is not O(ε²)".into()));
        }
        Ok(o2)
    }
}

/// Linearizability of `∂/∂s_2`: the equations `∂G_0/∂v = 0`,
/// `v³∂G_0/∂v = −κv²/2` (κ the `v²/2` coefficient of `O_2`) are solvable iff `κ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Linearizable {
    Yes,
    No,
    /// Solvable iff the given coefficient vanishes.
    Iff(Rf),
}

pub fn linearizability_check_1d(o2: &DiffPoly) -> Result<Linearizable> {
    let ctx = o2.ctx();
    let mono = Mono::of(Generator::u(0, 0));
    let v2 = mono.mul(&mono).unwrap().1;
    let eps = ctx.param_index("eps");
    let mut kappa = o2.coeff(&v2);
    if let Some(e) = eps {
        kappa = kappa.eval_var(e, &Q::zero()).ok_or_else(|| Error::InvalidInput("pole at ε = 0".into()))?;
    }
    let kappa = kappa.scale_q(&Q::from_integer(2.into()));
    Ok(if kappa.is_zero() {
        Linearizable::Yes
    } else if kappa.as_q().is_some() {
        Linearizable::No
    } else {
        Linearizable::Iff(kappa)
    })
}

impl Linearizable {
    pub fn to_json(&self, names: &[String]) -> serde_json::Value {
        match self {
            Linearizable::Yes => json!({"linearizable": true}),
            Linearizable::No => json!({"linearizable": false}),
            Linearizable::Iff(k) => json!({"linearizable": null, "condition": format!("{} = 0", k.render(names))}),
        }
    }
}

/// Density check `δ∫h_{p+1}/δv = h_p`.
pub fn tau_symmetric(dh: &DeformedHierarchy, p: usize) -> bool {
    var_derivative(&dh.h[p + 1], V) == dh.h[p]
}
