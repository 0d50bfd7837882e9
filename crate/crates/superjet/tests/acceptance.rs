//! Acceptance suite: one PASS/FAIL line per criterion, sub-checks listed
//! under failures. Runs without the libtest harness so the report is always
//! shown. Exit status is nonzero on any failure that is not a recorded
//! discrepancy (see `KNOWN`).

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use std::sync::Arc;
use superjet::coeff::q;
use superjet::frobenius::{biham_from_frobenius, metric_of, virasoro_family, wdvv_check, FrobeniusData};
use superjet::parse::parse_poly;
use superjet::superext::{invert_dx, is_local, shift_t, shift_tkl, BihamPair};
use superjet::variational::{commutator, dp_derivation, functional, plain, schouten, EvolDerivation, LocalFunctional};
use superjet::virsolve::{linearizability_check_1d, KdvFamily, Linearizable, S2Pipeline};
use superjet::{Base, Ctx, DiffPoly, JetContext, Rf, Q};

const V: Base = Base::Even(0);
const S0: Base = Base::Odd(0, 0);

/// Sub-check names allowed to fail: reference expressions that contradict
/// an independent check.
const KNOWN: &[(&str, &str)] = &[(
    "4",
    "C sigma_0 (reference)",
)];

struct Crit {
    id: &'static str,
    title: &'static str,
    checks: Vec<(String, bool, String)>,
}

impl Crit {
    fn new(id: &'static str, title: &'static str) -> Self {
        Crit { id, title, checks: vec![] }
    }
    fn ok(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok, String::new()));
    }
    fn eq(&mut self, name: impl Into<String>, got: &DiffPoly, want: &DiffPoly) {
        let detail = if got == want { String::new() } else { format!("got {got}, expected {want}") };
        self.checks.push((name.into(), got == want, detail));
    }
    fn note(&mut self, name: impl Into<String>, detail: String) {
        self.checks.push((name.into(), true, detail));
    }
    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

fn p(ctx: &Ctx, s: &str) -> DiffPoly {
    parse_poly(ctx, s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn sign(e: usize) -> Rf {
    Rf::int(if e % 2 == 0 { 1 } else { -1 })
}

// ---------------------------------------------------------------------------
// criteria 1, 2, 3, 8

fn intro_ctx(level: usize) -> Ctx {
    JetContext::new(&["u"], level, &[("eps", -1)]).unwrap()
}

fn intro_pair(ctx: &Ctx) -> (LocalFunctional, LocalFunctional) {
    (
        functional(&p(ctx, "1/2*th1_0*th1_1")),
        functional(&p(ctx, "1/2*(u1_0*th1_0*th1_1 + 1/8*eps^2*th1_0*th1_3)")),
    )
}

fn criterion_1() -> Crit {
    let mut c = Crit::new("1", "bihamiltonicity of the KdV pairs");
    let ctx = intro_ctx(0);
    let (p0, p1) = intro_pair(&ctx);
    let fam = KdvFamily::new(2).unwrap();
    let (f0, f1) = (&fam.pair.p0, &fam.pair.p1);
    // the family pair is the reference one
    c.ok("family P0 density", *f0 == functional(&p(&fam.ctx, "1/2*th1_0*th1_1")));
    c.ok("family P1 density", *f1 == functional(&p(&fam.ctx, "1/2*u1_0*th1_0*th1_1 + 1/2*c*eps^2*th1_0*th1_3")));
    for (tag, a, b) in [
        ("intro [P0,P0]", &p0, &p0),
        ("intro [P0,P1]", &p0, &p1),
        ("intro [P1,P1]", &p1, &p1),
        ("c-family [P0,P0]", f0, f0),
        ("c-family [P0,P1]", f0, f1),
        ("c-family [P1,P1]", f1, f1),
    ] {
        c.ok(tag, schouten(a, b).unwrap().is_zero());
    }
    // not vacuous: u d_x^3 + ... is not Poisson
    let bad = functional(&p(&ctx, "1/2*u1_0*th1_0*th1_3"));
    c.ok("sanity: [Q,Q] != 0 for Q = 1/2 int u th th_xxx", !schouten(&bad, &bad).unwrap().is_zero());
    c
}

fn criterion_2() -> Crit {
    let mut c = Crit::new("2", "intro super KdV flows commute");
    let ctx = intro_ctx(0);
    let d = |deg, u: &str, th: &str| EvolDerivation::new(&ctx, deg).with(V, p(&ctx, u)).with(S0, p(&ctx, th));
    let t = d(0, "u1_0*u1_1 + 1/12*eps^2*u1_3", "u1_0*th1_1 + 1/12*eps^2*th1_3");
    let tau0 = d(1, "th1_1", "0");
    let tau1 = d(1, "u1_0*th1_1 + 1/2*u1_1*th1_0 + 1/8*eps^2*th1_3", "1/2*th1_0*th1_1");
    let flows = [("t", &t), ("tau0", &tau0), ("tau1", &tau1)];
    for i in 0..3 {
        for j in i..3 {
            let r = commutator(flows[i].1, flows[j].1, &plain).unwrap();
            c.ok(format!("[{}, {}] = 0", flows[i].0, flows[j].0), r.is_zero());
        }
    }
    // the literal flows are the ones generated by the pair
    let (p0, p1) = intro_pair(&ctx);
    c.ok("D_P0 = d/dtau0", dp_derivation(&p0).unwrap() == tau0.scale(&Rf::int(1)));
    let dp1 = dp_derivation(&p1).unwrap();
    c.eq("D_P1 u", dp1.image(V).unwrap(), tau1.image(V).unwrap());
    c.eq("D_P1 theta", dp1.image(S0).unwrap(), tau1.image(S0).unwrap());
    c
}

fn b2_data() -> (Ctx, FrobeniusData) {
    let ctx = JetContext::new(&["v", "u"], 3, &[]).unwrap();
    let toml = "fields = [\"v\", \"u\"]\npotential = \"1/2*u1_0^2*u2_0 + 4/15*u2_0^5\"\neuler = [\"1\", \"1/2\"]\n";
    let data = FrobeniusData::parse(&ctx, toml).unwrap();
    (ctx, data)
}

fn criterion_3() -> Crit {
    let mut c = Crit::new("3", "exactness [Z, P1] = P0");
    let fam = KdvFamily::new(2).unwrap();
    let z = functional(&p(&fam.ctx, "th1_0"));
    c.ok("1-dim family: [int sigma, P1(c)] = P0", schouten(&z, &fam.pair.p1).unwrap() == fam.pair.p0);
    let (ctx, data) = b2_data();
    match biham_from_frobenius(&data) {
        Ok(pair) => {
            let z = functional(&p(&ctx, "th1_0"));
            c.ok("B2: [int sigma_1, P1] = P0", schouten(&z, &pair.p1).unwrap() == pair.p0);
            c.ok("B2: P0 = 1/2 int (s1 s2^1 + s2 s1^1)", pair.p0 == functional(&p(&ctx, "1/2*(th1_0*th2_1 + th2_0*th1_1)")));
        }
        Err(e) => c.checks.push(("B2 pair".into(), false, e.to_string())),
    }
    c
}

fn criterion_8() -> Crit {
    let mut c = Crit::new("8", "locality of sigma_1^1 and sigma_2^1");
    let fam = KdvFamily::new(3).unwrap();
    let pair = &fam.pair;
    let r1 = pair.reduce(&p(&fam.ctx, "s1_1_1"));
    let r2 = pair.reduce(&p(&fam.ctx, "s1_2_1"));
    c.ok("is_local(sigma_1^1)", is_local(&r1));
    c.ok("!is_local(sigma_2^1)", !is_local(&r2));
    // oracle: the recursion sigma_1^1 = v sigma^1 + v_x sigma / 2 + eps^2 c sigma^3
    c.eq("sigma_1^1 normal form", &r1, &p(&fam.ctx, "u1_0*th1_1 + 1/2*u1_1*th1_0 + c*eps^2*th1_3"));
    c
}

// ---------------------------------------------------------------------------
// criteria 4, 5, 6

fn criterion_456() -> (Crit, Crit, Crit) {
    let mut c4 = Crit::new("4", "golden one-dimensional pipeline");
    let mut c5 = Crit::new("5", "Virasoro residual O2 and linearizability");
    let mut c6 = Crit::new("6", "[d/ds2, D] = 0 for D = tau0, tau1, t1, t2");
    let pl = S2Pipeline::new(4).unwrap();
    let r = pl.run().unwrap();
    let dh = &pl.dh;
    let ctx = dh.ctx().clone();
    let e = |s: &str| p(&ctx, s);
    let norm = |x: &DiffPoly| dh.pair().reduce(x);

    c4.eq("h1", &dh.h[1], &e("1/2*u1_0^2 + 2/3*eps^2*c*u1_2"));
    c4.eq("h2", &dh.h[2], &e("1/6*u1_0^3 + eps^2*c*(1/3*u1_1^2 + 2/3*u1_0*u1_2) + 4/15*eps^4*c^2*u1_4"));
    c4.eq("dv/dt1", dh.t_flows[1].image(V).unwrap(), &e("u1_0*u1_1 + 2/3*eps^2*c*u1_3"));
    c4.eq("dsigma0/dt1", dh.t_flows[1].image(S0).unwrap(), &e("u1_0*th1_1 + 2/3*eps^2*c*th1_3"));
    c4.eq(
        "dv/dt2",
        dh.t_flows[2].image(V).unwrap(),
        &e("1/2*u1_0^2*u1_1 + eps^2*c*(4/3*u1_1*u1_2 + 2/3*u1_0*u1_3) + 4/15*eps^4*c^2*u1_5"),
    );
    c4.eq(
        "dsigma0/dt2",
        dh.t_flows[2].image(S0).unwrap(),
        &e("1/2*u1_0^2*th1_1 + eps^2*c*(2/3*u1_2*th1_1 + 2/3*u1_1*th1_2 + 2/3*u1_0*th1_3) + 4/15*eps^4*c^2*th1_5"),
    );
    c4.eq("eps Phi_0", &dh.phi(0, 0).unwrap(), &e("th1_0"));
    c4.eq("eps Phi_1", &dh.phi(0, 1).unwrap(), &e("2*s1_1_0 - u1_0*th1_0 - 4/3*eps^2*c*th1_2"));
    c4.eq(
        "I0 v",
        r.i0.image(V).unwrap(),
        &e("u1_0*u1_1*th1_0 + 7/2*u1_0^2*th1_1 + eps^2*c*(u1_3*th1_0 + 13/2*u1_2*th1_1 + 8*u1_1*th1_2 + 6*u1_0*th1_3) + 3*eps^4*c^2*th1_5"),
    );
    c4.eq("I0 sigma0", r.i0.image(S0).unwrap(), &e("u1_0*th1_0*th1_1 - eps^2*c*(1/2*th1_1*th1_2 - th1_0*th1_3)"));
    c4.eq(
        "I1 v",
        r.i1.image(V).unwrap(),
        &e("5/4*u1_0^2*u1_1*th1_0 + 5/2*u1_0^3*th1_1 \
            + eps^2*c*(7/2*u1_1*u1_2*th1_0 + 2*u1_0*u1_3*th1_0 + 45/4*u1_1^2*th1_1 + 31/2*u1_0*u1_2*th1_1) \
            + eps^2*c*(26*u1_0*u1_1*th1_2 + 19/2*u1_0^2*th1_3) \
            + eps^4*c^2*(u1_5*th1_0 + 17/2*u1_4*th1_1 + 45/2*u1_3*th1_2) \
            + eps^4*c^2*(59/2*u1_2*th1_3 + 43/2*u1_1*th1_4 + 9*u1_0*th1_5) + 3*eps^6*c^3*th1_7"),
    );
    c4.eq(
        "I1 sigma0",
        r.i1.image(S0).unwrap(),
        &e("5/4*u1_0^2*th1_0*th1_1 \
            + eps^2*c*(5/2*u1_2*th1_0*th1_1 + 5/2*u1_1*th1_0*th1_2 - 1/2*u1_0*th1_1*th1_2 + 2*u1_0*th1_0*th1_3) \
            - eps^4*c^2*(1/2*th1_1*th1_4 - th1_0*th1_5)"),
    );
    c4.eq("X0 v", r.x0.image(V).unwrap(), &e("u1_0^3 + eps^2*c*(5/4*u1_1^2 + 3*u1_0*u1_2) + eps^4*c^2*u1_4"));
    c4.eq(
        "X0 sigma0",
        r.x0.image(S0).unwrap(),
        &e("-1/2*u1_0^2*th1_0 - eps^2*c*(u1_2*th1_0 + 5/2*u1_1*th1_1 + 3*u1_0*th1_2) - 2*eps^4*c^2*th1_4"),
    );
    c4.eq("C v", r.c.image(V).unwrap(), &e("eps^2*c*(3*u1_1^2 + 3*u1_0*u1_2) + 2*eps^4*c^2*u1_4"));
    let reference_c_s0 = e("eps^2*c*(3*u1_1*th1_1 + u1_0*th1_2) + 2*eps^4*c^2*th1_4");
    c4.eq("C sigma_0 (reference)", r.c.image(S0).unwrap(), &reference_c_s0);
    // independent check: [tau0, C] = 0 on v forces d_x(C sigma_0) = tau0(C v)
    let tau0_cv = dh.tau_flows[0].apply(r.c.image(V).unwrap(), &norm).unwrap();
    c4.ok("[tau0, C] v = 0 with computed C sigma_0", dh.pair().dx(r.c.image(S0).unwrap()) == tau0_cv);
    c4.ok("[tau0, C] v != 0 with reference C sigma_0", dh.pair().dx(&reference_c_s0) != tau0_cv);
    c4.eq("dv/ds2 (local part)", r.x.image(V).unwrap(), &e("u1_0^3 + eps^2*c*(17/4*u1_1^2 + 6*u1_0*u1_2) + 3*eps^4*c^2*u1_4"));

    // eps Phi_2 against the d_x-inversion oracle
    let phi2 = dh.phi(0, 2).unwrap();
    let dh2 = dh.tau_flows[0].apply(&dh.h[2], &norm).unwrap();
    c4.ok("d_x(eps Phi_2) = dh2/dtau0", dh.pair().dx(&phi2) == dh2);
    let oracle = invert_dx(&dh2, Some(dh.pair()), Some((&dh.fam.grading, dh.fam.eps))).unwrap();
    c4.eq("eps Phi_2 = invert_dx oracle", &phi2, &oracle);
    let reference_minus = e("4/3*s1_2_0 - 2/3*u1_0*s1_1_0 - 1/6*u1_0^2*th1_0 \
                           - eps^2*c*(2/3*u1_2*th1_0 + 4/3*u1_1*th1_2 + 4/3*u1_0*th1_2) - 16/15*eps^4*c^2*th1_4");
    let corrected = e("4/3*s1_2_0 - 2/3*u1_0*s1_1_0 - 1/6*u1_0^2*th1_0 \
                       - eps^2*c*(2/3*u1_2*th1_0 + 4/3*u1_1*th1_1 + 4/3*u1_0*th1_2) - 16/15*eps^4*c^2*th1_4");
    let reference_plus = e("4/3*s1_2_0 - 2/3*u1_0*s1_1_0 + 1/6*u1_0^2*th1_0 \
                          - eps^2*c*(2/3*u1_2*th1_0 + 4/3*u1_1*th1_2 + 4/3*u1_0*th1_2) - 16/15*eps^4*c^2*th1_4");
    c4.note(
        "eps Phi_2 discrepancy report",
        format!(
            "computed {phi2}; reference line read with '-': {}, with '+': {}; difference to '-' reading: {}; \
             equals '-' reading with v_x sigma_0^1 in place of v_x sigma_0^2: {}",
            phi2 == reference_minus,
            phi2 == reference_plus,
            phi2.sub(&reference_minus),
            phi2 == corrected
        ),
    );

    // 5
    c5.eq("O2 = (3c - 3/8)(v^2/2 + 2/3 eps^2 c v_xx)", &r.o2, &e("(3*c - 3/8)*(1/2*u1_0^2 + 2/3*eps^2*c*u1_2)"));
    let at = |s: &str| r.o2.eval_param("c", &superjet::frobenius::parse_rational(s).unwrap()).unwrap();
    c5.ok("O2 = 0 at c = 1/8", at("1/8").is_zero());
    for cv in ["1/8", "0", "1/6", "-1/2", "3"] {
        let lin = linearizability_check_1d(&at(cv)).unwrap();
        let want = cv == "1/8";
        c5.ok(format!("linearizable at c = {cv} is {want}"), (lin == Linearizable::Yes) == want);
    }
    match linearizability_check_1d(&r.o2).unwrap() {
        Linearizable::Iff(k) => {
            // condition proportional to 3c - 3/8
            let cvar = Rf::var(fam_c_index(&ctx));
            let target = cvar.scale_q(&q(3, 1)).sub(&Rf::frac(3, 8));
            let ratio = k.div(&target);
            c5.ok("symbolic condition is 3c - 3/8 = 0 up to a constant", ratio.as_q().is_some_and(|x| x != Q::from_integer(0.into())));
        }
        _ => c5.ok("symbolic condition is 3c - 3/8 = 0 up to a constant", false),
    }

    // 6
    for (name, res) in &r.residuals {
        c6.ok(format!("[ds2, {name}] = 0"), res.values().all(|x| x.is_zero()));
    }
    c6.ok("four brackets checked", r.residuals.len() == 4);
    for (name, ok) in &r.closed {
        c6.ok(name.clone(), *ok);
    }
    (c4, c5, c6)
}

fn fam_c_index(ctx: &Ctx) -> usize {
    ctx.param_index("c").unwrap()
}

// ---------------------------------------------------------------------------
// criterion 7

fn criterion_7() -> Crit {
    let mut c = Crit::new("7", "B2 Frobenius manifold and Virasoro operators");
    let (_, data) = b2_data();
    c.ok("WDVV", wdvv_check(&data.f).unwrap().ok);
    let (eta, _) = metric_of(&data.f).unwrap();
    let (z, o) = (Q::from_integer(0.into()), Q::from_integer(1.into()));
    c.ok("eta = antidiag(1, 1)", eta == vec![vec![z.clone(), o.clone()], vec![o, z]]);
    c.ok("mu = (-1/4, 1/4)", data.mu == vec![q(-1, 4), q(1, 4)]);
    let cutoff = 8;
    let fam = virasoro_family(&data, cutoff).unwrap();
    let l1 = fam.get(1);
    c.ok("L1 cross term d^2/dt^{1,0}dt^{2,0} = 3/16", l1.dd_coefficient((0, 0), (1, 0)) == q(3, 16));
    for pp in 0..=(cutoff - 2) {
        let x = Q::from_integer((pp as i64).into());
        let d1 = (&x + q(1, 4)) * (&x + q(5, 4));
        let d2 = (&x + q(3, 4)) * (&x + q(7, 4));
        c.ok(format!("L1 diagonal field 1, p = {pp}"), l1.td_coefficient((0, pp), (0, pp + 1)) == d1);
        c.ok(format!("L1 diagonal field 2, p = {pp}"), l1.td_coefficient((1, pp), (1, pp + 1)) == d2);
    }
    for (i, j, ok) in fam.closure() {
        c.ok(format!("[L{i}, L{j}] = ({})L{}", i - j, i + j), ok);
    }
    c
}

// ---------------------------------------------------------------------------
// criterion 9: property suites

#[derive(Clone, Debug)]
struct Term {
    c: i64,
    even: Vec<(usize, usize)>,
    odd: Vec<(usize, usize, usize)>,
}

/// Terms with exactly `p` odd factors of level `≤ max_level`, jets `≤ max_jet`
/// and total jet order `≤ max_order`.
fn terms(nf: usize, p: usize, max_level: usize, max_jet: usize, max_order: usize) -> impl Strategy<Value = Vec<Term>> {
    let term = (
        prop_oneof![-3i64..=-1, 1i64..=3],
        prop::collection::vec((0..nf, 0..=max_jet), 0..=2),
        prop::collection::vec((0..nf, 0..=max_level, 0..=max_jet), p..=p),
    )
        .prop_map(move |(c, mut even, mut odd)| {
            loop {
                let tot: usize = even.iter().map(|e| e.1).sum::<usize>() + odd.iter().map(|o| o.2).sum::<usize>();
                if tot <= max_order {
                    break;
                }
                let e = even.iter_mut().map(|e| &mut e.1);
                let o = odd.iter_mut().map(|o| &mut o.2);
                if let Some(m) = e.chain(o).max_by_key(|x| **x) {
                    *m -= 1;
                }
            }
            Term { c, even, odd }
        });
    prop::collection::vec(term, 1..=3)
}

fn build(ctx: &Ctx, ts: &[Term]) -> DiffPoly {
    let mut out = DiffPoly::zero(ctx);
    for t in ts {
        let mut m = DiffPoly::int(ctx, t.c);
        for &(f, s) in &t.even {
            m = m.mul(&DiffPoly::u(ctx, f, s));
        }
        for &(f, l, s) in &t.odd {
            m = m.mul(&DiffPoly::sigma(ctx, f, l, s));
        }
        out = out.add(&m);
    }
    out
}

fn runner(cases: u32, seed: u8) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]),
    )
}

fn check(c: bool, what: &str) -> Result<(), TestCaseError> {
    if c {
        Ok(())
    } else {
        Err(TestCaseError::fail(what.to_string()))
    }
}

fn suite<S: Strategy>(
    crit: &mut Crit,
    name: &str,
    cases: u32,
    seed: u8,
    strat: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    let mut r = runner(cases, seed);
    let res = r.run(&strat, test);
    let detail = match &res {
        Ok(()) => String::new(),
        Err(e) => e.to_string(),
    };
    crit.checks.push((format!("{name} ({cases} cases)"), res.is_ok(), detail));
}

fn criterion_9() -> Crit {
    let mut c = Crit::new("9", "property suites");
    let ctx2 = JetContext::new(&["u", "w"], 0, &[]).unwrap();
    let ctx1 = JetContext::new(&["u"], 0, &[]).unwrap();
    let deg = || 0usize..=3;

    // graded commutativity and associativity
    {
        let ctx = ctx2.clone();
        let s = (deg(), deg(), deg()).prop_flat_map(|(a, b, d)| {
            (Just((a, b, d)), terms(2, a, 0, 3, 6), terms(2, b, 0, 3, 6), terms(2, d, 0, 3, 6))
        });
        suite(&mut c, "graded commutativity and associativity", 200, 1, s, |((a, b, _), f, g, h)| {
            let (f, g, h) = (build(&ctx, &f), build(&ctx, &g), build(&ctx, &h));
            check(f.mul(&g) == g.mul(&f).scale(&sign(a * b)), "fg = (-1)^{ab} gf")?;
            check(f.mul(&g).mul(&h) == f.mul(&g.mul(&h)), "(fg)h = f(gh)")
        });
    }

    // Schouten antisymmetry
    {
        let ctx = ctx1.clone();
        let s = (deg(), deg()).prop_flat_map(|(a, b)| (Just((a, b)), terms(1, a, 0, 4, 4), terms(1, b, 0, 4, 4)));
        suite(&mut c, "Schouten graded antisymmetry", 100, 2, s, |((a, b), x, y)| {
            let (x, y) = (functional(&build(&ctx, &x)), functional(&build(&ctx, &y)));
            let l = schouten(&x, &y).unwrap();
            let r = schouten(&y, &x).unwrap().scale(&sign(a * b));
            check(l == r, "[P,Q] = (-1)^{pq}[Q,P]")
        });
    }

    // graded Jacobi
    {
        let ctx = ctx1.clone();
        let s = (deg(), deg(), deg()).prop_flat_map(|(a, b, d)| {
            (Just((a, b, d)), terms(1, a, 0, 4, 4), terms(1, b, 0, 4, 4), terms(1, d, 0, 4, 4))
        });
        suite(&mut c, "Schouten graded Jacobi", 100, 3, s, |((pp, qq, rr), x, y, z)| {
            let (x, y, z) = (functional(&build(&ctx, &x)), functional(&build(&ctx, &y)), functional(&build(&ctx, &z)));
            let br = |a: &LocalFunctional, b: &LocalFunctional| schouten(a, b).unwrap();
            let t1 = br(&br(&x, &y), &z).scale(&sign(rr * pp));
            let t2 = br(&br(&y, &z), &x).scale(&sign(pp * qq));
            let t3 = br(&br(&z, &x), &y).scale(&sign(qq * rr));
            check(t1.add(&t2).add(&t3).is_zero(), "graded Jacobi")
        });
    }

    // (-1)^{p-1} D_[P,Q] = [D_P, D_Q]
    {
        let ctx = ctx1.clone();
        let s = (0usize..=3, 0usize..=3)
            .prop_flat_map(|(a, b)| (Just((a, b)), terms(1, a, 0, 3, 4), terms(1, b, 0, 3, 4)));
        suite(&mut c, "derivation identity D_[P,Q]", 50, 4, s, |((a, _), x, y)| {
            let (x, y) = (functional(&build(&ctx, &x)), functional(&build(&ctx, &y)));
            let lhs = dp_derivation(&schouten(&x, &y).unwrap()).unwrap().scale(&sign(a + 1));
            let rhs = commutator(&dp_derivation(&x).unwrap(), &dp_derivation(&y).unwrap(), &plain).unwrap();
            let diff = lhs.sub(&rhs);
            check(diff.images.values().all(|v| v.is_zero()), "(-1)^{p-1} D_[P,Q] = [D_P, D_Q]")
        });
    }

    // identities for variational derivatives of a bracket
    for (name, seed, odd_side) in [("identity d/du [P,Q]", 5u8, false), ("identity d/dtheta [P,Q]", 6u8, true)] {
        let ctx = ctx1.clone();
        let s = (0usize..=2).prop_flat_map(|b| (Just(b), terms(1, 2, 0, 3, 4), terms(1, b, 0, 3, 4)));
        suite(&mut c, name, 50, seed, s, move |(qd, x, y)| {
            let pd = 2usize;
            let (x, y) = (functional(&build(&ctx, &x)), functional(&build(&ctx, &y)));
            let br = schouten(&x, &y).unwrap();
            let (dx, dy) = (dp_derivation(&x).unwrap(), dp_derivation(&y).unwrap());
            let ok = if !odd_side {
                let lhs = br.var_derivative(V);
                let rhs = dx.apply(&y.var_derivative(V), &plain).unwrap().add(
                    &dy.apply(&x.var_derivative(V), &plain).unwrap().scale(&sign(pd * qd)),
                );
                lhs == rhs
            } else {
                let lhs = br.var_derivative(S0).scale(&sign(pd + 1));
                let rhs = dx.apply(&y.var_derivative(S0), &plain).unwrap().sub(
                    &dy.apply(&x.var_derivative(S0), &plain).unwrap().scale(&sign((pd + 1) * (qd + 1))),
                );
                lhs == rhs
            };
            check(ok, name)
        });
    }

    // delta/delta o d_x = 0
    {
        let ctx = ctx2.clone();
        let s = (0usize..=3).prop_flat_map(|a| terms(2, a, 0, 4, 6));
        suite(&mut c, "variational derivative of a total derivative", 100, 7, s, |x| {
            let f = build(&ctx, &x).dx();
            let all = [Base::Even(0), Base::Even(1), Base::Odd(0, 0), Base::Odd(1, 0)];
            check(all.iter().all(|&b| superjet::variational::var_derivative(&f, b).is_zero()), "delta d_x f = 0")
        });
    }

    // Lemma: d/dtau_k T_m(X) = T_{m,k}(D_P1 X) - T_{m+1,k}(D_P0 X) on KdV
    {
        let ctx = intro_ctx(4);
        let (p0, p1) = intro_pair(&ctx);
        let pair: Arc<BihamPair> = BihamPair::new(p0.clone(), p1.clone()).unwrap();
        let (d0, d1) = (dp_derivation(&p0).unwrap(), dp_derivation(&p1).unwrap());
        let flows: Vec<EvolDerivation> = (0..=3).map(|k| pair.odd_flow(k).unwrap()).collect();
        let s = (0usize..=3, 0usize..=3, terms(1, 1, 0, 3, 4));
        suite(&mut c, "shift/odd-flow lemma on KdV", 25, 8, s, |(k, m, x)| {
            let x = build(&ctx, &x);
            let norm = |y: &DiffPoly| pair.reduce(y);
            let lhs = pair.reduce(&flows[k].apply(&shift_t(m, &x).unwrap(), &norm).unwrap());
            let a = shift_tkl(m, k, &d1.apply(&x, &plain).unwrap()).unwrap();
            let b = shift_tkl(m + 1, k, &d0.apply(&x, &plain).unwrap()).unwrap();
            check(lhs == pair.reduce(&a.sub(&b)), "lemma")
        });
    }

    // rewrite confluence
    {
        let fam = KdvFamily::new(4).unwrap();
        let ctx = fam.ctx.clone();
        let pair = fam.pair.clone();
        let s = (
            (1usize..=2).prop_flat_map(|a| terms(1, a, 3, 4, 6)),
            prop::collection::vec(0usize..8, 1..16),
        );
        suite(&mut c, "rewrite confluence", 100, 9, s, |(x, picks)| {
            let x = build(&ctx, &x);
            let mut i = 0usize;
            let mut pick = |cands: &[superjet::diffpoly::OddJet]| {
                i += 1;
                picks[i % picks.len()] % cands.len()
            };
            let a = pair.reduce(&x);
            let b = pair.reduce_in_order(&x, &mut pick);
            check(a == b, "normal form independent of rewrite order")
        });
    }
    c
}

fn main() {
    let t0 = std::time::Instant::now();
    let mut all = vec![criterion_1(), criterion_2(), criterion_3()];
    let (c4, c5, c6) = criterion_456();
    all.extend([c4, c5, c6, criterion_7(), criterion_8(), criterion_9()]);
    let mut unexpected = 0;
    for c in &all {
        println!("criterion {} {}: {}", c.id, if c.passed() { "PASS" } else { "FAIL" }, c.title);
        for (name, ok, detail) in &c.checks {
            if !ok {
                let known = KNOWN.iter().any(|(id, n)| *id == c.id && n == name);
                if !known {
                    unexpected += 1;
                }
                println!("    FAIL {name}{}", if known { " [recorded discrepancy]" } else { "" });
                if !detail.is_empty() {
                    println!("         {detail}");
                }
            } else if !detail.is_empty() {
                println!("    note {name}: {detail}");
            }
        }
    }
    let passed = all.iter().filter(|c| c.passed()).count();
    println!("{passed}/{} criteria pass; {unexpected} unexpected failures ({:.1}s)", all.len(), t0.elapsed().as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
