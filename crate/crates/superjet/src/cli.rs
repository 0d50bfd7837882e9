//! Scenario runners behind the command-line verbs. Every runner returns a
//! [`Report`]: named pass/fail checks plus a JSON payload with sorted keys.

use crate::coeff::Q;
use crate::diffpoly::{Base, Ctx, DiffPoly, JetContext};
use crate::error::{Error, Result};
use crate::frobenius::{
    biham_from_frobenius, calibrate, parse_rational, qtext, virasoro_family, wdvv_check, FrobeniusData, FrobeniusFile,
    VirasoroFamily,
};
use crate::parse::parse_poly;
use crate::superext::{is_local, BihamPair};
use crate::variational::{commutator, functional, plain, schouten, EvolDerivation, LocalFunctional};
use crate::virsolve::{linearizability_check_1d, KdvFamily, Linearizable, S2Pipeline};
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::Path;

/// Bundled Frobenius file for the `B_2` orbit space.
pub const B2_FROB: &str = include_str!("../data/b2.frob");

pub const DEFAULT_MAX_LEVEL: usize = 3;

/// Odd-level bound, overridable with `SUPERJET_MAX_LEVEL`.
pub fn max_level() -> Result<usize> {
    match std::env::var("SUPERJET_MAX_LEVEL") {
        Ok(s) => s.trim().parse().map_err(|_| Error::InvalidInput(format!("SUPERJET_MAX_LEVEL=`{s}` is not a number"))),
        Err(_) => Ok(DEFAULT_MAX_LEVEL),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub command: String,
    pub checks: Vec<Check>,
    pub data: Value,
}

impl Report {
    fn new(command: &str) -> Self {
        Report { command: command.into(), checks: vec![], data: json!({}) }
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push(Check { name: name.into(), ok, detail: None });
    }

    fn check_eq(&mut self, name: impl Into<String>, got: &DiffPoly, want: &DiffPoly) {
        let ok = got == want;
        let detail = (!ok).then(|| format!("got {}, expected {}", got.to_text(), want.to_text()));
        self.checks.push(Check { name: name.into(), ok, detail });
    }

    fn put(&mut self, key: &str, v: Value) {
        self.data.as_object_mut().unwrap().insert(key.into(), v);
    }

    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": 1,
            "command": self.command,
            "ok": self.ok(),
            "checks": self.checks.iter().map(|c| {
                let mut o = json!({"name": c.name, "ok": c.ok});
                if let Some(d) = &c.detail {
                    o["detail"] = json!(d);
                }
                o
            }).collect::<Vec<_>>(),
            "data": self.data,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.command);
        for c in &self.checks {
            s.push_str(&format!("{} {}", if c.ok { "PASS" } else { "FAIL" }, c.name));
            if let Some(d) = &c.detail {
                s.push_str(&format!("  ({d})"));
            }
            s.push('\n');
        }
        s.push_str(&serde_json::to_string_pretty(&self.data).unwrap());
        s.push('\n');
        s
    }
}

fn text_map(d: &EvolDerivation) -> Value {
    let m: serde_json::Map<String, Value> = d.images.iter().map(|(b, p)| (b.name(), json!(p.to_text()))).collect();
    Value::Object(m)
}

/// Context with the given fields; `eps` gets ε-grading weight −1, other parameters 0.
pub fn context(fields: &[String], params: &[String], level: usize) -> Result<Ctx> {
    let f: Vec<&str> = fields.iter().map(|s| s.as_str()).collect();
    let p: Vec<(&str, i32)> = params.iter().map(|s| (s.as_str(), if s == "eps" { -1 } else { 0 })).collect();
    JetContext::new(&f, level, &p)
}

/// `[∫P, ∫Q]`; with `expect_zero` the vanishing is a check.
pub fn run_schouten(p: &str, q: &str, fields: &[String], params: &[String], expect_zero: bool) -> Result<Report> {
    let ctx = context(fields, params, max_level()?)?;
    let pf = functional(&parse_poly(&ctx, p)?);
    let qf = functional(&parse_poly(&ctx, q)?);
    let r = schouten(&pf, &qf)?;
    let mut rep = Report::new("schouten");
    rep.put("P", json!(pf.rep().to_text()));
    rep.put("Q", json!(qf.rep().to_text()));
    rep.put("bracket", json!(r.rep().to_text()));
    rep.put("bracket_json", r.to_json());
    if expect_zero {
        rep.check("[P,Q] = 0", r.is_zero());
    }
    Ok(rep)
}

fn frob_ctx(text: &str) -> Result<(Ctx, FrobeniusData)> {
    let file: FrobeniusFile = toml::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let ctx = context(&file.fields, &[], max_level()?)?;
    let data = FrobeniusData::from_file(&ctx, &file)?;
    Ok((ctx, data))
}

/// Read a Frobenius file; the name `b2` selects the bundled data.
pub fn load_frob(path: &str) -> Result<String> {
    if path == "b2" && !Path::new(path).exists() {
        return Ok(B2_FROB.to_string());
    }
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))
}

pub fn run_wdvv(text: &str, depth: usize) -> Result<Report> {
    let (_, data) = frob_ctx(text)?;
    let mut rep = Report::new("wdvv-check");
    let w = wdvv_check(&data.f)?;
    rep.check("WDVV", w.ok);
    rep.put("frobenius", data.to_json());
    if let Some(f) = w.failing {
        rep.put("failing_indices", json!(f.iter().map(|i| i + 1).collect::<Vec<_>>()));
    }
    match calibrate(&data, depth) {
        Ok(cal) => rep.put("calibration", cal.to_json()),
        Err(e) => rep.put("calibration_error", json!({"code": e.code(), "message": e.to_string()})),
    }
    match biham_from_frobenius(&data) {
        Ok(pair) => {
            rep.check("[Z, P1] = P0", true);
            rep.put("P0", json!(pair.p0.rep().to_text()));
            rep.put("P1", json!(pair.p1.rep().to_text()));
        }
        Err(Error::ExactnessFailed) => rep.check("[Z, P1] = P0", false),
        Err(e) => return Err(e),
    }
    Ok(rep)
}

/// The KdV pair in the `u`, `θ` variables and its super extension.
pub struct IntroKdv {
    pub ctx: Ctx,
    pub p0: LocalFunctional,
    pub p1: LocalFunctional,
    pub t: EvolDerivation,
    pub tau0: EvolDerivation,
    pub tau1: EvolDerivation,
}

pub fn intro_kdv() -> Result<IntroKdv> {
    let ctx = JetContext::new(&["u"], 1, &[("eps", -1)])?;
    let p = |s: &str| parse_poly(&ctx, s);
    let u = Base::Even(0);
    let th = Base::Odd(0, 0);
    Ok(IntroKdv {
        p0: functional(&p("1/2*th1_0*th1_1")?),
        p1: functional(&p("1/2*u1_0*th1_0*th1_1 + 1/16*eps^2*th1_0*th1_3")?),
        t: EvolDerivation::new(&ctx, 0)
            .with(u, p("u1_0*u1_1 + 1/12*eps^2*u1_3")?)
            .with(th, p("u1_0*th1_1 + 1/12*eps^2*th1_3")?),
        tau0: EvolDerivation::new(&ctx, 1).with(u, p("th1_1")?).with(th, DiffPoly::zero(&ctx)),
        tau1: EvolDerivation::new(&ctx, 1)
            .with(u, p("u1_0*th1_1 + 1/2*u1_1*th1_0 + 1/8*eps^2*th1_3")?)
            .with(th, p("1/2*th1_0*th1_1")?),
        ctx,
    })
}

pub fn run_kdv_super() -> Result<Report> {
    let k = intro_kdv()?;
    let mut rep = Report::new("kdv-super");
    for (name, a, b) in [("[P0,P0]", &k.p0, &k.p0), ("[P0,P1]", &k.p0, &k.p1), ("[P1,P1]", &k.p1, &k.p1)] {
        rep.check(format!("{name} = 0"), schouten(a, b)?.is_zero());
    }
    let flows = [("t", &k.t), ("tau0", &k.tau0), ("tau1", &k.tau1)];
    let mut brackets = serde_json::Map::new();
    for i in 0..flows.len() {
        for j in i..flows.len() {
            let c = commutator(flows[i].1, flows[j].1, &plain)?;
            let name = format!("[{}, {}]", flows[i].0, flows[j].0);
            rep.check(format!("{name} = 0"), c.is_zero());
            brackets.insert(name, text_map(&c));
        }
    }
    // the odd flows agree with the ones generated from (P0, P1)
    let pair = BihamPair::new(k.p0.clone(), k.p1.clone())?;
    rep.check("tau0 from P0", pair.odd_flow(0)?.restrict(&[Base::Even(0), Base::Odd(0, 0)]) == k.tau0);
    rep.check("tau1 from P1", pair.odd_flow(1)?.restrict(&[Base::Even(0), Base::Odd(0, 0)]) == k.tau1);
    rep.put("brackets", Value::Object(brackets));
    Ok(rep)
}

pub fn run_virasoro_ops(text: &str, cutoff: usize) -> Result<Report> {
    let (_, data) = frob_ctx(text)?;
    let fam = virasoro_family(&data, cutoff)?;
    let mut rep = Report::new("virasoro-ops");
    for (i, j, ok) in fam.closure() {
        rep.check(format!("[L{i}, L{j}] = {}L{}", i - j, i + j), ok);
    }
    let expect = VirasoroFamily::expected_l0_constant(&data);
    rep.check("L0 constant = tr(1/4 - mu^2)/4", fam.get(0).scalar == expect);
    let ops: serde_json::Map<String, Value> = fam.ops.iter().map(|(m, op)| (format!("L{m}"), op.to_json(cutoff))).collect();
    rep.put("operators", Value::Object(ops));
    rep.put("mu", json!(data.mu.iter().map(qtext).collect::<Vec<_>>()));
    rep.put("cutoff", json!(cutoff));
    Ok(rep)
}

/// `c` binding for the one-dimensional pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum CValue {
    Symbolic,
    Value(Q),
}

impl std::str::FromStr for CValue {
    type Err = Error;
    fn from_str(s: &str) -> Result<CValue> {
        if s == "symbolic" {
            Ok(CValue::Symbolic)
        } else {
            Ok(CValue::Value(parse_rational(s)?))
        }
    }
}

pub fn run_virasoro_solve_1d(c: &CValue) -> Result<Report> {
    let pl = S2Pipeline::new(4)?;
    let r = pl.run()?;
    let bind = |p: &DiffPoly| -> Result<DiffPoly> {
        match c {
            CValue::Symbolic => Ok(p.clone()),
            CValue::Value(v) => p.eval_param("c", v),
        }
    };
    let bind_d = |d: &EvolDerivation| -> Result<EvolDerivation> {
        let mut o = d.clone();
        for p in o.images.values_mut() {
            *p = bind(p)?;
        }
        Ok(o)
    };
    let mut rep = Report::new("virasoro-solve-1d");
    for (name, ok) in &r.closed {
        rep.check(name.clone(), *ok);
    }
    for (name, res) in &r.residuals {
        rep.check(format!("[ds2, {name}] = 0"), res.values().all(|p| p.is_zero()));
    }
    let o2 = bind(&r.o2)?;
    let names = pl.dh.ctx().param_names();
    rep.put("h", json!(pl.dh.h.iter().take(3).map(|p| bind(p).map(|q| q.to_text())).collect::<Result<Vec<_>>>()?));
    rep.put("I0", text_map(&bind_d(&r.i0)?));
    rep.put("I1", text_map(&bind_d(&r.i1)?));
    rep.put("X0", text_map(&bind_d(&r.x0)?));
    rep.put("X0_kernel_dim", json!(r.x0_kernel_dim));
    rep.put("C", text_map(&bind_d(&r.c)?));
    rep.put("X", text_map(&bind_d(&r.x)?));
    rep.put("O2", json!(o2.to_text()));
    rep.put("linearizable", linearizability_check_1d(&o2)?.to_json(&names));
    rep.put("c", json!(match c {
        CValue::Symbolic => "symbolic".to_string(),
        CValue::Value(v) => qtext(v),
    }));
    Ok(rep)
}

pub const EXAMPLES: [&str; 3] = ["kdv", "b2", "s2"];

/// Built-in worked examples with their known closed-form outputs.
pub fn run_example(name: &str) -> Result<Report> {
    match name {
        "kdv" => {
            let mut rep = run_kdv_super()?;
            rep.command = "verify-example kdv".into();
            let fam = KdvFamily::new(max_level()?.max(2))?;
            let pair = &fam.pair;
            let z = functional(&parse_poly(&fam.ctx, "th1_0")?);
            rep.check("family: [Z, P1] = P0", schouten(&z, &pair.p1)? == pair.p0);
            rep.check("sigma_1^1 is local", is_local(&pair.reduce(&parse_poly(&fam.ctx, "s1_1_1")?)));
            rep.check("sigma_2^1 is not local", !is_local(&pair.reduce(&parse_poly(&fam.ctx, "s1_2_1")?)));
            Ok(rep)
        }
        "b2" => {
            let mut rep = run_virasoro_ops(B2_FROB, 6)?;
            rep.command = "verify-example b2".into();
            let (ctx, data) = frob_ctx(B2_FROB)?;
            rep.check("WDVV", wdvv_check(&data.f)?.ok);
            let q = |s: &str| parse_rational(s).unwrap();
            rep.check("mu = (-1/4, 1/4)", data.mu == vec![q("-1/4"), q("1/4")]);
            let pair = biham_from_frobenius(&data)?;
            let p1 = functional(&parse_poly(
                &ctx,
                "1/2*(8*u2_0^3*th1_0*th1_1 + 1/2*u2_0*th2_0*th2_1 + 2*u1_0*th1_0*th2_1 + 1/2*u1_1*th1_0*th2_0)",
            )?);
            rep.check("P1", pair.p1 == p1);
            let fam = virasoro_family(&data, 6)?;
            let l1 = fam.get(1);
            rep.check("L1 cross term 3/16", l1.dd_coefficient((0, 0), (1, 0)) == q("3/16"));
            let mut diag = true;
            for p in 0..=4usize {
                let x = Q::from_integer((p as i64).into());
                diag &= l1.td_coefficient((0, p), (0, p + 1)) == (&x + q("1/4")) * (&x + q("5/4"));
                diag &= l1.td_coefficient((1, p), (1, p + 1)) == (&x + q("3/4")) * (&x + q("7/4"));
            }
            rep.check("L1 diagonal", diag);
            Ok(rep)
        }
        "s2" => {
            let mut rep = run_virasoro_solve_1d(&CValue::Symbolic)?;
            rep.command = "verify-example s2".into();
            let pl = S2Pipeline::new(4)?;
            let r = pl.run()?;
            let ctx = pl.dh.ctx().clone();
            let p = |s: &str| parse_poly(&ctx, s);
            let (v, s0) = (Base::Even(0), Base::Odd(0, 0));
            rep.check_eq("X0 v", r.x0.image(v).unwrap(), &p("u1_0^3 + c*eps^2*(5/4*u1_1^2 + 3*u1_0*u1_2) + c^2*eps^4*u1_4")?);
            rep.check_eq(
                "X0 sigma_0",
                r.x0.image(s0).unwrap(),
                &p("-1/2*u1_0^2*th1_0 - c*eps^2*(u1_2*th1_0 + 5/2*u1_1*th1_1 + 3*u1_0*th1_2) - 2*c^2*eps^4*th1_4")?,
            );
            rep.check_eq("C v", r.c.image(v).unwrap(), &p("c*eps^2*(3*u1_1^2 + 3*u1_0*u1_2) + 2*c^2*eps^4*u1_4")?);
            rep.check_eq("C sigma_0", r.c.image(s0).unwrap(), &p("c*eps^2*(3*u1_1*th1_1 + 3*u1_0*th1_2) + 2*c^2*eps^4*th1_4")?);
            rep.check_eq("ds2 v", r.x.image(v).unwrap(), &p("u1_0^3 + c*eps^2*(17/4*u1_1^2 + 6*u1_0*u1_2) + 3*c^2*eps^4*u1_4")?);
            rep.check_eq("O2", &r.o2, &p("(3*c - 3/8)*(1/2*u1_0^2 + 2/3*c*eps^2*u1_2)")?);
            let lin = linearizability_check_1d(&r.o2.eval_param("c", &parse_rational("1/8")?)?)?;
            rep.check("linearizable at c = 1/8", lin == Linearizable::Yes);
            let phi2 = pl.dh.phi(0, 2)?;
            let rhs = pl.dh.tau_flows[0].apply(&pl.dh.h[2], &pl.dh.fam.pair.norm())?;
            rep.check("d_x(eps Phi_2) = d h_2/d tau_0", pl.dh.fam.pair.dx(&phi2) == rhs);
            rep.put("eps_Phi_0_2", json!(phi2.to_text()));
            Ok(rep)
        }
        _ => Err(Error::InvalidInput(format!("unknown example `{name}` (known: {})", EXAMPLES.join(", ")))),
    }
}

/// Scenario file (TOML).
#[derive(Debug, Deserialize)]
pub struct Scenario {
    pub kind: String,
    #[serde(default)]
    pub frobenius: Option<String>,
    #[serde(default)]
    pub p: Option<String>,
    #[serde(default)]
    pub q: Option<String>,
    #[serde(default)]
    pub fields: Vec<String>,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub c: Option<String>,
    #[serde(default)]
    pub cutoff: Option<usize>,
    #[serde(default)]
    pub example: Option<String>,
}

pub fn run_scenario(text: &str, base: &Path) -> Result<Report> {
    let s: Scenario = toml::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let frob = || -> Result<String> {
        let f = s.frobenius.as_deref().ok_or_else(|| Error::InvalidInput("scenario needs `frobenius`".into()))?;
        let path = base.join(f);
        load_frob(if path.exists() { path.to_str().unwrap() } else { f })
    };
    let cutoff = s.cutoff.unwrap_or(4);
    match s.kind.as_str() {
        "schouten-check" | "custom-bracket" => {
            let need = |x: &Option<String>, n: &str| x.clone().ok_or_else(|| Error::InvalidInput(format!("scenario needs `{n}`")));
            let fields = if s.fields.is_empty() { vec!["u".to_string()] } else { s.fields.clone() };
            run_schouten(&need(&s.p, "p")?, &need(&s.q, "q")?, &fields, &s.params, s.kind == "schouten-check")
        }
        "wdvv-check" => run_wdvv(&frob()?, cutoff),
        "kdv-super" => run_kdv_super(),
        "virasoro-ops" => run_virasoro_ops(&frob()?, cutoff),
        "virasoro-solve-1d" => run_virasoro_solve_1d(&s.c.as_deref().unwrap_or("symbolic").parse()?),
        "verify-example" => run_example(s.example.as_deref().unwrap_or("")),
        k => Err(Error::InvalidInput(format!("unknown scenario kind `{k}`"))),
    }
}

/// Stable exit status: 0 all checks pass, 1 a check failed, 10.. errors.
pub fn exit_code(r: &Result<Report>) -> i32 {
    match r {
        Ok(rep) if rep.ok() => 0,
        Ok(_) => 1,
        Err(e) => e.code(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intro_pair_and_flows() {
        let r = run_kdv_super().unwrap();
        assert!(r.ok(), "{}", r.to_text());
    }

    #[test]
    fn deterministic_reports() {
        let a = run_wdvv(B2_FROB, 3).unwrap().to_json().to_string();
        let b = run_wdvv(B2_FROB, 3).unwrap().to_json().to_string();
        assert_eq!(a, b);
        assert!(a.contains("\"schema\":1"));
    }

    #[test]
    fn c_parsing() {
        assert_eq!("symbolic".parse::<CValue>().unwrap(), CValue::Symbolic);
        assert_eq!("1/8".parse::<CValue>().unwrap(), CValue::Value(parse_rational("1/8").unwrap()));
        assert!("x/".parse::<CValue>().is_err());
    }
}
