//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any binding criterion (1-8) fails.
//!
//! Criterion 9 needs the published case data; point `DESOPF_REFERENCE_CASE` at a
//! case directory to run it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use desopf::backend::{backend_by_name, resolve_backend_name, SolverBackend};
use desopf::des::{evaluate_cost_breakdown, CaseData, Scenario};
use desopf::io::load_case;
use desopf::methods::{
    run_bl1, run_chain, run_milp, Method, MethodContext, MethodResult, MethodSettings,
};
use desopf::methods::{max_excess_pct, ViolationKind};
use desopf::network::{Bus, BusKind, Branch, Configuration, NetworkTopology, PerUnitBases};
use desopf::opf::build_combined_model;
use desopf::powerflow::{solve_power_flow, verify_timeseries, PowerFlowCase, PowerFlowOptions};
use desopf::synth::{example_case, random_case};

const RANDOM_SEEDS: [u64; 5] = [11, 23, 37, 41, 59];
const OBJ_REL_TOL: f64 = 1e-6;
const MAX_CASE_SECONDS: f64 = 60.0;
const MIN_DELTA_EXCESS_PCT: f64 = 20.0;
const WYE_REL_TOL: f64 = 1e-9;
const VERIFIER_PCT: f64 = 0.5;
const NR_MISMATCH: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-6;
const BALANCE_TOL_KW: f64 = 1e-8;
const EXCLUSIVE_TOL: f64 = 1e-6;
const STORAGE_TOL_KWH: f64 = 1e-6;
const FD_POINTS: usize = 100;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;
const STRETCH_OBJ_REL: f64 = 0.01;
const STRETCH_CAP_REL: f64 = 0.05;

// MINLP limits keep every case under the runtime bound
const NODE_LIMIT: usize = 40;
const TIME_LIMIT_S: f64 = 20.0;

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn report(&mut self, n: u32, ok: bool, detail: String) {
        println!("criterion {n}: {}  {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(n);
        }
    }
}

fn settings(fix_operations: bool) -> MethodSettings {
    MethodSettings {
        fix_operations,
        node_limit: NODE_LIMIT,
        time_limit: TIME_LIMIT_S,
        ..MethodSettings::default()
    }
}

fn rel_le(a: f64, b: f64) -> bool {
    a <= b + OBJ_REL_TOL * b.abs().max(1.0)
}

fn obj(r: &MethodResult) -> f64 {
    r.objective.unwrap_or(f64::NAN)
}

fn pick(results: &[MethodResult], m: Method) -> &MethodResult {
    results.iter().find(|r| r.method == m).expect("method ran")
}

/// Runs the full chain; returns results and wall-clock seconds.
fn chain(case: &CaseData, backend: &dyn SolverBackend, config: Configuration) -> (Vec<MethodResult>, f64) {
    let s = settings(false);
    let ctx = MethodContext {
        case,
        backend,
        settings: &s,
    };
    let clock = Instant::now();
    let res = run_chain(&ctx, config, &Method::ALL, None).expect("chain runs");
    (res, clock.elapsed().as_secs_f64())
}

/// DES invariants of one accepted solution; returns the list of breaches.
fn des_invariants(case: &CaseData, r: &MethodResult) -> Vec<String> {
    let mut bad = Vec::new();
    let Some(d) = &r.design else {
        return vec!["no design".into()];
    };
    let res = d.max_balance_residual(case);
    if res >= BALANCE_TOL_KW {
        bad.push(format!("balance residual {res:.2e}"));
    }
    let n = d.simultaneous_charge_discharge(EXCLUSIVE_TOL);
    if n > 0 {
        bad.push(format!("{n} simultaneous charge/discharge"));
    }
    let n = d.simultaneous_buy_sell(EXCLUSIVE_TOL);
    if n > 0 {
        bad.push(format!("{n} simultaneous buy/sell"));
    }
    for (b, bd) in d.buildings.iter().enumerate() {
        let bdata = &case.buildings[b];
        let roof = bd.panels * case.catalog.pv.panel_area_m2;
        if roof > bdata.roof_area_m2 + STORAGE_TOL_KWH {
            bad.push(format!("{} roof {roof:.3} > {}", bd.id, bdata.roof_area_m2));
        }
        let vol: f64 = bd.batteries.iter().map(|x| x.volume_m3).sum();
        if vol > bdata.volume_m3 + STORAGE_TOL_KWH {
            bad.push(format!("{} volume {vol:.3} > {}", bd.id, bdata.volume_m3));
        }
        for (j, bat) in bd.batteries.iter().enumerate() {
            let tech = &case.catalog.batteries[j];
            let cap = bat.capacity_kwh;
            for (s, season) in d.operation.iter().enumerate() {
                let hours = &season[b];
                for (t, h) in hours.iter().enumerate() {
                    let e = h.batteries[j].stored;
                    if e > tech.soc_max * cap + STORAGE_TOL_KWH {
                        bad.push(format!("{} {} SoC s{s} t{t}", bd.id, tech.name));
                    }
                    if e < (1.0 - tech.dod_max) * cap - STORAGE_TOL_KWH {
                        bad.push(format!("{} {} DoD s{s} t{t}", bd.id, tech.name));
                    }
                }
                let first = hours[0].batteries[j].stored;
                let last = hours[hours.len() - 1].batteries[j].stored;
                if (first - last).abs() > STORAGE_TOL_KWH {
                    bad.push(format!("{} {} not cyclic in season {s}", bd.id, tech.name));
                }
            }
        }
    }
    let total = evaluate_cost_breakdown(d, case).total();
    let o = obj(r);
    if (total - o).abs() > OBJ_REL_TOL * o.abs().max(1.0) {
        bad.push(format!("cost breakdown {total:.6} vs objective {o:.6}"));
    }
    bad
}

/// Verifier check of one result: `(max |error| %, max mismatch)`.
fn verify(case: &CaseData, r: &MethodResult) -> Result<(f64, f64), String> {
    let opf = r.opf.as_ref().ok_or("no network solution")?;
    let rep = verify_timeseries(opf, &case.network, &PowerFlowOptions::default()).map_err(|e| e.to_string())?;
    Ok((rep.max_abs(), rep.max_mismatch_pu))
}

fn two_bus() -> NetworkTopology {
    let bases = PerUnitBases::default();
    let bus = |id, kind| Bus {
        id,
        kind,
        buildings: vec![],
    };
    NetworkTopology {
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Passive)],
        branches: vec![Branch {
            from: 1,
            to: 2,
            r_ohm: 0.0,
            x_ohm: 0.1 * bases.z_base(),
            i_max_a: 1000.0,
        }],
        slack_bus: 1,
        v_bounds_pu: [0.9, 1.1],
        bases,
        configuration: Configuration::Delta,
    }
}

/// Newton-Raphson against the closed form u - u^2 = 1e-4 with u = V2^2.
fn two_bus_oracle() -> Result<String, String> {
    let u = (1.0 + (1.0f64 - 4e-4).sqrt()) / 2.0;
    let v2 = u.sqrt();
    let th2 = (-0.01 / v2).asin();
    let pf = PowerFlowCase::new(&two_bus()).map_err(|e| e.to_string())?;
    let sol = solve_power_flow(&pf, &[0.0, -0.1], &[0.0, 0.0], &PowerFlowOptions::default())
        .map_err(|e| e.to_string())?;
    let (dv, dth) = ((sol.v[1] - v2).abs(), (sol.theta[1] - th2).abs());
    let msg = format!(
        "two-bus V2 {:.6} theta2 {:.4} deg",
        sol.v[1],
        sol.theta[1].to_degrees()
    );
    if dv < ORACLE_TOL && dth < ORACLE_TOL && (v2 - 0.99995).abs() < ORACLE_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Worst central-difference gap over every nonlinear row of the example
/// model, in both configurations.
fn jacobian_check() -> f64 {
    let case = example_case();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let models: Vec<_> = [Configuration::Delta, Configuration::Wye]
        .iter()
        .map(|c| build_combined_model(&case, *c).expect("model"))
        .collect();
    for k in 0..FD_POINTS {
        let sys = models[k % 2].system();
        let mut x: Vec<f64> = (0..sys.n_vars()).map(|_| rng.random_range(-0.3..0.3)).collect();
        // voltage magnitudes near nominal
        for (i, v) in sys.vars.iter().enumerate() {
            if v.name.starts_with("v[") {
                x[i] = 1.0 + x[i] / 3.0;
            }
        }
        for row in &sys.nonlinear {
            let f = row.func.as_ref();
            let mut grad = vec![0.0; f.vars().len()];
            f.value_and_gradient(&x, &mut grad);
            for (i, v) in f.vars().iter().enumerate() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[v.0] += FD_STEP;
                xm[v.0] -= FD_STEP;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * FD_STEP);
                worst = worst.max((fd - grad[i]).abs());
            }
        }
    }
    worst
}

fn main() {
    let backend_name = resolve_backend_name(None);
    let backend = backend_by_name(&backend_name).expect("backend");
    let backend = backend.as_ref();
    let mut gate = Gate { failed: Vec::new() };
    // feasible network results gathered for criteria 5 and 6
    let mut accepted: Vec<(String, CaseData, MethodResult)> = Vec::new();

    // 1 and 2: randomised cases
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for seed in RANDOM_SEEDS {
        let case = random_case(seed);
        let (res, secs) = chain(&case, backend, Configuration::Delta);
        let milp = obj(pick(&res, Method::Milp));
        let [bl1, bl2, minlp] = [Method::Bl1, Method::Bl2, Method::Minlp].map(|m| pick(&res, m));
        let all_feasible = [bl1, bl2, minlp].iter().all(|r| r.is_feasible());
        let bound = all_feasible && [bl1, bl2, minlp].iter().all(|r| rel_le(milp, obj(r)));
        let ok1 = bound && secs < MAX_CASE_SECONDS;
        c1.push((
            ok1,
            format!(
                "seed {seed}: MILP {milp:.2} BL-1 {:.2} BL-2 {:.2} MINLP {:.2} in {secs:.1}s",
                obj(bl1),
                obj(bl2),
                obj(minlp)
            ),
        ));
        let ok2 = (!bl1.is_feasible() || (bl2.is_feasible() && rel_le(obj(bl2), obj(bl1))))
            && (!bl2.is_feasible() || (minlp.is_feasible() && rel_le(obj(minlp), obj(bl2))));
        c2.push((ok2, format!("seed {seed}")));
        for r in [bl1, bl2, minlp] {
            if r.is_feasible() {
                accepted.push((format!("seed {seed} {}", r.method.label()), case.clone(), r.clone()));
            }
        }
    }
    let fails: Vec<&String> = c1.iter().filter(|c| !c.0).map(|c| &c.1).collect();
    for (_, line) in &c1 {
        println!("  {line}");
    }
    gate.report(
        1,
        fails.is_empty(),
        format!("{} randomised cases, {} failing", c1.len(), fails.len()),
    );
    let fails: Vec<&String> = c2.iter().filter(|c| !c.0).map(|c| &c.1).collect();
    gate.report(2, fails.is_empty(), format!("chain ordering failing on {fails:?}"));

    // 3 and 4: the constructed example, scenario 1
    let s1 = example_case().for_scenario(Scenario::NoStorage);
    let fix = settings(true);
    let free = settings(false);
    let ctx_fix = MethodContext {
        case: &s1,
        backend,
        settings: &fix,
    };
    let ctx_free = MethodContext {
        case: &s1,
        backend,
        settings: &free,
    };
    let milp = run_milp(&ctx_free).expect("milp");
    let audit_delta = run_bl1(&ctx_fix, Configuration::Delta, &milp).expect("bl1 audit");
    let bl1_free = run_bl1(&ctx_free, Configuration::Delta, &milp).expect("bl1");
    let excess = max_excess_pct(&audit_delta.violations, ViolationKind::Current);
    let ok3 = !audit_delta.is_feasible()
        && excess >= MIN_DELTA_EXCESS_PCT
        && bl1_free.is_feasible()
        && obj(&bl1_free) > obj(&milp);
    gate.report(
        3,
        ok3,
        format!(
            "audited excess {excess:.1}%, BL-1 {} {:.2} vs MILP {:.2}",
            bl1_free.status.as_str(),
            obj(&bl1_free),
            obj(&milp)
        ),
    );
    if bl1_free.is_feasible() {
        accepted.push(("example S1 BL-1".into(), s1.clone(), bl1_free.clone()));
    }

    let audit_wye = run_bl1(&ctx_fix, Configuration::Wye, &milp).expect("bl1 wye audit");
    let (mut dv, mut di) = (f64::INFINITY, f64::INFINITY);
    if let (Some(d), Some(w)) = (&audit_delta.opf, &audit_wye.opf) {
        dv = 0.0;
        di = 0.0;
        for (pd, pw) in d.periods.iter().zip(&w.periods) {
            for (a, b) in pd.v.iter().zip(&pw.v) {
                dv = dv.max((a - b).abs() / a.abs());
            }
            for (a, b) in pd.current_a.iter().zip(&pw.current_a) {
                di = di.max((a / 3.0 - b).abs() / (a / 3.0).abs().max(1e-12));
            }
        }
    }
    let ok4 = dv <= WYE_REL_TOL
        && di <= WYE_REL_TOL
        && audit_wye.is_feasible()
        && audit_wye.violations.is_empty()
        && (obj(&audit_wye) - obj(&milp)).abs() <= OBJ_REL_TOL * obj(&milp).abs();
    gate.report(
        4,
        ok4,
        format!(
            "V rel diff {dv:.1e}, I_wye vs I_delta/3 rel diff {di:.1e}, wye {} with {} violations, objective {:.2}",
            audit_wye.status.as_str(),
            audit_wye.violations.len(),
            obj(&audit_wye)
        ),
    );

    // 8: same case with storage
    let s2 = example_case().for_scenario(Scenario::WithStorage);
    let (res8, _) = chain(&s2, backend, Configuration::Delta);
    let target = obj(&bl1_free);
    let best = res8
        .iter()
        .filter(|r| r.method != Method::Milp && r.is_feasible() && r.violations.is_empty())
        .min_by(|a, b| obj(a).total_cmp(&obj(b)));
    let ok8 = best.is_some_and(|b| obj(b) < target);
    gate.report(
        8,
        ok8,
        match best {
            Some(b) => format!(
                "{} {:.2} vs scenario-1 BL-1 {target:.2}, storage installed {:.1} kWh",
                b.method.label(),
                obj(b),
                b.design.as_ref().map_or(0.0, |d| d.total_storage_kwh()).max(0.0)
            ),
            None => "no feasible network-constrained result".into(),
        },
    );
    for r in res8.iter().filter(|r| r.method != Method::Milp && r.is_feasible()) {
        accepted.push((format!("example S2 {}", r.method.label()), s2.clone(), r.clone()));
    }

    // cheap batteries, so the storage rows are active in criterion 6
    let mut cheap = example_case();
    for b in &mut cheap.catalog.batteries {
        b.invest_per_kwh = 1.0;
        b.om_per_kwh_yr = 0.0;
    }
    let cheap = cheap.for_scenario(Scenario::WithStorage);
    let (res_cheap, _) = chain(&cheap, backend, Configuration::Wye);
    let cheap_storage = pick(&res_cheap, Method::Milp)
        .design
        .as_ref()
        .map_or(0.0, |d| d.total_storage_kwh());
    for r in res_cheap.iter().filter(|r| r.method != Method::Milp && r.is_feasible()) {
        accepted.push((format!("cheap-storage {}", r.method.label()), cheap.clone(), r.clone()));
    }

    // 5: verifier fidelity
    let mut worst_pct = 0.0f64;
    let mut worst_mm = 0.0f64;
    let mut errs = Vec::new();
    for (name, case, r) in &accepted {
        match verify(case, r) {
            Ok((pct, mm)) => {
                worst_pct = worst_pct.max(pct);
                worst_mm = worst_mm.max(mm);
            }
            Err(e) => errs.push(format!("{name}: {e}")),
        }
    }
    let oracle = two_bus_oracle();
    let ok5 = errs.is_empty() && worst_pct <= VERIFIER_PCT && worst_mm < NR_MISMATCH && oracle.is_ok();
    gate.report(
        5,
        ok5,
        format!(
            "{} results, max |error| {worst_pct:.4}%, max mismatch {worst_mm:.1e} pu, {}{}",
            accepted.len(),
            oracle.unwrap_or_else(|e| format!("oracle off: {e}")),
            if errs.is_empty() { String::new() } else { format!(", errors {errs:?}") }
        ),
    );

    // 6: DES invariants on every accepted solution, the MILP ones included
    let mut breaches = Vec::new();
    let milps = [("example S1 MILP", &s1, &milp), ("cheap-storage MILP", &cheap, pick(&res_cheap, Method::Milp))];
    for (name, case, r) in milps.iter().map(|(n, c, r)| (n.to_string(), *c, *r)).chain(
        accepted.iter().map(|(n, c, r)| (n.clone(), c, r)),
    ) {
        for b in des_invariants(case, r) {
            breaches.push(format!("{name}: {b}"));
        }
    }
    gate.report(
        6,
        breaches.is_empty() && cheap_storage > 0.0,
        format!(
            "{} solutions checked, cheap-storage case installs {cheap_storage:.1} kWh{}",
            accepted.len() + milps.len(),
            if breaches.is_empty() { String::new() } else { format!(", breaches {breaches:?}") }
        ),
    );

    // 7: derivatives
    let fd = jacobian_check();
    gate.report(7, fd < FD_TOL, format!("max |analytic - central difference| {fd:.2e} over {FD_POINTS} points"));

    // 9: published data
    match std::env::var_os("DESOPF_REFERENCE_CASE") {
        None => println!("criterion 9: NOT RUN  set DESOPF_REFERENCE_CASE to a case directory with the published data"),
        Some(dir) => match load_case(std::path::Path::new(&dir)) {
            Err(e) => println!("criterion 9: FAIL  could not load case: {e}"),
            Ok(case) => {
                let run = |sc: Scenario| {
                    let c = case.for_scenario(sc);
                    let ctx = MethodContext {
                        case: &c,
                        backend,
                        settings: &free,
                    };
                    run_milp(&ctx).expect("milp")
                };
                let (m1, m2) = (run(Scenario::NoStorage), run(Scenario::WithStorage));
                let near = |v: f64, target: f64, rel: f64| (v - target).abs() <= rel * target;
                let pv = m1.design.as_ref().map_or(0.0, |d| d.total_pv_kw());
                let ok = near(obj(&m1), 43_793.0, STRETCH_OBJ_REL)
                    && near(obj(&m2), 37_566.0, STRETCH_OBJ_REL)
                    && near(pv, 307.0, STRETCH_CAP_REL);
                println!(
                    "criterion 9: {}  MILP S1 {:.2} S2 {:.2}, PV {pv:.1} kWp",
                    if ok { "PASS" } else { "FAIL" },
                    obj(&m1),
                    obj(&m2)
                );
            }
        },
    }

    if gate.failed.is_empty() {
        println!("acceptance: all binding criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", gate.failed);
        std::process::exit(1);
    }
}
