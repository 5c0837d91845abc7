//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use presheaf_mp::bp::{bp_run, bp_step, normalize_log_messages, BpOptions, BpRun};
use presheaf_mp::energy::{criticality_residual, hamiltonians_from_factors, Criticality, Hamiltonians};
use presheaf_mp::mp::{delta_mp, mp_run, mp_run_from, transfer_bp_to_mp, transfer_mp_to_bp, MpOptions, MpRun};
use presheaf_mp::oracle;
use presheaf_mp::random::{
    random_cyclic_spec, random_factors, random_hamiltonians, random_messages, random_poset, random_presheaf,
    random_quotient, random_tree_spec, random_weights, widen_target,
};
use presheaf_mp::transform::{bin_variable, NaturalTransformation};
use presheaf_mp::{FieldBundle, FiniteSetPresheaf, GraphicalSpec, InnerProductWeights, MessageBundle};

const SEED: u64 = 20_240_531;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// A graphical instance with its exact marginals.
struct Instance {
    spec: GraphicalSpec,
    f: FiniteSetPresheaf,
    h: Hamiltonians,
    joint: Vec<f64>,
    marginals: FieldBundle,
}

impl Instance {
    fn new<R: Rng>(rng: &mut R, spec: GraphicalSpec, strength: f64) -> Self {
        let factors = random_factors(rng, &spec, strength);
        let f = spec.presheaf().unwrap();
        let h = hamiltonians_from_factors(&f, &factors).unwrap();
        let joint = oracle::exact_joint(&spec, &factors).unwrap();
        let marginals = oracle::exact_marginals(&spec, &joint);
        Instance {
            spec,
            f,
            h,
            joint,
            marginals,
        }
    }

    fn ones(&self) -> InnerProductWeights {
        InnerProductWeights::ones(&self.f)
    }
}

fn sup_diff(a: &FieldBundle, b: &FieldBundle) -> f64 {
    a.zip_with(b, |x, y| x - y).sup_norm()
}

/// `||N(bp_step(m)) - N(m)||_inf`, the fixed-point defect of normalized BP.
fn bp_defect(f: &FiniteSetPresheaf, h: &Hamiltonians, m: &MessageBundle) -> f64 {
    let next = normalize_log_messages(&bp_step(f, h, m).unwrap());
    let cur = normalize_log_messages(m);
    next.parts()
        .iter()
        .flatten()
        .zip(cur.parts().iter().flatten())
        .map(|(&x, &y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// Hub-and-rim region graph: triangles `{hub, r_i, r_{i+1}}` around a hub,
/// their pairwise intersections `{hub, r_i}` and `{hub}`.
fn wheel_spec(rim: usize) -> GraphicalSpec {
    let names: Vec<String> = (0..=rim).map(|i| format!("x{i}")).collect();
    let variables = names.iter().map(|n| (n.clone(), 2)).collect();
    let mut regions: Vec<Vec<String>> = (0..rim)
        .map(|i| vec![names[0].clone(), names[1 + i].clone(), names[1 + (i + 1) % rim].clone()])
        .collect();
    regions.extend((0..rim).map(|i| vec![names[0].clone(), names[1 + i].clone()]));
    regions.push(vec![names[0].clone()]);
    GraphicalSpec::new(variables, &regions).unwrap()
}

/// Marginals of a randomly reweighted joint: a consistent belief that is not
/// a critical point.
fn perturbed_marginals<R: Rng>(rng: &mut R, inst: &Instance) -> FieldBundle {
    let mut p: Vec<f64> = inst.joint.iter().map(|&x| x * rng.gen_range(-0.5f64..=0.5).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    oracle::exact_marginals(&inst.spec, &p)
}

struct Shared {
    trees: Vec<Instance>,
    tree_bp: Vec<BpRun>,
    tree_mp: Vec<MpRun>,
}

fn shared() -> Shared {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let trees: Vec<Instance> = (0..50)
        .map(|_| {
            let n = rng.gen_range(2..=10);
            let spec = random_tree_spec(&mut rng, n, 2);
            Instance::new(&mut rng, spec, 1.0)
        })
        .collect();
    let tree_bp = trees.iter().map(|t| bp_run(&t.f, &t.h, &BpOptions::default()).unwrap()).collect();
    let tree_mp = trees
        .iter()
        .map(|t| mp_run(&t.f, &t.h, &t.ones(), &MpOptions::default()).unwrap())
        .collect();
    Shared { trees, tree_bp, tree_mp }
}

fn criterion1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut bad = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let density = rng.gen_range(0.1..0.9);
        let p = random_poset(&mut rng, n, density);
        for _ in 0..5 {
            let v: Vec<i64> = (0..n).map(|_| rng.gen_range(-1000..=1000)).collect();
            if p.zeta_int(&p.mobius_int(&v)) != v || p.mobius_int(&p.zeta_int(&v)) != v {
                bad += 1;
            }
        }
    }
    let mut bad_c = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=10);
        let spec = random_tree_spec(&mut rng, n, 2);
        let p = spec.poset().unwrap();
        let g = oracle::Graph::from_spec(&spec).unwrap();
        for (r, vars) in spec.regions().iter().enumerate() {
            let want = if vars.len() == 2 { 1 } else { 1 - g.degree(vars[0]) as i64 };
            if p.overcount()[r] != want {
                bad_c += 1;
            }
        }
    }
    outcome(
        bad == 0 && bad_c == 0,
        format!("200 posets, {bad} inversion failures; 50 trees, {bad_c} wrong overcounting numbers"),
    )
}

fn criterion2(s: &Shared) -> Outcome {
    let (mut worst_bp, mut worst_mp, mut conv_bp, mut conv_mp) = (0.0f64, 0.0f64, 0, 0);
    for ((t, b), m) in s.trees.iter().zip(&s.tree_bp).zip(&s.tree_mp) {
        conv_bp += b.converged as usize;
        conv_mp += m.converged as usize;
        worst_bp = worst_bp.max(sup_diff(&b.beliefs, &t.marginals));
        worst_mp = worst_mp.max(sup_diff(&m.beliefs, &t.marginals));
    }
    let n = s.trees.len();
    outcome(
        conv_bp == n && conv_mp == n && worst_bp < 1e-8 && worst_mp < 1e-8,
        format!("converged bp {conv_bp}/{n}, mp {conv_mp}/{n}; max error bp {worst_bp:.1e}, mp {worst_mp:.1e}"),
    )
}

fn criterion3(s: &Shared) -> Outcome {
    let (mut fact, mut ent) = (0.0f64, 0.0f64);
    for t in &s.trees {
        fact = fact.max(oracle::tree_factorization_check(&t.spec, &t.joint).unwrap());
        ent = ent.max(oracle::entropy_decomposition_check(&t.spec, &t.joint).unwrap());
    }
    outcome(
        fact < 1e-10 && ent < 1e-10,
        format!("max factorization {fact:.1e}, entropy {ent:.1e}"),
    )
}

/// Cyclic families: pairwise graphs with several loops and hub wheels.
fn cyclic_instances(seed: u64) -> (Vec<Instance>, Vec<Instance>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairwise = (0..10)
        .map(|_| {
            let n = rng.gen_range(4..=7);
            let extra = rng.gen_range(2..=3);
            let spec = random_cyclic_spec(&mut rng, n, extra, 2);
            Instance::new(&mut rng, spec, 0.5)
        })
        .collect();
    let wheels = (0..10)
        .map(|i| Instance::new(&mut rng, wheel_spec(3 + i % 3), 0.5))
        .collect();
    (pairwise, wheels)
}

fn wheel_bp_options() -> BpOptions {
    BpOptions {
        damping: 0.2,
        max_iters: 5000,
        ..BpOptions::default()
    }
}

fn criterion4(s: &Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut certified = 0;
    let mut failures = 0;
    let (mut worst_sec, mut worst_crit) = (0.0f64, 0.0f64);
    let mut record = |c: Criticality| {
        certified += 1;
        worst_sec = worst_sec.max(c.section);
        worst_crit = worst_crit.max(c.critical);
        if !c.is_critical(1e-8, 1e-6) {
            failures += 1;
        }
    };
    for ((t, b), m) in s.trees.iter().zip(&s.tree_bp).zip(&s.tree_mp) {
        if b.converged {
            record(criticality_residual(&t.f, &t.h, &b.beliefs).unwrap());
        }
        if m.converged {
            record(criticality_residual(&t.f, &t.h, &m.beliefs).unwrap());
        }
    }
    let (pairwise, wheels) = cyclic_instances(SEED + 40);
    let mut cyclic = 0;
    for inst in &pairwise {
        let b = bp_run(&inst.f, &inst.h, &BpOptions::default()).unwrap();
        if b.converged {
            cyclic += 1;
            record(criticality_residual(&inst.f, &inst.h, &b.beliefs).unwrap());
        }
    }
    for inst in &wheels {
        let b = bp_run(&inst.f, &inst.h, &wheel_bp_options()).unwrap();
        if b.converged {
            cyclic += 1;
            record(criticality_residual(&inst.f, &inst.h, &b.beliefs).unwrap());
        }
        let m = mp_run(&inst.f, &inst.h, &inst.ones(), &MpOptions::default()).unwrap();
        if m.converged {
            cyclic += 1;
            record(criticality_residual(&inst.f, &inst.h, &m.beliefs).unwrap());
        }
    }
    let mut min_control = f64::INFINITY;
    for inst in s.trees.iter().chain(&pairwise).chain(&wheels) {
        let q = perturbed_marginals(&mut rng, inst);
        min_control = min_control.min(criticality_residual(&inst.f, &inst.h, &q).unwrap().critical);
    }
    outcome(
        failures == 0 && cyclic >= 20 && min_control > 1e-3,
        format!(
            "{certified} converged runs ({cyclic} cyclic), {failures} uncertified; max r_section {worst_sec:.1e}, \
             r_critical {worst_crit:.1e}; min control r_critical {min_control:.1e}"
        ),
    )
}

fn random_transformation<R: Rng>(rng: &mut R, widen: bool) -> NaturalTransformation {
    let n = rng.gen_range(1..=5);
    let p = Arc::new(random_poset(rng, n, 0.5));
    let f = random_presheaf(rng, p, 6);
    let phi = random_quotient(rng, &f, 2);
    if widen {
        widen_target(rng, &phi, 2).unwrap()
    } else {
        phi
    }
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let phi = random_transformation(&mut rng, i % 2 == 1);
        let h = random_hamiltonians(&mut rng, phi.source(), 1.0);
        let wf = random_weights(&mut rng, phi.source());
        let wg = random_weights(&mut rng, phi.target());
        worst = worst.max(phi.check_theorem1(&h, &wf, &wg, 100, &mut rng).unwrap());
    }
    outcome(worst < 1e-9, format!("100 instances x 100 bundles, max residual {worst:.1e}"))
}

fn criterion6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let (mut id, mut ip) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let phi = random_transformation(&mut rng, false);
        let (a, b) = phi.isometry_residuals(20, &mut rng);
        id = id.max(a);
        ip = ip.max(b);
    }
    outcome(
        id < 1e-12 && ip < 1e-12,
        format!("100 surjections, max |phi phi^dagger - id| {id:.1e}, inner product {ip:.1e}"),
    )
}

/// A random tree with one ternary variable, binned `[0, 1, 1]`, and a
/// Hamiltonian pulled back from the coarse model (symmetric under swapping
/// the binned states).
fn symmetric_binning<R: Rng>(rng: &mut R) -> (NaturalTransformation, Hamiltonians) {
    let n = rng.gen_range(2..=6);
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    let var = rng.gen_range(0..n);
    let mut domains = vec![2; n];
    domains[var] = 3;
    let spec = GraphicalSpec::pairwise(&domains, &edges).unwrap();
    let (_, phi) = bin_variable(&spec, var, &[0, 1, 1]).unwrap();
    let hg = random_hamiltonians(rng, phi.target(), 1.0);
    let hf = FieldBundle(
        (0..phi.components().len())
            .map(|a| phi.component(a).iter().map(|&y| hg.get(a)[y]).collect())
            .collect(),
    );
    (phi.clone(), Hamiltonians::new(phi.source(), hf).unwrap())
}

fn criterion7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let phi = random_transformation(&mut rng, false);
        let h = random_hamiltonians(&mut rng, phi.source(), 1.0);
        worst = worst.max(phi.check_theorem3(&h, 20, &mut rng).unwrap());
    }
    // Slow linear modes on larger trees need more than the default budget.
    let opts = MpOptions {
        damping: 1.0,
        max_iters: 100_000,
        ..MpOptions::default()
    };
    let (mut transported, mut worst_fp, mut runs) = (0, 0.0f64, 0);
    for _ in 0..20 {
        let (phi, h) = symmetric_binning(&mut rng);
        runs += 1;
        let run = mp_run(phi.source(), &h, &phi.phi_weights(), &opts).unwrap();
        if !run.converged {
            continue;
        }
        let t = phi.transport_fixed_point(&h, &run.messages).unwrap();
        transported += 1;
        worst_fp = worst_fp.max(t.target_residual);
    }
    outcome(
        worst < 1e-9 && transported == runs && worst_fp < 1e-6,
        format!(
            "100 instances, max full-map residual {worst:.1e}; fixed points transported {transported}/{runs}, \
             max target residual {worst_fp:.1e}"
        ),
    )
}

fn criterion8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let (mut worst_h, mut worst_d) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let extra = rng.gen_range(0..=1).min(n * (n - 1) / 2 - (n - 1));
        let base = random_cyclic_spec(&mut rng, n, extra, 2);
        let var = rng.gen_range(0..n);
        let mut domains: Vec<usize> = base.variables().iter().map(|v| v.1).collect();
        domains[var] = 4;
        let edges: Vec<(usize, usize)> = base
            .regions()
            .iter()
            .filter(|r| r.len() == 2)
            .map(|r| (r[0], r[1]))
            .collect();
        let spec = GraphicalSpec::pairwise(&domains, &edges).unwrap();
        let (mid, phi) = bin_variable(&spec, var, &[0, 1, 2, 2]).unwrap();
        let (_, psi) = bin_variable(&mid, var, &[0, 1, 1]).unwrap();
        let chain = phi.compose(&psi).unwrap();

        let h = random_hamiltonians(&mut rng, phi.source(), 1.0);
        let direct = chain.push_hamiltonian(&h).unwrap();
        let stepwise = psi.push_hamiltonian(&phi.push_hamiltonian(&h).unwrap()).unwrap();
        worst_h = worst_h.max(sup_diff(direct.bundle(), stepwise.bundle()));

        let wf = random_weights(&mut rng, phi.source());
        let wm = random_weights(&mut rng, psi.source());
        let wg = random_weights(&mut rng, psi.target());
        for _ in 0..10 {
            let l = random_messages(&mut rng, psi.target(), -1.0, 1.0);
            let whole = chain.transported_delta(&h, &wf, &wg, &l);
            let inner = phi.transported_delta(&h, &wf, &wm, &psi.lift_messages(&wm, &wg, &l));
            let nested = psi.push_messages(&inner);
            worst_d = worst_d.max(whole.sup_distance(&nested));
        }
    }
    outcome(
        worst_h < 1e-12 && worst_d < 1e-10,
        format!("20 chained binnings, max pushed-energy gap {worst_h:.1e}, transported-increment gap {worst_d:.1e}"),
    )
}

fn criterion9(s: &Shared) -> Outcome {
    let mut worst_bp_to_mp = 0.0f64;
    let mut worst_mp_to_bp = 0.0f64;
    let mut tree_pairs = 0;
    for ((t, b), m) in s.trees.iter().zip(&s.tree_bp).zip(&s.tree_mp) {
        let w = t.ones();
        if b.converged {
            let l = transfer_bp_to_mp(&t.f, &t.h, &w, &b.state.log_messages);
            worst_bp_to_mp = worst_bp_to_mp.max(delta_mp(&t.f, &t.h, &w, &l).sup_norm());
            tree_pairs += 1;
        }
        if m.converged {
            worst_mp_to_bp = worst_mp_to_bp.max(bp_defect(&t.f, &t.h, &transfer_mp_to_bp(&m.messages)));
            tree_pairs += 1;
        }
    }
    let (pairwise, wheels) = cyclic_instances(SEED + 90);
    let mut cyclic = 0;
    let mp_opts = MpOptions::default();
    for inst in &pairwise {
        let w = inst.ones();
        let b = bp_run(&inst.f, &inst.h, &BpOptions::default()).unwrap();
        if !b.converged {
            continue;
        }
        let l = transfer_bp_to_mp(&inst.f, &inst.h, &w, &b.state.log_messages);
        let r = delta_mp(&inst.f, &inst.h, &w, &l).sup_norm();
        worst_bp_to_mp = worst_bp_to_mp.max(r);
        // The transferred state is an MP fixed point: rerunning stops at once.
        let rerun = mp_run_from(&inst.f, &inst.h, &w, l.clone(), &MpOptions { tol: 1e-6, ..mp_opts }).unwrap();
        if rerun.converged && rerun.iterations == 0 {
            worst_mp_to_bp = worst_mp_to_bp.max(bp_defect(&inst.f, &inst.h, &transfer_mp_to_bp(&rerun.messages)));
            cyclic += 1;
        }
    }
    for inst in &wheels {
        let w = inst.ones();
        let b = bp_run(&inst.f, &inst.h, &wheel_bp_options()).unwrap();
        let m = mp_run(&inst.f, &inst.h, &w, &mp_opts).unwrap();
        if !(b.converged && m.converged) {
            continue;
        }
        let l = transfer_bp_to_mp(&inst.f, &inst.h, &w, &b.state.log_messages);
        worst_bp_to_mp = worst_bp_to_mp.max(delta_mp(&inst.f, &inst.h, &w, &l).sup_norm());
        worst_mp_to_bp = worst_mp_to_bp.max(bp_defect(&inst.f, &inst.h, &transfer_mp_to_bp(&m.messages)));
        cyclic += 1;
    }
    outcome(
        worst_bp_to_mp < 1e-6 && worst_mp_to_bp < 1e-6 && cyclic >= 20,
        format!(
            "{tree_pairs} tree runs, {cyclic} cyclic instances; max residual bp->mp {worst_bp_to_mp:.1e}, \
             mp->bp {worst_mp_to_bp:.1e}"
        ),
    )
}

fn criterion10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (nx, ny) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let mut joint: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(0.01..1.0)).collect();
        let z: f64 = joint.iter().sum();
        joint.iter_mut().for_each(|x| *x /= z);
        let y = rng.gen_range(0..ny);
        worst = worst.max(oracle::variational_identity_check(&joint, nx, ny, y).unwrap());
    }
    outcome(worst < 1e-12, format!("50 joints, max residual {worst:.1e}"))
}


fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn criterion11() -> Outcome {
    let root = models();
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("golden.json")).unwrap()).unwrap();
    let (mut identical, mut total) = (0, 0);
    let mut mismatched = Vec::new();
    for case in manifest.as_array().unwrap() {
        let name = case["name"].as_str().unwrap();
        let args: Vec<String> = case["args"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| a.as_str().unwrap().replace("{models}", &root.to_string_lossy()))
            .collect();
        let run = || Command::new(env!("CARGO_BIN_EXE_pmp")).args(&args).output().unwrap();
        let (a, b) = (run(), run());
        let golden = std::fs::read(root.join("golden").join(format!("{name}.json"))).unwrap_or_default();
        total += 1;
        if a.status.success() && a.stdout == b.stdout && a.stdout == golden {
            identical += 1;
        } else {
            mismatched.push(name.to_string());
        }
    }
    outcome(
        identical == total,
        format!("{identical}/{total} golden runs byte-identical{}", if mismatched.is_empty() {
            String::new()
        } else {
            format!(" (mismatch: {})", mismatched.join(", "))
        }),
    )
}

fn main() {
    // Run under `cargo test`; skip when only listing tests.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = Vec::new();
    let mut report = |id: u32, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let t = start.elapsed();
        let in_time = limit.map_or(true, |l| t <= l);
        let pass = o.pass && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        println!(
            "criterion {id:>2}: {} - {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            t.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    };
    report(1, Some(Duration::from_secs(5)), &mut criterion1);
    let start = Instant::now();
    let s = shared();
    let shared_time = start.elapsed();
    report(2, Some(Duration::from_secs(30)), &mut || {
        let mut o = criterion2(&s);
        o.detail.push_str(&format!("; runs took {:.2}s", shared_time.as_secs_f64()));
        o.pass &= shared_time <= Duration::from_secs(30);
        o
    });
    report(3, None, &mut || criterion3(&s));
    report(4, None, &mut || criterion4(&s));
    report(5, Some(Duration::from_secs(60)), &mut criterion5);
    report(6, None, &mut criterion6);
    report(7, None, &mut criterion7);
    report(8, None, &mut criterion8);
    report(9, None, &mut || criterion9(&s));
    report(10, None, &mut criterion10);
    report(11, None, &mut criterion11);
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
