//! Acceptance criteria. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line with its runtime.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use valfun_core::battery::{instance, instances, queries, random_kkt_instance, Family};
use valfun_core::coderiv::{check_cq_lambda, coderivative_lambda, mho, Flavor, ThetaCase, DEFAULT_BRANCH_CAP};
use valfun_core::firstorder::first_order;
use valfun_core::hessian::{hessian, lp_lhs_data, lp_lhs_hessian, HessianOptions};
use valfun_core::kernel::{check_licq, check_mfcq, multipliers, rational_to_string, solve_value, SolveOptions};
use valfun_core::lp::{LinearProgram, LpOutcome};
use valfun_core::oracle::{fd_hessian, lp_lhs_oracle, HESS_STEP};
use valfun_core::report::{verify, CheckStatus};
use valfun_core::{ConvexHull, KktPoint, Tolerances};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn danskin() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let so = SolveOptions::default();
    let tol = Tolerances::default();
    let names = ["sq_fit", "tracked_quadratic", "box_projection_2d", "bilinear_box", "lp_square"];
    let mut worst: f64 = 0.0;
    for name in names {
        let p = instance(name).unwrap().problem;
        ensure(p.g_independent_of_x() && p.n <= 2 && p.m <= 2, || format!("{} is not a curated instance", name))?;
        let spec = p.points.values().next().unwrap();
        let sol = solve_value(&p, &spec.x, &so).map_err(|e| e.to_string())?;
        let gens: Vec<Vec<f64>> = first_order(&p, &sol, &tol)
            .map_err(|e| e.to_string())?
            .generators
            .into_iter()
            .map(|g| g.value)
            .collect();
        for _ in 0..20 {
            let d: Vec<f64> = (0..p.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // forward differences with one Richardson step
            let phi_at = |h: f64| -> f64 {
                let x: Vec<f64> = spec.x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
                solve_value(&p, &x, &so).unwrap().value
            };
            let h = 1e-5;
            let d1 = (phi_at(h) - sol.value) / h;
            let d2 = (phi_at(h / 2.0) - sol.value) / (h / 2.0);
            let fd = 2.0 * d2 - d1;
            let best = gens
                .iter()
                .map(|g| g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((fd - best).abs());
            ensure((fd - best).abs() <= 5e-4, || format!("{}: fd {} vs min {}", name, fd, best))?;
        }
    }
    Ok(format!("5 instances x 20 directions, worst gap {:.1e}", worst))
}

fn equality_collapse() -> Outcome {
    let opts = HessianOptions::default();
    let mut seen = BTreeSet::new();
    for bq in queries().map_err(|e| e.to_string())? {
        if matches!(bq.family, Family::LpLhs | Family::LpLhsRhs) {
            continue;
        }
        let p = instance(bq.instance).unwrap().problem;
        let v = verify(&p, &bq.query, &opts).map_err(|e| e.to_string())?;
        let status = |n: &str| v.checks.iter().find(|c| c.name == n).map(|c| c.status);
        let (Some(collapse), Some(sens)) = (status("equality-collapse"), status("sensitivity-vs-tracking")) else {
            continue;
        };
        if sens == CheckStatus::Skipped {
            continue;
        }
        ensure(collapse == CheckStatus::Pass && sens == CheckStatus::Pass, || {
            format!("{}:{} {:?}", bq.instance, bq.point, v.checks)
        })?;
        seen.insert(bq.instance);
    }
    ensure(seen.len() >= 5, || format!("only {} strictly complementary instances: {:?}", seen.len(), seen))?;
    Ok(format!("{} instances: {:?}", seen.len(), seen))
}

fn fd_inclusion() -> Outcome {
    let opts = HessianOptions::default();
    let all = queries().map_err(|e| e.to_string())?;
    let families: BTreeSet<String> = all.iter().map(|q| format!("{:?}", q.family)).collect();
    let names: BTreeSet<&str> = all.iter().map(|q| q.instance).collect();
    ensure(names.len() >= 15, || format!("battery has {} instances", names.len()))?;
    let (mut stable, mut violations) = (0, Vec::new());
    for bq in &all {
        let p = instance(bq.instance).unwrap().problem;
        let est = hessian(&p, &bq.query, &opts).map_err(|e| e.to_string())?;
        let fd = fd_hessian(&p, &bq.query.xbar, HESS_STEP, &opts.solve).map_err(|e| e.to_string())?;
        if !fd.stable {
            continue;
        }
        stable += 1;
        let hv = fd.hessian_times(&bq.query.xstar);
        if !est.result.member(&hv, 1e-3).in_closure() {
            violations.push(format!("{}:{}", bq.instance, bq.point));
        }
    }
    ensure(violations.is_empty(), || format!("violations at {:?}", violations))?;
    Ok(format!(
        "{} queries on {} instances, {} FD-stable, 0 violations; families {:?}",
        all.len(),
        names.len(),
        stable,
        families
    ))
}

fn lp_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = HessianOptions::default();
    let names = ["lp_interval", "lp_square", "lp_triangle", "lp_diamond", "lp_cube"];
    let mut compared = 0;
    for name in names {
        let p = instance(name).unwrap().problem;
        let (a, b) = lp_lhs_data(&p).map_err(|e| e.to_string())?;
        let mut interior = 0;
        for (pname, spec) in &p.points {
            // only points inside a linearity region, i.e. with a unique optimal vertex
            let sol = solve_value(&p, &spec.x, &SolveOptions::default()).map_err(|e| e.to_string())?;
            if !sol.singleton {
                continue;
            }
            interior += 1;
            let q = valfun_core::battery::point_query(&p, pname).map_err(|e| e.to_string())?;
            let est = lp_lhs_hessian(&a, &b, &q, &opts).map_err(|e| e.to_string())?;
            let zero = vec![0.0; p.n];
            ensure(est.result.singleton_value(0.0).as_deref() == Some(&zero[..]), || {
                format!("{}:{} is not exactly {{0}}", name, pname)
            })?;
        }
        ensure(interior > 0, || format!("{} has no linearity-region point", name))?;
        for _ in 0..100 {
            // dyadic parameters are exact in binary floating point
            let x: Vec<f64> = (0..p.n).map(|_| rng.gen_range(-32i32..=32) as f64 / 8.0).collect();
            let oracle = lp_lhs_oracle(&a, &b, &x).map_err(|e| e.to_string())?;
            let sol = solve_value(&p, &x, &SolveOptions::default()).map_err(|e| e.to_string())?;
            let want = rational_to_string(&oracle.value);
            ensure(sol.exact_value.as_deref() == Some(want.as_str()), || {
                format!("{} at {:?}: solver {:?} vs oracle {}", name, x, sol.exact_value, want)
            })?;
            compared += 1;
        }
    }
    Ok(format!("5 instances return exactly {{0}}; {} rational values agree", compared))
}

fn branch_families() -> Outcome {
    let mut thetas = Vec::new();
    for seed in 0..10u64 {
        let theta = (seed % 5) as usize;
        let (p, kkt) = random_kkt_instance(seed, 2, 1, theta, 1).map_err(|e| e.to_string())?;
        thetas.push(kkt.partition.theta.len());
        let jy = p.jac_y_g(&kkt.x, &kkt.y).map_err(|e| e.to_string())?;
        let m = p.m;
        let e = |a: &[f64], i: usize| (0..m).map(|k| jy[(i, k)] * a[k]).sum::<f64>();
        let zero = vec![0.0; p.p()];
        let mut fams = Vec::new();
        for flavor in [Flavor::M, Flavor::C] {
            let fam = mho(&p, &kkt, &zero, flavor, 16).map_err(|e| e.to_string())?;
            ensure(fam.contains_origin(1e-12), || format!("seed {}: origin missing", seed))?;
            for br in &fam.branches {
                let v = br.poly.vertices().map_err(|e| e.to_string())?;
                for z in &v.vertices {
                    let (a, c) = z.split_at(m);
                    let ok = kkt.partition.nu.iter().all(|&i| e(a, i).abs() < 1e-7)
                        && kkt.partition.eta.iter().all(|&i| c[i].abs() < 1e-7)
                        && br.cases.iter().all(|&(i, case)| match case {
                            ThetaCase::CZero => c[i].abs() < 1e-7,
                            ThetaCase::ExprZero => e(a, i).abs() < 1e-7,
                            ThetaCase::BothPositive | ThetaCase::BothNonneg => e(a, i) >= -1e-7 && c[i] >= -1e-7,
                            ThetaCase::BothNonpos => e(a, i) <= 1e-7 && c[i] <= 1e-7,
                        });
                    ensure(ok, || format!("seed {}: vertex {:?} breaks {}", seed, z, br.label()))?;
                }
            }
            fams.push(fam);
        }
        // M inside C, checked on each sign orthant of the degenerate pairs
        let k = p.m + p.p();
        let theta_idx = &kkt.partition.theta;
        for mb in &fams[0].branches {
            for mask in 0u32..(1 << (2 * theta_idx.len())) {
                let mut piece = mb.poly.clone();
                for (t, &i) in theta_idx.iter().enumerate() {
                    let se = if mask & (1 << (2 * t)) != 0 { 1.0 } else { -1.0 };
                    let sc = if mask & (1 << (2 * t + 1)) != 0 { 1.0 } else { -1.0 };
                    let mut erow = vec![0.0; k];
                    for j in 0..m {
                        erow[j] = -se * jy[(i, j)];
                    }
                    piece.add_leq(erow, 0.0);
                    let mut crow = vec![0.0; k];
                    crow[m + i] = -sc;
                    piece.add_leq(crow, 0.0);
                }
                if piece.is_empty() {
                    continue;
                }
                ensure(fams[1].branches.iter().any(|cb| piece.is_subset_of(&cb.poly, 1e-9)), || {
                    format!("seed {}: {} not inside the C family", seed, mb.label())
                })?;
            }
        }
    }
    Ok(format!("10 KKT points, |theta| = {:?}", thetas))
}

fn cq_logic() -> Outcome {
    let tol = Tolerances::default();
    let so = SolveOptions::default();
    let (mut points, mut licq_points, mut holala) = (0, 0, 0);
    for inst in instances() {
        let p = &inst.problem;
        for spec in p.points.values() {
            for shift in [-0.05, 0.0, 0.05] {
                let x: Vec<f64> = spec.x.iter().map(|v| v + shift).collect();
                let Ok(sol) = solve_value(p, &x, &so) else { continue };
                for y in &sol.minimizers {
                    points += 1;
                    let licq = check_licq(p, &x, y, &tol).map_err(|e| e.to_string())?;
                    let mfcq = check_mfcq(p, &x, y, &tol).map_err(|e| e.to_string())?;
                    if licq.holds {
                        licq_points += 1;
                        ensure(mfcq.holds, || format!("{} at {:?}: LICQ without MFCQ", inst.name, x))?;
                    }
                }
            }
        }
    }
    let mut check_point = |name: &str, p: &valfun_core::ParametricProblem, kkt: &KktPoint| -> Result<(), String> {
        let cq = check_cq_lambda(p, kkt, Flavor::M, DEFAULT_BRANCH_CAP).map_err(|e| e.to_string())?;
        if !cq.image_vanishes {
            return Ok(());
        }
        holala += 1;
        let d = coderivative_lambda(p, kkt, &vec![0.0; p.p()], Flavor::M, DEFAULT_BRANCH_CAP).map_err(|e| e.to_string())?;
        let origin = vec![0.0; p.n + p.m];
        ensure(d.result.singleton_value(0.0).as_deref() == Some(&origin[..]), || {
            format!("{}: D*Lambda(0) is not exactly the origin", name)
        })
    };
    for bq in queries().map_err(|e| e.to_string())? {
        let p = instance(bq.instance).unwrap().problem;
        let sol = solve_value(&p, &bq.query.xbar, &so).map_err(|e| e.to_string())?;
        let y = &sol.minimizers[0];
        let mp = multipliers(&p, &bq.query.xbar, y, &tol, false).map_err(|e| e.to_string())?;
        if let Some(u) = mp.vertices.first() {
            let kkt = KktPoint::new(&p, &bq.query.xbar, y, u, &tol).map_err(|e| e.to_string())?;
            check_point(bq.instance, &p, &kkt)?;
        }
    }
    for seed in 0..10u64 {
        let (p, kkt) = random_kkt_instance(seed, 2, 1, (seed % 3) as usize, 1).map_err(|e| e.to_string())?;
        check_point(&p.name.clone(), &p, &kkt)?;
    }
    // Cost flat in y with slack bounds: the multiplier map is locally the
    // constant 0, so the qualification holds.
    for x in [-0.5, 0.0, 0.7] {
        let p = valfun_core::ParametricProblem::from_strings("flat", 1, 1, "x1^2", &["y1 - 1", "-y1 - 1"]).map_err(|e| e.to_string())?;
        let kkt = KktPoint::new(&p, &[x], &[0.25], &[0.0, 0.0], &tol).map_err(|e| e.to_string())?;
        check_point("flat", &p, &kkt)?;
    }
    ensure(holala > 0, || "no point satisfied the multiplier-map qualification".into())?;
    Ok(format!(
        "{} feasible points ({} with LICQ); {} qualified points give D*Lambda(0) = {{0}}",
        points, licq_points, holala
    ))
}

fn homogeneity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = HessianOptions::default();
    let mut samples = 0;
    let scales = [0.25, 3.0];
    for bq in queries().map_err(|e| e.to_string())? {
        let p = instance(bq.instance).unwrap().problem;
        let base = hessian(&p, &bq.query, &opts).map_err(|e| e.to_string())?;
        for &t in &scales {
            let mut q = bq.query.clone();
            q.xstar = q.xstar.iter().map(|v| t * v).collect();
            let scaled = hessian(&p, &q, &opts).map_err(|e| e.to_string())?;
            ensure(base.is_empty() == scaled.is_empty(), || format!("{}:{} emptiness changes", bq.instance, bq.point))?;
            for s in base.result.sample(&mut rng, 25) {
                let ts: Vec<f64> = s.iter().map(|v| t * v).collect();
                ensure(scaled.result.member(&ts, 1e-9 * (1.0 + t)).in_closure(), || {
                    format!("{}:{} t = {}", bq.instance, bq.point, t)
                })?;
                samples += 1;
            }
        }
    }
    for seed in 0..8u64 {
        let (p, kkt) = random_kkt_instance(seed, 2, 1, (seed % 4) as usize, 1).map_err(|e| e.to_string())?;
        let ustar: Vec<f64> = (0..p.p()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base = coderivative_lambda(&p, &kkt, &ustar, Flavor::M, DEFAULT_BRANCH_CAP).map_err(|e| e.to_string())?;
        for &t in &scales {
            let us: Vec<f64> = ustar.iter().map(|v| t * v).collect();
            let scaled = coderivative_lambda(&p, &kkt, &us, Flavor::M, DEFAULT_BRANCH_CAP).map_err(|e| e.to_string())?;
            ensure(base.result.is_empty_union() == scaled.result.is_empty_union(), || format!("seed {}: emptiness changes", seed))?;
            for s in base.result.sample(&mut rng, 25) {
                let ts: Vec<f64> = s.iter().map(|v| t * v).collect();
                ensure(scaled.result.member(&ts, 1e-9 * (1.0 + t)).in_closure(), || format!("seed {} t = {}", seed, t))?;
                samples += 1;
            }
        }
    }
    Ok(format!("{} scaled memberships, tol 1e-9", samples))
}

fn caratheodory() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut inside, mut max_support) = (0, 0);
    for k in 0..200 {
        let dim = 2 + k % 2;
        let npts = rng.gen_range(dim + 1..=10);
        let pts: Vec<Vec<f64>> = (0..npts).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hull = ConvexHull::new(pts.clone());
        let mut lp = LinearProgram::new(npts);
        lp.nonneg = vec![true; npts];
        lp.eq(vec![1.0; npts], 1.0);
        for d in 0..dim {
            lp.eq(pts.iter().map(|p| p[d]).collect(), q[d]);
        }
        let oracle = matches!(lp.solve(), LpOutcome::Optimal { .. });
        match hull.certify(&q) {
            Some(cert) => {
                ensure(oracle, || format!("query {} certified but the LP says outside", k))?;
                ensure(cert.indices.len() <= dim + 1, || format!("query {}: {} supports", k, cert.indices.len()))?;
                let combo: Vec<f64> = (0..dim)
                    .map(|d| cert.indices.iter().zip(&cert.weights).map(|(&i, w)| w * pts[i][d]).sum())
                    .collect();
                ensure(max_diff(&combo, &q) < 1e-8, || format!("query {}: weights miss the point", k))?;
                max_support = max_support.max(cert.indices.len());
                inside += 1;
            }
            None => ensure(!oracle, || format!("query {}: LP finds a combination the hull missed", k))?,
        }
    }
    Ok(format!("200 queries, {} inside, at most {} supports", inside, max_support))
}

fn determinism() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/battery");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let run = |f: &PathBuf| {
        Command::new(env!("CARGO_BIN_EXE_valfun"))
            .args(["report", "--problem", f.to_str().unwrap(), "--json", "-"])
            .output()
            .expect("binary runs")
    };
    let mut bytes = 0;
    for f in &files {
        let (a, b) = (run(f), run(f));
        ensure(!a.stdout.is_empty(), || format!("{}: no output", f.display()))?;
        ensure(a.stdout == b.stdout && a.status.code() == b.status.code(), || {
            format!("{}: runs differ", f.display())
        })?;
        bytes += a.stdout.len();
    }
    Ok(format!("{} problem files, {} bytes identical across two runs", files.len(), bytes))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 Danskin consistency", danskin, Duration::from_secs(10)),
        ("2 equality collapse", equality_collapse, Duration::from_secs(30)),
        ("3 FD-inclusion soundness", fd_inclusion, Duration::from_secs(120)),
        ("4 LP exactness", lp_exactness, Duration::from_secs(30)),
        ("5 branch families", branch_families, Duration::from_secs(10)),
        ("6 CQ logic", cq_logic, Duration::from_secs(10)),
        ("7 homogeneity", homogeneity, Duration::from_secs(20)),
        ("8 Caratheodory hull", caratheodory, Duration::from_secs(10)),
        ("9 determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > budget => Err(format!("{} (over the {:?} budget)", msg, budget)),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS  {:<26} {:>8.2?}  {}", name, took, msg),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {:<26} {:>8.2?}  {}", name, took, msg);
            }
        }
    }
    if failed > 0 {
        println!("{} of 9 criteria failed", failed);
        std::process::exit(1);
    }
}
