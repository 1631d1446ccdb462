//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ambqc::bounds::{
    hoeffding_log_bound, lemma_r_log_bound, levy_log_tail, sampling_log_bound, thm1_log_bound, thm2_log_bound,
};
use ambqc::engine::{
    build_accepting_operator, enumerate_histories, enumerate_histories_with, estimate_acceptance, exact_acceptance,
    mixed_acceptance, DecisionTree, KrausRule, Source,
};
use ambqc::experiments::{compare_with_bounds, run_experiment_with, ExperimentConfig, RunOptions, TailReport};
use ambqc::families::{random_complete_instance, table_from_choices, PovmChoice};
use ambqc::randstates::{
    dense_r_operator, estimate_geometric_entanglement, sample_haar_state, sample_schmidt_state, LocalMeasure,
    SchmidtEnsembleSpec,
};
use ambqc::statevector::LocalOperator;
use ambqc::{Complex, InstanceF64, PovmTableF64, PureStateF64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

include!("../../core/tests/oracle/bounds_table.rs");

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_config(name: &str) -> TailReport {
    let path = root().join("configs").join(name);
    let config = ExperimentConfig::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let options = RunOptions {
        base_dir: path.parent().map(Path::to_path_buf),
        workers: None,
    };
    run_experiment_with(&config, &options).unwrap()
}

fn random_two_outcome_table(rng: &mut ChaCha20Rng) -> PovmTableF64 {
    let len = [1usize, 2, 4][rng.random_range(0..3)];
    let choices: Vec<PovmChoice> = (0..len)
        .map(|_| match rng.random_range(0..4) {
            0 => PovmChoice::named("z"),
            1 => PovmChoice::named("x"),
            2 => PovmChoice::named("y"),
            _ => PovmChoice {
                name: "basis".into(),
                params: vec![rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI)],
            },
        })
        .collect();
    table_from_choices(&choices).unwrap()
}

/// The 50 random complete instances shared by criteria 1 and 2.
fn generated_instances() -> Vec<InstanceF64> {
    let mut rng = ChaCha20Rng::seed_from_u64(0xA11CE);
    (0..50)
        .map(|_| {
            let q = rng.random_range(2..=6);
            let gates = rng.random_range(4..=40);
            let table = random_two_outcome_table(&mut rng);
            random_complete_instance(q, gates, table, &mut rng).unwrap()
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (mut within, mut agree) = (0, 0);
    for inst in generated_instances() {
        ensure(inst.q() <= 6 && inst.circuit.v() <= 40, || "generator out of range".into())?;
        let state: PureStateF64 = sample_haar_state(inst.q(), &mut rng).unwrap();
        let exact = exact_acceptance(&inst, Source::State(&state)).unwrap();
        let ops = build_accepting_operator(&inst).unwrap();
        if (ops.acceptance(&state).unwrap() - exact).abs() <= 1e-10 {
            agree += 1;
        }
        let est = estimate_acceptance(&inst, Source::State(&state), 20_000, &mut rng).unwrap();
        let sigma = (exact * (1.0 - exact) / 20_000.0).sqrt();
        if (est.p_hat - exact).abs() <= 4.0 * sigma.max(1e-12) {
            within += 1;
        }
    }
    ensure(within >= 47, || format!("only {within}/50 Monte Carlo estimates within 4 stderr"))?;
    ensure(agree == 50, || format!("enumeration and operator agree on {agree}/50"))?;
    Ok(format!("{within}/50 within 4 stderr, {agree}/50 exact agreement"))
}

fn operator_contracts() -> Outcome {
    let (mut worst_res, mut worst_spec, mut worst_mixed) = (0.0f64, 0.0f64, 0.0f64);
    for inst in generated_instances() {
        let ops = build_accepting_operator(&inst).unwrap();
        worst_res = worst_res.max(ops.resolution_error());
        for e in ops.accept.eigenvalues().unwrap() {
            worst_spec = worst_spec.max(-e).max(e - 1.0);
        }
        let tree = DecisionTree::build(&inst).unwrap();
        worst_mixed = worst_mixed.max((mixed_acceptance(&tree, &inst).unwrap() - ops.mixed_acceptance()).abs());
    }
    ensure(worst_res <= 1e-10, || format!("|P + Q - 1| = {worst_res:e}"))?;
    ensure(worst_spec <= 1e-10, || format!("spectrum leaves [0, 1] by {worst_spec:e}"))?;
    ensure(worst_mixed <= 1e-12, || format!("mixed acceptance vs tr P / 2^q differ by {worst_mixed:e}"))?;
    Ok(format!(
        "max |P+Q-1| = {worst_res:.1e}, spectrum excess {worst_spec:.1e}, mixed mismatch {worst_mixed:.1e}"
    ))
}

fn random_unitary(rng: &mut ChaCha20Rng) -> LocalOperator<f64> {
    let axis = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)];
    let phase = Complex::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
    let mut u = LocalOperator::rotation(rng.random_range(0.0..2.0 * PI), axis);
    for row in u.m.iter_mut() {
        for z in row.iter_mut() {
            *z *= phase;
        }
    }
    u
}

fn kraus_invariance() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = rng.random_range(2..=5);
        let gates = rng.random_range(4..=30);
        let table = random_two_outcome_table(&mut rng);
        let inst: InstanceF64 = random_complete_instance(q, gates, table, &mut rng).unwrap();
        let state: PureStateF64 = sample_haar_state(q, &mut rng).unwrap();
        let rotated: Vec<Vec<LocalOperator<f64>>> = inst
            .povm_table
            .povms()
            .iter()
            .map(|p| (0..p.arity()).map(|_| random_unitary(&mut rng)).collect())
            .collect();
        let a = enumerate_histories(&inst, Source::State(&state)).unwrap().as_map();
        let b = enumerate_histories_with(&inst, Source::State(&state), &KrausRule::Rotated(rotated))
            .unwrap()
            .as_map();
        ensure(a.len() == b.len(), || "history sets differ".into())?;
        for (h, p) in &a {
            worst = worst.max((p - b.get(h).copied().unwrap_or(f64::INFINITY)).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("history probabilities differ by {worst:e}"))?;
    Ok(format!("20 instances, max difference {worst:.1e}"))
}

fn schmidt_machinery() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let (mut spec_err, mut trace_err, mut norm_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let q = rng.random_range(1..=8);
        let rank = rng.random_range(1..=16);
        let spec = SchmidtEnsembleSpec {
            q,
            rank,
            local_measure: LocalMeasure::Haar,
            seed: 0,
        };
        let s = sample_schmidt_state::<f64, _>(&spec, &mut rng).unwrap();
        let mut dense = dense_r_operator(&s.locals).unwrap().eigenvalues().unwrap();
        dense.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (i, d) in dense.iter().enumerate() {
            let g = s.eigenvalues.get(i).copied().unwrap_or(0.0);
            spec_err = spec_err.max((d - g).abs());
        }
        trace_err = trace_err.max((s.trace_r() - rank as f64).abs());
        norm_err = norm_err.max((s.realize().unwrap().norm_sqr().sqrt() - 1.0).abs());
    }
    let mut fid_err = 0.0f64;
    for q in 1..=8 {
        let spec = SchmidtEnsembleSpec {
            q,
            rank: 1,
            local_measure: LocalMeasure::Haar,
            seed: 0,
        };
        let s = sample_schmidt_state::<f64, _>(&spec, &mut rng).unwrap();
        let phi = s.locals.product_state(0).unwrap();
        let f = phi.inner(&s.realize().unwrap()).unwrap().norm_sqr() / phi.norm_sqr();
        fid_err = fid_err.max((f - 1.0).abs());
    }
    ensure(spec_err <= 1e-9, || format!("spectra differ by {spec_err:e}"))?;
    ensure(trace_err <= 1e-12, || format!("tr G - K = {trace_err:e}"))?;
    ensure(norm_err <= 1e-12, || format!("norm error {norm_err:e}"))?;
    ensure(fid_err <= 1e-12, || format!("rank-1 fidelity error {fid_err:e}"))?;
    Ok(format!(
        "spectra {spec_err:.1e}, tr G {trace_err:.1e}, norm {norm_err:.1e}, rank-1 fidelity {fid_err:.1e}"
    ))
}

fn purity_mean() -> Outcome {
    let r = run_config("purity.json");
    let (mean, expected, z) = (r.summary["mean"], r.summary["expected_mean"], r.summary["z_score"]);
    ensure((expected - (8.0 + 56.0 / 1024.0)).abs() < 1e-12, || format!("expected mean {expected}"))?;
    ensure(r.trials.len() == 1000, || "wrong trial count".into())?;
    ensure(z.abs() <= 5.0, || format!("mean {mean} is {z:.2} stderr from {expected}"))?;
    Ok(format!("mean {mean:.5} vs {expected:.5} ({z:+.2} stderr)"))
}

fn rank_and_hoeffding_probes() -> Outcome {
    let lemma = run_config("lemma-r.json");
    let row = &lemma.rows[0];
    let ln = row.bound.map(|b| b.ln).unwrap_or(f64::NAN);
    ensure(row.threshold == 512.0 && lemma.trials.len() == 200, || "lemma-r config mismatch".into())?;
    ensure(row.exceedances == 0, || format!("{} of 200 exceed 512", row.exceedances))?;
    ensure((ln + 78.4).abs() < 0.01, || format!("bound ln = {ln}"))?;

    let hoeff = run_config("hoeffding.json");
    ensure(hoeff.trials.len() == 10_000, || "hoeffding config mismatch".into())?;
    let at = hoeff
        .rows
        .iter()
        .find(|r| (r.threshold - 0.1).abs() < 1e-15)
        .ok_or("no eps = 0.1 row")?;
    let bound = at.bound.unwrap().probability;
    ensure(at.frequency <= 1.19e-2, || format!("tail {} above 1.19e-2", at.frequency))?;
    ensure((bound - 1.19e-2).abs() < 1e-4, || format!("bound {bound}"))?;
    let cmp = compare_with_bounds(&hoeff).unwrap();
    ensure(cmp.iter().all(|r| !r.violation && r.ci_lower <= r.bound_probability.unwrap()), || {
        "a lower CP limit exceeds the bound".into()
    })?;
    Ok(format!(
        "max ||R|| = {:.3} (0/200 above 512, ln bound {ln:.2}); hoeffding tail {}/{} at eps 0.1 vs {bound:.3e}",
        lemma.summary["max"], at.exceedances, at.successful_trials
    ))
}

fn haar_scaling() -> Outcome {
    let small = run_config("haar-q8.json");
    let large = run_config("haar-q12.json");
    let ratio = small.summary["value_std"] / large.summary["value_std"];
    ensure((2.5..=6.5).contains(&ratio), || format!("std ratio {ratio}"))?;
    for r in [&small, &large] {
        let z = r.summary["value_z_score"];
        ensure(z.abs() <= 5.0, || format!("mean acceptance {z:.2} stderr from tr P / 2^q"))?;
        ensure(r.trials.len() == 2000, || "wrong trial count".into())?;
    }
    Ok(format!(
        "std {:.5} -> {:.5}, ratio {ratio:.3}; z-scores {:+.2}, {:+.2}",
        small.summary["value_std"], large.summary["value_std"], small.summary["value_z_score"], large.summary["value_z_score"]
    ))
}

fn ambqc(args: &[&str], threads: Option<&str>) -> (i32, Vec<u8>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ambqc"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("AMBQC_THREADS", t),
        None => cmd.env_remove("AMBQC_THREADS"),
    };
    let out = cmd.output().expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn surrogate_correctness() -> Outcome {
    let mut detail = vec![];
    for name in ["surrogate-parity.json", "surrogate-trine.json"] {
        let r = run_config(name);
        let p = r.summary["chi_square_p_value"];
        ensure(p > 1e-3, || format!("{name}: chi-square p = {p}"))?;
        detail.push(format!("p = {p:.3}"));
    }
    let parity = root().join("instances/parity.json");
    let (code, out) = ambqc(
        &["run", "--instance", parity.to_str().unwrap(), "--mixed", "-N", "100000", "--seed", "7", "--format", "json"],
        None,
    );
    ensure(code == 0, || format!("run exited with {code}"))?;
    let est: ambqc::engine::AcceptanceEstimate = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let z = (est.p_hat - 0.5) / est.stderr;
    ensure(z.abs() <= 4.0, || format!("parity acceptance {} is {z:.2} stderr from 1/2", est.p_hat))?;
    Ok(format!("chi-square {}; parity p = {:.4} ({z:+.2} stderr)", detail.join(", "), est.p_hat))
}

fn evaluate_bound(name: &str, a: &[f64]) -> f64 {
    let u = |x: f64| x as u64;
    let small = |x: f64| x as u32;
    match name {
        "levy" => levy_log_tail(a[0], a[1], a[2]),
        "thm1" => thm1_log_bound(a[0], small(a[1]), u(a[2]), u(a[3])),
        "sampling" => sampling_log_bound(a[0], small(a[1]), u(a[2]), u(a[3]), small(a[4])),
        "thm2" => thm2_log_bound(a[0], small(a[1]), u(a[2]), u(a[3]), u(a[4])),
        "lemma_r" => lemma_r_log_bound(small(a[0]), u(a[1]), small(a[2])),
        "hoeffding" => hoeffding_log_bound(a[0], u(a[1])),
        other => panic!("unknown evaluator {other}"),
    }
    .unwrap()
    .ln
}

fn bound_evaluators() -> Outcome {
    ensure(TABLE.len() == 30, || "table must have 30 points".into())?;
    let mut worst = 0.0f64;
    for (name, args, want) in TABLE {
        let want: f64 = want.parse().unwrap();
        worst = worst.max(((evaluate_bound(name, args) - want) / want).abs());
    }
    ensure(worst <= 1e-12, || format!("relative error {worst:e}"))?;
    let thm1 = thm1_log_bound(0.1, 30, 64, 100).unwrap().ln;
    ensure((thm1 / -3.224e4 - 1.0).abs() < 1e-3, || format!("thm1 = {thm1}"))?;
    Ok(format!("30 points, max relative error {worst:.1e}; thm1(q=30, w=64, v=100, 0.1) = {thm1:.1}"))
}

fn ghz(n: usize) -> PureStateF64 {
    let mut amps = vec![Complex::new(0.0, 0.0); 1 << n];
    amps[0] = Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[(1 << n) - 1] = amps[0];
    PureStateF64::new(amps).unwrap()
}

/// Brute-force best overlap over a grid of product states; one relative phase suffices for GHZ.
fn grid_overlap(state: &PureStateF64, steps: usize, phases: usize) -> f64 {
    let n = state.num_qubits();
    let mut best: f64 = 0.0;
    let mut idx = vec![0usize; n];
    loop {
        for ph in 0..phases {
            let phase = 2.0 * PI * ph as f64 / phases as f64;
            let factors: Vec<[Complex<f64>; 2]> = idx
                .iter()
                .enumerate()
                .map(|(l, &i)| {
                    let (s, c) = (FRAC_PI_2 * i as f64 / steps as f64).sin_cos();
                    [Complex::new(c, 0.0), Complex::from_polar(s, if l == 0 { phase } else { 0.0 })]
                })
                .collect();
            best = best.max(PureStateF64::product(&factors).inner(state).unwrap().norm_sqr());
        }
        let mut l = 0;
        while l < n {
            idx[l] += 1;
            if idx[l] <= steps {
                break;
            }
            idx[l] = 0;
            l += 1;
        }
        if l == n {
            return best;
        }
    }
}

fn geometric_entanglement() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut worst_product = 0.0f64;
    let mut monotone = true;
    for n in 1..=6 {
        let factors: Vec<[Complex<f64>; 2]> = (0..n).map(|_| LocalMeasure::Haar.sample(&mut rng)).collect();
        let est = estimate_geometric_entanglement(&PureStateF64::product(&factors), 4, 100, 1e-14, &mut rng).unwrap();
        worst_product = worst_product.max(est.eg_bits);
        monotone &= est.traces.iter().all(|t| t.overlaps.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
    ensure(worst_product <= 1e-6, || format!("product state E_g = {worst_product:e}"))?;
    let mut detail = vec![];
    for (n, steps) in [(3usize, 60usize), (4, 24)] {
        let s = ghz(n);
        let oracle = -grid_overlap(&s, steps, 8).log2();
        let est = estimate_geometric_entanglement(&s, 8, 200, 1e-12, &mut rng).unwrap();
        monotone &= est.traces.iter().all(|t| t.overlaps.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        ensure((oracle - 1.0).abs() <= 1e-3 && (est.eg_bits - oracle).abs() <= 1e-3, || {
            format!("GHZ({n}): estimate {} vs grid {oracle}", est.eg_bits)
        })?;
        detail.push(format!("GHZ({n}) {:.6} (grid {oracle:.6})", est.eg_bits));
    }
    ensure(monotone, || "an overlap trace decreased".into())?;
    Ok(format!("products <= {worst_product:.1e}; {}", detail.join(", ")))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let random = root().join("instances/random.json").to_str().unwrap().to_string();
    let configs: [(&str, &str); 3] = [
        (
            "single.json",
            r#"{"kind": "haar-concentration", "family": {"family": "sweep", "q": 6, "povms": [{"name": "x"}], "acceptance": "parity"}, "epsilons": [0.05], "trials": 1, "master_seed": 42}"#,
        ),
        (
            "schmidt.json",
            r#"{"kind": "schmidt-concentration", "family": {"family": "random-complete", "q": 6, "gates": 12, "povms": [{"name": "x"}, {"name": "y"}], "seed": 5}, "K": 64, "epsilons": [0.05, 0.1], "trials": 24, "master_seed": 43}"#,
        ),
        (
            "hoeffding.json",
            r#"{"kind": "hoeffding-tail", "family": {"family": "sweep", "q": 5, "povms": [{"name": "y"}], "acceptance": "even_parity"}, "K": 16, "epsilons": [0.1], "trials": 40, "master_seed": 44}"#,
        ),
    ];
    for (name, text) in configs {
        std::fs::write(p(name), text).map_err(|e| e.to_string())?;
    }

    let commands: Vec<Vec<String>> = vec![
        vec!["state", "haar", "--q", "5", "--seed", "5", "--out", &p("haar.bin")],
        vec!["state", "schmidt", "--q", "6", "--K", "8", "--seed", "5", "--out", &p("schmidt.bin"), "--factors", &p("f.json")],
        vec!["run", "--instance", &random, "--state", &p("haar.bin"), "-N", "3000", "--seed", "9", "--format", "json"],
        vec!["eg", "--state", &p("schmidt.bin"), "--seed", "3", "--format", "csv"],
        vec!["experiment", "run", "-c", &p("single.json"), "--out", &p("single-report.json"), "--format", "json"],
        vec!["experiment", "run", "-c", &p("schmidt.json"), "--out", &p("schmidt-report.json")],
        vec!["experiment", "run", "-c", &p("hoeffding.json"), "--out", &p("hoeffding-report.json"), "--format", "json"],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();
    let files = [
        "haar.bin",
        "schmidt.bin",
        "f.json",
        "single-report.json",
        "single-report.csv",
        "schmidt-report.json",
        "schmidt-report.csv",
        "hoeffding-report.json",
        "hoeffding-report.csv",
    ];

    let mut snapshots: Vec<BTreeMap<String, Vec<u8>>> = vec![];
    for threads in [Some("1"), Some("8"), Some("1")] {
        let mut snap = BTreeMap::new();
        for (i, c) in commands.iter().enumerate() {
            let args: Vec<&str> = c.iter().map(String::as_str).collect();
            let (code, out) = ambqc(&args, threads);
            ensure(code == 0, || format!("`{}` exited with {code}", args.join(" ")))?;
            snap.insert(format!("stdout {i}"), out);
        }
        for f in files {
            snap.insert(f.to_string(), std::fs::read(p(f)).map_err(|e| e.to_string())?);
        }
        snapshots.push(snap);
    }
    for (key, bytes) in &snapshots[0] {
        for other in &snapshots[1..] {
            ensure(other.get(key) == Some(bytes), || format!("{key} differs between runs"))?;
        }
    }
    Ok(format!(
        "{} commands and {} files identical across 2 runs and AMBQC_THREADS 1 and 8",
        commands.len(),
        files.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("operator contracts", operator_contracts),
        ("Kraus invariance", kraus_invariance),
        ("Schmidt machinery", schmidt_machinery),
        ("purity mean", purity_mean),
        ("rank and Hoeffding probes", rank_and_hoeffding_probes),
        ("Haar scaling", haar_scaling),
        ("surrogate correctness", surrogate_correctness),
        ("bound evaluators", bound_evaluators),
        ("geometric entanglement", geometric_entanglement),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
