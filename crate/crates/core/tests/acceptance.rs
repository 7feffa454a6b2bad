//! Acceptance checks. Runs without the libtest harness so that each criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use distractor_core::agent::{is_sem_equiv, policy_forward, PolicyAgent, SemEquivModel};
use distractor_core::baselines::{
    adversarial_matching, build_qtype_prior, train_failure_baseline, MatchingScorer, QTypePriorTable,
};
use distractor_core::cli::cli_main;
use distractor_core::dataset::{build_candidate_pool, generate_synthetic, Dataset, Split};
use distractor_core::environment::train_discriminator;
use distractor_core::environment::{evaluate_original, Discriminator, Environment};
use distractor_core::harness::{
    generate_all, run_augmentation_experiment, AgentGenerator, DistractorGenerator, Manifest, MatchingGenerator,
    PriorGenerator, RunConfig,
};
use distractor_core::kernel::{cross_entropy_loss, finite_diff_check_params, sigmoid_bce, softmax, DenseParams, Mode};
use distractor_core::reinforce::{
    mean_correct_probability, policy_gradient, pretrain_agent, topk_accuracy, train_mlpr, RewardSpec, Variant,
};
use distractor_core::Rng;

/// Test-split values of the fixture run, pinned after the first verified run.
const PINNED_ENV_ACC: f64 = 0.925;
const PINNED_MLPR_DELTA: f64 = 0.26;
const PIN_TOL: f64 = 0.005;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Fixture {
    cfg: RunConfig,
    ds: Dataset,
    disc: Discriminator,
    sem: SemEquivModel,
    env_acc: f64,
    mlpr: PolicyAgent,
    mlpr_secs: f64,
    pretrained: PolicyAgent,
    checksums: Vec<(String, String, String)>,
}

impl Fixture {
    fn build() -> Self {
        let cfg = RunConfig::fixture();
        let ds = generate_synthetic(&cfg.synthetic, cfg.seed).unwrap();
        let disc = train_discriminator(&ds, &cfg.env, &mut Rng::new(cfg.seed)).unwrap();
        let env_acc = evaluate_original(&disc, &ds, Split::Test).unwrap().accuracy;
        let sem = SemEquivModel::new(ds.pool(), cfg.tau);
        let spec = RewardSpec::new(vec![&disc], sem.clone()).unwrap();

        let mut checksums = Vec::new();
        let before = disc.checksum();
        let t = Instant::now();
        let (mlpr, _) = train_mlpr(&ds, &spec, &cfg.train, Variant::Mlpr).unwrap();
        let mlpr_secs = t.elapsed().as_secs_f64();
        checksums.push(("mlpr".to_string(), before.clone(), disc.checksum()));
        let (pretrained, _) = train_mlpr(&ds, &spec, &cfg.train, Variant::MlprPretrain).unwrap();
        checksums.push(("mlpr_pretrain".to_string(), before, disc.checksum()));
        Fixture {
            cfg,
            ds,
            disc,
            sem,
            env_acc,
            mlpr,
            mlpr_secs,
            pretrained,
            checksums,
        }
    }
}

fn random_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn gradient_correctness() -> Check {
    let mut rng = Rng::new(1001);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let in_dim = 2 + rng.below(15);
        let hidden = 2 + rng.below(15);
        let dropout = if case % 2 == 0 { 0.0 } else { 0.3 };
        let mask_seed = rng.next_u64();
        let c = random_vec(in_dim, 1.0, &mut rng);

        // Agent: softmax over `out` actions with cross-entropy.
        let out = 2 + rng.below(15);
        let target = rng.below(out);
        let p = DenseParams::xavier(in_dim, hidden, out, &mut rng);
        let ce = |q: &DenseParams| {
            let z = q
                .forward(&c, dropout, Mode::Train, &mut Rng::new(mask_seed))
                .unwrap()
                .logits;
            cross_entropy_loss(&softmax(&z), target).0
        };
        let fwd = p.forward(&c, dropout, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
        let (_, dz) = cross_entropy_loss(&softmax(&fwd.logits), target);
        let mut g = p.zeros_like();
        p.backward(&fwd.cache, &dz, &mut g);
        worst = worst.max(finite_diff_check_params(&p, &g, ce, 1e-5).max_rel_err);

        // Discriminator: one logit with binary cross-entropy.
        let label = rng.below(2) == 1;
        let p = DenseParams::xavier(in_dim, hidden, 1, &mut rng);
        let bce = |q: &DenseParams| {
            let z = q
                .forward(&c, dropout, Mode::Train, &mut Rng::new(mask_seed))
                .unwrap()
                .logits;
            sigmoid_bce(z[0], label).0
        };
        let fwd = p.forward(&c, dropout, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
        let (_, dz) = sigmoid_bce(fwd.logits[0], label);
        let mut g = p.zeros_like();
        p.backward(&fwd.cache, &[dz], &mut g);
        worst = worst.max(finite_diff_check_params(&p, &g, bce, 1e-5).max_rel_err);
    }
    ensure(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 20 instances x 2 networks"),
    )
}

fn reinforce_soundness() -> Check {
    let n = 100_000usize;

    // (a) constant reward on a 3-action policy.
    let mut rng = Rng::new(2001);
    let params = DenseParams::xavier(3, 4, 3, &mut rng);
    let input = vec![vec![0.7, -0.3, 1.1]];
    let dim = params.num_params();
    let (mut sum, mut sq) = (vec![0.0; dim], vec![0.0; dim]);
    for _ in 0..n {
        let g = policy_gradient(&params, 0.0, &input, 1, 0.0, &mut rng, |_, _| Ok(0.6)).unwrap();
        for (j, x) in g.grad.to_flat().into_iter().enumerate() {
            sum[j] += x;
            sq[j] += x * x;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let var: f64 = (0..dim).map(|j| sq[j] / n as f64 - mean[j] * mean[j]).sum();
    let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let se = (var / n as f64).sqrt();
    let a_ok = norm < 3.0 * se;

    // (b) 2-action bandit against the exact gradient of −E[R]: with
    // π = softmax(z) the exact logit gradient is −π₀π₁(r₀ − r₁)·(1, −1),
    // pushed through the network by the backward pass.
    let mut rng = Rng::new(2002);
    let params = DenseParams::xavier(2, 3, 2, &mut rng);
    let input = vec![vec![0.5, -1.0]];
    let rewards = [1.0, 0.2];
    let mut est = params.zeros_like();
    for _ in 0..n {
        let g = policy_gradient(&params, 0.0, &input, 1, 0.0, &mut rng, |_, a| Ok(rewards[a])).unwrap();
        est.add_scaled(&g.grad, 1.0 / n as f64);
    }
    let fwd = params.forward(&input[0], 0.0, Mode::Eval, &mut rng).unwrap();
    let pi = softmax(&fwd.logits);
    let dz0 = -pi[0] * pi[1] * (rewards[0] - rewards[1]);
    let mut exact = params.zeros_like();
    params.backward(&fwd.cache, &[dz0, -dz0], &mut exact);
    let (e, m) = (exact.to_flat(), est.to_flat());
    let diff = e.iter().zip(&m).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let rel = diff / exact.l2_norm();
    let b_ok = rel < 0.02;
    ensure(
        a_ok && b_ok,
        format!(
            "(a) |mean| {norm:.2e} vs 3 SE {:.2e}; (b) relative error {:.2}%",
            3.0 * se,
            100.0 * rel
        ),
    )
}

fn distribution_validity() -> Check {
    let k = 1516;
    let raw: Vec<(String, u64)> = (0..k).map(|i| (format!("answer {i}"), 1 + (i % 7) as u64)).collect();
    let pool = build_candidate_pool(&raw, 1).unwrap();
    let (d_img, d_txt) = (32, 16);
    let mut rng = Rng::new(3001);
    let params = DenseParams::xavier(d_img + d_txt, 64, k, &mut rng);
    let agent = PolicyAgent::from_params(params, 0.5, &pool);
    let mut worst_sum: f64 = 0.0;
    let mut negatives = 0;
    for i in 0..1000 {
        // Scales up to 100 push the logits far apart.
        let scale = [0.01, 1.0, 10.0, 100.0][i % 4];
        let img = random_vec(d_img, scale, &mut rng);
        let q = random_vec(d_txt, scale, &mut rng);
        let mode = if i % 2 == 0 { Mode::Eval } else { Mode::Train };
        let dist = policy_forward(&agent, &pool, &img, &q, mode, &mut rng).unwrap();
        worst_sum = worst_sum.max((dist.iter().sum::<f64>() - 1.0).abs());
        negatives += dist.iter().filter(|p| p.is_nan() || **p < 0.0).count();
    }
    ensure(
        worst_sum <= 1e-9 && negatives == 0 && pool.len() == k,
        format!(
            "K={}, max |sum-1| {worst_sum:.1e}, {negatives} negative entries",
            pool.len()
        ),
    )
}

fn filter_guarantee(fx: &Fixture) -> Check {
    let table = build_qtype_prior(&fx.ds).unwrap();
    let (failure, _) =
        train_failure_baseline(&fx.ds, &fx.disc, &fx.cfg.train, &mut Rng::new(fx.cfg.train.seed)).unwrap();
    let gens: Vec<Box<dyn DistractorGenerator + '_>> = vec![
        Box::new(AgentGenerator {
            name: "mlpr".into(),
            agent: &fx.mlpr,
            sem: &fx.sem,
        }),
        Box::new(AgentGenerator {
            name: "mlpr_pretrain".into(),
            agent: &fx.pretrained,
            sem: &fx.sem,
        }),
        Box::new(PriorGenerator {
            table: &table,
            sem: &fx.sem,
        }),
        Box::new(MatchingGenerator {
            scorer: MatchingScorer::default(),
            sem: &fx.sem,
        }),
        Box::new(AgentGenerator {
            name: "failure".into(),
            agent: &failure,
            sem: &fx.sem,
        }),
    ];
    let pool = fx.ds.pool();
    let mut violations = 0;
    let mut checked = 0;
    for g in &gens {
        for (i, rec) in generate_all(g.as_ref(), &fx.ds).unwrap().iter().enumerate() {
            let correct = fx.ds.item(i).correct_id;
            let ca = pool.embedding(correct);
            for &d in &rec.distractor_ids {
                checked += 1;
                if d == correct || cosine(pool.embedding(d), ca) >= fx.cfg.tau {
                    violations += 1;
                }
            }
        }
    }
    ensure(
        violations == 0,
        format!(
            "{violations} violations in {checked} distractors from {} generators",
            gens.len()
        ),
    )
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn attack_effectiveness(fx: &Fixture) -> Check {
    let attacked = topk_accuracy(&fx.disc, &fx.mlpr, &fx.ds, &fx.sem, Split::Test).unwrap();
    let delta = fx.env_acc - attacked;
    let pinned = (fx.env_acc - PINNED_ENV_ACC).abs() <= PIN_TOL && (delta - PINNED_MLPR_DELTA).abs() <= PIN_TOL;
    ensure(
        fx.env_acc >= 0.60 && delta >= 0.10 && pinned && fx.mlpr_secs < 300.0,
        format!(
            "env acc {:.1}% (pinned {:.1}%), MLPR dAcc {:.3} (pinned {:.3}), MLPR training {:.0}s",
            100.0 * fx.env_acc,
            100.0 * PINNED_ENV_ACC,
            delta,
            PINNED_MLPR_DELTA,
            fx.mlpr_secs
        ),
    )
}

fn pretraining_effect(fx: &Fixture) -> Check {
    // Replays the pre-training phase of `train_mlpr` with the same streams.
    let root = Rng::new(fx.cfg.train.seed);
    let mut agent = PolicyAgent::new(&fx.ds, fx.cfg.train.hidden, fx.cfg.train.dropout_p, &mut root.child(1));
    pretrain_agent(&mut agent, &fx.ds, &fx.cfg.train, &mut root.child(2)).unwrap();
    let uniform = 1.0 / fx.ds.pool().len() as f64;
    let mean_p = mean_correct_probability(&agent, &fx.ds, &fx.ds.indices(Split::Test)).unwrap();
    let attacked = topk_accuracy(&fx.disc, &fx.pretrained, &fx.ds, &fx.sem, Split::Test).unwrap();
    let delta = fx.env_acc - attacked;
    ensure(
        mean_p > uniform && delta >= 0.0,
        format!("mean p(correct) {mean_p:.4} vs 1/K {uniform:.4}; MLPR+pretrain dAcc {delta:.3}"),
    )
}

fn augmentation_directionality(fx: &Fixture) -> Check {
    let t = Instant::now();
    let gen = AgentGenerator {
        name: "mlpr_pretrain".into(),
        agent: &fx.pretrained,
        sem: &fx.sem,
    };
    let rep = run_augmentation_experiment(&fx.ds, &gen, &fx.cfg.env, fx.cfg.seed).unwrap();
    let acc = |m: &str, e: &str| rep.accuracy(m, e).unwrap();
    let gain = acc("[A]", "[A]") - acc("[O]", "[A]");
    let loss = acc("[O]", "[O]") - acc("0.5[O]+0.5[A]", "[O]");
    let secs = t.elapsed().as_secs_f64();
    ensure(
        gain >= 0.10 && loss <= 0.10 && secs < 600.0,
        format!(
            "[A]-trained gains {:+.1} points on [A]; mix loses {:.1} points on [O]; {secs:.0}s",
            100.0 * gain,
            100.0 * loss
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let argv: Vec<String> = ["distractor".to_string(), "--quiet".to_string()]
        .into_iter()
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    match cli_main(&argv) {
        0 => Ok(()),
        code => Err(format!("`distractor {}` exited {code}", args.join(" "))),
    }
}

/// Runs the full command pipeline into `dir` with a reduced config.
fn pipeline(dir: &Path) -> Result<(), String> {
    let mut cfg = RunConfig::fixture();
    cfg.synthetic.n_items = 400;
    cfg.synthetic.k = 60;
    cfg.env.epochs = 10;
    cfg.env.hidden = 32;
    cfg.train.hidden = 32;
    cfg.train.lr = 0.05;
    cfg.train.pretrain_epochs = 5;
    cfg.train.rl_epochs = 5;
    let config = dir.join("run.toml");
    std::fs::write(&config, cfg.to_toml()).map_err(|e| e.to_string())?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (c, data) = (p("run.toml"), p("data/dataset.jsonl"));
    run_cli(&["--config", &c, "gen-synth", "--out", &p("data")])?;
    run_cli(&["--config", &c, "train-env", "--data", &data, "--out", &p("env.dfm")])?;
    run_cli(&["--config", &c, "pretrain", "--data", &data, "--out", &p("pre.dfm")])?;
    run_cli(&[
        "--config",
        &c,
        "attack-train",
        "--data",
        &data,
        "--env",
        &p("env.dfm"),
        "--variant",
        "mlpr-pretrain",
        "--out",
        &p("attack"),
    ])?;
    for kind in ["prior", "matching", "failure"] {
        run_cli(&[
            "--config",
            &c,
            "baseline",
            "--data",
            &data,
            "--kind",
            kind,
            "--env",
            &p("env.dfm"),
            "--out",
            &p(&format!("{kind}.jsonl")),
        ])?;
    }
    let agent = p("attack/distractors.jsonl");
    run_cli(&[
        "--config",
        &c,
        "evaluate",
        "--data",
        &data,
        "--env",
        &p("env.dfm"),
        "--generator",
        "original",
        "--generator",
        &agent,
        "--generator",
        &p("prior.jsonl"),
        "--generator",
        &p("matching.jsonl"),
        "--generator",
        &p("failure.jsonl"),
        "--out",
        &p("eval"),
    ])?;
    run_cli(&[
        "--config",
        &c,
        "augment",
        "--data",
        &data,
        "--generator",
        &agent,
        "--out",
        &p("aug"),
    ])?;
    run_cli(&[
        "--config",
        &c,
        "augment",
        "--data",
        &data,
        "--generator",
        &agent,
        "--experiment",
        "--out",
        &p("study"),
    ])?;
    run_cli(&[
        "report",
        "--input",
        &p("eval/attack_report.jsonl"),
        "--out",
        &p("eval/rendered.txt"),
    ])?;
    Ok(())
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Check {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<String> = sa
        .keys()
        .chain(sb.keys())
        .filter(|k| sa.get(*k) != sb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let checkpoints = sa.keys().filter(|k| k.extension().is_some_and(|e| e == "dfm")).count();
    let reports = sa.keys().filter(|k| k.to_string_lossy().contains("report")).count();
    ensure(
        differing.is_empty() && checkpoints >= 3 && reports >= 4,
        format!(
            "{} files compared ({checkpoints} checkpoints, {reports} report files); differing: {:?}",
            sa.len(),
            differing
        ),
    )
}

fn frozen_environment(fx: &Fixture) -> Check {
    let mut runs: Vec<String> = Vec::new();
    let mut changed = 0;
    for (name, before, after) in &fx.checksums {
        runs.push(name.clone());
        changed += usize::from(before != after);
    }

    // The failure baseline also reads the environment.
    let before = fx.disc.checksum();
    train_failure_baseline(&fx.ds, &fx.disc, &fx.cfg.train, &mut Rng::new(3)).unwrap();
    runs.push("failure".into());
    changed += usize::from(before != fx.disc.checksum());

    // Command-line run: manifest checksum before and after, plus file digest.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(dir.path())?;
    let m = Manifest::parse(&std::fs::read_to_string(dir.path().join("attack/manifest.txt")).unwrap()).unwrap();
    let env_m = Manifest::parse(&std::fs::read_to_string(dir.path().join("env.dfm.manifest")).unwrap()).unwrap();
    runs.push("cli attack-train".into());
    changed += usize::from(m.get("env0.checksum") != m.get("env0.checksum_after"));
    changed += usize::from(m.get("env0.checksum") != env_m.get("env.checksum"));
    changed += usize::from(m.get("input.env0") != env_m.get("output.checkpoint"));
    ensure(changed == 0, format!("{changed} checksum changes across runs {runs:?}"))
}

type Ranking = Vec<(usize, u64)>;

/// Brute-force count of correct answers over the train split.
fn oracle_prior(ds: &Dataset) -> (BTreeMap<String, Ranking>, Ranking) {
    let rank = |pairs: Vec<(usize, u64)>| {
        let mut v: Vec<(usize, u64)> = pairs.into_iter().filter(|p| p.1 > 0).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    };
    let k = ds.pool().len();
    let train = ds.indices(Split::Train);
    let mut qtypes: Vec<String> = train.iter().map(|&i| ds.item(i).qtype.clone()).collect();
    qtypes.sort();
    qtypes.dedup();
    let mut per = BTreeMap::new();
    for q in qtypes {
        let counts = (0..k)
            .map(|a| {
                let n = train
                    .iter()
                    .filter(|&&i| ds.item(i).qtype == q && ds.item(i).correct_id == a)
                    .count();
                (a, n as u64)
            })
            .collect();
        per.insert(q, rank(counts));
    }
    let global = (0..k)
        .map(|a| (a, train.iter().filter(|&&i| ds.item(i).correct_id == a).count() as u64))
        .collect();
    (per, rank(global))
}

fn prior_matches(table: &QTypePriorTable, ds: &Dataset) -> bool {
    let (per, global) = oracle_prior(ds);
    let qtypes: Vec<&str> = table.qtypes().collect();
    qtypes == per.keys().map(String::as_str).collect::<Vec<_>>()
        && per.iter().all(|(q, r)| table.ranking(q) == Some(r.as_slice()))
        && table.global() == global.as_slice()
}

fn oracle_matching(ds: &Dataset, item: usize, lambda: f64, sem: &SemEquivModel) -> [usize; 3] {
    let pool = ds.pool();
    let correct = ds.item(item).correct_id;
    let q = ds.question_embedding(item);
    let mut best: Vec<(f64, usize)> = Vec::new();
    for c in 0..pool.len() {
        if c == correct || is_sem_equiv(sem, c, correct) {
            continue;
        }
        let e = pool.embedding(c);
        best.push((cosine(q, e) - lambda * cosine(e, pool.embedding(correct)), c));
    }
    // Exhaustive selection: repeatedly take the maximum, lowest index on ties.
    let mut out = [0; 3];
    for slot in &mut out {
        let (j, _) =
            best.iter()
                .enumerate()
                .fold((usize::MAX, (f64::NEG_INFINITY, usize::MAX)), |acc, (j, &(s, c))| {
                    if s > acc.1 .0 || (s == acc.1 .0 && c < acc.1 .1) {
                        (j, (s, c))
                    } else {
                        acc
                    }
                });
        *slot = best.remove(j).1;
    }
    out
}

fn baseline_oracles(fx: &Fixture) -> Check {
    let prior_ok = prior_matches(&build_qtype_prior(&fx.ds).unwrap(), &fx.ds);

    let mut small = fx.cfg.synthetic.clone();
    small.k = 100;
    small.n_items = 600;
    let ds = generate_synthetic(&small, 11).unwrap();
    let sem = SemEquivModel::new(ds.pool(), fx.cfg.tau);
    let small_prior_ok = prior_matches(&build_qtype_prior(&ds).unwrap(), &ds);
    let mut mismatches = 0;
    let mut queries = 0;
    for lambda in [0.0, 0.5, 1.0, 2.0] {
        let scorer = MatchingScorer::new(lambda).unwrap();
        for i in 0..ds.len() {
            queries += 1;
            if adversarial_matching(&ds, i, &scorer, &sem).unwrap() != oracle_matching(&ds, i, lambda, &sem) {
                mismatches += 1;
            }
        }
    }
    ensure(
        prior_ok && small_prior_ok && mismatches == 0,
        format!(
            "prior tables exact: {}; matching mismatches {mismatches}/{queries} at K={}",
            prior_ok && small_prior_ok,
            ds.pool().len()
        ),
    )
}

fn report(n: u32, name: &str, t: Instant, result: Check) -> bool {
    let secs = t.elapsed().as_secs_f64();
    match result {
        Ok(d) => {
            println!("criterion {n:>2} PASS {name}: {d} [{secs:.1}s]");
            true
        }
        Err(d) => {
            println!("criterion {n:>2} FAIL {name}: {d} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    let t = Instant::now();
    ok &= report(1, "gradient correctness", t, gradient_correctness());
    let t = Instant::now();
    ok &= report(2, "REINFORCE estimator", t, reinforce_soundness());
    let t = Instant::now();
    ok &= report(3, "distribution validity", t, distribution_validity());

    let t = Instant::now();
    let fx = Fixture::build();
    println!("fixture ready [{:.1}s]", t.elapsed().as_secs_f64());

    let t = Instant::now();
    ok &= report(4, "filter guarantee", t, filter_guarantee(&fx));
    let t = Instant::now();
    ok &= report(5, "attack effectiveness", t, attack_effectiveness(&fx));
    let t = Instant::now();
    ok &= report(6, "pre-training effect", t, pretraining_effect(&fx));
    let t = Instant::now();
    ok &= report(7, "augmentation directionality", t, augmentation_directionality(&fx));
    let t = Instant::now();
    ok &= report(8, "determinism", t, determinism());
    let t = Instant::now();
    ok &= report(9, "frozen environment", t, frozen_environment(&fx));
    let t = Instant::now();
    ok &= report(10, "baseline oracles", t, baseline_oracles(&fx));
    if !ok {
        std::process::exit(1);
    }
}
