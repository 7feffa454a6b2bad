//! The command-line tool end to end on a small synthetic dataset.

use std::path::Path;

use distractor_core::cli::cli_main;
use distractor_core::harness::{AttackReport, Manifest, RunConfig};

fn run(args: &[&str]) -> i32 {
    cli_main(["distractor", "--quiet"].iter().copied().chain(args.iter().copied()))
}

fn small_config(dir: &Path) -> String {
    let mut cfg = RunConfig::fixture();
    cfg.synthetic.n_items = 300;
    cfg.synthetic.k = 50;
    cfg.env.epochs = 5;
    cfg.env.hidden = 16;
    cfg.train.hidden = 16;
    cfg.train.pretrain_epochs = 3;
    cfg.train.rl_epochs = 3;
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn original_distractors_leave_accuracy_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = small_config(d);
    let data = s(&d.join("data/dataset.jsonl"));
    assert_eq!(run(&["--config", &c, "gen-synth", "--out", &s(&d.join("data"))]), 0);
    assert_eq!(
        run(&[
            "--config",
            &c,
            "train-env",
            "--data",
            &data,
            "--out",
            &s(&d.join("env.dfm"))
        ]),
        0
    );
    let out = d.join("eval");
    let env = s(&d.join("env.dfm"));
    assert_eq!(
        run(&[
            "--config",
            &c,
            "evaluate",
            "--data",
            &data,
            "--env",
            &env,
            "--generator",
            "original",
            "--out",
            &s(&out)
        ]),
        0
    );
    let report = AttackReport::from_jsonl(&std::fs::read_to_string(out.join("attack_report.jsonl")).unwrap()).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.cells[0].delta_acc, 0.0);
    assert_eq!(report.cells[0].acc_original, report.cells[0].acc_attacked);

    let rendered = d.join("rendered.txt");
    let jsonl = s(&out.join("attack_report.jsonl"));
    assert_eq!(run(&["report", "--input", &jsonl, "--out", &s(&rendered)]), 0);
    assert_eq!(
        std::fs::read_to_string(rendered).unwrap(),
        std::fs::read_to_string(out.join("attack_report.txt")).unwrap()
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = small_config(d);
    assert_eq!(
        run(&[
            "--config",
            &c,
            "gen-synth",
            "--out",
            &s(&d.join("a")),
            "--n-items",
            "120"
        ]),
        0
    );
    let m = Manifest::parse(&std::fs::read_to_string(d.join("a/manifest.txt")).unwrap()).unwrap();
    assert_eq!(m.get("config.synthetic.n_items"), Some("120"));
    assert_eq!(m.get("config.synthetic.k"), Some("50"));
    assert_eq!(m.get("command"), Some("gen-synth"));
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["gen-synth"]), 2);
    let missing = s(&d.join("missing.jsonl"));
    assert_eq!(
        run(&["train-env", "--data", &missing, "--out", &s(&d.join("e.dfm"))]),
        1
    );

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "seed = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(run(&["--config", &s(&bad), "gen-synth", "--out", &s(&d.join("x"))]), 1);
}

#[test]
fn distractor_file_from_another_pool_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = small_config(d);
    let (a, b) = (d.join("a"), d.join("b"));
    assert_eq!(run(&["--config", &c, "gen-synth", "--out", &s(&a)]), 0);
    assert_eq!(run(&["--config", &c, "gen-synth", "--out", &s(&b), "--seed", "99"]), 0);
    let prior = s(&d.join("prior.jsonl"));
    let a_data = s(&a.join("dataset.jsonl"));
    assert_eq!(
        run(&["--config", &c, "baseline", "--data", &a_data, "--kind", "prior", "--out", &prior]),
        0
    );
    let b_data = s(&b.join("dataset.jsonl"));
    assert_eq!(
        run(&[
            "--config",
            &c,
            "augment",
            "--data",
            &b_data,
            "--generator",
            &prior,
            "--out",
            &s(&d.join("aug"))
        ]),
        1
    );
}
