//! The `distractor` command-line tool.
//!
//! Settings resolve as built-in defaults, then the config file (`--config`
//! or `$DISTRACTOR_CONFIG`), then command-line flags. Every command writes a
//! `key=value` manifest next to its output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agent::{PolicyAgent, SemEquivModel};
use crate::baselines::{build_qtype_prior, train_failure_baseline, MatchingScorer};
use crate::dataset::{generate_synthetic, load_dataset, save_dataset, Dataset, FEATURES_FILE};
use crate::environment::{evaluate_original, train_discriminator, Discriminator, Environment};
use crate::error::{Error, Result};
use crate::harness::{
    augment_dataset, generate_all, run_attack, run_augmentation_experiment, write_distractor_file, write_report_pair,
    AgentGenerator, AttackReport, AugmentationReport, DistractorGenerator, FileGenerator, Manifest, MatchingGenerator,
    OriginalDistractors, PriorGenerator, RunConfig,
};
use crate::kernel::meta_path;
use crate::reinforce::{pretrain_agent, train_mlpr, RewardSpec, Variant};
use crate::rng::Rng;

pub const AGENT_FILE: &str = "agent.dfm";
pub const DISTRACTORS_FILE: &str = "distractors.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CONFIG_SIDECAR: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Parser, Debug)]
#[command(
    name = "distractor",
    version,
    about = "Train and evaluate multiple-choice distractor generators"
)]
struct Cli {
    /// TOML config file; falls back to $DISTRACTOR_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress progress summaries on stdout.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Dataset file (JSON lines with a header line).
    #[arg(long)]
    data: PathBuf,
    /// Feature file; defaults to features.dfv next to the dataset.
    #[arg(long)]
    features: Option<PathBuf>,
}

impl DataArgs {
    fn features_path(&self) -> PathBuf {
        self.features
            .clone()
            .unwrap_or_else(|| self.data.parent().unwrap_or(Path::new(".")).join(FEATURES_FILE))
    }

    fn load(&self, manifest: &mut Manifest) -> Result<Dataset> {
        let features = self.features_path();
        let ds = load_dataset(&self.data, &features)?;
        manifest.add_file("input", "dataset", &self.data)?;
        manifest.add_file("input", "features", &features)?;
        manifest.set("dataset.fingerprint", ds.fingerprint());
        Ok(ds)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_items: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        d_img: Option<usize>,
        #[arg(long)]
        d_txt: Option<usize>,
        #[arg(long)]
        n_qtypes: Option<usize>,
        #[arg(long)]
        separability: Option<f64>,
    },
    /// Train the triplet-scoring environment.
    TrainEnv {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Supervised pre-training of a policy on correct answers.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Policy-gradient training against frozen environments.
    AttackTrain {
        #[command(flatten)]
        data: DataArgs,
        /// Environment checkpoint; repeat to average rewards over several.
        #[arg(long = "env", required = true)]
        envs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Mlpr)]
        variant: VariantArg,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Produce distractors with a comparison method.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        kind: BaselineKind,
        /// Distractor file to write.
        #[arg(long)]
        out: PathBuf,
        /// Environment whose mistakes the failure baseline learns.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Accuracy of each environment with original and generated distractors.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "env", required = true)]
        envs: Vec<PathBuf>,
        /// `original` or a distractor file; repeatable.
        #[arg(long = "generator", required = true)]
        generators: Vec<String>,
        /// Output directory for the report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Swap generated distractors into a dataset, or run the retraining study.
    Augment {
        #[command(flatten)]
        data: DataArgs,
        /// `original` or a distractor file.
        #[arg(long)]
        generator: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Train environments on [O], [A] and a 50/50 mix and report accuracies.
        #[arg(long)]
        experiment: bool,
    },
    /// Render a report from its JSON-lines form.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    rl_epochs: Option<usize>,
    #[arg(long)]
    samples_per_item: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VariantArg {
    Mlpr,
    MlprPretrain,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BaselineKind {
    Prior,
    Matching,
    Failure,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        set(&mut t.seed, self.seed);
        set(&mut t.pretrain_epochs, self.pretrain_epochs);
        set(&mut t.rl_epochs, self.rl_epochs);
        set(&mut t.samples_per_item, self.samples_per_item);
        set(&mut t.hidden, self.hidden);
        set(&mut t.lr, self.lr);
        set(&mut t.batch, self.batch);
        set(&mut t.eval_every, self.eval_every);
    }
}

/// Records every config value as `config.<path>=<value>`.
fn record_config(m: &mut Manifest, cfg: &RunConfig) {
    fn walk(m: &mut Manifest, prefix: &str, v: &serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    walk(m, &format!("{prefix}.{k}"), v);
                }
            }
            other => m.set(prefix, other),
        }
    }
    walk(m, "config", &serde_json::to_value(cfg).expect("config serializes"));
}

fn file_manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn load_envs(paths: &[PathBuf], m: &mut Manifest) -> Result<Vec<Discriminator>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = Discriminator::load(p)?;
            m.add_file("input", &format!("env{i}"), p)?;
            m.set(format!("env{i}.checksum"), d.checksum());
            Ok(d)
        })
        .collect()
}

fn load_generator(src: &str, ds: &Dataset, m: &mut Manifest, i: usize) -> Result<Box<dyn DistractorGenerator>> {
    if src == "original" {
        return Ok(Box::new(OriginalDistractors));
    }
    let p = Path::new(src);
    m.add_file("input", &format!("generator{i}"), p)?;
    Ok(Box::new(FileGenerator::load(p, ds)?))
}

fn run(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    macro_rules! say {
        ($($t:tt)*) => {
            if !quiet {
                println!($($t)*);
            }
        };
    }
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(p) = RunConfig::config_path(cli.config.as_deref()) {
        log::info!("using config {}", p.display());
    }
    match cli.command {
        Command::GenSynth {
            out,
            seed,
            n_items,
            k,
            d_img,
            d_txt,
            n_qtypes,
            separability,
        } => {
            set(&mut cfg.seed, seed);
            let s = &mut cfg.synthetic;
            set(&mut s.n_items, n_items);
            set(&mut s.k, k);
            set(&mut s.d_img, d_img);
            set(&mut s.d_txt, d_txt);
            set(&mut s.n_qtypes, n_qtypes);
            set(&mut s.separability, separability);
            let ds = generate_synthetic(&cfg.synthetic, cfg.seed)?;
            save_dataset(&ds, &out)?;
            let mut m = Manifest::new("gen-synth");
            m.set("seed", cfg.seed);
            record_config(&mut m, &cfg);
            m.set("dataset.fingerprint", ds.fingerprint());
            for f in ["dataset.jsonl", FEATURES_FILE, "embeddings.txt", "pool.tsv"] {
                m.add_file("output", f, &out.join(f))?;
            }
            m.write(&out.join(MANIFEST_FILE))?;
            say!(
                "wrote {} items, pool of {} to {}",
                ds.len(),
                ds.pool().len(),
                out.display()
            );
        }
        Command::TrainEnv {
            data,
            out,
            seed,
            epochs,
            hidden,
            lr,
            batch,
        } => {
            set(&mut cfg.seed, seed);
            set(&mut cfg.env.epochs, epochs);
            set(&mut cfg.env.hidden, hidden);
            set(&mut cfg.env.lr, lr);
            set(&mut cfg.env.batch, batch);
            let mut m = Manifest::new("train-env");
            let ds = data.load(&mut m)?;
            let disc = train_discriminator(&ds, &cfg.env, &mut Rng::new(cfg.seed))?;
            disc.save(&out)?;
            let report = evaluate_original(&disc, &ds, crate::dataset::Split::Test)?;
            let mut rpath = out.as_os_str().to_owned();
            rpath.push(".accuracy.txt");
            let rpath = PathBuf::from(rpath);
            write(&rpath, &format!("{}{}\n", report.to_text(), report.summary_json()))?;
            m.set("seed", cfg.seed);
            record_config(&mut m, &cfg);
            m.set("env.checksum", disc.checksum());
            m.add_file("output", "checkpoint", &out)?;
            m.add_file("output", "checkpoint_meta", &meta_path(&out))?;
            m.add_file("output", "accuracy", &rpath)?;
            m.write(&file_manifest_path(&out))?;
            say!("{}", report.to_text().trim_end());
        }
        Command::Pretrain { data, out, train } => {
            train.apply(&mut cfg);
            let mut m = Manifest::new("pretrain");
            let ds = data.load(&mut m)?;
            let root = Rng::new(cfg.train.seed);
            let mut agent = PolicyAgent::new(&ds, cfg.train.hidden, cfg.train.dropout_p, &mut root.child(1));
            let log = pretrain_agent(&mut agent, &ds, &cfg.train, &mut root.child(2))?;
            agent.save(&out, cfg.train.seed, cfg.train.pretrain_epochs)?;
            let mut lpath = out.as_os_str().to_owned();
            lpath.push(".log.jsonl");
            let lpath = PathBuf::from(lpath);
            log.write(&lpath)?;
            m.set("seed", cfg.train.seed);
            record_config(&mut m, &cfg);
            m.set("skipped_items", log.skipped_items);
            m.add_file("output", "checkpoint", &out)?;
            m.add_file("output", "log", &lpath)?;
            m.write(&file_manifest_path(&out))?;
            if let Some(last) = log.records.last() {
                say!("pre-trained {} epochs, final loss {:.4}", last.epoch, last.mean_loss);
            }
        }
        Command::AttackTrain {
            data,
            envs,
            out,
            variant,
            tau,
            train,
        } => {
            train.apply(&mut cfg);
            set(&mut cfg.tau, tau);
            let variant = match variant {
                VariantArg::Mlpr => Variant::Mlpr,
                VariantArg::MlprPretrain => Variant::MlprPretrain,
            };
            let mut m = Manifest::new("attack-train");
            let ds = data.load(&mut m)?;
            let discs = load_envs(&envs, &mut m)?;
            let sem = SemEquivModel::new(ds.pool(), cfg.tau);
            let env_refs: Vec<&dyn Environment> = discs.iter().map(|d| d as &dyn Environment).collect();
            let spec = RewardSpec::new(env_refs, sem.clone())?;
            let (agent, log) = train_mlpr(&ds, &spec, &cfg.train, variant)?;

            create_dir(&out)?;
            let epochs =
                cfg.train.pretrain_epochs * usize::from(variant == Variant::MlprPretrain) + cfg.train.rl_epochs;
            agent.save(&out.join(AGENT_FILE), cfg.train.seed, epochs)?;
            log.write(&out.join(TRAIN_LOG_FILE))?;
            let gen = AgentGenerator {
                name: variant.as_str().to_string(),
                agent: &agent,
                sem: &sem,
            };
            write_distractor_file(&out.join(DISTRACTORS_FILE), &generate_all(&gen, &ds)?)?;
            write(&out.join(CONFIG_SIDECAR), &cfg.to_toml())?;

            m.set("seed", cfg.train.seed);
            m.set("variant", variant.as_str());
            record_config(&mut m, &cfg);
            for (i, d) in discs.iter().enumerate() {
                // Re-checked after training; train_mlpr already aborts on a change.
                m.set(format!("env{i}.checksum_after"), d.checksum());
            }
            for f in [AGENT_FILE, TRAIN_LOG_FILE, DISTRACTORS_FILE, CONFIG_SIDECAR] {
                m.add_file("output", f, &out.join(f))?;
            }
            m.add_file("output", "agent.dfm.meta", &meta_path(&out.join(AGENT_FILE)))?;
            m.write(&out.join(MANIFEST_FILE))?;
            if let Some(r) = log.records.last() {
                say!(
                    "{}: {} epochs, final mean reward {:.4}",
                    variant.as_str(),
                    r.epoch,
                    r.mean_reward.unwrap_or(f64::NAN)
                );
            }
        }
        Command::Baseline {
            data,
            kind,
            out,
            env,
            lambda,
            tau,
            train,
        } => {
            train.apply(&mut cfg);
            set(&mut cfg.lambda, lambda);
            set(&mut cfg.tau, tau);
            let mut m = Manifest::new("baseline");
            let ds = data.load(&mut m)?;
            let sem = SemEquivModel::new(ds.pool(), cfg.tau);
            record_config(&mut m, &cfg);
            let records = match kind {
                BaselineKind::Prior => {
                    m.set("kind", "prior");
                    let table = build_qtype_prior(&ds)?;
                    let r = generate_all(
                        &PriorGenerator {
                            table: &table,
                            sem: &sem,
                        },
                        &ds,
                    )?;
                    m.set("prior.fallbacks", table.fallback_count());
                    r
                }
                BaselineKind::Matching => {
                    m.set("kind", "matching");
                    let g = MatchingGenerator {
                        scorer: MatchingScorer::new(cfg.lambda)?,
                        sem: &sem,
                    };
                    generate_all(&g, &ds)?
                }
                BaselineKind::Failure => {
                    m.set("kind", "failure");
                    let env = env.ok_or_else(|| Error::Invalid("--env is required for the failure baseline".into()))?;
                    let disc = load_envs(std::slice::from_ref(&env), &mut m)?.remove(0);
                    let (model, n) = train_failure_baseline(&ds, &disc, &cfg.train, &mut Rng::new(cfg.train.seed))?;
                    m.set("failure.examples", n);
                    let g = AgentGenerator {
                        name: "failure".into(),
                        agent: &model,
                        sem: &sem,
                    };
                    generate_all(&g, &ds)?
                }
            };
            write_distractor_file(&out, &records)?;
            m.add_file("output", "distractors", &out)?;
            m.write(&file_manifest_path(&out))?;
            say!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Evaluate {
            data,
            envs,
            generators,
            out,
            seed,
        } => {
            set(&mut cfg.seed, seed);
            let mut m = Manifest::new("evaluate");
            let ds = data.load(&mut m)?;
            let discs = load_envs(&envs, &mut m)?;
            let gens = generators
                .iter()
                .enumerate()
                .map(|(i, g)| load_generator(g, &ds, &mut m, i))
                .collect::<Result<Vec<_>>>()?;
            let env_refs: Vec<&dyn Environment> = discs.iter().map(|d| d as &dyn Environment).collect();
            let gen_refs: Vec<&dyn DistractorGenerator> = gens.iter().map(|g| g.as_ref()).collect();
            let report = run_attack(&ds, &env_refs, &gen_refs, cfg.seed)?;
            write_report_pair(&out, "attack_report", &report.to_text(), &report.to_jsonl())?;
            m.set("seed", cfg.seed);
            for f in ["attack_report.txt", "attack_report.jsonl"] {
                m.add_file("output", f, &out.join(f))?;
            }
            m.write(&out.join(MANIFEST_FILE))?;
            say!("{}", report.to_text().trim_end());
        }
        Command::Augment {
            data,
            generator,
            out,
            ratio,
            seed,
            experiment,
        } => {
            set(&mut cfg.ratio, ratio);
            set(&mut cfg.seed, seed);
            let mut m = Manifest::new("augment");
            let ds = data.load(&mut m)?;
            let gen = load_generator(&generator, &ds, &mut m, 0)?;
            m.set("seed", cfg.seed);
            record_config(&mut m, &cfg);
            create_dir(&out)?;
            if experiment {
                let report = run_augmentation_experiment(&ds, gen.as_ref(), &cfg.env, cfg.seed)?;
                write_report_pair(&out, "augmentation_report", &report.to_text(), &report.to_jsonl())?;
                for f in ["augmentation_report.txt", "augmentation_report.jsonl"] {
                    m.add_file("output", f, &out.join(f))?;
                }
                say!("{}", report.to_text().trim_end());
            } else {
                let (aug, swapped) = augment_dataset(&ds, gen.as_ref(), cfg.ratio, &mut Rng::new(cfg.seed))?;
                save_dataset(&aug, &out)?;
                m.set("swapped", swapped.len());
                m.set("output.fingerprint", aug.fingerprint());
                for f in ["dataset.jsonl", FEATURES_FILE] {
                    m.add_file("output", f, &out.join(f))?;
                }
                say!("swapped distractors of {} of {} items", swapped.len(), ds.len());
            }
            m.write(&out.join(MANIFEST_FILE))?;
        }
        Command::Report { input, out } => {
            let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let rendered = if text.contains("\"kind\":\"augmentation\"") {
                AugmentationReport::from_jsonl(&text)?.to_text()
            } else {
                AttackReport::from_jsonl(&text)?.to_text()
            };
            match out {
                Some(p) => write(&p, &rendered)?,
                None => print!("{rendered}"),
            }
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command. Returns
/// the process exit status.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
