use std::io::Write;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use wfbench::classifiers::{train_attack, AttackKind, TrainedModel};
use wfbench::defenses::{measure_overhead, DefensePlan, DefenseSpec};
use wfbench::harness::{self, ExperimentConfig};
use wfbench::hmm::{build_hmm, refine_session};
use wfbench::sitegraph::{
    build_canonicalizer, build_preliminary_graph, crawl_pairs, edge_pairs, refine, CanonConfig, CrawlRecord,
    EdgeRecord, RedirectLog, RedirectRecord, SiteGraph,
};
use wfbench::synth::write_corpus;
use wfbench::trace::{ingest_capture, read_traces, write_traces, DomainMap, Sample, DEFAULT_MTU};
use wfbench::util::read_jsonl;

mod overrides;

#[derive(Parser)]
#[command(name = "wfbench", version, about = "Traffic fingerprinting workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic site with training and evaluation traffic.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a packet capture and its sample index into traces.
    Ingest {
        #[arg(long)]
        pcap: PathBuf,
        /// Sample index; defaults to the capture path with `.idx` appended.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Lines of `<ipv4> <domain>`.
        #[arg(long)]
        domains: Option<PathBuf>,
        #[arg(long)]
        client: Ipv4Addr,
        #[arg(long, default_value_t = DEFAULT_MTU)]
        mtu: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a site graph from crawl logs, optionally refined by redirects.
    Sitegraph {
        #[arg(long)]
        crawl: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Redirect log of training traffic; requires --final-crawl.
        #[arg(long, requires = "final_crawl")]
        redirects: Option<PathBuf>,
        #[arg(long)]
        final_crawl: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an attack on labelled traces.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify traces with a trained model, decoding sessions when a graph
    /// is given.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Prediction records; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a defense to traces and report its overhead.
    Defend {
        /// none, linear, exp, frag:<seed> or burst:<cost>.
        #[arg(long)]
        defense: DefenseSpec,
        #[arg(long)]
        traces: PathBuf,
        /// Traffic the Burst thresholds are learned from; defaults to --traces.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MTU)]
        mtu: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and print its report.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Line-delimited report records.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Training-size sweep over attacks, plus an optional session-length curve.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "bog,ll,pan_lr,wang_fll")]
        attacks: Vec<AttackKind>,
        /// Also compute the session-length curve up to this length.
        #[arg(long)]
        session_length: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    attack: Option<AttackKind>,
    #[arg(long)]
    defense: Option<DefenseSpec>,
    /// Override any configuration key, e.g. `--set synth.site.labels=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> wfbench::Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| wfbench::Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| wfbench::Error::Config(e.to_string()))?;
        for kv in &self.set {
            overrides::apply(&mut table, kv)?;
        }
        if let Some(a) = self.attack {
            table.insert("attack".into(), a.name().into());
        }
        if let Some(d) = &self.defense {
            table.insert("defense".into(), d.to_string().into());
        }
        ExperimentConfig::from_toml(&toml::to_string(&table).expect("table serializes"))
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let Some(sd) = &cfg.synth else {
        return Err(wfbench::Error::Config("synth needs a [synth] section".into()).into());
    };
    let harness::SynthCorpus { site, train, eval, .. } = harness::synth_corpus(cfg, sd)?;
    let manifest = write_corpus(
        out,
        &site,
        &[("train", &train), ("eval", &eval)],
        serde_json::to_value(cfg).expect("config serializes"),
    )?;
    println!(
        "wrote {} labels, {} training and {} evaluation samples to {} ({} files)",
        site.graph.len(),
        train.samples.len(),
        eval.samples.len(),
        out.display(),
        manifest.files.len() + 1
    );
    Ok(())
}

fn sitegraph(
    crawl: &Path,
    edges: &Path,
    redirects: Option<&Path>,
    final_crawl: Option<&Path>,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let crawl: Vec<CrawlRecord> = read_jsonl(crawl)?;
    let edges: Vec<EdgeRecord> = read_jsonl(edges)?;
    let canon = CanonConfig {
        seed,
        ..CanonConfig::default()
    };
    let c = build_canonicalizer(&crawl_pairs(&crawl), &canon)?;
    let mut g = build_preliminary_graph(&edge_pairs(&edges), &c);
    println!("preliminary graph: {} labels, {} edges", g.len(), g.edge_count());
    if let (Some(r), Some(f)) = (redirects, final_crawl) {
        let log: RedirectLog = read_jsonl::<RedirectRecord>(r)?.into_iter().collect();
        let finals: Vec<CrawlRecord> = read_jsonl(f)?;
        let (_, refined) = refine(&g, &c, &log, &crawl_pairs(&finals), &canon)?;
        g = refined;
        println!("refined graph: {} labels, {} edges", g.len(), g.edge_count());
    }
    g.save(out)?;
    Ok(())
}

fn classify(model: &Path, traces: &Path, graph: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let model = TrainedModel::load(model)?;
    let samples = read_traces(traces)?;
    let hmm = graph.map(SiteGraph::load).transpose()?.map(|g| build_hmm(&g)).transpose()?;
    let mut decoded: Vec<Option<String>> = vec![None; samples.len()];
    if let Some(m) = &hmm {
        for session in harness::sessions(&samples) {
            let refs: Vec<&Sample> = session.iter().map(|&i| &samples[i]).collect();
            let path = refine_session(&model, m, &refs)?;
            for (&i, l) in session.iter().zip(path.labels) {
                decoded[i] = Some(l.to_string());
            }
        }
    }
    let mut lines = String::new();
    let (mut hits, mut hmm_hits, mut labelled) = (0usize, 0usize, 0usize);
    for (s, hmm_label) in samples.iter().zip(&decoded) {
        let predicted = model.predict_label(s)?.to_string();
        if let Some(truth) = &s.label {
            labelled += 1;
            hits += usize::from(truth.as_str() == predicted);
            hmm_hits += usize::from(hmm_label.as_deref() == Some(truth.as_str()));
        }
        let rec = serde_json::json!({
            "sample": s.id().to_string(),
            "truth": s.label.as_ref().map(|l| l.to_string()),
            "predicted": predicted,
            "hmm": hmm_label,
        });
        lines.push_str(&rec.to_string());
        lines.push('\n');
    }
    match out {
        Some(p) => write_text(p, &lines)?,
        None => std::io::stdout().write_all(lines.as_bytes())?,
    }
    if labelled > 0 {
        eprintln!("accuracy {:.4} over {labelled} labelled samples", hits as f64 / labelled as f64);
        if hmm.is_some() {
            eprintln!("session accuracy {:.4}", hmm_hits as f64 / labelled as f64);
        }
    }
    Ok(())
}

fn defend(spec: DefenseSpec, traces: &Path, train: Option<&Path>, mtu: u32, out: &Path) -> anyhow::Result<()> {
    let samples = read_traces(traces)?;
    let training = match train {
        Some(p) => read_traces(p)?,
        None => samples.clone(),
    };
    let refs: Vec<&Sample> = training.iter().collect();
    let plan = DefensePlan::new(spec, mtu, &refs)?;
    let defended = plan.apply_all(&samples);
    let o = measure_overhead(&samples, &defended)?;
    write_traces(out, &defended)?;
    println!(
        "defense {}: byte overhead {:.4}, packet overhead {:.4}",
        plan.spec, o.byte_overhead, o.packet_overhead
    );
    println!("{}", serde_json::to_string(&o)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { cfg, out } => synth(&cfg.load()?, &out),
        Command::Ingest {
            pcap,
            index,
            domains,
            client,
            mtu,
            out,
        } => {
            let map = match domains {
                Some(p) => DomainMap::parse(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => DomainMap::new(),
            };
            let report = ingest_capture(&pcap, index.as_deref(), client, &map, mtu)?;
            write_traces(&out, &report.samples)?;
            println!(
                "{} samples ({} malformed, {} non-TCP, {} foreign frames skipped)",
                report.samples.len(),
                report.malformed,
                report.non_tcp,
                report.foreign
            );
            Ok(())
        }
        Command::Sitegraph {
            crawl,
            edges,
            redirects,
            final_crawl,
            seed,
            out,
        } => sitegraph(&crawl, &edges, redirects.as_deref(), final_crawl.as_deref(), seed, &out),
        Command::Train { cfg, traces, out } => {
            let cfg = cfg.load()?;
            let samples = read_traces(&traces)?;
            let keep = harness::subsample(&samples, cfg.train_samples_per_label, cfg.seeds.subsample);
            let refs: Vec<&Sample> = keep.iter().map(|&i| &samples[i]).collect();
            let model = train_attack(cfg.attack, &refs, &cfg.attack_config())?;
            model.save(&out)?;
            println!(
                "trained {} on {} samples, {} labels",
                model.kind,
                model.training_samples,
                model.labels.len()
            );
            Ok(())
        }
        Command::Classify {
            model,
            traces,
            graph,
            out,
        } => classify(&model, &traces, graph.as_deref(), out.as_deref()),
        Command::Defend {
            defense,
            traces,
            train,
            mtu,
            out,
        } => defend(defense, &traces, train.as_deref(), mtu, &out),
        Command::Evaluate { cfg, report } => {
            let cfg = cfg.load()?;
            let r = harness::run_experiment(&cfg)?;
            print!("{}", r.to_text());
            if let Some(p) = report {
                write_text(&p, &r.to_jsonl())?;
            }
            Ok(())
        }
        Command::Sweep {
            cfg,
            sizes,
            attacks,
            session_length,
            report,
        } => {
            let cfg = cfg.load()?;
            if sizes.is_empty() || attacks.is_empty() {
                bail!(wfbench::Error::Config("sweep needs at least one size and one attack".into()));
            }
            let r = harness::train_size_sweep(&cfg, &sizes, &attacks)?;
            print!("{}", r.to_text());
            let mut lines = r.to_jsonl();
            if let Some(n) = session_length {
                let curve = harness::session_length_sweep(&cfg, n)?;
                println!("session-length curve ({}):", cfg.attack);
                for (i, a) in curve.iter().enumerate() {
                    println!("  {:>4}  {:.2}%", i + 1, 100.0 * a);
                    let rec = serde_json::json!({"record": "curve", "attack": cfg.attack, "length": i + 1, "accuracy": a});
                    lines.push_str(&rec.to_string());
                    lines.push('\n');
                }
            }
            if let Some(p) = report {
                write_text(&p, &lines)?;
            }
            Ok(())
        }
    }
}

/// 2 for configuration errors, 3 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<wfbench::Error>() {
        Some(err) if err.is_config() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
