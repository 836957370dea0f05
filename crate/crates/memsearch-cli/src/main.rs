//! Operator CLI. Every subcommand talks to the HTTP service: either a
//! running one (`--server URL`) or an ephemeral in-process instance started
//! from the same flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use memsearch_client::{Client, SearchParams};
use memsearch_core::config::RunConfig;
use memsearch_core::corpus::{write_fixture_dataset, FixtureSpec};
use memsearch_core::evalh::EvalReport;
use memsearch_core::search::SearchMode;

#[derive(Parser)]
#[command(name = "memsearch", version, about = "Goal-directed search over uncompressed conversational memory: bank management, search tools, GRPO training, and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Backend and hyperparameter flags shared by most subcommands. Defaults
/// mirror the reference training configuration.
#[derive(Args, Clone)]
struct ConfigFlags {
    /// Base URL of a running service; omit to run one in-process.
    #[arg(long, global = true)]
    server: Option<String>,

    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Root directory holding one bank directory per conversation.
    #[arg(long, default_value = "banks")]
    bank_dir: PathBuf,
    /// Output directory for logs and reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Policy endpoint: an OpenAI-compatible base URL or `scripted:<file>`.
    #[arg(long, default_value = "http://127.0.0.1:8000/v1")]
    policy_url: String,
    #[arg(long, default_value = "Qwen2.5-7B-Instruct")]
    policy_model: String,
    /// Embedding endpoint: a base URL or `hashing:` for the local hasher.
    #[arg(long, default_value = "hashing:")]
    embed_url: String,
    #[arg(long, default_value = "Qwen3-Embedding-0.6B")]
    embed_model: String,
    #[arg(long, default_value_t = 1024)]
    embed_dim: usize,
    /// Judge endpoint: a base URL, `fixture:<file>`, or `heuristic:`.
    #[arg(long, default_value = "heuristic:")]
    judge_url: String,
    #[arg(long, default_value = "gpt-oss-120b")]
    judge_model: String,
    /// External weight-update endpoint; omit for dry-run training.
    #[arg(long)]
    trainer_url: Option<String>,

    /// Shuffle seed for the train/validation split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    n_train: usize,
    /// Rollout trajectories per question.
    #[arg(long, default_value_t = 8)]
    g: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    max_turns: u32,
    #[arg(long, default_value_t = 0.2)]
    clip_low: f64,
    #[arg(long, default_value_t = 0.28)]
    clip_high: f64,
    #[arg(long, default_value_t = 50)]
    validate_every: u64,
    #[arg(long, default_value_t = 400)]
    steps: u64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 8)]
    parallelism: usize,

    #[arg(long)]
    disable_keyword: bool,
    #[arg(long)]
    disable_semantic: bool,
    /// Return retrieved memories without surrounding context messages.
    #[arg(long)]
    disable_context: bool,
}

impl ConfigFlags {
    fn to_run_config(&self) -> RunConfig {
        let mut config = RunConfig::default();
        config.dataset = self.dataset.clone();
        config.bank_dir = self.bank_dir.clone();
        config.out_dir = self.out.clone();
        config.policy_url = self.policy_url.clone();
        config.policy_model = self.policy_model.clone();
        config.embed_url = self.embed_url.clone();
        config.embed_model = self.embed_model.clone();
        config.embedding_dimension = self.embed_dim;
        config.judge_url = self.judge_url.clone();
        config.judge_model = self.judge_model.clone();
        config.trainer_url = self.trainer_url.clone();
        config.split_seed = self.seed;
        config.n_train = self.n_train;
        config.grpo.group_size = self.g;
        config.grpo.batch_size = self.batch_size;
        config.grpo.clip_low = self.clip_low;
        config.grpo.clip_high = self.clip_high;
        config.grpo.validate_every = self.validate_every;
        config.grpo.steps = self.steps;
        config.episode.max_turns = self.max_turns;
        config.episode.temperature = self.temperature;
        config.episode.ablations.disable_keyword = self.disable_keyword;
        config.episode.ablations.disable_semantic = self.disable_semantic;
        config.episode.ablations.disable_context_groups = self.disable_context;
        config.parallelism = self.parallelism;
        config
    }

    /// A client for `--server`, or for an ephemeral in-process service.
    async fn client(&self) -> anyhow::Result<Client> {
        let base = match &self.server {
            Some(url) => url.clone(),
            None => memsearch_server::spawn_ephemeral(self.to_run_config()).await?,
        };
        Ok(Client::new(base)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        config: ConfigFlags,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7070)]
        port: u16,
    },
    /// Load a dataset, write the normalized form, and build one memory
    /// bank per conversation.
    Ingest {
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Embed bank records. Accepts a single bank directory or a root
    /// containing several.
    Embed {
        #[command(flatten)]
        config: ConfigFlags,
        /// Bank directory to embed; defaults to every bank under --bank-dir.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Query a bank from the command line.
    Search {
        #[command(flatten)]
        config: ConfigFlags,
        #[arg(long)]
        conversation: String,
        #[arg(long, value_parser = parse_mode)]
        mode: SearchMode,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, num_args = 1..)]
        keywords: Vec<String>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        speaker: Option<String>,
        #[arg(long)]
        session: Option<u32>,
    },
    /// Run one episode for a question and print the trajectory.
    Episode {
        #[command(flatten)]
        config: ConfigFlags,
        #[arg(long)]
        question_id: String,
        /// Also score the trajectory with the judge.
        #[arg(long)]
        reward: bool,
    },
    /// Run GRPO training steps (dry-run unless --trainer-url is set).
    Train {
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Evaluate the validation split and write report artifacts.
    Eval {
        #[command(flatten)]
        config: ConfigFlags,
    },
    /// Compare saved eval reports (initial vs final).
    Report {
        #[command(flatten)]
        config: ConfigFlags,
        /// Paths to report.json files, in run order.
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
    },
    /// Development helpers.
    #[command(subcommand)]
    Dev(DevCommand),
}

#[derive(Subcommand)]
enum DevCommand {
    /// Write the synthetic full-size dataset for offline runs.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a starter policy script for scripted dry runs.
    GenScript {
        #[arg(long)]
        out: PathBuf,
        /// Answer the scripted policy submits.
        #[arg(long, default_value = "I do not know")]
        answer: String,
    },
}

fn parse_mode(s: &str) -> Result<SearchMode, String> {
    match s {
        "semantic" => Ok(SearchMode::Semantic),
        "keyword" => Ok(SearchMode::Keyword),
        other => Err(format!("unknown mode {other:?}, expected semantic or keyword")),
    }
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "memsearch=info,memsearch_core=warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()).await {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { config, host, port } => {
            let addr = format!("{host}:{port}").parse()?;
            memsearch_server::serve(config.to_run_config(), addr, |bound| {
                println!("serving on http://{bound}");
            })
            .await?;
        }
        Command::Ingest { config } => {
            let dataset = config
                .dataset
                .clone()
                .context("--dataset is required for ingest")?;
            let client = config.client().await?;
            let reply = client.ingest(&dataset, Some(&config.bank_dir)).await?;
            println!("normalized: {}", reply.normalized_path.display());
            println!(
                "{:<12} {:>9} {:>9} {:>11} {:>9} {:>12}",
                "conversation", "sessions", "messages", "questions", "scored", "est_tokens"
            );
            for c in &reply.stats.per_conversation {
                println!(
                    "{:<12} {:>9} {:>9} {:>11} {:>9} {:>12}",
                    c.conversation_id,
                    c.sessions,
                    c.messages,
                    c.questions_total,
                    c.questions_scored,
                    c.estimated_tokens
                );
            }
            println!("banks: {} directories under {}", reply.bank_dirs.len(), config.bank_dir.display());
        }
        Command::Embed { config, bank } => {
            let client = config.client().await?;
            let targets = bank_targets(bank.as_deref(), &config.bank_dir)?;
            if targets.is_empty() {
                bail!("no bank directories found under {}", config.bank_dir.display());
            }
            for dir in targets {
                let reply = client.embed(&dir).await?;
                println!(
                    "{}: {} records, {} newly embedded, dimension {}",
                    reply.conversation_id, reply.records, reply.newly_embedded, reply.dimension
                );
            }
        }
        Command::Search { config, conversation, mode, query, keywords, top_k, speaker, session } => {
            let client = config.client().await?;
            let params = SearchParams { query, keywords, top_k, speaker, session, group_radius: None };
            let reply = client.search(&conversation, mode, &params).await?;
            if matches!(mode, SearchMode::Semantic) {
                for (i, g) in reply.result.groups.iter().enumerate() {
                    println!(
                        "#{} score {:.4}  {} [{}]",
                        i + 1,
                        g.score,
                        g.group.center.record_id,
                        g.group.center.message_timestamp
                    );
                }
                println!();
            }
            println!("{}", reply.formatted);
        }
        Command::Episode { config, question_id, reward } => {
            let client = config.client().await?;
            let reply = client.episode(&question_id, reward).await?;
            println!("{}", serde_json::to_string_pretty(&json!({
                "terminal": reply.trajectory.terminal,
                "turns": reply.trajectory.n_turns(),
                "final_answer": reply.trajectory.final_answer,
                "reward": reply.reward,
            }))?);
        }
        Command::Train { config } => {
            let client = config.client().await?;
            let health = client.health().await?;
            println!("config {}", health.config_hash);
            let outcome = client.train().await?;
            for s in &outcome.summaries {
                println!(
                    "step {:>4}  reward {:>7.4} (sd {:.4})  J {:>8.5}  clip {:.3}  turns {:>5.2}  terminals {:?}",
                    s.step, s.mean_reward, s.reward_std, s.j_value, s.clip_fraction, s.mean_turns, s.terminals
                );
            }
            for v in &outcome.val_points {
                println!(
                    "val step {:>4}  F1 {:>6.2}  B1 {:>6.2}  J {:>6.2}  turns {:>5.2}",
                    v.step, v.f1, v.bleu1, v.judge, v.mean_turns
                );
            }
            println!("logs under {}", config.out.display());
        }
        Command::Eval { config } => {
            let client = config.client().await?;
            let outcome = client.eval().await?;
            print!("{}", memsearch_core::evalh::render_report_table(&outcome.report));
            println!("report written under {}", config.out.join("eval").display());
        }
        Command::Report { config, runs } => {
            let reports: Vec<EvalReport> = runs
                .iter()
                .map(|p| -> anyhow::Result<EvalReport> {
                    let bytes = std::fs::read(p).with_context(|| p.display().to_string())?;
                    Ok(serde_json::from_slice(&bytes)?)
                })
                .collect::<anyhow::Result<_>>()?;
            let client = config.client().await?;
            let reply = client.compare(&reports).await?;
            print!("{}", reply.rendered);
        }
        Command::Dev(dev) => match dev {
            DevCommand::GenDataset { out, seed } => {
                let mut spec = FixtureSpec::default();
                if let Some(seed) = seed {
                    spec.seed = seed;
                }
                write_fixture_dataset(&spec, &out)?;
                println!("wrote {}", out.display());
            }
            DevCommand::GenScript { out, answer } => {
                let script = json!({
                    "default": [{
                        "steps": [
                            {"content": "Searching the memory bank.", "tool_calls": [
                                {"name": "search_memory",
                                 "arguments": {"search_type": "keyword", "keywords": ["the"]}}]},
                            {"content": "", "tool_calls": [
                                {"name": "submit_answer", "arguments": {"answer": answer}}]}
                        ]
                    }]
                });
                std::fs::write(&out, serde_json::to_vec_pretty(&script)?)?;
                println!("wrote {}", out.display());
            }
        },
    }
    Ok(())
}

/// One explicit bank, or every child of the root that holds a manifest.
fn bank_targets(bank: Option<&Path>, root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if let Some(dir) = bank {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    if root.join("manifest.json").exists() {
        out.push(root.to_path_buf());
        return Ok(out);
    }
    for entry in std::fs::read_dir(root).with_context(|| root.display().to_string())? {
        let path = entry?.path();
        if path.join("manifest.json").exists() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
