use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use lenbias::corpus::{load_corpus, save_corpus, CorpusFormat, CounterScheme, TokenCounter};
use lenbias::error::{Error, Result};
use lenbias::gateway::conformance::{builtin_vectors, parse_vectors, run_conformance};
use lenbias::gateway::{score_batch, Mode, Orientation, ScorerKind, ScorerSpec, SyntheticParams, DEFAULT_TIMEOUT_SECS};
use lenbias::perturb::{Dimension, PerturbAdapter, Rule, Severity};
use lenbias::report::config::{ChunkInput, CorpusInput, PerturbConfig, ScorerConfig};
use lenbias::report::{
    analyze, load_scores, save_scores, score_all, settings_for, write_report, AnalysisSettings, AuditConfig,
    BiasReport, ScorerIdentity, ScorerRun, SuiteData, CONFIG_ENV,
};

#[derive(Parser)]
#[command(
    name = "lenbias",
    version,
    about = "Audit translation quality scorers for length bias"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a parallel corpus and write it back in normalized form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Option<CorpusFormat>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        out_format: Option<CorpusFormat>,
    },
    /// Build passage groups and hypothesis pairs into a suite directory.
    BuildSuite {
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Insert one controlled MQM error into every passage group of a suite.
    Perturb {
        #[arg(long)]
        suite_dir: PathBuf,
        #[arg(long, value_enum)]
        severity: Severity,
        #[arg(long, value_enum)]
        dimension: Dimension,
        #[arg(long, value_enum)]
        rule: Option<Rule>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// External perturbation adapter command.
        #[arg(long)]
        adapter_cmd: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
        timeout_secs: u64,
    },
    /// Score a suite directory with one or more scorers.
    Score {
        #[arg(long)]
        suite_dir: PathBuf,
        #[command(flatten)]
        scorers: ScorerArgs,
        /// Where to write scores; defaults to the suite directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compute statistics from a scored suite and write report.json.
    Analyze {
        #[arg(long)]
        suite_dir: PathBuf,
        /// Directory holding scores; defaults to the suite directory.
        #[arg(long)]
        scores_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
        #[arg(long, default_value_t = 1.0)]
        bin_width: f64,
        #[arg(long, default_value_t = -25.0, allow_hyphen_values = true)]
        hist_lo: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        hist_hi: f64,
    },
    /// Render CSV/JSON tables and SVG charts from report.json.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage from one config.
    Audit {
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        scorers: ScorerArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check an adapter against the protocol conformance vectors.
    Conformance {
        #[arg(long)]
        adapter_cmd: String,
        /// Vector file; defaults to the shipped vectors.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
}

#[derive(Args, Default)]
struct SuiteArgs {
    /// JSON config; falls back to $LENBIAS_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus file (TSV or JSONL); repeatable.
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// Chunk candidate file as DIRECTION=PATH; repeatable.
    #[arg(long, value_parser = parse_chunks)]
    chunks: Vec<(String, PathBuf)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    max_segments: Option<usize>,
    #[arg(long)]
    window_tokens: Option<usize>,
    #[arg(long)]
    separator: Option<String>,
    #[arg(long)]
    min_chunk_tokens: Option<usize>,
    #[arg(long)]
    max_chunk_tokens: Option<usize>,
    #[arg(long, value_enum)]
    counter: Option<CounterScheme>,
    /// Command for the external token counter.
    #[arg(long)]
    counter_cmd: Option<String>,
}

#[derive(Args, Default)]
struct ScorerArgs {
    /// `lexical_overlap`, `synthetic[:key=value,...]` or a scorer JSON file; repeatable.
    #[arg(long)]
    scorer: Vec<String>,
    /// Subprocess scorer speaking the line protocol.
    #[arg(long)]
    adapter_cmd: Option<String>,
    /// HTTP scorer base URL (POST {url}/score).
    #[arg(long)]
    adapter_url: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Mode for hypothesis-pair requests.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Orientation of scorers given on the command line.
    #[arg(long, value_enum)]
    orientation: Option<Orientation>,
}

fn parse_chunks(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (dir, path) = s.split_once('=').ok_or("expected DIRECTION=PATH")?;
    Ok((dir.to_string(), PathBuf::from(path)))
}

fn parse_scorer(arg: &str) -> Result<ScorerSpec> {
    if arg == "lexical_overlap" {
        return Ok(ScorerSpec::new("lexical_overlap", ScorerKind::LexicalOverlap));
    }
    if let Some(rest) = arg.strip_prefix("synthetic") {
        let mut params = SyntheticParams::default();
        let mut name = "synthetic".to_string();
        let rest = rest.strip_prefix(':').unwrap_or(rest);
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("scorer option {kv:?} is not key=value")))?;
            let num = || {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("{k}: {v:?} is not a number")))
            };
            match k {
                "name" => name = v.to_string(),
                "base" => params.base = num()?,
                "alpha" => params.alpha = num()?,
                "sigma" => params.sigma = num()?,
                "seed" => params.seed = v.parse().map_err(|_| Error::Config(format!("seed: {v:?}")))?,
                "density" => params.emit_density = v == "true",
                _ => return Err(Error::Config(format!("unknown synthetic option {k}"))),
            }
        }
        return Ok(ScorerSpec::synthetic(name, params));
    }
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return serde_json::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")));
    }
    Err(Error::Config(format!("unknown scorer {arg:?}")))
}

impl ScorerArgs {
    fn scorers(&self) -> Result<Vec<ScorerConfig>> {
        let mut specs = self
            .scorer
            .iter()
            .map(|s| parse_scorer(s))
            .collect::<Result<Vec<_>>>()?;
        let timeout = self.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
        if let Some(cmd) = &self.adapter_cmd {
            specs.push(ScorerSpec::subprocess("adapter", cmd, timeout));
        }
        if let Some(url) = &self.adapter_url {
            specs.push(ScorerSpec::http("http", url, timeout));
        }
        Ok(specs
            .into_iter()
            .map(|mut spec| {
                if let Some(o) = self.orientation {
                    spec.declared_orientation = o;
                }
                ScorerConfig {
                    spec,
                    mode: self.mode.unwrap_or_default(),
                }
            })
            .collect())
    }

    fn apply(&self, cfg: &mut AuditConfig) -> Result<()> {
        cfg.scorers.extend(self.scorers()?);
        for s in &mut cfg.scorers {
            if let Some(t) = self.timeout_secs {
                s.spec.set_timeout(t);
            }
            if let Some(m) = self.mode {
                s.mode = m;
            }
        }
        Ok(())
    }
}

impl SuiteArgs {
    fn config(&self) -> Result<AuditConfig> {
        let path = self
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => AuditConfig::load(&p)?,
            None => AuditConfig::from_json(r#"{"scorers":[]}"#)?,
        };
        cfg.corpora.extend(self.corpus.iter().map(|p| CorpusInput {
            path: p.clone(),
            format: None,
            label: None,
        }));
        cfg.chunks.extend(self.chunks.iter().map(|(d, p)| ChunkInput {
            path: p.clone(),
            direction: d.clone(),
        }));
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.thresholds {
            cfg.suite.thresholds = v.clone();
        }
        if let Some(v) = self.max_segments {
            cfg.suite.max_segments = v;
        }
        if let Some(v) = self.window_tokens {
            cfg.suite.window_tokens = v;
        }
        if let Some(v) = &self.separator {
            cfg.suite.separator = v.clone();
        }
        if let Some(v) = self.min_chunk_tokens {
            cfg.suite.min_chunk_tokens = v;
        }
        if let Some(v) = self.max_chunk_tokens {
            cfg.suite.max_chunk_tokens = v;
        }
        if let Some(scheme) = self.counter {
            cfg.counter = TokenCounter {
                scheme,
                external_command: self.counter_cmd.clone(),
            };
        } else if let Some(cmd) = &self.counter_cmd {
            cfg.counter = TokenCounter::external(cmd);
        }
        Ok(cfg)
    }
}

fn out_dir(flag: &Option<PathBuf>, cfg: &AuditConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory (--out-dir or out_dir in config)".into()))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            input,
            format,
            out,
            out_format,
        } => {
            let corpus = load_corpus(&input, format.unwrap_or_else(|| CorpusFormat::from_path(&input)))?;
            save_corpus(
                &corpus,
                &out,
                out_format.unwrap_or_else(|| CorpusFormat::from_path(&out)),
            )?;
            println!(
                "{}: {} documents, {} segments",
                corpus.lang_pair,
                corpus.documents.len(),
                corpus.segment_count()
            );
        }
        Command::BuildSuite { suite, out_dir: flag } => {
            let cfg = suite.config()?;
            cfg.validate_inputs()?;
            let dir = out_dir(&flag, &cfg)?;
            let data = SuiteData::build(&cfg)?;
            data.save(&dir)?;
            for l in &data.languages {
                println!("{}: {} groups, {} discarded", l.language, l.groups.len(), l.discarded);
            }
            for p in &data.pair_sets {
                println!("{}: {} pairs, {} dropped", p.direction, p.pairs.len(), p.dropped);
            }
        }
        Command::Perturb {
            suite_dir,
            severity,
            dimension,
            rule,
            seed,
            adapter_cmd,
            timeout_secs,
        } => {
            let mut data = SuiteData::load(&suite_dir)?;
            let p = PerturbConfig {
                severity,
                dimension,
                rule,
                seed: Some(seed),
                adapter: adapter_cmd.map(|command| PerturbAdapter { command, timeout_secs }),
            };
            data.add_perturbation(&p, seed)?;
            data.save_perturbed(&suite_dir)?;
            for s in data
                .perturbed
                .iter()
                .filter(|s| s.category == lenbias::perturb::category_label(severity, dimension))
            {
                println!(
                    "{} {}: {} groups, {} rejected",
                    s.category,
                    s.language,
                    s.groups.len(),
                    s.rejected
                );
            }
        }
        Command::Score {
            suite_dir,
            scorers,
            out_dir: flag,
        } => {
            let data = SuiteData::load(&suite_dir)?;
            let configs = scorers.scorers()?;
            if configs.is_empty() {
                return Err(Error::Config("no scorer given".into()));
            }
            let dir = flag.unwrap_or_else(|| suite_dir.clone());
            for sc in &configs {
                sc.spec.validate()?;
                let identity = ScorerIdentity::of(&sc.spec, sc.mode);
                let responses = score_batch(&sc.spec, &data.requests(sc.mode, identity.scores_passages))?;
                save_scores(&dir, sc, &responses)?;
                println!("{}: {} scores", sc.spec.name, responses.len());
            }
        }
        Command::Analyze {
            suite_dir,
            scores_dir,
            out,
            ci_level,
            bin_width,
            hist_lo,
            hist_hi,
        } => {
            let data = SuiteData::load(&suite_dir)?;
            let scores = load_scores(scores_dir.as_deref().unwrap_or(&suite_dir))?;
            if scores.is_empty() {
                return Err(Error::Config(format!("no scores found in {}", suite_dir.display())));
            }
            let digest_input = serde_json::to_vec(&(
                &data.thresholds,
                data.max_segments,
                &data.length_unit,
                scores.iter().map(|s| &s.0).collect::<Vec<_>>(),
                ci_level,
                bin_width,
                hist_lo,
                hist_hi,
            ))?;
            let settings = AnalysisSettings {
                ci_level,
                histogram: lenbias::report::config::HistogramConfig {
                    bin_width,
                    lo: hist_lo,
                    hi: hist_hi,
                },
                config_digest: lenbias::report::config::sha256_hex(&digest_input),
                seed: 0,
            };
            let runs: Vec<ScorerRun> = scores
                .into_iter()
                .map(|(cfg, responses)| ScorerRun {
                    identity: ScorerIdentity::of(&cfg.spec, cfg.mode),
                    responses: Ok(responses),
                })
                .collect();
            let report = analyze(&data, &settings, &runs)?;
            report.save(&out)?;
            print_summary(&report);
        }
        Command::Report { report, out_dir } => {
            let report = BiasReport::load(&report)?;
            lenbias::io::create_dir(&out_dir)?;
            let mut n = lenbias::report::emit_tables(&report, &out_dir)?.len();
            n += lenbias::report::emit_charts(&report, &out_dir)?.len();
            println!("wrote {n} files to {}", out_dir.display());
        }
        Command::Audit {
            suite,
            scorers,
            out_dir: flag,
        } => {
            let mut cfg = suite.config()?;
            scorers.apply(&mut cfg)?;
            let dir = out_dir(&flag, &cfg)?;
            cfg.out_dir = Some(dir.clone());
            cfg.validate()?;
            let data = SuiteData::build(&cfg)?;
            data.save(&dir)?;
            let pairs: Vec<_> = cfg.scorers.iter().map(|s| (s.spec.clone(), s.mode)).collect();
            let runs = score_all(&data, &pairs);
            for (sc, run) in cfg.scorers.iter().zip(&runs) {
                if let Ok(r) = &run.responses {
                    save_scores(&dir, sc, r)?;
                }
            }
            let report = analyze(&data, &settings_for(&cfg)?, &runs)?;
            let files = write_report(&report, &dir)?;
            print_summary(&report);
            println!("wrote {} files to {}", files.len(), dir.display());
        }
        Command::Conformance {
            adapter_cmd,
            vectors,
            timeout_secs,
        } => {
            let cases = match vectors {
                Some(p) => parse_vectors(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?,
                None => builtin_vectors(),
            };
            let report = run_conformance(&adapter_cmd, &cases, Duration::from_secs(timeout_secs.max(1)));
            for c in &report.cases {
                if c.passed {
                    println!("PASS {}", c.name);
                } else {
                    println!("FAIL {}: {}", c.name, c.detail);
                }
            }
            if !report.passed() {
                let failed = report.cases.iter().filter(|c| !c.passed).count();
                return Err(Error::Protocol(format!("{failed} conformance case(s) failed")));
            }
        }
    }
    Ok(())
}

fn print_summary(report: &BiasReport) {
    for s in &report.scorers {
        match &s.error {
            Some(e) => println!("{}: failed: {e}", s.scorer.name),
            None => {
                for p in &s.passages {
                    println!(
                        "{} {}: trend {}/{}, slope {}",
                        s.scorer.name,
                        p.language,
                        p.trend.n_decreasing,
                        p.trend.n_docs,
                        p.slope.map_or("—".into(), |v| format!("{v:.4}"))
                    );
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
