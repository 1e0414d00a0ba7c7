//! `dataprio`: validate inputs, aggregate judgments, score data items and
//! run the workshop service.
//!
//! Exit status is 0 on success, 1 when inputs break an invariant or a probe
//! is inconsistent, and 2 when a file cannot be read or parsed.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dataprio_core::io::{
    self, export_report, AggregatedParametersDoc, ImportError, ReportFormat, ReportRef,
};
use dataprio_core::scoring::{
    compare_top_n, scenario_delta, ItemDelta, RankedItem, TopNComparison,
};
use dataprio_core::{
    build_consensus, consistency_probe, perturb_sensitivity, rollup_weights, validate_judgments,
    ConsensusParameters, Error as CoreError, LinkingModel, PriorityReport, ScenarioJudgments,
    SensitivityConfig, SupportPolicy,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "dataprio",
    version,
    about = "Decision-driven prioritisation of data items"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model and, optionally, judgments or aggregated parameters against it.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long)]
        aggregated: Option<PathBuf>,
    },
    /// Aggregate judgments into a decision weight and support file.
    Weights {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        exclude_zeros: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score and rank data items.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        source: ParamSource,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Scenario id written into the report.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the swings of a subset of siblings with one sibling.
    Probe {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        assessor: String,
        #[arg(long)]
        group: String,
        #[arg(long, value_delimiter = ',', required = true)]
        subset: Vec<String>,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0.005)]
        tolerance: f64,
    },
    /// Sum decision weights per process and value stream.
    Rollup {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        source: ParamSource,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two priority reports (JSON or CSV).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank stability under multiplicative noise on swings and supports.
    Sensitivity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        exclude_zeros: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the workshop HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory for on-demand judgment snapshots.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ParamSource {
    /// Raw judgments; consensus is computed on the fly.
    #[arg(
        long,
        required_unless_present = "aggregated",
        conflicts_with = "aggregated"
    )]
    judgments: Option<PathBuf>,
    /// Finished decision weights and supports.
    #[arg(long)]
    aggregated: Option<PathBuf>,
    /// Leave zero support votes out of the geometric mean.
    #[arg(long)]
    exclude_zeros: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

enum Failure {
    /// Exit 1.
    Invalid(String),
    /// Exit 2.
    Input(String),
}

impl Failure {
    fn in_file(self, path: &Path) -> Self {
        match self {
            Failure::Invalid(m) => Failure::Invalid(format!("{}: {m}", path.display())),
            Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        }
    }
}

impl From<ImportError> for Failure {
    fn from(e: ImportError) -> Self {
        match e {
            ImportError::Invariant(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(_) => Failure::Input(e.to_string()),
            CoreError::InvalidModel(ref r) | CoreError::InvalidJudgments(ref r) => {
                Failure::Invalid(format!("{e}\n{r}"))
            }
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<LinkingModel, Failure> {
    let model = io::parse_model(&read(path)?).map_err(|e| Failure::from(e).in_file(path))?;
    if model.synthetic_links {
        eprintln!("note: {} uses illustrative analysis links", path.display());
    }
    Ok(model)
}

fn load_judgments(path: &Path) -> Result<ScenarioJudgments, Failure> {
    io::parse_judgments(&read(path)?).map_err(|e| Failure::from(e).in_file(path))
}

fn load_aggregated(path: &Path) -> Result<AggregatedParametersDoc, Failure> {
    io::parse_aggregated(&read(path)?).map_err(|e| Failure::from(e).in_file(path))
}

fn policy(exclude_zeros: bool) -> SupportPolicy {
    if exclude_zeros {
        SupportPolicy::ExcludeZeros
    } else {
        SupportPolicy::Strict
    }
}

/// Parameters plus the scenario id they came from.
fn load_parameters(
    model: &LinkingModel,
    source: &ParamSource,
) -> Result<(ConsensusParameters, String), Failure> {
    if let Some(path) = &source.judgments {
        let j = load_judgments(path)?;
        let params = build_consensus(model, &j, policy(source.exclude_zeros))
            .map_err(|e| Failure::from(e).in_file(path))?;
        Ok((params, j.scenario_id))
    } else {
        let path = source
            .aggregated
            .as_ref()
            .expect("clap requires one source");
        if source.exclude_zeros {
            return Err(Failure::Input("--exclude-zeros needs --judgments".into()));
        }
        let doc = load_aggregated(path)?;
        let params = doc
            .into_parameters(model)
            .map_err(|e| Failure::from(e).in_file(path))?;
        Ok((params, "aggregated".into()))
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, bytes)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Input(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

fn validate(model: &Path, judgments: Option<&Path>, aggregated: Option<&Path>) -> Outcome {
    let m = load_model(model)?;
    let mut out = format!(
        "model {}: {} value streams, {} processes, {} decisions, {} data items, {} analyses\n",
        m.name,
        m.value_streams.len(),
        m.process_count(),
        m.decision_count(),
        m.data_items.len(),
        m.analyses.len()
    );
    if let Some(path) = judgments {
        let j = load_judgments(path)?;
        let report = validate_judgments(&m, &j);
        if !report.is_empty() {
            return Err(Failure::Invalid(format!("{}:\n{report}", path.display())));
        }
        out += &format!(
            "judgments {}: {} assessors, {} swing judgments, {} support judgments\n",
            j.scenario_id,
            j.assessors.len(),
            j.swing_judgments.len(),
            j.support_judgments.len()
        );
    }
    if let Some(path) = aggregated {
        let doc = load_aggregated(path)?;
        let sum = doc.weight_sum();
        doc.into_parameters(&m)
            .map_err(|e| Failure::from(e).in_file(path))?;
        out += &format!("aggregated parameters: weights sum to {sum:.4}\n");
    }
    emit(None, out.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn weights(model: &Path, judgments: &Path, exclude_zeros: bool, out: Option<&Path>) -> Outcome {
    let m = load_model(model)?;
    let j = load_judgments(judgments)?;
    let params = build_consensus(&m, &j, policy(exclude_zeros))
        .map_err(|e| Failure::from(e).in_file(judgments))?;
    let doc = AggregatedParametersDoc::from_parameters(&params, &m);
    emit(out, io::to_json(&doc).as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn ranking_text(report: &PriorityReport) -> String {
    let width = report
        .ranking
        .iter()
        .map(|r| r.item_id.len())
        .max()
        .unwrap_or(0)
        .max(4);
    let mut s = format!(
        "scenario {}: {} items, total weighted support {:.4}\n",
        report.scenario_id,
        report.item_scores.len(),
        report.total_weighted_support
    );
    if report.unsupported_decision_weight > 0.0 {
        s += &format!(
            "weighted support of decisions without linked items: {:.4}\n",
            report.unsupported_decision_weight
        );
    }
    s += &format!("{:>4}  {:<width$}  {:>8}  name\n", "rank", "item", "index");
    for r in &report.ranking {
        s += &format!(
            "{:>4}  {:<width$}  {:>8.6}  {} ({})\n",
            r.rank, r.item_id, r.score, r.name, r.category
        );
    }
    s
}

fn score(
    model: &Path,
    source: &ParamSource,
    top: Option<usize>,
    format: Format,
    scenario: Option<String>,
    out: Option<&Path>,
) -> Outcome {
    let m = load_model(model)?;
    let (params, default_id) = load_parameters(&m, source)?;
    let report = PriorityReport::build(scenario.unwrap_or(default_id), &m, &params, top)?;
    let bytes = match format {
        Format::Text => ranking_text(&report).into_bytes(),
        Format::Csv => export_report(ReportRef::Priority(&report), ReportFormat::Csv),
        Format::Json => export_report(ReportRef::Priority(&report), ReportFormat::Json),
    };
    emit(out, &bytes)?;
    Ok(ExitCode::SUCCESS)
}

fn probe(
    judgments: &Path,
    assessor: &str,
    group: &str,
    subset: &[String],
    target: &str,
    tolerance: f64,
) -> Outcome {
    let j = load_judgments(judgments)?;
    let judgment = j
        .swing_judgments
        .iter()
        .find(|s| s.assessor_id == assessor && s.group_id == group)
        .ok_or_else(|| {
            Failure::Invalid(format!(
                "no swing judgment by `{assessor}` for group `{group}`"
            ))
        })?;
    let r = consistency_probe(judgment, subset, target)?;
    let consistent = r.is_consistent(tolerance);
    let text = format!(
        "ratio {:.2}\nsubset {} = {:.2}, target {} = {:.2}: {}\n",
        r.ratio,
        subset.join("+"),
        r.subset_sum,
        target,
        r.target_value,
        if consistent {
            "consistent"
        } else {
            "inconsistent, revisit these swings"
        }
    );
    emit(None, text.as_bytes())?;
    Ok(if consistent {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn rollup(model: &Path, source: &ParamSource, format: Format, out: Option<&Path>) -> Outcome {
    let m = load_model(model)?;
    let (params, _) = load_parameters(&m, source)?;
    let r = rollup_weights(&params, &m)?;
    let bytes = match format {
        Format::Json => io::to_json(&r).into_bytes(),
        Format::Text => {
            let mut s = String::new();
            for vs in &r.value_streams {
                s += &format!("{:.4}  {}\n", vs.weight, vs.name);
                for p in r
                    .processes
                    .iter()
                    .filter(|p| p.value_stream_id == vs.value_stream_id)
                {
                    s += &format!("  {:.4}  {}\n", p.weight, p.name);
                }
            }
            s.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let rows = w
                .write_record(["value_stream_id", "process_id", "name", "weight"])
                .and_then(|_| {
                    r.processes.iter().try_for_each(|p| {
                        w.write_record([
                            &p.value_stream_id,
                            &p.process_id,
                            &p.name,
                            &format!("{:.6}", p.weight),
                        ])
                    })
                });
            rows.map_err(|e| Failure::Input(e.to_string()))?;
            w.into_inner().map_err(|e| Failure::Input(e.to_string()))?
        }
    };
    emit(out, &bytes)?;
    Ok(ExitCode::SUCCESS)
}

/// Reads a JSON priority report or a CSV ranking as written by `score`.
fn load_report(path: &Path) -> Result<PriorityReport, Failure> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        return io::parse_priority_report(&text).map_err(|e| Failure::from(e).in_file(path));
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut ranking = Vec::new();
    for row in rdr.records() {
        let bad = |m: String| Failure::Input(format!("{}: {m}", path.display()));
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", row.len())));
        }
        ranking.push(RankedItem {
            rank: row[0]
                .parse()
                .map_err(|_| bad(format!("bad rank `{}`", &row[0])))?,
            item_id: row[1].to_string(),
            name: row[2].to_string(),
            category: row[3].to_string(),
            score: row[4]
                .parse()
                .map_err(|_| bad(format!("bad index `{}`", &row[4])))?,
        });
    }
    Ok(PriorityReport {
        scenario_id: path.display().to_string(),
        item_scores: ranking
            .iter()
            .map(|r| (r.item_id.clone(), r.score))
            .collect(),
        ranking,
        total_weighted_support: f64::NAN,
        unsupported_decision_weight: f64::NAN,
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Comparison {
    top: TopNComparison,
    /// Present only when both reports cover the same items.
    rank_changes: Option<Vec<ItemDelta>>,
}

fn compare(a: &Path, b: &Path, top: usize, format: Format, out: Option<&Path>) -> Outcome {
    let (ra, rb) = (load_report(a)?, load_report(b)?);
    let ids = |r: &PriorityReport| {
        r.ranking
            .iter()
            .map(|e| e.item_id.clone())
            .collect::<Vec<_>>()
    };
    let cmp = Comparison {
        top: compare_top_n(&ids(&ra), &ids(&rb), top)?,
        rank_changes: scenario_delta(&ra, &rb).ok(),
    };
    let bytes = match format {
        Format::Json => io::to_json(&cmp).into_bytes(),
        Format::Csv => {
            return Err(Failure::Input(
                "compare supports text or json output".into(),
            ));
        }
        Format::Text => {
            let t = &cmp.top;
            let mut s = format!("top {} overlap: {}/{}\n", t.n, t.overlap_count, t.n);
            s += &format!("common: {}\n", t.common_ids.join(", "));
            s += &format!("only in {}: {}\n", a.display(), t.only_a.join(", "));
            s += &format!("only in {}: {}\n", b.display(), t.only_b.join(", "));
            match &cmp.rank_changes {
                Some(deltas) => {
                    let moved: Vec<&ItemDelta> =
                        deltas.iter().filter(|d| d.rank_delta != 0).collect();
                    s += &format!("rank changes: {}\n", moved.len());
                    for d in moved {
                        s += &format!(
                            "  {}  {} -> {} ({:+})\n",
                            d.item_id, d.rank_a, d.rank_b, d.rank_delta
                        );
                    }
                }
                None => s += "rank changes: reports cover different items\n",
            }
            s.into_bytes()
        }
    };
    emit(out, &bytes)?;
    Ok(ExitCode::SUCCESS)
}

fn sensitivity(
    model: &Path,
    judgments: &Path,
    config: SensitivityConfig,
    format: Format,
    out: Option<&Path>,
) -> Outcome {
    let m = load_model(model)?;
    let j = load_judgments(judgments)?;
    let report = perturb_sensitivity(&m, &j, &config)?;
    let bytes = match format {
        Format::Csv => export_report(ReportRef::Sensitivity(&report), ReportFormat::Csv),
        Format::Json => export_report(ReportRef::Sensitivity(&report), ReportFormat::Json),
        Format::Text => {
            let mut s = format!(
                "scenario {}: epsilon {}, {} trials, seed {}\n",
                report.scenario_id, report.epsilon, report.trials, report.seed
            );
            s += &format!(
                "{:>4}  {:>9}  {:>6}  item\n",
                "rank",
                "range",
                format!("top-{}", report.top_k)
            );
            for i in &report.items {
                s += &format!(
                    "{:>4}  {:>9}  {:>6.3}  {}\n",
                    i.baseline_rank,
                    format!("{}-{}", i.min_rank, i.max_rank),
                    i.top_k_probability,
                    i.item_id
                );
            }
            s.into_bytes()
        }
    };
    emit(out, &bytes)?;
    Ok(ExitCode::SUCCESS)
}

fn serve(host: IpAddr, port: u16, snapshot_dir: Option<PathBuf>) -> Outcome {
    let state = match snapshot_dir {
        Some(dir) => dataprio_service::AppState::with_snapshot_dir(dir),
        None => dataprio_service::AppState::new(),
    };
    let addr = SocketAddr::new(host, port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Input(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(dataprio_service::serve(addr, state))
        .map_err(|e| Failure::Input(format!("{addr}: {e}")))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate {
            model,
            judgments,
            aggregated,
        } => validate(&model, judgments.as_deref(), aggregated.as_deref()),
        Command::Weights {
            model,
            judgments,
            exclude_zeros,
            out,
        } => weights(&model, &judgments, exclude_zeros, out.as_deref()),
        Command::Score {
            model,
            source,
            top,
            format,
            scenario,
            out,
        } => score(&model, &source, top, format, scenario, out.as_deref()),
        Command::Probe {
            judgments,
            assessor,
            group,
            subset,
            target,
            tolerance,
        } => probe(&judgments, &assessor, &group, &subset, &target, tolerance),
        Command::Rollup {
            model,
            source,
            format,
            out,
        } => rollup(&model, &source, format, out.as_deref()),
        Command::Compare {
            a,
            b,
            top,
            format,
            out,
        } => compare(&a, &b, top, format, out.as_deref()),
        Command::Sensitivity {
            model,
            judgments,
            epsilon,
            trials,
            seed,
            top_k,
            exclude_zeros,
            format,
            out,
        } => {
            let config = SensitivityConfig {
                epsilon,
                trials,
                seed,
                top_k,
                policy: policy(exclude_zeros),
            };
            sensitivity(&model, &judgments, config, format, out.as_deref())
        }
        Command::Serve {
            port,
            host,
            snapshot_dir,
        } => serve(host, port, snapshot_dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
