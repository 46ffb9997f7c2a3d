//! Command-line driver: loads the JSON data set, runs the scoring pipeline,
//! renders reports, validates inputs, exports diagrams, and runs the
//! validation statistics. Exit codes: 0 success, 1 validation failure,
//! 2 degenerate statistics input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use midrisk_core::afd::{self, Afd};
use midrisk_core::attacks::AttackCatalog;
use midrisk_core::capec::PatternCatalog;
use midrisk_core::elicitation::{self, ConsensusVector, SubjectKind};
use midrisk_core::report::{self, ReportFormat, ReportMeta, ReportSort};
use midrisk_core::risk::{self, Aggregation, SeverityModel, ShiftCalibration};
use midrisk_core::stats;
use midrisk_core::Error;

#[derive(Parser)]
#[command(
    name = "midrisk",
    version,
    about = "Risk-assessment pipeline for medical imaging devices"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Directory holding the JSON data files
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    /// Write output to this file instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format for assess
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Likelihood shift: a real number, or calibrate:<direct-estimates path>
    #[arg(
        long,
        global = true,
        default_value = "-0.13",
        allow_hyphen_values = true,
        value_parser = parse_shift_spec
    )]
    shift: ShiftSpec,
    /// How an attack's mapped pattern scores combine
    #[arg(long, global = true, value_enum, default_value_t = AggregationArg::Mean)]
    aggregation: AggregationArg,
    /// Suppress timestamps so reruns are byte-identical
    #[arg(long, global = true)]
    reproducible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Score every attack and render the risk report
    Assess(AssessArgs),
    /// Run a rank-correlation or paired-difference test on two vectors
    Stats(StatsArgs),
    /// Validate the pattern catalog, attack mappings, and diagrams
    Validate(ValidateArgs),
    /// Export one device diagram as Graphviz DOT
    ExportAfd(ExportArgs),
    /// Print how many patterns cover how many attacks
    Compression(CompressionArgs),
}

#[derive(Args)]
struct AssessArgs {
    /// Pattern catalog path (default <data-dir>/capec_subset.json)
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Attack catalog path (default <data-dir>/attacks_mid.json)
    #[arg(long)]
    attacks: Option<PathBuf>,
    /// Pattern-likelihood consensus path (default <data-dir>/capec_estimates.json)
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Severity consensus path (default <data-dir>/severity_estimates.json)
    #[arg(long)]
    severities: Option<PathBuf>,
    /// Severity model path (default <data-dir>/severity_model.json)
    #[arg(long)]
    severity_model: Option<PathBuf>,
    /// Row ordering in the report
    #[arg(long, value_enum, default_value_t = SortArg::Grouped)]
    sort: SortArg,
}

#[derive(Args)]
struct StatsArgs {
    /// Test to run
    #[arg(long, value_enum)]
    method: MethodArg,
    /// First vector: JSON number array or a document with keyed scores
    vector_a: PathBuf,
    /// Second vector, same form as the first
    vector_b: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Pattern catalog path (default <data-dir>/capec_subset.json)
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Attack catalog path (default <data-dir>/attacks_mid.json)
    #[arg(long)]
    attacks: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Diagram id to export (e.g. mid, ct, mri, ultrasound)
    #[arg(long)]
    device: String,
}

#[derive(Args)]
struct CompressionArgs {
    /// Attack catalog path (default <data-dir>/attacks_mid.json)
    #[arg(long)]
    attacks: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    JsonLines,
}

impl From<FormatArg> for ReportFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::JsonLines => ReportFormat::JsonLines,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggregationArg {
    Mean,
    Max,
}

impl From<AggregationArg> for Aggregation {
    fn from(arg: AggregationArg) -> Self {
        match arg {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Max => Aggregation::Max,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SortArg {
    Grouped,
    Global,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Spearman,
    PairedT,
}

#[derive(Clone, Debug)]
enum ShiftSpec {
    Fixed(f64),
    Calibrate(PathBuf),
}

fn parse_shift_spec(text: &str) -> Result<ShiftSpec, String> {
    if let Some(path) = text.strip_prefix("calibrate:") {
        if path.is_empty() {
            return Err("calibrate: needs a path to direct estimates".to_string());
        }
        return Ok(ShiftSpec::Calibrate(PathBuf::from(path)));
    }
    text.parse::<f64>()
        .map(ShiftSpec::Fixed)
        .map_err(|_| format!("expected a number or calibrate:<path>, got {text:?}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let code = u8::from(error.use_stderr());
            let _ = error.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(cli))
}

fn run(cli: Cli) -> u8 {
    match &cli.command {
        Command::Assess(args) => run_assess(&cli.global, args),
        Command::Stats(args) => run_stats(&cli.global, args),
        Command::Validate(args) => run_validate(&cli.global, args),
        Command::ExportAfd(args) => run_export(&cli.global, args),
        Command::Compression(args) => run_compression(&cli.global, args),
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
            lock.flush()
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> u8 {
    match write_output(out, text) {
        Ok(()) => 0,
        Err(error) => {
            eprintln!("error: failed to write output: {error}");
            1
        }
    }
}

fn resolve(dir: &Path, override_path: &Option<PathBuf>, default_name: &str) -> PathBuf {
    override_path
        .clone()
        .unwrap_or_else(|| dir.join(default_name))
}

/// Diagrams are every `afd_*.json` in the data directory, in filename order.
fn load_diagrams(dir: &Path) -> midrisk_core::Result<Vec<Afd>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| {
            path.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("afd_") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    paths.iter().map(|path| Afd::from_path(path)).collect()
}

struct StageError {
    stage: &'static str,
    message: String,
}

fn stage_error(stage: &'static str, error: impl std::fmt::Display) -> StageError {
    StageError {
        stage,
        message: error.to_string(),
    }
}

fn run_assess(global: &GlobalArgs, args: &AssessArgs) -> u8 {
    match cmd_assess(global, args) {
        Ok(rendered) => emit(&global.out, &rendered),
        Err(errors) => {
            let entries: Vec<serde_json::Value> = errors
                .iter()
                .map(|e| serde_json::json!({ "stage": e.stage, "message": e.message }))
                .collect();
            let listing = serde_json::json!({ "errors": entries });
            eprintln!("{listing}");
            1
        }
    }
}

fn cmd_assess(global: &GlobalArgs, args: &AssessArgs) -> Result<String, Vec<StageError>> {
    let dir = &global.data_dir;
    let mut errors = Vec::new();

    let patterns = PatternCatalog::from_path(&resolve(dir, &args.patterns, "capec_subset.json"))
        .map_err(|e| errors.push(stage_error("patterns", e)))
        .ok();
    if let Some(patterns) = &patterns {
        for violation in patterns.validate().violations {
            errors.push(stage_error("patterns", violation));
        }
    }

    let attacks = AttackCatalog::from_path(&resolve(dir, &args.attacks, "attacks_mid.json"))
        .map_err(|e| errors.push(stage_error("attacks", e)))
        .ok();
    if let (Some(patterns), Some(attacks)) = (&patterns, &attacks) {
        for violation in attacks.validate_mappings(patterns) {
            errors.push(stage_error("attacks", violation));
        }
    }

    let capec_consensus =
        elicitation::load_consensus_path(&resolve(dir, &args.estimates, "capec_estimates.json"))
            .and_then(|vector| {
                if vector.kind == SubjectKind::CapecLikelihood {
                    Ok(vector)
                } else {
                    Err(Error::Integrity(format!(
                        "expected pattern-likelihood scores, got {}",
                        vector.kind
                    )))
                }
            })
            .map_err(|e| errors.push(stage_error("estimates", e)))
            .ok();

    let severity_consensus = elicitation::load_consensus_path(&resolve(
        dir,
        &args.severities,
        "severity_estimates.json",
    ))
    .and_then(|vector| match &vector.kind {
        SubjectKind::SeverityMagnitude(aspect) => Ok((aspect.clone(), vector)),
        other => Err(Error::Integrity(format!(
            "expected severity scores, got {other}"
        ))),
    })
    .map_err(|e| errors.push(stage_error("severities", e)))
    .ok();

    let model = SeverityModel::from_path(&resolve(
        dir,
        &args.severity_model,
        "severity_model.json",
    ))
    .map_err(|e| errors.push(stage_error("severity-model", e)))
    .ok();

    if !errors.is_empty() {
        return Err(errors);
    }
    let (attacks, capec_consensus, model) =
        (attacks.unwrap(), capec_consensus.unwrap(), model.unwrap());
    let (aspect, severity_vector) = severity_consensus.unwrap();
    let severity_map: BTreeMap<String, ConsensusVector> =
        [(aspect, severity_vector)].into_iter().collect();

    let aggregation = Aggregation::from(global.aggregation);
    let calibration = match &global.shift {
        ShiftSpec::Fixed(c) => ShiftCalibration::fixed(*c)
            .map_err(|e| vec![stage_error("calibration", e)])?,
        ShiftSpec::Calibrate(path) => {
            calibrate_from_surveys(path, &capec_consensus, &attacks, aggregation)
                .map_err(|e| vec![stage_error("calibration", e)])?
        }
    };

    let assessment = risk::assess(
        &attacks,
        &capec_consensus,
        &severity_map,
        &model,
        &calibration,
        aggregation,
    )
    .map_err(|e| vec![stage_error("assess", e)])?;
    for event in &assessment.clamp_events {
        eprintln!(
            "warning: shifted likelihood for {} clamped from {} to {}",
            event.attack_id, event.unclamped, event.clamped
        );
    }

    let severity_provenance = &severity_map.values().next().unwrap().provenance;
    let meta = ReportMeta {
        shift: calibration.c_like(),
        shift_source: calibration.source.as_str().to_string(),
        aggregation: aggregation.as_str().to_string(),
        severity_model: model.describe(),
        panel: format!(
            "{}; {}",
            describe_panel("pattern likelihood", &capec_consensus.provenance),
            describe_panel("severity", severity_provenance)
        ),
        timestamp: if global.reproducible {
            None
        } else {
            Some(unix_now())
        },
    };
    let sort = match args.sort {
        SortArg::Grouped => ReportSort::GroupedByDevice,
        SortArg::Global => ReportSort::Global,
    };
    let doc = report::build_report(&assessment.rows, &attacks, meta, sort)
        .map_err(|e| vec![stage_error("report", e)])?;
    Ok(report::render_report(&doc, global.format.into()))
}

fn calibrate_from_surveys(
    path: &Path,
    capec_consensus: &ConsensusVector,
    attacks: &AttackCatalog,
    aggregation: Aggregation,
) -> midrisk_core::Result<ShiftCalibration> {
    let surveys = elicitation::load_surveys_path(path)?;
    let sets: Vec<_> = surveys.into_iter().map(|(_, set)| set).collect();
    let direct = elicitation::build_medle(&sets)?;
    let derived = elicitation::build_mecble_with(capec_consensus, attacks, aggregation)?;
    risk::calibrate_shift(&derived, &direct)
}

fn describe_panel(label: &str, provenance: &elicitation::Provenance) -> String {
    match provenance.panel_size {
        Some(size) => format!("{label}: panel of {size} ({})", provenance.aggregation),
        None => format!("{label}: {}", provenance.aggregation),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

enum LoadedVector {
    Plain(Vec<f64>),
    Keyed(BTreeMap<String, f64>),
}

fn load_vector(path: &Path) -> midrisk_core::Result<LoadedVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: format!("vector document {}", path.display()),
        source: e,
    })?;
    let as_number = |v: &serde_json::Value| v.as_f64();
    match &value {
        serde_json::Value::Array(items) => {
            let mut numbers = Vec::with_capacity(items.len());
            for item in items {
                match as_number(item) {
                    Some(n) => numbers.push(n),
                    None => {
                        return Err(Error::Integrity(format!(
                            "vector document {} contains a non-numeric entry",
                            path.display()
                        )))
                    }
                }
            }
            Ok(LoadedVector::Plain(numbers))
        }
        serde_json::Value::Object(fields) => {
            let scores = match fields.get("scores") {
                Some(serde_json::Value::Object(scores)) => scores,
                Some(_) => {
                    return Err(Error::Integrity(format!(
                        "vector document {}: \"scores\" must be an object",
                        path.display()
                    )))
                }
                None => fields,
            };
            let mut keyed = BTreeMap::new();
            for (key, raw) in scores {
                match as_number(raw) {
                    Some(n) => {
                        keyed.insert(key.clone(), n);
                    }
                    None => {
                        return Err(Error::Integrity(format!(
                            "vector document {}: score {key:?} is not numeric",
                            path.display()
                        )))
                    }
                }
            }
            Ok(LoadedVector::Keyed(keyed))
        }
        _ => Err(Error::Integrity(format!(
            "vector document {} must be a number array or a keyed score map",
            path.display()
        ))),
    }
}

/// Pairs the two vectors: keyed maps align on identical key sets, plain
/// arrays pair positionally.
fn align_vectors(a: LoadedVector, b: LoadedVector) -> midrisk_core::Result<(Vec<f64>, Vec<f64>)> {
    match (a, b) {
        (LoadedVector::Plain(x), LoadedVector::Plain(y)) => Ok((x, y)),
        (LoadedVector::Keyed(x), LoadedVector::Keyed(y)) => {
            let missing_in_b: Vec<String> = x
                .keys()
                .filter(|k| !y.contains_key(*k))
                .cloned()
                .collect();
            if !missing_in_b.is_empty() {
                return Err(Error::Coverage {
                    context: "second vector".to_string(),
                    missing: missing_in_b,
                });
            }
            let missing_in_a: Vec<String> = y
                .keys()
                .filter(|k| !x.contains_key(*k))
                .cloned()
                .collect();
            if !missing_in_a.is_empty() {
                return Err(Error::Coverage {
                    context: "first vector".to_string(),
                    missing: missing_in_a,
                });
            }
            let paired_b: Vec<f64> = x.keys().map(|k| y[k]).collect();
            Ok((x.into_values().collect(), paired_b))
        }
        _ => Err(Error::Integrity(
            "vectors must both be plain arrays or both keyed score maps".to_string(),
        )),
    }
}

fn run_stats(global: &GlobalArgs, args: &StatsArgs) -> u8 {
    match cmd_stats(args) {
        Ok(text) => emit(&global.out, &text),
        Err(error) => {
            eprintln!("error: {error}");
            if error.is_statistical() {
                2
            } else {
                1
            }
        }
    }
}

fn cmd_stats(args: &StatsArgs) -> midrisk_core::Result<String> {
    let a = load_vector(&args.vector_a)?;
    let b = load_vector(&args.vector_b)?;
    let (x, y) = align_vectors(a, b)?;
    let (result, note) = match args.method {
        MethodArg::Spearman => {
            let outcome = stats::spearman_test(&x, &y)?;
            (outcome.result, outcome.exact_monotone)
        }
        MethodArg::PairedT => (stats::paired_t_test(&x, &y)?, false),
    };
    let mut text = String::new();
    let _ = writeln!(text, "method: {}", result.method);
    let _ = writeln!(
        text,
        "statistic: {}",
        report::format_significant(result.statistic, 6)
    );
    let _ = writeln!(text, "df: {}", result.df);
    let _ = writeln!(
        text,
        "p_value: {}",
        report::format_significant(result.p_value, 6)
    );
    if note {
        let _ = writeln!(text, "note: exact-monotone");
    }
    Ok(text)
}

fn run_validate(global: &GlobalArgs, args: &ValidateArgs) -> u8 {
    match cmd_validate(global, args) {
        Ok((text, violation_count)) => {
            let write_failure = emit(&global.out, &text);
            if write_failure != 0 {
                write_failure
            } else {
                u8::from(violation_count > 0)
            }
        }
        Err(error) => {
            eprintln!("error: {error}");
            1
        }
    }
}

fn cmd_validate(global: &GlobalArgs, args: &ValidateArgs) -> midrisk_core::Result<(String, usize)> {
    let dir = &global.data_dir;
    let patterns = PatternCatalog::from_path(&resolve(dir, &args.patterns, "capec_subset.json"))?;
    let attacks = AttackCatalog::from_path(&resolve(dir, &args.attacks, "attacks_mid.json"))?;
    let diagrams = load_diagrams(dir)?;

    let mut text = String::new();
    let mut violation_count = 0;
    let _ = writeln!(text, "patterns: {} loaded", patterns.len());
    let catalog_report = patterns.validate();
    for notice in &catalog_report.notices {
        let _ = writeln!(text, "notice: {notice}");
    }
    for violation in &catalog_report.violations {
        violation_count += 1;
        let _ = writeln!(text, "violation: {violation}");
    }
    let _ = writeln!(text, "attacks: {} loaded", attacks.len());
    for violation in attacks.validate_mappings(&patterns) {
        violation_count += 1;
        let _ = writeln!(text, "violation: {violation}");
    }
    let _ = writeln!(text, "diagrams: {} loaded", diagrams.len());
    let known_attacks = attacks.ids().map(str::to_string).collect();
    for violation in afd::validate_afd(&diagrams, &known_attacks) {
        violation_count += 1;
        let _ = writeln!(text, "violation: {violation}");
    }
    if violation_count == 0 {
        let _ = writeln!(text, "violations: none");
    } else {
        let _ = writeln!(text, "violations: {violation_count}");
    }
    Ok((text, violation_count))
}

fn run_export(global: &GlobalArgs, args: &ExportArgs) -> u8 {
    let diagrams = match load_diagrams(&global.data_dir) {
        Ok(diagrams) => diagrams,
        Err(error) => {
            eprintln!("error: {error}");
            return 1;
        }
    };
    let Some(diagram) = diagrams.iter().find(|d| d.id == args.device) else {
        let available: Vec<&str> = diagrams.iter().map(|d| d.id.as_str()).collect();
        eprintln!(
            "error: diagram {:?} not found; available: {}",
            args.device,
            available.join(", ")
        );
        return 1;
    };
    match afd::export_dot(diagram) {
        Ok(dot) => emit(&global.out, &dot),
        Err(error) => {
            eprintln!("error: {error}");
            1
        }
    }
}

fn run_compression(global: &GlobalArgs, args: &CompressionArgs) -> u8 {
    let path = resolve(&global.data_dir, &args.attacks, "attacks_mid.json");
    let attacks = match AttackCatalog::from_path(&path) {
        Ok(attacks) => attacks,
        Err(error) => {
            eprintln!("error: {error}");
            return 1;
        }
    };
    let stats = attacks.compression_stats();
    let line = format!(
        "attacks={} distinct_patterns={} mean_mappings={:.3}\n",
        stats.attacks,
        stats.distinct_patterns,
        report::round_half_up(stats.mean_mappings, 3)
    );
    emit(&global.out, &line)
}
