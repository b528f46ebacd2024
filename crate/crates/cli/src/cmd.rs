use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use belief_core::dataset::DatasetInfo;
use belief_core::elicit::DeviantPolicy;
use belief_core::record::{read_records, write_records};
use belief_core::report::{report_json, render_table};
use belief_core::sim::{simulate_cohort, AgentKind, AgentSpec};
use belief_core::{
    build_report, BetaParams, Condition, Dataset, DatasetTable, ElicitationFormat, FitConfig, ObservedData,
    ParticipantRecord, RecordFormat, ReportFilters,
};
use belief_service::config::AnalysisRequest;
use belief_service::{AppState, Settings, StudyConfig};

use crate::{AnalyzeArgs, FitArgs, IoArgs, ServeArgs, SimulateArgs, StudyArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or input; exit code 2.
    Input(String),
    /// Everything else; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

struct Study {
    config: Option<StudyConfig>,
    table: DatasetTable,
    fit: FitConfig,
}

fn load_config(path: &Path) -> Result<StudyConfig> {
    let bytes = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    StudyConfig::parse(&bytes).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_study(args: &StudyArgs) -> Result<Study> {
    let config = args.config.as_deref().map(load_config).transpose()?;
    let (mut table, fit) = match &config {
        Some(c) => (c.dataset_table(), c.fit),
        None => (DatasetTable::default(), FitConfig::default()),
    };
    for spec in &args.datasets {
        let (name, counts) = spec
            .split_once('=')
            .ok_or_else(|| input(format!("--dataset `{spec}`: expected NAME=successes,failures")))?;
        let dataset: Dataset = name.parse().map_err(input)?;
        let data = parse_data(counts).map_err(|e| input(format!("--dataset `{spec}`: {e}")))?;
        let reference_prior = table
            .0
            .get(&dataset)
            .and_then(|i| i.reference_prior)
            .or(Some(dataset.default_reference_prior()));
        table.0.insert(dataset, DatasetInfo { data, reference_prior });
    }
    Ok(Study { config, table, fit })
}

fn pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
    let p = |x: &str| x.trim().parse::<T>().map_err(|_| format!("`{}` is not a valid number", x.trim()));
    Ok((p(a)?, p(b)?))
}

fn parse_data(s: &str) -> std::result::Result<ObservedData, String> {
    let (successes, failures) = pair::<u64>(s)?;
    ObservedData::new(successes, failures).map_err(|e| e.to_string())
}

fn parse_format(flag: &str, value: Option<&str>) -> Result<Option<RecordFormat>> {
    value
        .map(|v| v.parse().map_err(|e| input(format!("{flag}: {e}"))))
        .transpose()
}

fn is_stdio(p: &Path) -> bool {
    p.as_os_str() == "-"
}

/// Reads and validates every record. Invalid rows abort with their line
/// numbers unless `--skip-invalid` is given.
fn read_input(io: &IoArgs) -> Result<(RecordFormat, Vec<(usize, ParticipantRecord)>)> {
    let format = match parse_format("--format", io.format.as_deref())? {
        Some(f) => f,
        None if is_stdio(&io.input) => RecordFormat::Jsonl,
        None => RecordFormat::from_path(&io.input),
    };
    let reader: Box<dyn BufRead> = if is_stdio(&io.input) {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let f = File::open(&io.input).map_err(|e| runtime(format!("{}: {e}", io.input.display())))?;
        Box::new(BufReader::new(f))
    };
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, parsed) in read_records(reader, format).map_err(runtime)? {
        match parsed {
            Ok(r) => records.push((line, r)),
            Err(e) => errors.push(format!("line {line}: {e}")),
        }
    }
    if !errors.is_empty() {
        if !io.skip_invalid {
            return Err(CliError::Input(format!(
                "{} invalid record(s) in {}\n{}",
                errors.len(),
                io.input.display(),
                errors.join("\n")
            )));
        }
        for e in &errors {
            eprintln!("warning: skipped {e}");
        }
    }
    Ok((format, records))
}

fn open_output(out: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    match out {
        Some(p) if !is_stdio(p) => {
            let f = File::create(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn output_format(flag: Option<&str>, out: Option<&PathBuf>, fallback: RecordFormat) -> Result<RecordFormat> {
    if let Some(f) = parse_format("--out-format", flag)? {
        return Ok(f);
    }
    Ok(match out {
        Some(p) if !is_stdio(p) && p.extension().is_some() => RecordFormat::from_path(p),
        _ => fallback,
    })
}

fn write_out(out: Option<&PathBuf>, format: RecordFormat, records: &[ParticipantRecord]) -> Result<()> {
    let mut w = open_output(out)?;
    write_records(&mut w, format, records).map_err(runtime)?;
    w.flush().map_err(runtime)
}

pub fn fit(args: FitArgs) -> Result<()> {
    let study = load_study(&args.study)?;
    let mut cfg = study.fit;
    if let Some(c) = args.peaked {
        cfg.deviant_policy = DeviantPolicy::Peaked { concentration: c };
    }
    cfg.validate().map_err(|e| input(format!("fit settings: {e}")))?;
    let (in_format, rows) = read_input(&args.io)?;
    let mut fitted = Vec::with_capacity(rows.len());
    let mut errors = Vec::new();
    for (line, mut r) in rows {
        let reference = study.table.0.get(&r.dataset).and_then(|i| i.reference_prior);
        match r.fit(&cfg, reference) {
            Ok(()) => fitted.push(r),
            Err(e) => errors.push(format!("line {line}: record `{}`: {e}", r.id)),
        }
    }
    if !errors.is_empty() {
        if !args.io.skip_invalid {
            return Err(CliError::Input(errors.join("\n")));
        }
        for e in &errors {
            eprintln!("warning: skipped {e}");
        }
    }
    let format = output_format(args.out_format.as_deref(), args.io.out.as_ref(), in_format)?;
    write_out(args.io.out.as_ref(), format, &fitted)?;
    eprintln!("fitted {} record(s)", fitted.len());
    Ok(())
}

fn random_seed() -> u64 {
    let seed = rand::random::<u64>();
    eprintln!("seed: {seed}");
    seed
}

fn filters(args: &AnalyzeArgs) -> Result<ReportFilters> {
    let attention_pass = match args.attention_pass.as_str() {
        "any" => None,
        "true" => Some(true),
        "false" => Some(false),
        other => return Err(input(format!("--attention-pass: expected true, false or any, got `{other}`"))),
    };
    Ok(ReportFilters {
        dataset: args.only_dataset.as_deref().map(str::parse).transpose().map_err(input)?,
        format: args
            .only_format
            .as_deref()
            .map(str::parse::<ElicitationFormat>)
            .transpose()
            .map_err(input)?,
        uncertainty: args.uncertainty,
        elicitation: args.elicitation,
        attention_pass,
    })
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let study = load_study(&args.study)?;
    let filters = filters(&args)?;
    let (_, rows) = read_input(&args.io)?;
    let records: Vec<ParticipantRecord> = rows.into_iter().map(|(_, r)| r).collect();
    let config = study.config.as_ref();
    let seed = args
        .seed
        .or_else(|| config.and_then(|c| c.seed))
        .unwrap_or_else(random_seed);
    let request = AnalysisRequest {
        bootstrap: args.bootstrap.unwrap_or(config.is_some_and(|c| c.bootstrap.is_some())),
        regress: args.regress.unwrap_or(config.is_some_and(|c| c.is_factorial())),
        first_n: args.first_n.clone(),
        seed,
    };
    let options = request.options(study.fit, config.and_then(|c| c.bootstrap));
    let report = build_report(&records, &study.table, &options, &filters).map_err(input)?;
    let mut w = open_output(args.io.out.as_ref())?;
    w.write_all(report_json(&report).as_bytes()).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    eprint!("{}", render_table(&report));
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let kind: AgentKind = args.kind.parse().map_err(|e| input(format!("--kind: {e}")))?;
    let (a, b) = pair::<f64>(&args.prior).map_err(|e| input(format!("--prior: {e}")))?;
    let prior = BetaParams::new(a, b).map_err(|e| input(format!("--prior: {e}")))?;
    let dataset: Dataset = args.dataset.parse().map_err(|e| input(format!("--dataset: {e}")))?;
    let data = match &args.data {
        Some(s) => parse_data(s).map_err(|e| input(format!("--data: {e}")))?,
        None => dataset.default_data(),
    };
    let format: ElicitationFormat = args.format.parse().map_err(|e| input(format!("--format: {e}")))?;
    let condition = Condition {
        format,
        uncertainty: args.uncertainty,
        elicitation: !args.no_elicitation,
    };
    let spec = AgentSpec {
        kind,
        prior,
        dataset,
        condition,
        seed: args.seed.unwrap_or_else(random_seed),
    };
    spec.validate().map_err(input)?;
    let records = simulate_cohort(&spec, &data, args.agents).map_err(input)?;
    let out_format = output_format(args.out_format.as_deref(), args.out.as_ref(), RecordFormat::Jsonl)?;
    write_out(args.out.as_ref(), out_format, &records)?;
    eprintln!("simulated {} record(s)", records.len());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    // Validate before touching the network.
    let config = args.config.as_deref().map(load_config).transpose()?;
    let settings = Settings {
        bind: args
            .bind
            .unwrap_or_else(|| std::net::SocketAddr::from(([127, 0, 0, 1], args.port.unwrap_or(8080)))),
        data_dir: args.data_dir,
        seed: args.seed,
        ui_dir: args.ui_dir,
    };
    belief_service::init_tracing();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async move {
        let (listener, state): (_, AppState) = belief_service::bind(&settings).await.map_err(runtime)?;
        if let Some(c) = config {
            let id = c.id.clone();
            let (_, created) = state
                .create_study(c)
                .await
                .map_err(|e| input(format!("study `{id}`: {}", e.message)))?;
            tracing::info!(study = %id, created, "study ready");
        }
        let addr = listener.local_addr().map_err(runtime)?;
        println!("listening on http://{addr}");
        io::stdout().flush().map_err(runtime)?;
        belief_service::serve(listener, state, settings.ui_dir, belief_service::shutdown_signal())
            .await
            .map_err(runtime)
    })
}
