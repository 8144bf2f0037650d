//! The `conddb` command: administration, data entry, browsing, tagging,
//! partition motion and benchmarks against a store directory.
//!
//! Each invocation is one session. Commands that only look at data open the
//! store read-only and never wait for the writer lock.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use conddb::bench::{self, BenchReport, Workload, WorkloadKind};
use conddb::{
    Error, FolderDescription, FolderPath, NodeKind, OpenOptions, PartitionPolicy, PayloadSchema, PayloadValue,
    Selector, Store, StoreStrategy, TagSnapshot, TimePoint, ValidityInterval, Value, Visible,
};

const RECORDS_HELP: &str = "\
Record output (--format records) is one tab-separated line per item. The
first field names the record; the rest are, in order:

  node       PATH KIND DESCRIPTION
  folder     PATH KIND STRATEGY SCHEMA POLICY COUNT MAX_SEQ DESCRIPTION
  partition  PATH INDEX resident|evicted COUNT MIN_SEQ MAX_SEQ MIN_SINCE MAX_TILL
  object     PATH SEQ SINCE TILL EFFECTIVE_SINCE EFFECTIVE_TILL VALUES
  sample     PATH AT EFFECTIVE_SINCE EFFECTIVE_TILL VALUE
  stored     PATH SEQ
  tag        NAME CREATED_MS PATH SEQ            (one line per folder)
  stat       NAME VALUE
  ok         COMMAND TARGET

VALUES is the payload as comma-separated text, the same text `store --values`
accepts. Times print as integers, -inf or +inf. Tabs, newlines and
backslashes inside descriptions are backslash-escaped.

`bench` records are comma-separated instead:
  kind,strategy,n,total_ns,mean_ns,p95_ns,seed
preceded by a `# os=... backend=...` line.";

#[derive(Debug, Parser)]
#[command(name = "conddb", version, about = "Inspect and edit a conditions-data store", after_long_help = RECORDS_HELP)]
pub struct Cli {
    /// Store directory.
    #[arg(long, env = "CONDDB_STORE", global = true)]
    pub store: Option<PathBuf>,

    /// `memory` starts empty and is discarded on exit; useful for benchmarks.
    #[arg(long, value_enum, default_value_t = BackendKind::File, global = true)]
    pub backend: BackendKind,

    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    File,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Records,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Layered,
    Legacy,
}

impl From<StrategyArg> for StoreStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Layered => StoreStrategy::Layered,
            StrategyArg::Legacy => StoreStrategy::LegacyTruncate,
        }
    }
}

fn time(s: &str) -> Result<TimePoint, String> {
    s.parse().map_err(|_| format!("expected an integer, -inf or +inf, got {s:?}"))
}

fn path(s: &str) -> Result<FolderPath, String> {
    FolderPath::parse(s).map_err(|e| e.to_string())
}

fn policy(s: &str) -> Result<PartitionPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn workload(s: &str) -> Result<WorkloadKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Which version to read: the newest, a tag, or an explicit ceiling.
#[derive(Debug, Args)]
#[command(group(ArgGroup::new("version").args(["tag", "seq"])))]
pub struct VersionArgs {
    #[arg(long)]
    pub tag: Option<String>,
    /// Read as if only sequences up to SEQ had been stored.
    #[arg(long)]
    pub seq: Option<u64>,
}

impl VersionArgs {
    fn selector(&self) -> Selector {
        match (&self.tag, self.seq) {
            (Some(t), _) => Selector::Tag(t.clone()),
            (None, Some(s)) => Selector::AtSequence(s),
            (None, None) => Selector::Head,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty store.
    Init,
    /// Create a folderset.
    Mkset {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(long, short, default_value = "")]
        description: String,
    },
    /// Create a data folder, or a tiny folder with --tiny.
    Mkfolder {
        #[arg(value_parser = path)]
        path: FolderPath,
        /// name:kind(,name:kind)*
        #[arg(long)]
        schema: String,
        #[arg(long, value_enum, default_value_t = StrategyArg::Layered)]
        strategy: StrategyArg,
        /// time:CHUNK or version:CHUNK
        #[arg(long, value_parser = policy, default_value = "none")]
        partition: PartitionPolicy,
        /// Dense single-value stream (one float64 or int64 attribute).
        #[arg(long)]
        tiny: bool,
        #[arg(long, short, default_value = "")]
        description: String,
    },
    /// List the children of a folderset.
    Ls {
        #[arg(value_parser = path, default_value = "/")]
        path: FolderPath,
        #[arg(short = 'R', long)]
        recursive: bool,
    },
    /// Schema, strategy, counts and partitions of a folder.
    Describe {
        #[arg(value_parser = path)]
        path: FolderPath,
    },
    /// Store one object.
    Store {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(long, value_parser = time, allow_hyphen_values = true)]
        since: TimePoint,
        #[arg(long, value_parser = time, allow_hyphen_values = true)]
        till: TimePoint,
        /// Payload as comma-separated values in schema order.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Tag the new object's sequence in the same commit.
        #[arg(long)]
        tag: Option<String>,
    },
    /// The object valid at a time point.
    Find {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(long, value_parser = time, allow_hyphen_values = true)]
        at: TimePoint,
        #[command(flatten)]
        version: VersionArgs,
    },
    /// Every visible piece overlapping a window.
    Browse {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(long, value_parser = time, allow_hyphen_values = true, default_value = "-inf")]
        from: TimePoint,
        #[arg(long, value_parser = time, allow_hyphen_values = true, default_value = "+inf")]
        to: TimePoint,
        #[command(flatten)]
        version: VersionArgs,
    },
    /// Tag the current head of folders. A folderset stands for every layered
    /// folder beneath it.
    TagHead {
        name: String,
        #[arg(value_parser = path, required = true)]
        paths: Vec<FolderPath>,
    },
    /// Tag an explicit sequence of one folder.
    TagAt {
        name: String,
        #[arg(value_parser = path)]
        path: FolderPath,
        seq: u64,
    },
    /// List tags.
    Tags,
    /// Folders and ceilings of one tag.
    TagShow { name: String },
    /// Append a sample to a tiny folder.
    TinyAppend {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(value_parser = time)]
        at: TimePoint,
        #[arg(allow_hyphen_values = true)]
        value: String,
    },
    /// The sample in effect at a time point.
    TinyRead {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(long, value_parser = time, allow_hyphen_values = true)]
        at: TimePoint,
    },
    /// Every sample in effect somewhere in a window.
    TinyScan {
        #[arg(value_parser = path)]
        path: FolderPath,
        #[arg(long, value_parser = time, allow_hyphen_values = true, default_value = "-inf")]
        from: TimePoint,
        #[arg(long, value_parser = time, allow_hyphen_values = true, default_value = "+inf")]
        to: TimePoint,
    },
    /// Write one partition to a chunk file.
    ExportPart {
        #[arg(value_parser = path)]
        path: FolderPath,
        index: u64,
        file: PathBuf,
    },
    /// Bring an evicted partition back from a chunk file.
    ImportPart {
        #[arg(value_parser = path)]
        path: FolderPath,
        file: PathBuf,
    },
    /// Take a partition offline. Export it first.
    EvictPart {
        #[arg(value_parser = path)]
        path: FolderPath,
        index: u64,
    },
    /// Write index images so the next open replays less log.
    Checkpoint,
    /// Counters from opening the store.
    Stats,
    /// Run benchmark workloads under /bench.
    Bench {
        /// Comma-separated workloads, or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
        sizes: Vec<u64>,
        /// Strategy for the object workloads; tiny workloads ignore it.
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Concurrent reader threads for ReadA and ReadB.
        #[arg(long, default_value_t = 1)]
        readers: usize,
    },
}

/// Every engine entry point and the subcommand that reaches it.
pub const ENGINE_COVERAGE: &[(&str, &str)] = &[
    ("Store::open", "init"),
    ("Store::memory", "--backend memory"),
    ("Session::create_folderset", "mkset"),
    ("Session::create_folder", "mkfolder"),
    ("Session::create_tiny_folder", "mkfolder --tiny"),
    ("Session::list", "ls"),
    ("Session::describe_folder", "describe"),
    ("Session::store_object", "store"),
    ("Session::find_object", "find"),
    ("Session::browse_objects", "browse"),
    ("Session::tag_head", "tag-head"),
    ("Session::tag_at_sequence", "tag-at"),
    ("Session::list_tags", "tags"),
    ("Session::resolve_tag", "tag-show"),
    ("Session::tiny_append", "tiny-append"),
    ("Session::tiny_read", "tiny-read"),
    ("Session::tiny_scan", "tiny-scan"),
    ("Session::commit", "every mutating command"),
    ("Session::abort", "every failed mutating command"),
    ("Store::export_partition", "export-part"),
    ("Store::export_partition_to", "export-part"),
    ("Store::evict_partition", "evict-part"),
    ("Store::import_partition", "import-part"),
    ("Store::import_partition_from", "import-part"),
    ("Store::checkpoint", "checkpoint"),
    ("Store::stats", "stats"),
    ("bench::run_workload", "bench"),
];

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(Error::Io(e))
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// exit code: 0 on success, 1 on a store error, 2 on a usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let mut text = e.render().to_string();
            if code == 2 && !text.contains("Usage:") {
                text.push_str(&format!("\n{}\n", Cli::command().render_usage()));
            }
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let usage = Cli::command().render_usage();
            let _ = writeln!(err, "error: {msg}\n\n{usage}");
            2
        }
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "error: {}: {e}", e.name());
            1
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Access {
    Create,
    Read,
    Write,
}

fn open(cli: &Cli, access: Access) -> std::result::Result<Store, Failure> {
    if cli.backend == BackendKind::Memory {
        return Ok(Store::memory());
    }
    let dir = cli
        .store
        .as_ref()
        .ok_or_else(|| Failure::Usage("no store given; pass --store PATH or set CONDDB_STORE".into()))?;
    let opts = OpenOptions { create: access == Access::Create, read_only: access == Access::Read, sync: true };
    Ok(Store::open(dir, opts)?)
}

fn access(cmd: &Command) -> Access {
    match cmd {
        Command::Init => Access::Create,
        Command::Ls { .. }
        | Command::Describe { .. }
        | Command::Find { .. }
        | Command::Browse { .. }
        | Command::Tags
        | Command::TagShow { .. }
        | Command::TinyRead { .. }
        | Command::TinyScan { .. }
        | Command::ExportPart { .. }
        | Command::Stats => Access::Read,
        _ => Access::Write,
    }
}

/// Runs `f` in an update session and commits; any error aborts.
fn update<T>(store: &Store, f: impl FnOnce(&mut conddb::Session) -> conddb::Result<T>) -> conddb::Result<T> {
    let mut s = store.begin_update()?;
    match f(&mut s) {
        Ok(v) => {
            s.commit()?;
            Ok(v)
        }
        Err(e) => {
            let _ = s.abort();
            Err(e)
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Outcome {
    let store = open(cli, access(&cli.command))?;
    let mut o = Printer { out, format: cli.format };
    match &cli.command {
        Command::Init => {
            let target = cli.store.as_ref().map_or("memory".into(), |p| p.display().to_string());
            o.ok("init", &target)?;
        }
        Command::Mkset { path, description } => {
            update(&store, |s| s.create_folderset(path, description))?;
            o.ok("mkset", path)?;
        }
        Command::Mkfolder { path, schema, strategy, partition, tiny, description } => {
            let schema = PayloadSchema::parse(schema)?;
            if *tiny {
                if *strategy != StrategyArg::Layered {
                    return Err(Failure::Usage("--tiny folders take no --strategy".into()));
                }
                update(&store, |s| s.create_tiny_folder(path, &schema, *partition, description))?;
            } else {
                update(&store, |s| s.create_folder(path, &schema, *partition, (*strategy).into(), description))?;
            }
            o.ok("mkfolder", path)?;
        }
        Command::Ls { path, recursive } => {
            let nodes = store.begin_read().list(path, *recursive)?;
            for n in nodes {
                match o.format {
                    Format::Records => o.record(&["node", &n.path.to_string(), n.kind.as_str(), &escape(&n.description)])?,
                    Format::Table => {
                        let indent = "  ".repeat(n.path.depth().saturating_sub(path.depth() + 1));
                        let name = format!("{indent}{}", n.path);
                        let line = format!("{name:<40} {:<12} {}", n.kind, n.description);
                        writeln!(o.out, "{}", line.trim_end())?;
                    }
                }
            }
        }
        Command::Describe { path } => {
            let d = store.begin_read().describe_folder(path)?;
            o.describe(&d)?;
        }
        Command::Store { path, since, till, values, tag } => {
            let interval = ValidityInterval::new(*since, *till)?;
            let seq = update(&store, |s| {
                let schema = s.describe_folder(path)?.schema;
                let payload = PayloadValue::from_csv(&schema, values)?;
                let seq = s.store_object(path, interval, payload)?;
                if let Some(name) = tag {
                    s.tag_at_sequence(path, seq, name)?;
                }
                Ok(seq)
            })?;
            match o.format {
                Format::Records => o.record(&["stored", &path.to_string(), &seq.to_string()])?,
                Format::Table => writeln!(o.out, "stored {path} seq {seq}")?,
            }
        }
        Command::Find { path, at, version } => {
            let v = store.begin_read().find_object(path, *at, &version.selector())?;
            o.objects(path, &[v])?;
        }
        Command::Browse { path, from, to, version } => {
            let window = ValidityInterval::new(*from, *to)?;
            let pieces = store.begin_read().browse_objects(path, window, &version.selector())?;
            o.objects(path, &pieces)?;
        }
        Command::TagHead { name, paths } => {
            let tag = update(&store, |s| {
                let mut folders = Vec::new();
                for p in paths {
                    folders.extend(tag_targets(s, p)?);
                }
                s.tag_head(&folders, name)
            })?;
            o.tags(&[tag])?;
        }
        Command::TagAt { name, path, seq } => {
            let tag = update(&store, |s| s.tag_at_sequence(path, *seq, name))?;
            o.tags(&[tag])?;
        }
        Command::Tags => {
            let tags = store.begin_read().list_tags()?;
            o.tags(&tags)?;
        }
        Command::TagShow { name } => {
            let tag = store.begin_read().resolve_tag(name)?;
            o.tags(&[tag])?;
        }
        Command::TinyAppend { path, at, value } => {
            update(&store, |s| {
                let schema = s.describe_folder(path)?.schema;
                let value = Value::parse(schema.attributes()[0].kind, value)?;
                s.tiny_append(path, *at, &value)
            })?;
            o.ok("tiny-append", path)?;
        }
        Command::TinyRead { path, at } => {
            let x = store.begin_read().tiny_read(path, *at)?;
            o.sample(path, x.at, x.effective.since(), x.effective.till(), &x.value)?;
        }
        Command::TinyScan { path, from, to } => {
            let window = ValidityInterval::new(*from, *to)?;
            let samples = store.begin_read().tiny_scan(path, window)?;
            // each step lasts until the next one starts
            for (i, (at, value)) in samples.iter().enumerate() {
                let next = match samples.get(i + 1) {
                    Some((t, _)) => *t,
                    None => store.begin_read().tiny_read(path, *at)?.effective.till(),
                };
                o.sample(path, *at, *at, next, value)?;
            }
        }
        Command::ExportPart { path, index, file } => {
            store.export_partition_to(path, *index, file)?;
            o.ok("export-part", &format!("{path}#{index}"))?;
        }
        Command::ImportPart { path, file } => {
            store.import_partition_from(path, file)?;
            o.ok("import-part", path)?;
        }
        Command::EvictPart { path, index } => {
            store.evict_partition(path, *index)?;
            o.ok("evict-part", &format!("{path}#{index}"))?;
        }
        Command::Checkpoint => {
            store.checkpoint()?;
            o.ok("checkpoint", &cli.store.as_ref().map_or("memory".into(), |p| p.display().to_string()))?;
        }
        Command::Stats => {
            let st = store.stats();
            for (name, value) in [
                ("replayed_records", st.replayed_records),
                ("images_loaded", st.images_loaded),
                ("partition_probes", st.partition_probes),
            ] {
                match o.format {
                    Format::Records => o.record(&["stat", name, &value.to_string()])?,
                    Format::Table => writeln!(o.out, "{name:<18} {value}")?,
                }
            }
        }
        Command::Bench { kind, sizes, strategy, seed, readers } => {
            let kinds = if kind == "all" {
                WorkloadKind::ALL.to_vec()
            } else {
                kind.split(',').map(workload).collect::<std::result::Result<Vec<_>, _>>().map_err(Failure::Usage)?
            };
            let strategies = match strategy {
                Some(s) => vec![(*s).into()],
                None => vec![StoreStrategy::Layered, StoreStrategy::LegacyTruncate],
            };
            let mut rows = Vec::new();
            for &k in &kinds {
                let strategies = if k.is_tiny() { &strategies[..1] } else { &strategies[..] };
                for &strategy in strategies {
                    for &n in sizes {
                        let w = Workload { readers: (*readers).max(1), ..Workload::new(k, n, strategy).seed(*seed) };
                        rows.push(bench::run_workload(&store, &w)?);
                    }
                }
            }
            let report = BenchReport { rows, environment: bench::environment(&store) };
            let text = match o.format {
                Format::Records => report.records(),
                Format::Table => format!("# {}\n{}", report.environment, report.table()),
            };
            o.out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// A data folder stands for itself; a folderset for the layered folders under it.
fn tag_targets(s: &conddb::Session, p: &FolderPath) -> conddb::Result<Vec<FolderPath>> {
    let nodes = s.list(p, true)?;
    if nodes.len() == 1 && nodes[0].path == *p {
        return Ok(vec![p.clone()]);
    }
    let mut out = Vec::new();
    for n in nodes.into_iter().filter(|n| n.kind == NodeKind::Folder) {
        if s.describe_folder(&n.path)?.strategy == StoreStrategy::Layered {
            out.push(n.path);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("{p} holds no layered folders to tag")));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

struct Printer<'a> {
    out: &'a mut dyn Write,
    format: Format,
}

impl Printer<'_> {
    fn record(&mut self, fields: &[&str]) -> std::io::Result<()> {
        writeln!(self.out, "{}", fields.join("\t"))
    }

    fn ok(&mut self, command: &str, target: &dyn std::fmt::Display) -> std::io::Result<()> {
        match self.format {
            Format::Records => self.record(&["ok", command, &target.to_string()]),
            Format::Table => writeln!(self.out, "{command}: {target}"),
        }
    }

    fn objects(&mut self, path: &FolderPath, pieces: &[Visible]) -> std::io::Result<()> {
        let path = path.to_string();
        if self.format == Format::Table {
            writeln!(self.out, "{:>8}  {:<24} {:<24} VALUES", "SEQ", "EFFECTIVE", "STORED")?;
        }
        for v in pieces {
            let o = &v.object;
            let values = o.payload.to_csv();
            match self.format {
                Format::Records => self.record(&[
                    "object",
                    &path,
                    &o.seq.to_string(),
                    &o.interval.since().to_string(),
                    &o.interval.till().to_string(),
                    &v.effective.since().to_string(),
                    &v.effective.till().to_string(),
                    &values,
                ])?,
                Format::Table => writeln!(
                    self.out,
                    "{:>8}  {:<24} {:<24} {values}",
                    o.seq,
                    v.effective.to_string(),
                    o.interval.to_string()
                )?,
            }
        }
        Ok(())
    }

    fn sample(&mut self, path: &FolderPath, at: TimePoint, since: TimePoint, till: TimePoint, value: &Value) -> std::io::Result<()> {
        match self.format {
            Format::Records => self.record(&[
                "sample",
                &path.to_string(),
                &at.to_string(),
                &since.to_string(),
                &till.to_string(),
                &value.render(),
            ]),
            Format::Table => writeln!(self.out, "{:>20}  {:<24} {}", at.to_string(), format!("[{since}, {till})"), value.render()),
        }
    }

    fn tags(&mut self, tags: &[TagSnapshot]) -> std::io::Result<()> {
        for t in tags {
            for (folder, seq) in &t.entries {
                match self.format {
                    Format::Records => {
                        self.record(&["tag", &t.name, &t.created_at.to_string(), &folder.to_string(), &seq.to_string()])?
                    }
                    Format::Table => writeln!(self.out, "{:<24} {:<40} {seq}", t.name, folder.to_string())?,
                }
            }
        }
        Ok(())
    }

    fn describe(&mut self, d: &FolderDescription) -> std::io::Result<()> {
        let path = d.path.to_string();
        match self.format {
            Format::Records => {
                self.record(&[
                    "folder",
                    &path,
                    d.kind.as_str(),
                    d.strategy.as_str(),
                    &d.schema.to_string(),
                    &d.policy.to_string(),
                    &d.count.to_string(),
                    &d.max_seq.to_string(),
                    &escape(&d.description),
                ])?;
                for p in &d.partitions {
                    let s = &p.summary;
                    self.record(&[
                        "partition",
                        &path,
                        &p.index.to_string(),
                        if p.resident { "resident" } else { "evicted" },
                        &s.count.to_string(),
                        &s.min_seq.to_string(),
                        &s.max_seq.to_string(),
                        &TimePoint(s.min_since).to_string(),
                        &TimePoint(s.max_till).to_string(),
                    ])?;
                }
            }
            Format::Table => {
                writeln!(self.out, "path         {path}")?;
                writeln!(self.out, "kind         {}", d.kind)?;
                writeln!(self.out, "schema       {}", d.schema)?;
                writeln!(self.out, "strategy     {}", d.strategy)?;
                writeln!(self.out, "partition    {}", d.policy)?;
                writeln!(self.out, "objects      {}", d.count)?;
                writeln!(self.out, "max seq      {}", d.max_seq)?;
                if !d.description.is_empty() {
                    writeln!(self.out, "description  {}", d.description)?;
                }
                if d.policy.is_partitioned() {
                    writeln!(self.out, "\n{:>6}  {:<9} {:>8}  {:<17} SPAN", "INDEX", "STATE", "COUNT", "SEQS")?;
                    for p in &d.partitions {
                        let s = &p.summary;
                        writeln!(
                            self.out,
                            "{:>6}  {:<9} {:>8}  {:<17} [{}, {})",
                            p.index,
                            if p.resident { "resident" } else { "evicted" },
                            s.count,
                            format!("{}..={}", s.min_seq, s.max_seq),
                            TimePoint(s.min_since),
                            TimePoint(s.max_till)
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}
