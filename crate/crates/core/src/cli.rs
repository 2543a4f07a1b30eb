//! Configuration loading, run output (CSV and resolved config), figure presets
//! and CSV plotting behind the `varq` binary.
//!
//! A config is a TOML document with four sections:
//!
//! ```toml
//! [env]
//! kind = "chain"        # chain | cartpole | mountaincar
//! n_states = 8
//!
//! [agent]
//! kind = ["vdqn", "dqn"]  # one name or a list
//! gamma = 1.0           # fields shared by every agent
//! [agent.vdqn]
//! alpha = 3e-5          # per-agent overrides
//!
//! [train]
//! episodes = 2000
//! seeds = 5             # worker seeds are seed, seed + 1, ...
//! seed = 0
//!
//! [output]
//! name = "chain-n8"
//! ```
//!
//! Every key is optional. `--set section.key=value` edits the document before
//! it is interpreted, so overrides and file values go through the same checks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::agents::{AgentConfig, AgentKind};
use crate::harness::{mean_std, run_experiment, tracked_states, EnvSpec, ExperimentConfig, ExperimentLog};
use crate::plot::{Figure, Series};
use crate::{Error, Result};

/// Output root used when neither `--out`, `output.dir` nor `VARQ_OUT` is given.
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: usize,
    /// Number of independent seeds.
    pub seeds: usize,
    /// Master seed; seed `i` of the run is `seed + i`.
    pub seed: u64,
    pub iteration_size: usize,
    pub visit_window: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            episodes: 2000,
            seeds: 5,
            seed: 0,
            iteration_size: 10,
            visit_window: 10,
        }
    }
}

impl TrainSection {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// `key=value` pairs with dotted keys, applied in order.
    pub set: Vec<String>,
    pub seed: Option<u64>,
    /// Comma-separated agent names.
    pub agents: Option<String>,
    pub out: Option<PathBuf>,
    /// Value of `VARQ_OUT`, consulted only when nothing else names an output root.
    pub env_out: Option<PathBuf>,
}

impl Overrides {
    /// Reads `VARQ_OUT` from the process environment.
    pub fn from_env() -> Self {
        Self {
            env_out: std::env::var_os("VARQ_OUT").map(PathBuf::from),
            ..Self::default()
        }
    }
}

/// A fully interpreted config: one experiment per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub env: EnvSpec,
    pub agents: Vec<(AgentKind, AgentConfig)>,
    pub train: TrainSection,
    pub out_root: PathBuf,
    pub name: String,
}

fn backticked_after<'a>(msg: &'a str, marker: &str) -> Option<&'a str> {
    let start = msg.rfind(marker)? + marker.len();
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

/// Config error for a deserialization failure, naming the offending key when serde reports it.
fn section_error(section: &str, err: impl std::fmt::Display) -> Error {
    let msg = err.to_string().trim().to_string();
    let field = backticked_after(&msg, "in `")
        .or_else(|| backticked_after(&msg, "unknown field `"))
        .or_else(|| backticked_after(&msg, "missing field `"));
    let key = match field {
        Some(f) if !f.is_empty() && !f.contains(' ') => format!("{section}.{f}"),
        _ => section.to_string(),
    };
    Error::config(key, msg.replace('\n', " "))
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `dotted.key` in `table`, creating intermediate tables.
pub fn set_dotted(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(key, format!("`{p}` is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn merge(dst: &mut Table, src: &Table) {
    for (k, v) in src {
        match (dst.get_mut(k), v) {
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s),
            _ => {
                dst.insert(k.clone(), v.clone());
            }
        }
    }
}

fn take_section(doc: &mut Table, name: &str) -> Result<Table> {
    match doc.remove(name) {
        None => Ok(Table::new()),
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(Error::config(name, "must be a table")),
    }
}

fn parse_agent_names(list: &str) -> Result<Vec<AgentKind>> {
    let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::config("agent.kind", "no agent named"));
    }
    let mut kinds = Vec::new();
    for n in names {
        let k = AgentKind::parse(n).ok_or_else(|| {
            Error::config("agent.kind", format!("unknown agent `{n}` (expected vdqn, dqn or noisynet)"))
        })?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(kinds)
}

fn agent_kinds(value: Option<Value>) -> Result<Vec<AgentKind>> {
    match value {
        None => Ok(vec![AgentKind::Variational]),
        Some(Value::String(s)) => parse_agent_names(&s),
        Some(Value::Array(items)) => {
            let names = items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::config("agent.kind", "list entries must be strings"))?;
            parse_agent_names(&names.join(","))
        }
        Some(_) => Err(Error::config("agent.kind", "must be a name or a list of names")),
    }
}

fn agent_section_name(key: &str) -> Option<AgentKind> {
    AgentKind::parse(key).filter(|_| key.chars().all(|c| c.is_ascii_lowercase()))
}

fn resolve_agent(kind: AgentKind, common: &Table, specific: &[(AgentKind, Table)]) -> Result<AgentConfig> {
    let mut table = Table::try_from(AgentConfig::for_kind(kind)).map_err(|e| section_error("agent", e))?;
    merge(&mut table, common);
    for (k, t) in specific {
        if *k == kind {
            merge(&mut table, t);
        }
    }
    let section = format!("agent.{}", kind.name());
    let cfg: AgentConfig = Value::Table(table).try_into().map_err(|e| section_error(&section, e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_doc(mut doc: Table, ov: &Overrides) -> Result<Resolved> {
    for s in &ov.set {
        set_dotted(&mut doc, s)?;
    }

    let mut env_table = take_section(&mut doc, "env")?;
    env_table.entry("kind").or_insert_with(|| Value::String("chain".into()));
    if env_table["kind"].as_str() == Some("chain") {
        env_table.entry("n_states").or_insert(Value::Integer(8));
    }
    let env: EnvSpec = Value::Table(env_table).try_into().map_err(|e| section_error("env", e))?;
    env.build()?;

    let mut agent_table = take_section(&mut doc, "agent")?;
    let mut kinds = agent_kinds(agent_table.remove("kind"))?;
    if let Some(list) = &ov.agents {
        kinds = parse_agent_names(list)?;
    }
    let mut specific = Vec::new();
    let keys: Vec<String> = agent_table.keys().cloned().collect();
    for k in keys {
        if let Some(kind) = agent_section_name(&k) {
            match agent_table.remove(&k) {
                Some(Value::Table(t)) => specific.push((kind, t)),
                _ => return Err(Error::config(format!("agent.{k}"), "per-agent overrides must be a table")),
            }
        }
    }
    let agents = kinds
        .into_iter()
        .map(|k| resolve_agent(k, &agent_table, &specific).map(|c| (k, c)))
        .collect::<Result<Vec<_>>>()?;

    let mut train: TrainSection = Value::Table(take_section(&mut doc, "train")?)
        .try_into()
        .map_err(|e| section_error("train", e))?;
    if let Some(seed) = ov.seed {
        train.seed = seed;
    }
    let output: OutputSection = Value::Table(take_section(&mut doc, "output")?)
        .try_into()
        .map_err(|e| section_error("output", e))?;
    if let Some(k) = doc.keys().next() {
        return Err(Error::config(k.clone(), "unknown section (expected env, agent, train or output)"));
    }

    let out_root = ov
        .out
        .clone()
        .or(output.dir)
        .or_else(|| ov.env_out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let name = output.name.unwrap_or_else(|| env.label());
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(Error::config("output.name", format!("`{name}` is not a plain directory name")));
    }
    let resolved = Resolved {
        env,
        agents,
        train,
        out_root,
        name,
    };
    for i in 0..resolved.agents.len() {
        resolved.experiment(i).validate()?;
    }
    Ok(resolved)
}

/// Parses TOML text plus overrides into a [`Resolved`] config.
pub fn resolve_str(text: &str, ov: &Overrides) -> Result<Resolved> {
    let doc: Table = toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim().to_string()))?;
    resolve_doc(doc, ov)
}

/// Loads `path` (or an empty config) and applies the overrides.
pub fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<Resolved> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    resolve_str(&text, ov)
}

impl Resolved {
    pub fn experiment(&self, index: usize) -> ExperimentConfig {
        let (kind, cfg) = &self.agents[index];
        let mut e = ExperimentConfig::new(self.env.clone(), *kind, cfg.clone(), self.train.episodes, self.train.seed_list());
        e.iteration_size = self.train.iteration_size;
        e.visit_window = self.train.visit_window;
        e
    }

    /// `<name>` for a single agent, `<name>-<agent>` otherwise.
    pub fn run_name(&self, index: usize) -> String {
        if self.agents.len() == 1 {
            self.name.clone()
        } else {
            format!("{}-{}", self.name, self.agents[index].0.name())
        }
    }

    pub fn run_dir(&self, index: usize) -> PathBuf {
        self.out_root.join(self.run_name(index))
    }

    /// A standalone config that reproduces run `index` exactly when loaded back.
    pub fn resolved_toml(&self, index: usize) -> Result<String> {
        let (kind, cfg) = &self.agents[index];
        let ser = |e: toml::ser::Error| Error::InvalidInput(format!("cannot serialize config: {e}"));
        let mut doc = Table::new();
        doc.insert("env".into(), Value::try_from(&self.env).map_err(ser)?);
        let mut agent = Table::try_from(cfg).map_err(ser)?;
        agent.insert("kind".into(), Value::String(kind.name().into()));
        doc.insert("agent".into(), Value::Table(agent));
        doc.insert("train".into(), Value::try_from(&self.train).map_err(ser)?);
        let output = OutputSection {
            dir: Some(self.out_root.clone()),
            name: Some(self.run_name(index)),
        };
        doc.insert("output".into(), Value::try_from(&output).map_err(ser)?);
        toml::to_string(&doc).map_err(ser)
    }
}

/// Fixed-width round-trip formatting: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("writing {}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub const EPISODES_HEADER: [&str; 4] = ["seed", "episode", "return", "steps"];
pub const ITERATIONS_HEADER: [&str; 5] = ["seed", "iteration", "mean_return", "min_return", "max_return"];
pub const VISITS_HEADER: [&str; 8] = ["seed", "episode", "c_1", "c_mid", "c_N", "p_1", "p_mid", "p_N"];

/// Writes `episodes.csv`, `iterations.csv`, `visits.csv` (chain only) and `config.resolved`.
pub fn write_run(dir: &Path, log: &ExperimentLog, resolved_toml: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("episodes.csv"),
        &EPISODES_HEADER,
        log.runs.iter().flat_map(|r| {
            r.episodes
                .iter()
                .enumerate()
                .map(move |(i, e)| vec![r.seed.to_string(), i.to_string(), fmt_f64(e.ret), e.steps.to_string()])
        }),
    )?;
    write_csv(
        &dir.join("iterations.csv"),
        &ITERATIONS_HEADER,
        log.runs.iter().flat_map(|r| {
            r.iterations.iter().map(move |it| {
                vec![
                    r.seed.to_string(),
                    it.iteration.to_string(),
                    fmt_f64(it.mean_return),
                    fmt_f64(it.min_return),
                    fmt_f64(it.max_return),
                ]
            })
        }),
    )?;
    if log.runs.iter().all(|r| r.visits.is_some()) {
        write_csv(
            &dir.join("visits.csv"),
            &VISITS_HEADER,
            log.runs.iter().flat_map(|r| {
                r.visits.iter().flatten().map(move |v| {
                    let mut row = vec![r.seed.to_string(), v.episode.to_string()];
                    row.extend(v.counts.iter().map(|&c| (c as u8).to_string()));
                    row.extend(v.probs.iter().map(|&p| fmt_f64(p)));
                    row
                })
            }),
        )?;
    }
    fs::write(dir.join("config.resolved"), resolved_toml)?;
    Ok(())
}

/// Runs every agent of the config and writes one run directory each.
pub fn cmd_train(resolved: &Resolved) -> Result<Vec<(PathBuf, ExperimentLog)>> {
    (0..resolved.agents.len())
        .map(|i| {
            let log = run_experiment(&resolved.experiment(i))?;
            let dir = resolved.run_dir(i);
            write_run(&dir, &log, &resolved.resolved_toml(i)?)?;
            Ok((dir, log))
        })
        .collect()
}

/// Figure bundles regenerated by `reproduce`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    CurvesChain,
    CurvesControl,
    Visits,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::CurvesChain, Preset::CurvesControl, Preset::Visits];

    pub fn name(self) -> &'static str {
        match self {
            Preset::CurvesChain => "curves-chain",
            Preset::CurvesControl => "curves-control",
            Preset::Visits => "visits",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("figure", format!("unknown preset `{s}` (expected curves-chain, curves-control or visits)")))
    }

    /// The TOML configs making up this preset.
    pub fn configs(self) -> Vec<String> {
        let chain = |n: usize, agents: &str| {
            format!("[env]\nkind = \"chain\"\nn_states = {n}\n\n[agent]\nkind = [{agents}]\ngamma = 1.0\n{CHAIN_AGENTS}\n[train]\nepisodes = 2000\nseeds = 5\n")
        };
        match self {
            Preset::CurvesChain => [8, 32, 50]
                .iter()
                .map(|&n| chain(n, r#""vdqn", "dqn", "noisynet""#))
                .collect(),
            Preset::Visits => vec![chain(32, r#""vdqn", "dqn""#)],
            Preset::CurvesControl => vec![
                format!("[env]\nkind = \"cartpole\"\nvariant = \"v0\"\n\n[agent]\nkind = [\"vdqn\", \"dqn\"]\ngamma = 0.99\n{CONTROL_AGENTS}\n[train]\nepisodes = 800\nseeds = 5\n"),
                format!("[env]\nkind = \"mountaincar\"\n\n[agent]\nkind = [\"vdqn\", \"dqn\"]\ngamma = 0.99\n{CONTROL_AGENTS}\n[train]\nepisodes = 1000\nseeds = 5\n"),
            ],
        }
    }
}

/// Per-agent step sizes for the chain presets.
pub const CHAIN_AGENTS: &str = "[agent.vdqn]\nalpha = 3e-5\n[agent.dqn]\nalpha = 1e-3\n[agent.noisynet]\nalpha = 1e-3\n";
/// Per-agent step sizes for the classic-control presets. Returns near 200 give
/// far larger residuals than the chain, so Variational DQN needs a tenth of its
/// chain step. Both values kept every CartPole seed tried finite.
pub const CONTROL_AGENTS: &str = "[agent.vdqn]\nalpha = 3e-6\n[agent.dqn]\nalpha = 3e-3\n[agent.noisynet]\nalpha = 1e-3\n";

fn curve_series(label: &str, log: &ExperimentLog) -> Series {
    Series {
        label: label.to_string(),
        x: log.cross_seed.iter().map(|c| c.iteration as f64).collect(),
        mean: log.cross_seed.iter().map(|c| c.mean).collect(),
        std: Some(log.cross_seed.iter().map(|c| c.std).collect()),
    }
}

/// Cross-seed `p_n` at the end of each iteration, for the three tracked states.
fn visit_series(log: &ExperimentLog) -> Vec<Series> {
    let size = log.config.iteration_size;
    let n = log.runs[0].visits.as_ref().map_or(0, |v| v.len()) / size;
    let states = match &log.config.env {
        EnvSpec::Chain { n_states, .. } => tracked_states(*n_states),
        _ => return Vec::new(),
    };
    (0..3)
        .map(|k| {
            let (mean, std): (Vec<f64>, Vec<f64>) = (0..n)
                .map(|i| {
                    let vals: Vec<f64> = log
                        .runs
                        .iter()
                        .map(|r| r.visits.as_ref().map_or(0.0, |v| v[(i + 1) * size - 1].probs[k]))
                        .collect();
                    mean_std(&vals)
                })
                .unzip();
            Series {
                label: format!("p_{}", states[k]),
                x: (0..n).map(|i| i as f64).collect(),
                mean,
                std: Some(std),
            }
        })
        .collect()
}

/// Runs a preset (with the usual overrides) and writes CSVs plus SVG figures
/// under `<out>/<preset>/`. Returns the SVG paths.
pub fn cmd_reproduce(preset: Preset, ov: &Overrides) -> Result<Vec<PathBuf>> {
    let mut svgs = Vec::new();
    for text in preset.configs() {
        let mut resolved = resolve_str(&text, ov)?;
        resolved.out_root = resolved.out_root.join(preset.name());
        let runs = cmd_train(&resolved)?;
        let env_label = resolved.env.label();
        let mut write_fig = |file: String, fig: Figure| -> Result<()> {
            let path = resolved.out_root.join(file);
            fs::write(&path, fig.to_svg()?)?;
            svgs.push(path);
            Ok(())
        };
        match preset {
            Preset::Visits => {
                for ((kind, _), (_, log)) in resolved.agents.iter().zip(&runs) {
                    write_fig(
                        format!("visits-{env_label}-{}.svg", kind.name()),
                        Figure {
                            title: format!("{}: state visit probability ({env_label})", kind.name()),
                            x_label: "iteration".into(),
                            y_label: "visit probability".into(),
                            series: visit_series(log),
                        },
                    )?;
                }
            }
            Preset::CurvesChain | Preset::CurvesControl => {
                let series = resolved
                    .agents
                    .iter()
                    .zip(&runs)
                    .map(|((kind, _), (_, log))| curve_series(kind.name(), log))
                    .collect();
                write_fig(
                    format!("curves-{env_label}.svg"),
                    Figure {
                        title: format!("training curves ({env_label})"),
                        x_label: "iteration".into(),
                        y_label: "mean return".into(),
                        series,
                    },
                )?;
            }
        }
    }
    Ok(svgs)
}

fn read_series(path: &Path) -> Result<Series> {
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let shown = path.display().to_string();
    let bad = |row: usize, column: usize, message: String| Error::Csv {
        path: shown.clone(),
        row,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| bad(0, 0, e.to_string()))?;
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(bad(1, 0, "missing header".into())),
        Some(r) => r.map_err(|e| bad(1, 0, e.to_string()))?,
    };
    let header: Vec<&str> = header.iter().collect();
    // (x column, y column) by schema
    let (xcol, ycol) = if header == ITERATIONS_HEADER {
        (1, 2)
    } else if header == EPISODES_HEADER {
        (1, 2)
    } else {
        return Err(bad(1, 1, format!("unrecognized header {header:?}")));
    };
    let mut by_x: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    let mut count = 0;
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| bad(row, 0, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(bad(row, rec.len().min(header.len()) + 1, format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        rec[0]
            .parse::<u64>()
            .map_err(|_| bad(row, 1, format!("`{}` is not a seed", &rec[0])))?;
        let x: u64 = rec[xcol]
            .parse()
            .map_err(|_| bad(row, xcol + 1, format!("`{}` is not an index", &rec[xcol])))?;
        for (c, field) in rec.iter().enumerate().skip(2) {
            if !field.parse::<f64>().is_ok_and(f64::is_finite) {
                return Err(bad(row, c + 1, format!("`{field}` is not a finite number")));
            }
        }
        let y: f64 = rec[ycol].parse().expect("checked above");
        by_x.entry(x).or_default().push(y);
        count += 1;
    }
    if count == 0 {
        return Err(bad(2, 0, "no data rows".into()));
    }
    let x = by_x.keys().map(|&k| k as f64).collect();
    let (mean, std) = by_x.values().map(|v| mean_std(v)).unzip();
    Ok(Series {
        label,
        x,
        mean,
        std: Some(std),
    })
}

/// Plots `iterations.csv` or `episodes.csv` files, one series (cross-seed mean ± std) per file.
pub fn cmd_plot(csvs: &[PathBuf], output: &Path) -> Result<PathBuf> {
    if csvs.is_empty() {
        return Err(Error::InvalidInput("no CSV files given".into()));
    }
    let series = csvs.iter().map(|p| read_series(p)).collect::<Result<Vec<_>>>()?;
    let x_label = if csvs.iter().all(|p| p.file_name().is_some_and(|f| f == "episodes.csv")) {
        "episode"
    } else {
        "iteration"
    };
    let fig = Figure {
        title: "training curves".into(),
        x_label: x_label.into(),
        y_label: "return".into(),
        series,
    };
    let path = if output.extension().is_some_and(|e| e == "svg") {
        output.to_path_buf()
    } else {
        output.join("plot.svg")
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, fig.to_svg()?)?;
    Ok(path)
}

/// Maps a command result to the process exit code: 0 success, 2 usage or config error, 1 otherwise.
pub fn exit_code<T>(result: &Result<T>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(set: &[&str]) -> Overrides {
        Overrides {
            set: set.iter().map(|s| s.to_string()).collect(),
            ..Overrides::default()
        }
    }

    #[test]
    fn defaults_and_overrides() {
        let r = resolve_str("", &Overrides::default()).unwrap();
        assert_eq!(r.env, EnvSpec::chain(8));
        assert_eq!(r.agents.len(), 1);
        assert_eq!(r.train, TrainSection::default());
        assert_eq!(r.out_root, PathBuf::from(DEFAULT_OUT));

        let text = "[agent]\nkind = [\"vdqn\", \"dqn\"]\nalpha = 0.5\n[agent.dqn]\nalpha = 0.25\n";
        let r = resolve_str(text, &ov(&["agent.vdqn.alpha=0.125", "train.episodes=3", "env.n_states=5"])).unwrap();
        assert_eq!(r.agents[0].1.alpha, 0.125);
        assert_eq!(r.agents[1].1.alpha, 0.25);
        assert_eq!(r.train.episodes, 3);
        assert_eq!(r.env, EnvSpec::chain(5));
        assert_eq!(r.run_name(1), "chain-n5-dqn");
    }

    #[test]
    fn flags_win_over_file() {
        let text = "[train]\nseed = 4\n[output]\ndir = \"from-file\"\n";
        let o = Overrides {
            seed: Some(9),
            agents: Some("noisynet".into()),
            out: Some("from-flag".into()),
            env_out: Some("from-env".into()),
            ..Overrides::default()
        };
        let r = resolve_str(text, &o).unwrap();
        assert_eq!(r.train.seed, 9);
        assert_eq!(r.agents[0].0, AgentKind::Noisy);
        assert_eq!(r.out_root, PathBuf::from("from-flag"));
        let o = Overrides {
            env_out: Some("from-env".into()),
            ..Overrides::default()
        };
        assert_eq!(resolve_str(text, &o).unwrap().out_root, PathBuf::from("from-file"));
        assert_eq!(resolve_str("", &o).unwrap().out_root, PathBuf::from("from-env"));
    }

    fn config_key(text: &str, set: &[&str]) -> String {
        match resolve_str(text, &ov(set)) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(config_key("", &["agent.alpha=-1"]), "agent.alpha");
        assert_eq!(config_key("", &["agent.bogus=1"]), "agent.variational.bogus");
        assert_eq!(config_key("", &["train.epsiodes=1"]), "train.epsiodes");
        assert_eq!(config_key("", &["agents.kind=dqn"]), "agents");
        assert_eq!(config_key("", &["env.n_states=2"]), "env.n_states");
        assert_eq!(config_key("", &["train.episodes=0"]), "train.episodes");
        assert_eq!(config_key("[env]\nkind = \"chain\"\nn_states = 4\nsize = 3\n", &[]), "env.size");
        let Err(e) = resolve_str("", &Overrides { agents: Some("dqn,rainbow".into()), ..Overrides::default() }) else {
            panic!()
        };
        assert!(e.to_string().contains("rainbow"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "[agent]\nkind = [\"vdqn\", \"dqn\"]\n[agent.vdqn]\nalpha = 2e-5\n[env]\nkind = \"cartpole\"\nvariant = \"v1\"\n";
        let r = resolve_str(text, &ov(&["train.seeds=2"])).unwrap();
        for i in 0..2 {
            let again = resolve_str(&r.resolved_toml(i).unwrap(), &Overrides::default()).unwrap();
            assert_eq!(again.experiment(0), r.experiment(i));
            assert_eq!(again.run_dir(0), r.run_dir(i));
        }
    }

    #[test]
    fn set_values_are_typed() {
        let mut t = Table::new();
        set_dotted(&mut t, "a.b=3").unwrap();
        set_dotted(&mut t, "a.c=hello").unwrap();
        set_dotted(&mut t, "a.d=[1, 2]").unwrap();
        assert_eq!(t["a"]["b"], Value::Integer(3));
        assert_eq!(t["a"]["c"], Value::String("hello".into()));
        assert!(t["a"]["d"].is_array());
        assert!(set_dotted(&mut t, "novalue").is_err());
        assert!(set_dotted(&mut t, "a.b.c=1").is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 11.0, 1.0 / 3.0, -2.5e-300, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(11.0), "1.1000000000000000e1");
    }
}
