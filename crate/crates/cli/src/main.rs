//! Command-line front end: parse models, answer queries, sample worlds, run
//! the conformance checks, drive the stream protocol, and benchmark lifted
//! against grounded inference.

use clap::{Args, Parser, Subcommand, ValueEnum};
use projfam::infinite::{StreamModel, StreamState};
use projfam::logic::{parse_db, parse_query, QFFormula, Structure, Term, Vocabulary};
use projfam::mln::{parse_mln, Mln};
use projfam::plp::{parse_program, Program};
use projfam::rbn::Rbn;
use projfam::{AhkModel, Error, Family, Num, PropertyReport};
use serde_json::json;
use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "projfam", about = "Projective families of relational distributions", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelFormat {
    Plp,
    Mln,
    Rbn,
    Ahk,
}

#[derive(Args)]
struct ModelArg {
    /// Model file: .plp, .mln, .rbn.json, or .ahk.json
    model: String,
    /// Override the format inferred from the extension
    #[arg(long, value_enum)]
    model_format: Option<ModelFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Check exchangeability and projectivity by exhaustive enumeration
    Check {
        #[command(flatten)]
        model: ModelArg,
        /// Largest domain size to certify
        #[arg(long, default_value_t = 3)]
        max_size: usize,
        /// Also check projectivity of every conditional family
        #[arg(long)]
        sigma: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Marginal probability of a ground query
    Infer {
        #[command(flatten)]
        model: ModelArg,
        /// Ground query; commas mean conjunction
        #[arg(long)]
        query: String,
        /// Extensional database file; defaults to the query's elements
        #[arg(long)]
        db: Option<String>,
        /// Print the value as a decimal float
        #[arg(long, conflicts_with = "rational")]
        float: bool,
        /// Print the value exactly (default)
        #[arg(long)]
        rational: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Draw worlds from the model's distribution
    Sample {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        db: Option<String>,
        /// Domain size when no database is given
        #[arg(long, default_value_t = 3)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the full world table over a base structure
    Enumerate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        db: Option<String>,
        #[arg(long, default_value_t = 2)]
        size: usize,
        #[arg(long)]
        float: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Reveal an infinite world element by element (reads stdin):
    /// `add <element> [facts...]`, `query <formula>`, `world`
    Stream {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time lifted vs grounded inference across domain sizes
    Bench {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "edge(e1,e2)")]
        query: String,
        /// Largest domain size to time
        #[arg(long, default_value_t = 6)]
        max_size: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

enum Model {
    Plp(Program),
    Mln(Mln),
    Rbn(Rbn),
    Ahk(AhkModel),
}

impl Model {
    fn load(arg: &ModelArg) -> Result<Model, String> {
        let text = std::fs::read_to_string(&arg.model)
            .map_err(|e| format!("cannot read {}: {e}", arg.model))?;
        let format = match arg.model_format {
            Some(f) => f,
            None => infer_format(&arg.model)?,
        };
        let parsed = match format {
            ModelFormat::Plp => parse_program(&text).map(Model::Plp),
            ModelFormat::Mln => parse_mln(&text).map(Model::Mln),
            ModelFormat::Rbn => Rbn::from_json(&text).map(Model::Rbn),
            ModelFormat::Ahk => AhkModel::from_json(&text).map(Model::Ahk),
        };
        parsed.map_err(|e| format!("cannot parse {}: {e}", arg.model))
    }

    fn family(&self) -> projfam::Result<Family> {
        match self {
            Model::Plp(p) => Family::from_plp(p),
            Model::Mln(m) => Family::from_mln(m),
            Model::Rbn(r) => Family::from_rbn(r),
            Model::Ahk(a) => Family::from_ahk(a),
        }
    }

    /// Does the model fall in the fragment with domain-size-independent
    /// marginals? Returns the reason when it does not.
    fn lifted_qualification(&self) -> Result<(), String> {
        match self {
            Model::Plp(p) => p
                .check_determinate()
                .map_err(|c| format!("program is not determinate: {c}")),
            Model::Mln(m) => m
                .check_sigma_determinate()
                .map_err(|f| format!("network is not sigma-determinate: {f:?}")),
            Model::Rbn(r) => {
                if r.check_comb_free() {
                    Ok(())
                } else {
                    Err("network uses a combiner".to_string())
                }
            }
            Model::Ahk(a) => a
                .check_equivariance()
                .map_err(|e| e.to_string())
                .and_then(|rep| if rep.holds_up_to() { Ok(()) } else { Err(rep.to_string()) }),
        }
    }
}

fn infer_format(path: &str) -> Result<ModelFormat, String> {
    let name = Path::new(path)
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or(path);
    if name.ends_with(".plp") {
        Ok(ModelFormat::Plp)
    } else if name.ends_with(".mln") {
        Ok(ModelFormat::Mln)
    } else if name.ends_with(".rbn.json") || name.ends_with(".rbn") {
        Ok(ModelFormat::Rbn)
    } else if name.ends_with(".ahk.json") || name.ends_with(".ahk") {
        Ok(ModelFormat::Ahk)
    } else {
        Err(format!("cannot infer a model format from {name}; use --model-format"))
    }
}

/// Usage, parse, and capacity problems exit 2; property violations exit 1.
fn fail(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => fail(&msg),
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Check { model, max_size, sigma, format } => {
            check(&Model::load(&model)?, max_size, sigma, format)
        }
        Command::Infer { model, query, db, float, rational: _, format } => {
            infer(&Model::load(&model)?, &query, db.as_deref(), float, format)
        }
        Command::Sample { model, db, size, seed, count, format } => {
            sample(&Model::load(&model)?, db.as_deref(), size, seed, count, format)
        }
        Command::Enumerate { model, db, size, float, format } => {
            enumerate(&Model::load(&model)?, db.as_deref(), size, float, format)
        }
        Command::Stream { model, seed } => stream(Model::load(&model)?, seed),
        Command::Bench { model, query, max_size, format } => {
            bench(&Model::load(&model)?, &query, max_size, format)
        }
    }
}

fn lib_err(e: Error) -> String {
    e.to_string()
}

/// Cache world tables across the property checks; the sigma check revisits
/// the same bases once per conditional family.
fn memoized(fam: Family) -> projfam::Result<Family> {
    use std::collections::BTreeMap;
    use std::sync::Mutex;
    let cache: Mutex<BTreeMap<Structure, projfam::WorldDistribution>> = Mutex::new(BTreeMap::new());
    Family::new(fam.ext_vocab().clone(), fam.int_vocab().clone(), move |base| {
        if let Some(d) = cache.lock().unwrap().get(base) {
            return Ok(d.clone());
        }
        let d = fam.at(base)?;
        cache.lock().unwrap().insert(base.clone(), d.clone());
        Ok(d)
    })
}

fn check(model: &Model, max_size: usize, sigma: bool, format: Format) -> Result<ExitCode, String> {
    let fam = memoized(model.family().map_err(lib_err)?).map_err(lib_err)?;
    let mut reports: Vec<PropertyReport> = Vec::new();
    reports.push(projfam::check_exchangeable(&fam, max_size).map_err(lib_err)?);
    reports.push(projfam::check_projective(&fam, max_size).map_err(lib_err)?);
    if sigma {
        reports.push(projfam::check_sigma_projective(&fam, max_size).map_err(lib_err)?);
    }
    let violated = reports.iter().any(|r| !r.holds_up_to());
    match format {
        Format::Text => {
            for r in &reports {
                println!("{r}");
                if let Some(note) = &r.note {
                    println!("  note: {note}");
                }
            }
        }
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(&reports).unwrap());
        }
    }
    Ok(if violated { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

/// Element names appearing in a ground query.
fn query_elements(f: &QFFormula, out: &mut BTreeSet<String>) {
    match f {
        QFFormula::True => {}
        QFFormula::Atom(_, terms) => {
            for t in terms {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
        QFFormula::Eq(a, b) => {
            for t in [a, b] {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        }
        QFFormula::Not(g) => query_elements(g, out),
        QFFormula::And(g, h) | QFFormula::Or(g, h) => {
            query_elements(g, out);
            query_elements(h, out);
        }
    }
}

/// The extensional base: the database file if given, otherwise a bare
/// structure over the query's elements.
fn resolve_base(
    ext: &Vocabulary,
    db: Option<&str>,
    query: &QFFormula,
) -> Result<Structure, String> {
    match db {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
            let parsed = parse_db(&text).map_err(|e| format!("cannot parse {path}: {e}"))?;
            if !parsed.vocab().is_subvocab_of(ext) {
                return Err(format!("{path} mentions relations outside the extensional vocabulary"));
            }
            parsed.expand_vocab(ext).map_err(lib_err)
        }
        None => {
            let mut elements = BTreeSet::new();
            query_elements(query, &mut elements);
            if elements.is_empty() {
                return Err("query mentions no elements and no --db was given".to_string());
            }
            Structure::new(ext.clone(), elements.into_iter().collect()).map_err(lib_err)
        }
    }
}

fn show_value(v: &Num, float: bool) -> String {
    if float {
        format!("{}", v.to_f64())
    } else {
        v.to_string()
    }
}

fn json_value(v: &Num, float: bool) -> serde_json::Value {
    if float {
        json!(v.to_f64())
    } else {
        json!(v.to_string())
    }
}

fn infer(
    model: &Model,
    query: &str,
    db: Option<&str>,
    float: bool,
    format: Format,
) -> Result<ExitCode, String> {
    let query = parse_query(query).map_err(|e| format!("cannot parse query: {e}"))?;
    if !query.free_vars().is_empty() {
        return Err("queries must be ground".to_string());
    }
    let fam = model.family().map_err(lib_err)?;
    let base = resolve_base(fam.ext_vocab(), db, &query)?;
    let qualification = model.lifted_qualification();
    let (value, path) = match &qualification {
        // the marginal over the query's elements is domain-independent:
        // evaluate on the generated substructure
        Ok(()) => {
            let value = match model {
                Model::Plp(p) => projfam::plp::lifted_marginal(p, &base, &query).map_err(lib_err)?,
                _ => {
                    let mut elements = BTreeSet::new();
                    query_elements(&query, &mut elements);
                    let fragment = base.generated_substructure(&elements).map_err(lib_err)?;
                    fam.at(&fragment).map_err(lib_err)?.marginal(&query).map_err(lib_err)?
                }
            };
            (value, "lifted")
        }
        Err(_) => {
            let value = match model {
                Model::Plp(p) => projfam::plp::marginal(p, &base, &query).map_err(lib_err)?,
                _ => fam.at(&base).map_err(lib_err)?.marginal(&query).map_err(lib_err)?,
            };
            (value, "grounded")
        }
    };
    match format {
        Format::Text => {
            println!("value: {}", show_value(&value, float));
            println!("path: {path}");
            if let Err(reason) = &qualification {
                println!("  ({reason})");
            }
        }
        Format::Json => {
            let mut out = json!({ "value": json_value(&value, float), "path": path });
            if let Err(reason) = &qualification {
                out["reason"] = json!(reason);
            }
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sample(
    model: &Model,
    db: Option<&str>,
    size: usize,
    seed: u64,
    count: u64,
    format: Format,
) -> Result<ExitCode, String> {
    let fam = model.family().map_err(lib_err)?;
    let base = match db {
        Some(_) => resolve_base(fam.ext_vocab(), db, &QFFormula::True)?,
        None => {
            let domain: Vec<String> = (0..size).map(projfam::canonical_name).collect();
            Structure::new(fam.ext_vocab().clone(), domain).map_err(lib_err)?
        }
    };
    for k in 0..count {
        let world = match model {
            Model::Ahk(a) => a.sample_world(&base, seed.wrapping_add(k)).map_err(lib_err)?,
            _ => {
                // inverse-CDF draw from the exact table
                let dist = fam.at(&base).map_err(lib_err)?;
                let u = splitmix(seed.wrapping_add(k)) as f64 / 2f64.powi(64);
                let mut acc = 0.0;
                let mut chosen = None;
                for (w, p) in dist.table() {
                    acc += p.to_f64();
                    if u < acc {
                        chosen = Some(w.clone());
                        break;
                    }
                    chosen = Some(w.clone());
                }
                chosen.ok_or("the distribution has empty support")?
            }
        };
        match format {
            Format::Text => println!("{world}"),
            Format::Json => println!("{}", json!({ "value": world.to_string() })),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn enumerate(
    model: &Model,
    db: Option<&str>,
    size: usize,
    float: bool,
    format: Format,
) -> Result<ExitCode, String> {
    let fam = model.family().map_err(lib_err)?;
    let base = match db {
        Some(_) => resolve_base(fam.ext_vocab(), db, &QFFormula::True)?,
        None => {
            let domain: Vec<String> = (0..size).map(projfam::canonical_name).collect();
            Structure::new(fam.ext_vocab().clone(), domain).map_err(lib_err)?
        }
    };
    let dist = fam.at(&base).map_err(lib_err)?;
    match format {
        Format::Text => {
            for (w, p) in dist.table() {
                println!("{}\t{}", show_value(p, float), w);
            }
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = dist
                .table()
                .iter()
                .map(|(w, p)| json!({ "world": w.to_string(), "value": json_value(p, float) }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).unwrap());
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Parse one `rel(a,b)` fact of the stream protocol.
fn parse_fact(text: &str) -> Result<(String, Vec<String>), String> {
    let (rel, rest) = text
        .split_once('(')
        .ok_or_else(|| format!("malformed fact {text}; expected rel(a,b)"))?;
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| format!("malformed fact {text}; expected rel(a,b)"))?;
    let args = inner.split(',').map(|a| a.trim().to_string()).collect();
    Ok((rel.trim().to_string(), args))
}

fn stream(model: Model, seed: u64) -> Result<ExitCode, String> {
    let stream_model = match model {
        Model::Plp(p) => StreamModel::Plp(p),
        Model::Ahk(a) => StreamModel::Ahk(a),
        _ => return Err("streaming supports .plp and .ahk.json models".to_string()),
    };
    let mut state = StreamState::with_model(stream_model, seed).map_err(lib_err)?;
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| e.to_string())?;
        let mut words = line.split_whitespace();
        match words.next() {
            None => continue,
            Some("add") => {
                let name = words.next().ok_or("add needs an element name")?.to_string();
                let facts: Vec<(String, Vec<String>)> =
                    words.map(parse_fact).collect::<Result<_, _>>()?;
                let facts = if facts.is_empty() { None } else { Some(&facts[..]) };
                state.add_element(&name, facts).map_err(lib_err)?;
                println!("ok {name}");
            }
            Some("query") => {
                let text: String = words.collect::<Vec<_>>().join(" ");
                let query = parse_query(&text).map_err(|e| format!("cannot parse query: {e}"))?;
                let value = state.prefix_marginal(&query).map_err(lib_err)?;
                println!("{value}");
            }
            Some("world") => {
                let world = state.reveal_world().map_err(lib_err)?;
                println!("{world}");
            }
            Some(other) => return Err(format!("unknown command {other}; use add/query/world")),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(model: &Model, query: &str, max_size: usize, format: Format) -> Result<ExitCode, String> {
    let program = match model {
        Model::Plp(p) => p,
        _ => return Err("bench supports .plp models".to_string()),
    };
    let query = parse_query(query).map_err(|e| format!("cannot parse query: {e}"))?;
    let time = |f: &dyn Fn() -> projfam::Result<Num>| -> Result<f64, String> {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            f().map_err(lib_err)?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let mut rows = Vec::new();
    for n in 2..=max_size {
        let domain: Vec<String> = (0..n).map(projfam::canonical_name).collect();
        let base = Structure::new(program.ext_vocab().clone(), domain).map_err(lib_err)?;
        // grounded baseline sums out every ground coin of the full grounding
        let grounded = time(&|| projfam::plp::exhaustive_marginal(program, &base, &query))?;
        let lifted = time(&|| projfam::plp::lifted_marginal(program, &base, &query))?;
        rows.push((n, grounded, lifted));
    }
    let ratio = |f: fn(&(usize, f64, f64)) -> f64| -> Option<f64> {
        let first = rows.first()?;
        let last = rows.last()?;
        Some(f(last) / f(first))
    };
    let grounded_ratio = ratio(|r| r.1);
    let lifted_ratio = ratio(|r| r.2);
    match format {
        Format::Text => {
            println!("size\tgrounded_s\tlifted_s");
            for (n, g, l) in &rows {
                println!("{n}\t{g:.6}\t{l:.6}");
            }
            if let (Some(g), Some(l)) = (grounded_ratio, lifted_ratio) {
                println!("ratio {}/{}: grounded {g:.2}, lifted {l:.2}", rows.last().unwrap().0, rows[0].0);
            }
        }
        Format::Json => {
            let timings: Vec<serde_json::Value> = rows
                .iter()
                .map(|(n, g, l)| json!({ "size": n, "grounded": g, "lifted": l }))
                .collect();
            let out = json!({
                "timings": timings,
                "grounded_ratio": grounded_ratio,
                "lifted_ratio": lifted_ratio,
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
    }
    Ok(ExitCode::SUCCESS)
}
