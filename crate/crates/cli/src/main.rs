mod serve;

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use urbis_core::api::{ApiRequest, Service};
use urbis_core::dataset::{read_features, City};
use urbis_core::features::FeatureCollection;
use urbis_core::gen::{generate_city, kind_counts, GenSpec, GEOMETRY_FILE, TRAFFIC_FILE};
use urbis_core::import::import_collection;
use urbis_core::persist::{read_log, recover, FlushPolicy, LogFile};
use urbis_core::traffic::CongestionSample;
use urbis_core::{BBox, Millis, Store};

#[derive(Parser)]
#[command(name = "urbis", version, about = "City-scale spatiotemporal data platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic city into a directory.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides such as `buildings=1000,persons=5000`.
        #[arg(long, default_value = "")]
        counts: String,
        /// `min_lon,min_lat,max_lon,max_lat`.
        #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
        bbox: Option<BBox>,
    },
    /// Append a FeatureCollection to the log as Create events.
    Import {
        input: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Geometry sidecar to extend; defaults to the one next to the log.
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Event time in ms; defaults to now.
        #[arg(long)]
        at: Option<Millis>,
    },
    /// Serve the HTTP API over a recovered log.
    Serve {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long)]
        traffic: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
    },
    /// Measure replay throughput over a log.
    ReplayBench {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 3)]
        rounds: u32,
    },
    /// Print a composition breakdown computed offline.
    Stats {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long)]
        attr: String,
        #[arg(long)]
        region: Option<String>,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        at: Option<Millis>,
        /// Category bins such as `0:child,18:adult,60:senior`.
        #[arg(long)]
        bins: Option<String>,
    },
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [a, b, c, d] => BBox::new(a, b, c, d).map_err(|e| e.to_string()),
        _ => Err("expected four comma-separated numbers".into()),
    }
}

fn sibling(log: &Path, name: &str) -> PathBuf {
    log.parent().unwrap_or(Path::new(".")).join(name)
}

fn existing(explicit: Option<PathBuf>, log: &Path, name: &str) -> Option<PathBuf> {
    explicit.or_else(|| Some(sibling(log, name)).filter(|p| p.exists()))
}

fn load_city(log: &Path, geometry: Option<PathBuf>, traffic: Option<PathBuf>) -> anyhow::Result<(City, LogFile)> {
    let rec = recover(log, FlushPolicy::default()).with_context(|| format!("recovering {}", log.display()))?;
    if rec.torn_tail {
        eprintln!("warning: dropped a torn final line from {}", log.display());
    }
    let features = match existing(geometry, log, GEOMETRY_FILE) {
        Some(p) => read_features(&p)?,
        None => Vec::new(),
    };
    let mut city = City::assemble(rec.store, features)?;
    if let Some(p) = existing(traffic, log, TRAFFIC_FILE) {
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let samples: Vec<CongestionSample> = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        city.traffic.ingest_batch(&samples)?;
    }
    Ok((city, rec.log))
}

fn now_ms() -> Millis {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as Millis)
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Gen { seed, out, counts, bbox } => {
            let mut spec = GenSpec { seed, ..GenSpec::default() };
            spec.counts.apply(&counts)?;
            if let Some(b) = bbox {
                spec.bbox = b;
            }
            let city = generate_city(&spec)?;
            city.write(&out).with_context(|| format!("writing {}", out.display()))?;
            let store = Store::from_events(city.events.iter().cloned())?;
            print_json(&serde_json::json!({
                "out": out,
                "events": city.events.len(),
                "samples": city.samples.len(),
                "entities": kind_counts(&store),
            }))
        }
        Command::Import { input, log, geometry, at } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let sidecar = geometry.unwrap_or_else(|| sibling(&log, GEOMETRY_FILE));
            let mut features = if sidecar.exists() { read_features(&sidecar)? } else { Vec::new() };
            let mut rec = recover(&log, FlushPolicy::default())?;
            let outcome = import_collection(&text, &mut rec.store, &mut rec.log, at.unwrap_or_else(now_ms), "import")?;
            rec.log.sync()?;
            features.extend(outcome.features);
            let fc = FeatureCollection { features: features.iter().map(|f| f.to_feature()).collect(), ..Default::default() };
            std::fs::write(&sidecar, serde_json::to_string(&fc)? + "\n")?;
            print_json(&serde_json::to_value(&outcome.report)?)
        }
        Command::Serve { log, geometry, traffic, port, bind } => {
            let (city, sink) = load_city(&log, geometry, traffic)?;
            serve::serve(Service::with_sink(city, Box::new(sink)), SocketAddr::new(bind, port))
        }
        Command::ReplayBench { log, rounds } => {
            let file = std::fs::File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let events = read_log(std::io::BufReader::new(file))?.events;
            if events.is_empty() {
                bail!("{} holds no events", log.display());
            }
            let mut best = f64::INFINITY;
            let mut entities = 0;
            for _ in 0..rounds.max(1) {
                let start = Instant::now();
                let store = Store::from_events(events.iter().cloned())?;
                best = best.min(start.elapsed().as_secs_f64());
                entities = store.entity_count();
            }
            print_json(&serde_json::json!({
                "events": events.len(),
                "entities": entities,
                "best_seconds": best,
                "events_per_sec": events.len() as f64 / best.max(1e-9),
            }))
        }
        Command::Stats { log, geometry, attr, region, kind, at, bins } => {
            let (city, _) = load_city(&log, geometry, None)?;
            let mut query = BTreeMap::from([("attr".to_string(), attr)]);
            let optional = [("region", region), ("kind", kind), ("at", at.map(|t| t.to_string())), ("bins", bins)];
            query.extend(optional.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))));
            let req = ApiRequest { method: "GET".into(), segments: vec!["stats".into(), "composition".into()], query, body: String::new() };
            let resp = Service::new(city).route_request(&req);
            if resp.status != 200 {
                bail!("{}", resp.body);
            }
            print_json(&resp.value())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
