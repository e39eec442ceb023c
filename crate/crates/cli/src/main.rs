use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use comclust::io::{self, Format};
use comclust::pipeline::{run_pipeline_with, RunOptions};
use comclust::{detect, eval, generate_blobs, Algorithm, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "comclust", version, about = "Clustering by community detection and merging")]
struct Cli {
    /// Only print errors
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DataFormat {
    Csv,
    Bin,
}

impl From<DataFormat> for Format {
    fn from(f: DataFormat) -> Self {
        match f {
            DataFormat::Csv => Format::Csv,
            DataFormat::Bin => Format::Binary,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Detector {
    Leiden,
    Louvain,
}

impl From<Detector> for Algorithm {
    fn from(d: Detector) -> Self {
        match d {
            Detector::Leiden => Algorithm::Leiden,
            Detector::Louvain => Algorithm::Louvain,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster a dataset; writes assignments.csv and report.json
    Run {
        /// Flat `key = value` config file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
        format: DataFormat,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config cluster count
        #[arg(long)]
        k: Option<usize>,
        /// Dump each round's unlabeled-pool graph under OUT/graphs
        #[arg(long)]
        debug_graphs: bool,
    },
    /// Generate Gaussian blobs with ground-truth labels
    Gen {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
        format: DataFormat,
    },
    /// Score a labeling against ground truth, joined on sample id
    Eval {
        /// CSV with `id,...,cluster` or `id,...,label`
        #[arg(long)]
        pred: PathBuf,
        /// CSV whose last column is `label`
        #[arg(long)]
        truth: PathBuf,
    },
    /// Community detection on a `u v w` edge list
    Detect {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, value_enum, default_value_t = Detector::Leiden)]
        algorithm: Detector,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run {
            config,
            data,
            format,
            out,
            seed,
            k,
            debug_graphs,
        } => {
            let mut cfg = match &config {
                Some(path) => io::load_config(path).with_context(|| format!("reading config {}", path.display()))?,
                None => RunConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(k) = k {
                cfg.k = k;
            }
            if cfg.k == 0 {
                bail!("cluster count missing: set `k` in the config or pass --k");
            }
            let dataset = io::load_dataset(&data, format.into())
                .with_context(|| format!("loading {}", data.display()))?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let opts = RunOptions {
                debug_graphs: debug_graphs.then(|| out.join("graphs")),
            };
            let (labels, report) = run_pipeline_with(&dataset, &cfg, &opts)?;

            let mut w = BufWriter::new(File::create(out.join("assignments.csv"))?);
            io::write_assignments(&mut w, dataset.ids(), &labels)?;
            w.flush()?;
            std::fs::write(out.join("report.json"), report.to_json()? + "\n")?;

            if !quiet {
                println!("rounds: {}", report.iterations.len());
                if let (Some(init), Some(fin)) = (report.initial_metrics, report.final_metrics) {
                    println!("k-means  acc {:.4}  nmi {:.4}  ari {:.4}", init.acc, init.nmi, init.ari);
                    println!("final    acc {:.4}  nmi {:.4}  ari {:.4}", fin.acc, fin.nmi, fin.ari);
                }
                println!("wrote {}", out.display());
            }
        }
        Command::Gen {
            k,
            n,
            d,
            spread,
            seed,
            out,
            format,
        } => {
            let data = generate_blobs(k, n, d, spread, seed)?;
            io::save_dataset(&out, &data, format.into())?;
            if !quiet {
                println!("wrote {} rows to {}", n, out.display());
            }
        }
        Command::Eval { pred, truth } => {
            let read = |p: &PathBuf| -> Result<Vec<(String, i64)>> {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Ok(io::read_labels(f).with_context(|| format!("reading {}", p.display()))?)
            };
            let truth: HashMap<String, i64> = read(&truth)?.into_iter().collect();
            let pred = read(&pred)?;
            if pred.len() != truth.len() {
                bail!("{} predictions for {} labeled samples", pred.len(), truth.len());
            }
            let mut p = Vec::with_capacity(pred.len());
            let mut t = Vec::with_capacity(pred.len());
            for (id, label) in pred {
                let Some(&class) = truth.get(&id) else {
                    bail!("sample `{id}` has no ground-truth label");
                };
                p.push(label);
                t.push(class);
            }
            let m = eval::evaluate(&p, &t)?;
            println!("acc {:.6}\nnmi {:.6}\nari {:.6}", m.acc, m.nmi, m.ari);
        }
        Command::Detect { edges, algorithm, seed } => {
            let text = std::fs::read_to_string(&edges).with_context(|| format!("reading {}", edges.display()))?;
            let graph = comclust::graph::parse_edge_list(&text)?;
            let result = detect::detect(&graph, algorithm.into(), seed);
            let mut out = std::io::stdout().lock();
            for (node, label) in result.partition.nodes().iter().zip(result.partition.labels()) {
                writeln!(out, "{node} {label}")?;
            }
            writeln!(out, "# communities {}", result.partition.len())?;
            writeln!(out, "# modularity {}", result.modularity)?;
        }
    }
    Ok(())
}
