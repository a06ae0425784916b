use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use serde_json::json;

use percolab::connectivity::SigmaSequence;
use percolab::experiments::{self, est_cells, num, ExperimentConfig, ResultTable};
use percolab::iic::{conditioned_seeds, Anchor, WindowFrame};
use percolab::invasion::{decompose, invade, write_snapshot, StopRule};
use percolab::scaling::{correlation_length, four_arm_prob, four_arm_relation, P_C};
use percolab::{Error, Site, WeightField};

const EXIT_DOMAIN: u8 = 1;
const EXIT_RESOURCE: u8 = 2;
const EXIT_MALFORMED: u8 = 3;

#[derive(Parser)]
#[command(name = "percolab", version, about = "Invasion percolation simulator and percolation statistics lab")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one invasion and write its snapshot.
    #[command(group(ArgGroup::new("stop").required(true).args(["stop_radius", "stop_steps"])))]
    Invade {
        #[arg(long, env = "PERCOLAB_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "0,0", value_parser = parse_site)]
        origin: Site,
        #[arg(long)]
        stop_radius: Option<u32>,
        #[arg(long)]
        stop_steps: Option<u64>,
        /// Snapshot file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Outlets and ponds of one run, as CSV.
    Ponds {
        #[arg(long, env = "PERCOLAB_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        stop_radius: u32,
        #[arg(long, default_value_t = P_C, value_parser = parse_prob)]
        pc: f64,
        /// Certification radius (default: twice the stop radius).
        #[arg(long)]
        rmax: Option<u32>,
    },
    /// Correlation length L(p, ε).
    Corrlen {
        #[arg(long, env = "PERCOLAB_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long, value_parser = parse_prob)]
        p: f64,
        #[arg(long, default_value_t = 0.05, value_parser = parse_prob)]
        epsilon: f64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 4096)]
        n_max: u32,
    },
    /// Four-arm probability from the edge (0,0)-(1,0) to distance n.
    Fourarm {
        #[arg(long, env = "PERCOLAB_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = P_C, value_parser = parse_prob)]
        p: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        /// Also estimate p_n and the product (p_n - p_c) n² P(four arms at p_c).
        #[arg(long)]
        with_pn: bool,
        #[arg(long, default_value_t = 0.05, value_parser = parse_prob)]
        epsilon: f64,
    },
    /// Draw σ-conditioned configurations and print their central windows.
    IicSample {
        #[arg(long, env = "PERCOLAB_SEED", default_value_t = 1)]
        seed: u64,
        /// Arm colours, e.g. `ococ` or `open,closed,open,closed`.
        #[arg(long)]
        sigma: String,
        #[arg(long, default_value_t = 0)]
        l: u32,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = P_C, value_parser = parse_prob)]
        p: f64,
        #[arg(long, default_value_t = 10)]
        samples: u64,
        #[arg(long, default_value_t = 1_000_000)]
        max_attempts: u64,
        /// Radius of the printed window.
        #[arg(long, default_value_t = 1)]
        radius: u32,
    },
    /// Run every experiment section of a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_site(s: &str) -> Result<Site, String> {
    let (x, y) = s.trim_matches(|c| c == '(' || c == ')').split_once(',').ok_or("expected x,y")?;
    let x = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Site::new(x, y))
}

fn parse_prob(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("{p} is not in [0, 1]"));
    }
    Ok(p)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceLimit { .. } | Error::Rejected { .. } => EXIT_RESOURCE,
        Error::Config { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_MALFORMED,
        _ => EXIT_DOMAIN,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_MALFORMED } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_MALFORMED);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> percolab::Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cmd {
        Command::Invade { seed, origin, stop_radius, stop_steps, out: path } => {
            let stop = match (stop_radius, stop_steps) {
                (Some(r), None) => StopRule::ReachRadius(r),
                (None, Some(t)) => StopRule::StepCount(t),
                _ => unreachable!("clap enforces exactly one stop flag"),
            };
            let run = invade(WeightField::new(seed), origin, stop)?;
            let max = run.max_weight().map_or(String::new(), |w| format!("{w}"));
            let summary = format!("steps={} max_weight={} final_radius={}", run.steps(), max, run.max_radius);
            match path {
                Some(p) => {
                    write_snapshot(&run, BufWriter::new(fs::File::create(&p)?))?;
                    writeln!(out, "{summary}")?;
                }
                None => {
                    write_snapshot(&run, &mut out)?;
                    eprintln!("{summary}");
                }
            }
        }
        Command::Ponds { seed, stop_radius, pc, rmax } => {
            let rmax = rmax.unwrap_or(2 * stop_radius);
            if rmax <= stop_radius {
                return Err(Error::Domain(format!("--rmax {rmax} must exceed --stop-radius {stop_radius}")));
            }
            let f = WeightField::new(seed);
            let run = invade(f, Site::ORIGIN, StopRule::ReachRadius(stop_radius))?;
            let (d, _) = decompose(&run, f, pc, rmax)?;
            let mut t = ResultTable::new("ponds");
            t.col("k", "").col("tau_k", "").col("step_k", "").col("pond_volume", "").col("R_k", "").col("certified", "");
            for (i, o) in d.outlets.iter().enumerate() {
                t.push(vec![
                    json!(o.k),
                    num(o.weight),
                    json!(o.step),
                    json!(d.pond_volume(i + 1)),
                    json!(d.radii[i]),
                    json!(o.certified),
                ]);
            }
            t.write_csv(&mut out)?;
        }
        Command::Corrlen { seed, p, epsilon, trials, n_max } => {
            let c = correlation_length(p, epsilon, trials, n_max, seed)?;
            let mut t = ResultTable::new("corrlen");
            t.col("p", "").col("epsilon", "").col("L", "").col("saturated", "").est("sigma", "").col("trials", "");
            let mut row = vec![num(p), num(epsilon), json!(c.length), json!(c.saturated)];
            row.extend(est_cells(c.sigma));
            row.push(json!(trials));
            t.push(row);
            t.write_csv(&mut out)?;
        }
        Command::Fourarm { seed, n, p, trials, with_pn, epsilon } => {
            let a = four_arm_prob(n, p, trials, seed)?;
            let mut t = ResultTable::new("fourarm");
            t.col("n", "").col("p", "").est("prob", "").col("trials", "");
            if with_pn {
                t.est("p_n", "").est("product", "");
            }
            let mut row = vec![json!(n), num(p)];
            row.extend(est_cells(a));
            row.push(json!(trials));
            if with_pn {
                let rel = four_arm_relation(n, epsilon, trials, seed)?;
                row.extend(est_cells(rel.p_n.ci));
                row.extend(est_cells(rel.product));
            }
            t.push(row);
            t.write_csv(&mut out)?;
        }
        Command::IicSample { seed, sigma, l, n, p, samples, max_attempts, radius } => {
            let sigma: SigmaSequence = sigma.parse()?;
            let frame = WindowFrame::new(radius)?;
            let (seeds, attempts) = conditioned_seeds(l, n, &sigma, p, samples, max_attempts, seed)?;
            let mut t = ResultTable::new("iic_sample");
            t.col("sample", "").col("field_seed", "").col("window", "");
            for (i, s) in seeds.iter().enumerate() {
                let pat = frame.pattern(&WeightField::new(*s), Anchor::Vertex(Site::ORIGIN), p);
                t.push(vec![json!(i), json!(s), json!(pat.to_hex(frame.bits()))]);
            }
            t.write_csv(&mut out)?;
            eprintln!("accepted={} attempts={attempts}", seeds.len());
        }
        Command::Experiment { config } => {
            let text = fs::read_to_string(&config)?;
            for cfg in ExperimentConfig::parse_all(&text)? {
                let (table, csv_path, json_path) = experiments::run_to_files(&cfg)?;
                writeln!(out, "{}: wrote {} and {}", cfg.name, csv_path.display(), json_path.display())?;
                for g in &table.gates {
                    writeln!(out, "{} {}: {} ({})", if g.passed { "PASS" } else { "FAIL" }, cfg.name, g.name, g.detail)?;
                }
                for f in &table.flags {
                    writeln!(out, "FLAG {}: {f}", cfg.name)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
