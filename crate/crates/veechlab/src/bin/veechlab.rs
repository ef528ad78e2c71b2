//! Batch experiment runner: reproducible runs over the word
//! combinatorics, cocycle scans, cone extraction, and the perturbation
//! pipeline. CSV is the source of truth; SVG plots are a convenience.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use veechlab::cocycle::{
    exponent_scan_oracle, junction_point, theta_block_abs, theta_prefix_sums, walters_b,
    walters_product_over_slice, walters_sup_mean,
};
use veechlab::config::RunConfig;
use veechlab::perturb::{
    backward_diameter_trace, build_schedule, check_schedule, key_estimate_sweep, make_p,
    ModulusPhi,
};
use veechlab::subshift::{find_zero_near, flip_point_at_radius};
use veechlab::verify;
use veechlab::words::{
    build_elementary, c_estimate, length_of, phi_frequency, subword_census, theta_of_elementary,
    Word, WordParams,
};

#[derive(Parser)]
#[command(
    name = "veechlab",
    about = "Experiments on a recursively defined subshift and its matrix cocycles",
    long_about = "Experiments on a recursively defined subshift and its matrix cocycles.\n\n\
Config file format: flat `key = value` lines with optional [section] headers.\n\
Known keys: run.seed, run.out, run.k, run.tolerance, cocycle.s, cocycle.stride,\n\
words.cap, perturb.levels, perturb.shell, perturb.samples.\n\
CLI flags override config file values. Fixed seed => identical output bytes."
)]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed for randomized sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deepest materialized word level.
    #[arg(long = "K", global = true)]
    k_level: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Word combinatorics: build, frequencies, growth constant, census.
    Words {
        #[command(subcommand)]
        sub: WordsCmd,
    },
    /// Cocycle products: exponent traces, junction scans, sup statistics.
    Cocycle {
        #[command(subcommand)]
        sub: CocycleCmd,
    },
    /// Cone geometry: direction bundle traces and the cone test suite.
    Cone {
        #[command(subcommand)]
        sub: ConeCmd,
    },
    /// Perturbation pipeline: schedules, sweeps, invariant verification.
    Perturb {
        #[command(subcommand)]
        sub: PerturbCmd,
    },
    /// Run the full acceptance suite; nonzero exit on any failure.
    VerifyAll,
}

#[derive(Subcommand)]
enum WordsCmd {
    /// Materialize a level-k word and report its exact statistics.
    Build {
        #[arg(long, default_value_t = 2)]
        k: u32,
    },
    /// Frequency enclosure of a subword across levels.
    Freq {
        #[arg(long, default_value = "UD")]
        v: String,
    },
    /// The limiting exponent ratio with an interval bracket.
    C,
    /// Census of distinct subwords by length.
    Census {
        #[arg(long, default_value_t = 4)]
        k: u32,
        #[arg(long, default_value_t = 8)]
        len: usize,
    },
}

#[derive(Subcommand)]
enum CocycleCmd {
    /// Finite-time exponent trace from an offset of the deepest word.
    Lyap {
        #[arg(long, default_value_t = 0)]
        pos: u64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
    /// Exponent scan at the two-block junction witness.
    Scan {
        #[arg(long, default_value_t = 5)]
        junction: u32,
        /// Also write an SVG line plot.
        #[arg(long)]
        svg: bool,
    },
    /// Sampled sup/mean block growth statistics.
    Sup {
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ConeCmd {
    /// Backward cone-image diameter trace at a near-subshift point.
    Bundle {
        #[arg(long, default_value_t = 30)]
        radius: i64,
        #[arg(long, default_value_t = 250)]
        depth: i64,
    },
    /// Run the cone suite checks and emit a verdict.
    Check,
}

#[derive(Subcommand)]
enum PerturbCmd {
    /// Build and certify the paired time/space scale schedules.
    Schedules,
    /// Key-estimate sweep over one shell.
    Sweep {
        #[arg(long)]
        shell: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// Also write an SVG scatter of deviations.
        #[arg(long)]
        svg: bool,
    },
    /// Run the pipeline invariant suite and emit pass/fail verdicts.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            RunConfig::from_text(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.k_level {
        if k == 0 || k > 62 {
            return Err("level must be in 1..=62".into());
        }
        cfg.k = k;
    }
    Ok(cfg)
}

/// 17 significant digits: round-trippable f64 text.
fn fmt(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Atomic write: temp file in the target directory, then rename.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| format!("creating temp: {e}"))?;
        f.write_all(bytes).map_err(|e| format!("writing temp: {e}"))?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).map_err(|e| format!("renaming into {}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), String> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 2);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Minimal SVG line plot: fixed frame, one polyline, no timestamps.
fn svg_line_plot(points: &[(f64, f64)], title: &str) -> String {
    let (w, h, m) = (800.0, 400.0, 40.0);
    let (x_lo, x_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y_lo, y_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let xs = |x: f64| m + (x - x_lo) / (x_hi - x_lo).max(1e-300) * (w - 2.0 * m);
    let ys = |y: f64| h - m - (y - y_lo) / (y_hi - y_lo).max(1e-300) * (h - 2.0 * m);
    let mut pts = String::new();
    for (x, y) in points {
        pts.push_str(&format!("{:.2},{:.2} ", xs(*x), ys(*y)));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\
<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\
<text x=\"{m}\" y=\"20\" font-family=\"monospace\" font-size=\"13\">{title} [{} .. {}]</text>\
<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\
</svg>\n",
        fmt(y_lo),
        fmt(y_hi),
        pts.trim_end()
    )
}

fn params() -> WordParams {
    WordParams::Pow2
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let cfg = load_config(&cli)?;
    fs::create_dir_all(&cfg.out).map_err(|e| format!("creating {}: {e}", cfg.out.display()))?;
    let p = params();
    match &cli.command {
        Command::Words { sub } => run_words(sub, &cfg, &p)?,
        Command::Cocycle { sub } => run_cocycle(sub, &cfg, &p)?,
        Command::Cone { sub } => run_cone(sub, &cfg, &p)?,
        Command::Perturb { sub } => return run_perturb(sub, &cfg, &p),
        Command::VerifyAll => return run_verify_all(&cfg),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_words(sub: &WordsCmd, cfg: &RunConfig, p: &WordParams) -> Result<(), String> {
    match sub {
        WordsCmd::Build { k } => {
            let len = length_of(*k, p);
            let theta = theta_of_elementary(*k, p);
            println!("k={k} length={len} theta={theta}");
            let mut rows = vec![format!("{k},{len},{theta}")];
            if let Ok(w) = build_elementary(*k, p, cfg.word_cap) {
                println!("{w}");
                atomic_write(
                    &cfg.out.join(format!("word_k{k}.txt")),
                    format!("{w}\n").as_bytes(),
                )?;
            } else {
                println!("(not materialized: exceeds cap {})", cfg.word_cap);
                rows.push(format!("# not materialized at cap {}", cfg.word_cap));
            }
            write_csv(
                &cfg.out.join(format!("word_stats_k{k}.csv")),
                "k,length,theta",
                &rows,
            )
        }
        WordsCmd::Freq { v } => {
            let word: Word = v.parse().map_err(|e| format!("bad word {v:?}: {e}"))?;
            let enc = phi_frequency(&word, p, cfg.k, cfg.word_cap).map_err(|e| e.to_string())?;
            println!(
                "freq({v}) at level {}: [{}, {}] midpoint {}",
                cfg.k,
                fmt(enc.lo),
                fmt(enc.hi),
                fmt(enc.midpoint)
            );
            write_csv(
                &cfg.out.join(format!("freq_{v}.csv")),
                "word,level,lower,upper,midpoint",
                &[format!(
                    "{v},{},{},{},{}",
                    cfg.k,
                    fmt(enc.lo),
                    fmt(enc.hi),
                    fmt(enc.midpoint)
                )],
            )
        }
        WordsCmd::C => {
            let theta = theta_of_elementary(cfg.k, p);
            let len = length_of(cfg.k, p);
            let est = c_estimate(p, cfg.k);
            println!("ratio {theta}/{len}");
            println!("value {}", fmt(est.upper));
            println!("bracket [{}, {}]", fmt(est.lower), fmt(est.upper));
            write_csv(
                &cfg.out.join("c_estimate.csv"),
                "level,theta,length,value,lower,upper",
                &[format!(
                    "{},{theta},{len},{},{},{}",
                    cfg.k,
                    fmt(est.upper),
                    fmt(est.lower),
                    fmt(est.upper)
                )],
            )
        }
        WordsCmd::Census { k, len } => {
            let word = build_elementary(*k, p, cfg.word_cap).map_err(|e| e.to_string())?;
            let mut rows = Vec::new();
            for l in 1..=*len {
                let count = subword_census(&word, l);
                println!("length {l}: {count} distinct subwords");
                rows.push(format!("{l},{count}"));
            }
            write_csv(
                &cfg.out.join(format!("census_k{k}.csv")),
                "length,distinct",
                &rows,
            )
        }
    }
}

fn run_cocycle(sub: &CocycleCmd, cfg: &RunConfig, p: &WordParams) -> Result<(), String> {
    match sub {
        CocycleCmd::Lyap { pos, n } => {
            let e = build_elementary(cfg.k, p, cfg.word_cap).map_err(|e| e.to_string())?;
            let start = *pos as usize;
            if start + n > e.len() {
                return Err(format!("window [{}..{}] exceeds |e_{}|", start, start + n, cfg.k));
            }
            let prefix = theta_prefix_sums(e.letters());
            let mut rows = Vec::new();
            let mut trace = Vec::new();
            let mut n_step = 2usize;
            while n_step <= *n {
                let v = cfg.s * theta_block_abs(&prefix, start, n_step) as f64 / n_step as f64;
                rows.push(format!("{n_step},{}", fmt(v)));
                trace.push((n_step as f64, v));
                n_step = (n_step * 5 / 4).max(n_step + 2) & !1;
            }
            let float = walters_product_over_slice(e.letters(), start, *n, cfg.s).log_norm()
                / *n as f64;
            println!("finite-time exponent at n={n}: {}", fmt(float));
            write_csv(
                &cfg.out.join("lyap_trace.csv"),
                "n,exponent",
                &rows,
            )?;
            atomic_write(
                &cfg.out.join("lyap_trace.svg"),
                svg_line_plot(&trace, "finite-time exponent").as_bytes(),
            )
        }
        CocycleCmd::Scan { junction, svg } => {
            let (pt, lk) = junction_point(*junction, p, cfg.word_cap).map_err(|e| e.to_string())?;
            let total = lk as i64
                + length_of(junction + 1, p)
                    .to_i64()
                    .ok_or("junction word too large")?;
            let letters: Vec<_> = (0..total)
                .map(|i| pt.coord(i).unwrap())
                .collect();
            let scan = exponent_scan_oracle(&letters, 0, (total - lk as i64) as usize, cfg.s);
            let at_zero = scan.iter().find(|(n, _)| *n == 2 * lk).map(|x| x.1);
            let max = scan.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
            println!(
                "junction level {junction}: exponent at n=2|e_{junction}|={} is {}; max {}",
                2 * lk,
                fmt(at_zero.unwrap_or(f64::NAN)),
                fmt(max)
            );
            let rows: Vec<String> = scan
                .iter()
                .map(|(n, v)| format!("{n},{}", fmt(*v)))
                .collect();
            write_csv(&cfg.out.join("junction_scan.csv"), "n,exponent", &rows)?;
            if *svg {
                let pts: Vec<(f64, f64)> = scan
                    .iter()
                    .step_by((scan.len() / 2000).max(1))
                    .map(|(n, v)| (*n as f64, *v))
                    .collect();
                atomic_write(
                    &cfg.out.join("junction_scan.svg"),
                    svg_line_plot(&pts, "junction exponent scan").as_bytes(),
                )?;
            }
            Ok(())
        }
        CocycleCmd::Sup { n } => {
            let n = n.unwrap_or_else(|| {
                length_of(cfg.k.saturating_sub(1).max(1), &params())
                    .to_usize()
                    .unwrap_or(1000)
            });
            let (sup, mean) = walters_sup_mean(cfg.k, p, n, cfg.stride, cfg.s, cfg.word_cap)
                .map_err(|e| e.to_string())?;
            println!("n={n}: sup={} mean={}", fmt(sup), fmt(mean));
            write_csv(
                &cfg.out.join("sup_mean.csv"),
                "n,stride,sup,mean",
                &[format!("{n},{},{},{}", cfg.stride, fmt(sup), fmt(mean))],
            )
        }
    }
}

fn run_cone(sub: &ConeCmd, cfg: &RunConfig, p: &WordParams) -> Result<(), String> {
    match sub {
        ConeCmd::Bundle { radius, depth } => {
            let sched = build_schedule(p, cfg.levels, cfg.k, cfg.stride, cfg.s, cfg.word_cap)
                .map_err(|e| e.to_string())?;
            let phi = ModulusPhi::from_schedule(&sched).map_err(|e| e.to_string())?;
            let b = walters_b(cfg.s);
            let p_map = make_p(&b, &phi, cfg.k, 64, cfg.word_cap);
            let half = length_of(cfg.k, p) / 2u32;
            let zero = find_zero_near(cfg.k, p, &half).map_err(|e| e.to_string())?;
            let x = flip_point_at_radius(cfg.k, p, &zero, *radius).map_err(|e| e.to_string())?;
            let trace = backward_diameter_trace(&p_map, &x, *depth).map_err(|e| e.to_string())?;
            let rows: Vec<String> = trace
                .iter()
                .map(|(n, d)| format!("{n},{}", fmt(*d)))
                .collect();
            let last = trace.last().map(|x| x.1).unwrap_or(f64::NAN);
            println!("achieved cone diameter after {depth} backward steps: {}", fmt(last));
            write_csv(&cfg.out.join("bundle_trace.csv"), "depth,diameter", &rows)
        }
        ConeCmd::Check => {
            let v = verify::criterion_5(cfg.seed);
            println!("{}", v.line());
            atomic_write(
                &cfg.out.join("cone_check.json"),
                serde_json::to_string_pretty(&v).unwrap().as_bytes(),
            )
        }
    }
}

fn run_perturb(sub: &PerturbCmd, cfg: &RunConfig, p: &WordParams) -> Result<ExitCode, String> {
    match sub {
        PerturbCmd::Schedules => {
            let sched = build_schedule(p, cfg.levels, cfg.k, cfg.stride, cfg.s, cfg.word_cap)
                .map_err(|e| e.to_string())?;
            let checks = check_schedule(&sched);
            println!("M = {:?}", sched.m);
            println!(
                "N = [{}]",
                sched
                    .n
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            let all = checks.iter().all(|(_, ok)| *ok);
            for (name, ok) in &checks {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            atomic_write(
                &cfg.out.join("schedules.json"),
                serde_json::to_string_pretty(&sched).unwrap().as_bytes(),
            )?;
            let rows: Vec<String> = checks
                .iter()
                .map(|(name, ok)| format!("\"{name}\",{ok}"))
                .collect();
            write_csv(&cfg.out.join("schedule_checks.csv"), "invariant,pass", &rows)?;
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        PerturbCmd::Sweep { shell, samples, svg } => {
            let shell = shell.unwrap_or(cfg.shell);
            let samples = samples.unwrap_or(cfg.samples);
            let sched = build_schedule(p, cfg.levels, cfg.k, cfg.stride, cfg.s, cfg.word_cap)
                .map_err(|e| e.to_string())?;
            let phi = ModulusPhi::from_schedule(&sched).map_err(|e| e.to_string())?;
            let b = walters_b(cfg.s);
            let p_map = make_p(&b, &phi, cfg.k, 64, cfg.word_cap);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let report = key_estimate_sweep(&sched, &p_map, p, cfg.k, shell, samples, &mut rng)
                .map_err(|e| e.to_string())?;
            println!(
                "shell {shell}: max deviation {} vs eps {} -> {}",
                fmt(report.max_deviation),
                fmt(report.eps),
                if report.pass { "PASS" } else { "FAIL" }
            );
            let rows: Vec<String> = report
                .samples
                .iter()
                .map(|s| {
                    format!(
                        "{shell},{},{},{},{},{},{}",
                        s.radius,
                        s.n,
                        fmt(s.deviation),
                        fmt(s.sup_deviation),
                        fmt(report.eps),
                        s.deviation <= report.eps
                    )
                })
                .collect();
            write_csv(
                &cfg.out.join(format!("sweep_shell{shell}.csv")),
                "shell,radius,n,deviation,sup_deviation,bound,pass",
                &rows,
            )?;
            if *svg {
                let pts: Vec<(f64, f64)> = report
                    .samples
                    .iter()
                    .map(|s| (s.radius as f64, s.deviation))
                    .collect();
                atomic_write(
                    &cfg.out.join(format!("sweep_shell{shell}.svg")),
                    svg_line_plot(&pts, "sweep deviations by radius").as_bytes(),
                )?;
            }
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        PerturbCmd::Verify => {
            let verdicts = vec![
                verify::criterion_7(cfg.seed),
                verify::criterion_8(cfg.seed.wrapping_add(1)),
                verify::criterion_9a(),
                verify::criterion_9b(cfg.seed.wrapping_add(2)),
                verify::criterion_9c(cfg.seed.wrapping_add(3)),
            ];
            let mut all = true;
            for v in &verdicts {
                println!("{}", v.line());
                all &= v.pass;
            }
            atomic_write(
                &cfg.out.join("perturb_verify.json"),
                serde_json::to_string_pretty(&verdicts).unwrap().as_bytes(),
            )?;
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn run_verify_all(cfg: &RunConfig) -> Result<ExitCode, String> {
    let verdicts = verify::run_all(cfg.seed);
    let mut all = true;
    for v in &verdicts {
        println!("{}", v.line());
        all &= v.pass;
    }
    atomic_write(
        &cfg.out.join("verify_all.json"),
        serde_json::to_string_pretty(&verdicts).unwrap().as_bytes(),
    )?;
    println!(
        "{}: {} of {} criteria passed",
        if all { "PASS" } else { "FAIL" },
        verdicts.iter().filter(|v| v.pass).count(),
        verdicts.len()
    );
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
