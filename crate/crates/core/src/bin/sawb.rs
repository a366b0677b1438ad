use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use sawb_core::almost_prime::{self, SaturationQuery};
use sawb_core::factor::FactorBudget;
use sawb_core::finite_models::{self, LocalDensityTable, ResidueBudget};
use sawb_core::lattice_enum::{self, BallQuery, Congruence};
use sawb_core::nt;
use sawb_core::sieve_engine::{self, Omega, PrimeSet, SieveParams, SieveProblem};
use sawb_core::solver::{self, Certificate, SolveConfig};
use sawb_core::torus_avoidance::{self, AvoidanceState, QuotientFunction};
use sawb_core::{GroupSpec, RegularFunction, ResidueElement};

#[derive(Parser)]
#[command(name = "sawb", version, about = "Affine sieve and strong approximation workbench")]
struct Cli {
    /// JSON config (group, subset, window, budgets).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primes up to this bound are rechecked for avoidance.
    #[arg(long, global = true)]
    verify_bound: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GroupArgs {
    /// JSON file with a group spec, either bare or under "group".
    #[arg(long)]
    group_config: Option<PathBuf>,
}

#[derive(Args)]
struct FunctionArgs {
    /// `trace`, `flagship`, `c1`..`c4`, or a JSON file with {name, terms}.
    #[arg(long, default_value = "flagship")]
    f: String,
}

#[derive(Subcommand)]
enum Command {
    /// List group elements of height < T as CSV.
    Enumerate {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long = "T")]
        t: u64,
        /// Restrict to g = target mod m.
        #[arg(long = "mod")]
        modulus: Option<u64>,
        /// Four comma-separated residues; the identity when absent.
        #[arg(long)]
        target: Option<String>,
    },
    /// Fit count(T) ~ T^a (log T)^b.
    Growth {
        #[command(flatten)]
        group: GroupArgs,
        /// Comma-separated height bounds.
        #[arg(long = "T", default_value = "32,64,128,256,512")]
        t: String,
    },
    /// Table of rho_f(d) as CSV.
    LocalDensities {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        f: FunctionArgs,
        #[arg(long, default_value_t = 60)]
        d_max: u64,
        #[arg(long, default_value_t = 48)]
        gcd_height: u64,
    },
    /// #V_f(F_p) / p^2 per prime as CSV.
    Langweil {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        f: FunctionArgs,
        #[arg(long, default_value_t = 100)]
        p_max: u64,
    },
    /// Sift a finite sequence and report the sieve conditions.
    Sieve {
        /// CSV with a header and one integer per row.
        #[arg(long)]
        input: PathBuf,
        /// CSV with header p,num,den; omega = 1 when absent.
        #[arg(long)]
        omega: Option<PathBuf>,
        #[arg(long)]
        z: f64,
    },
    /// Almost-prime values of f on Gamma_alpha below height T.
    Saturate {
        #[command(flatten)]
        group: GroupArgs,
        #[command(flatten)]
        f: FunctionArgs,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "T")]
        t: u64,
        #[arg(long = "M", default_value_t = 1)]
        m: u64,
        #[arg(long, default_value_t = 3)]
        r: u64,
        /// Comma-separated excluded primes.
        #[arg(long, default_value = "")]
        excluded: String,
        /// Maximum number of hits written.
        #[arg(long, default_value_t = 1000)]
        limit: usize,
    },
    /// Choose the orbit element avoiding D from an AvoidanceState dump.
    Avoid {
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Run the full pipeline and write a certificate.
    Solve,
    /// Recheck a certificate.
    Verify {
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
}

type CliResult<T> = Result<T, String>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, v: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| e.to_string())?;
    s.push('\n');
    emit(out, &s)
}

fn emit_csv<R: Serialize>(out: &Option<PathBuf>, header: Option<&[&str]>, rows: impl IntoIterator<Item = R>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header.is_none()).from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).map_err(|e| e.to_string())?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    emit(out, &String::from_utf8(bytes).map_err(|e| e.to_string())?)
}

fn load_group(args: &GroupArgs, config: &Option<PathBuf>) -> CliResult<GroupSpec> {
    let path = args
        .group_config
        .as_ref()
        .or(config.as_ref())
        .ok_or("a group is needed: pass --group-config or --config")?;
    let v: Value = serde_json::from_str(&read(path)?).map_err(|e| e.to_string())?;
    let g = v.get("group").cloned().unwrap_or(v);
    serde_json::from_value(g).map_err(|e| format!("group spec: {e}"))
}

fn load_function(spec: &GroupSpec, name: &str) -> CliResult<RegularFunction> {
    match name {
        "trace" => Ok(RegularFunction::sl2_trace()),
        "c1" | "c2" | "c3" | "c4" => Ok(RegularFunction::coordinate(name[1..].parse::<usize>().unwrap() - 1)),
        "flagship" => {
            if !spec.model.is_quaternion() {
                return Err("the flagship function needs a quaternion model".into());
            }
            QuotientFunction::ij_coefficient()
                .pullback(spec.model, &spec.identity())
                .map_err(|e| e.to_string())
        }
        path => serde_json::from_str(&read(Path::new(path))?).map_err(|e| format!("function: {e}")),
    }
}

fn parse_list(s: &str) -> CliResult<Vec<u64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn load_config(cli: &Cli) -> CliResult<SolveConfig> {
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let mut cfg = SolveConfig::from_json(&read(path)?).map_err(|e| e.to_string())?;
    if let Some(b) = cli.verify_bound {
        cfg.verify_bound = b;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<bool> {
    let out = &cli.out;
    match &cli.command {
        Command::Enumerate { group, t, modulus, target } => {
            let spec = load_group(group, &cli.config)?;
            let mut q = BallQuery::gamma(spec, *t);
            if let Some(m) = modulus {
                let coords = match target {
                    Some(s) => {
                        let v = parse_list(s)?;
                        let c: [u64; 4] = v.try_into().map_err(|_| "--target needs four residues")?;
                        c.map(|x| x % m)
                    }
                    None => ResidueElement::identity(spec.model, *m).coords,
                };
                let target = ResidueElement::new(spec.model, *m, coords.map(|c| c as i64)).map_err(|e| e.to_string())?;
                if spec.level > 1 {
                    let lvl = ResidueElement::identity(spec.model, spec.level);
                    let joint = lattice_enum::combine_targets(spec.model, &[lvl, target]).map_err(|e| e.to_string())?;
                    q.congruence = joint;
                } else {
                    q = q.with_congruence(Congruence::new(target));
                }
            }
            let pts = lattice_enum::enumerate_ball_small(&q).map_err(|e| e.to_string())?;
            emit_csv(out, Some(&["c1", "c2", "c3", "c4"]), pts)?;
        }
        Command::Growth { group, t } => {
            let spec = load_group(group, &cli.config)?;
            let report = lattice_enum::fit_growth(spec, &parse_list(t)?).map_err(|e| e.to_string())?;
            emit_json(out, &report)?;
        }
        Command::LocalDensities { group, f, d_max, gcd_height } => {
            let spec = load_group(group, &cli.config)?;
            let f = load_function(&spec, &f.f)?;
            let budget = ResidueBudget::default();
            let gcd = finite_models::certify_gcd(&spec, &f, *gcd_height, *d_max, &budget).map_err(|e| e.to_string())?;
            if !gcd.certified {
                return Err(format!("gcd N = {} is not certified", gcd.n));
            }
            let mut table = LocalDensityTable::new(spec, f, gcd);
            let rows = (1..=*d_max).map(|d| table.row(d)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
            emit_csv(out, None, rows)?;
        }
        Command::Langweil { group, f, p_max } => {
            let spec = load_group(group, &cli.config)?;
            let f = load_function(&spec, &f.f)?;
            let primes = nt::primes_up_to(*p_max);
            let report = finite_models::langweil_report(spec.model, &f, &primes, &ResidueBudget::default())
                .map_err(|e| e.to_string())?;
            let rows = report.rows.iter().map(|r| (r.p, r.count_v, r.count_g, r.observed_c));
            emit_csv(out, Some(&["p", "count_V", "count_G", "observed_C"]), rows)?;
        }
        Command::Sieve { input, omega, z } => {
            let mut rdr = csv::Reader::from_path(input).map_err(|e| e.to_string())?;
            let a = rdr
                .records()
                .map(|r| {
                    let r = r.map_err(|e| e.to_string())?;
                    r.get(0).unwrap_or("").trim().parse::<u64>().map_err(|e| e.to_string())
                })
                .collect::<CliResult<Vec<u64>>>()?;
            let omega = match omega {
                None => Omega::constant(1),
                Some(p) => {
                    let mut rdr = csv::Reader::from_path(p).map_err(|e| e.to_string())?;
                    let mut t = BTreeMap::new();
                    for r in rdr.deserialize::<(u64, i64, i64)>() {
                        let (p, num, den) = r.map_err(|e| e.to_string())?;
                        if den == 0 {
                            return Err(format!("omega({p}) has zero denominator"));
                        }
                        t.insert(p, BigRational::new(BigInt::from(num), BigInt::from(den)));
                    }
                    Omega::Table(t)
                }
            };
            let problem = SieveProblem::new(a, PrimeSet::All, omega, *z).map_err(|e| e.to_string())?;
            let lb = sieve_engine::lower_bound_report(&problem);
            let conditions = sieve_engine::check_conditions(&problem, &SieveParams::fitted(&problem));
            emit_json(out, &json!({"S": lb.sifted, "product": lb.main_product, "ratio": lb.ratio, "conditions": conditions}))?;
        }
        Command::Saturate { group, f, beta, t, m, r, excluded, limit } => {
            let spec = load_group(group, &cli.config)?;
            let f = load_function(&spec, &f.f)?;
            let gcd = finite_models::certify_gcd(&spec, &f, (*t).min(64), 30, &ResidueBudget::default())
                .map_err(|e| e.to_string())?;
            let mut excl: BTreeSet<u64> = parse_list(excluded)?.into_iter().collect();
            excl.extend(spec.model.bad_primes());
            let q = SaturationQuery {
                spec,
                f,
                excluded: excl,
                beta: *beta,
                height: *t,
                m_bound: *m,
                n_gcd: gcd.n,
                factor_budget: FactorBudget::default(),
            };
            let hits = almost_prime::almost_prime_hits(&q, *r, *limit).map_err(|e| e.to_string())?;
            emit_json(out, &hits)?;
        }
        Command::Avoid { state } => {
            let path = state.as_ref().or(cli.config.as_ref()).ok_or("--state is required")?;
            let st: AvoidanceState = serde_json::from_str(&read(path)?).map_err(|e| e.to_string())?;
            let r = torus_avoidance::select_avoiding(&st).map_err(|e| e.to_string())?;
            emit_json(out, &json!({"l": r.l, "P_dprime": r.p_dprime, "tables": r.transcript}))?;
        }
        Command::Solve => {
            let cfg = load_config(cli)?;
            let cert = solver::solve_any(&cfg).map_err(|e| e.to_string())?;
            emit(out, &(cert.to_json() + "\n"))?;
        }
        Command::Verify { certificate } => {
            let path = certificate.as_ref().or(cli.config.as_ref()).ok_or("--certificate is required")?;
            let cert = Certificate::from_json(&read(path)?).map_err(|e| e.to_string())?;
            let report = solver::verify_certificate(&cert);
            emit_json(out, &report)?;
            return Ok(report.valid);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("sawb: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("sawb: {e}");
            ExitCode::from(2)
        }
    }
}
