//! Batch front-end for the `modgeo` library: reproducible experiments over
//! form classes, geodesic crossings, and the numerical identity checks,
//! with CSV/JSON artifacts.
//!
//! Every command is deterministic given its configuration and `--seed`;
//! stochastic reports embed the seed.  Artifacts carry a schema-version
//! marker (a `# schema_version=` comment line in CSV, a `schema_version`
//! field in JSON), and all floating-point output is printed with
//! `--precision` significant digits (default 12) so reruns are
//! byte-identical.
//!
//! Exit codes follow the CI contract: 0 = success (for `verify`: the check
//! passed its tolerance), 1 = a `verify` check missed its tolerance,
//! 2 = usage or validation error.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modgeo::bqf::{class_representatives, ClassSet, Discriminant};
use modgeo::geodesics::{duke_test, GeodesicFamily};
use modgeo::hyperbolic::{psi_density, Point, UnitTangent};
use modgeo::intersect::{
    equidistribution_report, family_vs_family, segment_vs_family, EquidistributionReport,
    IntersectionEvent, Segment,
};
use modgeo::kernel::{
    check_count_identity, check_volume_identity, check_weighted_identity, KernelParams,
};
use modgeo::lfunc::{cnf_report, eisenstein_period, period_product, CnfReport};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "modgeo", version, about = "Closed geodesics on the modular surface: class data, crossing statistics, and identity checks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Seed for the stochastic commands; embedded in their reports.
    #[arg(long, global = true, default_value_t = 17)]
    seed: u64,
    /// Data-parallel width cap; 0 means all available cores.  Results do
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Significant digits for every floating-point field.
    #[arg(long, global = true, default_value_t = 12)]
    precision: usize,
    /// Directory receiving the artifact files (created if missing).
    /// Stdout always gets one artifact regardless.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Which artifact goes to stdout when a command produces both.
    /// `verify` always writes JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Form class data: one row per class representative.
    Classes(ClassesArgs),
    /// Crossings of one geodesic segment with the family C_d.
    Intersect(IntersectArgs),
    /// Crossings of the family C_d1 with the family C_d2.
    Pair(PairArgs),
    /// Normalized periods of an observable along C_d, against its
    /// equidistribution target.
    Duke(DukeArgs),
    /// Numerical identity checks with a pass/fail exit code.
    Verify(VerifyArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ClassesArgs {
    /// Single discriminant (must be valid: positive, 0 or 1 mod 4,
    /// not a perfect square).
    #[arg(long)]
    d: Option<i64>,
    /// Half-open discriminant range `lo..hi`; invalid values inside the
    /// range are skipped.
    #[arg(long, value_name = "LO..HI")]
    range: Option<String>,
}

#[derive(Args)]
struct IntersectArgs {
    /// Discriminant of the family.
    #[arg(long)]
    d: i64,
    /// Segment start as a unit tangent `x,y,theta` (theta in radians);
    /// needs --len.
    #[arg(long, value_name = "X,Y,THETA", conflicts_with_all = ["from", "to"])]
    tangent: Option<String>,
    /// Segment arc length, with --tangent.
    #[arg(long, requires = "tangent")]
    len: Option<f64>,
    /// Segment start point `x,y`, with --to.
    #[arg(long, value_name = "X,Y", requires = "to")]
    from: Option<String>,
    /// Segment end point `x,y`, with --from.
    #[arg(long, value_name = "X,Y", requires = "from")]
    to: Option<String>,
    /// Open angle window `lo,hi` in radians, inside [0, pi].
    #[arg(long, value_name = "LO,HI", default_value = "0,3.141592653589793")]
    window: String,
    /// Histogram bin count for the angle statistics (at least 4).
    #[arg(long, default_value_t = 12)]
    bins: usize,
}

#[derive(Args)]
struct PairArgs {
    /// Discriminant of the walked family.
    #[arg(long)]
    d1: i64,
    /// Discriminant of the crossing family.
    #[arg(long)]
    d2: i64,
    /// Permit d1 = d2 (crossings between distinct classes only).
    #[arg(long)]
    allow_self: bool,
    /// Open angle window `lo,hi` in radians, inside [0, pi].
    #[arg(long, value_name = "LO,HI", default_value = "0,3.141592653589793")]
    window: String,
    /// Histogram bin count for the angle statistics (at least 4).
    #[arg(long, default_value_t = 12)]
    bins: usize,
}

#[derive(Args)]
struct DukeArgs {
    /// Comma-separated discriminants, visited in order.
    #[arg(long, value_name = "D,D,...", value_delimiter = ',', required = true)]
    d_list: Vec<i64>,
    /// Observable integrated along the closed geodesics.
    #[arg(long, value_enum, default_value_t = Observable::Bump)]
    observable: Observable,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Observable {
    /// Constant 1: the deviation is identically zero, a calibration row.
    One,
    /// Smooth bump at (0, 1.5) of radius 0.4, inside the fundamental
    /// domain: small discriminants miss it entirely.
    Bump,
    /// sin^2(theta) on the fiber: target exactly 1/2.
    Sin2,
}

impl Observable {
    fn name(self) -> &'static str {
        match self {
            Observable::One => "one",
            Observable::Bump => "bump",
            Observable::Sin2 => "sin2",
        }
    }

    fn eval(self, u: UnitTangent) -> f64 {
        match self {
            Observable::One => 1.0,
            Observable::Bump => {
                let r2 = (u.x / 0.4).powi(2) + ((u.y - 1.5) / 0.4).powi(2);
                if r2 < 1.0 {
                    (-1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
            Observable::Sin2 => u.theta.sin().powi(2),
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(subcommand)]
    which: VerifyCmd,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Chart density against the closed form |sin phi| / 2, on random
    /// (t1, phi, t2) triples.
    Jacobian {
        /// Number of random triples.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Worst absolute error allowed.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Monte Carlo kernel volume against (cos th1 - cos th2) delta^2.
    KernelVolume {
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        theta1: f64,
        #[arg(long, default_value_t = PI)]
        theta2: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Allowed deviation in standard errors.
        #[arg(long, default_value_t = 3.0)]
        tol: f64,
    },
    /// Exact quadrature/count agreement for a discriminant pair.
    CountIdentity {
        #[arg(long)]
        d1: i64,
        #[arg(long)]
        d2: i64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        theta1: f64,
        #[arg(long, default_value_t = PI)]
        theta2: f64,
        /// Lattice cells per delta.
        #[arg(long, default_value_t = 8)]
        cells: usize,
    },
    /// Weighted segment identity: (1/(2 delta^2)) double integral of
    /// K_delta against the min-weight crossing sum.
    WeightedIdentity {
        #[arg(long, default_value_t = 5)]
        d: i64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Segment start as a unit tangent `x,y,theta`.
        #[arg(long, value_name = "X,Y,THETA", default_value = "0,0.95,1")]
        tangent: String,
        /// Segment arc length (must exceed delta).
        #[arg(long, default_value_t = 0.7)]
        len: f64,
        /// Relative error allowed.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Class number formula h(d) log eps_d = sqrt(d) L(1, d) over all
    /// valid discriminants up to --dmax.
    Cnf {
        #[arg(long, default_value_t = 10_000)]
        dmax: i64,
        /// Worst relative error allowed.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Eisenstein period of C_d against its L-function product.
    Eisenstein {
        #[arg(long, default_value_t = 5)]
        d: i64,
        /// Eisenstein parameter (needs s > 1).
        #[arg(long, default_value_t = 2.0)]
        s: f64,
        /// Quadrature nodes per class.
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        /// Relative error allowed.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Normalized-period deviations of an observable at large d.
    Duke {
        /// Comma-separated discriminants.
        #[arg(long, value_name = "D,D,...", value_delimiter = ',',
              default_values_t = vec![1093_i64, 9973, 99989])]
        d_list: Vec<i64>,
        #[arg(long, value_enum, default_value_t = Observable::Bump)]
        observable: Observable,
        /// Worst |deviation| allowed.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// One finished command: the artifact for stdout, the named artifact
/// files for --out-dir, and the exit code.
struct Output {
    stdout: String,
    files: Vec<(&'static str, String)>,
    code: u8,
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    ensure!(g.precision >= 1 && g.precision <= 17, "--precision must be in 1..=17");
    let out = match &cli.cmd {
        Cmd::Classes(args) => cmd_classes(args, g)?,
        Cmd::Intersect(args) => cmd_intersect(args, g)?,
        Cmd::Pair(args) => cmd_pair(args, g)?,
        Cmd::Duke(args) => cmd_duke(args, g)?,
        Cmd::Verify(args) => cmd_verify(args, g)?,
    };
    if let Some(dir) = &g.out_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating --out-dir {}", dir.display()))?;
        for (name, content) in &out.files {
            fs::write(dir.join(name), content)
                .with_context(|| format!("writing {}", dir.join(name).display()))?;
        }
    }
    print!("{}", out.stdout);
    Ok(out.code)
}

// ---------------------------------------------------------------------
// Numeric formatting
// ---------------------------------------------------------------------

/// `x` with `prec` significant digits, always in scientific form so the
/// byte width never depends on magnitude.
fn sig(x: f64, prec: usize) -> String {
    // Negative zero would round-trip but reads as noise; print plain zero.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{:.*e}", prec - 1, x)
}

// ---------------------------------------------------------------------
// Argument parsing helpers
// ---------------------------------------------------------------------

fn parse_floats(label: &str, s: &str, n: usize) -> Result<Vec<f64>> {
    let vals = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .with_context(|| format!("{label}: {t:?} is not a finite number"))
        })
        .collect::<Result<Vec<f64>>>()?;
    ensure!(
        vals.len() == n,
        "{label}: expected {n} comma-separated numbers, got {}",
        vals.len()
    );
    Ok(vals)
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let v = parse_floats("--window", s, 2)?;
    let (th1, th2) = (v[0], v[1]);
    ensure!(
        th1 >= 0.0 && th1 < th2 && th2 <= PI + 1e-12,
        "--window needs 0 <= lo < hi <= pi, got {th1},{th2}"
    );
    Ok((th1, th2.min(PI)))
}

fn parse_tangent(label: &str, s: &str) -> Result<UnitTangent> {
    let v = parse_floats(label, s, 3)?;
    ensure!(v[1] > 0.0, "{label}: base point needs y > 0, got y = {}", v[1]);
    Ok(UnitTangent::new(v[0], v[1], v[2]))
}

fn parse_point(label: &str, s: &str) -> Result<Point> {
    let v = parse_floats(label, s, 2)?;
    ensure!(v[1] > 0.0, "{label}: needs y > 0, got y = {}", v[1]);
    Ok(Point::new(v[0], v[1]))
}

fn build_segment(args: &IntersectArgs) -> Result<Segment> {
    if let Some(t) = &args.tangent {
        let u = parse_tangent("--tangent", t)?;
        let len = args.len.context("--tangent needs --len")?;
        ensure!(len.is_finite() && len > 0.0, "--len must be positive, got {len}");
        Ok(Segment::from_tangent(u, len)?)
    } else if let (Some(f), Some(t)) = (&args.from, &args.to) {
        let p1 = parse_point("--from", f)?;
        let p2 = parse_point("--to", t)?;
        Ok(Segment::from_endpoints(p1, p2)?)
    } else {
        bail!("the segment needs either --tangent with --len, or --from with --to");
    }
}

// ---------------------------------------------------------------------
// classes
// ---------------------------------------------------------------------

fn cmd_classes(args: &ClassesArgs, g: &Global) -> Result<Output> {
    let sets: Vec<ClassSet> = if let Some(d) = args.d {
        vec![class_representatives(&Discriminant::validate(d)?)]
    } else {
        let range = args.range.as_deref().expect("clap enforces one of --d/--range");
        let (lo, hi) = range
            .split_once("..")
            .with_context(|| format!("--range: expected LO..HI, got {range:?}"))?;
        let lo: i64 = lo.trim().parse().with_context(|| format!("--range: bad lower bound {lo:?}"))?;
        let hi: i64 = hi.trim().parse().with_context(|| format!("--range: bad upper bound {hi:?}"))?;
        ensure!(lo < hi, "--range: needs LO < HI, got {lo}..{hi}");
        (lo..hi)
            .filter_map(|d| Discriminant::validate(d).ok())
            .map(|disc| class_representatives(&disc))
            .collect()
    };

    let mut csv = String::new();
    let _ = writeln!(csv, "# schema_version={SCHEMA_VERSION}");
    let _ = writeln!(csv, "d,index,a,b,c,ambiguous,t,u,log_eps");
    for set in &sets {
        for (i, q) in set.reps.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                set.disc.value(),
                i,
                q.a,
                q.b,
                q.c,
                set.ambiguous[i] as u8,
                set.pell_t,
                set.pell_u,
                sig(set.log_eps, g.precision)
            );
        }
    }

    let mut rows = Vec::new();
    for set in &sets {
        for (i, q) in set.reps.iter().enumerate() {
            rows.push(format!(
                "{{\"d\":{},\"index\":{},\"a\":{},\"b\":{},\"c\":{},\"ambiguous\":{},\"t\":\"{}\",\"u\":\"{}\",\"log_eps\":{}}}",
                set.disc.value(),
                i,
                q.a,
                q.b,
                q.c,
                set.ambiguous[i],
                set.pell_t,
                set.pell_u,
                sig(set.log_eps, g.precision)
            ));
        }
    }
    let json = format!(
        "{{\"schema_version\":{SCHEMA_VERSION},\"command\":\"classes\",\"rows\":[{}]}}\n",
        rows.join(",")
    );

    let stdout = match g.format {
        Format::Csv => csv.clone(),
        Format::Json => json.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("classes.csv", csv), ("classes.json", json)],
        code: 0,
    })
}

// ---------------------------------------------------------------------
// intersect / pair
// ---------------------------------------------------------------------

fn events_csv(dcols_head: &str, dcols: &str, events: &[IntersectionEvent], prec: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema_version={SCHEMA_VERSION}");
    let _ = writeln!(out, "{dcols_head},a,b,c,x,y,angle,param");
    for e in events {
        let _ = writeln!(
            out,
            "{dcols},{},{},{},{},{},{},{}",
            e.form.a,
            e.form.b,
            e.form.c,
            sig(e.point.x, prec),
            sig(e.point.y, prec),
            sig(e.angle, prec),
            sig(e.param_on_beta, prec)
        );
    }
    out
}

/// The `EquidistributionReport` body shared by the intersect and pair
/// reports, rendered as JSON fields without the enclosing braces.
fn stats_json(stats: &EquidistributionReport, prec: usize) -> String {
    let bins: Vec<String> = stats
        .histogram
        .iter()
        .map(|b| {
            format!(
                "{{\"lo\":{},\"hi\":{},\"observed\":{},\"expected\":{}}}",
                sig(b.lo, prec),
                sig(b.hi, prec),
                b.observed,
                sig(b.expected, prec)
            )
        })
        .collect();
    format!(
        "\"count\":{},\"normalized\":{},\"target\":{},\"ks_angle\":{},\"ks_param\":{},\"degenerate\":{},\"histogram\":[{}]",
        stats.count,
        sig(stats.normalized, prec),
        sig(stats.target, prec),
        sig(stats.ks_angle, prec),
        sig(stats.ks_param, prec),
        stats.degenerate,
        bins.join(",")
    )
}

fn cmd_intersect(args: &IntersectArgs, g: &Global) -> Result<Output> {
    let disc = Discriminant::validate(args.d)?;
    let (th1, th2) = parse_window(&args.window)?;
    ensure!(args.bins >= 4, "--bins must be at least 4, got {}", args.bins);
    let seg = build_segment(args)?;
    let set = class_representatives(&disc);

    let report = segment_vs_family(&seg, &disc, (th1, th2));
    let normalization = seg.length() * set.h() as f64 * set.log_eps;
    let stats =
        equidistribution_report(&report.events, (th1, th2), normalization, seg.length(), args.bins);

    let p = g.precision;
    let csv = events_csv("d", &args.d.to_string(), &report.events, p);
    let json = format!(
        "{{\"schema_version\":{SCHEMA_VERSION},\"command\":\"intersect\",\"d\":{},\"theta1\":{},\"theta2\":{},\"beta_length\":{},\"h\":{},\"log_eps\":{},\"at_endpoint\":{},{}}}\n",
        args.d,
        sig(th1, p),
        sig(th2, p),
        sig(seg.length(), p),
        set.h(),
        sig(set.log_eps, p),
        report.at_endpoint,
        stats_json(&stats, p)
    );

    let stdout = match g.format {
        Format::Csv => csv.clone(),
        Format::Json => json.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("intersect_events.csv", csv), ("intersect_report.json", json)],
        code: 0,
    })
}

fn cmd_pair(args: &PairArgs, g: &Global) -> Result<Output> {
    let disc1 = Discriminant::validate(args.d1)?;
    let disc2 = Discriminant::validate(args.d2)?;
    let (th1, th2) = parse_window(&args.window)?;
    ensure!(args.bins >= 4, "--bins must be at least 4, got {}", args.bins);
    if args.d1 == args.d2 && !args.allow_self {
        bail!("d1 = d2 = {} compares a family with itself; pass --allow-self to intersect its distinct classes", args.d1);
    }

    let fam1 = GeodesicFamily::new(&disc1);
    let set2 = class_representatives(&disc2);
    let report = family_vs_family(&fam1, &disc2, (th1, th2));

    let l1 = fam1.class_set.h() as f64 * fam1.class_set.log_eps;
    let l2 = set2.h() as f64 * set2.log_eps;
    let (walk_span, _) = fam1.class_set.total_lengths();
    let stats =
        equidistribution_report(&report.events, (th1, th2), 2.0 * l1 * l2, walk_span, args.bins);

    let p = g.precision;
    let csv = events_csv(
        "d1,d2",
        &format!("{},{}", args.d1, args.d2),
        &report.events,
        p,
    );
    let json = format!(
        "{{\"schema_version\":{SCHEMA_VERSION},\"command\":\"pair\",\"d1\":{},\"d2\":{},\"theta1\":{},\"theta2\":{},\"h1\":{},\"h2\":{},\"walk_span\":{},{}}}\n",
        args.d1,
        args.d2,
        sig(th1, p),
        sig(th2, p),
        fam1.class_set.h(),
        set2.h(),
        sig(walk_span, p),
        stats_json(&stats, p)
    );

    let stdout = match g.format {
        Format::Csv => csv.clone(),
        Format::Json => json.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("pair_events.csv", csv), ("pair_report.json", json)],
        code: 0,
    })
}

// ---------------------------------------------------------------------
// duke
// ---------------------------------------------------------------------

fn cmd_duke(args: &DukeArgs, g: &Global) -> Result<Output> {
    let obs = args.observable;
    let rows = duke_test(|u| obs.eval(u), &args.d_list)?;

    let p = g.precision;
    let mut csv = String::new();
    let _ = writeln!(csv, "# schema_version={SCHEMA_VERSION}");
    let _ = writeln!(csv, "d,h,log_eps,period,target,deviation");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.d,
            r.h,
            sig(r.log_eps, p),
            sig(r.period, p),
            sig(r.target, p),
            sig(r.deviation, p)
        );
    }

    let json_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{{\"d\":{},\"h\":{},\"log_eps\":{},\"period\":{},\"target\":{},\"deviation\":{}}}",
                r.d,
                r.h,
                sig(r.log_eps, p),
                sig(r.period, p),
                sig(r.target, p),
                sig(r.deviation, p)
            )
        })
        .collect();
    let json = format!(
        "{{\"schema_version\":{SCHEMA_VERSION},\"command\":\"duke\",\"observable\":\"{}\",\"rows\":[{}]}}\n",
        obs.name(),
        json_rows.join(",")
    );

    let stdout = match g.format {
        Format::Csv => csv.clone(),
        Format::Json => json.clone(),
    };
    Ok(Output {
        stdout,
        files: vec![("duke.csv", csv), ("duke.json", json)],
        code: 0,
    })
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

/// One identity check, reduced to the common report schema.
struct VerifyOutcome {
    identity: &'static str,
    /// `(key, rendered JSON value)` pairs, emitted in order.
    parameters: Vec<(&'static str, String)>,
    lhs: f64,
    rhs: f64,
    stderr: Option<f64>,
    seed: Option<u64>,
    pass: bool,
}

impl VerifyOutcome {
    fn abs_err(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    fn rel_err(&self) -> f64 {
        let abs = self.abs_err();
        if abs == 0.0 {
            0.0
        } else {
            abs / self.rhs.abs()
        }
    }

    fn json(&self, prec: usize) -> String {
        let params: Vec<String> = self
            .parameters
            .iter()
            .map(|(k, v)| format!("\"{k}\":{v}"))
            .collect();
        let mut out = format!(
            "{{\"schema_version\":{SCHEMA_VERSION},\"identity\":\"{}\",\"parameters\":{{{}}},\"lhs\":{},\"rhs\":{},\"abs_err\":{},\"rel_err\":{}",
            self.identity,
            params.join(","),
            sig(self.lhs, prec),
            sig(self.rhs, prec),
            sig(self.abs_err(), prec),
            sig(self.rel_err(), prec)
        );
        if let Some(se) = self.stderr {
            let _ = write!(out, ",\"stderr\":{}", sig(se, prec));
        }
        if let Some(seed) = self.seed {
            let _ = write!(out, ",\"seed\":{seed}");
        }
        let _ = write!(out, ",\"pass\":{}}}\n", self.pass);
        out
    }
}

fn cmd_verify(args: &VerifyArgs, g: &Global) -> Result<Output> {
    let outcome = match &args.which {
        VerifyCmd::Jacobian { trials, tol } => verify_jacobian(*trials, *tol, g)?,
        VerifyCmd::KernelVolume { delta, theta1, theta2, samples, tol } => {
            verify_kernel_volume(*delta, *theta1, *theta2, *samples, *tol, g)?
        }
        VerifyCmd::CountIdentity { d1, d2, delta, theta1, theta2, cells } => {
            verify_count_identity(*d1, *d2, *delta, *theta1, *theta2, *cells, g)?
        }
        VerifyCmd::WeightedIdentity { d, delta, tangent, len, tol } => {
            verify_weighted_identity(*d, *delta, tangent, *len, *tol, g)?
        }
        VerifyCmd::Cnf { dmax, tol } => verify_cnf(*dmax, *tol)?,
        VerifyCmd::Eisenstein { d, s, nodes, tol } => verify_eisenstein(*d, *s, *nodes, *tol)?,
        VerifyCmd::Duke { d_list, observable, tol } => verify_duke(d_list, *observable, *tol)?,
    };
    let json = outcome.json(g.precision);
    let code = if outcome.pass { 0 } else { 1 };
    let file: &'static str = match &args.which {
        VerifyCmd::Jacobian { .. } => "verify_jacobian.json",
        VerifyCmd::KernelVolume { .. } => "verify_kernel_volume.json",
        VerifyCmd::CountIdentity { .. } => "verify_count_identity.json",
        VerifyCmd::WeightedIdentity { .. } => "verify_weighted_identity.json",
        VerifyCmd::Cnf { .. } => "verify_cnf.json",
        VerifyCmd::Eisenstein { .. } => "verify_eisenstein.json",
        VerifyCmd::Duke { .. } => "verify_duke.json",
    };
    Ok(Output { stdout: json.clone(), files: vec![(file, json)], code })
}

fn verify_jacobian(trials: usize, tol: f64, g: &Global) -> Result<VerifyOutcome> {
    ensure!(trials >= 1, "--trials must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut worst = (f64::NEG_INFINITY, (0.0, 0.5 * PI, 0.0));
    for _ in 0..trials {
        let t1: f64 = rng.gen_range(-2.0..2.0);
        let t2: f64 = rng.gen_range(-2.0..2.0);
        let mut phi: f64 = rng.gen_range(0.0..PI);
        while phi.sin().abs() < 1e-3 {
            phi = rng.gen_range(0.0..PI);
        }
        let err = (psi_density(t1, phi, t2) - 0.5 * phi.sin().abs()).abs();
        if err > worst.0 {
            worst = (err, (t1, phi, t2));
        }
    }
    let (t1, phi, t2) = worst.1;
    let p = g.precision;
    Ok(VerifyOutcome {
        identity: "jacobian",
        parameters: vec![
            ("trials", trials.to_string()),
            ("t1", sig(t1, p)),
            ("phi", sig(phi, p)),
            ("t2", sig(t2, p)),
            ("tol", sig(tol, p)),
        ],
        lhs: psi_density(t1, phi, t2),
        rhs: 0.5 * phi.sin().abs(),
        stderr: None,
        seed: Some(g.seed),
        pass: worst.0 < tol,
    })
}

fn verify_kernel_volume(
    delta: f64,
    theta1: f64,
    theta2: f64,
    samples: u64,
    tol: f64,
    g: &Global,
) -> Result<VerifyOutcome> {
    ensure!(samples >= 1, "--samples must be at least 1");
    let params = KernelParams::new(delta, theta1, theta2)?;
    let threads = if g.threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        g.threads
    };
    let report = check_volume_identity(&params, samples, g.seed, threads);
    let p = g.precision;
    Ok(VerifyOutcome {
        identity: "kernel-volume",
        parameters: vec![
            ("delta", sig(delta, p)),
            ("theta1", sig(theta1, p)),
            ("theta2", sig(theta2, p)),
            ("samples", samples.to_string()),
            ("threads", threads.to_string()),
            ("tol_sigmas", sig(tol, p)),
        ],
        lhs: report.estimate,
        rhs: report.target,
        stderr: Some(report.stderr),
        seed: Some(g.seed),
        pass: report.sigmas() <= tol,
    })
}

fn verify_count_identity(
    d1: i64,
    d2: i64,
    delta: f64,
    theta1: f64,
    theta2: f64,
    cells: usize,
    g: &Global,
) -> Result<VerifyOutcome> {
    let disc1 = Discriminant::validate(d1)?;
    let disc2 = Discriminant::validate(d2)?;
    let params = KernelParams::new(delta, theta1, theta2)?;
    let report = check_count_identity(&disc1, &disc2, &params, cells)?;
    let p = g.precision;
    Ok(VerifyOutcome {
        identity: "count-identity",
        parameters: vec![
            ("d1", d1.to_string()),
            ("d2", d2.to_string()),
            ("delta", sig(delta, p)),
            ("theta1", sig(theta1, p)),
            ("theta2", sig(theta2, p)),
            ("cells_per_delta", cells.to_string()),
            ("events", report.events.to_string()),
        ],
        lhs: report.quadrature,
        rhs: report.oriented_count as f64,
        stderr: None,
        seed: None,
        pass: report.exact,
    })
}

fn verify_weighted_identity(
    d: i64,
    delta: f64,
    tangent: &str,
    len: f64,
    tol: f64,
    g: &Global,
) -> Result<VerifyOutcome> {
    let disc = Discriminant::validate(d)?;
    let u = parse_tangent("--tangent", tangent)?;
    ensure!(len.is_finite() && len > 0.0, "--len must be positive, got {len}");
    let seg = Segment::from_tangent(u, len)?;
    let params = KernelParams::full(delta);
    let report = check_weighted_identity(&seg, &disc, &params)?;
    let p = g.precision;
    Ok(VerifyOutcome {
        identity: "weighted-identity",
        parameters: vec![
            ("d", d.to_string()),
            ("delta", sig(delta, p)),
            ("x", sig(u.x, p)),
            ("y", sig(u.y, p)),
            ("theta", sig(u.theta, p)),
            ("len", sig(len, p)),
            ("crossings", report.crossings.len().to_string()),
            ("tol", sig(tol, p)),
        ],
        lhs: report.lhs,
        rhs: report.rhs,
        stderr: None,
        seed: None,
        pass: report.rel_err <= tol,
    })
}

fn verify_cnf(dmax: i64, tol: f64) -> Result<VerifyOutcome> {
    ensure!(dmax >= 5, "--dmax must be at least 5, got {dmax}");
    let mut worst: Option<CnfReport> = None;
    let mut checked = 0usize;
    for d in 5..=dmax {
        let Ok(disc) = Discriminant::validate(d) else { continue };
        let report = cnf_report(&class_representatives(&disc));
        checked += 1;
        if worst.as_ref().map_or(true, |w| report.rel_err > w.rel_err) {
            worst = Some(report);
        }
    }
    let w = worst.expect("dmax >= 5 guarantees at least one valid discriminant");
    Ok(VerifyOutcome {
        identity: "cnf",
        parameters: vec![
            ("dmax", dmax.to_string()),
            ("checked", checked.to_string()),
            ("worst_d", w.disc.to_string()),
            ("h", w.h.to_string()),
            ("tol", sig(tol, 12)),
        ],
        lhs: w.geometric,
        rhs: w.analytic,
        stderr: None,
        seed: None,
        pass: w.rel_err < tol,
    })
}

fn verify_eisenstein(d: i64, s: f64, nodes: usize, tol: f64) -> Result<VerifyOutcome> {
    let disc = Discriminant::validate(d)?;
    ensure!(s > 1.0, "--s must exceed 1 (convergent range), got {s}");
    ensure!(nodes >= 2, "--nodes must be at least 2, got {nodes}");
    let family = GeodesicFamily::new(&disc);
    let lhs = eisenstein_period(&family, s, nodes);
    let rhs = period_product(disc, s);
    let rel = (lhs - rhs).abs() / rhs.abs();
    Ok(VerifyOutcome {
        identity: "eisenstein",
        parameters: vec![
            ("d", d.to_string()),
            ("s", sig(s, 12)),
            ("nodes", nodes.to_string()),
            ("tol", sig(tol, 12)),
        ],
        lhs,
        rhs,
        stderr: None,
        seed: None,
        pass: rel <= tol,
    })
}

fn verify_duke(d_list: &[i64], observable: Observable, tol: f64) -> Result<VerifyOutcome> {
    ensure!(!d_list.is_empty(), "--d-list must name at least one discriminant");
    let rows = duke_test(|u| observable.eval(u), d_list)?;
    let worst = rows
        .iter()
        .max_by(|a, b| a.deviation.abs().total_cmp(&b.deviation.abs()))
        .expect("non-empty d_list");
    let d_json = format!(
        "[{}]",
        d_list.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
    );
    Ok(VerifyOutcome {
        identity: "duke",
        parameters: vec![
            ("observable", format!("\"{}\"", observable.name())),
            ("d_list", d_json),
            ("worst_d", worst.d.to_string()),
            ("tol", sig(tol, 12)),
        ],
        lhs: worst.target + worst.deviation,
        rhs: worst.target,
        stderr: None,
        seed: None,
        pass: worst.deviation.abs() <= tol,
    })
}
