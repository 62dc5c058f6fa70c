use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use mbgf::dyson::{
    check_sum_rules, default_window, galitskii_migdal, solve_diagonal, solve_diagonal_all, solve_matrix,
    track_curves, RootSet, SelfEnergy, SolveOptions,
};
use mbgf::error::Error;
use mbgf::fci::{ExactSelfEnergy, PoleKind, DEFAULT_SECTOR_CAP};
use mbgf::model_io::{generate_model, IntegralSet, ModelSpec};
use mbgf::perturbation::{OrderN, Sigma2, ORDER_CAP};
use mbgf::resummation::{prune_poles, scgf2_cycle, ScPoleState, Tda2, DEFAULT_POLE_CAP};
use mbgf::taylor::{convergence_map, model_g, taylor_partial_sums, uniform_grid, ModelPoles};

mod output;

use output::{fmt_num, Artifact, Cell};

#[derive(Parser, Serialize, Debug)]
#[command(name = "mbgf", version, about = "Many-body Green's function analyses on small models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize, Debug)]
enum Command {
    /// Exact self-energy from full configuration interaction.
    Exact(CurveArgs),
    /// Self-energy summed through a perturbation order.
    Pt {
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long, default_value_t = 2)]
        order: usize,
    },
    /// Ladder TDA(2) self-energy after a number of cycles.
    Tda {
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long, default_value_t = 1)]
        cycles: usize,
    },
    /// Diagonal self-consistent second order, cycle by cycle.
    Scgf2 {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Last cycle to run (cycle 0 is second order).
        #[arg(long, default_value_t = 1)]
        cycles: usize,
        #[arg(long, default_value_t = DEFAULT_POLE_CAP)]
        pole_cap: usize,
        /// Drop poles with a smaller residue between cycles.
        #[arg(long)]
        min_residue: Option<f64>,
        /// Histogram bins over ω in the cycle reports.
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Four-pole model and the convergence of its Taylor series.
    Model {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Partial-sum orders to tabulate.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0usize, 1, 2, 19])]
        orders: Vec<usize>,
        /// Highest order used for classification.
        #[arg(long, default_value_t = 60)]
        max_order: usize,
    },
    /// Dyson roots with residues, sum rules and the Galitskii–Migdal energy.
    Roots {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        mode: ModeArgs,
        /// Use the exact self-energy (default when nothing else is chosen).
        #[arg(long, conflicts_with_all = ["order", "cycles"])]
        exact: bool,
        #[arg(long, conflicts_with = "cycles")]
        order: Option<usize>,
        /// TDA(2) cycles.
        #[arg(long)]
        cycles: Option<usize>,
        /// Omit roots with a smaller residue from the table.
        #[arg(long, default_value_t = 0.0)]
        min_residue: f64,
        #[arg(long, allow_hyphen_values = true)]
        omega_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        omega_max: Option<f64>,
    },
}

#[derive(Args, Serialize, Debug, Clone)]
struct SourceArgs {
    #[arg(long, conflicts_with = "hubbard")]
    fcidump: Option<PathBuf>,
    /// t,U or t,U,sites.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    hubbard: Option<Vec<f64>>,
    /// Site energies of the Hubbard model, from site 0.
    #[arg(long, value_delimiter = ',', requires = "hubbard", allow_hyphen_values = true)]
    site_energies: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_SECTOR_CAP)]
    max_sector_dim: usize,
}

#[derive(Args, Serialize, Debug, Clone)]
struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    omega_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega_max: Option<f64>,
    #[arg(long)]
    omega_step: Option<f64>,
}

#[derive(Args, Serialize, Debug, Clone)]
struct ModeArgs {
    #[arg(long, conflicts_with = "matrix")]
    diagonal: bool,
    #[arg(long)]
    matrix: bool,
    /// Restrict diagonal output to one spin-orbital.
    #[arg(long)]
    orbital: Option<usize>,
}

#[derive(Args, Serialize, Debug, Clone)]
struct OutArgs {
    /// Artifact path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Serialize, Debug, Clone)]
struct CurveArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(ValueEnum, Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// Exit status by error category.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::UnsupportedModel(_) | Error::Io(_) => 3,
        Error::SectorTooLarge { .. } | Error::PoleCap { .. } => 4,
        Error::PoleCollision { .. } | Error::Singular { .. } | Error::SingularFrequency { .. } => 5,
        Error::IllConditioned { .. } | Error::NoConvergence(_) | Error::DegenerateGround { .. } => 6,
    }
}

fn hint(e: &Error) -> &'static str {
    match e {
        Error::SectorTooLarge { .. } => "raise --max-sector-dim or use a smaller model",
        Error::PoleCap { .. } => "raise --pole-cap, prune with --min-residue, or run fewer --cycles",
        Error::PoleCollision { .. } | Error::SingularFrequency { .. } | Error::Singular { .. } => {
            "shift --omega-min or --omega-step so the grid avoids the pole"
        }
        Error::IllConditioned { .. } => "lower --order",
        Error::UnsupportedModel(_) => "use an even number of sites",
        _ => "check the input",
    }
}

struct Loaded {
    ints: IntegralSet,
    checksum: String,
}

fn load(src: &SourceArgs) -> mbgf::error::Result<Loaded> {
    let (spec, bytes) = match (&src.fcidump, &src.hubbard) {
        (Some(p), None) => (ModelSpec::fcidump(p), std::fs::read(p)?),
        (None, Some(h)) => {
            let spec = match h.as_slice() {
                [t, u] => ModelSpec::dimer(*t, *u),
                [t, u, s] if s.fract() == 0.0 && *s >= 1.0 => ModelSpec::chain(*t, *u, *s as usize),
                _ => return Err(Error::Validation("--hubbard takes t,U or t,U,sites".into())),
            };
            let spec = spec.with_site_energies(src.site_energies.clone().unwrap_or_default());
            let d = spec.describe();
            (spec, d.into_bytes())
        }
        _ => return Err(Error::Validation("give exactly one of --fcidump or --hubbard".into())),
    };
    let ints = generate_model(&spec)?;
    Ok(Loaded {
        ints,
        checksum: output::sha256_hex(&bytes),
    })
}

fn grid_of(g: &GridArgs, fallback: (f64, f64)) -> mbgf::error::Result<Vec<f64>> {
    let lo = g.omega_min.unwrap_or(fallback.0);
    let hi = g.omega_max.unwrap_or(fallback.1);
    let step = g.omega_step.unwrap_or((hi - lo) / 1000.0);
    if !(lo < hi) {
        return Err(Error::Validation(format!("omega_min {lo} must be below omega_max {hi}")));
    }
    if !(step > 0.0) {
        return Err(Error::Validation("omega_step must be positive".into()));
    }
    Ok(uniform_grid(lo, hi, step))
}

fn check_order(n: usize) -> mbgf::error::Result<()> {
    if n < 2 || n > ORDER_CAP {
        return Err(Error::Validation(format!("order must be in 2..={ORDER_CAP}")));
    }
    Ok(())
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(",")
}

/// Σ curves on the grid: eigenvalues of `eps + Σ` in matrix mode, `Σ_qq`
/// in diagonal mode.
fn curves(se: &dyn SelfEnergy, grid: &[f64], mode: &ModeArgs) -> (Vec<String>, Vec<Vec<f64>>) {
    if mode.diagonal || mode.orbital.is_some() {
        let qs: Vec<usize> = match mode.orbital {
            Some(q) => vec![q],
            None => (0..se.dim()).collect(),
        };
        let cols = qs.iter().map(|q| format!("sigma_{q}_{q}")).collect();
        let rows = grid
            .iter()
            .map(|&w| qs.iter().map(|&q| se.eval_diag(w, q).unwrap_or(f64::NAN)).collect())
            .collect();
        (cols, rows)
    } else {
        let cols = (0..se.dim()).map(|k| format!("curve_{k}")).collect();
        (cols, track_curves(se, grid))
    }
}

/// Brackets other than the one holding `eps_q` that contain no root.
fn empty_satellite_brackets(
    se: &dyn SelfEnergy,
    ints: &IntegralSet,
    window: (f64, f64),
    orbital: Option<usize>,
) -> mbgf::error::Result<usize> {
    let opts = SolveOptions::new(window, ints.fermi_level);
    let r = match orbital {
        Some(q) => solve_diagonal(se, q, &opts)?,
        None => solve_diagonal_all(se, &opts)?,
    };
    Ok(r.brackets
        .iter()
        .filter(|b| {
            let q = b.orbital.unwrap_or(0);
            !b.bracket.contains(ints.eps[q]) && b.roots == 0
        })
        .count())
}

fn run_curves(
    label: &str,
    args: &CurveArgs,
    cli_echo: &Value,
    build: &dyn Fn(&IntegralSet) -> mbgf::error::Result<Box<dyn SelfEnergy>>,
) -> mbgf::error::Result<()> {
    let l = load(&args.source)?;
    let se = build(&l.ints)?;
    if let Some(q) = args.mode.orbital {
        if q >= l.ints.m {
            return Err(Error::Validation(format!("orbital {q} out of range 0..{}", l.ints.m)));
        }
    }
    let window = default_window(&l.ints.eps, &se.singularities());
    let grid = grid_of(&args.grid, window)?;
    let (cols, rows) = curves(se.as_ref(), &grid, &args.mode);
    let mut art = Artifact::new(cli_echo.clone(), l.checksum.clone());
    let nan = rows.iter().flatten().filter(|x| x.is_nan()).count();
    let mut header = vec!["omega".to_string()];
    header.extend(cols);
    let table = grid
        .iter()
        .zip(rows)
        .map(|(&w, r)| std::iter::once(Cell::Num(w)).chain(r.into_iter().map(Cell::Num)).collect())
        .collect();
    art.table(header, table);
    let empty = empty_satellite_brackets(se.as_ref(), &l.ints, window, args.mode.orbital)?;
    art.summary("evaluator", json!(label));
    art.summary("orbitals", json!(l.ints.m));
    art.summary("electrons", json!(l.ints.n_e));
    art.summary("orbital_energies", json!(fmt_list(&l.ints.eps)));
    art.summary("singularities", json!(se.singularities().len()));
    art.summary("grid_points", json!(grid.len()));
    art.summary("unevaluated_points", json!(nan));
    art.summary("empty_satellite_brackets", json!(empty));
    art.write(&args.out.out, args.out.format)
}

fn solve(se: &dyn SelfEnergy, ints: &IntegralSet, window: (f64, f64), diagonal: bool) -> mbgf::error::Result<RootSet> {
    let opts = SolveOptions::new(window, ints.fermi_level);
    if diagonal {
        solve_diagonal_all(se, &opts)
    } else {
        solve_matrix(se, &opts)
    }
}

fn run(cli: &Cli) -> mbgf::error::Result<()> {
    let echo = serde_json::to_value(cli).expect("config serializes");
    match &cli.command {
        Command::Exact(a) => {
            let cap = a.source.max_sector_dim;
            run_curves("exact", a, &echo, &|ints| Ok(Box::new(ExactSelfEnergy::new(ints, 1.0, cap)?)))
        }
        Command::Pt { curve, order } => {
            check_order(*order)?;
            let n = *order;
            let cap = curve.source.max_sector_dim;
            run_curves(&format!("order{n}"), curve, &echo, &|ints| {
                if n == 2 {
                    Ok(Box::new(Sigma2::pole_sum(ints)))
                } else {
                    Ok(Box::new(OrderN::with_cap(ints, n, cap)?))
                }
            })
        }
        Command::Tda { curve, cycles } => {
            let c = *cycles;
            run_curves(&format!("tda2-cycles{c}"), curve, &echo, &|ints| Ok(Box::new(Tda2::new(ints, c))))
        }
        Command::Scgf2 {
            source,
            out,
            cycles,
            pole_cap,
            min_residue,
            bins,
        } => {
            let l = load(source)?;
            let mut state = ScPoleState::initial(&l.ints);
            let mut art = Artifact::new(echo.clone(), l.checksum.clone());
            let mut reports = Vec::new();
            let mut rows = Vec::new();
            for _ in 0..=*cycles {
                let (_, next, rep) = scgf2_cycle(&l.ints, &state, *pole_cap)?;
                let next = match min_residue {
                    Some(f) => prune_poles(&next, *f),
                    None => next,
                };
                for (q, ps) in next.poles.iter().enumerate() {
                    for p in ps {
                        rows.push(vec![
                            Cell::Int(rep.cycle as i64),
                            Cell::Int(q as i64),
                            Cell::Num(p.omega),
                            Cell::Num(p.residue),
                            Cell::Text(p.kind.as_str().into()),
                        ]);
                    }
                }
                reports.push(json!({
                    "cycle": rep.cycle,
                    "sigma_terms": rep.sigma_terms,
                    "pole_count": next.total(),
                    "ip_count": next.count(PoleKind::Ip),
                    "ea_count": next.count(PoleKind::Ea),
                    "min_pole": rep.min_pole,
                    "max_pole": rep.max_pole,
                    "max_sum_rule_deviation": next.residue_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max),
                    "skipped_weight": rep.skipped_weight,
                    "histogram": output::histogram(&next, *bins),
                }));
                art.summary(&format!("cycle_{}_poles", rep.cycle), json!(next.total()));
                state = next;
            }
            if out.format == Format::Json {
                art.data("cycles", Value::Array(reports));
            } else {
                art.table(strings(&["cycle", "orbital", "omega", "residue", "kind"]), rows);
            }
            art.write(&out.out, out.format)
        }
        Command::Model {
            grid,
            out,
            orders,
            max_order,
        } => {
            let poles = ModelPoles::standard();
            let g = grid_of(grid, (-3.5, 3.5))?;
            let top = orders.iter().cloned().max().unwrap_or(0).max(*max_order);
            let map = convergence_map(&poles, &g, (*max_order).max(5))?;
            let class: HashMap<u64, &str> = map.points.iter().map(|p| (p.omega.to_bits(), p.class.as_str())).collect();
            let mut cols = strings(&["omega", "exact"]);
            cols.extend(orders.iter().map(|n| format!("order_{n}")));
            cols.push("class".into());
            let mut art = Artifact::new(echo.clone(), output::sha256_hex(format!("{poles:?}").as_bytes()));
            let mut rows = Vec::new();
            for &w in &g {
                let (Ok(exact), Ok(sums)) = (model_g(&poles, w, 1.0), taylor_partial_sums(&poles, w, top)) else {
                    continue;
                };
                let mut cells = vec![Cell::Num(w), Cell::Num(exact)];
                cells.extend(orders.iter().map(|&n| Cell::Num(sums[n])));
                cells.push(Cell::Text(class.get(&w.to_bits()).copied().unwrap_or("excluded").into()));
                rows.push(cells);
            }
            art.table(cols, rows);
            let regions = map.convergent_regions();
            if let Some((a, b)) = map.region_containing(0.0) {
                art.summary("central_convergent_region", json!(format!("{},{}", fmt_num(a), fmt_num(b))));
            }
            art.summary("convergent_regions", json!(regions.len()));
            art.write(&out.out, out.format)
        }
        Command::Roots {
            source,
            out,
            mode,
            exact: _,
            order,
            cycles,
            min_residue,
            omega_min,
            omega_max,
        } => {
            let l = load(source)?;
            let ints = &l.ints;
            let se: Box<dyn SelfEnergy> = match (order, cycles) {
                (Some(n), None) => {
                    check_order(*n)?;
                    if *n == 2 {
                        Box::new(Sigma2::pole_sum(ints))
                    } else {
                        Box::new(OrderN::with_cap(ints, *n, source.max_sector_dim)?)
                    }
                }
                (None, Some(c)) => Box::new(Tda2::new(ints, *c)),
                _ => Box::new(ExactSelfEnergy::new(ints, 1.0, source.max_sector_dim)?),
            };
            let dw = default_window(&ints.eps, &se.singularities());
            let window = (omega_min.unwrap_or(dw.0), omega_max.unwrap_or(dw.1));
            if !(window.0 < window.1) {
                return Err(Error::Validation("omega_min must be below omega_max".into()));
            }
            let diagonal = mode.diagonal || mode.orbital.is_some();
            let mut roots = solve(se.as_ref(), ints, window, diagonal)?;
            if let Some(q) = mode.orbital {
                roots.roots.retain(|r| r.orbital == Some(q));
            }
            let rules = check_sum_rules(&roots, ints.m, ints.n_e);
            let mut art = Artifact::new(echo.clone(), l.checksum.clone());
            let mut rows = Vec::new();
            for r in roots.roots.iter().filter(|r| r.residue >= *min_residue) {
                let q = r.orbital.unwrap_or_else(|| {
                    (0..ints.m).max_by(|&a, &b| r.weight_on(a).total_cmp(&r.weight_on(b))).unwrap_or(0)
                });
                let principal = roots.principal(q).is_some_and(|p| p.omega == r.omega);
                rows.push(vec![
                    Cell::Num(r.omega),
                    Cell::Num(r.residue),
                    Cell::Text(r.kind.as_str().into()),
                    Cell::Int(r.bracket_index as i64),
                    Cell::Int(q as i64),
                    Cell::Int(principal as i64),
                    Cell::Num(r.residual),
                ]);
            }
            art.table(
                strings(&["omega", "residue", "kind", "bracket", "orbital", "principal", "residual"]),
                rows,
            );
            art.summary("evaluator", json!(se.kind().label()));
            art.summary("mode", json!(if diagonal { "diagonal" } else { "matrix" }));
            art.summary("roots", json!(roots.roots.len()));
            let mut distinct: Vec<f64> = roots.roots.iter().map(|r| r.omega).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
            art.summary("distinct_roots", json!(distinct.len()));
            art.summary("ip_roots", json!(roots.count(PoleKind::Ip)));
            art.summary("ea_roots", json!(roots.count(PoleKind::Ea)));
            art.summary("unconverged_roots", json!(roots.roots.iter().filter(|r| !r.converged).count()));
            art.summary("brackets", json!(roots.brackets.len()));
            art.summary("empty_brackets", json!(roots.brackets.iter().filter(|b| b.roots == 0).count()));
            art.summary("electron_sum_rule_deviation", json!(fmt_num(rules.electron_error())));
            art.summary("orbital_sum_rule_deviation", json!(fmt_num(rules.max_orbital_error())));
            if !diagonal {
                art.summary("galitskii_migdal_energy", json!(fmt_num(galitskii_migdal(&roots, ints))));
            }
            if se.kind() == mbgf::dyson::EvaluatorKind::Exact {
                let ex = ExactSelfEnergy::new(ints, 1.0, source.max_sector_dim)?;
                art.summary("fci_energy", json!(fmt_num(ex.prop.e0 + ints.e_nuc)));
                art.summary("fci_poles", json!(ex.prop.poles.visible(1e-12).len()));
            }
            art.write(&out.out, out.format)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("hint: {}", hint(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
