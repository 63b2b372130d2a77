use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::args::*;
use crate::barycenter::{
    empirical_barycenter_1d, empirical_barycenter_affine, empirical_barycenter_fixed_support,
    empirical_barycenter_multistart, FixedSupportOptions,
};
use crate::duality::{closed_form_check, closed_form_dual, pushforward_error};
use crate::transport_exact::DEFAULT_MAX_ATOMS;
use crate::error::{Error, Result};
use crate::experiments::{
    check_rate_inputs, consistency_run, envelope_check, envelope_thresholds, euclid_vs_wasserstein, population_law,
    rate_fit, write_report, BernsteinConstants, ConsistencyConfig, DistanceScheme, EuclidOptions, ENVELOPE_LEVELS,
};
use crate::experiments::report::SLOPE_BAND;
use crate::measures::io::{load_measure_auto, save_measure, MeasureFormat};
use crate::measures::{DiscreteMeasure, DomainBox, GridDensity, Measure};
use crate::models::{load_family, FamilyKind, MemberScheme, DEFAULT_NODES};
use crate::transport1d::w2sq_1d;
use crate::transport_exact::w2sq_lp;

/// Exit status of a command that ran but whose checks failed.
pub const CHECK_FAILED: i32 = 2;

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("missing required flag --{flag}")))
}

/// A loaded measure and whether its file declared a domain box.
struct Loaded {
    measure: Measure,
    declared: bool,
}

fn load(path: &Path) -> Result<Loaded> {
    let measure = load_measure_auto(path)?;
    let declared = match (&measure, MeasureFormat::from_path(path)?) {
        (Measure::Grid(_), _) => true,
        (Measure::Discrete(_), MeasureFormat::Json) => {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            v.get("domain").is_some_and(|d| !d.is_null())
        }
        (Measure::Discrete(_), MeasureFormat::Csv { .. }) => false,
    };
    Ok(Loaded { measure, declared })
}

/// Declared boxes must agree; undeclared inputs adopt the declared box, or the
/// hull of all bounding boxes when none is declared.
fn on_common_domain(inputs: &[Loaded]) -> Result<Vec<DiscreteMeasure>> {
    let ms: Vec<DiscreteMeasure> = inputs.iter().map(|l| l.measure.to_discrete()).collect::<Result<_>>()?;
    let mut declared = inputs.iter().zip(&ms).filter(|(l, _)| l.declared).map(|(_, m)| m.domain());
    let domain: DomainBox = match declared.next() {
        Some(first) => {
            if let Some(other) = declared.find(|d| !d.approx_eq(first)) {
                return Err(Error::Domain(format!(
                    "inputs declare different domains {:?} and {:?}",
                    first.intervals(),
                    other.intervals()
                )));
            }
            first.clone()
        }
        None => {
            let mut hull = ms[0].domain().clone();
            for m in &ms[1..] {
                hull = hull.hull(m.domain())?;
            }
            hull
        }
    };
    ms.iter().map(|m| m.with_domain(domain.clone())).collect()
}

fn format_of(path: &Path) -> MeasureFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => MeasureFormat::Csv { header: true },
        _ => MeasureFormat::Json,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn save(m: &Measure, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_measure(m, path, format_of(path))
}

fn emit_measure(m: &Measure, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => save(m, p),
        None => {
            let text = match m {
                Measure::Discrete(d) => crate::measures::io::measure_to_json(d),
                Measure::Grid(g) => crate::measures::io::grid_to_json(g),
            };
            println!("{text}");
            Ok(())
        }
    }
}

pub fn w2(a: W2Args) -> Result<i32> {
    let inputs = [load(&need(a.mu, "mu")?)?, load(&need(a.nu, "nu")?)?];
    let (mu, nu) = (&inputs[0].measure, &inputs[1].measure);
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension(format!("measures of dimension {} and {}", mu.dim(), nu.dim())));
    }
    let pair = on_common_domain(&inputs)?;
    if mu.dim() == 1 && a.plan.is_none() {
        println!("{:?}", w2sq_1d(mu, nu)?);
        return Ok(0);
    }
    let sol = w2sq_lp(&pair[0], &pair[1])?;
    if let Some(p) = a.plan {
        let mut s = String::from("source,target,mass\n");
        for &(i, j, m) in sol.plan.entries() {
            writeln!(s, "{i},{j},{m:?}").ok();
        }
        write_text(&p, &s)?;
    }
    println!("{:?}", sol.cost);
    Ok(0)
}

fn read_inputs(dir: &Path) -> Result<Vec<Loaded>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(), Some("json" | "csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InsufficientData(format!("no .json or .csv measures in {}", dir.display())));
    }
    files.iter().map(|p| load(p)).collect()
}

fn read_thetas(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return Ok(serde_json::from_str(&text)?);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("parameter value {f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn barycenter(a: BarycenterArgs) -> Result<i32> {
    let method = a.method.as_deref().unwrap_or("1d");
    match method {
        "1d" => {
            let ms = on_common_domain(&read_inputs(&need(a.inputs, "inputs")?)?)?;
            let bar = empirical_barycenter_1d(&ms)?;
            eprintln!("1d barycenter of {} measures: {} atoms", ms.len(), bar.len());
            emit_measure(&Measure::Discrete(bar), a.out.as_ref())?;
        }
        "fixed-support" => {
            let ms = on_common_domain(&read_inputs(&need(a.inputs, "inputs")?)?)?;
            let opts = FixedSupportOptions { max_iter: a.max_iter.unwrap_or(FixedSupportOptions::default().max_iter), tol: a.tol };
            let res = if a.multistart.unwrap_or(false) {
                empirical_barycenter_multistart(&ms, &opts)?
            } else {
                empirical_barycenter_fixed_support(&ms, None, &opts)?
            };
            eprintln!(
                "fixed support: {} iterations, converged {}, objective {:?}",
                res.iterations,
                res.converged,
                res.trace.last().copied().unwrap_or(f64::NAN)
            );
            if let Some(p) = &a.trace {
                let mut s = String::from("iteration,objective,displacement\n");
                for (k, j) in res.trace.iter().enumerate() {
                    let disp = if k == 0 { f64::NAN } else { res.displacements[k - 1] };
                    writeln!(s, "{k},{j:?},{disp:?}").ok();
                }
                write_text(p, &s)?;
            }
            emit_measure(&Measure::Discrete(res.measure), a.out.as_ref())?;
        }
        "affine" => {
            let family = load_family(&need(a.family, "family")?)?;
            let thetas = read_thetas(&need(a.thetas, "thetas")?)?;
            if let Some(t) = thetas.iter().find(|t| t.len() != family.params()) {
                return Err(Error::Dimension(format!("parameter {t:?} needs {} coordinates", family.params())));
            }
            let bar = empirical_barycenter_affine(&thetas, &family, None)?;
            eprintln!("affine barycenter of {} members on {} cells", thetas.len(), bar.geometry().len());
            emit_measure(&Measure::Grid(bar), a.out.as_ref())?;
        }
        other => return Err(Error::Usage(format!("unknown method {other:?}; expected 1d, affine or fixed-support"))),
    }
    Ok(0)
}

pub fn duality_check(a: DualityArgs) -> Result<i32> {
    let family = load_family(&need(a.family, "family")?)?;
    let nodes = a.nodes.unwrap_or(DEFAULT_NODES);
    let cells = a.grid.unwrap_or(256);
    let tol = a.gap_tol.unwrap_or(1e-2);
    let law = population_law(&family, nodes)?;
    let geom = family.omega_grid(&vec![cells; family.dim()])?;
    let scheme = match a.scheme.as_deref().unwrap_or("grid") {
        "grid" => MemberScheme::Grid(geom.clone()),
        "lagrangian" => MemberScheme::Lagrangian,
        other => return Err(Error::Usage(format!("unknown scheme {other:?}; expected grid or lagrangian"))),
    };
    let check = closed_form_check(&family, &law, &geom, &scheme)?;
    let (primal, dual, gap, rel) = (check.primal, check.dual, check.gap(), check.relative_gap());
    let terms = &check.terms;
    let ok = rel <= tol;

    // Recovered push-forwards are compared with the barycenter when the LP can take them.
    let df = closed_form_dual(&family, &law, &geom)?;
    let nu = family.image_measure(&family.mean_map(&law)?, &scheme)?;
    let push_ok = family.dim() == 1 || nu.len() <= DEFAULT_MAX_ATOMS;
    let push: Vec<f64> = (0..law.len())
        .into_par_iter()
        .map(|k| {
            if push_ok && law.density[k] > 0.0 {
                pushforward_error(&df, &family, k, &scheme, &nu)
            } else {
                Ok(f64::NAN)
            }
        })
        .collect::<Result<_>>()?;
    let mut csv = String::new();
    let header: Vec<String> = (0..family.params()).map(|i| format!("theta{i}")).collect();
    writeln!(csv, "node,{},prob,primal_term,dual_term,pushforward_w2", header.join(",")).ok();
    for (k, (p, d)) in terms.iter().enumerate() {
        let th: Vec<String> = law.nodes[k].iter().map(|v| format!("{v:?}")).collect();
        writeln!(csv, "{k},{},{:?},{p:?},{d:?},{:?}", th.join(","), law.probs[k], push[k]).ok();
    }
    let worst = push.iter().copied().filter(|v| v.is_finite()).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    println!("J_P   {primal:?}");
    println!("J_P*  {dual:?}");
    println!("gap   {gap:?}");
    if let Some(w) = worst {
        println!("max push-forward W2 {w:.3e} (cell size {:.3e})", geom.max_cell_size());
    }
    println!("relative gap {rel:.3e} (tolerance {tol:e}): {}", if ok { "ok" } else { "FAILED" });
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(if ok { 0 } else { CHECK_FAILED })
}

fn parse_scheme(s: &str) -> Result<DistanceScheme> {
    match s {
        "exact1d" => Ok(DistanceScheme::Exact1d),
        "lagrangian" => Ok(DistanceScheme::Lagrangian),
        _ => match s.strip_prefix("grid:").map(str::parse::<usize>) {
            Some(Ok(cells)) if cells > 0 => Ok(DistanceScheme::Grid { cells }),
            _ => Err(Error::Usage(format!("unknown scheme {s:?}; expected exact1d, lagrangian or grid:<cells>"))),
        },
    }
}

pub fn simulate(a: SimulateArgs) -> Result<i32> {
    let n_grid = a.n.unwrap_or_else(|| (3..=10).map(|k| 1usize << k).collect());
    let reps = a.reps.unwrap_or(200);
    check_rate_inputs(&n_grid, reps)?;
    let family = load_family(&need(a.family, "family")?)?;
    let mut config = ConsistencyConfig::new(n_grid, reps, a.seed.unwrap_or(7), family.dim());
    if let Some(s) = &a.scheme {
        config.scheme = parse_scheme(s)?;
    }
    if let Some(q) = a.quad_nodes {
        config.quad_nodes = q;
    }
    let out = a.out.unwrap_or_else(|| PathBuf::from("report"));
    let report = consistency_run(&family, &config)?;
    let fit = rate_fit(&report)?;
    let law = population_law(&family, config.quad_nodes)?;
    let constants = BernsteinConstants::from_family(&family, &law)?;
    let ts = envelope_thresholds(&report, &ENVELOPE_LEVELS);
    let rows = envelope_check(&report, &constants, &ts);
    write_report(&out, &report, Some(&fit), &rows)?;

    println!("{:>8} {:>14} {:>14}", "n", "mean d2", "median d2");
    for r in &report.aggregates {
        println!("{:>8} {:>14.6e} {:>14.6e}", r.n, r.mean, r.q50);
    }
    let slope_ok = (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&fit.slope);
    let bad: Vec<_> = rows.iter().filter(|r| !r.ok).collect();
    println!("slope {:.4} (95% CI {:.4} .. {:.4}) {}", fit.slope, fit.ci.0, fit.ci.1, if slope_ok { "ok" } else { "FAILED" });
    println!("envelope rows ok {}/{}", rows.len() - bad.len(), rows.len());
    println!("records checksum {}", report.checksum);
    println!("report written to {}", out.display());
    for r in &bad {
        eprintln!("envelope violated at n={} t={:e}: frequency {} > bound {:e}", r.n, r.t, r.freq, r.bound);
    }
    if !slope_ok {
        eprintln!("slope {:.4} outside [{}, {}]", fit.slope, SLOPE_BAND.0, SLOPE_BAND.1);
    }
    Ok(if slope_ok && bad.is_empty() { 0 } else { CHECK_FAILED })
}

pub fn compare_means(a: CompareArgs) -> Result<i32> {
    let family = load_family(&need(a.family, "family")?)?;
    let mut opts = EuclidOptions::default_for(family.dim());
    if let Some(c) = a.cells {
        opts.cells = c;
    }
    if let Some(c) = a.conv_nodes {
        opts.conv_nodes = c;
    }
    let rec = euclid_vs_wasserstein(&family, a.n.unwrap_or(10_000), a.seed.unwrap_or(7), &opts)?;
    println!("n                     {}", rec.n);
    println!("L1(euclid, conv)      {:.6e}", rec.l1_euclid_conv);
    println!("L1(euclid, template)  {:.6e}", rec.l1_euclid_template);
    println!("L1(conv, template)    {:.6e}", rec.l1_conv_template);
    println!("W2(wass, template)    {:.6e}", rec.w2_wass_template);
    println!("|mean shift|          {:.6e}", rec.mean_shift);
    if let Some(p) = &a.out {
        write_text(p, &(serde_json::to_string_pretty(&rec)? + "\n"))?;
    }
    Ok(0)
}

fn kind_name(k: FamilyKind) -> &'static str {
    match k {
        FamilyKind::Shift => "shift",
        FamilyKind::LocationScale => "location_scale",
        FamilyKind::Affine => "affine",
    }
}

pub fn family_info(a: FamilyInfoArgs) -> Result<i32> {
    let family = load_family(&need(a.family, "family")?)?;
    let law = population_law(&family, a.nodes.unwrap_or(65))?;
    let mean = family.mean_map(&law)?;
    let c = BernsteinConstants::from_family(&family, &law)?;
    let t: &GridDensity = family.template();
    let d = family.dim();
    let info = json!({
        "kind": kind_name(family.kind()),
        "dim": d,
        "params": family.params(),
        "theta_box": family.theta_box().intervals(),
        "domain": family.omega().intervals(),
        "template_shape": t.geometry().shape(),
        "template_support": t.support_bounds().intervals(),
        "template_second_moment": t.second_moment(),
        "mean_matrix": (0..d).map(|i| (0..d).map(|j| mean.matrix()[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "mean_offset": mean.offset().iter().copied().collect::<Vec<_>>(),
        "var_matrix": c.var_a,
        "var_offset": c.var_b,
        "max_matrix_deviation": c.b1,
        "max_offset_deviation": c.b2,
    });
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(0)
}
