use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "wbary", version, about = "Wasserstein barycenters of random measures")]
pub struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file whose tables mirror subcommand flags; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Squared 2-Wasserstein distance between two measures.
    W2(W2Args),
    /// Empirical barycenter of measures in a directory or of family members.
    Barycenter(BarycenterArgs),
    /// Primal and dual objectives of a family at the closed-form optimum.
    DualityCheck(DualityArgs),
    /// Monte Carlo consistency and rate experiment.
    Simulate(SimulateArgs),
    /// Euclidean mean versus Wasserstein barycenter for a shift family.
    CompareMeans(CompareArgs),
    /// Summary of a family file.
    FamilyInfo(FamilyInfoArgs),
}

/// Config-file values fill flags that were not given.
pub trait Merge {
    fn merge(self, config: Self, base: &Path) -> Self;
}

fn rebase(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

macro_rules! merge_fields {
    ($ty:ty; plain: $($p:ident),*; paths: $($q:ident),*) => {
        impl Merge for $ty {
            fn merge(self, config: Self, base: &Path) -> Self {
                Self {
                    $($p: self.$p.or(config.$p),)*
                    $($q: self.$q.or(config.$q.map(|p| rebase(base, p))),)*
                }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct W2Args {
    /// First measure (JSON or CSV).
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Second measure (JSON or CSV).
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Write the optimal plan as CSV rows `source,target,mass`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}
merge_fields!(W2Args; plain: ; paths: mu, nu, plan);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct BarycenterArgs {
    /// Directory of input measures, read in file-name order.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// One of `1d`, `affine`, `fixed-support`.
    #[arg(long)]
    pub method: Option<String>,
    /// Family file, for `affine`.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Parameter rows (CSV without header, or a JSON array), for `affine`.
    #[arg(long)]
    pub thetas: Option<PathBuf>,
    /// Output file; JSON unless the extension is `.csv`. Printed when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Objective trace CSV, for `fixed-support`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Iteration cap, for `fixed-support`.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Absolute displacement tolerance, for `fixed-support`.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Restart `fixed-support` from every equal-weight input and keep the best.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub multistart: Option<bool>,
}
merge_fields!(BarycenterArgs; plain: method, max_iter, tol, multistart; paths: inputs, family, thetas, out, trace);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct DualityArgs {
    /// Family file.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Quadrature nodes per parameter axis [default: 33].
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Cells per axis of the dual grid [default: 256].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Member atoms: `grid` (dual grid cell centers) or `lagrangian` [default: grid].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Largest accepted relative gap [default: 0.01].
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Per-node CSV; printed when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_fields!(DualityArgs; plain: nodes, grid, scheme, gap_tol; paths: family, out);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Family file.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Comma-separated sample sizes [default: 8,16,...,1024].
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Replicates per sample size [default: 200].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base seed [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: report].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Distance scheme: `exact1d`, `lagrangian` or `grid:<cells>` [default: exact1d in 1D, lagrangian otherwise].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Quadrature nodes per parameter axis for the population barycenter [default: 65].
    #[arg(long)]
    pub quad_nodes: Option<usize>,
}
merge_fields!(SimulateArgs; plain: n, reps, seed, scheme, quad_nodes; paths: family, out);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct CompareArgs {
    /// Shift family file.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Number of members [default: 10000].
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cells per axis of the common grid [default: 1024 in 1D, 128 in 2D].
    #[arg(long)]
    pub cells: Option<usize>,
    /// Quadrature nodes per axis for the convolution [default: 2001 in 1D, 101 in 2D].
    #[arg(long)]
    pub conv_nodes: Option<usize>,
    /// JSON record output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
merge_fields!(CompareArgs; plain: n, seed, cells, conv_nodes; paths: family, out);

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct FamilyInfoArgs {
    /// Family file.
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Quadrature nodes per parameter axis [default: 65].
    #[arg(long)]
    pub nodes: Option<usize>,
}
merge_fields!(FamilyInfoArgs; plain: nodes; paths: family);

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ConfigFile {
    pub threads: Option<usize>,
    pub w2: Option<W2Args>,
    pub barycenter: Option<BarycenterArgs>,
    pub duality_check: Option<DualityArgs>,
    pub simulate: Option<SimulateArgs>,
    pub compare_means: Option<CompareArgs>,
    pub family_info: Option<FamilyInfoArgs>,
}
