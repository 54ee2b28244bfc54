//! Config-driven experiment drivers behind the `stab` CLI: the eigenvalue
//! convergence table, open/closed-loop simulations, the inter-level
//! solution-error table, and the finite-horizon cost report.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fem::{assemble_block_system, l2_project_initial, BlockSystem, ModelParams};
use crate::kernels;
use crate::mesh::{build_unit_square_mesh, prolongation, ControlRegion, Mesh};
use crate::riccati::{feedback_gain, project_system, solve_projected_are, FeedbackGain,
    ProjectedSystem, RiccatiSolution};
use crate::spectral::{discrete_eigs, eig_convergence_study, hautus_check, unstable_basis,
    EigTarget, HautusReport, Which};
use crate::timestep::{discrete_h1_norm, discrete_l2_norm, simulate, TimeSeries};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_FINAL: f64 = 2.0;
pub const DEFAULT_EVAL_TIME: f64 = 0.1;
/// Unstable selection threshold Re > -tol.
pub const UNSTABLE_TOL: f64 = 1e-9;
/// Hautus ratios at or below this abort a controlled run.
pub const HAUTUS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// At least six significant digits.
    Standard,
    /// Shortest round-trip representation.
    Full,
}

impl Precision {
    pub fn fmt(&self, v: f64) -> String {
        match self {
            Precision::Standard => format!("{v:.6e}"),
            Precision::Full => format!("{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionSpec {
    FullDomain,
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl RegionSpec {
    pub fn realize(&self, mesh: &Mesh) -> Result<ControlRegion> {
        match *self {
            RegionSpec::FullDomain => Ok(ControlRegion::full_domain(mesh)),
            RegionSpec::Rect { x0, y0, x1, y1 } => ControlRegion::from_rect(mesh, x0, y0, x1, y1),
        }
    }
}

/// Named initial data; arbitrary expressions are out of scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    /// x1 (1 - x1) x2 (1 - x2)
    PolynomialBump,
    /// sin(pi x1) sin(pi x2)
    Sine,
    Zero,
}

impl InitialData {
    pub fn from_name(name: &str) -> Result<InitialData> {
        match name {
            "polynomial-bump" => Ok(InitialData::PolynomialBump),
            "sine" => Ok(InitialData::Sine),
            "zero" => Ok(InitialData::Zero),
            other => Err(Error::Config(format!(
                "unknown initial data {other:?} (expected polynomial-bump, sine or zero)"
            ))),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            InitialData::PolynomialBump => x * (1.0 - x) * y * (1.0 - y),
            InitialData::Sine => {
                (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            }
            InitialData::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub levels: Vec<u32>,
    pub dt: f64,
    pub t_final: f64,
    pub eval_time: f64,
    pub region: RegionSpec,
    pub initial_y: InitialData,
    pub initial_z: InitialData,
    pub output_dir: PathBuf,
    pub precision: Precision,
}

#[derive(Deserialize)]
struct RawConfig {
    params: ModelParams,
    run: RawRun,
    #[serde(default)]
    region: RawRegion,
    #[serde(default)]
    initial: RawInitial,
}

#[derive(Deserialize)]
struct RawRun {
    levels: Vec<u32>,
    dt: Option<f64>,
    t_final: Option<f64>,
    eval_time: Option<f64>,
    output_dir: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawRegion {
    full_domain: Option<bool>,
    rect: Option<[f64; 4]>,
}

#[derive(Deserialize, Default)]
struct RawInitial {
    y: Option<String>,
    z: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        let region = match (raw.region.full_domain, raw.region.rect) {
            (_, Some([x0, y0, x1, y1])) => RegionSpec::Rect { x0, y0, x1, y1 },
            (Some(false), None) => {
                return Err(Error::Config("region: give rect = [x0, y0, x1, y1]".into()))
            }
            _ => RegionSpec::FullDomain,
        };
        let cfg = ExperimentConfig {
            params: raw.params,
            levels: raw.run.levels,
            dt: raw.run.dt.unwrap_or(DEFAULT_DT),
            t_final: raw.run.t_final.unwrap_or(DEFAULT_T_FINAL),
            eval_time: raw.run.eval_time.unwrap_or(DEFAULT_EVAL_TIME),
            region,
            initial_y: InitialData::from_name(raw.initial.y.as_deref().unwrap_or("polynomial-bump"))?,
            initial_z: InitialData::from_name(raw.initial.z.as_deref().unwrap_or("sine"))?,
            output_dir: PathBuf::from(raw.run.output_dir.unwrap_or_else(|| "out".into())),
            precision: Precision::Standard,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.levels.is_empty() || self.levels.iter().any(|&l| l < 1) {
            return Err(Error::Config("levels must be a nonempty list of integers >= 1".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("levels must be strictly ascending".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.eval_time > 0.0 && self.eval_time <= self.t_final) {
            return Err(Error::Config("need 0 < eval_time <= t_final".into()));
        }
        Ok(())
    }

    pub fn initial_vector(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let y = self.initial_y;
        let z = self.initial_z;
        l2_project_initial(mesh, &move |a, b| y.eval(a, b), &move |a, b| z.eval(a, b))
    }
}

/// Numerical order of convergence: first entry blank, then
/// log(e_{i+1}/e_i) / log(h_{i+1}/h_i); zero errors yield blanks.
pub fn compute_order(errors: &[f64], hs: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(errors.len(), hs.len());
    let mut out = vec![None; errors.len()];
    for i in 1..errors.len() {
        if errors[i] > 0.0 && errors[i - 1] > 0.0 && hs[i] != hs[i - 1] {
            out[i] = Some((errors[i] / errors[i - 1]).ln() / (hs[i] / hs[i - 1]).ln());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ErrorColumn {
    pub name: String,
    pub errors: Vec<f64>,
    pub orders: Vec<Option<f64>>,
}

/// Per-mesh-size table: reported values plus error/order columns.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub hs: Vec<f64>,
    pub value_columns: Vec<(String, Vec<f64>)>,
    pub error_columns: Vec<ErrorColumn>,
}

impl ConvergenceTable {
    pub fn write_csv(&self, path: &Path, precision: Precision) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["h".to_string()];
        for (name, _) in &self.value_columns {
            header.push(name.clone());
        }
        for col in &self.error_columns {
            header.push(col.name.clone());
            header.push(format!("order_{}", col.name.trim_start_matches("err_")));
        }
        writeln!(f, "{}", header.join(","))?;
        for (i, &h) in self.hs.iter().enumerate() {
            let mut row = vec![precision.fmt(h)];
            for (_, vals) in &self.value_columns {
                row.push(precision.fmt(vals[i]));
            }
            for col in &self.error_columns {
                row.push(precision.fmt(col.errors[i]));
                row.push(col.orders[i].map(|o| precision.fmt(o)).unwrap_or_default());
            }
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Plain-text rendering for the terminal.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<12}", "h"));
        for col in &self.error_columns {
            s.push_str(&format!("{:<14}{:<10}", col.name, "order"));
        }
        s.push('\n');
        for i in 0..self.hs.len() {
            s.push_str(&format!("{:<12.6}", self.hs[i]));
            for col in &self.error_columns {
                let order =
                    col.orders[i].map(|o| format!("{o:.5}")).unwrap_or_else(|| "---".into());
                s.push_str(&format!("{:<14.6}{order:<10}", col.errors[i]));
            }
            s.push('\n');
        }
        s
    }
}

/// Everything produced by design steps 2 to 5 for one assembled system.
pub struct Controller {
    pub basis: crate::spectral::UnstableBasis,
    pub hautus: HautusReport,
    pub projected: ProjectedSystem,
    pub riccati: RiccatiSolution,
    pub gain: FeedbackGain,
}

/// Locate the unstable modes and synthesize the feedback; `None` when the
/// system has no unstable eigenvalues (the closed loop equals the open
/// loop with K = 0).
pub fn design_controller(system: &BlockSystem) -> Result<Option<Controller>> {
    let count = 8usize.min(system.a.nrows());
    let pairs = discrete_eigs(system, count, Which::LargestReal)?;
    let basis = unstable_basis(system, &pairs, UNSTABLE_TOL)?;
    if basis.count == 0 {
        return Ok(None);
    }
    let hautus = hautus_check(system, &basis, HAUTUS_TOL);
    if !hautus.ok {
        let detail: Vec<String> =
            hautus.ratios.iter().map(|(v, r)| format!("{v}: {r:.3e}")).collect();
        return Err(Error::HautusFailed(detail.join(", ")));
    }
    let projected = project_system(system, &basis)?;
    let riccati = solve_projected_are(&projected)?;
    let gain = feedback_gain(&riccati, &projected, &basis, system);
    Ok(Some(Controller { basis, hautus, projected, riccati, gain }))
}

/// Eigenvalue table for the targets (1,1,+) and (1,2,+), written to
/// `eigs.csv`.
pub fn run_eigs(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    let targets = [
        EigTarget { m: 1, n: 1, plus_branch: true },
        EigTarget { m: 1, n: 2, plus_branch: true },
    ];
    let table = eig_convergence_study(&cfg.params, &cfg.levels, &targets)?;
    table.write_csv(&cfg.output_dir.join("eigs.csv"), cfg.precision)?;
    Ok(table)
}

pub struct SimulationRun {
    pub level: u32,
    pub series: TimeSeries,
    /// Set when a controlled run found no unstable modes.
    pub notice: Option<String>,
    pub unstable_count: usize,
}

/// Simulate the configured levels, writing `energy_controlled_L*.csv` or
/// `energy_uncontrolled_L*.csv` plus one checkpoint file per requested
/// checkpoint time.
pub fn run_simulation(
    cfg: &ExperimentConfig,
    controlled: bool,
    level_filter: Option<u32>,
    dump_riccati: Option<&Path>,
) -> Result<Vec<SimulationRun>> {
    let levels: Vec<u32> =
        cfg.levels.iter().copied().filter(|l| level_filter.is_none_or(|f| f == *l)).collect();
    if levels.is_empty() {
        return Err(Error::Config("no levels selected".into()));
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let runs = kernels::try_map_items(levels, |level| {
        let mesh = build_unit_square_mesh(level)?;
        let region = cfg.region.realize(&mesh)?;
        let system = assemble_block_system(&mesh, &cfg.params, &region)?;
        let y0 = cfg.initial_vector(&mesh)?;
        let (gain, notice, unstable_count) = if controlled {
            match design_controller(&system)? {
                Some(ctrl) => {
                    if let Some(dir) = dump_riccati {
                        dump_controller(dir, level, &ctrl)?;
                    }
                    (Some(ctrl.gain), None, ctrl.basis.count)
                }
                None => (
                    None,
                    Some(format!(
                        "level {level}: no unstable eigenvalues; control disabled (K = 0)"
                    )),
                    0,
                ),
            }
        } else {
            (None, None, 0)
        };
        let series =
            simulate(&system, gain.as_ref(), &y0, cfg.dt, cfg.t_final, &[cfg.eval_time])?;
        Ok(SimulationRun { level, series, notice, unstable_count })
    })?;
    for run in &runs {
        let tag = if controlled { "controlled" } else { "uncontrolled" };
        let path = cfg.output_dir.join(format!("energy_{tag}_L{}.csv", run.level));
        write_energy_csv(&path, &run.series, cfg.precision)?;
        for (t, vec) in &run.series.checkpoints {
            let cpath = cfg.output_dir.join(format!("checkpoint_{tag}_L{}_t{t}.txt", run.level));
            write_checkpoint(&cpath, vec)?;
        }
    }
    Ok(runs)
}

fn dump_controller(dir: &Path, level: u32, ctrl: &Controller) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let w = |name: &str, m: &nalgebra::DMatrix<f64>| {
        crate::sparse::write_dense_matrix_market(m, &dir.join(format!("{name}_L{level}.mtx")))
    };
    w("Au", &ctrl.projected.au)?;
    w("Bu", &ctrl.projected.bu)?;
    w("Qu", &ctrl.projected.qu)?;
    w("P", &ctrl.riccati.p)?;
    Ok(())
}

fn write_energy_csv(path: &Path, series: &TimeSeries, precision: Precision) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,state_energy,control_energy")?;
    for i in 0..series.times.len() {
        writeln!(
            f,
            "{},{},{}",
            precision.fmt(series.times[i]),
            precision.fmt(series.state_energy[i]),
            precision.fmt(series.control_energy[i])
        )?;
    }
    Ok(())
}

/// Length-prefixed text array: first line the count, then one value per
/// line at full precision.
fn write_checkpoint(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", values.len())?;
    for v in values {
        writeln!(f, "{v}")?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::Config("checkpoint: missing length prefix".into()))?;
    let vals: Vec<f64> = lines.filter_map(|l| l.trim().parse().ok()).collect();
    if vals.len() != n {
        return Err(Error::Config(format!(
            "checkpoint: expected {n} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

struct LevelSolution {
    mesh: Mesh,
    g: crate::sparse::CsrMatrix,
    k: crate::sparse::CsrMatrix,
    y_eval: Vec<f64>,
    u_eval: Vec<f64>,
}

/// Inter-level errors of the stabilized solution and control at
/// `eval_time`, in fine-mesh norms after prolongation; written to
/// `table2.csv`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    if cfg.levels.len() < 2 {
        return Err(Error::Config("convergence study needs at least two levels".into()));
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let sims = kernels::try_map_items(cfg.levels.clone(), |level| {
        let mesh = build_unit_square_mesh(level)?;
        let region = cfg.region.realize(&mesh)?;
        let system = assemble_block_system(&mesh, &cfg.params, &region)?;
        let y0 = cfg.initial_vector(&mesh)?;
        let gain = design_controller(&system)?.map(|c| c.gain);
        // integrate only as far as the evaluation time
        let horizon = cfg.eval_time.max(cfg.dt);
        let series = simulate(&system, gain.as_ref(), &y0, cfg.dt, horizon, &[cfg.eval_time])?;
        let (_, y_eval) = series
            .checkpoint_at(cfg.eval_time)
            .ok_or_else(|| Error::Config("missing evaluation checkpoint".into()))?
            .clone();
        let u_eval = match &gain {
            Some(g) => g.control(&y_eval),
            None => vec![0.0; system.n],
        };
        Ok(LevelSolution { mesh, g: system.g, k: system.k, y_eval, u_eval })
    })?;

    let names = ["err_l2_y", "err_h1_y", "err_l2_z", "err_h1_z", "err_l2_u"];
    let mut hs = Vec::new();
    let mut errs: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for pair in sims.windows(2) {
        let (coarse, fine) = (&pair[0], &pair[1]);
        if fine.mesh.level != coarse.mesh.level + 1 {
            return Err(Error::Config(
                "convergence study requires consecutive levels (nested meshes)".into(),
            ));
        }
        let p = prolongation(&coarse.mesh, &fine.mesh)?;
        let nc = coarse.mesh.n_interior();
        let nf = fine.mesh.n_interior();
        let dy: Vec<f64> = {
            let py = p.matvec_alloc(&coarse.y_eval[..nc]);
            (0..nf).map(|i| fine.y_eval[i] - py[i]).collect()
        };
        let dz: Vec<f64> = {
            let pz = p.matvec_alloc(&coarse.y_eval[nc..]);
            (0..nf).map(|i| fine.y_eval[nf + i] - pz[i]).collect()
        };
        let du: Vec<f64> = {
            let pu = p.matvec_alloc(&coarse.u_eval);
            (0..nf).map(|i| fine.u_eval[i] - pu[i]).collect()
        };
        hs.push(coarse.mesh.h);
        errs[0].push(discrete_l2_norm(&fine.g, &dy)?);
        errs[1].push(discrete_h1_norm(&fine.g, &fine.k, &dy)?);
        errs[2].push(discrete_l2_norm(&fine.g, &dz)?);
        errs[3].push(discrete_h1_norm(&fine.g, &fine.k, &dz)?);
        errs[4].push(discrete_l2_norm(&fine.g, &du)?);
    }
    let error_columns = names
        .iter()
        .zip(errs)
        .map(|(name, errors)| {
            let orders = compute_order(&errors, &hs);
            ErrorColumn { name: name.to_string(), errors, orders }
        })
        .collect();
    let table = ConvergenceTable { hs, value_columns: Vec::new(), error_columns };
    table.write_csv(&cfg.output_dir.join("table2.csv"), cfg.precision)?;
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct CostReport {
    /// (level, h, J_h)
    pub rows: Vec<(u32, f64, f64)>,
    /// |J_{l+1} - J_l| per consecutive pair.
    pub diffs: Vec<f64>,
}

/// Finite-horizon quadratic cost of the controlled runs by the trapezoidal
/// rule; written to `cost.csv`.
pub fn run_cost(cfg: &ExperimentConfig) -> Result<CostReport> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let rows = kernels::try_map_items(cfg.levels.clone(), |level| {
        let mesh = build_unit_square_mesh(level)?;
        let region = cfg.region.realize(&mesh)?;
        let system = assemble_block_system(&mesh, &cfg.params, &region)?;
        let y0 = cfg.initial_vector(&mesh)?;
        let gain = design_controller(&system)?.map(|c| c.gain);
        let series = simulate(&system, gain.as_ref(), &y0, cfg.dt, cfg.t_final, &[])?;
        let mut j = 0.0;
        for i in 1..series.times.len() {
            let f0 = series.state_energy[i - 1].powi(2) + series.control_energy[i - 1].powi(2);
            let f1 = series.state_energy[i].powi(2) + series.control_energy[i].powi(2);
            j += 0.5 * (f0 + f1) * (series.times[i] - series.times[i - 1]);
        }
        Ok((level, mesh.h, j))
    })?;
    let diffs = rows.windows(2).map(|w| (w[1].2 - w[0].2).abs()).collect();
    let report = CostReport { rows, diffs };
    let mut f = std::io::BufWriter::new(std::fs::File::create(cfg.output_dir.join("cost.csv"))?);
    writeln!(f, "level,h,cost,diff_to_previous")?;
    for (i, (level, h, j)) in report.rows.iter().enumerate() {
        let d = if i == 0 { String::new() } else { cfg.precision.fmt(report.diffs[i - 1]) };
        writeln!(f, "{level},{},{},{d}", cfg.precision.fmt(*h), cfg.precision.fmt(*j))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const EXAMPLE_TOML: &str = r#"
[params]
eta0 = 1.0
beta0 = 0.8
kappa = 1.0
nu0 = 0.0
eta1 = 5.0
omega = 25.0

[run]
levels = [2, 3]
dt = 0.001
t_final = 0.5
eval_time = 0.1
output_dir = "out"

[initial]
y = "polynomial-bump"
z = "sine"
"#;

    #[test]
    fn parse_example_config() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE_TOML).unwrap();
        assert_eq!(cfg.levels, vec![2, 3]);
        assert_relative_eq!(cfg.params.eta1, 5.0);
        assert_eq!(cfg.region, RegionSpec::FullDomain);
        assert_eq!(cfg.initial_y, InitialData::PolynomialBump);
        assert_eq!(cfg.initial_z, InitialData::Sine);
    }

    #[test]
    fn config_validation_errors() {
        let bad = EXAMPLE_TOML.replace("levels = [2, 3]", "levels = [3, 2]");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = EXAMPLE_TOML.replace("dt = 0.001", "dt = -1.0");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let ok = EXAMPLE_TOML.replace("eval_time = 0.1", "eval_time = 0.4");
        assert!(ExperimentConfig::from_toml_str(&ok).is_ok());
        let bad = EXAMPLE_TOML.replace("eval_time = 0.1", "eval_time = 5.0");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = EXAMPLE_TOML.replace("\"sine\"", "\"cosine\"");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn rect_region_config() {
        let text = EXAMPLE_TOML.to_string() + "\n[region]\nrect = [0.0, 0.0, 0.5, 1.0]\n";
        // toml requires sections in order; rebuild instead
        let text = text.replace("\n[initial]", "\n[region]\nrect = [0.0, 0.0, 0.5, 1.0]\n\n[initial]");
        let text = text.lines().collect::<Vec<_>>();
        // drop the duplicate trailing region section
        let cut = text.iter().rposition(|l| l.starts_with("[region]")).unwrap();
        let cfg = ExperimentConfig::from_toml_str(&text[..cut].join("\n")).unwrap();
        assert!(matches!(cfg.region, RegionSpec::Rect { .. }));
    }

    #[test]
    fn compute_order_examples() {
        // errors (4, 1) at h (1/2, 1/4): order 2
        let o = compute_order(&[4.0, 1.0], &[0.5, 0.25]);
        assert!(o[0].is_none());
        assert_relative_eq!(o[1].unwrap(), 2.0, epsilon = 1e-12);
        // reference order value from the error quotient formula (inputs
        // rounded to 5 decimals, so only ~4 digits of the order survive)
        let o = compute_order(&[3.34832, 0.88348], &[0.25, 0.125]);
        assert_relative_eq!(o[1].unwrap(), 1.92215, epsilon = 1e-4);
        // single element: one blank
        assert_eq!(compute_order(&[1.0], &[0.5]), vec![None]);
        // zero error: blank, not infinity
        let o = compute_order(&[1.0, 0.0], &[0.5, 0.25]);
        assert!(o[1].is_none());
    }

    #[test]
    fn zero_initial_data_gives_zero_cost_and_blank_orders() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE_TOML).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.initial_y = InitialData::Zero;
        cfg.initial_z = InitialData::Zero;
        cfg.t_final = 0.1;
        let table = run_convergence(&cfg).unwrap();
        for col in &table.error_columns {
            assert!(col.errors.iter().all(|&e| e == 0.0));
            assert!(col.orders.iter().all(|o| o.is_none()));
        }
        cfg.t_final = 0.05;
        let cost = run_cost(&cfg).unwrap();
        for (_, _, j) in &cost.rows {
            assert_relative_eq!(*j, 0.0, epsilon = 1e-25);
        }
    }

    #[test]
    fn omega_zero_degenerates_to_open_loop_with_notice() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE_TOML).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.params.omega = 0.0;
        cfg.levels = vec![2];
        cfg.t_final = 0.05;
        let runs = run_simulation(&cfg, true, None, None).unwrap();
        assert_eq!(runs.len(), 1);
        assert!(runs[0].notice.is_some());
        assert_eq!(runs[0].unstable_count, 0);
        assert!(runs[0].series.control_energy.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn energy_csv_and_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE_TOML).unwrap();
        cfg.output_dir = dir.path().to_path_buf();
        cfg.levels = vec![2];
        cfg.t_final = 0.1;
        let runs = run_simulation(&cfg, false, None, None).unwrap();
        assert_eq!(runs.len(), 1);
        let csv = std::fs::read_to_string(dir.path().join("energy_uncontrolled_L2.csv")).unwrap();
        assert!(csv.starts_with("t,state_energy,control_energy"));
        assert_eq!(csv.lines().count(), 102); // header + 101 steps
        let cp = read_checkpoint(&dir.path().join("checkpoint_uncontrolled_L2_t0.1.txt")).unwrap();
        assert_eq!(cp.len(), 18);
        let (_, stored) = runs[0].series.checkpoint_at(0.1).unwrap();
        assert_eq!(&cp, stored);
    }
}
