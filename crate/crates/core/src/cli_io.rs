//! Run configuration, field output and the `run` / `convergence` / `inspect`
//! commands behind the command-line driver.
//!
//! The configuration is a TOML file; see the README for the schema. Command
//! line flags are applied on top of it through [`Overrides`].

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::Deserialize;

use crate::assembly::{assemble_rhs, FeSpace, Loads, NoLoads, Scheme, StressPair};
use crate::cg::{acceleration, CgSolver, TimeGrid};
use crate::dg::{choose_penalty, trace_constant, DgOperators, DgSolver, PenaltyMode};
use crate::error::Error;
use crate::materials::{Material, MaterialTable};
use crate::mesh::{load_mesh, rectangle, refine_uniform, Mesh};
use crate::scalar::{Point, Tensor};
use crate::verification::{
    convergence_study, inf_sup_constant, CachedLoads, DtPolicy, ErrorReport, InitialData, ManufacturedCase,
    StartupPairs, StudyConfig, ZeroVector,
};

/// Largest stress space for which `inspect` computes the (dense) inf-sup constant.
pub const INF_SUP_DOF_LIMIT: usize = 3000;
/// `convergence` fails when the final 𝔖 rate falls below `k − RATE_GATE_SLACK`.
pub const RATE_GATE_SLACK: f64 = 0.3;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// The discretization or a solver failed (exit 3).
    Solver(Error),
    /// The observed convergence rate is too low (exit 4).
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Gate(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(e) => write!(f, "solver error: {e}"),
            CliError::Gate(m) => write!(f, "convergence gate failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn solver_err(e: Error) -> CliError {
    match e {
        Error::Config(m) => CliError::Config(m),
        e => CliError::Solver(e),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Solver(Error::Io(e))
}

/// Mesh source: a file, or the structured rectangle generator.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSpec {
    /// Native or Gmsh (`.msh`) mesh, relative to the configuration file.
    pub file: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// Subdomain 1 left of this abscissa, 2 right of it.
    pub split_x: Option<f64>,
    /// Uniform refinements applied after loading.
    pub refine: usize,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { file: None, nx: 4, ny: 4, x: [0.0, 1.0], y: [0.0, 1.0], split_x: Some(0.5), refine: 0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MaterialPreset {
    /// Elastic subdomain 1, viscoelastic subdomain 2.
    Composite,
    /// Both subdomains elastic.
    Elastic,
}

/// Either a preset or an explicit table keyed by subdomain id.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSpec {
    pub preset: Option<MaterialPreset>,
    #[serde(default)]
    pub subdomain: BTreeMap<String, Material<f64>>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub mode: PenaltyMode,
    pub a: Option<f64>,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self { mode: PenaltyMode::Auto, a: None }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DataCase {
    /// The built-in manufactured solution with its loads and initial data.
    #[default]
    Manufactured,
    /// Zero loads and zero initial data.
    Zero,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub case: DataCase,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Field dump every this many steps (0 disables dumps).
    pub every: usize,
    pub vtk: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), every: 10, vtk: true }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSpec {
    pub levels: usize,
    /// Step policy; the scheme default when absent.
    pub dt: Option<DtPolicy>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self { levels: 4, dt: None }
    }
}

/// Everything a command needs.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub order: usize,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    /// Number of steps `L`; exclusive with `dt`.
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub materials: MaterialsSpec,
    #[serde(default)]
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_final_time() -> f64 {
    1.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Cg,
            order: 1,
            final_time: 1.0,
            steps: None,
            dt: None,
            mesh: MeshSpec::default(),
            materials: MaterialsSpec { preset: Some(MaterialPreset::Composite), subdomain: BTreeMap::new() },
            penalty: PenaltySpec::default(),
            data: DataSpec::default(),
            output: OutputSpec::default(),
            convergence: ConvergenceSpec::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub scheme: Option<Scheme>,
    pub order: Option<usize>,
    pub levels: Option<usize>,
    pub dt: Option<f64>,
    pub penalty: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(config_err)
    }

    /// Reads a file; relative paths inside it are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    /// Applies the overrides and validates the result.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.scheme {
            self.scheme = s;
        }
        if let Some(k) = o.order {
            self.order = k;
        }
        if let Some(l) = o.levels {
            self.convergence.levels = l;
        }
        if let Some(dt) = o.dt {
            self.dt = Some(dt);
            self.steps = None;
            self.convergence.dt = Some(DtPolicy::Fixed { dt });
        }
        if let Some(a) = o.penalty {
            self.penalty = PenaltySpec { mode: PenaltyMode::Fixed, a: Some(a) };
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks the scalar fields; mesh and material consistency is checked
    /// when the discretization is built.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if !(1..=3).contains(&self.order) {
            problems.push(format!("order must be 1, 2 or 3, got {}", self.order));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            problems.push(format!("final_time must be positive, got {}", self.final_time));
        }
        match (self.steps, self.dt) {
            (Some(_), Some(_)) => problems.push("give either steps or dt, not both".into()),
            (Some(0), None) => problems.push("steps must be positive".into()),
            (None, Some(dt)) if !(dt > 0.0 && dt.is_finite()) => problems.push(format!("dt must be positive, got {dt}")),
            _ => {}
        }
        if self.penalty.mode == PenaltyMode::Fixed && !self.penalty.a.is_some_and(|a| a > 0.0) {
            problems.push("fixed penalty mode needs a positive value a".into());
        }
        match (&self.materials.preset, self.materials.subdomain.is_empty()) {
            (Some(_), false) => problems.push("materials: give either a preset or a subdomain table, not both".into()),
            (None, true) => problems.push("materials: no preset and no subdomain table".into()),
            _ => {}
        }
        if self.mesh.file.is_none() && (self.mesh.nx == 0 || self.mesh.ny == 0) {
            problems.push("mesh: nx and ny must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems.join("; ")))
        }
    }

    pub fn material_table(&self) -> Result<MaterialTable<f64>, CliError> {
        if let Some(p) = self.materials.preset {
            return Ok(match p {
                MaterialPreset::Composite => MaterialTable::reference_composite(),
                MaterialPreset::Elastic => MaterialTable::reference_elastic(),
            });
        }
        let mut entries = BTreeMap::new();
        for (key, m) in &self.materials.subdomain {
            let id: usize = key.parse().map_err(|_| config_err(format!("materials: subdomain id {key:?} is not an integer")))?;
            entries.insert(id, *m);
        }
        MaterialTable::new(entries).map_err(config_err)
    }

    /// The mesh, with every subdomain checked against the material table.
    pub fn build_mesh(&self, materials: &MaterialTable<f64>) -> Result<Mesh<f64>, CliError> {
        let s = &self.mesh;
        let mut mesh = match &s.file {
            Some(f) => load_mesh(&self.base_dir.join(f)).map_err(config_err)?,
            None => rectangle(s.nx, s.ny, s.x, s.y, s.split_x),
        };
        for _ in 0..s.refine {
            mesh = refine_uniform(&mesh);
        }
        mesh.check_subdomains(|j| materials.contains(j)).map_err(config_err)?;
        Ok(mesh)
    }

    pub fn build_space(&self) -> Result<FeSpace<f64>, CliError> {
        let materials = self.material_table()?;
        let mesh = self.build_mesh(&materials)?;
        FeSpace::new(mesh, materials, self.order).map_err(config_err)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output.dir)
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (`1` is deterministic).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(config_err)?;
    Ok(pool.install(f))
}

/// One cell-sampled output field.
#[derive(Clone, Debug, PartialEq)]
pub enum CellField {
    Scalar(String, Vec<f64>),
    Vector(String, Vec<[f64; 2]>),
    Tensor(String, Vec<[f64; 4]>),
}

impl CellField {
    pub fn name(&self) -> &str {
        match self {
            CellField::Scalar(n, _) | CellField::Vector(n, _) | CellField::Tensor(n, _) => n,
        }
    }

    fn len(&self) -> usize {
        match self {
            CellField::Scalar(_, v) => v.len(),
            CellField::Vector(_, v) => v.len(),
            CellField::Tensor(_, v) => v.len(),
        }
    }
}

/// Legacy ASCII VTK unstructured grid with cell data. `title` must be a
/// single line.
pub fn write_vtk(mesh: &Mesh<f64>, title: &str, fields: &[CellField]) -> String {
    let ne = mesh.num_elements();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", v.x, v.y);
    }
    let _ = writeln!(s, "CELLS {ne} {}", 4 * ne);
    for el in mesh.elements() {
        let _ = writeln!(s, "3 {} {} {}", el[0], el[1], el[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "CELL_DATA {ne}");
    let _ = writeln!(s, "SCALARS subdomain int 1\nLOOKUP_TABLE default");
    for &j in mesh.subdomains() {
        let _ = writeln!(s, "{j}");
    }
    for f in fields {
        debug_assert_eq!(f.len(), ne, "field {} has the wrong length", f.name());
        match f {
            CellField::Scalar(n, v) => {
                let _ = writeln!(s, "SCALARS {n} double 1\nLOOKUP_TABLE default");
                for x in v {
                    let _ = writeln!(s, "{x:e}");
                }
            }
            CellField::Vector(n, v) => {
                let _ = writeln!(s, "VECTORS {n} double");
                for x in v {
                    let _ = writeln!(s, "{:e} {:e} 0", x[0], x[1]);
                }
            }
            CellField::Tensor(n, v) => {
                let _ = writeln!(s, "TENSORS {n} double");
                for x in v {
                    let _ = writeln!(s, "{:e} {:e} 0\n{:e} {:e} 0\n0 0 0", x[0], x[1], x[2], x[3]);
                }
            }
        }
    }
    s
}

/// Shape of a parsed legacy VTK file.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkSummary {
    pub title: String,
    pub points: usize,
    pub cells: usize,
    /// Cell data arrays as `(name, components, values)`.
    pub arrays: Vec<(String, usize, Vec<f64>)>,
}

/// Parses the subset of legacy VTK written by [`write_vtk`], checking every
/// count and number.
pub fn parse_vtk(text: &str) -> Result<VtkSummary, Error> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what}") });
    let bad = |line: usize, msg: String| Error::Parse { line, msg };
    let (l, head) = next("header")?;
    if !head.starts_with("# vtk DataFile Version") {
        return Err(bad(l, "not a legacy VTK file".into()));
    }
    let (_, title) = next("title")?;
    let title = title.to_string();
    let (l, fmt) = next("format")?;
    if fmt != "ASCII" {
        return Err(bad(l, format!("expected ASCII, got {fmt}")));
    }
    let (l, ds) = next("dataset")?;
    if ds != "DATASET UNSTRUCTURED_GRID" {
        return Err(bad(l, format!("unsupported dataset {ds}")));
    }
    let numbers = |l: usize, s: &str, n: usize| -> Result<Vec<f64>, Error> {
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(l, format!("bad number {t:?}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != n {
            return Err(bad(l, format!("expected {n} values, got {}", v.len())));
        }
        Ok(v)
    };
    let count = |l: usize, s: &str, key: &str, at: usize| -> Result<usize, Error> {
        let t: Vec<&str> = s.split_whitespace().collect();
        if t.first() != Some(&key) || t.len() <= at {
            return Err(bad(l, format!("expected {key}, got {s:?}")));
        }
        t[at].parse().map_err(|_| bad(l, format!("bad count in {s:?}")))
    };
    let (l, s) = next("POINTS")?;
    let points = count(l, s, "POINTS", 1)?;
    for _ in 0..points {
        let (l, s) = next("point")?;
        numbers(l, s, 3)?;
    }
    let (l, s) = next("CELLS")?;
    let cells = count(l, s, "CELLS", 1)?;
    for _ in 0..cells {
        let (l, s) = next("cell")?;
        let v = numbers(l, s, 4)?;
        if v[0] != 3.0 || v[1..].iter().any(|&i| i < 0.0 || i as usize >= points) {
            return Err(bad(l, format!("invalid triangle {s:?}")));
        }
    }
    let (l, s) = next("CELL_TYPES")?;
    if count(l, s, "CELL_TYPES", 1)? != cells {
        return Err(bad(l, "CELL_TYPES count differs from CELLS".into()));
    }
    for _ in 0..cells {
        let (l, s) = next("cell type")?;
        if s != "5" {
            return Err(bad(l, format!("unexpected cell type {s}")));
        }
    }
    let (l, s) = next("CELL_DATA")?;
    if count(l, s, "CELL_DATA", 1)? != cells {
        return Err(bad(l, "CELL_DATA count differs from CELLS".into()));
    }
    let mut arrays = Vec::new();
    while let Some((l, s)) = lines.next() {
        let t: Vec<&str> = s.split_whitespace().collect();
        let name = t.get(1).ok_or_else(|| bad(l, format!("array without a name: {s:?}")))?.to_string();
        let (rows, width, comps) = match t[0] {
            "SCALARS" => {
                let (l2, lt) = lines.next().ok_or_else(|| bad(l, "missing LOOKUP_TABLE".into()))?;
                if !lt.starts_with("LOOKUP_TABLE") {
                    return Err(bad(l2, "missing LOOKUP_TABLE".into()));
                }
                (1, 1, 1)
            }
            "VECTORS" => (1, 3, 3),
            "TENSORS" => (3, 3, 9),
            other => return Err(bad(l, format!("unsupported section {other}"))),
        };
        let mut values = Vec::with_capacity(cells * comps);
        for _ in 0..cells * rows {
            let (l, s) = lines.next().ok_or_else(|| bad(l, format!("array {name} is truncated")))?;
            values.extend(numbers(l, s, width)?);
        }
        arrays.push((name, comps, values));
    }
    Ok(VtkSummary { title, points, cells, arrays })
}

/// Discrete quantities sampled at the element centroids.
pub fn sample_fields(space: &FeSpace<f64>, p: &StressPair<f64>, r: &DVector<f64>, accel: &DVector<f64>) -> Vec<CellField> {
    let ne = space.mesh().num_elements();
    let c = Point::new(1.0 / 3.0, 1.0 / 3.0);
    let t4 = |t: Tensor<f64>| [t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]];
    let nl = space.dofmap().n_lower;
    let phi = space.basis().eval(&c);
    let mut gamma = Vec::with_capacity(ne);
    let mut wzeta = Vec::with_capacity(ne);
    let mut sigma = Vec::with_capacity(ne);
    let mut rot = Vec::with_capacity(ne);
    let mut acc = Vec::with_capacity(ne);
    for e in 0..ne {
        let w = space.material(e).omega;
        gamma.push(t4(space.eval_gamma(p, e, &c)));
        wzeta.push(t4(space.eval_zeta(p, e, &c) * w));
        sigma.push(t4(space.eval_stress(p, e, &c)));
        rot.push(space.eval_rotation(r, e, &c)[(0, 1)]);
        let o = 2 * nl * e;
        let comp = |a: usize| (0..nl).map(|l| accel[o + a * nl + l] * phi[l]).sum::<f64>();
        acc.push([comp(0), comp(1)]);
    }
    vec![
        CellField::Tensor("gamma".into(), gamma),
        CellField::Tensor("omega_zeta".into(), wzeta),
        CellField::Tensor("stress".into(), sigma),
        CellField::Scalar("rotation".into(), rot),
        CellField::Vector("acceleration".into(), acc),
    ]
}

/// Outcome of [`cmd_run`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub final_energy: f64,
    pub wall_seconds: f64,
    pub files: Vec<PathBuf>,
}

enum StepLoads<'c> {
    Cached(CachedLoads<f64>, &'c ManufacturedCase<f64>),
    Zero(DVector<f64>),
}

impl StepLoads<'_> {
    fn at(&self, t: f64) -> DVector<f64> {
        match self {
            StepLoads::Cached(c, _) => c.at(t),
            StepLoads::Zero(z) => z.clone(),
        }
    }

    fn pointwise(&self) -> &dyn Loads<f64> {
        match self {
            StepLoads::Cached(_, case) => *case,
            StepLoads::Zero(_) => &NoLoads,
        }
    }
}

struct Dumper<'a> {
    space: &'a FeSpace<f64>,
    dir: PathBuf,
    every: usize,
    vtk: bool,
    energy_csv: String,
    files: Vec<PathBuf>,
}

impl Dumper<'_> {
    fn observe(
        &mut self,
        k: usize,
        steps: usize,
        t: f64,
        energy: f64,
        jump: Option<f64>,
        state: (&StressPair<f64>, &DVector<f64>),
        loads: &StepLoads<'_>,
    ) -> Result<(), CliError> {
        match jump {
            Some(j) => writeln!(self.energy_csv, "{k},{t:e},{energy:e},{j:e}"),
            None => writeln!(self.energy_csv, "{k},{t:e},{energy:e}"),
        }
        .expect("writing to a String");
        let due = self.every > 0 && (k % self.every == 0 || k == steps);
        if !(self.vtk && due) {
            return Ok(());
        }
        let accel = acceleration(self.space, state.0, loads.pointwise(), t);
        let fields = sample_fields(self.space, state.0, state.1, &accel);
        let title = format!("step {k} time {t:e} energy {energy:e}");
        let path = self.dir.join(format!("fields_{k:06}.vtk"));
        std::fs::write(&path, write_vtk(self.space.mesh(), &title, &fields)).map_err(io_err)?;
        self.files.push(path);
        Ok(())
    }
}

/// Time loop with field dumps. The CFL warning (DG) and the summary line go
/// to `diag` and `out`.
pub fn cmd_run(cfg: &RunConfig, out: &mut dyn Write, diag: &mut dyn Write) -> Result<RunSummary, CliError> {
    let clock = Instant::now();
    cfg.validate()?;
    let space = cfg.build_space()?;
    let materials = space.materials().clone();
    let case = ManufacturedCase::reference(materials.clone());
    let zero = ZeroVector;
    let data = match cfg.data.case {
        DataCase::Manufactured => case.initial_data(),
        DataCase::Zero => InitialData { u0: &zero, u1: &zero, sigma0: &zero, a0: &zero, materials: &materials },
    };
    let starts = StartupPairs::new(&data);
    let startup = starts.startup();
    let loads = match cfg.data.case {
        DataCase::Manufactured => StepLoads::Cached(CachedLoads::new(&case, &space, cfg.scheme), &case),
        DataCase::Zero => StepLoads::Zero(assemble_rhs(&space, &NoLoads, 0.0, cfg.scheme)),
    };
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let mut dump = Dumper {
        space: &space,
        dir: dir.clone(),
        every: cfg.output.every,
        vtk: cfg.output.vtk,
        energy_csv: String::new(),
        files: Vec::new(),
    };
    let t_end = cfg.final_time;
    let grid_for = |dt: f64| TimeGrid::new(t_end, ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize);
    let (steps, dt, final_energy) = match cfg.scheme {
        Scheme::Cg => {
            let grid = match (cfg.steps, cfg.dt) {
                (Some(l), _) => TimeGrid::new(t_end, l),
                (None, Some(dt)) => grid_for(dt),
                (None, None) => TimeGrid::new(t_end, 100),
            }
            .map_err(config_err)?;
            dump.energy_csv.push_str("step,time,energy\n");
            let solver = CgSolver::new(&space, grid).map_err(solver_err)?;
            let mut s = solver.initialize(&startup, loads.pointwise()).map_err(solver_err)?;
            let mut energy = solver.energy(&s);
            dump.observe(s.k, grid.steps, grid.time(s.k), energy, None, (&s.p_curr, &s.r_curr), &loads)?;
            while s.k < grid.steps {
                s = solver.step(&s, &loads.at(grid.time(s.k))).map_err(solver_err)?;
                energy = solver.energy(&s);
                dump.observe(s.k, grid.steps, grid.time(s.k), energy, None, (&s.p_curr, &s.r_curr), &loads)?;
            }
            (grid.steps, grid.dt(), energy)
        }
        Scheme::Dg => {
            let penalty = choose_penalty(&space, cfg.penalty.mode, cfg.penalty.a).map_err(solver_err)?;
            let ops = DgOperators::new(&space, penalty).map_err(solver_err)?;
            let cfl = ops.estimate_cfl().map_err(solver_err)?;
            let grid = match (cfg.steps, cfg.dt) {
                (Some(l), _) => TimeGrid::new(t_end, l),
                (None, Some(dt)) => grid_for(dt),
                (None, None) => grid_for(0.5 * cfl.dt_max),
            }
            .map_err(config_err)?;
            dump.energy_csv.push_str("step,time,energy,jump\n");
            let solver = DgSolver::with_cfl(ops, grid, cfl).map_err(solver_err)?;
            if let Some(w) = solver.cfl_warning() {
                writeln!(diag, "{w}").map_err(io_err)?;
            }
            let mut s = solver.initialize(&startup, loads.pointwise()).map_err(solver_err)?;
            let (mut energy, jump) = solver.energy_and_jumps(&s);
            dump.observe(s.k, grid.steps, grid.time(s.k), energy, Some(jump), (&s.p_curr, &s.r_curr), &loads)?;
            while s.k < grid.steps {
                s = solver.step(&s, &loads.at(grid.time(s.k))).map_err(solver_err)?;
                let (e, j) = solver.energy_and_jumps(&s);
                energy = e;
                dump.observe(s.k, grid.steps, grid.time(s.k), energy, Some(j), (&s.p_curr, &s.r_curr), &loads)?;
            }
            (grid.steps, grid.dt(), energy)
        }
    };
    let csv = dir.join("energy.csv");
    std::fs::write(&csv, &dump.energy_csv).map_err(io_err)?;
    let mut files = dump.files;
    files.push(csv);
    let wall = clock.elapsed().as_secs_f64();
    writeln!(
        out,
        "run finished: scheme {} k {} steps {steps} dt {dt:e} final energy {final_energy:e} wall {wall:.2} s",
        cfg.scheme, cfg.order
    )
    .map_err(io_err)?;
    Ok(RunSummary { steps, dt, final_energy, wall_seconds: wall, files })
}

/// Convergence study on the manufactured case over `levels` refinements of
/// the configured mesh. Writes `convergence.csv` and prints the rate table;
/// fails with [`CliError::Gate`] when the final 𝔖 rate is below `k − 0.3`.
pub fn cmd_convergence(cfg: &RunConfig, parallel: bool, out: &mut dyn Write) -> Result<ErrorReport, CliError> {
    cfg.validate()?;
    if cfg.data.case != DataCase::Manufactured {
        return Err(CliError::Config("convergence studies need the manufactured data case".into()));
    }
    let materials = cfg.material_table()?;
    let base = cfg.build_mesh(&materials)?;
    let mut study = StudyConfig::new(cfg.scheme, cfg.order, cfg.convergence.levels, base);
    study.final_time = cfg.final_time;
    if let Some(p) = cfg.convergence.dt {
        study.dt = p;
    }
    study.penalty_mode = cfg.penalty.mode;
    study.penalty = cfg.penalty.a;
    study.parallel = parallel;
    let case = ManufacturedCase::reference(materials);
    let report = convergence_study(&study, &case).map_err(solver_err)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    std::fs::write(dir.join("convergence.csv"), report.to_csv()).map_err(io_err)?;
    write!(out, "{}", report.table()).map_err(io_err)?;
    let need = cfg.order as f64 - RATE_GATE_SLACK;
    match report.stress_rate() {
        Some(r) if r >= need => Ok(report),
        r => Err(CliError::Gate(format!("final stress rate {} is below {need:.2}", r.map_or("n/a".into(), |r| format!("{r:.3}"))))),
    }
}

/// Sizes and mesh-dependent constants of a configured discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct Inspection {
    pub elements: usize,
    pub stress_dofs: usize,
    pub zeta_dofs: usize,
    pub rotation_dofs: usize,
    pub trace_dofs: usize,
    /// `None` above [`INF_SUP_DOF_LIMIT`] stress dofs.
    pub inf_sup: Option<f64>,
    pub trace_constant: f64,
    /// Penalty threshold `a₀`.
    pub a0: f64,
    /// Penalty used by the DG scheme.
    pub penalty: f64,
    pub dt_max: f64,
}

impl fmt::Display for Inspection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "elements        {}", self.elements)?;
        writeln!(f, "stress dofs     {} (zeta {})", self.stress_dofs, self.zeta_dofs)?;
        writeln!(f, "rotation dofs   {}", self.rotation_dofs)?;
        writeln!(f, "trace dofs      {}", self.trace_dofs)?;
        match self.inf_sup {
            Some(b) => writeln!(f, "inf-sup         {b:.6}")?,
            None => writeln!(f, "inf-sup         skipped (more than {INF_SUP_DOF_LIMIT} stress dofs)")?,
        }
        writeln!(f, "C_tr            {:.6}", self.trace_constant)?;
        writeln!(f, "a0              {:.6}", self.a0)?;
        writeln!(f, "penalty a       {:.6}", self.penalty)?;
        writeln!(f, "dt_max (DG)     {:e}", self.dt_max)
    }
}

pub fn cmd_inspect(cfg: &RunConfig, out: &mut dyn Write) -> Result<Inspection, CliError> {
    cfg.validate()?;
    let space = cfg.build_space()?;
    let dm = space.dofmap();
    let inf_sup = if dm.n_stress() <= INF_SUP_DOF_LIMIT {
        Some(inf_sup_constant(&space).map_err(solver_err)?)
    } else {
        None
    };
    let c_tr = trace_constant(&space).map_err(solver_err)?;
    let a0 = space.materials().max_inv_rho() * (4.0 * c_tr * c_tr + 2.25);
    let penalty = choose_penalty(&space, cfg.penalty.mode, cfg.penalty.a).map_err(solver_err)?;
    let ops = DgOperators::new(&space, penalty).map_err(solver_err)?;
    let cfl = ops.estimate_cfl().map_err(solver_err)?;
    let ins = Inspection {
        elements: space.mesh().num_elements(),
        stress_dofs: dm.n_stress(),
        zeta_dofs: dm.n_zeta(),
        rotation_dofs: dm.n_rotation(),
        trace_dofs: dm.n_trace(),
        inf_sup,
        trace_constant: c_tr,
        a0,
        penalty: penalty.a,
        dt_max: cfl.dt_max,
    };
    write!(out, "{ins}").map_err(io_err)?;
    Ok(ins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: Scheme, dir: &Path) -> RunConfig {
        let mut cfg = RunConfig { scheme, ..RunConfig::default() };
        cfg.mesh.nx = 2;
        cfg.mesh.ny = 2;
        cfg.final_time = 0.2;
        cfg.steps = Some(4);
        cfg.output.dir = dir.to_path_buf();
        cfg.output.every = 2;
        cfg
    }

    #[test]
    fn parses_full_config() {
        let text = r#"
            scheme = "dg"
            order = 2
            final_time = 0.5
            dt = 0.01

            [mesh]
            nx = 3
            ny = 2
            split_x = 0.25

            [materials.subdomain.1]
            rho = 2.0
            omega = 0.0
            C = { lambda = 1.0, mu = 1.0 }
            D = { lambda = 1.0, mu = 1.0 }

            [materials.subdomain.2]
            rho = 1.0
            omega = 0.5
            C = { lambda = 1.0, mu = 0.5 }
            D = { lambda = 2.0, mu = 1.0 }

            [penalty]
            mode = "fixed"
            a = 20.0

            [data]
            case = "zero"

            [output]
            dir = "fields"
            every = 5

            [convergence]
            levels = 3
            dt = { kind = "cfl_fraction", fraction = 0.25 }
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scheme, Scheme::Dg);
        assert_eq!(cfg.order, 2);
        assert_eq!(cfg.mesh.nx, 3);
        assert_eq!(cfg.penalty.a, Some(20.0));
        assert_eq!(cfg.data.case, DataCase::Zero);
        assert_eq!(cfg.convergence.dt, Some(DtPolicy::CflFraction { fraction: 0.25 }));
        let table = cfg.material_table().unwrap();
        assert_eq!(table.get(1).unwrap().rho, 2.0);
        assert!(table.is_viscoelastic(2).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        for (text, needle) in [
            ("scheme = \"cg\"\norder = 4\n[materials]\npreset = \"composite\"", "order"),
            ("scheme = \"cg\"\norder = 1\nsteps = 10\ndt = 0.1\n[materials]\npreset = \"elastic\"", "either steps or dt"),
            ("scheme = \"cg\"\norder = 1", "materials"),
            ("scheme = \"dg\"\norder = 1\n[penalty]\nmode = \"fixed\"\n[materials]\npreset = \"elastic\"", "penalty"),
        ] {
            let err = RunConfig::from_toml(text).unwrap().validate().unwrap_err();
            assert_eq!(err.exit_code(), 2);
            assert!(err.to_string().contains(needle), "{err}");
        }
        let err = RunConfig::from_toml("scheme = \"fem\"\norder = 1").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_toml("scheme = \"cg\"\norder = 1\ncolour = 3").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn undefined_subdomain_is_a_config_error() {
        let mut cfg = RunConfig::default();
        cfg.materials = MaterialsSpec {
            preset: None,
            subdomain: [("1".to_string(), Material::elastic(1.0, crate::materials::Lame::new(1.0, 1.0)))].into(),
        };
        let err = cfg.build_space().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides {
            scheme: Some(Scheme::Dg),
            order: Some(2),
            levels: Some(5),
            dt: Some(0.01),
            penalty: Some(30.0),
            out: Some("elsewhere".into()),
        };
        let mut base = RunConfig::default();
        base.steps = Some(10);
        let cfg = base.with_overrides(&o).unwrap();
        assert_eq!((cfg.scheme, cfg.order, cfg.convergence.levels), (Scheme::Dg, 2, 5));
        assert_eq!((cfg.steps, cfg.dt), (None, Some(0.01)));
        assert_eq!(cfg.penalty, PenaltySpec { mode: PenaltyMode::Fixed, a: Some(30.0) });
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
        assert!(RunConfig::default().with_overrides(&Overrides { order: Some(0), ..Default::default() }).is_err());
    }

    #[test]
    fn vtk_round_trip() {
        let mesh = rectangle(2, 1, [0.0, 1.0], [0.0, 1.0], Some(0.5));
        let ne = mesh.num_elements();
        let fields = vec![
            CellField::Scalar("s".into(), (0..ne).map(|i| i as f64).collect()),
            CellField::Vector("v".into(), vec![[1.0, -2.0]; ne]),
            CellField::Tensor("t".into(), vec![[1.0, 2.0, 3.0, 4.0]; ne]),
        ];
        let text = write_vtk(&mesh, "demo", &fields);
        let got = parse_vtk(&text).unwrap();
        assert_eq!((got.points, got.cells, got.title.as_str()), (6, 4, "demo"));
        let names: Vec<_> = got.arrays.iter().map(|a| (a.0.as_str(), a.1)).collect();
        assert_eq!(names, vec![("subdomain", 1), ("s", 1), ("v", 3), ("t", 9)]);
        assert_eq!(got.arrays[1].2, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(&got.arrays[3].2[..9], &[1.0, 2.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(parse_vtk(&text.replace("CELL_TYPES 4", "CELL_TYPES 5")).is_err());
        assert!(parse_vtk(&text[..text.len() - 20]).is_err());
    }

    #[test]
    fn zero_run_dumps_zero_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Scheme::Cg, dir.path());
        cfg.data.case = DataCase::Zero;
        let (mut out, mut diag) = (Vec::new(), Vec::new());
        let sum = cmd_run(&cfg, &mut out, &mut diag).unwrap();
        assert_eq!(sum.final_energy, 0.0);
        assert!(String::from_utf8(out).unwrap().starts_with("run finished"));
        let vtks: Vec<_> = sum.files.iter().filter(|f| f.extension().is_some_and(|e| e == "vtk")).collect();
        assert_eq!(vtks.len(), 2);
        for f in vtks {
            let v = parse_vtk(&std::fs::read_to_string(f).unwrap()).unwrap();
            for (name, _, values) in &v.arrays[1..] {
                assert!(values.iter().all(|&x| x == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn cg_and_dg_final_energies_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut energies = Vec::new();
        for scheme in [Scheme::Cg, Scheme::Dg] {
            let mut cfg = small(scheme, dir.path());
            cfg.mesh.nx = 8;
            cfg.mesh.ny = 8;
            cfg.steps = None;
            cfg.output.vtk = false;
            if scheme == Scheme::Cg {
                cfg.steps = Some(40);
            }
            let s = cmd_run(&cfg, &mut Vec::new(), &mut Vec::new()).unwrap();
            energies.push(s.final_energy);
        }
        let rel = (energies[0] - energies[1]).abs() / energies[0];
        assert!(rel < 0.05, "{energies:?}");
    }

    #[test]
    fn dg_warns_above_cfl() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Scheme::Dg, dir.path());
        cfg.steps = Some(2);
        cfg.final_time = 2.0;
        cfg.output.vtk = false;
        let mut diag = Vec::new();
        let _ = cmd_run(&cfg, &mut Vec::new(), &mut diag);
        assert!(String::from_utf8(diag).unwrap().contains("exceeds the estimated DG stability limit"));
    }

    #[test]
    fn convergence_needs_three_levels() {
        let mut cfg = RunConfig::default();
        cfg.convergence.levels = 1;
        let err = cmd_convergence(&cfg, false, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("at least 3 levels"));
    }

    #[test]
    fn inspect_reports_sizes() {
        let mut cfg = RunConfig::default();
        cfg.mesh.nx = 1;
        cfg.mesh.ny = 1;
        cfg.mesh.split_x = None;
        cfg.materials.preset = Some(MaterialPreset::Elastic);
        let mut out = Vec::new();
        let ins = cmd_inspect(&cfg, &mut out).unwrap();
        assert_eq!(ins.elements, 2);
        assert_eq!(ins.zeta_dofs, 0);
        assert_eq!(ins.stress_dofs, 2 * 4 * 3);
        assert!(ins.inf_sup.unwrap() > 0.05);
        assert!(ins.a0 > 2.25 && ins.penalty >= ins.a0 && ins.dt_max > 0.0);
        assert!(String::from_utf8(out).unwrap().contains("inf-sup"));
    }

    #[test]
    fn inspect_estimates_are_stable_under_refinement() {
        let run = |n: usize| {
            let mut cfg = RunConfig::default();
            cfg.mesh.nx = n;
            cfg.mesh.ny = n;
            cmd_inspect(&cfg, &mut Vec::new()).unwrap()
        };
        let (a, b) = (run(2), run(4));
        assert!((a.trace_constant - b.trace_constant).abs() / a.trace_constant < 0.25);
        assert!((a.a0 - b.a0).abs() / a.a0 < 0.25);
        let (ia, ib) = (a.inf_sup.unwrap(), b.inf_sup.unwrap());
        assert!((ia - ib).abs() / ia < 0.25, "{ia} {ib}");
    }
}
