//! Task dispatch, manifest and exit-status mapping.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use steklov_core::assembly::{
    surface_rotated_gradient, tangential_trace, Discretization, ProblemParams, TraceField,
};
use steklov_core::calderon::{
    calderon_apply, direct_solve, expand_trace, solve_dual, solve_neumann_spectral, solve_rotated_dirichlet,
    solve_tangential_dirichlet, trace_norm, CalderonError, DualTraceData,
};
use steklov_core::deflation::{
    build_deflated_space, deflated_steklov_spectrum, dirichlet_modes_below, verify_gap,
};
use steklov_core::mesh::gmsh::parse_gmsh;
use steklov_core::mesh::{generate_ball_mesh, generate_cube_mesh, mesh_stats, Mesh, Point};
use steklov_core::spectral::{
    aux_spectra, group_multiplicities, select_eta, steklov_spectrum, zero_in_sigma_check, SpectrumCount, SteklovBasis,
};

use crate::config::{ConfigError, Count, DataSpec, Domain, Eta, Format, RunConfig, Task};
use crate::converge::{run_study, LevelResult};
use crate::expr::{parse_polynomial, Polynomial};
use crate::output::{csv_bytes, num, vtk_bytes, write_atomic, Artifacts};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Test fields drawn by the dual-solve pairing check.
const PAIRING_FIELDS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input data: {0}")]
    Data(String),
    #[error("{msg}", msg = numerical_message(.0))]
    Numerical(#[from] steklov_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Read { .. }) => EXIT_IO,
            RunError::Config(_) | RunError::Data(_) => EXIT_CONFIG,
            RunError::Numerical(_) => EXIT_NUMERICAL,
            RunError::Io { .. } => EXIT_IO,
        }
    }

    fn manifest_entry(&self) -> Value {
        match self {
            RunError::Numerical(e) => json!({"module": e.module(), "name": e.name(), "message": e.to_string()}),
            RunError::Data(m) => json!({"module": "cli", "name": "RunError::Data", "message": m}),
            RunError::Config(e) => json!({"module": "cli", "name": "RunError::Config", "message": e.to_string()}),
            RunError::Io { .. } => json!({"module": "cli", "name": "RunError::Io", "message": self.to_string()}),
        }
    }
}

fn numerical_message(e: &steklov_core::Error) -> String {
    format!("{} ({}): {e}", e.name(), e.module())
}

fn numerical<E: Into<steklov_core::Error>>(e: E) -> RunError {
    RunError::Numerical(e.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory against which relative paths in the config are resolved.
    pub base_dir: PathBuf,
}

impl RunOptions {
    pub fn for_config(cfg: &RunConfig, config_path: Option<&Path>, out: Option<PathBuf>) -> Self {
        let base_dir = config_path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let out_dir = out.unwrap_or_else(|| base_dir.join(&cfg.output.dir));
        Self { out_dir, base_dir }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub manifest: Value,
}

/// Executes one configured task and writes its artifacts plus `manifest.json`
/// into the output directory. The manifest is written on numerical failure
/// too, carrying the originating module error.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let mut manifest = Map::new();
    manifest.insert("tool".into(), json!("steklov"));
    manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    manifest.insert("task".into(), json!(cfg.task.name()));
    manifest.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    let mut artifacts = Artifacts::default();
    let result = execute(cfg, opts, &mut manifest, &mut artifacts);
    let manifest_path = opts.out_dir.join("manifest.json");
    match result {
        Ok(()) => {
            let mut files = artifacts.write_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
            manifest.insert("status".into(), json!("ok"));
            manifest.insert("files".into(), json!(artifacts.names().collect::<Vec<_>>()));
            let manifest = Value::Object(manifest);
            write_atomic(&manifest_path, &json_bytes(&manifest)).map_err(io_err(&manifest_path))?;
            files.push(manifest_path);
            Ok(RunSummary { files, manifest })
        }
        Err(e) => {
            if !matches!(e, RunError::Io { .. }) {
                manifest.insert("status".into(), json!("error"));
                manifest.insert("error".into(), e.manifest_entry());
                let manifest = Value::Object(manifest);
                write_atomic(&manifest_path, &json_bytes(&manifest)).map_err(io_err(&manifest_path))?;
            }
            Err(e)
        }
    }
}

pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json serializes");
    b.push(b'\n');
    b
}

pub fn load_mesh(domain: &Domain, opts: &RunOptions) -> Result<Mesh, RunError> {
    match domain {
        Domain::Cube { n, side } => generate_cube_mesh(*n, *side).map_err(numerical),
        Domain::Ball { refinement } => generate_ball_mesh(*refinement).map_err(numerical),
        Domain::Gmsh { path } => {
            let p = opts.resolve(path);
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            parse_gmsh(&text).map_err(numerical)
        }
    }
}

fn spectrum_count(c: Count) -> SpectrumCount {
    match c {
        Count::All => SpectrumCount::All,
        Count::First(k) => SpectrumCount::First(k),
    }
}

fn resolve_params(cfg: &RunConfig, disc: &Discretization, manifest: &mut Map<String, Value>) -> Result<ProblemParams, RunError> {
    let p = cfg.params;
    let (eta, mode) = match p.eta {
        Eta::Value(e) => (e, "fixed"),
        Eta::Auto => (select_eta(&disc.reduced, p.alpha, p.theta).map_err(numerical)?, "auto"),
    };
    manifest.insert("eta".into(), json!(eta));
    manifest.insert("eta_mode".into(), json!(mode));
    ProblemParams::new(p.alpha, p.theta, eta).map_err(numerical)
}

fn execute(
    cfg: &RunConfig,
    opts: &RunOptions,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) -> Result<(), RunError> {
    if cfg.task == Task::Converge {
        return converge_task(cfg, opts, manifest, out);
    }
    let mesh = load_mesh(&cfg.domain, opts)?;
    manifest.insert("mesh".into(), serde_json::to_value(mesh_stats(&mesh)).expect("stats serialize"));
    let disc = Discretization::new(mesh).map_err(RunError::Numerical)?;
    manifest.insert(
        "dofs".into(),
        json!({
            "ambient": disc.forms.num_dofs(),
            "constrained": disc.reduced.dim(),
            "interior": disc.reduced.n_interior(),
            "boundary": disc.reduced.n_boundary(),
        }),
    );
    if cfg.debug.dump_matrices {
        dump_matrices(&disc, out);
    }
    let count = spectrum_count(cfg.count);
    match cfg.task {
        Task::Steklov => {
            let params = resolve_params(cfg, &disc, manifest)?;
            let basis = steklov_spectrum(&disc.reduced, &params, count).map_err(numerical)?;
            record_spectrum(cfg, &disc, &basis, manifest, out);
        }
        Task::AuxSpectra | Task::SigmaCheck => aux_task(cfg, &disc, count, manifest, out)?,
        Task::SolveNeumann | Task::SolveDirichlet | Task::Calderon | Task::DualSolve => {
            let params = resolve_params(cfg, &disc, manifest)?;
            let basis = steklov_spectrum(&disc.reduced, &params, count).map_err(numerical)?;
            record_spectrum_summary(&basis, cfg.tolerances.multiplicity, manifest);
            let data = cfg.data.as_ref().expect("validated");
            match cfg.task {
                Task::DualSolve => dual_task(cfg, &disc, &basis, data, opts, manifest, out)?,
                task => {
                    let f = trace_data(data, &disc, &basis, opts)?;
                    trace_task(cfg, task, &disc, &basis, &f, manifest, out)?;
                }
            }
        }
        Task::Deflate => deflate_task(cfg, &disc, count, manifest, out)?,
        Task::Converge => unreachable!(),
    }
    Ok(())
}

fn dump_matrices(disc: &Discretization, out: &mut Artifacts) {
    let f = &disc.forms;
    for (name, m) in [
        ("curl_curl", &f.curl_curl),
        ("div_div", &f.div_div),
        ("mass", &f.mass),
        ("boundary_mass", &f.boundary_mass),
        ("constraint_basis", disc.space.basis()),
    ] {
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).expect("in-memory write");
        out.add(format!("{name}.mtx"), buf);
    }
}

fn spectrum_csv(basis: &SteklovBasis) -> Vec<u8> {
    csv_bytes(
        &["n", "lambda", "mu", "residual"],
        (0..basis.len()).map(|i| {
            vec![(i + 1).to_string(), num(basis.lambdas[i]), num(basis.mu[i]), num(basis.residuals[i])]
        }),
    )
}

fn record_spectrum_summary(basis: &SteklovBasis, mult_tol: f64, manifest: &mut Map<String, Value>) {
    let groups = group_multiplicities(&basis.lambdas, mult_tol);
    let repeated: Vec<Value> =
        groups.iter().filter(|g| g.1 > 1).map(|&(l, m)| json!({"lambda": l, "multiplicity": m})).collect();
    manifest.insert(
        "spectrum".into(),
        json!({
            "count": basis.len(),
            "complete": basis.is_complete(),
            "lambda_first": basis.lambdas.first(),
            "lambda_last": basis.lambdas.last(),
            "negative": basis.lambdas.iter().filter(|&&l| l < 0.0).count(),
            "distinct": groups.len(),
            "repeated_groups": repeated,
        }),
    );
    let max_res = basis.residuals.iter().cloned().fold(0.0, f64::max);
    manifest.insert("residuals".into(), json!({"max": max_res}));
}

fn record_spectrum(
    cfg: &RunConfig,
    disc: &Discretization,
    basis: &SteklovBasis,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) {
    record_spectrum_summary(basis, cfg.tolerances.multiplicity, manifest);
    if cfg.output.wants(Format::Csv) {
        out.add("spectrum.csv", spectrum_csv(basis));
    }
    if cfg.output.wants(Format::Vtk) {
        let fields: Vec<(String, Vec<Point>)> = (0..basis.len().min(cfg.output.vtk_modes))
            .map(|n| (format!("mode_{}", n + 1), disc.space.to_ambient(basis.mode(n).as_slice())))
            .collect();
        out.add("modes.vtk", vtk_bytes(&disc.mesh, "steklov modes", &fields));
    }
}

fn values_csv(values: &[f64]) -> Vec<u8> {
    csv_bytes(&["n", "value"], values.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), num(*v)]))
}

fn aux_task(
    cfg: &RunConfig,
    disc: &Discretization,
    count: SpectrumCount,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) -> Result<(), RunError> {
    let theta = cfg.params.theta;
    let aux = aux_spectra(disc, theta, count, cfg.tolerances.magnetic)?;
    let mag = &aux.magnetic;
    let summary = json!({
        "dirichlet": {"count": aux.dirichlet.values.len(), "first": aux.dirichlet.values.first()},
        "neumann": {"count": aux.neumann.values.len(), "second": aux.neumann.values.get(1)},
        "magnetic": {
            "count": mag.values.len(),
            "first": mag.values.first(),
            "candidates": mag.candidates,
            "best_div_ratio": mag.best_ratio,
            "warning": mag.warning,
        },
    });
    if cfg.task == Task::SigmaCheck {
        let d = zero_in_sigma_check(cfg.params.alpha, theta, &aux, cfg.tolerances.sigma);
        let verdict = if d.risky { "risky" } else { "safe" };
        manifest.insert(
            "sigma_check".into(),
            json!({
                "verdict": verdict,
                "alpha": cfg.params.alpha,
                "tolerance": cfg.tolerances.sigma,
                "diagnostic": d,
            }),
        );
        manifest.insert("aux".into(), summary);
        return Ok(());
    }
    manifest.insert("aux".into(), summary);
    if cfg.output.wants(Format::Csv) {
        out.add("dirichlet.csv", values_csv(&aux.dirichlet.values));
        out.add("neumann.csv", values_csv(&aux.neumann.values));
        out.add(
            "magnetic.csv",
            csv_bytes(
                &["n", "value", "div_ratio"],
                mag.values
                    .iter()
                    .zip(&mag.div_ratios)
                    .enumerate()
                    .map(|(i, (v, r))| vec![(i + 1).to_string(), num(*v), num(*r)]),
            ),
        );
    }
    Ok(())
}

fn psi_values(disc: &Discretization, psi: &Polynomial) -> Vec<f64> {
    disc.boundary
        .vertices
        .iter()
        .map(|&v| {
            let p = disc.mesh.vertices()[v];
            psi.eval([p.x, p.y, p.z])
        })
        .collect()
}

fn read_csv_rows(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
        if rec.len() != columns {
            return Err(RunError::Data(format!(
                "{}: record {} has {} fields, expected {columns}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RunError::Data(format!("{}: record {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn row_index(x: f64, what: &str) -> Result<usize, RunError> {
    if x < 0.0 || x.fract() != 0.0 {
        return Err(RunError::Data(format!("{what} must be a nonnegative integer, got {x}")));
    }
    Ok(x as usize)
}

/// Trace data on the boundary of `disc`. CSV files list `vertex,fx,fy,fz` with
/// zero-based mesh vertex indices; the normal component is dropped and
/// unlisted boundary vertices get zero.
pub fn trace_data(
    spec: &DataSpec,
    disc: &Discretization,
    basis: &SteklovBasis,
    opts: &RunOptions,
) -> Result<TraceField, RunError> {
    let frames = disc.space.frames();
    match spec {
        DataSpec::BasisIndex(n) => {
            if *n > basis.len() {
                return Err(RunError::Data(format!("basis_index {n} exceeds the {} computed modes", basis.len())));
            }
            Ok(basis.trace(n - 1))
        }
        DataSpec::RotatedGradient { psi } => {
            let poly = parse_polynomial(psi).map_err(|e| RunError::Data(format!("psi: {e}")))?;
            let g = surface_rotated_gradient(&disc.mesh, &disc.boundary, frames, &psi_values(disc, &poly))
                .map_err(numerical)?;
            Ok(g.field)
        }
        DataSpec::Csv(path) => {
            let p = opts.resolve(path);
            let mut vectors = vec![Point::zeros(); disc.boundary.vertices.len()];
            for row in read_csv_rows(&p, 4)? {
                let v = row_index(row[0], "vertex")?;
                let i = disc
                    .boundary
                    .local_index(v)
                    .ok_or_else(|| RunError::Data(format!("vertex {v} is not a boundary vertex")))?;
                vectors[i] = Point::new(row[1], row[2], row[3]);
            }
            Ok(TraceField::from_ambient(frames, &vectors))
        }
        DataSpec::Coefficients(_) => Err(RunError::Data("coefficient data is only accepted by dual-solve".into())),
    }
}

/// Dual data as coefficients `c_1, c_2, …`, zero-padded to the basis size. CSV
/// files list `n,c` with one-based `n`.
pub fn dual_data(spec: &DataSpec, basis: &SteklovBasis, opts: &RunOptions) -> Result<DualTraceData, RunError> {
    let len = basis.len();
    let mut c = DVector::zeros(len);
    let too_many = |got| numerical(CalderonError::TooManyCoefficients { got, len });
    match spec {
        DataSpec::BasisIndex(n) => {
            if *n > len {
                return Err(too_many(*n));
            }
            c[n - 1] = 1.0;
        }
        DataSpec::Coefficients(v) => {
            if v.len() > len {
                return Err(too_many(v.len()));
            }
            c.rows_mut(0, v.len()).copy_from_slice(v);
        }
        DataSpec::Csv(path) => {
            for row in read_csv_rows(&opts.resolve(path), 2)? {
                let n = row_index(row[0], "n")?;
                if n == 0 {
                    return Err(RunError::Data("coefficient index n is one-based".into()));
                }
                if n > len {
                    return Err(too_many(n));
                }
                c[n - 1] = row[1];
            }
        }
        DataSpec::RotatedGradient { .. } => {
            return Err(RunError::Data("dual-solve takes coefficient data".into()));
        }
    }
    Ok(DualTraceData::new(c))
}

fn expansion_csv(basis: &SteklovBasis, coeffs: &DVector<f64>) -> Vec<u8> {
    csv_bytes(
        &["n", "lambda", "c_n"],
        (0..basis.len()).map(|i| vec![(i + 1).to_string(), num(basis.lambdas[i]), num(coeffs[i])]),
    )
}

fn field_csv(mesh: &Mesh, field: &[Point]) -> Vec<u8> {
    csv_bytes(
        &["vertex", "x", "y", "z", "ux", "uy", "uz"],
        mesh.vertices().iter().zip(field).enumerate().map(|(v, (p, u))| {
            vec![v.to_string(), num(p.x), num(p.y), num(p.z), num(u.x), num(u.y), num(u.z)]
        }),
    )
}

fn boundary_csv(disc: &Discretization, f: &TraceField) -> Vec<u8> {
    let amb = f.ambient_all();
    csv_bytes(
        &["vertex", "fx", "fy", "fz"],
        disc.boundary.vertices.iter().zip(&amb).map(|(v, a)| vec![v.to_string(), num(a.x), num(a.y), num(a.z)]),
    )
}

fn energy(disc: &Discretization, params: &ProblemParams, u: &DVector<f64>) -> f64 {
    disc.reduced.operator(params).bilinear(u.as_slice(), u.as_slice())
}

fn relative_energy_gap(disc: &Discretization, params: &ProblemParams, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a - b;
    (energy(disc, params, &d) / energy(disc, params, b).max(f64::MIN_POSITIVE)).sqrt()
}

fn add_solution(
    cfg: &RunConfig,
    disc: &Discretization,
    name: &str,
    u: &DVector<f64>,
    vtk: &mut Vec<(String, Vec<Point>)>,
    out: &mut Artifacts,
) {
    let field = disc.space.to_ambient(u.as_slice());
    if cfg.output.wants(Format::Csv) {
        out.add(format!("{name}.csv"), field_csv(&disc.mesh, &field));
    }
    vtk.push((name.to_string(), field));
}

fn trace_task(
    cfg: &RunConfig,
    task: Task,
    disc: &Discretization,
    basis: &SteklovBasis,
    f: &TraceField,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) -> Result<(), RunError> {
    let bm = disc.reduced.boundary_block_mass();
    let e = expand_trace(basis, f).map_err(numerical)?;
    let mut report = Map::new();
    report.insert("data_l2_norm".into(), json!(f.l2_norm(&bm)));
    report.insert("trace_norm_half".into(), json!(trace_norm(basis, &e, 0.5)));
    if cfg.output.wants(Format::Csv) {
        out.add("expansion.csv", expansion_csv(basis, &e.coeffs));
    }
    let mut vtk = Vec::new();
    match task {
        Task::SolveNeumann => {
            let u = solve_neumann_spectral(basis, &e).map_err(numerical)?;
            let div = disc.reduced.div_div.bilinear(u.as_slice(), u.as_slice());
            let l2 = disc.reduced.mass.bilinear(u.as_slice(), u.as_slice());
            report.insert("div_ratio".into(), json!((div / l2).sqrt()));
            if basis.is_complete() {
                let direct = direct_solve(&disc.reduced, &basis.params, f).map_err(numerical)?;
                report.insert("direct_energy_gap".into(), json!(relative_energy_gap(disc, &basis.params, &u, &direct)));
            }
            add_solution(cfg, disc, "solution", &u, &mut vtk, out);
        }
        Task::SolveDirichlet => {
            let ut = solve_tangential_dirichlet(basis, f).map_err(numerical)?;
            let ur = solve_rotated_dirichlet(basis, f).map_err(numerical)?;
            let back_t = tangential_trace(&disc.space, ut.as_slice());
            let back_r = tangential_trace(&disc.space, ur.as_slice()).rotate();
            let scale = f.coords().amax().max(f64::MIN_POSITIVE);
            report.insert("tangential_roundtrip".into(), json!((back_t.coords() - f.coords()).amax() / scale));
            report.insert("rotated_roundtrip".into(), json!((back_r.coords() - f.coords()).amax() / scale));
            add_solution(cfg, disc, "solution_tangential", &ut, &mut vtk, out);
            add_solution(cfg, disc, "solution_rotated", &ur, &mut vtk, out);
        }
        Task::Calderon => {
            let c = calderon_apply(basis, &e).map_err(numerical)?;
            report.insert("image_l2_norm".into(), json!(c.l2_norm(&bm)));
            if cfg.output.wants(Format::Csv) {
                out.add("calderon.csv", boundary_csv(disc, &c));
            }
            vtk.push(("data".into(), f.ambient_on_mesh()));
            vtk.push(("calderon".into(), c.ambient_on_mesh()));
        }
        _ => unreachable!(),
    }
    if cfg.output.wants(Format::Vtk) {
        out.add("solution.vtk", vtk_bytes(&disc.mesh, task.name(), &vtk));
    }
    manifest.insert("report".into(), Value::Object(report));
    Ok(())
}

fn dual_task(
    cfg: &RunConfig,
    disc: &Discretization,
    basis: &SteklovBasis,
    data: &DataSpec,
    opts: &RunOptions,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) -> Result<(), RunError> {
    let f = dual_data(data, basis, opts)?;
    let u = solve_dual(basis, &f).map_err(numerical)?;
    let s0 = disc.reduced.operator(&basis.params.with_eta(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.tolerances.seed);
    let mut worst = 0.0f64;
    for _ in 0..PAIRING_FIELDS {
        let phi: Vec<f64> = (0..disc.reduced.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let lhs = s0.bilinear(u.as_slice(), &phi);
        let d = expand_trace(basis, &tangential_trace(&disc.space, &phi)).map_err(numerical)?;
        let rhs = -f.pairing(&d);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    }
    manifest.insert(
        "report".into(),
        json!({
            "dual_norm_minus_half": f.norm(basis, -0.5),
            "pairing_fields": PAIRING_FIELDS,
            "pairing_max_relative_error": worst,
        }),
    );
    if cfg.output.wants(Format::Csv) {
        out.add("expansion.csv", expansion_csv(basis, &f.coeffs));
    }
    let mut vtk = Vec::new();
    add_solution(cfg, disc, "solution", &u, &mut vtk, out);
    if cfg.output.wants(Format::Vtk) {
        out.add("solution.vtk", vtk_bytes(&disc.mesh, "dual-solve", &vtk));
    }
    Ok(())
}

fn deflate_task(
    cfg: &RunConfig,
    disc: &Discretization,
    count: SpectrumCount,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) -> Result<(), RunError> {
    let (alpha, theta) = (cfg.params.alpha, cfg.params.theta);
    let deflation = dirichlet_modes_below(&disc.reduced, alpha, theta, cfg.tolerances.deflation_modes)
        .map_err(numerical)?;
    let deflated = build_deflated_space(&disc.space, &disc.reduced, &deflation).map_err(numerical)?;
    let gap = verify_gap(&deflated, alpha, theta).map_err(numerical)?;
    let basis = match cfg.params.eta {
        Eta::Auto => deflated_steklov_spectrum(&deflated, &deflation, count).map_err(numerical)?,
        Eta::Value(eta) => {
            let p = ProblemParams::new(alpha, theta, eta).map_err(numerical)?;
            steklov_spectrum(&deflated.reduced, &p, count).map_err(numerical)?
        }
    };
    manifest.insert("eta".into(), json!(basis.eta()));
    manifest.insert("eta_mode".into(), json!(if matches!(cfg.params.eta, Eta::Auto) { "auto" } else { "fixed" }));
    manifest.insert(
        "deflation".into(),
        json!({
            "n": deflation.dim(),
            "dirichlet_below_alpha": deflation.values,
            "next_dirichlet": deflation.next_value,
            "eta": basis.eta(),
            "gap_estimate": gap,
            "dim_deflated": deflated.dim(),
            "dim_constrained": disc.reduced.dim(),
        }),
    );
    record_spectrum_summary(&basis, cfg.tolerances.multiplicity, manifest);
    if cfg.output.wants(Format::Csv) {
        out.add("spectrum.csv", spectrum_csv(&basis));
    }
    if cfg.output.wants(Format::Vtk) {
        let fields: Vec<(String, Vec<Point>)> = (0..basis.len().min(cfg.output.vtk_modes))
            .map(|n| (format!("mode_{}", n + 1), deflated.space.to_ambient(basis.mode(n).as_slice())))
            .collect();
        out.add("modes.vtk", vtk_bytes(&disc.mesh, "deflated steklov modes", &fields));
    }
    Ok(())
}

/// `ψ = x² − y` unless the data spec names another potential.
pub const DEFAULT_PSI: &str = "x^2 - y";

fn converge_task(
    cfg: &RunConfig,
    opts: &RunOptions,
    manifest: &mut Map<String, Value>,
    out: &mut Artifacts,
) -> Result<(), RunError> {
    let spec = cfg.converge.as_ref().expect("validated");
    let psi_text = match &cfg.data {
        Some(DataSpec::RotatedGradient { psi }) => psi.as_str(),
        _ => DEFAULT_PSI,
    };
    let psi = parse_polynomial(psi_text).map_err(|e| RunError::Data(format!("psi: {e}")))?;
    let names: Vec<&str> = spec.quantities.iter().map(|q| q.name()).collect();
    let write_level = |r: &LevelResult| {
        let values: Map<String, Value> = names.iter().zip(&r.values).map(|(n, v)| (n.to_string(), json!(v))).collect();
        let v = json!({"level": r.level, "h": r.h, "num_vertices": r.num_vertices, "values": values});
        write_atomic(&opts.out_dir.join(format!("converge_level_{}.json", r.level)), &json_bytes(&v))
    };
    let (levels, tables) = run_study(&cfg.domain, &spec.levels, &spec.quantities, &cfg.params, &psi, write_level)?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    if cfg.output.wants(Format::Csv) {
        let rows = tables.iter().flat_map(|t| {
            t.rows.iter().map(move |r| {
                vec![
                    t.quantity.to_string(),
                    r.level.to_string(),
                    num(r.h),
                    num(r.value),
                    opt(r.error),
                    opt(r.order),
                    t.reliable.to_string(),
                ]
            })
        });
        out.add("converge.csv", csv_bytes(&["quantity", "level", "h", "value", "error", "order", "reliable"], rows));
    }
    manifest.insert("levels".into(), json!(levels.iter().map(|l| l.level).collect::<Vec<_>>()));
    manifest.insert("converge".into(), serde_json::to_value(&tables).expect("tables serialize"));
    Ok(())
}
