//! Experiment execution.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble_spatial, limit_operator, Coefficient, SpatialSystem};
use crate::error::{Error, Result};
use crate::harness::cache::{fingerprint, MatrixCache};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::export::{write_json, write_snapshot_csv};
use crate::harness::metrics::{asymmetry_norm, error_norm, fit_rate};
use crate::media::MediaSpec;
use crate::mesh::NestedMesh;
use crate::msfem::{homogenized_coefficient, BasisMode, BasisSet};
use crate::solvers::{
    heat_stepper, project_density, total_mass, Formulation, KineticState, ScalarState,
    StepperConfig, TransportStepper,
};
use crate::velocity::{VelocityMode, VelocitySystem};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where report and snapshots go; in-memory only when absent.
    pub out_dir: Option<PathBuf>,
    /// Matrix cache directory.
    pub cache_dir: Option<PathBuf>,
    /// Worker pool size for sweep members; the global pool when absent.
    pub threads: Option<usize>,
    /// Write CSV solution snapshots.
    pub write_snapshots: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub params: BTreeMap<String, serde_json::Value>,
    pub errors: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRecord {
    pub name: String,
    pub slope: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub rates: Vec<RateRecord>,
    pub warnings: Vec<String>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

impl RunReport {
    /// First error value recorded under `name`, in run order.
    pub fn error_series(&self, name: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.errors.get(name).copied())
            .collect()
    }

    pub fn rate(&self, name: &str) -> Option<&RateRecord> {
        self.rates.iter().find(|r| r.name == name)
    }
}

struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    cache: Option<MatrixCache>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<'a> Pipeline<'a> {
    fn new(cfg: &'a ExperimentConfig, opts: &'a RunOptions) -> Result<Self> {
        let cache = match &opts.cache_dir {
            Some(dir) => Some(MatrixCache::new(dir)?),
            None => None,
        };
        Ok(Pipeline {
            cfg,
            opts,
            cache,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    fn velocity_mode(&self) -> VelocityMode {
        if self.cfg.dimension == 1 {
            VelocityMode::Slab1d
        } else {
            VelocityMode::Circle2d
        }
    }

    fn velocity(&self) -> Result<VelocitySystem> {
        VelocitySystem::assemble(
            self.cfg.basis_order,
            self.cfg.quad_points(),
            self.velocity_mode(),
        )
    }

    fn mesh_descriptor(mesh: &NestedMesh) -> String {
        format!(
            "mesh:{}:{}:{}:{:x}:{:x}",
            mesh.dim(),
            mesh.coarse_cells(),
            mesh.refinement(),
            mesh.bounds(0).0.to_bits(),
            mesh.bounds(0).1.to_bits()
        )
    }

    fn system_key(&self, coeff_fp: &str, mesh: &NestedMesh, mode: BasisMode) -> String {
        fingerprint(&[
            coeff_fp,
            &Self::mesh_descriptor(mesh),
            mode.tag(),
            &format!("n:{}", self.cfg.basis_order),
            &format!("k:{}", self.cfg.quad_points()),
        ])
    }

    /// Multiscale system for the transport and heat solvers, through the
    /// cache when one is configured.
    fn media_system(
        &self,
        media: &MediaSpec,
        mesh: &NestedMesh,
    ) -> Result<(SpatialSystem, BasisSet)> {
        let key = self.system_key(&media.fingerprint_string(), mesh, BasisMode::Multiscale);
        if let Some(cache) = &self.cache {
            if let Some((sys, Some(basis))) = cache.load_spatial(&key)? {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok((sys, basis));
            }
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        let basis = BasisSet::multiscale(mesh, media)?;
        let sys = assemble_spatial(mesh, &basis, Coefficient::Media(media))?;
        if let Some(cache) = &self.cache {
            cache.store_spatial(&key, &sys, Some(&basis))?;
        }
        Ok((sys, basis))
    }

    /// Homogenized reference: hat basis with the constant tensor from the
    /// cell problem.
    fn homogenized_system(
        &self,
        media: &MediaSpec,
        mesh: &NestedMesh,
    ) -> Result<(SpatialSystem, [[f64; 2]; 2])> {
        let hom = homogenized_coefficient(media, self.cfg.cell_resolution)?;
        let coeff = Coefficient::Tensor(hom.a_hom);
        let key = self.system_key(&coeff.fingerprint_string(), mesh, BasisMode::Affine);
        if let Some(cache) = &self.cache {
            if let Some((sys, _)) = cache.load_spatial(&key)? {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok((sys, hom.a_hom));
            }
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        let basis = BasisSet::affine(mesh);
        let sys = assemble_spatial(mesh, &basis, coeff)?;
        if let Some(cache) = &self.cache {
            cache.store_spatial(&key, &sys, None)?;
        }
        Ok((sys, hom.a_hom))
    }

    fn steps(&self) -> usize {
        ((self.cfg.final_time / self.cfg.dt).round() as usize).max(1)
    }

    fn initial_density(&self) -> impl Fn(&[f64]) -> f64 + Copy + '_ {
        let kind = self.cfg.initial_density;
        let dim = self.cfg.dimension;
        move |x: &[f64]| kind.evaluate(dim, x)
    }

    fn run_transport(
        &self,
        spatial: &SpatialSystem,
        velocity: &VelocitySystem,
        mesh: &NestedMesh,
        eps: f64,
        formulation: Formulation,
    ) -> Result<(KineticState, f64)> {
        let start = Instant::now();
        let cfg = StepperConfig::new(eps, self.cfg.dt).with_formulation(formulation);
        let stepper = TransportStepper::new(spatial, velocity, cfg)?;
        let mut state = project_density(mesh, velocity, self.initial_density());
        for _ in 0..self.steps() {
            state = stepper.step(&state)?;
        }
        Ok((state, start.elapsed().as_secs_f64()))
    }

    fn run_heat(
        &self,
        mass: &faer::Mat<f64>,
        stiffness: &faer::Mat<f64>,
        mesh: &NestedMesh,
        factor: f64,
    ) -> Result<(ScalarState, f64)> {
        let start = Instant::now();
        let stepper = heat_stepper(mass, stiffness, self.cfg.dt, factor)?;
        let rho0 = self.initial_density();
        let mut state = ScalarState::new(
            (0..mesh.coarse_node_count())
                .map(|i| rho0(&mesh.coarse_node_coord(i)))
                .collect(),
        );
        for _ in 0..self.steps() {
            state = stepper.step(&state)?;
        }
        Ok((state, start.elapsed().as_secs_f64()))
    }

    fn snapshot(
        &self,
        name: &str,
        mesh: &NestedMesh,
        values: &[f64],
    ) -> Result<()> {
        if !self.opts.write_snapshots {
            return Ok(());
        }
        let Some(dir) = &self.opts.out_dir else {
            return Ok(());
        };
        let coords: Vec<[f64; 2]> = (0..values.len())
            .map(|i| {
                if values.len() == mesh.coarse_node_count() {
                    mesh.coarse_node_coord(i)
                } else {
                    mesh.fine_node_coord(i)
                }
            })
            .collect();
        write_snapshot_csv(
            &dir.join(format!("{name}.csv")),
            self.cfg.dimension,
            &coords,
            values,
        )
    }
}

/// Resolved reference mesh: coarse spacing at most `delta/4` AND materially
/// finer than the test grid (so the reference's own discretization error is
/// subdominant), fine spacing at most `delta/16` and no coarser than the test
/// grid's fine spacing. The base coarse nodes nest inside. The extra
/// refinement is 4x in 1D but only 2x minimum in 2D, where dense coarse
/// matrices grow with the fourth power of the multiplier.
fn resolved_mesh(
    dim: usize,
    base_cells: usize,
    base_refine: usize,
    delta: f64,
) -> Result<(NestedMesh, usize)> {
    let k_min = if dim == 1 { 4 } else { 2 };
    let k = ((8.0 / (delta * base_cells as f64)).ceil() as usize).max(k_min);
    let cells = base_cells * k;
    let refine = ((32.0 / (delta * cells as f64)).ceil() as usize)
        .max((base_cells * base_refine).div_ceil(cells))
        .max(1);
    Ok((NestedMesh::build(dim, cells, refine)?, k))
}

/// Restrict a nodal field on a mesh with `k`-times finer coarse grid to the
/// base coarse nodes.
fn restrict_to_base(values: &[f64], dim: usize, base_cells: usize, k: usize) -> Vec<f64> {
    if k == 1 {
        return values.to_vec();
    }
    let fine_cells = base_cells * k;
    let mut out = Vec::with_capacity(base_cells.pow(dim as u32));
    match dim {
        1 => {
            for i in 0..base_cells {
                out.push(values[i * k]);
            }
        }
        _ => {
            for j in 0..base_cells {
                for i in 0..base_cells {
                    out.push(values[(j * k) * fine_cells + i * k]);
                }
            }
        }
    }
    out
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let run = || run_inner(cfg, opts);
    let report = match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(run)?
        }
        None => run()?,
    };
    if let Some(dir) = &opts.out_dir {
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

fn run_inner(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let pipeline = Pipeline::new(cfg, opts)?;
    let mut warnings = cfg.warnings();
    let (runs, rates) = match cfg.kind {
        ExperimentKind::EpsSweep => eps_sweep(&pipeline, &mut warnings)?,
        ExperimentKind::DeltaSweep => delta_sweep(&pipeline, &mut warnings)?,
        ExperimentKind::ResolutionConsistency => resolution_consistency(&pipeline, &mut warnings)?,
        ExperimentKind::FormulationCompare => formulation_compare(&pipeline, &mut warnings)?,
        ExperimentKind::SingleRun => single_run(&pipeline, &mut warnings)?,
    };
    Ok(RunReport {
        config: cfg.clone(),
        runs,
        rates,
        warnings,
        cache_hits: pipeline.hits.load(Ordering::Relaxed),
        cache_misses: pipeline.misses.load(Ordering::Relaxed),
    })
}

/// Build matrices and populate the cache without solving.
pub fn assemble_only(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let pipeline = Pipeline::new(cfg, opts)?;
    let mut warnings = cfg.warnings();
    let mesh = NestedMesh::build(cfg.dimension, cfg.coarse_cells, cfg.refinement)?;
    let deltas: Vec<Option<f64>> = if cfg.deltas.is_empty() {
        vec![None]
    } else {
        cfg.deltas.iter().map(|&d| Some(d)).collect()
    };
    let mut runs = Vec::new();
    for delta in deltas {
        let media = cfg.media.build(cfg.dimension, delta)?;
        if let Some(w) = mesh.resolution_warning(media.delta()) {
            warnings.push(w);
        }
        let start = Instant::now();
        let (sys, _) = pipeline.media_system(&media, &mesh)?;
        let assemble_time = start.elapsed().as_secs_f64();
        let mut record = RunRecord {
            params: BTreeMap::from([(
                "delta".to_string(),
                serde_json::json!(media.delta()),
            )]),
            errors: BTreeMap::new(),
            timings: BTreeMap::from([("assemble_s".to_string(), assemble_time)]),
        };
        record.errors.insert(
            "matrix_rows".to_string(),
            sys.mass.nrows() as f64,
        );
        if cfg.kind == ExperimentKind::DeltaSweep {
            let t = Instant::now();
            pipeline.homogenized_system(&media, &mesh)?;
            record
                .timings
                .insert("homogenized_assemble_s".to_string(), t.elapsed().as_secs_f64());
        }
        runs.push(record);
    }
    Ok(RunReport {
        config: cfg.clone(),
        runs,
        rates: Vec::new(),
        warnings,
        cache_hits: pipeline.hits.load(Ordering::Relaxed),
        cache_misses: pipeline.misses.load(Ordering::Relaxed),
    })
}

fn eps_sweep(
    pipeline: &Pipeline<'_>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<RunRecord>, Vec<RateRecord>)> {
    let cfg = pipeline.cfg;
    let media = cfg.media.build(cfg.dimension, None)?;
    let mesh = NestedMesh::build(cfg.dimension, cfg.coarse_cells, cfg.refinement)?;
    if let Some(w) = mesh.resolution_warning(media.delta()) {
        warnings.push(w);
    }
    let velocity = pipeline.velocity()?;
    let (spatial, _basis) = pipeline.media_system(&media, &mesh)?;

    // Resolved heat reference on a nested finer grid.
    let (ref_mesh, k) =
        resolved_mesh(cfg.dimension, cfg.coarse_cells, cfg.refinement, media.delta())?;
    let (ref_sys, _) = pipeline.media_system(&media, &ref_mesh)?;
    let factor = pipeline.velocity_mode().diffusion_constant();
    let (heat_state, heat_time) =
        pipeline.run_heat(&ref_sys.mass, &ref_sys.stiffness, &ref_mesh, factor)?;
    let heat_on_base = restrict_to_base(&heat_state.coeffs, cfg.dimension, cfg.coarse_cells, k);
    pipeline.snapshot("heat_resolved", &mesh, &heat_on_base)?;

    let results: Result<Vec<(f64, RunRecord)>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let (state, wall) =
                pipeline.run_transport(&spatial, &velocity, &mesh, eps, Formulation::Symmetric)?;
            let rho = state.density();
            let err = error_norm(&rho, &heat_on_base, mesh.coarse_node_weight())?;
            pipeline.snapshot(&format!("density_eps_{eps:e}"), &mesh, &rho)?;
            let record = RunRecord {
                params: BTreeMap::from([("eps".to_string(), serde_json::json!(eps))]),
                errors: BTreeMap::from([("l2_vs_resolved_heat".to_string(), err)]),
                timings: BTreeMap::from([
                    ("transport_s".to_string(), wall),
                    ("reference_s".to_string(), heat_time),
                ]),
            };
            Ok((eps, record))
        })
        .collect();
    let results = results?;
    let pairs: Vec<(f64, f64)> = results
        .iter()
        .map(|(eps, r)| (*eps, r.errors["l2_vs_resolved_heat"]))
        .collect();
    let mut rates = Vec::new();
    if pairs.len() >= 3 {
        let (slope, residual) = fit_rate(&pairs)?;
        rates.push(RateRecord {
            name: "eps_convergence".to_string(),
            slope,
            residual,
        });
    }
    Ok((results.into_iter().map(|(_, r)| r).collect(), rates))
}

fn delta_sweep(
    pipeline: &Pipeline<'_>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<RunRecord>, Vec<RateRecord>)> {
    let cfg = pipeline.cfg;
    let mesh = NestedMesh::build(cfg.dimension, cfg.coarse_cells, cfg.refinement)?;
    let velocity = pipeline.velocity()?;
    let eps = cfg.epsilons[0];
    let factor = pipeline.velocity_mode().diffusion_constant();

    for &delta in &cfg.deltas {
        if let Some(w) = mesh.resolution_warning(delta) {
            warnings.push(w);
        }
    }
    let results: Result<Vec<(f64, RunRecord)>> = cfg
        .deltas
        .par_iter()
        .map(|&delta| {
            let media = cfg.media.build(cfg.dimension, Some(delta))?;
            let (spatial, _) = pipeline.media_system(&media, &mesh)?;
            let (state, wall) =
                pipeline.run_transport(&spatial, &velocity, &mesh, eps, Formulation::Symmetric)?;
            let rho = state.density();

            let (hom_sys, a_hom) = pipeline.homogenized_system(&media, &mesh)?;
            let (hom_state, hom_time) =
                pipeline.run_heat(&hom_sys.mass, &hom_sys.stiffness, &mesh, factor)?;
            let err = error_norm(&rho, &hom_state.coeffs, mesh.coarse_node_weight())?;
            pipeline.snapshot(&format!("density_delta_{delta:e}"), &mesh, &rho)?;
            pipeline.snapshot(&format!("hom_heat_delta_{delta:e}"), &mesh, &hom_state.coeffs)?;
            let record = RunRecord {
                params: BTreeMap::from([
                    ("delta".to_string(), serde_json::json!(delta)),
                    ("eps".to_string(), serde_json::json!(eps)),
                    ("a_hom_xx".to_string(), serde_json::json!(a_hom[0][0])),
                ]),
                errors: BTreeMap::from([("l2_vs_homogenized_heat".to_string(), err)]),
                timings: BTreeMap::from([
                    ("transport_s".to_string(), wall),
                    ("reference_s".to_string(), hom_time),
                ]),
            };
            Ok((delta, record))
        })
        .collect();
    let results = results?;
    let pairs: Vec<(f64, f64)> = results
        .iter()
        .map(|(d, r)| (*d, r.errors["l2_vs_homogenized_heat"]))
        .collect();
    let mut rates = Vec::new();
    if pairs.len() >= 3 {
        let (slope, residual) = fit_rate(&pairs)?;
        rates.push(RateRecord {
            name: "delta_convergence".to_string(),
            slope,
            residual,
        });
    }
    Ok((results.into_iter().map(|(_, r)| r).collect(), rates))
}

fn resolution_consistency(
    pipeline: &Pipeline<'_>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<RunRecord>, Vec<RateRecord>)> {
    let cfg = pipeline.cfg;
    let mut resolutions = cfg.resolutions.clone();
    resolutions.sort_unstable();
    let res_max = *resolutions.last().unwrap();
    let fine_total = cfg.refinement * res_max;
    let velocity = pipeline.velocity()?;
    let eps = cfg.epsilons[0];
    let media = cfg.media.build(cfg.dimension, None)?;

    let densities: Result<Vec<(usize, Vec<f64>, f64)>> = resolutions
        .par_iter()
        .map(|&res| {
            let mesh = NestedMesh::build(cfg.dimension, res, fine_total / res)?;
            let (spatial, _) = pipeline.media_system(&media, &mesh)?;
            let (state, wall) =
                pipeline.run_transport(&spatial, &velocity, &mesh, eps, Formulation::Symmetric)?;
            let rho = state.density();
            pipeline.snapshot(&format!("density_res_{res}"), &mesh, &rho)?;
            Ok((res, rho, wall))
        })
        .collect();
    let densities = densities?;
    let base = resolutions[0];
    if let Some(w) =
        NestedMesh::build(cfg.dimension, base, fine_total / base)?.resolution_warning(media.delta())
    {
        warnings.push(w);
    }

    let base_weight = NestedMesh::build(cfg.dimension, base, 1)?.coarse_node_weight();
    let mut runs = Vec::new();
    for window in densities.windows(2) {
        let (res_a, rho_a, wall_a) = &window[0];
        let (res_b, rho_b, _) = &window[1];
        let a = restrict_to_base(rho_a, cfg.dimension, base, res_a / base);
        let b = restrict_to_base(rho_b, cfg.dimension, base, res_b / base);
        let l2 = error_norm(&a, &b, base_weight)?;
        let max_dev = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        runs.push(RunRecord {
            params: BTreeMap::from([
                ("resolution".to_string(), serde_json::json!(res_a)),
                ("compared_to".to_string(), serde_json::json!(res_b)),
                ("eps".to_string(), serde_json::json!(eps)),
            ]),
            errors: BTreeMap::from([
                ("l2_shared_nodes".to_string(), l2),
                ("max_shared_nodes".to_string(), max_dev),
            ]),
            timings: BTreeMap::from([("transport_s".to_string(), *wall_a)]),
        });
    }
    Ok((runs, Vec::new()))
}

fn formulation_compare(
    pipeline: &Pipeline<'_>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<RunRecord>, Vec<RateRecord>)> {
    let cfg = pipeline.cfg;
    let media = cfg.media.build(cfg.dimension, None)?;
    let mesh = NestedMesh::build(cfg.dimension, cfg.coarse_cells, cfg.refinement)?;
    if let Some(w) = mesh.resolution_warning(media.delta()) {
        warnings.push(w);
    }
    let velocity = pipeline.velocity()?;
    let (spatial, _) = pipeline.media_system(&media, &mesh)?;
    let eps = cfg.epsilons[0];

    let runs: Result<Vec<(Formulation, Vec<f64>, f64)>> =
        [Formulation::Symmetric, Formulation::Asymmetric]
            .par_iter()
            .map(|&formulation| {
                let (state, wall) =
                    pipeline.run_transport(&spatial, &velocity, &mesh, eps, formulation)?;
                Ok((formulation, state.density(), wall))
            })
            .collect();
    let runs = runs?;
    let asym_of = |rho: &[f64]| -> (f64, f64, f64) {
        let ax = asymmetry_norm(rho, cfg.coarse_cells, cfg.dimension, 0);
        let ay = if cfg.dimension == 2 {
            asymmetry_norm(rho, cfg.coarse_cells, cfg.dimension, 1)
        } else {
            0.0
        };
        (ax, ay, ax.max(ay))
    };

    let mut records = Vec::new();
    let mut norms = BTreeMap::new();
    for (formulation, rho, wall) in &runs {
        let (ax, ay, amax) = asym_of(rho);
        let tag = match formulation {
            Formulation::Symmetric => "symmetric",
            Formulation::Asymmetric => "asymmetric",
        };
        norms.insert(tag.to_string(), amax);
        pipeline.snapshot(&format!("density_{tag}"), &mesh, rho)?;
        records.push(RunRecord {
            params: BTreeMap::from([
                ("formulation".to_string(), serde_json::json!(tag)),
                ("eps".to_string(), serde_json::json!(eps)),
                ("steps".to_string(), serde_json::json!(pipeline.steps())),
            ]),
            errors: BTreeMap::from([
                ("asymmetry_x".to_string(), ax),
                ("asymmetry_y".to_string(), ay),
                ("asymmetry".to_string(), amax),
            ]),
            timings: BTreeMap::from([("transport_s".to_string(), *wall)]),
        });
    }
    let sym = norms["symmetric"];
    let asym = norms["asymmetric"];
    let ratio = if sym > 0.0 { asym / sym } else { f64::INFINITY };
    if let Some(last) = records.last_mut() {
        last.errors.insert("asymmetry_ratio".to_string(), ratio);
    }
    if ratio < 10.0 {
        warnings.push(format!(
            "asymmetric formulation only broke mirror symmetry by {ratio:.2}x over the symmetric one"
        ));
    }
    Ok((records, Vec::new()))
}

fn single_run(
    pipeline: &Pipeline<'_>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<RunRecord>, Vec<RateRecord>)> {
    let cfg = pipeline.cfg;
    let media = cfg.media.build(cfg.dimension, None)?;
    let mesh = NestedMesh::build(cfg.dimension, cfg.coarse_cells, cfg.refinement)?;
    if let Some(w) = mesh.resolution_warning(media.delta()) {
        warnings.push(w);
    }
    let velocity = pipeline.velocity()?;
    let (spatial, basis) = pipeline.media_system(&media, &mesh)?;
    let eps = cfg.epsilons[0];
    let rho0 = pipeline.initial_density();

    let mass0 = total_mass(
        &spatial.mass,
        &(0..mesh.coarse_node_count())
            .map(|i| rho0(&mesh.coarse_node_coord(i)))
            .collect::<Vec<_>>(),
    );
    let (state, wall) =
        pipeline.run_transport(&spatial, &velocity, &mesh, eps, Formulation::Symmetric)?;
    let rho = state.density();
    let mass1 = total_mass(&spatial.mass, &rho);
    pipeline.snapshot("density", &mesh, &rho)?;
    let fine = basis.evaluate_on_fine(&mesh, &rho);
    pipeline.snapshot("density_fine", &mesh, &fine)?;

    // The limiting-scheme density is a cheap companion output.
    let d = limit_operator(&spatial)?;
    let lim = crate::solvers::limit_stepper(
        &spatial.mass,
        &d,
        cfg.dt,
        pipeline.velocity_mode().diffusion_constant(),
    )?;
    let mut lim_state = ScalarState::new(
        (0..mesh.coarse_node_count())
            .map(|i| rho0(&mesh.coarse_node_coord(i)))
            .collect(),
    );
    for _ in 0..pipeline.steps() {
        lim_state = lim.step(&lim_state)?;
    }
    let gap = error_norm(&rho, &lim_state.coeffs, mesh.coarse_node_weight())?;

    let record = RunRecord {
        params: BTreeMap::from([
            ("eps".to_string(), serde_json::json!(eps)),
            ("steps".to_string(), serde_json::json!(pipeline.steps())),
        ]),
        errors: BTreeMap::from([
            (
                "mass_drift_rel".to_string(),
                ((mass1 - mass0) / mass0).abs(),
            ),
            ("l2_vs_limit_scheme".to_string(), gap),
            (
                "density_min".to_string(),
                rho.iter().cloned().fold(f64::INFINITY, f64::min),
            ),
            (
                "density_max".to_string(),
                rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
        ]),
        timings: BTreeMap::from([("transport_s".to_string(), wall)]),
    };
    Ok((vec![record], Vec::new()))
}
