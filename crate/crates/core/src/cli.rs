//! The `patternfit` command line: `refit`, `gradcheck`, `report` and
//! `validate`.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 numerical
//! failure, 3 I/O error. Log verbosity comes from `PATTERNFIT_LOG`
//! (`error`, `warn`, `info`, `debug`; default `warn`).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConfigFile, RunConfig};
use crate::error::{Error, Result};
use crate::gradcheck::{run_scope, Scope};
use crate::mesh::{assemble_sim_mesh, BodyMesh, TargetDrape};
use crate::obj::obj_string;
use crate::pattern::{
    detect_flip_symmetry, garment_spec_to_json, load_garment_spec_with_report, validate,
    GarmentSpec,
};
use crate::refit::{refit, resolve_pins, CageRig, RefitResult};
use crate::report::{loss_csv_string, read_loss_csv, RunReport};

pub const LOG_ENV: &str = "PATTERNFIT_LOG";

pub const GARMENT_FILE: &str = "refitted_garment.json";
pub const DRAPE_FILE: &str = "drape.obj";
pub const LOSS_FILE: &str = "loss_history.csv";
pub const QUALITY_FILE: &str = "quality_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "patternfit", version, about = "Refit sewing patterns to a target drape")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refit the garment named in a run (or batch) config.
    Refit {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; batch runs write to one subdirectory each.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Load and check every input, then write the manifest only.
        #[arg(long)]
        dry_run: bool,
        /// Refits to run at once in a batch.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference gradient checks on the built-in fixtures.
    Gradcheck {
        /// cage, adjoint, losses or end2end; all when omitted.
        #[arg(long)]
        scope: Option<String>,
    },
    /// Summarize a refit output directory.
    Report { dir: PathBuf },
    /// Load and check every input of a config without refitting.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parse `args`, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Refit {
            config,
            out,
            dry_run,
            jobs,
        } => cmd_refit(&config, out.as_deref(), dry_run, jobs),
        Command::Gradcheck { scope } => cmd_gradcheck(scope.as_deref()),
        Command::Report { dir } => cmd_report(&dir).map(|s| print!("{s}")),
        Command::Validate { config } => cmd_validate(&config),
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub dry_run: bool,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Write through a temporary file in the same directory and rename it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Stopwatch(Vec<StageTiming>, Instant);

impl Stopwatch {
    fn new() -> Self {
        Stopwatch(Vec::new(), Instant::now())
    }

    fn lap(&mut self, stage: &str) {
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: self.1.elapsed().as_secs_f64(),
        });
        self.1 = Instant::now();
    }
}

// ---------------------------------------------------------------------------
// Inputs

/// Everything a run reads, loaded and checked.
pub struct LoadedRun {
    pub spec: GarmentSpec,
    pub body: Option<BodyMesh>,
    pub target: TargetDrape,
    pub warnings: Vec<String>,
}

/// Load every input of `run` and check that they fit together.
pub fn load_run(run: &RunConfig) -> Result<LoadedRun> {
    run.validate()?;
    let (spec, report) = load_garment_spec_with_report(&run.garment)?;
    validate(&spec).map_err(|e| with_file(e, &run.garment))?;
    let body = run
        .body
        .as_ref()
        .map(|p| BodyMesh::load(p, run.body_margin))
        .transpose()?;
    let mut mesh = assemble_sim_mesh(&spec)?;
    let target = TargetDrape::load(&mesh, &run.target, run.target_areas.as_deref())
        .map_err(|e| with_file(e, &run.target))?;
    mesh.pin(&resolve_pins(&mesh, &run.refit.pinned)?);
    CageRig::build(&spec, run.refit.cage_margin_fraction, run.refit.cage_max_vertices)?;
    Ok(LoadedRun {
        spec,
        body,
        target,
        warnings: report.warnings,
    })
}

/// Prefix validation and dimension errors with the file they came from.
fn with_file(e: Error, path: &Path) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        Error::Dimension(m) => Error::Dimension(format!("{}: {m}", path.display())),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// refit

/// Run one refit and write its outputs to `out`. Returns the manifest.
pub fn refit_run(run: &RunConfig, out: &Path, dry_run: bool) -> Result<RunManifest> {
    let mut clock = Stopwatch::new();
    let inputs = run
        .inputs()
        .into_iter()
        .map(sha256_file)
        .collect::<Result<Vec<_>>>()?;
    let loaded = load_run(run)?;
    clock.lap("load");
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut outputs = Vec::new();
    if !dry_run {
        let result = refit(&loaded.spec, loaded.body.as_ref(), &loaded.target, &run.refit)?;
        clock.lap("refit");
        write_outputs(out, &result, &loaded)?;
        outputs = [GARMENT_FILE, DRAPE_FILE, LOSS_FILE, QUALITY_FILE]
            .map(String::from)
            .to_vec();
        clock.lap("write");
    }
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        dry_run,
        config: run.clone(),
        inputs,
        timings: clock.0,
        outputs,
    };
    manifest.config.out = Some(out.to_path_buf());
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

fn write_outputs(out: &Path, result: &RefitResult, loaded: &LoadedRun) -> Result<()> {
    let mesh = assemble_sim_mesh(&result.spec)?;
    let faces: Vec<[usize; 3]> = mesh.triangles.iter().map(|t| t.verts).collect();
    let report = RunReport::new(result, &loaded.spec, &loaded.target)?;
    write_atomic(&out.join(GARMENT_FILE), garment_spec_to_json(&result.spec).as_bytes())?;
    write_atomic(&out.join(DRAPE_FILE), obj_string(&result.drape, &faces).as_bytes())?;
    write_atomic(&out.join(LOSS_FILE), loss_csv_string(&result.history).as_bytes())?;
    write_atomic(&out.join(QUALITY_FILE), report.to_json().as_bytes())
}

pub fn cmd_refit(config: &Path, out: Option<&Path>, dry_run: bool, jobs: usize) -> Result<()> {
    let cfg = ConfigFile::load(config)?;
    let base_dir = cfg.path.parent().unwrap_or(Path::new("."));
    if !cfg.batch {
        let run = &cfg.runs[0];
        let dir = out
            .map(Path::to_path_buf)
            .or_else(|| run.out.clone())
            .unwrap_or_else(|| base_dir.join("out"));
        refit_run(run, &dir, dry_run)?;
        println!("{}", dir.display());
        return Ok(());
    }

    let root = out.map(Path::to_path_buf).unwrap_or_else(|| base_dir.join("out"));
    let dirs: Vec<PathBuf> = cfg
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.out.clone().unwrap_or_else(|| {
                root.join(r.name.clone().unwrap_or_else(|| format!("run{i}")))
            })
        })
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<()>>>> =
        Mutex::new((0..cfg.runs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cfg.runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cfg.runs.len() {
                    break;
                }
                info!("batch run {i} -> {}", dirs[i].display());
                let r = refit_run(&cfg.runs[i], &dirs[i], dry_run).map(|_| ());
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut first_err = None;
    for (dir, r) in dirs.iter().zip(results.into_inner().unwrap()) {
        match r.expect("every run finished") {
            Ok(()) => println!("ok     {}", dir.display()),
            Err(e) => {
                println!("failed {}: {e}", dir.display());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

// ---------------------------------------------------------------------------
// gradcheck, report, validate

pub fn cmd_gradcheck(scope: Option<&str>) -> Result<()> {
    let scopes = match scope {
        Some(s) => vec![s.parse::<Scope>()?],
        None => vec![Scope::Cage, Scope::Losses, Scope::Adjoint, Scope::End2End],
    };
    let mut failed = Vec::new();
    for scope in scopes {
        for r in run_scope(scope)? {
            println!("{r}");
            if !r.passed() {
                failed.push(format!("{} {}", r.scope, r.name));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Adjoint {
            step: 0,
            message: format!("gradient check failed: {}", failed.join(", ")),
        })
    }
}

/// Text summary of a refit output directory.
pub fn cmd_report(dir: &Path) -> Result<String> {
    for f in [GARMENT_FILE, DRAPE_FILE, LOSS_FILE, QUALITY_FILE, MANIFEST_FILE] {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing from result directory"),
            ));
        }
    }
    let report = RunReport::load(dir.join(QUALITY_FILE))?;
    let history = read_loss_csv(dir.join(LOSS_FILE))?;
    let manifest = RunManifest::load(dir.join(MANIFEST_FILE))?;
    let mut s = format!(
        "{} {} | {} iterations logged\n\n",
        manifest.tool,
        manifest.version,
        history.len()
    );
    s.push_str(&report.render());
    Ok(s)
}

pub fn cmd_validate(config: &Path) -> Result<()> {
    let cfg = ConfigFile::load(config)?;
    for (i, run) in cfg.runs.iter().enumerate() {
        let loaded = load_run(run)?;
        let spec = &loaded.spec;
        let name = run.name.clone().unwrap_or_else(|| format!("run{i}"));
        println!(
            "{name}: {} panels, {} triangles, {} seams, {} symmetry pairs",
            spec.panels.len(),
            spec.triangle_count(),
            spec.seams.len(),
            spec.effective_symmetry_pairs().len()
        );
        for w in &loaded.warnings {
            println!("  warning: {w}");
        }
        for d in detect_flip_symmetry(spec, 1e-3) {
            println!("  detected flip symmetry {} / {}", d.pair.panel_a, d.pair.panel_b);
        }
    }
    println!("ok");
    Ok(())
}
