//! The four commands: gen-data, train, sweep, report.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use qre_core::arch::Architecture;
use qre_core::data::{generate_synthetic, load_ppm_dir, load_qrds, split, Dataset};
use qre_core::ensemble::{load_from_manifest, write_manifest, EnsembleModel, ManifestEntry};
use qre_core::eval::{sweep, SweepMeta};
use qre_core::schedule::make_cycle_plan;
use qre_core::trainer::{train_baseline, train_gspecialist, TrainConfig, TrainRun};
use qre_core::weights::save_params;

use crate::config::RunConfig;
use crate::report::{parse_sweep_csv, render_svg};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Gspecialist,
    Baseline,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Gspecialist => "gspecialist",
            TrainMode::Baseline => "baseline",
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read and parse the config, returning the raw bytes too (they feed the
/// config digest recorded with sweeps). A seed given on the command line
/// overrides the config seed everywhere.
fn load_config(path: &Path, seed_override: Option<u64>) -> Result<(RunConfig, Vec<u8>), CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::config(format!("config {} is not UTF-8", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok((cfg, bytes))
}

/// Output files require their directory to exist already; a bad path is a
/// configuration mistake, caught before any work starts.
fn check_out_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() && !parent.is_dir() {
            return Err(CliError::config(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::config("config key `data`: required for this command"))?;
    let ds = if path.is_dir() {
        load_ppm_dir(path)?
    } else {
        load_qrds(path)?
    };
    Ok(ds)
}

pub fn cmd_gen_data(
    config_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let (cfg, _) = load_config(config_path, seed_override)?;
    check_out_parent(out)?;
    let dataset = generate_synthetic(&cfg.synth_config())?;
    let bytes = qre_core::data::encode_qrds(&dataset)?;
    fs::write(out, &bytes).map_err(|e| CliError {
        code: 3,
        message: format!("cannot write {}: {e}", out.display()),
    })?;
    println!(
        "wrote {} samples across {} classes to {}",
        dataset.len(),
        dataset.num_classes(),
        out.display()
    );
    println!("dataset digest: sha256:{}", sha256_hex(&bytes));
    Ok(())
}

pub fn cmd_train(
    config_path: &Path,
    mode: TrainMode,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let (cfg, _) = load_config(config_path, seed_override)?;
    let dataset = load_dataset(&cfg)?;
    let (train_set, _test_set) = split(&dataset, cfg.test_fraction, cfg.seed)?;

    let (h, w, c) = train_set.dims().expect("split keeps datasets non-empty");
    let arch = match &cfg.architecture {
        Some(a) => a.clone(),
        None => Architecture::default_cnn(c, h, w, train_set.num_classes())?,
    };
    let plan = make_cycle_plan(cfg.cycle_families()?, cfg.epochs_per_cycle, cfg.alpha0)?;
    let train_cfg = TrainConfig {
        arch,
        batch_size: cfg.batch_size,
        momentum: cfg.momentum,
        seed: cfg.seed,
        policy: cfg.mix_policy(),
        plan,
    };

    let run: TrainRun = match mode {
        TrainMode::Gspecialist => train_gspecialist(&train_set, &train_cfg)?,
        TrainMode::Baseline => train_baseline(&train_set, &train_cfg)?,
    };

    fs::create_dir_all(out_dir).map_err(|e| CliError {
        code: 3,
        message: format!("cannot create {}: {e}", out_dir.display()),
    })?;

    let mut entries = Vec::new();
    for snapshot in run.ensemble.snapshots() {
        let file_name = format!("snapshot_{}.qrwt", snapshot.cycle_index);
        save_params(&snapshot.params, &out_dir.join(&file_name))?;
        entries.push(ManifestEntry {
            path: file_name,
            cycle_index: snapshot.cycle_index,
            specialty: snapshot.specialty,
            final_train_loss: snapshot.final_train_loss,
        });
    }
    let manifest_path = out_dir.join(format!("{}.manifest", mode.name()));
    write_manifest(&entries, &manifest_path)?;
    let log_path = out_dir.join("train_log.csv");
    fs::write(&log_path, run.log.to_csv()).map_err(|e| CliError {
        code: 3,
        message: format!("cannot write {}: {e}", log_path.display()),
    })?;

    println!(
        "trained {} ensemble: {} snapshots over {} iterations on {} samples",
        mode.name(),
        run.ensemble.num_members(),
        run.log.rows.len(),
        train_set.len()
    );
    for snapshot in run.ensemble.snapshots() {
        println!(
            "  cycle {} ({}): final train loss {:.6}",
            snapshot.cycle_index,
            snapshot.specialty.name(),
            snapshot.final_train_loss
        );
    }
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

pub fn cmd_sweep(
    config_path: &Path,
    manifests: &[PathBuf],
    out_csv: &Path,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let (cfg, config_bytes) = load_config(config_path, seed_override)?;
    check_out_parent(out_csv)?;
    let dataset = load_dataset(&cfg)?;
    let (_train_set, test_set) = split(&dataset, cfg.test_fraction, cfg.seed)?;

    let mut models: Vec<(String, EnsembleModel)> = Vec::new();
    for path in manifests {
        let tag = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if tag.is_empty() || tag.contains(',') {
            return Err(CliError::config(format!(
                "manifest {} must have a comma-free file stem to use as its model tag",
                path.display()
            )));
        }
        if models.iter().any(|(t, _)| *t == tag) {
            return Err(CliError::config(format!("duplicate model tag {tag:?}")));
        }
        let model = load_from_manifest(path)?;
        models.push((tag, model));
    }

    let meta = SweepMeta {
        seed: cfg.seed,
        config_digest: sha256_hex(&config_bytes),
    };
    let report = sweep(&models, &test_set, &cfg.sweep_grid(), cfg.topk, cfg.seed, meta)?;
    let csv = report.to_csv();
    fs::write(out_csv, &csv).map_err(|e| CliError {
        code: 3,
        message: format!("cannot write {}: {e}", out_csv.display()),
    })?;
    println!(
        "swept {} model(s) over {} grid point(s) on {} test images",
        models.len(),
        report.rows.len() / models.len(),
        test_set.len()
    );
    println!("wrote {} rows to {}", report.rows.len(), out_csv.display());
    println!(
        "seed: {}  config digest: sha256:{}",
        report.meta.seed, report.meta.config_digest
    );
    Ok(())
}

pub fn cmd_report(csv_path: &Path, out_svg: &Path) -> Result<(), CliError> {
    check_out_parent(out_svg)?;
    let text = fs::read_to_string(csv_path).map_err(|e| CliError {
        code: 3,
        message: format!("cannot read {}: {e}", csv_path.display()),
    })?;
    let rows = parse_sweep_csv(&text)?;
    let svg = render_svg(&rows);
    fs::write(out_svg, &svg).map_err(|e| CliError {
        code: 3,
        message: format!("cannot write {}: {e}", out_svg.display()),
    })?;
    let polylines = svg.matches("<polyline").count();
    println!(
        "rendered {} rows into {} polyline(s) at {}",
        rows.len(),
        polylines,
        out_svg.display()
    );
    Ok(())
}
