use std::fs;
use std::path::{Path, PathBuf};

use spdlrr::classify::MetricsReport;
use spdlrr::io::{self, ClassMapping, RunConfig};
use spdlrr::{dlrr, pipeline, superpixel, Error, HsiCube, LabelField, SuperpixelPartition};

use crate::ConfigArgs;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    NotConverged(String),
}

impl Failure {
    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::NotConverged(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParam(_) => Failure::Usage(e.to_string()),
            Error::NotConverged { .. } => Failure::NotConverged(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Merge `--config` with flags; flags win.
fn run_config(args: &ConfigArgs, extra: &[(&str, Option<String>)]) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            RunConfig::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let shared = [
        ("preset", &args.preset),
        ("cube", &args.cube),
        ("output", &args.output),
        ("lambda", &args.lambda),
        ("beta", &args.beta),
        ("mu0", &args.mu0),
        ("rho", &args.rho),
        ("mu_max", &args.mu_max),
        ("eps", &args.eps),
        ("max_iter", &args.max_iter),
    ];
    let flags = shared
        .into_iter()
        .map(|(k, v)| (k, v.as_deref()))
        .chain(extra.iter().map(|(k, v)| (*k, v.as_deref())));
    for (key, value) in flags {
        if let Some(value) = value {
            config.set(key, value).map_err(usage)?;
        }
    }
    Ok(config)
}

fn require(config: &RunConfig, keys: &[&str]) -> Outcome {
    let missing = config.missing(keys);
    if missing.is_empty() {
        return Ok(());
    }
    let flags: Vec<String> = missing
        .iter()
        .map(|k| format!("--{}", k.replace('_', "-")))
        .collect();
    Err(Failure::Usage(format!(
        "missing required option(s) {} (pass as flags or in --config); see --help",
        flags.join(", ")
    )))
}

fn output_dir(config: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = config.path("output").expect("checked by require");
    fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn load_cube(config: &RunConfig) -> Result<HsiCube, Failure> {
    let path = config.path("cube").expect("checked by require");
    io::load_cube(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_trace(path: &Path, trace: &dlrr::SolveTrace) -> Outcome {
    Ok(io::write_atomic(path, trace.to_csv().as_bytes())?)
}

pub fn decompose(
    args: &ConfigArgs,
    partition: Option<&Path>,
    normalize: bool,
    strict: bool,
) -> Outcome {
    let config = run_config(args, &[])?;
    require(&config, &["cube", "output"])?;
    let partition = partition
        .ok_or_else(|| Failure::Usage("missing required option --partition; see --help".into()))?;
    let params = config.pipeline_config().map_err(usage)?.dlrr;

    let mut cube = load_cube(&config)?;
    if normalize {
        cube = pipeline::normalize(&cube)?;
    }
    let raster = io::read_raster(partition)
        .map_err(|e| Failure::Data(format!("{}: {e}", partition.display())))?;
    if (raster.height, raster.width) != (cube.height, cube.width) {
        return Err(Failure::Data(format!(
            "partition is {}x{}, cube is {}x{}",
            raster.height, raster.width, cube.height, cube.width
        )));
    }
    let blocks = SuperpixelPartition::from_raw_labels(raster.height, raster.width, &raster.values)?
        .to_block_partition()?;
    let solution = dlrr::solve(&cube.pixels, &blocks, &params)?;

    let out = output_dir(&config)?;
    io::write_cube(
        &HsiCube::new(cube.height, cube.width, solution.l.clone())?,
        &out.join("L.json"),
        None,
    )?;
    io::write_cube(
        &HsiCube::new(cube.height, cube.width, solution.e.clone())?,
        &out.join("E.json"),
        None,
    )?;
    write_trace(&out.join("trace.csv"), &solution.trace)?;
    log::info!(
        "{} iterations, converged: {}",
        solution.iterations(),
        solution.converged
    );
    if !solution.converged {
        let message = format!(
            "decomposition did not converge in {} iterations",
            solution.iterations()
        );
        if strict {
            return Err(Failure::NotConverged(message));
        }
        log::warn!("{message}");
    }
    Ok(())
}

pub fn segment(args: &ConfigArgs, superpixels: Option<&str>) -> Outcome {
    let config = run_config(args, &[("superpixels", superpixels.map(str::to_string))])?;
    require(&config, &["cube", "output"])?;
    let target = config.pipeline_config().map_err(usage)?.initial_superpixels;
    let cube = pipeline::normalize(&load_cube(&config)?)?;
    let base = superpixel::project_base_image(&cube);
    let partition = superpixel::segment(&base, target, 0)?;
    let values: Vec<u64> = partition.labels.iter().map(|&l| u64::from(l)).collect();
    let out = output_dir(&config)?;
    io::write_raster(&out.join("partition.txt"), cube.height, cube.width, &values)?;
    log::info!("{} superpixels", partition.count());
    Ok(())
}

fn original_ids(field: &LabelField, mapping: &ClassMapping) -> Vec<u64> {
    field
        .labels
        .iter()
        .map(|&c| mapping.original_of(c).unwrap_or(u64::from(c)))
        .collect()
}

fn metrics_json(report: &MetricsReport, mapping: &ClassMapping) -> String {
    let mut value = serde_json::to_value(report).expect("metrics serialize");
    value["class_ids"] = serde_json::json!(mapping.original_ids);
    let mut text = serde_json::to_string_pretty(&value).expect("metrics serialize");
    text.push('\n');
    text
}

pub fn classify(
    args: &ConfigArgs,
    extra: &[(&str, Option<String>)],
    strict: bool,
    dump_rounds: bool,
) -> Outcome {
    let config = run_config(args, extra)?;
    require(&config, &["cube", "labels", "output", "seed"])?;
    let pipeline_config = config.pipeline_config().map_err(usage)?;
    let cube = load_cube(&config)?;
    let labels_path = config.path("labels").expect("checked by require");
    let (labels, mapping) = io::load_labels(&labels_path)
        .map_err(|e| Failure::Data(format!("{}: {e}", labels_path.display())))?;

    let result = pipeline::run(&cube, &labels, &pipeline_config)?;

    let out = output_dir(&config)?;
    let (h, w) = (cube.height, cube.width);
    io::write_raster(
        &out.join("predictions.txt"),
        h,
        w,
        &original_ids(&result.final_predictions, &mapping),
    )?;
    io::render_map(
        &result.final_predictions,
        &out.join("map.pgm"),
        Some(&mapping),
    )?;
    io::write_atomic(
        &out.join("metrics.json"),
        metrics_json(&result.metrics, &mapping).as_bytes(),
    )?;
    for (r, round) in result.rounds.iter().enumerate() {
        write_trace(&out.join(format!("trace_round{r}.csv")), &round.trace)?;
        if dump_rounds {
            let partition: Vec<u64> = round
                .partition
                .labels
                .iter()
                .map(|&l| u64::from(l))
                .collect();
            io::write_raster(
                &out.join(format!("partition_round{r}.txt")),
                h,
                w,
                &partition,
            )?;
            io::write_raster(
                &out.join(format!("predictions_round{r}.txt")),
                h,
                w,
                &original_ids(&round.predictions, &mapping),
            )?;
        }
    }
    log::info!(
        "OA {:.4}, AA {:.4}, kappa {:.4}",
        result.metrics.oa,
        result.metrics.aa,
        result.metrics.kappa
    );
    if !result.all_converged() {
        let message = "at least one decomposition did not converge".to_string();
        if strict {
            return Err(Failure::NotConverged(message));
        }
        log::warn!("{message}");
    }
    Ok(())
}

pub fn metrics(predictions: &Path, truth: &Path, output: Option<&Path>) -> Outcome {
    let read =
        |p: &Path| io::read_raster(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())));
    let (pred_raw, truth_raw) = (read(predictions)?, read(truth)?);
    if (pred_raw.height, pred_raw.width) != (truth_raw.height, truth_raw.width) {
        return Err(Failure::Data(format!(
            "predictions are {}x{}, truth is {}x{}",
            pred_raw.height, pred_raw.width, truth_raw.height, truth_raw.width
        )));
    }
    let (truth_field, mut mapping) = io::densify_labels(&truth_raw)?;
    // Predicted ids absent from the truth get fresh dense ids after it.
    // Pixels without truth are not scored and their predictions ignored.
    let mut pred_labels = Vec::with_capacity(pred_raw.values.len());
    for (&v, &t) in pred_raw.values.iter().zip(&truth_field.labels) {
        let dense = match v {
            _ if t == 0 || v == 0 => 0,
            v => match mapping.dense_of(v) {
                Some(d) => d,
                None => {
                    mapping.original_ids.push(v);
                    mapping.original_ids.len() as u32
                }
            },
        };
        pred_labels.push(dense);
    }
    let classes = mapping.original_ids.len() as u32;
    let pred_field =
        LabelField::with_classes(pred_raw.height, pred_raw.width, pred_labels, classes)?;
    let truth_field = LabelField::with_classes(
        truth_raw.height,
        truth_raw.width,
        truth_field.labels,
        classes,
    )?;
    let mask: Vec<bool> = truth_field.labels.iter().map(|&t| t != 0).collect();
    let report = spdlrr::classify::evaluate(&pred_field, &truth_field, &mask)?;
    let json = metrics_json(&report, &mapping);
    match output {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
            io::write_atomic(&dir.join("metrics.json"), json.as_bytes())?;
        }
        None => print!("{json}"),
    }
    Ok(())
}
