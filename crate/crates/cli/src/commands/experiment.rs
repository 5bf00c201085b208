use std::path::{Path, PathBuf};

use eigengaze::attention::{random_fixation_map, random_uniform_map, AttentionMap};
use eigengaze::datamodel::{load_dataset, DatasetManifest};
use eigengaze::facespace::Method;
use eigengaze::harness::{
    child_seed, compare_map_conditions, default_component_grid, run_sweep, run_sweep_cross_db,
    significance_csv, summarize, summary_csv, CovarianceKind, ExperimentConfig, ExperimentResult,
    MapCondition, PairedComparison, Protocol, Task,
};
use eigengaze::{Error, Result};

use crate::config::ExperimentFileConfig;
use crate::ExperimentArgs;

pub fn run(args: ExperimentArgs, config_path: &Path, seed_flag: Option<u64>) -> Result<()> {
    let file = ExperimentFileConfig::load(config_path)?;
    let seed = seed_flag.or(file.seed).unwrap_or(42);
    let out_dir = args
        .out
        .or(file.out.clone())
        .ok_or_else(|| Error::Usage("no output directory (config `out` or --out)".into()))?;

    let task = Task::parse(&file.task)?;
    let protocol = Protocol::parse(&file.protocol)?;
    let covariance = CovarianceKind::parse(&file.covariance)?;
    let methods: Vec<Method> = file
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::Usage("no methods configured".into()));
    }
    let component_grid = file.components.clone().unwrap_or_else(default_component_grid);

    // Fail fast on missing inputs before any computation.
    let needs_map = methods.iter().any(|m| m.uses_map());
    if needs_map && file.map.is_none() {
        return Err(Error::Usage(
            "configured methods need an empirical attention map (`map`)".into(),
        ));
    }
    for path in [Some(&file.dataset), file.test_dataset.as_ref(), file.map.as_ref()]
        .into_iter()
        .flatten()
    {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
    }
    if protocol == Protocol::CrossDb && file.test_dataset.is_none() {
        return Err(Error::Usage(
            "protocol cross_db requires `test_dataset`".into(),
        ));
    }

    let empirical = file.map.as_deref().map(AttentionMap::read_from).transpose()?;
    let data = load_dataset(&DatasetManifest::from_csv(&file.dataset)?)?;
    let test_data = file
        .test_dataset
        .as_deref()
        .map(|p| load_dataset(&DatasetManifest::from_csv(p)?))
        .transpose()?;

    // Control maps are derived from the root seed and shared across
    // methods so paired comparisons line up.
    let geometry = data.geometry();
    let mut random_conditions: Vec<MapCondition> = Vec::new();
    for kind in &file.random {
        match kind.as_str() {
            "uniform" => random_conditions.push(MapCondition::from_map(random_uniform_map(
                data.dim(),
                child_seed(seed, 1),
            ))),
            "fixation" => random_conditions.push(MapCondition::from_map(random_fixation_map(
                data.dim(),
                geometry.cols,
                geometry.rows,
                file.fixation_count,
                file.fixation_sigma,
                child_seed(seed, 2),
            )?)),
            other => {
                return Err(Error::Usage(format!(
                    "random condition must be uniform or fixation, got `{other}`"
                )))
            }
        }
    }

    let mut all_rows = ExperimentResult::default();
    let mut comparisons: Vec<PairedComparison> = Vec::new();
    for &method in &methods {
        let maps = if method.uses_map() {
            let mut conditions = vec![MapCondition::labeled(
                "empirical",
                empirical.clone().expect("checked above"),
            )];
            conditions.extend(random_conditions.iter().cloned());
            conditions
        } else {
            vec![MapCondition::none()]
        };
        let config = ExperimentConfig {
            task,
            method,
            maps,
            component_grid: component_grid.clone(),
            protocol,
            folds: file.folds,
            seed,
            repeats: file.repeats,
            test_subsample: file.test_subsample,
            covariance,
        };
        let result = match protocol {
            Protocol::Cv10 => run_sweep(&data, &config)?,
            Protocol::CrossDb => {
                run_sweep_cross_db(&data, test_data.as_ref().expect("checked above"), &config)?
            }
        };
        if method.uses_map() {
            for cond in &random_conditions {
                comparisons.push(compare_map_conditions(
                    &result.rows,
                    method,
                    "empirical",
                    &cond.label,
                )?);
            }
        }
        all_rows.extend(result);
    }

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let results_path = out_dir.join("results.csv");
    let summary_path = out_dir.join("summary.csv");
    let significance_path = out_dir.join("significance.csv");
    write(&results_path, all_rows.to_csv(seed))?;
    write(&summary_path, summary_csv(&summarize(&all_rows.rows, false), seed))?;
    write(&significance_path, significance_csv(&comparisons, seed))?;

    println!("# seed={seed}");
    println!("{} result rows", all_rows.rows.len());
    for c in &comparisons {
        println!(
            "{} {} vs {}: p_two_sided = {:.3e}, p(empirical > random) = {:.3e}",
            c.method, c.map_a, c.map_b, c.p_two_sided, c.p_greater
        );
    }
    println!("wrote {}", results_path.display());
    println!("wrote {}", summary_path.display());
    println!("wrote {}", significance_path.display());
    Ok(())
}

fn write(path: &PathBuf, content: String) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}
