use std::path::PathBuf;

use eigengaze::attention::{
    accumulate_heatmap, average_heatmaps, downsample, filter_fixations, normalize, read_gaze_csv,
    valid_fraction, FixationFilter, HeatMap,
};
use eigengaze::datamodel::Geometry;
use eigengaze::{Error, Result};

use crate::BuildMapArgs;

pub fn run(args: BuildMapArgs, seed: u64) -> Result<()> {
    let filter = FixationFilter {
        radius_px: args.radius,
        min_duration_ms: args.min_duration,
        sample_rate_hz: args.rate,
    };
    let target_w = args.target_width.unwrap_or(args.width);
    let target_h = args.target_height.unwrap_or(args.height);

    let mut trial_paths: Vec<PathBuf> = std::fs::read_dir(&args.gaze_dir)
        .map_err(|e| Error::io(&args.gaze_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    trial_paths.sort();
    if trial_paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no gaze CSVs in {}",
            args.gaze_dir.display()
        )));
    }

    let mut trial_maps = Vec::new();
    let mut excluded = 0usize;
    let mut total_fixations = 0usize;
    for path in &trial_paths {
        let samples = read_gaze_csv(path)?;
        let fraction = valid_fraction(&samples);
        if fraction < args.min_valid {
            eprintln!(
                "warning: excluding {} ({:.0}% valid samples, below {:.0}%)",
                path.display(),
                fraction * 100.0,
                args.min_valid * 100.0
            );
            excluded += 1;
            continue;
        }
        let fixations = filter_fixations(&samples, &filter)?;
        let map = accumulate_heatmap(&fixations, args.width, args.height, args.sigma, args.skip_first);
        total_fixations += fixations.len().saturating_sub(args.skip_first);
        trial_maps.push(map);
    }
    if trial_maps.is_empty() {
        return Err(Error::EmptyInput(
            "no trials left after the validity threshold".into(),
        ));
    }

    let grand = if args.average_per_trial {
        // Equal weight per trial: normalize each map to unit mass first.
        let unit_maps: Vec<HeatMap> = trial_maps
            .iter()
            .filter(|m| m.total_mass() > 0.0)
            .map(|m| {
                let mass = m.total_mass();
                HeatMap::from_values(
                    m.width(),
                    m.height(),
                    m.values().iter().map(|v| v / mass).collect(),
                )
                .expect("same geometry")
            })
            .collect();
        if unit_maps.is_empty() {
            return Err(Error::AllZeroMap);
        }
        average_heatmaps(&unit_maps)?
    } else {
        // Default: sum raw durations across trials, normalize once.
        let mut sum = HeatMap::zeros(args.width, args.height);
        for map in &trial_maps {
            sum = HeatMap::from_values(
                sum.width(),
                sum.height(),
                sum.values()
                    .iter()
                    .zip(map.values())
                    .map(|(a, b)| a + b)
                    .collect(),
            )
            .expect("same geometry");
        }
        sum
    };

    let pooled = if target_w != args.width || target_h != args.height {
        downsample(&grand, target_w, target_h)?
    } else {
        grand
    };
    let map = normalize(&pooled)?;
    map.write_to(&args.out)?;

    let viz_path = args.out.with_extension("pgm");
    map.to_visualization_raster(Geometry::new(target_h, target_w))?
        .save_pgm(&viz_path)?;

    println!("# seed={seed}");
    println!(
        "built attention map from {} trials ({excluded} excluded), {total_fixations} fixations",
        trial_maps.len()
    );
    println!("wrote {}", args.out.display());
    println!("wrote {}", viz_path.display());
    Ok(())
}
