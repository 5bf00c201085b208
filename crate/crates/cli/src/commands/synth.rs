use std::fmt::Write as _;

use eigengaze::synth::{informative_patch_dataset, SynthSpec};
use eigengaze::{Error, Result};

use crate::SynthArgs;

fn parse_patch(token: &str) -> Result<(u32, u32, u32, u32)> {
    let parts: Vec<&str> = token.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Usage(format!(
            "--patch must be x,y,w,h, got `{token}`"
        )));
    }
    let mut values = [0u32; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("bad patch value `{part}`")))?;
    }
    Ok((values[0], values[1], values[2], values[3]))
}

pub fn run(args: SynthArgs, seed: u64) -> Result<()> {
    let (patch_x, patch_y, patch_w, patch_h) = parse_patch(&args.patch)?;
    let spec = SynthSpec {
        width: args.width,
        height: args.height,
        patch_x,
        patch_y,
        patch_w,
        patch_h,
        per_class: args.per_class,
        signal: args.signal,
        noise_sigma: args.noise,
        texture_blobs: args.texture_blobs,
        texture_sigma: args.texture_sigma,
        base_level: 128.0,
    };
    let (images, true_map) = informative_patch_dataset(&spec, seed)?;

    let images_dir = args.out.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut manifest = String::from("path,subject_id,gender,expression\n");
    for image in &images {
        let file = format!("images/{}.pgm", image.id);
        image.raster.save_pgm(&args.out.join(&file))?;
        let _ = writeln!(
            manifest,
            "{file},{},{},-",
            image.subject_id,
            image.gender.map(|g| g.code()).unwrap_or("-")
        );
    }
    let manifest_path = args.out.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let map_path = args.out.join("true.map");
    true_map.write_to(&map_path)?;

    println!("# seed={seed}");
    println!(
        "generated {} images ({}x{}, patch {patch_w}x{patch_h}+{patch_x}+{patch_y})",
        images.len(),
        args.width,
        args.height
    );
    println!("wrote {}", manifest_path.display());
    println!("wrote {}", map_path.display());
    Ok(())
}
