use eigengaze::attention::AttentionMap;
use eigengaze::datamodel::{load_dataset, DatasetManifest};
use eigengaze::facespace::{self, Method};
use eigengaze::{Error, Result};

use crate::FitArgs;

pub fn run(args: FitArgs, seed: u64) -> Result<()> {
    let method = Method::parse(&args.method)?;
    match (&args.map, method.uses_map()) {
        (Some(_), false) => {
            return Err(Error::Usage(format!(
                "method {method} takes no attention map"
            )))
        }
        (None, true) => {
            return Err(Error::Usage(format!(
                "method {method} requires --map"
            )))
        }
        _ => {}
    }
    if args.verify_uniform && method != Method::Wpca {
        return Err(Error::Usage(
            "--verify-uniform applies to --method wpca only".into(),
        ));
    }

    // Read the map before the (expensive) dataset load so a missing file
    // fails fast.
    let map = args
        .map
        .as_deref()
        .map(AttentionMap::read_from)
        .transpose()?;

    let manifest = DatasetManifest::from_csv(&args.dataset)?;
    let data = load_dataset(&manifest)?;
    let fs = facespace::fit(&data, method, map.as_ref(), args.components)?;
    fs.save(&args.out)?;

    println!("# seed={seed}");
    println!(
        "fitted {} face space: n={}, m={}",
        method,
        fs.dim(),
        fs.num_components()
    );
    if let Some(k) = fs.alignment() {
        let sorted = k.windows(2).all(|w| w[0].abs() >= w[1].abs() - 1e-12);
        println!(
            "|k| spectrum non-increasing: {sorted} (|k1| = {:.6})",
            k.first().map(|v| v.abs()).unwrap_or(0.0)
        );
    }
    println!("wrote {}", args.out.display());
    println!("wrote {}.json", args.out.display());

    if args.verify_uniform {
        verify_uniform(&data, &fs)?;
    }
    Ok(())
}

/// Check the uniform-weight theorem on this dataset: wPCA with w = 1/n
/// reproduces the PCA components, with eigenvalues scaled by 1/n.
fn verify_uniform(data: &eigengaze::datamodel::DataMatrix, fitted: &facespace::FaceSpace) -> Result<()> {
    let m = fitted.num_components();
    let n = data.dim() as f64;
    let pca = facespace::fit_pca(data, m)?;
    let uniform = facespace::fit_wpca(data, &AttentionMap::uniform(data.dim()), m)?;
    for i in 0..m {
        let cos = pca
            .component(i)
            .dot(&uniform.component(i))
            .abs();
        let ratio = uniform.eigenvalues()[i] * n / pca.eigenvalues()[i];
        if cos < 1.0 - 1e-8 || !(0.99999999..=1.00000001).contains(&ratio) {
            return Err(Error::DegenerateData(format!(
                "uniform-weight verification failed at component {i}: |cos| = {cos}, ratio = {ratio}"
            )));
        }
    }
    println!("uniform-weight verification: PASS ({m} components)");
    Ok(())
}
