use eigengaze::harness::{parse_results_csv, summarize, summary_csv};
use eigengaze::{Error, Result};

use crate::SummarizeArgs;

pub fn run(args: SummarizeArgs) -> Result<()> {
    let content =
        std::fs::read_to_string(&args.results).map_err(|e| Error::io(&args.results, e))?;
    // Carry the input's recorded seed through to the summary header.
    let seed = content
        .lines()
        .find_map(|l| l.strip_prefix("# seed="))
        .and_then(|s| s.trim().parse::<u64>().ok())
        .unwrap_or(0);

    let result = parse_results_csv(&content, &args.results)?;
    let rows = summarize(&result.rows, args.pool_components);
    let csv = summary_csv(&rows, seed);
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
