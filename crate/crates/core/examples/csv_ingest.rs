//! Round-trips a labeled dataset through CSV, fits a shared binning scheme
//! and prints the resulting histogram.
//!
//! Pass a CSV path (and optionally the label column) to inspect your own file.

use model_scout::dataio::write_csv;
use model_scout::evalbench::GaussianClasses;
use model_scout::{fit_binning, load_csv, to_distribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let data = match args.next() {
        Some(path) => load_csv(&path, args.next().as_deref())?,
        None => {
            let classes = GaussianClasses::new(3, 2, 4.0, 1.0, 7)?;
            let sample = classes.sample("demo", &[40, 40, 20], 1)?;
            let dir = tempfile::tempdir()?;
            let path = dir.path().join("demo.csv");
            write_csv(&sample, &path)?;
            load_csv(&path, Some("label"))?
        }
    };

    println!("{}: {} rows x {} dims, labeled: {}", data.id(), data.n_rows(), data.n_dims(), data.labels().is_some());
    let binning = fit_binning(&[&data], 4)?;
    for (d, (lo, hi)) in binning.ranges().iter().enumerate() {
        println!("  dim {d}: [{lo:.3}, {hi:.3}]");
    }
    let p = to_distribution(&data, &binning)?;
    let cells: Vec<String> = p.weights().iter().map(|w| format!("{w:.3}")).collect();
    println!("histogram over {} cells: {}", p.omega_size(), cells.join(" "));
    Ok(())
}
