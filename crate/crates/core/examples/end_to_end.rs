//! The full file-based pipeline, driven through the command-line entry
//! point: simulate, calibrate, infer, score.
//!
//! cargo run --example end_to_end

use lenslike::pipeline::cli::run_from;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |f: &str| dir.path().join(f).to_string_lossy().into_owned();
    std::fs::write(dir.path().join("config.toml"), "sigma_bw = 0.25\nlambda_lw = 0.1\np_dof = 2.0\n")?;

    let steps: [Vec<String>; 4] = [
        vec!["simulate".into(), "--out-dir".into(), p("")],
        vec!["--config".into(), p("config.toml"), "calibrate".into(), "--validation".into(), p("validation.csv"), "--grid".into(), p("grid.csv"), "--out".into(), p("model.json")],
        vec!["infer".into(), "--test".into(), p("test.csv"), "--model".into(), p("model.json"), "--out".into(), p("results.csv")],
        vec!["score".into(), "--results".into(), p("results.csv"), "--truth".into(), p("truth.csv"), "--grid".into(), p("grid.csv"), "--out".into(), p("report.json")],
    ];
    for step in &steps {
        let name = step.iter().find(|s| !s.starts_with('-') && !s.contains('/')).unwrap();
        println!("== {name}");
        let code = run_from(std::iter::once("lenslike".to_string()).chain(step.iter().cloned()));
        if code != 0 {
            return Err(format!("{name} exited with {code}").into());
        }
    }
    let results = std::fs::read_to_string(dir.path().join("results.csv"))?;
    println!("\nfirst result rows:");
    for line in results.lines().take(5) {
        println!("  {line}");
    }
    Ok(())
}
