//! Running checks from a TOML manifest and reading the JSON report.

use katokit::cli::{self, ExperimentManifest, RunOptions};

const MANIFEST: &str = r#"
manifold = "euclidean:3"
seed = 42

[[check]]
name = "kernel identities"
kind = "kernel-check"
times = [0.1, 1.0]

[[check]]
name = "bounded well"
kind = "is-kato"
potential = "indicator:ball:center=0,0,0:radius=1"

[[check]]
name = "inverse square is not Kato"
kind = "is-kato"
potential = "radialpower:beta=2:center=0,0,0"
expect = "FAIL"

[[check]]
kind = "semigroup-bound"
manifold = "circle"
potential = "const:1"
times = [0.0, 0.5, 1.0]
"#;

fn main() -> katokit::Result<()> {
    let manifest = ExperimentManifest::parse(MANIFEST)?;
    manifest.validate()?;
    let report = cli::run(&manifest, &RunOptions::default());
    print!("{}", report.summary());
    let json: serde_json::Value = serde_json::from_str(&report.deterministic_json()?)?;
    println!("counts: {}", json["counts"]);
    println!("exit code {}", report.exit_code());

    println!("\nbuilt-in batteries:\n{}", cli::list_batteries());
    Ok(())
}
