//! Sample-size sweep written as CSV to stdout.

use nnlift::cli::{run_sweep, write_summary, ExperimentConfig};

const CONFIG: &str = r#"
seed = 0

[data]
d = 6
k = 3
n = 1000
activation = "step"
labels = { kind = "continuous", noise = 0.01 }

[eval]
n_mc = 5000

[sweep]
n = [1000, 10000, 100000]
seeds = [0, 1, 2, 3]
parallel = 4
"#;

fn main() -> nnlift::error::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let rows = run_sweep(&cfg, cfg.sweep.parallel)?;
    write_summary(std::io::stdout().lock(), &rows)
}
