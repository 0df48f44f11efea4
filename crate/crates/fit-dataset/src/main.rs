use std::process::ExitCode;

use ecoloop_fit_dataset::{fit, verify, Dataset, FitParameters, SavingsTargets};

const USAGE: &str = "usage: fit-dataset write <path> | fit-dataset check <path>";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.as_slice() {
        [cmd, path] if cmd == "write" => write(path),
        [cmd, path] if cmd == "check" => check(path),
        _ => {
            eprintln!("{USAGE}");
            ExitCode::from(2)
        }
    }
}

fn write(path: &str) -> ExitCode {
    let dataset = match fit(&FitParameters::default()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("fit failed: {e}");
            return ExitCode::from(1);
        }
    };
    let report = verify(&dataset, &SavingsTargets::default());
    if !report.passed() {
        for c in report.failures() {
            eprintln!("FAIL {}: {}", c.name, c.detail);
        }
        return ExitCode::from(1);
    }
    let mut json = serde_json::to_string_pretty(&dataset).expect("dataset serializes");
    json.push('\n');
    if let Err(e) = std::fs::write(path, json) {
        eprintln!("cannot write {path}: {e}");
        return ExitCode::from(2);
    }
    println!("wrote {path} ({} checks passed)", report.checks.len());
    ExitCode::SUCCESS
}

fn check(path: &str) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {path}: {e}");
            return ExitCode::from(2);
        }
    };
    let dataset: Dataset = match serde_json::from_str(&text) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("cannot parse {path}: {e}");
            return ExitCode::from(2);
        }
    };
    let report = verify(&dataset, &SavingsTargets::default());
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
