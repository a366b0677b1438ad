//! Print the flagship solver config as JSON, e.g. as a starting point for
//! `sawb --config`.

use sawb_core::solver::SolveConfig;

fn main() {
    println!("{}", serde_json::to_string_pretty(&SolveConfig::flagship()).unwrap());
}
