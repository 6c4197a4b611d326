//! Finite-difference gradient checks for every module family.
//!
//! cargo run --release --example gradcheck -- [seed]

use msagsm::checks::{run_gradcheck, CheckModule};
use msagsm::tensor::GradCheck;

fn main() -> msagsm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut all_passed = true;
    for module in CheckModule::ALL {
        println!("[{module}]");
        for g in run_gradcheck(module, seed, &GradCheck::default())? {
            all_passed &= g.passed();
            println!("  {:<40} {:.2e}", g.group, g.max_rel_error);
        }
    }
    println!("{}", if all_passed { "all groups within tolerance" } else { "some groups failed" });
    Ok(())
}
