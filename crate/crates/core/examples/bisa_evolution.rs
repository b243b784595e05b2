//! Bell states of photons 2 and 3 through the switchable analyzer.
//!
//! Under BSM the analyzer sorts Φ⁺ and Φ⁻ into distinct click patterns and
//! discards Ψ±; under SSM it reads out H/V of each photon. Reduced
//! interference visibility leaks Φ⁻ into the Φ⁺ class and vice versa.

use delayed_swap::bisa::{
    bsm_output_overlap, verify_evolution, verify_evolution_with_visibility, BisaOutcome, BisaSetting,
};
use delayed_swap::qstate::BellKind;

fn row(d: &delayed_swap::bisa::OutcomeDistribution) -> String {
    BisaOutcome::ALL.iter().map(|o| format!("{:>8.3}", d[o])).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let header: String = BisaOutcome::ALL.iter().map(|o| format!("{:>8}", o.to_string())).collect();
    for setting in [BisaSetting::Bsm, BisaSetting::Ssm] {
        println!("{setting}        {header}");
        for k in BellKind::ALL {
            println!("  in {k:<6}  {}", row(&verify_evolution(k, setting)?));
        }
    }
    for k in [BellKind::PhiPlus, BellKind::PhiMinus] {
        println!("|<reference|output>|^2 for {k}: {:.12}", bsm_output_overlap(k)?);
    }
    println!("\nPhi- under BSM vs visibility:");
    for v in [1.0, 0.95, 0.9158, 0.5, 0.0] {
        let d = verify_evolution_with_visibility(BellKind::PhiMinus, BisaSetting::Bsm, v)?;
        println!("  v = {v:<6} {}", row(&d));
    }
    Ok(())
}
