//! Two singlets, rewritten in the Bell basis of pairs (1,4) and (2,3), and
//! the state photons 1 and 4 are left in after each of Victor's outcomes.

use delayed_swap::bisa::{BisaOutcome, BisaSetting};
use delayed_swap::experiment::{conditional_state, PhotonPair};
use delayed_swap::qstate::{
    bell_decompose_14_23, bell_state, fidelity, four_photon_source_state, pauli_correlation,
    BellKind, PauliAxis,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let psi = four_photon_source_state();
    let c = bell_decompose_14_23(&psi)?;
    println!("source state in the (1,4) x (2,3) Bell basis:");
    for k in BellKind::ALL {
        println!("  |{k}>14 |{k}>23  {:+.3}", c.get(k, k).re);
    }

    println!("\nphotons 1&4 after Victor's result:");
    let cases = [
        (BisaSetting::Bsm, Some(BisaOutcome::PhiMinus23)),
        (BisaSetting::Bsm, Some(BisaOutcome::PhiPlus23)),
        (BisaSetting::Ssm, Some(BisaOutcome::HH23)),
        (BisaSetting::Ssm, None),
    ];
    for (choice, outcome) in cases {
        let rho = conditional_state(choice, outcome, PhotonPair::P14)?;
        let e = PauliAxis::ALL.map(|a| pauli_correlation(&rho, a).unwrap());
        let label = outcome.map_or("pooled".to_string(), |o| o.to_string());
        println!(
            "  {choice} {label:<7} E(Z,X,Y) = ({:+.2}, {:+.2}, {:+.2})  F(Phi-) = {:.3}  purity {:.2}",
            e[0],
            e[1],
            e[2],
            fidelity(&rho, &bell_state(BellKind::PhiMinus))?,
            rho.purity()
        );
    }

    println!("\nmonogamy, target Psi- on 1&2 and 3&4:");
    for (choice, outcome) in [(BisaSetting::Bsm, Some(BisaOutcome::PhiMinus23)), (BisaSetting::Ssm, None)] {
        for pair in [PhotonPair::P12, PhotonPair::P34] {
            let rho = conditional_state(choice, outcome, pair)?;
            println!("  {choice} pair {pair}: F = {:.3}", fidelity(&rho, &bell_state(pair.target()))?);
        }
    }
    Ok(())
}
