//! Multi-pair emission and the squeezing parameter.

use delayed_swap::experiment::{
    calibrate_tau_from_count_ratio, mean_bsm_correlation, plausible_tau_range, spdc_pair_ratio,
    ExperimentConfig, DEFAULT_TAU,
};
use delayed_swap::fock::{spdc_pair_probability, spdc_truncation_deficit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("tau    P(1)      P(2)/P(1)  deficit(order 1)  deficit(order 2)");
    for tau in [0.05, 0.1, 0.2, 0.3, DEFAULT_TAU] {
        println!(
            "{tau:<6} {:.5}  {:.5}    {:.2e}          {:.2e}",
            spdc_pair_probability(tau, 1),
            spdc_pair_ratio(tau, 2, 3)?,
            spdc_truncation_deficit(tau, 1, 3)?,
            spdc_truncation_deficit(tau, 2, 3)?,
        );
    }
    let tau = calibrate_tau_from_count_ratio(0.1, 2, 3)?;
    println!("\ntwo-pair/one-pair ratio 0.1 -> tau = {tau:.4}");

    let cfg = ExperimentConfig::reference_defaults();
    let mut bare = cfg.clone();
    bare.noise = cfg.noise.without_imperfections();
    println!("\ntau    mean |E| (multi-pair only)  mean |E| (all imperfections)");
    for tau in [0.1, 0.2, 0.3, DEFAULT_TAU, 0.45] {
        let (mut a, mut b) = (bare.clone(), cfg.clone());
        a.source.tau = tau;
        b.source.tau = tau;
        println!("{tau:<6} {:.4}                      {:.4}", mean_bsm_correlation(&a)?, mean_bsm_correlation(&b)?);
    }
    let r = plausible_tau_range(&cfg)?;
    println!("\nplausible tau range [{:.4}, {:.4}], default {DEFAULT_TAU}", r.lo(), r.hi());
    Ok(())
}
