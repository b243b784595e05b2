use delayed_swap::experiment::{imperfection_product, rate_budget, ExperimentConfig, RateBudgetInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let input = RateBudgetInput::from_config(&ExperimentConfig::reference_defaults());
    let b = rate_budget(&input)?;
    println!("{input:#?}");
    println!("kept fraction {:.5}, four-fold rate {:.4} Hz ({:.0} per day)", b.fraction, b.fourfold_rate, b.fourfold_rate * 86_400.0);

    let corr = imperfection_product(&[0.674, 0.964, 0.94, 0.99])?;
    let vis = imperfection_product(&[0.95, 0.99])?;
    println!("expected correlation 0.674 x 0.964 x 0.94 x 0.99 = {corr:.4}");
    println!("interferometer visibility x switching fidelity = {vis:.4}");

    println!("\nduty cycle  rate (Hz)");
    for duty in [0.2, 0.4, 0.6, 0.8, 1.0] {
        let r = rate_budget(&RateBudgetInput { duty_cycle: duty, ..input })?;
        println!("  {duty:.1}        {:.4}", r.fourfold_rate);
    }
    Ok(())
}
