//! Perfect-source Monte Carlo: sample trials, sort by Victor's result and
//! print the correlation and fidelity tables.

use delayed_swap::analysis::{pooled_bsm_analysis, report_fig3, report_table1};
use delayed_swap::experiment::{run_trials, sort_subensembles, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::ideal(100_000, 1);
    let log = run_trials(&cfg)?;
    let set = sort_subensembles(&log);
    println!("{} trials, kept Phi+/Phi-/HH/VV = {:?}\n", log.len(), set.sizes());
    let fig3 = report_fig3(&set)?;
    print!("{}", fig3.to_csv());
    for s in &fig3.subensembles {
        println!("{}: sum of |E| = {:.3}", s.label, s.abs_sum());
    }
    println!();
    print!("{}", report_table1(&set)?.to_csv());
    println!();
    print!("{}", pooled_bsm_analysis(&set)?.to_csv());
    Ok(())
}
