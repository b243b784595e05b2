//! Simulation of delayed-choice entanglement swapping with four photons.
//!
//! Two polarization-entangled pairs are produced; photons 1 and 4 go to Alice
//! and Bob, photons 2 and 3 to Victor, whose analyzer is switched between a
//! Bell-state measurement and a separable measurement after 1 and 4 are
//! already detected.
//!
//! - [`qstate`]: qubit registers, density matrices, Bell basis, fidelities.
//! - [`fock`]: truncated Fock space, linear optics, loss, detectors.
//! - [`bisa`]: the switchable Bell-state analyzer.
//! - [`qrng`]: the toggle-latch random number generator driving the choice.
//! - [`timeline`]: event chronology and the delayed-choice condition.
//! - [`experiment`]: trial sampling, noise model, sub-ensembles, rate budget.
//! - [`analysis`]: correlations, fidelities, witnesses, report tables.
//! - [`cli`]: the `delayed-swap` binary.
//!
//! ## Running Examples
//!
//! ```bash
//! cargo run --release --example bell_swap
//! cargo run --release --example hom_dip
//! cargo run --release --example bisa_evolution
//! cargo run --release --example spdc_noise
//! cargo run --release --example qrng_stream
//! cargo run --release --example delayed_choice_timing
//! cargo run --release --example ideal_run
//! cargo run --release --example fock_run
//! cargo run --release --example rate_budget
//! ```

pub mod analysis;
pub mod bisa;
pub mod cli;
pub mod experiment;
pub mod fock;
pub mod qrng;
pub mod qstate;
pub mod timeline;
