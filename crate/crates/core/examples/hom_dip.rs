//! Hong-Ou-Mandel dip: coincidence probability at a 50:50 splitter as the
//! second photon is made partly distinguishable.

use delayed_swap::fock::{
    beam_splitter, create, pattern_probability, DetectorBank, Ensemble, FockVector, ModeLabel,
    Polarization,
};

fn pair(distinguishable: bool) -> Result<FockVector, delayed_swap::fock::FockError> {
    let y = if distinguishable { ModeLabel::h("y").with_bin(1) } else { ModeLabel::h("y") };
    let s = FockVector::vacuum(vec![ModeLabel::h("x"), ModeLabel::v("x"), ModeLabel::h("y"), ModeLabel::v("y")], 3)?
        .with_mode(&y);
    create(&create(&s, &ModeLabel::h("x"))?, &y)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = DetectorBank::for_spatials(&["x", "y"]);
    let coincidence = bank.pattern(&[("x", Polarization::H), ("y", Polarization::H)]);
    let same = Ensemble::pure(beam_splitter(&pair(false)?, "x", "y", 0.5, 0.0)?);
    let diff = Ensemble::pure(beam_splitter(&pair(true)?, "x", "y", 0.5, 0.0)?);

    println!("overlap  P(coincidence)");
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let ens = Ensemble::mix(vec![(v, same.clone()), (1.0 - v, diff.clone())]);
        let p = pattern_probability(&ens, &bank, &coincidence, &[1.0; 4])?;
        println!("  {v:.1}     {p:.4}  {}", "#".repeat((p * 80.0).round() as usize));
    }
    Ok(())
}
