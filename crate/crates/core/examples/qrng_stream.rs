//! Toggle-latch random bits: bias, autocorrelation and file export.

use delayed_swap::qrng::{
    autocorrelation, bias, export_bits, import_bits, measure_autocorrelation_time, rate_for_tau,
    BitSource, PhysicalQrng, QrngConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = QrngConfig { seed: 42, ..QrngConfig::default() };
    let samples = PhysicalQrng::new(cfg)?.take_bits(200_000);
    let bits: Vec<bool> = samples.iter().map(|s| s.bit).collect();
    let (p, se) = bias(&bits)?;
    println!("P(1) = {p:.5} ± {se:.5} over {} bits", bits.len());
    println!("lag-1 autocorrelation at {} ns: {:+.4}", cfg.sample_period, autocorrelation(&samples, cfg.sample_period)?);

    let rate = rate_for_tau(cfg.autocorrelation_target);
    let tau = measure_autocorrelation_time(rate, 1.0, 7)?;
    println!("rate {rate:.4}/ns per detector -> measured 1/e time {tau:.2} ns (target {})", cfg.autocorrelation_target);

    let dir = std::env::temp_dir().join("delayed-swap-qrng");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bits.bin");
    let sidecar = export_bits(&path, &bits, &cfg, None)?;
    let (back, meta) = import_bits(&path)?;
    println!("wrote {} and {}; round trip ok: {}", path.display(), sidecar.display(), back == bits && meta.n_bits == bits.len());
    Ok(())
}
