//! Event chronology and the delayed-choice ordering check.
//!
//! All times are in ns relative to the first pair emission (`G_I = 0`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimelineError {
    #[error("fiber speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("choice window [{lower}, {upper}] ns is inconsistent with the delay budget")]
    NegativeWindow { lower: f64, upper: f64 },
}

pub type Result<T> = std::result::Result<T, TimelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayBudget {
    /// Fiber to Alice's and Bob's detectors, m.
    pub fiber_length_ab: f64,
    /// Fiber to Victor's analyzer, m.
    pub fiber_length_v: f64,
    /// m/ns.
    pub fiber_speed: f64,
    pub eom_driver_delay: f64,
    pub qrng_delay: f64,
    pub cable_delay: f64,
    /// Three QRNG autocorrelation times, kept at the rounded 32 ns.
    pub autocorr_allowance: f64,
    pub eom_on_time: f64,
    /// Emission delay of the second pair, ns.
    pub pair2_generation_offset: f64,
}

impl Default for DelayBudget {
    fn default() -> Self {
        Self {
            fiber_length_ab: 7.0,
            fiber_length_v: 104.0,
            fiber_speed: 0.2,
            eom_driver_delay: 45.0,
            qrng_delay: 75.0,
            cable_delay: 20.0,
            autocorr_allowance: 32.0,
            eom_on_time: 299.0,
            pair2_generation_offset: 1.6,
        }
    }
}

impl DelayBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.fiber_speed > 0.0) {
            return Err(TimelineError::NonPositiveSpeed(self.fiber_speed));
        }
        let fields = [
            ("fiber_length_ab", self.fiber_length_ab),
            ("fiber_length_v", self.fiber_length_v),
            ("eom_driver_delay", self.eom_driver_delay),
            ("qrng_delay", self.qrng_delay),
            ("cable_delay", self.cable_delay),
            ("autocorr_allowance", self.autocorr_allowance),
            ("eom_on_time", self.eom_on_time),
            ("pair2_generation_offset", self.pair2_generation_offset),
        ];
        for (name, value) in fields {
            if !(value >= 0.0) {
                return Err(TimelineError::Negative { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventTimes {
    pub g_i: f64,
    pub g_ii: f64,
    pub m_a: f64,
    pub m_b: f64,
    pub c_v_lower: f64,
    pub c_v_upper: f64,
    pub m_v: f64,
}

pub fn fiber_delay(length: f64, speed: f64) -> Result<f64> {
    if !(speed > 0.0) {
        return Err(TimelineError::NonPositiveSpeed(speed));
    }
    if !(length >= 0.0) {
        return Err(TimelineError::Negative {
            name: "length",
            value: length,
        });
    }
    Ok(length / speed)
}

pub fn event_times(b: &DelayBudget) -> Result<EventTimes> {
    b.validate()?;
    let m_ab = fiber_delay(b.fiber_length_ab, b.fiber_speed)?;
    let m_v = fiber_delay(b.fiber_length_v, b.fiber_speed)?;
    let upper = m_v - b.eom_driver_delay - b.qrng_delay - b.cable_delay - b.autocorr_allowance;
    let lower = upper - b.eom_on_time;
    if lower < 0.0 {
        return Err(TimelineError::NegativeWindow { lower, upper });
    }
    Ok(EventTimes {
        g_i: 0.0,
        g_ii: b.pair2_generation_offset,
        m_a: m_ab,
        m_b: m_ab,
        c_v_lower: lower,
        c_v_upper: upper,
        m_v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayedChoiceReport {
    pub satisfied: bool,
    /// Choice window relative to the later of Alice's and Bob's measurements.
    pub choice_margin: [f64; 2],
    /// Victor's measurement relative to the later of Alice's and Bob's.
    pub measurement_margin: f64,
}

pub fn check_delayed_choice(t: &EventTimes) -> DelayedChoiceReport {
    let m_ab = t.m_a.max(t.m_b);
    DelayedChoiceReport {
        satisfied: t.c_v_lower > m_ab && t.m_v > m_ab,
        choice_margin: [t.c_v_lower - m_ab, t.c_v_upper - m_ab],
        measurement_margin: t.m_v - m_ab,
    }
}

/// Per-trial chronology: nominal times plus a choice instant inside the
/// window and optional Gaussian timestamp noise on the measurement events.
pub fn trial_times<R: rand::Rng + ?Sized>(
    nominal: &EventTimes,
    choice_fraction: f64,
    jitter_sigma: f64,
    rng: &mut R,
) -> EventTimes {
    use rand_distr::{Distribution, Normal};
    let mut t = *nominal;
    let c = nominal.c_v_lower + choice_fraction * (nominal.c_v_upper - nominal.c_v_lower);
    t.c_v_lower = c;
    t.c_v_upper = c;
    if jitter_sigma > 0.0 {
        let n = Normal::new(0.0, jitter_sigma).expect("positive sigma");
        t.m_a += n.sample(rng);
        t.m_b += n.sample(rng);
        t.m_v += n.sample(rng);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fiber_delays() {
        assert_eq!(fiber_delay(104.0, 0.2).unwrap(), 520.0);
        assert_eq!(fiber_delay(7.0, 0.2).unwrap(), 35.0);
        assert_eq!(fiber_delay(0.0, 0.2).unwrap(), 0.0);
        assert!(fiber_delay(1.0, 0.0).is_err());
    }

    #[test]
    fn default_chronology() {
        let t = event_times(&DelayBudget::default()).unwrap();
        assert_eq!((t.m_a, t.m_b, t.m_v), (35.0, 35.0, 520.0));
        assert_eq!((t.c_v_lower, t.c_v_upper), (49.0, 348.0));
        assert_eq!(t.m_v - t.m_a, 485.0);
        assert_eq!(t.g_ii, 1.6);
        let r = check_delayed_choice(&t);
        assert!(r.satisfied);
        assert_eq!(r.choice_margin, [14.0, 313.0]);
        assert_eq!(r.measurement_margin, 485.0);
    }

    #[test]
    fn collapsed_window() {
        let b = DelayBudget {
            eom_driver_delay: 0.0,
            qrng_delay: 0.0,
            cable_delay: 0.0,
            autocorr_allowance: 0.0,
            eom_on_time: 0.0,
            ..DelayBudget::default()
        };
        let t = event_times(&b).unwrap();
        assert_eq!((t.c_v_lower, t.c_v_upper), (520.0, 520.0));
    }

    #[test]
    fn equal_fibers_break_the_ordering() {
        let b = DelayBudget {
            fiber_length_v: 7.0,
            eom_driver_delay: 0.0,
            qrng_delay: 0.0,
            cable_delay: 0.0,
            autocorr_allowance: 0.0,
            eom_on_time: 0.0,
            ..DelayBudget::default()
        };
        assert!(!check_delayed_choice(&event_times(&b).unwrap()).satisfied);
        let b = DelayBudget {
            fiber_length_v: 7.0,
            ..DelayBudget::default()
        };
        assert!(matches!(event_times(&b), Err(TimelineError::NegativeWindow { .. })));
    }

    #[test]
    fn trial_choice_inside_window() {
        use rand::SeedableRng;
        let nominal = event_times(&DelayBudget::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t = trial_times(&nominal, 0.5, 0.0, &mut rng);
        assert_eq!(t.c_v_lower, 198.5);
        assert_eq!(t.m_v, 520.0);
    }
}
