//! Event chronology of one trial and how much fiber the ordering needs.

use delayed_swap::timeline::{check_delayed_choice, event_times, DelayBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget = DelayBudget::default();
    let t = event_times(&budget)?;
    let r = check_delayed_choice(&t);
    println!("second pair emitted    {:>6.1} ns", t.g_ii);
    println!("Alice, Bob detect      {:>6.1} ns", t.m_a);
    println!("choice window          [{:.0}, {:.0}] ns", t.c_v_lower, t.c_v_upper);
    println!("Victor detects         {:>6.1} ns", t.m_v);
    println!("margins: choice {:?} ns, measurement {} ns, ordering holds: {}", r.choice_margin, r.measurement_margin, r.satisfied);

    println!("\nfiber to Victor (m)  window lower (ns)  delayed choice");
    for v in [40.0, 60.0, 80.0, 100.0, 104.0, 150.0] {
        let b = DelayBudget { fiber_length_v: v, ..budget };
        match event_times(&b) {
            Ok(t) => println!("{v:>8}             {:>8.1}           {}", t.c_v_lower, check_delayed_choice(&t).satisfied),
            Err(e) => println!("{v:>8}             {e}"),
        }
    }
    Ok(())
}
