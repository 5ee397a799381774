//! Runs the reference experiment over seeds 1..=5 and prints the numbers
//! the synthetic defaults were tuned against.
//!
//! ```text
//! cargo run --release -p ude-core --example calibrate -- '{"synth": {"noise_sigma": 0.2}}'
//! ```
//!
//! The optional argument is a JSON object merged into the default
//! pipeline configuration.

use serde_json::Value;
use ude_core::pipeline::{run, PipelineConfig};
use ude_core::ude::mean_abs;

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = serde_json::to_value(PipelineConfig::default())?;
    if let Some(arg) = std::env::args().nth(1) {
        merge(&mut cfg, &serde_json::from_str(&arg)?);
    }
    let cfg: PipelineConfig = serde_json::from_value(cfg)?;
    let mut counts = [0usize; 4];
    println!("seed  sa_clean sa_edit | erm eo_p |1-di| acc | ude eo_p |1-di| acc | |eps| sa/dis");
    for seed in 1..=5u64 {
        let c = cfg.with_seed(seed);
        let t = std::time::Instant::now();
        let o = run(&c)?;
        let sa = mean_abs(&o.edit.eps, &c.synth.sa_region);
        let dis = mean_abs(&o.edit.eps, &c.synth.disease_region);
        println!(
            "{seed:>4}  {:.3}    {:.3}   | {:.3} {:.3} {:.3} | {:.3} {:.3} {:.3} | {:.2} {:.3}/{:.3} ({:.1}s)",
            o.sa_clean_accuracy,
            o.sa_edited_accuracy,
            o.erm.eo_pos,
            o.erm.one_minus_di_abs,
            o.erm.accuracy,
            o.ude.eo_pos,
            o.ude.one_minus_di_abs,
            o.ude.accuracy,
            o.edit.norm(),
            sa,
            dis,
            t.elapsed().as_secs_f32()
        );
        counts[0] += usize::from(o.erm.eo_pos >= 0.2 && o.erm.one_minus_di_abs >= 0.2);
        counts[1] += usize::from(
            o.erm.eo_pos - o.ude.eo_pos >= 0.1
                && o.erm.one_minus_di_abs - o.ude.one_minus_di_abs >= 0.1
                && o.ude.accuracy >= o.erm.accuracy - 0.05,
        );
        counts[2] += usize::from(o.sa_clean_accuracy >= 0.9 && o.sa_edited_accuracy <= 0.65);
        counts[3] += usize::from(sa > dis);
    }
    println!(
        "erm-bias {}/5  debias {}/5  concealment {}/5  localization {}/5",
        counts[0], counts[1], counts[2], counts[3]
    );
    Ok(())
}
