//! Load the built-in lab templates, tweak one config per lab and run it.

use vlab_core::scheme::{builtin_templates, run_config, validate_config};
use vlab_core::SolverSettings;

fn main() {
    for template in builtin_templates() {
        let mut config = template.default_config();
        println!(
            "== {} ({:?}): {}",
            template.template_id, template.lab_kind, template.title
        );
        for slot in &template.slots {
            println!(
                "  slot {:<14} kinds {:?}",
                slot.slot_id,
                slot.allowed_kinds()
            );
        }
        if template.template_id == "fodo_channel" {
            config.select(&template, "b1", "sector_bend");
        }

        let report = validate_config(&template, &config).unwrap();
        assert!(report.is_valid(), "{report}");
        let series = run_config(&template, &config, &SolverSettings::default()).expect("run");
        let last = series.len() - 1;
        for (label, unit, values) in series.channels() {
            println!(
                "  {label} [{unit}]: {:.4e} -> {:.4e}",
                values[0], values[last]
            );
        }

        let mut broken = config.clone();
        let slot = &template.slots[0];
        let spec = &slot.kind(&config.selections[&slot.slot_id]).unwrap().params[0];
        broken.set_param(&slot.slot_id, &spec.name, spec.max * 10.0 + 1.0);
        println!(
            "  rejected: {}",
            validate_config(&template, &broken).unwrap()
        );
    }

    let vacuum = &builtin_templates()[0];
    println!(
        "{} as a template document:\n{}",
        vacuum.template_id,
        vacuum.to_toml_string()
    );
}
