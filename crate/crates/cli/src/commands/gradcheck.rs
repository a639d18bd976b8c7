use anyhow::Result;
use g2t::check::{check_model, CheckVariant};
use g2t::numerics::GradCheckConfig;
use g2t::toy::toy_example;

use super::{read_examples, Ctx};
use crate::{parse_enum, ContractViolation, GradcheckArgs};

pub fn run(ctx: &mut Ctx, args: GradcheckArgs) -> Result<()> {
    let variants = if args.variant == "all" {
        CheckVariant::ALL.to_vec()
    } else {
        vec![parse_enum::<CheckVariant>(&args.variant).map_err(ContractViolation)?]
    };
    let example = match &args.input {
        Some(p) => read_examples(&ctx.input(p))?
            .into_iter()
            .next()
            .ok_or_else(|| g2t::Error::Data(format!("{} has no examples", p.display())))?,
        None => toy_example(),
    };
    let gc = GradCheckConfig {
        epsilon: args.epsilon,
        tolerance: args.tolerance,
        corrupt_param: args.corrupt_grad.clone(),
    };
    let mut failed = Vec::new();
    for variant in variants {
        let name = serde_json::to_value(variant)?.as_str().unwrap_or_default().to_string();
        let report = check_model(variant.config(args.hidden), &example, &gc)?;
        println!("{name}: max relative error {:.3e} over {} components", report.max_rel_error(), report.compared_components());
        for p in &report.params {
            let status = if p.max_rel_error < report.tolerance { "ok" } else { "FAIL" };
            println!("  {status:4} {:<28} {:>6} {:.3e}", p.name, p.components, p.max_rel_error);
        }
        failed.extend(report.failures().map(|p| format!("{name}/{}", p.name)));
    }
    if failed.is_empty() {
        println!("gradient check passed");
        Ok(())
    } else {
        Err(ContractViolation(format!("gradient check failed for {}", failed.join(", "))).into())
    }
}
