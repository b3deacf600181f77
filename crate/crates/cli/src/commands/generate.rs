use std::time::Instant;

use log::info;
use mlamc::montecarlo::{encode_dataset, Campaign};

use super::{dataset_rel, mc_error, CampaignTiming, Timings, TIMINGS_FILE};
use crate::error::CliError;
use crate::Context;

/// Simulates every campaign of the cross product and writes one dataset file
/// each, plus the wall times.
pub fn generate(ctx: &Context) -> Result<Timings, CliError> {
    if ctx.cfg.campaign.subset_only {
        return Err(CliError::Config("subset_only campaigns are simulated by `mlamc mlamc`; nothing to generate".into()));
    }
    let mut targets: Vec<_> = ctx.entries.iter().map(dataset_rel).collect();
    targets.push(TIMINGS_FILE.into());
    targets.push(Context::resolved_name("generate").into());
    ctx.out.claim(&targets)?;
    ctx.write_resolved("generate")?;

    let mut timings = Timings::new();
    for entry in &ctx.entries {
        let seed = entry.mc.base_seed;
        info!("campaign {}/{}: {} ({} samples, seed {seed})", entry.index + 1, ctx.entries.len(), entry.label(), entry.mc.n_samples);
        let t0 = Instant::now();
        let campaign = Campaign::prepare(entry.mc).map_err(|e| mc_error(e, seed))?;
        let t_prepare = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let ds = campaign.run().map_err(|e| mc_error(e, seed))?;
        let t_simulate = t1.elapsed().as_secs_f64();
        let pf = ds.pf().map_err(|e| mc_error(e, seed))?;
        info!("  pf = {:.2}% ({} failed), prepare {t_prepare:.2} s, simulate {t_simulate:.2} s", pf.pf, pf.n_failed);
        ctx.out.write_bytes(dataset_rel(entry), &encode_dataset(&ds))?;
        timings.insert(entry.label(), CampaignTiming { n_samples: entry.mc.n_samples, t_prepare, t_simulate });
    }
    ctx.out.write_json(TIMINGS_FILE, &timings)?;
    Ok(timings)
}
