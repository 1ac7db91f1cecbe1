//! Plot data and the top-policy table.

use std::collections::HashSet;
use std::io::Write;

use crate::agents::{top_policies, History, NearestRun};
use crate::fmt::{round_sig, sig};
use crate::gp::SurfaceRow;

pub const SURFACE_HEADER: &str = "a_itn,a_irs,post_mean,post_sd,log10_cda_mean";

/// `log10(C_DA)` implied by a posterior-mean reward; NaN where the mean
/// implies no positive cost per DALY.
pub fn log10_cda(mean_reward: f64) -> f64 {
    if mean_reward < 0.0 {
        (-mean_reward).log10()
    } else {
        f64::NAN
    }
}

pub fn write_surface<W: Write>(rows: &[SurfaceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SURFACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            sig(r.policy.itn(), 10),
            sig(r.policy.irs(), 10),
            sig(r.mean, 10),
            sig(r.sd, 10),
            sig(log10_cda(r.mean), 10)
        )?;
    }
    Ok(())
}

/// Distinct evaluated records nearest to the best separated surface maxima,
/// at most `k`, ordered by ascending cost per DALY averted.
pub fn top_table(history: &History, surface: &[SurfaceRow], k: usize, separation: f64) -> Vec<NearestRun> {
    let mut seen = HashSet::new();
    let mut rows: Vec<NearestRun> = top_policies(history, surface, usize::MAX, separation)
        .into_iter()
        .filter_map(|t| t.nearest)
        .filter(|n| seen.insert((n.batch, n.proposal)))
        .take(k)
        .collect();
    if rows.len() < k {
        log::warn!("only {} distinct top policies for k = {k}", rows.len());
    }
    rows.sort_by(|a, b| match (a.c_da_usd_per_daly, b.c_da_usd_per_daly) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    rows
}

fn percent(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

/// Fixed-width table: Policy {ITN%, IRS%}, C_DA, DA, C_int, values to three
/// significant figures.
pub fn format_top_table(rows: &[NearestRun]) -> String {
    let mut out = format!("{:<20}{:>10}{:>12}{:>12}\n", "Policy {ITN%, IRS%}", "C_DA", "DA", "C_int");
    for r in rows {
        let policy = format!("{{{}, {}}}", percent(r.policy.itn()), percent(r.policy.irs()));
        let c_da = r.c_da_usd_per_daly.map_or_else(|| "n/a".to_string(), |c| round_sig(c, 3));
        out.push_str(&format!(
            "{policy:<20}{c_da:>10}{:>12}{:>12}\n",
            round_sig(r.dalys_averted, 3),
            round_sig(r.c_int_usd, 3)
        ));
    }
    out
}
