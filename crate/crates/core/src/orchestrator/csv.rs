use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::MonteCarloReport;
use crate::error::Result;
use crate::training::OverheadModel;

pub const CSV_HEADER: &str = "scheme,drop,iteration,min_dl_rate,min_ul_rate,objective,block_slots,effective_rate";

/// Nine significant digits, fixed or scientific like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One row per (scheme, drop, iteration, block size), iterations `1..=iters`,
/// sorted by scheme label, drop, iteration and block size.
pub fn write_csv<W: Write>(
    out: &mut W,
    report: &MonteCarloReport,
    overhead: &OverheadModel,
    block_slots: &[f64],
) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut schemes = report.spec.schemes.clone();
    schemes.sort_by_key(|s| s.label());
    schemes.dedup();
    let mut blocks = block_slots.to_vec();
    blocks.sort_by(f64::total_cmp);
    for scheme in schemes {
        for drop in &report.drops {
            let run = &drop.runs[&scheme];
            for m in &run.series {
                for &block in &blocks {
                    let eff = crate::metrics::effective_rate(
                        m.objective,
                        crate::training::overhead_slots(scheme, m.iteration, overhead),
                        block,
                    );
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        scheme.label(),
                        drop.drop,
                        m.iteration,
                        format_sig9(m.min_dl),
                        format_sig9(m.min_ul),
                        format_sig9(m.objective),
                        format_sig9(block),
                        format_sig9(eff)
                    )?;
                }
            }
        }
    }
    Ok(())
}

pub fn emit_csv(path: &Path, report: &MonteCarloReport, overhead: &OverheadModel, block_slots: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(&mut out, report, overhead, block_slots)?;
    out.flush()?;
    Ok(())
}
