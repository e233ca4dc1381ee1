//! Post-processing of a completed experiment directory: a long-format table
//! of the averaged measurement curves plus the qualitative ordering checks
//! between the benchmark methods.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Reads `curves/<method>.csv` files back into memory.
pub fn read_curves(dir: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let curves_dir = dir.join("curves");
    let mut curves = BTreeMap::new();
    let entries = fs::read_dir(&curves_dir)
        .map_err(|e| CliError::Missing(format!("{}: {e}", curves_dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let method = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&path)?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue; // header
            }
            let value = line
                .split(',')
                .nth(1)
                .ok_or_else(|| CliError::Config(format!("{}: malformed line", path.display())))?;
            values.push(value.parse::<f64>().map_err(|e| {
                CliError::Config(format!("{}: {e}", path.display()))
            })?);
        }
        if values.is_empty() {
            return Err(CliError::Missing(format!("{}: empty curve", path.display())));
        }
        curves.insert(method, values);
    }
    if curves.is_empty() {
        return Err(CliError::Missing(format!(
            "no curves found under {}",
            curves_dir.display()
        )));
    }
    Ok(curves)
}

/// Qualitative relations between the benchmark curves at the final
/// iteration. Fields are `null` when the methods they compare were not part
/// of the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingChecks {
    /// Final measurement per method.
    pub final_values: BTreeMap<String, f64>,
    /// The plain simultaneous method trails every other method.
    pub simultaneous_slowest: Option<bool>,
    /// The cyclic variants sit below every non-cyclic method.
    pub cyclic_variants_lowest: Option<bool>,
    /// Gain of sigma1 over the plain simultaneous method, in log10 units.
    pub sigma1_gain_log10: Option<f64>,
    pub sigma1_gain_at_least_half: Option<bool>,
    /// sigma4 <= sigma3 <= plain for the string-averaging family.
    pub sa_extrapolation_ordered: Option<bool>,
    /// |cyclic+sigma2 - cyclic| in log10 units.
    pub sigma2_gap_log10: Option<f64>,
    pub sigma2_within_half: Option<bool>,
    /// Benchmark methods expected but absent from the directory.
    pub missing_methods: Vec<String>,
}

fn final_value(curves: &BTreeMap<String, Vec<f64>>, id: &str) -> Option<f64> {
    curves.get(id).and_then(|c| c.last().copied())
}

fn find_sa_id(curves: &BTreeMap<String, Vec<f64>>, suffix: &str) -> Option<String> {
    curves
        .keys()
        .find(|id| {
            if let Some(rest) = id.strip_prefix("sa") {
                match rest.split_once('_') {
                    Some((len, tail)) => {
                        !len.is_empty() && len.chars().all(|c| c.is_ascii_digit()) && tail == suffix
                    }
                    None => suffix.is_empty() && rest.chars().all(|c| c.is_ascii_digit()),
                }
            } else {
                false
            }
        })
        .cloned()
}

pub fn ordering_checks(curves: &BTreeMap<String, Vec<f64>>) -> OrderingChecks {
    let final_values: BTreeMap<String, f64> = curves
        .iter()
        .filter_map(|(id, c)| c.last().map(|&v| (id.clone(), v)))
        .collect();

    let sim = final_value(curves, "simultaneous");
    let sim_s1 = final_value(curves, "simultaneous_sigma1");
    let cyc = final_value(curves, "cyclic");
    let cyc_s2 = final_value(curves, "cyclic_sigma2");
    let sa_plain_id = find_sa_id(curves, "");
    let sa_s3_id = find_sa_id(curves, "sigma3");
    let sa_s4_id = find_sa_id(curves, "sigma4");
    let sa = sa_plain_id.as_deref().and_then(|id| final_value(curves, id));
    let sa_s3 = sa_s3_id.as_deref().and_then(|id| final_value(curves, id));
    let sa_s4 = sa_s4_id.as_deref().and_then(|id| final_value(curves, id));

    let mut missing = Vec::new();
    for (id, present) in [
        ("simultaneous", sim.is_some()),
        ("simultaneous_sigma1", sim_s1.is_some()),
        ("cyclic", cyc.is_some()),
        ("cyclic_sigma2", cyc_s2.is_some()),
        ("sa<len>", sa.is_some()),
        ("sa<len>_sigma3", sa_s3.is_some()),
        ("sa<len>_sigma4", sa_s4.is_some()),
    ] {
        if !present {
            missing.push(id.to_string());
        }
    }

    let simultaneous_slowest = sim.map(|s| {
        final_values
            .iter()
            .filter(|(id, _)| id.as_str() != "simultaneous")
            .all(|(_, &v)| s > v)
    });

    let cyclic_variants_lowest = match (cyc, cyc_s2) {
        (Some(c), Some(c2)) => {
            let worst_cyclic = c.max(c2);
            Some(
                final_values
                    .iter()
                    .filter(|(id, _)| !id.starts_with("cyclic"))
                    .all(|(_, &v)| worst_cyclic <= v),
            )
        }
        _ => None,
    };

    let sigma1_gain_log10 = match (sim, sim_s1) {
        (Some(s), Some(s1)) => Some(s - s1),
        _ => None,
    };
    let sa_extrapolation_ordered = match (sa, sa_s3, sa_s4) {
        (Some(p), Some(s3), Some(s4)) => Some(s4 <= s3 && s3 <= p),
        _ => None,
    };
    let sigma2_gap_log10 = match (cyc, cyc_s2) {
        (Some(c), Some(c2)) => Some((c2 - c).abs()),
        _ => None,
    };

    OrderingChecks {
        final_values,
        simultaneous_slowest,
        cyclic_variants_lowest,
        sigma1_gain_log10,
        sigma1_gain_at_least_half: sigma1_gain_log10.map(|g| g >= 0.5),
        sa_extrapolation_ordered,
        sigma2_gap_log10,
        sigma2_within_half: sigma2_gap_log10.map(|g| g <= 0.5),
        missing_methods: missing,
    }
}

/// Writes `figure2.csv` (long format: `k,method,mean_log10_ratio`) and
/// `checks.json` into the experiment directory and returns the checks.
pub fn report_figure2(dir: &Path) -> Result<OrderingChecks, CliError> {
    let curves = read_curves(dir)?;
    let mut file = fs::File::create(dir.join("figure2.csv"))?;
    writeln!(file, "k,method,mean_log10_ratio")?;
    for (method, values) in &curves {
        for (k, v) in values.iter().enumerate() {
            writeln!(file, "{k},{method},{v}")?;
        }
    }
    let checks = ordering_checks(&curves);
    fs::write(
        dir.join("checks.json"),
        serde_json::to_string_pretty(&checks)?,
    )?;
    Ok(checks)
}
