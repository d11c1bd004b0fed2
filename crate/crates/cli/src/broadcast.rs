//! Per-step broadcast payload: the switch-on probabilities of the deadband
//! off bins and the switch-off probabilities of the deadband on bins,
//! 2(q−1) numbers in total. The rest of the policy is fixed by structure and
//! goes into a comment header once.

use std::path::Path;

use tcl_core::expanded::PolicyPair;
use tcl_core::grid::GridSpec;

use crate::{io, CliError};

/// Off bins `m+1..N-1` and on bins `2..q`.
fn payload_bins(grid: &GridSpec) -> (std::ops::RangeInclusive<usize>, std::ops::RangeInclusive<usize>) {
    (grid.m + 1..=grid.n - 1, 2..=grid.q)
}

pub fn payload_len(grid: &GridSpec) -> usize {
    2 * (grid.q - 1)
}

pub fn columns(grid: &GridSpec) -> Vec<String> {
    let (on, off) = payload_bins(grid);
    let mut c = vec!["k".to_string()];
    c.extend(on.map(|b| format!("switch_on_off_bin_{b}")));
    c.extend(off.map(|b| format!("switch_off_on_bin_{b}")));
    c
}

pub fn payload(grid: &GridSpec, gs: &PolicyPair) -> Vec<f64> {
    let (on, off) = payload_bins(grid);
    on.map(|b| gs.switch_on[b - 1])
        .chain(off.map(|b| gs.switch_off[b - 1]))
        .collect()
}

/// Inverse of [`payload`]; the structural entries are checked, not trusted.
pub fn policy_from_payload(grid: &GridSpec, values: &[f64]) -> Result<PolicyPair, CliError> {
    if values.len() != payload_len(grid) {
        return Err(CliError::Config(format!(
            "broadcast payload has {} numbers, expected {}",
            values.len(),
            payload_len(grid)
        )));
    }
    let (kappa_on, rest) = values.split_at(grid.q - 1);
    let (kappa_off, last) = rest.split_at(grid.q - 2);
    if last[0] != 0.0 {
        return Err(CliError::Config(format!(
            "switch-off probability at on bin {} must be 0, got {}",
            grid.q, last[0]
        )));
    }
    PolicyPair::from_kappa(grid, kappa_on, kappa_off).map_err(|e| CliError::Config(e.to_string()))
}

pub fn fixed_entries_header(grid: &GridSpec) -> String {
    format!(
        "# fixed entries: switch-on 0 at off bins 1..{m}, 1 at off bin {n}; switch-off 1 at on bin 1, 0 at on bins {q1}..{n}\n",
        m = grid.m,
        n = grid.n,
        q1 = grid.q + 1
    )
}

pub fn export(path: &Path, header: &str, grid: &GridSpec, schedule: &[PolicyPair]) -> Result<(), CliError> {
    let cols = columns(grid);
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = schedule
        .iter()
        .enumerate()
        .map(|(k, gs)| std::iter::once(k as f64).chain(payload(grid, gs)).collect())
        .collect();
    let header = format!("{header}{}", fixed_entries_header(grid));
    io::write_table(path, &header, &col_refs, &rows)
}

pub fn import(path: &Path, grid: &GridSpec) -> Result<Vec<PolicyPair>, CliError> {
    let (cols, rows) = io::read_table(path)?;
    if cols != columns(grid) {
        return Err(CliError::Config(format!("{}: unexpected columns {cols:?}", path.display())));
    }
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            if row[0] != k as f64 {
                return Err(CliError::Config(format!("{}: row {k} is labelled step {}", path.display(), row[0])));
            }
            policy_from_payload(grid, &row[1..])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcl_core::grid::build_grid;

    #[test]
    fn reference_grid_sends_eighteen_numbers() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        assert_eq!(payload_len(&g), 18);
        assert_eq!(payload(&g, &PolicyPair::thermostat(&g)).len(), 18);
        assert_eq!(columns(&g).len(), 19);
    }

    #[test]
    fn payload_inverts() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let on: Vec<f64> = (0..9).map(|i| i as f64 / 17.0).collect();
        let off: Vec<f64> = (0..8).map(|i| 1.0 / (i as f64 + 3.0)).collect();
        let gs = PolicyPair::from_kappa(&g, &on, &off).unwrap();
        assert_eq!(policy_from_payload(&g, &payload(&g, &gs)).unwrap(), gs);
    }

    #[test]
    fn nonzero_structural_entry_is_rejected() {
        let g = build_grid(20.0, 22.0, 10, 2).unwrap();
        let mut v = payload(&g, &PolicyPair::thermostat(&g));
        v[17] = 0.25;
        assert!(policy_from_payload(&g, &v).is_err());
        assert!(policy_from_payload(&g, &v[..17]).is_err());
    }
}
