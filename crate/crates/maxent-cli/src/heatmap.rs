//! Occupancy heatmaps for grid-shaped environments, as ASCII portable
//! graymaps (PGM, magic `P2`).
//!
//! One pixel per state; gray level is proportional to the log-probability,
//! floored at -12 nats for empty cells, with probability one mapping to
//! white. Emission is a pure function of the occupancy vector, so the image
//! can be regenerated byte-for-byte from the occupancy CSV.

use maxent::env::EnvSpec;

pub const LOG_FLOOR_NATS: f64 = -12.0;
const MAX_GRAY: u32 = 255;

/// Gray level for one probability.
pub fn gray_level(p: f64) -> u32 {
    if !(p > 0.0) {
        return 0;
    }
    let log_p = p.ln().clamp(LOG_FLOOR_NATS, 0.0);
    (((log_p - LOG_FLOOR_NATS) / -LOG_FLOOR_NATS) * MAX_GRAY as f64).round() as u32
}

/// State index shown at pixel `(x, y)` of the grid, if the spec is
/// grid-shaped.
pub fn grid_state_index(spec: &EnvSpec, x: usize, y: usize) -> Option<usize> {
    match spec {
        EnvSpec::Gridworld { width, .. } => Some(y * width + x),
        EnvSpec::MountainCarDisc { vel_bins, .. } => Some(x * vel_bins + y),
        _ => None,
    }
}

/// Render the occupancy vector as a PGM image, or `None` for non-grid
/// environments.
pub fn occupancy_pgm(spec: &EnvSpec, probs: &[f64]) -> Option<String> {
    let (width, height) = spec.grid_shape()?;
    debug_assert_eq!(probs.len(), width * height);
    let mut out = String::new();
    out.push_str("P2\n");
    out.push_str("# log-probability of occupancy, floor -12 nats\n");
    out.push_str(&format!("{width} {height}\n{MAX_GRAY}\n"));
    for y in 0..height {
        let row: Vec<String> = (0..width)
            .map(|x| {
                let s = grid_state_index(spec, x, y).expect("grid shape checked");
                gray_level(probs[s]).to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Some(out)
}
