//! Episode metrics.

/// Aggregate quantities of one simulated episode.
#[derive(Debug, Clone)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub steps_to_goal: Option<usize>,
    pub path_length: f64,
    pub min_h: f64,
    pub violation_steps: usize,
    pub mean_residual: f64,
    pub max_residual: f64,
    pub wall_time_s: f64,
}
