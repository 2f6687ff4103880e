//! The adversarial UE: it estimates its channels, recovers each AP's interference signal,
//! rebuilds the AP beampatterns and votes on the target cell.

pub mod em;
pub mod estimation;
pub mod localize;

pub use em::{em_e_step, em_m_step, m_step_objective, run_em, EmState};
pub use estimation::{draw_pilots, estimate_channel, interference_observation, ls_channel_estimate, zf_init, ChannelEstimate};
pub use localize::{
    angle_grid, detection_probability, estimate_beampattern, traverse_ray, vote_and_localize, BeampatternEstimate,
    LocalizationResult,
};
