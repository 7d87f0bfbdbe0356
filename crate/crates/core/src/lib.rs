//! A desk-scale lab for tool-integrated reinforcement learning on long-video
//! question answering, run entirely against a synthetic video sandbox.

pub mod advantage;
pub mod cli;
pub mod rewards;
pub mod sandbox;
pub mod synth;
pub mod toolkit;
pub mod toolparse;
pub mod trainer;
pub mod trajectory;
pub mod util;
