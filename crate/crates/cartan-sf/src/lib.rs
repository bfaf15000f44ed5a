//! Length-minimizing trajectory synthesis for the l-infinity sub-Finsler
//! problem on the Cartan group.

pub mod lie_cartan;
pub mod vertical;
