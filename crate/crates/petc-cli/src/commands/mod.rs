pub mod design_output;
pub mod design_state;
pub mod example;
pub mod montecarlo;
pub mod simulate;
pub mod timing;
pub mod verify_lmi;
