//! Bundled demo systems for the command-line front end and the regression
//! suite: a scalar polynomial plant under state feedback, and a single-link
//! robot arm under state feedback and observer-based output feedback.

use std::sync::Arc;

use crate::iqc::{lipschitz_multiplier, Nonlinearity};
use crate::sim::{QuadForm, Scenario, SimConfig, TriggeringFunction};
use crate::symmat::{Mat, SymMatrix};
use crate::systems::{GeneralPlant, IqcPlant, ObserverDesign, StateFeedbackGains};
use crate::timing::{
    base_from_periods, ChannelTiming, OutputTimingDesign, TimingBase, TimingDesign,
};

/// Scalar polynomial plant `x' = x^2 - x^3 + u + 0.1 w` with feedback
/// `u = -2x` and a certified quartic storage part.
pub struct Example1 {
    pub plant: GeneralPlant,
    pub design: TimingDesign,
    /// Default single-run configuration.
    pub sim: SimConfig,
    /// Frequency-sweep protocol: initial-state box, disturbance bound, horizon.
    pub scenario: Scenario,
    pub h_list: Vec<f64>,
}

impl Example1 {
    pub fn v1(&self) -> QuadForm {
        QuadForm::Map(Arc::new(|x: &[f64]| {
            let v = x[0];
            1.0192 * v * v - 0.1298 * v.powi(3) + 0.4784 * v.powi(4)
        }))
    }

    pub fn triggering(&self) -> TriggeringFunction {
        TriggeringFunction::new(self.design.trigger_coefficient(), self.design.s, self.v1())
            .expect("bundled design is admissible")
    }
}

pub fn example1() -> Example1 {
    let plant = GeneralPlant::new(
        1,
        1,
        1,
        |x, u, w| vec![x[0] * x[0] - x[0].powi(3) + u[0] + 0.1 * w[0]],
        |x| vec![-2.0 * x[0]],
    )
    .with_v1(|x| 1.0192 * x[0] * x[0] - 0.1298 * x[0].powi(3) + 0.4784 * x[0].powi(4));
    let base = TimingBase::new(0.4941, 4.4302).unwrap();
    let design = TimingDesign::new(base, 0.6, 0.1, 0.1, 1.2, 1.1, 0.1).unwrap();
    Example1 {
        plant,
        design,
        sim: SimConfig {
            h: 0.1,
            t_end: 20.0,
            substeps: 64,
            seed: 1,
            w_bound: vec![0.8],
            x0: vec![0.3],
            xhat0: None,
        },
        scenario: Scenario {
            x0_lo: vec![-0.5],
            x0_hi: vec![0.5],
            w_bound: vec![0.3],
            t_end: 10.0,
            substeps: 64,
        },
        h_list: vec![0.1, 0.15, 0.2, 0.25],
    }
}

fn arm_plant(with_output: bool) -> IqcPlant {
    IqcPlant::new(
        Mat::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
        Mat::from_rows(&[&[0.0], &[1.0]]),
        Mat::from_rows(&[&[0.0], &[-1.0]]),
        Mat::from_rows(&[&[0.0], &[1.0]]),
        Mat::from_rows(&[&[1.0, 0.0]]),
        with_output.then(|| Mat::from_rows(&[&[1.0, 0.0]])),
        Nonlinearity::sine(),
        lipschitz_multiplier(1.0, 1, 1).unwrap(),
    )
    .unwrap()
}

/// Single-link robot arm under full-state feedback, with the certified
/// quadratic storage matrix and rates of its triggering design.
pub struct Example2State {
    pub plant: IqcPlant,
    pub gains: StateFeedbackGains,
    pub alpha: f64,
    pub p: SymMatrix,
    pub design: TimingDesign,
    pub sim: SimConfig,
}

impl Example2State {
    pub fn quad(&self) -> QuadForm {
        QuadForm::Matrix(self.p.clone())
    }

    pub fn triggering(&self) -> TriggeringFunction {
        TriggeringFunction::new(
            self.design.trigger_coefficient(),
            self.design.s,
            self.quad(),
        )
        .expect("bundled design is admissible")
    }
}

pub fn example2_state() -> Example2State {
    let base = TimingBase::new(5.0, 20.0).unwrap();
    Example2State {
        plant: arm_plant(true),
        gains: StateFeedbackGains::new(
            Mat::from_rows(&[&[-11.2257, -5.5774]]),
            Mat::from_rows(&[&[1.0]]),
        ),
        alpha: 1.2,
        p: SymMatrix::from_rows_upper(&[&[6.5131, 0.6581], &[0.6581, 0.7294]]),
        design: TimingDesign::new(base, 0.31, 0.04, 0.04, 1.2, 1.0, 0.6).unwrap(),
        sim: SimConfig {
            h: 0.04,
            t_end: 10.0,
            substeps: 64,
            seed: 2,
            w_bound: vec![0.1],
            x0: vec![0.5, -0.5],
            xhat0: None,
        },
    }
}

/// Single-link robot arm under observer-based output feedback with event
/// triggering in both the measurement and input channels.
pub struct Example2Output {
    pub plant: IqcPlant,
    pub observer: ObserverDesign,
    pub alpha: f64,
    pub p1: SymMatrix,
    pub p2: SymMatrix,
    pub timing: OutputTimingDesign,
    pub sim: SimConfig,
    pub scenario: Scenario,
    pub h_list: Vec<f64>,
}

impl Example2Output {
    pub fn quad_y(&self) -> QuadForm {
        QuadForm::Matrix(self.p1.clone())
    }

    pub fn quad_u(&self) -> QuadForm {
        QuadForm::Matrix(self.p2.clone())
    }

    pub fn triggering_y(&self) -> TriggeringFunction {
        TriggeringFunction::new(
            self.timing.trigger_coefficient_y(),
            self.timing.s,
            self.quad_y(),
        )
        .expect("bundled design is admissible")
    }

    pub fn triggering_u(&self) -> TriggeringFunction {
        TriggeringFunction::new(
            self.timing.trigger_coefficient_u(),
            self.timing.s,
            self.quad_u(),
        )
        .expect("bundled design is admissible")
    }
}

pub fn example2_output() -> Example2Output {
    // channel clock rates reconstructed from the published decay windows:
    // the admissible-period maximum and the contraction pairing at h = 0.02
    // pin (mu, gamma) per channel
    let base_y = base_from_periods(0.0751, 0.02, 0.627).unwrap();
    let base_u = base_from_periods(0.0639, 0.02, 0.575).unwrap();
    let timing = OutputTimingDesign::new(
        ChannelTiming {
            base: base_y,
            lambda: 0.627,
        },
        ChannelTiming {
            base: base_u,
            lambda: 0.575,
        },
        0.02,
        0.02,
        1.1,
        1.0,
        1.0,
        1.0,
        1.0,
    )
    .unwrap();
    Example2Output {
        plant: arm_plant(true),
        observer: ObserverDesign {
            l1: Mat::from_rows(&[&[-1.0]]),
            l2: Mat::from_rows(&[&[-5.1294], &[-18.0352]]),
            gains: StateFeedbackGains::new(
                Mat::from_rows(&[&[-7.3936, -3.9937]]),
                Mat::from_rows(&[&[1.0]]),
            ),
        },
        alpha: 1.1,
        p1: SymMatrix::diag(&[0.1462]),
        p2: SymMatrix::from_rows_upper(&[&[0.6307, 0.1195], &[0.1195, 0.1434]]),
        timing,
        sim: SimConfig {
            h: 0.02,
            t_end: 10.0,
            substeps: 64,
            seed: 3,
            w_bound: vec![0.05],
            x0: vec![-0.2, 0.6],
            xhat0: Some(vec![-0.3, 0.7]),
        },
        scenario: Scenario {
            x0_lo: vec![-0.5, -0.5],
            x0_hi: vec![0.5, 0.5],
            w_bound: vec![0.05],
            t_end: 10.0,
            substeps: 64,
        },
        h_list: vec![0.005, 0.01, 0.015, 0.02, 0.025],
    }
}
