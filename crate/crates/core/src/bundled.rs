//! Ready-to-run scenario configurations.

use nalgebra::DMatrix;

use crate::config::{
    system_spec, ControllerKind, OutputBlock, ReferenceBlock, RunConfig, SimulationBlock, SynthesisBlock,
};
use crate::synthesis::{Domain, Mode, Objective};

pub const EXAMPLE_NAMES: [&str; 4] = [
    "double_integrator",
    "double_integrator_gcc",
    "cubic_scalar",
    "hierarchical",
];

fn synthesis(domain: Domain) -> SynthesisBlock {
    SynthesisBlock {
        domain,
        grid: 9,
        basis_degree: 0,
        lambda: 0.0,
        mode: Mode::Stabilize,
        alpha1: 0.1,
        alpha2: 10.0,
        margin: 1e-6,
        q: None,
        r: None,
        block_diagonal: None,
        rho_max: 100.0,
        objective: Objective::Feasibility,
        verify_samples: 4096,
    }
}

fn simulation(x0: Vec<f64>, t_final: f64) -> SimulationBlock {
    SimulationBlock {
        x0,
        t_final,
        dt: 1e-3,
        controller: ControllerKind::Geodesic,
        distance_interval: 0.1,
        geodesic_segments: 32,
        stop_below_error: None,
    }
}

fn b_last(n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    b
}

fn output(name: &str) -> OutputBlock {
    OutputBlock {
        dir: Some(format!("{name}_out").into()),
        certificate: Some(format!("{name}_certificate.json").into()),
    }
}

/// The named configuration, or `None` for an unknown name.
pub fn example_config(name: &str) -> Option<RunConfig> {
    let cfg = match name {
        // Tracks x⋆ = (sin t, cos t), u⋆ = −sin t with rate 0.5.
        "double_integrator" => {
            let mut s = synthesis(Domain::symmetric(2, 5.0));
            s.lambda = 0.5;
            s.mode = Mode::Exponential;
            RunConfig {
                system: system_spec(&["x2", "0"], &b_last(2)),
                synthesis: s,
                reference: Some(ReferenceBlock::Harmonic {
                    omega: 1.0,
                    x_offset: vec![0.0, 0.0],
                    x_sin: vec![1.0, 0.0],
                    x_cos: vec![0.0, 1.0],
                    u_offset: vec![0.0],
                    u_sin: vec![-1.0],
                    u_cos: vec![0.0],
                }),
                simulation: Some(simulation(vec![2.0, -1.0], 10.0)),
                output: output(name),
                base_dir: Default::default(),
            }
        }
        "double_integrator_gcc" => {
            let mut s = synthesis(Domain::symmetric(2, 5.0));
            s.mode = Mode::GuaranteedCost;
            s.q = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
            s.r = Some(vec![vec![1.0]]);
            let mut sim = simulation(vec![1.0, -0.5], 50.0);
            sim.stop_below_error = Some(1e-6);
            RunConfig {
                system: system_spec(&["x2", "0"], &b_last(2)),
                synthesis: s,
                reference: Some(ReferenceBlock::Equilibrium {
                    x: vec![0.0, 0.0],
                    u: vec![0.0],
                }),
                simulation: Some(sim),
                output: output(name),
                base_dir: Default::default(),
            }
        }
        "cubic_scalar" => RunConfig {
            system: system_spec(&["-x1^3"], &b_last(1)),
            synthesis: synthesis(Domain::symmetric(1, 3.0)),
            reference: Some(ReferenceBlock::Equilibrium {
                x: vec![0.0],
                u: vec![0.0],
            }),
            simulation: Some(simulation(vec![2.0], 10.0)),
            output: output(name),
            base_dir: Default::default(),
        },
        // A stable y-subsystem driven by a controllable z-subsystem, with a
        // block-diagonal metric.
        "hierarchical" => {
            let mut s = synthesis(Domain::symmetric(2, 5.0));
            s.block_diagonal = Some(vec![1, 1]);
            RunConfig {
                system: system_spec(&["-x1 + x2", "0"], &b_last(2)),
                synthesis: s,
                reference: Some(ReferenceBlock::Equilibrium {
                    x: vec![0.0, 0.0],
                    u: vec![0.0],
                }),
                simulation: Some(simulation(vec![2.0, -1.0], 10.0)),
                output: output(name),
                base_dir: Default::default(),
            }
        }
        _ => return None,
    };
    Some(cfg)
}
