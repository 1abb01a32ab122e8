//! `petc example`: end-to-end reproduction of the bundled demos, either a
//! single showcase run or the full frequency-sweep tables.

use clap::Args;

use crate::{CliError, OutArgs};

#[derive(Args, Debug)]
pub struct ExampleArgs {
    /// Demo name: example1, example2, example2-output.
    #[arg(long)]
    name: String,
    /// Reproduce the state-feedback frequency sweep (example1 only).
    #[arg(long)]
    table1: bool,
    /// Reproduce the output-feedback frequency sweep (example2-output only).
    #[arg(long)]
    table2: bool,
    /// Batch size for the table sweeps.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    /// Render an SVG preview for showcase runs.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    out: OutArgs,
}

pub fn run(args: ExampleArgs) -> Result<(), CliError> {
    match (args.table1, args.table2) {
        (true, true) => Err(CliError::Usage("pick one of --table1 or --table2".into())),
        (true, false) => {
            if args.name != "example1" {
                return Err(CliError::Usage(
                    "--table1 reproduces the example1 state-feedback sweep".into(),
                ));
            }
            super::montecarlo::run(table_args(&args, None))
        }
        (false, true) => {
            if args.name != "example2-output" {
                return Err(CliError::Usage(
                    "--table2 reproduces the example2-output sweep".into(),
                ));
            }
            super::montecarlo::run(table_args(&args, None))
        }
        (false, false) => showcase(&args),
    }
}

fn table_args(args: &ExampleArgs, h_list: Option<Vec<f64>>) -> super::montecarlo::MontecarloArgs {
    super::montecarlo::MontecarloArgs::for_example(
        args.name.clone(),
        h_list,
        args.runs,
        args.seed,
        args.out.out.clone(),
    )
}

fn showcase(args: &ExampleArgs) -> Result<(), CliError> {
    let sim_args = super::simulate::SimulateArgs::for_example(
        args.name.clone(),
        args.plot,
        args.out.out.clone(),
    );
    super::simulate::run(sim_args)
}
