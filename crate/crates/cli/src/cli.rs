//! Argument parsing. Every config key is also a flag; flags win over the
//! config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{cmd_attribute, cmd_gradcheck, cmd_metrics, cmd_scan_path, cmd_train_fixture, Outcome};
use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "splitig", version, about = "Split Integrated Gradients on desk-scale models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Left, right and full attributions for every sample and psi.
    Attribute(ConfigArgs),
    /// Output and gradient norm along the path of one sample (CSV + SVG).
    ScanPath(ConfigArgs),
    /// Norm ratios, cosines, ABPC and sensitivity per sample and per psi.
    Metrics(ConfigArgs),
    /// Train an MLP fixture and write its weight file.
    TrainFixture(ConfigArgs),
    /// Compare reverse-mode gradients with central differences.
    Gradcheck(ConfigArgs),
}

macro_rules! config_args {
    ($( $(#[$doc:meta])* $field:ident => $key:literal ),* $(,)?) => {
        #[derive(Debug, Clone, Default, Args)]
        pub struct ConfigArgs {
            /// Flat `key = value` file; flags override its values.
            #[arg(long)]
            pub config: Option<PathBuf>,
            $(
                $(#[$doc])*
                #[arg(long, value_name = "VALUE", num_args = 0..=1, default_missing_value = "true")]
                pub $field: Option<String>,
            )*
        }

        impl ConfigArgs {
            /// `(key, value)` for every flag given.
            pub fn overrides(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $( if let Some(v) = &self.$field { out.push(($key, v.as_str())); } )*
                out
            }
        }
    };
}

config_args! {
    /// Fixture name (linear-2d, logistic-1d, mlp-blob-2d, mlp-saturating) or weight file.
    model => "model",
    /// `default`, `synthetic` or a CSV path.
    dataset => "dataset",
    /// Seed of the synthetic generator.
    gen_seed => "gen-seed",
    /// Samples drawn by the synthetic generator.
    gen_samples => "gen-samples",
    /// Classes of the synthetic generator.
    gen_classes => "gen-classes",
    /// Use only the first N samples (`all` for every sample).
    samples => "samples",
    /// Drop samples the classifier gets wrong.
    exclude_misclassified => "exclude-misclassified",
    /// Comma-separated saturation fractions in (0, 1).
    psi => "psi",
    /// Grid intervals on [0, 1].
    n_steps => "n-steps",
    /// right-riemann, left-riemann or trapezoid.
    rule => "rule",
    /// `zero` or a constant value for every feature.
    baseline => "baseline",
    /// Compute ABPC (true/false).
    abpc => "abpc",
    /// Compute sensitivity (true/false).
    sensitivity => "sensitivity",
    /// Ablation steps for ABPC.
    ablation_increments => "ablation-increments",
    /// L-infinity radius for sensitivity.
    radius => "radius",
    /// Perturbations per sample for sensitivity.
    perturbations => "perturbations",
    /// Sensitivity seed.
    seed => "seed",
    /// Sample index for scan-path.
    sample => "sample",
    /// Comma-separated layer widths for train-fixture.
    layer_sizes => "layer-sizes",
    /// relu or tanh for train-fixture.
    activation => "activation",
    /// Training epochs.
    epochs => "epochs",
    /// Training learning rate.
    learning_rate => "learning-rate",
    /// Training seed.
    train_seed => "train-seed",
    /// Finite-difference step for gradcheck.
    fd_step => "fd-step",
    /// Largest accepted relative deviation for gradcheck.
    gradcheck_tolerance => "gradcheck-tolerance",
    /// Output directory.
    output => "output",
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), self.overrides())
    }
}

impl Command {
    fn args(&self) -> &ConfigArgs {
        match self {
            Command::Attribute(a)
            | Command::ScanPath(a)
            | Command::Metrics(a)
            | Command::TrainFixture(a)
            | Command::Gradcheck(a) => a,
        }
    }

    pub fn run(&self) -> CliResult<Outcome> {
        let config = self.args().resolve()?;
        match self {
            Command::Attribute(_) => cmd_attribute(&config),
            Command::ScanPath(_) => cmd_scan_path(&config),
            Command::Metrics(_) => cmd_metrics(&config),
            Command::TrainFixture(_) => cmd_train_fixture(&config),
            Command::Gradcheck(_) => cmd_gradcheck(&config),
        }
    }
}

/// Runs the parsed command, reports to stdout/stderr and returns the exit
/// status.
pub fn execute(cli: &Cli) -> i32 {
    match cli.command.run() {
        Ok(outcome) => {
            for m in &outcome.messages {
                println!("{m}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if !outcome.warnings.is_empty() {
                eprintln!("{} warning(s)", outcome.warnings.len());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KEYS;

    #[test]
    fn every_key_has_a_flag() {
        let mut args = ConfigArgs::default();
        macro_rules! fill {
            ($($f:ident),*) => { $( args.$f = Some(String::new()); )* };
        }
        fill!(
            model, dataset, gen_seed, gen_samples, gen_classes, samples, exclude_misclassified, psi, n_steps,
            rule, baseline, abpc, sensitivity, ablation_increments, radius, perturbations, seed, sample,
            layer_sizes, activation, epochs, learning_rate, train_seed, fd_step, gradcheck_tolerance, output
        );
        let keys: Vec<&str> = args.overrides().iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["splitig", "metrics", "--psi", "0.9", "--exclude-misclassified"]).unwrap();
        let Command::Metrics(args) = &cli.command else { panic!() };
        let config = args.resolve().unwrap();
        assert_eq!(config.psi, vec![0.9]);
        assert!(config.exclude_misclassified);
    }
}
