//! Turning command-line flags into compositions and grids.

use clap::{Args, ValueEnum};
use fourier_accountant::{DirectionMode, Grid, MechanismSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Poisson,
    WithoutReplacement,
    WithReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    XOverY,
    YOverX,
    Both,
}

impl DirectionArg {
    pub fn name(self) -> &'static str {
        match self {
            DirectionArg::XOverY => "x_over_y",
            DirectionArg::YOverX => "y_over_x",
            DirectionArg::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MechanismArgs {
    /// Subsampling scheme of a single mechanism.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Noise multiplier.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Sampling ratio (poisson and without-replacement).
    #[arg(long)]
    pub q: Option<f64>,
    /// Batch size m (with-replacement).
    #[arg(long)]
    pub batch_size: Option<u64>,
    /// Dataset size (with-replacement).
    #[arg(long)]
    pub dataset_size: Option<u64>,
    /// Number of compositions.
    #[arg(long)]
    pub k: Option<u64>,
    /// One mechanism of a heterogeneous composition, as
    /// `scheme=poisson,sigma=1.5,q=0.01,k=100`. Repeatable.
    #[arg(long = "mech", value_name = "KEY=VALUE,...")]
    pub mech: Vec<String>,
    #[arg(long, value_enum, default_value = "x-over-y")]
    pub direction: DirectionArg,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Truncation radius L.
    #[arg(long = "L", default_value_t = 20.0)]
    pub radius: f64,
    /// Number of grid points (even).
    #[arg(long, default_value_t = 1 << 22)]
    pub n: usize,
    /// Newton stopping tolerance on delta.
    #[arg(long, default_value_t = fourier_accountant::DEFAULT_NEWTON_TOLERANCE)]
    pub newton_tol: f64,
    /// Skip the run at 2n used for the discretisation error estimate.
    #[arg(long)]
    pub no_error_estimate: bool,
}

impl GridArgs {
    pub fn grid(&self) -> Result<Grid, CliError> {
        grid(self.radius, self.n)
    }
}

pub fn grid(radius: f64, n: usize) -> Result<Grid, CliError> {
    if n % 2 != 0 {
        return Err(CliError::Usage(format!("--n must be even, got {n}")));
    }
    Ok(Grid::new(radius, n)?)
}

/// Mechanism parameters after flag parsing, before validation.
#[derive(Debug, Clone, Copy, Default)]
struct Parts {
    scheme: Option<SchemeArg>,
    sigma: Option<f64>,
    q: Option<f64>,
    batch_size: Option<u64>,
    dataset_size: Option<u64>,
    k: Option<u64>,
}

impl Parts {
    fn build(self, origin: &str) -> Result<(MechanismSpec, u64), CliError> {
        let missing = |flag: &str| CliError::Usage(format!("{origin}: missing {flag}"));
        let sigma = self.sigma.ok_or_else(|| missing("sigma"))?;
        let k = self.k.ok_or_else(|| missing("k"))?;
        let spec = match self.scheme.unwrap_or(SchemeArg::Poisson) {
            SchemeArg::Poisson => MechanismSpec::poisson(sigma, self.q.ok_or_else(|| missing("q"))?),
            SchemeArg::WithoutReplacement => {
                MechanismSpec::without_replacement(sigma, self.q.ok_or_else(|| missing("q"))?)
            }
            SchemeArg::WithReplacement => {
                if self.q.is_some() {
                    return Err(CliError::Usage(format!(
                        "{origin}: with-replacement takes batch size and dataset size, not q"
                    )));
                }
                MechanismSpec::with_replacement(
                    sigma,
                    self.batch_size.ok_or_else(|| missing("batch size"))?,
                    self.dataset_size.ok_or_else(|| missing("dataset size"))?,
                )
            }
        };
        Ok((spec, k))
    }
}

fn parse_value<T: std::str::FromStr>(group: &str, key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("--mech {group}: cannot parse {key}={value}")))
}

/// Parses one `--mech` group.
pub fn parse_mech(group: &str) -> Result<(MechanismSpec, u64), CliError> {
    let mut parts = Parts::default();
    for pair in group.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--mech {group}: expected key=value, got {pair}")))?;
        match key.trim().replace('-', "_").as_str() {
            "scheme" => {
                parts.scheme = Some(
                    SchemeArg::from_str(value.trim(), true)
                        .map_err(|_| CliError::Usage(format!("--mech {group}: unknown scheme {value}")))?,
                )
            }
            "sigma" => parts.sigma = Some(parse_value(group, key, value)?),
            "q" => parts.q = Some(parse_value(group, key, value)?),
            "batch_size" | "m" => parts.batch_size = Some(parse_value(group, key, value)?),
            "dataset_size" => parts.dataset_size = Some(parse_value(group, key, value)?),
            "k" => parts.k = Some(parse_value(group, key, value)?),
            _ => return Err(CliError::Usage(format!("--mech {group}: unknown key {key}"))),
        }
    }
    parts.build(&format!("--mech {group}"))
}

impl MechanismArgs {
    /// Components of the composition, with the requested direction applied.
    pub fn components(&self) -> Result<Vec<(MechanismSpec, u64)>, CliError> {
        let single = Parts {
            scheme: self.scheme,
            sigma: self.sigma,
            q: self.q,
            batch_size: self.batch_size,
            dataset_size: self.dataset_size,
            k: self.k,
        };
        let uses_single_flags = self.scheme.is_some()
            || self.sigma.is_some()
            || self.q.is_some()
            || self.batch_size.is_some()
            || self.dataset_size.is_some()
            || self.k.is_some();
        let components = if self.mech.is_empty() {
            vec![single.build("mechanism flags")?]
        } else if uses_single_flags {
            return Err(CliError::Usage(
                "--mech cannot be combined with --scheme, --sigma, --q, --batch-size, --dataset-size or --k".into(),
            ));
        } else {
            self.mech.iter().map(|g| parse_mech(g)).collect::<Result<_, _>>()?
        };
        let direction = match self.direction {
            DirectionArg::YOverX => fourier_accountant::Direction::YOverX,
            _ => fourier_accountant::Direction::XOverY,
        };
        Ok(components
            .into_iter()
            .map(|(spec, k)| (spec.with_direction(direction), k))
            .collect())
    }

    pub fn direction_mode(&self) -> DirectionMode {
        match self.direction {
            DirectionArg::Both => DirectionMode::Both,
            _ => DirectionMode::AsSpecified,
        }
    }

    pub fn is_heterogeneous(&self) -> bool {
        !self.mech.is_empty()
    }
}
