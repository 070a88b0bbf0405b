use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use villadsen_core::af_intertwining::{intertwine, Mode, SubsequenceOptions};
use villadsen_core::dimension_system::{
    simplicity_verdict, unique_trace_diagnostic, unitality_residuals, SimplicityVerdict, UniqueTraceVerdict,
};
use villadsen_core::exact::{self, parse_rational, Exact};
use villadsen_core::gen::seeded_rng;
use villadsen_core::partition_scheme::{layout_sizes, random_partition, single_generator_samples, unit_sample};
use villadsen_core::trace_tower::{extend_af_trace, fiber_check, LevelTrace};
use villadsen_core::{
    certify, compose, intertwiner, recheck_certificate, trace_pullback_matrix, validate_partition, verify_commutation,
    AFTrace, CertificateVerdict, IntertwiningVerdict, LevelPermutationFamily, Measure, Neighborhood, Observable,
    PoulsenCertificate, Rational, TraceTower, ValueFn,
};

use crate::config::{parse_config, Loaded};
use crate::report::{InputDigest, Report, Verdict, REPORT_SCHEMA};
use crate::CliError;

/// Largest number of observables the `indicators` preset may expand to.
pub const PRESET_CAP: usize = 1 << 16;

#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "villadsen", version, about = "Exact finite-stage certificates for Villadsen inductive systems")]
pub struct Cli {
    /// System configuration (JSON).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,

    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Structural checks on the system and any partitions.
    Validate,
    /// Composed multiplicities and the trace pullback between two levels.
    Compose {
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
    },
    /// Simplicity of the diagram up to a horizon, or exactly for periodic tails.
    Simplicity {
        #[arg(long, default_value_t = 12)]
        horizon: usize,
    },
    /// Contraction of the trace simplices along the tower.
    UniqueTrace {
        #[arg(long, default_value_t = 12)]
        horizon: usize,
        #[arg(long, default_value = "1/100")]
        tol: String,
    },
    /// Random partitions and permutations, the induced intertwiner and its check.
    PermutePartitions {
        #[arg(long, default_value_t = 1)]
        level: usize,
    },
    /// Extend a trace on the AF subalgebra to the whole system.
    ExtendTrace {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Certify that an extreme trace lies in a neighbourhood of a given one.
    PoulsenCert {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        observables: PathBuf,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
    },
    /// Recompute a certificate's deviations from its selections.
    Recheck {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        observables: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        epsilon: Option<String>,
    },
    /// Compare the system with and without point evaluations.
    Intertwine {
        #[arg(long)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        #[arg(long)]
        r_cap: Option<String>,
        #[arg(long, default_value_t = 4)]
        terms: usize,
        #[arg(long, default_value = "1/100")]
        tol: String,
        #[arg(long)]
        allow_constant: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Compose { .. } => "compose",
            Command::Simplicity { .. } => "simplicity",
            Command::UniqueTrace { .. } => "unique-trace",
            Command::PermutePartitions { .. } => "permute-partitions",
            Command::ExtendTrace { .. } => "extend-trace",
            Command::PoulsenCert { .. } => "poulsen-cert",
            Command::Recheck { .. } => "recheck",
            Command::Intertwine { .. } => "intertwine",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Auto,
    Constant,
    Cone,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Auto => Mode::Auto,
            ModeArg::Constant => Mode::Constant,
            ModeArg::Cone => Mode::Cone,
        }
    }
}

/// Scalar AF tuple at one level; lower levels follow by pullback.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfInput {
    pub level: usize,
    #[serde(with = "exact::vec")]
    pub alpha: Vec<Rational>,
}

/// The trace to approximate: one measure per summand at `level`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceInput {
    pub level: usize,
    pub measures: Vec<Measure>,
    #[serde(default)]
    pub af: Option<AfInput>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendInput {
    pub af: AfInput,
    /// One measure per summand at level 1.
    pub seeds: Vec<Measure>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Every single-coordinate indicator on every summand.
    Indicators,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesInput {
    pub level: usize,
    #[serde(default)]
    pub epsilon: Option<Exact<Rational>>,
    #[serde(default)]
    pub groups: Vec<Vec<Observable>>,
    #[serde(default)]
    pub preset: Option<Preset>,
}

struct Inputs {
    digests: Vec<InputDigest>,
}

impl Inputs {
    fn read(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        self.digests.push(InputDigest::new(role, &path.display().to_string(), &bytes));
        String::from_utf8(bytes).map_err(|e| CliError::Schema { path: role.into(), message: e.to_string() })
    }

    fn json<T: DeserializeOwned>(&mut self, role: &str, path: &Path) -> Result<T, CliError> {
        let text = self.read(role, path)?;
        parse_json(role, &text)
    }
}

fn parse_json<T: DeserializeOwned>(role: &str, text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema { path: format!("{role}:{}", e.path()), message: e.inner().to_string() })
}

fn rational_flag(name: &str, text: &str) -> Result<Rational, CliError> {
    parse_rational(text).map_err(|e| CliError::Usage(format!("--{name}: {e}")))
}

struct Outcome {
    results: Value,
    verdict: Verdict,
    rng_seed: Option<u64>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Runs one command and assembles its report; never panics on bad input.
pub fn execute(cli: &Cli) -> Report {
    let start = Instant::now();
    let mut inputs = Inputs { digests: Vec::new() };
    let outcome = run(cli, &mut inputs);
    let (results, verdict, rng_seed, exit_code, error) = match outcome {
        Ok(o) => {
            let code = o.verdict.exit_code();
            (o.results, o.verdict, o.rng_seed, code, None)
        }
        Err(e) => {
            let code = e.exit_code();
            let verdict = if code == crate::exit::FAIL { Verdict::Fail } else { Verdict::Error };
            (Value::Null, verdict, None, code, Some(e.to_string()))
        }
    };
    Report {
        schema: REPORT_SCHEMA,
        command: cli.command.name().into(),
        args: to_value(&cli.command),
        inputs: inputs.digests,
        rng_seed,
        results,
        verdict,
        exit_code,
        error,
        wall_time_ms: start.elapsed().as_millis() as u64,
    }
}

fn run(cli: &Cli, inputs: &mut Inputs) -> Result<Outcome, CliError> {
    let path = cli.system.as_ref().ok_or_else(|| CliError::Usage("--system <FILE> is required".into()))?;
    let text = inputs.read("system", path)?;
    let loaded = parse_config(&text)?;
    if let Command::Validate = cli.command {
        return Ok(validate_outcome(&loaded));
    }
    loaded.require_valid()?;
    match &cli.command {
        Command::Validate => unreachable!("handled above"),
        Command::Compose { from, to } => run_compose(&loaded, *from, *to),
        Command::Simplicity { horizon } => {
            let report = simplicity_verdict(&loaded.system, clamp_horizon(&loaded, *horizon))?;
            let ok = matches!(report.verdict, SimplicityVerdict::Simple | SimplicityVerdict::SimplePeriodic);
            Ok(Outcome { results: to_value(&report), verdict: if ok { Verdict::Ok } else { Verdict::Fail }, rng_seed: None })
        }
        Command::UniqueTrace { horizon, tol } => {
            let tol = rational_flag("tol", tol)?;
            let report = unique_trace_diagnostic(&loaded.system, clamp_horizon(&loaded, *horizon), &tol)?;
            let ok = matches!(report.verdict, UniqueTraceVerdict::UniqueTraceLikely | UniqueTraceVerdict::UniqueTracePeriodic);
            Ok(Outcome { results: to_value(&report), verdict: if ok { Verdict::Ok } else { Verdict::Fail }, rng_seed: None })
        }
        Command::PermutePartitions { level } => run_permute(&loaded, *level),
        Command::ExtendTrace { trace } => {
            let input: ExtendInput = inputs.json("trace", trace)?;
            run_extend(&loaded, input)
        }
        Command::PoulsenCert { trace, observables, epsilon, horizon } => {
            let trace: TraceInput = inputs.json("trace", trace)?;
            let obs: ObservablesInput = inputs.json("observables", observables)?;
            let (tau, nbhd, af) = certificate_inputs(&loaded, trace, obs, epsilon.as_deref(), *horizon)?;
            let cert = certify(&loaded.system, &loaded.seed, &tau, &nbhd, &af, *horizon)?;
            let verdict = match cert.verdict {
                CertificateVerdict::Pass => Verdict::Pass,
                CertificateVerdict::Fail => Verdict::Fail,
            };
            Ok(Outcome { results: json!({ "certificate": cert }), verdict, rng_seed: None })
        }
        Command::Recheck { trace, observables, certificate, epsilon } => {
            let trace: TraceInput = inputs.json("trace", trace)?;
            let obs: ObservablesInput = inputs.json("observables", observables)?;
            let doc: Value = inputs.json("certificate", certificate)?;
            // a bare certificate or a full poulsen-cert report
            let body = doc.pointer("/results/certificate").cloned().unwrap_or(doc);
            let cert: PoulsenCertificate = parse_json("certificate", &body.to_string())?;
            let horizon = cert.depth;
            let eps = epsilon.clone().unwrap_or_else(|| cert.epsilon.to_string());
            let (tau, nbhd, af) = certificate_inputs(&loaded, trace, obs, Some(&eps), horizon)?;
            let deviations = recheck_certificate(&loaded.system, &loaded.seed, &tau, &nbhd, &af, &cert)?;
            let matches = deviations == cert.deviations;
            let within = deviations.iter().all(|d| d.deviation < nbhd.epsilon);
            let verdict = if matches && within { Verdict::Pass } else { Verdict::Fail };
            Ok(Outcome {
                results: json!({ "matches": matches, "within_epsilon": within, "deviations": deviations }),
                verdict,
                rng_seed: None,
            })
        }
        Command::Intertwine { depth, mode, r_cap, terms, tol, allow_constant } => {
            let opts = SubsequenceOptions {
                mode: (*mode).into(),
                terms: *terms,
                tolerance: rational_flag("tol", tol)?,
                r_cap: r_cap.as_deref().map(|c| rational_flag("r-cap", c)).transpose()?,
                allow_constant: *allow_constant,
            };
            let sys = loaded.af_system()?;
            let report = intertwine(&sys, *depth, &opts)?;
            let verdict = if report.verdict == IntertwiningVerdict::Undecided { Verdict::Fail } else { Verdict::Pass };
            Ok(Outcome { results: to_value(&report), verdict, rng_seed: None })
        }
    }
}

/// Finite systems are only examined as far as they go.
fn clamp_horizon(loaded: &Loaded, horizon: usize) -> usize {
    loaded.system.available_depth().map_or(horizon, |d| horizon.min(d))
}

fn validate_outcome(loaded: &Loaded) -> Outcome {
    let units: Vec<Value> = loaded.system.levels.iter().map(|l| to_value(&l.n.iter().map(|v| v.to_string()).collect::<Vec<_>>())).collect();
    Outcome {
        results: json!({
            "valid": loaded.report.is_valid(),
            "violations": loaded.report.violations,
            "explicit_levels": loaded.system.explicit_depth(),
            "order_units": units,
            "periodic_tail": loaded.system.tail.is_some(),
            "seed_algebra": {
                "block_dims": loaded.seed.block_dims,
                "noncommutative": loaded.seed.is_noncommutative(),
                "multiple_traces": loaded.seed.has_multiple_traces(),
            },
        }),
        verdict: if loaded.report.is_valid() { Verdict::Ok } else { Verdict::Fail },
        rng_seed: None,
    }
}

fn run_compose(loaded: &Loaded, from: usize, to: usize) -> Result<Outcome, CliError> {
    if to <= from || from == 0 {
        return Err(CliError::Usage(format!("need 1 <= --from < --to, got {from} and {to}")));
    }
    let t = to - from;
    let theta = compose(&loaded.system, from, t)?;
    let pullback = trace_pullback_matrix(&loaded.system, from, t)?;
    let residuals = unitality_residuals(&loaded.system, from, t)?;
    let sys = loaded.system.materialize(to)?;
    Ok(Outcome {
        results: json!({
            "from": from,
            "to": to,
            "n_from": sys.n(from)?.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "n_to": sys.n(to)?.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "theta": theta,
            "pullback": pullback.entries,
            "column_stochastic": pullback.is_column_stochastic(),
            "unitality_residuals": residuals.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        }),
        verdict: Verdict::Ok,
        rng_seed: None,
    })
}

fn run_permute(loaded: &Loaded, level: usize) -> Result<Outcome, CliError> {
    let seed = loaded.config.rng_seed;
    let mut rng = seeded_rng(seed);
    let sys = &loaded.system;
    let p = match loaded.partition(level) {
        Some(p) => p.clone(),
        None => random_partition(sys, level, &mut rng)?,
    };
    let q = random_partition(sys, level, &mut rng)?;
    let sigma = LevelPermutationFamily::random(&layout_sizes(sys, level)?, &mut rng);
    let valid = validate_partition(&p, sys, level)?.is_valid() && validate_partition(&q, sys, level)?.is_valid();
    let gamma = intertwiner(&p, &q, &sigma)?;
    let mut samples = single_generator_samples(sys, level)?;
    samples.push(unit_sample(sys, level)?);
    let commutes = verify_commutation(&p, &q, &sigma, &gamma, sys, level, &samples)?;
    Ok(Outcome {
        results: json!({
            "level": level,
            "p": p,
            "q": q,
            "sigma": sigma,
            "gamma": gamma,
            "partitions_valid": valid,
            "samples": samples.len(),
            "commutes": commutes,
        }),
        verdict: if commutes && valid { Verdict::Pass } else { Verdict::Fail },
        rng_seed: Some(seed),
    })
}

fn af_trace(loaded: &Loaded, af: Option<AfInput>, default_top: usize) -> Result<AFTrace, CliError> {
    let af = match af {
        Some(af) => af,
        None => {
            let top = loaded.system.available_depth().map_or(default_top, |d| d.min(default_top));
            if loaded.system.materialize(top)?.j(top)? != 1 {
                return Err(CliError::Usage(format!("level {top} has several summands; give the AF tuple as \"af\"")));
            }
            AfInput { level: top, alpha: vec![Rational::from_integer(1.into())] }
        }
    };
    let sys = loaded.system.materialize(af.level)?;
    Ok(AFTrace::from_top(&sys, af.level, af.alpha)?)
}

fn run_extend(loaded: &Loaded, input: ExtendInput) -> Result<Outcome, CliError> {
    let top = input.af.level;
    let af = af_trace(loaded, Some(input.af), top)?;
    let sys = loaded.system.materialize(top)?;
    let tower = extend_af_trace(&sys, &loaded.seed, &af, input.seeds)?;
    let issues = tower.consistency(&sys, &loaded.seed)?;
    let in_fiber = fiber_check(&tower, &af);
    let ok = issues.is_empty() && in_fiber;
    Ok(Outcome {
        results: json!({ "tower": tower, "consistency_issues": issues, "in_fiber": in_fiber }),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        rng_seed: None,
    })
}

fn certificate_inputs(
    loaded: &Loaded,
    trace: TraceInput,
    obs: ObservablesInput,
    epsilon: Option<&str>,
    horizon: usize,
) -> Result<(TraceTower, Neighborhood, AFTrace), CliError> {
    if trace.level != obs.level {
        return Err(CliError::Usage(format!("trace is at level {} but observables at level {}", trace.level, obs.level)));
    }
    let level = trace.level;
    let af = af_trace(loaded, trace.af, level + horizon)?;
    let alpha = af
        .alpha(level)
        .ok_or_else(|| CliError::Usage(format!("AF tuple does not cover level {level}")))?
        .to_vec();
    let tau = TraceTower::new(vec![LevelTrace::new(level, alpha, trace.measures)])?;
    let epsilon = match (epsilon, obs.epsilon) {
        (Some(text), _) => rational_flag("epsilon", text)?,
        (None, Some(e)) => e.0,
        (None, None) => return Err(CliError::Usage("no epsilon given on the command line or in the observables".into())),
    };
    let mut groups = obs.groups;
    if let Some(Preset::Indicators) = obs.preset {
        let m = loaded.seed.m();
        let sizes = loaded.system.materialize(level)?.n_usize(level)?;
        let count = sizes.iter().fold(0usize, |acc, &n| acc.saturating_add(n.saturating_mul(m)));
        if count > PRESET_CAP {
            return Err(villadsen_core::Error::ResourceCap(format!("{count} indicator observables exceed the preset cap {PRESET_CAP}")).into());
        }
        for (k, &n) in sizes.iter().enumerate() {
            for c in 0..n {
                for x in 0..m {
                    groups.push(vec![Observable::new(k, n, ValueFn::indicator(c, x as u8))?]);
                }
            }
        }
    }
    Ok((tau, Neighborhood { level, epsilon, groups }, af))
}
