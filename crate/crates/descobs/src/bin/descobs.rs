//! Command line front end: solvability checks, synthesis, simulation, and
//! certificate verification for functional observers of descriptor systems.
//!
//! Exit codes: 0 success, 1 bad input, 2 failed condition or certificate,
//! 3 infeasible or inconsistent simulation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Complex;

use descobs::error::Error;
use descobs::existence::{check_full_conditions, check_reduced};
use descobs::io;
use descobs::model::{parse_signal_spec, DescriptorSystem, ScalarSignal, Signal, TolerancePolicy};
use descobs::numkit::Vector;
use descobs::reduction::{reduce, split_functional, staircase};
use descobs::simulation::{
    matched_initial_w, project_initial_condition, simulate, SimulationConfig,
};
use descobs::synthesis::{synthesize_with_details, verify_observer, ObserverRealization};

#[derive(Parser)]
#[command(
    name = "descobs",
    version,
    about = "Functional observers for linear descriptor systems",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct TolArgs {
    /// Override the rank decision threshold (default: scaled machine epsilon)
    #[arg(long, value_name = "TOL")]
    tol_rank: Option<f64>,
    /// Bound on the coupling residuals of an accepted realization
    #[arg(long, value_name = "TOL", default_value_t = 1e-8)]
    residual_tol: f64,
    /// Require eigenvalues of N left of -MARGIN
    #[arg(long, value_name = "MARGIN", default_value_t = 0.0)]
    stability_margin: f64,
}

impl TolArgs {
    fn policy(&self) -> TolerancePolicy {
        TolerancePolicy {
            rank_tol_override: self.tol_rank,
            residual_tol: self.residual_tol,
            stability_margin: self.stability_margin,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide the sufficient solvability conditions for a system
    Check {
        /// System description (JSON)
        system: PathBuf,
        /// Also run the original-size diagnostic and the rank bookkeeping
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Build an observer realization and write it as JSON
    Synthesize {
        /// System description (JSON)
        system: PathBuf,
        /// Output path for the realization (stdout when omitted)
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Desired observer spectrum, comma separated (e.g. "-1,-2+1i,-2-1i")
        #[arg(long, value_name = "POLES", allow_hyphen_values = true)]
        place_poles: Option<String>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Integrate plant and observer together and emit a CSV trace
    Simulate {
        /// System description (JSON)
        system: PathBuf,
        /// Reuse a saved realization instead of synthesizing now
        #[arg(long)]
        observer: Option<PathBuf>,
        /// Final time of the run
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Fixed integrator step
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Start the observer matched to the plant (zero internal error)
        #[arg(long)]
        matched_init: bool,
        /// Plant start in original coordinates, comma separated
        #[arg(long, value_name = "X0", allow_hyphen_values = true)]
        ic: Option<String>,
        /// Observer start, comma separated (ignored with --matched-init)
        #[arg(long, value_name = "W0", allow_hyphen_values = true)]
        w0: Option<String>,
        /// Driving input, e.g. "sin(t)" or "sin(2t),exp(-0.5t)"
        #[arg(long, value_name = "SPEC")]
        input: Option<String>,
        /// CSV output path (stdout when omitted)
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Desired observer spectrum when synthesizing on the fly
        #[arg(long, value_name = "POLES", allow_hyphen_values = true)]
        place_poles: Option<String>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Re-check a saved realization against its system
    Verify {
        /// System description (JSON)
        system: PathBuf,
        /// Realization to verify (JSON)
        observer: PathBuf,
        #[command(flatten)]
        tol: TolArgs,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFinite
        | Error::DimensionMismatch(_)
        | Error::DimensionError(_)
        | Error::ParseError(_)
        | Error::Io(_)
        | Error::TooLarge { .. } => 1,
        Error::H1Failed { .. }
        | Error::H2Failed { .. }
        | Error::NotDetectable { .. }
        | Error::PreconditionViolated(_)
        | Error::ResidualTooLarge { .. }
        | Error::Unstable { .. }
        | Error::PlacementFailed(_)
        | Error::NoConvergence(_) => 2,
        Error::Infeasible { .. } | Error::InconsistentDynamics { .. } => 3,
    }
}

fn fmt_c(c: Complex<f64>) -> String {
    if c.im == 0.0 {
        format!("{:.6}", c.re)
    } else {
        format!("{:.6}{:+.6}i", c.re, c.im)
    }
}

fn parse_complex(s: &str) -> Result<Complex<f64>, Error> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::ParseError("empty pole".into()));
    }
    let Some(body) = t.strip_suffix('i') else {
        let re: f64 = t
            .parse()
            .map_err(|_| Error::ParseError(format!("bad pole '{t}'")))?;
        return Ok(Complex::new(re, 0.0));
    };
    // split real and imaginary parts at the last sign that is not an
    // exponent sign and not leading
    let bytes = body.as_bytes();
    let mut split = None;
    for idx in (1..bytes.len()).rev() {
        let c = bytes[idx];
        if (c == b'+' || c == b'-') && bytes[idx - 1] != b'e' && bytes[idx - 1] != b'E' {
            split = Some(idx);
            break;
        }
    }
    let (re_s, im_s) = match split {
        Some(idx) => (&body[..idx], &body[idx..]),
        None => ("0", body),
    };
    let re: f64 = if re_s.is_empty() {
        0.0
    } else {
        re_s.parse()
            .map_err(|_| Error::ParseError(format!("bad pole '{t}'")))?
    };
    let im: f64 = match im_s {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other
            .parse()
            .map_err(|_| Error::ParseError(format!("bad pole '{t}'")))?,
    };
    Ok(Complex::new(re, im))
}

fn parse_poles(spec: &str) -> Result<Vec<Complex<f64>>, Error> {
    spec.split(',').map(parse_complex).collect()
}

fn parse_vector(spec: &str, expected: usize, what: &str) -> Result<Vector, Error> {
    let vals: Result<Vec<f64>, Error> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::ParseError(format!("bad {what} entry '{}'", s.trim())))
        })
        .collect();
    let vals = vals?;
    if vals.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {} entries, expected {expected}",
            vals.len()
        )));
    }
    Ok(Vector::from_vec(vals))
}

fn default_input(channels: usize) -> Signal {
    if channels == 0 {
        return Signal::zero(0);
    }
    Signal::new(
        (0..channels)
            .map(|_| ScalarSignal::Sine { omega: 1.0 })
            .collect(),
    )
}

fn label(sys: &DescriptorSystem, path: &std::path::Path) -> String {
    sys.name
        .clone()
        .unwrap_or_else(|| path.display().to_string())
}

const NOT_NECESSARY_NOTE: &str = "note: the tested conditions are sufficient only; failing them \
does not preclude the existence of a functional observer for this system";

fn cmd_check(system: PathBuf, full: bool, tol: TolArgs) -> Result<ExitCode, Error> {
    let policy = tol.policy();
    let sys = io::load_system(&system)?;
    let dec = staircase(&sys.e, &sys.a, &sys.b, &policy)?;
    let red = reduce(&sys, &dec)?;
    let split = split_functional(&red, &policy)?;
    let report = check_reduced(&red, &split, &policy)?;

    println!("system: {}", label(&sys, &system));
    println!(
        "dimensions: m={} n={} l={} p={} r={}",
        sys.m(),
        sys.n(),
        sys.l(),
        sys.p(),
        sys.r()
    );
    println!(
        "structure: {} compression stages, core dimension {}",
        dec.k,
        red.n_k()
    );
    println!(
        "observer order: q = {}{}",
        report.q,
        if report.q == 0 {
            " (static read-off)"
        } else {
            ""
        }
    );
    println!(
        "H1: {} (coupling equations solvable; rank {} vs augmented {})",
        if report.h1 { "pass" } else { "fail" },
        report.rank_gamma1,
        report.rank_psi1
    );
    match report.unstable_witness {
        None => println!(
            "H2: {} (undetectable modes absent)",
            if report.h2 { "pass" } else { "fail" }
        ),
        Some(w) => println!(
            "H2: {} (undetectable modes absent; witness lambda = {})",
            if report.h2 { "pass" } else { "fail" },
            fmt_c(w)
        ),
    }

    if full {
        let full_report = check_full_conditions(&sys, &policy)?;
        let bk = full_report
            .rho_bookkeeping
            .as_ref()
            .expect("diagnostic records bookkeeping");
        println!("original-size diagnostic:");
        println!(
            "  H1: {} (rank {} vs augmented {})",
            if full_report.h1 { "pass" } else { "fail" },
            bk.rank_gamma,
            bk.rank_psi
        );
        println!(
            "  H2 frequency sweep: {}",
            if full_report.h2 { "pass" } else { "fail" }
        );
        println!(
            "  rank offset rho = {} (stage sum part {}, weighted part {})",
            bk.rho, bk.rho1, bk.rho2
        );
        println!(
            "  offset identity on base matrix: {} ({} = {} + {})",
            if bk.gamma_consistent {
                "holds"
            } else {
                "VIOLATED"
            },
            bk.rank_gamma,
            bk.rho,
            bk.rank_gamma1
        );
        println!(
            "  offset identity on augmented matrix: {} ({} = {} + {})",
            if bk.psi_consistent {
                "holds"
            } else {
                "VIOLATED"
            },
            bk.rank_psi,
            bk.rho,
            bk.rank_psi1
        );
        for oc in &bk.omega_checks {
            println!(
                "  shifted rank at lambda = {}: full {} reduced {} offset {}",
                fmt_c(oc.lambda),
                oc.rank_full,
                oc.rank_reduced,
                if oc.consistent { "holds" } else { "VIOLATED" }
            );
        }
        if full_report.h1 != report.h1 || (report.h1 && full_report.h2 != report.h2) {
            println!("  WARNING: diagnostic disagrees with the reduced-route verdict");
        }
    }

    if report.h1 && report.h2 {
        println!(
            "verdict: observer of order {} exists; synthesis will succeed",
            report.q
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verdict: solvability not established by this method");
        println!("{NOT_NECESSARY_NOTE}");
        Ok(ExitCode::from(2))
    }
}

fn cmd_synthesize(
    system: PathBuf,
    out: Option<PathBuf>,
    place_poles: Option<String>,
    tol: TolArgs,
) -> Result<ExitCode, Error> {
    let policy = tol.policy();
    let sys = io::load_system(&system)?;
    let poles = place_poles.as_deref().map(parse_poles).transpose()?;
    let details = synthesize_with_details(&sys, &policy, poles.as_deref())?;
    let obs = &details.observer;

    eprintln!("system: {}", label(&sys, &system));
    eprintln!("observer order: q = {}", obs.q);
    if obs.q > 0 {
        let eigs: Vec<String> = obs.certificates.eigs_n.iter().map(|&e| fmt_c(e)).collect();
        eprintln!("spectrum of N: {}", eigs.join(", "));
    }
    eprintln!(
        "coupling residuals: state {:.3e}, descriptor {:.3e}",
        obs.certificates.residual_a, obs.certificates.residual_b
    );

    let text = io::observer_to_json_string(obs, &policy)?;
    match out {
        Some(path) => {
            std::fs::write(&path, text + "\n")?;
            eprintln!("realization written to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    system: PathBuf,
    observer: Option<PathBuf>,
    horizon: f64,
    dt: f64,
    matched_init: bool,
    ic: Option<String>,
    w0: Option<String>,
    input: Option<String>,
    out: Option<PathBuf>,
    place_poles: Option<String>,
    tol: TolArgs,
) -> Result<ExitCode, Error> {
    let policy = tol.policy();
    let sys = io::load_system(&system)?;
    let dec = staircase(&sys.e, &sys.a, &sys.b, &policy)?;
    let red = reduce(&sys, &dec)?;

    let obs: ObserverRealization = match &observer {
        Some(path) => {
            let (obs, _saved_policy) = io::load_observer(path)?;
            let report = verify_observer(&sys, &obs, &policy)?;
            if !report.dims_ok {
                return Err(Error::DimensionMismatch(format!(
                    "saved realization does not fit this system: it drives {} input \
                     channels and emits {} functionals, the reduction provides {} \
                     and targets {}",
                    obs.input_dim(),
                    obs.functional_dim(),
                    red.b11.ncols() + red.ck.nrows(),
                    red.k11.nrows()
                )));
            }
            if !report.ok() {
                return Err(Error::PreconditionViolated(format!(
                    "saved realization fails verification against this system \
                     (residuals {:.3e}/{:.3e}, stable: {}, certificate ok: {})",
                    report.residual_a, report.residual_b, report.stable, report.lyapunov_ok
                )));
            }
            obs
        }
        None => {
            let poles = place_poles.as_deref().map(parse_poles).transpose()?;
            synthesize_with_details(&sys, &policy, poles.as_deref())?.observer
        }
    };

    let u = match &input {
        Some(spec) => parse_signal_spec(spec)?,
        None => default_input(sys.l()),
    };
    if u.dimension() != sys.l() {
        return Err(Error::DimensionMismatch(format!(
            "input signal has {} channels, system takes {}",
            u.dimension(),
            sys.l()
        )));
    }

    // starts are given in original coordinates; the leading core block of
    // the orthogonal column transform carries them to reduced ones
    let x0_original = match &ic {
        Some(spec) => parse_vector(spec, sys.n(), "initial condition")?,
        None => Vector::zeros(sys.n()),
    };
    let x_k0_raw = (dec.v.transpose() * &x0_original)
        .rows(0, red.n_k())
        .into_owned();
    let x_k0 = project_initial_condition(&red, &x_k0_raw, &u.eval(0.0), &policy)?;
    if (&x_k0 - &x_k0_raw).norm() > 1e-9 * (1.0 + x_k0_raw.norm()) {
        eprintln!(
            "initial condition projected onto the constraint set (moved {:.3e})",
            (&x_k0 - &x_k0_raw).norm()
        );
    }

    let w0_vec = if matched_init {
        matched_initial_w(&red, &obs, &x_k0)
    } else {
        match &w0 {
            Some(spec) => parse_vector(spec, obs.q, "observer start")?,
            None => Vector::zeros(obs.q),
        }
    };

    let cfg = SimulationConfig {
        t_end: horizon,
        dt,
        x_k0,
        w0: w0_vec,
        u,
        free_mode: None,
        project_ic: false,
    };
    let res = simulate(&red, &obs, &cfg, &policy)?;

    match out {
        Some(path) => {
            let mut file = std::fs::File::create(&path)?;
            io::write_simulation_csv(&mut file, &res)?;
            eprintln!("trace written to {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            io::write_simulation_csv(&mut stdout, &res)?;
        }
    }
    eprintln!(
        "samples: {}, max |e| = {:.6e}, final |e| = {:.6e}",
        res.times.len(),
        res.max_error,
        res.final_error
    );
    eprintln!(
        "error converged: {}; constraint maintained: {}",
        if res.converged { "yes" } else { "no" },
        if res.constraint_ok { "yes" } else { "no" }
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(system: PathBuf, observer: PathBuf, tol: TolArgs) -> Result<ExitCode, Error> {
    let policy = tol.policy();
    let sys = io::load_system(&system)?;
    let (obs, _) = io::load_observer(&observer)?;
    let report = verify_observer(&sys, &obs, &policy)?;

    println!("system: {}", label(&sys, &system));
    println!("observer order: q = {}", obs.q);
    println!(
        "dimensions consistent: {}",
        if report.dims_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "coupling residuals: state {:.3e}, descriptor {:.3e}: {}",
        report.residual_a,
        report.residual_b,
        if report.residuals_ok { "PASS" } else { "FAIL" }
    );
    if obs.q == 0 {
        println!("stability: PASS (static read-off)");
    } else {
        println!(
            "stability: {} (max Re = {:.6})",
            if report.stable { "PASS" } else { "FAIL" },
            report.max_re
        );
    }
    println!(
        "quadratic stability certificate: {}",
        if report.lyapunov_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "gain reconstruction: {}",
        if report.reconstruction_ok {
            "PASS"
        } else {
            "FAIL"
        }
    );
    println!(
        "read-out rank condition: {}",
        if report.condition_b_ok {
            "PASS"
        } else {
            "FAIL"
        }
    );

    if report.ok() {
        println!("verdict: realization verified");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verdict: realization rejected");
        Ok(ExitCode::from(2))
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Check { system, full, tol } => cmd_check(system, full, tol),
        Command::Synthesize {
            system,
            out,
            place_poles,
            tol,
        } => cmd_synthesize(system, out, place_poles, tol),
        Command::Simulate {
            system,
            observer,
            horizon,
            dt,
            matched_init,
            ic,
            w0,
            input,
            out,
            place_poles,
            tol,
        } => cmd_simulate(
            system,
            observer,
            horizon,
            dt,
            matched_init,
            ic,
            w0,
            input,
            out,
            place_poles,
            tol,
        ),
        Command::Verify {
            system,
            observer,
            tol,
        } => cmd_verify(system, observer, tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
