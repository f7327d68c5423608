//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage, parse or
//! parameter error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use cot_lab_core::adaptation::{self, AdaptationInstance};
use cot_lab_core::amplification::{self, AmplificationParams, Regime};
use cot_lab_core::arithmetic;
use cot_lab_core::chain;
use cot_lab_core::constructions::{self, Scenario};
use cot_lab_core::spaces::Point;
use cot_lab_core::EQ_TOL;

use crate::error::{CliError, Result};
use crate::report::{self, SweepRow};
use crate::scenario_file::ScenarioFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Seed used by `bound` when neither `--seed` nor `COT_LAB_SEED` is set.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Environment variable overriding the default seed.
pub const SEED_ENV: &str = "COT_LAB_SEED";

const SWEEP_HELP: &str = "CSV columns: K, phi, delta, alpha (closed form), regime, \
bound ((lambda*phi*delta/2)*alpha*dfg), max_form, word_oracle (C_(K-1), empty when K > 22), \
agree (all three forms within the tolerance).";

const VERIFY_HELP: &str = "CSV columns: scenario, reasoning, tmr, otr, omr, decomposition_slack, \
three_term_slack, recoverable, two_term_holds, three_term_holds.";

const ARITH_HELP: &str =
    "CSV columns: prompt, q1, a1, q2, a2, q3, a3, q4, a4, ground_truth, recoverable.";

#[derive(Debug, Parser)]
#[command(name = "cot-lab", version, about = "Chain-of-thought error propagation lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Amplification factor at one point, or a CSV sweep.
    #[command(allow_negative_numbers = true, after_help = SWEEP_HELP)]
    Amp(AmpArgs),
    /// Verify a scenario file or a builtin construction.
    #[command(after_help = VERIFY_HELP)]
    Verify(VerifyArgs),
    /// Coverage experiment for the high-probability OTR bound.
    Bound(BoundArgs),
    /// Cross-check the three forms of the amplification factor on a grid.
    #[command(after_help = SWEEP_HELP)]
    Sweep(SweepArgs),
    /// Multiplication chain rule: worked trajectory and family check.
    #[command(after_help = ARITH_HELP)]
    Arith(ArithArgs),
}

#[derive(Debug, Args)]
pub struct AmpArgs {
    /// Number of steps K.
    #[arg(value_name = "K")]
    pub k: usize,
    pub phi: f64,
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// d(f, g) used in the bound.
    #[arg(long, default_value_t = 1.0)]
    pub dfg: f64,
    /// Sweep an axis: `K=2:12:1`, `phi=0:3:0.25` or `delta=0:3:0.25`.
    #[arg(long = "sweep", value_name = "AXIS=start:stop:step")]
    pub sweep: Vec<String>,
    /// Write sweep rows here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "K", default_value = "2:12:1")]
    pub k: String,
    #[arg(long, default_value = "0:3:0.25")]
    pub phi: String,
    #[arg(long, default_value = "0:3:0.25")]
    pub delta: String,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dfg: f64,
    #[arg(long, default_value_t = EQ_TOL)]
    pub tol: f64,
    /// Write all rows as CSV (`-` for stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Scenario JSON file.
    pub file: Option<PathBuf>,
    /// nfl1, nfl2, nfl3, tight, omr or arith.
    #[arg(long)]
    pub builtin: Option<String>,
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    #[arg(long = "M", default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    #[arg(long, default_value_t = 2.0)]
    pub delta: f64,
    /// Grid size of the omr builtin.
    #[arg(long, default_value_t = 10)]
    pub grid: usize,
    /// Write the verification report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the risk row as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the scenario itself as a scenario file.
    #[arg(long)]
    pub emit_scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Scenario file with an `adaptation` section.
    pub file: Option<PathBuf>,
    /// tiny or singleton.
    #[arg(long)]
    pub builtin: Option<String>,
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Base seed; defaults to $COT_LAB_SEED, then a fixed value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the coverage report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the instance itself as a scenario file.
    #[arg(long)]
    pub emit_scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArithArgs {
    /// Write every family trajectory as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Inclusive arithmetic grid `start, start+step, …, ≤ stop`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("bad grid `{text}`, expected start:stop:step"));
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(bad());
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(CliError::Usage(format!("grid `{text}` has too many points")));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn parse_k_grid(text: &str) -> Result<Vec<usize>> {
    parse_grid(text)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Usage(format!("K grid `{text}` must contain positive integers")))
            }
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io { path: "stdout".into(), source: e }
}

fn seed_from_env() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn grid_rows(ks: &[usize], phis: &[f64], deltas: &[f64], lambda: f64, dfg: f64, tol: f64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(ks.len() * phis.len() * deltas.len());
    for &k in ks {
        for &phi in phis {
            for &delta in deltas {
                rows.push(report::sweep_row(k, phi, delta, lambda, dfg, tol)?);
            }
        }
    }
    Ok(rows)
}

fn emit_csv(path: Option<&Path>, out: &mut dyn Write, rows: &[SweepRow]) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => report::write_sweep_csv(create(p)?, rows),
        _ => report::write_sweep_csv(out, rows),
    }
}

fn cmd_amp(a: &AmpArgs, out: &mut dyn Write) -> Result<i32> {
    if !a.sweep.is_empty() {
        let (mut ks, mut phis, mut deltas) = (vec![a.k], vec![a.phi], vec![a.delta]);
        for text in &a.sweep {
            let (axis, grid) = text
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("bad sweep `{text}`, expected AXIS=start:stop:step")))?;
            match axis.trim() {
                "K" | "k" => ks = parse_k_grid(grid)?,
                "phi" => phis = parse_grid(grid)?,
                "delta" => deltas = parse_grid(grid)?,
                other => return Err(CliError::Usage(format!("unknown sweep axis `{other}`"))),
            }
        }
        let rows = grid_rows(&ks, &phis, &deltas, a.lambda, a.dfg, EQ_TOL)?;
        emit_csv(a.csv.as_deref(), out, &rows)?;
        return Ok(if rows.iter().all(|r| r.agree) { EXIT_OK } else { EXIT_FAIL });
    }

    let params = AmplificationParams::new(a.k, a.lambda, a.phi, a.delta, a.dfg)?;
    let (alpha, regime) = amplification::amplification_closed_form(a.k, a.phi, a.delta)?;
    let (max_form, argmax) = amplification::amplification_max_form(a.k, a.phi, a.delta)?;
    writeln!(out, "K={} phi={} delta={}", a.k, a.phi, a.delta).map_err(io)?;
    writeln!(out, "alpha={alpha}").map_err(io)?;
    writeln!(out, "regime={}", regime.name()).map_err(io)?;
    if matches!(regime, Regime::MixedGeometric | Regime::MixedLinear) {
        let bp = amplification::breakpoints(a.k, a.phi, a.delta)?;
        let show = |v: Option<usize>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        writeln!(out, "m_K={} n_K={}", show(bp.m), show(bp.n)).map_err(io)?;
    }
    writeln!(out, "max_form={max_form} argmax_m={argmax}").map_err(io)?;
    let mut agree = (alpha - max_form).abs() <= EQ_TOL;
    if a.k <= amplification::WORD_ORACLE_MAX_K {
        let w = amplification::word_oracle(a.k, a.phi, a.delta)?;
        let ok = amplification::triple_agreement(a.k, a.phi, a.delta)?.within(EQ_TOL);
        agree &= ok;
        writeln!(
            out,
            "word_oracle C_{}={} word={} delta*alpha={} agree={ok}",
            a.k - 1,
            w.value,
            w.word_string(),
            a.delta * alpha
        )
        .map_err(io)?;
    }
    writeln!(out, "tmr_bound={}", amplification::tmr_bound(&params)).map_err(io)?;
    Ok(if agree { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let rows = grid_rows(
        &parse_k_grid(&a.k)?,
        &parse_grid(&a.phi)?,
        &parse_grid(&a.delta)?,
        a.lambda,
        a.dfg,
        a.tol,
    )?;
    if let Some(p) = &a.csv {
        emit_csv(Some(p), out, &rows)?;
    }
    let disagreements: Vec<&SweepRow> = rows.iter().filter(|r| !r.agree).collect();
    for r in &disagreements {
        writeln!(out, "DISAGREE K={} phi={} delta={} alpha={} max_form={} word_oracle={:?}", r.k, r.phi, r.delta, r.alpha, r.max_form, r.word_oracle)
            .map_err(io)?;
    }
    if a.csv.as_deref() != Some(Path::new("-")) {
        writeln!(out, "points={} disagreements={}", rows.len(), disagreements.len()).map_err(io)?;
    }
    Ok(if disagreements.is_empty() { EXIT_OK } else { EXIT_FAIL })
}

/// Builds a builtin scenario by name.
pub fn builtin_scenario(name: &str, a: &VerifyArgs) -> Result<Scenario> {
    Ok(match name {
        "nfl1" => constructions::nfl_instance(1, a.k, a.m, a.eps)?,
        "nfl2" => constructions::nfl_instance(2, a.k, a.m, a.eps)?,
        "nfl3" => constructions::nfl_instance(3, a.k, a.m, a.eps)?,
        "tight" => constructions::tight_instance(a.k, a.lambda, a.phi, a.delta)?,
        "omr" => constructions::omr_instance(a.k, a.m, a.grid)?,
        "arith" => constructions::arithmetic_scenario()?,
        other => return Err(CliError::Usage(format!("unknown builtin `{other}`"))),
    })
}

fn one_source<'a>(file: &'a Option<PathBuf>, builtin: &'a Option<String>) -> Result<(Option<&'a Path>, Option<&'a str>)> {
    match (file, builtin) {
        (Some(_), Some(_)) => Err(CliError::Usage("give a scenario file or --builtin, not both".into())),
        (None, None) => Err(CliError::Usage("give a scenario file or --builtin".into())),
        (f, b) => Ok((f.as_deref(), b.as_deref())),
    }
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let scenario = match one_source(&a.file, &a.builtin)? {
        (Some(path), _) => ScenarioFile::load(path)?.to_scenario()?,
        (_, Some(name)) => builtin_scenario(name, a)?,
        _ => unreachable!(),
    };
    if let Some(p) = &a.emit_scenario {
        write_file(p, &ScenarioFile::from_scenario(&scenario).to_json())?;
    }
    let rep = constructions::verify_scenario(&scenario);
    writeln!(out, "scenario={}", rep.scenario).map_err(io)?;
    if let Some(r) = &rep.risks {
        writeln!(out, "reasoning={} tmr={} otr={} omr={}", r.reasoning, r.tmr, r.otr, r.omr).map_err(io)?;
        writeln!(out, "recoverable={}", r.recoverable).map_err(io)?;
    }
    let mut pass = rep.pass();
    if a.builtin.as_deref() == Some("arith") {
        let fam = arithmetic::family_recoverability_report();
        writeln!(out, "family={}/{} recoverable", fam.recoverable, fam.checked).map_err(io)?;
        pass &= fam.all_recoverable();
    }
    for item in rep.failures() {
        writeln!(out, "FAIL {}: {}", item.name, item.detail).map_err(io)?;
    }
    for note in &rep.notes {
        writeln!(out, "note: {note}").map_err(io)?;
    }
    writeln!(out, "checks={} result={}", rep.items.len(), if pass { "PASS" } else { "FAIL" }).map_err(io)?;
    if let Some(p) = &a.json {
        write_file(p, &report::verification_json(&rep)?)?;
    }
    if let (Some(p), Some(r)) = (&a.csv, &rep.risks) {
        report::write_risk_csv(create(p)?, &[(rep.scenario.clone(), r.clone())])?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_FAIL })
}

/// Builds a builtin adaptation instance by name.
pub fn builtin_instance(name: &str) -> Result<AdaptationInstance> {
    Ok(match name {
        "tiny" => adaptation::tiny_fixture()?,
        "singleton" => adaptation::singleton_fixture()?,
        other => return Err(CliError::Usage(format!("unknown bound builtin `{other}`"))),
    })
}

fn cmd_bound(a: &BoundArgs, out: &mut dyn Write) -> Result<i32> {
    let inst = match one_source(&a.file, &a.builtin)? {
        (Some(path), _) => ScenarioFile::load(path)?.to_instance()?,
        (_, Some(name)) => builtin_instance(name)?,
        _ => unreachable!(),
    };
    if let Some(p) = &a.emit_scenario {
        write_file(p, &ScenarioFile::from_instance(&inst).to_json())?;
    }
    let seed = match a.seed {
        Some(s) => s,
        None => seed_from_env()?,
    };
    let rep = adaptation::bound_experiment(&inst, a.m, a.trials, a.eps, seed)?;
    let json = report::coverage_json(&rep)?;
    out.write_all(json.as_bytes()).map_err(io)?;
    if let Some(p) = &a.json {
        write_file(p, &json)?;
    }
    Ok(if rep.covered() { EXIT_OK } else { EXIT_FAIL })
}

/// The worked `7·26` trajectory, one `Q`/`A` line per step.
pub fn worked_example_lines() -> Result<Vec<String>> {
    let prompt = "7·26";
    let t = chain::run_trajectory(
        &arithmetic::build_multiplication_chain_rule(),
        &arithmetic::ground_truth_map(),
        &Point::expr(prompt)?,
    )?;
    let text = |p: &Point| p.as_expr().unwrap_or_default().to_string();
    let mut lines = Vec::new();
    for (k, (q, a)) in t.questions().iter().zip(t.answers()).enumerate() {
        lines.push(format!("Q^({})({prompt}) = {}", k + 1, text(q)));
        lines.push(format!("A^({})({prompt}) = {}", k + 1, text(a)));
    }
    Ok(lines)
}

fn cmd_arith(a: &ArithArgs, out: &mut dyn Write) -> Result<i32> {
    for line in worked_example_lines()? {
        writeln!(out, "{line}").map_err(io)?;
    }
    let fam = arithmetic::family_recoverability_report();
    writeln!(out, "family={}/{} recoverable", fam.recoverable, fam.checked).map_err(io)?;
    for (prompt, got) in &fam.failures {
        writeln!(out, "FAIL {prompt} -> {got}").map_err(io)?;
    }
    if let Some(p) = &a.csv {
        report::write_arith_csv(create(p)?)?;
    }
    Ok(if fam.all_recoverable() { EXIT_OK } else { EXIT_FAIL })
}

/// Runs a parsed command.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Amp(a) => cmd_amp(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Arith(a) => cmd_arith(a, out),
    }
}

/// Parses `args`, runs the command and maps every outcome to an exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["cot-lab"];
        argv.extend_from_slice(args);
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap() + &String::from_utf8(err).unwrap())
    }

    #[test]
    fn grids_are_inclusive() {
        assert_eq!(parse_grid("0:3:0.25").unwrap().len(), 13);
        assert_eq!(parse_grid("0:3:0.25").unwrap()[12], 3.0);
        assert_eq!(parse_k_grid("2:12:1").unwrap(), (2..=12).collect::<Vec<_>>());
        assert_eq!(parse_grid("1:1:1").unwrap(), vec![1.0]);
        for bad in ["0:3", "a:b:c", "3:0:1", "0:1:0", "0:1:-1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
        assert!(parse_k_grid("0.5:2:1").is_err());
    }

    #[test]
    fn amp_examples() {
        let (code, text) = run_capture(&["amp", "3", "1", "1"]);
        assert_eq!(code, 0);
        assert!(text.contains("alpha=2\n") && text.contains("regime=linear\n"), "{text}");
        let (code, text) = run_capture(&["amp", "2", "0.7", "0.3"]);
        assert_eq!(code, 0);
        assert!(text.contains("alpha=1\n"), "{text}");
        let (code, text) = run_capture(&["amp", "4", "0.5", "2"]);
        assert_eq!(code, 0);
        assert!(text.contains("alpha=4\n") && text.contains("C_3=8 "), "{text}");
    }

    #[test]
    fn amp_parameter_errors_exit_2() {
        assert_eq!(run_capture(&["amp", "3", "-1", "1"]).0, 2);
        assert_eq!(run_capture(&["amp", "0", "1", "1"]).0, 2);
        assert_eq!(run_capture(&["amp", "3", "1"]).0, 2);
        assert_eq!(run_capture(&["amp", "3", "1", "1", "--sweep", "rho=0:1:1"]).0, 2);
    }

    #[test]
    fn amp_sweep_writes_rows() {
        let (code, text) = run_capture(&["amp", "3", "1", "1", "--sweep", "phi=0:1:0.5", "--sweep", "K=2:3:1"]);
        assert_eq!(code, 0);
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn verify_builtin_nfl2() {
        let (code, text) = run_capture(&["verify", "--builtin", "nfl2", "--K", "2", "--M", "5", "--eps", "0.1"]);
        assert_eq!(code, 0, "{text}");
        assert!(text.contains("tmr=5 otr=0"), "{text}");
    }

    #[test]
    fn verify_needs_exactly_one_source() {
        assert_eq!(run_capture(&["verify"]).0, 2);
        assert_eq!(run_capture(&["verify", "x.json", "--builtin", "nfl1"]).0, 2);
        assert_eq!(run_capture(&["verify", "--builtin", "nope"]).0, 2);
        assert_eq!(run_capture(&["verify", "/nonexistent/scenario.json"]).0, 2);
    }

    #[test]
    fn bound_zero_trials_exit_2() {
        assert_eq!(run_capture(&["bound", "--builtin", "tiny", "--trials", "0"]).0, 2);
    }

    #[test]
    fn worked_example_display() {
        assert_eq!(
            worked_example_lines().unwrap(),
            vec![
                "Q^(1)(7·26) = 7·2",
                "A^(1)(7·26) = 14",
                "Q^(2)(7·26) = 10·14",
                "A^(2)(7·26) = 140",
                "Q^(3)(7·26) = 7·6",
                "A^(3)(7·26) = 42",
                "Q^(4)(7·26) = 140+42",
                "A^(4)(7·26) = 182",
            ]
        );
    }

    #[test]
    fn help_exits_0() {
        let (code, text) = run_capture(&["sweep", "--help"]);
        assert_eq!(code, 0);
        assert!(text.contains("CSV columns"));
    }
}
