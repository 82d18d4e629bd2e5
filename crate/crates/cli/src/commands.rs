use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ccm_core::bundled::{example_config, EXAMPLE_NAMES};
use ccm_core::config::RunConfig;
use ccm_core::controller::{cost_bound, FeedbackContext};
use ccm_core::document::{certificate_from_json, certificate_to_json};
use ccm_core::geometry::{self, GeodesicOptions, MetricField};
use ccm_core::scenario::{run_simulation, ScenarioError};
use ccm_core::synthesis::{self, verify_certificate_seeded, CcmCertificate, Mode, SynthesisError};
use ccm_core::ControlAffineSystem;

use crate::CliError;

const DEFAULT_CERTIFICATE: &str = "certificate.json";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(wrap)?;
    }
    std::fs::write(path, contents).map_err(wrap)
}

fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    match (out, &cfg.output.dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => cfg.resolve(d),
        (None, None) => cfg.base_dir.clone(),
    }
}

fn certificate_path(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    let name = cfg
        .output
        .certificate
        .clone()
        .unwrap_or_else(|| DEFAULT_CERTIFICATE.into());
    output_dir(cfg, out).join(name)
}

fn load_certificate(path: &Path) -> Result<(ControlAffineSystem, CcmCertificate), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read certificate {}: {e}", path.display())))?;
    Ok(certificate_from_json(&text)?)
}

fn parse_point(text: &str, n: usize, name: &str) -> Result<Vec<f64>, CliError> {
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("--{name}: {e}")))?;
    if v.len() != n {
        return Err(CliError::Usage(format!("--{name} needs {n} comma-separated values, got {}", v.len())));
    }
    Ok(v)
}

fn describe(cert: &CcmCertificate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode: {}, lambda = {}", cert.mode.as_str(), cert.lambda);
    let _ = writeln!(s, "metric bounds: alpha1 = {}, alpha2 = {}", cert.alpha1, cert.alpha2);
    let _ = writeln!(s, "constant metric: {}", cert.is_constant());
    let _ = writeln!(s, "solver margin: {:.6e}", cert.solver_margin);
    if let Some(v) = &cert.verification {
        let _ = writeln!(
            s,
            "verification: {} samples, contraction margin {:.6e}, bounds margin {:.6e}",
            v.num_samples, v.worst_margin_contraction, v.worst_margin_bounds
        );
    }
    if let Some(d) = &cert.diagnostics {
        let _ = writeln!(
            s,
            "solve: {:.3} s, {} variables, {} LMI blocks, {} grid points, {} Newton steps",
            d.solve_seconds, d.num_vars, d.num_blocks, d.grid_points, d.newton_steps
        );
    }
    s
}

pub fn synthesize(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let sys = cfg.system()?;
    let scfg = cfg.synthesis_config()?;
    log::info!("synthesizing on a {}-point grid per axis", scfg.grid);
    let cert = match synthesis::synthesize(&sys, &scfg) {
        Ok(c) => c,
        Err(e @ (SynthesisError::Infeasible(_) | SynthesisError::EmptyBasis | SynthesisError::Sdp(_))) => {
            return Err(CliError::Infeasible(e.to_string()))
        }
        Err(e @ SynthesisError::VerificationFailed { .. }) => return Err(CliError::CheckFailed(e.to_string())),
        Err(e @ SynthesisError::InvalidConfig(_)) => return Err(CliError::Usage(e.to_string())),
    };
    let path = certificate_path(&cfg, out);
    write_file(&path, &certificate_to_json(&sys, &cert))?;
    let summary = format!("certificate: {}\n{}", path.display(), describe(&cert));
    write_file(&path.with_extension("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn verify(cert: &Path, samples: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let (sys, c) = load_certificate(cert)?;
    let report = verify_certificate_seeded(&sys, &c, samples, seed);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(dir) = out {
        write_file(&dir.join("verification.json"), &json)?;
    }
    println!("{json}");
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "verification failed at {:?} (contraction margin {:.3e}, bounds margin {:.3e})",
            report.worst_point, report.worst_margin_contraction, report.worst_margin_bounds
        )))
    }
}

pub fn geodesic(cert: &Path, x1: &str, x2: &str, segments: usize, out: Option<&Path>) -> Result<(), CliError> {
    let (_, c) = load_certificate(cert)?;
    let n = c.n();
    let (a, b) = (parse_point(x1, n, "x1")?, parse_point(x2, n, "x2")?);
    let mf = MetricField::from_certificate(&c).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = GeodesicOptions {
        segments,
        ..Default::default()
    };
    let g = geometry::geodesic(&a, &b, &mf, &opts).map_err(|e| CliError::Usage(e.to_string()))?;
    let path = out.unwrap_or(Path::new(".")).join("geodesic.csv");
    write_file(&path, &g.path.to_csv())?;
    println!("distance: {}", g.length);
    println!("energy: {}", g.energy);
    println!("iterations: {}, converged: {}", g.iterations, g.converged);
    println!("path: {}", path.display());
    if g.converged && !g.projected {
        Ok(())
    } else {
        Err(CliError::Degraded(format!(
            "geodesic {} (gradient norm {:.3e})",
            if g.projected { "touched the domain boundary" } else { "did not converge" },
            g.gradient_norm
        )))
    }
}

pub fn simulate(config: &Path, cert: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let sys = cfg.system()?;
    let cert_path = cert.map_or_else(|| certificate_path(&cfg, None), Path::to_path_buf);
    let (cert_sys, c) = load_certificate(&cert_path)?;
    if cert_sys != sys {
        return Err(CliError::Usage(format!(
            "certificate {} was issued for a different system",
            cert_path.display()
        )));
    }
    let outcome = run_simulation(&cfg, &sys, &c).map_err(|e| match e {
        ScenarioError::Config(e) => CliError::Config(e),
        other => CliError::Usage(other.to_string()),
    })?;
    let dir = output_dir(&cfg, out);
    let csv = dir.join("simulation.csv");
    write_file(&csv, &outcome.result.to_csv())?;
    let mut summary = serde_json::to_value(&outcome.summary).expect("summary serializes");
    summary["pass"] = outcome.pass.into();
    summary["degraded"] = outcome.degraded.into();
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), &json)?;
    let s = &outcome.summary;
    println!("trajectory: {}", csv.display());
    println!("steps: {}, final time {}, final error {:.6e}", s.steps, s.t_end, s.final_error);
    if let Some(env) = &s.envelope {
        println!("envelope: K_fit = {:.6}, K_max = {:.6}", env.k_fit, env.k_max);
    }
    if let Some(ok) = s.distance_nonincreasing {
        println!("distance non-increasing: {ok}");
    }
    if let (Some(j), Some(bound)) = (s.cost, s.cost_bound) {
        println!("cost: J = {j:.6e}, bound = {bound:.6e}");
    }
    if outcome.degraded {
        let f = s.flags;
        Err(CliError::Degraded(format!(
            "degraded run (left domain: {}, controller fallback: {}, blew up: {})",
            f.left_domain, f.degraded, f.blew_up
        )))
    } else if !outcome.pass {
        Err(CliError::CheckFailed("closed-loop checks failed; see summary.json".into()))
    } else {
        Ok(())
    }
}

pub fn bound(cert: &Path, x0: &str, xstar: &str) -> Result<(), CliError> {
    let (sys, c) = load_certificate(cert)?;
    if c.mode != Mode::GuaranteedCost {
        return Err(CliError::Usage(format!(
            "cost bounds need a guaranteed_cost certificate, this one is {}",
            c.mode.as_str()
        )));
    }
    let n = c.n();
    let (x0, xs) = (parse_point(x0, n, "x0")?, parse_point(xstar, n, "xstar")?);
    let ctx = FeedbackContext::new(sys, c).map_err(|e| CliError::Usage(e.to_string()))?;
    let b = cost_bound(&ctx, &x0, &xs).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{b}");
    Ok(())
}

pub fn example(name: &str, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = example_config(name).ok_or_else(|| {
        CliError::Usage(format!("unknown example {name:?}; available: {}", EXAMPLE_NAMES.join(", ")))
    })?;
    let json = cfg.to_json();
    match out {
        Some(dir) => {
            let path = dir.join(format!("{name}.json"));
            write_file(&path, &json)?;
            println!("{}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
