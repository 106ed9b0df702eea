use serde_json::{json, Value};

use multifrag::asymptotics::{
    biggins_martingale, clt_limit, clt_statistic, critical_warning, lattice_warning, ld_count, lln_limit,
    lln_statistic, stationary_distribution, MassWeighted, Profile, TestFunction,
};
use multifrag::measures::{intensity_matrix, theta_lower};
use multifrag::rng::run_replicas;
use multifrag::simulate::{
    apply_erosion, simulate_marked_points, simulate_mass_fragmentation, simulate_partition_fragmentation,
    simulate_tagged, SimError, SimOptions, Snapshot, DEFAULT_MASS_FLOOR,
};
use multifrag::spectral::{
    irreducibility_check, spectral_data, theta_bar, CriticalExponent, SpectralData, DEFAULT_THETA_MAX,
};
use multifrag::stats::{linear_fit, MeanEstimate};

use crate::table::{Cell, Output, Table};
use crate::{parse_window, CliError, Command, ProfileKind, RunConfig};

pub(crate) fn dispatch(c: &RunConfig) -> Result<Output, CliError> {
    match c.command {
        Command::Validate => validate(c),
        Command::Simulate => simulate(c),
        Command::Partition => partition(c),
        Command::Tagged => tagged(c),
        Command::Spectral => spectral(c),
        Command::Martingale => martingale(c),
        Command::Limits => limits(c),
        Command::Ldcount => ldcount(c),
        Command::Report => report(c),
    }
}

/// Replica results in order, or the first error in replica order.
fn collect<T>(results: Vec<Result<T, SimError>>) -> Result<Vec<T>, CliError> {
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

fn options(c: &RunConfig) -> SimOptions {
    SimOptions {
        mass_floor: c.mass_floor(),
        max_fragments: Some(c.args.max_fragments),
    }
}

fn type_columns(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |j| format!("{prefix}_{j}"))
}

fn model_summary(c: &RunConfig) -> Value {
    let spec = &c.spec;
    let irreducible = intensity_matrix(spec).ok().map(|m| irreducibility_check(&m));
    json!({
        "valid": true,
        "types": spec.k,
        "declared_conservative": spec.conservative,
        "conservative": spec.is_conservative(),
        "erosion": spec.erosion,
        "total_rates": (1..=spec.k).map(|i| spec.total_rate(i)).collect::<Vec<_>>(),
        "atoms": (1..=spec.k).map(|i| spec.atoms(i).len()).collect::<Vec<_>>(),
        "irreducible": irreducible,
        "theta_lower": theta_lower(spec),
        "lattice_warning": lattice_warning(spec),
    })
}

fn validate(c: &RunConfig) -> Result<Output, CliError> {
    Ok(Output::summary(model_summary(c)))
}

fn simulate(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let spec = &c.spec;
    let opts = options(c);
    let t_max = c.t_max();
    let snapshots = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        let path = simulate_mass_fragmentation(spec, t_max, c.args.initial_type, &opts, rng)?;
        let eroded = apply_erosion(spec, &path)?;
        Ok(c.times.iter().map(|&t| eroded.snapshot(t)).collect::<Vec<_>>())
    }))?;
    let mut table = Table::new(["replica", "time", "fragment_id", "mass", "type", "frozen"]);
    for (r, snaps) in snapshots.iter().enumerate() {
        for s in snaps {
            for f in &s.fragments {
                table.push(vec![r.into(), s.time.into(), f.id.into(), f.mass.into(), f.ty.into(), f.frozen.into()]);
            }
        }
    }
    Ok(Output::table(table))
}

fn partition(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let n = c.args.n.unwrap_or(10);
    let t_max = c.t_max();
    let paths = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        simulate_partition_fragmentation(&c.spec, n, t_max, c.args.initial_type, rng)
    }))?;
    let mut table = Table::new(["replica", "time", "block", "type", "elements"]);
    for (r, path) in paths.iter().enumerate() {
        for &t in &c.times {
            for (b, block) in path.state_at(t).blocks().iter().enumerate() {
                let elements: Vec<String> = block.elements().iter().map(ToString::to_string).collect();
                table.push(vec![r.into(), t.into(), (b + 1).into(), block.ty().into(), elements.join(" ").into()]);
            }
        }
    }
    Ok(Output::table(table))
}

fn tagged(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let t_max = c.t_max();
    let paths = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        simulate_tagged(&c.spec, t_max, c.args.initial_type, rng)
    }))?;
    let mut table = Table::new(["replica", "time", "type", "s", "jumps"]);
    for (r, path) in paths.iter().enumerate() {
        for &t in &c.times {
            let (ty, s) = path.state_at(t);
            let jumps = path.states.iter().skip(1).take_while(|st| st.time <= t).count();
            table.push(vec![r.into(), t.into(), ty.into(), s.into(), jumps.into()]);
        }
    }
    Ok(Output::table(table))
}

fn spectral_row(kind: &str, sd: &SpectralData) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![
        kind.into(),
        sd.theta.into(),
        sd.phi.into(),
        sd.phi_d1.map_or(Cell::Empty, Cell::Float),
        sd.phi_d2.map_or(Cell::Empty, Cell::Float),
    ];
    row.extend(sd.u.iter().map(|&x| Cell::Float(x)));
    row.extend(sd.v.iter().map(|&x| Cell::Float(x)));
    row
}

fn critical_summary(crit: &CriticalExponent) -> Value {
    json!({ "theta_bar": crit.theta_bar, "phi_prime": crit.phi_prime, "residual": crit.residual })
}

fn spectral(c: &RunConfig) -> Result<Output, CliError> {
    let k = c.spec.k;
    let thetas = thetas_or(c, || crate::parse_grid("0:3:0.25"))?;
    let mut table = Table::new(
        ["kind", "theta", "phi", "phi_d1", "phi_d2"]
            .into_iter()
            .map(String::from)
            .chain(type_columns("u", k))
            .chain(type_columns("v", k)),
    );
    for &th in &thetas {
        table.push(spectral_row("grid", &spectral_data(&c.spec, th)?));
    }
    let crit = theta_bar(&c.spec, DEFAULT_THETA_MAX)?;
    table.push(spectral_row("theta_bar", &spectral_data(&c.spec, crit.theta_bar)?));
    Ok(Output::with_summary(table, critical_summary(&crit)))
}

/// `--theta` and `--theta-grid` values, or the fallback.
fn thetas_or(c: &RunConfig, fallback: impl FnOnce() -> Result<Vec<f64>, CliError>) -> Result<Vec<f64>, CliError> {
    let mut thetas: Vec<f64> = c.args.theta.into_iter().collect();
    if let Some(g) = &c.args.theta_grid {
        thetas.extend(crate::parse_grid(g)?);
    }
    if thetas.is_empty() {
        fallback()
    } else {
        Ok(thetas)
    }
}

fn warn_critical(theta: f64, crit: Option<&CriticalExponent>) {
    if let Some(w) = crit.and_then(|cr| critical_warning(theta, cr.theta_bar)) {
        log::warn!("{w}");
    }
}

fn martingale(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let crit = theta_bar(&c.spec, DEFAULT_THETA_MAX);
    let thetas = thetas_or(c, || {
        let tb = crit.clone()?.theta_bar;
        Ok(vec![0.3 * tb, 0.6 * tb])
    })?;
    let data: Vec<SpectralData> = thetas
        .iter()
        .map(|&th| {
            warn_critical(th, crit.as_ref().ok());
            spectral_data(&c.spec, th)
        })
        .collect::<Result<_, _>>()?;
    let opts = options(c);
    let t_max = c.t_max();
    let values = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        let path = simulate_mass_fragmentation(&c.spec, t_max, c.args.initial_type, &opts, rng)?;
        Ok(c.times
            .iter()
            .map(|&t| {
                let snap = path.snapshot(t);
                data.iter().map(|sd| biggins_martingale(&snap, sd)).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>())
    }))?;
    let mut table = Table::new(["replica", "theta", "time", "m"]);
    for (r, per_time) in values.iter().enumerate() {
        for (ti, &t) in c.times.iter().enumerate() {
            for (hi, sd) in data.iter().enumerate() {
                table.push(vec![r.into(), sd.theta.into(), t.into(), per_time[ti][hi].into()]);
            }
        }
    }
    let mut summary = Vec::new();
    for (ti, &t) in c.times.iter().enumerate() {
        for (hi, sd) in data.iter().enumerate() {
            let xs: Vec<f64> = values.iter().map(|v| v[ti][hi]).collect();
            let est = MeanEstimate::from_samples(&xs);
            let target = sd.v[c.args.initial_type - 1];
            summary.push(json!({
                "theta": sd.theta, "time": t, "mean": est.mean, "std_err": est.std_err,
                "expected": target, "z": est.z_score(target),
            }));
        }
    }
    Ok(Output::with_summary(table, Value::Array(summary)))
}

fn profile(kind: ProfileKind, center: f64, width: f64) -> Profile {
    match kind {
        ProfileKind::Bump => Profile::Bump { center, width },
        ProfileKind::Sigmoid => Profile::Sigmoid { center, width },
        ProfileKind::Coswin => Profile::Coswin { center, width },
    }
}

/// LLN and CLT statistics of one sample, then the type marginals.
fn limit_statistics(sample: &dyn MassWeighted, lln_f: &TestFunction, clt_f: &TestFunction, d1: f64, k: usize) -> Vec<f64> {
    let mut out = vec![lln_statistic(sample, lln_f), clt_statistic(sample, clt_f, d1)];
    out.extend((1..=k).map(|j| lln_statistic(sample, &TestFunction::indicator(j))));
    out
}

fn limits(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let spec = &c.spec;
    let k = spec.k;
    if let Some(j) = c.args.f_type {
        if !(1..=k).contains(&j) {
            return Err(CliError::usage(format!("--f-type {j} is out of range 1..={k}")));
        }
    }
    let sd = spectral_data(spec, 0.0)?;
    let (d1, d2) = (sd.phi_d1.unwrap_or(f64::NAN), sd.phi_d2.unwrap_or(f64::NAN));
    let u = stationary_distribution(&intensity_matrix(spec)?)?;
    let (center, width) = (c.args.f_center, c.args.f_width);
    if width.is_nan() || width <= 0.0 {
        return Err(CliError::usage("--f-width must be positive"));
    }
    // the LLN statistic lives on the scale t⁻¹ ln X, which concentrates at −φ′(0)
    let lln_f = TestFunction::new(profile(c.args.f, center - d1, width), c.args.f_type);
    let clt_f = TestFunction::new(profile(c.args.f, center, width), c.args.f_type);
    let opts = options(c);
    let t_max = c.t_max();
    let values = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        match c.args.n {
            Some(points) => c
                .times
                .iter()
                .map(|&t| {
                    let sample = simulate_marked_points(spec, t, points, c.args.initial_type, rng)?;
                    Ok(limit_statistics(&sample, &lln_f, &clt_f, d1, k))
                })
                .collect::<Result<Vec<_>, SimError>>(),
            None => {
                let path = simulate_mass_fragmentation(spec, t_max, c.args.initial_type, &opts, rng)?;
                Ok(c.times
                    .iter()
                    .map(|&t| limit_statistics(&path.snapshot(t), &lln_f, &clt_f, d1, k))
                    .collect())
            }
        }
    }))?;
    let mut names = vec!["lln".to_string(), "clt".to_string()];
    names.extend(type_columns("lln_type", k));
    let mut oracles = vec![lln_limit(&u, &lln_f, d1), clt_limit(&u, &clt_f, -d2)];
    oracles.extend(u.iter().copied());
    let mut table = Table::new(["statistic", "time", "mean", "std_err", "oracle", "z"]);
    for (ti, &t) in c.times.iter().enumerate() {
        for (si, name) in names.iter().enumerate() {
            let xs: Vec<f64> = values.iter().map(|v| v[ti][si]).collect();
            let est = MeanEstimate::from_samples(&xs);
            table.push(vec![
                name.as_str().into(),
                t.into(),
                est.mean.into(),
                est.std_err.into(),
                oracles[si].into(),
                est.z_score(oracles[si]).into(),
            ]);
        }
    }
    let summary = json!({
        "phi_d1_at_zero": d1,
        "clt_variance": -d2,
        "stationary": u,
        "lln_function": lln_f,
        "clt_function": clt_f,
    });
    Ok(Output::with_summary(table, summary))
}

fn ldcount(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let spec = &c.spec;
    let k = spec.k;
    let (a, b) = parse_window(&c.args.window)?;
    let crit = theta_bar(spec, DEFAULT_THETA_MAX);
    let theta = match c.args.theta {
        Some(th) => th,
        None => 0.5 * crit.clone()?.theta_bar,
    };
    warn_critical(theta, crit.as_ref().ok());
    if let Some(w) = lattice_warning(spec) {
        log::warn!("{w}");
    }
    let sd = spectral_data(spec, theta)?;
    let d1 = sd.phi_d1.unwrap_or(f64::NAN);
    let t_max = c.t_max();
    // fragments below the lowest window edge can never enter a window again
    let floor = c.args.mass_floor.unwrap_or(if a > 0.0 {
        a * (-t_max * d1).exp() * 0.999
    } else {
        DEFAULT_MASS_FLOOR
    });
    let opts = SimOptions {
        mass_floor: floor,
        max_fragments: Some(c.args.max_fragments),
    };
    let counts = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        let path = simulate_mass_fragmentation(spec, t_max, c.args.initial_type, &opts, rng)?;
        Ok(c.times
            .iter()
            .map(|&t| {
                let snap: Snapshot = path.snapshot(t);
                (1..=k)
                    .map(|j| ld_count(&snap, a, b, j, &sd))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Vec<_>>())
    }))?;
    let mut table = Table::new(["kind", "time", "type", "mean", "std_err", "shape"]);
    let mut means = vec![vec![0.0; k]; c.times.len()];
    for (ti, &t) in c.times.iter().enumerate() {
        for j in 1..=k {
            let mut xs = Vec::with_capacity(counts.len());
            let mut shape = f64::NAN;
            for replica in &counts {
                let count = replica[ti].clone()?[j - 1];
                xs.push(count.observed as f64);
                shape = count.predicted_shape;
            }
            let est = MeanEstimate::from_samples(&xs);
            means[ti][j - 1] = est.mean;
            table.push(vec!["count".into(), t.into(), j.into(), est.mean.into(), est.std_err.into(), shape.into()]);
        }
    }
    let predicted_slope = (theta + 1.0) * d1 - sd.phi;
    let mut slope = None;
    if c.times.len() >= 2 {
        let y: Vec<f64> = c
            .times
            .iter()
            .zip(&means)
            .map(|(&t, m)| (m.iter().sum::<f64>() * t.sqrt()).ln())
            .collect();
        let fitted = linear_fit(&c.times, &y).0;
        slope = Some(fitted);
        table.push(vec!["slope".into(), Cell::Empty, Cell::Empty, fitted.into(), Cell::Empty, predicted_slope.into()]);
    }
    let last = means.last().expect("at least one time");
    for j in 2..=k {
        table.push(vec![
            "type_ratio".into(),
            t_max.into(),
            j.into(),
            (last[0] / last[j - 1]).into(),
            Cell::Empty,
            (sd.u[0] / sd.u[j - 1]).into(),
        ]);
    }
    let summary = json!({
        "theta": theta,
        "phi": sd.phi,
        "phi_d1": d1,
        "u": sd.u,
        "window": [a, b],
        "mass_floor": floor,
        "slope": slope,
        "predicted_slope": predicted_slope,
    });
    Ok(Output::with_summary(table, summary))
}

fn report(c: &RunConfig) -> Result<Output, CliError> {
    let seed = c.require_seed()?;
    let spec = &c.spec;
    let i = c.args.initial_type;
    let t = c.args.t;
    let at_zero = spectral_data(spec, 0.0)?;
    let stationary = stationary_distribution(&intensity_matrix(spec)?)?;
    let crit = theta_bar(spec, DEFAULT_THETA_MAX)?;
    let mid = spectral_data(spec, 0.5 * crit.theta_bar)?;

    let s: Vec<f64> = collect(run_replicas(seed, c.args.replicas, |_, rng| {
        Ok(simulate_tagged(spec, t, i, rng)?.state_at(t).1)
    }))?;
    let s_est = MeanEstimate::from_samples(&s);
    let s_expected = t * at_zero.phi_d1.unwrap_or(f64::NAN);
    let opts = options(c);
    let m: Vec<f64> = collect(run_replicas(seed ^ 0x9e37_79b9_7f4a_7c15, c.args.replicas, |_, rng| {
        let path = simulate_mass_fragmentation(spec, t, i, &opts, rng)?;
        Ok(biggins_martingale(&path.snapshot(t), &mid))
    }))?;
    let m_est = MeanEstimate::from_samples(&m);

    Ok(Output::summary(json!({
        "model": model_summary(c),
        "spectral": {
            "at_zero": at_zero,
            "stationary": stationary,
            "critical": critical_summary(&crit),
            "at_half_critical": mid,
        },
        "monte_carlo": {
            "seed": seed,
            "replicas": c.args.replicas,
            "time": t,
            "initial_type": i,
            "tagged_mean_s": { "mean": s_est.mean, "std_err": s_est.std_err, "expected": s_expected, "z": s_est.z_score(s_expected) },
            "martingale_half_critical": { "mean": m_est.mean, "std_err": m_est.std_err, "expected": mid.v[i - 1], "z": m_est.z_score(mid.v[i - 1]) },
        },
    })))
}
