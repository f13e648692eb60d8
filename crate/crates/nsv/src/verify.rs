//! Checkers for the estimates the scheme is supposed to inherit from the
//! continuous system: the energy budget, the kinetic sup bound, moment
//! interpolation, mass conservation, and continuous dependence on initial
//! data. Each check runs a fresh simulation from a config and reduces it to
//! one [`EstimateReport`] whose verdict is `left ≤ right·(1 + slack)`.
//!
//! Tolerances come from the config's `[verify]` section; the checkers never
//! widen them. Unknown constants (the interpolation constant, the energy
//! residual rate) are measured at t = 0 or on a dt-refined companion run and
//! monitored for blow-up rather than asserted a priori.

use serde::Serialize;

use crate::config::{stream_eddy, InitialVelocity, KineticBackend, SimConfig};
use crate::coupling::{
    advance, closing_energy, init_state, step_count, KineticState, LedgerRow, StepParams,
};
use crate::error::{Error, Result};
use crate::field::{MomentFields, VelocityField};
use crate::fluid::PoissonWorkspace;
use crate::kinetic::{lp_norm, moment_grid};
use crate::phase::PhaseGridDensity;

/// Absolute allowance, relative to the initial energy, that keeps exact-zero
/// comparisons from failing on accumulated rounding. This is a numerical-zero
/// guard, not a tolerance; the declared slacks are in the config.
const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct RunMeta {
    pub nx: usize,
    pub ny: usize,
    pub backend: String,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl RunMeta {
    fn of(cfg: &SimConfig) -> Self {
        RunMeta {
            nx: cfg.domain.nx,
            ny: cfg.domain.ny,
            backend: match cfg.sim.backend {
                KineticBackend::Particles => "particles".into(),
                KineticBackend::PhaseGrid => "phase-grid".into(),
            },
            dt: cfg.sim.dt,
            t_end: cfg.sim.t_end,
            seed: cfg.sim.seed,
        }
    }
}

/// One checked estimate: the measured left side, the bound on the right, and
/// the declared slack. `pass ⇔ left ≤ right·(1 + slack)`, with non-finite
/// left always failing.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub id: &'static str,
    pub left: f64,
    pub right: f64,
    pub slack: f64,
    pub pass: bool,
    pub details: Vec<String>,
    pub meta: RunMeta,
}

impl EstimateReport {
    fn gauge(
        id: &'static str,
        left: f64,
        right: f64,
        slack: f64,
        details: Vec<String>,
        meta: RunMeta,
    ) -> Self {
        let pass = left.is_finite() && left <= right * (1.0 + slack);
        EstimateReport {
            id,
            left,
            right,
            slack,
            pass,
            details,
            meta,
        }
    }
}

/// Everything a ledger-based check needs from one complete run.
pub struct RunRecord {
    pub e0: f64,
    pub mass0: f64,
    pub rows: Vec<LedgerRow>,
}

/// Runs the coupled loop to completion and keeps every ledger row.
pub fn record_run(cfg: &SimConfig) -> Result<RunRecord> {
    let mut state = init_state(cfg)?;
    let params = StepParams::from_config(cfg);
    let mut ws = PoissonWorkspace::new(&state.grid);
    let e0 = closing_energy(&state.u, &state.kinetic);
    let mass0 = state.kinetic.mass();
    let n = step_count(cfg);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(advance(&mut state, &params, &mut ws)?);
    }
    Ok(RunRecord { e0, mass0, rows })
}

fn phase_of(k: &KineticState) -> &PhaseGridDensity {
    match k {
        KineticState::PhaseGrid(f) => f,
        // every caller forces the phase-grid backend before stepping
        KineticState::Particles(_) => unreachable!("check requires the phase-grid backend"),
    }
}

/// Discrete energy inequality: E(t) ≤ E(0) + C·dt·t, with the residual rate C
/// measured on a dt/2 companion run, and cumulative dissipation bounded by
/// the energy drop plus the same allowance.
pub fn check_energy_inequality(cfg: &SimConfig) -> Result<EstimateReport> {
    let slack = cfg.verify.energy_slack;
    let coarse = record_run(cfg)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.sim.dt = 0.5 * cfg.sim.dt;
    let fine = record_run(&fine_cfg)?;

    let sup_abs = |rows: &[LedgerRow]| rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let r_coarse = sup_abs(&coarse.rows);
    let r_fine = sup_abs(&fine.rows);
    // residual ≈ C·dt, so the refined run calibrates C
    let c = fine
        .rows
        .iter()
        .map(|r| r.residual.max(0.0))
        .fold(0.0, f64::max)
        / fine_cfg.sim.dt;

    let dt = cfg.sim.dt;
    let floor = ROUNDING_FLOOR * coarse.e0.abs();
    let mut excess = f64::NEG_INFINITY;
    let mut dissipated = 0.0;
    let mut e_end = coarse.e0;
    for r in &coarse.rows {
        e_end = r.closing_energy();
        let allowance = (1.0 + slack) * c * dt * r.time + floor;
        excess = excess.max(e_end - coarse.e0 - allowance);
        dissipated += dt * (r.d_visc + r.d_drag);
    }
    let t_end = coarse.rows.last().map_or(0.0, |r| r.time);
    let allowance_t = (1.0 + slack) * c * dt * t_end + floor;
    excess = excess.max(dissipated - (coarse.e0 - e_end) - allowance_t);

    let ratio = if r_fine > 0.0 {
        format!("{:.2}", r_coarse / r_fine)
    } else {
        "n/a".into()
    };
    let details = vec![
        format!(
            "max |residual| {r_coarse:.3e} at dt = {dt:.2e}, {r_fine:.3e} at dt/2 (ratio {ratio})"
        ),
        format!("residual rate C = {c:.3e}, allowance at T = {allowance_t:.3e}"),
        format!(
            "E(0) = {:.6e}, E(T) = {:.6e}, cumulative dissipation = {:.6e}",
            coarse.e0, e_end, dissipated
        ),
    ];
    Ok(EstimateReport::gauge(
        "energy-inequality",
        excess,
        0.0,
        slack,
        details,
        RunMeta::of(cfg),
    ))
}

/// Kinetic sup bound: sup f(t) ≤ e^{2t}·sup f₀ at every step, zero tolerance.
/// The transport scheme caps each step at its compression factor e^{2·dt},
/// so any violation is an implementation bug, not a resolution problem.
/// Forces the phase-grid backend (the bound needs pointwise values).
pub fn check_maximum_principle(cfg: &SimConfig) -> Result<EstimateReport> {
    let mut cfg = cfg.clone();
    cfg.sim.backend = KineticBackend::PhaseGrid;
    let mut state = init_state(&cfg)?;
    let params = StepParams::from_config(&cfg);
    let mut ws = PoissonWorkspace::new(&state.grid);

    let sup0 = phase_of(&state.kinetic).max();
    let l2_0 = lp_norm(phase_of(&state.kinetic), 2.0)?;
    let mut worst = (f64::NEG_INFINITY, sup0, sup0); // (excess, sup, bound)
    let mut l2_ratio = 0.0f64;
    let mut sup_end = sup0;
    for _ in 0..step_count(&cfg) {
        let row = advance(&mut state, &params, &mut ws)?;
        let f = phase_of(&state.kinetic);
        sup_end = f.max();
        let bound = (2.0 * row.time).exp() * sup0;
        if sup_end - bound > worst.0 {
            worst = (sup_end - bound, sup_end, bound);
        }
        if l2_0 > 0.0 {
            // the L² analogue grows like e^{2t(1-1/p)} = e^t in 2-D
            l2_ratio = l2_ratio.max(lp_norm(f, 2.0)? / (row.time.exp() * l2_0));
        }
    }

    let details = vec![
        format!(
            "sup f: {sup0:.6e} → {sup_end:.6e} over T = {}; envelope e^{{2T}}·sup f₀ = {:.6e}",
            state.time,
            (2.0 * state.time).exp() * sup0
        ),
        format!("worst step: sup f = {:.6e} against bound {:.6e}", worst.1, worst.2),
        format!("L² growth stayed within factor {l2_ratio:.4} of its e^t envelope"),
    ];
    Ok(EstimateReport::gauge(
        "maximum-principle",
        worst.1,
        worst.2,
        0.0,
        details,
        RunMeta::of(&cfg),
    ))
}

/// Worst-cell constant C in m0 ≤ C·(sup f + 1)·m6^{1/4}. Infinite when some
/// cell carries mass with a vanishing sixth moment (a velocity atom at the
/// origin), where the interpolation inequality genuinely degenerates.
pub fn interpolation_constant(fg: &PhaseGridDensity) -> f64 {
    let sup = fg.max();
    let m0 = moment_grid(fg, 0);
    let m6 = moment_grid(fg, 6);
    let mut worst = 0.0f64;
    for i in 0..fg.nx {
        for j in 0..fg.ny {
            let a = m0.at(i, j);
            if a <= 0.0 {
                continue;
            }
            let b = m6.at(i, j);
            if b <= 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max(a / ((sup + 1.0) * b.powf(0.25)));
        }
    }
    worst
}

/// Moment interpolation: the constant in m0 ≤ C·(sup f + 1)·m6^{1/4} is
/// measured at t = 0 and must not grow past `moment_growth_cap` times its
/// initial value. Also reports the L⁴ norm of m0 and the utilization of the
/// compact-support bound m0 ≤ 2π·vmax²·sup f. Forces the phase-grid backend.
pub fn check_moment_interpolation(cfg: &SimConfig) -> Result<EstimateReport> {
    let mut cfg = cfg.clone();
    cfg.sim.backend = KineticBackend::PhaseGrid;
    let cap = cfg.verify.moment_growth_cap;
    let mut state = init_state(&cfg)?;
    let params = StepParams::from_config(&cfg);
    let mut ws = PoissonWorkspace::new(&state.grid);

    let scan = |f: &PhaseGridDensity| {
        let m0 = moment_grid(f, 0);
        let area = f.hx * f.hy;
        let l4 = (m0.data.iter().map(|v| v.powi(4)).sum::<f64>() * area).powf(0.25);
        let sup = f.max();
        let support = if sup > 0.0 {
            let cap_m0 = 2.0 * std::f64::consts::PI * f.vmax * f.vmax * sup;
            m0.data.iter().fold(0.0f64, |m, &v| m.max(v)) / cap_m0
        } else {
            0.0
        };
        (interpolation_constant(f), l4, support)
    };

    let (c0, mut l4_sup, mut support_util) = scan(phase_of(&state.kinetic));
    let mut c_worst = 0.0f64;
    for _ in 0..step_count(&cfg) {
        advance(&mut state, &params, &mut ws)?;
        let (c, l4, support) = scan(phase_of(&state.kinetic));
        c_worst = c_worst.max(c);
        l4_sup = l4_sup.max(l4);
        support_util = support_util.max(support);
    }

    let details = vec![
        format!("C(0) = {c0:.6e}, sup_t C(t) = {c_worst:.6e}, cap factor {cap}"),
        format!("sup_t ‖m0‖_L⁴ = {l4_sup:.6e}"),
        format!("compact-support bound m0 ≤ 2π·vmax²·sup f used at most {support_util:.4} of its headroom"),
    ];
    Ok(EstimateReport::gauge(
        "moment-interpolation",
        c_worst,
        cap * c0,
        0.0,
        details,
        RunMeta::of(&cfg),
    ))
}

/// Mass conservation. Particle weights are never mutated, so their total must
/// repeat bit for bit (zero tolerance). The phase grid remaps mass every
/// step; its relative drift gets the configured tolerance, tighter when the
/// flow starts at rest (pure transport).
pub fn check_mass_conservation(cfg: &SimConfig) -> Result<EstimateReport> {
    let rec = record_run(cfg)?;
    let drift = rec
        .rows
        .iter()
        .map(|r| (r.mass - rec.mass0).abs())
        .fold(0.0, f64::max);
    let steps = rec.rows.len();
    let meta = RunMeta::of(cfg);
    match cfg.sim.backend {
        KineticBackend::Particles => {
            let details = vec![format!(
                "total weight {:.12e} over {steps} steps, max |drift| = {drift:.3e} (must be exactly 0)",
                rec.mass0
            )];
            Ok(EstimateReport::gauge(
                "mass-conservation",
                drift,
                0.0,
                0.0,
                details,
                meta,
            ))
        }
        KineticBackend::PhaseGrid => {
            let rel = drift / rec.mass0;
            let tol = if cfg.fluid.initial == InitialVelocity::Zero {
                cfg.verify.mass_tol_transport
            } else {
                cfg.verify.mass_tol_coupled
            };
            let details = vec![format!(
                "mass {:.12e}, relative drift {rel:.3e} over {steps} steps, tolerance {tol:.1e}",
                rec.mass0
            )];
            Ok(EstimateReport::gauge(
                "mass-conservation",
                rel,
                tol,
                0.0,
                details,
                meta,
            ))
        }
    }
}

pub const STABILITY_HEADER: &str = "eps,u_dev_L2,f_dev_L2";

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub u_dev: f64,
    pub f_dev: f64,
}

impl StabilityRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{}", self.eps, self.u_dev, self.f_dev)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub slope: f64,
    pub report: EstimateReport,
}

struct Trace {
    u: Vec<VelocityField>,
    m: Vec<MomentFields>,
}

/// ε = 0 must reproduce the base state bit for bit, and 0·δ can still flip
/// the sign of a stored zero, so skip the arithmetic entirely.
fn apply_perturbation(u: &mut VelocityField, delta: &VelocityField, eps: f64) {
    if eps == 0.0 {
        return;
    }
    for (a, d) in u.ux.data.iter_mut().zip(&delta.ux.data) {
        *a += eps * d;
    }
    for (a, d) in u.uy.data.iter_mut().zip(&delta.uy.data) {
        *a += eps * d;
    }
}

fn run_traced(cfg: &SimConfig, delta: &VelocityField, eps: f64) -> Result<Trace> {
    let mut state = init_state(cfg)?;
    apply_perturbation(&mut state.u, delta, eps);
    let params = StepParams::from_config(cfg);
    let mut ws = PoissonWorkspace::new(&state.grid);
    let n = step_count(cfg);
    let mut tr = Trace {
        u: Vec::with_capacity(n + 1),
        m: Vec::with_capacity(n + 1),
    };
    tr.u.push(state.u.clone());
    tr.m.push(state.moments.clone());
    for _ in 0..n {
        advance(&mut state, &params, &mut ws)?;
        tr.u.push(state.u.clone());
        tr.m.push(state.moments.clone());
    }
    Ok(tr)
}

/// L² distance between moment sets: sqrt(Σ (Δm0² + Δm1x² + Δm1y²)·area).
fn moment_dist(a: &MomentFields, b: &MomentFields) -> f64 {
    let pairs = a
        .m0
        .data
        .iter()
        .zip(&b.m0.data)
        .chain(a.m1x.data.iter().zip(&b.m1x.data))
        .chain(a.m1y.data.iter().zip(&b.m1y.data));
    let s: f64 = pairs.map(|(p, q)| (p - q) * (p - q)).sum();
    (s * a.hx * a.hy).sqrt()
}

fn bitwise_eq(a: &VelocityField, b: &VelocityField) -> bool {
    let same = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(x, y)| x.to_bits() == y.to_bits());
    same(&a.ux.data, &b.ux.data) && same(&a.uy.data, &b.uy.data)
}

fn loglog_slope(rows: &[StabilityRow]) -> f64 {
    let n = rows.len() as f64;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps.ln(), r.u_dev.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Continuous dependence on initial data, the computable face of uniqueness:
/// perturb u₀ by ε·δu with a fixed smooth divergence-free δu, record the
/// worst-over-time L² deviations of the velocity and of the kinetic moments,
/// and fit the log–log slope of the velocity deviation against ε. First-order
/// dependence means slope 1 within the configured band. An ε = 0 rerun must
/// reproduce the baseline bit for bit before the sweep counts.
pub fn stability_experiment(cfg: &SimConfig, eps: &[f64]) -> Result<StabilityReport> {
    if eps.len() < 2 {
        return Err(Error::Config(format!(
            "stability needs at least two perturbation sizes, got {}",
            eps.len()
        )));
    }
    for &e in eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!(
                "perturbation sizes must be positive and finite, got {e}"
            )));
        }
    }
    let mut sorted = eps.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(
            "perturbation sizes must be pairwise distinct".into(),
        ));
    }

    let grid = cfg.grid()?;
    // fixed smooth divergence-free perturbation, peak speed about 1
    let delta = stream_eddy(&grid, 1.0);

    let base = run_traced(cfg, &delta, 0.0)?;
    let rerun = run_traced(cfg, &delta, 0.0)?;
    let guard_ok = base
        .u
        .iter()
        .zip(&rerun.u)
        .all(|(a, b)| bitwise_eq(a, b));

    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let tr = run_traced(cfg, &delta, e)?;
        let mut u_dev = 0.0f64;
        let mut f_dev = 0.0f64;
        // k = 0 would echo ε·δu itself; the theorem is about the response
        for k in 1..base.u.len() {
            u_dev = u_dev.max(base.u[k].l2_dist(&tr.u[k]));
            f_dev = f_dev.max(moment_dist(&base.m[k], &tr.m[k]));
        }
        rows.push(StabilityRow { eps: e, u_dev, f_dev });
    }

    let slope = loglog_slope(&rows);
    let left = if guard_ok {
        (slope - 1.0).abs()
    } else {
        f64::INFINITY
    };
    let mut details = vec![
        format!(
            "eps = 0 rerun bit-identical over {} states: {guard_ok}",
            base.u.len()
        ),
        format!("fitted log–log slope of sup_t ‖ū‖_L² vs ε: {slope:.4}"),
    ];
    for r in &rows {
        details.push(format!(
            "ε = {:.3e}: sup_t ‖ū‖_L² = {:.6e}, sup_t ‖f̄ moments‖_L² = {:.6e}",
            r.eps, r.u_dev, r.f_dev
        ));
    }
    let report = EstimateReport::gauge(
        "stability-slope",
        left,
        cfg.verify.slope_band,
        0.0,
        details,
        RunMeta::of(cfg),
    );
    Ok(StabilityReport { rows, slope, report })
}

/// Human-readable verdict table, one row per estimate plus indented details.
pub fn table(reports: &[EstimateReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>13} {:>13} {:>6}  verdict\n",
        "estimate", "left", "right", "slack"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<22} {:>13.6e} {:>13.6e} {:>6}  {}\n",
            r.id,
            r.left,
            r.right,
            r.slack,
            if r.pass { "PASS" } else { "FAIL" }
        ));
        for d in &r.details {
            out.push_str(&format!("    {d}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::from_str_with_overrides;
    use crate::grid::{build_domain, DomainSpec, FluidBc, KineticBc};

    fn cfg(extra: &[&str]) -> SimConfig {
        let base = r#"
[domain]
dim = 2
lx = 1.0
ly = 1.0
nx = 8
ny = 8
bc_fluid = "no-slip"
bc_kinetic = "specular"

[sim]
dt = 1e-3
t_end = 5e-3
seed = 11

[fluid]
initial = "stream-eddy"
amplitude = 0.3

[kinetic]
particles = 500
rho = 0.8
theta = 0.25
phase_nx = 8
phase_ny = 8
phase_nv = 8
vmax = 3.0
"#;
        let ov: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        from_str_with_overrides(base, &ov).unwrap()
    }

    #[test]
    fn maxwellian_interpolation_constant_matches_gaussian_moments() {
        let grid =
            build_domain(DomainSpec::unit_square(4, FluidBc::NoSlip, KineticBc::Specular)).unwrap();
        let mut f = PhaseGridDensity::zeros(&grid, 4, 4, 64, 4.0).unwrap();
        let (rho, theta) = (1.0, 0.25);
        f.fill_maxwellian(rho, (0.0, 0.0), theta);
        // closed form: sup = ρ/(2πθ), m0 = ρ, m6 = 48·θ³·ρ
        let sup = rho / (2.0 * std::f64::consts::PI * theta);
        let expected = rho / ((sup + 1.0) * (48.0 * theta.powi(3) * rho).powf(0.25));
        let got = interpolation_constant(&f);
        assert!(
            (got - expected).abs() < 0.02 * expected,
            "constant {got} vs closed form {expected}"
        );

        // a velocity atom at the origin has m0 > 0 with m6 = 0: degenerate
        let mut atom = PhaseGridDensity::zeros(&grid, 4, 4, 3, 3.0).unwrap();
        let k = atom.idx(0, 0, 1, 1);
        assert_eq!(atom.v_node(1), 0.0);
        atom.f[k] = 1.0;
        assert!(interpolation_constant(&atom).is_infinite());
    }

    #[test]
    fn energy_inequality_holds_for_a_nearly_decoupled_vortex() {
        let c = cfg(&[
            "domain.bc_fluid=periodic",
            "domain.bc_kinetic=periodic",
            "domain.nx=16",
            "domain.ny=16",
            "fluid.initial=taylor-green",
            "fluid.amplitude=1.0",
            "sim.dt=2e-3",
            "sim.t_end=0.02",
            "kinetic.rho=1e-12",
        ]);
        let rep = check_energy_inequality(&c).unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert_eq!(rep.right, 0.0);
        assert_eq!(rep.details.len(), 3);
    }

    #[test]
    fn mass_is_exact_for_particles_and_tight_for_the_phase_grid() {
        let rep = check_mass_conservation(&cfg(&[])).unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert_eq!(rep.left, 0.0);
        assert_eq!(rep.right, 0.0);

        let rep = check_mass_conservation(&cfg(&["sim.backend=phase-grid"])).unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert_eq!(rep.right, 1e-2);
        assert_eq!(rep.meta.backend, "phase-grid");

        // flow at rest: transport only, tighter tolerance
        let rep =
            check_mass_conservation(&cfg(&["sim.backend=phase-grid", "fluid.initial=zero"]))
                .unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert_eq!(rep.right, 1e-3);
    }

    #[test]
    fn maximum_principle_is_scheme_exact_on_coupled_and_resting_flows() {
        let rep = check_maximum_principle(&cfg(&["sim.t_end=1e-2"])).unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert_eq!(rep.meta.backend, "phase-grid");
        assert!(rep.left <= rep.right);
        // the relaxation term really does push sup f upward
        assert!(rep.left > 0.0);

        let rep = check_maximum_principle(&cfg(&["fluid.initial=zero"])).unwrap();
        assert!(rep.pass, "report: {rep:?}");
    }

    #[test]
    fn moment_constant_stays_bounded_along_a_coupled_run() {
        let rep = check_moment_interpolation(&cfg(&["sim.t_end=1e-2"])).unwrap();
        assert!(rep.pass, "report: {rep:?}");
        assert!(rep.left > 0.0 && rep.left.is_finite());
        assert_eq!(rep.slack, 0.0);
        // support bound can never be exceeded by a midpoint sum
        assert!(rep.details[2].contains("headroom"));
    }

    #[test]
    fn stability_rejects_degenerate_sweeps() {
        let c = cfg(&[]);
        assert!(stability_experiment(&c, &[]).is_err());
        assert!(stability_experiment(&c, &[1e-2]).is_err());
        assert!(stability_experiment(&c, &[1e-2, -1.0]).is_err());
        assert!(stability_experiment(&c, &[1e-2, 0.0]).is_err());
        assert!(stability_experiment(&c, &[1e-2, 1e-2]).is_err());
    }

    #[test]
    fn small_perturbations_propagate_linearly() {
        let c = cfg(&["fluid.amplitude=0.5", "kinetic.particles=300"]);
        let sr = stability_experiment(&c, &[1e-2, 5e-3]).unwrap();
        assert!(sr.report.pass, "report: {:?}", sr.report);
        assert!((sr.slope - 1.0).abs() < 0.05, "slope {}", sr.slope);
        assert_eq!(sr.rows.len(), 2);
        let halving = sr.rows[0].u_dev / sr.rows[1].u_dev;
        assert!((1.8..2.2).contains(&halving), "halving {halving}");
        assert!(sr.rows[0].f_dev > 0.0);

        let text = table(&[sr.report.clone()]);
        assert!(text.contains("stability-slope") && text.contains("PASS"));
    }
}
