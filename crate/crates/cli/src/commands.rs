use degenlab_core::bvp::{self, CoefficientPair, ProblemKind, TraceMaps};
use degenlab_core::checks;
use degenlab_core::coefficients::CoefficientField;
use degenlab_core::corona;
use degenlab_core::dyadic::{DyadicCube, TGrid};
use degenlab_core::grid::WeightedGrid;
use degenlab_core::operators::{self, Composition, DiscreteD, SpectralCalculus};
use degenlab_core::quadratic::{self, PrincipalPart};
use degenlab_core::weights::WeightModel;
use degenlab_core::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    BvpConfig, CommandConfig, CoronaConfig, ExperimentConfig, Format, QestConfig, ReplayConfig, SpecConfig, SuiteConfig,
    WeightConfig,
};
use crate::json::{self, float};
use crate::{Artifact, Status};

type Outcome = Result<(Status, Vec<Artifact>)>;

pub fn run(cfg: &ExperimentConfig) -> Outcome {
    let seed = cfg.common.seed;
    let (status, report, csv) = match &cfg.params {
        CommandConfig::Weight(c) => weight(c)?,
        CommandConfig::Corona(c) => corona_cmd(c)?,
        CommandConfig::Spec(c) => spec(c, seed)?,
        CommandConfig::Qest(c) => qest(c, seed)?,
        CommandConfig::Bvp(c) => bvp_cmd(c)?,
        CommandConfig::Replay(c) => replay(c, seed)?,
        CommandConfig::Suite(c) => suite(c)?,
    };
    let name = cfg.command.as_str();
    let artifact = match cfg.common.format {
        Format::Json => Artifact { name: format!("{name}.json"), contents: json::to_string(&report) },
        Format::Csv => Artifact { name: format!("{name}.csv"), contents: csv },
    };
    Ok((status, vec![artifact]))
}

type Report = (Status, Value, String);

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("reports serialize")
}

fn check(failures: Vec<String>) -> Status {
    if failures.is_empty() {
        Status::Ok
    } else {
        Status::AssertionFailed(failures.join("; "))
    }
}

fn weight(c: &WeightConfig) -> Result<Report> {
    let w = WeightModel::new(c.weight.clone(), c.depth)?;
    let profile = w.ainfty_profile(c.depth, c.samples)?;
    let mut csv = String::from("level,index,mass,a2_ratio,log_mean\n");
    for q in DyadicCube::all_to_depth(c.depth) {
        csv.push_str(&format!("{},{},{},{},{}\n", q.level, q.index, float(w.mass(q)?), float(w.a2_ratio(q)?), float(w.log_mean(q)?)));
    }
    let report = json!({"weight": w.id(), "profile": to_value(&profile)});
    let failures = if profile.a2_constant >= 1.0 - 1e-12 { vec![] } else { vec![format!("A2 constant {} below 1", profile.a2_constant)] };
    Ok((check(failures), report, csv))
}

fn corona_cmd(c: &CoronaConfig) -> Result<Report> {
    let w = WeightModel::new(c.weight.clone(), c.depth)?;
    let dec = corona::corona_decompose(&w, DyadicCube::root(), c.sigma_w, c.depth)?;
    let defect = dec.verify(&w)?;
    let mut csv = String::from("generation,level,index\n");
    for (g, gen) in dec.generations.iter().enumerate() {
        for s in gen {
            csv.push_str(&format!("{},{},{}\n", g + 1, s.cube.level, s.cube.index));
        }
    }
    let report = json!({
        "weight": w.id(),
        "sigma_w": c.sigma_w,
        "depth": c.depth,
        "packing_ratio": dec.packing_ratio,
        "generations": dec.generations.iter().map(Vec::len).collect::<Vec<_>>(),
        "rule_violation": defect,
        "tree": dec.to_json_tree(),
    });
    let failures = if defect <= 1e-12 { vec![] } else { vec![format!("stopping rules violated by {defect:.3e}")] };
    Ok((check(failures), report, csv))
}

fn spec(c: &SpecConfig, seed: u64) -> Result<Report> {
    let w = WeightModel::new(c.weight.clone(), 12)?;
    let grid = WeightedGrid::new(&w, c.n)?;
    let d = DiscreteD::new(&grid)?;
    let b = CoefficientField::from_spec(&c.b, c.n)?;
    let other = match c.composition {
        Composition::DB => Composition::BD,
        Composition::BD => Composition::DB,
    };
    let calc = SpectralCalculus::new(&d, &b, c.composition)?;
    let dual = SpectralCalculus::new(&d, &b, other)?;
    let (db, bd) = if c.composition == Composition::DB { (&calc, &dual) } else { (&dual, &calc) };
    let structure = operators::structure_checks(db, bd, c.samples, seed)?;
    let kato = operators::riesz_and_kato(&grid, &b, c.samples, seed).ok();
    let mut csv = String::from("re,im,abs\n");
    for z in calc.eigenvalues() {
        csv.push_str(&format!("{},{},{}\n", float(z.re), float(z.im), float(z.norm())));
    }
    let report = json!({
        "weight": w.id(),
        "B": b.id(),
        "N": c.n,
        "composition": to_value(&c.composition),
        "backend": to_value(&calc.backend()),
        "eigenbasis_cond": calc.cond(),
        "accretivity": to_value(&calc.accretivity()),
        "sector_angle": calc.sector_angle(),
        "imaginary_axis_gap": calc.imaginary_axis_gap(),
        "reconstruction_error": calc.reconstruction_error(),
        "self_adjointness_defect": d.self_adjointness_defect(),
        "structure": to_value(&structure),
        "kato": kato.as_ref().map(to_value),
    });
    let worst = [structure.splitting, structure.intertwining_sgn, structure.intertwining_chi, structure.similarity]
        .into_iter()
        .fold(0.0, f64::max);
    let failures = if worst <= 1e-8 { vec![] } else { vec![format!("structure residual {worst:.3e} above 1e-8")] };
    Ok((check(failures), report, csv))
}

fn qest(c: &QestConfig, seed: u64) -> Result<Report> {
    let w = WeightModel::new(c.weight.clone(), 12)?;
    let grid = WeightedGrid::new(&w, c.n)?;
    let d = DiscreteD::new(&grid)?;
    let b = CoefficientField::from_spec(&c.b, c.n)?;
    let calc = SpectralCalculus::without_eigenvectors(&d, &b, Composition::DB)?;
    let r = quadratic::quadratic_ratio_sup(&calc, &TGrid::for_grid(&grid), c.probes, seed)?;
    let csv = format!(
        "N,sup,inf,probe_sup,probe_inf\n{},{},{},{},{}\n",
        r.n,
        float(r.sup),
        float(r.inf),
        float(r.probe_sup),
        float(r.probe_inf)
    );
    let failures = if r.inf > 0.0 && r.sup.is_finite() { vec![] } else { vec![format!("ratio range [{}, {}] not in (0, inf)", r.inf, r.sup)] };
    Ok((check(failures), to_value(&r), csv))
}

fn bvp_cmd(c: &BvpConfig) -> Result<Report> {
    let w = WeightModel::new(c.weight.clone(), 12)?;
    let grid = WeightedGrid::new(&w, c.n)?;
    let pair = CoefficientPair::from_a_over_w(CoefficientField::from_spec(&c.a_over_w, c.n)?)?;
    let maps = TraceMaps::new(&grid, &pair)?;
    let conditioning: Vec<Value> = ProblemKind::ALL
        .iter()
        .map(|k| maps.conditioning(*k).map(|m| json!({"problem": to_value(k), "map": to_value(&m)})))
        .collect::<Result<_>>()?;
    let phi = bvp::fourier_datum(&grid, c.modes, c.problem);
    let sol = bvp::solve_tindep(&maps, c.problem, &phi, &TGrid::for_grid(&grid))?;
    let oracle = if c.oracle {
        Some(bvp::oracle_comparison(&w, &c.a_over_w, c.problem, c.modes, c.n, c.tmax, 2.0)?)
    } else {
        None
    };
    let mut failures = Vec::new();
    if sol.report.datum_residual > 1e-8 * sol.report.datum_norm.max(1.0) {
        failures.push(format!("boundary datum reproduced only to {:.3e}", sol.report.datum_residual));
    }
    if let Some(o) = &oracle {
        if o.error > 3.0 * o.refinement {
            failures.push(format!("oracle error {:.3e} exceeds 3x refinement error {:.3e}", o.error, o.refinement));
        }
    }
    let r = &sol.report;
    let csv = format!(
        "problem,N,sigma_min,cond,ntmax_grad,y_norm,datum_residual\n{:?},{},{},{},{},{},{}\n",
        c.problem,
        r.n,
        float(r.sigma_min),
        float(r.cond),
        float(r.ntmax_grad),
        float(r.y_norm),
        float(r.datum_residual)
    );
    let report = json!({
        "weight": w.id(),
        "A_over_w": pair.b.id(),
        "conditioning": conditioning,
        "solution": to_value(r),
        "oracle": oracle.as_ref().map(to_value),
    });
    Ok((check(failures), report, csv))
}

fn replay(c: &ReplayConfig, seed: u64) -> Result<Report> {
    let w = WeightModel::new(c.weight.clone(), 12)?;
    let grid = WeightedGrid::new(&w, c.n)?;
    let d = DiscreteD::new(&grid)?;
    let b = CoefficientField::from_spec(&c.b, c.n)?;
    let calc = SpectralCalculus::new(&d, &b, Composition::DB)?;
    let tg = TGrid::for_grid(&grid);
    let pp = PrincipalPart::new(&calc, &tg)?;
    let cal = corona::calibrate(&calc, c.calibration_samples, seed)?;
    let root = DyadicCube::new(c.root[0] as u32, c.root[1]);
    let opts = c.options.unwrap_or(quadratic::ReplayOptions { seed, ..Default::default() });
    let r = quadratic::proof_replay(&calc, &pp, root, &cal.params, &opts)?;
    let mut csv = String::from("lemma,cube_level,cube_index,t,value\n");
    for row in &r.rows {
        csv.push_str(&format!("{},{},{},{},{}\n", row.lemma, row.cube.level, row.cube.index, float(row.t), float(row.value)));
    }
    let failures = if r.aggregate <= r.aggregate_bound * (1.0 + 1e-12) {
        vec![]
    } else {
        vec![format!("aggregate {:.6e} exceeds K-bound {:.6e}", r.aggregate, r.aggregate_bound)]
    };
    let report = json!({"weight": w.id(), "B": b.id(), "N": c.n, "calibration": to_value(&cal), "replay": to_value(&r)});
    Ok((check(failures), report, csv))
}

fn suite(c: &SuiteConfig) -> Result<Report> {
    let ids: Vec<u32> =
        checks::CRITERIA.iter().map(|x| x.0).filter(|id| c.criteria.is_empty() || c.criteria.contains(id)).collect();
    let rows: Vec<checks::CriterionRow> = ids.into_iter().map(|id| checks::run_criterion(id, c.profile)).collect();
    let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| format!("criterion {} ({})", r.id, r.name)).collect();
    let status = if failed.is_empty() { Status::Ok } else { Status::AssertionFailed(format!("failed: {}", failed.join(", "))) };
    Ok((status, json!({"profile": to_value(&c.profile), "rows": to_value(&rows)}), checks::to_csv(&rows)))
}
