//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use recourse::actions::{ActionSetSpec, Actionability, FeatureActionSpec, FeatureKind, PercentileModel};
use recourse::costs::{CostSpec, CostVariant};
use recourse::{problem_for_point, LinearModel, ProblemOptions, RecourseProblem};

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw by Box-Muller.
pub fn gaussian(rng: &mut TestRng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceConfig {
    pub max_dim: usize,
    /// Largest `grid_size` for real features (grid has `grid_size + 1` points).
    pub max_grid: usize,
    pub linked_groups: bool,
    pub exclusions: bool,
    pub margin: bool,
    pub minimax: bool,
}

impl InstanceConfig {
    pub fn small() -> Self {
        InstanceConfig {
            max_dim: 6,
            max_grid: 3,
            linked_groups: true,
            exclusions: true,
            margin: true,
            minimax: false,
        }
    }
}

/// A point, its rules and everything needed to build the problem again.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: LinearModel,
    pub spec: ActionSetSpec,
    pub x: Vec<f64>,
    pub cost: CostSpec,
    pub percentiles: Option<PercentileModel>,
    pub options: ProblemOptions,
    pub excluded: Vec<Vec<usize>>,
}

impl Instance {
    pub fn problem(&self) -> RecourseProblem {
        let mut p = problem_for_point(
            &self.model,
            &self.spec,
            &self.x,
            &self.cost,
            self.percentiles.as_ref(),
            &self.options,
        )
        .expect("generated instance is valid");
        for s in &self.excluded {
            p.exclude_support(s).expect("excluded support is actionable");
        }
        p
    }

    /// Independent cost functional for the brute-force oracle.
    pub fn cost_functional(&self) -> impl Fn(&[f64]) -> f64 + '_ {
        move |a| {
            self.cost
                .action_cost(&self.x, a, self.percentiles.as_ref())
                .expect("valid action")
        }
    }
}

fn random_feature(rng: &mut TestRng, name: String, max_grid: usize) -> (FeatureActionSpec, f64) {
    let actionability = *[
        Actionability::Fixed,
        Actionability::Any,
        Actionability::Any,
        Actionability::IncreaseOnly,
        Actionability::DecreaseOnly,
    ]
    .choose(rng)
    .unwrap();
    match rng.gen_range(0..3) {
        0 => {
            let x = rng.gen_range(0..=1) as f64;
            (FeatureActionSpec::binary(name, actionability), x)
        }
        1 => {
            let lb = rng.gen_range(-3..=1) as f64;
            let ub = lb + rng.gen_range(0..=3) as f64;
            let x = rng.gen_range(lb as i64..=ub as i64) as f64;
            (
                FeatureActionSpec::new(name, FeatureKind::Integer, lb, ub, actionability),
                x,
            )
        }
        _ => {
            let lb = rng.gen_range(-3.0..1.0);
            let ub = lb + rng.gen_range(0.1..4.0);
            let x = rng.gen_range(lb..=ub);
            let grid = rng.gen_range(1..=max_grid);
            (
                FeatureActionSpec::new(name, FeatureKind::Real, lb, ub, actionability).with_grid_size(grid),
                x,
            )
        }
    }
}

/// Population drawn inside each feature's bounds, respecting integrality.
pub fn population(rng: &mut TestRng, spec: &ActionSetSpec, n: usize) -> PercentileModel {
    let samples = population_samples(rng, spec, n);
    PercentileModel::new(spec.names().map(String::from).collect(), samples).unwrap()
}

/// Column-major samples, one column per feature.
pub fn population_samples(rng: &mut TestRng, spec: &ActionSetSpec, n: usize) -> Vec<Vec<f64>> {
    spec.features()
        .iter()
        .map(|f| {
            (0..n)
                .map(|_| match f.kind {
                    FeatureKind::Real => rng.gen_range(f.lb..=f.ub),
                    _ => rng.gen_range(f.lb as i64..=f.ub as i64) as f64,
                })
                .collect()
        })
        .collect()
}

/// Random small instance whose point is predicted negative.
pub fn random_instance(rng: &mut TestRng, config: &InstanceConfig) -> Instance {
    let d = rng.gen_range(1..=config.max_dim);
    let names = names(d);
    let (mut features, x): (Vec<FeatureActionSpec>, Vec<f64>) = names
        .iter()
        .map(|n| random_feature(rng, n.clone(), config.max_grid))
        .unzip();

    if config.linked_groups && rng.gen_bool(0.35) {
        let binaries: Vec<usize> = (0..d).filter(|&j| features[j].kind == FeatureKind::Binary).collect();
        if binaries.len() >= 2 {
            let size = rng.gen_range(2..=binaries.len().min(3));
            for &j in binaries.choose_multiple(rng, size) {
                features[j].linked_group = Some("g".into());
            }
        }
    }
    let spec = ActionSetSpec::new(features).unwrap();

    let coefficients: Vec<f64> = (0..d)
        .map(|_| {
            if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(-2.0..2.0)
            }
        })
        .collect();
    let partial: f64 = coefficients.iter().zip(&x).map(|(w, v)| w * v).sum();
    // score in [-1.5, -0.05] so the point needs recourse
    let intercept = -partial - rng.gen_range(0.05..1.5);
    let model = LinearModel::new(names, coefficients, intercept).unwrap();

    let (cost, percentiles) = if config.minimax {
        (
            CostSpec::new(CostVariant::MaxPercentileShift),
            Some(population(rng, &spec, 25)),
        )
    } else if rng.gen_bool(0.5) {
        let weights = (0..d).map(|_| rng.gen_range(0.2..3.0)).collect();
        (
            CostSpec::new(CostVariant::WeightedLinear)
                .with_weights(weights)
                .unwrap(),
            None,
        )
    } else {
        (
            CostSpec::new(CostVariant::TotalLogPercentile),
            Some(population(rng, &spec, 25)),
        )
    };
    let options = ProblemOptions {
        default_grid_size: config.max_grid,
        prune_by_sign: rng.gen_bool(0.5),
        margin: if config.margin && rng.gen_bool(0.3) {
            rng.gen_range(0.0..0.5)
        } else {
            0.0
        },
    };
    let mut instance = Instance {
        model,
        spec,
        x,
        cost,
        percentiles,
        options,
        excluded: vec![],
    };
    if config.exclusions && rng.gen_bool(0.3) {
        let p = instance.problem();
        let actionable: Vec<usize> = (0..d).filter(|&j| p.grid().features[j].is_actionable()).collect();
        if !actionable.is_empty() {
            for _ in 0..rng.gen_range(1..=2) {
                let size = rng.gen_range(1..=actionable.len().min(3));
                let mut s: Vec<usize> = actionable.choose_multiple(rng, size).copied().collect();
                s.sort_unstable();
                instance.excluded.push(s);
            }
        }
    }
    instance
}

/// Every grid combination honoring linked groups, as full action vectors.
pub fn all_grid_actions(problem: &RecourseProblem) -> Vec<Vec<f64>> {
    let grid = problem.grid();
    let mut out = vec![vec![]];
    for f in &grid.features {
        let mut next = Vec::with_capacity(out.len() * f.actions.len());
        for prefix in &out {
            for &a in &f.actions {
                let mut v: Vec<f64> = prefix.clone();
                v.push(a);
                next.push(v);
            }
        }
        out = next;
    }
    out.retain(|a| {
        grid.linked_groups
            .iter()
            .all(|g| g.iter().filter(|&&j| a[j] != 0.0).count() <= 1)
    });
    out
}

pub fn support(a: &[f64]) -> Vec<usize> {
    (0..a.len()).filter(|&j| a[j] != 0.0).collect()
}

pub fn flips(problem: &RecourseProblem, a: &[f64]) -> bool {
    let moved: Vec<f64> = problem.point().iter().zip(a).map(|(x, a)| x + a).collect();
    problem.model().score(&moved).unwrap() >= problem.margin() - 1e-9
}
