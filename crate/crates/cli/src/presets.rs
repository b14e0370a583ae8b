//! Built-in experiment definitions.

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig-1",
        description: "binary switch after T1 steps: Bayes vs αβ-HMM adaptation times, reference and noisy",
        toml: r#"name = "fig-1"
kind = "adaptation"
seed = 1
runs = 200

[model]
family = "gaussian"
means = [1.0, 2.0]
sigma = 1.0

[adaptation]
t1 = [10, 50, 200, 1000]
post_switch = 1200
x0 = 0.0
stochastic = true

[[filters]]
variant = "bayes"

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 1.0
"#,
    },
    Preset {
        name: "fig-ne1",
        description: "M=5, σ=0.5, state redrawn every 10 steps: accuracy vs α for αβ-HMM and the linearized filter",
        toml: r#"name = "fig-ne1"
kind = "monte_carlo"
seed = 1
runs = 4
write_series = false

[model]
family = "gaussian"
means = [1.0, 2.0, 3.0, 4.0, 5.0]
sigma = 0.5

[environment]
horizon = 10000

[environment.schedule]
kind = "periodic_redraw"
period = 10

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 1.0

[[filters]]
variant = "linearized_abhmm"
alpha = 0.05
beta = 1.0

[sweep]
alpha = [0.002, 0.005, 0.01, 0.02, 0.04, 0.07, 0.1, 0.13, 0.16, 0.19]
"#,
    },
    Preset {
        name: "fig-ne2",
        description: "β under observation noise σ² ∈ {1, 2} (body text), M=5 with redraws every 10 steps",
        toml: r#"name = "fig-ne2"
kind = "monte_carlo"
seed = 1
runs = 100

[model]
family = "gaussian"
means = [1.0, 2.0, 3.0, 4.0, 5.0]
sigma = 1.0

[environment]
horizon = 1000

[environment.schedule]
kind = "periodic_redraw"
period = 10

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 1.0

[sweep]
alpha = [0.01, 0.05, 0.1]
beta = [0.5, 1.0, 2.0]
sigma = [1.0, 1.4142135623730951]
"#,
    },
    Preset {
        name: "fig-ne2-caption",
        description: "as fig-ne2 with σ² ∈ {1, 0.5} (figure caption)",
        toml: r#"name = "fig-ne2-caption"
kind = "monte_carlo"
seed = 1
runs = 100

[model]
family = "gaussian"
means = [1.0, 2.0, 3.0, 4.0, 5.0]
sigma = 1.0

[environment]
horizon = 1000

[environment.schedule]
kind = "periodic_redraw"
period = 10

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 1.0

[sweep]
alpha = [0.01, 0.05, 0.1]
beta = [0.5, 1.0, 2.0]
sigma = [1.0, 0.7071067811865476]
"#,
    },
    Preset {
        name: "fig-ne3",
        description: "reference-system trajectories, fixed points, λ envelope and belief bounds; switch to state 4 at step 25",
        toml: r#"name = "fig-ne3"
kind = "reference"

[model]
family = "gaussian"
means = [1.0, 2.0, 3.0, 4.0, 5.0]
sigma = 0.5

[environment]
horizon = 60

[environment.schedule]
kind = "switch_at"
state_a = 0
state_b = 4
t1 = 25

[[filters]]
variant = "abhmm"
alpha = 0.01
beta = 1.0

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 1.0

[[filters]]
variant = "abhmm"
alpha = 0.1
beta = 1.0

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 0.5

[[filters]]
variant = "abhmm"
alpha = 0.05
beta = 2.0
"#,
    },
    Preset {
        name: "fig-ne4",
        description: "truncated model on [-5, 5], β=α grid × σ grid, 1000-run error-probability curves",
        toml: r#"name = "fig-ne4"
kind = "monte_carlo"
seed = 1
runs = 1000
track_fixed_point = true

[model]
family = "truncated_gaussian"
means = [1.0, 2.0, 3.0]
sigma = 1.0
support = [-5.0, 5.0]

[truth]
family = "truncated_gaussian"
means = [0.0, 1.0, 2.0]
sigma = 1.0
support = [-5.0, 5.0]

[environment]
horizon = 200

[environment.schedule]
kind = "constant"
state = 0

[[filters]]
variant = "abhmm"
alpha = 0.01
beta = 0.01

[sweep]
alpha = [0.01, 0.05, 0.1]
sigma = [1.0, 2.0, 3.0]
beta_equals_alpha = true
"#,
    },
];

/// Grids for the `bounds` subcommand.
pub struct BoundsPreset {
    pub name: &'static str,
    pub description: &'static str,
    pub alpha: &'static [f64],
    pub beta: &'static [f64],
    pub d_min: &'static [f64],
    pub d_ratio: &'static [f64],
    pub states: &'static [usize],
}

pub const BOUNDS_PRESETS: &[BoundsPreset] = &[BoundsPreset {
    name: "fig-2",
    description: "steady belief bounds over α × βd̲ × d̄/d̲ for M=3",
    alpha: &[
        0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1, 0.11, 0.12, 0.13, 0.14, 0.15, 0.16, 0.17, 0.18,
        0.19, 0.2, 0.21, 0.22, 0.23, 0.24, 0.25, 0.26, 0.27, 0.28, 0.29, 0.3,
    ],
    beta: &[1.0],
    d_min: &[0.25, 0.5, 1.0, 2.0, 4.0],
    d_ratio: &[1.0, 2.0, 4.0],
    states: &[3],
}];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn find_bounds(name: &str) -> Option<&'static BoundsPreset> {
    BOUNDS_PRESETS.iter().find(|p| p.name == name)
}
