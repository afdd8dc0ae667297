//! Experiment configuration: presets, `key = value` files with `[section]`
//! headers and per-key overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mcrom_core::dataset::SampleStrategy;
use mcrom_core::nn::arch::ArchPreset;
use mcrom_core::nn::TrainConfig;

use crate::CliError;

/// Every recognized key as `(section, key, help)`. Each one is also a flag `--key`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("experiment", "preset", "burgers-convection, burgers-diffusion, parabolic-2d or custom"),
    ("experiment", "name", "run name; the artifact directory is <output root>/<name>"),
    ("experiment", "fast", "reduced budgets for quick runs (true/false)"),
    ("experiment", "models", "comma-separated subset of pod,dlrom,mcrom"),
    ("problem", "problem", "burgers or parabolic"),
    ("problem", "n_h", "Burgers grid points"),
    ("problem", "mesh_m", "parabolic mesh resolution (m x m core grid)"),
    ("problem", "t_final", "final time T"),
    ("problem", "n_t", "number of time steps"),
    ("sampling", "range", "parameter box, lo:hi per parameter, comma-separated"),
    ("sampling", "train_strategy", "uniform, equidistant or lhs"),
    ("sampling", "n_train", "training parameters (or total samples with test_strategy = split)"),
    ("sampling", "test_strategy", "midpoints, equidistant or split"),
    ("sampling", "n_test", "test parameters for equidistant test sets"),
    ("sampling", "split_ratio", "training fraction with test_strategy = split"),
    ("sampling", "sample_seed", "seed of the parameter sampler and split"),
    ("model", "arch", "conv2d-256, conv1d-256, conv2d-4096 or conv1d-adapted"),
    ("model", "latent", "reduced dimension n of the DL-ROM and MC-ROM"),
    ("model", "pod_sweep", "comma-separated POD dimensions"),
    ("model", "bands", "decreasing magnitude band edges; empty for a single class"),
    ("model", "transfer", "warm-start each MC-ROM subnet from the previous one"),
    ("model", "svm_c", "SVM box constraint C"),
    ("training", "epochs", "maximum epochs"),
    ("training", "batch_size", "mini-batch size"),
    ("training", "lr", "initial learning rate"),
    ("training", "milestones", "comma-separated epochs at which the rate is multiplied by decay"),
    ("training", "decay", "learning-rate factor at each milestone"),
    ("training", "patience", "early-stopping patience in epochs"),
    ("training", "alpha", "weight of the reconstruction term"),
    ("training", "beta", "weight of the latent-matching term"),
    ("training", "train_seed", "seed of weight initialization and shuffling"),
    ("bench", "timing_sweep", "comma-separated n values for the timing sweep"),
    ("bench", "timing_reps", "timed repetitions per configuration"),
    ("probe", "probe", "extra parameters to report, values joined by ':' and separated by ','"),
    ("probe", "probe_times", "times at which probes are reported"),
];

pub const BOOL_KEYS: &[&str] = &["fast", "transfer"];

pub fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(_, k, _)| *k == key).map(|(s, _, _)| *s)
}

/// Flat key/value map; later layers replace earlier ones.
pub type RawConfig = BTreeMap<String, String>;

/// Parses `key = value` lines grouped under `[section]` headers. `#` and `;` start comments.
pub fn parse_config(text: &str) -> Result<RawConfig, CliError> {
    let mut out = RawConfig::new();
    let mut section: Option<String> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let bad = |msg: String| CliError::Config(format!("line {}: {msg}", no + 1));
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| bad(format!("unterminated section `{line}`")))?.trim();
            if !KEYS.iter().any(|(s, _, _)| *s == name) {
                return Err(bad(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let sec = section.as_deref().ok_or_else(|| bad(format!("key `{k}` outside any section")))?;
        match section_of(k) {
            Some(s) if s == sec => {}
            Some(s) => return Err(bad(format!("key `{k}` belongs to [{s}], not [{sec}]"))),
            None => return Err(bad(format!("unknown key `{k}`"))),
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Writes a map back in file form, grouped by section in table order.
pub fn render_config(raw: &RawConfig) -> String {
    let mut out = String::new();
    let mut current = "";
    for (sec, key, _) in KEYS {
        if let Some(v) = raw.get(*key) {
            if *sec != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                current = sec;
            }
            let _ = writeln!(out, "{key} = {v}");
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    BurgersConvection,
    BurgersDiffusion,
    Parabolic2d,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::BurgersConvection, Preset::BurgersDiffusion, Preset::Parabolic2d];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BurgersConvection => "burgers-convection",
            Preset::BurgersDiffusion => "burgers-diffusion",
            Preset::Parabolic2d => "parabolic-2d",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        [Preset::BurgersConvection, Preset::BurgersDiffusion, Preset::Parabolic2d, Preset::Custom]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{s}`")))
    }

    /// Default keys of the preset; `fast` swaps in the reduced budgets.
    pub fn defaults(self, fast: bool) -> RawConfig {
        let burgers_common = [
            ("problem", "burgers"),
            ("n_h", "256"),
            ("t_final", "2"),
            ("n_t", "100"),
            ("train_strategy", "uniform"),
            ("n_train", "20"),
            ("sample_seed", "1"),
            ("arch", "conv1d-256"),
            ("pod_sweep", "2,3,4,5,6,8,10,15,20"),
            ("batch_size", "20"),
            ("lr", "1e-4"),
            ("patience", "500"),
            ("epochs", "20000"),
        ];
        let common = [
            ("fast", "false"),
            ("n_h", "256"),
            ("n_test", "100"),
            ("split_ratio", "0.8"),
            ("mesh_m", "35"),
            ("bands", ""),
            ("transfer", "true"),
            ("svm_c", "1"),
            ("milestones", ""),
            ("decay", "0.1"),
            ("alpha", "0.5"),
            ("beta", "0.5"),
            ("train_seed", "0"),
            ("timing_sweep", "2,5,10,15,20"),
            ("timing_reps", "200"),
            ("probe", ""),
            ("probe_times", ""),
        ];
        let mut m: RawConfig = common.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut set = |pairs: &[(&str, &str)]| {
            for (k, v) in pairs {
                m.insert(k.to_string(), v.to_string());
            }
        };
        match self {
            Preset::BurgersConvection | Preset::Custom => {
                set(&burgers_common);
                set(&[("range", "100:1000"), ("test_strategy", "midpoints"), ("models", "pod,dlrom"), ("latent", "5")]);
            }
            Preset::BurgersDiffusion => {
                set(&burgers_common);
                set(&[
                    ("range", "0.5:2"),
                    ("test_strategy", "equidistant"),
                    ("models", "pod,dlrom,mcrom"),
                    ("latent", "10"),
                    ("bands", "1e-2,1e-4,1e-6,1e-8,1e-10"),
                ]);
            }
            Preset::Parabolic2d => set(&[
                ("problem", "parabolic"),
                ("t_final", "3"),
                ("n_t", "60"),
                ("range", "1:10,0.1:10"),
                ("train_strategy", "lhs"),
                ("n_train", "300"),
                ("test_strategy", "split"),
                ("sample_seed", "1"),
                ("models", "pod,dlrom,mcrom"),
                ("arch", "conv2d-4096"),
                ("latent", "5"),
                ("pod_sweep", "2,5,10,15,20"),
                ("bands", "1e-1,1e-2,1e-3,1e-4,1e-5"),
                ("epochs", "40000"),
                ("batch_size", "5000"),
                ("lr", "1e-3"),
                ("milestones", "5000,10000"),
                ("patience", "500"),
                ("probe", "9.9560:6.8453"),
                ("probe_times", "0.2,1.25,2.2,2.7"),
                ("timing_reps", "20"),
            ]),
        }
        m.insert("preset".into(), self.name().into());
        m.insert("name".into(), self.name().into());
        if fast {
            m.insert("fast".into(), "true".into());
            match self {
                Preset::Parabolic2d => set_all(
                    &mut m,
                    &[
                        ("mesh_m", "10"),
                        ("n_train", "60"),
                        ("arch", "conv1d-adapted"),
                        ("epochs", "300"),
                        ("milestones", "150"),
                        ("batch_size", "32"),
                        ("patience", "100"),
                        ("timing_reps", "200"),
                    ],
                ),
                _ => set_all(&mut m, &[("epochs", "600"), ("patience", "50"), ("lr", "1e-3")]),
            }
        }
        m
    }
}

fn set_all(m: &mut RawConfig, pairs: &[(&str, &str)]) {
    for (k, v) in pairs {
        m.insert(k.to_string(), v.to_string());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelKind {
    Pod,
    DlRom,
    McRom,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pod => "pod",
            ModelKind::DlRom => "dlrom",
            ModelKind::McRom => "mcrom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Burgers,
    Parabolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestStrategy {
    Midpoints,
    Equidistant,
    Split,
}

/// Fully resolved experiment settings.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub name: String,
    pub fast: bool,
    pub models: Vec<ModelKind>,
    pub problem: ProblemKind,
    pub n_h: usize,
    pub mesh_m: usize,
    pub t_final: f64,
    pub n_t: usize,
    pub ranges: Vec<(f64, f64)>,
    pub train_strategy: SampleStrategy,
    pub n_train: usize,
    pub test_strategy: TestStrategy,
    pub n_test: usize,
    pub split_ratio: f64,
    pub sample_seed: u64,
    pub arch: ArchPreset,
    pub latent: usize,
    pub pod_sweep: Vec<usize>,
    pub bands: Vec<f64>,
    pub transfer: bool,
    pub svm_c: f64,
    pub train: TrainConfig,
    pub timing_sweep: Vec<usize>,
    pub timing_reps: usize,
    pub probe: Vec<Vec<f64>>,
    pub probe_times: Vec<f64>,
    /// The resolved key map, written as the run manifest.
    pub raw: RawConfig,
}

fn get<'a>(raw: &'a RawConfig, key: &str) -> Result<&'a str, CliError> {
    raw.get(key).map(String::as_str).ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
}

fn num<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<T, CliError> {
    let v = get(raw, key)?;
    v.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Vec<T>, CliError> {
    get(raw, key)?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{s}`"))))
        .collect()
}

fn boolean(raw: &RawConfig, key: &str) -> Result<bool, CliError> {
    match get(raw, key)? {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(CliError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn colon_tuples(raw: &RawConfig, key: &str) -> Result<Vec<Vec<f64>>, CliError> {
    get(raw, key)?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.split(':')
                .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{s}`"))))
                .collect()
        })
        .collect()
}

pub fn parse_arch(s: &str) -> Result<ArchPreset, CliError> {
    s.parse().map_err(CliError::Config)
}

impl ExperimentConfig {
    /// Resolves `user` keys on top of the defaults of the preset they name.
    pub fn resolve(user: &RawConfig) -> Result<Self, CliError> {
        for k in user.keys() {
            if section_of(k).is_none() {
                return Err(CliError::Config(format!("unknown key `{k}`")));
            }
        }
        let preset = Preset::parse(user.get("preset").map_or("burgers-diffusion", String::as_str))?;
        let fast = match user.get("fast") {
            Some(_) => boolean(user, "fast")?,
            None => false,
        };
        let mut raw = preset.defaults(fast);
        raw.extend(user.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_raw(preset, raw)
    }

    fn from_raw(preset: Preset, raw: RawConfig) -> Result<Self, CliError> {
        let models = list::<String>(&raw, "models")?
            .iter()
            .map(|m| match m.as_str() {
                "pod" => Ok(ModelKind::Pod),
                "dlrom" => Ok(ModelKind::DlRom),
                "mcrom" => Ok(ModelKind::McRom),
                other => Err(CliError::Config(format!("unknown model `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let problem = match get(&raw, "problem")? {
            "burgers" => ProblemKind::Burgers,
            "parabolic" => ProblemKind::Parabolic,
            v => return Err(CliError::Config(format!("unknown problem `{v}`"))),
        };
        let ranges: Vec<(f64, f64)> = colon_tuples(&raw, "range")?
            .into_iter()
            .map(|r| match r.as_slice() {
                [lo, hi] if lo < hi => Ok((*lo, *hi)),
                _ => Err(CliError::Config(format!("`range`: expected lo:hi with lo < hi, got {r:?}"))),
            })
            .collect::<Result<_, _>>()?;
        let want = if problem == ProblemKind::Burgers { 1 } else { 2 };
        if ranges.len() != want {
            return Err(CliError::Config(format!("`range` needs {want} interval(s), got {}", ranges.len())));
        }
        let train_strategy = match get(&raw, "train_strategy")? {
            "uniform" => SampleStrategy::UniformRandom,
            "equidistant" => SampleStrategy::Equidistant,
            "lhs" => SampleStrategy::LatinHypercube,
            v => return Err(CliError::Config(format!("unknown train_strategy `{v}`"))),
        };
        let test_strategy = match get(&raw, "test_strategy")? {
            "midpoints" => TestStrategy::Midpoints,
            "equidistant" => TestStrategy::Equidistant,
            "split" => TestStrategy::Split,
            v => return Err(CliError::Config(format!("unknown test_strategy `{v}`"))),
        };
        let arch = parse_arch(get(&raw, "arch")?)?;
        let train = TrainConfig {
            epochs: num(&raw, "epochs")?,
            batch_size: num(&raw, "batch_size")?,
            lr: num(&raw, "lr")?,
            milestones: list(&raw, "milestones")?,
            decay: num(&raw, "decay")?,
            patience: num(&raw, "patience")?,
            alpha: num(&raw, "alpha")?,
            beta: num(&raw, "beta")?,
            seed: num(&raw, "train_seed")?,
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = Self {
            preset,
            name: get(&raw, "name")?.to_string(),
            fast: boolean(&raw, "fast")?,
            models,
            problem,
            n_h: num(&raw, "n_h")?,
            mesh_m: num(&raw, "mesh_m")?,
            t_final: num(&raw, "t_final")?,
            n_t: num(&raw, "n_t")?,
            ranges,
            train_strategy,
            n_train: num(&raw, "n_train")?,
            test_strategy,
            n_test: num(&raw, "n_test")?,
            split_ratio: num(&raw, "split_ratio")?,
            sample_seed: num(&raw, "sample_seed")?,
            arch,
            latent: num(&raw, "latent")?,
            pod_sweep: list(&raw, "pod_sweep")?,
            bands: list(&raw, "bands")?,
            transfer: boolean(&raw, "transfer")?,
            svm_c: num(&raw, "svm_c")?,
            train,
            timing_sweep: list(&raw, "timing_sweep")?,
            timing_reps: num(&raw, "timing_reps")?,
            probe: colon_tuples(&raw, "probe")?,
            probe_times: list(&raw, "probe_times")?,
            raw,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == ".." {
            return bad(format!("invalid run name `{}`", self.name));
        }
        if self.models.is_empty() {
            return bad("no models selected".into());
        }
        if self.n_t == 0 || !(self.t_final > 0.0) {
            return bad("need n_t > 0 and t_final > 0".into());
        }
        if self.latent == 0 || self.pod_sweep.contains(&0) || self.timing_sweep.contains(&0) {
            return bad("reduced dimensions must be positive".into());
        }
        if !(self.svm_c > 0.0) {
            return bad("svm_c must be positive".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie in (0, 1)".into());
        }
        let np = self.ranges.len();
        if let Some(p) = self.probe.iter().find(|p| p.len() != np) {
            return bad(format!("probe {p:?} needs {np} values"));
        }
        Ok(())
    }

    pub fn has(&self, m: ModelKind) -> bool {
        self.models.contains(&m)
    }

    pub fn manifest_text(&self) -> String {
        format!("# mcrom {} run manifest\n{}", env!("CARGO_PKG_VERSION"), render_config(&self.raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections_and_comments() {
        let raw = parse_config("# c\n[experiment]\npreset = parabolic-2d\n\n[training]\nepochs = 7 \n; x\n").unwrap();
        assert_eq!(raw["preset"], "parabolic-2d");
        assert_eq!(raw["epochs"], "7");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = parse_config("[training]\nepochz = 3\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(parse_config("epochs = 3\n").is_err());
        assert!(parse_config("[model]\nepochs = 3\n").is_err());
        assert!(parse_config("[nope]\n").is_err());
        assert!(parse_config("[training]\nepochs\n").is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let mut user = RawConfig::new();
        user.insert("preset".into(), "parabolic-2d".into());
        user.insert("fast".into(), "true".into());
        let cfg = ExperimentConfig::resolve(&user).unwrap();
        let again = ExperimentConfig::resolve(&parse_config(&cfg.manifest_text()).unwrap()).unwrap();
        assert_eq!(cfg.raw, again.raw);
    }

    #[test]
    fn presets_match_the_stated_settings() {
        let conv =
            ExperimentConfig::resolve(&[("preset".to_string(), "burgers-convection".to_string())].into()).unwrap();
        assert_eq!((conv.ranges[0], conv.n_train, conv.test_strategy), ((100.0, 1000.0), 20, TestStrategy::Midpoints));
        assert_eq!(
            (conv.n_h, conv.n_t, conv.train.lr, conv.train.batch_size, conv.train.patience),
            (256, 100, 1e-4, 20, 500)
        );
        let diff = ExperimentConfig::resolve(&RawConfig::new()).unwrap();
        assert_eq!((diff.ranges[0], diff.n_test, diff.bands.len()), ((0.5, 2.0), 100, 5));
        let para = ExperimentConfig::resolve(&[("preset".to_string(), "parabolic-2d".to_string())].into()).unwrap();
        assert_eq!(para.ranges, vec![(1.0, 10.0), (0.1, 10.0)]);
        assert_eq!((para.n_train, para.split_ratio, para.t_final, para.n_t), (300, 0.8, 3.0, 60));
        assert_eq!(
            (para.train.lr, para.train.milestones.clone(), para.train.batch_size, para.latent),
            (1e-3, vec![5000, 10000], 5000, 5)
        );
    }

    #[test]
    fn overrides_beat_presets() {
        let user: RawConfig = [("fast", "true"), ("epochs", "3"), ("models", "pod")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let cfg = ExperimentConfig::resolve(&user).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.patience, 50);
        assert_eq!(cfg.models, vec![ModelKind::Pod]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (k, v) in [("epochs", "x"), ("models", "svm"), ("range", "2:1"), ("alpha", "2"), ("preset", "heat")] {
            let user: RawConfig = [(k.to_string(), v.to_string())].into();
            assert!(matches!(ExperimentConfig::resolve(&user), Err(CliError::Config(_))), "{k} = {v}");
        }
    }
}
