//! Effective run configuration: defaults → scale preset → config file →
//! command-line flags, with a manifest echo that can be replayed as a
//! config file to reproduce a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use impute_core::dataset::Mechanism;
use impute_core::deepnet::{FineTuneConfig, Optimizer};
use impute_core::firefly::FireflyConfig;
use impute_core::rbm::CdConfig;

/// Size preset selecting between the full-size defaults and the small sizes
/// used by the desk pipeline; both run through the same code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Full,
    Desk,
}

impl Scale {
    fn as_str(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }
}

/// Every tunable the pipeline reads, flattened. Artifact paths under
/// `files.*` are resolved relative to `out_dir` unless absolute; the four
/// ingest input paths are used as given.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scale: Scale,
    pub out_dir: PathBuf,

    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first N training/test samples after ingest; None keeps all.
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,

    pub layers: Vec<usize>,
    pub batches: usize,
    pub batch_seed: u64,

    pub cd: CdConfig,
    pub finetune: FineTuneConfig,

    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub mlp_seed: u64,

    pub mechanism: Mechanism,
    pub rate: f64,
    pub corrupt_seed: u64,

    pub firefly: FireflyConfig,
    pub jobs: usize,
    /// Report label override; by default the network kind names the method.
    pub method: Option<String>,

    /// Also produce the mean-imputation baseline report during `evaluate`.
    pub baseline: bool,

    // Artifact paths (relative to out_dir unless absolute).
    pub data_file: Option<PathBuf>,
    pub labels_file: Option<PathBuf>,
    pub model_file: Option<PathBuf>,
    pub masked_dir: Option<PathBuf>,
    pub report_dirs: Option<Vec<PathBuf>>,
    pub report_out: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            scale: Scale::Full,
            out_dir: PathBuf::from("out"),
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_count: None,
            test_count: None,
            layers: vec![784, 1000, 500, 250, 30],
            batches: 600,
            batch_seed: 99,
            cd: CdConfig { epochs: 10, seed: 7, ..CdConfig::default() },
            finetune: FineTuneConfig { seed: 11, ..FineTuneConfig::default() },
            mlp_hidden: 400,
            mlp_epochs: 1000,
            mlp_seed: 13,
            mechanism: Mechanism::Mcar,
            rate: 0.1,
            corrupt_seed: 5,
            firefly: FireflyConfig { seed: 424242, ..FireflyConfig::default() },
            jobs: 1,
            method: None,
            baseline: false,
            data_file: None,
            labels_file: None,
            model_file: None,
            masked_dir: None,
            report_dirs: None,
            report_out: None,
        }
    }
}

impl Settings {
    /// Shrink to the small-pipeline sizes. Everything set here can still be
    /// overridden by the config file or flags.
    pub fn apply_scale(&mut self, scale: Scale) {
        self.scale = scale;
        if scale == Scale::Desk {
            self.layers = vec![784, 200, 30];
            self.batches = 40;
            self.train_count = Some(2000);
            self.test_count = Some(500);
            self.cd.epochs = 10;
            self.finetune.epochs = 200;
            self.finetune.optimizer = Optimizer::ConjugateGradient;
            self.mlp_hidden = 200;
            self.mlp_epochs = 200;
            self.firefly.population_size = Some(15);
            self.firefly.iterations = 100;
            self.firefly.gamma = 0.01;
        }
    }

    /// Apply a flat `key=value` config file. The `scale` key is applied
    /// first regardless of position so later keys override the preset.
    pub fn apply_config_text(&mut self, text: &str, origin: &Path) -> Result<(), String> {
        let mut pairs = Vec::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected `key=value`, got `{line}`",
                    origin.display(),
                    number + 1
                ));
            };
            pairs.push((number + 1, key.trim().to_string(), value.trim().to_string()));
        }
        for (number, key, value) in &pairs {
            if key == "scale" {
                self.apply_key(key, value)
                    .map_err(|e| format!("{}:{number}: {e}", origin.display()))?;
            }
        }
        for (number, key, value) in &pairs {
            if key != "scale" {
                self.apply_key(key, value)
                    .map_err(|e| format!("{}:{number}: {e}", origin.display()))?;
            }
        }
        Ok(())
    }

    /// Set one configuration key from its text form.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("bad value `{value}` for `{key}`: {e}"))
        }
        fn parse_opt<T: std::str::FromStr>(
            key: &str,
            value: &str,
            none_word: &str,
        ) -> Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            if value.eq_ignore_ascii_case(none_word) {
                Ok(None)
            } else {
                parse(key, value).map(Some)
            }
        }

        match key {
            "scale" => {
                let scale = match value.to_ascii_lowercase().as_str() {
                    "full" => Scale::Full,
                    "desk" => Scale::Desk,
                    other => return Err(format!("bad value `{other}` for `scale`")),
                };
                self.apply_scale(scale);
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "command" => {} // informational echo in manifests
            "data.train_images" => self.train_images = Some(PathBuf::from(value)),
            "data.train_labels" => self.train_labels = Some(PathBuf::from(value)),
            "data.test_images" => self.test_images = Some(PathBuf::from(value)),
            "data.test_labels" => self.test_labels = Some(PathBuf::from(value)),
            "data.train_count" => self.train_count = parse_opt(key, value, "all")?,
            "data.test_count" => self.test_count = parse_opt(key, value, "all")?,
            "layers" => {
                let sizes: Result<Vec<usize>, _> =
                    value.split(',').map(|p| parse(key, p.trim())).collect();
                let sizes = sizes?;
                if sizes.len() < 2 {
                    return Err(format!("`{key}` needs at least two sizes, got `{value}`"));
                }
                self.layers = sizes;
            }
            "batches" => self.batches = parse(key, value)?,
            "batch_seed" => self.batch_seed = parse(key, value)?,
            "cd.epochs" => self.cd.epochs = parse(key, value)?,
            "cd.learning_rate" => self.cd.learning_rate = parse(key, value)?,
            "cd.momentum_initial" => self.cd.momentum_initial = parse(key, value)?,
            "cd.momentum_final" => self.cd.momentum_final = parse(key, value)?,
            "cd.momentum_switch_epoch" => self.cd.momentum_switch_epoch = parse(key, value)?,
            "cd.weight_cost" => self.cd.weight_cost = parse(key, value)?,
            "cd.k" => self.cd.k = parse(key, value)?,
            "cd.seed" => self.cd.seed = parse(key, value)?,
            "finetune.epochs" => self.finetune.epochs = parse(key, value)?,
            "finetune.learning_rate" => self.finetune.learning_rate = parse(key, value)?,
            "finetune.momentum" => self.finetune.momentum = parse(key, value)?,
            "finetune.optimizer" => self.finetune.optimizer = parse_optimizer(value)?,
            "finetune.seed" => self.finetune.seed = parse(key, value)?,
            "mlp.hidden" => self.mlp_hidden = parse(key, value)?,
            "mlp.epochs" => self.mlp_epochs = parse(key, value)?,
            "mlp.seed" => self.mlp_seed = parse(key, value)?,
            "corrupt.mechanism" => self.mechanism = parse(key, value)?,
            "corrupt.rate" => self.rate = parse(key, value)?,
            "corrupt.seed" => self.corrupt_seed = parse(key, value)?,
            "firefly.population" => {
                self.firefly.population_size = parse_opt(key, value, "auto")?
            }
            "firefly.iterations" => self.firefly.iterations = parse(key, value)?,
            "firefly.alpha" => self.firefly.alpha = parse(key, value)?,
            "firefly.beta0" => self.firefly.beta0 = parse(key, value)?,
            "firefly.gamma" => self.firefly.gamma = parse(key, value)?,
            "firefly.max_evaluations" => {
                self.firefly.max_evaluations = parse_opt(key, value, "none")?
            }
            "firefly.seed" => self.firefly.seed = parse(key, value)?,
            "tolerance" => self.firefly.tolerance = parse_opt(key, value, "none")?,
            "jobs" => self.jobs = parse(key, value)?,
            "method" => {
                self.method = if value.is_empty() { None } else { Some(value.to_string()) }
            }
            "evaluate.baseline" => {
                self.baseline = match value.to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    other => {
                        return Err(format!("bad value `{other}` for `evaluate.baseline`"))
                    }
                }
            }
            "files.data" => self.data_file = Some(PathBuf::from(value)),
            "files.labels" => self.labels_file = Some(PathBuf::from(value)),
            "files.model" => self.model_file = Some(PathBuf::from(value)),
            "files.masked" => self.masked_dir = Some(PathBuf::from(value)),
            "files.reports" => {
                self.report_dirs =
                    Some(value.split(',').map(|p| PathBuf::from(p.trim())).collect())
            }
            "files.report_out" => self.report_out = Some(PathBuf::from(value)),
            other => return Err(format!("unknown configuration key `{other}`")),
        }
        Ok(())
    }

    /// Full effective configuration as replayable `key=value` lines, plus a
    /// leading `command` echo. Feeding this file back via `--config`
    /// reproduces the run.
    pub fn manifest(&self, command: &str) -> String {
        let mut keys: BTreeMap<String, String> = BTreeMap::new();
        let path = |p: &PathBuf| p.display().to_string();
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut put = |k: &str, v: String| {
            keys.insert(k.to_string(), v);
        };

        put("scale", self.scale.as_str().to_string());
        put("out_dir", path(&self.out_dir));
        if let Some(v) = opt_path(&self.train_images) {
            put("data.train_images", v);
        }
        if let Some(v) = opt_path(&self.train_labels) {
            put("data.train_labels", v);
        }
        if let Some(v) = opt_path(&self.test_images) {
            put("data.test_images", v);
        }
        if let Some(v) = opt_path(&self.test_labels) {
            put("data.test_labels", v);
        }
        put("data.train_count", or_word(self.train_count.map(|v| v.to_string()), "all"));
        put("data.test_count", or_word(self.test_count.map(|v| v.to_string()), "all"));
        let layers: Vec<String> = self.layers.iter().map(|s| s.to_string()).collect();
        put("layers", layers.join(","));
        put("batches", self.batches.to_string());
        put("batch_seed", self.batch_seed.to_string());
        put("cd.epochs", self.cd.epochs.to_string());
        put("cd.learning_rate", self.cd.learning_rate.to_string());
        put("cd.momentum_initial", self.cd.momentum_initial.to_string());
        put("cd.momentum_final", self.cd.momentum_final.to_string());
        put("cd.momentum_switch_epoch", self.cd.momentum_switch_epoch.to_string());
        put("cd.weight_cost", self.cd.weight_cost.to_string());
        put("cd.k", self.cd.k.to_string());
        put("cd.seed", self.cd.seed.to_string());
        put("finetune.epochs", self.finetune.epochs.to_string());
        put("finetune.learning_rate", self.finetune.learning_rate.to_string());
        put("finetune.momentum", self.finetune.momentum.to_string());
        put(
            "finetune.optimizer",
            match self.finetune.optimizer {
                Optimizer::SgdMomentum => "sgd-momentum",
                Optimizer::ConjugateGradient => "conjugate-gradient",
            }
            .to_string(),
        );
        put("finetune.seed", self.finetune.seed.to_string());
        put("mlp.hidden", self.mlp_hidden.to_string());
        put("mlp.epochs", self.mlp_epochs.to_string());
        put("mlp.seed", self.mlp_seed.to_string());
        put("corrupt.mechanism", self.mechanism.to_string());
        put("corrupt.rate", self.rate.to_string());
        put("corrupt.seed", self.corrupt_seed.to_string());
        put(
            "firefly.population",
            or_word(self.firefly.population_size.map(|v| v.to_string()), "auto"),
        );
        put("firefly.iterations", self.firefly.iterations.to_string());
        put("firefly.alpha", self.firefly.alpha.to_string());
        put("firefly.beta0", self.firefly.beta0.to_string());
        put("firefly.gamma", self.firefly.gamma.to_string());
        put(
            "firefly.max_evaluations",
            or_word(self.firefly.max_evaluations.map(|v| v.to_string()), "none"),
        );
        put("firefly.seed", self.firefly.seed.to_string());
        put("tolerance", or_word(self.firefly.tolerance.map(|v| v.to_string()), "none"));
        put("jobs", self.jobs.to_string());
        if let Some(m) = &self.method {
            put("method", m.clone());
        }
        put("evaluate.baseline", self.baseline.to_string());
        if let Some(v) = opt_path(&self.data_file) {
            put("files.data", v);
        }
        if let Some(v) = opt_path(&self.labels_file) {
            put("files.labels", v);
        }
        if let Some(v) = opt_path(&self.model_file) {
            put("files.model", v);
        }
        if let Some(v) = opt_path(&self.masked_dir) {
            put("files.masked", v);
        }
        if let Some(dirs) = &self.report_dirs {
            let joined: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
            keys.insert("files.reports".to_string(), joined.join(","));
        }
        if let Some(v) = opt_path(&self.report_out) {
            keys.insert("files.report_out".to_string(), v);
        }

        let mut out = String::new();
        let _ = writeln!(out, "command={command}");
        for (k, v) in keys {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Resolve an artifact path against the output directory.
    pub fn in_out_dir(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }
}

fn or_word(v: Option<String>, word: &str) -> String {
    v.unwrap_or_else(|| word.to_string())
}

fn parse_optimizer(value: &str) -> Result<Optimizer, String> {
    match value.to_ascii_lowercase().as_str() {
        "sgd-momentum" | "sgd" => Ok(Optimizer::SgdMomentum),
        "conjugate-gradient" | "cg" => Ok(Optimizer::ConjugateGradient),
        other => Err(format!(
            "bad value `{other}` for `finetune.optimizer` (expected sgd-momentum or conjugate-gradient)"
        )),
    }
}
