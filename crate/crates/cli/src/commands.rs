use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use deltascope::analysis::{analyze_updates, to_csv, to_json, AnalysisReport};
use deltascope::io::{
    delta_map, diff_checkpoints, load_adapters, pair_adapters, sidecar_path, AdapterConfig,
    AdapterNaming, AdapterPair, DeltaSource, NamedTensorMap, Precision,
};
use deltascope::merge::{merge_checkpoint_cached, MergeConfig, MergeMode, SvdCache, LAMBDA_SWEEP};
use deltascope::penalty::{BaseApprox, PenaltyConfig, PenaltyVariant};
use deltascope::scoring::{pass_at_1, safety_score, EvalLog, SafetyPolarity};
use deltascope::toy::{run_comparison, run_scenario, ToyMode, ToyScenario};
use deltascope::{Error, Result};

use crate::args::*;
use crate::output::Outputs;

const DEFAULT_RANK: usize = 4;
const DEFAULT_ALPHA: f64 = 16.0;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn load_adapter_deltas(path: &Path, flags: &AdapterFlags) -> Result<BTreeMap<String, DeltaSource>> {
    if let Some(a) = flags.alpha {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid(format!("--alpha must be positive, got {a}")));
        }
    }
    if flags.rank == Some(0) {
        return Err(invalid("--rank must be at least 1"));
    }
    let naming = AdapterNaming::Peft;
    let set = if sidecar_path(path).exists() {
        let mut set = load_adapters(path, &naming)?;
        if let Some(r) = flags.rank {
            if r != set.config.r {
                return Err(invalid(format!("--rank {r} disagrees with sidecar r = {}", set.config.r)));
            }
        }
        if let Some(alpha) = flags.alpha {
            log::info!("overriding sidecar alpha {} with {alpha}", set.config.alpha);
            set.pairs = set
                .pairs
                .iter()
                .map(|p| AdapterPair::new(p.target(), p.b().clone(), p.a().clone(), alpha))
                .collect::<Result<_>>()?;
        }
        set
    } else {
        let config = AdapterConfig {
            alpha: flags.alpha.unwrap_or(DEFAULT_ALPHA),
            r: flags.rank.unwrap_or(DEFAULT_RANK),
            target_modules: Vec::new(),
        };
        log::info!("no adapter sidecar; using r = {}, alpha = {}", config.r, config.alpha);
        pair_adapters(&NamedTensorMap::load(path)?, config, &naming)?
    };
    for name in &set.unpaired {
        log::warn!("{name} is not a lora_A / lora_B tensor; ignored");
    }
    log::info!("loaded {} adapter pairs from {}", set.pairs.len(), path.display());
    Ok(delta_map(set.pairs.into_iter().map(DeltaSource::from)))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    if args.top_t == 0 {
        return Err(invalid("--top-t must be at least 1"));
    }
    let base = NamedTensorMap::load(&args.base)?;
    let deltas = match (&args.tuned, &args.adapter) {
        (Some(tuned), None) => {
            let diff = diff_checkpoints(&base, &NamedTensorMap::load(tuned)?)?;
            for p in &diff.only_in_base {
                log::warn!("{p} missing from tuned checkpoint");
            }
            for p in &diff.only_in_tuned {
                log::warn!("{p} missing from base checkpoint");
            }
            diff.deltas
        }
        (None, Some(adapter)) => load_adapter_deltas(adapter, &args.adapter_flags)?,
        _ => return Err(invalid("exactly one of --tuned and --adapter is required")),
    };
    let layers = analyze_updates(&base, &deltas, args.top_t)?;
    let report = AnalysisReport::new(layers, args.top_t);

    let mut outputs = Outputs::default();
    if let Some(p) = &args.json {
        outputs.stage(p, &to_json(&report))?;
    }
    if let Some(p) = &args.csv {
        outputs.stage(p, &to_csv(&report.layers))?;
    }
    if args.json.is_none() && args.csv.is_none() {
        print_stdout(&to_json(&report))
    } else {
        for p in outputs.commit()? {
            log::info!("wrote {}", p.display());
        }
        Ok(())
    }
}

fn print_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Error::Io { path: PathBuf::from("<stdout>"), source: e })
}

fn precision(p: PrecisionArg) -> Precision {
    match p {
        PrecisionArg::F64 => Precision::F64,
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F16 => Precision::F16,
        PrecisionArg::Bf16 => Precision::BF16,
    }
}

/// `dir/merged.safetensors` → `dir/merged_lambda1.15.safetensors`.
pub fn sweep_path(out: &Path, lambda: f64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_lambda{lambda}.{}", ext.to_string_lossy()),
        None => format!("{stem}_lambda{lambda}"),
    };
    out.with_file_name(name)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub fn merge(args: &MergeArgs) -> Result<()> {
    let mode = match args.mode {
        ModeArg::Vanilla => MergeMode::Vanilla,
        ModeArg::OrthoCol => MergeMode::OrthoCol,
        ModeArg::OrthoBoth => MergeMode::OrthoBoth,
    };
    if args.lambda_sweep && mode != MergeMode::OrthoBoth {
        return Err(invalid("--lambda-sweep requires --mode ortho-both"));
    }
    let lambdas: Vec<f64> = if args.lambda_sweep { LAMBDA_SWEEP.to_vec() } else { vec![args.lambda] };
    let configs: Vec<MergeConfig> = lambdas
        .iter()
        .map(|&lambda| MergeConfig { mode, k: args.k, lambda, passthrough_missing: !args.no_passthrough })
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }

    let base = NamedTensorMap::load(&args.base)?;
    let deltas = load_adapter_deltas(&args.adapter, &args.adapter_flags)?;
    let mut cache = SvdCache::new();
    let mut outputs = Outputs::default();
    for cfg in &configs {
        let outcome = merge_checkpoint_cached(&base, &deltas, cfg, &mut cache)?;
        let (out, manifest) = if args.lambda_sweep {
            let out = sweep_path(&args.out, cfg.lambda);
            let manifest = manifest_path(&out);
            (out, manifest)
        } else {
            (args.out.clone(), args.manifest.clone().unwrap_or_else(|| manifest_path(&args.out)))
        };
        outputs.stage(&out, &outcome.merged.to_bytes(precision(args.precision))?)?;
        outputs.stage(&manifest, &outcome.manifest.to_json())?;
    }
    for p in outputs.commit()? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let map = NamedTensorMap::load(&args.path)?;
    let mut text = String::new();
    if args.json {
        let entries: Vec<_> = map
            .iter()
            .map(|(name, e)| serde_json::json!({"name": name, "shape": e.shape(), "dtype": e.dtype().tag()}))
            .collect();
        text = serde_json::to_string_pretty(&entries)?;
        text.push('\n');
    } else {
        for (name, e) in map.iter() {
            let shape: Vec<String> = e.shape().iter().map(|d| d.to_string()).collect();
            text.push_str(&format!("{name}\t[{}]\t{}\n", shape.join(", "), e.dtype().tag()));
        }
    }
    print_stdout(text.as_bytes())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let log = EvalLog::load(&args.log)?;
    let value = match args.metric {
        MetricArg::PassAt1 => {
            if let Some(n) = args.n {
                if let Some((i, r)) = log.records().iter().enumerate().find(|(_, r)| r.outcomes.len() != n) {
                    return Err(Error::Log {
                        line: i + 1,
                        message: format!("record {:?} has {} outcomes, expected {n}", r.id, r.outcomes.len()),
                    });
                }
            }
            pass_at_1(&log)?
        }
        MetricArg::Safety => {
            let polarity = match args.polarity {
                PolarityArg::SafeFraction => SafetyPolarity::SafeFraction,
                PolarityArg::HarmfulFraction => SafetyPolarity::HarmfulFraction,
            };
            safety_score(&log, polarity)?
        }
    };
    print_stdout(format!("{value:.6}\n").as_bytes())
}

fn toy_scenario(args: &ToyArgs) -> Result<ToyScenario> {
    let mut s = match &args.scenario {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            ToyScenario::from_json(&bytes)?
        }
        None => ToyScenario::default(),
    };
    let run = &mut s.run;
    if let Some(v) = args.seed {
        run.seed = v;
    }
    if let Some(v) = args.epochs {
        run.epochs = v;
    }
    if let Some(m) = args.mode {
        run.mode = match m {
            ToyModeArg::Full => ToyMode::Full,
            ToyModeArg::Lora => ToyMode::Lora,
        };
    }
    if let Some(v) = args.rank {
        run.rank = v;
    }
    if let Some(v) = args.alpha {
        run.alpha = v;
    }
    if let Some(v) = args.learning_rate {
        run.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        run.weight_decay = v;
    }
    if let Some(p) = args.penalty {
        run.penalty = match p {
            PenaltyArg::None => None,
            PenaltyArg::Col | PenaltyArg::Both => Some(PenaltyConfig {
                variant: if matches!(p, PenaltyArg::Col) { PenaltyVariant::Col } else { PenaltyVariant::Both },
                base_approx: BaseApprox::Exact,
                ..run.penalty.unwrap_or_default()
            }),
        };
    }
    if let Some(beta) = args.beta {
        match &mut run.penalty {
            Some(p) => p.beta = beta,
            None => return Err(invalid("--beta needs a penalty (--penalty col|both or in the scenario)")),
        }
    }
    if let Some(t) = args.top_t {
        s.top_t = t;
    }
    s.validate()?;
    Ok(s)
}

pub fn toytrain(args: &ToyArgs) -> Result<()> {
    let scenario = toy_scenario(args)?;
    let bytes = if args.compare {
        run_comparison(&scenario)?.to_json()
    } else {
        run_scenario(&scenario)?.to_json()
    };
    let mut outputs = Outputs::default();
    outputs.stage(&args.out, &bytes)?;
    outputs.commit()?;
    Ok(())
}
