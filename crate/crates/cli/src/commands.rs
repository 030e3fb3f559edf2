use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use aidetect_core::experiment::{fit, model_spec, with_jobs, Prepared};
use aidetect_core::landscape::generate;
use aidetect_core::{
    derive_seed, emit_report, encode_corpus, generate_corpus, grid_search, jsonl, kfold, load_pack, run_protocol,
    save_pack, split_80_20, trim_once, AgentConfig, Condition, CoreError, EncodingConfig, HeightMap, HpGrid,
    Hyperparams, LandscapeParams, ProtocolReport, Provenance, SplitSpec, Subset, TrajectoryLog,
};
use aidetect_nn::suite::run_suite;
use aidetect_nn::{checkpoint, Architecture, Head, Model, ModelSpec};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use crate::args::*;
use crate::{EXIT_OK, EXIT_VALIDATION};

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::GenLandscapes(a) => gen_landscapes(cli, a, out),
        Command::Simulate(a) => simulate(cli, a, out),
        Command::Encode(a) => encode(cli, a, out),
        Command::Trim(a) => trim(cli, a, out),
        Command::Split(a) => split(cli, a, out),
        Command::Train(a) => train(cli, a, out),
        Command::Protocol(a) => protocol(cli, a, out),
        Command::Tune(a) => tune(cli, a, out),
        Command::Report(a) => report(cli, a, out),
        Command::Gradcheck(a) => gradcheck(cli, a, out),
        Command::AuditParams(a) => audit_params(cli, a, out),
    }
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Append the resolved configuration to `run.jsonl` in `dir`. This is the
/// only artifact that carries a timestamp.
fn log_run(cli: &Cli, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let line = json!({ "timestamp": ts, "command": cli.command.name(), "config": cli });
    let mut f = fs::OpenOptions::new().create(true).append(true).open(dir.join("run.jsonl"))?;
    writeln!(f, "{line}")?;
    Ok(())
}

fn create_parent(file: &Path) -> Result<()> {
    fs::create_dir_all(parent_dir(file))?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn landscape_params(a: &LandscapeArgs) -> Result<LandscapeParams> {
    let p = LandscapeParams {
        smoothing_passes: a.smoothing_passes,
        min_peak_distance: a.min_peak_distance,
        min_prominence: a.min_prominence,
        max_attempts: a.max_attempts,
        ..LandscapeParams::default()
    };
    p.validate()?;
    Ok(p)
}

fn encoding_config(cli: &Cli) -> EncodingConfig {
    EncodingConfig { wrap_distance: cli.wrap_distance.on(), ..EncodingConfig::default() }
}

fn parse_arch(s: &str) -> Result<Architecture> {
    s.parse::<Architecture>().map_err(|e| anyhow!(e))
}

fn hyperparams(arch: Architecture, a: &HpArgs) -> Result<Hyperparams> {
    let mut hp = Hyperparams::tuned(arch);
    if let Some(v) = a.lr {
        hp.lr = v;
    }
    if let Some(v) = a.weight_decay {
        hp.weight_decay = v;
    }
    if let Some(v) = a.scheduler {
        hp.scheduler = v.on();
    }
    if let Some(v) = a.dropout {
        hp.dropout = v;
    }
    if let Some(v) = a.epochs {
        hp.epochs = v;
    }
    hp.batch_size = a.batch_size;
    hp.validate()?;
    Ok(hp)
}

fn provenance_path(logs: &Path) -> PathBuf {
    let mut s = logs.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

fn read_provenance(logs: &Path) -> Result<Provenance> {
    let p = provenance_path(logs);
    if !p.exists() {
        return Ok(Provenance::default());
    }
    Ok(serde_json::from_slice(&fs::read(&p)?).with_context(|| format!("parsing {}", p.display()))?)
}

fn read_pack(path: &Path) -> Result<aidetect_core::Corpus> {
    load_pack(path).with_context(|| format!("reading pack {}", path.display()))
}

fn gen_landscapes(cli: &Cli, a: &GenLandscapes, out: &mut dyn Write) -> Result<i32> {
    let params = landscape_params(&a.landscape)?;
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    let maps: Vec<HeightMap> = (0..a.count)
        .map(|i| generate(derive_seed(cli.seed, "landscape", i as u64), a.peaks, &params))
        .collect::<aidetect_core::Result<_>>()?;
    create_parent(&a.out)?;
    jsonl::write(&a.out, &maps)?;
    log_run(cli, &parent_dir(&a.out))?;
    writeln!(out, "wrote {} maps with {} peak(s) to {}", maps.len(), a.peaks, a.out.display())?;
    Ok(EXIT_OK)
}

fn simulate(cli: &Cli, a: &Simulate, out: &mut dyn Write) -> Result<i32> {
    let params = landscape_params(&a.landscape)?;
    let cfg = AgentConfig {
        local_prob: a.local_prob,
        step_radius: a.step_radius,
        patience: a.patience,
        budget: a.budget,
        initial_temperature: a.initial_temperature,
        cooling: a.cooling,
        proposal_radius: a.proposal_radius,
        assist_every: a.assist_every,
        ..AgentConfig::default()
    };
    cfg.validate()?;
    let sim = with_jobs(cli.jobs, || generate_corpus(a.participants, &cfg, &params, cli.seed))??;
    let maps_out = a.maps_out.clone().unwrap_or_else(|| parent_dir(&a.out).join("maps.jsonl"));
    create_parent(&a.out)?;
    create_parent(&maps_out)?;
    jsonl::write(&a.out, &sim.logs)?;
    jsonl::write(&maps_out, &sim.maps)?;
    log_run(cli, &parent_dir(&a.out))?;
    let aided = sim.logs.iter().filter(|l| l.condition == Condition::Aided).count();
    writeln!(
        out,
        "wrote {} trajectories ({} aided) to {} and {} maps to {}",
        sim.logs.len(),
        aided,
        a.out.display(),
        sim.maps.len(),
        maps_out.display()
    )?;
    Ok(EXIT_OK)
}

fn trim(cli: &Cli, a: &Trim, out: &mut dyn Write) -> Result<i32> {
    let logs: Vec<TrajectoryLog> = jsonl::read(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let mut provenance = read_provenance(&a.corpus)?;
    let kept = trim_once(&logs, &mut provenance)?;
    provenance.sources.push(a.corpus.display().to_string());
    create_parent(&a.out)?;
    jsonl::write(&a.out, &kept)?;
    write_json(&provenance_path(&a.out), &provenance)?;
    log_run(cli, &parent_dir(&a.out))?;
    writeln!(out, "kept {} of {} trials in {}", kept.len(), logs.len(), a.out.display())?;
    Ok(EXIT_OK)
}

fn encode(cli: &Cli, a: &Encode, out: &mut dyn Write) -> Result<i32> {
    let logs: Vec<TrajectoryLog> = jsonl::read(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let maps: Vec<HeightMap> =
        jsonl::read(&a.landscapes).with_context(|| format!("reading {}", a.landscapes.display()))?;
    let mut corpus = encode_corpus(&logs, &maps, a.formulation, &encoding_config(cli))?;
    if a.subset != Subset::All {
        corpus = corpus.filter(a.subset)?;
    }
    corpus.provenance = read_provenance(&a.corpus)?;
    create_parent(&a.out)?;
    save_pack(&corpus, &a.out)?;
    log_run(cli, &parent_dir(&a.out))?;
    writeln!(
        out,
        "wrote {} samples to {} (channels={}, series_len={})",
        corpus.len(),
        a.out.display(),
        corpus.channels(),
        aidetect_core::encoding::SERIES_LEN
    )?;
    Ok(EXIT_OK)
}

fn split(cli: &Cli, a: &SplitCmd, out: &mut dyn Write) -> Result<i32> {
    let n = read_pack(&a.pack)?.len();
    create_parent(&a.out)?;
    match a.kind {
        SplitKind::Holdout => {
            let s = split_80_20(n, derive_seed(cli.seed, "split", 0))?;
            write_json(&a.out, &s)?;
            writeln!(out, "split {n} samples: {} train, {} test", s.train.len(), s.test.len())?;
        }
        SplitKind::Kfold => {
            let folds = kfold(n, a.folds, derive_seed(cli.seed, "folds", 0))?;
            write_json(&a.out, &folds)?;
            writeln!(out, "split {n} samples into {} folds", folds.len())?;
        }
    }
    log_run(cli, &parent_dir(&a.out))?;
    Ok(EXIT_OK)
}

fn train(cli: &Cli, a: &Train, out: &mut dyn Write) -> Result<i32> {
    let corpus = read_pack(&a.pack)?;
    let arch = parse_arch(&a.arch)?;
    let hp = hyperparams(arch, &a.hp)?;
    let split: SplitSpec = match &a.split {
        Some(p) => serde_json::from_slice(&fs::read(p)?).with_context(|| format!("parsing split {}", p.display()))?,
        None => split_80_20(corpus.len(), derive_seed(cli.seed, "split", 0))?,
    };
    if split.train.iter().chain(&split.test).any(|&i| i >= corpus.len()) {
        return Err(CoreError::Invalid("split refers to samples beyond the pack".into()).into());
    }
    let spec = model_spec(arch, &corpus, &hp);
    let (result, model) = with_jobs(cli.jobs, || fit(&spec, &corpus, &split, &hp, derive_seed(cli.seed, "train", 0)))??;
    let stats = Prepared::new(&corpus, &split.train)?.stats;
    fs::create_dir_all(&a.out)?;
    checkpoint::save(&model, &a.out.join("model.aidw"))?;
    write_json(&a.out.join("trial.json"), &json!({ "spec": spec, "hyperparams": hp, "result": result }))?;
    write_json(&a.out.join("stats.json"), &stats)?;
    log_run(cli, &a.out)?;
    let best = result.test_accuracy.iter().copied().fold(0.0, f64::max);
    writeln!(
        out,
        "{arch}: best test accuracy {best:.4}, final {:.4}, train {:.4}; checkpoint {}",
        result.test_accuracy.last().copied().unwrap_or(0.0),
        result.train_accuracy,
        a.out.join("model.aidw").display()
    )?;
    Ok(EXIT_OK)
}

fn protocol(cli: &Cli, a: &Protocol, out: &mut dyn Write) -> Result<i32> {
    let mut corpus = read_pack(&a.pack)?;
    if a.subset != corpus.subset {
        corpus = corpus.filter(a.subset)?;
    }
    if a.shuffle_labels {
        corpus = corpus.with_shuffled_labels(derive_seed(cli.seed, "shuffle-labels", 0));
    }
    let arch = parse_arch(&a.arch)?;
    let hp = hyperparams(arch, &a.hp)?;
    let spec = model_spec(arch, &corpus, &hp);
    let mut report = run_protocol(&spec, &corpus, a.trials, &hp, cli.seed, cli.jobs)?;
    report.config.shuffled_labels = a.shuffle_labels;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    log_run(cli, &a.out)?;
    let c = &report.curves;
    writeln!(
        out,
        "{arch} {}/{}{}: best averaged accuracy {:.4} ({:.4}) at epoch {} over {} trials",
        corpus.formulation,
        corpus.subset,
        if a.shuffle_labels { " shuffled" } else { "" },
        c.best_accuracy,
        c.best_std,
        c.best_epoch + 1,
        a.trials
    )?;
    Ok(EXIT_OK)
}

fn tune(cli: &Cli, a: &Tune, out: &mut dyn Write) -> Result<i32> {
    let corpus = read_pack(&a.pack)?;
    let arch = parse_arch(&a.arch)?;
    let mut base = Hyperparams::tuned(arch);
    if let Some(e) = a.epochs {
        base.epochs = e;
    }
    base.batch_size = a.batch_size;
    let grid = HpGrid {
        lrs: a.lrs.clone(),
        weight_decays: a.weight_decays.clone(),
        schedulers: vec![true, false],
        dropouts: a.dropouts.clone(),
    };
    let result = grid_search(arch, &corpus, &grid, &base, a.folds, cli.seed, cli.jobs)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("grid.json"), &result)?;
    log_run(cli, &a.out)?;
    let b = &result.best;
    writeln!(
        out,
        "{arch}: best lr {} weight decay {} scheduler {} dropout {} after {} runs",
        b.lr,
        b.weight_decay,
        if b.scheduler { "on" } else { "off" },
        b.dropout,
        result.runs
    )?;
    Ok(EXIT_OK)
}

fn report(cli: &Cli, a: &Report, out: &mut dyn Write) -> Result<i32> {
    let mut reports: Vec<ProtocolReport> = Vec::new();
    for p in &a.inputs {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        match serde_json::from_slice::<ProtocolReport>(&bytes) {
            Ok(r) => reports.push(r),
            Err(_) => reports.extend(
                serde_json::from_slice::<Vec<ProtocolReport>>(&bytes)
                    .with_context(|| format!("{} is not a protocol report", p.display()))?,
            ),
        }
    }
    let files = emit_report(&reports, &a.out)?;
    log_run(cli, &a.out)?;
    writeln!(
        out,
        "wrote {}, {} curve file(s) and {}",
        files.table.display(),
        files.curves.len(),
        files.summary.display()
    )?;
    Ok(EXIT_OK)
}

fn gradcheck(cli: &Cli, a: &Gradcheck, out: &mut dyn Write) -> Result<i32> {
    let entries = run_suite((a.max_entries > 0).then_some(a.max_entries))?;
    let mut failed = 0;
    let mut rows = Vec::new();
    for e in &entries {
        let r = &e.report;
        let ok = r.max_rel_error < a.tolerance && r.unresolved_kinks == 0 && r.entries_checked > 0;
        failed += usize::from(!ok);
        writeln!(
            out,
            "{:<40} entries {:>6}  refined {:>4}  max rel error {:.3e}  {}",
            e.name,
            r.entries_checked,
            r.refined_entries,
            r.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        )?;
        rows.push(json!({
            "name": e.name,
            "entries": r.entries_checked,
            "refined": r.refined_entries,
            "unresolved_kinks": r.unresolved_kinks,
            "max_rel_error": r.max_rel_error,
            "ok": ok,
        }));
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("gradcheck.json"), &rows)?;
        log_run(cli, dir)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

/// Published counts per architecture for 1, 3 and 5 input channels.
pub const PUBLISHED: [(&str, [usize; 3]); 3] = [
    ("lenet5", [58_484, 59_084, 59_684]),
    ("sb-resnet18", [151_362, 157_634, 163_906]),
    ("resnet18", [11_683_240, 11_689_512, 11_695_784]),
];

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn audit_params(cli: &Cli, a: &AuditParams, out: &mut dyn Write) -> Result<i32> {
    if let Some(dir) = &a.out {
        log_run(cli, dir)?;
    }
    if let Some(name) = &a.arch {
        let head = match a.head {
            HeadArg::TwoWay => Head::TwoWay,
            HeadArg::ThousandWay => Head::ThousandWay,
        };
        let spec = ModelSpec::new(parse_arch(name)?, a.channels).with_head(head);
        let count = Model::<f32>::build(&spec, 0)?.param_count();
        writeln!(out, "{name} channels={} head={:?}: {}", a.channels, head, thousands(count))?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "{:<14} {:>12} {:>12} {:>12}  status", "architecture", "1 channel", "3 channels", "5 channels")?;
    let mut mismatch = false;
    for (name, expected) in PUBLISHED {
        let arch = parse_arch(name)?;
        let head = if name == "resnet18" { Head::ThousandWay } else { Head::TwoWay };
        let mut cells = Vec::new();
        let mut ok = true;
        for (c, &want) in [1, 3, 5].iter().zip(&expected) {
            let got = Model::<f32>::build(&ModelSpec::new(arch, *c).with_head(head), 0)?.param_count();
            ok &= got == want;
            cells.push(if got == want { thousands(got) } else { format!("{}!={}", thousands(got), thousands(want)) });
        }
        // The ResNet-18 row audits the thousand-way head and is informational.
        if name != "resnet18" {
            mismatch |= !ok;
        }
        writeln!(out, "{name:<14} {:>12} {:>12} {:>12}  {}", cells[0], cells[1], cells[2], if ok { "ok" } else { "MISMATCH" })?;
    }
    Ok(if mismatch { EXIT_VALIDATION } else { EXIT_OK })
}
