use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use fedsim::data::CaseId;
use fedsim::federation::{run_experiment, RunResult};
use fedsim::labelstats::{
    area_upper_bound, kl_divergence, label_distribution, label_variance, uniform_reference, LabelDistribution,
    LabelMultiset, DEFAULT_EPSILON,
};
use fedsim::metrics::{
    emit_report, mse_proportions, pearson, read_rounds_csv, read_selected_evals_csv, ReportRun, SUCCESS_THRESHOLD,
};
use serde_json::Value;

use crate::config::{Resolved, Source};
use crate::error::CliError;

fn default_out(src: &Source<'_>) -> PathBuf {
    PathBuf::from("runs").join(src.name())
}

fn execute(runs: &[Resolved], out: &Path, nested: bool) -> Result<Vec<(RunResult, ReportRun)>, CliError> {
    for run in runs {
        run.validate()?;
    }
    let mut results = Vec::new();
    let mut cached: Option<(&Resolved, _)> = None;
    for run in runs {
        let data = match &cached {
            Some((prev, data)) if prev.dataset == run.dataset => data,
            _ => {
                cached = Some((run, run.dataset.load()?));
                &cached.as_ref().expect("just set").1
            }
        };
        let (train, test) = data;
        log::info!("running `{}`", run.id);
        let result = run_experiment(&run.experiment, train, test)?;
        let dir = if nested { out.join(&run.id) } else { out.to_path_buf() };
        result.write_run_dir_with(&dir, run)?;
        println!(
            "{}: final accuracy {:.4}, final loss {:.4} (mean over {} trials)",
            run.id,
            result.mean_final_accuracy(),
            result.mean_final_loss(),
            result.config.trials
        );
        let report = result.report_run(&run.id);
        results.push((result, report));
    }
    Ok(results)
}

pub fn run(src: &Source<'_>, out: Option<PathBuf>) -> Result<(), CliError> {
    let suite = src.load()?;
    let runs = suite.resolve(&src.name())?;
    let out = out.unwrap_or_else(|| default_out(src));
    let results = execute(&runs, &out, !suite.variants.is_empty())?;
    let reports: Vec<ReportRun> = results.into_iter().map(|r| r.1).collect();
    emit_report(&reports, &out, SUCCESS_THRESHOLD)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn fmt_stat(v: fedsim::Result<f64>) -> String {
    match v {
        Ok(x) => x.to_string(),
        Err(_) => "undefined".into(),
    }
}

pub fn sweep(src: &Source<'_>, out: Option<PathBuf>) -> Result<(), CliError> {
    let suite = src.load()?;
    let sweep = suite
        .sweep
        .clone()
        .ok_or_else(|| CliError::Usage("config has no `sweep` section".into()))?;
    if sweep.p_biased.is_empty() || sweep.strategies.is_empty() {
        return Err(CliError::Usage("sweep needs at least one p_biased value and one strategy".into()));
    }
    if let Some(bad) = sweep.p_biased.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Usage(format!("p_biased {bad} outside [0, 1]")));
    }
    let mut runs = Vec::new();
    for &p in &sweep.p_biased {
        for &strategy in &sweep.strategies {
            let mut experiment = suite.experiment.clone();
            experiment.plan.case.id = CaseId::Mixed;
            experiment.plan.case.p_biased = p;
            experiment.strategy = strategy;
            runs.push(Resolved {
                id: format!("{}-p{p}", strategy.as_str()),
                dataset: suite.dataset.clone(),
                experiment,
            });
        }
    }
    let out = out.unwrap_or_else(|| default_out(src));
    let results = execute(&runs, &out, true)?;

    let k = sweep.strategies.len();
    // strip float noise from 1 - p
    let iid_share: Vec<f64> = sweep.p_biased.iter().map(|p| ((1.0 - p) * 1e12).round() / 1e12).collect();
    let column = |s: usize, f: &dyn Fn(&RunResult) -> f64| -> Vec<f64> {
        (0..sweep.p_biased.len()).map(|i| f(&results[i * k + s].0)).collect()
    };
    let success = |r: &RunResult| r.success_rate(SUCCESS_THRESHOLD).unwrap_or(f64::NAN);
    let accuracy = |r: &RunResult| r.mean_final_accuracy();

    let mut table = fs::File::create(out.join("table2.csv"))?;
    let names: Vec<&str> = sweep.strategies.iter().map(|s| s.as_str()).collect();
    let mut header = vec!["p_biased".to_string(), "iid_share".to_string()];
    header.extend(names.iter().map(|n| format!("{n}_success_rate")));
    header.extend(names.iter().map(|n| format!("{n}_final_accuracy")));
    writeln!(table, "{}", header.join(","))?;
    let sr: Vec<Vec<f64>> = (0..k).map(|s| column(s, &success)).collect();
    let acc: Vec<Vec<f64>> = (0..k).map(|s| column(s, &accuracy)).collect();
    for (i, p) in sweep.p_biased.iter().enumerate() {
        let mut row = vec![p.to_string(), iid_share[i].to_string()];
        row.extend(sr.iter().map(|c| c[i].to_string()));
        row.extend(acc.iter().map(|c| c[i].to_string()));
        writeln!(table, "{}", row.join(","))?;
    }
    let blanks = vec![String::new(); k];
    let mut r_row = vec!["pearson_r".to_string(), String::new()];
    r_row.extend(sr.iter().map(|c| fmt_stat(pearson(&iid_share, c))));
    r_row.extend(blanks.iter().cloned());
    writeln!(table, "{}", r_row.join(","))?;
    let mut mse_row = vec!["mse".to_string(), String::new()];
    mse_row.extend(sr.iter().map(|c| fmt_stat(mse_proportions(&iid_share, c))));
    mse_row.extend(blanks);
    writeln!(table, "{}", mse_row.join(","))?;

    for (s, name) in names.iter().enumerate() {
        println!(
            "{name}: success rates {:?}, pearson r vs IID share {}",
            sr[s].iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            fmt_stat(pearson(&iid_share, &sr[s]))
        );
    }
    let reports: Vec<ReportRun> = results.into_iter().map(|r| r.1).collect();
    emit_report(&reports, &out, SUCCESS_THRESHOLD)?;
    println!("wrote {}", out.join("table2.csv").display());
    Ok(())
}

pub fn partition(src: &Source<'_>, variant: Option<&str>, round: usize, dump: Option<PathBuf>) -> Result<(), CliError> {
    let suite = src.load()?;
    let runs = suite.resolve(&src.name())?;
    let run = match variant {
        Some(id) => runs
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| CliError::Usage(format!("no variant `{id}`")))?,
        None => &runs[0],
    };
    let plan = run.experiment.trial_plan(0);
    plan.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
    if round == 0 || round > plan.num_rounds.max(1) {
        return Err(CliError::Usage(format!("round must lie in 1..={}", plan.num_rounds.max(1))));
    }
    let mut plan = plan;
    plan.num_rounds = plan.num_rounds.max(round);
    let (train, _) = run.dataset.load()?;
    let shards = plan.realize_round(&train, round)?;
    println!("client_id\tn\tlabel_variance\tkl_to_uniform\thistogram");
    for shard in &shards {
        let set = shard.label_multiset();
        let hist: Vec<String> = shard
            .histogram()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, c)| format!("{l}:{c}"))
            .collect();
        println!(
            "{}\t{}\t{}\t{}\t{}",
            shard.client_id,
            shard.len(),
            label_variance(&set),
            fedsim::labelstats::kl_to_uniform(&set),
            hist.join(";")
        );
    }
    if let Some(dir) = dump {
        fs::create_dir_all(&dir)?;
        for shard in &shards {
            let file = fs::File::create(dir.join(format!("client_{}.csv", shard.client_id)))?;
            shard.to_dataset().write_csv(std::io::BufWriter::new(file))?;
        }
        println!("wrote {} shard files to {}", shards.len(), dir.display());
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad {what} `{s}`"))))
        .collect()
}

pub struct StatsArgs {
    pub labels: Option<String>,
    pub labels_file: Option<PathBuf>,
    pub tau: Option<u64>,
    pub p: Option<String>,
    pub q: Option<String>,
    pub log_base: f64,
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let labels = match (&args.labels, &args.labels_file) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --labels or --labels-file".into())),
        (Some(text), None) => Some(parse_list::<usize>(text, "label")?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Some(parse_list::<usize>(&text, "label")?)
        }
        (None, None) => None,
    };
    let usage = |e: fedsim::Error| CliError::Usage(e.to_string());
    let mut printed = false;
    if let Some(labels) = labels {
        let set = LabelMultiset::from_labels(labels).map_err(usage)?;
        let uniform = uniform_reference(set.universe()).map_err(usage)?;
        let kl = kl_divergence(&label_distribution(&set), &uniform, args.log_base, DEFAULT_EPSILON).map_err(usage)?;
        println!("label_variance\t{}", label_variance(&set));
        println!("kl_to_uniform\t{kl}");
        println!("distinct_labels\t{}", set.universe().len());
        if args.tau.is_none() {
            let tau = set.universe().len() as u64;
            println!("area_upper_bound({tau})\t{}", area_upper_bound(tau).map_err(usage)?);
        }
        printed = true;
    }
    if let Some(tau) = args.tau {
        println!("area_upper_bound({tau})\t{}", area_upper_bound(tau).map_err(usage)?);
        printed = true;
    }
    match (&args.p, &args.q) {
        (Some(p), Some(q)) => {
            let p: Vec<f64> = parse_list(p, "probability")?;
            let q: Vec<f64> = parse_list(q, "probability")?;
            if p.len() != q.len() {
                return Err(CliError::Usage(format!("--p has {} bins but --q has {}", p.len(), q.len())));
            }
            let universe: Vec<usize> = (0..p.len()).collect();
            let p = LabelDistribution::new(p, universe.clone()).map_err(usage)?;
            let q = LabelDistribution::new(q, universe).map_err(usage)?;
            println!("kl_divergence\t{}", kl_divergence(&p, &q, args.log_base, DEFAULT_EPSILON).map_err(usage)?);
            printed = true;
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--p and --q must be given together".into())),
    }
    if !printed {
        return Err(CliError::Usage("nothing to compute; pass --labels, --labels-file, --tau or --p/--q".into()));
    }
    Ok(())
}

fn load_report_run(dir: &Path) -> Result<ReportRun, CliError> {
    let open = |name: &str| -> Result<BufReader<fs::File>, CliError> {
        let path = dir.join(name);
        fs::File::open(&path)
            .map(BufReader::new)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    };
    let config: Value = serde_json::from_reader(open("config.json")?)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.join("config.json").display())))?;
    let experiment = config.get("experiment").unwrap_or(&config);
    let case = &experiment["plan"]["case"];
    let mut rounds = read_rounds_csv(open("rounds.csv")?)?;
    if let Ok(evals) = open("selected_evals.csv") {
        let mut evals = read_selected_evals_csv(evals)?;
        for r in &mut rounds {
            r.local = evals.remove(&(r.trial, r.round)).unwrap_or_default();
        }
    }
    let fallback_id = dir.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
    Ok(ReportRun {
        config_id: config.get("id").and_then(Value::as_str).map_or(fallback_id, str::to_string),
        strategy: experiment["strategy"].as_str().unwrap_or("unknown").to_string(),
        case_id: case["id"].as_str().unwrap_or("unknown").to_string(),
        p_biased: case["p_biased"].as_f64().unwrap_or(0.0),
        rounds,
    })
}

/// Run directories under `dir`: itself if it holds `rounds.csv`, otherwise its
/// immediate subdirectories that do.
fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.join("rounds.csv").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("rounds.csv").is_file())
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no run directories found", dir.display())));
    }
    Ok(out)
}

pub fn report(inputs: &[PathBuf], out: Option<PathBuf>) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one run directory".into()));
    }
    let mut runs = Vec::new();
    for input in inputs {
        for dir in run_dirs(input)? {
            runs.push(load_report_run(&dir)?);
        }
    }
    let out = out.unwrap_or_else(|| inputs[0].clone());
    let rows = emit_report(&runs, &out, SUCCESS_THRESHOLD)?;
    for r in rows {
        println!(
            "{}: accuracy {:.4} (±{:.4}), loss {:.4} (±{:.4}), success rate {:.3}",
            r.config_id, r.mean_final_accuracy, r.sigma_tilde_accuracy, r.mean_final_loss, r.sigma_tilde_loss, r.success_rate
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
