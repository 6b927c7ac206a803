use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use cfc_core::augment::p_column;
use cfc_core::cfc::{predict_batch, CvScope};
use cfc_core::dataset::{
    apply_normalization, fit_normalization, load_column, load_dataset_with, load_instances,
    sample_indices, SchemaFile,
};
use cfc_core::fcm::{self, CentroidComponent, FcmConfig};
use cfc_core::inducer::{evaluate_labels, TreeParams};
use cfc_core::infogain::compute_feature_weights;
use cfc_core::select::SearchStrategy;
use cfc_core::{
    load_model, save_model, train, CfcConfig, Dataset, Error, GeneticSearchConfig, GroupTags,
    InducerSpec,
};
use serde::Serialize;

use crate::args::{
    ClusterArgs, Command, DataArgs, EvaluateArgs, FcmArgs, PredictArgs, SampleArgs, Scope, Search,
    TrainArgs,
};
use crate::failure::{data, usage};
use crate::manifest::RunManifest;
use crate::report;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Sample(a) => sample(a),
        Command::Cluster(a) => cluster(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

struct Loaded {
    dataset: Dataset,
    label_column: String,
    group_column: Option<String>,
}

fn load_labeled(a: &DataArgs) -> Result<Loaded> {
    let file = SchemaFile::from_path(&a.schema)?;
    let mut opts = file.load_options();
    opts.delimiter = a.delimiter;
    if a.strata_column.is_some() {
        opts.group_column = a.strata_column.clone();
    }
    let label_column = a
        .label_column
        .clone()
        .unwrap_or_else(|| file.label_column.clone());
    let dataset = load_dataset_with(&a.data, &file.schema()?, &label_column, &opts)?;
    Ok(Loaded {
        group_column: opts.group_column,
        dataset,
        label_column,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fcm_config(a: &FcmArgs, k: usize) -> FcmConfig {
    FcmConfig {
        alpha: a.alpha,
        tolerance: a.tol,
        max_iterations: a.max_iter,
        seed: a.seed,
        ..FcmConfig::new(k)
    }
}

fn check_fcm_flags(a: &FcmArgs) -> Result<()> {
    fcm_config(a, 2)
        .validate()
        .map_err(|e| usage(e.to_string()))?;
    if a.bins < 2 {
        return Err(usage("--bins must be at least 2"));
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleConfig<'a> {
    schema: &'a Path,
    data: &'a Path,
    label_column: &'a str,
    group_column: Option<&'a str>,
    fractions: &'a std::collections::BTreeMap<String, f64>,
    seed: u64,
}

fn sample(a: SampleArgs) -> Result<()> {
    let mut m = RunManifest::new("sample", a.seed);
    let fractions = a.fractions.map(|f| f.0).unwrap_or_default();
    let loaded = m.time("load", || load_labeled(&a.data))?;
    let d = &loaded.dataset;
    let groups = d.groups.clone().unwrap_or_else(|| {
        GroupTags::from_tokens(
            &d.labels
                .iter()
                .map(|&l| d.class_name(l))
                .collect::<Vec<_>>(),
        )
    });
    let keep = m.time("sample", || sample_indices(&groups, &fractions, a.seed))?;

    // Copy the retained records verbatim so untouched rows keep their text.
    m.time("write", || -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(a.data.delimiter)
            .has_headers(true)
            .from_path(&a.data.data)
            .with_context(|| format!("reading {}", a.data.data.display()))?;
        let mut w = csv::WriterBuilder::new()
            .delimiter(a.data.delimiter)
            .from_writer(create(&a.out)?);
        w.write_record(rdr.headers()?)?;
        let mut next = keep.iter().peekable();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if next.peek() == Some(&&i) {
                w.write_record(&rec)?;
                next.next();
            }
        }
        w.flush()?;
        Ok(())
    })?;

    m.config(&SampleConfig {
        schema: &a.data.schema,
        data: &a.data.data,
        label_column: &loaded.label_column,
        group_column: loaded.group_column.as_deref(),
        fractions: &fractions,
        seed: a.seed,
    })?;
    m.input(&a.data.schema)?;
    m.input(&a.data.data)?;
    m.outputs.push(a.out.clone());
    m.write_next_to(&a.out)?;
    eprintln!("kept {} of {} instances", keep.len(), d.n());
    Ok(())
}

#[derive(Serialize)]
struct ClusterConfig<'a> {
    schema: &'a Path,
    data: &'a Path,
    fcm: &'a FcmConfig,
    bins: usize,
}

fn cluster(a: ClusterArgs) -> Result<()> {
    check_fcm_flags(&a.fcm)?;
    if a.k < 1 {
        return Err(usage("--k must be at least 1"));
    }
    let mut m = RunManifest::new("cluster", a.fcm.seed);
    let loaded = m.time("load", || load_labeled(&a.data))?;
    let d = &loaded.dataset;
    if a.k > d.n() {
        return Err(usage(format!(
            "--k {} exceeds the {} instances",
            a.k,
            d.n()
        )));
    }
    let cfg = fcm_config(&a.fcm, a.k);
    let fit = m.time("cluster", || -> Result<_> {
        let norm = fit_normalization(d)?;
        let x = apply_normalization(d, &norm)?;
        let weights = compute_feature_weights(&x, a.fcm.bins)?;
        Ok(fcm::fit(&x.rows, &x.schema, &cfg, &weights)?)
    })?;

    m.time("write", || -> Result<()> {
        let mut w = csv::Writer::from_writer(create(&a.out)?);
        let mut header = vec!["_Z".to_string(), "_B".to_string()];
        header.extend((1..=a.k).map(p_column));
        w.write_record(&header)?;
        let block = cfc_core::build_cluster_features(&fit.memberships);
        for (i, row) in block.p.iter().enumerate() {
            let mut rec = vec![block.z[i].to_string(), block.b[i].to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;

        if let Some(path) = &a.centroids {
            let mut w = csv::Writer::from_writer(create(path)?);
            let mut header = vec!["cluster".to_string()];
            header.extend(d.schema.names().map(str::to_string));
            w.write_record(&header)?;
            for (j, v) in fit.centroids.centroids.iter().enumerate() {
                let mut rec = vec![(j + 1).to_string()];
                for (c, f) in v.iter().zip(&d.schema.features) {
                    rec.push(match c {
                        CentroidComponent::Continuous(x) => x.to_string(),
                        CentroidComponent::Ordinal { rank, .. } => rank.to_string(),
                        CentroidComponent::Symbolic { representative, .. } => {
                            f.categories[*representative as usize].clone()
                        }
                    });
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Ok(())
    })?;

    m.config(&ClusterConfig {
        schema: &a.data.schema,
        data: &a.data.data,
        fcm: &cfg,
        bins: a.fcm.bins,
    })?;
    m.input(&a.data.schema)?;
    m.input(&a.data.data)?;
    m.outputs.push(a.out.clone());
    m.outputs.extend(a.centroids.clone());
    m.write_next_to(&a.out)?;
    eprintln!(
        "{} iterations, converged: {}",
        fit.iterations, fit.converged
    );
    Ok(())
}

fn cfc_config(a: &TrainArgs) -> CfcConfig {
    CfcConfig {
        k_values: a.k_values.0.clone(),
        mode: a.mode,
        folds: a.folds,
        inducer: InducerSpec::DecisionTree(TreeParams {
            confidence: a.confidence,
            min_leaf: a.min_leaf,
            prune: !a.no_prune,
        }),
        fcm: fcm_config(&a.fcm, 2),
        search: match a.search {
            Search::Genetic => SearchStrategy::Genetic,
            Search::Greedy => SearchStrategy::GreedyForward,
        },
        ga: GeneticSearchConfig {
            population: a.ga_population,
            generations: a.ga_generations,
            crossover: a.ga_crossover,
            mutation: a.ga_mutation,
            seed: a.ga_seed,
        },
        bins: a.fcm.bins,
        seed: a.fcm.seed,
        cv_scope: match a.cv_scope {
            Scope::Global => CvScope::Global,
            Scope::PerFold => CvScope::PerFold,
        },
        stratify_by_group: !a.stratify_by_class,
    }
}

#[derive(Serialize)]
struct TrainConfig<'a> {
    schema: &'a Path,
    data: &'a Path,
    label_column: &'a str,
    group_column: Option<&'a str>,
    cfc: &'a CfcConfig,
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    check_fcm_flags(&a.fcm)?;
    let cfg = cfc_config(&a);
    // Everything that does not depend on the data size.
    cfg.validate(usize::MAX).map_err(|e| usage(e.to_string()))?;

    let mut m = RunManifest::new("train", cfg.seed);
    let loaded = m.time("load", || load_labeled(&a.data))?;
    let d = &loaded.dataset;
    cfg.validate(d.n()).map_err(|e| usage(e.to_string()))?;
    let (model, candidates) = m.time("train", || train(d, &cfg))?;

    m.time("write", || -> Result<()> {
        save_model(&model, &a.model)?;
        if let Some(out) = &a.out {
            write_text(out, &report::candidates_text(&candidates, model.k))?;
        }
        if let Some(csv) = &a.csv {
            write_text(csv, &report::candidates_csv(&candidates, model.k)?)?;
        }
        Ok(())
    })?;
    if a.out.is_none() {
        print!("{}", report::candidates_text(&candidates, model.k));
    }

    m.config(&TrainConfig {
        schema: &a.data.schema,
        data: &a.data.data,
        label_column: &loaded.label_column,
        group_column: loaded.group_column.as_deref(),
        cfc: &cfg,
    })?;
    m.input(&a.data.schema)?;
    m.input(&a.data.data)?;
    m.outputs.push(a.model.clone());
    m.outputs.extend(a.out.clone());
    m.outputs.extend(a.csv.clone());
    m.write_next_to(&a.model)?;
    Ok(())
}

#[derive(Serialize)]
struct PredictConfig<'a> {
    model: &'a Path,
    data: &'a Path,
    emit_memberships: bool,
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut m = RunManifest::new("predict", 0);
    let model = m.time("load", || load_model(&a.model))?;
    if let Some(schema) = &a.schema {
        let file = SchemaFile::from_path(schema)?;
        let found = file.schema()?.fingerprint();
        let expected = model.schema.fingerprint();
        if found != expected {
            return Err(Error::SchemaMismatch { expected, found }.into());
        }
    }
    let rows = m.time("load", || {
        load_instances(&a.data, &model.schema, a.delimiter)
    })?;
    let predictions = m.time("predict", || predict_batch(&model, &rows))?;

    m.time("write", || -> Result<()> {
        let mut w = csv::Writer::from_writer(create(&a.out)?);
        let mut header: Vec<String> = ["predicted", "probability", "z", "b"]
            .map(String::from)
            .to_vec();
        if a.emit_memberships {
            header.extend((1..=model.k).map(p_column));
        }
        w.write_record(&header)?;
        for p in &predictions {
            let mut rec = vec![
                model.class_name(p.class).to_string(),
                p.probabilities[p.class as usize].to_string(),
                p.cluster.z.to_string(),
                p.cluster.b.to_string(),
            ];
            if a.emit_memberships {
                rec.extend(p.cluster.w.iter().map(f64::to_string));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;

    m.config(&PredictConfig {
        model: &a.model,
        data: &a.data,
        emit_memberships: a.emit_memberships,
    })?;
    m.input(&a.model)?;
    m.input(&a.data)?;
    if let Some(s) = &a.schema {
        m.input(s)?;
    }
    m.outputs.push(a.out.clone());
    m.write_next_to(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluateConfig<'a> {
    data: &'a Path,
    predictions: &'a Path,
    label_column: &'a str,
    name: &'a str,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut m = RunManifest::new("evaluate", 0);
    let file = a.schema.as_deref().map(SchemaFile::from_path).transpose()?;
    let label_column = a
        .label_column
        .clone()
        .or_else(|| file.as_ref().map(|f| f.label_column.clone()))
        .ok_or_else(|| usage("evaluate needs --label-column or --schema"))?;

    let (truth, predicted) = m.time("load", || -> Result<_> {
        let raw = load_column(&a.data, &label_column, a.delimiter)?;
        let truth = match file.as_ref().and_then(|f| f.label_map.as_ref()) {
            Some(map) => raw
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    map.get(l).cloned().ok_or_else(|| {
                        data(format!(
                            "row {}: label {l:?} has no entry in label_map",
                            i + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            None => raw,
        };
        let predicted = load_column(&a.predictions, "predicted", b',')?;
        Ok((truth, predicted))
    })?;
    if truth.len() != predicted.len() {
        return Err(data(format!(
            "{} labeled rows but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let r = m.time("evaluate", || evaluate_labels(&predicted, &truth))?;

    m.time("write", || -> Result<()> {
        write_text(&a.out, &report::evaluation_text(&a.name, &r))?;
        if let Some(csv) = &a.csv {
            write_text(csv, &report::evaluation_csv(&a.name, &r)?)?;
        }
        Ok(())
    })?;

    m.config(&EvaluateConfig {
        data: &a.data,
        predictions: &a.predictions,
        label_column: &label_column,
        name: &a.name,
    })?;
    m.input(&a.data)?;
    m.input(&a.predictions)?;
    if let Some(s) = &a.schema {
        m.input(s)?;
    }
    m.outputs.push(a.out.clone());
    m.outputs.extend(a.csv.clone());
    m.write_next_to(&a.out)?;
    Ok(())
}
