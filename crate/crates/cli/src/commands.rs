use std::fs;
use std::path::{Path, PathBuf};

use dti_core::geometry::{
    knn, load_table, norm_stats, random_embedding, save_table, EmbeddingTable, Neighbor,
};
use dti_core::inversion::{
    audit_oracle, run_inversion, CosineOracle, InversionConfig, LossOracle, QuadraticOracle,
    ToyEncoderOracle,
};
use dti_core::linalg::norm;
use dti_core::prenorm::{
    attenuation_csv, attenuation_curve, drift_report, estimate_sup_update_norms, freeze_csv,
    make_stack, scaling_freeze_curve, PreNormStack,
};
use dti_core::probe::{
    default_probe_table, magnitude_sweep_seeds, sweep_csv, ProbeHyperparams, ProbeSweepConfig,
};
use dti_core::seeding::{derive_seed, gaussian_vec, rng_from_seed};
use dti_core::sphere::{normalize, slerp};
use dti_core::{DtiError, Result};
use serde::Serialize;

use crate::{
    AttenuateArgs, AuditArgs, Command, DriftArgs, FreezeArgs, InvertArgs, KnnArgs, NormsArgs,
    OracleKind, ProbeArgs, RescaleArgs, SlerpArgs, StackArgs,
};

type Table = EmbeddingTable<f64>;

pub fn run(command: Command) -> Result<Vec<PathBuf>> {
    match command {
        Command::Invert(a) => invert(a),
        Command::Rescale(a) => rescale(a),
        Command::Knn(a) => knn_cmd(a),
        Command::Norms(a) => norms(a),
        Command::Attenuate(a) => attenuate(a),
        Command::Drift(a) => drift(a),
        Command::Freeze(a) => freeze(a),
        Command::Probe(a) => probe(a),
        Command::Slerp(a) => slerp_cmd(a),
        Command::AuditOracle(a) => audit(a),
    }
}

fn usage(msg: impl Into<String>) -> DtiError {
    DtiError::InvalidArgument(msg.into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn single_row(path: &Path) -> Result<Vec<f64>> {
    let table: Table = load_table(path)?;
    if table.len() != 1 {
        return Err(DtiError::Format {
            line: 1,
            message: format!(
                "{} holds {} rows, expected one",
                path.display(),
                table.len()
            ),
        });
    }
    Ok(table.vectors()[0].clone())
}

fn pick_vector(
    what: &str,
    token: Option<&str>,
    file: Option<&Path>,
    table: Option<&Table>,
) -> Result<Vec<f64>> {
    match (token, file) {
        (_, Some(path)) => single_row(path),
        (Some(tok), None) => {
            let table = table.ok_or_else(|| usage(format!("--{what}-token needs --embeddings")))?;
            Ok(table.get(tok)?.to_vec())
        }
        (None, None) => Err(usage(format!("give --{what}-token or --{what}"))),
    }
}

fn invert(a: InvertArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = InversionConfig::<f64>::from_json(&fs::read_to_string(&a.config)?)?;
    if let Some(kind) = a.optimizer {
        cfg.optimizer = kind;
    }
    let table = a.embeddings.as_deref().map(load_table::<f64>).transpose()?;
    if let Some(t) = &table {
        cfg.resolve_m_star(t)?;
    }
    let init = pick_vector(
        "init",
        a.init_token.as_deref(),
        a.init.as_deref(),
        table.as_ref(),
    )?;
    let target = pick_vector(
        "target",
        a.target_token.as_deref(),
        a.target.as_deref(),
        table.as_ref(),
    )?;
    if target.len() != cfg.dim {
        return Err(DtiError::DimMismatch {
            expected: cfg.dim,
            actual: target.len(),
        });
    }
    let m_star = cfg
        .m_star_value()
        .map_err(|_| usage("m_star is MeanVocabNorm; pass --embeddings or set a literal m_star"))?;
    let mut oracle: Box<dyn LossOracle<f64>> = match a.oracle {
        OracleKind::Quadratic => Box::new(QuadraticOracle {
            target: normalize(&target)?.scaled(m_star),
        }),
        OracleKind::Cosine => Box::new(CosineOracle { target }),
        OracleKind::Toy => {
            let stack = make_stack(cfg.dim, a.depth, a.norm, derive_seed(cfg.seed, 1))?;
            let context = random_embedding(&mut rng_from_seed(cfg.seed), cfg.dim, a.context_norm);
            Box::new(ToyEncoderOracle::new(
                stack,
                context,
                &normalize(&target)?.scaled(m_star),
            )?)
        }
    };
    let result = run_inversion(&mut oracle, &cfg, &init)?;
    save_table(
        &Table::single(a.token, result.final_embedding.clone())?,
        &a.out,
    )?;
    let mut artifacts = vec![a.out];
    if let Some(trace) = a.trace {
        write_text(&trace, &(result.to_json()? + "\n"))?;
        artifacts.push(trace);
    }
    Ok(artifacts)
}

fn rescale(a: RescaleArgs) -> Result<Vec<PathBuf>> {
    let table: Table = load_table(&a.input)?;
    let m_star = match (a.m_star, &a.embeddings) {
        (Some(m), _) => m,
        (None, Some(vocab)) => norm_stats(&load_table::<f64>(vocab)?, 1)?.mean,
        (None, None) => return Err(usage("give --m-star or --embeddings")),
    };
    if !(m_star > 0.0) {
        return Err(usage(format!("--m-star must be positive, got {m_star}")));
    }
    let factors = table
        .row_norms()
        .iter()
        .map(|&n| {
            if n > 1e-12 {
                Ok(m_star / n)
            } else {
                Err(DtiError::ZeroVector { norm: n })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    save_table(&table.rescale_rows(&factors)?, &a.out)?;
    Ok(vec![a.out])
}

#[derive(Serialize)]
struct KnnReport {
    query: String,
    metric: String,
    neighbors: Vec<Neighbor<f64>>,
}

fn knn_cmd(a: KnnArgs) -> Result<Vec<PathBuf>> {
    let table: Table = load_table(&a.embeddings)?;
    let neighbors = knn(&table, &a.query, a.k, a.metric)?;
    let report = KnnReport {
        query: a.query,
        metric: a.metric.to_string(),
        neighbors,
    };
    write_json(&a.out, &report)?;
    Ok(vec![a.out])
}

fn norms(a: NormsArgs) -> Result<Vec<PathBuf>> {
    let table: Table = load_table(&a.embeddings)?;
    write_json(&a.out, &norm_stats(&table, a.bins)?)?;
    Ok(vec![a.out])
}

fn attenuate(a: AttenuateArgs) -> Result<Vec<PathBuf>> {
    let mut rng = rng_from_seed(a.seed);
    let v = normalize(&gaussian_vec::<f64, _>(&mut rng, a.dim, 1.0))?;
    let p = random_embedding(&mut rng, a.dim, a.p_norm);
    let curve = attenuation_curve(&v, &p, a.norm, &a.magnitudes)?;
    write_text(&a.out, &attenuation_csv(&curve))?;
    Ok(vec![a.out])
}

/// The stack comes from `seed`; the input direction from a derived seed.
fn stack_and_input(s: &StackArgs, x0_norm: f64) -> Result<(PreNormStack<f64>, Vec<f64>)> {
    if !(x0_norm > 0.0) {
        return Err(usage(format!("--x0-norm must be positive, got {x0_norm}")));
    }
    let stack = make_stack(s.dim, s.depth, s.norm, s.seed)?;
    let x0 = random_embedding(&mut rng_from_seed(derive_seed(s.seed, 1)), s.dim, x0_norm);
    Ok((stack, x0))
}

#[derive(Serialize)]
struct SupEstimate {
    samples: usize,
    /// Largest sampled update norm per block; a lower estimate of the sup.
    estimated_sup_update_norms: Vec<f64>,
}

fn drift(a: DriftArgs) -> Result<Vec<PathBuf>> {
    let (stack, x0) = stack_and_input(&a.stack, a.x0_norm)?;
    write_json(&a.out, &drift_report(&stack, &x0)?)?;
    let mut artifacts = vec![a.out];
    if let Some(path) = a.sup_out {
        let estimate = SupEstimate {
            samples: a.sup_samples,
            estimated_sup_update_norms: estimate_sup_update_norms(
                &stack,
                a.sup_samples,
                derive_seed(a.stack.seed, 2),
            ),
        };
        write_json(&path, &estimate)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn freeze(a: FreezeArgs) -> Result<Vec<PathBuf>> {
    let (stack, x0) = stack_and_input(&a.stack, a.x0_norm)?;
    let curve = scaling_freeze_curve(&stack, &x0, &a.alphas)?;
    write_text(&a.out, &freeze_csv(&curve))?;
    Ok(vec![a.out])
}

fn probe(a: ProbeArgs) -> Result<Vec<PathBuf>> {
    let table = match &a.embeddings {
        Some(path) => load_table(path)?,
        None => default_probe_table(a.seeds.first().copied().unwrap_or(42))?,
    };
    let cfg = ProbeSweepConfig {
        seq_len: a.seq_len,
        norm_kind: a.norm,
        n_tokens: a.tokens,
        hyper: ProbeHyperparams {
            hidden: a.hidden,
            lr: a.lr,
            epochs: a.epochs,
            batch: a.batch,
        },
    };
    let sweep = magnitude_sweep_seeds(&table, &cfg, &a.magnitudes, &a.seeds)?;
    write_text(&a.out, &sweep_csv(&sweep.mean))?;
    let mut artifacts = vec![a.out];
    if let Some(path) = a.json {
        write_json(&path, &sweep)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn slerp_cmd(a: SlerpArgs) -> Result<Vec<PathBuf>> {
    let (ea, eb) = (single_row(&a.a)?, single_row(&a.b)?);
    if ea.len() != eb.len() {
        return Err(DtiError::DimMismatch {
            expected: ea.len(),
            actual: eb.len(),
        });
    }
    let m_star = a.m_star.unwrap_or_else(|| 0.5 * (norm(&ea) + norm(&eb)));
    if !(m_star > 0.0) {
        return Err(usage(format!("--m-star must be positive, got {m_star}")));
    }
    let (va, vb) = (normalize(&ea)?, normalize(&eb)?);
    let mut tokens = Vec::with_capacity(a.ratios.len());
    let mut rows = Vec::with_capacity(a.ratios.len());
    for &t in &a.ratios {
        tokens.push(format!("slerp@{t}"));
        rows.push(slerp(&va, &vb, t)?.scaled(m_star));
    }
    save_table(&Table::new(tokens, rows)?, &a.out)?;
    Ok(vec![a.out])
}

#[derive(Serialize)]
struct AuditReport {
    oracle: String,
    dim: usize,
    seed: u64,
    tolerance: f64,
    max_relative_error: f64,
    point_errors: Vec<f64>,
}

fn audit(a: AuditArgs) -> Result<Vec<PathBuf>> {
    if a.points == 0 {
        return Err(usage("--points must be at least 1"));
    }
    let mut rng = rng_from_seed(a.seed);
    let target = gaussian_vec::<f64, _>(&mut rng, a.dim, 1.0);
    let mut oracle: Box<dyn LossOracle<f64>> = match a.oracle {
        OracleKind::Quadratic => Box::new(QuadraticOracle { target }),
        OracleKind::Cosine => Box::new(CosineOracle { target }),
        OracleKind::Toy => {
            let stack = make_stack(
                a.dim,
                2,
                dti_core::prenorm::NormKind::LayerNorm,
                derive_seed(a.seed, 1),
            )?;
            let context = random_embedding(&mut rng, a.dim, 2.0);
            Box::new(ToyEncoderOracle::new(stack, context, &target)?)
        }
    };
    let point_errors = (0..a.points)
        .map(|_| audit_oracle(&mut oracle, &gaussian_vec::<f64, _>(&mut rng, a.dim, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let max_relative_error = point_errors.iter().copied().fold(0.0, f64::max);
    let report = AuditReport {
        oracle: format!("{:?}", a.oracle).to_lowercase(),
        dim: a.dim,
        seed: a.seed,
        tolerance: a.tolerance,
        max_relative_error,
        point_errors,
    };
    write_json(&a.out, &report)?;
    if !(max_relative_error < a.tolerance) {
        return Err(DtiError::AuditFailed {
            max_error: max_relative_error,
            tolerance: a.tolerance,
        });
    }
    Ok(vec![a.out])
}
